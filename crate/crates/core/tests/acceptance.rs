//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use ssp_po::harness::run::log_log_slope;
use ssp_po::harness::verify::{results_csv, run_suite, CheckResult, Scale};
use ssp_po::harness::{run_experiment, ExperimentConfig, RegretReport};

struct Line {
    id: u32,
    name: &'static str,
    passed: bool,
    detail: String,
}

fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn from_checks(
    id: u32,
    name: &'static str,
    results: &[CheckResult],
    pick: impl Fn(&CheckResult) -> bool,
    elapsed: Duration,
    budget: Duration,
) -> Line {
    let picked: Vec<&CheckResult> = results.iter().filter(|r| pick(r)).collect();
    let passed = !picked.is_empty() && picked.iter().all(|r| r.passed) && elapsed <= budget;
    let mut detail: Vec<String> =
        picked.iter().map(|r| format!("{}/{}: observed {:.6e} limit {:.6e}", r.suite, r.check, r.observed, r.limit)).collect();
    detail.push(format!("suite time {:.1}s (budget {}s)", elapsed.as_secs_f64(), budget.as_secs()));
    Line { id, name, passed, detail: detail.join("; ") }
}

fn timed_suite(name: &str) -> (Vec<CheckResult>, Duration) {
    let start = Instant::now();
    let r = run_suite(name, Scale::Full).unwrap_or_else(|e| panic!("suite {name}: {e}"));
    (r, start.elapsed())
}

fn sublinearity(id: u32, name: &'static str, file: &str, budget: Duration) -> (Line, Option<RegretReport>) {
    let start = Instant::now();
    let config = match ExperimentConfig::load(&config_path(file)) {
        Ok(c) => c,
        Err(e) => return (Line { id, name, passed: false, detail: format!("config: {e}") }, None),
    };
    let report = match run_experiment(&config) {
        Ok(r) => r,
        Err(e) => return (Line { id, name, passed: false, detail: format!("run: {e}") }, None),
    };
    let elapsed = start.elapsed();
    let mean = report.mean_regret();
    if report.failed() || mean.len() < 2000 || report.runs.len() != 10 {
        let detail = format!("{} seeds, {} complete episodes, failed = {}", report.runs.len(), mean.len(), report.failed());
        return (Line { id, name, passed: false, detail }, Some(report));
    }
    let early = mean[249] / 250.0;
    let late = mean[1999] / 2000.0;
    let ratio = late / early;
    let points: Vec<(f64, f64)> = (250..=2000).map(|k| (k as f64, mean[k - 1])).collect();
    let slope = log_log_slope(&points).unwrap_or(f64::NAN);
    let passed = ratio <= 0.6 && slope < 0.95 && elapsed <= budget;
    let detail = format!(
        "R/K at 250 = {early:.4}, at 2000 = {late:.4}, ratio {ratio:.3} (<= 0.6), slope {slope:.3} (< 0.95), {:.1}s",
        elapsed.as_secs_f64()
    );
    (Line { id, name, passed, detail }, Some(report))
}

fn main() {
    let min = |m: u64| Duration::from_secs(60 * m);
    let mut lines = Vec::new();

    let (sda, t_sda) = timed_suite("sda-bounds");
    lines.push(from_checks(
        1,
        "stacked approximation value bound and Q gap",
        &sda,
        |r| r.check == "value-bound" || r.check == "q-gap",
        t_sda,
        min(1),
    ));
    lines.push(from_checks(2, "layer decay of optimal occupancy", &sda, |r| r.check == "layer-decay", t_sda, min(1)));
    let (evi, t_evi) = timed_suite("evi-oracle");
    lines.push(from_checks(3, "optimistic planning vs brute force", &evi, |_| true, t_evi, min(2)));
    let (poly, t_poly) = timed_suite("polytope");
    lines.push(from_checks(4, "polytope optimizer vs exhaustive LP", &poly, |_| true, t_poly, min(1)));
    let (cov, t_cov) = timed_suite("coverage");
    lines.push(from_checks(5, "confidence set coverage", &cov, |_| true, t_cov, min(5)));
    let (var, t_var) = timed_suite("variance");
    lines.push(from_checks(6, "episode cost variance identity", &var, |_| true, t_var, min(1)));
    let (dil, t_dil) = timed_suite("dilated-bonus");
    lines.push(from_checks(7, "dilated bonus magnitude bound", &dil, |_| true, t_dil, min(1)));
    let (vis, t_vis) = timed_suite("visit-bounds");
    lines.push(from_checks(8, "visit probability sandwich", &vis, |_| true, t_vis, min(1)));

    let (l9, stoch) = sublinearity(9, "regret sublinearity, stochastic costs", "stochastic-costs.toml", min(10));
    lines.push(l9);
    let (l10, _) = sublinearity(10, "regret sublinearity, adversarial full information", "adv-full.toml", min(15));
    lines.push(l10);

    let (hit, t_hit) = timed_suite("hitting");
    lines.push(from_checks(11, "episode length tail", &hit, |_| true, t_hit, min(1)));

    let first: Vec<CheckResult> = [sda, evi, poly, cov, var, dil, vis, hit].concat();
    let second = run_suite("all", Scale::Full).expect("verify all");
    let verify_same = results_csv(&first) == results_csv(&second);
    let run_same = match (stoch, ExperimentConfig::load(&config_path("stochastic-costs.toml")).and_then(|c| run_experiment(&c))) {
        (Some(a), Ok(b)) => a.episodes_csv() == b.episodes_csv() && a.summary_csv() == b.summary_csv(),
        _ => false,
    };
    lines.push(Line {
        id: 12,
        name: "determinism of verify and run outputs",
        passed: verify_same && run_same,
        detail: format!("verify.csv identical: {verify_same}; episodes.csv and summary.csv identical: {run_same}"),
    });

    for l in &lines {
        println!("{} criterion {:>2} {}: {}", if l.passed { "PASS" } else { "FAIL" }, l.id, l.name, l.detail);
    }
    let failed = lines.iter().filter(|l| !l.passed).count();
    println!("acceptance: {} passed, {failed} failed", lines.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
