//! Invariant suites run by `ssp-po verify`.
//!
//! Every suite is seeded and order-stable, so its CSV output is byte-identical
//! across runs. Elapsed time is deliberately not part of the output.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::env::{random_ssp, CostProcessSpec, Environment, NoiseModel, Simulator};
use crate::error::{Result, SspError};
use crate::estimation::{log_factor, ConfidenceState, Feedback, TransitionConfSet};
use crate::oracle::{
    evaluate_policy_dense, lp_brute_force, optimistic_q_brute_force, stacked_evaluate_dense, stacked_occupancy_dense,
};
use crate::planning::{
    dilated_bonus, extended_value_iteration, optimistic_q, visit_bounds_all, ConfidencePolytopes, Sense,
};
use crate::po::{KnownParams, Learner, LearnerConfig, Overrides, Setting};
use crate::sda::{mirror_policy, sigma_execute, stacked_cost, LayeredTransition, SdaParams, StackedMdp};
use crate::ssp::{key_params, occupancy_measure, policy_evaluation, CostFunction, SspInstance, Start, StationaryPolicy};
use crate::table::LayeredTable;

pub const SUITES: [&str; 8] =
    ["sda-bounds", "evi-oracle", "polytope", "coverage", "variance", "dilated-bonus", "visit-bounds", "hitting"];

pub const CSV_HEADER: &str = "suite,check,passed,observed,limit,detail";

/// Problem sizes: `Full` uses the sizes of the acceptance checks, `Quick`
/// a fraction of them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Quick,
    Full,
}

impl Scale {
    fn pick(self, quick: usize, full: usize) -> usize {
        match self {
            Scale::Quick => quick,
            Scale::Full => full,
        }
    }
}

/// Outcome of one check. `observed` is compared against `limit`; the
/// direction depends on the check and is spelled out in `detail`.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub suite: &'static str,
    pub check: String,
    pub passed: bool,
    pub observed: f64,
    pub limit: f64,
    pub detail: String,
}

impl CheckResult {
    fn new(suite: &'static str, check: &str, passed: bool, observed: f64, limit: f64, detail: String) -> Self {
        Self { suite, check: check.to_string(), passed, observed, limit, detail }
    }

    /// Passes when `observed >= limit`.
    fn at_least(suite: &'static str, check: &str, observed: f64, limit: f64, detail: String) -> Self {
        Self::new(suite, check, observed >= limit, observed, limit, detail)
    }

    /// Passes when `observed <= limit`.
    fn at_most(suite: &'static str, check: &str, observed: f64, limit: f64, detail: String) -> Self {
        Self::new(suite, check, observed <= limit, observed, limit, detail)
    }
}

/// Run one suite by name, or every suite for `"all"`.
pub fn run_suite(name: &str, scale: Scale) -> Result<Vec<CheckResult>> {
    match name {
        "all" => {
            let mut out = Vec::new();
            for s in SUITES {
                out.extend(run_suite(s, scale)?);
            }
            Ok(out)
        }
        "sda-bounds" => sda_bounds(scale),
        "evi-oracle" => evi_oracle(scale),
        "polytope" => polytope(scale),
        "coverage" => coverage(scale),
        "variance" => variance(scale),
        "dilated-bonus" => dilated_bonus_bound(scale),
        "visit-bounds" => visit_bounds(scale),
        "hitting" => hitting(scale),
        other => Err(SspError::Config(format!("unknown suite '{other}' (expected one of {}, all)", SUITES.join(", ")))),
    }
}

pub fn results_csv(results: &[CheckResult]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in results {
        let _ = writeln!(
            out,
            "{},{},{},{},{},\"{}\"",
            r.suite,
            r.check,
            r.passed,
            r.observed,
            r.limit,
            r.detail.replace('"', "'")
        );
    }
    out
}

pub fn write_results(results: &[CheckResult], path: &Path) -> Result<()> {
    std::fs::write(path, results_csv(results)).map_err(|e| SspError::Io(format!("{}: {e}", path.display())))
}

fn rng_for(suite: u64, item: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(suite);
    rng.set_stream(item as u64);
    rng
}

fn random_simplex<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<f64> {
    let mut w: Vec<f64> = (0..len).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    // Sparse rows exercise the zero-mass corner cases.
    if len > 1 && rng.gen_bool(0.3) {
        w[rng.gen_range(0..len)] = 0.0;
    }
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

fn random_layered_policy<R: Rng + ?Sized>(n: usize, m: usize, layers: usize, rng: &mut R) -> LayeredTable {
    let mut pi = LayeredTable::zeros(n, m, layers);
    for l in 0..layers {
        for s in 0..n {
            let row = random_simplex(m, rng);
            pi.row_mut(s, l).copy_from_slice(&row);
        }
    }
    pi
}

/// A confidence set around empirical rows drawn from the true transition,
/// with independent random radii.
fn random_conf_set<R: Rng + ?Sized>(inst: &SspInstance, gamma: f64, max_radius: f64, rng: &mut R) -> Result<TransitionConfSet> {
    let (n, m) = (inst.num_states(), inst.num_actions());
    let mut p_bar = Vec::with_capacity(n * m * (n + 1));
    let mut radius = Vec::with_capacity(n * m * (n + 1));
    for s in 0..n {
        for a in 0..m {
            let samples = rng.gen_range(3..40);
            let mut counts = vec![0.0; n + 1];
            for _ in 0..samples {
                counts[crate::episode::sample_index(inst.row(s, a), rng)] += 1.0;
            }
            p_bar.extend(counts.iter().map(|c| c / samples as f64));
            radius.extend((0..=n).map(|_| rng.gen_range(0.0..max_radius)));
        }
    }
    TransitionConfSet::from_parts(n, m, gamma, p_bar, radius)
}

fn random_instance<R: Rng + ?Sized>(
    max_states: usize,
    max_actions: usize,
    rng: &mut R,
) -> Result<(SspInstance, CostFunction)> {
    let n = rng.gen_range(1..=max_states);
    let m = rng.gen_range(1..=max_actions);
    let p_goal = rng.gen_range(0.05..0.3);
    random_ssp(n, m, p_goal, 0.0, rng)
}

fn worst(values: impl Iterator<Item = f64>) -> f64 {
    values.fold(f64::INFINITY, f64::min)
}

const SLACK: f64 = -1e-8;

fn sda_bounds(scale: Scale) -> Result<Vec<CheckResult>> {
    const SUITE: &str = "sda-bounds";
    let count = scale.pick(10, 50);
    // (value bound, Q gap, hitting time, layer decay) slacks per instance.
    let per_instance: Vec<[f64; 4]> = (0..count)
        .into_par_iter()
        .map(|i| -> Result<[f64; 4]> {
            let mut rng = rng_for(101, i);
            let (inst, cost) = random_instance(5, 3, &mut rng)?;
            let (n, m) = (inst.num_states(), inst.num_actions());
            let kp = key_params(&inst, &cost)?;
            let episodes = [10, 100, 1000][i % 3];
            let params = SdaParams::new(episodes, 0.1, kp.diameter, kp.t_max)?;
            let (h, gamma, cf) = (params.num_layers, params.gamma, params.terminal_cost);
            let mdp = StackedMdp::from_params(&inst, &params);
            let dense = |pi: &LayeredTable, c: &LayeredTable| {
                stacked_evaluate_dense(&mdp, pi, c).ok_or_else(|| SspError::NoConvergence("singular stacked system".into()))
            };

            let mut value_slack = f64::INFINITY;
            let mut hitting_slack = f64::INFINITY;
            for _ in 0..3 {
                let pi = random_layered_policy(n, m, h + 1, &mut rng);
                let mut c = LayeredTable::filled(n, m, h + 1, cf);
                for l in 0..h {
                    for s in 0..n {
                        for a in 0..m {
                            c.set(s, a, l, rng.gen::<f64>());
                        }
                    }
                }
                let (v, _) = dense(&pi, &c)?;
                for l in 0..=h {
                    for s in 0..n {
                        let bound = (h - l) as f64 / (1.0 - gamma) + cf;
                        value_slack = value_slack.min(bound - v.get(s, l));
                    }
                }
                let unit = LayeredTable::filled(n, m, h + 1, 1.0);
                let (t, _) = dense(&pi, &unit)?;
                for s in 0..n {
                    hitting_slack = hitting_slack.min(h as f64 / (1.0 - gamma) + 1.0 - t.get(s, 0));
                }
            }

            let star = mirror_policy(&kp.optimal_policy, h);
            let (_, q_stacked) = dense(&star, &stacked_cost(&cost, h, cf))?;
            let base = policy_evaluation(&inst, &kp.optimal_policy, &cost)?;
            let mut gap_slack = f64::INFINITY;
            for l in 0..=h {
                for s in 0..n {
                    for a in 0..m {
                        let bound = base.q(s, a) + cf / 2f64.powi((h - l) as i32);
                        gap_slack = gap_slack.min(bound - q_stacked.get(s, a, l));
                    }
                }
            }

            let occ = stacked_occupancy_dense(&mdp, &star, inst.init_state())
                .ok_or_else(|| SspError::NoConvergence("singular flow system".into()))?;
            let mut decay_slack = f64::INFINITY;
            for l in 0..=h {
                let mass: f64 = (0..n).flat_map(|s| (0..m).map(move |a| (s, a))).map(|(s, a)| occ.get(s, a, l)).sum();
                decay_slack = decay_slack.min(kp.t_max * 0.5f64.powi(l as i32) - mass);
            }
            Ok([value_slack, gap_slack, hitting_slack, decay_slack])
        })
        .collect::<Result<_>>()?;
    let names = [
        ("value-bound", "V(s,l) <= (H-l)/(1-gamma) + c_f for random policies and costs"),
        ("q-gap", "stacked Q of the optimal policy <= base Q + c_f/2^(H-l)"),
        ("stacked-hitting-time", "expected stacked hitting time <= H/(1-gamma) + 1"),
        ("layer-decay", "optimal occupancy mass on layer l <= Tmax/2^l"),
    ];
    Ok(names
        .iter()
        .enumerate()
        .map(|(j, (name, what))| {
            CheckResult::at_least(
                SUITE,
                name,
                worst(per_instance.iter().map(|x| x[j])),
                SLACK,
                format!("min slack over {count} instances; {what}"),
            )
        })
        .collect())
}

fn evi_oracle(scale: Scale) -> Result<Vec<CheckResult>> {
    const SUITE: &str = "evi-oracle";
    let count = scale.pick(5, 20);
    let epsilon = 1e-3;
    let diffs: Vec<[f64; 2]> = (0..count)
        .into_par_iter()
        .map(|i| -> Result<[f64; 2]> {
            let mut rng = rng_for(202, i);
            let (inst, _) = random_instance(3, 2, &mut rng)?;
            let (n, m) = (inst.num_states(), inst.num_actions());
            let h = rng.gen_range(1..=3);
            let gamma = rng.gen_range(0.5..0.95);
            let conf = random_conf_set(&inst, gamma, 0.3, &mut rng)?;
            let polys = ConfidencePolytopes::from_conf(&conf)?;
            let pi = random_layered_policy(n, m, h + 1, &mut rng);
            let terminal = rng.gen_range(1.0..10.0);
            let mut cost = LayeredTable::filled(n, m, h + 1, terminal);
            for l in 0..h {
                for s in 0..n {
                    for a in 0..m {
                        cost.set(s, a, l, rng.gen());
                    }
                }
            }
            let mut out = [0.0; 2];
            for (j, sense) in [Sense::Min, Sense::Max].into_iter().enumerate() {
                let fast = match sense {
                    Sense::Min => optimistic_q(&pi, &polys, &cost, epsilon)?,
                    Sense::Max => extended_value_iteration(&pi, &polys, &cost, 0.0, sense, epsilon)?,
                };
                let exact = optimistic_q_brute_force(&pi, &polys, &cost, sense)
                    .ok_or_else(|| SspError::NoConvergence("vertex policy iteration failed".into()))?;
                out[j] = fast.q.zip_with(&exact, |x, y| (x - y).abs()).max();
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let limit = 1e-6 + epsilon;
    Ok(vec![
        CheckResult::at_most(
            SUITE,
            "optimistic-min",
            diffs.iter().map(|d| d[0]).fold(0.0, f64::max),
            limit,
            format!("max |Q - brute force| over {count} instances, epsilon = {epsilon}"),
        ),
        CheckResult::at_most(
            SUITE,
            "pessimistic-max",
            diffs.iter().map(|d| d[1]).fold(0.0, f64::max),
            limit,
            format!("max |Q - brute force| over {count} instances, epsilon = {epsilon}"),
        ),
    ])
}

fn polytope(scale: Scale) -> Result<Vec<CheckResult>> {
    const SUITE: &str = "polytope";
    let count = scale.pick(200, 1000);
    let mut rng = rng_for(303, 0);
    let mut worst_gap: f64 = 0.0;
    let mut infeasible_points = 0usize;
    for _ in 0..count {
        let n = rng.gen_range(1..=3);
        let gamma = rng.gen_range(0.3..0.95);
        let p = random_simplex(n + 1, &mut rng);
        let r: Vec<f64> = (0..=n).map(|_| rng.gen_range(0.0..0.5)).collect();
        // only row (0, 0) is used; the other states repeat it
        let row = TransitionConfSet::from_parts(n, 1, gamma, p.repeat(n), r.repeat(n))?.polytope_row(0, 0);
        let objective: Vec<f64> = (0..2 * n + 1)
            .map(|_| {
                let x: f64 = rng.gen_range(-1.0..1.0);
                // coarse values produce ties
                if rng.gen_bool(0.3) {
                    (x * 2.0).round() / 2.0
                } else {
                    x
                }
            })
            .collect();
        let sense = if rng.gen_bool(0.5) { Sense::Min } else { Sense::Max };
        let (x, value) = row.optimize(&objective, sense)?;
        let exact = lp_brute_force(&row, &objective, sense)
            .ok_or_else(|| SspError::InfeasibleRow("vertex enumeration found no point".into()))?;
        worst_gap = worst_gap.max((value - exact).abs());
        if !row.contains(&x, 1e-12) {
            infeasible_points += 1;
        }
    }
    Ok(vec![
        CheckResult::at_most(
            SUITE,
            "greedy-vs-lp",
            worst_gap,
            1e-9,
            format!("max |greedy - exhaustive LP| over {count} rows"),
        ),
        CheckResult::at_most(
            SUITE,
            "points-feasible",
            infeasible_points as f64,
            0.0,
            format!("optimizer outputs violating the constraints at 1e-12, of {count}"),
        ),
    ])
}

fn coverage(scale: Scale) -> Result<Vec<CheckResult>> {
    const SUITE: &str = "coverage";
    let runs = scale.pick(20, 200);
    let episodes = scale.pick(50, 200);
    let delta = 0.1;
    let covered: Vec<bool> = (0..runs)
        .into_par_iter()
        .map(|i| -> Result<bool> {
            let mut rng = rng_for(404, i);
            let (inst, cost) = random_ssp(3, 2, 0.1, 0.0, &mut rng)?;
            let (n, m) = (inst.num_states(), inst.num_actions());
            let kp = key_params(&inst, &cost)?;
            let sda = SdaParams::new(episodes, delta, kp.diameter, kp.t_max)?;
            let gamma = sda.gamma;
            let mdp = StackedMdp::from_params(&inst, &sda);
            let truth: Vec<_> = (0..n).flat_map(|s| (0..m).map(move |a| (s, a))).map(|(s, a)| (s, a, mdp.row(s, a, 0))).collect();
            let mut env =
                Environment::new(inst.clone(), cost, &CostProcessSpec::Stochastic { noise: NoiseModel::Bernoulli }, i as u64)?;
            let config = LearnerConfig::new(Setting::StochasticCosts, sda, KnownParams::from(&kp), n, m, &Overrides::default());
            let mut learner = Learner::new(config, n, m, inst.init_state(), kp.fast_policy.clone());
            for _ in 0..episodes {
                let set = learner.state.confidence.confidence_set(gamma);
                if !truth.iter().all(|(s, a, row)| set.contains(*s, *a, row)) {
                    return Ok(false);
                }
                learner.run_episode(&mut env, &mut rng)?;
            }
            Ok(true)
        })
        .collect::<Result<_>>()?;
    let rate = covered.iter().filter(|&&c| c).count() as f64 / runs as f64;
    Ok(vec![CheckResult::at_least(
        SUITE,
        "true-transition-in-every-set",
        rate,
        0.85,
        format!("fraction of {runs} runs (K = {episodes}, delta = {delta}) whose sets always contain the truth"),
    )])
}

/// Three states, two actions, costs in [0, 1], with enough branching for a
/// visible variance.
pub fn variance_instance() -> (SspInstance, CostFunction, StationaryPolicy) {
    let rows = vec![
        vec![vec![0.1, 0.5, 0.2, 0.2], vec![0.3, 0.1, 0.5, 0.1]],
        vec![vec![0.4, 0.1, 0.3, 0.2], vec![0.0, 0.2, 0.5, 0.3]],
        vec![vec![0.3, 0.3, 0.1, 0.3], vec![0.5, 0.0, 0.1, 0.4]],
    ];
    let inst = SspInstance::from_rows(&rows, 0, "variance").expect("valid rows");
    let cost = CostFunction::new(3, 2, vec![0.1, 0.9, 0.5, 0.2, 1.0, 0.05], 0.0).expect("valid costs");
    let pi = StationaryPolicy::new(3, 2, vec![0.3, 0.7, 0.6, 0.4, 0.5, 0.5]).expect("valid policy");
    (inst, cost, pi)
}

fn variance(scale: Scale) -> Result<Vec<CheckResult>> {
    const SUITE: &str = "variance";
    let episodes = scale.pick(20_000, 100_000);
    let (inst, cost, pi) = variance_instance();
    let (n, m) = (inst.num_states(), inst.num_actions());
    let v = evaluate_policy_dense(&inst, &pi, &cost).ok_or_else(|| SspError::NonProperPolicy("singular system".into()))?;
    let q = |s: usize, a: usize| cost.get(s, a) + inst.expect(s, a, &v);
    let occ = occupancy_measure(&inst, &pi, Start::Init)?;
    let mut analytic = 0.0;
    let mut second_bound = 0.0;
    for s in 0..n {
        for a in 0..m {
            let qsa = q(s, a);
            let mean_next = inst.expect(s, a, &v);
            let sq: Vec<f64> = v.iter().map(|x| x * x).collect();
            let spread = inst.expect(s, a, &sq) - mean_next * mean_next;
            analytic += occ.get(s, a) * ((qsa - v[s]).powi(2) + spread);
            second_bound += 2.0 * occ.get(s, a) * cost.get(s, a) * qsa;
        }
    }
    let chunks = 16;
    let per_chunk = episodes / chunks;
    let totals: Vec<f64> = (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rng = rng_for(505, c);
            let (inst, pi, cost) = (&inst, &pi, &cost);
            (0..per_chunk).map(move |_| {
                let mut s = inst.init_state();
                let mut total = 0.0;
                while s != inst.goal() {
                    let a = crate::episode::sample_index(pi.row(s), &mut rng);
                    total += cost.get(s, a);
                    s = crate::episode::sample_index(inst.row(s, a), &mut rng);
                }
                total
            })
        })
        .collect();
    let k = totals.len() as f64;
    let mean = totals.iter().sum::<f64>() / k;
    let empirical = totals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0);
    let second: Vec<f64> = totals.iter().map(|x| x * x).collect();
    let second_mean = second.iter().sum::<f64>() / k;
    let second_sd = (second.iter().map(|x| (x - second_mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt();
    let sigma = second_sd / k.sqrt();
    let rel = (empirical - analytic).abs() / analytic;
    Ok(vec![
        CheckResult::at_most(
            SUITE,
            "variance-identity",
            rel,
            0.05,
            format!("relative error of empirical Var {empirical} vs analytic {analytic} over {} episodes", totals.len()),
        ),
        CheckResult::at_most(
            SUITE,
            "second-moment-bound",
            second_mean,
            second_bound + 3.0 * sigma,
            format!("empirical E[C^2] vs 2<q, c*Q> = {second_bound} plus 3 standard errors ({sigma})"),
        ),
    ])
}

fn dilated_bonus_bound(scale: Scale) -> Result<Vec<CheckResult>> {
    const SUITE: &str = "dilated-bonus";
    let count = scale.pick(20, 100);
    // (bound slack, B - b, terminal mismatch) per triple; bound slack is
    // normalized by rho_b.
    let per: Vec<[f64; 3]> = (0..count)
        .into_par_iter()
        .map(|i| -> Result<[f64; 3]> {
            let mut rng = rng_for(606, i);
            let (inst, _) = random_instance(4, 3, &mut rng)?;
            let (n, m) = (inst.num_states(), inst.num_actions());
            let h = rng.gen_range(1..=6);
            let episodes: usize = rng.gen_range(10..=1000);
            let gamma = rng.gen_range(0.5..0.95);
            let dilation = 8.0 * (h as f64 + 1.0) * (2.0 * episodes as f64).ln() / (1.0 - gamma);
            let conf = random_conf_set(&inst, gamma, 0.5, &mut rng)?;
            let polys = ConfidencePolytopes::from_conf(&conf)?;
            let pi = random_layered_policy(n, m, h + 1, &mut rng);
            let rho_b = rng.gen_range(0.01..1.0);
            let mut b = LayeredTable::zeros(n, m, h + 1);
            for l in 0..h {
                for s in 0..n {
                    for a in 0..m {
                        b.set(s, a, l, rng.gen_range(0.0..=rho_b));
                    }
                }
            }
            let out = dilated_bonus(&pi, &polys, &b, dilation, 1e-8)?;
            let mut slack = f64::INFINITY;
            for l in 0..h {
                let top = (0..n).flat_map(|s| (0..m).map(move |a| (s, a))).map(|(s, a)| out.dilated.get(s, a, l)).fold(0.0, f64::max);
                slack = slack.min((15.0 * rho_b * (h - l) as f64 / (1.0 - gamma) - top) / rho_b);
            }
            let above = out.dilated.zip_with(&b, |x, y| x - y).min();
            let mut terminal = 0.0_f64;
            for s in 0..n {
                for a in 0..m {
                    terminal = terminal.max((out.dilated.get(s, a, h) - b.get(s, a, h)).abs());
                }
            }
            Ok([slack, above, terminal])
        })
        .collect::<Result<_>>()?;
    Ok(vec![
        CheckResult::at_least(
            SUITE,
            "magnitude-bound",
            worst(per.iter().map(|x| x[0])),
            SLACK,
            format!("min (15 rho (H-l)/(1-gamma) - max B)/rho over {count} triples"),
        ),
        CheckResult::at_least(SUITE, "dominates-bonus", worst(per.iter().map(|x| x[1])), SLACK, "min B - b".into()),
        CheckResult::at_most(
            SUITE,
            "terminal-equals-bonus",
            per.iter().map(|x| x[2]).fold(0.0, f64::max),
            1e-12,
            "max |B - b| on the terminal layer".into(),
        ),
    ])
}

fn visit_bounds(scale: Scale) -> Result<Vec<CheckResult>> {
    const SUITE: &str = "visit-bounds";
    let count = scale.pick(5, 20);
    let episodes = scale.pick(20_000, 100_000);
    // (violations, triples checked, summed bracket width) per instance
    let per: Vec<(usize, usize, f64)> = (0..count)
        .into_par_iter()
                .map(|i| -> Result<(usize, usize, f64)> {
            let mut attempt = 0;
            loop {
                let mut rng = rng_for(707, i * 1000 + attempt);
                attempt += 1;
                let n = rng.gen_range(2..=3);
                let (inst, cost) = random_ssp(n, 2, 0.2, 0.0, &mut rng)?;
                let m = inst.num_actions();
                let kp = key_params(&inst, &cost)?;
                let params = SdaParams::with_terminal_cost(8, 0.1, kp.t_max, 1.0)?;
                let h = params.num_layers;
                let mut sim = Simulator::new(&inst, Some(&cost));
                let mut conf = ConfidenceState::new(n, m, log_factor(n, m, &params));
                let uniform = crate::sda::uniform_layered_policy(n, m, h);
                for k in 0..5000 {
                    let log = sigma_execute(&mut sim, &uniform, &kp.fast_policy, &params, k + 1, &mut rng)?;
                    conf.update_counts(&log, Feedback::StochasticCosts)?;
                }
                let set = conf.confidence_set(params.gamma);
                let mdp = StackedMdp::from_params(&inst, &params);
                let covered = (0..n).all(|s| (0..m).all(|a| set.contains(s, a, &mdp.row(s, a, 0))));
                if !covered && attempt < 50 {
                    continue;
                }
                if !covered {
                    return Err(SspError::GenerationFailure("no covered confidence set found".into()));
                }
                let polys = ConfidencePolytopes::from_conf(&set)?;
                let pi = random_layered_policy(n, m, h + 1, &mut rng);
                let (upper, lower) = visit_bounds_all(&pi, &polys, inst.init_state())?;
                let mut hits = vec![0usize; n * m * h];
                let mut seen = vec![false; n * m * h];
                for k in 0..episodes {
                    let log = sigma_execute(&mut sim, &pi, &kp.fast_policy, &params, k + 1, &mut rng)?;
                    seen.iter_mut().for_each(|x| *x = false);
                    for st in log.pre_switch_steps() {
                        seen[(st.layer * n + st.state) * m + st.action] = true;
                    }
                    for (h_, s_) in hits.iter_mut().zip(&seen) {
                        *h_ += *s_ as usize;
                    }
                }
                let mut violations = 0;
                let mut width = 0.0;
                for l in 0..h {
                    for s in 0..n {
                        for a in 0..m {
                            let f = hits[(l * n + s) * m + a] as f64 / episodes as f64;
                            let se = (f * (1.0 - f) / episodes as f64).sqrt();
                            let (lo, hi) = (lower.get(s, a, l), upper.get(s, a, l));
                            width += hi - lo;
                            if f < lo - 3.0 * se - 1e-9 || f > hi + 3.0 * se + 1e-9 {
                                violations += 1;
                            }
                        }
                    }
                }
                return Ok((violations, n * m * h, width));
            }
        })
        .collect::<Result<_>>()?;
    let violations: usize = per.iter().map(|x| x.0).sum();
    let triples: usize = per.iter().map(|x| x.1).sum();
    Ok(vec![CheckResult::at_most(
        SUITE,
        "sandwich",
        violations as f64,
        0.0,
        format!(
            "triples outside [lower - 3se, upper + 3se], of {triples} on {count} covered instances, {episodes} episodes each; mean bracket width {:.3}",
            per.iter().map(|x| x.2).sum::<f64>() / triples as f64
        ),
    )])
}

fn hitting(scale: Scale) -> Result<Vec<CheckResult>> {
    const SUITE: &str = "hitting";
    let instances = 5;
    let episodes = scale.pick(2_000, 10_000);
    let delta: f64 = 0.05;
    let per: Vec<(usize, f64)> = (0..instances)
        .into_par_iter()
        .map(|i| -> Result<(usize, f64)> {
            let mut rng = rng_for(808, i);
            let (inst, cost) = random_ssp(5, 2, 0.02, 0.0, &mut rng)?;
            let (n, m) = (inst.num_states(), inst.num_actions());
            let kp = key_params(&inst, &cost)?;
            let params = SdaParams::new(50, 0.1, kp.diameter, kp.t_max)?;
            let h = params.num_layers;
            let tau = h as f64 / (1.0 - params.gamma) + 1.0;
            let threshold = 4.0 * tau * (2.0 / delta).ln();
            let pi = random_layered_policy(n, m, h + 1, &mut rng);
            let mut sim = Simulator::new(&inst, None);
            let mut exceed = 0;
            for k in 0..episodes {
                let log = sigma_execute(&mut sim, &pi, &kp.fast_policy, &params, k + 1, &mut rng)?;
                let len = log.pre_switch_len() + usize::from(log.switched());
                if len as f64 > threshold {
                    exceed += 1;
                }
            }
            Ok((exceed, threshold))
        })
        .collect::<Result<_>>()?;
    let limit = delta + 3.0 * (delta * (1.0 - delta) / episodes as f64).sqrt();
    let rate = per.iter().map(|x| x.0).max().unwrap_or(0) as f64 / episodes as f64;
    Ok(vec![CheckResult::at_most(
        SUITE,
        "length-tail",
        rate,
        limit,
        format!(
            "worst fraction of {episodes} stacked episode lengths above 4 tau ln(2/delta) over {instances} instances; smallest threshold {:.1}",
            per.iter().map(|x| x.1).fold(f64::INFINITY, f64::min)
        ),
    )])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_suite_is_a_config_error() {
        assert!(matches!(run_suite("bogus", Scale::Quick), Err(SspError::Config(_))));
    }

    #[test]
    fn csv_has_header_and_rows() {
        let rows = vec![CheckResult::at_most("s", "c", 1.0, 2.0, "d".into())];
        let csv = results_csv(&rows);
        assert_eq!(csv, format!("{CSV_HEADER}\ns,c,true,1,2,\"d\"\n"));
    }

    #[test]
    fn quick_polytope_suite_passes() {
        for r in run_suite("polytope", Scale::Quick).unwrap() {
            assert!(r.passed, "{r:?}");
        }
    }
}
