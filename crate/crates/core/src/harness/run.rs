//! Seeded experiment runs, regret bookkeeping and CSV output.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::env::{generate_instance, Environment};
use crate::error::{Result, SspError};
use crate::harness::config::ExperimentConfig;
use crate::harness::plot::render_regret_svg;
use crate::po::{EpisodeRecord, KnownParams, Learner, LearnerConfig};
use crate::sda::{mirror_policy, stacked_occupancy, SdaParams, StackedMdp, StackedStart};
use crate::ssp::{key_params, occupancy_measure, optimal_proper_policy, CostFunction, Start, StationaryPolicy};

pub const EPISODE_COLUMNS: &str = "config_hash,seed,k,incurred_cost,pre_switch_cost,terminal_cost,pre_switch_steps,total_steps,switched,comparator,stacked_comparator,cumulative_regret,cumulative_stacked_regret,max_q_tilde,max_bonus,eta,lambda";
pub const SUMMARY_COLUMNS: &str = "config_hash,seed,setting,episodes,completed,final_regret,regret_per_episode,final_stacked_regret,status";

/// Results of one learner seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedRun {
    pub seed: u64,
    pub records: Vec<EpisodeRecord>,
    /// Per-episode comparator value in the base MDP.
    pub comparator: Vec<f64>,
    /// Per-episode comparator value of the mirrored policy in the stacked MDP.
    pub stacked_comparator: Vec<f64>,
    pub regret: Vec<f64>,
    pub stacked_regret: Vec<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegretReport {
    pub config_hash: String,
    pub setting: String,
    pub episodes: usize,
    pub runs: Vec<SeedRun>,
}

impl RegretReport {
    pub fn failed(&self) -> bool {
        self.runs.iter().any(|r| r.error.is_some())
    }

    /// Seed-mean cumulative regret over the episodes every run completed.
    pub fn mean_regret(&self) -> Vec<f64> {
        let len = self.runs.iter().map(|r| r.regret.len()).min().unwrap_or(0);
        (0..len).map(|k| self.runs.iter().map(|r| r.regret[k]).sum::<f64>() / self.runs.len() as f64).collect()
    }

    pub fn episodes_csv(&self) -> String {
        let mut out = String::from(EPISODE_COLUMNS);
        out.push('\n');
        for run in &self.runs {
            for (i, r) in run.records.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                    self.config_hash,
                    run.seed,
                    r.episode,
                    r.incurred_cost,
                    r.pre_switch_cost,
                    r.terminal_cost,
                    r.pre_switch_steps,
                    r.total_steps,
                    u8::from(r.switched),
                    run.comparator[i],
                    run.stacked_comparator[i],
                    run.regret[i],
                    run.stacked_regret[i],
                    r.max_q_tilde,
                    r.max_bonus,
                    r.eta,
                    r.lambda
                );
            }
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from(SUMMARY_COLUMNS);
        out.push('\n');
        for run in &self.runs {
            let n = run.regret.len();
            let last = run.regret.last().copied().unwrap_or(0.0);
            let last_stacked = run.stacked_regret.last().copied().unwrap_or(0.0);
            let status = run.error.as_deref().map_or("ok".to_string(), |e| format!("error: {}", e.replace(',', ";")));
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                self.config_hash,
                run.seed,
                self.setting,
                self.episodes,
                n,
                last,
                if n > 0 { last / n as f64 } else { 0.0 },
                last_stacked,
                status
            );
        }
        let mean = self.mean_regret();
        if let Some(&last) = mean.last() {
            let stacked: f64 =
                self.runs.iter().map(|r| r.stacked_regret[mean.len() - 1]).sum::<f64>() / self.runs.len() as f64;
            let _ = writeln!(
                out,
                "{},mean,{},{},{},{},{},{},{}",
                self.config_hash,
                self.setting,
                self.episodes,
                mean.len(),
                last,
                last / mean.len() as f64,
                stacked,
                if self.failed() { "partial" } else { "ok" }
            );
        }
        out
    }

    pub fn curves(&self) -> Vec<(u64, Vec<f64>)> {
        self.runs.iter().map(|r| (r.seed, r.regret.clone())).collect()
    }

    /// Write `episodes.csv`, `summary.csv` and `regret.svg` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("episodes.csv"), self.episodes_csv())?;
        fs::write(dir.join("summary.csv"), self.summary_csv())?;
        let title = format!("{} ({})", self.setting, self.config_hash);
        fs::write(dir.join("regret.svg"), render_regret_svg(&self.curves(), &title))?;
        Ok(())
    }
}

/// Rebuild regret curves from an `episodes.csv` file.
pub fn curves_from_csv(text: &str) -> Result<Vec<(u64, Vec<f64>)>> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or_else(|| SspError::Parse("empty episodes file".into()))?.split(',').collect();
    let col = |name: &str| {
        header.iter().position(|h| *h == name).ok_or_else(|| SspError::Parse(format!("missing column {name}")))
    };
    let (seed_col, regret_col) = (col("seed")?, col("cumulative_regret")?);
    let mut curves: Vec<(u64, Vec<f64>)> = Vec::new();
    for line in lines.filter(|l| !l.is_empty()) {
        let fields: Vec<&str> = line.split(',').collect();
        let bad = || SspError::Parse(format!("bad episodes row: {line}"));
        let seed: u64 = fields.get(seed_col).ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let value: f64 = fields.get(regret_col).ok_or_else(bad)?.parse().map_err(|_| bad())?;
        match curves.last_mut() {
            Some((s, v)) if *s == seed => v.push(value),
            _ => curves.push((seed, vec![value])),
        }
    }
    Ok(curves)
}

/// Baselines shared by all seeds of one experiment.
struct Baseline {
    comparator: Vec<f64>,
    stacked_comparator: Vec<f64>,
}

fn baseline(env: &Environment, sda: &SdaParams, stochastic: bool) -> Result<Baseline> {
    let inst = env.instance();
    let (n, m) = (inst.num_states(), inst.num_actions());
    let k_total = sda.episodes;
    let tables: Vec<Vec<f64>> = if stochastic {
        vec![env.mean_cost().values().to_vec()]
    } else {
        (1..=k_total).map(|k| env.cost_table(k)).collect()
    };
    let mut avg = vec![0.0; n * m];
    for t in &tables {
        for (x, y) in avg.iter_mut().zip(t) {
            *x += y / tables.len() as f64;
        }
    }
    let (pi_star, _) = optimal_proper_policy(inst, &CostFunction::unchecked(n, m, avg))?;
    let q = occupancy_measure(inst, &pi_star, Start::Init)?;
    let mdp = StackedMdp::from_params(inst, sda);
    let mirrored = mirror_policy(&pi_star, sda.num_layers);
    let q_stacked = stacked_occupancy(&mdp, &mirrored, StackedStart::Init(inst.init_state()))?;
    let value = |t: &[f64]| -> (f64, f64) {
        let base: f64 = (0..n).flat_map(|s| (0..m).map(move |a| (s, a))).map(|(s, a)| q.get(s, a) * t[s * m + a]).sum();
        let stacked_cost = crate::sda::stack_table(t, n, m, sda.num_layers, sda.terminal_cost);
        (base, q_stacked.inner(&stacked_cost))
    };
    let per_table: Vec<(f64, f64)> = tables.iter().map(|t| value(t)).collect();
    let pick = |k: usize| per_table[if stochastic { 0 } else { k }];
    Ok(Baseline {
        comparator: (0..k_total).map(|k| pick(k).0).collect(),
        stacked_comparator: (0..k_total).map(|k| pick(k).1).collect(),
    })
}

fn run_seed(config: &ExperimentConfig, seed: u64) -> Result<SeedRun> {
    let (inst, cost) = generate_instance(&config.env)?;
    let mut env = Environment::new(inst.clone(), cost.clone(), &config.env.costs, config.env.seed)?;
    let stochastic = config.setting.has_stochastic_comparator();
    if env.is_adversarial() == (config.setting == crate::po::Setting::StochasticCosts) {
        return Err(SspError::Config(format!(
            "setting {} does not match the cost process of the environment",
            config.setting
        )));
    }
    let kp = key_params(&inst, &cost)?;
    let sda = SdaParams::new(config.episodes, config.delta, kp.diameter, kp.t_max)?;
    let base = baseline(&env, &sda, stochastic)?;
    let mut lc = LearnerConfig::new(
        config.setting,
        sda,
        KnownParams::from(&kp),
        inst.num_states(),
        inst.num_actions(),
        &config.overrides,
    );
    lc.full_info_counting = config.full_info_counting;
    let fast: StationaryPolicy = kp.fast_policy.clone();
    let mut learner = Learner::new(lc, inst.num_states(), inst.num_actions(), inst.init_state(), fast);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut run = SeedRun {
        seed,
        records: Vec::new(),
        comparator: Vec::new(),
        stacked_comparator: Vec::new(),
        regret: Vec::new(),
        stacked_regret: Vec::new(),
        error: None,
    };
    let (mut regret, mut stacked) = (0.0, 0.0);
    for k in 0..config.episodes {
        match learner.run_episode(&mut env, &mut rng) {
            Ok(r) => {
                regret += r.incurred_cost - base.comparator[k];
                stacked += r.pre_switch_cost + r.terminal_cost - base.stacked_comparator[k];
                run.comparator.push(base.comparator[k]);
                run.stacked_comparator.push(base.stacked_comparator[k]);
                run.regret.push(regret);
                run.stacked_regret.push(stacked);
                run.records.push(r);
            }
            Err(e) => {
                run.error = Some(format!("episode {}: {e}", k + 1));
                break;
            }
        }
    }
    Ok(run)
}

/// Run every seed of the experiment. Seeds that fail mid-run keep their
/// completed episodes and carry the error.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RegretReport> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallel)
        .build()
        .map_err(|e| SspError::Config(format!("thread pool: {e}")))?;
    let runs: Vec<Result<SeedRun>> = pool.install(|| config.seeds.par_iter().map(|&s| run_seed(config, s)).collect());
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(RegretReport { config_hash: config.hash(), setting: config.setting.to_string(), episodes: config.episodes, runs })
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points.iter().filter(|p| p.0 > 0.0 && p.1 > 0.0).map(|p| (p.0.ln(), p.1.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        None
    } else {
        Some(sxy / sxx)
    }
}
