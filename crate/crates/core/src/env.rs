//! Instance generators, cost processes and the episode environment.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::episode::{sample_index, EpisodeEnvironment, StepOutcome};
use crate::error::{Result, SspError};
use crate::ssp::{key_params, CostFunction, SspInstance};

const GENERATION_ATTEMPTS: usize = 100;

fn default_p_goal() -> f64 {
    0.05
}

/// Shape of the base instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Generator {
    RandomSsp {
        num_states: usize,
        num_actions: usize,
        #[serde(default = "default_p_goal")]
        p_goal: f64,
    },
    Gridworld {
        width: usize,
        height: usize,
        #[serde(default)]
        slip: f64,
    },
    Line {
        length: usize,
    },
}

/// Distribution of a cost around its mean, supported on `[c_min, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseModel {
    /// Always the mean.
    #[default]
    Fixed,
    /// `c_min` or `1`, with the given mean.
    Bernoulli,
    /// Uniform on the widest symmetric interval inside `[c_min, 1]`.
    Uniform,
}

impl NoiseModel {
    pub fn sample<R: Rng + ?Sized>(self, mean: f64, c_min: f64, rng: &mut R) -> f64 {
        match self {
            NoiseModel::Fixed => mean,
            NoiseModel::Bernoulli => {
                if c_min >= 1.0 {
                    return 1.0;
                }
                let p = ((mean - c_min) / (1.0 - c_min)).clamp(0.0, 1.0);
                if rng.gen::<f64>() < p {
                    1.0
                } else {
                    c_min
                }
            }
            NoiseModel::Uniform => {
                let w = (mean - c_min).min(1.0 - mean).max(0.0);
                if w == 0.0 {
                    mean
                } else {
                    rng.gen_range(mean - w..=mean + w)
                }
            }
        }
    }
}

/// How costs are produced over episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CostProcessSpec {
    /// Every step draws an independent cost around the mean table.
    Stochastic {
        #[serde(default)]
        noise: NoiseModel,
    },
    /// Every episode draws a whole table around the mean table.
    StochasticAdversary {
        #[serde(default)]
        noise: NoiseModel,
    },
    /// Tables cycle with the given period; random tables when none given.
    Switching {
        period: usize,
        #[serde(default)]
        tables: Option<Vec<Vec<f64>>>,
    },
}

impl Default for CostProcessSpec {
    fn default() -> Self {
        CostProcessSpec::Stochastic { noise: NoiseModel::Fixed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub generator: Generator,
    #[serde(default)]
    pub costs: CostProcessSpec,
    #[serde(default)]
    pub c_min: f64,
    #[serde(default)]
    pub seed: u64,
}

fn random_cost_table<R: Rng + ?Sized>(len: usize, c_min: f64, rng: &mut R) -> Vec<f64> {
    (0..len).map(|_| if c_min >= 1.0 { 1.0 } else { rng.gen_range(c_min..=1.0) }).collect()
}

fn exp_weights<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<f64> {
    let w: Vec<f64> = (0..len).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

/// Random instance: every row puts `p_goal` on the goal plus the rest spread
/// by normalized exponential weights over all states and the goal.
pub fn random_ssp<R: Rng + ?Sized>(
    num_states: usize,
    num_actions: usize,
    p_goal: f64,
    c_min: f64,
    rng: &mut R,
) -> Result<(SspInstance, CostFunction)> {
    if num_states == 0 || num_actions == 0 {
        return Err(SspError::InvalidArgument("need at least one state and one action".into()));
    }
    if !(p_goal > 0.0 && p_goal <= 1.0) {
        return Err(SspError::InvalidArgument(format!("p_goal {p_goal} must lie in (0, 1]")));
    }
    if !(0.0..=1.0).contains(&c_min) {
        return Err(SspError::InvalidArgument(format!("c_min {c_min} must lie in [0, 1]")));
    }
    for _ in 0..GENERATION_ATTEMPTS {
        let mut flat = Vec::with_capacity(num_states * num_actions * (num_states + 1));
        for _ in 0..num_states * num_actions {
            let w = exp_weights(num_states + 1, rng);
            let mut row: Vec<f64> = w.iter().map(|x| (1.0 - p_goal) * x).collect();
            row[num_states] += p_goal;
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= total);
            flat.extend(row);
        }
        let inst = SspInstance::new(num_states, num_actions, 0, flat, "random-ssp")?;
        let cost = CostFunction::new(num_states, num_actions, random_cost_table(num_states * num_actions, c_min, rng), c_min)?;
        if key_params(&inst, &cost).is_ok() {
            return Ok((inst, cost));
        }
    }
    Err(SspError::GenerationFailure(format!("no valid instance after {GENERATION_ATTEMPTS} attempts")))
}

/// Deterministic chain `0 -> 1 -> ... -> n-1 -> goal` with one action and unit cost.
pub fn line(length: usize) -> Result<(SspInstance, CostFunction)> {
    if length == 0 {
        return Err(SspError::InvalidArgument("line needs at least one state".into()));
    }
    let mut flat = vec![0.0; length * (length + 1)];
    for s in 0..length {
        flat[s * (length + 1) + s + 1] = 1.0;
    }
    let inst = SspInstance::new(length, 1, 0, flat, format!("line{length}"))?;
    Ok((inst, CostFunction::constant(length, 1, 1.0)))
}

/// Grid with the goal in the bottom-right cell, start in the top-left and
/// unit costs. Actions are up, down, left, right; with probability `slip`
/// the move goes in a uniformly random direction. Moves into walls stay put.
pub fn gridworld(width: usize, height: usize, slip: f64) -> Result<(SspInstance, CostFunction)> {
    if width * height < 2 {
        return Err(SspError::InvalidArgument("grid needs at least two cells".into()));
    }
    if !(0.0..=1.0).contains(&slip) {
        return Err(SspError::InvalidArgument(format!("slip {slip} must lie in [0, 1]")));
    }
    let n = width * height - 1;
    let moves: [(i64, i64); 4] = [(0, -1), (0, 1), (-1, 0), (1, 0)];
    let target = |cell: usize, dir: usize| -> usize {
        let (x, y) = ((cell % width) as i64, (cell / width) as i64);
        let (nx, ny) = (x + moves[dir].0, y + moves[dir].1);
        if nx < 0 || ny < 0 || nx >= width as i64 || ny >= height as i64 {
            cell
        } else {
            (ny as usize) * width + nx as usize
        }
    };
    // the goal cell is the last one, which coincides with the sentinel index n
    let mut flat = vec![0.0; n * 4 * (n + 1)];
    for s in 0..n {
        for a in 0..4 {
            let row = &mut flat[(s * 4 + a) * (n + 1)..(s * 4 + a + 1) * (n + 1)];
            row[target(s, a)] += 1.0 - slip;
            for d in 0..4 {
                row[target(s, d)] += slip / 4.0;
            }
        }
    }
    let inst = SspInstance::new(n, 4, 0, flat, format!("grid{width}x{height}"))?;
    Ok((inst, CostFunction::constant(n, 4, 1.0)))
}

/// Build the base instance and mean cost for a spec.
pub fn generate_instance(spec: &EnvSpec) -> Result<(SspInstance, CostFunction)> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (inst, cost) = match spec.generator {
        Generator::RandomSsp { num_states, num_actions, p_goal } => {
            random_ssp(num_states, num_actions, p_goal, spec.c_min, &mut rng)?
        }
        Generator::Gridworld { width, height, slip } => gridworld(width, height, slip)?,
        Generator::Line { length } => line(length)?,
    };
    key_params(&inst, &cost).map_err(|e| SspError::GenerationFailure(e.to_string()))?;
    Ok((inst, cost))
}

/// Cost data revealed at the end of an episode.
#[derive(Debug, Clone, PartialEq)]
pub enum Revealed {
    Full(Vec<f64>),
    Bandit(Vec<(usize, usize, f64)>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RevealMode {
    Full,
    Bandit,
}

#[derive(Debug, Clone, PartialEq)]
enum CostProcess {
    PerStep { noise: NoiseModel },
    PerEpisode { noise: NoiseModel, seed: u64 },
    Sequence { tables: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Idle,
    Running(usize),
    Finished(usize),
    Revealed(usize),
}

/// A base instance plus a cost process, executed one episode at a time.
#[derive(Debug, Clone)]
pub struct Environment {
    instance: SspInstance,
    mean_cost: CostFunction,
    process: CostProcess,
    current: Vec<f64>,
    phase: Phase,
    episode_cost: f64,
}

impl Environment {
    pub fn new(instance: SspInstance, mean_cost: CostFunction, costs: &CostProcessSpec, seed: u64) -> Result<Self> {
        let (n, m) = (instance.num_states(), instance.num_actions());
        let c_min = mean_cost.c_min();
        let process = match costs {
            CostProcessSpec::Stochastic { noise } => CostProcess::PerStep { noise: *noise },
            CostProcessSpec::StochasticAdversary { noise } => CostProcess::PerEpisode { noise: *noise, seed },
            CostProcessSpec::Switching { period, tables } => {
                if *period == 0 {
                    return Err(SspError::InvalidArgument("switching period must be >= 1".into()));
                }
                let tables = match tables {
                    Some(t) => {
                        if t.len() != *period || t.iter().any(|x| x.len() != n * m) {
                            return Err(SspError::InvalidArgument(format!(
                                "switching adversary needs {period} tables of {} entries",
                                n * m
                            )));
                        }
                        for x in t {
                            CostFunction::new(n, m, x.clone(), c_min)?;
                        }
                        t.clone()
                    }
                    None => {
                        let mut rng = ChaCha8Rng::seed_from_u64(seed);
                        rng.set_stream(u64::MAX);
                        (0..*period).map(|_| random_cost_table(n * m, c_min, &mut rng)).collect()
                    }
                };
                CostProcess::Sequence { tables }
            }
        };
        Ok(Self { instance, mean_cost, process, current: vec![0.0; n * m], phase: Phase::Idle, episode_cost: 0.0 })
    }

    pub fn from_spec(spec: &EnvSpec) -> Result<Self> {
        let (inst, cost) = generate_instance(spec)?;
        Self::new(inst, cost, &spec.costs, spec.seed)
    }

    pub fn instance(&self) -> &SspInstance {
        &self.instance
    }

    pub fn mean_cost(&self) -> &CostFunction {
        &self.mean_cost
    }

    /// Whether costs are hidden during the episode.
    pub fn is_adversarial(&self) -> bool {
        !matches!(self.process, CostProcess::PerStep { .. })
    }

    /// The cost table of episode `k` (1-based). Only meaningful for
    /// per-episode processes; per-step processes return the mean table.
    pub fn cost_table(&self, k: usize) -> Vec<f64> {
        let c_min = self.mean_cost.c_min();
        match &self.process {
            CostProcess::PerStep { .. } => self.mean_cost.values().to_vec(),
            CostProcess::PerEpisode { noise, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                rng.set_stream(k as u64);
                self.mean_cost.values().iter().map(|&mu| noise.sample(mu, c_min, &mut rng)).collect()
            }
            CostProcess::Sequence { tables } => tables[(k - 1) % tables.len()].clone(),
        }
    }

    pub fn begin_episode(&mut self, k: usize) -> Result<()> {
        if k == 0 {
            return Err(SspError::Protocol("episodes are numbered from 1".into()));
        }
        match self.phase {
            Phase::Running(j) => return Err(SspError::Protocol(format!("episode {j} is still running"))),
            Phase::Finished(j) | Phase::Revealed(j) if j >= k => {
                return Err(SspError::Protocol(format!("episode {k} does not follow {j}")))
            }
            _ => {}
        }
        self.current = self.cost_table(k);
        self.phase = Phase::Running(k);
        self.episode_cost = 0.0;
        Ok(())
    }

    pub fn end_episode(&mut self) -> Result<f64> {
        match self.phase {
            Phase::Running(k) => {
                self.phase = Phase::Finished(k);
                Ok(self.episode_cost)
            }
            _ => Err(SspError::Protocol("no episode is running".into())),
        }
    }

    /// Total cost incurred so far in the current (or last) episode.
    pub fn episode_cost(&self) -> f64 {
        self.episode_cost
    }

    /// Costs of a finished episode. `visited` lists the pairs visited before
    /// the switch and is only used in bandit mode.
    pub fn reveal(&mut self, k: usize, mode: RevealMode, visited: &[(usize, usize)]) -> Result<Revealed> {
        match self.phase {
            Phase::Revealed(j) if j == k => return Err(SspError::DoubleReveal(k)),
            Phase::Finished(j) if j == k => {}
            _ => return Err(SspError::Protocol(format!("episode {k} is not finished"))),
        }
        self.phase = Phase::Revealed(k);
        let m = self.instance.num_actions();
        Ok(match mode {
            RevealMode::Full => Revealed::Full(self.current.clone()),
            RevealMode::Bandit => {
                let mut seen = vec![false; self.current.len()];
                let mut out = Vec::new();
                for &(s, a) in visited {
                    if s >= self.instance.num_states() || a >= m {
                        return Err(SspError::InvalidArgument(format!("pair ({s}, {a}) out of range")));
                    }
                    if !seen[s * m + a] {
                        seen[s * m + a] = true;
                        out.push((s, a, self.current[s * m + a]));
                    }
                }
                Revealed::Bandit(out)
            }
        })
    }
}

impl EpisodeEnvironment for Environment {
    fn num_states(&self) -> usize {
        self.instance.num_states()
    }

    fn init_state(&self) -> usize {
        self.instance.init_state()
    }

    fn step<R: Rng + ?Sized>(&mut self, s: usize, a: usize, rng: &mut R) -> Result<StepOutcome> {
        if !matches!(self.phase, Phase::Running(_)) {
            return Err(SspError::Protocol("step outside an episode".into()));
        }
        let m = self.instance.num_actions();
        let next = sample_index(self.instance.row(s, a), rng);
        let (cost, observed) = match &self.process {
            CostProcess::PerStep { noise } => {
                let c = noise.sample(self.current[s * m + a], self.mean_cost.c_min(), rng);
                (c, Some(c))
            }
            _ => (self.current[s * m + a], None),
        };
        self.episode_cost += cost;
        Ok(StepOutcome { next, observed_cost: observed })
    }
}

/// Bare simulator of a base instance with fixed costs, for Monte-Carlo
/// checks that need no episode protocol.
#[derive(Debug, Clone, Copy)]
pub struct Simulator<'a> {
    instance: &'a SspInstance,
    cost: Option<&'a CostFunction>,
}

impl<'a> Simulator<'a> {
    pub fn new(instance: &'a SspInstance, cost: Option<&'a CostFunction>) -> Self {
        Self { instance, cost }
    }
}

impl EpisodeEnvironment for Simulator<'_> {
    fn num_states(&self) -> usize {
        self.instance.num_states()
    }

    fn init_state(&self) -> usize {
        self.instance.init_state()
    }

    fn step<R: Rng + ?Sized>(&mut self, s: usize, a: usize, rng: &mut R) -> Result<StepOutcome> {
        let next = sample_index(self.instance.row(s, a), rng);
        Ok(StepOutcome { next, observed_cost: self.cost.map(|c| c.get(s, a)) })
    }
}
