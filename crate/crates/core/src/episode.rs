//! Episode records and the environment interface used to execute episodes.

use std::fmt::Write as _;

use rand::Rng;

use crate::error::{Result, SspError};

/// Outcome of one environment step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    /// Next state; equals the goal sentinel when the goal is reached.
    pub next: usize,
    /// Cost visible to the learner right away (stochastic costs only).
    pub observed_cost: Option<f64>,
}

/// What the executor needs from an environment.
pub trait EpisodeEnvironment {
    fn num_states(&self) -> usize;
    fn init_state(&self) -> usize;
    fn step<R: Rng + ?Sized>(&mut self, s: usize, a: usize, rng: &mut R) -> Result<StepOutcome>;

    fn goal(&self) -> usize {
        self.num_states()
    }
}

/// One executed step. `layer` is the counter value when the action was
/// taken; fast-policy steps carry the terminal layer index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub state: usize,
    pub action: usize,
    pub layer: usize,
    pub cost: Option<f64>,
    pub pre_switch: bool,
}

/// Trajectory of one episode of the layered executor.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub episode: usize,
    pub steps: Vec<StepRecord>,
    /// Index into `steps` of the first fast-policy step, if the counter reached
    /// the terminal layer before the goal.
    pub switch_index: Option<usize>,
    /// `c_f * 1{s_{J+1} != g}`.
    pub terminal_cost: f64,
    /// State where the switch happened (the terminal-layer state).
    pub switch_state: Option<usize>,
}

impl EpisodeLog {
    /// Number of steps before reaching the goal or the terminal layer.
    pub fn pre_switch_len(&self) -> usize {
        self.switch_index.unwrap_or(self.steps.len())
    }

    pub fn pre_switch_steps(&self) -> &[StepRecord] {
        &self.steps[..self.pre_switch_len()]
    }

    pub fn fast_steps(&self) -> &[StepRecord] {
        &self.steps[self.pre_switch_len()..]
    }

    pub fn switched(&self) -> bool {
        self.switch_index.is_some()
    }

    /// Fill step costs from a full cost table `[s][a]` (flattened).
    pub fn attach_costs(&mut self, num_actions: usize, table: &[f64]) {
        for st in &mut self.steps {
            st.cost = Some(table[st.state * num_actions + st.action]);
        }
    }

    /// Pre-switch visit counts `n(s, a, l)` as `(s, a, l) -> count` triples.
    pub fn visit_counts(&self, num_states: usize, num_actions: usize, num_layers: usize) -> Vec<u32> {
        let mut n = vec![0; num_states * num_actions * num_layers];
        for st in self.pre_switch_steps() {
            n[(st.layer * num_states + st.state) * num_actions + st.action] += 1;
        }
        n
    }

    /// Line-oriented text record:
    /// `episode<TAB>J<TAB>switch<TAB>terminal_cost<TAB>s,a,l,cost s,a,l,cost ...`
    /// A hidden cost is written as `?`; a missing switch as `-`.
    pub fn to_record(&self) -> String {
        let mut out = String::new();
        let switch = self.switch_index.map_or("-".to_string(), |i| i.to_string());
        let _ = write!(out, "{}\t{}\t{}\t{}\t", self.episode, self.pre_switch_len(), switch, self.terminal_cost);
        for (i, st) in self.steps.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            let cost = st.cost.map_or("?".to_string(), |c| c.to_string());
            let _ = write!(out, "{},{},{},{}", st.state, st.action, st.layer, cost);
        }
        out
    }

    pub fn from_record(line: &str) -> Result<Self> {
        let bad = |what: &str| SspError::Parse(format!("episode record: {what}"));
        let fields: Vec<&str> = line.trim_end_matches('\n').split('\t').collect();
        if fields.len() != 5 {
            return Err(bad("expected 5 tab-separated fields"));
        }
        let episode = fields[0].parse().map_err(|_| bad("episode"))?;
        let j: usize = fields[1].parse().map_err(|_| bad("J"))?;
        let switch_index = match fields[2] {
            "-" => None,
            s => Some(s.parse().map_err(|_| bad("switch"))?),
        };
        let terminal_cost = fields[3].parse().map_err(|_| bad("terminal cost"))?;
        let mut steps = Vec::new();
        for (i, tok) in fields[4].split_whitespace().enumerate() {
            let parts: Vec<&str> = tok.split(',').collect();
            if parts.len() != 4 {
                return Err(bad("step tuple"));
            }
            let cost = match parts[3] {
                "?" => None,
                c => Some(c.parse().map_err(|_| bad("cost"))?),
            };
            steps.push(StepRecord {
                state: parts[0].parse().map_err(|_| bad("state"))?,
                action: parts[1].parse().map_err(|_| bad("action"))?,
                layer: parts[2].parse().map_err(|_| bad("layer"))?,
                cost,
                pre_switch: i < switch_index.unwrap_or(usize::MAX),
            });
        }
        let switch_state = switch_index.and_then(|i| steps.get(i).map(|s: &StepRecord| s.state));
        let log = Self { episode, steps, switch_index, terminal_cost, switch_state };
        if log.pre_switch_len() != j {
            return Err(bad("J does not match the step list"));
        }
        Ok(log)
    }
}

/// Sample an index from a probability row.
pub fn sample_index<R: Rng + ?Sized>(row: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in row.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn record_roundtrip() {
        let log = EpisodeLog {
            episode: 7,
            steps: vec![
                StepRecord { state: 0, action: 1, layer: 0, cost: Some(0.25), pre_switch: true },
                StepRecord { state: 2, action: 0, layer: 3, cost: None, pre_switch: false },
            ],
            switch_index: Some(1),
            terminal_cost: 12.0,
            switch_state: Some(2),
        };
        let text = log.to_record();
        assert_eq!(text, "7\t1\t1\t12\t0,1,0,0.25 2,0,3,?");
        assert_eq!(EpisodeLog::from_record(&text).unwrap(), log);
    }

    #[test]
    fn sampling_skips_zero_mass() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert_eq!(sample_index(&[0.0, 1.0, 0.0], &mut rng), 1);
        }
    }
}
