//! Visit counters, empirical transitions, Bernstein transition confidence
//! sets and optimistic cost estimators.

use serde::{Deserialize, Serialize};

use crate::episode::EpisodeLog;
use crate::error::{Result, SspError};
use crate::planning::polytope::PolytopeRow;
use crate::sda::{SdaParams, StackedRow};
use crate::table::LayeredTable;

/// Feedback revealed at the end of an episode.
#[derive(Debug, Clone, Copy)]
pub enum Feedback<'a> {
    /// Costs are carried by the pre-switch steps of the log.
    StochasticCosts,
    /// The whole cost table `[s][a]` of the episode.
    FullInformation(&'a [f64]),
    /// Costs of the pairs visited before the switch, as `(s, a, cost)`.
    Bandit(&'a [(usize, usize, f64)]),
}

/// How full-information feedback feeds the cost counters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FullInfoCounting {
    /// Every pair counts once per episode.
    #[default]
    AllPairs,
    /// Only pairs visited before the switch count.
    VisitedOnly,
}

/// Counters behind the transition confidence sets and cost estimators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceState {
    num_states: usize,
    num_actions: usize,
    iota: f64,
    /// Number of completed episodes whose data is included.
    episodes_seen: usize,
    visits: Vec<u64>,
    /// `[s][a][s']` with the goal in the last column.
    transitions: Vec<u64>,
    cost_observations: Vec<u64>,
    cost_sums: Vec<f64>,
    full_info_counting: FullInfoCounting,
}

/// `ln(2 S A L K / delta)`.
pub fn log_factor(num_states: usize, num_actions: usize, params: &SdaParams) -> f64 {
    (2.0 * num_states as f64 * num_actions as f64 * params.step_cap as f64 * params.episodes as f64 / params.confidence)
        .ln()
}

impl ConfidenceState {
    pub fn new(num_states: usize, num_actions: usize, iota: f64) -> Self {
        let sa = num_states * num_actions;
        Self {
            num_states,
            num_actions,
            iota,
            episodes_seen: 0,
            visits: vec![0; sa],
            transitions: vec![0; sa * (num_states + 1)],
            cost_observations: vec![0; sa],
            cost_sums: vec![0.0; sa],
            full_info_counting: FullInfoCounting::AllPairs,
        }
    }

    pub fn for_params(num_states: usize, num_actions: usize, params: &SdaParams) -> Self {
        Self::new(num_states, num_actions, log_factor(num_states, num_actions, params))
    }

    pub fn with_full_info_counting(mut self, counting: FullInfoCounting) -> Self {
        self.full_info_counting = counting;
        self
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn iota(&self) -> f64 {
        self.iota
    }

    pub fn episodes_seen(&self) -> usize {
        self.episodes_seen
    }

    #[inline]
    pub fn visits(&self, s: usize, a: usize) -> u64 {
        self.visits[s * self.num_actions + a]
    }

    #[inline]
    pub fn transition_count(&self, s: usize, a: usize, next: usize) -> u64 {
        self.transitions[(s * self.num_actions + a) * (self.num_states + 1) + next]
    }

    #[inline]
    pub fn cost_observations(&self, s: usize, a: usize) -> u64 {
        self.cost_observations[s * self.num_actions + a]
    }

    #[inline]
    pub fn cost_sum(&self, s: usize, a: usize) -> f64 {
        self.cost_sums[s * self.num_actions + a]
    }

    pub fn total_visits(&self) -> u64 {
        self.visits.iter().sum()
    }

    /// Empirical transition `P̄(s'|s,a)`; zero before any visit.
    pub fn empirical(&self, s: usize, a: usize, next: usize) -> f64 {
        let n = self.visits(s, a);
        if n == 0 {
            0.0
        } else {
            self.transition_count(s, a, next) as f64 / n as f64
        }
    }

    /// `iota / max(1, N(s,a))`.
    pub fn alpha_transition(&self, s: usize, a: usize) -> f64 {
        self.iota / self.visits(s, a).max(1) as f64
    }

    /// `iota / max(1, cost observations)`.
    pub fn alpha_cost(&self, s: usize, a: usize) -> f64 {
        self.iota / self.cost_observations(s, a).max(1) as f64
    }

    /// Add one episode: transitions from the pre-switch steps, costs per the
    /// feedback type.
    pub fn update_counts(&mut self, log: &EpisodeLog, feedback: Feedback<'_>) -> Result<()> {
        let (n, m) = (self.num_states, self.num_actions);
        let pre = log.pre_switch_len();
        for (i, st) in log.steps[..pre].iter().enumerate() {
            if st.state >= n || st.action >= m {
                return Err(SspError::InvalidArgument(format!("step ({}, {}) out of range", st.state, st.action)));
            }
            let next = log.steps.get(i + 1).map_or(n, |x| x.state);
            let sa = st.state * m + st.action;
            self.visits[sa] += 1;
            self.transitions[sa * (n + 1) + next] += 1;
        }
        match feedback {
            Feedback::StochasticCosts => {
                for st in &log.steps[..pre] {
                    let c = st.cost.ok_or_else(|| {
                        SspError::FeedbackMismatch(format!("step at ({}, {}) carries no cost", st.state, st.action))
                    })?;
                    let sa = st.state * m + st.action;
                    self.cost_observations[sa] += 1;
                    self.cost_sums[sa] += c;
                }
            }
            Feedback::FullInformation(table) => {
                if table.len() != n * m {
                    return Err(SspError::FeedbackMismatch(format!(
                        "cost table has {} entries, expected {}",
                        table.len(),
                        n * m
                    )));
                }
                let mut seen = vec![self.full_info_counting == FullInfoCounting::AllPairs; n * m];
                for st in &log.steps[..pre] {
                    seen[st.state * m + st.action] = true;
                }
                for sa in 0..n * m {
                    if seen[sa] {
                        self.cost_observations[sa] += 1;
                        self.cost_sums[sa] += table[sa];
                    }
                }
            }
            Feedback::Bandit(pairs) => {
                let mut visited = vec![false; n * m];
                for st in &log.steps[..pre] {
                    visited[st.state * m + st.action] = true;
                }
                let mut counted = vec![false; n * m];
                for &(s, a, c) in pairs {
                    if s >= n || a >= m || !visited[s * m + a] {
                        return Err(SspError::FeedbackMismatch(format!("cost revealed for unvisited pair ({s}, {a})")));
                    }
                    if !counted[s * m + a] {
                        counted[s * m + a] = true;
                        self.cost_observations[s * m + a] += 1;
                        self.cost_sums[s * m + a] += c;
                    }
                }
                if counted != visited {
                    return Err(SspError::FeedbackMismatch("bandit feedback misses a visited pair".into()));
                }
            }
        }
        self.episodes_seen += 1;
        Ok(())
    }

    /// Snapshot of the confidence set at the current counts.
    pub fn confidence_set(&self, gamma: f64) -> TransitionConfSet {
        let (n, m) = (self.num_states, self.num_actions);
        let mut p_bar = vec![0.0; n * m * (n + 1)];
        let mut radius = vec![0.0; n * m * (n + 1)];
        for s in 0..n {
            for a in 0..m {
                let alpha = self.alpha_transition(s, a);
                for t in 0..=n {
                    let i = (s * m + a) * (n + 1) + t;
                    let p = self.empirical(s, a, t);
                    p_bar[i] = p;
                    radius[i] = bernstein_radius(p, alpha);
                }
            }
        }
        TransitionConfSet { num_states: n, num_actions: m, gamma, p_bar, radius }
    }

    /// Optimistic cost `max(0, c̄ - 2 sqrt(c̄ α) - 7α)` per `(s, a)`.
    pub fn cost_estimate(&self) -> Vec<f64> {
        let (n, m) = (self.num_states, self.num_actions);
        let mut out = vec![0.0; n * m];
        for s in 0..n {
            for a in 0..m {
                let count = self.cost_observations(s, a).max(1) as f64;
                let mean = self.cost_sum(s, a) / count;
                let alpha = self.alpha_cost(s, a);
                out[s * m + a] = optimistic_cost(mean, alpha);
            }
        }
        out
    }

    /// Cost estimate on every working layer, terminal cost on the last.
    pub fn stacked_cost_estimate(&self, num_layers: usize, terminal_cost: f64) -> LayeredTable {
        crate::sda::stack_table(&self.cost_estimate(), self.num_states, self.num_actions, num_layers, terminal_cost)
    }
}

/// `4 sqrt(p α) + 28 α`.
#[inline]
pub fn bernstein_radius(p: f64, alpha: f64) -> f64 {
    4.0 * (p * alpha).sqrt() + 28.0 * alpha
}

/// `8 sqrt(p α) + 136 α`, the width that bounds every member's distance to
/// the true transition.
#[inline]
pub fn radius_star(p: f64, alpha: f64) -> f64 {
    8.0 * (p * alpha).sqrt() + 136.0 * alpha
}

#[inline]
pub fn optimistic_cost(mean: f64, alpha: f64) -> f64 {
    (mean - 2.0 * (mean * alpha).sqrt() - 7.0 * alpha).clamp(0.0, 1.0)
}

/// Frozen confidence set: empirical transitions and radii per `(s, a, s')`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionConfSet {
    num_states: usize,
    num_actions: usize,
    gamma: f64,
    p_bar: Vec<f64>,
    radius: Vec<f64>,
}

impl TransitionConfSet {
    /// Build from explicit centers and radii (`[s][a][s']`, goal last).
    pub fn from_parts(num_states: usize, num_actions: usize, gamma: f64, p_bar: Vec<f64>, radius: Vec<f64>) -> Result<Self> {
        let len = num_states * num_actions * (num_states + 1);
        if p_bar.len() != len || radius.len() != len {
            return Err(SspError::InvalidArgument(format!("confidence set needs {len} entries")));
        }
        if radius.iter().any(|&r| !(r >= 0.0)) {
            return Err(SspError::InvalidArgument("radii must be non-negative".into()));
        }
        Ok(Self { num_states, num_actions, gamma, p_bar, radius })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    #[inline]
    fn idx(&self, s: usize, a: usize, t: usize) -> usize {
        (s * self.num_actions + a) * (self.num_states + 1) + t
    }

    pub fn center(&self, s: usize, a: usize, next: usize) -> f64 {
        self.p_bar[self.idx(s, a, next)]
    }

    pub fn radius(&self, s: usize, a: usize, next: usize) -> f64 {
        self.radius[self.idx(s, a, next)]
    }

    /// Scale every radius by `factor` (used to probe monotonicity).
    pub fn widened(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.radius.iter_mut().for_each(|r| *r *= factor);
        out
    }

    /// The feasible region for stacked rows of `(s, a)` on any working layer.
    pub fn polytope_row(&self, s: usize, a: usize) -> PolytopeRow {
        let n = self.num_states;
        let g = self.gamma;
        let mut lower = Vec::with_capacity(2 * n + 1);
        let mut upper = Vec::with_capacity(2 * n + 1);
        for scale in [g, 1.0 - g] {
            for t in 0..n {
                let (p, e) = (self.center(s, a, t), self.radius(s, a, t));
                lower.push(scale * (p - e).max(0.0));
                upper.push(scale * (p + e));
            }
        }
        let (p, e) = (self.center(s, a, n), self.radius(s, a, n));
        lower.push((p - e).clamp(0.0, 1.0));
        upper.push((p + e).clamp(0.0, 1.0));
        PolytopeRow::new(n, g, lower, upper)
    }

    /// Whether a stacked row of `(s, a)` lies in the set.
    pub fn contains(&self, s: usize, a: usize, row: &StackedRow) -> bool {
        const TOL: f64 = 1e-12;
        let n = self.num_states;
        let g = self.gamma;
        if row.stay.len() != n || row.advance.len() != n {
            return false;
        }
        if row.stay.iter().chain(&row.advance).any(|&x| x < -TOL) || row.goal < -TOL {
            return false;
        }
        let stay: f64 = row.stay.iter().sum();
        let adv: f64 = row.advance.iter().sum();
        if stay > g + TOL || adv > 1.0 - g + TOL || (stay + adv + row.goal - 1.0).abs() > TOL {
            return false;
        }
        for t in 0..n {
            let (p, e) = (self.center(s, a, t), self.radius(s, a, t));
            if (p - row.stay[t] / g).abs() > e + TOL || (p - row.advance[t] / (1.0 - g)).abs() > e + TOL {
                return false;
            }
        }
        (self.center(s, a, n) - row.goal).abs() <= self.radius(s, a, n) + TOL
    }
}
