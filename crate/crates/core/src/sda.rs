//! Stacked discounted approximation.
//!
//! The stacked MDP has `H + 1` copies of the base state space. From `(s, l)`
//! with `l < H`, action `a` moves to `(s', l)` with probability
//! `gamma * P(s'|s,a)`, to `(s', l + 1)` with probability
//! `(1 - gamma) * P(s'|s,a)`, and to the goal with probability `P(g|s,a)`.
//! The terminal layer `l = H` jumps to the goal and charges the terminal cost.
//!
//! Every policy is proper in the stacked MDP, so evaluation needs no
//! properness check: within a layer the stay mass is at most `gamma < 1`.

use rand::Rng;

use crate::episode::{sample_index, EpisodeEnvironment, EpisodeLog, StepRecord};
use crate::error::{Result, SspError};
use crate::ssp::{CostFunction, SspInstance, StationaryPolicy, VI_MAX_ITERATIONS, VI_TOLERANCE};
use crate::table::{LayeredTable, LayeredValues};

/// Hard cap on the number of environment steps in one executed episode.
pub const MAX_EPISODE_STEPS: usize = 10_000_000;

/// Parameters of the approximation, all derived from `(K, delta, D, Tmax)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SdaParams {
    pub episodes: usize,
    pub confidence: f64,
    pub t_max: f64,
    /// Stay probability `1 - 1/(2 Tmax)`.
    pub gamma: f64,
    /// Number of working layers `H`.
    pub num_layers: usize,
    pub terminal_cost: f64,
    /// Value bound `2 H Tmax + c_f`.
    pub chi: f64,
    /// `L`, high-probability bound on the steps before the terminal layer.
    pub step_cap: usize,
    /// Dilation coefficient `H'`.
    pub dilation_horizon: f64,
}

impl SdaParams {
    pub fn new(episodes: usize, confidence: f64, diameter: f64, t_max: f64) -> Result<Self> {
        if diameter < 1.0 || !diameter.is_finite() {
            return Err(SspError::InvalidArgument(format!("diameter {diameter} must be >= 1")));
        }
        if !(confidence > 0.0 && confidence < 1.0) {
            return Err(SspError::InvalidArgument(format!("delta {confidence} must lie in (0, 1)")));
        }
        let terminal_cost = (4.0 * diameter * (2.0 * episodes.max(1) as f64 / confidence).ln()).ceil();
        Self::with_terminal_cost(episodes, confidence, t_max, terminal_cost)
    }

    /// Same derivation with an explicit terminal cost.
    pub fn with_terminal_cost(episodes: usize, confidence: f64, t_max: f64, terminal_cost: f64) -> Result<Self> {
        if episodes == 0 {
            return Err(SspError::InvalidArgument("K must be >= 1".into()));
        }
        if !(confidence > 0.0 && confidence < 1.0) {
            return Err(SspError::InvalidArgument(format!("delta {confidence} must lie in (0, 1)")));
        }
        if t_max < 1.0 || !t_max.is_finite() {
            return Err(SspError::InvalidArgument(format!("Tmax {t_max} must be >= 1")));
        }
        if terminal_cost < 1.0 {
            return Err(SspError::InvalidArgument(format!("terminal cost {terminal_cost} must be >= 1")));
        }
        let k = episodes as f64;
        let gamma = 1.0 - 1.0 / (2.0 * t_max);
        let num_layers = ((terminal_cost * k).log2().ceil() as usize).max(1);
        let h = num_layers as f64;
        let chi = 2.0 * h * t_max + terminal_cost;
        let step_cap = ((8.0 * h / (1.0 - gamma)) * (2.0 * t_max * k / confidence).ln()).ceil() as usize;
        let dilation_horizon = 8.0 * (h + 1.0) * (2.0 * k).ln() / (1.0 - gamma);
        Ok(Self {
            episodes,
            confidence,
            t_max,
            gamma,
            num_layers,
            terminal_cost,
            chi,
            step_cap,
            dilation_horizon,
        })
    }

    /// Number of layers in stacked tables (`H + 1`).
    #[inline]
    pub fn table_layers(&self) -> usize {
        self.num_layers + 1
    }

    #[inline]
    pub fn terminal_layer(&self) -> usize {
        self.num_layers
    }
}

/// Distribution of one stacked row `((s, l), a)` with `l < H`.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedRow {
    /// Mass on `(s', l)`.
    pub stay: Vec<f64>,
    /// Mass on `(s', l + 1)`.
    pub advance: Vec<f64>,
    pub goal: f64,
}

impl StackedRow {
    pub fn zeros(num_states: usize) -> Self {
        Self { stay: vec![0.0; num_states], advance: vec![0.0; num_states], goal: 0.0 }
    }

    /// `P V` for values on the current and next layer (goal value 0).
    #[inline]
    pub fn dot(&self, stay_values: &[f64], next_values: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.stay.len() {
            acc += self.stay[i] * stay_values[i] + self.advance[i] * next_values[i];
        }
        acc
    }

    pub fn total(&self) -> f64 {
        self.stay.iter().sum::<f64>() + self.advance.iter().sum::<f64>() + self.goal
    }
}

/// A transition function on the stacked state space. Rows are only queried
/// for working layers; the terminal layer always jumps to the goal.
pub trait LayeredTransition {
    fn num_states(&self) -> usize;
    fn num_actions(&self) -> usize;
    /// Number of working layers `H`.
    fn num_layers(&self) -> usize;
    fn row_into(&self, s: usize, a: usize, layer: usize, out: &mut StackedRow);

    fn row(&self, s: usize, a: usize, layer: usize) -> StackedRow {
        let mut r = StackedRow::zeros(self.num_states());
        self.row_into(s, a, layer, &mut r);
        r
    }
}

/// Lazy view of the stacked MDP over a base instance.
#[derive(Debug, Clone, Copy)]
pub struct StackedMdp<'a> {
    base: &'a SspInstance,
    gamma: f64,
    num_layers: usize,
}

impl<'a> StackedMdp<'a> {
    pub fn new(base: &'a SspInstance, gamma: f64, num_layers: usize) -> Self {
        assert!(gamma > 0.0 && gamma < 1.0, "gamma must lie in (0, 1)");
        assert!(num_layers >= 1, "need at least one working layer");
        Self { base, gamma, num_layers }
    }

    pub fn from_params(base: &'a SspInstance, params: &SdaParams) -> Self {
        Self::new(base, params.gamma, params.num_layers)
    }

    pub fn base(&self) -> &'a SspInstance {
        self.base
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
}

impl LayeredTransition for StackedMdp<'_> {
    fn num_states(&self) -> usize {
        self.base.num_states()
    }

    fn num_actions(&self) -> usize {
        self.base.num_actions()
    }

    fn num_layers(&self) -> usize {
        self.num_layers
    }

    fn row_into(&self, s: usize, a: usize, _layer: usize, out: &mut StackedRow) {
        let row = self.base.row(s, a);
        let n = self.base.num_states();
        for t in 0..n {
            out.stay[t] = self.gamma * row[t];
            out.advance[t] = (1.0 - self.gamma) * row[t];
        }
        out.goal = row[n];
    }
}

/// A materialized stacked transition, one row per `(s, a, l < H)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplicitKernel {
    num_states: usize,
    num_actions: usize,
    num_layers: usize,
    rows: Vec<StackedRow>,
}

impl ExplicitKernel {
    pub fn from_fn(
        num_states: usize,
        num_actions: usize,
        num_layers: usize,
        mut f: impl FnMut(usize, usize, usize) -> StackedRow,
    ) -> Self {
        let mut rows = Vec::with_capacity(num_states * num_actions * num_layers);
        for l in 0..num_layers {
            for s in 0..num_states {
                for a in 0..num_actions {
                    rows.push(f(s, a, l));
                }
            }
        }
        Self { num_states, num_actions, num_layers, rows }
    }

    pub fn from_transition(t: &impl LayeredTransition) -> Self {
        Self::from_fn(t.num_states(), t.num_actions(), t.num_layers(), |s, a, l| t.row(s, a, l))
    }

    #[inline]
    pub fn get(&self, s: usize, a: usize, layer: usize) -> &StackedRow {
        &self.rows[(layer * self.num_states + s) * self.num_actions + a]
    }

    #[inline]
    pub fn get_mut(&mut self, s: usize, a: usize, layer: usize) -> &mut StackedRow {
        &mut self.rows[(layer * self.num_states + s) * self.num_actions + a]
    }
}

impl LayeredTransition for ExplicitKernel {
    fn num_states(&self) -> usize {
        self.num_states
    }

    fn num_actions(&self) -> usize {
        self.num_actions
    }

    fn num_layers(&self) -> usize {
        self.num_layers
    }

    fn row_into(&self, s: usize, a: usize, layer: usize, out: &mut StackedRow) {
        out.clone_from(self.get(s, a, layer));
    }
}

/// Stacked cost: `c(s,a)` on working layers, `c_f` on the terminal layer.
pub fn stacked_cost(cost: &CostFunction, num_layers: usize, terminal_cost: f64) -> LayeredTable {
    stack_table(cost.values(), cost.num_states(), cost.num_actions(), num_layers, terminal_cost)
}

/// Same as [`stacked_cost`] for a raw `[s][a]` table.
pub fn stack_table(values: &[f64], num_states: usize, num_actions: usize, num_layers: usize, terminal: f64) -> LayeredTable {
    LayeredTable::from_fn(num_states, num_actions, num_layers + 1, |s, a, l| {
        if l < num_layers {
            values[s * num_actions + a]
        } else {
            terminal
        }
    })
}

pub fn uniform_layered_policy(num_states: usize, num_actions: usize, num_layers: usize) -> LayeredTable {
    LayeredTable::filled(num_states, num_actions, num_layers + 1, 1.0 / num_actions as f64)
}

/// Copy a stationary policy onto every layer, terminal included.
pub fn mirror_policy(policy: &StationaryPolicy, num_layers: usize) -> LayeredTable {
    LayeredTable::from_fn(policy.num_states(), policy.num_actions(), num_layers + 1, |s, a, _| policy.prob(s, a))
}

/// Terminal cost charged when the counter reaches the terminal layer at `state`.
pub fn terminal_cost(state: usize, goal: usize, params: &SdaParams) -> f64 {
    if state == goal {
        0.0
    } else {
        params.terminal_cost
    }
}

/// Values of a layered policy in a stacked MDP.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedValues {
    pub v: LayeredValues,
    pub q: LayeredTable,
}

fn layer_rows(t: &impl LayeredTransition, layer: usize) -> Vec<StackedRow> {
    let (n, m) = (t.num_states(), t.num_actions());
    let mut rows = Vec::with_capacity(n * m);
    for s in 0..n {
        for a in 0..m {
            rows.push(t.row(s, a, layer));
        }
    }
    rows
}

fn check_policy_shape(t: &impl LayeredTransition, pi: &LayeredTable) -> Result<()> {
    if pi.num_states() != t.num_states() || pi.num_actions() != t.num_actions() || pi.num_layers() != t.num_layers() + 1 {
        return Err(SspError::InvalidArgument("layered policy shape does not match the transition".into()));
    }
    Ok(())
}

/// Evaluate a layered policy: backward over layers, fixed-point iteration
/// within each layer.
pub fn stacked_policy_evaluation(
    transition: &impl LayeredTransition,
    pi: &LayeredTable,
    cost: &LayeredTable,
) -> Result<StackedValues> {
    check_policy_shape(transition, pi)?;
    if !cost.same_shape(pi) {
        return Err(SspError::InvalidArgument("cost shape does not match the policy".into()));
    }
    let (n, m, h) = (transition.num_states(), transition.num_actions(), transition.num_layers());
    let mut v = LayeredValues::zeros(n, h + 1);
    let mut q = LayeredTable::zeros(n, m, h + 1);
    for s in 0..n {
        for a in 0..m {
            q.set(s, a, h, cost.get(s, a, h));
        }
        let vs: f64 = (0..m).map(|a| pi.get(s, a, h) * cost.get(s, a, h)).sum();
        v.set(s, h, vs);
    }
    let mut cur = vec![0.0; n];
    let mut nxt = vec![0.0; n];
    for l in (0..h).rev() {
        let rows = layer_rows(transition, l);
        let next_layer = v.layer(l + 1).to_vec();
        cur.iter_mut().for_each(|x| *x = 0.0);
        let mut converged = false;
        for _ in 0..VI_MAX_ITERATIONS {
            let mut change = 0.0_f64;
            let mut scale = 1.0_f64;
            for s in 0..n {
                let mut acc = 0.0;
                for a in 0..m {
                    let p = pi.get(s, a, l);
                    if p > 0.0 {
                        acc += p * (cost.get(s, a, l) + rows[s * m + a].dot(&cur, &next_layer));
                    }
                }
                change = change.max((acc - cur[s]).abs());
                scale = scale.max(acc.abs());
                nxt[s] = acc;
            }
            std::mem::swap(&mut cur, &mut nxt);
            if change <= VI_TOLERANCE * scale {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(SspError::NoConvergence(format!("layer {l} evaluation hit the iteration cap")));
        }
        v.layer_mut(l).copy_from_slice(&cur);
        for s in 0..n {
            for a in 0..m {
                q.set(s, a, l, cost.get(s, a, l) + rows[s * m + a].dot(&cur, &next_layer));
            }
        }
    }
    Ok(StackedValues { v, q })
}

/// Where a stacked occupancy measure starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StackedStart {
    /// `(s_init, 0)` of the base instance.
    Init(usize),
    State(usize, usize),
    StateAction(usize, usize, usize),
}

/// Occupancy `q(s, a, l)` in the stacked MDP: forward over layers, fixed-point
/// iteration within each layer.
pub fn stacked_occupancy(
    transition: &impl LayeredTransition,
    pi: &LayeredTable,
    start: StackedStart,
) -> Result<LayeredTable> {
    check_policy_shape(transition, pi)?;
    let (n, m, h) = (transition.num_states(), transition.num_actions(), transition.num_layers());
    let mut q = LayeredTable::zeros(n, m, h + 1);
    let (start_layer, seed_fn): (usize, Box<dyn Fn(usize, usize) -> f64>) = match start {
        StackedStart::Init(s0) | StackedStart::State(s0, _) => {
            let l0 = if let StackedStart::State(_, l) = start { l } else { 0 };
            let pi = pi.clone();
            (l0, Box::new(move |s, a| if s == s0 { pi.get(s, a, l0) } else { 0.0 }))
        }
        StackedStart::StateAction(s0, a0, l0) => {
            (l0, Box::new(move |s, a| if s == s0 && a == a0 { 1.0 } else { 0.0 }))
        }
    };
    let mut inflow = vec![0.0; n];
    for l in start_layer..=h {
        let seed = |s: usize, a: usize| if l == start_layer { seed_fn(s, a) } else { 0.0 };
        if l == h {
            for s in 0..n {
                for a in 0..m {
                    q.set(s, a, l, seed(s, a) + pi.get(s, a, l) * inflow[s]);
                }
            }
            break;
        }
        let rows = layer_rows(transition, l);
        // z(s) = inflow(s) + sum_{s'',a} q(s'',a,l) stay(s)
        let mut z = inflow.clone();
        let mut converged = false;
        for _ in 0..VI_MAX_ITERATIONS {
            let mut nz = inflow.clone();
            for s in 0..n {
                for a in 0..m {
                    let w = seed(s, a) + pi.get(s, a, l) * z[s];
                    if w == 0.0 {
                        continue;
                    }
                    for (t, p) in rows[s * m + a].stay.iter().enumerate() {
                        nz[t] += w * p;
                    }
                }
            }
            let mut change = 0.0_f64;
            let mut scale = 1.0_f64;
            for t in 0..n {
                change = change.max((nz[t] - z[t]).abs());
                scale = scale.max(nz[t].abs());
            }
            z = nz;
            if change <= VI_TOLERANCE * scale {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(SspError::NoConvergence(format!("layer {l} occupancy hit the iteration cap")));
        }
        let mut next_inflow = vec![0.0; n];
        for s in 0..n {
            for a in 0..m {
                let w = seed(s, a) + pi.get(s, a, l) * z[s];
                q.set(s, a, l, w);
                for (t, p) in rows[s * m + a].advance.iter().enumerate() {
                    next_inflow[t] += w * p;
                }
            }
        }
        inflow = next_inflow;
    }
    Ok(q)
}

/// Reach probabilities of a target `(s, a, l)`: `W(s', l')` is the
/// probability of ever taking `a` at `(s, l)` when starting from `(s', l')`.
pub fn reach_probabilities(
    transition: &impl LayeredTransition,
    pi: &LayeredTable,
    target: (usize, usize, usize),
) -> Result<LayeredValues> {
    check_policy_shape(transition, pi)?;
    let (n, m, h) = (transition.num_states(), transition.num_actions(), transition.num_layers());
    let (ts, ta, tl) = target;
    let mut w = LayeredValues::zeros(n, h + 1);
    if tl == h {
        for s in 0..n {
            w.set(s, h, if s == ts { pi.get(s, ta, h) } else { 0.0 });
        }
    }
    let top = tl.min(h - 1);
    if tl == h && h == 0 {
        return Ok(w);
    }
    let mut cur = vec![0.0; n];
    let mut nxt = vec![0.0; n];
    for l in (0..=top).rev() {
        let rows = layer_rows(transition, l);
        let next_layer = w.layer(l + 1).to_vec();
        cur.iter_mut().for_each(|x| *x = 0.0);
        let mut converged = false;
        for _ in 0..VI_MAX_ITERATIONS {
            let mut change = 0.0_f64;
            for s in 0..n {
                let mut acc = 0.0;
                for a in 0..m {
                    let p = pi.get(s, a, l);
                    if p == 0.0 {
                        continue;
                    }
                    if l == tl && s == ts && a == ta {
                        acc += p;
                    } else {
                        acc += p * rows[s * m + a].dot(&cur, &next_layer);
                    }
                }
                change = change.max((acc - cur[s]).abs());
                nxt[s] = acc;
            }
            std::mem::swap(&mut cur, &mut nxt);
            if change <= VI_TOLERANCE {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(SspError::NoConvergence(format!("layer {l} reach probabilities hit the iteration cap")));
        }
        w.layer_mut(l).copy_from_slice(&cur);
    }
    Ok(w)
}

/// Ever-visit probability `x(s,a,l)` from `(init, 0)` and return probability
/// `y(s,a,l)` of visiting `(s,a,l)` again after taking it once.
pub fn visit_and_return(
    transition: &impl LayeredTransition,
    pi: &LayeredTable,
    init_state: usize,
    target: (usize, usize, usize),
) -> Result<(f64, f64)> {
    let w = reach_probabilities(transition, pi, target)?;
    let x = w.get(init_state, 0);
    let (ts, ta, tl) = target;
    let y = if tl >= transition.num_layers() {
        0.0
    } else {
        let row = transition.row(ts, ta, tl);
        let next: Vec<f64> = w.layer(tl + 1).to_vec();
        row.dot(w.layer(tl), &next)
    };
    Ok((x, y))
}

/// Execute `sigma(pi)` in the base environment: follow `pi(.|s, l)`, advance
/// the layer counter with probability `1 - gamma` after every step that does
/// not reach the goal, and run the fast policy once the counter reaches the
/// terminal layer.
pub fn sigma_execute<E: EpisodeEnvironment, R: Rng + ?Sized>(
    env: &mut E,
    pi: &LayeredTable,
    fast: &StationaryPolicy,
    params: &SdaParams,
    episode: usize,
    rng: &mut R,
) -> Result<EpisodeLog> {
    if pi.num_layers() != params.table_layers() {
        return Err(SspError::InvalidArgument("policy layers do not match the parameters".into()));
    }
    let goal = env.goal();
    let terminal = params.terminal_layer();
    let mut s = env.init_state();
    let mut layer = 0;
    let mut steps = Vec::new();
    let mut switch_index = None;
    let mut terminal_cost_value = 0.0;
    let mut switch_state = None;
    while s != goal {
        if steps.len() >= MAX_EPISODE_STEPS {
            return Err(SspError::EpisodeOverflow(MAX_EPISODE_STEPS));
        }
        if layer == terminal {
            if switch_index.is_none() {
                switch_index = Some(steps.len());
                switch_state = Some(s);
                terminal_cost_value = terminal_cost(s, goal, params);
            }
            let a = sample_index(fast.row(s), rng);
            let out = env.step(s, a, rng)?;
            steps.push(StepRecord { state: s, action: a, layer, cost: out.observed_cost, pre_switch: false });
            s = out.next;
            continue;
        }
        let a = sample_index(pi.row(s, layer), rng);
        let out = env.step(s, a, rng)?;
        steps.push(StepRecord { state: s, action: a, layer, cost: out.observed_cost, pre_switch: true });
        s = out.next;
        if s != goal && rng.gen::<f64>() >= params.gamma {
            layer += 1;
        }
    }
    Ok(EpisodeLog { episode, steps, switch_index, terminal_cost: terminal_cost_value, switch_state })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn params_match_hand_evaluation() {
        let p = SdaParams::new(100, 0.1, 2.0, 4.0).unwrap();
        assert_eq!(p.gamma, 0.875);
        assert_eq!(p.terminal_cost, 61.0);
        assert_eq!(p.num_layers, 13);
        assert_eq!(p.chi, 2.0 * 13.0 * 4.0 + 61.0);
    }

    #[test]
    fn one_layer_when_product_is_two() {
        let p = SdaParams::with_terminal_cost(1, 0.5, 3.0, 2.0).unwrap();
        assert_eq!(p.num_layers, 1);
        assert_eq!(SdaParams::new(10, 0.1, 1.0, 1.0).unwrap().gamma, 0.5);
    }

    #[test]
    fn rejects_out_of_range_inputs() {
        assert!(SdaParams::new(0, 0.1, 2.0, 2.0).is_err());
        assert!(SdaParams::new(10, 1.0, 2.0, 2.0).is_err());
        assert!(SdaParams::new(10, 0.1, 0.5, 2.0).is_err());
    }

    #[test]
    fn terminal_cost_is_zero_at_goal() {
        let p = SdaParams::new(10, 0.1, 2.0, 2.0).unwrap();
        assert_eq!(terminal_cost(3, 3, &p), 0.0);
        assert_eq!(terminal_cost(1, 3, &p), p.terminal_cost);
    }

    #[test]
    fn stacked_rows_sum_to_one() {
        let inst = SspInstance::from_rows(&[vec![vec![0.2, 0.3, 0.5]], vec![vec![0.6, 0.0, 0.4]]], 0, "t").unwrap();
        let mdp = StackedMdp::new(&inst, 0.75, 3);
        for l in 0..3 {
            for s in 0..2 {
                assert!((mdp.row(s, 0, l).total() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_cost_gives_zero_value() {
        let inst = SspInstance::from_rows(&[vec![vec![0.5, 0.5]]], 0, "t").unwrap();
        let mdp = StackedMdp::new(&inst, 0.5, 2);
        let pi = uniform_layered_policy(1, 1, 2);
        let c = LayeredTable::zeros(1, 1, 3);
        let vals = stacked_policy_evaluation(&mdp, &pi, &c).unwrap();
        assert!(vals.v.max_abs() == 0.0);
    }

    #[test]
    fn mirrored_layers_are_identical() {
        let pol = StationaryPolicy::deterministic(2, &[1, 0]);
        let m = mirror_policy(&pol, 1);
        assert_eq!(m.num_layers(), 2);
        assert_eq!(m.row(0, 0), m.row(0, 1));
        assert_eq!(m.row(0, 0), &[0.0, 1.0]);
    }
}
