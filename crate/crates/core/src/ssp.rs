//! Exact tabular SSP mathematics: instances, policy evaluation, the optimal
//! proper policy, hitting times, the key problem parameters and occupancy
//! measures.
//!
//! The goal state is the reserved index `num_states`; it is never stored as a
//! row of the transition table. Transition rows have `num_states + 1` entries,
//! the last one being the probability of reaching the goal.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SspError};

/// Stopping tolerance for value iteration (relative to the value scale).
pub const VI_TOLERANCE: f64 = 1e-12;
/// Hard iteration cap for value iteration.
pub const VI_MAX_ITERATIONS: usize = 1_000_000;
/// Values beyond this are treated as divergence.
pub const DIVERGENCE_THRESHOLD: f64 = 1e9;

const ROW_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SspInstance {
    num_states: usize,
    num_actions: usize,
    init_state: usize,
    transition: Vec<f64>,
    name: String,
}

impl SspInstance {
    /// `transition` is the flattened `[s][a][s']` table with `num_states + 1`
    /// destinations per row.
    pub fn new(
        num_states: usize,
        num_actions: usize,
        init_state: usize,
        transition: Vec<f64>,
        name: impl Into<String>,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(SspError::InvalidInstance("need at least one state and one action".into()));
        }
        if init_state >= num_states {
            return Err(SspError::InvalidInstance(format!(
                "initial state {init_state} out of range"
            )));
        }
        let width = num_states + 1;
        if transition.len() != num_states * num_actions * width {
            return Err(SspError::InvalidInstance(format!(
                "transition table has {} entries, expected {}",
                transition.len(),
                num_states * num_actions * width
            )));
        }
        for (i, row) in transition.chunks(width).enumerate() {
            let (s, a) = (i / num_actions, i % num_actions);
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(SspError::InvalidInstance(format!("row ({s},{a}) has a negative entry")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(SspError::InvalidInstance(format!("row ({s},{a}) sums to {sum}")));
            }
        }
        Ok(Self { num_states, num_actions, init_state, transition, name: name.into() })
    }

    /// Build from nested `[s][a][s']` rows.
    pub fn from_rows(rows: &[Vec<Vec<f64>>], init_state: usize, name: impl Into<String>) -> Result<Self> {
        let num_states = rows.len();
        let num_actions = rows.first().map_or(0, |r| r.len());
        let mut flat = Vec::with_capacity(num_states * num_actions * (num_states + 1));
        for (s, per_action) in rows.iter().enumerate() {
            if per_action.len() != num_actions {
                return Err(SspError::InvalidInstance(format!("state {s} has a ragged action list")));
            }
            for (a, row) in per_action.iter().enumerate() {
                if row.len() != num_states + 1 {
                    return Err(SspError::InvalidInstance(format!(
                        "row ({s},{a}) has {} entries, expected {}",
                        row.len(),
                        num_states + 1
                    )));
                }
                flat.extend_from_slice(row);
            }
        }
        Self::new(num_states, num_actions, init_state, flat, name)
    }

    #[inline]
    pub fn num_states(&self) -> usize {
        self.num_states
    }

    #[inline]
    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    #[inline]
    pub fn init_state(&self) -> usize {
        self.init_state
    }

    /// Sentinel index of the goal.
    #[inline]
    pub fn goal(&self) -> usize {
        self.num_states
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Distribution over `S ∪ {g}` for `(s, a)`.
    #[inline]
    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let w = self.num_states + 1;
        let i = (s * self.num_actions + a) * w;
        &self.transition[i..i + w]
    }

    #[inline]
    pub fn prob(&self, s: usize, a: usize, next: usize) -> f64 {
        self.row(s, a)[next]
    }

    /// `P_{s,a} V` with `V(g) = 0`.
    #[inline]
    pub fn expect(&self, s: usize, a: usize, values: &[f64]) -> f64 {
        let row = self.row(s, a);
        row[..self.num_states].iter().zip(values).map(|(p, v)| p * v).sum()
    }

    pub fn transition_flat(&self) -> &[f64] {
        &self.transition
    }

    /// Structural properness: from every state the goal is reachable through
    /// transitions that have positive probability under the policy.
    pub fn is_proper(&self, policy: &StationaryPolicy) -> bool {
        let n = self.num_states;
        let mut reaches = vec![false; n];
        let mut changed = true;
        while changed {
            changed = false;
            for s in 0..n {
                if reaches[s] {
                    continue;
                }
                let ok = (0..self.num_actions).any(|a| {
                    policy.prob(s, a) > 0.0 && {
                        let row = self.row(s, a);
                        row[n] > 0.0 || (0..n).any(|t| row[t] > 0.0 && reaches[t])
                    }
                });
                if ok {
                    reaches[s] = true;
                    changed = true;
                }
            }
        }
        reaches.into_iter().all(|r| r)
    }
}

/// Mean cost table `c[s][a]` with its global lower bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostFunction {
    num_states: usize,
    num_actions: usize,
    values: Vec<f64>,
    c_min: f64,
}

impl CostFunction {
    pub fn new(num_states: usize, num_actions: usize, values: Vec<f64>, c_min: f64) -> Result<Self> {
        if values.len() != num_states * num_actions {
            return Err(SspError::InvalidArgument(format!(
                "cost table has {} entries, expected {}",
                values.len(),
                num_states * num_actions
            )));
        }
        if !(0.0..=1.0).contains(&c_min) {
            return Err(SspError::InvalidArgument(format!("c_min = {c_min} outside [0, 1]")));
        }
        if let Some(bad) = values.iter().find(|&&c| !(c >= c_min - 1e-12 && c <= 1.0 + 1e-12)) {
            return Err(SspError::InvalidArgument(format!("cost {bad} outside [{c_min}, 1]")));
        }
        Ok(Self { num_states, num_actions, values, c_min })
    }

    pub fn constant(num_states: usize, num_actions: usize, value: f64) -> Self {
        Self { num_states, num_actions, values: vec![value; num_states * num_actions], c_min: 0.0 }
    }

    /// Cost table that is not restricted to `[c_min, 1]`; used for the hitting
    /// time (unit cost) and for auxiliary evaluations.
    pub fn unchecked(num_states: usize, num_actions: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), num_states * num_actions);
        Self { num_states, num_actions, values, c_min: 0.0 }
    }

    #[inline]
    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.num_actions + a]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn c_min(&self) -> f64 {
        self.c_min
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }
}

/// A stationary randomized policy `pi[s]` over actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryPolicy {
    num_states: usize,
    num_actions: usize,
    probs: Vec<f64>,
}

impl StationaryPolicy {
    pub fn new(num_states: usize, num_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != num_states * num_actions {
            return Err(SspError::InvalidArgument("policy table has the wrong size".into()));
        }
        for (s, row) in probs.chunks(num_actions).enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&p| p < 0.0 || !p.is_finite()) || (sum - 1.0).abs() > 1e-12 {
                return Err(SspError::InvalidArgument(format!("policy row {s} is not a distribution")));
            }
        }
        Ok(Self { num_states, num_actions, probs })
    }

    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        let p = 1.0 / num_actions as f64;
        Self { num_states, num_actions, probs: vec![p; num_states * num_actions] }
    }

    pub fn deterministic(num_actions: usize, actions: &[usize]) -> Self {
        let mut probs = vec![0.0; actions.len() * num_actions];
        for (s, &a) in actions.iter().enumerate() {
            probs[s * num_actions + a] = 1.0;
        }
        Self { num_states: actions.len(), num_actions, probs }
    }

    #[inline]
    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.num_actions + a]
    }

    #[inline]
    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.num_actions..(s + 1) * self.num_actions]
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// The action with probability one, if the row is deterministic.
    pub fn deterministic_action(&self, s: usize) -> Option<usize> {
        self.row(s).iter().position(|&p| p == 1.0)
    }
}

/// Value and action-value of a policy.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyValues {
    pub v: Vec<f64>,
    /// Flattened `[s][a]`.
    pub q: Vec<f64>,
    num_actions: usize,
}

impl PolicyValues {
    #[inline]
    pub fn q(&self, s: usize, a: usize) -> f64 {
        self.q[s * self.num_actions + a]
    }
}

fn check_dims(instance: &SspInstance, states: usize, actions: usize, what: &str) -> Result<()> {
    if states != instance.num_states() || actions != instance.num_actions() {
        return Err(SspError::InvalidArgument(format!("{what} dimensions do not match the instance")));
    }
    Ok(())
}

/// Evaluate a proper policy by fixed-point iteration.
pub fn policy_evaluation(
    instance: &SspInstance,
    policy: &StationaryPolicy,
    cost: &CostFunction,
) -> Result<PolicyValues> {
    check_dims(instance, policy.num_states(), policy.num_actions(), "policy")?;
    check_dims(instance, cost.num_states(), cost.num_actions(), "cost")?;
    if !instance.is_proper(policy) {
        return Err(SspError::NonProperPolicy("goal unreachable from some state".into()));
    }
    let (n, m) = (instance.num_states(), instance.num_actions());
    let mut v = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut converged = false;
    for _ in 0..VI_MAX_ITERATIONS {
        let mut change = 0.0_f64;
        let mut scale = 1.0_f64;
        for s in 0..n {
            let mut acc = 0.0;
            for a in 0..m {
                let p = policy.prob(s, a);
                if p > 0.0 {
                    acc += p * (cost.get(s, a) + instance.expect(s, a, &v));
                }
            }
            change = change.max((acc - v[s]).abs());
            scale = scale.max(acc.abs());
            next[s] = acc;
        }
        std::mem::swap(&mut v, &mut next);
        if scale > DIVERGENCE_THRESHOLD {
            return Err(SspError::NonProperPolicy("values diverged".into()));
        }
        if change <= VI_TOLERANCE * scale {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(SspError::NonProperPolicy("iteration cap reached".into()));
    }
    let mut q = vec![0.0; n * m];
    for s in 0..n {
        for a in 0..m {
            q[s * m + a] = cost.get(s, a) + instance.expect(s, a, &v);
        }
    }
    Ok(PolicyValues { v, q, num_actions: m })
}

/// Optimal value by Bellman-optimality value iteration, with a deterministic
/// greedy policy (ties toward the smallest action index).
pub fn optimal_proper_policy(
    instance: &SspInstance,
    cost: &CostFunction,
) -> Result<(StationaryPolicy, Vec<f64>)> {
    check_dims(instance, cost.num_states(), cost.num_actions(), "cost")?;
    let (n, m) = (instance.num_states(), instance.num_actions());
    let mut v = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut converged = false;
    for _ in 0..VI_MAX_ITERATIONS {
        let mut change = 0.0_f64;
        let mut scale = 1.0_f64;
        for s in 0..n {
            let best = (0..m)
                .map(|a| cost.get(s, a) + instance.expect(s, a, &v))
                .fold(f64::INFINITY, f64::min);
            change = change.max((best - v[s]).abs());
            scale = scale.max(best.abs());
            next[s] = best;
        }
        std::mem::swap(&mut v, &mut next);
        if scale > DIVERGENCE_THRESHOLD {
            return Err(SspError::NoProperPolicy("optimal values diverged".into()));
        }
        if change <= VI_TOLERANCE * scale {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(SspError::NoProperPolicy("iteration cap reached".into()));
    }

    let q = |s: usize, a: usize, v: &[f64]| cost.get(s, a) + instance.expect(s, a, v);
    let greedy: Vec<usize> = (0..n)
        .map(|s| {
            let mut best = 0;
            for a in 1..m {
                if q(s, a, &v) < q(s, best, &v) {
                    best = a;
                }
            }
            best
        })
        .collect();
    let policy = StationaryPolicy::deterministic(m, &greedy);
    if instance.is_proper(&policy) {
        return Ok((policy, v));
    }

    // Zero-cost cycles can make an improper action greedy. Fall back to
    // policy iteration from the fast policy, switching only on strict
    // improvement so that no improper cycle is ever adopted.
    let all = vec![vec![true; m]; n];
    let mut actions = restricted_fast_actions(instance, &all)?;
    for _ in 0..10_000 {
        let policy = StationaryPolicy::deterministic(m, &actions);
        let vals = policy_evaluation(instance, &policy, cost)
            .map_err(|_| SspError::NoProperPolicy("policy iteration left the proper set".into()))?;
        let mut changed = false;
        for s in 0..n {
            let current = vals.q(s, actions[s]);
            let mut best = actions[s];
            let mut best_val = current;
            for a in 0..m {
                let qa = vals.q(s, a);
                if qa < best_val - 1e-12 * (1.0 + current.abs()) {
                    best = a;
                    best_val = qa;
                }
            }
            if best != actions[s] {
                actions[s] = best;
                changed = true;
            }
        }
        if !changed {
            return Ok((policy, vals.v));
        }
    }
    Err(SspError::NoProperPolicy("policy iteration did not settle".into()))
}

/// Minimize the expected number of steps using only `allowed` actions.
fn restricted_fast_actions(instance: &SspInstance, allowed: &[Vec<bool>]) -> Result<Vec<usize>> {
    let (n, m) = (instance.num_states(), instance.num_actions());
    let mut v = vec![0.0; n];
    for _ in 0..VI_MAX_ITERATIONS {
        let mut change = 0.0_f64;
        let mut scale = 1.0_f64;
        let prev = v.clone();
        for s in 0..n {
            let best = (0..m)
                .filter(|&a| allowed[s][a])
                .map(|a| 1.0 + instance.expect(s, a, &prev))
                .fold(f64::INFINITY, f64::min);
            change = change.max((best - v[s]).abs());
            scale = scale.max(best.abs());
            v[s] = best;
        }
        if scale > DIVERGENCE_THRESHOLD {
            return Err(SspError::NoProperPolicy("restricted hitting time diverged".into()));
        }
        if change <= VI_TOLERANCE * scale {
            break;
        }
    }
    Ok((0..n)
        .map(|s| {
            let mut best = None;
            let mut best_val = f64::INFINITY;
            for a in (0..m).filter(|&a| allowed[s][a]) {
                let val = 1.0 + instance.expect(s, a, &v);
                if val < best_val {
                    best_val = val;
                    best = Some(a);
                }
            }
            best.unwrap_or(0)
        })
        .collect())
}

/// `T^pi(s)`: one plus the expected number of steps to reach the goal.
pub fn hitting_time(instance: &SspInstance, policy: &StationaryPolicy) -> Result<Vec<f64>> {
    let ones = CostFunction::unchecked(instance.num_states(), instance.num_actions(), vec![1.0; instance.num_states() * instance.num_actions()]);
    let values = policy_evaluation(instance, policy, &ones)?;
    Ok(values.v.into_iter().map(|steps| 1.0 + steps).collect())
}

/// The parameters that drive every schedule: `B*`, `T*`, `Tmax`, the
/// SSP-diameter `D` and the fast policy. All hitting times use the
/// one-plus-expected-steps convention.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyParams {
    pub b_star: f64,
    pub t_star: f64,
    pub t_max: f64,
    pub diameter: f64,
    pub fast_policy: StationaryPolicy,
    pub optimal_policy: StationaryPolicy,
    pub optimal_values: Vec<f64>,
}

pub fn key_params(instance: &SspInstance, cost: &CostFunction) -> Result<KeyParams> {
    let (pi_star, v_star) = optimal_proper_policy(instance, cost)?;
    let t = hitting_time(instance, &pi_star)?;
    let b_star = v_star.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let t_star = t[instance.init_state()];
    let t_max = t.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let ones = CostFunction::unchecked(instance.num_states(), instance.num_actions(), vec![1.0; instance.num_states() * instance.num_actions()]);
    let (fast_policy, steps) = optimal_proper_policy(instance, &ones)?;
    let diameter = steps.iter().map(|s| 1.0 + s).fold(f64::NEG_INFINITY, f64::max);

    if b_star < 1.0 {
        return Err(SspError::AssumptionViolation(format!("B* = {b_star} < 1")));
    }
    Ok(KeyParams { b_star, t_star, t_max, diameter, fast_policy, optimal_policy: pi_star, optimal_values: v_star })
}

/// Where an occupancy measure starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Start {
    Init,
    State(usize),
    StateAction(usize, usize),
}

/// Expected visit counts `q(s, a)` before reaching the goal.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyMeasure {
    pub state_action: Vec<f64>,
    num_actions: usize,
}

impl OccupancyMeasure {
    #[inline]
    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.state_action[s * self.num_actions + a]
    }

    pub fn state(&self, s: usize) -> f64 {
        self.state_action[s * self.num_actions..(s + 1) * self.num_actions].iter().sum()
    }

    /// `<q, c>`.
    pub fn inner(&self, cost: &CostFunction) -> f64 {
        self.state_action.iter().zip(cost.values()).map(|(q, c)| q * c).sum()
    }
}

/// Solve the flow equations `q(s') = 1{s' = start} + sum_{s,a} q(s,a) P(s'|s,a)`.
pub fn occupancy_measure(
    instance: &SspInstance,
    policy: &StationaryPolicy,
    start: Start,
) -> Result<OccupancyMeasure> {
    check_dims(instance, policy.num_states(), policy.num_actions(), "policy")?;
    if !instance.is_proper(policy) {
        return Err(SspError::NonProperPolicy("goal unreachable from some state".into()));
    }
    let (n, m) = (instance.num_states(), instance.num_actions());
    let mut seed = vec![0.0; n * m];
    match start {
        Start::Init | Start::State(_) => {
            let s0 = if let Start::State(s) = start { s } else { instance.init_state() };
            for a in 0..m {
                seed[s0 * m + a] = policy.prob(s0, a);
            }
        }
        Start::StateAction(s, a) => seed[s * m + a] = 1.0,
    }
    // Inflow z(s') from transitions; q(s,a) = seed(s,a) + pi(a|s) z(s).
    let mut z = vec![0.0; n];
    let mut q = seed.clone();
    let mut converged = false;
    for _ in 0..VI_MAX_ITERATIONS {
        let mut nz = vec![0.0; n];
        for s in 0..n {
            for a in 0..m {
                let w = q[s * m + a];
                if w == 0.0 {
                    continue;
                }
                for (t, p) in instance.row(s, a)[..n].iter().enumerate() {
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
        for s in 0..n {
            for a in 0..m {
                q[s * m + a] = seed[s * m + a] + policy.prob(s, a) * z[s];
            }
        }
        if scale > DIVERGENCE_THRESHOLD {
            return Err(SspError::NonProperPolicy("occupancy diverged".into()));
        }
        if change <= VI_TOLERANCE * scale {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(SspError::NonProperPolicy("iteration cap reached".into()));
    }
    Ok(OccupancyMeasure { state_action: q, num_actions: m })
}

/// Serialized form of an instance together with a cost table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceDocument {
    #[serde(default)]
    pub name: String,
    pub num_states: usize,
    pub num_actions: usize,
    pub init_state: usize,
    /// `transition[s][a]` has `num_states + 1` entries; the last is the goal.
    pub transition: Vec<Vec<Vec<f64>>>,
    /// `cost[s][a]`.
    pub cost: Vec<Vec<f64>>,
    pub c_min: f64,
}

impl InstanceDocument {
    pub fn from_parts(instance: &SspInstance, cost: &CostFunction) -> Self {
        let (n, m) = (instance.num_states(), instance.num_actions());
        Self {
            name: instance.name().to_string(),
            num_states: n,
            num_actions: m,
            init_state: instance.init_state(),
            transition: (0..n).map(|s| (0..m).map(|a| instance.row(s, a).to_vec()).collect()).collect(),
            cost: (0..n).map(|s| (0..m).map(|a| cost.get(s, a)).collect()).collect(),
            c_min: cost.c_min(),
        }
    }

    pub fn into_parts(self) -> Result<(SspInstance, CostFunction)> {
        if self.transition.len() != self.num_states || self.cost.len() != self.num_states {
            return Err(SspError::InvalidInstance("declared num_states does not match the tables".into()));
        }
        let instance = SspInstance::from_rows(&self.transition, self.init_state, self.name)?;
        if instance.num_actions() != self.num_actions {
            return Err(SspError::InvalidInstance("declared num_actions does not match the tables".into()));
        }
        let flat: Vec<f64> = self.cost.into_iter().flatten().collect();
        let cost = CostFunction::new(self.num_states, self.num_actions, flat, self.c_min)?;
        Ok((instance, cost))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance document serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| SspError::Parse(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_state(p_goal: f64) -> SspInstance {
        SspInstance::from_rows(&[vec![vec![1.0 - p_goal, p_goal]]], 0, "single").unwrap()
    }

    fn line2() -> SspInstance {
        SspInstance::from_rows(&[vec![vec![0.0, 1.0, 0.0]], vec![vec![0.0, 0.0, 1.0]]], 0, "line").unwrap()
    }

    #[test]
    fn single_step_reach() {
        let inst = single_state(1.0);
        let pol = StationaryPolicy::uniform(1, 1);
        let vals = policy_evaluation(&inst, &pol, &CostFunction::constant(1, 1, 0.5)).unwrap();
        assert!((vals.v[0] - 0.5).abs() < 1e-12);
        assert!((vals.q(0, 0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn geometric_self_loop() {
        let inst = single_state(0.5);
        let pol = StationaryPolicy::uniform(1, 1);
        let vals = policy_evaluation(&inst, &pol, &CostFunction::constant(1, 1, 1.0)).unwrap();
        assert!((vals.v[0] - 2.0).abs() < 1e-10);
        assert!((hitting_time(&inst, &pol).unwrap()[0] - 3.0).abs() < 1e-10);
        assert!((hitting_time(&single_state(1.0), &pol).unwrap()[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn line_optimal_values_and_params() {
        let inst = line2();
        let cost = CostFunction::constant(2, 1, 1.0);
        let (_, v) = optimal_proper_policy(&inst, &cost).unwrap();
        assert!((v[0] - 2.0).abs() < 1e-12 && (v[1] - 1.0).abs() < 1e-12);
        let kp = key_params(&inst, &cost).unwrap();
        assert!((kp.b_star - 2.0).abs() < 1e-12);
        assert!((kp.t_star - 3.0).abs() < 1e-12);
        assert!((kp.t_max - 3.0).abs() < 1e-12);
        assert!((kp.diameter - 3.0).abs() < 1e-12);
    }

    #[test]
    fn goal_adjacent_diameter_is_two() {
        let inst = single_state(1.0);
        let kp = key_params(&inst, &CostFunction::constant(1, 1, 1.0)).unwrap();
        assert!((kp.diameter - 2.0).abs() < 1e-12);
    }

    #[test]
    fn small_costs_violate_b_star_assumption() {
        let inst = single_state(1.0);
        let err = key_params(&inst, &CostFunction::constant(1, 1, 0.5)).unwrap_err();
        assert!(matches!(err, SspError::AssumptionViolation(_)));
    }

    #[test]
    fn improper_policy_is_rejected() {
        // Action 0 loops forever, action 1 exits.
        let inst = SspInstance::from_rows(&[vec![vec![1.0, 0.0], vec![0.0, 1.0]]], 0, "loop").unwrap();
        let pol = StationaryPolicy::deterministic(2, &[0]);
        let err = policy_evaluation(&inst, &pol, &CostFunction::constant(1, 2, 1.0)).unwrap_err();
        assert!(matches!(err, SspError::NonProperPolicy(_)));
        assert!(matches!(occupancy_measure(&inst, &pol, Start::Init), Err(SspError::NonProperPolicy(_))));
    }

    #[test]
    fn zero_cost_loop_does_not_win() {
        // Action 0 is a free self-loop; the only proper choice costs 1.
        let inst = SspInstance::from_rows(&[vec![vec![1.0, 0.0], vec![0.0, 1.0]]], 0, "free-loop").unwrap();
        let cost = CostFunction::new(1, 2, vec![0.0, 1.0], 0.0).unwrap();
        let (pi, _) = optimal_proper_policy(&inst, &cost).unwrap();
        assert_eq!(pi.deterministic_action(0), Some(1));
    }

    #[test]
    fn occupancy_of_line_and_loop() {
        let q = occupancy_measure(&line2(), &StationaryPolicy::uniform(2, 1), Start::Init).unwrap();
        assert!((q.state(0) - 1.0).abs() < 1e-12 && (q.state(1) - 1.0).abs() < 1e-12);
        let q = occupancy_measure(&single_state(0.5), &StationaryPolicy::uniform(1, 1), Start::Init).unwrap();
        assert!((q.state(0) - 2.0).abs() < 1e-10);
    }

    #[test]
    fn rejects_bad_rows() {
        assert!(SspInstance::from_rows(&[vec![vec![0.5, 0.4]]], 0, "x").is_err());
        assert!(SspInstance::from_rows(&[vec![vec![-0.5, 1.5]]], 0, "x").is_err());
        assert!(SspInstance::from_rows(&[vec![vec![0.5, 0.5]]], 1, "x").is_err());
    }

    #[test]
    fn document_roundtrip() {
        let inst = line2();
        let cost = CostFunction::constant(2, 1, 1.0);
        let doc = InstanceDocument::from_parts(&inst, &cost);
        let (i2, c2) = InstanceDocument::from_json(&doc.to_json()).unwrap().into_parts().unwrap();
        assert_eq!(inst, i2);
        assert_eq!(cost, c2);
    }
}
