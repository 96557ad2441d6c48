//! Extended value iteration on the stacked state space.
//!
//! Layers only feed the layer below them, so every solve runs backward over
//! layers and iterates a `(1 + rho) * gamma`-contraction inside each layer.
//! All rows of one layer share the objective `(V_l, V_{l+1}, 0)`, so the sort
//! order is computed once per sweep and greedy points are rebuilt only when
//! that order changes.

use crate::error::{Result, SspError};
use crate::estimation::TransitionConfSet;
use crate::planning::polytope::{sort_order, to_stacked_row, PolytopeRow, Sense};
use crate::sda::{ExplicitKernel, StackedRow};
use crate::ssp::SspInstance;
use crate::table::{LayeredTable, LayeredValues};

/// One polytope per base pair, shared by all working layers.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidencePolytopes {
    num_states: usize,
    num_actions: usize,
    gamma: f64,
    rows: Vec<PolytopeRow>,
}

impl ConfidencePolytopes {
    pub fn from_conf(conf: &TransitionConfSet) -> Result<Self> {
        let (n, m) = (conf.num_states(), conf.num_actions());
        let mut rows = Vec::with_capacity(n * m);
        for s in 0..n {
            for a in 0..m {
                let row = conf.polytope_row(s, a);
                row.check_feasible().map_err(|e| match e {
                    SspError::InfeasibleRow(msg) => SspError::InfeasibleRow(format!("({s}, {a}): {msg}")),
                    other => other,
                })?;
                rows.push(row);
            }
        }
        Ok(Self { num_states: n, num_actions: m, gamma: conf.gamma(), rows })
    }

    /// The set containing only the true stacked transition.
    pub fn singleton(instance: &SspInstance, gamma: f64) -> Self {
        let (n, m) = (instance.num_states(), instance.num_actions());
        let mut rows = Vec::with_capacity(n * m);
        for s in 0..n {
            for a in 0..m {
                let p = instance.row(s, a);
                let row = StackedRow {
                    stay: p[..n].iter().map(|x| gamma * x).collect(),
                    advance: p[..n].iter().map(|x| (1.0 - gamma) * x).collect(),
                    goal: p[n],
                };
                rows.push(PolytopeRow::point(&row, gamma));
            }
        }
        Self { num_states: n, num_actions: m, gamma, rows }
    }

    pub fn from_rows(num_states: usize, num_actions: usize, gamma: f64, rows: Vec<PolytopeRow>) -> Result<Self> {
        if rows.len() != num_states * num_actions || rows.iter().any(|r| r.num_states() != num_states) {
            return Err(SspError::InvalidArgument("polytope rows do not match the shape".into()));
        }
        for r in &rows {
            r.check_feasible()?;
        }
        Ok(Self { num_states, num_actions, gamma, rows })
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
    pub fn row(&self, s: usize, a: usize) -> &PolytopeRow {
        &self.rows[s * self.num_actions + a]
    }
}

/// Result of a layered optimistic solve.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanOutput {
    pub q: LayeredTable,
    pub v: LayeredValues,
    /// The optimizing member rows, one per `(s, a, l < H)`.
    pub transition: ExplicitKernel,
    /// Total number of sweeps over all layers.
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DilatedBonusTable {
    pub bonus: LayeredTable,
    pub dilated: LayeredTable,
    pub rho: f64,
    pub transition: ExplicitKernel,
    pub iterations: usize,
}

struct LayerSolution {
    v: Vec<f64>,
    q: Vec<f64>,
    points: Vec<Vec<f64>>,
    iterations: usize,
}

struct LayerProblem<'a> {
    polys: &'a ConfidencePolytopes,
    policy: &'a LayeredTable,
    layer: usize,
    cost: &'a dyn Fn(usize, usize) -> f64,
    next: &'a [f64],
    /// `1 + rho`.
    scale: f64,
    sense: Sense,
    tolerance: f64,
    /// A pair whose action-value is its cost alone (absorbed after it).
    absorbing: Option<(usize, usize)>,
}

impl LayerProblem<'_> {
    fn solve(&self) -> Result<LayerSolution> {
        let (n, m) = (self.polys.num_states, self.polys.num_actions);
        let nv = 2 * n + 1;
        let contraction = self.scale * self.polys.gamma;
        let mut cost_norm = 0.0_f64;
        for s in 0..n {
            for a in 0..m {
                cost_norm = cost_norm.max((self.cost)(s, a).abs());
            }
        }
        let next_norm = self.next.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()));
        let magnitude = (cost_norm + self.scale * (1.0 - self.polys.gamma) * next_norm) / (1.0 - contraction);
        let cap = if magnitude > self.tolerance {
            ((magnitude / self.tolerance).ln() / (1.0 - contraction)).ceil() as usize + 1
        } else {
            1
        };

        let mut objective = vec![0.0; nv];
        objective[n..2 * n].copy_from_slice(self.next);
        let mut order: Vec<usize> = (0..nv).collect();
        let mut points = vec![vec![0.0; nv]; n * m];
        let mut cur = vec![0.0; n];
        let mut nxt = vec![0.0; n];
        let mut q = vec![0.0; n * m];
        let mut first = true;
        let mut iterations = 0;
        loop {
            objective[..n].copy_from_slice(&cur);
            let changed = sort_order(&mut order, &objective, self.sense);
            if changed || first {
                for (i, pt) in points.iter_mut().enumerate() {
                    self.polys.rows[i].fill_in_order(&order, pt)?;
                }
                first = false;
            }
            let mut change = 0.0_f64;
            for s in 0..n {
                let pi = self.policy.row(s, self.layer);
                let mut acc = 0.0;
                for a in 0..m {
                    let i = s * m + a;
                    let qa = if self.absorbing == Some((s, a)) {
                        (self.cost)(s, a)
                    } else {
                        let cont: f64 = points[i].iter().zip(&objective).map(|(x, o)| x * o).sum();
                        (self.cost)(s, a) + self.scale * cont
                    };
                    q[i] = qa;
                    acc += pi[a] * qa;
                }
                change = change.max((acc - cur[s]).abs());
                nxt[s] = acc;
            }
            std::mem::swap(&mut cur, &mut nxt);
            iterations += 1;
            if !change.is_finite() {
                return Err(SspError::NoConvergence(format!("non-finite values in layer {}", self.layer)));
            }
            if change * contraction / (1.0 - contraction) <= self.tolerance || iterations >= cap {
                break;
            }
        }
        // q holds the backup of the previous iterate; `cur` is its policy average.
        Ok(LayerSolution { v: cur, q, points, iterations })
    }
}

fn check_shapes(pi: &LayeredTable, polys: &ConfidencePolytopes, table: &LayeredTable) -> Result<()> {
    if pi.num_states() != polys.num_states || pi.num_actions() != polys.num_actions {
        return Err(SspError::InvalidArgument("policy shape does not match the confidence set".into()));
    }
    if pi.num_layers() < 2 {
        return Err(SspError::InvalidArgument("need at least one working layer".into()));
    }
    if !pi.same_shape(table) {
        return Err(SspError::InvalidArgument("cost shape does not match the policy".into()));
    }
    Ok(())
}

fn layered_solve(
    pi: &LayeredTable,
    polys: &ConfidencePolytopes,
    cost: &LayeredTable,
    rho: f64,
    sense: Sense,
    epsilon: f64,
) -> Result<PlanOutput> {
    check_shapes(pi, polys, cost)?;
    if !(epsilon > 0.0) {
        return Err(SspError::InvalidArgument(format!("accuracy {epsilon} must be positive")));
    }
    let scale = 1.0 + rho;
    let contraction = scale * polys.gamma;
    if contraction >= 1.0 {
        return Err(SspError::DilationTooLarge(contraction));
    }
    let (n, m) = (polys.num_states, polys.num_actions);
    let h = pi.num_layers() - 1;
    let ratio = (scale * (1.0 - polys.gamma) / (1.0 - contraction)).max(1.0);
    let tolerance = epsilon / (2.0 * h as f64 * ratio.powi(h as i32));

    let mut q = LayeredTable::zeros(n, m, h + 1);
    let mut v = LayeredValues::zeros(n, h + 1);
    for s in 0..n {
        let mut acc = 0.0;
        for a in 0..m {
            let c = cost.get(s, a, h);
            q.set(s, a, h, c);
            acc += pi.get(s, a, h) * c;
        }
        v.set(s, h, acc);
    }
    let mut kernel_points: Vec<Vec<Vec<f64>>> = vec![Vec::new(); h];
    let mut iterations = 0;
    for l in (0..h).rev() {
        let next = v.layer(l + 1).to_vec();
        let cost_l = |s: usize, a: usize| cost.get(s, a, l);
        let sol = LayerProblem {
            polys,
            policy: pi,
            layer: l,
            cost: &cost_l,
            next: &next,
            scale,
            sense,
            tolerance,
            absorbing: None,
        }
        .solve()?;
        iterations += sol.iterations;
        for s in 0..n {
            let mut acc = 0.0;
            for a in 0..m {
                let qa = sol.q[s * m + a];
                q.set(s, a, l, qa);
                acc += pi.get(s, a, l) * qa;
            }
            v.set(s, l, acc);
        }
        kernel_points[l] = sol.points;
    }
    let transition = ExplicitKernel::from_fn(n, m, h, |s, a, l| to_stacked_row(&kernel_points[l][s * m + a], n));
    Ok(PlanOutput { q, v, transition, iterations })
}

/// Action-values of `pi` under the most favourable member of the set
/// (lowest cost), accurate to `epsilon`.
pub fn optimistic_q(
    pi: &LayeredTable,
    polys: &ConfidencePolytopes,
    cost: &LayeredTable,
    epsilon: f64,
) -> Result<PlanOutput> {
    layered_solve(pi, polys, cost, 0.0, Sense::Min, epsilon)
}

/// Same solve with an explicit direction and dilation, for diagnostics.
pub fn extended_value_iteration(
    pi: &LayeredTable,
    polys: &ConfidencePolytopes,
    cost: &LayeredTable,
    rho: f64,
    sense: Sense,
    epsilon: f64,
) -> Result<PlanOutput> {
    layered_solve(pi, polys, cost, rho, sense, epsilon)
}

/// Fixed point of the dilated operator with the max over the set and
/// dilation `1 / dilation_horizon`.
pub fn dilated_bonus(
    pi: &LayeredTable,
    polys: &ConfidencePolytopes,
    bonus: &LayeredTable,
    dilation_horizon: f64,
    epsilon: f64,
) -> Result<DilatedBonusTable> {
    if bonus.as_slice().iter().any(|&b| b < 0.0) {
        return Err(SspError::InvalidArgument("bonus must be non-negative".into()));
    }
    if !(dilation_horizon > 0.0) {
        return Err(SspError::InvalidArgument("dilation horizon must be positive".into()));
    }
    let rho = 1.0 / dilation_horizon;
    let out = layered_solve(pi, polys, bonus, rho, Sense::Max, epsilon)?;
    Ok(DilatedBonusTable {
        bonus: bonus.clone(),
        dilated: out.q,
        rho,
        transition: out.transition,
        iterations: out.iterations,
    })
}

/// Upper and lower ever-visit probabilities of one `(s, a, l)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisitBounds {
    pub upper: f64,
    pub lower: f64,
}

const VISIT_ACCURACY: f64 = 1e-10;

fn reach_value(
    pi: &LayeredTable,
    polys: &ConfidencePolytopes,
    init_state: usize,
    target: (usize, usize, usize),
    sense: Sense,
) -> Result<f64> {
    let n = polys.num_states;
    let (ts, ta, tl) = target;
    let mut next = vec![0.0; n];
    let tolerance = VISIT_ACCURACY / (tl + 1) as f64;
    for l in (0..=tl).rev() {
        let cost_l = |s: usize, a: usize| if l == tl && s == ts && a == ta { 1.0 } else { 0.0 };
        let sol = LayerProblem {
            polys,
            policy: pi,
            layer: l,
            cost: &cost_l,
            next: &next,
            scale: 1.0,
            sense,
            tolerance,
            absorbing: if l == tl { Some((ts, ta)) } else { None },
        }
        .solve()?;
        next = sol.v;
    }
    Ok(next[init_state].clamp(0.0, 1.0))
}

/// Largest and smallest probability over the set that `(s, a, l)` is ever
/// taken when starting from `(init_state, 0)`. `l` must be a working layer.
pub fn visit_prob_bounds(
    pi: &LayeredTable,
    polys: &ConfidencePolytopes,
    init_state: usize,
    target: (usize, usize, usize),
) -> Result<VisitBounds> {
    if pi.num_states() != polys.num_states || pi.num_actions() != polys.num_actions {
        return Err(SspError::InvalidArgument("policy shape does not match the confidence set".into()));
    }
    let (s, a, l) = target;
    if s >= polys.num_states || a >= polys.num_actions || l + 1 >= pi.num_layers() {
        return Err(SspError::InvalidArgument(format!("target ({s}, {a}, {l}) is not a working triple")));
    }
    let upper = reach_value(pi, polys, init_state, target, Sense::Max)?;
    let lower = reach_value(pi, polys, init_state, target, Sense::Min)?;
    Ok(VisitBounds { upper, lower: lower.min(upper) })
}

/// Bounds for every working triple, as `(upper, lower)` tables whose
/// terminal layer is zero.
pub fn visit_bounds_all(
    pi: &LayeredTable,
    polys: &ConfidencePolytopes,
    init_state: usize,
) -> Result<(LayeredTable, LayeredTable)> {
    let (n, m, layers) = (pi.num_states(), pi.num_actions(), pi.num_layers());
    let mut upper = LayeredTable::zeros(n, m, layers);
    let mut lower = LayeredTable::zeros(n, m, layers);
    for l in 0..layers - 1 {
        for s in 0..n {
            for a in 0..m {
                let b = visit_prob_bounds(pi, polys, init_state, (s, a, l))?;
                upper.set(s, a, l, b.upper);
                lower.set(s, a, l, b.lower);
            }
        }
    }
    Ok((upper, lower))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sda::{stacked_policy_evaluation, uniform_layered_policy, StackedMdp};

    fn instance() -> SspInstance {
        SspInstance::from_rows(
            &[vec![vec![0.2, 0.5, 0.3], vec![0.6, 0.1, 0.3]], vec![vec![0.3, 0.3, 0.4], vec![0.0, 0.5, 0.5]]],
            0,
            "t",
        )
        .unwrap()
    }

    #[test]
    fn singleton_matches_exact_evaluation() {
        let inst = instance();
        let (gamma, h) = (0.8, 3);
        let polys = ConfidencePolytopes::singleton(&inst, gamma);
        let pi = uniform_layered_policy(2, 2, h);
        let cost = LayeredTable::from_fn(2, 2, h + 1, |s, a, l| if l == h { 5.0 } else { 0.1 + 0.2 * (s + a) as f64 });
        let out = optimistic_q(&pi, &polys, &cost, 1e-6).unwrap();
        let exact = stacked_policy_evaluation(&StackedMdp::new(&inst, gamma, h), &pi, &cost).unwrap();
        for (x, y) in out.q.as_slice().iter().zip(exact.q.as_slice()) {
            assert!((x - y).abs() <= 1e-6, "{x} vs {y}");
        }
    }

    #[test]
    fn zero_cost_gives_zero() {
        let inst = instance();
        let polys = ConfidencePolytopes::singleton(&inst, 0.5);
        let pi = uniform_layered_policy(2, 2, 2);
        let out = optimistic_q(&pi, &polys, &LayeredTable::zeros(2, 2, 3), 1e-3).unwrap();
        assert_eq!(out.q.max_abs(), 0.0);
        let b = dilated_bonus(&pi, &polys, &LayeredTable::zeros(2, 2, 3), 100.0, 1e-3).unwrap();
        assert_eq!(b.dilated.max_abs(), 0.0);
    }

    #[test]
    fn dilation_limit_is_checked() {
        let inst = instance();
        let polys = ConfidencePolytopes::singleton(&inst, 0.9);
        let pi = uniform_layered_policy(2, 2, 1);
        let err = dilated_bonus(&pi, &polys, &LayeredTable::zeros(2, 2, 2), 5.0, 1e-3);
        assert!(matches!(err, Err(SspError::DilationTooLarge(_))));
    }

    #[test]
    fn first_step_is_always_visited() {
        let inst = instance();
        let polys = ConfidencePolytopes::singleton(&inst, 0.7);
        let pi = LayeredTable::from_fn(2, 2, 3, |_, a, _| if a == 1 { 1.0 } else { 0.0 });
        let b = visit_prob_bounds(&pi, &polys, 0, (0, 1, 0)).unwrap();
        assert!((b.upper - 1.0).abs() < 1e-12 && (b.lower - 1.0).abs() < 1e-12);
    }
}
