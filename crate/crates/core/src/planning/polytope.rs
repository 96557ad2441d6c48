//! Linear optimization over one confidence row.
//!
//! A row has `2S + 1` variables: `S` stay masses, `S` advance masses and the
//! goal mass. Each has an interval, the stay group is capped by `gamma`, the
//! advance group by `1 - gamma`, and the total must equal one. The groups are
//! disjoint, so filling mass greedily in objective order is exact.

use crate::error::{Result, SspError};
use crate::sda::StackedRow;

const FEASIBILITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Min,
    Max,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolytopeRow {
    num_states: usize,
    gamma: f64,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl PolytopeRow {
    /// `lower`/`upper` are laid out as `[stay(0..S), advance(0..S), goal]`.
    pub fn new(num_states: usize, gamma: f64, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        assert_eq!(lower.len(), 2 * num_states + 1);
        assert_eq!(upper.len(), 2 * num_states + 1);
        Self { num_states, gamma, lower, upper }
    }

    /// The degenerate row holding exactly one stacked row.
    pub fn point(row: &StackedRow, gamma: f64) -> Self {
        let mut v: Vec<f64> = row.stay.iter().chain(&row.advance).copied().collect();
        v.push(row.goal);
        Self::new(row.stay.len(), gamma, v.clone(), v)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_vars(&self) -> usize {
        2 * self.num_states + 1
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Budget of the group a variable belongs to (goal is unbounded).
    #[inline]
    pub fn group(&self, var: usize) -> usize {
        if var < self.num_states {
            0
        } else if var < 2 * self.num_states {
            1
        } else {
            2
        }
    }

    pub fn caps(&self) -> [f64; 3] {
        [self.gamma, 1.0 - self.gamma, f64::INFINITY]
    }

    pub fn check_feasible(&self) -> Result<()> {
        let mut sums = [0.0; 3];
        let mut total_hi = 0.0;
        let mut group_hi = [0.0; 3];
        for i in 0..self.num_vars() {
            if self.lower[i] > self.upper[i] + FEASIBILITY_TOL {
                return Err(SspError::InfeasibleRow(format!("interval {i} is empty")));
            }
            sums[self.group(i)] += self.lower[i];
            group_hi[self.group(i)] += self.upper[i];
        }
        let caps = self.caps();
        for g in 0..3 {
            if sums[g] > caps[g] + FEASIBILITY_TOL {
                return Err(SspError::InfeasibleRow(format!("lower bounds exceed the cap of group {g}")));
            }
            total_hi += group_hi[g].min(caps[g]);
        }
        let lo_total: f64 = sums.iter().sum();
        if lo_total > 1.0 + FEASIBILITY_TOL {
            return Err(SspError::InfeasibleRow("lower bounds exceed total mass one".into()));
        }
        if total_hi < 1.0 - FEASIBILITY_TOL {
            return Err(SspError::InfeasibleRow("upper bounds cannot reach total mass one".into()));
        }
        Ok(())
    }

    /// Fill mass greedily following `order` (a permutation of the variables).
    /// The caller is responsible for the order matching the objective.
    pub fn fill_in_order(&self, order: &[usize], out: &mut [f64]) -> Result<()> {
        let caps = self.caps();
        let mut budget = [0.0; 3];
        let mut remaining = 1.0;
        for i in 0..self.num_vars() {
            out[i] = self.lower[i];
            budget[self.group(i)] += self.lower[i];
            remaining -= self.lower[i];
        }
        for g in 0..3 {
            budget[g] = caps[g] - budget[g];
            if budget[g] < -FEASIBILITY_TOL {
                return Err(SspError::InfeasibleRow(format!("lower bounds exceed the cap of group {g}")));
            }
        }
        if remaining < -FEASIBILITY_TOL {
            return Err(SspError::InfeasibleRow("lower bounds exceed total mass one".into()));
        }
        for &i in order {
            if remaining <= 0.0 {
                break;
            }
            let g = self.group(i);
            let add = (self.upper[i] - self.lower[i]).min(remaining).min(budget[g]).max(0.0);
            out[i] += add;
            budget[g] -= add;
            remaining -= add;
        }
        if remaining > FEASIBILITY_TOL {
            return Err(SspError::InfeasibleRow("upper bounds cannot reach total mass one".into()));
        }
        Ok(())
    }

    /// Optimal point and value of `objective . x` over the row.
    pub fn optimize(&self, objective: &[f64], sense: Sense) -> Result<(Vec<f64>, f64)> {
        assert_eq!(objective.len(), self.num_vars());
        let order = objective_order(objective, sense);
        let mut x = vec![0.0; self.num_vars()];
        self.fill_in_order(&order, &mut x)?;
        let value = x.iter().zip(objective).map(|(a, b)| a * b).sum();
        Ok((x, value))
    }

    /// Whether `x` satisfies every constraint within `tol`.
    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        if x.len() != self.num_vars() {
            return false;
        }
        let caps = self.caps();
        let mut sums = [0.0; 3];
        for i in 0..x.len() {
            if x[i] < self.lower[i] - tol || x[i] > self.upper[i] + tol {
                return false;
            }
            sums[self.group(i)] += x[i];
        }
        sums[0] <= caps[0] + tol && sums[1] <= caps[1] + tol && (sums.iter().sum::<f64>() - 1.0).abs() <= tol
    }
}

/// Variables sorted by objective: ascending for `Min`, descending for `Max`.
/// Ties keep the lower index first, so results are deterministic.
pub fn objective_order(objective: &[f64], sense: Sense) -> Vec<usize> {
    let mut order: Vec<usize> = (0..objective.len()).collect();
    sort_order(&mut order, objective, sense);
    order
}

/// Re-sort an existing permutation in place. Returns whether it changed.
pub fn sort_order(order: &mut [usize], objective: &[f64], sense: Sense) -> bool {
    let before: Vec<usize> = order.to_vec();
    match sense {
        Sense::Min => order.sort_by(|&i, &j| objective[i].total_cmp(&objective[j]).then(i.cmp(&j))),
        Sense::Max => order.sort_by(|&i, &j| objective[j].total_cmp(&objective[i]).then(i.cmp(&j))),
    }
    before != order
}

/// Split a flat point back into a stacked row.
pub fn to_stacked_row(x: &[f64], num_states: usize) -> StackedRow {
    StackedRow { stay: x[..num_states].to_vec(), advance: x[num_states..2 * num_states].to_vec(), goal: x[2 * num_states] }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_row_returns_its_point() {
        let row = StackedRow { stay: vec![0.45, 0.0], advance: vec![0.05, 0.0], goal: 0.5 };
        let p = PolytopeRow::point(&row, 0.9);
        let (x, _) = p.optimize(&[3.0, 1.0, 2.0, 7.0, 0.0], Sense::Min).unwrap();
        assert_eq!(x, vec![0.45, 0.0, 0.05, 0.0, 0.5]);
    }

    #[test]
    fn minimization_pushes_mass_to_cheapest() {
        // one state, wide intervals: stay in [0, 0.5], advance in [0, 0.5], goal in [0, 1]
        let p = PolytopeRow::new(1, 0.5, vec![0.0; 3], vec![0.5, 0.5, 1.0]);
        let (x, v) = p.optimize(&[1.0, 2.0, 0.0], Sense::Min).unwrap();
        assert_eq!(x, vec![0.0, 0.0, 1.0]);
        assert_eq!(v, 0.0);
        let (x, v) = p.optimize(&[1.0, 2.0, 0.0], Sense::Max).unwrap();
        assert_eq!(x, vec![0.5, 0.5, 0.0]);
        assert_eq!(v, 1.5);
    }

    #[test]
    fn caps_bind() {
        let p = PolytopeRow::new(2, 0.5, vec![0.0; 5], vec![1.0, 1.0, 1.0, 1.0, 0.0]);
        let (x, _) = p.optimize(&[5.0, 4.0, 1.0, 2.0, 0.0], Sense::Max).unwrap();
        assert_eq!(x, vec![0.5, 0.0, 0.0, 0.5, 0.0]);
        assert!(p.contains(&x, 1e-12));
    }

    #[test]
    fn infeasible_rows_are_rejected() {
        let low = PolytopeRow::new(1, 0.5, vec![0.0; 3], vec![0.1, 0.1, 0.1]);
        assert!(matches!(low.optimize(&[0.0; 3], Sense::Min), Err(SspError::InfeasibleRow(_))));
        assert!(low.check_feasible().is_err());
        let high = PolytopeRow::new(1, 0.5, vec![0.6, 0.0, 0.0], vec![0.6, 0.5, 1.0]);
        assert!(high.check_feasible().is_err());
    }
}
