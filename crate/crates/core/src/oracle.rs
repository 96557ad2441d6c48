//! Brute-force reference computations: dense linear solves, exhaustive
//! policy enumeration, polytope vertex enumeration and optimistic planning by
//! policy iteration over vertices. Slow and exact; meant for checking the
//! fast paths on small inputs.

use crate::planning::polytope::{PolytopeRow, Sense};
use crate::planning::ConfidencePolytopes;
use crate::sda::{LayeredTransition, StackedRow};
use crate::ssp::{CostFunction, SspInstance, StationaryPolicy};
use crate::table::{LayeredTable, LayeredValues};

/// Solve `A x = b` by Gaussian elimination with partial pivoting.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-14 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}

/// `V = (I - P_pi)^{-1} c_pi`; `None` when the system is singular.
pub fn evaluate_policy_dense(inst: &SspInstance, pi: &StationaryPolicy, cost: &CostFunction) -> Option<Vec<f64>> {
    let (n, m) = (inst.num_states(), inst.num_actions());
    let mut a = vec![vec![0.0; n]; n];
    let mut b = vec![0.0; n];
    for s in 0..n {
        a[s][s] += 1.0;
        for act in 0..m {
            let p = pi.prob(s, act);
            b[s] += p * cost.get(s, act);
            for t in 0..n {
                a[s][t] -= p * inst.prob(s, act, t);
            }
        }
    }
    let v = solve_dense(a, b)?;
    if v.iter().all(|x| x.is_finite() && *x >= -1e-9) {
        Some(v)
    } else {
        None
    }
}

/// Every deterministic policy as an action list.
pub fn deterministic_policies(num_states: usize, num_actions: usize) -> Vec<Vec<usize>> {
    let total = num_actions.pow(num_states as u32);
    (0..total)
        .map(|mut code| {
            (0..num_states)
                .map(|_| {
                    let a = code % num_actions;
                    code /= num_actions;
                    a
                })
                .collect()
        })
        .collect()
}

/// Pointwise minimum value over all proper deterministic policies.
pub fn best_deterministic_values(inst: &SspInstance, cost: &CostFunction) -> Option<Vec<f64>> {
    let mut best: Option<Vec<f64>> = None;
    for actions in deterministic_policies(inst.num_states(), inst.num_actions()) {
        let pi = StationaryPolicy::deterministic(inst.num_actions(), &actions);
        if !inst.is_proper(&pi) {
            continue;
        }
        if let Some(v) = evaluate_policy_dense(inst, &pi, cost) {
            best = Some(match best {
                None => v,
                Some(b) => b.iter().zip(&v).map(|(x, y)| x.min(*y)).collect(),
            });
        }
    }
    best
}

/// Exact stacked evaluation by one dense solve over all working states.
pub fn stacked_evaluate_dense(
    transition: &impl LayeredTransition,
    pi: &LayeredTable,
    cost: &LayeredTable,
) -> Option<(LayeredValues, LayeredTable)> {
    let (n, m, h) = (transition.num_states(), transition.num_actions(), transition.num_layers());
    let dim = n * h;
    let mut a = vec![vec![0.0; dim]; dim];
    let mut b = vec![0.0; dim];
    let terminal: Vec<f64> = (0..n).map(|s| (0..m).map(|x| pi.get(s, x, h) * cost.get(s, x, h)).sum()).collect();
    for l in 0..h {
        for s in 0..n {
            let i = l * n + s;
            a[i][i] += 1.0;
            for act in 0..m {
                let p = pi.get(s, act, l);
                if p == 0.0 {
                    continue;
                }
                let row = transition.row(s, act, l);
                b[i] += p * cost.get(s, act, l);
                for t in 0..n {
                    a[i][l * n + t] -= p * row.stay[t];
                    if l + 1 < h {
                        a[i][(l + 1) * n + t] -= p * row.advance[t];
                    } else {
                        b[i] += p * row.advance[t] * terminal[t];
                    }
                }
            }
        }
    }
    let x = solve_dense(a, b)?;
    let mut v = LayeredValues::zeros(n, h + 1);
    for l in 0..h {
        for s in 0..n {
            v.set(s, l, x[l * n + s]);
        }
    }
    for s in 0..n {
        v.set(s, h, terminal[s]);
    }
    let mut q = LayeredTable::zeros(n, m, h + 1);
    for l in 0..=h {
        for s in 0..n {
            for act in 0..m {
                let val = if l == h {
                    cost.get(s, act, h)
                } else {
                    cost.get(s, act, l) + transition.row(s, act, l).dot(v.layer(l), v.layer(l + 1))
                };
                q.set(s, act, l, val);
            }
        }
    }
    Some((v, q))
}

/// Stacked occupancy from `(init_state, 0)` by one dense solve of the flow
/// equations over all working states.
pub fn stacked_occupancy_dense(
    transition: &impl LayeredTransition,
    pi: &LayeredTable,
    init_state: usize,
) -> Option<LayeredTable> {
    let (n, m, h) = (transition.num_states(), transition.num_actions(), transition.num_layers());
    let dim = n * h;
    // a[t][s]: z(t) - sum_s z(s) * flow(s -> t) = seed(t)
    let mut a = vec![vec![0.0; dim]; dim];
    let mut b = vec![0.0; dim];
    b[init_state] = 1.0;
    let mut terminal_inflow = vec![0.0; n];
    for l in 0..h {
        for s in 0..n {
            let i = l * n + s;
            a[i][i] += 1.0;
        }
    }
    for l in 0..h {
        for s in 0..n {
            for act in 0..m {
                let p = pi.get(s, act, l);
                if p == 0.0 {
                    continue;
                }
                let row = transition.row(s, act, l);
                for t in 0..n {
                    a[l * n + t][l * n + s] -= p * row.stay[t];
                    if l + 1 < h {
                        a[(l + 1) * n + t][l * n + s] -= p * row.advance[t];
                    }
                }
            }
        }
    }
    let z = solve_dense(a, b)?;
    for s in 0..n {
        for act in 0..m {
            let w = z[(h - 1) * n + s] * pi.get(s, act, h - 1);
            let row = transition.row(s, act, h - 1);
            for t in 0..n {
                terminal_inflow[t] += w * row.advance[t];
            }
        }
    }
    Some(LayeredTable::from_fn(n, m, h + 1, |s, act, l| {
        let visits = if l < h { z[l * n + s] } else { terminal_inflow[s] };
        visits * pi.get(s, act, l)
    }))
}

/// Every vertex of a confidence row (possibly with duplicates and a few
/// extra feasible points). Exponential in the row size.
pub fn polytope_vertices(row: &PolytopeRow) -> Vec<Vec<f64>> {
    let nv = row.num_vars();
    let caps = row.caps();
    let mut out = Vec::new();
    // a vertex has at most three coordinates strictly inside their bounds:
    // one per binding equality (total mass and the two group caps)
    for free_mask in 0u32..(1 << nv) {
        let free: Vec<usize> = (0..nv).filter(|i| free_mask & (1 << i) != 0).collect();
        if free.len() > 3 {
            continue;
        }
        let fixed: Vec<usize> = (0..nv).filter(|i| free_mask & (1 << i) == 0).collect();
        for bound_mask in 0u32..(1 << fixed.len()) {
            let mut x = vec![0.0; nv];
            for (j, &i) in fixed.iter().enumerate() {
                x[i] = if bound_mask & (1 << j) != 0 { row.upper()[i] } else { row.lower()[i] };
            }
            // candidate equation sets: total mass plus any subset of the caps
            for cap_mask in 0u32..4 {
                let mut eqs: Vec<(Vec<f64>, f64)> = Vec::new();
                let total_fixed: f64 = fixed.iter().map(|&i| x[i]).sum();
                eqs.push((vec![1.0; free.len()], 1.0 - total_fixed));
                for g in 0..2 {
                    if cap_mask & (1 << g) != 0 {
                        let coeffs: Vec<f64> = free.iter().map(|&i| if row.group(i) == g { 1.0 } else { 0.0 }).collect();
                        let fixed_g: f64 = fixed.iter().filter(|&&i| row.group(i) == g).map(|&i| x[i]).sum();
                        eqs.push((coeffs, caps[g] - fixed_g));
                    }
                }
                if eqs.len() != free.len() && !free.is_empty() {
                    continue;
                }
                let mut y = x.clone();
                if !free.is_empty() {
                    let a: Vec<Vec<f64>> = eqs.iter().map(|e| e.0.clone()).collect();
                    let b: Vec<f64> = eqs.iter().map(|e| e.1).collect();
                    match solve_dense(a, b) {
                        Some(sol) => {
                            for (k, &i) in free.iter().enumerate() {
                                y[i] = sol[k];
                            }
                        }
                        None => continue,
                    }
                }
                if row.contains(&y, 1e-11) {
                    out.push(y);
                }
                if free.is_empty() {
                    break;
                }
            }
        }
    }
    out
}

/// Exhaustive LP: best objective value over all vertices.
pub fn lp_brute_force(row: &PolytopeRow, objective: &[f64], sense: Sense) -> Option<f64> {
    let vals = polytope_vertices(row).into_iter().map(|x| x.iter().zip(objective).map(|(a, b)| a * b).sum::<f64>());
    match sense {
        Sense::Min => vals.reduce(f64::min),
        Sense::Max => vals.reduce(f64::max),
    }
}

/// Explicit choice of one vertex per `(s, a, l)`.
struct VertexKernel<'a> {
    n: usize,
    m: usize,
    h: usize,
    vertices: &'a [Vec<Vec<f64>>],
    choice: &'a [usize],
}

impl LayeredTransition for VertexKernel<'_> {
    fn num_states(&self) -> usize {
        self.n
    }
    fn num_actions(&self) -> usize {
        self.m
    }
    fn num_layers(&self) -> usize {
        self.h
    }
    fn row_into(&self, s: usize, a: usize, layer: usize, out: &mut StackedRow) {
        let x = &self.vertices[s * self.m + a][self.choice[(layer * self.n + s) * self.m + a]];
        out.stay.copy_from_slice(&x[..self.n]);
        out.advance.copy_from_slice(&x[self.n..2 * self.n]);
        out.goal = x[2 * self.n];
    }
}

/// Optimistic (or pessimistic) values of `pi` over all members of the set,
/// by policy iteration on vertex choices with exact dense evaluation.
pub fn optimistic_q_brute_force(
    pi: &LayeredTable,
    polys: &ConfidencePolytopes,
    cost: &LayeredTable,
    sense: Sense,
) -> Option<LayeredTable> {
    let (n, m, h) = (pi.num_states(), pi.num_actions(), pi.num_layers() - 1);
    let vertices: Vec<Vec<Vec<f64>>> =
        (0..n).flat_map(|s| (0..m).map(move |a| (s, a))).map(|(s, a)| polytope_vertices(polys.row(s, a))).collect();
    if vertices.iter().any(|v| v.is_empty()) {
        return None;
    }
    let mut choice = vec![0usize; n * m * h];
    for _ in 0..1000 {
        let kernel = VertexKernel { n, m, h, vertices: &vertices, choice: &choice };
        let (v, q) = stacked_evaluate_dense(&kernel, pi, cost)?;
        let mut changed = false;
        for l in 0..h {
            for s in 0..n {
                for a in 0..m {
                    let idx = (l * n + s) * m + a;
                    let score = |x: &Vec<f64>| -> f64 {
                        (0..n).map(|t| x[t] * v.get(t, l) + x[n + t] * v.get(t, l + 1)).sum()
                    };
                    let current = score(&vertices[s * m + a][choice[idx]]);
                    let mut best = choice[idx];
                    let mut best_val = current;
                    for (j, x) in vertices[s * m + a].iter().enumerate() {
                        let val = score(x);
                        let better = match sense {
                            Sense::Min => val < best_val - 1e-12,
                            Sense::Max => val > best_val + 1e-12,
                        };
                        if better {
                            best = j;
                            best_val = val;
                        }
                    }
                    if best != choice[idx] {
                        choice[idx] = best;
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            return Some(q);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_solver() {
        let x = solve_dense(vec![vec![2.0, 1.0], vec![1.0, 3.0]], vec![3.0, 5.0]).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-12 && (x[1] - 1.4).abs() < 1e-12);
        assert!(solve_dense(vec![vec![1.0, 1.0], vec![1.0, 1.0]], vec![1.0, 1.0]).is_none());
    }

    #[test]
    fn simplex_vertices() {
        // one state, caps not binding: stay in [0, .5], advance in [0, .5], goal in [0, 1]
        let row = PolytopeRow::new(1, 0.5, vec![0.0; 3], vec![0.5, 0.5, 1.0]);
        let v = polytope_vertices(&row);
        for corner in [vec![0.0, 0.0, 1.0], vec![0.5, 0.5, 0.0], vec![0.5, 0.0, 0.5], vec![0.0, 0.5, 0.5]] {
            assert!(v.iter().any(|x| x.iter().zip(&corner).all(|(a, b)| (a - b).abs() < 1e-12)), "{corner:?}");
        }
    }

    #[test]
    fn policy_count() {
        assert_eq!(deterministic_policies(3, 2).len(), 8);
    }
}
