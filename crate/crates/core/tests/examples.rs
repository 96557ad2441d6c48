//! Worked examples checked against independent oracles: dense linear solves,
//! Monte-Carlo simulation and brute-force enumeration.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ssp_po::env::{line, random_ssp, NoiseModel, Simulator};
use ssp_po::episode::{sample_index, EpisodeEnvironment};
use ssp_po::harness::{run_experiment, ExperimentConfig};
use ssp_po::oracle::{polytope_vertices, stacked_evaluate_dense};
use ssp_po::planning::{
    dilated_bonus, extended_value_iteration, optimistic_q, visit_prob_bounds, ConfidencePolytopes, Sense,
};
use ssp_po::po::corrected_cost;
use ssp_po::sda::{
    mirror_policy, sigma_execute, stacked_cost, stacked_occupancy, stacked_policy_evaluation, visit_and_return,
    ExplicitKernel, SdaParams, StackedMdp, StackedStart,
};
use ssp_po::planning::polytope::to_stacked_row;
use ssp_po::ssp::{
    hitting_time, key_params, occupancy_measure, policy_evaluation, SspInstance, Start, StationaryPolicy,
};
use ssp_po::estimation::TransitionConfSet;
use ssp_po::table::LayeredTable;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_policy(n: usize, m: usize, r: &mut impl Rng) -> StationaryPolicy {
    let probs: Vec<f64> = (0..n)
        .flat_map(|_| {
            let w: Vec<f64> = (0..m).map(|_| r.gen_range(0.1..1.0)).collect();
            let t: f64 = w.iter().sum();
            w.into_iter().map(move |x| x / t)
        })
        .collect();
    StationaryPolicy::new(n, m, probs).unwrap()
}

fn random_layered(n: usize, m: usize, layers: usize, r: &mut impl Rng) -> LayeredTable {
    let mut t = LayeredTable::from_fn(n, m, layers, |_, _, _| r.gen_range(0.05..1.0));
    for l in 0..layers {
        for s in 0..n {
            let row = t.row_mut(s, l);
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= total);
        }
    }
    t
}

/// Mean and standard error.
fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Run the base instance under `pi` and return per-episode step counts and
/// visit counts per `(s, a)`.
fn simulate(inst: &SspInstance, pi: &StationaryPolicy, episodes: usize, seed: u64) -> (Vec<f64>, Vec<Vec<f64>>) {
    let (n, m) = (inst.num_states(), inst.num_actions());
    let mut sim = Simulator::new(inst, None);
    let mut r = rng(seed);
    let mut lengths = Vec::with_capacity(episodes);
    let mut visits = vec![Vec::with_capacity(episodes); n * m];
    for _ in 0..episodes {
        let mut count = vec![0.0; n * m];
        let mut s = sim.init_state();
        let mut steps = 0.0;
        while s != sim.goal() {
            let a = sample_index(pi.row(s), &mut r);
            count[s * m + a] += 1.0;
            s = sim.step(s, a, &mut r).unwrap().next;
            steps += 1.0;
        }
        lengths.push(steps);
        for (v, c) in visits.iter_mut().zip(count) {
            v.push(c);
        }
    }
    (lengths, visits)
}

#[test]
fn policy_evaluation_matches_linear_solve() {
    let mut r = rng(1);
    for _ in 0..20 {
        let (n, m) = (r.gen_range(1..6), r.gen_range(1..4));
        let (inst, cost) = random_ssp(n, m, r.gen_range(0.05..0.3), 0.0, &mut r).unwrap();
        let pi = random_policy(n, m, &mut r);
        let a = DMatrix::from_fn(n, n, |i, j| {
            let flow: f64 = (0..m).map(|b| pi.prob(i, b) * inst.prob(i, b, j)).sum();
            if i == j { 1.0 - flow } else { -flow }
        });
        let c = DVector::from_fn(n, |i, _| (0..m).map(|b| pi.prob(i, b) * cost.get(i, b)).sum());
        let exact = a.lu().solve(&c).unwrap();
        let values = policy_evaluation(&inst, &pi, &cost).unwrap();
        for s in 0..n {
            approx::assert_abs_diff_eq!(values.v[s], exact[s], epsilon = 1e-8);
        }
    }
}

#[test]
fn line_parameters() {
    let (inst, cost) = line(2).unwrap();
    let kp = key_params(&inst, &cost).unwrap();
    assert_eq!((kp.b_star, kp.t_star, kp.t_max, kp.diameter), (2.0, 3.0, 3.0, 3.0));
    let (inst, cost) = line(1).unwrap();
    assert_eq!(key_params(&inst, &cost).unwrap().diameter, 2.0);
}

#[test]
fn hitting_time_and_occupancy_match_simulation() {
    let mut r = rng(2);
    let (inst, _) = random_ssp(3, 2, 0.2, 0.0, &mut r).unwrap();
    let pi = random_policy(3, 2, &mut r);
    let (lengths, visits) = simulate(&inst, &pi, 40_000, 3);

    let t = hitting_time(&inst, &pi).unwrap()[inst.init_state()];
    let (mean, se) = mean_se(&lengths);
    assert!((mean + 1.0 - t).abs() <= 4.0 * se, "hitting time {t} vs {} +- {se}", mean + 1.0);

    let q = occupancy_measure(&inst, &pi, Start::Init).unwrap();
    for s in 0..3 {
        for a in 0..2 {
            let (mean, se) = mean_se(&visits[s * 2 + a]);
            assert!((mean - q.get(s, a)).abs() <= 4.0 * se, "q({s},{a}) = {} vs {mean} +- {se}", q.get(s, a));
        }
    }
}

#[test]
fn learning_params_example() {
    let p = SdaParams::new(100, 0.1, 2.0, 4.0).unwrap();
    approx::assert_abs_diff_eq!(p.gamma, 0.875, epsilon = 1e-15);
    assert_eq!(p.terminal_cost, 61.0);
    assert_eq!(p.num_layers, 13);
}

#[test]
fn layer_advances_are_geometric() {
    // One state with goal probability q per step. Each step on layer 0 either
    // ends the episode or, failing that, advances with probability 1 - gamma,
    // so the dwell before an advance is geometric with ratio (1 - q) gamma.
    let q = 0.02;
    let inst = SspInstance::from_rows(&[vec![vec![1.0 - q, q]]], 0, "loop").unwrap();
    let params = SdaParams::with_terminal_cost(4, 0.1, 2.0, 1.0).unwrap();
    let pi = LayeredTable::filled(1, 1, params.table_layers(), 1.0);
    let fast = StationaryPolicy::uniform(1, 1);
    let mut sim = Simulator::new(&inst, None);
    let mut r = rng(4);
    let stay = (1.0 - q) * params.gamma;
    let advance = (1.0 - q) * (1.0 - params.gamma);
    // Bins: advance after 1..=8 steps, advance after more, goal first.
    let bins = 10;
    let mut observed = vec![0.0; bins];
    let episodes = 20_000;
    for k in 0..episodes {
        let log = sigma_execute(&mut sim, &pi, &fast, &params, k, &mut r).unwrap();
        let dwell = log.steps.iter().filter(|st| st.layer == 0).count();
        if log.steps.iter().any(|st| st.layer >= 1) {
            observed[(dwell - 1).min(bins - 2)] += 1.0;
        } else {
            observed[bins - 1] += 1.0;
        }
    }
    let mut probs: Vec<f64> = (0..bins - 2).map(|i| stay.powi(i as i32) * advance).collect();
    probs.push(stay.powi(bins as i32 - 2) * advance / (1.0 - stay));
    probs.push(q / (1.0 - stay));
    approx::assert_abs_diff_eq!(probs.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    let chi2: f64 = observed
        .iter()
        .zip(&probs)
        .map(|(o, p)| (o - episodes as f64 * p).powi(2) / (episodes as f64 * p))
        .sum();
    // 99.9% quantile of chi-square with 9 degrees of freedom.
    assert!(chi2 < 27.88, "chi-square {chi2}");
}

#[test]
fn executor_visits_match_stacked_occupancy() {
    let mut r = rng(5);
    let (inst, _) = random_ssp(3, 2, 0.2, 0.0, &mut r).unwrap();
    let params = SdaParams::with_terminal_cost(4, 0.1, 2.0, 1.0).unwrap();
    let layers = params.table_layers();
    let pi = random_layered(3, 2, layers, &mut r);
    let fast = StationaryPolicy::uniform(3, 2);
    let mdp = StackedMdp::from_params(&inst, &params);
    let q = stacked_occupancy(&mdp, &pi, StackedStart::Init(inst.init_state())).unwrap();

    let episodes = 40_000;
    let mut sim = Simulator::new(&inst, None);
    let mut counts = vec![Vec::with_capacity(episodes); 3 * 2 * params.num_layers];
    for k in 0..episodes {
        let log = sigma_execute(&mut sim, &pi, &fast, &params, k, &mut r).unwrap();
        let mut c = vec![0.0; counts.len()];
        for st in log.pre_switch_steps() {
            c[(st.layer * 3 + st.state) * 2 + st.action] += 1.0;
        }
        for (v, x) in counts.iter_mut().zip(c) {
            v.push(x);
        }
    }
    for l in 0..params.num_layers {
        for s in 0..3 {
            for a in 0..2 {
                let (mean, se) = mean_se(&counts[(l * 3 + s) * 2 + a]);
                let exact = q.get(s, a, l);
                assert!((mean - exact).abs() <= 4.0 * se + 1e-9, "q({s},{a},{l}) = {exact} vs {mean} +- {se}");
            }
        }
    }
}

#[test]
fn singleton_visit_bounds_are_exact() {
    let mut r = rng(6);
    let (inst, _) = random_ssp(3, 2, 0.2, 0.0, &mut r).unwrap();
    let params = SdaParams::with_terminal_cost(4, 0.1, 2.0, 1.0).unwrap();
    let pi = random_layered(3, 2, params.table_layers(), &mut r);
    let polys = ConfidencePolytopes::singleton(&inst, params.gamma);
    let mdp = StackedMdp::from_params(&inst, &params);
    let fast = StationaryPolicy::uniform(3, 2);

    let episodes = 40_000;
    let mut sim = Simulator::new(&inst, None);
    let mut hits = vec![Vec::with_capacity(episodes); 3 * 2 * params.num_layers];
    for k in 0..episodes {
        let log = sigma_execute(&mut sim, &pi, &fast, &params, k, &mut r).unwrap();
        let mut seen = vec![0.0; hits.len()];
        for st in log.pre_switch_steps() {
            seen[(st.layer * 3 + st.state) * 2 + st.action] = 1.0;
        }
        for (v, x) in hits.iter_mut().zip(seen) {
            v.push(x);
        }
    }
    for l in 0..params.num_layers {
        for s in 0..3 {
            for a in 0..2 {
                let b = visit_prob_bounds(&pi, &polys, inst.init_state(), (s, a, l)).unwrap();
                let (x, _) = visit_and_return(&mdp, &pi, inst.init_state(), (s, a, l)).unwrap();
                approx::assert_abs_diff_eq!(b.upper, x, epsilon = 1e-8);
                approx::assert_abs_diff_eq!(b.lower, x, epsilon = 1e-8);
                let (freq, se) = mean_se(&hits[(l * 3 + s) * 2 + a]);
                assert!((freq - x).abs() <= 4.0 * se + 1e-9, "x({s},{a},{l}) = {x} vs {freq} +- {se}");
            }
        }
    }
}

fn conf_around_truth(inst: &SspInstance, gamma: f64, radius: f64) -> ConfidencePolytopes {
    let (n, m) = (inst.num_states(), inst.num_actions());
    let p_bar: Vec<f64> = (0..n).flat_map(|s| (0..m).flat_map(move |a| inst.row(s, a).to_vec())).collect();
    let radii = vec![radius; p_bar.len()];
    ConfidencePolytopes::from_conf(&TransitionConfSet::from_parts(n, m, gamma, p_bar, radii).unwrap()).unwrap()
}

#[test]
fn optimism_brackets_every_member() {
    let mut r = rng(7);
    for _ in 0..10 {
        let (inst, cost) = random_ssp(3, 2, 0.15, 0.0, &mut r).unwrap();
        let params = SdaParams::with_terminal_cost(8, 0.1, 3.0, 2.0).unwrap();
        let layers = params.table_layers();
        let pi = random_layered(3, 2, layers, &mut r);
        let c = stacked_cost(&cost, params.num_layers, params.terminal_cost);
        let polys = conf_around_truth(&inst, params.gamma, 0.05);
        let eps = 1e-6;
        let low = optimistic_q(&pi, &polys, &c, eps).unwrap().q;
        let high = extended_value_iteration(&pi, &polys, &c, 0.0, Sense::Max, eps).unwrap().q;

        let vertices: Vec<Vec<Vec<f64>>> =
            (0..3).flat_map(|s| (0..2).map(move |a| (s, a))).map(|(s, a)| polytope_vertices(polys.row(s, a))).collect();
        for _ in 0..20 {
            let member = ExplicitKernel::from_fn(3, 2, params.num_layers, |s, a, _| {
                let vs = &vertices[s * 2 + a];
                let w: Vec<f64> = vs.iter().map(|_| r.gen::<f64>()).collect();
                let total: f64 = w.iter().sum();
                let mut x = vec![0.0; vs[0].len()];
                for (v, wi) in vs.iter().zip(&w) {
                    x.iter_mut().zip(v).for_each(|(xi, vi)| *xi += wi / total * vi);
                }
                to_stacked_row(&x, 3)
            });
            let q = stacked_policy_evaluation(&member, &pi, &c).unwrap().q;
            for (i, &v) in q.as_slice().iter().enumerate() {
                assert!(low.as_slice()[i] <= v + 1e-5, "optimistic value above a member");
                assert!(high.as_slice()[i] >= v - 1e-5, "pessimistic value below a member");
            }
        }
    }
}

#[test]
fn tiny_dilation_is_plain_evaluation() {
    let mut r = rng(8);
    let (inst, _) = random_ssp(3, 2, 0.2, 0.0, &mut r).unwrap();
    let params = SdaParams::with_terminal_cost(8, 0.1, 2.0, 1.0).unwrap();
    let layers = params.table_layers();
    let pi = random_layered(3, 2, layers, &mut r);
    let b = LayeredTable::from_fn(3, 2, layers, |_, _, _| r.gen_range(0.0..1.0));
    let polys = ConfidencePolytopes::singleton(&inst, params.gamma);
    let dilated = dilated_bonus(&pi, &polys, &b, 1e9, 1e-10).unwrap();
    let mdp = StackedMdp::from_params(&inst, &params);
    let (_, exact) = stacked_evaluate_dense(&mdp, &pi, &b).unwrap();
    for (x, y) in dilated.dilated.as_slice().iter().zip(exact.as_slice()) {
        approx::assert_abs_diff_eq!(*x, *y, epsilon = 1e-6);
    }
}

#[test]
fn corrected_cost_on_singleton_set_matches_direct_evaluation() {
    let mut r = rng(9);
    let (inst, cost) = random_ssp(3, 2, 0.2, 0.0, &mut r).unwrap();
    let params = SdaParams::with_terminal_cost(8, 0.1, 2.0, 3.0).unwrap();
    let pi = random_layered(3, 2, params.table_layers(), &mut r);
    let polys = ConfidencePolytopes::singleton(&inst, params.gamma);
    let mdp = StackedMdp::from_params(&inst, &params);
    let c = stacked_cost(&cost, params.num_layers, params.terminal_cost);
    let lambda = 0.05;

    let q_hat = optimistic_q(&pi, &polys, &c, 1e-10).unwrap().q;
    let q_tilde = optimistic_q(&pi, &polys, &corrected_cost(&c, &q_hat, lambda, None), 1e-10).unwrap().q;

    let (_, q_exact) = stacked_evaluate_dense(&mdp, &pi, &c).unwrap();
    let by_hand = LayeredTable::from_fn(3, 2, params.table_layers(), |s, a, l| {
        (1.0 + lambda * q_exact.get(s, a, l)) * c.get(s, a, l)
    });
    let (_, expected) = stacked_evaluate_dense(&mdp, &pi, &by_hand).unwrap();
    for (x, y) in q_tilde.as_slice().iter().zip(expected.as_slice()) {
        approx::assert_abs_diff_eq!(*x, *y, epsilon = 1e-7);
    }
    let q0 = optimistic_q(&pi, &polys, &corrected_cost(&c, &q_hat, 0.0, None), 1e-10).unwrap().q;
    assert_eq!(q0, q_hat);
}

#[test]
fn mirrored_optimal_policy_is_near_optimal_in_stacked_mdp() {
    let mut r = rng(10);
    let (inst, cost) = random_ssp(4, 2, 0.1, 0.0, &mut r).unwrap();
    let kp = key_params(&inst, &cost).unwrap();
    let params = SdaParams::new(100, 0.1, kp.diameter, kp.t_max).unwrap();
    let mdp = StackedMdp::from_params(&inst, &params);
    let pi = mirror_policy(&kp.optimal_policy, params.num_layers);
    let c = stacked_cost(&cost, params.num_layers, params.terminal_cost);
    let v = stacked_policy_evaluation(&mdp, &pi, &c).unwrap().v;
    // The stacked value at layer 0 stays within the terminal cost of the true value.
    for s in 0..4 {
        assert!(v.get(s, 0) <= kp.optimal_values[s] + params.terminal_cost + 1e-8);
    }
}

#[test]
fn bernoulli_cost_mean() {
    let mut r = rng(11);
    let draws: Vec<f64> = (0..100_000).map(|_| NoiseModel::Bernoulli.sample(0.5, 0.0, &mut r)).collect();
    let (mean, se) = mean_se(&draws);
    assert!((mean - 0.5).abs() <= 3.0 * se);
    assert!(draws.iter().all(|&c| c == 0.0 || c == 1.0));
}

#[test]
fn transition_frequencies_match_rows() {
    let mut r = rng(12);
    let (inst, _) = random_ssp(5, 2, 0.1, 0.0, &mut r).unwrap();
    let mut sim = Simulator::new(&inst, None);
    for (s, a) in [(0, 0), (2, 1), (4, 0)] {
        let row = inst.row(s, a);
        let mut counts = vec![0.0; row.len()];
        let draws = 100_000;
        for _ in 0..draws {
            counts[sim.step(s, a, &mut r).unwrap().next] += 1.0;
        }
        let chi2: f64 =
            row.iter().zip(&counts).filter(|(p, _)| **p > 0.0).map(|(p, c)| (c - draws as f64 * p).powi(2) / (draws as f64 * p)).sum();
        // 99.9% quantile with 5 degrees of freedom.
        assert!(chi2 < 20.52, "chi-square {chi2} for ({s}, {a})");
    }
}

#[test]
fn generated_instances_have_finite_parameters() {
    let mut r = rng(13);
    for _ in 0..100 {
        let (inst, cost) = random_ssp(5, 2, 0.1, 0.0, &mut r).unwrap();
        match key_params(&inst, &cost) {
            Ok(kp) => assert!(kp.t_max.is_finite() && kp.diameter.is_finite()),
            Err(e) => assert!(e.to_string().contains("B*"), "{e}"),
        }
    }
}

const SMALL: &str = r#"
setting = "stochastic-costs"
episodes = 1
seeds = [3]

[env]
generator = { kind = "random-ssp", num_states = 3, num_actions = 2, p_goal = 0.2 }
seed = 1

[overrides]
eta = 0.3
"#;

#[test]
fn single_episode_run() {
    let config = ExperimentConfig::from_toml(SMALL).unwrap();
    let report = run_experiment(&config).unwrap();
    assert_eq!(report.runs.len(), 1);
    assert_eq!(report.runs[0].records.len(), 1);
    assert_eq!(report.runs[0].regret.len(), 1);
    assert!(!report.failed());
}

#[test]
fn single_action_has_no_regret_in_expectation() {
    let text = SMALL.replace("num_actions = 2", "num_actions = 1").replace("episodes = 1", "episodes = 3000");
    let config = ExperimentConfig::from_toml(&text).unwrap();
    let report = run_experiment(&config).unwrap();
    let run = &report.runs[0];
    let gaps: Vec<f64> = run.records.iter().zip(&run.comparator).map(|(r, c)| r.incurred_cost - c).collect();
    let (mean, se) = mean_se(&gaps);
    assert!(mean.abs() <= 4.0 * se, "mean per-episode regret {mean} +- {se}");
}

#[test]
fn stacked_evaluation_dense_agrees_with_layered_solver() {
    let mut r = rng(14);
    let (inst, cost) = random_ssp(4, 3, 0.1, 0.0, &mut r).unwrap();
    let params = SdaParams::with_terminal_cost(16, 0.1, 3.0, 5.0).unwrap();
    let mdp = StackedMdp::from_params(&inst, &params);
    let pi = random_layered(4, 3, params.table_layers(), &mut r);
    let c = stacked_cost(&cost, params.num_layers, params.terminal_cost);
    let fast = stacked_policy_evaluation(&mdp, &pi, &c).unwrap();
    let (v, q) = stacked_evaluate_dense(&mdp, &pi, &c).unwrap();
    for (x, y) in fast.q.as_slice().iter().zip(q.as_slice()) {
        approx::assert_abs_diff_eq!(*x, *y, epsilon = 1e-7);
    }
    for (x, y) in fast.v.as_slice().iter().zip(v.as_slice()) {
        approx::assert_abs_diff_eq!(*x, *y, epsilon = 1e-7);
    }
}
