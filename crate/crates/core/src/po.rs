//! Policy optimization on the stacked MDP: multiplicative-weights updates
//! driven by optimistic action-values, in five feedback settings.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{Environment, RevealMode, Revealed};
use crate::episode::EpisodeLog;
use crate::error::{Result, SspError};
use crate::estimation::{ConfidenceState, Feedback, FullInfoCounting};
use crate::planning::{dilated_bonus, optimistic_q, visit_bounds_all, ConfidencePolytopes};
use crate::sda::{sigma_execute, stack_table, SdaParams};
use crate::ssp::{KeyParams, StationaryPolicy};
use crate::table::LayeredTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Setting {
    StochasticCosts,
    StochAdvFull,
    StochAdvBandit,
    AdvFull,
    AdvBandit,
}

impl Setting {
    pub const ALL: [Setting; 5] =
        [Setting::StochasticCosts, Setting::StochAdvFull, Setting::StochAdvBandit, Setting::AdvFull, Setting::AdvBandit];

    pub fn name(self) -> &'static str {
        match self {
            Setting::StochasticCosts => "stochastic-costs",
            Setting::StochAdvFull => "stoch-adv-full",
            Setting::StochAdvBandit => "stoch-adv-bandit",
            Setting::AdvFull => "adv-full",
            Setting::AdvBandit => "adv-bandit",
        }
    }

    /// How costs reach the learner, `None` when they come with each step.
    pub fn reveal_mode(self) -> Option<RevealMode> {
        match self {
            Setting::StochasticCosts => None,
            Setting::StochAdvFull | Setting::AdvFull => Some(RevealMode::Full),
            Setting::StochAdvBandit | Setting::AdvBandit => Some(RevealMode::Bandit),
        }
    }

    /// Settings whose comparator is fixed by the mean cost.
    pub fn has_stochastic_comparator(self) -> bool {
        matches!(self, Setting::StochasticCosts | Setting::StochAdvFull | Setting::StochAdvBandit)
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Setting {
    type Err = SspError;

    fn from_str(s: &str) -> Result<Self> {
        Setting::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| SspError::Config(format!("unknown setting '{s}'")))
    }
}

/// Instance parameters the learner is given.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnownParams {
    pub b_star: f64,
    pub t_star: f64,
    pub t_max: f64,
    pub diameter: f64,
}

impl From<&KeyParams> for KnownParams {
    fn from(k: &KeyParams) -> Self {
        Self { b_star: k.b_star, t_star: k.t_star, t_max: k.t_max, diameter: k.diameter }
    }
}

/// Optional replacements for schedule constants.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    pub eta: Option<f64>,
    pub lambda: Option<f64>,
    pub beta: Option<f64>,
    pub beta_prime: Option<f64>,
    pub theta: Option<f64>,
    pub epsilon: Option<f64>,
}

impl Overrides {
    pub fn set(&mut self, key: &str, value: f64) -> Result<()> {
        let slot = match key {
            "eta" => &mut self.eta,
            "lambda" => &mut self.lambda,
            "beta" => &mut self.beta,
            "beta_prime" => &mut self.beta_prime,
            "theta" => &mut self.theta,
            "epsilon" => &mut self.epsilon,
            _ => return Err(SspError::Config(format!("unknown schedule constant '{key}'"))),
        };
        if !(value >= 0.0 && value.is_finite()) {
            return Err(SspError::Config(format!("{key} must be a non-negative number")));
        }
        *slot = Some(value);
        Ok(())
    }
}

/// Learning rates and correction weights for one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub eta: f64,
    pub lambda: f64,
    pub beta: f64,
    pub beta_prime: f64,
    pub theta: f64,
    pub l_prime: f64,
    pub epsilon: f64,
    /// Whether the theory-derived learning rate is in use, which turns on
    /// the setting-specific magnitude checks.
    pub strict: bool,
}

fn inv_sqrt(x: f64) -> f64 {
    if x > 0.0 {
        1.0 / x.sqrt()
    } else {
        f64::INFINITY
    }
}

impl Schedule {
    pub fn theory(
        setting: Setting,
        sda: &SdaParams,
        known: &KnownParams,
        num_states: usize,
        num_actions: usize,
        iota: f64,
    ) -> Self {
        let k = sda.episodes as f64;
        let (s, a) = (num_states as f64, num_actions as f64);
        let (h, hp, chi, tmax) = (sda.num_layers as f64, sda.dilation_horizon, sda.chi, known.t_max);
        let (d, tstar) = (known.diameter, known.t_star);
        let l_prime = sda.step_cap as f64 + sda.terminal_cost;
        let beta_prime = (1.0 / tmax).min(inv_sqrt(d * tstar * k));
        let beta = (1.0 / tmax).min((s * a / (d * tstar * k)).sqrt());
        let (eta, lambda, theta) = match setting {
            Setting::StochasticCosts | Setting::StochAdvFull | Setting::StochAdvBandit => {
                let square = if setting == Setting::StochasticCosts { known.b_star } else { d };
                let lambda = (1.0 / tmax).min((s * s * a / (square * square * k)).sqrt());
                let eta = (1.0 / (3.0 * tmax * (8.0 * iota + chi / tmax).powi(2))).min(inv_sqrt(lambda * tmax.powi(4) * k));
                (eta, lambda, 0.0)
            }
            Setting::AdvFull => {
                let eta = (1.0 / (64.0 * chi * chi * (h * hp).sqrt())).min(inv_sqrt(d * k));
                let lambda = (1.0 / chi).min(48.0 * eta + (s * s * a / (d * tstar * k)).sqrt());
                (eta, lambda, 0.0)
            }
            Setting::AdvBandit => {
                let eta = (1.0 / (300.0 * h * hp * tmax * l_prime)).min((1.0 / (tmax * tmax * s * a * k)).sqrt());
                (eta, 0.0, 2.0 * eta * l_prime)
            }
        };
        Self { eta, lambda, beta, beta_prime, theta, l_prime, epsilon: 1.0 / k, strict: true }
    }

    pub fn with_overrides(mut self, o: &Overrides) -> Self {
        if let Some(x) = o.eta {
            self.eta = x;
            self.strict = false;
            self.theta = 2.0 * x * self.l_prime;
        }
        if let Some(x) = o.lambda {
            self.lambda = x;
        }
        if let Some(x) = o.beta {
            self.beta = x;
        }
        if let Some(x) = o.beta_prime {
            self.beta_prime = x;
        }
        if let Some(x) = o.theta {
            self.theta = x;
        }
        if let Some(x) = o.epsilon {
            self.epsilon = x;
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnerConfig {
    pub setting: Setting,
    pub sda: SdaParams,
    pub known: KnownParams,
    pub schedule: Schedule,
    pub full_info_counting: FullInfoCounting,
}

impl LearnerConfig {
    pub fn new(
        setting: Setting,
        sda: SdaParams,
        known: KnownParams,
        num_states: usize,
        num_actions: usize,
        overrides: &Overrides,
    ) -> Self {
        let iota = crate::estimation::log_factor(num_states, num_actions, &sda);
        let schedule = Schedule::theory(setting, &sda, &known, num_states, num_actions, iota).with_overrides(overrides);
        Self { setting, sda, known, schedule, full_info_counting: FullInfoCounting::AllPairs }
    }
}

/// `pi(a|s,l) ∝ exp(-eta * Z(s,a,l))`, stabilized by the row minimum of `Z`.
pub fn policy_from_exponents(z: &LayeredTable, eta: f64) -> LayeredTable {
    let mut pi = z.clone();
    for l in 0..z.num_layers() {
        for s in 0..z.num_states() {
            let row = pi.row_mut(s, l);
            let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
            let mut total = 0.0;
            for x in row.iter_mut() {
                *x = (-eta * (*x - lo)).exp();
                total += *x;
            }
            row.iter_mut().for_each(|x| *x /= total);
        }
    }
    pi
}

/// One multiplicative-weights step on `pi` with loss `Q̃ - B`, checking that
/// every centered loss stays within `1/eta`.
pub fn mwu_step(pi: &LayeredTable, loss: &LayeredTable, eta: f64) -> Result<LayeredTable> {
    if !pi.same_shape(loss) {
        return Err(SspError::InvalidArgument("loss shape does not match the policy".into()));
    }
    check_centered(pi, loss, eta)?;
    let mut out = pi.clone();
    for l in 0..pi.num_layers() {
        for s in 0..pi.num_states() {
            let lrow = loss.row(s, l);
            let lo = lrow.iter().copied().fold(f64::INFINITY, f64::min);
            let row = out.row_mut(s, l);
            let mut total = 0.0;
            for (x, &y) in row.iter_mut().zip(lrow) {
                *x *= (-eta * (y - lo)).exp();
                total += *x;
            }
            row.iter_mut().for_each(|x| *x /= total);
        }
    }
    Ok(out)
}

fn check_centered(pi: &LayeredTable, loss: &LayeredTable, eta: f64) -> Result<()> {
    for l in 0..pi.num_layers() {
        for s in 0..pi.num_states() {
            let (p, x) = (pi.row(s, l), loss.row(s, l));
            let mean: f64 = p.iter().zip(x).map(|(a, b)| a * b).sum();
            for (a, &v) in x.iter().enumerate() {
                if eta * (v - mean).abs() > 1.0 + 1e-12 {
                    return Err(SspError::ScheduleViolation(format!(
                        "eta * |loss - mean| = {} > 1 at (s={s}, a={a}, l={l})",
                        eta * (v - mean).abs()
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Exponent table and current policy.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerState {
    pub exponents: LayeredTable,
    pub policy: LayeredTable,
    pub confidence: ConfidenceState,
    /// Index of the next episode (1-based).
    pub episode: usize,
}

impl LearnerState {
    pub fn new(num_states: usize, num_actions: usize, sda: &SdaParams, counting: FullInfoCounting) -> Self {
        let layers = sda.table_layers();
        Self {
            exponents: LayeredTable::zeros(num_states, num_actions, layers),
            policy: LayeredTable::filled(num_states, num_actions, layers, 1.0 / num_actions as f64),
            confidence: ConfidenceState::for_params(num_states, num_actions, sda).with_full_info_counting(counting),
            episode: 1,
        }
    }

    /// Accumulate `Q̃ - B` into the exponents and move the policy.
    pub fn mwu_update(&mut self, q_tilde: &LayeredTable, bonus: &LayeredTable, eta: f64) -> Result<()> {
        let loss = q_tilde.zip_with(bonus, |q, b| q - b);
        self.policy = mwu_step(&self.policy, &loss, eta)?;
        self.exponents = self.exponents.zip_with(&loss, |z, x| z + x);
        Ok(())
    }
}

/// What every episode operation needs to read.
pub struct EpisodeContext<'a> {
    pub policy: &'a LayeredTable,
    pub polytopes: &'a ConfidencePolytopes,
    pub confidence: &'a ConfidenceState,
    pub sda: &'a SdaParams,
    pub known: &'a KnownParams,
    pub schedule: &'a Schedule,
    pub episode: usize,
    pub init_state: usize,
}

/// Losses produced for one episode, with the intermediate tables.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLosses {
    pub q_tilde: LayeredTable,
    pub bonus: LayeredTable,
    pub q_hat: Option<LayeredTable>,
    pub corrected_cost: Option<LayeredTable>,
}

fn stacked_with_terminal(values: &[f64], ctx: &EpisodeContext<'_>) -> LayeredTable {
    stack_table(values, ctx.policy.num_states(), ctx.policy.num_actions(), ctx.sda.num_layers, ctx.sda.terminal_cost)
}

/// `(1 + lambda Q̂) c + e`, where `e` is zero on the terminal layer.
pub fn corrected_cost(cost: &LayeredTable, q_hat: &LayeredTable, lambda: f64, extra: Option<&LayeredTable>) -> LayeredTable {
    let h = cost.terminal_layer();
    LayeredTable::from_fn(cost.num_states(), cost.num_actions(), cost.num_layers(), |s, a, l| {
        let base = (1.0 + lambda * q_hat.get(s, a, l)) * cost.get(s, a, l);
        match extra {
            Some(e) if l < h => base + e.get(s, a, l),
            _ => base,
        }
    })
}

fn tilde_q_bound(ctx: &EpisodeContext<'_>) -> f64 {
    let tmax = ctx.known.t_max;
    3.0 * tmax * (8.0 * ctx.confidence.iota() + ctx.sda.chi / tmax).powi(2)
}

fn stochastic_pipeline(ctx: &EpisodeContext<'_>, correction: impl Fn(&LayeredTable, &LayeredTable) -> Option<LayeredTable>) -> Result<EpisodeLosses> {
    let c_hat = ctx.confidence.stacked_cost_estimate(ctx.sda.num_layers, ctx.sda.terminal_cost);
    let q_hat = optimistic_q(ctx.policy, ctx.polytopes, &c_hat, ctx.schedule.epsilon)?.q;
    let e = correction(&c_hat, &q_hat);
    let c_tilde = corrected_cost(&c_hat, &q_hat, ctx.schedule.lambda, e.as_ref());
    let q_tilde = optimistic_q(ctx.policy, ctx.polytopes, &c_tilde, ctx.schedule.epsilon)?.q;
    if ctx.schedule.strict {
        let bound = tilde_q_bound(ctx);
        if q_tilde.max() > bound {
            return Err(SspError::ScheduleViolation(format!("max Q̃ = {} exceeds {bound}", q_tilde.max())));
        }
    }
    let bonus = LayeredTable::zeros(q_tilde.num_states(), q_tilde.num_actions(), q_tilde.num_layers());
    Ok(EpisodeLosses { q_tilde, bonus, q_hat: Some(q_hat), corrected_cost: Some(c_tilde) })
}

/// Stochastic costs: no correction term, no bonus.
pub fn stochastic_costs_episode(ctx: &EpisodeContext<'_>) -> Result<EpisodeLosses> {
    stochastic_pipeline(ctx, |_, _| None)
}

/// Stochastic adversary with full information: `e = 8 iota sqrt(ĉ/k) + beta' Q̂`.
pub fn stoch_adv_full_episode(ctx: &EpisodeContext<'_>) -> Result<EpisodeLosses> {
    let iota = ctx.confidence.iota();
    let k = ctx.episode as f64;
    let bp = ctx.schedule.beta_prime;
    stochastic_pipeline(ctx, |c_hat, q_hat| {
        Some(LayeredTable::from_fn(c_hat.num_states(), c_hat.num_actions(), c_hat.num_layers(), |s, a, l| {
            8.0 * iota * (c_hat.get(s, a, l) / k).sqrt() + bp * q_hat.get(s, a, l)
        }))
    })
}

/// Stochastic adversary with bandit feedback: `e = beta Q̂`.
pub fn stoch_adv_bandit_episode(ctx: &EpisodeContext<'_>) -> Result<EpisodeLosses> {
    let beta = ctx.schedule.beta;
    stochastic_pipeline(ctx, |_, q_hat| Some(q_hat.map(|x| beta * x)))
}

/// Adversarial costs with full information: corrected costs from the
/// revealed table and a dilated bonus built from the advantage variance.
pub fn adv_full_episode(ctx: &EpisodeContext<'_>, cost_table: &[f64]) -> Result<EpisodeLosses> {
    let (n, m) = (ctx.policy.num_states(), ctx.policy.num_actions());
    if cost_table.len() != n * m {
        return Err(SspError::FeedbackMismatch("revealed table has the wrong size".into()));
    }
    let cost = stacked_with_terminal(cost_table, ctx);
    let eps = ctx.schedule.epsilon;
    let eta = ctx.schedule.eta;
    let q_hat = optimistic_q(ctx.policy, ctx.polytopes, &cost, eps)?.q;
    let c_tilde = corrected_cost(&cost, &q_hat, ctx.schedule.lambda, None);
    let q_tilde = optimistic_q(ctx.policy, ctx.polytopes, &c_tilde, eps)?.q;
    let v_tilde = q_tilde.policy_average(ctx.policy);
    let mut b = LayeredTable::zeros(n, m, q_tilde.num_layers());
    for l in 0..q_tilde.num_layers() {
        for s in 0..n {
            let pi = ctx.policy.row(s, l);
            let var: f64 = (0..m).map(|a| pi[a] * (q_tilde.get(s, a, l) - v_tilde.get(s, l)).powi(2)).sum();
            for a in 0..m {
                b.set(s, a, l, 2.0 * eta * var);
            }
        }
    }
    let bonus = dilated_bonus(ctx.policy, ctx.polytopes, &b, ctx.sda.dilation_horizon, eps)?.dilated;
    if ctx.schedule.strict && eta * bonus.max_abs() > 1.0 / (2.0 * ctx.sda.dilation_horizon) {
        return Err(SspError::ScheduleViolation(format!(
            "eta * max B = {} exceeds 1/(2H')",
            eta * bonus.max_abs()
        )));
    }
    Ok(EpisodeLosses { q_tilde, bonus, q_hat: Some(q_hat), corrected_cost: Some(c_tilde) })
}

/// Stacked cost from the first visit of every `(s, a, l)` within the first
/// `L + 1` steps. Post-switch steps never count; the terminal cost counts as
/// the step after the switch.
pub fn first_visit_costs(log: &EpisodeLog, num_states: usize, num_actions: usize, sda: &SdaParams) -> Result<LayeredTable> {
    let window = sda.step_cap + 1;
    let pre = log.pre_switch_steps();
    let mut costs = Vec::with_capacity(pre.len());
    for st in pre {
        costs.push(st.cost.ok_or_else(|| SspError::FeedbackMismatch("pre-switch step without cost".into()))?);
    }
    let end = pre.len().min(window);
    // suffix[i] = sum of costs from step i to the window end, plus the terminal
    // cost if the switch falls inside the window
    let terminal = if log.switched() && pre.len() < window { log.terminal_cost } else { 0.0 };
    let mut suffix = vec![terminal; end + 1];
    for i in (0..end).rev() {
        suffix[i] = suffix[i + 1] + costs[i];
    }
    let mut g = LayeredTable::zeros(num_states, num_actions, sda.table_layers());
    let mut seen = vec![false; num_states * num_actions * sda.table_layers()];
    for (i, st) in pre[..end].iter().enumerate() {
        let idx = (st.layer * num_states + st.state) * num_actions + st.action;
        if !seen[idx] {
            seen[idx] = true;
            g.set(st.state, st.action, st.layer, suffix[i]);
        }
    }
    Ok(g)
}

/// Adversarial costs with bandit feedback: importance-weighted first-visit
/// costs and a dilated bonus from the visit-probability gap.
pub fn adv_bandit_episode(ctx: &EpisodeContext<'_>, log: &EpisodeLog) -> Result<EpisodeLosses> {
    let (n, m) = (ctx.policy.num_states(), ctx.policy.num_actions());
    let h = ctx.sda.num_layers;
    let theta = ctx.schedule.theta;
    let (x_up, x_low) = visit_bounds_all(ctx.policy, ctx.polytopes, ctx.init_state)?;
    let g = first_visit_costs(log, n, m, ctx.sda)?;
    let q_tilde = LayeredTable::from_fn(n, m, h + 1, |s, a, l| {
        if l == h {
            ctx.sda.terminal_cost
        } else {
            let denom = x_up.get(s, a, l) + theta;
            if g.get(s, a, l) == 0.0 {
                0.0
            } else {
                g.get(s, a, l) / denom
            }
        }
    });
    let mut b = LayeredTable::zeros(n, m, h + 1);
    for l in 0..h {
        for s in 0..n {
            let pi = ctx.policy.row(s, l);
            let mut acc = 0.0;
            for a2 in 0..m {
                if pi[a2] > 0.0 {
                    let up = x_up.get(s, a2, l);
                    acc += pi[a2] * (up - x_low.get(s, a2, l) + 4.0 * theta) / (up + theta);
                }
            }
            for a in 0..m {
                b.set(s, a, l, ctx.schedule.l_prime * acc);
            }
        }
    }
    let bonus = dilated_bonus(ctx.policy, ctx.polytopes, &b, ctx.sda.dilation_horizon, ctx.schedule.epsilon)?.dilated;
    if ctx.schedule.strict {
        let gap = q_tilde.zip_with(&bonus, |x, y| x - y).max_abs();
        if ctx.schedule.eta * gap > 1.0 {
            return Err(SspError::ScheduleViolation(format!("eta * |Q̃ - B| = {} > 1", ctx.schedule.eta * gap)));
        }
    }
    Ok(EpisodeLosses { q_tilde, bonus, q_hat: None, corrected_cost: None })
}

/// Per-episode diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    /// Every cost incurred in the base environment, fast-policy steps included.
    pub incurred_cost: f64,
    /// Cost of the steps before the switch.
    pub pre_switch_cost: f64,
    pub terminal_cost: f64,
    pub pre_switch_steps: usize,
    pub total_steps: usize,
    pub switched: bool,
    pub max_q_tilde: f64,
    pub max_bonus: f64,
    pub eta: f64,
    pub lambda: f64,
}

/// The whole learning loop for one run.
#[derive(Debug, Clone)]
pub struct Learner {
    pub config: LearnerConfig,
    pub state: LearnerState,
    fast: StationaryPolicy,
    init_state: usize,
}

impl Learner {
    pub fn new(config: LearnerConfig, num_states: usize, num_actions: usize, init_state: usize, fast: StationaryPolicy) -> Self {
        let state = LearnerState::new(num_states, num_actions, &config.sda, config.full_info_counting);
        Self { config, state, fast, init_state }
    }

    pub fn policy(&self) -> &LayeredTable {
        &self.state.policy
    }

    pub fn polytopes(&self) -> Result<ConfidencePolytopes> {
        ConfidencePolytopes::from_conf(&self.state.confidence.confidence_set(self.config.sda.gamma))
    }

    /// Losses for the episode just played, from data of earlier episodes.
    pub fn losses(&self, polys: &ConfidencePolytopes, log: &EpisodeLog, revealed: Option<&Revealed>) -> Result<EpisodeLosses> {
        let ctx = EpisodeContext {
            policy: &self.state.policy,
            polytopes: polys,
            confidence: &self.state.confidence,
            sda: &self.config.sda,
            known: &self.config.known,
            schedule: &self.config.schedule,
            episode: self.state.episode,
            init_state: self.init_state,
        };
        match (self.config.setting, revealed) {
            (Setting::StochasticCosts, _) => stochastic_costs_episode(&ctx),
            (Setting::StochAdvFull, _) => stoch_adv_full_episode(&ctx),
            (Setting::StochAdvBandit, _) => stoch_adv_bandit_episode(&ctx),
            (Setting::AdvFull, Some(Revealed::Full(table))) => adv_full_episode(&ctx, table),
            (Setting::AdvBandit, Some(Revealed::Bandit(_))) => adv_bandit_episode(&ctx, log),
            (s, _) => Err(SspError::FeedbackMismatch(format!("{s} needs its own feedback type"))),
        }
    }

    /// Play one episode, update the policy and the counters.
    pub fn run_episode<R: Rng + ?Sized>(&mut self, env: &mut Environment, rng: &mut R) -> Result<EpisodeRecord> {
        let k = self.state.episode;
        if k > self.config.sda.episodes {
            return Err(SspError::Protocol(format!("episode {k} exceeds K = {}", self.config.sda.episodes)));
        }
        let polys = self.polytopes()?;
        env.begin_episode(k)?;
        let mut log = sigma_execute(env, &self.state.policy, &self.fast, &self.config.sda, k, rng)?;
        let incurred = env.end_episode()?;
        let revealed = match self.config.setting.reveal_mode() {
            None => None,
            Some(mode) => {
                let visited: Vec<(usize, usize)> = log.pre_switch_steps().iter().map(|s| (s.state, s.action)).collect();
                Some(env.reveal(k, mode, &visited)?)
            }
        };
        let m = env.instance().num_actions();
        match &revealed {
            Some(Revealed::Full(table)) => log.attach_costs(m, table),
            Some(Revealed::Bandit(pairs)) => {
                for st in log.steps.iter_mut() {
                    st.cost = pairs.iter().find(|p| p.0 == st.state && p.1 == st.action).map(|p| p.2);
                }
            }
            None => {}
        }
        let losses = self.losses(&polys, &log, revealed.as_ref())?;
        self.state.mwu_update(&losses.q_tilde, &losses.bonus, self.config.schedule.eta)?;
        let feedback = match &revealed {
            None => Feedback::StochasticCosts,
            Some(Revealed::Full(t)) => Feedback::FullInformation(t),
            Some(Revealed::Bandit(p)) => Feedback::Bandit(p),
        };
        self.state.confidence.update_counts(&log, feedback)?;
        self.state.episode += 1;
        let pre_switch_cost = log.pre_switch_steps().iter().map(|s| s.cost.unwrap_or(0.0)).sum();
        Ok(EpisodeRecord {
            episode: k,
            incurred_cost: incurred,
            pre_switch_cost,
            terminal_cost: log.terminal_cost,
            pre_switch_steps: log.pre_switch_len(),
            total_steps: log.steps.len(),
            switched: log.switched(),
            max_q_tilde: losses.q_tilde.max(),
            max_bonus: losses.bonus.max(),
            eta: self.config.schedule.eta,
            lambda: self.config.schedule.lambda,
        })
    }
}

/// Run `episodes` episodes and collect their records.
pub fn run_learner<R: Rng + ?Sized>(
    config: LearnerConfig,
    env: &mut Environment,
    fast: StationaryPolicy,
    episodes: usize,
    rng: &mut R,
) -> Result<Vec<EpisodeRecord>> {
    let inst = env.instance();
    let mut learner = Learner::new(config, inst.num_states(), inst.num_actions(), inst.init_state(), fast);
    (0..episodes).map(|_| learner.run_episode(env, rng)).collect()
}
