//! Round-by-round knowledge-collapse engine.
//!
//! Each round every agent compares the expected net payoff of a
//! full-distribution sample, a truncated (cheaper) sample, or abstaining.
//! Contributed samples enter a bounded buffer whose kernel density estimate
//! is the public pdf; an agent's innovation is how far their own insertion
//! moved the public pdf toward the ground truth in Hellinger distance.
//! Realized innovations are public and feed shared per-arm value estimates.
//! Every `generation_period` rounds the sampling distribution is rescaled to
//! the public pdf's spread and agent types are redrawn.

use std::collections::VecDeque;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::density::{self, fit_kde, hellinger, GriddedPdf, KdeSpec};
use crate::distributions::{truncated_sample, TrueDistribution, TruncationSpec, TruncationUnits};
use crate::error::{Error, Result};

/// Public variance below this is treated as collapsed to a point.
pub const COLLAPSE_VARIANCE_FLOOR: f64 = 1e-6;
/// Standard deviation used for the sampling distribution after a collapse.
pub const COLLAPSE_FLOOR_STD: f64 = 1e-3;
/// Variance slope (per round) below which a run counts as narrowing.
pub const NARROWING_SLOPE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Full,
    Truncated,
    Abstain,
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Action::Full => "full",
            Action::Truncated => "truncated",
            Action::Abstain => "abstain",
        })
    }
}

/// Which distribution a sample came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Full,
    Truncated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateRule {
    /// `v <- v + eta * (observed - v)`
    Ema,
    /// `v <- v + eta * (v - observed)`, the sign as literally printed.
    PaperLiteral,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub id: usize,
    pub theta: f64,
}

/// Shared beliefs about the innovation value of each arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueEstimates {
    pub v_full: f64,
    pub v_trunc: f64,
    pub history_full: Vec<f64>,
    pub history_trunc: Vec<f64>,
}

impl ValueEstimates {
    pub fn new(v_init: f64) -> Self {
        Self {
            v_full: v_init,
            v_trunc: v_init,
            history_full: Vec::new(),
            history_trunc: Vec::new(),
        }
    }

    pub fn get(&self, arm: Arm) -> f64 {
        match arm {
            Arm::Full => self.v_full,
            Arm::Truncated => self.v_trunc,
        }
    }

    pub fn history(&self, arm: Arm) -> &[f64] {
        match arm {
            Arm::Full => &self.history_full,
            Arm::Truncated => &self.history_trunc,
        }
    }

    fn slot(&mut self, arm: Arm) -> (&mut f64, &mut Vec<f64>) {
        match arm {
            Arm::Full => (&mut self.v_full, &mut self.history_full),
            Arm::Truncated => (&mut self.v_trunc, &mut self.history_trunc),
        }
    }
}

/// Argmax over `{theta*v_full - cost, theta*v_trunc - delta*cost, 0}` with
/// ties going to Full, then Truncated, then Abstain.
pub fn decide(agent: &Agent, est: &ValueEstimates, cost_full: f64, delta: f64) -> Action {
    let full = agent.theta * est.v_full - cost_full;
    let trunc = agent.theta * est.v_trunc - delta * cost_full;
    let mut best = (Action::Abstain, 0.0);
    for (action, net) in [(Action::Truncated, trunc), (Action::Full, full)] {
        if net >= best.1 {
            best = (action, net);
        }
    }
    best.0
}

/// Reduction in distance to `truth` achieved by moving from `before` to `after`.
pub fn innovation(before: &GriddedPdf, after: &GriddedPdf, truth: &GriddedPdf) -> Result<f64> {
    Ok(hellinger(before, truth)? - hellinger(after, truth)?)
}

/// Observations used to update one arm this round: this round's if there are
/// at least `min_obs`, else the `min_obs` most recent in the arm's history,
/// else none.
pub fn realized_observations<'a>(
    this_round: &'a [f64],
    history: &'a [f64],
    min_obs: usize,
) -> Option<&'a [f64]> {
    if this_round.len() >= min_obs.max(1) {
        Some(this_round)
    } else if history.len() >= min_obs.max(1) {
        Some(&history[history.len() - min_obs.max(1)..])
    } else {
        None
    }
}

pub fn update_value(prior: f64, observed: f64, eta: f64, rule: UpdateRule) -> f64 {
    match rule {
        UpdateRule::Ema => prior + eta * (observed - prior),
        UpdateRule::PaperLiteral => prior + eta * (prior - observed),
    }
}

/// Appends this round's observations to the arm histories, then updates
/// each arm's estimate from its realized mean.
pub fn update_estimates(
    est: &mut ValueEstimates,
    full_obs: &[f64],
    trunc_obs: &[f64],
    eta: f64,
    rule: UpdateRule,
    min_obs: usize,
) {
    for (arm, obs) in [(Arm::Full, full_obs), (Arm::Truncated, trunc_obs)] {
        let (value, history) = est.slot(arm);
        history.extend_from_slice(obs);
        if let Some(used) = realized_observations(obs, history, min_obs) {
            let mean = used.iter().sum::<f64>() / used.len() as f64;
            *value = update_value(*value, mean, eta, rule);
        }
    }
}

/// Where an arm's update gets its observations when fewer than
/// `min_observations` agents chose it this round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShortfallFill {
    /// The arm's most recent past observations.
    History,
    /// Counterfactual draws from the arm, each scored as if it had replaced
    /// the oldest buffer entry after this round's insertions. Probes are
    /// never inserted.
    Probe,
}

fn default_generation_period() -> Option<usize> {
    Some(10)
}

/// Full parameterization of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n_agents: usize,
    pub n_rounds: usize,
    pub buffer_size: usize,
    pub df: f64,
    pub sigma_tr: f64,
    pub truncation_units: TruncationUnits,
    /// Cost of a truncated sample relative to a full one.
    pub delta: f64,
    pub eta: f64,
    /// Rounds between generational turnovers; `null` disables turnover.
    #[serde(default = "default_generation_period")]
    pub generation_period: Option<usize>,
    pub cost_full: f64,
    pub v_init: f64,
    /// Parameters of the underlying normal for agent types.
    pub theta_mu: f64,
    pub theta_sigma: f64,
    pub update_rule: UpdateRule,
    pub min_observations: usize,
    pub shortfall_fill: ShortfallFill,
    pub kde: KdeSpec,
    pub reset_buffer_on_turnover: bool,
    pub reset_estimates_on_turnover: bool,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_agents: 25,
            n_rounds: 100,
            buffer_size: 100,
            df: 10.0,
            sigma_tr: 0.75,
            truncation_units: TruncationUnits::Scale,
            delta: 1.0,
            eta: 0.05,
            generation_period: default_generation_period(),
            cost_full: 0.03,
            v_init: 0.0075,
            theta_mu: 1.0,
            theta_sigma: 0.5,
            update_rule: UpdateRule::Ema,
            min_observations: 3,
            shortfall_fill: ShortfallFill::Probe,
            kde: KdeSpec::default(),
            reset_buffer_on_turnover: false,
            reset_estimates_on_turnover: false,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, reason: String| Err(Error::config(field, reason));
        if self.n_agents == 0 {
            return bad("n_agents", "must be >= 1".into());
        }
        if self.buffer_size < 3 {
            return bad(
                "buffer_size",
                format!("must be >= 3, got {}", self.buffer_size),
            );
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return bad("delta", format!("must lie in (0, 1], got {}", self.delta));
        }
        if !(self.eta.is_finite() && self.eta >= 0.0) {
            return bad("eta", format!("must be >= 0, got {}", self.eta));
        }
        if self.generation_period == Some(0) {
            return bad("generation_period", "must be >= 1 or null".into());
        }
        if !(self.cost_full.is_finite() && self.cost_full > 0.0) {
            return bad("cost_full", format!("must be > 0, got {}", self.cost_full));
        }
        if !self.v_init.is_finite() {
            return bad("v_init", "must be finite".into());
        }
        if !(self.theta_mu.is_finite() && self.theta_sigma.is_finite() && self.theta_sigma >= 0.0) {
            return bad(
                "theta_sigma",
                "lognormal parameters must be finite, sigma >= 0".into(),
            );
        }
        let dist = TrueDistribution::standard(self.df)?;
        TruncationSpec::with_units(self.sigma_tr, self.truncation_units, &dist)?;
        self.kde.validate()
    }

    /// Generation period that actually fires within `n_rounds`.
    pub fn effective_generation_period(&self) -> Option<usize> {
        self.generation_period.filter(|&p| p < self.n_rounds)
    }
}

/// One agent's part in a round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentStep {
    pub agent: usize,
    pub action: Action,
    pub sample: Option<f64>,
    /// Position in the round's insertion order, for contributors.
    pub insertion: Option<usize>,
    pub innovation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// 1-based round number.
    pub round: usize,
    pub generation: usize,
    pub steps: Vec<AgentStep>,
    pub n_full: usize,
    pub n_trunc: usize,
    pub n_abstain: usize,
    pub hellinger_before: f64,
    pub hellinger: f64,
    pub variance: f64,
    pub v_full: f64,
    pub v_trunc: f64,
    /// Standard deviation of the distribution agents sampled from.
    pub sampling_std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub config: SimConfig,
    pub initial_hellinger: f64,
    pub records: Vec<RoundRecord>,
    pub final_public: GriddedPdf,
    pub final_hellinger: f64,
    pub variance_trajectory: Vec<f64>,
    /// Rounds after which turnover hit the variance floor.
    pub collapse_floor_rounds: Vec<usize>,
}

impl SimResult {
    pub fn final_variance(&self) -> f64 {
        self.variance_trajectory.last().copied().unwrap_or(0.0)
    }
}

/// Evolving state of one run.
#[derive(Debug, Clone)]
pub struct SimState {
    config: SimConfig,
    agents: Vec<Agent>,
    estimates: ValueEstimates,
    buffer: VecDeque<(f64, Arm)>,
    sampling: TrueDistribution,
    truncation: TruncationSpec,
    truth: GriddedPdf,
    sqrt_truth: Vec<f64>,
    public: GriddedPdf,
    distance: f64,
    round: usize,
    generation: usize,
    theta_dist: LogNormal<f64>,
    rng: ChaCha8Rng,
    collapse_floor_rounds: Vec<usize>,
}

impl SimState {
    /// Draws agent types and pre-fills the buffer with full-distribution
    /// samples so the round-0 public pdf is defined.
    pub fn new(config: SimConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let sampling = TrueDistribution::standard(config.df)?;
        let truncation =
            TruncationSpec::with_units(config.sigma_tr, config.truncation_units, &sampling)?;
        let truth = density::eval_grid(&sampling, &config.kde.grid)?;
        let sqrt_truth = truth.sqrt_densities();
        let theta_dist = LogNormal::new(config.theta_mu, config.theta_sigma)
            .map_err(|e| Error::config("theta_sigma", e.to_string()))?;

        let agents = (0..config.n_agents)
            .map(|id| Agent {
                id,
                theta: theta_dist.sample(&mut rng),
            })
            .collect();
        let buffer: VecDeque<(f64, Arm)> = (0..config.buffer_size)
            .map(|_| (sampling.sample(&mut rng), Arm::Full))
            .collect();

        let mut state = Self {
            estimates: ValueEstimates::new(config.v_init),
            public: truth.clone(),
            distance: 0.0,
            config,
            agents,
            buffer,
            sampling,
            truncation,
            truth,
            sqrt_truth,
            round: 0,
            generation: 0,
            theta_dist,
            rng,
            collapse_floor_rounds: Vec::new(),
        };
        state.refit()?;
        Ok(state)
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn agents(&self) -> &[Agent] {
        &self.agents
    }

    pub fn estimates(&self) -> &ValueEstimates {
        &self.estimates
    }

    pub fn set_estimates(&mut self, est: ValueEstimates) {
        self.estimates = est;
    }

    pub fn sampling_distribution(&self) -> &TrueDistribution {
        &self.sampling
    }

    pub fn truncation(&self) -> &TruncationSpec {
        &self.truncation
    }

    /// Exact ground-truth density on the grid; fixed for the whole run.
    pub fn truth(&self) -> &GriddedPdf {
        &self.truth
    }

    pub fn public(&self) -> &GriddedPdf {
        &self.public
    }

    pub fn buffer_values(&self) -> Vec<f64> {
        self.buffer.iter().map(|(x, _)| *x).collect()
    }

    pub fn buffer(&self) -> &VecDeque<(f64, Arm)> {
        &self.buffer
    }

    /// Hellinger distance between the public pdf and the ground truth.
    pub fn distance(&self) -> f64 {
        self.distance
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn generation(&self) -> usize {
        self.generation
    }

    fn distance_of(&self, values: &[f64]) -> Result<(GriddedPdf, f64)> {
        let pdf = fit_kde(values, &self.config.kde)?;
        let d = density::hellinger_sqrt(pdf.grid(), &pdf.sqrt_densities(), &self.sqrt_truth);
        Ok((pdf, d))
    }

    fn refit(&mut self) -> Result<()> {
        (self.public, self.distance) = self.distance_of(&self.buffer_values())?;
        Ok(())
    }

    /// Innovation `x` would earn if it replaced the oldest buffer entry now.
    fn probe(&self, x: f64) -> Result<f64> {
        let mut values = self.buffer_values();
        if values.len() == self.config.buffer_size {
            values.remove(0);
        }
        values.push(x);
        Ok(self.distance - self.distance_of(&values)?.1)
    }

    fn push_sample(&mut self, value: f64, arm: Arm) {
        if self.buffer.len() == self.config.buffer_size {
            self.buffer.pop_front();
        }
        self.buffer.push_back((value, arm));
    }

    fn draw(&mut self, arm: Arm) -> f64 {
        match arm {
            Arm::Full => self.sampling.sample(&mut self.rng),
            Arm::Truncated => truncated_sample(&mut self.rng, &self.sampling, &self.truncation),
        }
    }

    /// Plays one round and returns its record.
    pub fn run_round(&mut self) -> Result<RoundRecord> {
        let cfg = &self.config;
        let mut steps: Vec<AgentStep> = self
            .agents
            .iter()
            .map(|a| AgentStep {
                agent: a.id,
                action: decide(a, &self.estimates, cfg.cost_full, cfg.delta),
                sample: None,
                insertion: None,
                innovation: None,
            })
            .collect();

        for step in steps.iter_mut() {
            step.sample = match step.action {
                Action::Full => Some(self.draw(Arm::Full)),
                Action::Truncated => Some(self.draw(Arm::Truncated)),
                Action::Abstain => None,
            };
        }

        let mut order: Vec<usize> = (0..steps.len())
            .filter(|&i| steps[i].sample.is_some())
            .collect();
        order.shuffle(&mut self.rng);

        let hellinger_before = self.distance;
        let mut full_obs = Vec::new();
        let mut trunc_obs = Vec::new();
        for (pos, &i) in order.iter().enumerate() {
            let value = steps[i].sample.expect("contributors have a sample");
            let arm = match steps[i].action {
                Action::Full => Arm::Full,
                _ => Arm::Truncated,
            };
            let before = self.distance;
            self.push_sample(value, arm);
            self.refit()?;
            let gain = before - self.distance;
            steps[i].insertion = Some(pos);
            steps[i].innovation = Some(gain);
            match arm {
                Arm::Full => full_obs.push(gain),
                Arm::Truncated => trunc_obs.push(gain),
            }
        }

        if self.config.shortfall_fill == ShortfallFill::Probe {
            for (arm, obs) in [(Arm::Full, &mut full_obs), (Arm::Truncated, &mut trunc_obs)] {
                while obs.len() < self.config.min_observations {
                    let x = self.draw(arm);
                    obs.push(self.probe(x)?);
                }
            }
        }
        update_estimates(
            &mut self.estimates,
            &full_obs,
            &trunc_obs,
            self.config.eta,
            self.config.update_rule,
            self.config.min_observations,
        );
        self.round += 1;

        let count = |a: Action| steps.iter().filter(|s| s.action == a).count();
        Ok(RoundRecord {
            round: self.round,
            generation: self.generation,
            n_full: count(Action::Full),
            n_trunc: count(Action::Truncated),
            n_abstain: count(Action::Abstain),
            steps,
            hellinger_before,
            hellinger: self.distance,
            variance: self.public.variance(),
            v_full: self.estimates.v_full,
            v_trunc: self.estimates.v_trunc,
            sampling_std: self.sampling.std(),
        })
    }

    /// Rescales the sampling distribution to the public pdf's standard
    /// deviation, recomputes truncation bounds and redraws agent types.
    ///
    /// Returns `true` when the public variance was below the collapse floor
    /// and the floor standard deviation was used instead.
    pub fn generation_turnover(&mut self) -> Result<bool> {
        let variance = self.public.variance();
        let floored = variance < COLLAPSE_VARIANCE_FLOOR;
        let target = if floored {
            self.collapse_floor_rounds.push(self.round);
            COLLAPSE_FLOOR_STD
        } else {
            variance.sqrt()
        };
        self.sampling = self.sampling.rescaled(target)?;
        self.truncation = self.truncation.recompute(&self.sampling);
        for agent in self.agents.iter_mut() {
            agent.theta = self.theta_dist.sample(&mut self.rng);
        }
        if self.config.reset_estimates_on_turnover {
            self.estimates = ValueEstimates::new(self.config.v_init);
        }
        if self.config.reset_buffer_on_turnover {
            self.buffer.clear();
            for _ in 0..self.config.buffer_size {
                let x = self.sampling.sample(&mut self.rng);
                self.buffer.push_back((x, Arm::Full));
            }
            self.refit()?;
        }
        self.generation += 1;
        Ok(floored)
    }
}

/// Runs `config.n_rounds` rounds with turnover after every multiple of the
/// generation period (not after the final round).
pub fn run_simulation(config: &SimConfig) -> Result<SimResult> {
    let mut state = SimState::new(config.clone())?;
    let initial_hellinger = state.distance();
    let period = config.effective_generation_period();
    let mut records = Vec::with_capacity(config.n_rounds);
    for _ in 0..config.n_rounds {
        let record = state.run_round()?;
        records.push(record);
        if let Some(p) = period {
            if state.round() % p == 0 && state.round() < config.n_rounds {
                state.generation_turnover()?;
            }
        }
    }
    let variance_trajectory = records.iter().map(|r| r.variance).collect();
    Ok(SimResult {
        config: config.clone(),
        initial_hellinger,
        final_hellinger: state.distance(),
        final_public: state.public().clone(),
        variance_trajectory,
        collapse_floor_rounds: state.collapse_floor_rounds.clone(),
        records,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CollapseMetrics {
    pub variance_trajectory: Vec<f64>,
    pub variance_slope: f64,
    /// Variance trends downward faster than [`NARROWING_SLOPE`] per round.
    pub narrowing: bool,
    pub final_distance: f64,
}

pub fn collapse_metrics(result: &SimResult) -> CollapseMetrics {
    let slope = crate::stats::ols_slope(&result.variance_trajectory);
    CollapseMetrics {
        variance_trajectory: result.variance_trajectory.clone(),
        variance_slope: slope,
        narrowing: slope < -NARROWING_SLOPE,
        final_distance: result.final_hellinger,
    }
}
