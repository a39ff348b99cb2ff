//! The safety layer: a probabilistic cost-to-go estimator fitted to
//! baseline rollouts by variational inference, the proactive switching rule
//! that hands control to the baseline before the SLA budget can be blown,
//! and the guarded episode runner enforcing no-switch-back.

use crate::agent::Agent;
use crate::baseline::{baseline_act, project_actions, GridPolicyTable};
use crate::domain::{Action, Episode, PolicySource, State, Transition, STATE_DIM};
use crate::env::{Env, EnvError};
use crate::nn::{elbo_loss, GaussianParamDist, VariationalTrainer};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SafetyError {
    #[error("estimator fit needs at least one episode with transitions")]
    EmptyData,
    #[error("estimator has not been fitted yet")]
    Untrained,
}

/// Risk posture of the switching rule.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SafetyConfig {
    /// Risk factor weighting the predictive standard deviation; larger is
    /// more conservative.
    pub eta: f64,
    /// Monte-Carlo parameter samples per prediction.
    pub samples: usize,
}

impl Default for SafetyConfig {
    fn default() -> Self {
        SafetyConfig {
            eta: 1.0,
            samples: 16,
        }
    }
}

impl SafetyConfig {
    pub fn validate(&self) {
        assert!(self.eta >= 0.0, "risk factor must be non-negative");
        assert!(self.samples >= 1, "need at least one predictive sample");
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub prior_std: f64,
    pub init_log_std: f64,
    /// Multiplier on the 1/N KL weight; tempers the prior on small data.
    pub kl_scale: f64,
    /// Gradient steps per [`CostValueEstimator::fit`] call.
    pub fit_steps: usize,
    /// Reparameterized samples per gradient step.
    pub train_samples: usize,
    /// Most-recent datapoints retained across incremental refits.
    pub window_cap: usize,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            hidden: vec![32, 32],
            lr: 1e-2,
            prior_std: 1.0,
            init_log_std: -3.0,
            kl_scale: 1e-3,
            fit_steps: 300,
            train_samples: 2,
            window_cap: 4096,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct FitStats {
    pub initial_loss: f64,
    pub final_loss: f64,
    pub datapoints: usize,
}

/// Distribution over cost-to-go functions: maps a state observation to the
/// remaining episode cost the baseline policy would incur from there.
/// Targets are trained in per-horizon units (suffix sum divided by `T`) so
/// the regression stays O(1); predictions are scaled back to raw sums.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostValueEstimator {
    pub trainer: VariationalTrainer,
    pub cfg: EstimatorConfig,
    pub horizon: usize,
    data: Vec<(Vec<f64>, f64)>,
    trained: bool,
}

impl CostValueEstimator {
    pub fn new(cfg: EstimatorConfig, horizon: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dims = vec![STATE_DIM];
        dims.extend_from_slice(&cfg.hidden);
        dims.push(1);
        let dist = GaussianParamDist::new(&dims, cfg.prior_std, cfg.init_log_std, &mut rng);
        CostValueEstimator {
            trainer: VariationalTrainer::new(dist, cfg.lr),
            cfg,
            horizon,
            data: Vec::new(),
            trained: false,
        }
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    pub fn datapoints(&self) -> usize {
        self.data.len()
    }

    /// Appends the episodes' (state, suffix cost) pairs to the sliding
    /// window and refits the posterior. Incremental by design: call again
    /// as more baseline transitions arrive.
    pub fn fit<R: Rng>(&mut self, episodes: &[Episode], rng: &mut R) -> Result<FitStats, SafetyError> {
        let t_f = self.horizon as f64;
        for ep in episodes {
            let mut suffix = 0.0;
            let mut rows = Vec::with_capacity(ep.transitions.len());
            for tr in ep.transitions.iter().rev() {
                suffix += tr.cost;
                rows.push((tr.state.features(self.horizon).to_vec(), suffix / t_f));
            }
            rows.reverse();
            self.data.extend(rows);
        }
        if self.data.is_empty() {
            return Err(SafetyError::EmptyData);
        }
        if self.data.len() > self.cfg.window_cap {
            let drop = self.data.len() - self.cfg.window_cap;
            self.data.drain(..drop);
        }
        let xs: Vec<Vec<f64>> = self.data.iter().map(|(x, _)| x.clone()).collect();
        let ys: Vec<f64> = self.data.iter().map(|(_, y)| *y).collect();
        let kl_weight = self.cfg.kl_scale / xs.len() as f64;
        let mut stats = FitStats {
            datapoints: xs.len(),
            ..Default::default()
        };
        for step in 0..self.cfg.fit_steps {
            let (loss, grads) = elbo_loss(
                &self.trainer.dist,
                &xs,
                &ys,
                self.cfg.train_samples,
                kl_weight,
                rng,
            );
            if step == 0 {
                stats.initial_loss = loss;
            }
            stats.final_loss = loss;
            self.trainer.apply(&grads);
        }
        self.trained = true;
        Ok(stats)
    }

    /// Monte-Carlo predictive mean and standard deviation of the remaining
    /// episode cost (raw sum units). Deterministic given the RNG state.
    pub fn predict(
        &self,
        state: &State,
        cfg: &SafetyConfig,
        rng: &mut dyn RngCore,
    ) -> Result<(f64, f64), SafetyError> {
        if !self.trained {
            return Err(SafetyError::Untrained);
        }
        let feat = state.features(self.horizon);
        let (mu, sigma) = self.trainer.dist.predict(&feat, cfg.samples, rng);
        let t_f = self.horizon as f64;
        Ok((mu * t_f, sigma * t_f))
    }
}

/// Absolute tolerance making the "ties switch" rule robust to floating
/// point (e.g. `96 * 0.05` is not exactly `4.8`).
const SWITCH_TIE_EPS: f64 = 1e-9;

/// Switching rule: hand over iff `cum_cost + mu + eta * sigma >= T * C_max`.
/// Equality switches (conservative).
pub fn should_switch(
    cum_cost: f64,
    mu: f64,
    sigma: f64,
    cfg: &SafetyConfig,
    horizon: usize,
    c_max: f64,
) -> bool {
    debug_assert!(cum_cost.is_finite() && mu.is_finite() && sigma.is_finite());
    cum_cost + mu + cfg.eta * sigma >= horizon as f64 * c_max - SWITCH_TIE_EPS
}

/// Overrun tolerated by the reactive rule, as a fraction of the episode
/// budget `T * C_max`. Estimator-free switching cannot tell a transient
/// peak-hour spike from a genuinely runaway episode; tolerating half the
/// budget of overrun keeps it from surrendering the episode to every
/// spike while still reacting to runaways long before the full budget is
/// spent (the point at which the episode is already lost).
pub const REACTIVE_GRACE_FRACTION: f64 = 0.5;

/// Reactive (estimator-free) switching rule: hand over once the realized
/// cumulative cost overruns the budget for the elapsed portion of the
/// episode by more than the grace allowance, i.e.
/// `cum_cost > elapsed_slots * C_max + grace` with
/// `grace = REACTIVE_GRACE_FRACTION * T * C_max`. Without a cost-to-go
/// prediction, comparing against the full-episode budget would fire only
/// when the episode is already lost; pro-rating the budget reacts to
/// realized overruns while they are still recoverable.
pub fn should_switch_reactive(
    cum_cost: f64,
    elapsed_slots: usize,
    horizon: usize,
    c_max: f64,
) -> bool {
    debug_assert!(cum_cost.is_finite());
    let grace = REACTIVE_GRACE_FRACTION * horizon as f64 * c_max;
    cum_cost > elapsed_slots as f64 * c_max + grace + SWITCH_TIE_EPS
}

/// No-switch-back enforcement within one episode.
#[derive(Debug, Clone, Default)]
pub struct SwitchGuard {
    switched_at: Option<usize>,
}

impl SwitchGuard {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn switched_at(&self) -> Option<usize> {
        self.switched_at
    }

    pub fn is_switched(&self) -> bool {
        self.switched_at.is_some()
    }

    /// Evaluates the rule at `slot` unless already switched; returns who
    /// controls this slot.
    pub fn decide(
        &mut self,
        slot: usize,
        cum_cost: f64,
        mu: f64,
        sigma: f64,
        cfg: &SafetyConfig,
        horizon: usize,
        c_max: f64,
    ) -> PolicySource {
        if self.switched_at.is_none()
            && should_switch(cum_cost, mu, sigma, cfg, horizon, c_max)
        {
            self.switched_at = Some(slot);
        }
        if self.switched_at.is_some() {
            PolicySource::Baseline
        } else {
            PolicySource::Learned
        }
    }

    /// Like [`decide`](Self::decide) but with the estimator-free reactive
    /// rule ([`should_switch_reactive`]). `cum_cost` must cover exactly the
    /// `slot` slots already executed.
    pub fn decide_reactive(
        &mut self,
        slot: usize,
        cum_cost: f64,
        horizon: usize,
        c_max: f64,
    ) -> PolicySource {
        if self.switched_at.is_none() && should_switch_reactive(cum_cost, slot, horizon, c_max) {
            self.switched_at = Some(slot);
        }
        if self.switched_at.is_some() {
            PolicySource::Baseline
        } else {
            PolicySource::Learned
        }
    }
}

/// Anything able to score the remaining-episode cost of a state. Lets the
/// guarded runner accept either the fitted estimator or a test oracle.
pub trait CostToGo {
    fn cost_to_go(&self, state: &State, rng: &mut dyn RngCore) -> (f64, f64);
}

pub struct EstimatorCostToGo<'a> {
    pub est: &'a CostValueEstimator,
    pub cfg: SafetyConfig,
}

impl CostToGo for EstimatorCostToGo<'_> {
    fn cost_to_go(&self, state: &State, rng: &mut dyn RngCore) -> (f64, f64) {
        self.est
            .predict(state, &self.cfg, rng)
            .expect("guarded run requires a fitted estimator")
    }
}

/// Per-slot action source for the guarded slice.
pub trait ActPolicy {
    fn act(&self, state: &State, rng: &mut dyn RngCore) -> Action;
}

impl ActPolicy for Agent {
    fn act(&self, state: &State, rng: &mut dyn RngCore) -> Action {
        let (a, _) = Agent::act(self, state, true, rng);
        a
    }
}

/// Runs one episode for `slice_idx` under the learned policy with the
/// switching guard armed; every other slice follows its baseline table.
/// Actions are jointly scaled to capacity before stepping, and the executed
/// (post-projection) actions are what the episode records.
#[allow(clippy::too_many_arguments)]
pub fn run_guarded_episode<P: ActPolicy + ?Sized, C: CostToGo + ?Sized>(
    env: &mut Env,
    slice_idx: usize,
    policy: &P,
    estimator: &C,
    tables: &[GridPolicyTable],
    cfg: &SafetyConfig,
    c_max: f64,
    episode_seed: u64,
    rng: &mut dyn RngCore,
) -> Result<Episode, EnvError> {
    cfg.validate();
    let n = env.num_slices();
    assert_eq!(tables.len(), n, "one baseline table per slice");
    let horizon = env.horizon();
    let mut states = env.reset(episode_seed);
    let mut guard = SwitchGuard::new();
    let mut transitions = Vec::with_capacity(horizon);
    for slot in 0..horizon {
        let my_state = states[slice_idx];
        let source = if guard.is_switched() {
            PolicySource::Baseline
        } else {
            let (mu, sigma) = estimator.cost_to_go(&my_state, rng);
            guard.decide(slot, my_state.cum_cost, mu, sigma, cfg, horizon, c_max)
        };
        let mut actions: Vec<Action> = (0..n)
            .map(|i| baseline_act(&tables[i], &states[i]))
            .collect();
        if source == PolicySource::Learned {
            actions[slice_idx] = policy.act(&my_state, rng).clamped();
        }
        let actions = project_actions(&actions, &env.config.capacities);
        let results = env.step(&actions)?;
        transitions.push(Transition {
            state: my_state,
            action: actions[slice_idx],
            reward: results[slice_idx].reward,
            cost: results[slice_idx].cost,
            source,
            perf_raw: results[slice_idx].perf,
        });
        states = results.into_iter().map(|r| r.state).collect();
    }
    Ok(Episode {
        transitions,
        truncation_slot: guard.switched_at(),
    })
}
