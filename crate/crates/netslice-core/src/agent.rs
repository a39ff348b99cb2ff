//! The per-slice constrained learner: a clipped-surrogate actor-critic with
//! Lagrangian SLA shaping, projected-subgradient multiplier updates,
//! truncated-episode advantage bootstrapping, and behavior-cloning
//! pretraining from the rule-based policy.

use crate::domain::{Action, Episode, PolicySource, State, ACTION_DIM, STATE_DIM};
use crate::nn::{logit, sigmoid, Adam, Mlp, MlpGrads, OutputActivation, TrainedMlp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

const HALF_LOG_2PI: f64 = 0.9189385332046727;
const LOG_STD_MIN: f64 = -4.0;
const LOG_STD_MAX: f64 = 1.0;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentConfig {
    pub hidden: Vec<usize>,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub clip_ratio: f64,
    pub discount: f64,
    pub gae_decay: f64,
    pub ppo_epochs: usize,
    pub minibatch: usize,
    /// Subgradient step size for the SLA multiplier.
    pub lambda_step: f64,
    pub init_log_std: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            hidden: vec![128, 64, 32],
            lr_actor: 3e-4,
            lr_critic: 1e-3,
            clip_ratio: 0.2,
            discount: 0.99,
            gae_decay: 0.95,
            ppo_epochs: 4,
            minibatch: 256,
            lambda_step: 10.0,
            init_log_std: -1.9, // exploration std ~0.15 in pre-squash space
        }
    }
}

/// Per-slice learner state: squashed-Gaussian actor, reward critic, and the
/// SLA multiplier.
#[derive(Debug, Clone)]
pub struct Agent {
    pub cfg: AgentConfig,
    pub horizon: usize,
    pub actor: TrainedMlp,
    pub log_std: Vec<f64>,
    pub opt_log_std: Adam,
    pub critic: TrainedMlp,
    /// Lagrangian multiplier; never negative.
    pub lambda: f64,
}

/// Per-slot constraint-shaped reward: `r - (lambda / T) * c`.
pub fn shaped_reward(r: f64, c: f64, lambda: f64, horizon: usize) -> f64 {
    assert!(horizon >= 1);
    r - lambda / horizon as f64 * c
}

/// Effective (policy-run) transitions of possibly-truncated episodes, with
/// advantages and return targets ready for a surrogate update.
#[derive(Debug, Clone, Default)]
pub struct RolloutBuffer {
    pub features: Vec<[f64; STATE_DIM]>,
    /// Pre-squash coordinates of the executed actions.
    pub pre_squash: Vec<[f64; ACTION_DIM]>,
    pub old_log_prob: Vec<f64>,
    pub advantages: Vec<f64>,
    /// Return targets in per-slot units (shaped return divided by horizon).
    pub returns: Vec<f64>,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrainStats {
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub samples: usize,
}

impl Agent {
    pub fn new(cfg: AgentConfig, horizon: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut actor_dims = vec![STATE_DIM];
        actor_dims.extend_from_slice(&cfg.hidden);
        actor_dims.push(ACTION_DIM);
        let mut critic_dims = vec![STATE_DIM];
        critic_dims.extend_from_slice(&cfg.hidden);
        critic_dims.push(1);
        let actor = Mlp::init(&actor_dims, OutputActivation::Identity, &mut rng);
        let critic = Mlp::init(&critic_dims, OutputActivation::Identity, &mut rng);
        Agent {
            actor: TrainedMlp::new(actor, cfg.lr_actor),
            log_std: vec![cfg.init_log_std; ACTION_DIM],
            opt_log_std: Adam::new(cfg.lr_actor, ACTION_DIM),
            critic: TrainedMlp::new(critic, cfg.lr_critic),
            lambda: 0.0,
            cfg,
            horizon,
        }
    }

    fn stds(&self) -> [f64; ACTION_DIM] {
        let mut out = [0.0; ACTION_DIM];
        for (o, ls) in out.iter_mut().zip(self.log_std.iter()) {
            *o = ls.clamp(LOG_STD_MIN, LOG_STD_MAX).exp();
        }
        out
    }

    /// Samples (or, with `explore = false`, returns the mean of) the
    /// squashed-Gaussian policy. The log-probability includes the squash
    /// correction so it is the density of the emitted action.
    pub fn act<R: Rng + ?Sized>(&self, state: &State, explore: bool, rng: &mut R) -> (Action, f64) {
        let feat = state.features(self.horizon);
        let mu = self.actor.net.forward(&feat);
        let stds = self.stds();
        let mut arr = [0.0; ACTION_DIM];
        let mut pre = [0.0; ACTION_DIM];
        for d in 0..ACTION_DIM {
            let u = if explore {
                let z: f64 = StandardNormal.sample(rng);
                mu[d] + stds[d] * z
            } else {
                mu[d]
            };
            pre[d] = u;
            arr[d] = sigmoid(u).clamp(0.0, 1.0);
        }
        let logp = self.log_prob_pre(&mu, &stds, &pre) - squash_correction(&arr);
        (Action::from_array(arr), logp)
    }

    /// Log-density of an executed action under the current policy.
    pub fn log_prob(&self, state: &State, action: &Action) -> f64 {
        let feat = state.features(self.horizon);
        let mu = self.actor.net.forward(&feat);
        let stds = self.stds();
        let arr = action.to_array();
        let mut pre = [0.0; ACTION_DIM];
        for d in 0..ACTION_DIM {
            pre[d] = logit(arr[d]);
        }
        self.log_prob_pre(&mu, &stds, &pre) - squash_correction(&arr)
    }

    /// Gaussian log-density in pre-squash coordinates.
    fn log_prob_pre(&self, mu: &[f64], stds: &[f64; ACTION_DIM], pre: &[f64; ACTION_DIM]) -> f64 {
        let mut lp = 0.0;
        for d in 0..ACTION_DIM {
            let z = (pre[d] - mu[d]) / stds[d];
            lp += -0.5 * z * z - stds[d].ln() - HALF_LOG_2PI;
        }
        lp
    }

    /// Critic value in per-slot units.
    pub fn value(&self, state: &State) -> f64 {
        self.critic.net.forward(&state.features(self.horizon))[0]
    }

    /// Projected subgradient ascent on the SLA constraint: the realized mean
    /// episode cost (all transitions, baseline-sourced included) against the
    /// threshold.
    pub fn update_lambda(&mut self, episodes: &[Episode], c_max: f64) -> f64 {
        assert!(!episodes.is_empty());
        let mean_cost =
            episodes.iter().map(|e| e.mean_cost()).sum::<f64>() / episodes.len() as f64;
        self.lambda = (self.lambda + self.cfg.lambda_step * (mean_cost - c_max)).max(0.0);
        self.lambda
    }

    /// Builds the effective-transition buffer: baseline-sourced slots are
    /// discarded, truncated episodes bootstrap the tail with the critic's
    /// value at the truncation slot.
    pub fn build_buffer(&self, episodes: &[Episode]) -> RolloutBuffer {
        let mut buf = RolloutBuffer::default();
        let t_f = self.horizon as f64;
        let gamma = self.cfg.discount;
        let gae = self.cfg.gae_decay;
        for ep in episodes {
            let learned_len = ep.truncation_slot.unwrap_or(ep.transitions.len());
            if learned_len == 0 {
                continue;
            }
            debug_assert!(ep.transitions[..learned_len]
                .iter()
                .all(|t| t.source == PolicySource::Learned));
            // Per-slot shaped rewards and values (per-slot units).
            let shaped: Vec<f64> = ep.transitions[..learned_len]
                .iter()
                .map(|t| shaped_reward(t.reward, t.cost, self.lambda, self.horizon))
                .collect();
            let values: Vec<f64> = ep.transitions[..learned_len]
                .iter()
                .map(|t| self.value(&t.state) * t_f)
                .collect();
            // Bootstrap the tail: the critic's estimate at the truncation
            // state for truncated episodes, zero at a natural end.
            let tail_value = match ep.truncation_slot {
                Some(tr) if tr < ep.transitions.len() => {
                    self.value(&ep.transitions[tr].state) * t_f
                }
                _ => 0.0,
            };
            let mut adv = vec![0.0; learned_len];
            let mut last = 0.0;
            for t in (0..learned_len).rev() {
                let next_v = if t + 1 < learned_len {
                    values[t + 1]
                } else {
                    tail_value
                };
                let delta = shaped[t] + gamma * next_v - values[t];
                last = delta + gamma * gae * last;
                adv[t] = last;
            }
            for t in 0..learned_len {
                let tr = &ep.transitions[t];
                buf.features.push(tr.state.features(self.horizon));
                let arr = tr.action.to_array();
                let mut pre = [0.0; ACTION_DIM];
                for d in 0..ACTION_DIM {
                    pre[d] = logit(arr[d]);
                }
                buf.pre_squash.push(pre);
                buf.old_log_prob.push(self.log_prob(&tr.state, &tr.action));
                buf.advantages.push(adv[t]);
                buf.returns.push((adv[t] + values[t]) / t_f);
            }
        }
        // Normalize advantages.
        if buf.len() > 1 {
            let n = buf.len() as f64;
            let mean = buf.advantages.iter().sum::<f64>() / n;
            let var = buf
                .advantages
                .iter()
                .map(|a| (a - mean) * (a - mean))
                .sum::<f64>()
                / n;
            let std = var.sqrt().max(1e-8);
            for a in buf.advantages.iter_mut() {
                *a = (*a - mean) / std;
            }
        }
        buf
    }

    /// Clipped-surrogate policy and value update over the buffer.
    pub fn ppo_update<R: Rng>(&mut self, buf: &RolloutBuffer, rng: &mut R) -> TrainStats {
        assert!(!buf.is_empty(), "PPO update needs a non-empty buffer");
        let n = buf.len();
        let clip = self.cfg.clip_ratio;
        let mut stats = TrainStats {
            samples: n,
            ..Default::default()
        };
        let mut order: Vec<usize> = (0..n).collect();
        for _epoch in 0..self.cfg.ppo_epochs {
            // Fisher-Yates with the caller's RNG keeps updates reproducible.
            for i in (1..n).rev() {
                let j = rng.gen_range(0..=i);
                order.swap(i, j);
            }
            for chunk in order.chunks(self.cfg.minibatch.max(1)) {
                let b = chunk.len() as f64;
                let mut actor_grads = MlpGrads::zeros_like(&self.actor.net);
                let mut ls_grads = [0.0; ACTION_DIM];
                let mut critic_grads = MlpGrads::zeros_like(&self.critic.net);
                let stds = self.stds();
                let mut actor_loss = 0.0;
                let mut critic_loss = 0.0;
                for &i in chunk {
                    let feat = &buf.features[i];
                    let adv = buf.advantages[i];
                    let cache = self.actor.net.forward_cached(feat);
                    let mu = &cache.output;
                    let pre = &buf.pre_squash[i];
                    let mut logp_new = 0.0;
                    let mut z = [0.0; ACTION_DIM];
                    for d in 0..ACTION_DIM {
                        z[d] = (pre[d] - mu[d]) / stds[d];
                        logp_new += -0.5 * z[d] * z[d] - stds[d].ln() - HALF_LOG_2PI;
                    }
                    // Old log-prob in the same (pre-squash) coordinates; the
                    // squash correction cancels in the ratio.
                    let mut logp_old = buf.old_log_prob[i];
                    let arr_sq: [f64; ACTION_DIM] = {
                        let mut a = [0.0; ACTION_DIM];
                        for d in 0..ACTION_DIM {
                            a[d] = sigmoid(pre[d]);
                        }
                        a
                    };
                    logp_old += squash_correction(&arr_sq);
                    let ratio = (logp_new - logp_old).clamp(-20.0, 20.0).exp();
                    let clipped = ratio.clamp(1.0 - clip, 1.0 + clip);
                    let obj = (ratio * adv).min(clipped * adv);
                    actor_loss -= obj / b;
                    // Gradient flows only when the unclipped branch is active.
                    if (ratio * adv) <= (clipped * adv) + 1e-15 {
                        let coeff = -ratio * adv / b;
                        // d logp / d mu_d = z_d / std_d
                        let mut upstream = vec![0.0; ACTION_DIM];
                        for d in 0..ACTION_DIM {
                            upstream[d] = coeff * z[d] / stds[d];
                        }
                        let g = self.actor.net.backprop(&cache, &upstream);
                        actor_grads.accumulate(&g);
                        for d in 0..ACTION_DIM {
                            ls_grads[d] += coeff * (z[d] * z[d] - 1.0);
                        }
                    }
                    // Critic regression to per-slot returns.
                    let vcache = self.critic.net.forward_cached(feat);
                    let v = vcache.output[0];
                    let err = v - buf.returns[i];
                    critic_loss += err * err / b;
                    let g = self.critic.net.backprop(&vcache, &[2.0 * err / b]);
                    critic_grads.accumulate(&g);
                }
                self.actor.apply(&actor_grads);
                self.opt_log_std.step(&mut self.log_std, &ls_grads);
                for ls in self.log_std.iter_mut() {
                    *ls = ls.clamp(LOG_STD_MIN, LOG_STD_MAX);
                }
                self.critic.apply(&critic_grads);
                stats.actor_loss = actor_loss;
                stats.critic_loss = critic_loss;
            }
        }
        stats
    }

    /// Supervised pretraining of the actor mean toward baseline actions.
    /// Returns the final mean-squared action error.
    pub fn bc_pretrain<R: Rng>(
        &mut self,
        dataset: &[(State, Action)],
        epochs: usize,
        rng: &mut R,
    ) -> f64 {
        assert!(!dataset.is_empty(), "behavior cloning needs data");
        let n = dataset.len();
        let batch = self.cfg.minibatch.max(1).min(n);
        let mut order: Vec<usize> = (0..n).collect();
        let mut last_mse = f64::NAN;
        for _ in 0..epochs {
            for i in (1..n).rev() {
                let j = rng.gen_range(0..=i);
                order.swap(i, j);
            }
            for chunk in order.chunks(batch) {
                let b = chunk.len() as f64;
                let mut grads = MlpGrads::zeros_like(&self.actor.net);
                for &i in chunk {
                    let (state, target) = &dataset[i];
                    let feat = state.features(self.horizon);
                    let cache = self.actor.net.forward_cached(&feat);
                    let tgt = target.to_array();
                    let mut upstream = vec![0.0; ACTION_DIM];
                    for d in 0..ACTION_DIM {
                        let y = sigmoid(cache.output[d]);
                        upstream[d] = 2.0 * (y - tgt[d]) * y * (1.0 - y) / (b * ACTION_DIM as f64);
                    }
                    let g = self.actor.net.backprop(&cache, &upstream);
                    grads.accumulate(&g);
                }
                self.actor.apply(&grads);
            }
            last_mse = self.bc_mse(dataset);
        }
        if epochs == 0 {
            last_mse = self.bc_mse(dataset);
        }
        last_mse
    }

    /// Mean squared error between actor mean actions and a dataset.
    pub fn bc_mse(&self, dataset: &[(State, Action)]) -> f64 {
        let mut total = 0.0;
        for (state, target) in dataset {
            let feat = state.features(self.horizon);
            let out = self.actor.net.forward(&feat);
            let tgt = target.to_array();
            for d in 0..ACTION_DIM {
                let e = sigmoid(out[d]) - tgt[d];
                total += e * e;
            }
        }
        total / (dataset.len() * ACTION_DIM) as f64
    }

    pub fn mean_action(&self, state: &State) -> Action {
        let out = self.actor.net.forward(&state.features(self.horizon));
        let mut arr = [0.0; ACTION_DIM];
        for d in 0..ACTION_DIM {
            arr[d] = sigmoid(out[d]);
        }
        Action::from_array(arr)
    }
}

/// `sum_d log(a_d (1 - a_d))`: the log-Jacobian of the sigmoid squash.
fn squash_correction(arr: &[f64; ACTION_DIM]) -> f64 {
    arr.iter()
        .map(|&a| {
            let a = a.clamp(1e-9, 1.0 - 1e-9);
            (a * (1.0 - a)).ln()
        })
        .sum()
}

// ---------------------------------------------------------------------------
// Checkpointing
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
pub struct AgentCheckpoint {
    pub schema_version: u32,
    pub cfg: AgentConfig,
    pub horizon: usize,
    pub actor: serde_json::Value,
    pub critic: serde_json::Value,
    pub log_std: Vec<f64>,
    pub lambda: f64,
    pub opt_actor: Adam,
    pub opt_critic: Adam,
    pub opt_log_std: Adam,
}

impl Agent {
    pub fn to_checkpoint(&self) -> AgentCheckpoint {
        AgentCheckpoint {
            schema_version: crate::nn::CHECKPOINT_SCHEMA_VERSION,
            cfg: self.cfg.clone(),
            horizon: self.horizon,
            actor: crate::nn::mlp_to_json(&self.actor.net),
            critic: crate::nn::mlp_to_json(&self.critic.net),
            log_std: self.log_std.clone(),
            lambda: self.lambda,
            opt_actor: self.actor.opt.clone(),
            opt_critic: self.critic.opt.clone(),
            opt_log_std: self.opt_log_std.clone(),
        }
    }

    pub fn from_checkpoint(doc: AgentCheckpoint) -> Result<Self, crate::nn::NnError> {
        let actor_net = crate::nn::mlp_from_json(&doc.actor)?;
        let critic_net = crate::nn::mlp_from_json(&doc.critic)?;
        let mut actor = TrainedMlp::new(actor_net, doc.cfg.lr_actor);
        actor.opt = doc.opt_actor;
        let mut critic = TrainedMlp::new(critic_net, doc.cfg.lr_critic);
        critic.opt = doc.opt_critic;
        Ok(Agent {
            cfg: doc.cfg,
            horizon: doc.horizon,
            actor,
            log_std: doc.log_std,
            opt_log_std: doc.opt_log_std,
            critic,
            lambda: doc.lambda,
        })
    }
}
