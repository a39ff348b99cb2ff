//! Joint multi-slice episode runner: per-slice agents guarded by the
//! safety layer, negotiated to feasibility by the coordination layer, with
//! ablation switches for every variant the evaluation compares.

use crate::agent::Agent;
use crate::baseline::{baseline_act, project_actions, GridPolicyTable};
use crate::coordination::{coordinate, ActionModifier, CoordState, ModifierNet};
use crate::domain::{
    Action, Episode, PolicySource, ResourceVector, State, Transition, ACTION_DIM,
};
use crate::env::{Env, EnvError};
use crate::safety::{CostValueEstimator, SafetyConfig, SwitchGuard};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::str::FromStr;

/// Which variant of the stack runs an episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RunMode {
    /// Everything on: guarded switching + learned coordination.
    Full,
    /// No baseline switching: the learned policy keeps control always.
    NoBaseline,
    /// No estimator: switching reacts only to realized cumulative cost.
    NoEstimator,
    /// Coordination replaced by uniform capacity scaling.
    Projection,
    /// Estimator predictions corrupted by additive noise.
    EstNoise,
    /// Modifier outputs corrupted by additive noise.
    MdNoise,
}

impl RunMode {
    pub const ALL: [RunMode; 6] = [
        RunMode::Full,
        RunMode::NoBaseline,
        RunMode::NoEstimator,
        RunMode::Projection,
        RunMode::EstNoise,
        RunMode::MdNoise,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            RunMode::Full => "full",
            RunMode::NoBaseline => "NB",
            RunMode::NoEstimator => "NE",
            RunMode::Projection => "projection",
            RunMode::EstNoise => "est-noise",
            RunMode::MdNoise => "md-noise",
        }
    }
}

impl FromStr for RunMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(RunMode::Full),
            "NB" => Ok(RunMode::NoBaseline),
            "NE" => Ok(RunMode::NoEstimator),
            "projection" => Ok(RunMode::Projection),
            "est-noise" => Ok(RunMode::EstNoise),
            "md-noise" => Ok(RunMode::MdNoise),
            other => Err(format!(
                "unknown mode '{other}' (expected NB|NE|projection|est-noise|md-noise|full)"
            )),
        }
    }
}

/// Everything one slice brings to a joint episode.
pub struct SliceController {
    pub agent: Agent,
    pub estimator: CostValueEstimator,
    pub table: GridPolicyTable,
    pub modifier: ModifierNet,
    pub safety: SafetyConfig,
}

/// Knobs of the joint runner.
#[derive(Debug, Clone)]
pub struct RolloutConfig {
    pub mode: RunMode,
    /// Sample actions (training) vs. use policy means (evaluation).
    pub explore: bool,
    /// Additive std on predicted cost-to-go means in est-noise mode.
    pub est_noise_std: f64,
    /// Additive std on modifier outputs in md-noise mode.
    pub md_noise_std: f64,
    /// Reset the coordination duals before every slot instead of carrying
    /// them over (disables warm start; used to measure its benefit).
    pub cold_start: bool,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        RolloutConfig {
            mode: RunMode::Full,
            explore: true,
            est_noise_std: 3.0,
            md_noise_std: 0.1,
            cold_start: false,
        }
    }
}

/// Per-episode result of the joint runner.
pub struct JointOutcome {
    /// One episode per slice, aligned with the controller order.
    pub episodes: Vec<Episode>,
    /// Coordination rounds used at each slot.
    pub coord_rounds: Vec<usize>,
    /// Slots where the fallback projection fired.
    pub fallback_slots: usize,
}

struct NoisyModifier<'a> {
    inner: &'a ModifierNet,
    noise: [f64; ACTION_DIM],
}

impl ActionModifier for NoisyModifier<'_> {
    fn modify(&self, s: &State, a: &Action, beta: &ResourceVector) -> Action {
        let mut arr = self.inner.modify(s, a, beta).to_array();
        for (v, n) in arr.iter_mut().zip(self.noise.iter()) {
            *v = (*v + n).clamp(0.0, 1.0);
        }
        Action::from_array(arr)
    }
}

/// Runs one joint episode of all slices under `mode`. The coordination
/// duals in `coord` persist across slots (warm start); callers decide
/// whether to reset them between episodes.
pub fn run_joint_episode<R: Rng>(
    env: &mut Env,
    controllers: &[SliceController],
    coord: &mut CoordState,
    cfg: &RolloutConfig,
    episode_seed: u64,
    rng: &mut R,
) -> Result<JointOutcome, EnvError> {
    let n = env.num_slices();
    assert_eq!(controllers.len(), n, "one controller per slice");
    let horizon = env.horizon();
    let mut states = env.reset(episode_seed);
    let mut guards: Vec<SwitchGuard> = (0..n).map(|_| SwitchGuard::new()).collect();
    let mut per_slice: Vec<Vec<Transition>> = (0..n).map(|_| Vec::with_capacity(horizon)).collect();
    let mut coord_rounds = Vec::with_capacity(horizon);
    let mut fallback_slots = 0usize;

    for slot in 0..horizon {
        // 1. Safety decisions.
        let mut sources = Vec::with_capacity(n);
        for i in 0..n {
            let ctl = &controllers[i];
            let c_max = env.spec(i).sla_threshold;
            let source = match cfg.mode {
                RunMode::NoBaseline => PolicySource::Learned,
                RunMode::NoEstimator => {
                    guards[i].decide_reactive(slot, states[i].cum_cost, horizon, c_max)
                }
                _ => {
                    if guards[i].is_switched() {
                        PolicySource::Baseline
                    } else {
                        let (mut mu, sigma) = ctl
                            .estimator
                            .predict(&states[i], &ctl.safety, rng)
                            .expect("joint rollout requires fitted estimators");
                        if cfg.mode == RunMode::EstNoise {
                            let z: f64 = StandardNormal.sample(rng);
                            // Cost-to-go is non-negative, so the corrupted
                            // prediction is clamped at zero; the realized
                            // cum-cost term then still forces a switch once
                            // the budget is actually spent.
                            mu = (mu + cfg.est_noise_std * z).max(0.0);
                        }
                        guards[i].decide(
                            slot,
                            states[i].cum_cost,
                            mu,
                            sigma,
                            &ctl.safety,
                            horizon,
                            c_max,
                        )
                    }
                }
            };
            sources.push(source);
        }

        // 2. Requested actions.
        let requested: Vec<Action> = (0..n)
            .map(|i| match sources[i] {
                PolicySource::Learned => {
                    let (a, _) = controllers[i].agent.act(&states[i], cfg.explore, rng);
                    a.clamped()
                }
                PolicySource::Baseline => baseline_act(&controllers[i].table, &states[i]),
            })
            .collect();

        // 3. Feasibility.
        if cfg.cold_start {
            coord.reset();
        }
        let (actions, rounds, converged) = match cfg.mode {
            RunMode::Projection => (
                project_actions(&requested, &env.config.capacities),
                1,
                true,
            ),
            RunMode::MdNoise => {
                let noisy: Vec<NoisyModifier> = controllers
                    .iter()
                    .map(|c| {
                        let mut noise = [0.0; ACTION_DIM];
                        for v in noise.iter_mut() {
                            let z: f64 = StandardNormal.sample(rng);
                            *v = cfg.md_noise_std * z;
                        }
                        NoisyModifier {
                            inner: &c.modifier,
                            noise,
                        }
                    })
                    .collect();
                let refs: Vec<&dyn ActionModifier> =
                    noisy.iter().map(|m| m as &dyn ActionModifier).collect();
                let out = coordinate(&states, &requested, &refs, coord, &env.config.capacities);
                (out.actions, out.rounds, out.converged)
            }
            _ => {
                let refs: Vec<&dyn ActionModifier> = controllers
                    .iter()
                    .map(|c| &c.modifier as &dyn ActionModifier)
                    .collect();
                let out = coordinate(&states, &requested, &refs, coord, &env.config.capacities);
                (out.actions, out.rounds, out.converged)
            }
        };
        coord_rounds.push(rounds);
        if !converged {
            fallback_slots += 1;
        }

        // 4. Execute and record.
        let results = env.step(&actions)?;
        for i in 0..n {
            per_slice[i].push(Transition {
                state: states[i],
                action: actions[i],
                reward: results[i].reward,
                cost: results[i].cost,
                source: sources[i],
                perf_raw: results[i].perf,
            });
        }
        states = results.into_iter().map(|r| r.state).collect();
    }

    let episodes = per_slice
        .into_iter()
        .enumerate()
        .map(|(i, transitions)| Episode {
            transitions,
            truncation_slot: if cfg.mode == RunMode::NoBaseline {
                None
            } else {
                guards[i].switched_at()
            },
        })
        .collect();
    Ok(JointOutcome {
        episodes,
        coord_rounds,
        fallback_slots,
    })
}

/// Runs one all-baseline episode (the data-collection and comparison
/// policy): every slice follows its table, projection keeps the aggregate
/// feasible.
pub fn run_baseline_episode(
    env: &mut Env,
    tables: &[GridPolicyTable],
    episode_seed: u64,
) -> Result<Vec<Episode>, EnvError> {
    let n = env.num_slices();
    assert_eq!(tables.len(), n);
    let horizon = env.horizon();
    let mut states = env.reset(episode_seed);
    let mut per_slice: Vec<Vec<Transition>> = (0..n).map(|_| Vec::with_capacity(horizon)).collect();
    for _ in 0..horizon {
        let requested: Vec<Action> = (0..n)
            .map(|i| baseline_act(&tables[i], &states[i]))
            .collect();
        let actions = project_actions(&requested, &env.config.capacities);
        let results = env.step(&actions)?;
        for i in 0..n {
            per_slice[i].push(Transition {
                state: states[i],
                action: actions[i],
                reward: results[i].reward,
                cost: results[i].cost,
                source: PolicySource::Baseline,
                perf_raw: results[i].perf,
            });
        }
        states = results.into_iter().map(|r| r.state).collect();
    }
    Ok(per_slice
        .into_iter()
        .map(|transitions| Episode {
            transitions,
            truncation_slot: None,
        })
        .collect())
}
