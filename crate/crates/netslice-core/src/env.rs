//! Deterministic, seedable simulator of the end-to-end network: slot-level
//! traffic, an AR(1) radio channel, closed-form per-domain performance
//! models, and the step function producing `(State, reward, cost)` per
//! 15-minute slot.
//!
//! The performance models below are the simulator's contract. They are
//! deliberately simple closed forms whose monotonicities match the measured
//! behaviors the real system exhibits: uplink capacity linear in allocated
//! bandwidth and increasing in channel quality, an M/M/1-style compute
//! delay that diverges as offered load approaches the CPU-scaled service
//! rate, a saturating delivered-FPS model, and a retransmission probability
//! decaying exponentially in the MCS offset.

use crate::domain::{
    cost_from_perf, counted_resources, reward_from_action, Action, PerfDirection, ResourceKind,
    ResourceVector, SliceKind, SliceSpec, SliceTag, State,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Latency stand-in for a starved resource (ms). Large enough to zero the
/// achievement ratio, small enough to stay well-behaved numerically.
const STARVED_LATENCY_MS: f64 = 1e7;

/// Number of quantized MCS offset levels above zero.
pub const MAX_MCS_OFFSET: f64 = 8.0;

/// Number of transport path tiers above the base tier.
pub const MAX_PATH_TIER: f64 = 3.0;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("aggregate demand {demand:.6} for {kind} exceeds capacity {capacity:.6}")]
    CapacityExceeded {
        kind: &'static str,
        demand: f64,
        capacity: f64,
    },
    #[error("expected {expected} per-slice actions, got {got}")]
    ActionCountMismatch { expected: usize, got: usize },
    #[error("episode already ran its {0} slots; reset before stepping again")]
    EpisodeOver(usize),
    #[error("invalid action component outside [0, 1]")]
    InvalidAction,
}

/// Per-slice sequence of arrival rates (users/s), one per slot.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrafficTrace(pub Vec<f64>);

impl TrafficTrace {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn rate(&self, slot: usize) -> f64 {
        self.0[slot % self.0.len()]
    }
}

/// Synthetic diurnal arrival-rate curve: low at night, peaking mid-day,
/// with seeded multiplicative noise. Deterministic given the seed.
pub fn gen_traffic(spec: &SliceSpec, num_slots: usize, seed: u64) -> TrafficTrace {
    assert!(num_slots >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rates = Vec::with_capacity(num_slots);
    for slot in 0..num_slots {
        let u = (slot % 96) as f64 / 96.0;
        let shape = 0.10 + 0.75 * (std::f64::consts::PI * u).sin().powi(2);
        let z: f64 = StandardNormal.sample(&mut rng);
        let noise: f64 = 1.0 + 0.15 * z;
        let rate = (spec.max_traffic * shape * noise.clamp(0.5, 1.5)).clamp(0.0, spec.max_traffic);
        rates.push(rate);
    }
    TrafficTrace(rates)
}

/// AR(1) channel-quality process clamped to `[0, 1]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChannelConfig {
    /// Persistence of the AR(1) recursion, in `[0, 1)`.
    pub rho: f64,
    /// Stationary mean level.
    pub mean: f64,
    /// Innovation standard deviation.
    pub noise_std: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            rho: 0.9,
            mean: 0.75,
            noise_std: 0.05,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ChannelProcess {
    pub h: f64,
    cfg: ChannelConfig,
}

impl ChannelProcess {
    pub fn new(cfg: ChannelConfig) -> Self {
        let h = cfg.mean;
        ChannelProcess { h, cfg }
    }

    pub fn advance<R: Rng>(&mut self, rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.h = (self.cfg.rho * self.h
            + (1.0 - self.cfg.rho) * self.cfg.mean
            + self.cfg.noise_std * z)
            .clamp(0.0, 1.0);
        self.h
    }
}

/// Closed-form model coefficients for one slice.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SliceModel {
    /// Frame payload scale `s`; for MAR this converts users/s per unit
    /// capacity into milliseconds, for HVS it is the per-frame bandwidth
    /// share.
    pub frame_bits: f64,
    /// Fixed processing/propagation latency `l_s` (ms).
    pub static_latency_ms: f64,
    /// Uplink retransmission probability at zero MCS offset.
    pub base_retx_ul: f64,
    /// Downlink retransmission probability at zero MCS offset.
    pub base_retx_dl: f64,
    /// Exponential decay of retransmission per offset level.
    pub mcs_decay: f64,
    /// Compute service rate (users/s) at full CPU and reference RAM.
    pub service_rate: f64,
    /// Mean-capacity multiplier of the max-rate scheduler.
    pub sched_gain: f64,
    /// Transport delay coefficient (ms per user/s per unit bandwidth).
    pub tn_unit_delay: f64,
    /// Path delay at the base tier (ms); higher tiers divide it down.
    pub tn_base_delay_ms: f64,
    /// Transport throughput per unit `tn_bw`.
    pub tn_capacity: f64,
    /// RAM allocation at which the compute service rate saturates.
    pub ram_ref: f64,
    /// Delivered-FPS ceiling for streaming slices.
    pub max_fps: f64,
}

impl SliceModel {
    pub fn default_for(tag: SliceTag) -> Self {
        match tag {
            SliceTag::Mar => SliceModel {
                frame_bits: 16.0,
                static_latency_ms: 20.0,
                base_retx_ul: 0.15,
                base_retx_dl: 5e-4,
                mcs_decay: 1.2,
                service_rate: 40.0,
                sched_gain: 1.15,
                tn_unit_delay: 8.0,
                tn_base_delay_ms: 40.0,
                tn_capacity: 10.0,
                ram_ref: 0.4,
                max_fps: 30.0,
            },
            SliceTag::Hvs => SliceModel {
                frame_bits: 0.006,
                static_latency_ms: 5.0,
                base_retx_ul: 0.15,
                base_retx_dl: 5e-4,
                mcs_decay: 1.2,
                service_rate: 60.0,
                sched_gain: 1.15,
                tn_unit_delay: 2.0,
                tn_base_delay_ms: 20.0,
                tn_capacity: 2.0,
                ram_ref: 0.4,
                max_fps: 30.0,
            },
            SliceTag::Rdc => SliceModel {
                frame_bits: 0.001,
                static_latency_ms: 5.0,
                base_retx_ul: 0.15,
                base_retx_dl: 5e-4,
                mcs_decay: 1.2,
                service_rate: 500.0,
                sched_gain: 1.15,
                tn_unit_delay: 0.1,
                tn_base_delay_ms: 20.0,
                tn_capacity: 10.0,
                ram_ref: 0.4,
                max_fps: 30.0,
            },
        }
    }
}

/// Quantized MCS offset level for a normalized knob value.
pub fn mcs_offset(u: f64) -> f64 {
    (u.clamp(0.0, 1.0) * MAX_MCS_OFFSET).round()
}

/// Quantized transport path tier.
pub fn path_tier(u: f64) -> f64 {
    (u.clamp(0.0, 1.0) * MAX_PATH_TIER).round()
}

/// Scheduler knob quantized to {round-robin, max-rate}.
pub fn is_max_rate(u: f64) -> bool {
    u >= 0.5
}

fn channel_factor(h: f64) -> f64 {
    0.5 + 0.5 * h
}

/// Spectral-efficiency penalty of an MCS offset: a lower modulation order
/// is more robust but carries fewer bits.
fn mcs_efficiency(offset: f64) -> f64 {
    1.0 - 0.06 * offset
}

/// Effective uplink capacity per unit of nominal bandwidth.
pub fn uplink_capacity(model: &SliceModel, a: &Action, h: f64) -> f64 {
    let gain = if is_max_rate(a.ul_sched) { model.sched_gain } else { 1.0 };
    a.ul_bw * channel_factor(h) * mcs_efficiency(mcs_offset(a.ul_mcs)) * gain
}

/// Effective downlink capacity per unit of nominal bandwidth.
pub fn downlink_capacity(model: &SliceModel, a: &Action, h: f64) -> f64 {
    let gain = if is_max_rate(a.dl_sched) { model.sched_gain } else { 1.0 };
    a.dl_bw * channel_factor(h) * mcs_efficiency(mcs_offset(a.dl_mcs)) * gain
}

fn compute_service_rate(model: &SliceModel, a: &Action) -> f64 {
    let ram_eff = 0.25 + 0.75 * (a.ram / model.ram_ref).min(1.0);
    model.service_rate * a.cpu * ram_eff
}

/// Noise-free expected slice performance for traffic `f` (users/s) and
/// channel quality `h` under action `a`. Units follow the slice kind.
pub fn perf_model(model: &SliceModel, kind: &SliceKind, f: f64, h: f64, a: &Action) -> f64 {
    match kind.tag {
        SliceTag::Mar => {
            if f <= f64::EPSILON {
                return 0.0; // no frames in flight, nothing to be late
            }
            let cap = uplink_capacity(model, a, h);
            let air = if cap <= 1e-9 {
                STARVED_LATENCY_MS
            } else {
                f * model.frame_bits / cap
            };
            let tn = if a.tn_bw <= 1e-9 {
                STARVED_LATENCY_MS
            } else {
                f * model.tn_unit_delay / (model.tn_capacity * a.tn_bw)
                    + model.tn_base_delay_ms / (1.0 + path_tier(a.tn_path))
            };
            let mu = compute_service_rate(model, a);
            let proc = if f < mu {
                1000.0 / (mu - f)
            } else {
                STARVED_LATENCY_MS
            };
            air + tn + proc + model.static_latency_ms
        }
        SliceTag::Hvs => {
            if f <= f64::EPSILON {
                return kind.perf_target; // nothing to deliver, target met
            }
            let radio = downlink_capacity(model, a, h) / (f * model.frame_bits);
            let transport = model.tn_capacity * a.tn_bw / (f * model.frame_bits);
            model.max_fps.min(radio).min(transport)
        }
        SliceTag::Rdc => {
            let severity = (1.5 - h).max(0.0);
            let retx_ul = (model.base_retx_ul
                * (-model.mcs_decay * mcs_offset(a.ul_mcs)).exp()
                * severity)
                .clamp(0.0, 1.0);
            let retx_dl = (model.base_retx_dl
                * (-model.mcs_decay * mcs_offset(a.dl_mcs)).exp()
                * severity)
                .clamp(0.0, 1.0);
            (1.0 - retx_ul) * (1.0 - retx_dl)
        }
    }
}

/// Environment configuration: episode horizon, capacities, slices, model
/// coefficients, and stochasticity controls.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnvConfig {
    pub slots_per_episode: usize,
    pub capacities: ResourceVector,
    pub slices: Vec<SliceSpec>,
    pub models: Vec<SliceModel>,
    pub channel: ChannelConfig,
    /// Relative standard deviation of per-slot performance noise.
    pub perf_noise: f64,
    pub seed: u64,
}

impl EnvConfig {
    /// The standard desk-scale scenario: MAR + HVS + RDC slices sharing
    /// unit capacity per resource kind over a 96-slot (24 h) episode.
    pub fn standard(seed: u64) -> Self {
        let slices = vec![
            SliceSpec::new(0, SliceKind::mar(500.0), 0.05, 5.0),
            SliceSpec::new(1, SliceKind::hvs(30.0), 0.05, 2.0),
            SliceSpec::new(2, SliceKind::rdc(0.999), 0.05, 100.0),
        ];
        let models = slices
            .iter()
            .map(|s| SliceModel::default_for(s.kind.tag))
            .collect();
        EnvConfig {
            slots_per_episode: 96,
            capacities: ResourceVector::uniform(1.0),
            slices,
            models,
            channel: ChannelConfig::default(),
            perf_noise: 0.02,
            seed,
        }
    }

    pub fn validate(&self) {
        assert!(self.slots_per_episode >= 1, "need at least one slot");
        assert!(
            self.capacities.0.iter().all(|&c| c > 0.0),
            "capacities must be strictly positive"
        );
        assert_eq!(self.slices.len(), self.models.len());
    }
}

/// Per-slice outcome of one environment step.
#[derive(Debug, Clone)]
pub struct StepResult {
    /// Observation for the next slot.
    pub state: State,
    pub reward: f64,
    pub cost: f64,
    pub perf: f64,
}

/// One simulator instance. Single-threaded; clone with distinct seeds for
/// parallel evaluation sweeps.
#[derive(Debug, Clone)]
pub struct Env {
    pub config: EnvConfig,
    channels: Vec<ChannelProcess>,
    traces: Vec<TrafficTrace>,
    states: Vec<State>,
    slot: usize,
    episode_seed: u64,
}

fn mix_seed(a: u64, b: u64, c: u64) -> u64 {
    // splitmix-style avalanche over the three stream coordinates
    let mut z = a
        .wrapping_mul(0x9e3779b97f4a7c15)
        .wrapping_add(b.wrapping_mul(0xbf58476d1ce4e5b9))
        .wrapping_add(c.wrapping_mul(0x94d049bb133111eb));
    z ^= z >> 30;
    z = z.wrapping_mul(0xbf58476d1ce4e5b9);
    z ^= z >> 27;
    z = z.wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

impl Env {
    pub fn new(config: EnvConfig) -> Self {
        config.validate();
        let channels = config
            .slices
            .iter()
            .map(|_| ChannelProcess::new(config.channel.clone()))
            .collect();
        let mut env = Env {
            channels,
            traces: Vec::new(),
            states: Vec::new(),
            slot: 0,
            episode_seed: 0,
            config,
        };
        env.reset(0);
        env
    }

    pub fn num_slices(&self) -> usize {
        self.config.slices.len()
    }

    pub fn horizon(&self) -> usize {
        self.config.slots_per_episode
    }

    pub fn slot(&self) -> usize {
        self.slot
    }

    pub fn spec(&self, idx: usize) -> &SliceSpec {
        &self.config.slices[idx]
    }

    pub fn model(&self, idx: usize) -> &SliceModel {
        &self.config.models[idx]
    }

    pub fn traces(&self) -> &[TrafficTrace] {
        &self.traces
    }

    /// Starts a fresh episode with traces and channel noise derived from
    /// `(config.seed, episode_seed)`; returns the initial per-slice states.
    pub fn reset(&mut self, episode_seed: u64) -> Vec<State> {
        self.episode_seed = episode_seed;
        self.slot = 0;
        let t = self.config.slots_per_episode;
        self.traces = self
            .config
            .slices
            .iter()
            .map(|s| gen_traffic(s, t, mix_seed(self.config.seed, episode_seed, s.id as u64)))
            .collect();
        for (i, ch) in self.channels.iter_mut().enumerate() {
            *ch = ChannelProcess::new(self.config.channel.clone());
            // Burn in a few seeded transitions so episodes do not all start
            // exactly at the stationary mean.
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(
                self.config.seed,
                episode_seed,
                0xC0FFEE + i as u64,
            ));
            for _ in 0..4 {
                ch.advance(&mut rng);
            }
        }
        self.states = self
            .config
            .slices
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let mut st = State::initial(s.sla_threshold);
                st.channel = self.channels[i].h;
                st
            })
            .collect();
        self.states.clone()
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    /// Per-slot RNG stream, deterministic in (seed, episode, slot, stream).
    fn slot_rng(&self, stream: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(mix_seed(
            mix_seed(self.config.seed, self.episode_seed, stream),
            self.slot as u64,
            0xA5A5,
        ))
    }

    /// Noise-free cost a slice would observe this slot under action `a`
    /// given its current observation. This is the oracle the baseline grid
    /// search and the action-modification brute force evaluate.
    pub fn cost_model(&self, slice_idx: usize, state: &State, a: &Action) -> f64 {
        let spec = &self.config.slices[slice_idx];
        let f = state.traffic * spec.max_traffic;
        let p = perf_model(&self.config.models[slice_idx], &spec.kind, f, state.channel, a);
        cost_from_perf(p, &spec.kind)
    }

    /// Advances one slot. Actions must already be coordination-feasible;
    /// an over-capacity aggregate is a hard error by contract.
    pub fn step(&mut self, actions: &[Action]) -> Result<Vec<StepResult>, EnvError> {
        let n = self.num_slices();
        if actions.len() != n {
            return Err(EnvError::ActionCountMismatch {
                expected: n,
                got: actions.len(),
            });
        }
        if self.slot >= self.config.slots_per_episode {
            return Err(EnvError::EpisodeOver(self.config.slots_per_episode));
        }
        for a in actions {
            if !a.is_valid() {
                return Err(EnvError::InvalidAction);
            }
        }
        let mut totals = ResourceVector::ZERO;
        for a in actions {
            totals = totals.add(&counted_resources(a));
        }
        for kind in ResourceKind::ALL {
            let demand = totals.get(kind);
            let cap = self.config.capacities.get(kind);
            if demand > cap + 1e-9 {
                return Err(EnvError::CapacityExceeded {
                    kind: kind.name(),
                    demand,
                    capacity: cap,
                });
            }
        }

        let cell_radio_usage = actions
            .iter()
            .map(|a| (a.ul_bw + a.dl_bw) / 2.0)
            .sum::<f64>()
            / n as f64;

        let mut results = Vec::with_capacity(n);
        let mut next_states = Vec::with_capacity(n);
        for i in 0..n {
            let spec = &self.config.slices[i];
            let model = &self.config.models[i];
            let a = &actions[i];
            let f = self.traces[i].rate(self.slot);
            let h = self.channels[i].h;

            let mut p = perf_model(model, &spec.kind, f, h, a);
            if self.config.perf_noise > 0.0 {
                let mut rng = self.slot_rng(1000 + i as u64);
                let z: f64 = StandardNormal.sample(&mut rng);
                let factor = (1.0 + self.config.perf_noise * z).clamp(0.5, 1.5);
                p *= factor;
                if spec.kind.tag == SliceTag::Rdc {
                    p = p.clamp(0.0, 1.0);
                }
            }
            let cost = cost_from_perf(p, &spec.kind);
            let reward = reward_from_action(a);

            let mu = compute_service_rate(model, a);
            let compute_load = if mu <= 1e-9 {
                if f > 0.0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                (f / mu).clamp(0.0, 1.0)
            };

            let prev = &self.states[i];
            let next = State {
                slot: (self.slot + 1).min(self.config.slots_per_episode),
                traffic: if spec.max_traffic > 0.0 {
                    f / spec.max_traffic
                } else {
                    0.0
                },
                channel: h,
                radio_usage: cell_radio_usage,
                compute_load,
                last_reward: reward,
                last_cost: cost,
                sla_threshold: spec.sla_threshold,
                cum_cost: prev.cum_cost + cost,
            };
            next_states.push(next);
            results.push(StepResult {
                state: next,
                reward,
                cost,
                perf: p,
            });
        }

        // Advance channels for the next slot with seeded innovations.
        let channel_rngs: Vec<ChaCha8Rng> =
            (0..n).map(|i| self.slot_rng(2000 + i as u64)).collect();
        for (ch, mut rng) in self.channels.iter_mut().zip(channel_rngs) {
            ch.advance(&mut rng);
        }
        for (i, next) in next_states.iter_mut().enumerate() {
            next.channel = self.channels[i].h;
        }
        self.states = next_states;
        self.slot += 1;
        Ok(results)
    }

    pub fn done(&self) -> bool {
        self.slot >= self.config.slots_per_episode
    }
}

/// Direction-aware sanity check used by tests: whether performance `p`
/// meets the kind's target.
pub fn meets_target(p: f64, kind: &SliceKind) -> bool {
    match kind.direction() {
        PerfDirection::HigherIsBetter => p >= kind.perf_target,
        PerfDirection::LowerIsBetter => p <= kind.perf_target,
    }
}
