//! Domain types shared by every other module: slices, actions, states,
//! transitions, and the fixed resource-kind index space.

use serde::{Deserialize, Serialize};

/// Number of components in an orchestration action vector.
pub const ACTION_DIM: usize = 10;

/// Number of capacity-constrained resource kinds.
pub const RESOURCE_KINDS: usize = 6;

/// Service class hosted by a slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SliceTag {
    /// Mobile augmented reality: round-trip frame latency target (ms).
    Mar,
    /// HD video streaming: delivered frame-rate target (FPS).
    Hvs,
    /// Reliable distant control: radio delivery success probability.
    Rdc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerfDirection {
    LowerIsBetter,
    HigherIsBetter,
}

/// Slice service class together with its performance target `P`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SliceKind {
    pub tag: SliceTag,
    /// Performance target: ms for MAR, FPS for HVS, success probability for RDC.
    pub perf_target: f64,
}

impl SliceKind {
    pub fn new(tag: SliceTag, perf_target: f64) -> Self {
        assert!(perf_target > 0.0, "perf target must be positive");
        Self { tag, perf_target }
    }

    pub fn mar(latency_ms: f64) -> Self {
        Self::new(SliceTag::Mar, latency_ms)
    }

    pub fn hvs(fps: f64) -> Self {
        Self::new(SliceTag::Hvs, fps)
    }

    pub fn rdc(reliability: f64) -> Self {
        Self::new(SliceTag::Rdc, reliability)
    }

    /// Latency targets are lower-is-better; FPS and reliability higher-is-better.
    pub fn direction(&self) -> PerfDirection {
        match self.tag {
            SliceTag::Mar => PerfDirection::LowerIsBetter,
            SliceTag::Hvs | SliceTag::Rdc => PerfDirection::HigherIsBetter,
        }
    }
}

/// Per-slice tenancy contract.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SliceSpec {
    pub id: usize,
    pub kind: SliceKind,
    /// SLA threshold on mean per-slot cost over an episode, in (0, 1).
    pub sla_threshold: f64,
    /// Peak arrival rate (users/s) the slice may offer.
    pub max_traffic: f64,
}

impl SliceSpec {
    pub fn new(id: usize, kind: SliceKind, sla_threshold: f64, max_traffic: f64) -> Self {
        assert!(
            sla_threshold > 0.0 && sla_threshold < 1.0,
            "SLA threshold must be a fraction in (0, 1)"
        );
        assert!(max_traffic >= 0.0, "max traffic must be non-negative");
        Self {
            id,
            kind,
            sla_threshold,
            max_traffic,
        }
    }
}

/// Normalized 10-dimensional resource-orchestration vector; every component
/// lives in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub ul_bw: f64,
    pub ul_mcs: f64,
    pub ul_sched: f64,
    pub dl_bw: f64,
    pub dl_mcs: f64,
    pub dl_sched: f64,
    pub tn_bw: f64,
    pub tn_path: f64,
    pub cpu: f64,
    pub ram: f64,
}

impl Action {
    pub const ZERO: Action = Action::uniform(0.0);

    pub const fn uniform(v: f64) -> Self {
        Action {
            ul_bw: v,
            ul_mcs: v,
            ul_sched: v,
            dl_bw: v,
            dl_mcs: v,
            dl_sched: v,
            tn_bw: v,
            tn_path: v,
            cpu: v,
            ram: v,
        }
    }

    pub fn from_array(a: [f64; ACTION_DIM]) -> Self {
        Action {
            ul_bw: a[0],
            ul_mcs: a[1],
            ul_sched: a[2],
            dl_bw: a[3],
            dl_mcs: a[4],
            dl_sched: a[5],
            tn_bw: a[6],
            tn_path: a[7],
            cpu: a[8],
            ram: a[9],
        }
    }

    pub fn to_array(&self) -> [f64; ACTION_DIM] {
        [
            self.ul_bw,
            self.ul_mcs,
            self.ul_sched,
            self.dl_bw,
            self.dl_mcs,
            self.dl_sched,
            self.tn_bw,
            self.tn_path,
            self.cpu,
            self.ram,
        ]
    }

    pub fn clamped(&self) -> Self {
        let mut a = self.to_array();
        for v in &mut a {
            *v = v.clamp(0.0, 1.0);
        }
        Action::from_array(a)
    }

    pub fn is_valid(&self) -> bool {
        self.to_array()
            .iter()
            .all(|v| v.is_finite() && (0.0..=1.0).contains(v))
    }
}

/// Capacity-constrained resource kinds, in the fixed wire order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResourceKind {
    UlBw,
    DlBw,
    TnBw,
    TnPath,
    Cpu,
    Ram,
}

impl ResourceKind {
    /// The fixed ordering is part of the API contract.
    pub const ALL: [ResourceKind; RESOURCE_KINDS] = [
        ResourceKind::UlBw,
        ResourceKind::DlBw,
        ResourceKind::TnBw,
        ResourceKind::TnPath,
        ResourceKind::Cpu,
        ResourceKind::Ram,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ResourceKind::UlBw => "ul_bw",
            ResourceKind::DlBw => "dl_bw",
            ResourceKind::TnBw => "tn_bw",
            ResourceKind::TnPath => "tn_path",
            ResourceKind::Cpu => "cpu",
            ResourceKind::Ram => "ram",
        }
    }
}

/// One real per constrained resource kind, in `ResourceKind::ALL` order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResourceVector(pub [f64; RESOURCE_KINDS]);

impl ResourceVector {
    pub const ZERO: ResourceVector = ResourceVector([0.0; RESOURCE_KINDS]);

    pub fn uniform(v: f64) -> Self {
        ResourceVector([v; RESOURCE_KINDS])
    }

    pub fn get(&self, kind: ResourceKind) -> f64 {
        self.0[kind as usize]
    }

    pub fn set(&mut self, kind: ResourceKind, v: f64) {
        self.0[kind as usize] = v;
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn add(&self, other: &ResourceVector) -> ResourceVector {
        let mut out = self.0;
        for (o, v) in out.iter_mut().zip(other.0.iter()) {
            *o += v;
        }
        ResourceVector(out)
    }
}

/// Who produced an executed action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PolicySource {
    Learned,
    Baseline,
}

/// Per-slice observation fed to every policy network.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct State {
    /// Slot index within the episode, in `[0, T)`.
    pub slot: usize,
    /// Last-slot traffic, normalized by the slice's max traffic.
    pub traffic: f64,
    /// Last-slot average channel quality, in `[0, 1]`.
    pub channel: f64,
    /// Cell-wide average radio usage last slot.
    pub radio_usage: f64,
    /// Compute utilization of the slice's VNFs/edge server last slot.
    pub compute_load: f64,
    pub last_reward: f64,
    pub last_cost: f64,
    pub sla_threshold: f64,
    /// Raw cumulative cost so far this episode (non-decreasing).
    pub cum_cost: f64,
}

/// Number of features produced by [`State::features`].
pub const STATE_DIM: usize = 9;

impl State {
    /// Initial observation at slot 0 of an episode.
    pub fn initial(sla_threshold: f64) -> Self {
        State {
            slot: 0,
            traffic: 0.0,
            channel: 0.5,
            radio_usage: 0.0,
            compute_load: 0.0,
            last_reward: 0.0,
            last_cost: 0.0,
            sla_threshold,
            cum_cost: 0.0,
        }
    }

    /// Bounded feature vector for network inputs.
    pub fn features(&self, slots_per_episode: usize) -> [f64; STATE_DIM] {
        let t = slots_per_episode.max(1) as f64;
        [
            self.slot as f64 / t,
            self.traffic,
            self.channel,
            self.radio_usage,
            self.compute_load,
            // Reward lives in [-6, 0]; rescale to [0, 1].
            -self.last_reward / 6.0,
            self.last_cost,
            self.sla_threshold,
            self.cum_cost / t,
        ]
    }
}

/// One executed slot: the action recorded is the post-modification action
/// that actually ran.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Transition {
    pub state: State,
    pub action: Action,
    pub reward: f64,
    pub cost: f64,
    pub source: PolicySource,
    /// Raw slice performance this slot (ms, FPS, or success probability).
    pub perf_raw: f64,
}

/// A full horizon of `T` transitions; `truncation_slot` marks the first
/// baseline-controlled slot if the safety layer switched.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Episode {
    pub transitions: Vec<Transition>,
    pub truncation_slot: Option<usize>,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn mean_cost(&self) -> f64 {
        if self.transitions.is_empty() {
            return 0.0;
        }
        self.transitions.iter().map(|t| t.cost).sum::<f64>() / self.transitions.len() as f64
    }

    pub fn mean_usage(&self) -> f64 {
        if self.transitions.is_empty() {
            return 0.0;
        }
        self.transitions
            .iter()
            .map(|t| -t.reward / RESOURCE_KINDS as f64)
            .sum::<f64>()
            / self.transitions.len() as f64
    }

    /// Recomputed from the transitions alone: mean per-slot cost above the
    /// SLA threshold.
    pub fn violated(&self, c_max: f64) -> bool {
        self.mean_cost() > c_max
    }

    /// Checks the structural invariant that every transition at or past the
    /// truncation slot is baseline-sourced.
    pub fn truncation_consistent(&self) -> bool {
        match self.truncation_slot {
            None => true,
            Some(tr) => self
                .transitions
                .iter()
                .enumerate()
                .all(|(i, t)| i < tr || t.source == PolicySource::Baseline),
        }
    }
}

/// Per-slot SLA shortfall in `[0, 1]`; 0 iff the target is met or exceeded.
///
/// Higher-is-better kinds use the achievement ratio `p / P` directly. For
/// lower-is-better kinds (MAR latency) the ratio is reflected to `P / p`,
/// so hitting the latency target exactly still yields zero cost and the
/// cost grows as latency exceeds the target. This reflection is the single
/// most consequential interpretation in the simulator contract.
pub fn cost_from_perf(perf: f64, kind: &SliceKind) -> f64 {
    debug_assert!(perf >= 0.0, "performance must be non-negative");
    let ratio = match kind.direction() {
        PerfDirection::HigherIsBetter => perf / kind.perf_target,
        PerfDirection::LowerIsBetter => {
            if perf <= f64::EPSILON {
                // Zero latency trivially beats any target.
                1.0
            } else {
                kind.perf_target / perf
            }
        }
    };
    1.0 - ratio.clamp(0.0, 1.0)
}

/// Negative total counted virtual resource usage. MCS offsets and scheduler
/// selections are excluded: their effect on usage is implicit.
pub fn reward_from_action(a: &Action) -> f64 {
    -(a.ul_bw + a.dl_bw + a.tn_bw + a.tn_path + a.cpu + a.ram)
}

/// Projects an action onto the six capacity-constrained resource kinds,
/// in the fixed wire order.
pub fn counted_resources(a: &Action) -> ResourceVector {
    ResourceVector([a.ul_bw, a.dl_bw, a.tn_bw, a.tn_path, a.cpu, a.ram])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cost_matches_worked_fps_example() {
        let hvs = SliceKind::hvs(30.0);
        let c = cost_from_perf(20.0, &hvs);
        assert!((c - (1.0 - 20.0 / 30.0)).abs() < 1e-12);
        assert!((c - 0.33333333333333337).abs() < 1e-9);
    }

    #[test]
    fn cost_zero_at_target_and_one_at_zero_perf() {
        let hvs = SliceKind::hvs(30.0);
        assert_eq!(cost_from_perf(30.0, &hvs), 0.0);
        assert_eq!(cost_from_perf(45.0, &hvs), 0.0);
        assert_eq!(cost_from_perf(0.0, &hvs), 1.0);
    }

    #[test]
    fn cost_reflects_latency_targets() {
        let mar = SliceKind::mar(500.0);
        assert_eq!(cost_from_perf(500.0, &mar), 0.0);
        assert_eq!(cost_from_perf(250.0, &mar), 0.0);
        let c = cost_from_perf(1000.0, &mar);
        assert!((c - 0.5).abs() < 1e-12);
        assert_eq!(cost_from_perf(0.0, &mar), 0.0);
    }

    #[test]
    fn reward_counts_six_resources() {
        assert_eq!(reward_from_action(&Action::ZERO), 0.0);
        assert_eq!(reward_from_action(&Action::uniform(1.0)), -6.0);
        let mut a = Action::ZERO;
        a.ul_bw = 0.2;
        a.dl_bw = 0.3;
        a.ul_mcs = 0.9; // excluded from reward
        assert!((reward_from_action(&a) + 0.5).abs() < 1e-12);
    }

    #[test]
    fn counted_resources_projection() {
        assert_eq!(counted_resources(&Action::ZERO), ResourceVector::ZERO);
        let mut a = Action::ZERO;
        a.cpu = 0.4;
        let v = counted_resources(&a);
        assert_eq!(v.get(ResourceKind::Cpu), 0.4);
        assert_eq!(v.sum(), 0.4);
        let u = counted_resources(&Action::uniform(0.5));
        assert!(u.0.iter().all(|&x| x == 0.5));
    }

    #[test]
    fn reward_equals_negative_counted_sum() {
        let a = Action::from_array([0.1, 0.9, 0.3, 0.2, 0.8, 0.1, 0.4, 0.5, 0.6, 0.7]);
        assert!((reward_from_action(&a) + counted_resources(&a).sum()).abs() < 1e-12);
    }

    #[test]
    fn episode_violation_recomputable() {
        let spec_threshold = 0.05;
        let mk = |cost: f64, source| Transition {
            state: State::initial(spec_threshold),
            action: Action::ZERO,
            reward: 0.0,
            cost,
            source,
            perf_raw: 0.0,
        };
        let ep = Episode {
            transitions: vec![mk(0.2, PolicySource::Learned), mk(0.0, PolicySource::Baseline)],
            truncation_slot: Some(1),
        };
        assert!(ep.violated(spec_threshold));
        assert!(ep.truncation_consistent());
        let bad = Episode {
            transitions: vec![mk(0.0, PolicySource::Learned)],
            truncation_slot: Some(0),
        };
        assert!(!bad.truncation_consistent());
    }
}
