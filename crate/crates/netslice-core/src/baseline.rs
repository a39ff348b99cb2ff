//! Rule-based comparators: the offline grid-search policy, the uniform
//! scale-down projection fallback, and the closed-form model-based policy.

use crate::domain::{
    cost_from_perf, counted_resources, Action, ResourceKind, ResourceVector, SliceSpec, SliceTag,
    State, ACTION_DIM,
};
use crate::env::{perf_model, EnvConfig, SliceModel, MAX_MCS_OFFSET};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Action-vector indices of the key knobs searched per slice class,
/// identified offline: MAR is uplink/transport/compute bound, HVS is
/// downlink/transport bound, RDC is reliability (MCS offset) bound.
pub fn key_dims(tag: SliceTag) -> &'static [usize] {
    match tag {
        SliceTag::Mar => &[0, 6, 8],  // ul_bw, tn_bw, cpu
        SliceTag::Hvs => &[3, 6],     // dl_bw, tn_bw
        SliceTag::Rdc => &[1, 4],     // ul_mcs, dl_mcs
    }
}

/// Fixed defaults for the non-key dimensions: MCS offsets zero, schedulers
/// round-robin, RAM at 0.3, the smallest path tier meeting the transport
/// delay need at max traffic, and a small floor on unsearched bandwidth and
/// compute knobs.
pub fn default_action(tag: SliceTag) -> Action {
    let mut a = Action::ZERO;
    a.ram = 0.3;
    match tag {
        SliceTag::Mar => {
            a.ul_bw = 0.1;
            a.dl_bw = 0.05;
            a.tn_bw = 0.1;
            a.tn_path = 1.0 / 3.0; // tier 1 keeps the path delay inside budget
            a.cpu = 0.1;
        }
        SliceTag::Hvs => {
            a.ul_bw = 0.05;
            a.dl_bw = 0.1;
            a.tn_bw = 0.1;
            a.tn_path = 0.0;
            a.cpu = 0.1;
        }
        SliceTag::Rdc => {
            a.ul_bw = 0.05;
            a.dl_bw = 0.05;
            a.tn_bw = 0.05;
            a.tn_path = 0.0;
            a.cpu = 0.05;
        }
    }
    a
}

/// Offline-built lookup table: one minimal-usage feasible action per
/// traffic bucket.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridPolicyTable {
    pub slice_id: usize,
    pub tag: SliceTag,
    pub max_traffic: f64,
    pub num_buckets: usize,
    pub actions: Vec<Action>,
    /// Whether the bucket's grid search found any SLA-feasible point; an
    /// infeasible bucket stores the max-resource action.
    pub feasible: Vec<bool>,
}

/// Builds the per-slice grid policy by exhaustive search over the key
/// knobs. Feasibility is judged on mean noise-free cost over seeded channel
/// draws at bucket-edge traffic inflated by a 10% safety margin.
pub fn build_table(
    config: &EnvConfig,
    slice_idx: usize,
    grid_resolution: usize,
    num_buckets: usize,
    seed: u64,
) -> GridPolicyTable {
    assert!(grid_resolution >= 2, "grid needs at least 2 points per dim");
    assert!(num_buckets >= 1);
    let spec = &config.slices[slice_idx];
    let model = &config.models[slice_idx];
    let dims = key_dims(spec.kind.tag);
    let base = default_action(spec.kind.tag);

    // Representative channel draws from the stationary AR(1) distribution.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stat_std =
        config.channel.noise_std / (1.0 - config.channel.rho * config.channel.rho).sqrt();
    let channel_draws: Vec<f64> = (0..8)
        .map(|_| {
            let z: f64 = rng.gen_range(-1.0..1.0) * 1.7;
            (config.channel.mean + stat_std * z).clamp(0.0, 1.0)
        })
        .collect();

    let grid: Vec<f64> = (0..grid_resolution)
        .map(|i| i as f64 / (grid_resolution - 1) as f64)
        .collect();
    let bucket_width = spec.max_traffic / num_buckets as f64;

    let mut actions = Vec::with_capacity(num_buckets);
    let mut feasible = Vec::with_capacity(num_buckets);
    for bucket in 0..num_buckets {
        let stress_traffic = bucket_width * (bucket + 1) as f64 * 1.1;
        let mut best: Option<(f64, Action)> = None;
        let mut indices = vec![0usize; dims.len()];
        loop {
            let mut candidate = base;
            {
                let mut arr = candidate.to_array();
                for (d, &gi) in dims.iter().zip(indices.iter()) {
                    arr[*d] = grid[gi];
                }
                candidate = Action::from_array(arr);
            }
            let mean_cost: f64 = channel_draws
                .iter()
                .map(|&h| {
                    let p = perf_model(model, &spec.kind, stress_traffic, h, &candidate);
                    cost_from_perf(p, &spec.kind)
                })
                .sum::<f64>()
                / channel_draws.len() as f64;
            if mean_cost <= 1e-9 {
                let usage = counted_resources(&candidate).sum();
                let better = match &best {
                    None => true,
                    Some((u, b)) => {
                        usage < u - 1e-12
                            || ((usage - u).abs() <= 1e-12
                                && candidate.to_array() < b.to_array())
                    }
                };
                if better {
                    best = Some((usage, candidate));
                }
            }
            // Odometer over the key-dim grid.
            let mut carry = true;
            for i in (0..indices.len()).rev() {
                if carry {
                    indices[i] += 1;
                    if indices[i] == grid.len() {
                        indices[i] = 0;
                    } else {
                        carry = false;
                    }
                }
            }
            if carry {
                break;
            }
        }
        match best {
            Some((_, a)) => {
                actions.push(a);
                feasible.push(true);
            }
            None => {
                // No feasible grid point; record the max-resource action.
                let mut arr = base.to_array();
                for &d in dims {
                    arr[d] = 1.0;
                }
                actions.push(Action::from_array(arr));
                feasible.push(false);
            }
        }
    }
    GridPolicyTable {
        slice_id: spec.id,
        tag: spec.kind.tag,
        max_traffic: spec.max_traffic,
        num_buckets,
        actions,
        feasible,
    }
}

impl GridPolicyTable {
    /// Traffic-bucket index; a value exactly on a bucket edge maps to the
    /// lower bucket.
    pub fn bucket_for(&self, traffic: f64) -> usize {
        if self.max_traffic <= 0.0 || traffic <= 0.0 {
            return 0;
        }
        let width = self.max_traffic / self.num_buckets as f64;
        let idx = (traffic / width).ceil() as usize;
        idx.saturating_sub(1).min(self.num_buckets - 1)
    }
}

/// Deterministic table lookup keyed on the state's traffic level only.
pub fn baseline_act(table: &GridPolicyTable, state: &State) -> Action {
    let traffic = state.traffic * table.max_traffic;
    table.actions[table.bucket_for(traffic)]
}

/// Uniformly scales every slice's component of each over-requested resource
/// so the aggregate fits capacity; feasible dimensions are untouched.
pub fn project_actions(actions: &[Action], capacities: &ResourceVector) -> Vec<Action> {
    let mut totals = ResourceVector::ZERO;
    for a in actions {
        totals = totals.add(&counted_resources(a));
    }
    let mut out: Vec<[f64; ACTION_DIM]> = actions.iter().map(|a| a.to_array()).collect();
    // Action-array index of each counted resource kind, in wire order.
    const COUNTED_IDX: [usize; 6] = [0, 3, 6, 7, 8, 9];
    for (ki, kind) in ResourceKind::ALL.iter().enumerate() {
        let total = totals.get(*kind);
        let cap = capacities.get(*kind);
        if total > cap {
            let factor = cap / total;
            for arr in out.iter_mut() {
                arr[COUNTED_IDX[ki]] *= factor;
            }
        }
    }
    out.into_iter().map(Action::from_array).collect()
}

/// Closed-form model inversion: the minimal bandwidth meeting the target
/// under the approximate per-slice models, with RDC pinned to the fixed
/// MCS offsets (uplink 6, downlink 0).
pub fn model_based_act(state: &State, spec: &SliceSpec, model: &SliceModel) -> Action {
    let f = state.traffic * spec.max_traffic;
    let mut a = default_action(spec.kind.tag);
    match spec.kind.tag {
        SliceTag::Mar => {
            let budget = spec.kind.perf_target - model.static_latency_ms;
            a.ul_bw = if budget > 0.0 && f > 0.0 {
                (f * model.frame_bits / budget).clamp(0.0, 1.0)
            } else if f > 0.0 {
                1.0
            } else {
                0.0
            };
            a.cpu = 0.5;
            a.tn_bw = 0.25;
        }
        SliceTag::Hvs => {
            // Invert cap_dl(U_d)/ (f s) = max_fps at the nominal channel.
            if f > 0.0 {
                let need = model.max_fps * f * model.frame_bits;
                a.dl_bw = need.clamp(0.0, 1.0);
                a.tn_bw = (need / model.tn_capacity).clamp(0.0, 1.0);
            } else {
                a.dl_bw = 0.0;
                a.tn_bw = 0.0;
            }
        }
        SliceTag::Rdc => {
            a.ul_mcs = 6.0 / MAX_MCS_OFFSET;
            a.dl_mcs = 0.0;
        }
    }
    a
}
