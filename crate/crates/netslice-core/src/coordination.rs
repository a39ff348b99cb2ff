//! The distributed feasibility layer: per-slice action-modifier networks,
//! per-resource dual coordinators, the synchronous modify/update loop with
//! warm start, and a brute-force modification oracle for testing.

use crate::baseline::project_actions;
use crate::domain::{
    counted_resources, Action, ResourceKind, ResourceVector, State, ACTION_DIM, RESOURCE_KINDS,
    STATE_DIM,
};
use crate::nn::{Mlp, MlpGrads, OutputActivation, TrainedMlp};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Input width of a modifier network: state features, the original action,
/// and the (squashed) dual variables.
pub const MODIFIER_INPUT_DIM: usize = STATE_DIM + ACTION_DIM + RESOURCE_KINDS;

/// Geometric shrink factor applied to a resource's dual while its demand
/// sits within capacity; see the update rule in [`coordinate`].
pub const DUAL_RELAX: f64 = 0.8;

/// Dual coordinator state. Kept across slots so the previous slot's
/// converged duals warm-start the next negotiation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoordState {
    /// Per-resource dual variables; componentwise non-negative always.
    pub beta: ResourceVector,
    /// Subgradient step size.
    pub step: f64,
    pub max_rounds: usize,
    /// Aggregate-demand slack accepted as "constraints met".
    pub slack: f64,
}

impl Default for CoordState {
    fn default() -> Self {
        CoordState {
            beta: ResourceVector::ZERO,
            step: 0.5,
            max_rounds: 10,
            slack: 1e-6,
        }
    }
}

impl CoordState {
    pub fn validate(&self) {
        assert!(self.step > 0.0, "dual step must be positive");
        assert!(self.max_rounds >= 1);
        assert!(self.slack >= 0.0);
        assert!(
            self.beta.0.iter().all(|&b| b >= 0.0),
            "dual variables must be non-negative"
        );
    }

    /// Drops the warm start (e.g. at an episode boundary).
    pub fn reset(&mut self) {
        self.beta = ResourceVector::ZERO;
    }
}

/// The modification objective: squared distance to the original action,
/// plus the dual prices on the candidate's counted resources, plus the
/// slice's cost under the candidate.
pub fn modification_objective(
    orig: &Action,
    cand: &Action,
    beta: &ResourceVector,
    cost: f64,
) -> f64 {
    let o = orig.to_array();
    let c = cand.to_array();
    let mut dist = 0.0;
    for d in 0..ACTION_DIM {
        let e = c[d] - o[d];
        dist += e * e;
    }
    let counted = counted_resources(cand);
    let priced: f64 = ResourceKind::ALL
        .iter()
        .map(|&k| beta.get(k) * counted.get(k))
        .sum();
    dist + priced + cost
}

/// Exhaustive argmin of the modification objective over a grid restricted
/// to `dims` (the slice's key knobs); every other component is copied from
/// `a`. Ties break to the smallest counted usage, then lexicographically.
pub fn brute_force_modify(
    s: &State,
    a: &Action,
    beta: &ResourceVector,
    cost_oracle: &dyn Fn(&State, &Action) -> f64,
    dims: &[usize],
    grid_resolution: usize,
) -> Action {
    assert!(grid_resolution >= 2, "grid needs at least 2 points per dim");
    assert!(!dims.is_empty());
    let grid: Vec<f64> = (0..grid_resolution)
        .map(|i| i as f64 / (grid_resolution - 1) as f64)
        .collect();
    let mut best: Option<(f64, f64, Action)> = None; // (H, usage, action)
    let consider = |cand: Action, best: &mut Option<(f64, f64, Action)>| {
        let h = modification_objective(a, &cand, beta, cost_oracle(s, &cand));
        let usage = counted_resources(&cand).sum();
        let better = match best {
            None => true,
            Some((bh, bu, ba)) => {
                h < *bh - 1e-12
                    || ((h - *bh).abs() <= 1e-12
                        && (usage < *bu - 1e-12
                            || ((usage - *bu).abs() <= 1e-12
                                && cand.to_array() < ba.to_array())))
            }
        };
        if better {
            *best = Some((h, usage, cand));
        }
    };
    // The unmodified action is always a candidate: it is the zero-distance
    // point even when it sits off the grid.
    consider(*a, &mut best);
    let mut indices = vec![0usize; dims.len()];
    loop {
        let mut arr = a.to_array();
        for (d, &gi) in dims.iter().zip(indices.iter()) {
            arr[*d] = grid[gi];
        }
        consider(Action::from_array(arr), &mut best);
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
    best.unwrap().2
}

/// Anything that can turn a requested action into a feasible-leaning one
/// given the current dual prices: the learned modifier in production, the
/// brute-force oracle or a closed form in tests.
pub trait ActionModifier {
    fn modify(&self, s: &State, a: &Action, beta: &ResourceVector) -> Action;
}

/// Closure adapter for test modifiers.
pub struct FnModifier<F: Fn(&State, &Action, &ResourceVector) -> Action>(pub F);

impl<F: Fn(&State, &Action, &ResourceVector) -> Action> ActionModifier for FnModifier<F> {
    fn modify(&self, s: &State, a: &Action, beta: &ResourceVector) -> Action {
        (self.0)(s, a, beta)
    }
}

/// Learned approximation of the brute-force argmin.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModifierNet {
    pub net: TrainedMlp,
    pub horizon: usize,
}

/// Bounded network input: dual prices are squashed as `b / (1 + b)` so
/// arbitrarily large duals stay inside the unit cube.
pub fn modifier_input(s: &State, a: &Action, beta: &ResourceVector, horizon: usize) -> Vec<f64> {
    let mut x = Vec::with_capacity(MODIFIER_INPUT_DIM);
    x.extend_from_slice(&s.features(horizon));
    x.extend_from_slice(&a.to_array());
    for &b in beta.0.iter() {
        x.push(b / (1.0 + b));
    }
    x
}

impl ModifierNet {
    pub fn new(hidden: &[usize], horizon: usize, lr: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dims = vec![MODIFIER_INPUT_DIM];
        dims.extend_from_slice(hidden);
        dims.push(ACTION_DIM);
        let net = Mlp::init(&dims, OutputActivation::Sigmoid, &mut rng);
        ModifierNet {
            net: TrainedMlp::new(net, lr),
            horizon,
        }
    }
}

impl ActionModifier for ModifierNet {
    fn modify(&self, s: &State, a: &Action, beta: &ResourceVector) -> Action {
        let x = modifier_input(s, a, beta, self.horizon);
        let y = self.net.net.forward(&x);
        let mut arr = [0.0; ACTION_DIM];
        arr.copy_from_slice(&y);
        Action::from_array(arr).clamped()
    }
}

/// One supervised example for modifier training.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModifierSample {
    pub state: State,
    pub action: Action,
    pub beta: ResourceVector,
    pub target: Action,
    /// Oracle objective value at the target.
    pub h_value: f64,
}

/// Builds a supervised dataset by pricing logged state-action pairs with
/// independent exponential duals and solving each with the brute-force
/// oracle.
#[allow(clippy::too_many_arguments)]
pub fn build_modifier_dataset(
    log: &[(State, Action)],
    beta_means: &ResourceVector,
    cost_oracle: &dyn Fn(&State, &Action) -> f64,
    dims: &[usize],
    grid_resolution: usize,
    samples_per_pair: usize,
    seed: u64,
) -> Vec<ModifierSample> {
    assert!(!log.is_empty(), "modifier dataset needs a transition log");
    assert!(samples_per_pair >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(log.len() * samples_per_pair);
    for (s, a) in log {
        for _ in 0..samples_per_pair {
            let mut beta = ResourceVector::ZERO;
            for (b, &mean) in beta.0.iter_mut().zip(beta_means.0.iter()) {
                let u: f64 = rng.gen_range(0.0..1.0);
                *b = if mean > 0.0 { -mean * (1.0 - u).ln() } else { 0.0 };
            }
            let target = brute_force_modify(s, a, &beta, cost_oracle, dims, grid_resolution);
            let h_value = modification_objective(a, &target, &beta, cost_oracle(s, &target));
            out.push(ModifierSample {
                state: *s,
                action: *a,
                beta,
                target,
                h_value,
            });
        }
    }
    out
}

#[derive(Debug, Clone, Default)]
pub struct ModifierTrainStats {
    pub final_mse: f64,
    pub samples: usize,
}

/// Squared-error regression of the oracle targets.
pub fn train_modifier(
    net: &mut ModifierNet,
    dataset: &[ModifierSample],
    epochs: usize,
    batch: usize,
    rng: &mut dyn RngCore,
) -> ModifierTrainStats {
    assert!(!dataset.is_empty(), "modifier training needs data");
    let n = dataset.len();
    let batch = batch.max(1).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..epochs {
        for i in (1..n).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        for chunk in order.chunks(batch) {
            let b = chunk.len() as f64;
            let mut grads = MlpGrads::zeros_like(&net.net.net);
            for &i in chunk {
                let sample = &dataset[i];
                let x = modifier_input(&sample.state, &sample.action, &sample.beta, net.horizon);
                let cache = net.net.net.forward_cached(&x);
                let tgt = sample.target.to_array();
                let mut upstream = vec![0.0; ACTION_DIM];
                for d in 0..ACTION_DIM {
                    upstream[d] = 2.0 * (cache.output[d] - tgt[d]) / (b * ACTION_DIM as f64);
                }
                let g = net.net.net.backprop(&cache, &upstream);
                grads.accumulate(&g);
            }
            net.net.apply(&grads);
        }
    }
    ModifierTrainStats {
        final_mse: modifier_mse(net, dataset),
        samples: n,
    }
}

pub fn modifier_mse(net: &ModifierNet, dataset: &[ModifierSample]) -> f64 {
    let mut total = 0.0;
    for sample in dataset {
        let out = net
            .modify(&sample.state, &sample.action, &sample.beta)
            .to_array();
        let tgt = sample.target.to_array();
        for d in 0..ACTION_DIM {
            let e = out[d] - tgt[d];
            total += e * e;
        }
    }
    total / (dataset.len() * ACTION_DIM) as f64
}

/// Outcome of one coordination negotiation.
#[derive(Debug, Clone)]
pub struct CoordOutcome {
    pub actions: Vec<Action>,
    pub rounds: usize,
    /// False iff the loop hit max rounds and fell back to uniform scaling.
    pub converged: bool,
}

/// The synchronous negotiation loop: each round every slice re-modifies its
/// action under the current duals, then each resource coordinator moves its
/// dual by the signed over-request. Returns on feasibility; after
/// `max_rounds` the last iterate is uniformly scaled to capacity as a
/// guaranteed-feasible fallback.
pub fn coordinate(
    states: &[State],
    requested: &[Action],
    modifiers: &[&dyn ActionModifier],
    coord: &mut CoordState,
    capacities: &ResourceVector,
) -> CoordOutcome {
    coord.validate();
    assert_eq!(states.len(), requested.len());
    assert_eq!(states.len(), modifiers.len());
    let totals_of = |actions: &[Action]| {
        let mut t = ResourceVector::ZERO;
        for a in actions {
            t = t.add(&counted_resources(a));
        }
        t
    };
    let slack = coord.slack;
    let feasible = move |totals: &ResourceVector| {
        ResourceKind::ALL
            .iter()
            .all(|&k| totals.get(k) <= capacities.get(k) + slack)
    };
    // Over-requested resources take the usual projected subgradient step.
    // Satisfied ones relax multiplicatively instead: a full negative step
    // would zero the dual the moment the modified demand dips below
    // capacity, destroying the warm start the next slot relies on, while a
    // geometric decay keeps the price that produced feasibility and still
    // lets it dissipate once contention genuinely ends.
    let decay = |coord: &mut CoordState, totals: &ResourceVector| {
        for &k in ResourceKind::ALL.iter() {
            let excess = totals.get(k) - capacities.get(k);
            let b = if excess > 0.0 {
                coord.beta.get(k) + coord.step * excess
            } else {
                coord.beta.get(k) * DUAL_RELAX
            };
            coord.beta.set(k, b.max(0.0));
        }
    };
    // Nothing to negotiate when the requests already fit: pass them through
    // untouched and let any stale warm-start duals relax.
    let totals = totals_of(requested);
    if feasible(&totals) {
        decay(coord, &totals);
        // The slack admits a hair of overshoot that the environment's hard
        // capacity contract does not; the projection is the identity when
        // the aggregate is genuinely within capacity.
        return CoordOutcome {
            actions: project_actions(requested, capacities),
            rounds: 1,
            converged: true,
        };
    }
    let mut current: Vec<Action> = requested.to_vec();
    for round in 1..=coord.max_rounds {
        current = states
            .iter()
            .zip(requested.iter())
            .zip(modifiers.iter())
            .map(|((s, a), m)| m.modify(s, a, &coord.beta).clamped())
            .collect();
        let totals = totals_of(&current);
        if feasible(&totals) {
            // The duals are left exactly where they produced feasibility:
            // any decay here would drop them below the level the next
            // slot's warm start needs, forcing the same bump-and-retry
            // cycle a cold start pays. They relax through the shortcut
            // path above once raw demand fits on its own again.
            return CoordOutcome {
                actions: project_actions(&current, capacities),
                rounds: round,
                converged: true,
            };
        }
        decay(coord, &totals);
    }
    CoordOutcome {
        actions: project_actions(&current, capacities),
        rounds: coord.max_rounds,
        converged: false,
    }
}

/// Asserts the unconditional output contract: aggregate demand within
/// capacity on every resource kind.
pub fn assert_feasible(actions: &[Action], capacities: &ResourceVector, slack: f64) {
    let mut totals = ResourceVector::ZERO;
    for a in actions {
        totals = totals.add(&counted_resources(a));
    }
    for &k in ResourceKind::ALL.iter() {
        assert!(
            totals.get(k) <= capacities.get(k) + slack,
            "{} over capacity: {} > {}",
            k.name(),
            totals.get(k),
            capacities.get(k)
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const ZERO_COST: fn(&State, &Action) -> f64 = |_, _| 0.0;

    fn cpu_only_modifier() -> impl ActionModifier {
        // Closed-form argmin of |â−a|² + β·â over the cpu knob alone:
        // â_cpu = clamp(a_cpu − β_cpu / 2, 0, 1).
        FnModifier(|_s: &State, a: &Action, beta: &ResourceVector| {
            let mut m = *a;
            m.cpu = (a.cpu - beta.get(ResourceKind::Cpu) / 2.0).clamp(0.0, 1.0);
            m
        })
    }

    #[test]
    fn zero_weight_net_outputs_half() {
        let mut net = ModifierNet::new(&[8], 96, 1e-3, 1);
        for l in net.net.net.layers.iter_mut() {
            l.w.iter_mut().for_each(|w| *w = 0.0);
            l.b.iter_mut().for_each(|b| *b = 0.0);
        }
        let out = net.modify(&State::initial(0.05), &Action::uniform(0.9), &ResourceVector::ZERO);
        for v in out.to_array() {
            assert!((v - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn oracle_returns_original_on_grid_with_zero_beta() {
        let s = State::initial(0.05);
        let a = Action::from_array([0.5, 0.0, 0.0, 0.25, 0.0, 0.0, 0.75, 0.0, 1.0, 0.0]);
        let got = brute_force_modify(&s, &a, &ResourceVector::ZERO, &ZERO_COST, &[0, 3, 6, 8], 5);
        assert_eq!(got, a);
    }

    #[test]
    fn oracle_huge_beta_minimizes_usage() {
        let s = State::initial(0.05);
        let a = Action::uniform(0.75);
        let beta = ResourceVector::uniform(1e6);
        let got = brute_force_modify(&s, &a, &beta, &ZERO_COST, &[0, 3, 8], 5);
        assert_eq!(got.ul_bw, 0.0);
        assert_eq!(got.dl_bw, 0.0);
        assert_eq!(got.cpu, 0.0);
        // Non-key dims untouched.
        assert_eq!(got.tn_bw, 0.75);
    }

    #[test]
    fn oracle_is_deterministic() {
        let s = State::initial(0.05);
        let a = Action::uniform(0.4);
        let beta = ResourceVector::uniform(0.3);
        let g1 = brute_force_modify(&s, &a, &beta, &ZERO_COST, &[0, 6, 8], 5);
        let g2 = brute_force_modify(&s, &a, &beta, &ZERO_COST, &[0, 6, 8], 5);
        assert_eq!(g1, g2);
    }

    proptest! {
        #[test]
        fn oracle_dominates_every_grid_point(
            a_cpu in 0.0..1.0f64,
            a_ul in 0.0..1.0f64,
            b_cpu in 0.0..3.0f64,
            b_ul in 0.0..3.0f64,
            probe_i in 0usize..5,
            probe_j in 0usize..5,
        ) {
            let s = State::initial(0.05);
            let mut a = Action::ZERO;
            a.cpu = a_cpu;
            a.ul_bw = a_ul;
            let mut beta = ResourceVector::ZERO;
            beta.set(ResourceKind::Cpu, b_cpu);
            beta.set(ResourceKind::UlBw, b_ul);
            let dims = [8usize, 0usize];
            let best = brute_force_modify(&s, &a, &beta, &ZERO_COST, &dims, 5);
            let h_best = modification_objective(&a, &best, &beta, 0.0);
            let mut probe = a;
            probe.cpu = probe_i as f64 / 4.0;
            probe.ul_bw = probe_j as f64 / 4.0;
            let h_probe = modification_objective(&a, &probe, &beta, 0.0);
            prop_assert!(h_best <= h_probe + 1e-12);
        }
    }

    #[test]
    fn dataset_is_deterministic_and_dominant() {
        let mut log = Vec::new();
        for i in 0..4 {
            let mut s = State::initial(0.05);
            s.traffic = i as f64 / 4.0;
            log.push((s, Action::uniform(0.3 + 0.1 * i as f64)));
        }
        let means = ResourceVector::uniform(0.5);
        let d1 = build_modifier_dataset(&log, &means, &ZERO_COST, &[0, 8], 5, 2, 7);
        let d2 = build_modifier_dataset(&log, &means, &ZERO_COST, &[0, 8], 5, 2, 7);
        assert_eq!(d1.len(), 8);
        for (x, y) in d1.iter().zip(d2.iter()) {
            assert_eq!(x.target, y.target);
            assert_eq!(x.beta, y.beta);
        }
        // Argmin dominates the original action under the same duals.
        for sample in &d1 {
            let h_orig =
                modification_objective(&sample.action, &sample.action, &sample.beta, 0.0);
            assert!(sample.h_value <= h_orig + 1e-12);
        }
    }

    #[test]
    fn zero_beta_sampler_yields_near_identity_targets() {
        let mut s = State::initial(0.05);
        s.traffic = 0.5;
        // Original action on the grid; zero duals and zero cost make the
        // oracle return it exactly.
        let log = vec![(s, Action::from_array([0.5, 0.0, 0.0, 0.5, 0.0, 0.0, 0.5, 0.0, 0.5, 0.0]))];
        let d = build_modifier_dataset(
            &log,
            &ResourceVector::ZERO,
            &ZERO_COST,
            &[0, 3, 6, 8],
            5,
            3,
            1,
        );
        for sample in &d {
            assert_eq!(sample.target, log[0].1);
        }
    }

    #[test]
    fn train_memorizes_small_dataset_and_zero_epochs_noop() {
        let mut log = Vec::new();
        for i in 0..10 {
            let mut s = State::initial(0.05);
            s.traffic = i as f64 / 10.0;
            s.slot = i;
            log.push((s, Action::uniform(0.2 + 0.05 * i as f64)));
        }
        let means = ResourceVector::uniform(0.5);
        let dataset = build_modifier_dataset(&log, &means, &ZERO_COST, &[0, 8], 5, 1, 3);
        let mut net = ModifierNet::new(&[64, 32], 96, 3e-3, 5);
        let before = net.net.net.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        train_modifier(&mut net, &dataset, 0, 16, &mut rng);
        assert_eq!(net.net.net, before, "zero epochs must not train");
        let stats = train_modifier(&mut net, &dataset, 1500, 10, &mut rng);
        assert!(stats.final_mse < 1e-3, "mse {}", stats.final_mse);
    }

    #[test]
    fn coordinate_feasible_input_one_round() {
        let states = vec![State::initial(0.05); 2];
        let requested = vec![Action::uniform(0.2); 2];
        let identity = FnModifier(|_s: &State, a: &Action, _b: &ResourceVector| *a);
        let modifiers: Vec<&dyn ActionModifier> = vec![&identity, &identity];
        let mut coord = CoordState::default();
        let caps = ResourceVector::uniform(1.0);
        let out = coordinate(&states, &requested, &modifiers, &mut coord, &caps);
        assert!(out.converged);
        assert_eq!(out.rounds, 1);
        assert_eq!(out.actions, requested);
        assert_eq!(coord.beta, ResourceVector::ZERO);
    }

    #[test]
    fn coordinate_contended_cpu_converges_to_projection() {
        // Two slices each demanding 0.8 cpu against capacity 1.0; with the
        // separable closed-form modifier the dual converges to 0.6 and each
        // slice lands at 0.5 — exactly the uniform projection solution.
        let states = vec![State::initial(0.05); 2];
        let mut a = Action::ZERO;
        a.cpu = 0.8;
        let requested = vec![a; 2];
        let m = cpu_only_modifier();
        let modifiers: Vec<&dyn ActionModifier> = vec![&m, &m];
        let mut coord = CoordState {
            max_rounds: 40,
            slack: 1e-6,
            ..Default::default()
        };
        let caps = ResourceVector::uniform(1.0);
        let out = coordinate(&states, &requested, &modifiers, &mut coord, &caps);
        assert!(out.converged, "should converge within 40 rounds");
        let total: f64 = out.actions.iter().map(|x| x.cpu).sum();
        assert!(total <= 1.0 + 1e-6);
        assert!(coord.beta.get(ResourceKind::Cpu) > 0.0);
        for x in &out.actions {
            assert!((x.cpu - 0.5).abs() < 1e-3, "cpu {}", x.cpu);
        }
    }

    #[test]
    fn warm_start_shrinks_round_count() {
        let states = vec![State::initial(0.05); 2];
        let mut a = Action::ZERO;
        a.cpu = 0.8;
        let requested = vec![a; 2];
        let m = cpu_only_modifier();
        let modifiers: Vec<&dyn ActionModifier> = vec![&m, &m];
        let caps = ResourceVector::uniform(1.0);
        let mut coord = CoordState {
            max_rounds: 50,
            slack: 1e-4,
            ..Default::default()
        };
        let cold = coordinate(&states, &requested, &modifiers, &mut coord, &caps);
        assert!(cold.converged);
        // Same demands next slot: the retained duals are already right.
        let warm = coordinate(&states, &requested, &modifiers, &mut coord, &caps);
        assert!(warm.converged);
        assert!(
            warm.rounds < cold.rounds,
            "warm {} vs cold {}",
            warm.rounds,
            cold.rounds
        );
        assert!(warm.rounds <= 2);
    }

    #[test]
    fn fallback_projection_always_feasible() {
        let states = vec![State::initial(0.05); 3];
        let requested = vec![Action::uniform(0.9); 3];
        // A modifier that ignores the duals entirely, forcing the fallback.
        let stubborn = FnModifier(|_s: &State, a: &Action, _b: &ResourceVector| *a);
        let modifiers: Vec<&dyn ActionModifier> = vec![&stubborn, &stubborn, &stubborn];
        let mut coord = CoordState {
            max_rounds: 3,
            ..Default::default()
        };
        let caps = ResourceVector::uniform(1.0);
        let out = coordinate(&states, &requested, &modifiers, &mut coord, &caps);
        assert!(!out.converged);
        assert_eq!(out.rounds, 3);
        assert_feasible(&out.actions, &caps, 1e-9);
    }

    proptest! {
        #[test]
        fn beta_stays_nonnegative_and_output_feasible(
            cpu0 in 0.0..1.0f64,
            cpu1 in 0.0..1.0f64,
            step in 0.05..1.5f64,
            rounds in 1usize..12,
        ) {
            let states = vec![State::initial(0.05); 2];
            let mut a0 = Action::ZERO;
            a0.cpu = cpu0;
            let mut a1 = Action::ZERO;
            a1.cpu = cpu1;
            let m = cpu_only_modifier();
            let modifiers: Vec<&dyn ActionModifier> = vec![&m, &m];
            let mut coord = CoordState { step, max_rounds: rounds, ..Default::default() };
            let caps = ResourceVector::uniform(1.0);
            let out = coordinate(&states, &[a0, a1], &modifiers, &mut coord, &caps);
            prop_assert!(coord.beta.0.iter().all(|&b| b >= 0.0));
            let mut totals = ResourceVector::ZERO;
            for x in &out.actions {
                totals = totals.add(&counted_resources(x));
            }
            for k in ResourceKind::ALL {
                prop_assert!(totals.get(k) <= caps.get(k) + coord.slack + 1e-9);
            }
        }
    }
}
