//! End-to-end sanity check that the PPO update actually improves the
//! policy on a problem with a known optimum: a constant-state bandit
//! whose reward is the negated allocation sum, so the optimal policy
//! drives every action component toward zero.

use netslice_core::agent::{Agent, AgentConfig};
use netslice_core::domain::{Action, Episode, PolicySource, State, Transition};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn ppo_reduces_usage_in_constant_bandit() {
    let horizon = 96;
    // Reward depends only on the current slot's action, so undiscounted
    // per-slot credit (discount and GAE decay at 0) is the correct
    // assignment; a long discounted horizon would dilute it.
    let cfg = AgentConfig {
        hidden: vec![64, 32],
        lr_actor: 3e-3,
        discount: 0.0,
        gae_decay: 0.0,
        ..Default::default()
    };
    let mut agent = Agent::new(cfg, horizon, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(7);

    // Behavior-clone to a mid-range action first, mimicking the real
    // pipeline where online training starts from an imitated baseline.
    let bc: Vec<(State, Action)> = (0..50)
        .map(|_| (State::initial(0.05), Action::uniform(0.4)))
        .collect();
    agent.bc_pretrain(&bc, 200, &mut rng);

    let usage = |agent: &Agent| {
        let a = agent.mean_action(&State::initial(0.05));
        a.to_array().iter().sum::<f64>() / 10.0
    };
    let before = usage(&agent);
    for _ in 0..30 {
        let mut eps = Vec::new();
        for _ in 0..10 {
            let mut transitions = Vec::with_capacity(horizon);
            let state = State::initial(0.05);
            for _ in 0..horizon {
                let (a, _) = agent.act(&state, true, &mut rng);
                let r = -a.to_array().iter().sum::<f64>();
                transitions.push(Transition {
                    state,
                    action: a,
                    reward: r,
                    cost: 0.0,
                    source: PolicySource::Learned,
                    perf_raw: 0.0,
                });
            }
            eps.push(Episode {
                transitions,
                truncation_slot: None,
            });
        }
        let buf = agent.build_buffer(&eps);
        agent.ppo_update(&buf, &mut rng);
    }
    let after = usage(&agent);
    assert!(
        after < before - 0.05,
        "PPO failed to reduce usage: before {before:.4}, after {after:.4}"
    );
}
