//! The acceptance gate: every release criterion exercised end-to-end, one
//! printed PASS/FAIL line per criterion, failing the test if any criterion
//! fails. Run with `cargo test --test acceptance -- --nocapture` to watch
//! the lines appear; the full gate trains several online runs and takes
//! tens of minutes.

use netslice_core::agent::{Agent, AgentConfig};
use netslice_core::domain::{
    cost_from_perf, counted_resources, Action, Episode, PolicySource, ResourceVector, SliceKind,
    State, Transition,
};
use netslice_core::env::Env;
use netslice_core::nn::{GaussianParamDist, Mlp, OutputActivation};
use netslice_core::rollout::{run_joint_episode, RolloutConfig, RunMode};
use netslice_core::safety::{
    should_switch, should_switch_reactive, CostValueEstimator, EstimatorConfig, SafetyConfig,
    SwitchGuard,
};
use netslice_harness::config::ExperimentConfig;
use netslice_harness::pipeline;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::{Path, PathBuf};

/// Collects one line per criterion and fails at the end so every criterion
/// reports even when an early one fails.
#[derive(Default)]
struct Gate {
    lines: Vec<(bool, String)>,
}

impl Gate {
    fn check(&mut self, id: u32, name: &str, pass: bool, detail: String) {
        let line = format!(
            "{} criterion {:>2} ({name}): {detail}",
            if pass { "PASS" } else { "FAIL" },
            id
        );
        println!("{line}");
        self.lines.push((pass, line));
    }

    fn finish(self) {
        let failures: Vec<&str> = self
            .lines
            .iter()
            .filter(|(ok, _)| !ok)
            .map(|(_, l)| l.as_str())
            .collect();
        assert!(
            failures.is_empty(),
            "acceptance criteria failed:\n{}",
            failures.join("\n")
        );
    }
}

fn contended_config(seed: u64) -> ExperimentConfig {
    // The uncontended default capacity (1.0) lets every aggregate request
    // fit, which makes coordination and projection indistinguishable; the
    // coordination-focused criteria run on a tighter variant of the same
    // scenario. Capping compute and memory at 0.8 contends exactly the
    // kinds where uniform scaling hurts (the latency slice needs most of
    // the compute at peak hours) while smarter coordination can reclaim
    // the other slices' cheap over-requests instead.
    let mut cfg = ExperimentConfig::defaults(seed);
    cfg.env.capacities.set(netslice_core::ResourceKind::Cpu, 0.8);
    cfg.env.capacities.set(netslice_core::ResourceKind::Ram, 0.8);
    cfg
}

fn setup_snapshot(cfg: &ExperimentConfig, dir: &Path) -> pipeline::CollectReport {
    let report = pipeline::collect_baseline(cfg, dir).expect("collect-baseline");
    pipeline::pretrain(cfg, dir).expect("pretrain");
    report
}

fn all_row(rows: &[netslice_harness::metrics::MetricsRecord]) -> &netslice_harness::metrics::MetricsRecord {
    rows.iter()
        .rev()
        .find(|r| r.slice_id == "all")
        .expect("aggregate row present")
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

#[test]
fn acceptance_criteria() {
    let mut gate = Gate::default();
    let tmp = tempfile::tempdir().expect("tempdir");

    // ---- shared default-scenario snapshot (seed 0) --------------------
    let cfg0 = ExperimentConfig::defaults(0);
    let dir0: PathBuf = tmp.path().join("seed0");
    let collect0 = setup_snapshot(&cfg0, &dir0);
    let baseline_usage = mean(&collect0.usage_pct);
    let baseline_violation = mean(&collect0.violation_pct);

    // ---- criterion 3: imitation warm start ----------------------------
    {
        let rows = pipeline::evaluate(&cfg0, &dir0, RunMode::Full).expect("pretrained eval");
        let agg = all_row(&rows);
        let rel = (agg.usage_pct - baseline_usage).abs() / baseline_usage;
        let pass = rel <= 0.10 && agg.violation_pct <= baseline_violation + 1.0;
        gate.check(
            3,
            "imitation warm start",
            pass,
            format!(
                "pretrained eval usage {:.2}% vs baseline {:.2}% (rel {:.3} <= 0.10), violation {:.2}% vs baseline {:.2}%+1pp",
                agg.usage_pct, baseline_usage, rel, agg.violation_pct, baseline_violation
            ),
        );
    }

    // ---- criterion 10: modifier oracle gap ----------------------------
    {
        let report = pipeline::oracle_audit(&cfg0, &dir0, 200).expect("oracle audit");
        let worst = report
            .within_5pct
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        gate.check(
            10,
            "modifier oracle gap",
            worst >= 0.90,
            format!(
                "per-slice within-5% fractions {:?} (all >= 0.90)",
                report.within_5pct
            ),
        );
    }

    // ---- criterion 12: byte-identical CSV rerun -----------------------
    {
        let (rows_a, _) = pipeline::train_online(&cfg0, &dir0, RunMode::Full, 2, "det_a.csv", false)
            .expect("det run a");
        let (rows_b, _) = pipeline::train_online(&cfg0, &dir0, RunMode::Full, 2, "det_b.csv", false)
            .expect("det run b");
        let csv_a = netslice_harness::metrics::to_csv(&rows_a);
        let csv_b = netslice_harness::metrics::to_csv(&rows_b);
        let file_a = std::fs::read(dir0.join("det_a.csv")).expect("det_a.csv");
        let file_b = std::fs::read(dir0.join("det_b.csv")).expect("det_b.csv");
        let pass = csv_a == csv_b && file_a == file_b && csv_a.as_bytes() == file_a.as_slice();
        gate.check(
            12,
            "deterministic metrics CSV",
            pass,
            format!(
                "rerun of the same stage produced byte-identical CSV ({} bytes)",
                file_a.len()
            ),
        );
    }

    // ---- criteria 5 and 4: warm-start negotiation, hard feasibility ---
    {
        // Paired warm vs. cold coordination rounds over 200+ slots. The
        // snapshot is provisioned for the default substrate; evaluating it
        // with compute capped at 0.65 creates a genuine mid-episode
        // overload on a knob the modifiers know how to shed (the latency
        // slice's compute), so the negotiation really has to price it out
        // every peak slot instead of falling back.
        let mut cfg = ExperimentConfig::defaults(0);
        cfg.env.capacities.set(netslice_core::ResourceKind::Cpu, 0.65);
        let controllers = pipeline::load_controllers(&cfg, &dir0).expect("controllers");
        let run = |cold: bool| -> (Vec<usize>, usize, f64) {
            let mut env = Env::new(cfg.env.clone());
            let mut coord = pipeline::coord_from_cfg(&cfg);
            let mut rng = ChaCha8Rng::seed_from_u64(4242);
            let rcfg = RolloutConfig {
                mode: RunMode::Full,
                explore: false,
                est_noise_std: 0.0,
                md_noise_std: 0.0,
                cold_start: cold,
            };
            let mut rounds = Vec::new();
            let mut infeasible_slots = 0usize;
            let mut worst_excess = f64::NEG_INFINITY;
            for ep in 0..3u64 {
                let out = run_joint_episode(&mut env, &controllers, &mut coord, &rcfg, 50 + ep, &mut rng)
                    .expect("contended joint episode");
                rounds.extend(out.coord_rounds.iter().copied());
                let horizon = out.episodes[0].transitions.len();
                for slot in 0..horizon {
                    let mut total = ResourceVector::ZERO;
                    for e in &out.episodes {
                        total = total.add(&counted_resources(&e.transitions[slot].action));
                    }
                    for k in 0..total.0.len() {
                        let excess = total.0[k] - cfg.env.capacities.0[k];
                        worst_excess = worst_excess.max(excess);
                        if excess > 1e-6 {
                            infeasible_slots += 1;
                        }
                    }
                }
            }
            (rounds, infeasible_slots, worst_excess)
        };
        let (warm_rounds, warm_bad, warm_excess) = run(false);
        let (cold_rounds, cold_bad, cold_excess) = run(true);
        let n = 200.min(warm_rounds.len()).min(cold_rounds.len());
        let warm_mean = warm_rounds[..n].iter().sum::<usize>() as f64 / n as f64;
        let cold_mean = cold_rounds[..n].iter().sum::<usize>() as f64 / n as f64;
        gate.check(
            5,
            "coordination efficiency",
            warm_mean <= 3.0 && warm_mean < cold_mean,
            format!(
                "mean rounds over {n} paired contended slots: warm {:.3} (<= 3) < cold {:.3}",
                warm_mean, cold_mean
            ),
        );
        gate.check(
            4,
            "hard feasibility",
            warm_bad == 0 && cold_bad == 0,
            format!(
                "0 over-capacity slot-resources across {} contended slots (worst excess {:.2e})",
                warm_rounds.len() + cold_rounds.len(),
                warm_excess.max(cold_excess)
            ),
        );
    }


    // ---- criterion 2: online safety ordering NB > NE > full -----------
    let mut v_full = Vec::new();
    let mut v_nb = Vec::new();
    let mut v_ne = Vec::new();
    for seed in 0..3u64 {
        let cfg = ExperimentConfig::defaults(seed);
        let dir = if seed == 0 {
            dir0.clone()
        } else {
            let d = tmp.path().join(format!("seed{seed}"));
            setup_snapshot(&cfg, &d);
            d
        };
        for (mode, bucket) in [
            (RunMode::NoBaseline, &mut v_nb),
            (RunMode::NoEstimator, &mut v_ne),
            (RunMode::Full, &mut v_full),
        ] {
            let csv = format!("acc2_{}.csv", mode.name());
            let (_, report) = pipeline::train_online(&cfg, &dir, mode, 40, &csv, false)
                .expect("ordering run");
            bucket.push(report.mean_online_violation_pct);
        }
    }
    {
        let (m_nb, m_ne, m_full) = (mean(&v_nb), mean(&v_ne), mean(&v_full));
        let pass = m_full <= 1.0 && m_nb > m_ne && m_ne > m_full;
        gate.check(
            2,
            "online safety ordering",
            pass,
            format!(
                "3-seed mean online violation: NB {:.3}% > NE {:.3}% > full {:.3}% (full <= 1%); per-seed NB {:?}, NE {:?}, full {:?}",
                m_nb, m_ne, m_full, v_nb, v_ne, v_full
            ),
        );
    }

    // ---- criterion 1: constraint-aware convergence --------------------
    {
        let start = std::time::Instant::now();
        pipeline::train_online(&cfg0, &dir0, RunMode::Full, 100, "metrics.csv", true)
            .expect("convergence run");
        let rows = pipeline::evaluate(&cfg0, &dir0, RunMode::Full).expect("converged eval");
        let agg = all_row(&rows);
        let ratio = agg.usage_pct / baseline_usage;
        let pass = ratio <= 0.70 && agg.violation_pct <= 1.0;
        gate.check(
            1,
            "constraint-aware convergence",
            pass,
            format!(
                "eval usage {:.2}% vs baseline {:.2}% (ratio {:.3} <= 0.70), violation {:.2}% <= 1%, trained in {:.0} s",
                agg.usage_pct,
                baseline_usage,
                ratio,
                agg.violation_pct,
                start.elapsed().as_secs_f64()
            ),
        );
    }

    // ---- contended scenario: criteria 4, 5, 6 -------------------------
    let mut v_proj = Vec::new();
    let mut v_coord = Vec::new();
    for seed in 0..3u64 {
        let cfg = contended_config(seed);
        let dir = tmp.path().join(format!("contended{seed}"));
        setup_snapshot(&cfg, &dir);
        for (mode, bucket) in [
            (RunMode::Projection, &mut v_proj),
            (RunMode::Full, &mut v_coord),
        ] {
            let csv = format!("acc6_{}.csv", mode.name());
            let (_, report) = pipeline::train_online(&cfg, &dir, mode, 40, &csv, false)
                .expect("contended run");
            bucket.push(report.mean_online_violation_pct);
        }
    }
    {
        let (m_proj, m_coord) = (mean(&v_proj), mean(&v_coord));
        gate.check(
            6,
            "projection ablation",
            m_proj > m_coord,
            format!(
                "contended 3-seed mean violation: projection {:.3}% > full {:.3}%; per-seed projection {:?}, full {:?}",
                m_proj, m_coord, v_proj, v_coord
            ),
        );
    }
    // ---- criterion 7: primal-dual fixed point on a bandit -------------
    {
        // One-slot bandit: reward -(a0 - 0.9)^2, cost a0, budget 0.4.
        // Oracle by enumeration over a grid of deterministic policies.
        let c_max = 0.4;
        let reward = |a0: f64| -(a0 - 0.9f64).powi(2);
        let mut best_a = 0.0;
        let mut best_r = f64::NEG_INFINITY;
        for i in 0..=10_000 {
            let a0 = i as f64 / 10_000.0;
            if a0 <= c_max + 1e-12 && reward(a0) > best_r {
                best_r = reward(a0);
                best_a = a0;
            }
        }
        // Optimal multiplier = sensitivity of the optimal value to the
        // budget, estimated by central difference on the enumerated oracle.
        let opt_value = |budget: f64| -> f64 {
            let mut best = f64::NEG_INFINITY;
            for i in 0..=10_000 {
                let a0 = i as f64 / 10_000.0;
                if a0 <= budget {
                    best = best.max(reward(a0));
                }
            }
            best
        };
        let db = 1e-2;
        let lambda_star = (opt_value(c_max + db) - opt_value(c_max - db)) / (2.0 * db);

        let cfg = AgentConfig {
            hidden: vec![32],
            lr_actor: 3e-3,
            lr_critic: 1e-2,
            discount: 0.0,
            gae_decay: 0.0,
            lambda_step: 0.3,
            init_log_std: -2.0,
            ..Default::default()
        };
        let mut agent = Agent::new(cfg, 1, 11);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut lambda_tail = Vec::new();
        let mut cost_tail = Vec::new();
        let iters = 400;
        for it in 0..iters {
            let mut eps = Vec::new();
            let mut mean_cost = 0.0;
            for _ in 0..64 {
                let state = State::initial(c_max);
                let (a, _) = agent.act(&state, true, &mut rng);
                let a0 = a.to_array()[0];
                mean_cost += a0 / 64.0;
                eps.push(Episode {
                    transitions: vec![Transition {
                        state,
                        action: a,
                        reward: reward(a0),
                        cost: a0,
                        source: PolicySource::Learned,
                        perf_raw: 0.0,
                    }],
                    truncation_slot: None,
                });
            }
            agent.update_lambda(&eps, c_max);
            let buf = agent.build_buffer(&eps);
            agent.ppo_update(&buf, &mut rng);
            if it >= iters - 100 {
                lambda_tail.push(agent.lambda);
                cost_tail.push(mean_cost);
            }
        }
        let lambda_bar = mean(&lambda_tail);
        let cost_bar = mean(&cost_tail);
        let pass = cost_bar <= c_max + 0.01
            && (lambda_bar - lambda_star).abs() <= 0.20 * lambda_star;
        gate.check(
            7,
            "primal-dual fixed point",
            pass,
            format!(
                "bandit oracle a*={best_a:.3}, lambda*={lambda_star:.3}; converged mean cost {cost_bar:.4} <= {:.2}+0.01, lambda {lambda_bar:.3} within 20%",
                c_max
            ),
        );
    }

    // ---- criterion 8: estimator calibration + KL exactness ------------
    {
        // Synthetic suffix-cost data with known mean and spread: every slot
        // costs 0.045 except the last, which is 0.5 +/- 0.45 per episode,
        // so the suffix sum from any slot t has a known mean and a constant
        // +/-0.45 spread that no input feature can explain away.
        let horizon = 96usize;
        let base = 0.045;
        let m0 = base * (horizon as f64 - 1.0) + 0.5;
        let v0 = 0.45;
        let mut episodes = Vec::new();
        for e in 0..40 {
            let sign = if e % 2 == 0 { 1.0 } else { -1.0 };
            let mut transitions = Vec::with_capacity(horizon);
            let mut cum = 0.0;
            for slot in 0..horizon {
                let cost = if slot == horizon - 1 {
                    0.5 + sign * v0
                } else {
                    base
                };
                let mut s = State::initial(0.05);
                s.slot = slot;
                s.traffic = 0.4;
                s.cum_cost = cum;
                s.last_cost = base;
                transitions.push(Transition {
                    state: s,
                    action: Action::uniform(0.2),
                    reward: -1.0,
                    cost,
                    source: PolicySource::Baseline,
                    perf_raw: 0.0,
                });
                cum += cost;
            }
            episodes.push(Episode {
                transitions,
                truncation_slot: None,
            });
        }
        // The production default of 300 incremental fit steps underfits a
        // one-shot batch this size; give the optimizer room to converge.
        let est_cfg = EstimatorConfig {
            fit_steps: 2000,
            ..Default::default()
        };
        let mut est = CostValueEstimator::new(est_cfg, horizon, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        est.fit(&episodes, &mut rng).expect("estimator fit");
        let probe = episodes[0].transitions[0].state;
        let (mu, sigma) = est
            .predict(&probe, &SafetyConfig { eta: 1.0, samples: 64 }, &mut rng)
            .expect("prediction");
        let mu_ok = (mu - m0).abs() <= 0.10 * m0;
        let sigma_ok = (sigma - v0).abs() <= 0.25 * v0;

        // KL term against an independently coded closed form on a
        // hand-constructed two-parameter posterior.
        let mut dist = GaussianParamDist::new(&[1, 1], 1.0, -1.0, &mut rng);
        dist.mean.copy_from_flat(&[0.3, -0.7]);
        dist.log_std.copy_from_flat(&[(0.5f64).ln(), (1.5f64).ln()]);
        let manual = {
            let term = |mu: f64, sd: f64, sp: f64| {
                (sp / sd).ln() + (sd * sd + mu * mu) / (2.0 * sp * sp) - 0.5
            };
            term(0.3, 0.5, 1.0) + term(-0.7, 1.5, 1.0)
        };
        let kl_ok = (dist.kl_to_prior() - manual).abs() <= 1e-9;
        gate.check(
            8,
            "estimator calibration",
            mu_ok && sigma_ok && kl_ok,
            format!(
                "mu {mu:.3} vs {m0:.3} (10%), sigma {sigma:.3} vs {v0:.3} (25%), KL |delta| {:.1e} <= 1e-9",
                (dist.kl_to_prior() - manual).abs()
            ),
        );
    }

    // ---- criterion 9: switching exactness -----------------------------
    {
        let cfg = SafetyConfig { eta: 1.0, samples: 8 };
        let unit_ok = !should_switch(0.0, 1.0, 0.5, &cfg, 96, 0.05)
            && should_switch(4.8, 0.0, 0.0, &cfg, 96, 0.05)
            && should_switch(4.8, -0.0, 0.0, &cfg, 96, 0.05)
            && should_switch(2.0, 2.0, 0.8, &cfg, 96, 0.05)
            && !should_switch_reactive(0.0, 0, 96, 0.05)
            && should_switch_reactive(2.5, 1, 96, 0.05)
            && !should_switch_reactive(2.4, 1, 96, 0.05);

        // Scripted spike: quiet costs, then a burst; the guard must fire
        // within one slot of E_t = cum + mu + eta*sigma crossing T*C_max.
        let horizon = 96;
        let c_max = 0.05;
        let (mu, sigma) = (0.30, 0.10);
        let cost_at = |slot: usize| if (50..58).contains(&slot) { 0.55 } else { 0.01 };
        let mut cum = 0.0;
        let mut first_crossing = None;
        for slot in 0..horizon {
            if first_crossing.is_none() && cum + mu + cfg.eta * sigma >= horizon as f64 * c_max {
                first_crossing = Some(slot);
            }
            cum += cost_at(slot);
        }
        let mut guard = SwitchGuard::new();
        let mut cum = 0.0;
        for slot in 0..horizon {
            if !guard.is_switched() {
                guard.decide(slot, cum, mu, sigma, &cfg, horizon, c_max);
            }
            cum += cost_at(slot);
        }
        let crossing = first_crossing.expect("spike must cross the threshold");
        let switched = guard.switched_at().expect("guard must fire");
        let spike_ok = switched.abs_diff(crossing) <= 1;
        gate.check(
            9,
            "switching exactness",
            unit_ok && spike_ok,
            format!(
                "threshold unit checks hold; spike crossing at slot {crossing}, switch at slot {switched} (within 1)"
            ),
        );
    }

    // ---- criterion 11: gradient checks --------------------------------
    {
        let mut rng = ChaCha8Rng::seed_from_u64(1311);
        let mut worst = 0.0f64;
        let mut combos = 0;
        while combos < 50 {
            let input = rng.gen_range(1..=6);
            let output = rng.gen_range(1..=4);
            let depth = rng.gen_range(0..=2);
            let mut dims = vec![input];
            for _ in 0..depth {
                dims.push(rng.gen_range(1..=8));
            }
            dims.push(output);
            let act = if combos % 2 == 0 {
                OutputActivation::Identity
            } else {
                OutputActivation::Sigmoid
            };
            let net = Mlp::init(&dims, act, &mut rng);
            let x: Vec<f64> = (0..input).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let w: Vec<f64> = (0..output).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let loss = |net: &Mlp| -> f64 {
                net.forward(&x)
                    .iter()
                    .zip(&w)
                    .map(|(y, c)| c * y)
                    .sum::<f64>()
            };
            let cache = net.forward_cached(&x);
            // The analytic gradient is exact only away from the rectifier
            // kink; resample draws whose hidden pre-activations sit within
            // finite-difference range of it.
            if cache.min_hidden_pre_magnitude() < 1e-3 {
                continue;
            }
            let grads = net.backprop(&cache, &w);
            let mut analytic = Vec::new();
            grads.copy_to_flat(&mut analytic);
            let mut flat = Vec::new();
            net.copy_to_flat(&mut flat);
            let h = 1e-5;
            for (i, g) in analytic.iter().enumerate() {
                let mut plus = net.clone();
                let mut minus = net.clone();
                let mut fp = flat.clone();
                fp[i] += h;
                plus.copy_from_flat(&fp);
                fp[i] -= 2.0 * h;
                minus.copy_from_flat(&fp);
                let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
                let denom = g.abs().max(numeric.abs()).max(1e-6);
                worst = worst.max((g - numeric).abs() / denom);
            }
            combos += 1;
        }
        gate.check(
            11,
            "analytic gradients",
            worst <= 1e-4,
            format!("50 random shapes, worst relative error {worst:.2e} <= 1e-4"),
        );
    }

    // ---- criterion 13: cost formula exactness -------------------------
    {
        let cost = cost_from_perf(20.0, &SliceKind::hvs(30.0));
        let expected = 1.0 - 20.0 / 30.0;
        gate.check(
            13,
            "cost formula exactness",
            (cost - expected).abs() <= 1e-9,
            format!("20 FPS against target 30 costs {cost:.10} (= 1/3 within 1e-9)"),
        );
    }

    gate.finish();
}
