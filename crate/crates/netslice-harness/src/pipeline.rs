//! Experiment stages: collect-baseline → pretrain → train-online →
//! evaluate, plus the ablation sweep and the modifier-oracle audit. Every
//! stage is deterministic given the config and seed, reads its predecessor's
//! artifacts from `out`, and writes its own atomically.

use crate::artifacts::{
    load_agents, load_baseline_log, load_estimators, load_modifiers, load_tables, save_agents,
    save_baseline_log, save_estimators, save_json, save_modifiers, save_tables, write_atomic,
};
use crate::config::ExperimentConfig;
use crate::metrics::{compute_metrics, to_csv, MetricsRecord};
use anyhow::{Context, Result};
use netslice_core::agent::Agent;
use netslice_core::baseline::{key_dims, GridPolicyTable};
use netslice_core::coordination::{
    build_modifier_dataset, modification_objective, train_modifier, ActionModifier, CoordState,
    ModifierNet,
};
use netslice_core::domain::{Action, Episode, ResourceVector, State};
use netslice_core::env::Env;
use netslice_core::rollout::{
    run_baseline_episode, run_joint_episode, RolloutConfig, RunMode, SliceController,
};
use netslice_core::safety::CostValueEstimator;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::path::Path;

/// Episode-seed bases keep the stages' environment draws disjoint.
const BASELINE_SEED_BASE: u64 = 1_000;
const TRAIN_SEED_BASE: u64 = 10_000;
const EVAL_SEED_BASE: u64 = 20_000_000;

/// Gradient steps for the per-epoch incremental estimator refit (the full
/// `fit_steps` budget is only spent on the initial offline fit).
const REFIT_STEPS: usize = 60;

fn mix(a: u64, b: u64) -> u64 {
    let mut x = a ^ b.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    x ^= x >> 30;
    x = x.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn thresholds(cfg: &ExperimentConfig) -> Vec<f64> {
    cfg.env.slices.iter().map(|s| s.sla_threshold).collect()
}

fn regroup(log: &[Vec<Episode>], slice: usize) -> Vec<Episode> {
    log.iter().map(|eps| eps[slice].clone()).collect()
}

// ---------------------------------------------------------------------------
// collect-baseline
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
pub struct CollectReport {
    pub schema_version: u32,
    pub episodes: usize,
    pub usage_pct: Vec<f64>,
    pub violation_pct: Vec<f64>,
    pub mean_cost: Vec<f64>,
}

/// Builds the per-slice grid policy tables and logs `baseline.episodes`
/// all-baseline episodes; the log feeds every later stage.
pub fn collect_baseline(cfg: &ExperimentConfig, out: &Path) -> Result<CollectReport> {
    let n = cfg.env.slices.len();
    let tables: Vec<GridPolicyTable> = (0..n)
        .map(|i| {
            netslice_core::baseline::build_table(
                &cfg.env,
                i,
                cfg.baseline_grid_resolution,
                cfg.baseline_num_buckets,
                mix(cfg.seed, 100 + i as u64),
            )
        })
        .collect();
    let mut env = Env::new(cfg.env.clone());
    let mut log = Vec::with_capacity(cfg.baseline_episodes);
    for e in 0..cfg.baseline_episodes {
        log.push(run_baseline_episode(
            &mut env,
            &tables,
            BASELINE_SEED_BASE + e as u64,
        )?);
    }
    save_tables(out, &tables)?;
    save_baseline_log(out, &log)?;

    let per_slice: Vec<Vec<Episode>> = (0..n).map(|i| regroup(&log, i)).collect();
    let lambdas = vec![0.0; n];
    let rows = compute_metrics(0, &per_slice, &thresholds(cfg), &lambdas, 0.0);
    write_atomic(&out.join("metrics_baseline.csv"), to_csv(&rows).as_bytes())?;
    let report = CollectReport {
        schema_version: crate::artifacts::ARTIFACT_SCHEMA_VERSION,
        episodes: cfg.baseline_episodes,
        usage_pct: rows[..n].iter().map(|r| r.usage_pct).collect(),
        violation_pct: rows[..n].iter().map(|r| r.violation_pct).collect(),
        mean_cost: rows[..n].iter().map(|r| r.mean_cost).collect(),
    };
    save_json(&out.join("collect_report.json"), "collect-report", &report)?;
    Ok(report)
}

// ---------------------------------------------------------------------------
// pretrain
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
pub struct PretrainReport {
    pub schema_version: u32,
    pub bc_mse: Vec<f64>,
    pub estimator_final_loss: Vec<f64>,
    pub estimator_datapoints: Vec<usize>,
    pub modifier_mse: Vec<f64>,
    pub modifier_samples: Vec<usize>,
}

/// Offline stage: behavior-clones each agent onto its baseline table's
/// logged actions, fits the cost-to-go estimators to the logged suffix
/// costs, and distills the brute-force modification oracle into the
/// per-slice modifier networks.
pub fn pretrain(cfg: &ExperimentConfig, out: &Path) -> Result<PretrainReport> {
    let tables = load_tables(out).context("collect-baseline artifacts required")?;
    let log = load_baseline_log(out).context("collect-baseline artifacts required")?;
    let n = cfg.env.slices.len();
    anyhow::ensure!(tables.len() == n, "table count does not match slice count");
    let horizon = cfg.env.slots_per_episode;
    let env = Env::new(cfg.env.clone());

    let mut agents = Vec::with_capacity(n);
    let mut estimators = Vec::with_capacity(n);
    let mut modifiers = Vec::with_capacity(n);
    let mut report = PretrainReport {
        schema_version: crate::artifacts::ARTIFACT_SCHEMA_VERSION,
        bc_mse: Vec::new(),
        estimator_final_loss: Vec::new(),
        estimator_datapoints: Vec::new(),
        modifier_mse: Vec::new(),
        modifier_samples: Vec::new(),
    };

    for i in 0..n {
        let episodes = regroup(&log, i);
        let pairs: Vec<(State, Action)> = episodes
            .iter()
            .flat_map(|ep| ep.transitions.iter().map(|t| (t.state, t.action)))
            .collect();

        // Behavior cloning.
        let mut rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed, 200 + i as u64));
        let mut agent = Agent::new(cfg.agent.clone(), horizon, mix(cfg.seed, 300 + i as u64));
        agent.lambda = cfg.init_lambda;
        agent.bc_pretrain(&pairs, cfg.bc_epochs, &mut rng);
        report.bc_mse.push(agent.bc_mse(&pairs));

        // Cost-to-go posterior.
        let mut estimator = CostValueEstimator::new(
            cfg.estimator.clone(),
            horizon,
            mix(cfg.seed, 400 + i as u64),
        );
        let stats = estimator.fit(&episodes, &mut rng)?;
        report.estimator_final_loss.push(stats.final_loss);
        report.estimator_datapoints.push(stats.datapoints);

        // Modifier distillation from the brute-force oracle.
        let capped: Vec<(State, Action)> = subsample(&pairs, cfg.modifier_pairs_cap, &mut rng);
        let tag = cfg.env.slices[i].kind.tag;
        let oracle = |s: &State, a: &Action| env.cost_model(i, s, a);
        let dataset = build_modifier_dataset(
            &capped,
            &ResourceVector::uniform(cfg.modifier_beta_mean),
            &oracle,
            key_dims(tag),
            cfg.modifier_grid_resolution,
            cfg.modifier_samples_per_pair,
            mix(cfg.seed, 500 + i as u64),
        );
        let mut modifier = ModifierNet::new(
            &cfg.modifier_hidden,
            horizon,
            cfg.modifier_lr,
            mix(cfg.seed, 600 + i as u64),
        );
        let stats = train_modifier(
            &mut modifier,
            &dataset,
            cfg.modifier_epochs,
            cfg.modifier_batch,
            &mut rng,
        );
        report.modifier_mse.push(stats.final_mse);
        report.modifier_samples.push(stats.samples);

        agents.push(agent);
        estimators.push(estimator);
        modifiers.push(modifier);
    }

    save_agents(out, &agents.iter().map(|a| a.to_checkpoint()).collect::<Vec<_>>())?;
    save_estimators(out, &estimators)?;
    save_modifiers(out, &modifiers)?;
    save_json(&out.join("pretrain_report.json"), "pretrain-report", &report)?;
    Ok(report)
}

fn subsample<T: Clone, R: Rng>(items: &[T], cap: usize, rng: &mut R) -> Vec<T> {
    if items.len() <= cap {
        return items.to_vec();
    }
    let mut idx: Vec<usize> = (0..items.len()).collect();
    for i in (1..idx.len()).rev() {
        let j = rng.gen_range(0..=i);
        idx.swap(i, j);
    }
    idx.truncate(cap);
    idx.sort_unstable();
    idx.into_iter().map(|i| items[i].clone()).collect()
}

// ---------------------------------------------------------------------------
// train-online / evaluate
// ---------------------------------------------------------------------------

/// Rebuilds the per-slice controllers (agent, estimator, baseline table,
/// modifier) from a directory's collect+pretrain artifacts.
pub fn load_controllers(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<SliceController>> {
    let tables = load_tables(out).context("collect-baseline artifacts required")?;
    let agents = load_agents(out).context("pretrain artifacts required")?;
    let estimators = load_estimators(out).context("pretrain artifacts required")?;
    let modifiers = load_modifiers(out).context("pretrain artifacts required")?;
    anyhow::ensure!(
        tables.len() == agents.len()
            && tables.len() == estimators.len()
            && tables.len() == modifiers.len(),
        "artifact slice counts disagree"
    );
    agents
        .into_iter()
        .zip(estimators)
        .zip(modifiers)
        .zip(tables)
        .map(|(((agent, estimator), modifier), table)| {
            Ok(SliceController {
                agent: Agent::from_checkpoint(agent)?,
                estimator,
                table,
                modifier,
                safety: cfg.safety.clone(),
            })
        })
        .collect()
}

/// Coordination state initialized from the experiment's knobs.
pub fn coord_from_cfg(cfg: &ExperimentConfig) -> CoordState {
    let coord = CoordState {
        beta: ResourceVector::ZERO,
        step: cfg.coord_step,
        max_rounds: cfg.coord_max_rounds,
        slack: cfg.coord_slack,
    };
    coord.validate();
    coord
}

fn rollout_cfg(cfg: &ExperimentConfig, mode: RunMode, explore: bool) -> RolloutConfig {
    RolloutConfig {
        mode,
        explore,
        est_noise_std: cfg.est_noise_std,
        md_noise_std: cfg.md_noise_std,
        cold_start: false,
    }
}

#[derive(Debug, Serialize)]
pub struct TrainReport {
    pub schema_version: u32,
    pub mode: String,
    pub epochs: usize,
    pub episodes_per_epoch: usize,
    pub final_lambda: Vec<f64>,
    /// Mean violation percent over all online epochs, `all` row.
    pub mean_online_violation_pct: f64,
    pub mean_online_usage_pct: f64,
    pub fallback_slots: usize,
}

/// Online stage: every epoch runs `episodes_per_epoch` joint episodes under
/// `mode`, updates each agent's dual after every episode and its policy
/// after every epoch, refits the estimators incrementally, and appends one
/// row set to the metrics CSV.
///
/// With `persist`, the updated agents and estimators overwrite the stored
/// checkpoints; the ablation sweep runs with `persist = false` so every
/// variant starts from the same pretrained snapshot.
pub fn train_online(
    cfg: &ExperimentConfig,
    out: &Path,
    mode: RunMode,
    epochs: usize,
    csv_name: &str,
    persist: bool,
) -> Result<(Vec<MetricsRecord>, TrainReport)> {
    let mut controllers = load_controllers(cfg, out)?;
    let n = controllers.len();
    let c_max = thresholds(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed, 700 + mode_salt(mode)));
    let mut coord = coord_from_cfg(cfg);
    let rcfg = rollout_cfg(cfg, mode, true);
    let mut rows: Vec<MetricsRecord> = Vec::new();
    let mut fallback_total = 0usize;
    let mut ep_counter = 0u64;

    for epoch in 0..epochs {
        let mut per_slice: Vec<Vec<Episode>> = vec![Vec::new(); n];
        let mut round_sum = 0usize;
        let mut slot_count = 0usize;
        for _ in 0..cfg.episodes_per_epoch {
            coord.reset();
            let seed = TRAIN_SEED_BASE + mix(cfg.seed, ep_counter) % 1_000_000;
            ep_counter += 1;
            let outcome =
                run_joint_episode(&mut env_of(cfg), &controllers, &mut coord, &rcfg, seed, &mut rng)?;
            round_sum += outcome.coord_rounds.iter().sum::<usize>();
            slot_count += outcome.coord_rounds.len();
            fallback_total += outcome.fallback_slots;
            for (i, ep) in outcome.episodes.into_iter().enumerate() {
                // The dual ascends on the learned policy's own per-slot cost
                // (the pre-switch prefix), not the guarded episode's: the
                // safety switch caps realized cost near the threshold, which
                // would starve lambda of the very signal it exists to carry.
                let prefix = ep.truncation_slot.unwrap_or(ep.transitions.len());
                let lambda_view = if prefix == 0 {
                    ep.clone()
                } else {
                    Episode {
                        transitions: ep.transitions[..prefix].to_vec(),
                        truncation_slot: None,
                    }
                };
                controllers[i]
                    .agent
                    .update_lambda(&[lambda_view], c_max[i] * cfg.cost_margin);
                per_slice[i].push(ep);
            }
        }
        for i in 0..n {
            let buf = controllers[i].agent.build_buffer(&per_slice[i]);
            if !buf.is_empty() {
                controllers[i].agent.ppo_update(&buf, &mut rng);
            }
            // The estimator answers "what would the baseline spend from
            // here", so refits only see post-switch (baseline-sourced)
            // tails; learned-prefix suffixes would poison both the mean and
            // the predictive spread.
            let tails: Vec<Episode> = per_slice[i]
                .iter()
                .filter_map(|ep| {
                    let k = ep.truncation_slot?;
                    if k >= ep.transitions.len() {
                        return None;
                    }
                    Some(Episode {
                        transitions: ep.transitions[k..].to_vec(),
                        truncation_slot: None,
                    })
                })
                .collect();
            if !tails.is_empty() {
                let saved_steps = controllers[i].estimator.cfg.fit_steps;
                controllers[i].estimator.cfg.fit_steps = REFIT_STEPS;
                controllers[i].estimator.fit(&tails, &mut rng)?;
                controllers[i].estimator.cfg.fit_steps = saved_steps;
            }
        }
        let lambdas: Vec<f64> = controllers.iter().map(|c| c.agent.lambda).collect();
        let mean_rounds = round_sum as f64 / slot_count.max(1) as f64;
        rows.extend(compute_metrics(epoch, &per_slice, &c_max, &lambdas, mean_rounds));
    }

    write_atomic(&out.join(csv_name), to_csv(&rows).as_bytes())?;
    if persist {
        save_agents(
            out,
            &controllers.iter().map(|c| c.agent.to_checkpoint()).collect::<Vec<_>>(),
        )?;
        save_estimators(
            out,
            &controllers.iter().map(|c| c.estimator.clone()).collect::<Vec<_>>(),
        )?;
    }

    let all_rows: Vec<&MetricsRecord> = rows.iter().filter(|r| r.slice_id == "all").collect();
    let k = all_rows.len().max(1) as f64;
    let report = TrainReport {
        schema_version: crate::artifacts::ARTIFACT_SCHEMA_VERSION,
        mode: mode.name().to_string(),
        epochs,
        episodes_per_epoch: cfg.episodes_per_epoch,
        final_lambda: controllers.iter().map(|c| c.agent.lambda).collect(),
        mean_online_violation_pct: all_rows.iter().map(|r| r.violation_pct).sum::<f64>() / k,
        mean_online_usage_pct: all_rows.iter().map(|r| r.usage_pct).sum::<f64>() / k,
        fallback_slots: fallback_total,
    };
    save_json(
        &out.join(format!("train_report_{}.json", mode.name())),
        "train-report",
        &report,
    )?;
    Ok((rows, report))
}

fn env_of(cfg: &ExperimentConfig) -> Env {
    Env::new(cfg.env.clone())
}

fn mode_salt(mode: RunMode) -> u64 {
    RunMode::ALL.iter().position(|&m| m == mode).unwrap() as u64
}

/// Held-out evaluation: `eval.episodes` episodes on reserved seeds with
/// exploration off and no learning. Writes `metrics_eval.csv` (epoch 0).
pub fn evaluate(
    cfg: &ExperimentConfig,
    out: &Path,
    mode: RunMode,
) -> Result<Vec<MetricsRecord>> {
    let controllers = load_controllers(cfg, out)?;
    let n = controllers.len();
    let c_max = thresholds(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed, 800 + mode_salt(mode)));
    let mut coord = coord_from_cfg(cfg);
    let rcfg = rollout_cfg(cfg, mode, false);
    let mut per_slice: Vec<Vec<Episode>> = vec![Vec::new(); n];
    let mut round_sum = 0usize;
    let mut slot_count = 0usize;
    for e in 0..cfg.eval_episodes {
        coord.reset();
        let outcome = run_joint_episode(
            &mut env_of(cfg),
            &controllers,
            &mut coord,
            &rcfg,
            EVAL_SEED_BASE + e as u64,
            &mut rng,
        )?;
        round_sum += outcome.coord_rounds.iter().sum::<usize>();
        slot_count += outcome.coord_rounds.len();
        for (i, ep) in outcome.episodes.into_iter().enumerate() {
            per_slice[i].push(ep);
        }
    }
    let lambdas: Vec<f64> = controllers.iter().map(|c| c.agent.lambda).collect();
    let rows = compute_metrics(
        0,
        &per_slice,
        &c_max,
        &lambdas,
        round_sum as f64 / slot_count.max(1) as f64,
    );
    write_atomic(&out.join("metrics_eval.csv"), to_csv(&rows).as_bytes())?;
    Ok(rows)
}

// ---------------------------------------------------------------------------
// ablate
// ---------------------------------------------------------------------------

/// Runs the online stage once per variant from the same pretrained
/// snapshot, writing `metrics_<mode>.csv` for each. Returns the per-mode
/// reports in `RunMode::ALL` order.
pub fn ablate(cfg: &ExperimentConfig, out: &Path, epochs: usize) -> Result<Vec<TrainReport>> {
    let mut reports = Vec::with_capacity(RunMode::ALL.len());
    for mode in RunMode::ALL {
        let csv = format!("metrics_{}.csv", mode.name());
        let (_, report) = train_online(cfg, out, mode, epochs, &csv, false)?;
        reports.push(report);
    }
    Ok(reports)
}

// ---------------------------------------------------------------------------
// oracle audit
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
pub struct OracleReport {
    pub schema_version: u32,
    /// Fraction of held-out states whose modifier-output objective is within
    /// 5% (relative, floor 1e-6 absolute) of the brute-force minimum, per
    /// slice.
    pub within_5pct: Vec<f64>,
    pub samples: Vec<usize>,
}

/// Audits the trained modifiers against the brute-force argmin on held-out
/// logged states (pairs not used by the distillation cap are preferred;
/// fresh duals are drawn either way, so targets never repeat training ones).
pub fn oracle_audit(cfg: &ExperimentConfig, out: &Path, samples: usize) -> Result<OracleReport> {
    let log = load_baseline_log(out).context("collect-baseline artifacts required")?;
    let modifiers = load_modifiers(out).context("pretrain artifacts required")?;
    let env = Env::new(cfg.env.clone());
    let n = cfg.env.slices.len();
    let mut report = OracleReport {
        schema_version: crate::artifacts::ARTIFACT_SCHEMA_VERSION,
        within_5pct: Vec::with_capacity(n),
        samples: Vec::with_capacity(n),
    };
    for i in 0..n {
        let pairs: Vec<(State, Action)> = regroup(&log, i)
            .iter()
            .flat_map(|ep| ep.transitions.iter().map(|t| (t.state, t.action)))
            .collect();
        // Held-out draw: a different salt than the training subsample/duals.
        let mut rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed, 900 + i as u64));
        let held: Vec<(State, Action)> = subsample(&pairs, samples, &mut rng);
        let tag = cfg.env.slices[i].kind.tag;
        let oracle = |s: &State, a: &Action| env.cost_model(i, s, a);
        let mut hits = 0usize;
        for (s, a) in &held {
            let mut beta = ResourceVector::ZERO;
            for b in beta.0.iter_mut() {
                let u: f64 = rng.gen_range(0.0..1.0);
                *b = -cfg.modifier_beta_mean * (1.0 - u).ln();
            }
            let best = netslice_core::coordination::brute_force_modify(
                s,
                a,
                &beta,
                &oracle,
                key_dims(tag),
                cfg.modifier_grid_resolution,
            );
            let h_best = modification_objective(a, &best, &beta, oracle(s, &best));
            let got = modifiers[i].modify(s, a, &beta);
            let h_got = modification_objective(a, &got, &beta, oracle(s, &got));
            if h_got <= h_best + (0.05 * h_best.abs()).max(1e-6) {
                hits += 1;
            }
        }
        report.within_5pct.push(hits as f64 / held.len().max(1) as f64);
        report.samples.push(held.len());
    }
    save_json(&out.join("oracle_report.json"), "oracle-report", &report)?;
    Ok(report)
}
