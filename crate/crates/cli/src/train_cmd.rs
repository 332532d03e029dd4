//! The `train` command: prior initialization, training and artifact output.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use verigate_core::reward::GateMode;
use verigate_core::toytask::{init_activation_prior, measure_pass_at_k, train, LexiconParams, ToyPolicy, TrainOutcome};

use crate::config::AppConfig;
use crate::gen::LexiconDocument;

/// Lexicon seed used when the config does not name a lexicon file.
pub const DEFAULT_LEXICON_SEED: u64 = 42;

#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    pub mode: String,
    pub steps: usize,
    pub initial_pass1: f64,
    pub final_pass1: f64,
    pub final_mean_reward: f64,
}

pub struct TrainRun {
    pub outcome: TrainOutcome,
    pub report: TrainReport,
}

pub fn load_task(cfg: &AppConfig) -> Result<LexiconDocument> {
    match &cfg.train.lexicon {
        Some(path) => LexiconDocument::load(path),
        None => LexiconDocument::generate(DEFAULT_LEXICON_SEED, LexiconParams::default()),
    }
}

/// Runs the full pipeline and writes `metrics.csv` and `policy.json` under `out`.
pub fn cmd_train(cfg: &AppConfig, mode: GateMode, out: &Path) -> Result<TrainRun> {
    let doc = load_task(cfg)?;
    let train_cfg = cfg.train.to_core();
    let prior = init_activation_prior(
        &doc.lexicon,
        train_cfg.temperature,
        train_cfg.max_len,
        &cfg.prior,
        &doc.split.train_ids,
        train_cfg.seed,
    )?;
    let pass1 = |policy: &ToyPolicy| -> Result<f64> {
        let curve = measure_pass_at_k(
            policy,
            &doc.lexicon,
            &doc.split.train_ids,
            cfg.prior.mc_samples,
            &[1],
            train_cfg.max_len,
            &cfg.reward,
            train_cfg.seed ^ 0x5eed,
        )?;
        Ok(curve.estimates[0])
    };
    let initial_pass1 = pass1(&prior)?;
    let outcome = train(&doc.lexicon, &doc.split, prior, &cfg.reward, &cfg.optim, &train_cfg, mode)?;
    let final_pass1 = pass1(&outcome.policy)?;
    let final_mean_reward = outcome.metrics.last().map(|r| r.mean_reward).unwrap_or(0.0);

    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let metrics_path = out.join("metrics.csv");
    let mut w = csv::Writer::from_path(&metrics_path).with_context(|| format!("creating {}", metrics_path.display()))?;
    for row in &outcome.metrics {
        w.serialize(row)?;
    }
    w.flush()?;
    let policy_path: PathBuf = out.join("policy.json");
    std::fs::write(&policy_path, serde_json::to_vec(&outcome.policy)?)
        .with_context(|| format!("writing {}", policy_path.display()))?;

    Ok(TrainRun {
        report: TrainReport {
            mode: mode.as_str().to_string(),
            steps: train_cfg.steps,
            initial_pass1,
            final_pass1,
            final_mean_reward,
        },
        outcome,
    })
}
