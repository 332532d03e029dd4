use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lexicon::{EntitySplit, SyntheticLexicon};
use super::policy::ToyPolicy;
use super::prior::count_correct;
use super::rollout::{sample_rollout_seeded, score_rollout, ScoredRollout};
use super::stream_seed;
use crate::error::{Error, Result};
use crate::optim::{policy_update_step, GroupMember, OptimConfig, Optimizer, RolloutGroup};
use crate::reward::{GateMode, RewardConfig};

const PROMPT_STREAM: u64 = 1;
const ROLLOUT_STREAM: u64 = 2;
const SHUFFLE_STREAM: u64 = 3;
const EVAL_STREAM: u64 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    pub max_len: usize,
    pub temperature: f64,
    pub seed: u64,
    /// Samples per training entity for the per-step pass@1 estimate.
    pub eval_samples: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            max_len: 24,
            temperature: 1.0,
            seed: 0,
            eval_samples: 16,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_len == 0 {
            return Err(Error::InvalidConfig("max_len must be >= 1".into()));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "training temperature must be positive, got {}",
                self.temperature
            )));
        }
        if self.eval_samples == 0 {
            return Err(Error::InvalidConfig("eval_samples must be >= 1".into()));
        }
        Ok(())
    }
}

/// Per-step training diagnostics. Row `k` describes the policy after `k`
/// updates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMetricsRow {
    pub step: usize,
    pub mean_reward: f64,
    pub mean_trans_length: f64,
    pub mean_entropy: f64,
    pub pass1_eval: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub policy: ToyPolicy,
    pub metrics: Vec<TrainMetricsRow>,
    /// Rollouts sampled from the final policy, scored under the run's mode.
    pub final_rollouts: Vec<ScoredRollout>,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Group-relative clipped policy optimization on the synthetic task.
///
/// Each outer step refreshes the sampling snapshot, draws a batch of training
/// prompts, samples `G` rollouts per prompt, scores them under `mode`,
/// records a metrics row and applies [`policy_update_step`]. `steps` updates
/// produce `steps + 1` rows. Rollout sampling is parallel but every rollout
/// has its own seed stream, so results do not depend on the thread count.
#[allow(clippy::too_many_arguments)]
pub fn train(
    lexicon: &SyntheticLexicon,
    split: &EntitySplit,
    mut policy: ToyPolicy,
    reward_cfg: &RewardConfig,
    optim_cfg: &OptimConfig,
    train_cfg: &TrainConfig,
    mode: GateMode,
) -> Result<TrainOutcome> {
    reward_cfg.validate()?;
    optim_cfg.validate()?;
    train_cfg.validate()?;
    lexicon.validate()?;
    if split.train_ids.is_empty() {
        return Err(Error::EmptyInput("no training entities"));
    }
    if policy.n_contexts() != lexicon.len() || policy.vocab_size() != lexicon.vocab_size {
        return Err(Error::InvalidConfig(format!(
            "policy shape {}x{} does not match lexicon {}x{}",
            policy.n_contexts(),
            policy.vocab_size(),
            lexicon.len(),
            lexicon.vocab_size
        )));
    }
    if let Some(&bad) = split.train_ids.iter().find(|&&e| e >= lexicon.len()) {
        return Err(Error::Lexicon(format!("training entity {bad} not in lexicon")));
    }
    policy.set_temperature(train_cfg.temperature)?;

    let seed = train_cfg.seed;
    let g = optim_cfg.group_size;
    let mut optimizer = Optimizer::new(optim_cfg, policy.num_params());
    let mut metrics = Vec::with_capacity(train_cfg.steps + 1);

    for step in 0..=train_cfg.steps {
        policy.refresh_snapshot();
        let s = step as u64;

        let mut prompt_rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, &[PROMPT_STREAM, s]));
        let prompts: Vec<usize> = (0..optim_cfg.batch_groups())
            .map(|_| split.train_ids[prompt_rng.gen_range(0..split.train_ids.len())])
            .collect();

        let jobs: Vec<(usize, usize)> = (0..prompts.len())
            .flat_map(|p| (0..g).map(move |m| (p, m)))
            .collect();
        let scored: Vec<ScoredRollout> = jobs
            .par_iter()
            .map(|&(p, m)| {
                let entity = prompts[p];
                let rollout = sample_rollout_seeded(
                    &policy,
                    entity,
                    train_cfg.max_len,
                    stream_seed(seed, &[ROLLOUT_STREAM, s, p as u64, m as u64]),
                )?;
                score_rollout(rollout, lexicon.entity(entity)?, reward_cfg, mode)
            })
            .collect::<Result<_>>()?;

        let counts = count_correct(
            &policy,
            lexicon,
            &split.train_ids,
            train_cfg.eval_samples,
            train_cfg.max_len,
            reward_cfg,
            mode,
            stream_seed(seed, &[EVAL_STREAM, s]),
        )?;
        let pass1_eval = counts.iter().sum::<u64>() as f64
            / (train_cfg.eval_samples * split.train_ids.len()) as f64;

        metrics.push(TrainMetricsRow {
            step,
            mean_reward: mean(scored.iter().map(|r| r.breakdown.reward)),
            mean_trans_length: mean(scored.iter().map(|r| r.trans_len as f64)),
            mean_entropy: mean(scored.iter().map(|r| r.rollout.mean_entropy)),
            pass1_eval,
        });

        if step == train_cfg.steps {
            return Ok(TrainOutcome {
                policy,
                metrics,
                final_rollouts: scored,
            });
        }

        let mut groups = Vec::with_capacity(prompts.len());
        for (p, chunk) in scored.chunks(g).enumerate() {
            let members = chunk
                .iter()
                .map(|r| {
                    Ok(GroupMember {
                        logprobs: r.rollout.logprobs()?,
                        reward: r.breakdown.reward,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let mut group = RolloutGroup::new(prompts[p], policy.snapshot(), members);
            group.fill_advantages(optim_cfg.std_floor)?;
            groups.push(group);
        }
        let lr = optim_cfg.lr_at(step, train_cfg.steps);
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, &[SHUFFLE_STREAM, s]));
        policy_update_step(&mut policy, &mut optimizer, &mut groups, optim_cfg, lr, &mut shuffle_rng)?;
    }
    unreachable!("loop returns at the final step")
}
