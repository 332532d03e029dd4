//! Critic-free clipped policy optimization.
//!
//! Advantages are standardized within each group of responses to the same
//! prompt. Each response gets one importance ratio, the geometric mean of its
//! per-token probability ratios, and the surrogate is the usual pessimistic
//! `min(s * A, clip(s) * A)` with separate lower and upper clip widths.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-token log-probabilities of one sampled response under the sampling
/// snapshot (`old_logp`) and the current parameters (`new_logp`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLogProbs {
    pub tokens: Vec<u32>,
    pub old_logp: Vec<f64>,
    pub new_logp: Vec<f64>,
}

impl TokenLogProbs {
    pub fn new(tokens: Vec<u32>, old_logp: Vec<f64>, new_logp: Vec<f64>) -> Result<Self> {
        let lp = Self {
            tokens,
            old_logp,
            new_logp,
        };
        lp.validate()?;
        Ok(lp)
    }

    /// Freshly sampled: current and snapshot parameters coincide.
    pub fn sampled(tokens: Vec<u32>, old_logp: Vec<f64>) -> Result<Self> {
        let new_logp = old_logp.clone();
        Self::new(tokens, old_logp, new_logp)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.tokens.len();
        if n == 0 {
            return Err(Error::InvalidLogProbs("empty sequence".into()));
        }
        if self.old_logp.len() != n || self.new_logp.len() != n {
            return Err(Error::InvalidLogProbs(format!(
                "length mismatch: {} tokens, {} old, {} new",
                n,
                self.old_logp.len(),
                self.new_logp.len()
            )));
        }
        if let Some(x) = self
            .old_logp
            .iter()
            .chain(&self.new_logp)
            .find(|x| x.is_nan() || **x > 0.0)
        {
            return Err(Error::InvalidLogProbs(format!("log-probability {x} is not <= 0")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMember {
    pub logprobs: TokenLogProbs,
    pub reward: f64,
}

/// G responses to one prompt, all sampled from the same parameter snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutGroup {
    pub prompt_id: usize,
    pub snapshot: u64,
    pub members: Vec<GroupMember>,
    pub advantages: Option<Vec<f64>>,
}

impl RolloutGroup {
    pub fn new(prompt_id: usize, snapshot: u64, members: Vec<GroupMember>) -> Self {
        Self {
            prompt_id,
            snapshot,
            members,
            advantages: None,
        }
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.members.iter().map(|m| m.reward).collect()
    }

    pub fn fill_advantages(&mut self, std_floor: f64) -> Result<&[f64]> {
        let adv = group_advantages(&self.rewards(), std_floor)?;
        Ok(self.advantages.insert(adv))
    }

    fn advantages_checked(&self) -> Result<&[f64]> {
        match &self.advantages {
            Some(a) if a.len() == self.members.len() => Ok(a),
            Some(a) => Err(Error::InvalidConfig(format!(
                "group has {} advantages for {} members",
                a.len(),
                self.members.len()
            ))),
            None => Err(Error::MissingAdvantages),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    #[default]
    Constant,
    Cosine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimConfig {
    #[serde(rename = "G", alias = "group_size")]
    pub group_size: usize,
    pub eps_low: f64,
    pub eps_high: f64,
    pub learning_rate: f64,
    #[serde(rename = "mini_batch", alias = "mini_batch_size")]
    pub mini_batch_size: usize,
    pub updates_per_batch: usize,
    pub std_floor: f64,
    pub optimizer: OptimizerKind,
    pub weight_decay: f64,
    pub schedule: LrSchedule,
    pub warmup_ratio: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            group_size: 16,
            eps_low: 3e-4,
            eps_high: 4e-4,
            learning_rate: 0.005,
            mini_batch_size: 8,
            updates_per_batch: 4,
            std_floor: 1e-9,
            optimizer: OptimizerKind::Adam,
            weight_decay: 0.0,
            schedule: LrSchedule::Constant,
            warmup_ratio: 0.0,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.group_size < 2 {
            return bad(format!("G must be >= 2, got {}", self.group_size));
        }
        if !(self.eps_low > 0.0 && self.eps_low < 1.0) || !(self.eps_high > 0.0) {
            return bad(format!(
                "clip widths must be positive (eps_low < 1), got {}/{}",
                self.eps_low, self.eps_high
            ));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be >= 0, got {}", self.learning_rate));
        }
        if self.mini_batch_size == 0 || self.updates_per_batch == 0 {
            return bad("mini_batch and updates_per_batch must be >= 1".into());
        }
        if !(self.std_floor > 0.0) {
            return bad(format!("std_floor must be positive, got {}", self.std_floor));
        }
        if !(0.0..1.0).contains(&self.warmup_ratio) || self.weight_decay < 0.0 {
            return bad("warmup_ratio must lie in [0, 1) and weight_decay >= 0".into());
        }
        Ok(())
    }

    /// Number of prompt groups consumed by one outer step.
    pub fn batch_groups(&self) -> usize {
        self.mini_batch_size * self.updates_per_batch
    }

    /// Learning rate at outer step `step` of `total` under the configured
    /// warmup and schedule.
    pub fn lr_at(&self, step: usize, total: usize) -> f64 {
        let total = total.max(1) as f64;
        let t = step as f64;
        let warmup = self.warmup_ratio * total;
        if warmup > 0.0 && t < warmup {
            return self.learning_rate * (t + 1.0) / warmup.ceil().max(1.0);
        }
        match self.schedule {
            LrSchedule::Constant => self.learning_rate,
            LrSchedule::Cosine => {
                let progress = ((t - warmup) / (total - warmup).max(1.0)).clamp(0.0, 1.0);
                0.5 * self.learning_rate * (1.0 + (std::f64::consts::PI * progress).cos())
            }
        }
    }
}

/// `(R_i - mean) / std` with the population standard deviation. Groups whose
/// std falls below `std_floor` get all-zero advantages.
pub fn group_advantages(rewards: &[f64], std_floor: f64) -> Result<Vec<f64>> {
    let g = rewards.len();
    if g < 2 {
        return Err(Error::UndersizedGroup(g));
    }
    let n = g as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if !(std >= std_floor) {
        return Ok(vec![0.0; g]);
    }
    Ok(rewards.iter().map(|r| (r - mean) / std).collect())
}

/// Log of the length-normalized sequence ratio.
pub fn seq_log_ratio(lp: &TokenLogProbs) -> f64 {
    let diff: f64 = lp
        .new_logp
        .iter()
        .zip(&lp.old_logp)
        .map(|(new, old)| new - old)
        .sum();
    diff / lp.len() as f64
}

pub fn seq_importance_ratio(lp: &TokenLogProbs) -> f64 {
    seq_log_ratio(lp).exp()
}

/// Which side of the `min` a term takes; only the unclipped side depends on
/// the parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClipBranch {
    Unclipped,
    Clipped,
}

pub fn clip_branch(s: f64, advantage: f64, eps_low: f64, eps_high: f64) -> ClipBranch {
    let clipped = s.clamp(1.0 - eps_low, 1.0 + eps_high);
    if s * advantage <= clipped * advantage {
        ClipBranch::Unclipped
    } else {
        ClipBranch::Clipped
    }
}

pub fn clipped_term(s: f64, advantage: f64, eps_low: f64, eps_high: f64) -> f64 {
    let clipped = s.clamp(1.0 - eps_low, 1.0 + eps_high);
    (s * advantage).min(clipped * advantage)
}

/// Mean over groups of the per-group mean clipped term, using each member's
/// `new_logp`.
pub fn surrogate_objective(groups: &[RolloutGroup], config: &OptimConfig) -> Result<f64> {
    if groups.is_empty() {
        return Err(Error::EmptyInput("no rollout groups"));
    }
    let mut total = 0.0;
    for group in groups {
        total += group_objective(group, config)?;
    }
    Ok(total / groups.len() as f64)
}

fn group_objective(group: &RolloutGroup, config: &OptimConfig) -> Result<f64> {
    let adv = group.advantages_checked()?;
    if group.members.is_empty() {
        return Err(Error::EmptyInput("rollout group has no members"));
    }
    let sum: f64 = group
        .members
        .iter()
        .zip(adv)
        .map(|(m, &a)| {
            clipped_term(
                seq_importance_ratio(&m.logprobs),
                a,
                config.eps_low,
                config.eps_high,
            )
        })
        .sum();
    Ok(sum / group.members.len() as f64)
}

/// An autoregressive policy with a flat parameter vector whose per-token
/// log-probabilities and their gradients can be evaluated for a given prompt.
pub trait DifferentiablePolicy {
    fn params(&self) -> &[f64];

    fn params_mut(&mut self) -> &mut [f64];

    /// Identifier of the frozen snapshot that rollouts are sampled from.
    fn snapshot_id(&self) -> u64;

    /// Per-token log-probabilities of `tokens` under the current parameters.
    fn token_log_probs(&self, prompt: usize, tokens: &[u32]) -> Vec<f64>;

    /// `grad += weight * sum_t d/dtheta log pi(tokens[t] | prompt, tokens[..t])`.
    fn accumulate_log_prob_grad(&self, prompt: usize, tokens: &[u32], weight: f64, grad: &mut [f64]);
}

/// Recomputes `new_logp` for every member under the policy's current
/// parameters.
pub fn refresh_new_logp<P: DifferentiablePolicy + ?Sized>(policy: &P, groups: &mut [RolloutGroup]) {
    for group in groups.iter_mut() {
        for m in group.members.iter_mut() {
            m.logprobs.new_logp = policy.token_log_probs(group.prompt_id, &m.logprobs.tokens);
        }
    }
}

/// Surrogate objective and its exact gradient with respect to the policy
/// parameters. `new_logp` is recomputed from the policy first.
pub fn surrogate_gradient<P: DifferentiablePolicy + ?Sized>(
    policy: &P,
    groups: &mut [RolloutGroup],
    config: &OptimConfig,
) -> Result<(f64, Vec<f64>)> {
    if groups.is_empty() {
        return Err(Error::EmptyInput("no rollout groups"));
    }
    refresh_new_logp(policy, groups);
    let mut grad = vec![0.0; policy.params().len()];
    let n_groups = groups.len() as f64;
    let mut objective = 0.0;
    for group in groups.iter() {
        let adv = group.advantages_checked()?;
        let g = group.members.len() as f64;
        for (m, &a) in group.members.iter().zip(adv) {
            let s = seq_importance_ratio(&m.logprobs);
            objective += clipped_term(s, a, config.eps_low, config.eps_high) / (g * n_groups);
            if a == 0.0 {
                continue;
            }
            if clip_branch(s, a, config.eps_low, config.eps_high) == ClipBranch::Unclipped {
                let weight = a * s / (m.logprobs.len() as f64 * g * n_groups);
                policy.accumulate_log_prob_grad(group.prompt_id, &m.logprobs.tokens, weight, &mut grad);
            }
        }
    }
    Ok((objective, grad))
}

/// First-order optimizer state for gradient ascent on a flat parameter
/// vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimizer {
    kind: OptimizerKind,
    weight_decay: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Optimizer {
    pub fn new(config: &OptimConfig, n_params: usize) -> Self {
        let (m, v) = match config.optimizer {
            OptimizerKind::Adam => (vec![0.0; n_params], vec![0.0; n_params]),
            OptimizerKind::Sgd => (Vec::new(), Vec::new()),
        };
        Self {
            kind: config.optimizer,
            weight_decay: config.weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m,
            v,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// One ascent step along `grad`.
    pub fn ascend(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        assert_eq!(params.len(), grad.len(), "gradient/parameter size mismatch");
        self.t += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p += lr * (g - self.weight_decay * *p);
                }
            }
            OptimizerKind::Adam => {
                assert_eq!(self.m.len(), params.len(), "optimizer built for another policy");
                let bc1 = 1.0 - self.beta1.powi(self.t as i32);
                let bc2 = 1.0 - self.beta2.powi(self.t as i32);
                for (((p, &g), m), v) in params
                    .iter_mut()
                    .zip(grad)
                    .zip(self.m.iter_mut())
                    .zip(self.v.iter_mut())
                {
                    *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                    *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                    let step = (*m / bc1) / ((*v / bc2).sqrt() + self.eps);
                    *p += lr * (step - self.weight_decay * *p);
                }
            }
        }
    }
}

/// Runs one outer update: shuffles the groups, splits them into
/// `updates_per_batch` mini-batches and takes one ascent step per mini-batch.
/// Returns the surrogate over all groups after the last step.
pub fn policy_update_step<P, R>(
    policy: &mut P,
    optimizer: &mut Optimizer,
    groups: &mut [RolloutGroup],
    config: &OptimConfig,
    lr: f64,
    rng: &mut R,
) -> Result<f64>
where
    P: DifferentiablePolicy + ?Sized,
    R: Rng + ?Sized,
{
    if groups.is_empty() {
        return Err(Error::EmptyInput("no rollout groups"));
    }
    let expected = policy.snapshot_id();
    if let Some(g) = groups.iter().find(|g| g.snapshot != expected) {
        return Err(Error::StaleRollout {
            expected,
            found: g.snapshot,
        });
    }
    for g in groups.iter() {
        g.advantages_checked()?;
    }

    groups.shuffle(rng);
    let n_chunks = config.updates_per_batch.clamp(1, groups.len());
    let chunk = groups.len().div_ceil(n_chunks);
    for batch in groups.chunks_mut(chunk) {
        let (_, grad) = surrogate_gradient(policy, batch, config)?;
        optimizer.ascend(policy.params_mut(), &grad, lr);
    }
    refresh_new_logp(policy, groups);
    surrogate_objective(groups, config)
}
