//! Entity-conditioned bigram softmax policy.
//!
//! The parameter table holds one logit row per `(entity, previous token)`
//! pair. Sampling always reads the frozen snapshot; log-probabilities for the
//! surrogate read the live table.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::lexicon::{TokenId, BOS};
use crate::error::{Error, Result};
use crate::optim::DifferentiablePolicy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyPolicy {
    n_contexts: usize,
    vocab_size: usize,
    temperature: f64,
    logits: Vec<f64>,
    old_logits: Vec<f64>,
    snapshot: u64,
}

/// Numerically stable `softmax(row / temperature)` written into `out`.
/// A zero temperature puts all mass on the first maximal entry.
pub fn softmax_into(row: &[f64], temperature: f64, out: &mut [f64]) {
    debug_assert_eq!(row.len(), out.len());
    if temperature == 0.0 {
        let best = argmax(row);
        out.iter_mut().for_each(|p| *p = 0.0);
        out[best] = 1.0;
        return;
    }
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &z) in out.iter_mut().zip(row) {
        *o = ((z - max) / temperature).exp();
        sum += *o;
    }
    out.iter_mut().for_each(|p| *p /= sum);
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &z) in row.iter().enumerate() {
        if z > row[best] {
            best = i;
        }
    }
    best
}

/// Shannon entropy in nats.
pub fn entropy(probs: &[f64]) -> f64 {
    probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum()
}

impl ToyPolicy {
    /// All-zero logits: the uniform policy.
    pub fn uniform(n_contexts: usize, vocab_size: usize, temperature: f64) -> Result<Self> {
        if n_contexts == 0 || vocab_size < 2 {
            return Err(Error::InvalidConfig(
                "policy needs at least one context and two tokens".into(),
            ));
        }
        if !(temperature >= 0.0 && temperature.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "temperature must be >= 0, got {temperature}"
            )));
        }
        let n = n_contexts * vocab_size * vocab_size;
        Ok(Self {
            n_contexts,
            vocab_size,
            temperature,
            logits: vec![0.0; n],
            old_logits: vec![0.0; n],
            snapshot: 0,
        })
    }

    pub fn n_contexts(&self) -> usize {
        self.n_contexts
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn set_temperature(&mut self, temperature: f64) -> Result<()> {
        if !(temperature >= 0.0 && temperature.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "temperature must be >= 0, got {temperature}"
            )));
        }
        self.temperature = temperature;
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        self.logits.len()
    }

    fn row_offset(&self, ctx: usize, prev: TokenId) -> usize {
        (ctx * self.vocab_size + prev as usize) * self.vocab_size
    }

    pub fn row(&self, ctx: usize, prev: TokenId) -> &[f64] {
        let o = self.row_offset(ctx, prev);
        &self.logits[o..o + self.vocab_size]
    }

    pub fn row_mut(&mut self, ctx: usize, prev: TokenId) -> &mut [f64] {
        let o = self.row_offset(ctx, prev);
        &mut self.logits[o..o + self.vocab_size]
    }

    pub fn old_row(&self, ctx: usize, prev: TokenId) -> &[f64] {
        let o = self.row_offset(ctx, prev);
        &self.old_logits[o..o + self.vocab_size]
    }

    /// Copies the live table into the sampling snapshot and bumps the
    /// snapshot id.
    pub fn refresh_snapshot(&mut self) {
        self.old_logits.copy_from_slice(&self.logits);
        self.snapshot += 1;
    }

    pub fn snapshot(&self) -> u64 {
        self.snapshot
    }

    pub fn check_context(&self, ctx: usize) -> Result<()> {
        if ctx >= self.n_contexts {
            return Err(Error::Lexicon(format!(
                "entity {ctx} outside policy with {} contexts",
                self.n_contexts
            )));
        }
        Ok(())
    }

    /// Next-token distribution of the snapshot at `(ctx, prev)`.
    pub fn old_probs(&self, ctx: usize, prev: TokenId, out: &mut [f64]) {
        softmax_into(self.old_row(ctx, prev), self.temperature, out);
    }

    /// Next-token distribution of the live table at `(ctx, prev)`.
    pub fn probs(&self, ctx: usize, prev: TokenId, out: &mut [f64]) {
        softmax_into(self.row(ctx, prev), self.temperature, out);
    }

    /// Inverse-CDF draw from the snapshot distribution at `(ctx, prev)`.
    /// Returns the token, its log-probability and the row entropy.
    pub fn sample_next<R: Rng + ?Sized>(
        &self,
        ctx: usize,
        prev: TokenId,
        scratch: &mut [f64],
        rng: &mut R,
    ) -> (TokenId, f64, f64) {
        self.old_probs(ctx, prev, scratch);
        let h = entropy(scratch);
        if self.temperature == 0.0 {
            let t = argmax(self.old_row(ctx, prev));
            return (t as TokenId, 0.0, h);
        }
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut pick = scratch.len() - 1;
        for (i, &p) in scratch.iter().enumerate() {
            acc += p;
            if u < acc {
                pick = i;
                break;
            }
        }
        // Rounding can leave the tail slot with zero mass; step back to a
        // token that has probability.
        while scratch[pick] == 0.0 && pick > 0 {
            pick -= 1;
        }
        (pick as TokenId, scratch[pick].ln(), h)
    }

    fn log_probs_with(&self, table_old: bool, ctx: usize, tokens: &[TokenId]) -> Vec<f64> {
        let mut scratch = vec![0.0; self.vocab_size];
        let mut prev = BOS;
        tokens
            .iter()
            .map(|&t| {
                if table_old {
                    self.old_probs(ctx, prev, &mut scratch);
                } else {
                    self.probs(ctx, prev, &mut scratch);
                }
                prev = t;
                scratch[t as usize].ln()
            })
            .collect()
    }

    /// Per-token log-probabilities under the snapshot.
    pub fn old_token_log_probs(&self, ctx: usize, tokens: &[TokenId]) -> Vec<f64> {
        self.log_probs_with(true, ctx, tokens)
    }
}

impl DifferentiablePolicy for ToyPolicy {
    fn params(&self) -> &[f64] {
        &self.logits
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.logits
    }

    fn snapshot_id(&self) -> u64 {
        self.snapshot
    }

    fn token_log_probs(&self, prompt: usize, tokens: &[u32]) -> Vec<f64> {
        self.log_probs_with(false, prompt, tokens)
    }

    fn accumulate_log_prob_grad(&self, prompt: usize, tokens: &[u32], weight: f64, grad: &mut [f64]) {
        assert!(self.temperature > 0.0, "gradient undefined at zero temperature");
        let scale = weight / self.temperature;
        let mut probs = vec![0.0; self.vocab_size];
        let mut prev = BOS;
        for &t in tokens {
            self.probs(prompt, prev, &mut probs);
            let o = self.row_offset(prompt, prev);
            for (j, &p) in probs.iter().enumerate() {
                grad[o + j] -= scale * p;
            }
            grad[o + t as usize] += scale;
            prev = t;
        }
    }
}
