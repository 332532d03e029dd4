//! Evaluation estimators: entity accuracy, sentence-level chrF and the
//! unbiased pass@k estimator.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reward::RewardBreakdown;

/// Per-problem correct counts out of `n` samples and the `k` values to
/// estimate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassAtKInput {
    pub n: u64,
    pub counts: Vec<u64>,
    pub ks: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassAtKCurve {
    pub ks: Vec<u64>,
    pub estimates: Vec<f64>,
}

impl PassAtKCurve {
    pub fn at(&self, k: u64) -> Option<f64> {
        self.ks.iter().position(|&x| x == k).map(|i| self.estimates[i])
    }
}

/// `1 - C(n-c, k) / C(n, k)` as a running product. Returns exactly 1.0 when
/// fewer than `k` samples are incorrect.
pub fn pass_at_k_single(n: u64, c: u64, k: u64) -> Result<f64> {
    if c > n || k == 0 || k > n {
        return Err(Error::PassAtKBounds { n, c, k });
    }
    let wrong = n - c;
    if wrong < k {
        return Ok(1.0);
    }
    if k == 1 {
        return Ok(c as f64 / n as f64);
    }
    let mut all_wrong = 1.0f64;
    for j in 0..k {
        all_wrong *= (wrong - j) as f64 / (n - j) as f64;
    }
    Ok(1.0 - all_wrong)
}

/// Mean over problems of [`pass_at_k_single`] at each requested `k`.
pub fn pass_at_k_curve(input: &PassAtKInput) -> Result<PassAtKCurve> {
    if input.counts.is_empty() {
        return Err(Error::EmptyInput("pass@k needs at least one problem"));
    }
    if input.ks.is_empty() {
        return Err(Error::EmptyInput("pass@k needs at least one k"));
    }
    if input.ks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidConfig("ks must be strictly increasing".into()));
    }
    let problems = input.counts.len() as f64;
    let mut estimates = Vec::with_capacity(input.ks.len());
    for &k in &input.ks {
        let mut sum = 0.0;
        for &c in &input.counts {
            sum += pass_at_k_single(input.n, c, k)?;
        }
        estimates.push(sum / problems);
    }
    Ok(PassAtKCurve {
        ks: input.ks.clone(),
        estimates,
    })
}

/// Percentage of responses whose translation matched a gold alias, ignoring
/// the structural gates.
pub fn entity_accuracy(breakdowns: &[RewardBreakdown]) -> Result<f64> {
    accuracy_by(breakdowns, |b| b.matched)
}

/// Percentage of responses that matched and passed both gates, i.e. earned
/// the full reward.
pub fn gated_entity_accuracy(breakdowns: &[RewardBreakdown]) -> Result<f64> {
    accuracy_by(breakdowns, |b| b.matched && b.fmt_gate && b.len_gate)
}

fn accuracy_by(breakdowns: &[RewardBreakdown], hit: impl Fn(&RewardBreakdown) -> bool) -> Result<f64> {
    if breakdowns.is_empty() {
        return Err(Error::EmptyInput("entity accuracy over zero responses"));
    }
    let hits = breakdowns.iter().filter(|b| hit(b)).count();
    Ok(100.0 * hits as f64 / breakdowns.len() as f64)
}

pub const CHRF_DEFAULT_ORDER: usize = 6;
pub const CHRF_DEFAULT_BETA: f64 = 2.0;

/// Sentence chrF with the default character order 6 and beta 2.
pub fn chrf(hypothesis: &str, reference: &str) -> f64 {
    chrf_with(hypothesis, reference, CHRF_DEFAULT_ORDER, CHRF_DEFAULT_BETA)
        .expect("default chrF parameters are valid")
}

fn char_ngrams(chars: &[char], n: usize) -> HashMap<&[char], usize> {
    let mut counts = HashMap::new();
    if chars.len() >= n {
        for gram in chars.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Character n-gram F-score on a 0-100 scale. Precision and recall are
/// averaged over orders `1..=max_n`; an order where only one side has
/// n-grams scores 0 on both, an order where neither side has any is skipped.
pub fn chrf_with(hypothesis: &str, reference: &str, max_n: usize, beta: f64) -> Result<f64> {
    if max_n == 0 {
        return Err(Error::InvalidConfig("chrF order must be >= 1".into()));
    }
    if !(beta > 0.0) {
        return Err(Error::InvalidConfig(format!("chrF beta must be positive, got {beta}")));
    }
    let hyp: Vec<char> = hypothesis.chars().filter(|c| !c.is_whitespace()).collect();
    let refr: Vec<char> = reference.chars().filter(|c| !c.is_whitespace()).collect();
    if hyp.is_empty() && refr.is_empty() {
        return Ok(100.0);
    }

    let mut precision_sum = 0.0;
    let mut recall_sum = 0.0;
    let mut orders = 0usize;
    for n in 1..=max_n {
        let h = char_ngrams(&hyp, n);
        let r = char_ngrams(&refr, n);
        let h_total: usize = h.values().sum();
        let r_total: usize = r.values().sum();
        if h_total == 0 && r_total == 0 {
            continue;
        }
        orders += 1;
        if h_total == 0 || r_total == 0 {
            continue;
        }
        let overlap: usize = h
            .iter()
            .filter_map(|(gram, &hc)| r.get(gram).map(|&rc| hc.min(rc)))
            .sum();
        precision_sum += overlap as f64 / h_total as f64;
        recall_sum += overlap as f64 / r_total as f64;
    }

    let p = precision_sum / orders as f64;
    let r = recall_sum / orders as f64;
    let beta2 = beta * beta;
    let denom = beta2 * p + r;
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok(100.0 * (1.0 + beta2) * p * r / denom)
}
