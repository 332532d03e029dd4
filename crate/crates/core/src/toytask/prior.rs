//! Latent-knowledge initialization: every entity's aliases are reachable
//! paths whose single-sample success rate is low but whose many-sample
//! coverage is high.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lexicon::{SyntheticLexicon, TokenId, BOS, EOS, FIRST_WORD, SRC_MARK, THINK_CLOSE, THINK_OPEN};
use super::policy::ToyPolicy;
use super::rollout::{sample_rollout_seeded, score_rollout};
use super::stream_seed;
use crate::error::{Error, Result};
use crate::evalkit::{pass_at_k_curve, PassAtKCurve, PassAtKInput};
use crate::reward::{GateMode, RewardConfig};

/// Fixed logits describing the response skeleton and the entity's candidate
/// renderings before the calibrated gold boost is added.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorShape {
    /// BOS -> THINK_OPEN.
    pub open_logit: f64,
    /// THINK_OPEN -> THINK_CLOSE (short deliberation).
    pub close_logit: f64,
    /// word -> EOS for words outside any candidate ending.
    pub eos_logit: f64,
    /// Candidate's last token -> EOS.
    pub end_eos_logit: f64,
    /// Logit for tokens that break the skeleton where they appear.
    pub off_structure_logit: f64,
    /// Plausible but wrong renderings planted per entity.
    pub distractors: usize,
    /// Start logit of a distractor after CLOSE or after a candidate ending.
    pub distractor_logit: f64,
    /// Logit of each within-candidate transition, gold or distractor.
    pub chain_logit: f64,
    /// Added to the gold start logit after a candidate ending (second guesses
    /// are better informed than first ones).
    pub followup_bonus: f64,
}

impl Default for PriorShape {
    fn default() -> Self {
        Self {
            open_logit: 6.0,
            close_logit: 5.0,
            eos_logit: 3.0,
            end_eos_logit: 6.0,
            off_structure_logit: -6.0,
            distractors: 3,
            distractor_logit: 4.0,
            chain_logit: 8.0,
            followup_bonus: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    /// Upper bound on the measured pass@1.
    pub target_pass1_max: f64,
    /// Lower bound on the measured pass@`k_high`.
    pub min_pass_high: f64,
    pub k_high: u64,
    /// Monte Carlo samples per entity for the final measurement.
    pub mc_samples: usize,
    /// Monte Carlo samples per entity for each calibration probe.
    pub calibration_samples: usize,
    pub max_attempts: usize,
    pub shape: PriorShape,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            target_pass1_max: 0.10,
            min_pass_high: 0.70,
            k_high: 64,
            mc_samples: 256,
            calibration_samples: 512,
            max_attempts: 6,
            shape: PriorShape::default(),
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.target_pass1_max > 0.0 && self.target_pass1_max < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "target_pass1_max must lie in (0, 1), got {}",
                self.target_pass1_max
            )));
        }
        if self.k_high == 0 || self.mc_samples < self.k_high as usize {
            return Err(Error::InvalidConfig(
                "mc_samples must be at least k_high (and k_high >= 1)".into(),
            ));
        }
        if self.calibration_samples == 0 || self.max_attempts == 0 {
            return Err(Error::InvalidConfig("calibration needs samples and attempts".into()));
        }
        Ok(())
    }
}

fn apply_shape(policy: &mut ToyPolicy, ctx: usize, shape: &PriorShape) {
    let vocab = policy.vocab_size() as u32;
    for prev in 0..vocab {
        let row = policy.row_mut(ctx, prev);
        row.iter_mut().for_each(|z| *z = 0.0);
        row[BOS as usize] = shape.off_structure_logit;
        row[SRC_MARK as usize] = shape.off_structure_logit;
        match prev {
            BOS => {
                row[THINK_OPEN as usize] = shape.open_logit;
                row[THINK_CLOSE as usize] = shape.off_structure_logit;
                row[EOS as usize] = shape.off_structure_logit;
            }
            THINK_OPEN => {
                row[THINK_CLOSE as usize] = shape.close_logit;
                row[THINK_OPEN as usize] = shape.off_structure_logit;
                row[EOS as usize] = shape.off_structure_logit;
            }
            THINK_CLOSE => {
                row[THINK_OPEN as usize] = shape.off_structure_logit;
                row[THINK_CLOSE as usize] = shape.off_structure_logit;
                row[EOS as usize] = shape.off_structure_logit;
            }
            _ => {
                row[THINK_OPEN as usize] = shape.off_structure_logit;
                row[THINK_CLOSE as usize] = shape.off_structure_logit;
                row[EOS as usize] = shape.eos_logit;
            }
        }
    }
}

/// Per-entity near-miss renderings: a gold alias whose first token is
/// swapped for a word the entity's aliases do not use. Sharing the rest of
/// the alias makes "done" ambiguous to a bigram policy.
fn distractors(lexicon: &SyntheticLexicon, ctx: usize, count: usize, seed: u64) -> Vec<Vec<TokenId>> {
    let gold = &lexicon.entities[ctx].aliases;
    let words: Vec<TokenId> = (FIRST_WORD..lexicon.vocab_size as TokenId)
        .filter(|w| !gold.iter().any(|a| a.contains(w)))
        .collect();
    if words.is_empty() {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, &[DISTRACTOR_STREAM, ctx as u64]));
    (0..count)
        .filter_map(|i| {
            let mut d = gold[i % gold.len()].clone();
            d[0] = *words.choose(&mut rng).expect("non-empty");
            let hits_gold = gold.iter().any(|g| d.windows(g.len()).any(|w| w == g.as_slice()));
            (!hits_gold).then_some(d)
        })
        .collect()
}

/// Writes the skeleton plus candidate chains for one context. Gold alias
/// starts get `boost`; everything else comes from `shape`.
fn apply_boost(
    policy: &mut ToyPolicy,
    ctx: usize,
    gold: &[Vec<TokenId>],
    wrong: &[Vec<TokenId>],
    shape: &PriorShape,
    boost: f64,
) {
    apply_shape(policy, ctx, shape);
    let candidates = || gold.iter().chain(wrong);
    for c in candidates() {
        for pair in c.windows(2) {
            policy.row_mut(ctx, pair[0])[pair[1] as usize] = shape.chain_logit;
        }
    }
    let mut entry_points = vec![THINK_CLOSE];
    for c in candidates() {
        let last = *c.last().expect("non-empty candidate");
        policy.row_mut(ctx, last)[EOS as usize] = shape.end_eos_logit;
        entry_points.push(last);
    }
    for &prev in &entry_points {
        let row = policy.row_mut(ctx, prev);
        for d in wrong {
            row[d[0] as usize] = shape.distractor_logit;
        }
        let b = if prev == THINK_CLOSE { boost } else { boost + shape.followup_bonus };
        for g in gold {
            row[g[0] as usize] = b;
        }
    }
}

/// Number of sampled responses (out of `n_samples` per entity) whose
/// translation contains a gold alias, with the format judged under `mode`.
#[allow(clippy::too_many_arguments)]
pub fn count_correct(
    policy: &ToyPolicy,
    lexicon: &SyntheticLexicon,
    entities: &[usize],
    n_samples: usize,
    max_len: usize,
    reward_cfg: &RewardConfig,
    mode: GateMode,
    seed: u64,
) -> Result<Vec<u64>> {
    entities
        .par_iter()
        .map(|&e| {
            let entry = lexicon.entity(e)?;
            let mut c = 0u64;
            for j in 0..n_samples {
                let r = sample_rollout_seeded(policy, e, max_len, stream_seed(seed, &[e as u64, j as u64]))?;
                if score_rollout(r, entry, reward_cfg, mode)?.breakdown.matched {
                    c += 1;
                }
            }
            Ok(c)
        })
        .collect()
}

/// Unbiased pass@k over `entities` from `n_samples` snapshot samples each.
#[allow(clippy::too_many_arguments)]
pub fn measure_pass_at_k(
    policy: &ToyPolicy,
    lexicon: &SyntheticLexicon,
    entities: &[usize],
    n_samples: usize,
    ks: &[u64],
    max_len: usize,
    reward_cfg: &RewardConfig,
    seed: u64,
) -> Result<PassAtKCurve> {
    let counts = count_correct(
        policy,
        lexicon,
        entities,
        n_samples,
        max_len,
        reward_cfg,
        GateMode::Full,
        seed,
    )?;
    pass_at_k_curve(&PassAtKInput {
        n: n_samples as u64,
        counts,
        ks: ks.to_vec(),
    })
}

const DISTRACTOR_STREAM: u64 = 0xd15;
const BOOST_LO: f64 = -4.0;
const BOOST_HI: f64 = 16.0;
const BISECTION_STEPS: usize = 18;

/// Builds a policy in the latent-knowledge regime: each entity's boost on its
/// alias transitions is bisected until its Monte Carlo success rate is near a
/// target, then pass@1 and pass@`k_high` are measured on `eval_entities`.
/// The target rate is adjusted between attempts.
pub fn init_activation_prior(
    lexicon: &SyntheticLexicon,
    temperature: f64,
    max_len: usize,
    config: &PriorConfig,
    eval_entities: &[usize],
    seed: u64,
) -> Result<ToyPolicy> {
    config.validate()?;
    lexicon.validate()?;
    if eval_entities.is_empty() {
        return Err(Error::EmptyInput("no entities to measure the prior on"));
    }
    let reward_cfg = RewardConfig::default();
    let mut policy = ToyPolicy::uniform(lexicon.len(), lexicon.vocab_size, temperature)?;
    let mut target_rate = config.target_pass1_max / 2.0;
    let mut last = (f64::NAN, f64::NAN);
    let wrong: Vec<Vec<Vec<TokenId>>> = (0..lexicon.len())
        .map(|ctx| distractors(lexicon, ctx, config.shape.distractors, seed))
        .collect();

    for attempt in 0..config.max_attempts {
        let boosts: Vec<f64> = (0..lexicon.len())
            .into_par_iter()
            .map(|ctx| {
                let mut probe = ToyPolicy::uniform(1, lexicon.vocab_size, temperature)?;
                let mut sub = lexicon.clone();
                sub.entities = vec![lexicon.entities[ctx].clone()];
                sub.entities[0].entity_id = 0;
                let gold = &lexicon.entities[ctx].aliases;
                let probe_seed = stream_seed(seed, &[attempt as u64, ctx as u64]);
                let (mut lo, mut hi) = (BOOST_LO, BOOST_HI);
                for _ in 0..BISECTION_STEPS {
                    let mid = 0.5 * (lo + hi);
                    apply_boost(&mut probe, 0, gold, &wrong[ctx], &config.shape, mid);
                    probe.refresh_snapshot();
                    let hits = count_correct(
                        &probe,
                        &sub,
                        &[0],
                        config.calibration_samples,
                        max_len,
                        &reward_cfg,
                        GateMode::Full,
                        probe_seed,
                    )?[0];
                    if (hits as f64) / (config.calibration_samples as f64) < target_rate {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                Ok(0.5 * (lo + hi))
            })
            .collect::<Result<_>>()?;

        for (ctx, &b) in boosts.iter().enumerate() {
            apply_boost(&mut policy, ctx, &lexicon.entities[ctx].aliases, &wrong[ctx], &config.shape, b);
        }
        policy.refresh_snapshot();

        let curve = measure_pass_at_k(
            &policy,
            lexicon,
            eval_entities,
            config.mc_samples,
            &[1, config.k_high],
            max_len,
            &reward_cfg,
            stream_seed(seed, &[u64::MAX, attempt as u64]),
        )?;
        let pass1 = curve.estimates[0];
        let pass_high = curve.estimates[1];
        last = (pass1, pass_high);
        let low_ok = pass1 <= config.target_pass1_max;
        let high_ok = pass_high >= config.min_pass_high;
        match (low_ok, high_ok) {
            (true, true) => return Ok(policy),
            (false, true) => target_rate *= 0.7,
            (true, false) => target_rate = (target_rate * 1.3).min(config.target_pass1_max),
            (false, false) => break,
        }
    }
    Err(Error::ActivationPrior {
        attempts: config.max_attempts,
        pass1: last.0,
        k_high: config.k_high as usize,
        pass_high: last.1,
    })
}
