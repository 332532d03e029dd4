//! Ancestral sampling from the policy snapshot and token-level reward
//! scoring under each gate mode.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::lexicon::{LexiconEntry, TokenId, BOS, EOS, THINK_CLOSE, THINK_OPEN};
use super::policy::ToyPolicy;
use crate::error::{Error, Result};
use crate::optim::TokenLogProbs;
use crate::reward::{within_length_bound, GateMode, RewardBreakdown, RewardConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rollout {
    pub entity: usize,
    /// Generated tokens, including the final EOS when one was produced.
    pub tokens: Vec<TokenId>,
    pub old_logp: Vec<f64>,
    /// Hit the length limit before emitting EOS.
    pub truncated: bool,
    /// Mean entropy of the snapshot distributions the tokens were drawn from.
    pub mean_entropy: f64,
}

impl Rollout {
    /// Output without the terminating EOS.
    pub fn body(&self) -> &[TokenId] {
        match self.tokens.last() {
            Some(&EOS) if !self.truncated => &self.tokens[..self.tokens.len() - 1],
            _ => &self.tokens,
        }
    }

    pub fn logprobs(&self) -> Result<TokenLogProbs> {
        TokenLogProbs::sampled(self.tokens.clone(), self.old_logp.clone())
    }
}

/// Samples until EOS or `max_len` generated tokens from the policy snapshot.
pub fn sample_rollout<R: Rng + ?Sized>(
    policy: &ToyPolicy,
    entity: usize,
    max_len: usize,
    rng: &mut R,
) -> Result<Rollout> {
    policy.check_context(entity)?;
    if max_len == 0 {
        return Err(Error::InvalidConfig("max_len must be >= 1".into()));
    }
    let mut scratch = vec![0.0; policy.vocab_size()];
    let mut tokens = Vec::with_capacity(max_len);
    let mut old_logp = Vec::with_capacity(max_len);
    let mut entropy_sum = 0.0;
    let mut prev = BOS;
    let mut finished = false;
    while tokens.len() < max_len {
        let (t, lp, h) = policy.sample_next(entity, prev, &mut scratch, rng);
        tokens.push(t);
        old_logp.push(lp);
        entropy_sum += h;
        prev = t;
        if t == EOS {
            finished = true;
            break;
        }
    }
    let mean_entropy = entropy_sum / tokens.len() as f64;
    Ok(Rollout {
        entity,
        tokens,
        old_logp,
        truncated: !finished,
        mean_entropy,
    })
}

pub fn sample_rollout_seeded(
    policy: &ToyPolicy,
    entity: usize,
    max_len: usize,
    seed: u64,
) -> Result<Rollout> {
    sample_rollout(policy, entity, max_len, &mut ChaCha8Rng::seed_from_u64(seed))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSegments {
    pub format_valid: bool,
    pub think: Vec<TokenId>,
    pub trans: Vec<TokenId>,
}

impl TokenSegments {
    fn invalid() -> Self {
        Self {
            format_valid: false,
            think: Vec::new(),
            trans: Vec::new(),
        }
    }

    fn valid(think: Vec<TokenId>, trans: Vec<TokenId>) -> Self {
        if trans.is_empty() {
            return Self::invalid();
        }
        Self {
            format_valid: true,
            think,
            trans,
        }
    }
}

/// Token analogue of the text parsers. Truncated outputs are never valid.
pub fn parse_tokens(body: &[TokenId], truncated: bool, mode: GateMode) -> TokenSegments {
    if truncated {
        return TokenSegments::invalid();
    }
    match mode {
        GateMode::Full | GateMode::NoLenGate => {
            let opens = body.iter().filter(|&&t| t == THINK_OPEN).count();
            let closes = body.iter().filter(|&&t| t == THINK_CLOSE).count();
            if opens != 1 || closes != 1 || body.first() != Some(&THINK_OPEN) {
                return TokenSegments::invalid();
            }
            let close = body.iter().position(|&t| t == THINK_CLOSE).unwrap_or(0);
            TokenSegments::valid(body[1..close].to_vec(), body[close + 1..].to_vec())
        }
        GateMode::SoftFormat => {
            let Some(open) = body.iter().position(|&t| t == THINK_OPEN) else {
                return TokenSegments::invalid();
            };
            let Some(rel) = body[open + 1..].iter().position(|&t| t == THINK_CLOSE) else {
                return TokenSegments::invalid();
            };
            let close = open + 1 + rel;
            let mut trans = body[..open].to_vec();
            trans.extend_from_slice(&body[close + 1..]);
            TokenSegments::valid(body[open + 1..close].to_vec(), trans)
        }
        GateMode::NoThink => TokenSegments::valid(Vec::new(), body.to_vec()),
    }
}

fn contains_seq(hay: &[TokenId], needle: &[TokenId]) -> bool {
    !needle.is_empty() && needle.len() <= hay.len() && hay.windows(needle.len()).any(|w| w == needle)
}

/// Tokens after the first close marker, or the whole output when there is
/// none. Used for length diagnostics independently of format validity.
pub fn translation_region(body: &[TokenId]) -> &[TokenId] {
    match body.iter().position(|&t| t == THINK_CLOSE) {
        Some(i) => &body[i + 1..],
        None => body,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredRollout {
    pub rollout: Rollout,
    pub breakdown: RewardBreakdown,
    /// Length of [`translation_region`].
    pub trans_len: usize,
    /// `trans_len <= tau * |canonical_ref|`.
    pub within_budget: bool,
    /// Number of different aliases occurring in the translation region.
    pub distinct_aliases: usize,
}

pub fn score_rollout(
    rollout: Rollout,
    entry: &LexiconEntry,
    config: &RewardConfig,
    mode: GateMode,
) -> Result<ScoredRollout> {
    let ref_lengths = [entry.canonical_ref.len()];
    let body = rollout.body();
    let segments = parse_tokens(body, rollout.truncated, mode);
    let breakdown = if segments.format_valid {
        let len_gate = if mode.length_gate_active() {
            within_length_bound(segments.trans.len(), &ref_lengths, config.tau)?
        } else {
            true
        };
        let matched = entry.aliases.iter().any(|a| contains_seq(&segments.trans, a));
        RewardBreakdown::from_gates(true, len_gate, matched, config.alpha)
    } else {
        RewardBreakdown::from_gates(false, false, false, config.alpha)
    };
    let region = translation_region(body);
    let trans_len = region.len();
    let within_budget = within_length_bound(trans_len, &ref_lengths, config.tau)?;
    let distinct_aliases = entry.aliases.iter().filter(|a| contains_seq(region, a)).count();
    Ok(ScoredRollout {
        rollout,
        breakdown,
        trans_len,
        within_budget,
        distinct_aliases,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toytask::lexicon::FIRST_WORD;

    const W: TokenId = FIRST_WORD;

    fn entry() -> LexiconEntry {
        LexiconEntry {
            entity_id: 0,
            source_token: W,
            aliases: vec![vec![W + 1, W + 2], vec![W + 3, W + 4, W + 5]],
            canonical_ref: vec![W + 1, W + 2],
        }
    }

    fn rollout(tokens: Vec<TokenId>, truncated: bool) -> Rollout {
        let n = tokens.len();
        Rollout {
            entity: 0,
            tokens,
            old_logp: vec![-1.0; n],
            truncated,
            mean_entropy: 0.0,
        }
    }

    fn score(tokens: Vec<TokenId>, truncated: bool, mode: GateMode) -> ScoredRollout {
        score_rollout(rollout(tokens, truncated), &entry(), &RewardConfig::default(), mode).unwrap()
    }

    #[test]
    fn canonical_token_rewards() {
        let good = vec![THINK_OPEN, W, THINK_CLOSE, W + 1, W + 2, EOS];
        assert_eq!(score(good, false, GateMode::Full).breakdown.reward, 1.2);
        let miss = vec![THINK_OPEN, THINK_CLOSE, W + 2, W + 1, EOS];
        assert_eq!(score(miss, false, GateMode::Full).breakdown.reward, 0.2);
        let unclosed = vec![THINK_OPEN, W + 1, W + 2, EOS];
        assert_eq!(score(unclosed, false, GateMode::Full).breakdown.reward, 0.0);
    }

    #[test]
    fn alias_in_think_does_not_match() {
        let s = score(vec![THINK_OPEN, W + 1, W + 2, THINK_CLOSE, W, EOS], false, GateMode::Full);
        assert!(!s.breakdown.matched);
        assert_eq!(s.breakdown.reward, 0.2);
    }

    #[test]
    fn length_gate_uses_reference_tokens() {
        // Budget is 2 * 2 = 4 tokens.
        let four = vec![THINK_OPEN, THINK_CLOSE, W, W, W + 1, W + 2, EOS];
        let s = score(four, false, GateMode::Full);
        assert!(s.breakdown.len_gate && s.within_budget);
        assert_eq!(s.trans_len, 4);
        let five = vec![THINK_OPEN, THINK_CLOSE, W, W, W, W + 1, W + 2, EOS];
        let s = score(five.clone(), false, GateMode::Full);
        assert!(!s.breakdown.len_gate && s.breakdown.matched);
        assert_eq!(s.breakdown.reward, 0.0);
        assert_eq!(score(five, false, GateMode::NoLenGate).breakdown.reward, 1.2);
    }

    #[test]
    fn truncation_scores_zero_in_every_mode() {
        let t = vec![THINK_OPEN, THINK_CLOSE, W + 1, W + 2];
        for mode in GateMode::ALL {
            let s = score(t.clone(), true, mode);
            assert_eq!(s.breakdown.reward, 0.0, "{mode:?}");
            assert!(!s.breakdown.fmt_gate);
        }
    }

    #[test]
    fn soft_and_no_think_modes() {
        let outside = vec![W + 1, W + 2, THINK_OPEN, THINK_CLOSE, W, EOS];
        assert_eq!(score(outside.clone(), false, GateMode::Full).breakdown.reward, 0.0);
        assert_eq!(score(outside.clone(), false, GateMode::SoftFormat).breakdown.reward, 1.2);
        let bare = vec![W + 3, W + 4, W + 5, EOS];
        assert_eq!(score(bare.clone(), false, GateMode::NoThink).breakdown.reward, 1.2);
        assert_eq!(score(bare, false, GateMode::SoftFormat).breakdown.reward, 0.0);
        assert_eq!(score(vec![EOS], false, GateMode::NoThink).breakdown.reward, 0.0);
    }

    #[test]
    fn counts_distinct_aliases() {
        let s = score(
            vec![THINK_OPEN, THINK_CLOSE, W + 1, W + 2, W + 3, W + 4, W + 5, W + 1, W + 2, EOS],
            false,
            GateMode::NoLenGate,
        );
        assert_eq!(s.distinct_aliases, 2);
        assert_eq!(s.trans_len, 7);
        assert!(!s.within_budget);
    }

    #[test]
    fn body_strips_eos_only_when_finished() {
        assert_eq!(rollout(vec![W, EOS], false).body(), &[W]);
        assert_eq!(rollout(vec![W, W], true).body(), &[W, W]);
    }

    #[test]
    fn max_len_one_yields_invalid_output() {
        let p = ToyPolicy::uniform(1, 10, 1.0).unwrap();
        for seed in 0..20 {
            let r = sample_rollout_seeded(&p, 0, 1, seed).unwrap();
            assert_eq!(r.tokens.len(), 1);
            let s = score_rollout(r, &entry(), &RewardConfig::default(), GateMode::Full).unwrap();
            assert_eq!(s.breakdown.reward, 0.0);
        }
        assert!(sample_rollout_seeded(&p, 0, 0, 1).is_err());
        assert!(sample_rollout_seeded(&p, 3, 5, 1).is_err());
    }

    #[test]
    fn seeded_sampling_is_reproducible() {
        let mut p = ToyPolicy::uniform(1, 10, 1.0).unwrap();
        p.row_mut(0, BOS)[EOS as usize] = -3.0;
        p.refresh_snapshot();
        let a = sample_rollout_seeded(&p, 0, 24, 77).unwrap();
        let b = sample_rollout_seeded(&p, 0, 24, 77).unwrap();
        assert_eq!(a, b);
        assert_eq!(p.old_token_log_probs(0, &a.tokens), a.old_logp);
    }

    #[test]
    fn greedy_sampling_follows_argmax() {
        let mut p = ToyPolicy::uniform(1, 10, 0.0).unwrap();
        p.row_mut(0, BOS)[THINK_OPEN as usize] = 1.0;
        p.row_mut(0, THINK_OPEN)[THINK_CLOSE as usize] = 1.0;
        p.row_mut(0, THINK_CLOSE)[(W + 1) as usize] = 1.0;
        p.row_mut(0, W + 1)[(W + 2) as usize] = 1.0;
        p.row_mut(0, W + 2)[EOS as usize] = 1.0;
        p.refresh_snapshot();
        for seed in 0..5 {
            let r = sample_rollout_seeded(&p, 0, 24, seed).unwrap();
            assert_eq!(r.tokens, vec![THINK_OPEN, THINK_CLOSE, W + 1, W + 2, EOS]);
        }
    }
}
