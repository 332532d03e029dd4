//! Gated verifiable reward.
//!
//! A response earns `alpha` for being well formed and within the length
//! budget, plus one more when its translation segment contains a gold alias.
//! Failing either gate zeroes the reward, so the only attainable values are
//! `0`, `alpha` and `alpha + 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textnorm::{match_entity, GoldEntitySet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LengthUnit {
    /// Unicode scalar values of the trimmed translation segment.
    #[default]
    Characters,
    /// Whitespace-separated tokens (native token ids in the toy task).
    Tokens,
}

impl LengthUnit {
    pub fn measure(self, text: &str) -> usize {
        match self {
            LengthUnit::Characters => text.trim().chars().count(),
            LengthUnit::Tokens => text.split_whitespace().count(),
        }
    }
}

/// Which gates are active. `Full` is the production setting; the others exist
/// to reproduce reward-hacking ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateMode {
    #[default]
    Full,
    /// Strict format check, length gate forced open.
    NoLenGate,
    /// Any well-formed think block anywhere makes the response eligible; no
    /// length gate.
    SoftFormat,
    /// No format gate; the whole output is the translation. Length gate kept.
    NoThink,
}

impl GateMode {
    pub const ALL: [GateMode; 4] = [
        GateMode::Full,
        GateMode::NoLenGate,
        GateMode::SoftFormat,
        GateMode::NoThink,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            GateMode::Full => "full",
            GateMode::NoLenGate => "no_len_gate",
            GateMode::SoftFormat => "soft_format",
            GateMode::NoThink => "no_think",
        }
    }

    pub fn length_gate_active(self) -> bool {
        matches!(self, GateMode::Full | GateMode::NoThink)
    }
}

impl std::str::FromStr for GateMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        GateMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown gate mode {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub alpha: f64,
    pub tau: f64,
    pub open_marker: String,
    pub close_marker: String,
    pub length_unit: LengthUnit,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            alpha: 0.2,
            tau: 2.0,
            open_marker: "<think>".into(),
            close_marker: "</think>".into(),
            length_unit: LengthUnit::Characters,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::InvalidConfig(format!(
                "alpha must lie in [0, 1), got {}",
                self.alpha
            )));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "tau must be positive, got {}",
                self.tau
            )));
        }
        if self.open_marker.is_empty() || self.close_marker.is_empty() {
            return Err(Error::InvalidConfig("markers must be non-empty".into()));
        }
        if self.open_marker == self.close_marker {
            return Err(Error::InvalidConfig("open and close markers must differ".into()));
        }
        Ok(())
    }

    pub fn max_reward(&self) -> f64 {
        self.alpha + 1.0
    }
}

/// A response split into its deliberation and translation parts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseSegments {
    pub raw: String,
    pub format_valid: bool,
    pub think: String,
    pub trans: String,
}

impl ResponseSegments {
    fn invalid(raw: &str) -> Self {
        Self {
            raw: raw.to_owned(),
            format_valid: false,
            think: String::new(),
            trans: String::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub fmt_gate: bool,
    pub len_gate: bool,
    #[serde(rename = "match")]
    pub matched: bool,
    pub reward: f64,
}

impl RewardBreakdown {
    /// Applies `R = g_fmt * g_len * (alpha + m)`. When the format gate is
    /// closed the other bits are reported as 0.
    pub fn from_gates(fmt_gate: bool, len_gate: bool, matched: bool, alpha: f64) -> Self {
        if !fmt_gate {
            return Self {
                fmt_gate: false,
                len_gate: false,
                matched: false,
                reward: 0.0,
            };
        }
        let reward = if len_gate {
            alpha + if matched { 1.0 } else { 0.0 }
        } else {
            0.0
        };
        Self {
            fmt_gate,
            len_gate,
            matched,
            reward,
        }
    }
}

/// Strict parse: exactly one open marker at the start (after optional
/// whitespace), exactly one close marker after it, and a non-blank
/// translation after the close marker.
pub fn parse_segments(raw: &str, config: &RewardConfig) -> ResponseSegments {
    let open = config.open_marker.as_str();
    let close = config.close_marker.as_str();

    if raw.matches(open).count() != 1 || raw.matches(close).count() != 1 {
        return ResponseSegments::invalid(raw);
    }
    let body = raw.trim_start();
    let Some(after_open) = body.strip_prefix(open) else {
        return ResponseSegments::invalid(raw);
    };
    let Some((think, rest)) = after_open.split_once(close) else {
        return ResponseSegments::invalid(raw);
    };
    let trans = rest.trim();
    if trans.is_empty() {
        return ResponseSegments::invalid(raw);
    }
    ResponseSegments {
        raw: raw.to_owned(),
        format_valid: true,
        think: think.to_owned(),
        trans: trans.to_owned(),
    }
}

/// Relaxed parse: the first open marker followed later by a close marker
/// forms the think block; everything outside it is the translation.
pub fn parse_segments_soft(raw: &str, config: &RewardConfig) -> ResponseSegments {
    let open = config.open_marker.as_str();
    let close = config.close_marker.as_str();

    let Some(start) = raw.find(open) else {
        return ResponseSegments::invalid(raw);
    };
    let inner_start = start + open.len();
    let Some(inner_len) = raw[inner_start..].find(close) else {
        return ResponseSegments::invalid(raw);
    };
    let think = &raw[inner_start..inner_start + inner_len];
    let tail = &raw[inner_start + inner_len + close.len()..];
    let trans = format!("{} {}", raw[..start].trim(), tail.trim());
    let trans = trans.trim();
    if trans.is_empty() {
        return ResponseSegments::invalid(raw);
    }
    ResponseSegments {
        raw: raw.to_owned(),
        format_valid: true,
        think: think.to_owned(),
        trans: trans.to_owned(),
    }
}

fn check_references(ref_lengths: &[usize]) -> Result<()> {
    if ref_lengths.is_empty() {
        return Err(Error::EmptyReferences);
    }
    if ref_lengths.contains(&0) {
        return Err(Error::ZeroReferenceLength);
    }
    Ok(())
}

/// Inclusive bound `len <= tau * mean(ref_lengths)` on an already measured
/// length.
pub fn within_length_bound(len: usize, ref_lengths: &[usize], tau: f64) -> Result<bool> {
    check_references(ref_lengths)?;
    let total: usize = ref_lengths.iter().sum();
    // len * n <= tau * sum avoids rounding in the mean.
    Ok((len as f64) * (ref_lengths.len() as f64) <= tau * total as f64)
}

pub fn length_gate(trans: &str, ref_lengths: &[usize], config: &RewardConfig) -> Result<bool> {
    within_length_bound(config.length_unit.measure(trans), ref_lengths, config.tau)
}

pub fn compute_reward(
    raw: &str,
    gold: &GoldEntitySet,
    ref_lengths: &[usize],
    config: &RewardConfig,
) -> Result<RewardBreakdown> {
    compute_reward_with_mode(raw, gold, ref_lengths, config, GateMode::Full)
}

pub fn compute_reward_with_mode(
    raw: &str,
    gold: &GoldEntitySet,
    ref_lengths: &[usize],
    config: &RewardConfig,
    mode: GateMode,
) -> Result<RewardBreakdown> {
    check_references(ref_lengths)?;
    let segments = match mode {
        GateMode::Full | GateMode::NoLenGate => parse_segments(raw, config),
        GateMode::SoftFormat => parse_segments_soft(raw, config),
        GateMode::NoThink => ResponseSegments {
            raw: raw.to_owned(),
            format_valid: true,
            think: String::new(),
            trans: raw.trim().to_owned(),
        },
    };
    if !segments.format_valid {
        return Ok(RewardBreakdown::from_gates(false, false, false, config.alpha));
    }
    let len_gate = if mode.length_gate_active() {
        length_gate(&segments.trans, ref_lengths, config)?
    } else {
        true
    };
    let matched = match_entity(&segments.trans, gold);
    Ok(RewardBreakdown::from_gates(true, len_gate, matched, config.alpha))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg() -> RewardConfig {
        RewardConfig::default()
    }

    fn gold() -> GoldEntitySet {
        GoldEntitySet::new("Q1", ["La Casa de Papel", "Money Heist"]).unwrap()
    }

    #[test]
    fn parses_canonical_response() {
        let s = parse_segments("<think>reason</think>la traducción", &cfg());
        assert!(s.format_valid);
        assert_eq!(s.think, "reason");
        assert_eq!(s.trans, "la traducción");

        let s = parse_segments("  \n<think></think>  x  ", &cfg());
        assert!(s.format_valid);
        assert_eq!(s.think, "");
        assert_eq!(s.trans, "x");
    }

    #[test]
    fn rejects_malformed_responses() {
        for raw in [
            "plain answer with no tags",
            "<think>reason</think>   ",
            "<think>reason",
            "reason</think>answer",
            "prefix <think>r</think>answer",
            "</think><think>answer",
            "<think>a</think>b<think>c</think>d",
            "<think>a</think></think>b",
            "<think><think>a</think>b",
            "",
        ] {
            let s = parse_segments(raw, &cfg());
            assert!(!s.format_valid, "{raw:?} should be invalid");
            assert!(s.think.is_empty() && s.trans.is_empty());
        }
    }

    #[test]
    fn soft_parse_accepts_block_anywhere() {
        let s = parse_segments_soft("first <think>r</think> second", &cfg());
        assert!(s.format_valid);
        assert_eq!(s.think, "r");
        assert_eq!(s.trans, "first second");
        let s = parse_segments_soft("a <think>r</think>b<think>c</think>", &cfg());
        assert!(s.format_valid);
        assert!(!parse_segments_soft("no block", &cfg()).format_valid);
        assert!(!parse_segments_soft("<think>only</think>", &cfg()).format_valid);
    }

    #[test]
    fn length_gate_boundaries() {
        let c = cfg();
        let t24 = "a".repeat(24);
        let t25 = "a".repeat(25);
        assert!(length_gate(&t24, &[10, 14], &c).unwrap());
        assert!(!length_gate(&t25, &[10, 14], &c).unwrap());
        assert!(length_gate("", &[1], &c).unwrap());
        assert_eq!(length_gate("x", &[], &c), Err(Error::EmptyReferences));
        assert_eq!(length_gate("x", &[3, 0], &c), Err(Error::ZeroReferenceLength));
    }

    #[test]
    fn token_length_unit() {
        let c = RewardConfig {
            length_unit: LengthUnit::Tokens,
            ..cfg()
        };
        assert!(length_gate("a b c d", &[2], &c).unwrap());
        assert!(!length_gate("a b c d e", &[2], &c).unwrap());
    }

    #[test]
    fn canonical_rewards() {
        let c = cfg();
        let r = compute_reward("<think>hmm</think>Me encanta La Casa de Papel.", &gold(), &[28], &c)
            .unwrap();
        assert_eq!(r.reward, 1.2);
        assert!(r.fmt_gate && r.len_gate && r.matched);

        let r = compute_reward("<think>hmm</think>Me encanta la serie.", &gold(), &[28], &c).unwrap();
        assert_eq!(r.reward, 0.2);
        assert!(!r.matched);

        let r = compute_reward("<think>hmm Me encanta La Casa de Papel.", &gold(), &[28], &c).unwrap();
        assert_eq!(r.reward, 0.0);
        assert!(!r.fmt_gate && !r.len_gate && !r.matched);
    }

    #[test]
    fn alias_in_think_only_is_ignored() {
        let r = compute_reward("<think>La Casa de Papel?</think>otra cosa", &gold(), &[20], &cfg())
            .unwrap();
        assert!(!r.matched);
        assert_eq!(r.reward, 0.2);
    }

    #[test]
    fn length_failure_zeroes_reward_but_reports_match() {
        let r = compute_reward("<think></think>money heist money heist", &gold(), &[5], &cfg()).unwrap();
        assert!(r.fmt_gate && !r.len_gate && r.matched);
        assert_eq!(r.reward, 0.0);
    }

    #[test]
    fn gate_modes() {
        let c = cfg();
        let g = gold();
        let long = "<think></think>money heist money heist money heist";
        assert_eq!(
            compute_reward_with_mode(long, &g, &[5], &c, GateMode::NoLenGate).unwrap().reward,
            1.2
        );
        let tagless = "Money Heist";
        assert_eq!(
            compute_reward_with_mode(tagless, &g, &[11], &c, GateMode::NoThink).unwrap().reward,
            1.2
        );
        assert_eq!(
            compute_reward_with_mode(tagless, &g, &[11], &c, GateMode::Full).unwrap().reward,
            0.0
        );
        let soft = "Money Heist <think>x</think> Money Heist Money Heist";
        assert_eq!(
            compute_reward_with_mode(soft, &g, &[3], &c, GateMode::SoftFormat).unwrap().reward,
            1.2
        );
        assert_eq!(
            compute_reward_with_mode(soft, &g, &[3], &c, GateMode::Full).unwrap().reward,
            0.0
        );
        for m in GateMode::ALL {
            assert_eq!(m.as_str().parse::<GateMode>().unwrap(), m);
        }
        assert!("bogus".parse::<GateMode>().is_err());
    }

    #[test]
    fn empty_references_propagate() {
        assert_eq!(
            compute_reward("<think></think>x", &gold(), &[], &cfg()),
            Err(Error::EmptyReferences)
        );
    }

    #[test]
    fn config_validation() {
        assert!(cfg().validate().is_ok());
        assert!(RewardConfig { alpha: 1.0, ..cfg() }.validate().is_err());
        assert!(RewardConfig { alpha: -0.1, ..cfg() }.validate().is_err());
        assert!(RewardConfig { tau: 0.0, ..cfg() }.validate().is_err());
        assert!(RewardConfig {
            close_marker: "<think>".into(),
            ..cfg()
        }
        .validate()
        .is_err());
    }

    fn response_strategy() -> impl Strategy<Value = String> {
        proptest::collection::vec(
            prop_oneof![
                Just("<think>".to_string()),
                Just("</think>".to_string()),
                Just(" ".to_string()),
                Just("money heist".to_string()),
                Just("Casa".to_string()),
                "[a-zé ]{0,6}",
            ],
            0..8,
        )
        .prop_map(|parts| parts.concat())
    }

    proptest! {
        #[test]
        fn reward_takes_only_three_values(
            raw in response_strategy(),
            refs in proptest::collection::vec(1usize..40, 1..3),
            mode_idx in 0usize..4,
        ) {
            let c = cfg();
            let mode = GateMode::ALL[mode_idx];
            let r = compute_reward_with_mode(&raw, &gold(), &refs, &c, mode).unwrap();
            prop_assert!(r.reward == 0.0 || r.reward == c.alpha || r.reward == c.alpha + 1.0);
            let expect = if r.fmt_gate && r.len_gate {
                c.alpha + if r.matched { 1.0 } else { 0.0 }
            } else {
                0.0
            };
            prop_assert_eq!(r.reward, expect);
            if !r.fmt_gate {
                prop_assert!(!r.len_gate && !r.matched);
            }
            let again = compute_reward_with_mode(&raw, &gold(), &refs, &c, mode).unwrap();
            prop_assert_eq!(r, again);
        }

        #[test]
        fn valid_segments_reassemble(raw in response_strategy()) {
            let c = cfg();
            let s = parse_segments(&raw, &c);
            if s.format_valid {
                let body = raw.trim_start();
                let expected_prefix = format!("{}{}{}", c.open_marker, s.think, c.close_marker);
                prop_assert!(body.starts_with(&expected_prefix));
                prop_assert_eq!(body[expected_prefix.len()..].trim(), s.trans.as_str());
                prop_assert!(!s.trans.is_empty());
            }
        }
    }
}
