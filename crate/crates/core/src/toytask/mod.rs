//! Synthetic entity-translation environment.
//!
//! A lexicon maps source entities to several target-token aliases. A tabular
//! bigram policy writes `THINK_OPEN ... THINK_CLOSE translation EOS`, and the
//! gated reward scores the translation span. The initializer plants the
//! aliases as low-probability paths, so sampling many times finds them even
//! though single samples rarely do.

mod lexicon;
mod policy;
mod prior;
mod rollout;
mod train;

pub use lexicon::{
    gen_lexicon, is_special, EntitySplit, LexiconEntry, LexiconParams, SpecialTokens,
    SyntheticLexicon, TokenId, BOS, EOS, FIRST_WORD, SRC_MARK, THINK_CLOSE, THINK_OPEN,
};
pub use policy::{entropy, softmax_into, ToyPolicy};
pub use prior::{count_correct, init_activation_prior, measure_pass_at_k, PriorConfig, PriorShape};
pub use rollout::{
    parse_tokens, sample_rollout, sample_rollout_seeded, score_rollout, translation_region,
    Rollout, ScoredRollout, TokenSegments,
};
pub use train::{train, TrainConfig, TrainMetricsRow, TrainOutcome};

/// Derives an independent RNG seed from a base seed and a path of stream
/// identifiers (step, prompt index, member index, ...).
pub fn stream_seed(seed: u64, path: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    path.iter().fold(mix(seed), |acc, &p| mix(acc ^ mix(p)))
}
