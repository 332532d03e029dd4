//! Synthetic bilingual entity lexicon with a disjoint train/test split.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type TokenId = u32;

pub const BOS: TokenId = 0;
pub const EOS: TokenId = 1;
pub const THINK_OPEN: TokenId = 2;
pub const THINK_CLOSE: TokenId = 3;
pub const SRC_MARK: TokenId = 4;
/// First id usable as an ordinary word.
pub const FIRST_WORD: TokenId = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecialTokens {
    pub bos: TokenId,
    pub eos: TokenId,
    pub think_open: TokenId,
    pub think_close: TokenId,
    pub src_mark: TokenId,
}

impl Default for SpecialTokens {
    fn default() -> Self {
        Self {
            bos: BOS,
            eos: EOS,
            think_open: THINK_OPEN,
            think_close: THINK_CLOSE,
            src_mark: SRC_MARK,
        }
    }
}

pub fn is_special(token: TokenId) -> bool {
    token < FIRST_WORD
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconEntry {
    pub entity_id: u32,
    pub source_token: TokenId,
    pub aliases: Vec<Vec<TokenId>>,
    /// Reference translation used for the length budget.
    pub canonical_ref: Vec<TokenId>,
}

impl LexiconEntry {
    /// Prompt shown to the policy: `BOS SRC_MARK source_token`.
    pub fn prompt(&self) -> [TokenId; 3] {
        [BOS, SRC_MARK, self.source_token]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticLexicon {
    pub vocab_size: usize,
    pub specials: SpecialTokens,
    pub entities: Vec<LexiconEntry>,
}

impl SyntheticLexicon {
    pub fn entity(&self, index: usize) -> Result<&LexiconEntry> {
        self.entities
            .get(index)
            .ok_or_else(|| Error::Lexicon(format!("unknown entity index {index}")))
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    /// Checks the structural invariants: unique ids, non-empty alias
    /// sequences of in-vocabulary word tokens.
    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::new();
        for (i, e) in self.entities.iter().enumerate() {
            if !ids.insert(e.entity_id) {
                return Err(Error::Lexicon(format!("duplicate entity id {}", e.entity_id)));
            }
            if e.entity_id as usize != i {
                return Err(Error::Lexicon(format!(
                    "entity id {} stored at index {i}",
                    e.entity_id
                )));
            }
            if e.aliases.is_empty() || e.canonical_ref.is_empty() {
                return Err(Error::Lexicon(format!("entity {i} lacks aliases or reference")));
            }
            for seq in e.aliases.iter().chain(std::iter::once(&e.canonical_ref)) {
                if seq.is_empty()
                    || seq
                        .iter()
                        .any(|&t| is_special(t) || t as usize >= self.vocab_size)
                {
                    return Err(Error::Lexicon(format!(
                        "entity {i} has an empty or out-of-vocabulary alias {seq:?}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Disjoint entity indices for training and held-out evaluation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntitySplit {
    pub train_ids: Vec<usize>,
    pub test_ids: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LexiconParams {
    pub vocab_size: usize,
    pub n_entities: usize,
    pub aliases_per_entity: usize,
    pub alias_len_min: usize,
    pub alias_len_max: usize,
    pub train_fraction: f64,
}

impl Default for LexiconParams {
    fn default() -> Self {
        Self {
            vocab_size: 48,
            n_entities: 20,
            aliases_per_entity: 3,
            alias_len_min: 2,
            alias_len_max: 4,
            train_fraction: 0.75,
        }
    }
}

const MAX_DRAWS_PER_ALIAS: usize = 1000;

fn contains_subsequence(hay: &[TokenId], needle: &[TokenId]) -> bool {
    needle.len() <= hay.len() && hay.windows(needle.len()).any(|w| w == needle)
}

pub fn gen_lexicon(seed: u64, params: &LexiconParams) -> Result<(SyntheticLexicon, EntitySplit)> {
    if params.n_entities < 2 {
        return Err(Error::Lexicon(format!(
            "need at least 2 entities, got {}",
            params.n_entities
        )));
    }
    if !(params.train_fraction > 0.0 && params.train_fraction < 1.0) {
        return Err(Error::Lexicon(format!(
            "train fraction must lie in (0, 1), got {}",
            params.train_fraction
        )));
    }
    if params.aliases_per_entity == 0
        || params.alias_len_min == 0
        || params.alias_len_min > params.alias_len_max
    {
        return Err(Error::Lexicon("alias count and length range must be positive".into()));
    }
    if params.vocab_size <= FIRST_WORD as usize + 1 {
        return Err(Error::Lexicon(format!(
            "vocabulary of {} leaves fewer than two word tokens",
            params.vocab_size
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let words = FIRST_WORD..params.vocab_size as TokenId;
    let mut taken: HashSet<Vec<TokenId>> = HashSet::new();
    let mut entities = Vec::with_capacity(params.n_entities);

    for idx in 0..params.n_entities {
        let source_token = rng.gen_range(words.clone());
        let mut aliases: Vec<Vec<TokenId>> = Vec::with_capacity(params.aliases_per_entity);
        while aliases.len() < params.aliases_per_entity {
            let mut draws = 0;
            let alias = loop {
                draws += 1;
                if draws > MAX_DRAWS_PER_ALIAS {
                    return Err(Error::Lexicon(format!(
                        "could not draw a collision-free alias for entity {idx} after {MAX_DRAWS_PER_ALIAS} attempts"
                    )));
                }
                let len = rng.gen_range(params.alias_len_min..=params.alias_len_max);
                let cand: Vec<TokenId> = (0..len).map(|_| rng.gen_range(words.clone())).collect();
                let nested = aliases
                    .iter()
                    .any(|a| contains_subsequence(a, &cand) || contains_subsequence(&cand, a));
                if !nested && !taken.contains(&cand) {
                    break cand;
                }
            };
            taken.insert(alias.clone());
            aliases.push(alias);
        }
        let canonical_ref = aliases[0].clone();
        entities.push(LexiconEntry {
            entity_id: idx as u32,
            source_token,
            aliases,
            canonical_ref,
        });
    }

    let mut order: Vec<usize> = (0..params.n_entities).collect();
    order.shuffle(&mut rng);
    let n_train = ((params.n_entities as f64 * params.train_fraction).round() as usize)
        .clamp(1, params.n_entities - 1);
    let mut train_ids = order[..n_train].to_vec();
    let mut test_ids = order[n_train..].to_vec();
    train_ids.sort_unstable();
    test_ids.sort_unstable();

    let lexicon = SyntheticLexicon {
        vocab_size: params.vocab_size,
        specials: SpecialTokens::default(),
        entities,
    };
    lexicon.validate()?;
    Ok((lexicon, EntitySplit { train_ids, test_ids }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(n: usize) -> LexiconParams {
        LexiconParams {
            n_entities: n,
            ..Default::default()
        }
    }

    #[test]
    fn split_counts_and_disjointness() {
        let (lex, split) = gen_lexicon(42, &params(20)).unwrap();
        assert_eq!(split.train_ids.len(), 15);
        assert_eq!(split.test_ids.len(), 5);
        let train: HashSet<_> = split.train_ids.iter().collect();
        assert!(split.test_ids.iter().all(|t| !train.contains(t)));
        assert_eq!(lex.len(), 20);
        for e in &lex.entities {
            assert_eq!(e.aliases.len(), 3);
            assert!(e.aliases.iter().all(|a| (2..=4).contains(&a.len())));
            let distinct: HashSet<_> = e.aliases.iter().collect();
            assert_eq!(distinct.len(), 3);
            assert_eq!(e.canonical_ref, e.aliases[0]);
            assert_eq!(e.prompt(), [BOS, SRC_MARK, e.source_token]);
        }
    }

    #[test]
    fn aliases_do_not_collide_across_entities() {
        let (lex, _) = gen_lexicon(3, &params(20)).unwrap();
        let mut seen = HashSet::new();
        for e in &lex.entities {
            for a in &e.aliases {
                assert!(seen.insert(a.clone()), "alias {a:?} reused");
            }
        }
    }

    #[test]
    fn seeded_determinism() {
        assert_eq!(gen_lexicon(42, &params(20)).unwrap(), gen_lexicon(42, &params(20)).unwrap());
        assert_ne!(gen_lexicon(42, &params(20)).unwrap(), gen_lexicon(43, &params(20)).unwrap());
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(gen_lexicon(1, &params(1)).is_err());
        assert!(gen_lexicon(1, &LexiconParams { train_fraction: 1.0, ..params(4) }).is_err());
        assert!(gen_lexicon(1, &LexiconParams { train_fraction: 0.0, ..params(4) }).is_err());
        assert!(gen_lexicon(1, &LexiconParams { alias_len_min: 3, alias_len_max: 2, ..params(4) })
            .is_err());
    }

    #[test]
    fn unresolvable_collisions_error() {
        // Two word tokens and single-token aliases: only two aliases exist.
        let p = LexiconParams {
            vocab_size: 7,
            n_entities: 3,
            aliases_per_entity: 1,
            alias_len_min: 1,
            alias_len_max: 1,
            train_fraction: 0.5,
        };
        assert!(matches!(gen_lexicon(0, &p), Err(Error::Lexicon(_))));
    }

    #[test]
    fn validate_catches_special_tokens() {
        let (mut lex, _) = gen_lexicon(5, &params(4)).unwrap();
        lex.entities[1].aliases[0] = vec![EOS];
        assert!(lex.validate().is_err());
    }
}
