//! Synthetic lexicon generation.

use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use verigate_core::toytask::{gen_lexicon, EntitySplit, LexiconParams, SyntheticLexicon, TokenId};

/// Everything `train` needs to rebuild the task, as written to `lexicon.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexiconDocument {
    pub seed: u64,
    pub params: LexiconParams,
    pub lexicon: SyntheticLexicon,
    pub split: EntitySplit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub entity_id: u32,
    pub prompt: Vec<TokenId>,
    pub gold_aliases: Vec<Vec<TokenId>>,
}

impl LexiconDocument {
    pub fn generate(seed: u64, params: LexiconParams) -> Result<Self> {
        let (lexicon, split) = gen_lexicon(seed, &params)?;
        Ok(Self {
            seed,
            params,
            lexicon,
            split,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let doc: Self = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        doc.lexicon.validate()?;
        Ok(doc)
    }

    pub fn prompts(&self, ids: &[usize]) -> Vec<PromptRecord> {
        ids.iter()
            .map(|&i| {
                let e = &self.lexicon.entities[i];
                PromptRecord {
                    entity_id: e.entity_id,
                    prompt: e.prompt().to_vec(),
                    gold_aliases: e.aliases.clone(),
                }
            })
            .collect()
    }

    /// Writes `lexicon.json`, `train_prompts.json` and `test_prompts.json`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        write_json(&dir.join("lexicon.json"), self)?;
        write_json(&dir.join("train_prompts.json"), &self.prompts(&self.split.train_ids))?;
        write_json(&dir.join("test_prompts.json"), &self.prompts(&self.split.test_ids))
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}
