//! Text normalization and alias matching.
//!
//! Normalization lowercases with the default (locale-independent) Unicode
//! mapping, canonically decomposes, drops diacritical combining marks,
//! recomposes, and collapses whitespace runs to a single space.
//!
//! Only marks from the combining-diacritics blocks are dropped. Script-internal
//! marks such as Thai vowel and tone signs or the kana voicing marks are kept,
//! so those scripts pass through unchanged.

use std::fmt;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

/// A string that is already in normalized form.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NormalizedText(String);

impl NormalizedText {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, needle: &NormalizedText) -> bool {
        self.0.contains(needle.as_str())
    }

    pub fn into_string(self) -> String {
        self.0
    }
}

impl fmt::Display for NormalizedText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for NormalizedText {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

/// Combining Diacritical Marks and its supplement/extension blocks.
pub fn is_diacritic(c: char) -> bool {
    matches!(
        c as u32,
        0x0300..=0x036F | 0x1AB0..=0x1AFF | 0x1DC0..=0x1DFF | 0x20D0..=0x20FF | 0xFE20..=0xFE2F
    )
}

pub fn normalize(text: &str) -> NormalizedText {
    // Per-char lowercase keeps the mapping context free (no final-sigma rule).
    let lowered: String = text.chars().flat_map(char::to_lowercase).collect();
    let stripped: String = lowered.nfd().filter(|c| !is_diacritic(*c)).nfc().collect();

    let mut out = String::with_capacity(stripped.len());
    for word in stripped.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    NormalizedText(out)
}

/// The acceptable target surface forms for one entity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GoldEntitySet {
    entity_id: String,
    aliases: Vec<String>,
    normalized_aliases: Vec<NormalizedText>,
}

impl GoldEntitySet {
    /// Builds the set, rejecting an empty alias list or any alias that
    /// normalizes to the empty string.
    pub fn new<I, S>(entity_id: impl Into<String>, aliases: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let aliases: Vec<String> = aliases.into_iter().map(Into::into).collect();
        if aliases.is_empty() {
            return Err(Error::InvalidGold("alias list is empty".into()));
        }
        let normalized_aliases: Vec<NormalizedText> =
            aliases.iter().map(|a| normalize(a)).collect();
        if let Some(i) = normalized_aliases.iter().position(NormalizedText::is_empty) {
            return Err(Error::InvalidGold(format!(
                "alias {i} ({:?}) is empty after normalization",
                aliases[i]
            )));
        }
        Ok(Self {
            entity_id: entity_id.into(),
            aliases,
            normalized_aliases,
        })
    }

    pub fn entity_id(&self) -> &str {
        &self.entity_id
    }

    pub fn aliases(&self) -> &[String] {
        &self.aliases
    }

    pub fn normalized_aliases(&self) -> &[NormalizedText] {
        &self.normalized_aliases
    }

    /// True when any normalized alias occurs inside `normalized`.
    pub fn matches_normalized(&self, normalized: &NormalizedText) -> bool {
        self.normalized_aliases.iter().any(|a| normalized.contains(a))
    }
}

/// Character-level substring match of any normalized alias against the
/// normalized translation. No word-boundary requirement.
pub fn match_entity(translation: &str, gold: &GoldEntitySet) -> bool {
    gold.matches_normalized(&normalize(translation))
}
