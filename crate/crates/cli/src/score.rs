//! Line-delimited JSON scoring shared by the batch command and the service.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use verigate_core::evalkit::entity_accuracy;
use verigate_core::reward::{compute_reward, RewardBreakdown, RewardConfig};
use verigate_core::textnorm::GoldEntitySet;

/// One rollout to score. Exactly one of `ref_lengths` and `refs` must be
/// present; reference strings are measured in the configured length unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutRecord {
    pub id: String,
    pub response: String,
    pub gold_aliases: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ref_lengths: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refs: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct_count: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<u64>,
}

/// Reward breakdown for one record, gate bits as 0/1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredLine {
    pub id: String,
    pub fmt: u8,
    pub len: u8,
    #[serde(rename = "match")]
    pub matched: u8,
    pub reward: f64,
}

impl ScoredLine {
    fn new(id: String, b: &RewardBreakdown) -> Self {
        Self {
            id,
            fmt: b.fmt_gate as u8,
            len: b.len_gate as u8,
            matched: b.matched as u8,
            reward: b.reward,
        }
    }

    pub fn breakdown(&self) -> RewardBreakdown {
        RewardBreakdown {
            fmt_gate: self.fmt == 1,
            len_gate: self.len == 1,
            matched: self.matched == 1,
            reward: self.reward,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorLine {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
    pub id: Value,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OutputLine {
    Scored(ScoredLine),
    Error(ErrorLine),
}

pub fn score_record(record: &RolloutRecord, config: &RewardConfig) -> std::result::Result<RewardBreakdown, String> {
    let ref_lengths = match (&record.ref_lengths, &record.refs) {
        (Some(l), None) => l.clone(),
        (None, Some(refs)) => {
            let lens: Vec<usize> = refs.iter().map(|r| config.length_unit.measure(r)).collect();
            if lens.contains(&0) {
                return Err("reference string is empty in the configured length unit".into());
            }
            lens
        }
        (Some(_), Some(_)) => return Err("record has both ref_lengths and refs".into()),
        (None, None) => return Err("record needs ref_lengths or refs".into()),
    };
    let gold = GoldEntitySet::new(record.id.clone(), record.gold_aliases.iter().cloned())
        .map_err(|e| e.to_string())?;
    compute_reward(&record.response, &gold, &ref_lengths, config).map_err(|e| e.to_string())
}

/// Scores one raw input line. Errors carry the record id when the line is
/// JSON with an `id` field, and `null` otherwise.
pub fn score_line(raw: &[u8], config: &RewardConfig) -> OutputLine {
    let error = |id: Value, msg: String| {
        OutputLine::Error(ErrorLine {
            line: None,
            id,
            error: msg,
        })
    };
    let text = match std::str::from_utf8(raw) {
        Ok(t) => t.strip_suffix('\r').unwrap_or(t),
        Err(e) => return error(Value::Null, format!("invalid UTF-8: {e}")),
    };
    let value: Value = match serde_json::from_str(text) {
        Ok(v) => v,
        Err(e) => return error(Value::Null, format!("malformed JSON: {e}")),
    };
    let id = value.get("id").cloned().unwrap_or(Value::Null);
    let record: RolloutRecord = match serde_json::from_value(value) {
        Ok(r) => r,
        Err(e) => return error(id, format!("invalid record: {e}")),
    };
    match score_record(&record, config) {
        Ok(b) => OutputLine::Scored(ScoredLine::new(record.id, &b)),
        Err(msg) => error(id, msg),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GateFailureCounts {
    pub fmt: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub n_records: usize,
    pub n_errors: usize,
    pub entity_accuracy_pct: f64,
    pub mean_reward: f64,
    pub gate_failure_counts: GateFailureCounts,
}

impl ScoreSummary {
    /// Aggregates over successfully scored lines; error lines only count
    /// towards `n_errors`.
    pub fn from_lines(lines: &[OutputLine]) -> Self {
        let scored: Vec<RewardBreakdown> = lines
            .iter()
            .filter_map(|l| match l {
                OutputLine::Scored(s) => Some(s.breakdown()),
                OutputLine::Error(_) => None,
            })
            .collect();
        let n = scored.len();
        let mut gates = GateFailureCounts::default();
        for b in &scored {
            if !b.fmt_gate {
                gates.fmt += 1;
            } else if !b.len_gate {
                gates.len += 1;
            }
        }
        Self {
            n_records: n,
            n_errors: lines.len() - n,
            entity_accuracy_pct: entity_accuracy(&scored).unwrap_or(0.0),
            mean_reward: if n == 0 {
                0.0
            } else {
                scored.iter().map(|b| b.reward).sum::<f64>() / n as f64
            },
            gate_failure_counts: gates,
        }
    }
}

/// Scores a JSONL file line by line and writes one output object per input
/// line, in order. Fails without creating the output when the input cannot
/// be read or is empty.
pub fn cmd_score(input: &Path, config: &RewardConfig, output: &Path) -> Result<ScoreSummary> {
    config.validate()?;
    let file = File::open(input).with_context(|| format!("opening {}", input.display()))?;
    let raw_lines: Vec<Vec<u8>> = BufReader::new(file)
        .split(b'\n')
        .collect::<std::io::Result<_>>()
        .with_context(|| format!("reading {}", input.display()))?;
    if raw_lines.is_empty() {
        bail!("input {} is empty", input.display());
    }

    let lines: Vec<OutputLine> = raw_lines
        .iter()
        .enumerate()
        .map(|(i, raw)| match score_line(raw, config) {
            OutputLine::Error(mut e) => {
                e.line = Some(i + 1);
                OutputLine::Error(e)
            }
            ok => ok,
        })
        .collect();

    let out = File::create(output).with_context(|| format!("creating {}", output.display()))?;
    let mut w = BufWriter::new(out);
    for line in &lines {
        serde_json::to_writer(&mut w, line)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(ScoreSummary::from_lines(&lines))
}
