//! pass@k reporting from per-problem correct counts.

use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use verigate_core::evalkit::{pass_at_k_curve, PassAtKCurve, PassAtKInput};

#[derive(Debug, Deserialize)]
struct CountRecord {
    id: serde_json::Value,
    n: u64,
    c: u64,
}

/// Parses `"1,2,4"` into a k list.
pub fn parse_ks(text: &str) -> Result<Vec<u64>> {
    text.split(',')
        .map(|s| s.trim().parse::<u64>().with_context(|| format!("bad k value {s:?}")))
        .collect()
}

/// Powers of two up to `n`, plus `n` itself.
pub fn default_ks(n: u64) -> Vec<u64> {
    let mut ks: Vec<u64> = std::iter::successors(Some(1u64), |k| k.checked_mul(2))
        .take_while(|&k| k <= n)
        .collect();
    if ks.last() != Some(&n) {
        ks.push(n);
    }
    ks
}

/// Reads `{id, n, c}` lines. All problems must share the same `n`.
pub fn read_counts<R: BufRead>(reader: R) -> Result<(u64, Vec<u64>)> {
    let mut n: Option<(u64, String)> = None;
    let mut counts = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.with_context(|| format!("reading line {}", i + 1))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CountRecord =
            serde_json::from_str(&line).with_context(|| format!("line {}: invalid count record", i + 1))?;
        match &n {
            None => n = Some((rec.n, rec.id.to_string())),
            Some((n0, id0)) if *n0 != rec.n => bail!(
                "line {}: problem {} has n = {} but problem {} has n = {}",
                i + 1,
                rec.id,
                rec.n,
                id0,
                n0
            ),
            Some(_) => {}
        }
        counts.push(rec.c);
    }
    match n {
        Some((n, _)) => Ok((n, counts)),
        None => bail!("no count records in input"),
    }
}

pub fn cmd_passk(input: &Path, ks: Option<&str>, output: &Path) -> Result<PassAtKCurve> {
    let file = std::fs::File::open(input).with_context(|| format!("opening {}", input.display()))?;
    let (n, counts) = read_counts(std::io::BufReader::new(file))?;
    let ks = match ks {
        Some(text) => parse_ks(text)?,
        None => default_ks(n),
    };
    let curve = pass_at_k_curve(&PassAtKInput { n, counts, ks })?;
    let mut w = csv::Writer::from_path(output).with_context(|| format!("creating {}", output.display()))?;
    w.write_record(["k", "estimate"])?;
    for (k, e) in curve.ks.iter().zip(&curve.estimates) {
        w.write_record([k.to_string(), e.to_string()])?;
    }
    w.flush()?;
    Ok(curve)
}

/// Per-k estimates keyed by k, handy for printing.
pub fn curve_map(curve: &PassAtKCurve) -> BTreeMap<u64, f64> {
    curve.ks.iter().copied().zip(curve.estimates.iter().copied()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ks_parsing_and_defaults() {
        assert_eq!(parse_ks("1, 2,8").unwrap(), vec![1, 2, 8]);
        assert!(parse_ks("1,x").is_err());
        assert_eq!(default_ks(64), vec![1, 2, 4, 8, 16, 32, 64]);
        assert_eq!(default_ks(10), vec![1, 2, 4, 8, 10]);
        assert_eq!(default_ks(1), vec![1]);
    }

    #[test]
    fn inconsistent_n_names_both_values() {
        let input = "{\"id\":\"a\",\"n\":10,\"c\":1}\n{\"id\":\"b\",\"n\":12,\"c\":3}\n";
        let err = read_counts(input.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("12") && err.contains("10"), "{err}");
        let (n, c) = read_counts("{\"id\":1,\"n\":4,\"c\":2}\n\n".as_bytes()).unwrap();
        assert_eq!((n, c), (4, vec![2]));
        assert!(read_counts("".as_bytes()).is_err());
    }
}
