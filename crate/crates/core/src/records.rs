//! Schema-versioned JSONL sample records.

use std::cmp::Ordering;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// One line of a `samples.jsonl` or `estimates.jsonl` file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub schema_version: u32,
    pub seed: u64,
    pub sample_index: Option<u64>,
    /// `predicate`, `lemma`, `event`, `estimate`, ...
    pub kind: String,
    /// Predicate, lemma or event id.
    pub id: String,
    pub verdict: String,
    pub witness: Value,
    pub data: Value,
}

impl Record {
    pub fn new(
        seed: u64,
        sample_index: Option<u64>,
        kind: &str,
        id: impl Into<String>,
        verdict: impl Into<String>,
    ) -> Record {
        Record {
            schema_version: SCHEMA_VERSION,
            seed,
            sample_index,
            kind: kind.into(),
            id: id.into(),
            verdict: verdict.into(),
            witness: Value::Null,
            data: Value::Null,
        }
    }

    pub fn with_witness(mut self, w: impl Serialize) -> Record {
        self.witness = to_value(w);
        self
    }

    pub fn with_data(mut self, d: impl Serialize) -> Record {
        self.data = to_value(d);
        self
    }

    fn line(&self) -> String {
        serde_json::to_string(self).expect("records serialize")
    }
}

fn to_value(x: impl Serialize) -> Value {
    serde_json::to_value(x).expect("records serialize")
}

/// Total order used before writing: `(kind, id, seed, sample_index)`, then the
/// serialized line.
pub fn canonical_cmp(a: &Record, b: &Record) -> Ordering {
    (&a.kind, &a.id, a.seed, a.sample_index)
        .cmp(&(&b.kind, &b.id, b.seed, b.sample_index))
        .then_with(|| a.line().cmp(&b.line()))
}

pub fn canonical_sort(records: &mut [Record]) {
    records.sort_by(canonical_cmp);
}

pub fn write_jsonl<W: Write>(mut w: W, records: &[Record]) -> Result<()> {
    let mut sorted = records.to_vec();
    canonical_sort(&mut sorted);
    for r in &sorted {
        writeln!(w, "{}", r.line())?;
    }
    Ok(())
}

/// Reads every line; a record with a different schema version is an error.
pub fn read_jsonl<R: BufRead>(r: R) -> Result<Vec<Record>> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v: Value = serde_json::from_str(&line)
            .map_err(|e| Error::Record(format!("line {}: not JSON: {e}", n + 1)))?;
        match v.get("schema_version").and_then(Value::as_u64) {
            Some(s) if s == SCHEMA_VERSION as u64 => {}
            Some(s) => {
                return Err(Error::Record(format!(
                    "line {}: schema version {s}, expected {SCHEMA_VERSION}",
                    n + 1
                )))
            }
            None => {
                return Err(Error::Record(format!(
                    "line {}: missing schema_version",
                    n + 1
                )))
            }
        }
        out.push(
            serde_json::from_value(v).map_err(|e| Error::Record(format!("line {}: {e}", n + 1)))?,
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_order() {
        let recs = vec![
            Record::new(1, Some(2), "lemma", "b", "holds").with_data(serde_json::json!({"x": 1})),
            Record::new(1, Some(0), "lemma", "b", "holds"),
            Record::new(1, None, "estimate", "a", "zero-hit-compatible").with_witness([1, 2]),
        ];
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &recs).unwrap();
        let back = read_jsonl(&buf[..]).unwrap();
        assert_eq!(back[0].kind, "estimate");
        assert_eq!(back[1].sample_index, Some(0));
        let mut again = Vec::new();
        write_jsonl(&mut again, &back).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn foreign_schema_refused() {
        let line = br#"{"schema_version":99,"seed":1,"sample_index":null,"kind":"k","id":"i","verdict":"v","witness":null,"data":null}"#;
        assert!(read_jsonl(&line[..]).is_err());
    }
}
