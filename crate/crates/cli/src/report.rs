//! Aggregation of result directories across seeds.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _, Result};
use locscale_core::records::{read_jsonl, Record};
use locscale_core::stats::MonteCarloEstimate;
use serde_json::Value;

use crate::commands::compare;
use crate::output::{fmt_f, Table};

fn jsonl_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            jsonl_files(&p, out)?;
        } else if p.extension().is_some_and(|e| e == "jsonl") {
            out.push(p);
        }
    }
    Ok(())
}

#[derive(Default)]
struct Pool {
    seeds: BTreeSet<u64>,
    hits: u64,
    trials: u64,
    target: Option<f64>,
    histogram: BTreeMap<String, u64>,
}

pub struct Summary {
    pub text: String,
    pub tables: Vec<Table>,
}

pub fn aggregate(dirs: &[PathBuf]) -> Result<Summary> {
    let mut files = Vec::new();
    for d in dirs {
        if !d.is_dir() {
            bail!("{} is not a directory", d.display());
        }
        jsonl_files(d, &mut files)?;
    }
    let mut records: Vec<Record> = Vec::new();
    for f in &files {
        let r = read_jsonl(BufReader::new(File::open(f)?))
            .with_context(|| format!("in {}", f.display()))?;
        records.extend(r);
    }
    if records.is_empty() {
        bail!(
            "no records found under {}",
            dirs.iter()
                .map(|d| d.display().to_string())
                .collect::<Vec<_>>()
                .join(", ")
        );
    }
    // the same run passed twice must not be counted twice
    let mut seen = BTreeSet::new();
    records.retain(|r| seen.insert(serde_json::to_string(r).expect("serializable")));

    let mut pools: BTreeMap<String, Pool> = BTreeMap::new();
    let mut verdicts: BTreeMap<(String, String, String), u64> = BTreeMap::new();
    for r in &records {
        match r.kind.as_str() {
            "estimate" => {
                let (Some(h), Some(t)) = (
                    r.data.get("hits").and_then(Value::as_u64),
                    r.data.get("trials").and_then(Value::as_u64),
                ) else {
                    continue;
                };
                let p = pools.entry(r.id.clone()).or_default();
                if !p.seeds.insert(r.seed) {
                    continue;
                }
                p.hits += h;
                p.trials += t;
                p.target = p.target.or(r.data.get("target").and_then(Value::as_f64));
                if let Some(bins) = r.data.get("histogram").and_then(Value::as_array) {
                    for b in bins {
                        if let (Some(lo), Some(c)) = (
                            b.get(0).and_then(Value::as_f64),
                            b.get(1).and_then(Value::as_u64),
                        ) {
                            *p.histogram.entry(format!("{lo:08.3}")).or_default() += c;
                        }
                    }
                }
            }
            "lemma" | "property" | "edge" => {
                let scope = r
                    .data
                    .get("scope")
                    .and_then(Value::as_str)
                    .unwrap_or("")
                    .to_string();
                *verdicts
                    .entry((r.id.clone(), scope, r.verdict.clone()))
                    .or_default() += 1;
            }
            _ => {}
        }
    }

    let mut text = format!("{} records from {} files\n", records.len(), files.len());
    let mut est_table = Table::new(
        "pooled_estimates.csv",
        &[
            "event",
            "seeds",
            "trials",
            "hits",
            "p_hat",
            "ci_low",
            "ci_high",
            "target",
            "comparison",
        ],
    );
    let mut hist_table = Table::new("pooled_decay_histogram.csv", &["event", "bin_low", "count"]);
    writeln!(text, "\npooled estimates")?;
    for (id, p) in &pools {
        let est = MonteCarloEstimate::from_counts(
            id.clone(),
            p.hits,
            p.trials,
            *p.seeds.first().expect("nonempty"),
        );
        let cmp = p.target.map(|t| compare(&est, t));
        writeln!(
            text,
            "  {id:<48} seeds {:>2}  {:>7}/{:<7} p = {:.4e} [{:.4e}, {:.4e}]{}",
            p.seeds.len(),
            est.hits,
            est.trials,
            est.p_hat,
            est.ci_low,
            est.ci_high,
            match (p.target, &cmp) {
                (Some(t), Some(c)) => format!("  target {t:.3e} {c}"),
                _ => String::new(),
            }
        )?;
        est_table.push(vec![
            id.clone(),
            p.seeds.len().to_string(),
            est.trials.to_string(),
            est.hits.to_string(),
            fmt_f(est.p_hat),
            fmt_f(est.ci_low),
            fmt_f(est.ci_high),
            p.target.map_or(String::new(), fmt_f),
            cmp.unwrap_or_default(),
        ]);
        for (lo, c) in &p.histogram {
            hist_table.push(vec![
                id.clone(),
                lo.trim_start_matches('0').to_string(),
                c.to_string(),
            ]);
        }
    }

    let mut verdict_table = Table::new("verdict_tallies.csv", &["id", "scope", "verdict", "count"]);
    let mut violated = 0;
    writeln!(text, "\nverdict tallies")?;
    for ((id, scope, v), c) in &verdicts {
        if v == "violated" {
            violated += c;
        }
        writeln!(text, "  {id:<28} {scope:<10} {v:<26} {c}")?;
        verdict_table.push(vec![id.clone(), scope.clone(), v.clone(), c.to_string()]);
    }
    writeln!(text, "\ntotal violated verdicts: {violated}")?;
    Ok(Summary {
        text,
        tables: vec![est_table, verdict_table, hist_table],
    })
}
