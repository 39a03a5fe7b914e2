//! Run artifacts: JSONL records, CSV tables, the text report and the manifest.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context as _;
use locscale_core::records::{write_jsonl, Record, SCHEMA_VERSION};
use serde::Serialize;

#[derive(Clone, Debug, Default)]
pub struct Table {
    pub file: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(file: &str, header: &[&str]) -> Table {
        Table {
            file: file.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

/// Everything a subcommand produced.
#[derive(Debug, Default)]
pub struct RunOutput {
    pub samples: Vec<Record>,
    pub estimates: Vec<Record>,
    pub tables: Vec<Table>,
    pub report: String,
    /// Deterministic properties that failed.
    pub violations: u64,
    /// False when an eigensolve budget cut samples short.
    pub complete: bool,
}

#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    schema_version: u32,
    tool_version: &'a str,
    subcommand: &'a str,
    seed: u64,
    complete: bool,
    violations: u64,
    exit_code: i32,
    files: Vec<String>,
    config: &'a C,
}

/// Fails if `dir` cannot hold artifacts; creates nothing.
pub fn check_writable(dir: &Path) -> anyhow::Result<()> {
    if dir.exists() {
        if !dir.is_dir() {
            anyhow::bail!("{} is not a directory", dir.display());
        }
        let meta = fs::metadata(dir)?;
        if meta.permissions().readonly() {
            anyhow::bail!("{} is read-only", dir.display());
        }
        return Ok(());
    }
    let parent = dir
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    if !parent.is_dir() {
        anyhow::bail!("parent of {} does not exist", dir.display());
    }
    Ok(())
}

pub fn fmt_f(x: f64) -> String {
    format!("{x}")
}

pub fn write_all<C: Serialize>(
    dir: &Path,
    subcommand: &str,
    seed: u64,
    config: &C,
    out: &RunOutput,
    exit_code: i32,
) -> anyhow::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut files = Vec::new();
    let mut put = |name: &str, bytes: Vec<u8>| -> anyhow::Result<()> {
        let p = dir.join(name);
        fs::write(&p, bytes).with_context(|| format!("writing {}", p.display()))?;
        files.push(p);
        Ok(())
    };
    let mut buf = Vec::new();
    write_jsonl(&mut buf, &out.samples)?;
    put("samples.jsonl", buf)?;
    let mut buf = Vec::new();
    write_jsonl(&mut buf, &out.estimates)?;
    put("estimates.jsonl", buf)?;
    for t in &out.tables {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&t.header)?;
        for r in &t.rows {
            w.write_record(r)?;
        }
        put(&t.file, w.into_inner()?)?;
    }
    put("report.txt", out.report.clone().into_bytes())?;
    drop(put);
    let names: Vec<String> = files
        .iter()
        .map(|p| p.file_name().expect("file").to_string_lossy().into_owned())
        .collect();
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION"),
        subcommand,
        seed,
        complete: out.complete,
        violations: out.violations,
        exit_code,
        files: names,
        config,
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    let p = dir.join("manifest.json");
    fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?;
    files.push(p);
    Ok(files)
}
