//! Files written by the harness: per-replica CSVs, snapshot CSVs, the run
//! manifest, and the summary JSON. Output directories are assembled in a
//! staging directory and renamed into place only once complete.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::run::{Snapshot, StepSummary, TrajectoryRecord};
use crate::metrics::{EnsembleStats, ImVerdict};

pub const CSV_HEADER: &str = "t,d_V,min_opinion,max_opinion,mean_opinion";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_path: Option<PathBuf>,
    pub fingerprint: String,
    pub seeds: Vec<u64>,
    pub replicas: usize,
    pub horizon: usize,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub tool_version: String,
    pub fingerprint: String,
    pub horizon: usize,
    pub epsilon: f64,
    pub tail_fraction: f64,
    pub seeds: Vec<u64>,
    pub stats: EnsembleStats,
    pub verdict: ImVerdict,
}

fn csv_string(steps: &[StepSummary]) -> String {
    let mut out = String::with_capacity(steps.len() * 64);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for (t, s) in steps.iter().enumerate() {
        // `{}` on f64 prints the shortest representation that round-trips
        let _ = writeln!(out, "{t},{},{},{},{}", s.d, s.min, s.max, s.mean);
    }
    out
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn export_csv(record: &TrajectoryRecord, path: &Path) -> Result<()> {
    write(path, csv_string(&record.steps))
}

fn parse_f64(field: Option<&str>, line: usize) -> Result<f64> {
    field
        .ok_or_else(|| Error::Config(format!("line {line}: missing field")))?
        .parse()
        .map_err(|_| Error::Config(format!("line {line}: bad number")))
}

pub fn read_csv(path: &Path) -> Result<Vec<StepSummary>> {
    let text = read(path)?;
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::Config(format!("{}: unexpected CSV header", path.display())));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let mut f = line.split(',');
            let _t = f.next();
            Ok(StepSummary {
                d: parse_f64(f.next(), i + 2)?,
                min: parse_f64(f.next(), i + 2)?,
                max: parse_f64(f.next(), i + 2)?,
                mean: parse_f64(f.next(), i + 2)?,
            })
        })
        .collect()
}

/// `t,x_0,...,x_{n-1}` per snapshot.
pub fn export_snapshots(snapshots: &[Snapshot], path: &Path) -> Result<()> {
    let n = snapshots.first().map_or(0, |s| s.values.len());
    let mut out = String::from("t");
    for i in 0..n {
        let _ = write!(out, ",x{i}");
    }
    out.push('\n');
    for s in snapshots {
        let _ = write!(out, "{}", s.t);
        for v in &s.values {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    write(path, out)
}

pub fn read_snapshots(path: &Path) -> Result<Vec<Snapshot>> {
    let text = read(path)?;
    text.lines()
        .skip(1)
        .enumerate()
        .map(|(i, line)| {
            let mut f = line.split(',');
            let t = f
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| Error::Config(format!("line {}: bad step index", i + 2)))?;
            let values = f
                .map(|v| {
                    v.parse()
                        .map_err(|_| Error::Config(format!("line {}: bad number", i + 2)))
                })
                .collect::<Result<_>>()?;
            Ok(Snapshot { t, values })
        })
        .collect()
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write(path, text)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&read(path)?)?)
}

pub fn replica_csv_name(replica: usize) -> String {
    format!("replica_{replica:04}.csv")
}

pub fn replica_snapshot_name(replica: usize) -> String {
    format!("replica_{replica:04}_snapshots.csv")
}

/// A directory being assembled next to its final location. Dropped without
/// [`StagedDir::commit`], it is removed.
#[derive(Debug)]
pub struct StagedDir {
    staging: PathBuf,
    target: PathBuf,
    committed: bool,
}

impl StagedDir {
    pub fn create(target: &Path) -> Result<Self> {
        let name = target
            .file_name()
            .ok_or_else(|| Error::Config(format!("bad output directory {}", target.display())))?;
        let mut staged_name = name.to_os_string();
        staged_name.push(format!(".partial-{}", std::process::id()));
        let staging = target.with_file_name(staged_name);
        if staging.exists() {
            fs::remove_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
        }
        fs::create_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
        Ok(StagedDir {
            staging,
            target: target.to_path_buf(),
            committed: false,
        })
    }

    pub fn path(&self) -> &Path {
        &self.staging
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.staging.join(name)
    }

    /// Moves the staged directory over the target, replacing any previous
    /// output there.
    pub fn commit(mut self) -> Result<PathBuf> {
        if self.target.exists() {
            fs::remove_dir_all(&self.target).map_err(|e| Error::io(&self.target, e))?;
        }
        fs::rename(&self.staging, &self.target).map_err(|e| Error::io(&self.target, e))?;
        self.committed = true;
        Ok(self.target.clone())
    }
}

impl Drop for StagedDir {
    fn drop(&mut self) {
        if !self.committed {
            let _ = fs::remove_dir_all(&self.staging);
        }
    }
}
