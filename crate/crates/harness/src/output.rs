//! CSV artifacts: per-seed traces, min/mean/max aggregates and check records.
//!
//! Every file starts with one `# generated ...` comment carrying the wall-clock
//! time, so bodies can be compared byte for byte across reruns.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use safe_oco_core::algorithm::{Checkpoint, RegretTrace};

use crate::HarnessError;

/// Output directory that refuses to replace files unless forced.
#[derive(Debug, Clone)]
pub struct OutputDir {
    root: PathBuf,
    force: bool,
}

impl OutputDir {
    pub fn create(root: &Path, force: bool) -> Result<Self, HarnessError> {
        std::fs::create_dir_all(root).map_err(|source| HarnessError::Io {
            path: root.to_path_buf(),
            source,
        })?;
        Ok(Self {
            root: root.to_path_buf(),
            force,
        })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    /// Opens `name` for writing and emits the timestamp line plus `meta` comments.
    pub fn open(&self, name: &str, meta: &[String]) -> Result<CsvFile, HarnessError> {
        let path = self.root.join(name);
        if path.exists() && !self.force {
            return Err(HarnessError::Exists(path));
        }
        let file = File::create(&path).map_err(|source| HarnessError::Io {
            path: path.clone(),
            source,
        })?;
        let mut out = CsvFile {
            path,
            w: BufWriter::new(file),
        };
        out.line(&format!(
            "# generated {} by safe-oco {}",
            chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            env!("CARGO_PKG_VERSION")
        ))?;
        for m in meta {
            out.line(&format!("# {m}"))?;
        }
        Ok(out)
    }

    /// Writes a non-CSV artifact such as an SVG chart.
    pub fn write_text(&self, name: &str, text: &str) -> Result<PathBuf, HarnessError> {
        let path = self.root.join(name);
        if path.exists() && !self.force {
            return Err(HarnessError::Exists(path));
        }
        std::fs::write(&path, text).map_err(|source| HarnessError::Io {
            path: path.clone(),
            source,
        })?;
        Ok(path)
    }
}

pub struct CsvFile {
    path: PathBuf,
    w: BufWriter<File>,
}

impl CsvFile {
    pub fn line(&mut self, s: &str) -> Result<(), HarnessError> {
        writeln!(self.w, "{s}").map_err(|source| HarnessError::Io {
            path: self.path.clone(),
            source,
        })
    }

    pub fn row<I: IntoIterator<Item = String>>(&mut self, fields: I) -> Result<(), HarnessError> {
        let joined: Vec<String> = fields.into_iter().collect();
        self.line(&joined.join(","))
    }

    pub fn finish(mut self) -> Result<PathBuf, HarnessError> {
        self.w.flush().map_err(|source| HarnessError::Io {
            path: self.path.clone(),
            source,
        })?;
        Ok(self.path)
    }
}

pub const TRACE_HEADER: &str =
    "t,phase,cum_cost,regret_prefix,regret_fixed,regret_over_t,regret_over_t23,violations";

pub fn trace_file_name(seed: u64) -> String {
    format!("trace_seed{seed}.csv")
}

pub fn write_trace(
    out: &OutputDir,
    seed: u64,
    trace: &RegretTrace,
    meta: &[String],
) -> Result<PathBuf, HarnessError> {
    let mut f = out.open(&trace_file_name(seed), meta)?;
    f.line(TRACE_HEADER)?;
    for c in &trace.checkpoints {
        f.row([
            c.t.to_string(),
            c.phase.name().to_string(),
            c.cum_cost.to_string(),
            c.regret_prefix.to_string(),
            c.regret_fixed.to_string(),
            c.regret_over_t().to_string(),
            c.regret_over_t23().to_string(),
            c.violations.to_string(),
        ])?;
    }
    f.finish()
}

/// One parsed trace row: `(t, R(t)/t, R(t)/t^{2/3}, violations)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub t: u64,
    pub regret_over_t: f64,
    pub regret_over_t23: f64,
    pub violations: u64,
}

impl From<&Checkpoint> for TracePoint {
    fn from(c: &Checkpoint) -> Self {
        Self {
            t: c.t,
            regret_over_t: c.regret_over_t(),
            regret_over_t23: c.regret_over_t23(),
            violations: c.violations,
        }
    }
}

pub fn read_trace(path: &Path) -> Result<Vec<TracePoint>, HarnessError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| HarnessError::Csv(path.to_path_buf(), e))?;
    let headers = rdr
        .headers()
        .map_err(|e| HarnessError::Csv(path.to_path_buf(), e))?
        .clone();
    if headers.iter().collect::<Vec<_>>().join(",") != TRACE_HEADER {
        return Err(HarnessError::Aggregate(format!(
            "{} is not a trace file",
            path.display()
        )));
    }
    let mut pts = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| HarnessError::Csv(path.to_path_buf(), e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = || HarnessError::Aggregate(format!("{}:{line}: malformed row", path.display()));
        pts.push(TracePoint {
            t: rec[0].parse().map_err(|_| bad())?,
            regret_over_t: rec[5].parse().map_err(|_| bad())?,
            regret_over_t23: rec[6].parse().map_err(|_| bad())?,
            violations: rec[7].parse().map_err(|_| bad())?,
        });
    }
    Ok(pts)
}

/// `(t, mean, min, max)` per checkpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandRow {
    pub t: u64,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

/// Mean and range across traces of `metric`; all traces must share checkpoints.
pub fn aggregate(
    traces: &[Vec<TracePoint>],
    metric: impl Fn(&TracePoint) -> f64,
) -> Result<Vec<BandRow>, HarnessError> {
    let first = traces
        .first()
        .ok_or_else(|| HarnessError::Aggregate("no traces to aggregate".into()))?;
    for (k, tr) in traces.iter().enumerate() {
        if tr.len() != first.len() || tr.iter().zip(first).any(|(a, b)| a.t != b.t) {
            return Err(HarnessError::Aggregate(format!(
                "trace {k} uses a different checkpoint schedule"
            )));
        }
    }
    Ok((0..first.len())
        .map(|i| {
            let vals: Vec<f64> = traces.iter().map(|tr| metric(&tr[i])).collect();
            let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mean = (vals.iter().sum::<f64>() / vals.len() as f64).clamp(min, max);
            BandRow {
                t: first[i].t,
                mean,
                min,
                max,
            }
        })
        .collect())
}

pub fn write_band(
    out: &OutputDir,
    name: &str,
    rows: &[BandRow],
    meta: &[String],
) -> Result<PathBuf, HarnessError> {
    let mut f = out.open(name, meta)?;
    f.line("t,mean,min,max")?;
    for r in rows {
        f.row([
            r.t.to_string(),
            r.mean.to_string(),
            r.min.to_string(),
            r.max.to_string(),
        ])?;
    }
    f.finish()
}

/// Outcome of one lemma check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckRecord {
    pub check_name: String,
    pub seed: u64,
    pub value: f64,
    pub bound: f64,
    pub holds: bool,
}

pub fn write_checks(
    out: &OutputDir,
    name: &str,
    records: &[CheckRecord],
    meta: &[String],
) -> Result<PathBuf, HarnessError> {
    let mut f = out.open(name, meta)?;
    f.line("check_name,seed,value,bound,holds")?;
    for r in records {
        f.row([
            r.check_name.clone(),
            r.seed.to_string(),
            r.value.to_string(),
            r.bound.to_string(),
            r.holds.to_string(),
        ])?;
    }
    f.finish()
}
