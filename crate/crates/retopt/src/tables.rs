//! CSV tables written and read by the CLI.
//!
//! Floats are written with `Display`, which is the shortest representation
//! that parses back to the same value, so persisted traces reproduce the
//! in-memory numbers exactly.

use std::io::Write;
use std::path::Path;

use retopt_core::kpi::{KpiRecord, StateVector, STATE_DIM};
use retopt_core::marl::{EpisodeTrace, TrainLogEntry, Variant};
use retopt_core::radiosim::RadioSnapshot;
use retopt_core::rlcore::Action;
use retopt_core::topology::SiteLayout;

use crate::error::{CliError, Result};

/// One optimized cell at one step of one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub episode: usize,
    pub seed: u64,
    pub step: usize,
    pub cell: usize,
    pub electrical_tilt: f64,
    pub action: Option<Action>,
    pub reward: Option<f64>,
    pub state: Option<StateVector>,
    pub kpi: KpiRecord,
    pub skipped_learning: bool,
}

pub fn trace_rows(traces: &[EpisodeTrace]) -> Vec<TraceRow> {
    let mut rows = Vec::new();
    for t in traces {
        for s in &t.steps {
            for c in &s.cells {
                rows.push(TraceRow {
                    episode: t.episode,
                    seed: t.seed,
                    step: s.step,
                    cell: c.cell,
                    electrical_tilt: c.electrical_tilt,
                    action: c.action,
                    reward: c.reward,
                    state: c.state,
                    kpi: c.kpi,
                    skipped_learning: c.skipped_learning,
                });
            }
        }
    }
    rows
}

pub fn trace_file_name(variant: Variant) -> String {
    format!("trace_{}.csv", variant.as_str())
}

/// Variant named by a `trace_<variant>.csv` file name.
pub fn trace_variant(file_name: &str) -> Option<Variant> {
    let name = file_name.strip_prefix("trace_")?.strip_suffix(".csv")?;
    Variant::ALL.into_iter().find(|v| v.as_str() == name)
}

fn trace_header() -> Vec<String> {
    let mut h: Vec<String> = ["episode", "seed", "step", "cell", "electrical_tilt", "action", "reward"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend(StateVector::FEATURE_NAMES.iter().map(|f| format!("state_{f}")));
    h.extend(KpiRecord::FIELD_NAMES.iter().map(|f| f.to_string()));
    h.push("skipped_learning".into());
    h
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => CliError::format("CSV", path, format!("{other:?}")),
    }
}

fn create(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| csv_error(path, e))
}

fn finish(mut w: csv::Writer<std::fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Streaming writer of a trace file.
pub struct TraceWriter {
    w: csv::Writer<std::fs::File>,
    path: std::path::PathBuf,
}

impl TraceWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let mut w = create(path)?;
        w.write_record(trace_header()).map_err(|e| csv_error(path, e))?;
        Ok(TraceWriter {
            w,
            path: path.to_path_buf(),
        })
    }

    pub fn write(&mut self, r: &TraceRow) -> Result<()> {
        let mut rec = vec![
            r.episode.to_string(),
            r.seed.to_string(),
            r.step.to_string(),
            r.cell.to_string(),
            r.electrical_tilt.to_string(),
            opt(r.action.map(Action::as_str)),
            opt(r.reward),
        ];
        match &r.state {
            Some(s) => rec.extend(s.0.iter().map(f64::to_string)),
            None => rec.extend(std::iter::repeat(String::new()).take(STATE_DIM)),
        }
        rec.extend(r.kpi.to_array().iter().map(f64::to_string));
        rec.push(r.skipped_learning.to_string());
        self.w.write_record(&rec).map_err(|e| csv_error(&self.path, e))
    }

    pub fn finish(self) -> Result<()> {
        finish(self.w, &self.path)
    }
}

pub fn write_trace(path: &Path, rows: &[TraceRow]) -> Result<()> {
    let mut w = TraceWriter::create(path)?;
    for r in rows {
        w.write(r)?;
    }
    w.finish()
}

struct Fields<'a> {
    rec: &'a csv::StringRecord,
    path: &'a Path,
    line: u64,
}

impl Fields<'_> {
    fn raw(&self, i: usize) -> Result<&str> {
        self.rec
            .get(i)
            .ok_or_else(|| CliError::format("trace", self.path, format!("line {}: missing column {i}", self.line)))
    }

    fn parse<T: std::str::FromStr>(&self, i: usize) -> Result<T> {
        let s = self.raw(i)?;
        s.parse()
            .map_err(|_| CliError::format("trace", self.path, format!("line {}: cannot parse `{s}`", self.line)))
    }

    fn parse_opt<T: std::str::FromStr>(&self, i: usize) -> Result<Option<T>> {
        if self.raw(i)?.is_empty() {
            Ok(None)
        } else {
            self.parse(i).map(Some)
        }
    }
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header: Vec<String> = r
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    if header != trace_header() {
        return Err(CliError::format("trace", path, "unexpected header"));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let f = Fields { rec: &rec, path, line };
        let action = match f.raw(5)? {
            "" => None,
            s => Some(Action::parse(s).ok_or_else(|| {
                CliError::format("trace", path, format!("line {line}: unknown action `{s}`"))
            })?),
        };
        let state = if f.raw(7)?.is_empty() {
            None
        } else {
            let mut s = [0.0; STATE_DIM];
            for (k, v) in s.iter_mut().enumerate() {
                *v = f.parse(7 + k)?;
            }
            Some(StateVector(s))
        };
        let mut kpi = [0.0; 10];
        for (k, v) in kpi.iter_mut().enumerate() {
            *v = f.parse(7 + STATE_DIM + k)?;
        }
        rows.push(TraceRow {
            episode: f.parse(0)?,
            seed: f.parse(1)?,
            step: f.parse(2)?,
            cell: f.parse(3)?,
            electrical_tilt: f.parse(4)?,
            action,
            reward: f.parse_opt(6)?,
            state,
            kpi: KpiRecord::from_array(kpi),
            skipped_learning: f.parse(7 + STATE_DIM + 10)?,
        });
    }
    Ok(rows)
}

/// Training log of one pre-trained variant.
pub struct TrainingLog<'a> {
    pub variant: Variant,
    pub steps_per_episode: usize,
    pub entries: &'a [TrainLogEntry],
}

pub fn write_training_log(path: &Path, logs: &[TrainingLog<'_>]) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(["variant", "env_step", "episode", "step", "loss", "mean_reward", "epsilon"])
        .map_err(|e| csv_error(path, e))?;
    for log in logs {
        let steps = log.steps_per_episode as u64;
        for e in log.entries {
            w.write_record([
                log.variant.as_str().to_string(),
                e.env_step.to_string(),
                (e.env_step / steps).to_string(),
                (e.env_step % steps + 1).to_string(),
                opt(e.loss),
                e.mean_reward.to_string(),
                e.epsilon.to_string(),
            ])
            .map_err(|e| csv_error(path, e))?;
        }
    }
    finish(w, path)
}

pub fn write_layout(path: &Path, layout: &SiteLayout) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(["site_id", "cell_id", "x", "y", "azimuth"])
        .map_err(|e| csv_error(path, e))?;
    for (id, cell) in layout.cells.iter().enumerate() {
        let site = &layout.sites[cell.site];
        w.write_record([
            cell.site.to_string(),
            id.to_string(),
            site.x.to_string(),
            site.y.to_string(),
            cell.azimuth.to_string(),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    finish(w, path)
}

pub fn write_snapshot(path: &Path, snap: &RadioSnapshot) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(["ue_id", "x", "y", "serving", "rsrp_serving", "sinr", "throughput"])
        .map_err(|e| csv_error(path, e))?;
    for ue in 0..snap.num_ues() {
        let (x, y) = snap.positions[ue];
        w.write_record([
            ue.to_string(),
            x.to_string(),
            y.to_string(),
            snap.serving[ue].to_string(),
            snap.serving_rsrp(ue).to_string(),
            snap.sinr_db[ue].to_string(),
            snap.throughput_mbps[ue].to_string(),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    finish(w, path)
}

/// Streaming writer of a per-cell KPI table.
pub struct KpiWriter {
    w: csv::Writer<std::fs::File>,
    path: std::path::PathBuf,
}

impl KpiWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let mut w = create(path)?;
        let mut header = vec!["episode", "step", "cell"];
        header.extend(KpiRecord::FIELD_NAMES);
        w.write_record(&header).map_err(|e| csv_error(path, e))?;
        Ok(KpiWriter {
            w,
            path: path.to_path_buf(),
        })
    }

    pub fn write(&mut self, r: &TraceRow) -> Result<()> {
        let mut rec = vec![r.episode.to_string(), r.step.to_string(), r.cell.to_string()];
        rec.extend(r.kpi.to_array().iter().map(f64::to_string));
        self.w.write_record(&rec).map_err(|e| csv_error(&self.path, e))
    }

    pub fn finish(self) -> Result<()> {
        finish(self.w, &self.path)
    }
}

/// Writes `bytes` to `path`, mapping failures to IO errors.
pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    f.write_all(bytes).map_err(|e| CliError::io(path, e))
}
