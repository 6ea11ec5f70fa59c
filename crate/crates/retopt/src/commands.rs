//! Subcommand implementations shared by the binary and the tests.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use retopt_core::marl::{
    describe, episode_seed, run_campaign, run_episode, run_episode_on, window_means, EpisodeNetwork, EpisodeTrace,
    Exploration, Learner, Mode, Policy, TrainLogEntry, Variant,
};
use retopt_core::rlcore::QNetwork;

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::report::{EpisodeSeries, Metric, Report};
use crate::svg::{box_chart, line_chart, Series};
use crate::tables::{self, KpiWriter, TraceWriter, TrainingLog};

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const TRAINING_LOG_FILE: &str = "training_log.csv";
pub const REPORT_FILE: &str = "report.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
/// Environment steps per point of the training charts.
pub const TRAINING_WINDOW: usize = 100;

/// Command-line overrides layered over the configuration file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub scale: Option<f64>,
    pub variants: Option<Vec<Variant>>,
    pub workers: Option<usize>,
}

impl Overrides {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(s) = self.scale {
            cfg.scale = s;
        }
        if let Some(v) = &self.variants {
            cfg.variants = v.clone();
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parses a comma-separated variant list such as `ES,RLIN+`.
pub fn parse_variants(s: &str) -> std::result::Result<Vec<Variant>, String> {
    let mut out = Vec::new();
    for name in s.split(',').filter(|n| !n.trim().is_empty()) {
        let v = Variant::parse(name).ok_or_else(|| format!("unknown variant `{}` (expected ES, RLEN, RLIN, RLIN+)", name.trim()))?;
        if !out.contains(&v) {
            out.push(v);
        }
    }
    if out.is_empty() {
        return Err("no variants given".into());
    }
    Ok(out)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {workers} workers: {e}")))
}

pub struct PretrainOutcome {
    pub checkpoint: Checkpoint,
    pub logs: Vec<(Variant, Vec<TrainLogEntry>)>,
}

/// Pre-trains one shared network per RL variant needed by the requested
/// variants and writes the checkpoint, training log and charts.
pub fn pretrain(cfg: &RunConfig, out: &Path) -> Result<PretrainOutcome> {
    let variants = cfg.pretrained_variants();
    if variants.is_empty() {
        return Err(CliError::Config(
            "no RL variant requested; nothing to pre-train".into(),
        ));
    }
    ensure_dir(out)?;
    let specs: Vec<_> = variants.iter().map(|&v| cfg.campaign(v, Mode::Pretrain)).collect();
    for s in &specs {
        s.validate()?;
        log::info!("pre-training {}", describe(s));
    }
    let results = pool(cfg.workers)?.install(|| {
        specs
            .par_iter()
            .map(|s| run_campaign(s, None))
            .collect::<retopt_core::error::Result<Vec<_>>>()
    })?;

    let mut checkpoint = Checkpoint::new();
    let mut logs = Vec::new();
    for (spec, outcome) in specs.iter().zip(results) {
        let net = outcome.network.expect("learning campaigns return a network");
        checkpoint.insert(spec.variant, spec.seed, spec.episodes, &net);
        if let Some(last) = outcome.log.iter().rev().find_map(|e| e.loss) {
            log::info!("{}: final loss {last:.5}", spec.variant.as_str());
        }
        logs.push((spec.variant, outcome.log));
    }

    checkpoint.save(&out.join(CHECKPOINT_FILE))?;
    let table: Vec<TrainingLog<'_>> = logs
        .iter()
        .map(|(v, entries)| TrainingLog {
            variant: *v,
            steps_per_episode: cfg.steps_per_episode,
            entries,
        })
        .collect();
    tables::write_training_log(&out.join(TRAINING_LOG_FILE), &table)?;
    write_training_charts(out, &logs)?;
    write_manifest(out, cfg, "pretrain")?;
    Ok(PretrainOutcome { checkpoint, logs })
}

/// Losses and rewards averaged over consecutive windows of
/// [`TRAINING_WINDOW`] environment steps; steps before the first gradient
/// step have no loss and are skipped.
pub fn windowed_training(log: &[TrainLogEntry]) -> (Vec<f64>, Vec<f64>) {
    let losses: Vec<f64> = log.iter().filter_map(|e| e.loss).collect();
    let rewards: Vec<f64> = log.iter().map(|e| e.mean_reward).collect();
    (window_means(&losses, TRAINING_WINDOW), window_means(&rewards, TRAINING_WINDOW))
}

fn write_training_charts(out: &Path, logs: &[(Variant, Vec<TrainLogEntry>)]) -> Result<()> {
    let mut loss = Vec::new();
    let mut reward = Vec::new();
    for (v, log) in logs {
        let (l, r) = windowed_training(log);
        let points = |w: Vec<f64>| {
            w.into_iter()
                .enumerate()
                .map(|(i, y)| (((i + 1) * TRAINING_WINDOW) as f64, y))
                .collect()
        };
        loss.push(Series {
            name: v.as_str().into(),
            points: points(l),
            band: Vec::new(),
        });
        reward.push(Series {
            name: v.as_str().into(),
            points: points(r),
            band: Vec::new(),
        });
    }
    let x = "environment step";
    let loss_svg = line_chart("Average loss per 100 steps", x, "loss", &loss);
    let reward_svg = line_chart("Average reward per 100 steps", x, "reward", &reward);
    tables::write_bytes(&out.join("training_loss.svg"), loss_svg.as_bytes())?;
    tables::write_bytes(&out.join("training_reward.svg"), reward_svg.as_bytes())
}

#[derive(Debug, Clone, Default)]
pub struct EvaluateOptions {
    /// Defaults to `checkpoint.json` in the output directory.
    pub checkpoint: Option<PathBuf>,
    /// Also write the layout, baseline snapshot and KPI tables.
    pub dump: bool,
}

/// Networks needed by the requested variants, keyed by variant.
fn load_networks(cfg: &RunConfig, path: &Path) -> Result<BTreeMap<Variant, QNetwork>> {
    let needed = cfg.pretrained_variants();
    if needed.is_empty() {
        return Ok(BTreeMap::new());
    }
    let requested: Vec<&str> = cfg.ordered_variants().iter().map(|v| v.as_str()).collect();
    if !path.exists() {
        return Err(CliError::Config(format!(
            "variants {} need a checkpoint, but {} does not exist; run `pretrain` first",
            requested.join(","),
            path.display()
        )));
    }
    let ck = Checkpoint::load(path)?;
    let mut nets = BTreeMap::new();
    for v in needed {
        match ck.network(v) {
            Some(n) => {
                nets.insert(v, n);
            }
            None => {
                let have: Vec<&str> = ck.variants().iter().map(|v| v.as_str()).collect();
                return Err(CliError::Config(format!(
                    "requested variants {} need a {} network, but {} holds only [{}]",
                    requested.join(","),
                    v.as_str(),
                    path.display(),
                    have.join(",")
                )));
            }
        }
    }
    Ok(nets)
}

struct VariantSink {
    variant: Variant,
    trace: TraceWriter,
    kpis: Option<KpiWriter>,
    series: Vec<EpisodeSeries>,
}

impl VariantSink {
    fn create(out: &Path, variant: Variant, dump: bool) -> Result<Self> {
        let kpis = if dump {
            Some(KpiWriter::create(&out.join(format!("kpis_{}.csv", variant.as_str())))?)
        } else {
            None
        };
        Ok(VariantSink {
            variant,
            trace: TraceWriter::create(&out.join(tables::trace_file_name(variant)))?,
            kpis,
            series: Vec::new(),
        })
    }

    fn push(&mut self, t: &EpisodeTrace) -> Result<()> {
        for row in tables::trace_rows(std::slice::from_ref(t)) {
            self.trace.write(&row)?;
            if let Some(k) = &mut self.kpis {
                k.write(&row)?;
            }
        }
        self.series.push(EpisodeSeries::from(t));
        Ok(())
    }

    fn finish(self) -> Result<(Variant, Vec<EpisodeSeries>)> {
        self.trace.finish()?;
        if let Some(k) = self.kpis {
            k.finish()?;
        }
        Ok((self.variant, self.series))
    }
}

/// Runs every requested variant on the same evaluation episodes, writes
/// one trace per variant and the report.
pub fn evaluate(cfg: &RunConfig, out: &Path, opts: &EvaluateOptions) -> Result<Report> {
    let ck_path = opts.checkpoint.clone().unwrap_or_else(|| out.join(CHECKPOINT_FILE));
    let nets = load_networks(cfg, &ck_path)?;
    ensure_dir(out)?;
    let variants = cfg.ordered_variants();
    let specs: Vec<_> = variants.iter().map(|&v| cfg.campaign(v, Mode::Evaluate)).collect();
    for s in &specs {
        s.validate()?;
        log::info!("evaluating {}", describe(s));
    }
    let scenario = cfg.scenario(Mode::Evaluate);
    let seed = cfg.campaign_seed(Mode::Evaluate);
    let episodes = cfg.scaled_episodes(Mode::Evaluate);

    if opts.dump {
        let net = EpisodeNetwork::sample(&scenario, episode_seed(seed, 0))?;
        tables::write_layout(&out.join("layout.csv"), &net.layout)?;
        let snap = net.budget.evaluate(&net.config.electrical_tilt)?;
        tables::write_snapshot(&out.join("snapshot.csv"), &snap)?;
    }

    let mut sinks = variants
        .iter()
        .map(|&v| VariantSink::create(out, v, opts.dump))
        .collect::<Result<Vec<_>>>()?;

    // Variants with a read-only policy share each sampled network and run in
    // parallel over episodes; results are consumed in episode order.
    let frozen: Vec<usize> = (0..specs.len())
        .filter(|&i| specs[i].variant != Variant::RlinPlus)
        .collect();
    if !frozen.is_empty() {
        let pool = pool(cfg.workers)?;
        let chunk = 4 * pool.current_num_threads().max(1);
        for start in (0..episodes).step_by(chunk) {
            let end = (start + chunk).min(episodes);
            let batch = pool.install(|| {
                (start..end)
                    .into_par_iter()
                    .map(|e| {
                        let net = EpisodeNetwork::sample(&scenario, episode_seed(seed, e))?;
                        frozen
                            .iter()
                            .map(|&i| {
                                let spec = &specs[i];
                                let mut policy = match spec.variant.checkpoint_variant() {
                                    Some(c) => Policy::Frozen(&nets[&c]),
                                    None => Policy::Expert(spec.expert),
                                };
                                run_episode_on(spec, e, &net, &mut policy)
                            })
                            .collect::<retopt_core::error::Result<Vec<_>>>()
                    })
                    .collect::<retopt_core::error::Result<Vec<_>>>()
            })?;
            for traces in batch {
                for (&i, t) in frozen.iter().zip(&traces) {
                    sinks[i].push(t)?;
                }
            }
        }
    }

    // RLIN+ carries learning state from one episode to the next.
    if let Some(i) = specs.iter().position(|s| s.variant == Variant::RlinPlus) {
        let spec = &specs[i];
        let net = nets[&Variant::Rlin].clone();
        let mut learner = Learner::new(net, &spec.rl, Exploration::Fixed(0.0), spec.freeze_heuristic, spec.seed);
        for e in 0..episodes {
            let t = run_episode(spec, e, &mut Policy::Learning(&mut learner))?;
            sinks[i].push(&t)?;
        }
    }

    let series = sinks.into_iter().map(VariantSink::finish).collect::<Result<Vec<_>>>()?;
    let report = Report::from_series(series).map_err(CliError::Config)?;
    write_report_outputs(out, &report)?;
    write_manifest(out, cfg, "evaluate")?;
    Ok(report)
}

/// Rebuilds the report from the trace files in `out`.
pub fn report(cfg: &RunConfig, out: &Path) -> Result<Report> {
    let mut traces = Vec::new();
    for v in cfg.ordered_variants() {
        let path = out.join(tables::trace_file_name(v));
        if path.exists() {
            traces.push((v, tables::read_trace(&path)?));
        } else {
            log::warn!("no trace for {} in {}", v.as_str(), out.display());
        }
    }
    if traces.is_empty() {
        return Err(CliError::Config(format!(
            "no trace files for the requested variants in {}",
            out.display()
        )));
    }
    let report = Report::build(&traces).map_err(|e| CliError::format("trace", out, e))?;
    write_report_outputs(out, &report)?;
    write_manifest(out, cfg, "report")?;
    Ok(report)
}

/// Writes `report.csv` and the gain and mitigation charts.
pub fn write_report_outputs(out: &Path, report: &Report) -> Result<()> {
    tables::write_bytes(&out.join(REPORT_FILE), &report.to_csv())?;
    for metric in Metric::ALL {
        let series: Vec<Series> = report
            .variants
            .iter()
            .map(|r| {
                let curve = r.gain_curve(metric);
                let defined = curve.iter().enumerate().filter_map(|(t, s)| s.map(|s| (t as f64, s)));
                Series {
                    name: r.variant.as_str().into(),
                    points: defined.clone().map(|(t, s)| (t, s.mean)).collect(),
                    band: defined.map(|(t, s)| (t, s.q1, s.q3)).collect(),
                }
            })
            .collect();
        let svg = line_chart(metric.title(), "step", "improvement (%)", &series);
        tables::write_bytes(&out.join(format!("gain_{}.svg", metric.as_str())), svg.as_bytes())?;
    }
    let boxes: Vec<(String, _)> = report
        .variants
        .iter()
        .filter_map(|r| r.mitigation_congested.map(|s| (r.variant.as_str().to_string(), s)))
        .collect();
    let svg = box_chart(
        "Steps to congestion mitigation (initially congested episodes)",
        "steps",
        &boxes,
    );
    tables::write_bytes(&out.join("mitigation_steps.svg"), svg.as_bytes())
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn is_output(name: &str) -> bool {
    name == CHECKPOINT_FILE || name.ends_with(".csv") || name.ends_with(".svg")
}

/// Writes `manifest.json`: the effective configuration, phase seeds and the
/// SHA-256 of every output file in `out`.
pub fn write_manifest(out: &Path, cfg: &RunConfig, command: &str) -> Result<()> {
    let mut files = BTreeMap::new();
    let entries = std::fs::read_dir(out).map_err(|e| CliError::io(out, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| CliError::io(out, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if entry.path().is_file() && is_output(&name) {
            let bytes = std::fs::read(entry.path()).map_err(|e| CliError::io(entry.path(), e))?;
            files.insert(name, sha256_hex(&bytes));
        }
    }
    let mut config = serde_json::to_value(cfg).expect("configuration serializes");
    if let Value::Object(m) = &mut config {
        // Results do not depend on the worker count.
        m.remove("workers");
    }
    let phase = |mode| {
        json!({
            "seed": cfg.campaign_seed(mode),
            "episodes": cfg.scaled_episodes(mode),
        })
    };
    let manifest = json!({
        "format": "retopt-manifest",
        "version": 1,
        "tool_version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "pretrain": phase(Mode::Pretrain),
        "evaluate": phase(Mode::Evaluate),
        "checkpoint_sha256": files.get(CHECKPOINT_FILE),
        "files": files,
        "config": config,
    });
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    tables::write_bytes(&out.join(MANIFEST_FILE), text.as_bytes())
}
