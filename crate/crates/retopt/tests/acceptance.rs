//! Acceptance criteria. Each test prints one `criterion NN PASS|FAIL` line
//! straight to stdout, so the verdicts show even when output is captured.
//!
//! Criteria 1 to 4 share one desk-scale run: 100 pre-training episodes and
//! 30 paired evaluation episodes, both on the 19-site grid. Its outputs are
//! kept under the cargo target temp directory for inspection.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};

use retopt::commands::{self, windowed_training, EvaluateOptions};
use retopt::config::{PhaseConfig, RunConfig};
use retopt::report::{Metric, Report};
use retopt_core::kpi::{self, KpiRecord, KpiThresholds, StateVector, STATE_DIM};
use retopt_core::marl::{TrainLogEntry, Variant};
use retopt_core::radiosim::{drop_users, evaluate_snapshot, RadioParams, RadioSnapshot};
use retopt_core::rlcore::{select_action, Action, AdamConfig, Experience, QNetwork, DEFAULT_ARCHITECTURE, NUM_ACTIONS};
use retopt_core::topology::{generate_hex_grid, optimized_cells, sample_episode_config, EpisodeConfig, ParameterRanges, SiteLayout};
use retopt_core::SimRng;

const DESK_PRETRAIN_EPISODES: usize = 100;
const DESK_EVAL_EPISODES: usize = 30;
const DESK_SEED: u64 = 1;
/// Initially congested episodes that must reach zero congestion.
const MIN_MITIGATED_FRACTION: f64 = 0.8;
const RM_RECORDS: usize = 100_000;
const RM_MAX_SECONDS: f64 = 1.0;
const GRAD_BATCHES: u64 = 20;
const GRAD_BATCH_SIZE: usize = 16;
const GRAD_STEP: f64 = 1e-4;
/// Hidden pre-activations of gradient-check states stay this far from zero,
/// so a step of `GRAD_STEP` never crosses a ReLU kink.
const GRAD_KINK_MARGIN: f64 = 1e-3;
const GRAD_MAX_REL_ERROR: f64 = 1e-3;
const ORACLE_SNAPSHOTS: u64 = 50;
const ORACLE_TOL: f64 = 1e-9;
const UNIFORM_DRAWS: usize = 30_000;
const UNIFORM_SIGMAS: f64 = 4.0;
const ARGMAX_TRIPLES: usize = 10_000;

fn verdict(n: u32, name: &str, pass: bool, detail: &str) {
    let line = format!("criterion {n:02} {}: {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
    assert!(pass, "{line}");
}

struct DeskRun {
    report: Report,
    logs: Vec<(Variant, Vec<TrainLogEntry>)>,
}

fn desk_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.seed = DESK_SEED;
    cfg.scale = 1.0;
    cfg.variants = vec![Variant::Expert, Variant::Rlen, Variant::Rlin];
    cfg.pretrain.episodes = DESK_PRETRAIN_EPISODES;
    cfg.evaluate = PhaseConfig {
        episodes: DESK_EVAL_EPISODES,
        rings: cfg.pretrain.rings,
        optimized_rings: cfg.pretrain.optimized_rings,
    };
    cfg
}

fn desk_run() -> &'static DeskRun {
    static RUN: OnceLock<DeskRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let cfg = desk_config();
        let out = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance_desk");
        let pre = commands::pretrain(&cfg, &out).expect("pre-training");
        let report = commands::evaluate(&cfg, &out, &EvaluateOptions::default()).expect("evaluation");
        DeskRun { report, logs: pre.logs }
    })
}

fn final_mean(r: &Report, v: Variant, m: Metric) -> f64 {
    r.variant(v).unwrap().final_gain(m).unwrap().mean
}

#[test]
fn criterion_01_ordering_reproduction() {
    let r = &desk_run().report;
    let mut pass = true;
    let mut detail = Vec::new();
    for (v, mean) in [Variant::Expert, Variant::Rlen, Variant::Rlin]
        .map(|v| (v, final_mean(r, v, Metric::GoodTraffic)))
    {
        detail.push(format!("{} {mean:.2}%", v.as_str()));
    }
    for b in [Variant::Rlen, Variant::Expert] {
        let p = r.paired(Variant::Rlin, b, Metric::GoodTraffic).unwrap();
        let se = p.se.unwrap_or(f64::INFINITY);
        let ok = p.mean > se;
        pass &= ok;
        detail.push(format!("RLIN-{} {:+.2} (paired SE {se:.2}, n {})", b.as_str(), p.mean, p.n));
    }
    verdict(1, "RLIN beats RLEN and ES on final good traffic by more than the paired SE", pass, &detail.join("; "));
}

#[test]
fn criterion_02_coverage_benefit() {
    let r = &desk_run().report;
    let rlin = final_mean(r, Variant::Rlin, Metric::Coverage);
    let rlen = final_mean(r, Variant::Rlen, Metric::Coverage);
    verdict(
        2,
        "RLIN coverage improvement at least RLEN's",
        rlin >= rlen,
        &format!("RLIN {rlin:.2}%, RLEN {rlen:.2}%"),
    );
}

#[test]
fn criterion_03_congestion_mitigation() {
    let r = &desk_run().report;
    let steps = |v| r.variant(v).unwrap().mitigation_congested.map(|s| s.mean);
    let (rlin, es) = (steps(Variant::Rlin), steps(Variant::Expert));
    let mut pass = matches!((rlin, es), (Some(a), Some(b)) if a <= b);
    let mut detail = vec![format!(
        "mean steps RLIN {:.2}, ES {:.2}",
        rlin.unwrap_or(f64::NAN),
        es.unwrap_or(f64::NAN)
    )];
    for v in &r.variants {
        let f = v.mitigated_fraction.unwrap_or(0.0);
        pass &= f >= MIN_MITIGATED_FRACTION;
        detail.push(format!(
            "{} mitigated {:.0}% of {}",
            v.variant.as_str(),
            100.0 * f,
            v.congested_episodes
        ));
    }
    verdict(3, "RLIN mitigates no slower than ES; every variant mitigates at least 80%", pass, &detail.join("; "));
}

/// Least-squares slope of `y` against its index.
fn ols_slope(y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let mx = (n - 1.0) / 2.0;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = y.iter().enumerate().map(|(i, v)| (i as f64 - mx) * (v - my)).sum();
    let sxx: f64 = (0..y.len()).map(|i| (i as f64 - mx).powi(2)).sum();
    sxy / sxx
}

#[test]
fn criterion_04_training_convergence() {
    let run = desk_run();
    let mut pass = true;
    let mut detail = Vec::new();
    for (v, log) in &run.logs {
        let (loss, reward) = windowed_training(log);
        let (first, last) = (loss[0], *loss.last().unwrap());
        let slope = ols_slope(&reward);
        pass &= last < first && slope >= 0.0 && reward.len() >= 2;
        detail.push(format!(
            "{} loss {first:.1} -> {last:.1}, reward slope {slope:+.3}/window over {} windows",
            v.as_str(),
            reward.len()
        ));
    }
    verdict(4, "windowed loss falls and windowed reward trend is non-decreasing", pass, &detail.join("; "));
}

/// Reward metric straight from its definition.
fn rm_oracle(k: &KpiRecord) -> f64 {
    1.0 + (k.good_traffic + k.good_traffic_neigh - k.congestion_rate - k.congestion_rate_neigh) / 2.0
}

#[test]
fn criterion_05_reward_metric_suite() {
    let best = KpiRecord::from_array([1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
    let worst = KpiRecord::from_array([0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 0.0, 1.0]);
    let mut pass = kpi::reward_metric(&best) == 2.0 && kpi::reward_metric(&worst) == 0.0;
    let mut rng = SimRng::seed_from_u64(5);
    let records: Vec<KpiRecord> = (0..RM_RECORDS)
        .map(|_| {
            let mut a = [0.0; 10];
            for v in a.iter_mut() {
                *v = match rng.gen_range(0..8) {
                    0 => 0.0,
                    1 => 1.0,
                    _ => rng.gen(),
                };
            }
            KpiRecord::from_array(a)
        })
        .collect();
    let start = Instant::now();
    let mut bounded = true;
    let mut zero_change = kpi::reward(0.0, 0.0) == 0.0 && kpi::reward(2.0, 2.0) == 0.0;
    let mut matches = true;
    for k in &records {
        let rm = kpi::reward_metric(k);
        bounded &= (0.0..=2.0).contains(&rm);
        matches &= (rm - rm_oracle(k)).abs() <= 1e-12;
        zero_change &= kpi::reward(rm, rm) == 0.0;
    }
    let secs = start.elapsed().as_secs_f64();
    pass &= bounded && zero_change && matches && secs < RM_MAX_SECONDS;
    verdict(
        5,
        "RM extremes exact, zero change gives zero reward, RM bounded and fast",
        pass,
        &format!(
            "RM(best) {}, RM(worst) {}, bounded {bounded}, zero-change {zero_change}, oracle {matches}, {} records in {secs:.3}s",
            kpi::reward_metric(&best),
            kpi::reward_metric(&worst),
            RM_RECORDS
        ),
    );
}

/// Forward pass over the stored weights, hidden pre-activations included.
fn forward_oracle(net: &QNetwork, x: &[f64]) -> (Vec<f64>, f64) {
    let mut a = x.to_vec();
    let mut margin = f64::INFINITY;
    let n = net.layers().len();
    for (k, l) in net.layers().iter().enumerate() {
        let z: Vec<f64> = (0..l.outputs)
            .map(|o| l.biases[o] + (0..l.inputs).map(|i| l.weights[o * l.inputs + i] * a[i]).sum::<f64>())
            .collect();
        if k + 1 < n {
            margin = z.iter().fold(margin, |m, v| m.min(v.abs()));
            a = z.iter().map(|v| v.max(0.0)).collect();
        } else {
            a = z;
        }
    }
    (a, margin)
}

fn loss_oracle(net: &QNetwork, batch: &[Experience]) -> f64 {
    batch
        .iter()
        .map(|e| (forward_oracle(net, &e.state.0).0[e.action.index()] - e.reward).powi(2))
        .sum::<f64>()
        / batch.len() as f64
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[test]
fn criterion_06_gradient_correctness() {
    let mut rng = SimRng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for b in 0..GRAD_BATCHES {
        let mut net = QNetwork::new(&DEFAULT_ARCHITECTURE, AdamConfig::default(), &mut SimRng::seed_from_u64(600 + b)).unwrap();
        let mut batch = Vec::new();
        while batch.len() < GRAD_BATCH_SIZE {
            let mut s = [0.0; STATE_DIM];
            s.iter_mut().for_each(|v| *v = rng.gen());
            if forward_oracle(&net, &s).1 < GRAD_KINK_MARGIN {
                continue;
            }
            batch.push(Experience {
                state: StateVector(s),
                action: Action::from_index(rng.gen_range(0..NUM_ACTIONS)),
                reward: rng.gen_range(-5.0..5.0),
            });
        }
        let analytic = net.loss_and_gradient(&batch).1.flatten();
        let params = net.params();
        let numeric: Vec<f64> = (0..params.len())
            .map(|i| {
                net.set_param(i, params[i] + GRAD_STEP);
                let up = loss_oracle(&net, &batch);
                net.set_param(i, params[i] - GRAD_STEP);
                let down = loss_oracle(&net, &batch);
                net.set_param(i, params[i]);
                (up - down) / (2.0 * GRAD_STEP)
            })
            .collect();
        let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, n)| a - n).collect();
        worst = worst.max(norm(&diff) / norm(&analytic).max(norm(&numeric)).max(1e-12));
    }
    verdict(
        6,
        "analytic gradients match central finite differences",
        worst < GRAD_MAX_REL_ERROR,
        &format!("max relative error {worst:.2e} over {GRAD_BATCHES} batches"),
    );
}

fn seven_site(seed: u64) -> (SiteLayout, EpisodeConfig, RadioSnapshot) {
    let unit = generate_hex_grid(1, 1.0);
    let opt = optimized_cells(&unit, 0).unwrap();
    let mut rng = SimRng::seed_from_u64(seed);
    let config = sample_episode_config(&unit, &opt, &mut rng, &ParameterRanges::default(), seed).unwrap();
    let layout = unit.rescaled(config.inter_site_distance);
    let params = RadioParams::default();
    let drop = drop_users(&layout, &config, &params, &mut rng).unwrap();
    let snap = evaluate_snapshot(&layout, &config, &drop, &params).unwrap();
    (layout, config, snap)
}

/// Largest deviation between the library KPIs and a per-UE recount.
fn recount_deviation(layout: &SiteLayout, config: &EpisodeConfig, snap: &RadioSnapshot) -> (bool, f64) {
    let thr = KpiThresholds::default();
    let nc = layout.cells.len();
    let nu = snap.positions.len();
    let mut served = vec![0.0; nc];
    let mut cov = vec![0.0; nc];
    let mut qual = vec![0.0; nc];
    let mut good = vec![0.0; nc];
    let mut over = vec![0.0; nc];
    let mut high = vec![0.0; nc];
    let mut intf = vec![0.0; nc];
    let mut seen = vec![vec![0.0; nc]; nc];
    let mut serving_ok = true;
    for u in 0..nu {
        let row = &snap.rsrp[u * nc..(u + 1) * nc];
        let s = (0..nc).fold(0, |b, c| if row[c] > row[b] { c } else { b });
        serving_ok &= snap.serving[u] == s;
        served[s] += 1.0;
        let c_ok = row[s] >= thr.good_coverage_dbm;
        let q_ok = snap.sinr_db[u] >= thr.good_quality_db;
        cov[s] += c_ok as u8 as f64;
        qual[s] += q_ok as u8 as f64;
        good[s] += (c_ok && q_ok) as u8 as f64;
        let site = &layout.sites[layout.cells[s].site];
        let (x, y) = snap.positions[u];
        if ((x - site.x).powi(2) + (y - site.y).powi(2)).sqrt() > thr.overshoot_isd_factor * config.inter_site_distance {
            over[s] += 1.0;
        }
        let near: Vec<usize> = (0..nc).filter(|&c| c != s && row[c] >= row[s] - thr.overlap_window_db).collect();
        if row[s] >= thr.high_overlap_rsrp_dbm && near.len() >= thr.high_overlap_min_cells {
            high[s] += 1.0;
        }
        if (0..nc).any(|c| c != s && row[c] >= row[s] - thr.interference_window_db) {
            intf[s] += 1.0;
        }
        for c in near {
            seen[s][c] += 1.0;
        }
    }
    let frac = |n: f64, d: f64| if d == 0.0 { 0.0 } else { n / d };
    let kpis = kpi::network_kpis(snap, layout, &thr);
    let mut dev: f64 = 0.0;
    let mut track = |a: f64, b: f64| dev = dev.max((a - b).abs());
    for c in 0..nc {
        let k = &kpis[c];
        let n = served[c];
        track(k.good_traffic, frac(good[c], n));
        track(k.good_coverage, frac(cov[c], n));
        track(k.good_quality, frac(qual[c], n));
        track(k.overshooting, frac(over[c], n));
        track(k.overlap_high, frac(high[c], n));
        track(k.interference_indicator, frac(intf[c], n));
        track(k.bad_coverage, if n == 0.0 { 0.0 } else { 1.0 - frac(cov[c], n) });
        for j in (0..nc).filter(|&j| j != c) {
            track(kpi::overlapping_factor(snap, c, j, thr.overlap_window_db), frac(seen[c][j], n));
        }
        let mut top: Vec<(f64, usize)> = (0..nc).filter(|&j| j != c && seen[c][j] > 0.0).map(|j| (seen[c][j], j)).collect();
        top.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        top.truncate(thr.neighbor_count);
        let total: f64 = top.iter().map(|t| t.0).sum();
        let (gt, cr) = if top.is_empty() {
            (k.good_traffic, k.congestion_rate)
        } else {
            top.iter().fold((0.0, 0.0), |(g, r), &(w, j)| {
                (g + w / total * kpis[j].good_traffic, r + w / total * kpis[j].congestion_rate)
            })
        };
        track(k.good_traffic_neigh, gt);
        track(k.congestion_rate_neigh, cr);
    }
    (serving_ok, dev)
}

#[test]
fn criterion_07_oracle_equivalence() {
    let mut serving = true;
    let mut worst: f64 = 0.0;
    for seed in 0..ORACLE_SNAPSHOTS {
        let (layout, config, snap) = seven_site(seed);
        let (ok, dev) = recount_deviation(&layout, &config, &snap);
        serving &= ok;
        worst = worst.max(dev);
    }
    verdict(
        7,
        "serving, KPI ratios, overlap factors and neighbour aggregates match a brute-force recount",
        serving && worst <= ORACLE_TOL,
        &format!("{ORACLE_SNAPSHOTS} seven-site snapshots, serving exact {serving}, max deviation {worst:.1e}"),
    );
}

fn cli(dir: &Path, args: &[&str]) {
    let status = Command::new(env!("CARGO_BIN_EXE_retopt"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .env("RUST_LOG", "error")
        .status()
        .expect("binary runs");
    assert!(status.success(), "{args:?} failed");
}

fn output_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.file_name() != "cfg.json")
        .map(|e| (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn criterion_08_determinism() {
    let cfg_dir = tempfile::tempdir().unwrap();
    let cfg = cfg_dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"evaluate": {"rings": 2, "optimized_rings": 1}}"#).unwrap();
    let cfg = cfg.to_str().unwrap();
    let runs: Vec<_> = (0..2)
        .map(|_| {
            let dir = tempfile::tempdir().unwrap();
            let common = ["--config", cfg, "--seed", "8", "--scale", "0.02", "--workers", "2"];
            for cmd in [&["pretrain"][..], &["evaluate", "--dump"], &["report"]] {
                cli(dir.path(), &[cmd, &common].concat());
            }
            let files = output_files(dir.path());
            (dir, files)
        })
        .collect();
    let (a, b) = (&runs[0].1, &runs[1].1);
    let names: Vec<&str> = a.iter().map(|f| f.0.as_str()).collect();
    let same = a == b;
    let differing: Vec<&str> = a
        .iter()
        .zip(b)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.as_str())
        .collect();
    verdict(
        8,
        "repeated runs give byte-identical CSV, SVG and JSON outputs",
        same && names.iter().any(|n| n.ends_with(".svg")),
        &format!("{} files compared after pretrain, evaluate and report; differing {differing:?}", names.len()),
    );
}

/// Sites of a hexagonal grid by axial coordinates, and those within `k` rings.
fn hex_oracle(rings: i32, k: i32) -> (usize, usize) {
    let mut sites = 0;
    let mut inner = 0;
    for q in -rings..=rings {
        for r in -rings..=rings {
            let d = q.abs().max(r.abs()).max((q + r).abs());
            if d <= rings {
                sites += 1;
                if d <= k {
                    inner += 1;
                }
            }
        }
    }
    (sites, inner)
}

#[test]
fn criterion_09_structural_counts() {
    let mut pass = true;
    let mut detail = Vec::new();
    for (rings, k, expect) in [(2u32, 1u32, (19, 57, 21)), (5, 4, (91, 273, 183))] {
        let g = generate_hex_grid(rings, 1000.0);
        let got = (g.sites.len(), g.cells.len(), optimized_cells(&g, k).unwrap().len());
        let (sites, inner) = hex_oracle(rings as i32, k as i32);
        pass &= got == expect && got == (sites, 3 * sites, 3 * inner);
        detail.push(format!("{rings} rings: {}/{}/{}", got.0, got.1, got.2));
    }
    let defaults = RunConfig::default();
    let grids = [&defaults.pretrain, &defaults.evaluate].map(|p| {
        let g = generate_hex_grid(p.rings, 1.0);
        (g.sites.len(), g.cells.len(), optimized_cells(&g, p.optimized_rings).unwrap().len())
    });
    pass &= grids == [(19, 57, 21), (91, 273, 183)];
    verdict(9, "grid sizes and optimized cell counts", pass, &detail.join("; "));
}

#[test]
fn criterion_10_epsilon_greedy_statistics() {
    let mut rng = SimRng::seed_from_u64(10);
    let q = [2.0, -1.0, 0.5];
    let mut counts = [0usize; NUM_ACTIONS];
    for _ in 0..UNIFORM_DRAWS {
        counts[select_action(&q, 1.0, &mut rng).index()] += 1;
    }
    let n = UNIFORM_DRAWS as f64;
    let p = 1.0 / NUM_ACTIONS as f64;
    let sigma = (n * p * (1.0 - p)).sqrt();
    let worst_z = counts.iter().map(|&c| (c as f64 - n * p).abs() / sigma).fold(0.0, f64::max);
    let mut mismatches = 0;
    for _ in 0..ARGMAX_TRIPLES {
        let v = [0; NUM_ACTIONS].map(|_| rng.gen_range(-4i32..=4) as f64 * 0.5);
        let best = (1..NUM_ACTIONS).fold(0, |b, i| if v[i] > v[b] { i } else { b });
        if select_action(&v, 0.0, &mut rng).index() != best {
            mismatches += 1;
        }
    }
    verdict(
        10,
        "epsilon 1 is uniform within 4 sigma and epsilon 0 is argmax",
        worst_z <= UNIFORM_SIGMAS && mismatches == 0,
        &format!("counts {counts:?} (max {worst_z:.2} sigma), {mismatches} argmax mismatches in {ARGMAX_TRIPLES}"),
    );
}
