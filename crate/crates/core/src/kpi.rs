//! Cell KPIs synthesized from a radio snapshot, the reward metric and reward,
//! and the per-agent state vector.

use alloc::vec::Vec;

use crate::radiosim::RadioSnapshot;
use crate::topology::{EpisodeConfig, SiteLayout};
use crate::{math, CellId};

/// Thresholds used to classify each UE report.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KpiThresholds {
    pub good_coverage_dbm: f64,
    pub good_quality_db: f64,
    /// A non-serving cell is "reported" when within this window of the server.
    pub overlap_window_db: f64,
    pub high_overlap_rsrp_dbm: f64,
    /// Other cells within the window needed to count as high-level overlap.
    pub high_overlap_min_cells: usize,
    /// Overshooting distance as a multiple of the inter-site distance.
    pub overshoot_isd_factor: f64,
    pub interference_window_db: f64,
    /// Neighbours kept for the overlap-weighted aggregates.
    pub neighbor_count: usize,
}

impl Default for KpiThresholds {
    fn default() -> Self {
        KpiThresholds {
            good_coverage_dbm: -108.0,
            good_quality_db: 3.0,
            overlap_window_db: 6.0,
            high_overlap_rsrp_dbm: -98.0,
            high_overlap_min_cells: 2,
            overshoot_isd_factor: 1.5,
            interference_window_db: 6.0,
            neighbor_count: 5,
        }
    }
}

/// Per-cell KPIs. Ratios are over the traffic the cell serves.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KpiRecord {
    pub good_traffic: f64,
    pub congestion_rate: f64,
    pub good_coverage: f64,
    pub good_quality: f64,
    pub overshooting: f64,
    pub overlap_high: f64,
    pub bad_coverage: f64,
    pub interference_indicator: f64,
    pub good_traffic_neigh: f64,
    pub congestion_rate_neigh: f64,
}

impl KpiRecord {
    pub const FIELD_NAMES: [&'static str; 10] = [
        "good_traffic",
        "congestion_rate",
        "good_coverage",
        "good_quality",
        "overshooting",
        "overlap_high",
        "bad_coverage",
        "interference_indicator",
        "good_traffic_neigh",
        "congestion_rate_neigh",
    ];

    pub fn to_array(&self) -> [f64; 10] {
        [
            self.good_traffic,
            self.congestion_rate,
            self.good_coverage,
            self.good_quality,
            self.overshooting,
            self.overlap_high,
            self.bad_coverage,
            self.interference_indicator,
            self.good_traffic_neigh,
            self.congestion_rate_neigh,
        ]
    }

    pub fn from_array(a: [f64; 10]) -> Self {
        KpiRecord {
            good_traffic: a[0],
            congestion_rate: a[1],
            good_coverage: a[2],
            good_quality: a[3],
            overshooting: a[4],
            overlap_high: a[5],
            bad_coverage: a[6],
            interference_indicator: a[7],
            good_traffic_neigh: a[8],
            congestion_rate_neigh: a[9],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Whether an agent's state and reward see neighbouring cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum NeighborMode {
    Include,
    Exclude,
}

/// Fraction of the UEs served by `cell_i` that also report `cell_j` within
/// the overlap window.
pub fn overlapping_factor(snapshot: &RadioSnapshot, cell_i: CellId, cell_j: CellId, window_db: f64) -> f64 {
    let mut served = 0usize;
    let mut reported = 0usize;
    for u in snapshot.served_by(cell_i) {
        served += 1;
        if snapshot.rsrp_at(u, cell_j) >= snapshot.serving_rsrp(u) - window_db {
            reported += 1;
        }
    }
    if served == 0 {
        0.0
    } else {
        reported as f64 / served as f64
    }
}

/// Non-zero overlapping factors of every cell: `table[i]` lists `(j, factor)`
/// sorted by `j`.
pub fn overlap_table(snapshot: &RadioSnapshot, window_db: f64) -> Vec<Vec<(CellId, f64)>> {
    let nc = snapshot.num_cells;
    let mut counts = alloc::vec![0usize; nc * nc];
    for u in 0..snapshot.num_ues() {
        let s = snapshot.serving[u];
        let floor = snapshot.serving_rsrp(u) - window_db;
        for (j, &p) in snapshot.rsrp_row(u).iter().enumerate() {
            if j != s && p >= floor {
                counts[s * nc + j] += 1;
            }
        }
    }
    (0..nc)
        .map(|i| {
            let served = snapshot.ue_count[i];
            counts[i * nc..(i + 1) * nc]
                .iter()
                .enumerate()
                .filter(|&(_, &n)| n > 0)
                .map(|(j, &n)| (j, n as f64 / served as f64))
                .collect()
        })
        .collect()
}

/// Own-cell KPIs. The neighbour aggregates are initialised to the cell's own
/// good traffic and congestion; [`network_kpis`] fills them in.
pub fn cell_kpis(snapshot: &RadioSnapshot, layout: &SiteLayout, cell: CellId, thr: &KpiThresholds) -> KpiRecord {
    let site = layout.site_of(cell);
    let overshoot_m = thr.overshoot_isd_factor * layout.inter_site_distance;
    let mut total = 0.0;
    let (mut cov, mut qual, mut good, mut over, mut high, mut intf) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for u in snapshot.served_by(cell) {
        let w = snapshot.demand_mbps[u];
        total += w;
        let best = snapshot.serving_rsrp(u);
        let covered = best >= thr.good_coverage_dbm;
        let quality = snapshot.sinr_db[u] >= thr.good_quality_db;
        if covered {
            cov += w;
        }
        if quality {
            qual += w;
        }
        if covered && quality {
            good += w;
        }
        let (x, y) = snapshot.positions[u];
        if math::hypot(x - site.x, y - site.y) > overshoot_m {
            over += w;
        }
        let mut in_overlap = 0usize;
        let mut second = f64::NEG_INFINITY;
        for (j, &p) in snapshot.rsrp_row(u).iter().enumerate() {
            if j == cell {
                continue;
            }
            if p >= best - thr.overlap_window_db {
                in_overlap += 1;
            }
            second = second.max(p);
        }
        if best >= thr.high_overlap_rsrp_dbm && in_overlap >= thr.high_overlap_min_cells {
            high += w;
        }
        if second >= best - thr.interference_window_db {
            intf += w;
        }
    }

    if total == 0.0 {
        return KpiRecord::default();
    }
    let gt = good / total;
    let cr = snapshot.congestion_rate[cell];
    KpiRecord {
        good_traffic: gt,
        congestion_rate: cr,
        good_coverage: cov / total,
        good_quality: qual / total,
        overshooting: over / total,
        overlap_high: high / total,
        bad_coverage: 1.0 - cov / total,
        interference_indicator: intf / total,
        good_traffic_neigh: gt,
        congestion_rate_neigh: cr,
    }
}

/// Overlap-weighted mean good traffic and congestion over the `count`
/// neighbours with the highest factor (ties to the lowest id). Falls back to
/// the cell's own values when no neighbour overlaps.
pub fn neighbor_aggregates(
    kpis: &[KpiRecord],
    overlap_row: &[(CellId, f64)],
    cell: CellId,
    count: usize,
) -> (f64, f64) {
    let mut ranked: Vec<(CellId, f64)> = overlap_row
        .iter()
        .copied()
        .filter(|&(j, f)| j != cell && f > 0.0)
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(count);
    let weight: f64 = ranked.iter().map(|&(_, f)| f).sum();
    if ranked.is_empty() || weight <= 0.0 {
        return (kpis[cell].good_traffic, kpis[cell].congestion_rate);
    }
    let mut gt = 0.0;
    let mut cr = 0.0;
    for &(j, f) in &ranked {
        let w = f / weight;
        gt += w * kpis[j].good_traffic;
        cr += w * kpis[j].congestion_rate;
    }
    (gt.clamp(0.0, 1.0), cr.clamp(0.0, 1.0))
}

/// KPIs of every cell, with neighbour aggregates.
pub fn network_kpis(snapshot: &RadioSnapshot, layout: &SiteLayout, thr: &KpiThresholds) -> Vec<KpiRecord> {
    let mut kpis: Vec<KpiRecord> = (0..layout.num_cells())
        .map(|c| cell_kpis(snapshot, layout, c, thr))
        .collect();
    let table = overlap_table(snapshot, thr.overlap_window_db);
    let aggregates: Vec<(f64, f64)> = (0..kpis.len())
        .map(|c| neighbor_aggregates(&kpis, &table[c], c, thr.neighbor_count))
        .collect();
    for (k, (gt, cr)) in kpis.iter_mut().zip(aggregates) {
        k.good_traffic_neigh = gt;
        k.congestion_rate_neigh = cr;
    }
    kpis
}

/// `RM = 1 + (GT + GT_neigh - CR - CR_neigh) / 2`, in `[0, 2]`.
pub fn reward_metric(kpi: &KpiRecord) -> f64 {
    1.0 + 0.5 * (kpi.good_traffic + kpi.good_traffic_neigh - kpi.congestion_rate - kpi.congestion_rate_neigh)
}

/// Reward metric as seen by an agent in the given mode; without neighbours
/// the cell's own values stand in for the aggregates.
pub fn reward_metric_for(kpi: &KpiRecord, mode: NeighborMode) -> f64 {
    match mode {
        NeighborMode::Include => reward_metric(kpi),
        NeighborMode::Exclude => reward_metric(&KpiRecord {
            good_traffic_neigh: kpi.good_traffic,
            congestion_rate_neigh: kpi.congestion_rate,
            ..*kpi
        }),
    }
}

/// Floor on the reward denominator so a zero metric does not divide by zero.
pub const REWARD_DENOMINATOR_FLOOR: f64 = 0.01;

/// Relative gain of the reward metric, scaled by 1000.
pub fn reward(rm_before: f64, rm_after: f64) -> f64 {
    1000.0 * (rm_after - rm_before) / rm_before.max(REWARD_DENOMINATOR_FLOOR)
}

pub const STATE_DIM: usize = 11;

/// Normalised agent observation; every feature is in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StateVector(pub [f64; STATE_DIM]);

impl StateVector {
    pub const FEATURE_NAMES: [&'static str; STATE_DIM] = [
        "antenna_height",
        "electrical_tilt",
        "mechanical_tilt",
        "carrier_frequency",
        "mean_distance_5_enb",
        "overshooting",
        "overlap_high",
        "bad_coverage",
        "congestion",
        "neighbor_congestion_weighted",
        "interference_indicator",
    ];
    /// Indices of the features derived from neighbouring cells.
    pub const NEIGHBOR_FEATURES: [usize; 1] = [9];

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Fixed scales used to map raw configuration values into `[0, 1]`.
pub mod scale {
    pub const ANTENNA_HEIGHT_M: f64 = 30.0;
    pub const ELECTRICAL_TILT_DEG: f64 = 15.0;
    pub const MECHANICAL_TILT_DEG: f64 = 4.0;
    pub const FREQUENCY_MIN_GHZ: f64 = 0.7;
    pub const FREQUENCY_SPAN_GHZ: f64 = 1.9;
    pub const SITE_DISTANCE_M: f64 = 5000.0;
    pub const CLOSEST_SITES: usize = 5;
}

/// Builds the state of `cell`'s agent.
pub fn build_state(
    config: &EpisodeConfig,
    layout: &SiteLayout,
    kpi: &KpiRecord,
    cell: CellId,
    mode: NeighborMode,
) -> StateVector {
    let unit = |v: f64| if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
    let neighbor_congestion = match mode {
        NeighborMode::Include => kpi.congestion_rate_neigh,
        NeighborMode::Exclude => 0.0,
    };
    StateVector([
        unit(config.antenna_height[cell] / scale::ANTENNA_HEIGHT_M),
        unit(config.electrical_tilt[cell] / scale::ELECTRICAL_TILT_DEG),
        unit(config.mechanical_tilt[cell] / scale::MECHANICAL_TILT_DEG),
        unit((config.carrier_frequency - scale::FREQUENCY_MIN_GHZ) / scale::FREQUENCY_SPAN_GHZ),
        unit(layout.mean_distance_to_closest_sites(cell, scale::CLOSEST_SITES) / scale::SITE_DISTANCE_M),
        unit(kpi.overshooting),
        unit(kpi.overlap_high),
        unit(kpi.bad_coverage),
        unit(kpi.congestion_rate),
        unit(neighbor_congestion),
        unit(kpi.interference_indicator),
    ])
}
