//! Crisp rule-based tilt controller used as the static-policy baseline.
//!
//! Rules are evaluated in priority order:
//! 1. poor coverage or congestion: uptilt to widen the footprint;
//! 2. overshooting, high-level overlap or strong interference: downtilt;
//! 3. otherwise keep.

use crate::kpi::KpiRecord;
use crate::rlcore::Action;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ExpertThresholds {
    pub bad_coverage_high: f64,
    pub overshooting_high: f64,
    /// Shared by the overlap and interference indicators.
    pub overlap_high_thr: f64,
    pub congestion_high: f64,
}

impl Default for ExpertThresholds {
    fn default() -> Self {
        ExpertThresholds {
            bad_coverage_high: 0.10,
            overshooting_high: 0.15,
            overlap_high_thr: 0.30,
            congestion_high: 0.05,
        }
    }
}

impl ExpertThresholds {
    pub fn is_valid(&self) -> bool {
        [
            self.bad_coverage_high,
            self.overshooting_high,
            self.overlap_high_thr,
            self.congestion_high,
        ]
        .iter()
        .all(|v| (0.0..=1.0).contains(v))
    }
}

pub fn expert_action(kpi: &KpiRecord, thr: &ExpertThresholds) -> Action {
    if kpi.bad_coverage > thr.bad_coverage_high || kpi.congestion_rate > thr.congestion_high {
        Action::Up
    } else if kpi.overshooting > thr.overshooting_high
        || kpi.overlap_high > thr.overlap_high_thr
        || kpi.interference_indicator > thr.overlap_high_thr
    {
        Action::Down
    } else {
        Action::Keep
    }
}
