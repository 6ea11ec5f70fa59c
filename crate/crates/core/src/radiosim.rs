//! Static Monte Carlo downlink evaluation.
//!
//! One snapshot drops users uniformly over the coverage region, computes the
//! RSRP of every cell at every UE, attaches each UE to its strongest cell and
//! derives SINR with full-buffer interference. Capacity is an equal share of
//! the carrier per served UE times a truncated Shannon efficiency.

use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::math;
use crate::topology::{EpisodeConfig, SiteLayout};
use crate::CellId;

/// Parabolic sector pattern with separate horizontal and vertical cuts.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AntennaPattern {
    pub max_gain_dbi: f64,
    pub horizontal_beamwidth_deg: f64,
    pub vertical_beamwidth_deg: f64,
    /// Cap on the horizontal attenuation.
    pub front_to_back_db: f64,
    /// Cap on the vertical attenuation.
    pub side_lobe_db: f64,
    /// Cap on the combined attenuation.
    pub max_attenuation_db: f64,
}

impl Default for AntennaPattern {
    fn default() -> Self {
        AntennaPattern {
            max_gain_dbi: 15.0,
            horizontal_beamwidth_deg: 65.0,
            vertical_beamwidth_deg: 10.0,
            front_to_back_db: 30.0,
            side_lobe_db: 30.0,
            max_attenuation_db: 30.0,
        }
    }
}

impl AntennaPattern {
    pub fn horizontal_attenuation(&self, offset_deg: f64) -> f64 {
        let x = offset_deg / self.horizontal_beamwidth_deg;
        (12.0 * x * x).min(self.front_to_back_db)
    }

    pub fn vertical_attenuation(&self, offset_deg: f64) -> f64 {
        let x = offset_deg / self.vertical_beamwidth_deg;
        (12.0 * x * x).min(self.side_lobe_db)
    }

    fn combine(&self, horizontal_db: f64, vertical_db: f64) -> f64 {
        self.max_gain_dbi - (horizontal_db + vertical_db).min(self.max_attenuation_db)
    }

    /// Gain in dBi for offsets from boresight. The vertical offset is the
    /// elevation below the horizon minus the total downtilt.
    pub fn gain(&self, horizontal_offset_deg: f64, vertical_offset_deg: f64) -> f64 {
        self.combine(
            self.horizontal_attenuation(horizontal_offset_deg),
            self.vertical_attenuation(vertical_offset_deg),
        )
    }
}

/// [`AntennaPattern::gain`] with the default 65°/10° 15 dBi pattern.
pub fn antenna_gain(horizontal_offset_deg: f64, vertical_offset_deg: f64) -> f64 {
    AntennaPattern::default().gain(horizontal_offset_deg, vertical_offset_deg)
}

/// Distances below this are clamped before evaluating the path loss.
pub const MIN_DISTANCE_M: f64 = 10.0;

/// COST-231-Hata-style urban macro loss in dB. The same expression is used
/// for every carrier, including those below 1.5 GHz where it is only an
/// approximation.
pub fn path_loss(distance_m: f64, frequency_ghz: f64, bs_height_m: f64) -> f64 {
    let d_km = distance_m.max(MIN_DISTANCE_M) / 1000.0;
    let lh = math::log10(bs_height_m);
    46.3 + 33.9 * math::log10(frequency_ghz * 1000.0) - 13.82 * lh
        + (44.9 - 6.55 * lh) * math::log10(d_km)
}

/// Link budget, noise and capacity constants.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RadioParams {
    pub total_tx_power_dbm: f64,
    pub bandwidth_hz: f64,
    /// Bandwidth of one resource element; RSRP and SINR are per element.
    pub resource_bandwidth_hz: f64,
    pub noise_density_dbm_per_hz: f64,
    pub noise_figure_db: f64,
    pub ue_height_m: f64,
    pub per_ue_demand_mbps: f64,
    pub max_spectral_efficiency: f64,
    pub antenna: AntennaPattern,
}

impl Default for RadioParams {
    fn default() -> Self {
        RadioParams {
            total_tx_power_dbm: 46.0,
            bandwidth_hz: 20e6,
            resource_bandwidth_hz: 15e3,
            noise_density_dbm_per_hz: -174.0,
            noise_figure_db: 9.0,
            ue_height_m: 1.5,
            per_ue_demand_mbps: 1.0,
            max_spectral_efficiency: 6.0,
            antenna: AntennaPattern::default(),
        }
    }
}

impl RadioParams {
    /// Transmit power per resource element with the total spread evenly.
    pub fn tx_power_per_resource_dbm(&self) -> f64 {
        self.total_tx_power_dbm - math::linear_to_db(self.bandwidth_hz / self.resource_bandwidth_hz)
    }

    pub fn noise_per_resource_dbm(&self) -> f64 {
        self.noise_density_dbm_per_hz
            + math::linear_to_db(self.resource_bandwidth_hz)
            + self.noise_figure_db
    }
}

/// User positions for one snapshot. Every UE demands the same rate.
#[derive(Debug, Clone, PartialEq)]
pub struct UeDrop {
    pub positions: Vec<(f64, f64)>,
    pub per_ue_demand: f64,
    pub rng_seed: u64,
}

/// Drops `round(total offered traffic / per-UE demand)` users uniformly over
/// the layout's coverage region by rejection sampling.
pub fn drop_users<R: Rng + ?Sized>(
    layout: &SiteLayout,
    config: &EpisodeConfig,
    params: &RadioParams,
    rng: &mut R,
) -> Result<UeDrop> {
    let total: f64 = config.offered_traffic.iter().sum();
    let count = math::round(total / params.per_ue_demand_mbps);
    if !(count >= 1.0) {
        return Err(Error::Config("total offered traffic yields no users".into()));
    }
    let count = count as usize;
    let (hx, hy) = layout.region_half_extent();
    let mut positions = Vec::with_capacity(count);
    while positions.len() < count {
        let x = rng.gen_range(-hx..=hx);
        let y = rng.gen_range(-hy..=hy);
        if layout.region_contains(x, y) {
            positions.push((x, y));
        }
    }
    Ok(UeDrop {
        positions,
        per_ue_demand: params.per_ue_demand_mbps,
        rng_seed: config.rng_seed,
    })
}

/// Result of evaluating one tilt configuration on one UE drop.
#[derive(Debug, Clone, PartialEq)]
pub struct RadioSnapshot {
    pub num_cells: usize,
    pub positions: Vec<(f64, f64)>,
    /// Row-major `[ue][cell]` RSRP in dBm per resource element.
    pub rsrp: Vec<f64>,
    pub serving: Vec<CellId>,
    pub sinr_db: Vec<f64>,
    /// SNR of the serving link, i.e. SINR without interference.
    pub snr_db: Vec<f64>,
    pub throughput_mbps: Vec<f64>,
    pub demand_mbps: Vec<f64>,
    pub ue_count: Vec<usize>,
    pub served_traffic: Vec<f64>,
    pub offered_traffic: Vec<f64>,
    pub congestion_rate: Vec<f64>,
}

impl RadioSnapshot {
    pub fn num_ues(&self) -> usize {
        self.serving.len()
    }

    pub fn rsrp_row(&self, ue: usize) -> &[f64] {
        &self.rsrp[ue * self.num_cells..(ue + 1) * self.num_cells]
    }

    pub fn rsrp_at(&self, ue: usize, cell: CellId) -> f64 {
        self.rsrp[ue * self.num_cells + cell]
    }

    pub fn serving_rsrp(&self, ue: usize) -> f64 {
        self.rsrp_at(ue, self.serving[ue])
    }

    /// UEs attached to `cell`, in index order.
    pub fn served_by(&self, cell: CellId) -> impl Iterator<Item = usize> + '_ {
        self.serving.iter().enumerate().filter(move |&(_, &s)| s == cell).map(|(u, _)| u)
    }
}

/// Tilt-independent part of the link budget for one layout, configuration
/// and UE drop. Within an episode only electrical tilts change, so this is
/// built once and [`LinkBudget::evaluate`] is called per step.
#[derive(Debug, Clone)]
pub struct LinkBudget {
    params: RadioParams,
    num_cells: usize,
    positions: Vec<(f64, f64)>,
    demand: f64,
    mechanical_tilt: Vec<f64>,
    /// `[ue][cell]` tx power per element minus path loss.
    base_dbm: Vec<f64>,
    horizontal_att: Vec<f64>,
    /// Elevation of the UE below the horizon as seen from the antenna.
    elevation_deg: Vec<f64>,
}

impl LinkBudget {
    pub fn new(layout: &SiteLayout, config: &EpisodeConfig, drop: &UeDrop, params: &RadioParams) -> Result<Self> {
        let num_cells = layout.num_cells();
        let dims_ok = [
            config.electrical_tilt.len(),
            config.mechanical_tilt.len(),
            config.antenna_height.len(),
        ]
        .iter()
        .all(|&n| n == num_cells);
        if !dims_ok {
            return Err(Error::Shape("per-cell configuration does not match layout".into()));
        }
        let n = drop.positions.len() * num_cells;
        let mut base_dbm = Vec::with_capacity(n);
        let mut horizontal_att = Vec::with_capacity(n);
        let mut elevation_deg = Vec::with_capacity(n);
        let p_re = params.tx_power_per_resource_dbm();
        for &(ux, uy) in &drop.positions {
            for (c, cell) in layout.cells.iter().enumerate() {
                let site = &layout.sites[cell.site];
                let (dx, dy) = (ux - site.x, uy - site.y);
                let d = math::hypot(dx, dy).max(MIN_DISTANCE_M);
                let h = config.antenna_height[c];
                let bearing = math::atan2_deg(dy, dx);
                let phi = math::wrap_deg(bearing - cell.azimuth);
                base_dbm.push(p_re - path_loss(d, config.carrier_frequency, h));
                horizontal_att.push(params.antenna.horizontal_attenuation(phi));
                elevation_deg.push(math::atan2_deg(h - params.ue_height_m, d));
            }
        }
        Ok(LinkBudget {
            params: *params,
            num_cells,
            positions: drop.positions.clone(),
            demand: drop.per_ue_demand,
            mechanical_tilt: config.mechanical_tilt.clone(),
            base_dbm,
            horizontal_att,
            elevation_deg,
        })
    }

    pub fn num_cells(&self) -> usize {
        self.num_cells
    }

    /// Evaluates the network with the given per-cell electrical tilts.
    pub fn evaluate(&self, electrical_tilt: &[f64]) -> Result<RadioSnapshot> {
        if electrical_tilt.len() != self.num_cells {
            return Err(Error::Shape("electrical tilt vector does not match layout".into()));
        }
        let nc = self.num_cells;
        let nu = self.positions.len();
        let antenna = &self.params.antenna;
        let tilt: Vec<f64> = electrical_tilt
            .iter()
            .zip(&self.mechanical_tilt)
            .map(|(e, m)| e + m)
            .collect();

        let mut rsrp = Vec::with_capacity(nu * nc);
        for u in 0..nu {
            for c in 0..nc {
                let k = u * nc + c;
                let v_att = antenna.vertical_attenuation(self.elevation_deg[k] - tilt[c]);
                rsrp.push(self.base_dbm[k] + antenna.combine(self.horizontal_att[k], v_att));
            }
        }

        let noise_mw = math::db_to_linear(self.params.noise_per_resource_dbm());
        let mut serving = Vec::with_capacity(nu);
        let mut sinr_db = Vec::with_capacity(nu);
        let mut snr_db = Vec::with_capacity(nu);
        let mut sinr_lin = Vec::with_capacity(nu);
        let mut linear = Vec::with_capacity(nc);
        for u in 0..nu {
            let row = &rsrp[u * nc..(u + 1) * nc];
            let best = argmax(row);
            linear.clear();
            linear.extend(row.iter().map(|&p| math::db_to_linear(p)));
            let signal = linear[best];
            let interference: f64 = linear
                .iter()
                .enumerate()
                .filter(|&(c, _)| c != best)
                .map(|(_, &p)| p)
                .sum();
            let sinr = signal / (interference + noise_mw);
            serving.push(best);
            sinr_lin.push(sinr);
            sinr_db.push(math::linear_to_db(sinr));
            snr_db.push(math::linear_to_db(signal / noise_mw));
        }

        let mut ue_count = alloc::vec![0usize; nc];
        let mut members: Vec<Vec<usize>> = alloc::vec![Vec::new(); nc];
        for (u, &s) in serving.iter().enumerate() {
            ue_count[s] += 1;
            members[s].push(u);
        }
        let demand_mbps = alloc::vec![self.demand; nu];
        let spectral_eff: Vec<f64> = sinr_lin
            .iter()
            .map(|&x| math::log2(1.0 + x).min(self.params.max_spectral_efficiency))
            .collect();
        let mut throughput_mbps = alloc::vec![0.0; nu];
        let mut served_traffic = alloc::vec![0.0; nc];
        let mut offered_traffic = alloc::vec![0.0; nc];
        let bw_mhz = self.params.bandwidth_hz / 1e6;
        for (c, ues) in members.iter().enumerate() {
            let served = share_resources(ues, &demand_mbps, &spectral_eff, bw_mhz, &mut throughput_mbps);
            served_traffic[c] = served;
            offered_traffic[c] = ues.iter().map(|&u| demand_mbps[u]).sum();
        }
        let congestion_rate = served_traffic
            .iter()
            .zip(&offered_traffic)
            .map(|(&s, &o)| if o > 0.0 { (1.0 - s / o).clamp(0.0, 1.0) } else { 0.0 })
            .collect();

        Ok(RadioSnapshot {
            num_cells: nc,
            positions: self.positions.clone(),
            rsrp,
            serving,
            sinr_db,
            snr_db,
            throughput_mbps,
            demand_mbps,
            ue_count,
            served_traffic,
            offered_traffic,
            congestion_rate,
        })
    }
}

/// Splits a cell's carrier among its UEs: each UE starts with an equal
/// share, and shares a UE does not need to meet its demand are handed on to
/// the remaining UEs (max-min fair in resources). Writes each UE's rate
/// into `throughput` and returns the cell's served traffic.
fn share_resources(
    ues: &[usize],
    demand: &[f64],
    spectral_eff: &[f64],
    bandwidth_mhz: f64,
    throughput: &mut [f64],
) -> f64 {
    // Fraction of the carrier each UE needs to meet its demand.
    let mut need: Vec<(f64, usize)> = ues
        .iter()
        .map(|&u| (demand[u] / (spectral_eff[u] * bandwidth_mhz), u))
        .collect();
    need.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut remaining = 1.0;
    let mut served = 0.0;
    for (i, &(frac, u)) in need.iter().enumerate() {
        let fair = remaining / (need.len() - i) as f64;
        if frac <= fair {
            throughput[u] = demand[u];
            remaining -= frac;
        } else {
            throughput[u] = fair * spectral_eff[u] * bandwidth_mhz;
            remaining -= fair;
        }
        served += throughput[u];
    }
    served
}

/// Index of the maximum; ties go to the lowest index.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// One-shot evaluation of `config`'s own tilts.
pub fn evaluate_snapshot(
    layout: &SiteLayout,
    config: &EpisodeConfig,
    drop: &UeDrop,
    params: &RadioParams,
) -> Result<RadioSnapshot> {
    LinkBudget::new(layout, config, drop, params)?.evaluate(&config.electrical_tilt)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boresight_gain_is_maximum() {
        assert_eq!(antenna_gain(0.0, 0.0), 15.0);
    }

    #[test]
    fn gain_at_horizontal_beamwidth_edge() {
        assert!((antenna_gain(65.0, 0.0) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn gain_is_even() {
        for &(h, v) in &[(10.0, 3.0), (90.0, -7.5), (179.0, 20.0)] {
            assert_eq!(antenna_gain(h, v), antenna_gain(-h, -v));
        }
    }

    #[test]
    fn gain_floor() {
        assert_eq!(antenna_gain(180.0, 90.0), 15.0 - 30.0);
    }

    #[test]
    fn path_loss_doubling() {
        let h = 25.0;
        let delta = path_loss(2400.0, 1.8, h) - path_loss(1200.0, 1.8, h);
        let expect = (44.9 - 6.55 * libm::log10(h)) * libm::log10(2.0);
        assert!((delta - expect).abs() < 1e-9);
    }

    #[test]
    fn path_loss_clamps_near_field() {
        assert_eq!(path_loss(0.0, 2.1, 30.0), path_loss(10.0, 2.1, 30.0));
    }

    #[test]
    fn per_resource_power_levels() {
        let p = RadioParams::default();
        let expect_tx = 46.0 - 10.0 * libm::log10(20e6 / 15e3);
        assert!((p.tx_power_per_resource_dbm() - expect_tx).abs() < 1e-12);
        let expect_n = -174.0 + 10.0 * libm::log10(15e3) + 9.0;
        assert!((p.noise_per_resource_dbm() - expect_n).abs() < 1e-12);
    }

    #[test]
    fn argmax_ties_to_lowest() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[2.0, 2.0]), 0);
    }
}
