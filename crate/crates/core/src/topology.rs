//! Regular hexagonal multi-ring layouts with tri-sector sites, and the
//! per-episode random network configuration.
//!
//! Sites use axial hex coordinates `(q, r)` mapped to the plane as
//! `x = isd * (q + r / 2)`, `y = isd * r * sqrt(3) / 2`, so the grid is made of
//! flat rows and the outer ring's corner sites sit at 0°, 60°, … 300°.
//! Azimuths are measured in degrees counter-clockwise from the +x axis.

use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::math;
use crate::CellId;

/// Sector azimuths of the three cells on every site.
pub const SECTOR_AZIMUTHS: [f64; 3] = [0.0, 120.0, 240.0];

const AXIAL_DIRECTIONS: [(i32, i32); 6] = [(1, 0), (1, -1), (0, -1), (-1, 0), (-1, 1), (0, 1)];

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Site {
    pub x: f64,
    pub y: f64,
    /// Hex distance from the centre site.
    pub ring: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Cell {
    pub site: usize,
    pub azimuth: f64,
}

/// Site and cell geometry of a hexagonal grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteLayout {
    pub sites: Vec<Site>,
    pub cells: Vec<Cell>,
    pub rings: u32,
    pub inter_site_distance: f64,
}

/// Number of sites in a grid with `rings` rings around the centre site.
pub fn site_count(rings: u32) -> usize {
    let r = rings as usize;
    1 + 3 * r * (r + 1)
}

/// Builds a hexagonal grid centred at the origin. Sites are ordered ring by
/// ring; cell `3 * s + k` is sector `k` of site `s`.
pub fn generate_hex_grid(rings: u32, isd: f64) -> SiteLayout {
    let mut axial = Vec::with_capacity(site_count(rings));
    axial.push((0i32, 0i32, 0u32));
    for k in 1..=rings as i32 {
        // Start at direction 4 scaled by k, then walk the six sides.
        let (dq, dr) = AXIAL_DIRECTIONS[4];
        let (mut q, mut r) = (dq * k, dr * k);
        for &(sq, sr) in &AXIAL_DIRECTIONS {
            for _ in 0..k {
                axial.push((q, r, k as u32));
                q += sq;
                r += sr;
            }
        }
    }

    let half_sqrt3 = math::sqrt(3.0) / 2.0;
    let sites: Vec<Site> = axial
        .into_iter()
        .map(|(q, r, ring)| Site {
            x: isd * (q as f64 + r as f64 / 2.0),
            y: isd * r as f64 * half_sqrt3,
            ring,
        })
        .collect();
    let cells = (0..sites.len())
        .flat_map(|site| SECTOR_AZIMUTHS.iter().map(move |&azimuth| Cell { site, azimuth }))
        .collect();

    SiteLayout {
        sites,
        cells,
        rings,
        inter_site_distance: isd,
    }
}

impl SiteLayout {
    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn site_of(&self, cell: CellId) -> &Site {
        &self.sites[self.cells[cell].site]
    }

    /// Same grid with a different inter-site distance.
    pub fn rescaled(&self, isd: f64) -> SiteLayout {
        generate_hex_grid(self.rings, isd)
    }

    /// Apothem of the hexagonal coverage region: the hexagon through the
    /// outermost sites grown by half an inter-site distance.
    pub fn region_apothem(&self) -> f64 {
        let isd = self.inter_site_distance;
        self.rings as f64 * isd * math::sqrt(3.0) / 2.0 + isd / 2.0
    }

    /// Whether `(x, y)` lies inside the coverage region (boundary included).
    pub fn region_contains(&self, x: f64, y: f64) -> bool {
        let a = self.region_apothem();
        // Edge normals of a hexagon with vertices at 0°, 60°, …
        [30.0, 90.0, 150.0]
            .iter()
            .all(|&deg| (x * math::cos_deg(deg) + y * math::sin_deg(deg)).abs() <= a)
    }

    /// Half-width and half-height of the region's bounding box.
    pub fn region_half_extent(&self) -> (f64, f64) {
        let a = self.region_apothem();
        (a * 2.0 / math::sqrt(3.0), a)
    }

    /// Mean distance from the cell's site to the `k` closest other sites.
    /// Zero when the layout has a single site.
    pub fn mean_distance_to_closest_sites(&self, cell: CellId, k: usize) -> f64 {
        let home = self.site_of(cell);
        let own = self.cells[cell].site;
        let mut d: Vec<f64> = self
            .sites
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != own)
            .map(|(_, s)| math::hypot(s.x - home.x, s.y - home.y))
            .collect();
        if d.is_empty() {
            return 0.0;
        }
        d.sort_by(f64::total_cmp);
        let n = k.min(d.len());
        d[..n].iter().sum::<f64>() / n as f64
    }
}

/// Cells of every site within `optimized_rings` of the centre. At least one
/// ring must remain outside as a fixed-tilt interference buffer.
pub fn optimized_cells(layout: &SiteLayout, optimized_rings: u32) -> Result<Vec<CellId>> {
    if optimized_rings >= layout.rings {
        return Err(Error::Config(alloc::format!(
            "optimized_rings ({optimized_rings}) must be smaller than the layout's rings ({})",
            layout.rings
        )));
    }
    Ok((0..layout.num_cells())
        .filter(|&c| layout.site_of(c).ring <= optimized_rings)
        .collect())
}

/// Closed integer-stepped uniform range `U(min, max)` with step 1.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StepRange {
    pub min: f64,
    pub max: f64,
}

impl StepRange {
    pub const fn new(min: f64, max: f64) -> Self {
        StepRange { min, max }
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite()) || self.min > self.max {
            return Err(Error::Config(alloc::format!(
                "malformed range for {name}: [{}, {}]",
                self.min,
                self.max
            )));
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let steps = math::floor(self.max - self.min) as u64;
        self.min + rng.gen_range(0..=steps) as f64
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.min && v <= self.max
    }
}

/// Distributions of the randomly reset network parameters.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ParameterRanges {
    pub optimized_electrical_tilt: StepRange,
    pub fixed_electrical_tilt: StepRange,
    pub mechanical_tilt: StepRange,
    pub antenna_height: StepRange,
    pub inter_site_distance: StepRange,
    /// Candidate carrier frequencies in GHz; one is picked per episode.
    pub carrier_frequencies: Vec<f64>,
    /// Mean offered traffic per cell in Mbps.
    pub offered_traffic: StepRange,
}

impl Default for ParameterRanges {
    fn default() -> Self {
        ParameterRanges {
            optimized_electrical_tilt: StepRange::new(0.0, 15.0),
            fixed_electrical_tilt: StepRange::new(4.0, 6.0),
            mechanical_tilt: StepRange::new(0.0, 4.0),
            antenna_height: StepRange::new(16.0, 30.0),
            inter_site_distance: StepRange::new(1000.0, 2500.0),
            carrier_frequencies: alloc::vec![0.7, 1.8, 2.1, 2.6],
            offered_traffic: StepRange::new(4.0, 11.0),
        }
    }
}

impl ParameterRanges {
    pub fn validate(&self) -> Result<()> {
        self.optimized_electrical_tilt.validate("optimized_electrical_tilt")?;
        self.fixed_electrical_tilt.validate("fixed_electrical_tilt")?;
        self.mechanical_tilt.validate("mechanical_tilt")?;
        self.antenna_height.validate("antenna_height")?;
        self.inter_site_distance.validate("inter_site_distance")?;
        self.offered_traffic.validate("offered_traffic")?;
        if self.carrier_frequencies.is_empty()
            || self.carrier_frequencies.iter().any(|f| !(f.is_finite() && *f > 0.0))
        {
            return Err(Error::Config("carrier_frequencies must be non-empty and positive".into()));
        }
        if self.inter_site_distance.min <= 0.0 || self.antenna_height.min <= 0.0 {
            return Err(Error::Config("distances and heights must be positive".into()));
        }
        Ok(())
    }
}

/// Network configuration of one episode. Per-cell vectors are indexed by
/// [`CellId`].
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpisodeConfig {
    pub electrical_tilt: Vec<f64>,
    pub mechanical_tilt: Vec<f64>,
    pub antenna_height: Vec<f64>,
    pub carrier_frequency: f64,
    pub inter_site_distance: f64,
    pub offered_traffic: Vec<f64>,
    pub optimized_cells: Vec<CellId>,
    pub rng_seed: u64,
}

impl EpisodeConfig {
    pub fn is_optimized(&self, cell: CellId) -> bool {
        self.optimized_cells.binary_search(&cell).is_ok()
    }
}

/// Draws a fresh episode configuration. The network-wide values (inter-site
/// distance, carrier) are drawn first, then per-cell values independently.
pub fn sample_episode_config<R: Rng + ?Sized>(
    layout: &SiteLayout,
    optimized: &[CellId],
    rng: &mut R,
    ranges: &ParameterRanges,
    rng_seed: u64,
) -> Result<EpisodeConfig> {
    ranges.validate()?;
    let n = layout.num_cells();
    let mut optimized_cells = optimized.to_vec();
    optimized_cells.sort_unstable();
    optimized_cells.dedup();
    if optimized_cells.last().is_some_and(|&c| c >= n) {
        return Err(Error::Config("optimized cell id out of range".into()));
    }

    let inter_site_distance = ranges.inter_site_distance.sample(rng);
    let freq_idx = rng.gen_range(0..ranges.carrier_frequencies.len());
    let carrier_frequency = ranges.carrier_frequencies[freq_idx];

    let mut electrical_tilt = Vec::with_capacity(n);
    let mut mechanical_tilt = Vec::with_capacity(n);
    let mut antenna_height = Vec::with_capacity(n);
    let mut offered_traffic = Vec::with_capacity(n);
    for c in 0..n {
        let tilt_range = if optimized_cells.binary_search(&c).is_ok() {
            ranges.optimized_electrical_tilt
        } else {
            ranges.fixed_electrical_tilt
        };
        electrical_tilt.push(tilt_range.sample(rng));
        mechanical_tilt.push(ranges.mechanical_tilt.sample(rng));
        antenna_height.push(ranges.antenna_height.sample(rng));
        offered_traffic.push(ranges.offered_traffic.sample(rng));
    }

    Ok(EpisodeConfig {
        electrical_tilt,
        mechanical_tilt,
        antenna_height,
        carrier_frequency,
        inter_site_distance,
        offered_traffic,
        optimized_cells,
        rng_seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn full_size_grids_have_expected_counts() {
        let train = generate_hex_grid(2, 1500.0);
        assert_eq!(train.sites.len(), 19);
        assert_eq!(train.num_cells(), 57);
        assert_eq!(optimized_cells(&train, 1).unwrap().len(), 21);

        let test = generate_hex_grid(5, 2000.0);
        assert_eq!(test.sites.len(), 91);
        assert_eq!(test.num_cells(), 273);
        assert_eq!(optimized_cells(&test, 4).unwrap().len(), 183);
    }

    #[test]
    fn single_site_grid() {
        let g = generate_hex_grid(0, 1000.0);
        assert_eq!(g.sites.len(), 1);
        assert_eq!(g.num_cells(), 3);
        assert_eq!(g.mean_distance_to_closest_sites(0, 5), 0.0);
    }

    #[test]
    fn optimized_rings_zero_is_centre_site() {
        let g = generate_hex_grid(3, 1000.0);
        assert_eq!(optimized_cells(&g, 0).unwrap(), alloc::vec![0, 1, 2]);
    }

    #[test]
    fn optimized_rings_must_leave_buffer() {
        let g = generate_hex_grid(2, 1000.0);
        assert!(matches!(optimized_cells(&g, 2), Err(Error::Config(_))));
    }

    #[test]
    fn site_count_formula_and_spacing() {
        for r in 0..=8 {
            let g = generate_hex_grid(r, 1234.5);
            assert_eq!(g.sites.len(), site_count(r));
            assert_eq!(g.num_cells(), 3 * g.sites.len());
            if g.sites.len() > 1 {
                let mut min = f64::INFINITY;
                for (i, a) in g.sites.iter().enumerate() {
                    for b in &g.sites[i + 1..] {
                        min = min.min(math::hypot(a.x - b.x, a.y - b.y));
                    }
                }
                assert!((min - 1234.5).abs() <= 1e-6 * 1234.5, "rings {r}: {min}");
            }
        }
    }

    #[test]
    fn every_site_inside_region() {
        let g = generate_hex_grid(4, 1700.0);
        assert!(g.sites.iter().all(|s| g.region_contains(s.x, s.y)));
        // Margin of half an ISD beyond the outermost corner site.
        assert!(g.region_contains(4.0 * 1700.0 + 0.49 * 1700.0 * 2.0 / math::sqrt(3.0), 0.0));
    }

    #[test]
    fn degenerate_ranges_collapse() {
        let g = generate_hex_grid(1, 1000.0);
        let four = StepRange::new(4.0, 4.0);
        let ranges = ParameterRanges {
            optimized_electrical_tilt: four,
            fixed_electrical_tilt: four,
            mechanical_tilt: four,
            antenna_height: four,
            inter_site_distance: four,
            carrier_frequencies: alloc::vec![4.0],
            offered_traffic: four,
        };
        let mut rng = crate::SimRng::seed_from_u64(9);
        let cfg = sample_episode_config(&g, &[0, 1, 2], &mut rng, &ranges, 9).unwrap();
        for v in cfg
            .electrical_tilt
            .iter()
            .chain(&cfg.mechanical_tilt)
            .chain(&cfg.antenna_height)
            .chain(&cfg.offered_traffic)
        {
            assert_eq!(*v, 4.0);
        }
        assert_eq!(cfg.inter_site_distance, 4.0);
        assert_eq!(cfg.carrier_frequency, 4.0);
    }

    #[test]
    fn malformed_range_rejected() {
        let g = generate_hex_grid(1, 1000.0);
        let mut ranges = ParameterRanges::default();
        ranges.antenna_height = StepRange::new(30.0, 16.0);
        let mut rng = crate::SimRng::seed_from_u64(1);
        assert!(matches!(
            sample_episode_config(&g, &[], &mut rng, &ranges, 1),
            Err(Error::Config(_))
        ));
    }
}
