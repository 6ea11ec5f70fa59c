//! Versioned JSON run configuration.
//!
//! A configuration file may list any subset of the keys printed by
//! `config --print-defaults`; missing keys keep their defaults. Keys named
//! `_doc` are documentation and are ignored when loading.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use retopt_core::expert::ExpertThresholds;
use retopt_core::kpi::KpiThresholds;
use retopt_core::marl::{episode_seed, CampaignSpec, Mode, Scenario, Variant};
use retopt_core::radiosim::RadioParams;
use retopt_core::rlcore::RlConfig;
use retopt_core::topology::ParameterRanges;

use crate::error::{CliError, Result};

pub const CONFIG_VERSION: u32 = 1;
const DOC_KEY: &str = "_doc";

/// Episode count and grid of one phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseConfig {
    /// Unscaled episode count.
    pub episodes: usize,
    pub rings: u32,
    pub optimized_rings: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub version: u32,
    pub seed: u64,
    pub scale: f64,
    /// Evaluation worker threads; 0 uses every available core.
    pub workers: usize,
    pub variants: Vec<Variant>,
    pub steps_per_episode: usize,
    pub pretrain: PhaseConfig,
    pub evaluate: PhaseConfig,
    pub ranges: ParameterRanges,
    pub radio: RadioParams,
    pub kpi: KpiThresholds,
    pub rl: RlConfig,
    pub expert: ExpertThresholds,
    pub freeze_heuristic: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = Scenario::training();
        let test = Scenario::test();
        RunConfig {
            version: CONFIG_VERSION,
            seed: 1,
            scale: 0.1,
            workers: 0,
            variants: Variant::ALL.to_vec(),
            steps_per_episode: train.steps_per_episode,
            pretrain: PhaseConfig {
                episodes: 500,
                rings: train.rings,
                optimized_rings: train.optimized_rings,
            },
            evaluate: PhaseConfig {
                episodes: 300,
                rings: test.rings,
                optimized_rings: test.optimized_rings,
            },
            ranges: train.ranges,
            radio: train.radio,
            kpi: train.kpi,
            rl: RlConfig::default(),
            expert: ExpertThresholds::default(),
            freeze_heuristic: false,
        }
    }
}

/// Salt separating evaluation episodes from pre-training episodes drawn
/// with the same seed.
const EVALUATE_SALT: u64 = 0xE7A1_0A7E_5EED_0001;

impl RunConfig {
    /// Reads a configuration file layered over the defaults.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let user: Value = serde_json::from_str(&text).map_err(|e| CliError::format("config", path, e))?;
        Self::from_value(user)
    }

    /// Layers a JSON document over the defaults, warning about unknown keys.
    pub fn from_value(mut user: Value) -> Result<Self> {
        if !user.is_object() {
            return Err(CliError::Config("configuration must be a JSON object".into()));
        }
        strip_docs(&mut user);
        match user.get("version") {
            Some(v) if v.as_u64() != Some(CONFIG_VERSION as u64) => {
                return Err(CliError::Config(format!(
                    "unsupported configuration version {v}; expected {CONFIG_VERSION}"
                )))
            }
            _ => {}
        }
        let mut merged = serde_json::to_value(RunConfig::default()).expect("defaults serialize");
        merge(&mut merged, user, "");
        let cfg: RunConfig =
            serde_json::from_value(merged).map_err(|e| CliError::Config(format!("invalid configuration: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(CliError::Config(format!("configuration version must be {CONFIG_VERSION}")));
        }
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(CliError::Config(format!("scale must be positive, got {}", self.scale)));
        }
        if self.variants.is_empty() {
            return Err(CliError::Config("no variants requested".into()));
        }
        let r = &self.radio;
        let positive = [
            r.bandwidth_hz,
            r.resource_bandwidth_hz,
            r.per_ue_demand_mbps,
            r.max_spectral_efficiency,
            r.antenna.horizontal_beamwidth_deg,
            r.antenna.vertical_beamwidth_deg,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(CliError::Config(
                "bandwidths, demand, spectral efficiency and beamwidths must be positive".into(),
            ));
        }
        for mode in [Mode::Pretrain, Mode::Evaluate] {
            self.scenario(mode).validate()?;
        }
        Ok(())
    }

    /// Episode count of a phase after scaling; at least one.
    pub fn scaled_episodes(&self, mode: Mode) -> usize {
        let base = match mode {
            Mode::Pretrain => self.pretrain.episodes,
            Mode::Evaluate => self.evaluate.episodes,
        };
        ((base as f64 * self.scale).round() as usize).max(1)
    }

    pub fn scenario(&self, mode: Mode) -> Scenario {
        let phase = match mode {
            Mode::Pretrain => &self.pretrain,
            Mode::Evaluate => &self.evaluate,
        };
        Scenario {
            rings: phase.rings,
            optimized_rings: phase.optimized_rings,
            steps_per_episode: self.steps_per_episode,
            ranges: self.ranges.clone(),
            radio: self.radio,
            kpi: self.kpi,
        }
    }

    /// Campaign seed of a phase. Evaluation never reuses pre-training
    /// episodes even when both phases use the same grid.
    pub fn campaign_seed(&self, mode: Mode) -> u64 {
        match mode {
            Mode::Pretrain => self.seed,
            Mode::Evaluate => episode_seed(self.seed ^ EVALUATE_SALT, 0),
        }
    }

    pub fn campaign(&self, variant: Variant, mode: Mode) -> CampaignSpec {
        CampaignSpec {
            variant,
            mode,
            episodes: self.scaled_episodes(mode),
            seed: self.campaign_seed(mode),
            scenario: self.scenario(mode),
            rl: self.rl.clone(),
            expert: self.expert,
            freeze_heuristic: self.freeze_heuristic && variant == Variant::RlinPlus,
        }
    }

    /// RL variants whose networks must be pre-trained for the requested
    /// variants, in canonical order.
    pub fn pretrained_variants(&self) -> Vec<Variant> {
        Variant::ALL
            .into_iter()
            .filter(|v| self.variants.iter().any(|r| r.checkpoint_variant() == Some(*v)))
            .collect()
    }

    /// Requested variants in canonical order without duplicates.
    pub fn ordered_variants(&self) -> Vec<Variant> {
        Variant::ALL.into_iter().filter(|v| self.variants.contains(v)).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configuration serializes")
    }
}

fn strip_docs(v: &mut Value) {
    match v {
        Value::Object(map) => {
            map.remove(DOC_KEY);
            map.values_mut().for_each(strip_docs);
        }
        Value::Array(items) => items.iter_mut().for_each(strip_docs),
        _ => {}
    }
}

fn merge(base: &mut Value, user: Value, path: &str) {
    match (base, user) {
        (Value::Object(b), Value::Object(u)) => {
            for (k, v) in u {
                let child = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v, &child),
                    None => {
                        log::warn!("ignoring unknown configuration key `{child}`");
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Documentation of every configuration key, by dotted path.
const DOCS: &[(&str, &str)] = &[
    ("version", "configuration schema version"),
    ("seed", "master seed; every campaign and episode seed derives from it"),
    ("scale", "multiplier on both episode counts; 1.0 reproduces 500 pre-training and 300 test episodes"),
    ("workers", "evaluation worker threads; 0 uses every available core; results do not depend on it"),
    ("variants", "variants to run: ES, RLEN, RLIN, RLIN+"),
    ("steps_per_episode", "tilt-change steps per episode"),
    ("freeze_heuristic", "RLIN+ only: stop learning from cells that keep or oscillate"),
    ("pretrain", "pre-training phase"),
    ("pretrain.episodes", "episodes before scaling"),
    ("pretrain.rings", "rings of sites around the centre site (2 gives 19 sites)"),
    ("pretrain.optimized_rings", "innermost rings whose cells are optimized (1 gives 21 cells)"),
    ("evaluate", "evaluation phase"),
    ("evaluate.episodes", "episodes before scaling"),
    ("evaluate.rings", "rings of sites around the centre site (5 gives 91 sites)"),
    ("evaluate.optimized_rings", "innermost rings whose cells are optimized (4 gives 183 cells)"),
    ("ranges", "per-episode random network parameters; integer-stepped uniform U(min, max)"),
    ("ranges.optimized_electrical_tilt", "initial electrical tilt of optimized cells, degrees"),
    ("ranges.fixed_electrical_tilt", "electrical tilt of the other cells, degrees"),
    ("ranges.mechanical_tilt", "mechanical tilt, degrees"),
    ("ranges.antenna_height", "antenna height, metres"),
    ("ranges.inter_site_distance", "inter-site distance, metres, one per episode"),
    ("ranges.carrier_frequencies", "candidate carriers in GHz; one is picked uniformly per episode"),
    ("ranges.offered_traffic", "mean offered traffic per cell, Mbps"),
    ("radio", "link budget and capacity model"),
    ("radio.total_tx_power_dbm", "cell transmit power over the whole band"),
    ("radio.bandwidth_hz", "system bandwidth"),
    ("radio.resource_bandwidth_hz", "resource element bandwidth; RSRP and SINR are per element"),
    ("radio.noise_density_dbm_per_hz", "thermal noise density"),
    ("radio.noise_figure_db", "UE noise figure"),
    ("radio.ue_height_m", "UE antenna height"),
    ("radio.per_ue_demand_mbps", "demand of each UE; UE count = offered traffic / demand"),
    ("radio.max_spectral_efficiency", "cap on log2(1 + SINR), bit/s/Hz"),
    ("radio.antenna", "sector antenna pattern"),
    ("radio.antenna.max_gain_dbi", "boresight gain"),
    ("radio.antenna.horizontal_beamwidth_deg", "horizontal 3 dB beamwidth"),
    ("radio.antenna.vertical_beamwidth_deg", "vertical 3 dB beamwidth"),
    ("radio.antenna.front_to_back_db", "cap on horizontal attenuation"),
    ("radio.antenna.side_lobe_db", "cap on vertical attenuation"),
    ("radio.antenna.max_attenuation_db", "cap on combined attenuation"),
    ("kpi", "KPI thresholds"),
    ("kpi.good_coverage_dbm", "minimum RSRP for good coverage"),
    ("kpi.good_quality_db", "minimum SINR for good quality"),
    ("kpi.overlap_window_db", "a neighbour within this window of the server is reported"),
    ("kpi.high_overlap_rsrp_dbm", "minimum serving RSRP for high-level overlap"),
    ("kpi.high_overlap_min_cells", "reported neighbours needed for high-level overlap"),
    ("kpi.overshoot_isd_factor", "overshooting distance as a multiple of the inter-site distance"),
    ("kpi.interference_window_db", "second-best server within this window counts as interfered"),
    ("kpi.neighbor_count", "neighbours in the overlap-weighted aggregates"),
    ("rl", "shared Q-network training"),
    ("rl.architecture", "layer widths from the 11 state features to the 3 actions"),
    ("rl.adam", "Adam optimizer"),
    ("rl.adam.learning_rate", "step size"),
    ("rl.adam.beta1", "first moment decay"),
    ("rl.adam.beta2", "second moment decay"),
    ("rl.adam.epsilon", "denominator guard"),
    ("rl.batch_size", "experiences per gradient step"),
    ("rl.replay_capacity", "replay buffer size; oldest experiences are evicted first"),
    ("rl.reward_clip", "rewards are clipped to +/- this before storage"),
    ("rl.epsilon", "exploration during pre-training; evaluation is greedy"),
    ("rl.epsilon.start", "initial exploration rate"),
    ("rl.epsilon.end", "final exploration rate"),
    ("rl.epsilon.decay_fraction", "fraction of pre-training steps over which the rate decays linearly"),
    ("rl.train_steps_per_env_step", "gradient steps after each environment step"),
    ("expert", "rule-based baseline thresholds"),
    ("expert.bad_coverage_high", "uptilt when the bad-coverage ratio exceeds this"),
    ("expert.overshooting_high", "downtilt when the overshooting ratio exceeds this"),
    ("expert.overlap_high_thr", "downtilt when high overlap or interference exceeds this"),
    ("expert.congestion_high", "uptilt when the congestion rate exceeds this"),
];

/// Default configuration with a `_doc` object next to the documented keys
/// of every section.
pub fn annotated_defaults() -> Value {
    let mut v = serde_json::to_value(RunConfig::default()).expect("defaults serialize");
    annotate(&mut v, "");
    v
}

fn annotate(v: &mut Value, path: &str) {
    let Value::Object(map) = v else { return };
    let mut docs = Map::new();
    for (k, child) in map.iter_mut() {
        let p = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
        if let Some((_, d)) = DOCS.iter().find(|(key, _)| *key == p) {
            docs.insert(k.clone(), Value::String((*d).to_string()));
        }
        annotate(child, &p);
    }
    if !docs.is_empty() {
        map.insert(DOC_KEY.to_string(), Value::Object(docs));
    }
}

pub fn print_defaults() -> String {
    serde_json::to_string_pretty(&annotated_defaults()).expect("defaults serialize")
}
