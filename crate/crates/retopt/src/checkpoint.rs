//! Versioned JSON checkpoint holding one pre-trained network per variant.

use std::path::Path;

use serde::{Deserialize, Serialize};

use retopt_core::marl::Variant;
use retopt_core::rlcore::{AdamConfig, Dense, QNetwork};

use crate::error::{CliError, Result};

pub const CHECKPOINT_FORMAT: &str = "retopt-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Dense layer with row-major `[outputs][inputs]` weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerDoc {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkDoc {
    pub architecture: Vec<usize>,
    pub adam: AdamConfig,
    pub train_steps: u64,
    pub layers: Vec<LayerDoc>,
    pub first_moment: Vec<LayerDoc>,
    pub second_moment: Vec<LayerDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointEntry {
    pub variant: Variant,
    pub pretrain_seed: u64,
    pub episodes: usize,
    pub network: NetworkDoc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub networks: Vec<CheckpointEntry>,
}

fn layer_doc(l: &Dense) -> LayerDoc {
    LayerDoc {
        inputs: l.inputs,
        outputs: l.outputs,
        weights: l.weights.clone(),
        biases: l.biases.clone(),
    }
}

fn dense(d: &LayerDoc) -> std::result::Result<Dense, String> {
    if d.weights.len() != d.inputs * d.outputs || d.biases.len() != d.outputs {
        return Err(format!(
            "layer {}x{} holds {} weights and {} biases",
            d.outputs,
            d.inputs,
            d.weights.len(),
            d.biases.len()
        ));
    }
    Ok(Dense {
        inputs: d.inputs,
        outputs: d.outputs,
        weights: d.weights.clone(),
        biases: d.biases.clone(),
    })
}

impl NetworkDoc {
    pub fn from_network(net: &QNetwork) -> Self {
        NetworkDoc {
            architecture: net.architecture(),
            adam: *net.adam(),
            train_steps: net.train_step_count(),
            layers: net.layers().iter().map(layer_doc).collect(),
            first_moment: net.first_moment().iter().map(layer_doc).collect(),
            second_moment: net.second_moment().iter().map(layer_doc).collect(),
        }
    }

    pub fn to_network(&self) -> std::result::Result<QNetwork, String> {
        let convert = |ls: &[LayerDoc]| ls.iter().map(dense).collect::<std::result::Result<Vec<_>, _>>();
        let net = QNetwork::from_parts(
            convert(&self.layers)?,
            convert(&self.first_moment)?,
            convert(&self.second_moment)?,
            self.train_steps,
            self.adam,
        )
        .map_err(|e| e.to_string())?;
        if net.architecture() != self.architecture {
            return Err(format!(
                "declared architecture {:?} does not match layers {:?}",
                self.architecture,
                net.architecture()
            ));
        }
        Ok(net)
    }
}

impl Checkpoint {
    pub fn new() -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            networks: Vec::new(),
        }
    }

    pub fn insert(&mut self, variant: Variant, pretrain_seed: u64, episodes: usize, net: &QNetwork) {
        self.networks.retain(|e| e.variant != variant);
        self.networks.push(CheckpointEntry {
            variant,
            pretrain_seed,
            episodes,
            network: NetworkDoc::from_network(net),
        });
    }

    pub fn variants(&self) -> Vec<Variant> {
        self.networks.iter().map(|e| e.variant).collect()
    }

    pub fn network(&self, variant: Variant) -> Option<QNetwork> {
        self.networks
            .iter()
            .find(|e| e.variant == variant)
            .map(|e| e.network.to_network().expect("validated on load"))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut bytes = serde_json::to_vec(self).expect("checkpoint serializes");
        bytes.push(b'\n');
        bytes
    }

    /// Parses and validates a checkpoint; `path` only labels errors.
    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |msg: String| CliError::format("checkpoint", path, msg);
        let ck: Checkpoint = serde_json::from_slice(bytes).map_err(|e| bad(e.to_string()))?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(bad(format!("format is `{}`, expected `{CHECKPOINT_FORMAT}`", ck.format)));
        }
        if ck.version != CHECKPOINT_VERSION {
            return Err(bad(format!("version {} is not supported (expected {CHECKPOINT_VERSION})", ck.version)));
        }
        for e in &ck.networks {
            e.network
                .to_network()
                .map_err(|m| bad(format!("{} network: {m}", e.variant.as_str())))?;
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| CliError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

impl Default for Checkpoint {
    fn default() -> Self {
        Self::new()
    }
}
