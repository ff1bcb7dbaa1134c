use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::network::{DuelingNetwork, NetworkDims, TENSOR_NAMES};
use super::normalize::Normalizer;
use crate::env::MdpState;
use crate::error::{Error, Result};
use crate::grid::{GridModel, SystemState};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub name: String,
    /// `[rows, cols]`.
    pub shape: [usize; 2],
    /// Row-major values.
    pub data: Vec<f64>,
}

/// Serializable trained policy: network weights plus everything needed to
/// rebuild its input encoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub n_lines: usize,
    pub n_gens: usize,
    pub n_loads: usize,
    pub kappa: usize,
    pub dims: NetworkDims,
    pub normalizer: Normalizer,
    pub layers: Vec<LayerRecord>,
}

/// A Q-network bound to its input normalizer and window length.
#[derive(Debug, Clone, PartialEq)]
pub struct QModel {
    pub net: DuelingNetwork,
    pub normalizer: Normalizer,
    pub kappa: usize,
}

impl QModel {
    pub fn new(net: DuelingNetwork, normalizer: Normalizer, kappa: usize) -> Result<Self> {
        if net.dims().n_inputs != normalizer.width() * kappa {
            return Err(Error::DimensionMismatch(format!(
                "network expects {} inputs, normalizer and window give {}",
                net.dims().n_inputs,
                normalizer.width() * kappa
            )));
        }
        Ok(Self { net, normalizer, kappa })
    }

    pub fn encode(&self, window: &MdpState) -> Vec<f64> {
        self.normalizer.encode(window)
    }

    pub fn q_values(&self, window: &MdpState) -> Vec<f64> {
        self.net.forward(&self.encode(window))
    }

    /// Fails with [`Error::CheckpointMismatch`] if the model was not built for `grid`.
    pub fn check_grid(&self, grid: &GridModel, kappa: usize) -> Result<()> {
        let width = SystemState::feature_width(grid.generators().len(), grid.loads().len(), grid.n_lines());
        let dims = self.net.dims();
        if self.normalizer.width() != width || dims.n_actions != grid.n_actions() || self.kappa != kappa {
            return Err(Error::CheckpointMismatch(format!(
                "model has {} features x {} slots and {} actions; grid needs {} x {} and {}",
                self.normalizer.width(),
                self.kappa,
                dims.n_actions,
                width,
                kappa,
                grid.n_actions()
            )));
        }
        Ok(())
    }

    pub fn to_checkpoint(&self, grid: &GridModel) -> Checkpoint {
        let layers = self
            .net
            .tensors()
            .iter()
            .zip(TENSOR_NAMES)
            .map(|(t, name)| LayerRecord {
                name: name.to_string(),
                shape: [t.nrows(), t.ncols()],
                data: t.transpose().as_slice().to_vec(),
            })
            .collect();
        Checkpoint {
            version: CHECKPOINT_VERSION,
            n_lines: grid.n_lines(),
            n_gens: grid.generators().len(),
            n_loads: grid.loads().len(),
            kappa: self.kappa,
            dims: self.net.dims(),
            normalizer: self.normalizer.clone(),
            layers,
        }
    }
}

impl Checkpoint {
    pub fn to_model(&self) -> Result<QModel> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::CheckpointMismatch(format!("unsupported version {}", self.version)));
        }
        let mut tensors = Vec::with_capacity(self.layers.len());
        for (layer, expected) in self.layers.iter().zip(TENSOR_NAMES) {
            if layer.name != expected {
                return Err(Error::CheckpointMismatch(format!(
                    "layer {} found where {} was expected",
                    layer.name, expected
                )));
            }
            let [r, c] = layer.shape;
            if layer.data.len() != r * c {
                return Err(Error::CheckpointMismatch(format!("layer {} has wrong length", layer.name)));
            }
            tensors.push(DMatrix::from_row_slice(r, c, &layer.data));
        }
        let net = DuelingNetwork::from_tensors(self.dims, tensors)?;
        QModel::new(net, self.normalizer.clone(), self.kappa)
            .map_err(|e| Error::CheckpointMismatch(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self).expect("checkpoint serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }
}

/// Loads a checkpoint and checks it against `grid` and `kappa`.
pub fn load_model(path: impl AsRef<Path>, grid: &GridModel, kappa: usize) -> Result<QModel> {
    let model = Checkpoint::load(path)?.to_model()?;
    model.check_grid(grid, kappa)?;
    Ok(model)
}
