use serde::{Deserialize, Serialize};

use crate::env::MdpState;
use crate::error::{Error, Result};
use crate::grid::SystemState;

/// Per-feature affine standardization of a single [`SystemState`] feature
/// vector, applied slot by slot to the observation window. Padding slots
/// are encoded as zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

const MIN_STD: f64 = 1e-9;

impl Normalizer {
    pub fn identity(width: usize) -> Self {
        Self {
            mean: vec![0.0; width],
            scale: vec![1.0; width],
        }
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    /// Fits mean and standard deviation per feature. Features with no spread
    /// keep unit scale so they map to zero.
    pub fn fit(states: &[SystemState]) -> Result<Self> {
        let first = states
            .first()
            .ok_or_else(|| Error::Config("normalizer needs at least one state".into()))?;
        let mut buf = Vec::new();
        first.write_features(&mut buf);
        let width = buf.len();
        let mut sum = vec![0.0; width];
        let mut sum_sq = vec![0.0; width];
        for s in states {
            buf.clear();
            s.write_features(&mut buf);
            if buf.len() != width {
                return Err(Error::DimensionMismatch("states of different sizes".into()));
            }
            for (j, &v) in buf.iter().enumerate() {
                sum[j] += v;
                sum_sq[j] += v * v;
            }
        }
        let n = states.len() as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let scale = sum_sq
            .iter()
            .zip(&mean)
            .map(|(sq, m)| {
                let var = (sq / n - m * m).max(0.0);
                let std = var.sqrt();
                if std > MIN_STD {
                    std
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, scale })
    }

    pub fn normalize_into(&self, state: &SystemState, out: &mut Vec<f64>) {
        let start = out.len();
        state.write_features(out);
        for (j, v) in out[start..].iter_mut().enumerate() {
            *v = (*v - self.mean[j]) / self.scale[j];
        }
    }

    /// Flattened network input of width `kappa * width`, oldest slot first.
    pub fn encode(&self, window: &MdpState) -> Vec<f64> {
        let mut out = Vec::with_capacity(window.kappa() * self.width());
        for (i, s) in window.states().enumerate() {
            if window.is_padding(i) {
                out.extend(std::iter::repeat_n(0.0, self.width()));
            } else {
                self.normalize_into(s, &mut out);
            }
        }
        out
    }
}
