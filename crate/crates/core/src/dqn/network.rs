use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Layer widths of a dueling network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkDims {
    pub n_inputs: usize,
    pub hidden: usize,
    pub n_actions: usize,
}

/// Two tanh hidden layers feeding a tanh advantage head and a linear value
/// head, combined as `Q = V + A - mean(A)`.
///
/// Weight matrices are `out x in`; biases are `out x 1` so that all eight
/// parameter tensors share one type.
#[derive(Debug, Clone, PartialEq)]
pub struct DuelingNetwork {
    dims: NetworkDims,
    tensors: [DMatrix<f64>; 8],
}

const W1: usize = 0;
const B1: usize = 1;
const W2: usize = 2;
const B2: usize = 3;
const WA: usize = 4;
const BA: usize = 5;
const WV: usize = 6;
const BV: usize = 7;

/// Names of the parameter tensors in storage order.
pub const TENSOR_NAMES: [&str; 8] = [
    "hidden1.weight",
    "hidden1.bias",
    "hidden2.weight",
    "hidden2.bias",
    "advantage.weight",
    "advantage.bias",
    "value.weight",
    "value.bias",
];

/// Intermediate activations of a batch forward pass, one column per sample.
struct Activations {
    h1: DMatrix<f64>,
    h2: DMatrix<f64>,
    adv: DMatrix<f64>,
    q: DMatrix<f64>,
}

impl DuelingNetwork {
    pub fn zeros(dims: NetworkDims) -> Self {
        let tensors = Self::shapes_for(dims).map(|(r, c)| DMatrix::zeros(r, c));
        Self { dims, tensors }
    }

    /// Weights uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, biases zero.
    pub fn new<R: Rng + ?Sized>(dims: NetworkDims, rng: &mut R) -> Self {
        let mut net = Self::zeros(dims);
        for i in [W1, W2, WA, WV] {
            let t = &mut net.tensors[i];
            let bound = 1.0 / (t.ncols() as f64).sqrt();
            for v in t.iter_mut() {
                *v = rng.random_range(-bound..bound);
            }
        }
        net
    }

    fn shapes_for(d: NetworkDims) -> [(usize, usize); 8] {
        [
            (d.hidden, d.n_inputs),
            (d.hidden, 1),
            (d.hidden, d.hidden),
            (d.hidden, 1),
            (d.n_actions, d.hidden),
            (d.n_actions, 1),
            (1, d.hidden),
            (1, 1),
        ]
    }

    pub fn dims(&self) -> NetworkDims {
        self.dims
    }

    pub fn tensors(&self) -> &[DMatrix<f64>; 8] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [DMatrix<f64>; 8] {
        &mut self.tensors
    }

    /// Builds a network from tensors in [`TENSOR_NAMES`] order.
    pub fn from_tensors(dims: NetworkDims, tensors: Vec<DMatrix<f64>>) -> Result<Self> {
        let shapes = Self::shapes_for(dims);
        if tensors.len() != 8 {
            return Err(Error::CheckpointMismatch(format!("expected 8 tensors, got {}", tensors.len())));
        }
        for (i, t) in tensors.iter().enumerate() {
            if t.shape() != shapes[i] {
                return Err(Error::CheckpointMismatch(format!(
                    "{} has shape {:?}, expected {:?}",
                    TENSOR_NAMES[i],
                    t.shape(),
                    shapes[i]
                )));
            }
        }
        let tensors: [DMatrix<f64>; 8] = tensors.try_into().expect("length checked");
        Ok(Self { dims, tensors })
    }

    pub fn n_params(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors.iter().flat_map(|t| t.iter().copied()).collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        let mut it = flat.iter();
        for t in self.tensors.iter_mut() {
            for v in t.iter_mut() {
                *v = *it.next().expect("flat parameter vector too short");
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    fn affine(&self, w: usize, b: usize, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = &self.tensors[w] * x;
        let bias = self.tensors[b].column(0);
        for mut col in z.column_iter_mut() {
            col += bias;
        }
        z
    }

    fn activations(&self, x: &DMatrix<f64>) -> Activations {
        let h1 = self.affine(W1, B1, x).map(f64::tanh);
        let h2 = self.affine(W2, B2, &h1).map(f64::tanh);
        let adv = self.affine(WA, BA, &h2).map(f64::tanh);
        let value = self.affine(WV, BV, &h2);
        let mut q = adv.clone();
        for (j, mut col) in q.column_iter_mut().enumerate() {
            let shift = value[(0, j)] - col.mean();
            col.add_scalar_mut(shift);
        }
        Activations { h1, h2, adv, q }
    }

    /// Q-values for a batch laid out one sample per column.
    pub fn forward_batch(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.activations(x).q
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let x = DMatrix::from_column_slice(x.len(), 1, x);
        self.forward_batch(&x).column(0).iter().copied().collect()
    }

    /// State value and advantage vector of one input.
    pub fn value_advantage(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let x = DMatrix::from_column_slice(x.len(), 1, x);
        let h1 = self.affine(W1, B1, &x).map(f64::tanh);
        let h2 = self.affine(W2, B2, &h1).map(f64::tanh);
        let adv = self.affine(WA, BA, &h2).map(f64::tanh);
        let value = self.affine(WV, BV, &h2)[(0, 0)];
        (value, adv.iter().copied().collect())
    }

    /// Weighted squared TD loss `sum_i w_i (Q(s_i, a_i) - y_i)^2 / B`.
    pub fn loss(&self, x: &DMatrix<f64>, actions: &[usize], targets: &[f64], weights: &[f64]) -> f64 {
        let q = self.forward_batch(x);
        let b = actions.len() as f64;
        (0..actions.len())
            .map(|i| weights[i] * (q[(actions[i], i)] - targets[i]).powi(2))
            .sum::<f64>()
            / b
    }

    /// Loss gradient with respect to every tensor, the signed TD errors and the loss.
    pub fn gradients(
        &self,
        x: &DMatrix<f64>,
        actions: &[usize],
        targets: &[f64],
        weights: &[f64],
    ) -> (Self, Vec<f64>, f64) {
        let batch = actions.len();
        assert_eq!(x.ncols(), batch, "one input column per sample");
        let act = self.activations(x);
        let n_actions = self.dims.n_actions;
        let scale = 1.0 / batch as f64;

        let mut td = Vec::with_capacity(batch);
        let mut loss = 0.0;
        let mut dq = DMatrix::zeros(n_actions, batch);
        for i in 0..batch {
            let delta = act.q[(actions[i], i)] - targets[i];
            td.push(delta);
            loss += weights[i] * delta * delta * scale;
            dq[(actions[i], i)] = 2.0 * weights[i] * delta * scale;
        }

        // dueling aggregation
        let dv = DMatrix::from_fn(1, batch, |_, j| dq.column(j).sum());
        let mut dadv = dq;
        for (j, mut col) in dadv.column_iter_mut().enumerate() {
            col.add_scalar_mut(-dv[(0, j)] / n_actions as f64);
        }
        let dza = dadv.component_mul(&act.adv.map(|a| 1.0 - a * a));

        let mut grad = Self::zeros(self.dims);
        grad.tensors[WA] = &dza * act.h2.transpose();
        grad.tensors[BA] = row_sums(&dza);
        grad.tensors[WV] = &dv * act.h2.transpose();
        grad.tensors[BV] = row_sums(&dv);

        let dh2 = self.tensors[WA].transpose() * &dza + self.tensors[WV].transpose() * &dv;
        let dz2 = dh2.component_mul(&act.h2.map(|h| 1.0 - h * h));
        grad.tensors[W2] = &dz2 * act.h1.transpose();
        grad.tensors[B2] = row_sums(&dz2);

        let dh1 = self.tensors[W2].transpose() * &dz2;
        let dz1 = dh1.component_mul(&act.h1.map(|h| 1.0 - h * h));
        grad.tensors[W1] = &dz1 * x.transpose();
        grad.tensors[B1] = row_sums(&dz1);

        (grad, td, loss)
    }

    /// Plain gradient step `theta -= lr * grad`.
    pub fn apply_gradient(&mut self, grad: &Self, lr: f64) {
        for (t, g) in self.tensors.iter_mut().zip(&grad.tensors) {
            *t -= g * lr;
        }
    }

    /// One SGD step on the weighted TD loss. Returns `|delta_i|` for the
    /// priority update; parameters are untouched if the gradient is not finite.
    pub fn sgd_step(
        &mut self,
        x: &DMatrix<f64>,
        actions: &[usize],
        targets: &[f64],
        weights: &[f64],
        lr: f64,
    ) -> Result<Vec<f64>> {
        let (grad, td, _) = self.gradients(x, actions, targets, weights);
        if !grad.is_finite() {
            return Err(Error::NonFiniteGradient);
        }
        self.apply_gradient(&grad, lr);
        Ok(td.into_iter().map(f64::abs).collect())
    }
}

fn row_sums(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sums: DVector<f64> = m.column_sum();
    DMatrix::from_column_slice(sums.len(), 1, sums.as_slice())
}

/// Bellman targets `r + gamma * max_a Q_target(s', a)`, or `r` for terminal transitions.
pub fn td_targets(rewards: &[f64], dones: &[bool], next_q: &DMatrix<f64>, gamma: f64) -> Vec<f64> {
    rewards
        .iter()
        .zip(dones)
        .enumerate()
        .map(|(i, (&r, &done))| {
            if done {
                r
            } else {
                r + gamma * next_q.column(i).max()
            }
        })
        .collect()
}

/// Adam moments for a [`DuelingNetwork`].
#[derive(Debug, Clone)]
pub struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<DMatrix<f64>>,
    v: Vec<DMatrix<f64>>,
}

impl Adam {
    pub fn new(net: &DuelingNetwork) -> Self {
        let zeros: Vec<_> = net.tensors.iter().map(|t| DMatrix::zeros(t.nrows(), t.ncols())).collect();
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step(&mut self, net: &mut DuelingNetwork, grad: &DuelingNetwork, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..8 {
            let g = &grad.tensors[i];
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            let p = &mut net.tensors[i];
            for k in 0..g.len() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g[k];
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g[k] * g[k];
                p[k] -= lr * (m[k] / c1) / ((v[k] / c2).sqrt() + self.eps);
            }
        }
    }
}
