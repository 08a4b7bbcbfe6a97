//! Fully-connected Q-network (in -> hidden ReLU -> out) with hand-rolled
//! backprop and a plain SGD step on the mean Huber loss.
//!
//! The output layer is linear by default. With a discount factor of 1 over
//! 8000-TTI episodes Q-values run into the hundreds, which a simplex output
//! cannot represent; softmax is kept selectable for ablation only.

use rand::Rng;

use crate::error::{Result, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputActivation {
    Linear,
    Softmax,
}

/// Dense dot product; four independent accumulators keep the loop
/// vectorizable without changing the (deterministic) summation order.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len();
    let mut acc = [0.0f64; 4];
    let chunks = n / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..n {
        s += a[i] * b[i];
    }
    s
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for i in 0..x.len() {
        y[i] += alpha * x[i];
    }
}

/// Huber loss with threshold `delta`.
pub fn huber_loss(residual: f64, delta: f64) -> f64 {
    let a = residual.abs();
    if a <= delta {
        0.5 * residual * residual
    } else {
        delta * (a - 0.5 * delta)
    }
}

fn huber_grad(residual: f64, delta: f64) -> f64 {
    residual.clamp(-delta, delta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    in_dim: usize,
    hidden_dim: usize,
    out_dim: usize,
    /// hidden_dim x in_dim, row-major.
    w1: Vec<f64>,
    b1: Vec<f64>,
    /// out_dim x hidden_dim, row-major.
    w2: Vec<f64>,
    b2: Vec<f64>,
    activation: OutputActivation,
}

impl QNetwork {
    /// He-uniform hidden layer, Glorot-uniform output layer, zero biases.
    pub fn new<R: Rng + ?Sized>(
        in_dim: usize,
        hidden_dim: usize,
        out_dim: usize,
        activation: OutputActivation,
        rng: &mut R,
    ) -> Self {
        let lim1 = (6.0 / in_dim as f64).sqrt();
        let lim2 = (6.0 / (hidden_dim + out_dim) as f64).sqrt();
        let w1 = (0..hidden_dim * in_dim).map(|_| rng.gen_range(-lim1..lim1)).collect();
        let w2 = (0..out_dim * hidden_dim).map(|_| rng.gen_range(-lim2..lim2)).collect();
        QNetwork {
            in_dim,
            hidden_dim,
            out_dim,
            w1,
            b1: vec![0.0; hidden_dim],
            w2,
            b2: vec![0.0; out_dim],
            activation,
        }
    }

    pub fn zeros(in_dim: usize, hidden_dim: usize, out_dim: usize) -> Self {
        QNetwork {
            in_dim,
            hidden_dim,
            out_dim,
            w1: vec![0.0; hidden_dim * in_dim],
            b1: vec![0.0; hidden_dim],
            w2: vec![0.0; out_dim * hidden_dim],
            b2: vec![0.0; out_dim],
            activation: OutputActivation::Linear,
        }
    }

    pub fn from_parts(
        in_dim: usize,
        hidden_dim: usize,
        out_dim: usize,
        w1: Vec<f64>,
        b1: Vec<f64>,
        w2: Vec<f64>,
        b2: Vec<f64>,
        activation: OutputActivation,
    ) -> Result<Self> {
        if w1.len() != hidden_dim * in_dim
            || b1.len() != hidden_dim
            || w2.len() != out_dim * hidden_dim
            || b2.len() != out_dim
        {
            return Err(SimError::CheckpointMismatch("weight array sizes do not match dims".into()));
        }
        Ok(QNetwork { in_dim, hidden_dim, out_dim, w1, b1, w2, b2, activation })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.in_dim, self.hidden_dim, self.out_dim)
    }

    pub fn activation(&self) -> OutputActivation {
        self.activation
    }

    pub fn weights(&self) -> (&[f64], &[f64], &[f64], &[f64]) {
        (&self.w1, &self.b1, &self.w2, &self.b2)
    }

    /// Q-values for one input.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.in_dim {
            return Err(SimError::DimensionMismatch { expected: self.in_dim, got: x.len() });
        }
        let mut h = vec![0.0; self.hidden_dim];
        let mut q = vec![0.0; self.out_dim];
        self.forward_into(x, &mut h, &mut q);
        Ok(q)
    }

    /// Unchecked forward pass into caller-provided buffers; `h` receives the
    /// post-ReLU hidden activations.
    pub fn forward_into(&self, x: &[f64], h: &mut [f64], q: &mut [f64]) {
        debug_assert_eq!(x.len(), self.in_dim);
        for j in 0..self.hidden_dim {
            let row = &self.w1[j * self.in_dim..(j + 1) * self.in_dim];
            h[j] = (self.b1[j] + dot(row, x)).max(0.0);
        }
        for k in 0..self.out_dim {
            let row = &self.w2[k * self.hidden_dim..(k + 1) * self.hidden_dim];
            q[k] = self.b2[k] + dot(row, h);
        }
        if self.activation == OutputActivation::Softmax {
            softmax_in_place(q);
        }
    }

    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        out.extend_from_slice(&self.w1);
        out.extend_from_slice(&self.b1);
        out.extend_from_slice(&self.w2);
        out.extend_from_slice(&self.b2);
        out
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count());
        let (a, rest) = flat.split_at(self.w1.len());
        let (b, rest) = rest.split_at(self.b1.len());
        let (c, d) = rest.split_at(self.w2.len());
        self.w1.copy_from_slice(a);
        self.b1.copy_from_slice(b);
        self.w2.copy_from_slice(c);
        self.b2.copy_from_slice(d);
    }
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

/// Parameter gradients, same shapes as the network.
#[derive(Debug, Clone)]
pub struct Gradients {
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(net: &QNetwork) -> Self {
        Gradients {
            w1: vec![0.0; net.w1.len()],
            b1: vec![0.0; net.b1.len()],
            w2: vec![0.0; net.w2.len()],
            b2: vec![0.0; net.b2.len()],
        }
    }

    fn clear(&mut self) {
        self.w1.fill(0.0);
        self.b1.fill(0.0);
        self.w2.fill(0.0);
        self.b2.fill(0.0);
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.w1);
        out.extend_from_slice(&self.b1);
        out.extend_from_slice(&self.w2);
        out.extend_from_slice(&self.b2);
        out
    }
}

/// Reusable forward/backward buffers.
#[derive(Debug, Clone)]
pub struct TrainScratch {
    h: Vec<f64>,
    q: Vec<f64>,
    th: Vec<f64>,
    tq: Vec<f64>,
    dz2: Vec<f64>,
    dh: Vec<f64>,
}

impl TrainScratch {
    pub fn for_net(net: &QNetwork) -> Self {
        TrainScratch {
            h: vec![0.0; net.hidden_dim],
            q: vec![0.0; net.out_dim],
            th: vec![0.0; net.hidden_dim],
            tq: vec![0.0; net.out_dim],
            dz2: vec![0.0; net.out_dim],
            dh: vec![0.0; net.hidden_dim],
        }
    }
}

/// One sampled transition viewed by the optimizer.
#[derive(Debug, Clone, Copy)]
pub struct BatchItem<'a> {
    pub s: &'a [f64],
    pub a: usize,
    pub r: f64,
    pub s_next: &'a [f64],
    pub terminal: bool,
}

/// Accumulates the gradient of the mean Huber(1) temporal-difference loss
/// over `batch` into `grads` and returns the mean loss.
///
/// Targets are r + gamma * max_a Q_target(s') for non-terminal transitions
/// and plain r for terminal ones.
pub fn compute_batch_gradients(
    online: &QNetwork,
    target: &QNetwork,
    batch: &[BatchItem<'_>],
    gamma: f64,
    grads: &mut Gradients,
    scratch: &mut TrainScratch,
) -> f64 {
    assert!(!batch.is_empty());
    grads.clear();
    let inv_b = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for item in batch {
        let y = if item.terminal {
            item.r
        } else {
            target.forward_into(item.s_next, &mut scratch.th, &mut scratch.tq);
            let max_q = scratch.tq.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            item.r + gamma * max_q
        };
        online.forward_into(item.s, &mut scratch.h, &mut scratch.q);
        let residual = scratch.q[item.a] - y;
        loss += huber_loss(residual, 1.0);
        let g = huber_grad(residual, 1.0) * inv_b;

        match online.activation {
            OutputActivation::Linear => {
                // Only the chosen action's output row carries gradient.
                let row = item.a;
                grads.b2[row] += g;
                axpy(
                    g,
                    &scratch.h,
                    &mut grads.w2[row * online.hidden_dim..(row + 1) * online.hidden_dim],
                );
                let w2_row = &online.w2[row * online.hidden_dim..(row + 1) * online.hidden_dim];
                for j in 0..online.hidden_dim {
                    scratch.dh[j] = g * w2_row[j];
                }
            }
            OutputActivation::Softmax => {
                // Softmax Jacobian applied to the single nonzero dL/dp_a = g:
                // dz2_j = g p_j ([j == a] - p_a).
                let p_a = scratch.q[item.a];
                for j in 0..online.out_dim {
                    let indicator = if j == item.a { 1.0 } else { 0.0 };
                    scratch.dz2[j] = g * scratch.q[j] * (indicator - p_a);
                }
                scratch.dh.fill(0.0);
                for k in 0..online.out_dim {
                    let d = scratch.dz2[k];
                    if d != 0.0 {
                        grads.b2[k] += d;
                        axpy(
                            d,
                            &scratch.h,
                            &mut grads.w2[k * online.hidden_dim..(k + 1) * online.hidden_dim],
                        );
                        axpy(
                            d,
                            &online.w2[k * online.hidden_dim..(k + 1) * online.hidden_dim],
                            &mut scratch.dh,
                        );
                    }
                }
            }
        }

        // Through the ReLU into the first layer.
        for j in 0..online.hidden_dim {
            if scratch.h[j] > 0.0 {
                let d = scratch.dh[j];
                if d != 0.0 {
                    grads.b1[j] += d;
                    axpy(d, item.s, &mut grads.w1[j * online.in_dim..(j + 1) * online.in_dim]);
                }
            }
        }
    }
    loss * inv_b
}

/// Plain stochastic-gradient step.
pub fn apply_sgd(net: &mut QNetwork, grads: &Gradients, lr: f64) {
    axpy(-lr, &grads.w1, &mut net.w1);
    axpy(-lr, &grads.b1, &mut net.b1);
    axpy(-lr, &grads.w2, &mut net.w2);
    axpy(-lr, &grads.b2, &mut net.b2);
}
