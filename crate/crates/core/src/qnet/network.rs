use alloc::vec;
use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::SparseInput;
use crate::error::{Error, Result};

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Input width, trunk width and head cardinalities.
///
/// Parameters live in one flat vector laid out as
/// `W1 b1 g1 β1 W2 b2 g2 β2 (Wj bj)*`. Weight matrices are stored
/// input-major (`w[k * out + j]`) so a sparse input touches contiguous rows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetShape {
    pub input: usize,
    pub hidden: usize,
    pub heads: Vec<usize>,
}

impl NetShape {
    pub fn new(input: usize, hidden: usize, heads: Vec<usize>) -> Result<Self> {
        let s = NetShape { input, hidden, heads };
        if s.input == 0 {
            return Err(Error::config("network.input", "must be >= 1"));
        }
        if s.hidden == 0 {
            return Err(Error::config("network.hidden_width", "must be >= 1"));
        }
        if s.heads.is_empty() || s.heads.contains(&0) {
            return Err(Error::config("network.heads", "need at least one head, each with >= 1 action"));
        }
        Ok(s)
    }

    fn b1(&self) -> usize {
        self.input * self.hidden
    }
    fn g1(&self) -> usize {
        self.b1() + self.hidden
    }
    fn beta1(&self) -> usize {
        self.g1() + self.hidden
    }
    fn w2(&self) -> usize {
        self.beta1() + self.hidden
    }
    fn b2(&self) -> usize {
        self.w2() + self.hidden * self.hidden
    }
    fn g2(&self) -> usize {
        self.b2() + self.hidden
    }
    fn beta2(&self) -> usize {
        self.g2() + self.hidden
    }

    /// Offset of head `j`'s weight block; its bias follows the weights.
    pub fn head_offset(&self, j: usize) -> usize {
        let mut o = self.beta2() + self.hidden;
        for &n in &self.heads[..j] {
            o += (self.hidden + 1) * n;
        }
        o
    }

    pub fn num_params(&self) -> usize {
        self.head_offset(self.heads.len())
    }

    pub fn num_outputs(&self) -> usize {
        self.heads.iter().sum()
    }

    /// Offset of head `j` within the concatenated Q output.
    pub fn output_offset(&self, j: usize) -> usize {
        self.heads[..j].iter().sum()
    }

    /// Range of parameters owned exclusively by head `j`.
    pub fn head_params(&self, j: usize) -> core::ops::Range<usize> {
        self.head_offset(j)..self.head_offset(j + 1)
    }
}

/// Per-sample intermediate values kept for the backward pass.
#[derive(Debug, Clone, Default)]
pub struct Activations {
    xhat1: Vec<f64>,
    inv_std1: f64,
    h1: Vec<f64>,
    xhat2: Vec<f64>,
    inv_std2: f64,
    h2: Vec<f64>,
    /// Concatenated head outputs.
    pub q: Vec<f64>,
}

/// Dense → LayerNorm → ReLU twice, then one linear head per branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QNetwork {
    shape: NetShape,
    params: Vec<f64>,
}

impl QNetwork {
    /// He-uniform weights, zero biases, unit gains.
    pub fn new(shape: NetShape, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = Self::zeros(shape);
        let s = net.shape.clone();
        let mut fill = |params: &mut [f64], fan_in: usize| {
            let limit = libm::sqrt(6.0 / fan_in as f64);
            for w in params {
                *w = rng.random_range(-limit..limit);
            }
        };
        fill(&mut net.params[..s.b1()], s.input);
        fill(&mut net.params[s.w2()..s.b2()], s.hidden);
        for (j, &n) in s.heads.iter().enumerate() {
            let o = s.head_offset(j);
            fill(&mut net.params[o..o + s.hidden * n], s.hidden);
        }
        net
    }

    /// All weights and offsets zero, gains one.
    pub fn zeros(shape: NetShape) -> Self {
        let mut params = vec![0.0; shape.num_params()];
        params[shape.g1()..shape.beta1()].fill(1.0);
        params[shape.g2()..shape.beta2()].fill(1.0);
        QNetwork { shape, params }
    }

    pub fn from_params(shape: NetShape, params: Vec<f64>) -> Result<Self> {
        if params.len() != shape.num_params() {
            return Err(Error::Shape {
                expected: shape.num_params(),
                found: params.len(),
            });
        }
        Ok(QNetwork { shape, params })
    }

    pub fn shape(&self) -> &NetShape {
        &self.shape
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Q-values of every branch.
    pub fn forward(&self, x: &SparseInput) -> Result<Vec<Vec<f64>>> {
        let mut act = Activations::default();
        self.forward_into(x, &mut act)?;
        Ok(self.split_heads(&act.q))
    }

    pub fn split_heads(&self, q: &[f64]) -> Vec<Vec<f64>> {
        let mut o = 0;
        self.shape
            .heads
            .iter()
            .map(|&n| {
                o += n;
                q[o - n..o].to_vec()
            })
            .collect()
    }

    pub fn forward_into(&self, x: &SparseInput, act: &mut Activations) -> Result<()> {
        let s = &self.shape;
        let h = s.hidden;
        if x.dim != s.input {
            return Err(Error::Shape {
                expected: s.input,
                found: x.dim,
            });
        }
        let p = &self.params;

        let mut z = p[s.b1()..s.b1() + h].to_vec();
        for (k, xk) in x.iter() {
            if k >= s.input {
                return Err(Error::Shape {
                    expected: s.input,
                    found: k + 1,
                });
            }
            axpy(&mut z, xk, &p[k * h..(k + 1) * h]);
        }
        act.inv_std1 = layer_norm(&z, &mut act.xhat1);
        act.h1 = affine_relu(&act.xhat1, &p[s.g1()..s.beta1()], &p[s.beta1()..s.w2()]);

        let mut z = p[s.b2()..s.b2() + h].to_vec();
        let w2 = &p[s.w2()..s.b2()];
        for (k, &hk) in act.h1.iter().enumerate() {
            if hk != 0.0 {
                axpy(&mut z, hk, &w2[k * h..(k + 1) * h]);
            }
        }
        act.inv_std2 = layer_norm(&z, &mut act.xhat2);
        act.h2 = affine_relu(&act.xhat2, &p[s.g2()..s.beta2()], &p[s.beta2()..s.beta2() + h]);

        act.q.clear();
        for (j, &n) in s.heads.iter().enumerate() {
            let o = s.head_offset(j);
            let w = &p[o..o + h * n];
            let mut q = p[o + h * n..o + h * n + n].to_vec();
            for (k, &hk) in act.h2.iter().enumerate() {
                if hk != 0.0 {
                    axpy(&mut q, hk, &w[k * n..(k + 1) * n]);
                }
            }
            act.q.extend_from_slice(&q);
        }
        Ok(())
    }

    /// Adds d(loss)/d(params) to `grads`, given d(loss)/dQ for the
    /// concatenated outputs of the sample that produced `act`.
    pub fn backward_into(&self, x: &SparseInput, act: &Activations, dq: &[f64], grads: &mut [f64]) {
        let s = &self.shape;
        let h = s.hidden;
        let p = &self.params;

        let mut dh2 = vec![0.0; h];
        let mut out = 0;
        for (j, &n) in s.heads.iter().enumerate() {
            let o = s.head_offset(j);
            for (a, &d) in dq[out..out + n].iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                grads[o + h * n + a] += d;
                for k in 0..h {
                    grads[o + k * n + a] += act.h2[k] * d;
                    dh2[k] += p[o + k * n + a] * d;
                }
            }
            out += n;
        }

        let dz2 = layer_norm_backward(
            &dh2,
            &act.h2,
            &act.xhat2,
            act.inv_std2,
            &p[s.g2()..s.beta2()],
            &mut grads[s.g2()..s.beta2() + h],
        );
        let mut dh1 = vec![0.0; h];
        {
            let (gw2, gb2) = grads[s.w2()..s.g2()].split_at_mut(h * h);
            axpy(gb2, 1.0, &dz2);
            let w2 = &p[s.w2()..s.b2()];
            for k in 0..h {
                let row = &w2[k * h..(k + 1) * h];
                dh1[k] = dot(row, &dz2);
                if act.h1[k] != 0.0 {
                    axpy(&mut gw2[k * h..(k + 1) * h], act.h1[k], &dz2);
                }
            }
        }

        let dz1 = layer_norm_backward(
            &dh1,
            &act.h1,
            &act.xhat1,
            act.inv_std1,
            &p[s.g1()..s.beta1()],
            &mut grads[s.g1()..s.w2()],
        );
        axpy(&mut grads[s.b1()..s.g1()], 1.0, &dz1);
        for (k, xk) in x.iter() {
            axpy(&mut grads[k * h..(k + 1) * h], xk, &dz1);
        }
    }
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Writes the normalized vector into `xhat` and returns 1/σ.
fn layer_norm(z: &[f64], xhat: &mut Vec<f64>) -> f64 {
    let n = z.len() as f64;
    let mean = z.iter().sum::<f64>() / n;
    let var = z.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let inv = 1.0 / libm::sqrt(var + LAYER_NORM_EPS);
    xhat.clear();
    xhat.extend(z.iter().map(|v| (v - mean) * inv));
    inv
}

fn affine_relu(xhat: &[f64], gain: &[f64], offset: &[f64]) -> Vec<f64> {
    xhat.iter()
        .zip(gain.iter().zip(offset))
        .map(|(x, (g, b))| (g * x + b).max(0.0))
        .collect()
}

/// Back through ReLU and LayerNorm. `grad_gain_offset` is the gain block
/// followed by the offset block. Returns d/dz of the pre-norm activations.
fn layer_norm_backward(
    dh: &[f64],
    h: &[f64],
    xhat: &[f64],
    inv_std: f64,
    gain: &[f64],
    grad_gain_offset: &mut [f64],
) -> Vec<f64> {
    let n = dh.len();
    let (dgain, doffset) = grad_gain_offset.split_at_mut(n);
    let mut dxhat = vec![0.0; n];
    for k in 0..n {
        // h > 0 exactly where the ReLU passed its input
        let dy = if h[k] > 0.0 { dh[k] } else { 0.0 };
        dgain[k] += dy * xhat[k];
        doffset[k] += dy;
        dxhat[k] = dy * gain[k];
    }
    let nf = n as f64;
    let mean_d = dxhat.iter().sum::<f64>() / nf;
    let mean_dx = dot(&dxhat, xhat) / nf;
    dxhat
        .iter()
        .zip(xhat)
        .map(|(d, x)| inv_std * (d - mean_d - x * mean_dx))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn input(values: &[f64]) -> SparseInput {
        SparseInput::from_dense(values)
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = QNetwork::zeros(NetShape::new(5, 8, vec![49, 49, 49, 41]).unwrap());
        let q = net.forward(&input(&[1.0, 0.0, 2.0, 0.5, 0.0])).unwrap();
        assert_eq!(q.iter().map(Vec::len).collect::<Vec<_>>(), vec![49, 49, 49, 41]);
        assert!(q.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn head_sizes_for_three_agents() {
        let net = QNetwork::new(NetShape::new(1956, 16, vec![49, 49, 49, 41]).unwrap(), 3);
        let mut x = vec![0.0; 1956];
        x[7] = 1.0;
        let q = net.forward(&input(&x)).unwrap();
        assert_eq!(q.len(), 4);
        assert_eq!(q[3].len(), 41);
    }

    #[test]
    fn wrong_width_is_a_shape_error() {
        let net = QNetwork::zeros(NetShape::new(4, 2, vec![3]).unwrap());
        assert_eq!(
            net.forward(&input(&[1.0, 2.0])),
            Err(Error::Shape { expected: 4, found: 2 })
        );
    }

    #[test]
    fn hand_evaluated_forward() {
        // one input, H = 2, heads of 2 and 1 actions
        let shape = NetShape::new(1, 2, vec![2, 1]).unwrap();
        #[rustfmt::skip]
        let params = vec![
            1.0, -1.0,      // W1
            0.5, 0.0,       // b1
            2.0, 1.0,       // g1
            0.0, 0.5,       // β1
            1.0, 2.0,       // W2 row 0
            3.0, -1.0,      // W2 row 1
            0.0, 1.0,       // b2
            1.0, 1.0,       // g2
            0.1, -0.1,      // β2
            1.0, -1.0,      // head 0, row 0
            2.0, 0.5,       // head 0, row 1
            0.2, 0.3,       // head 0 bias
            4.0,            // head 1, row 0
            -2.0,           // head 1, row 1
            1.0,            // head 1 bias
        ];
        let net = QNetwork::from_params(shape, params).unwrap();
        let q = net.forward(&input(&[2.0])).unwrap();

        // z1 = (2.5, -2); mean 0.25, var 5.0625
        let inv1 = 1.0 / libm::sqrt(5.0625 + LAYER_NORM_EPS);
        let xh1 = [2.25 * inv1, -2.25 * inv1];
        let h1 = [(2.0 * xh1[0]).max(0.0), (xh1[1] + 0.5).max(0.0)];
        assert!(h1[1] == 0.0);
        let z2 = [h1[0] * 1.0, 1.0 + h1[0] * 2.0];
        let m = (z2[0] + z2[1]) / 2.0;
        let inv2 = 1.0 / libm::sqrt(((z2[0] - m) * (z2[0] - m) + (z2[1] - m) * (z2[1] - m)) / 2.0 + LAYER_NORM_EPS);
        let h2 = [((z2[0] - m) * inv2 + 0.1).max(0.0), ((z2[1] - m) * inv2 - 0.1).max(0.0)];
        let q0 = [0.2 + h2[0] * 1.0 + h2[1] * 2.0, 0.3 - h2[0] + 0.5 * h2[1]];
        let q1 = 1.0 + 4.0 * h2[0] - 2.0 * h2[1];
        assert!((q[0][0] - q0[0]).abs() < 1e-12);
        assert!((q[0][1] - q0[1]).abs() < 1e-12);
        assert!((q[1][0] - q1).abs() < 1e-12);
    }

    #[test]
    fn perturbing_one_head_leaves_others() {
        let shape = NetShape::new(6, 8, vec![5, 4, 3]).unwrap();
        let net = QNetwork::new(shape.clone(), 11);
        let x = input(&[0.3, 0.0, -1.0, 0.2, 0.0, 0.7]);
        let base = net.forward(&x).unwrap();
        for j in 0..3 {
            let mut other = net.clone();
            for k in shape.head_params(j) {
                other.params_mut()[k] += 0.25;
            }
            let q = other.forward(&x).unwrap();
            for i in 0..3 {
                if i == j {
                    assert_ne!(q[i], base[i]);
                } else {
                    assert_eq!(q[i], base[i]);
                }
            }
        }
    }

    #[test]
    fn same_seed_same_init() {
        let shape = NetShape::new(10, 4, vec![3]).unwrap();
        assert_eq!(QNetwork::new(shape.clone(), 5), QNetwork::new(shape.clone(), 5));
        assert_ne!(QNetwork::new(shape.clone(), 5), QNetwork::new(shape, 6));
    }
}
