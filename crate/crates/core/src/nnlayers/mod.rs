//! Neural layers with explicit forward and backward passes.
//!
//! Every layer follows the same protocol: `forward` returns the output and a
//! cache, `backward` consumes that cache, *accumulates* parameter gradients
//! into [`Param::grad`] and returns the gradient with respect to the input.
//! Gradients are zeroed by the optimizer, never by the layers.
//!
//! Batch is always the leading dimension. Dense and recurrent weights are
//! stored `[in, out]` so a forward pass is `x · W`.

mod conv;
mod dense;
mod embedding;
pub mod gradcheck;
mod loss;
mod pool;
mod recurrent;

pub use conv::{Conv2d, Conv2dCache};
pub use dense::{Dense, DenseCache};
pub use embedding::{Embedding, EmbeddingCache};
pub use gradcheck::{grad_check, GradCheckReport, GradProbe};
pub use loss::{softmax_rows, softmax_xent};
pub use pool::{maxpool2, maxpool2_backward, relu, relu_backward, MaxPoolCache, ReluCache};
pub use recurrent::{GruCache, GruCell, LstmCache, LstmCell};

use crate::tensor::{gemm, Fill, MatRef, Rng, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Tensor,
    pub grad: Tensor,
}

impl Param {
    pub fn new(value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        Self { value, grad }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

/// Named parameters in declaration order. Checkpoints and optimizer state
/// rely on this order being stable.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LayerParams {
    entries: Vec<(String, Param)>,
}

impl LayerParams {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, value: Tensor) {
        self.entries.push((name.into(), Param::new(value)));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, p)| p)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.entries
            .iter_mut()
            .find(|(n, _)| n == name)
            .map(|(_, p)| p)
    }

    pub fn at(&self, i: usize) -> &Param {
        &self.entries[i].1
    }

    pub fn at_mut(&mut self, i: usize) -> &mut Param {
        &mut self.entries[i].1
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.entries.iter().map(|(n, p)| (n.as_str(), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param)> {
        self.entries.iter_mut().map(|(n, p)| (n.as_str(), p))
    }

    pub fn zero_grad(&mut self) {
        self.entries.iter_mut().for_each(|(_, p)| p.zero_grad());
    }
}

/// Weight initialisation schemes. Biases are always zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    /// Normal(0, sqrt(2/fan_in)), for weights feeding a ReLU.
    He,
    /// Normal(0, sqrt(1/fan_in)), for recurrent, embedding and output weights.
    Lecun,
    Zeros,
}

impl Init {
    pub(crate) fn tensor(self, shape: &[usize], fan_in: usize, rng: &mut Rng) -> Tensor {
        let std = match self {
            Init::He => (2.0 / fan_in as f64).sqrt(),
            Init::Lecun => (1.0 / fan_in as f64).sqrt(),
            Init::Zeros => return Tensor::zeros(shape),
        };
        Tensor::create(
            shape,
            Fill::Normal {
                mean: 0.0,
                std,
                rng,
            },
        )
        .expect("layer shapes are positive")
    }
}

// Slice-level helpers shared by the layers. All matrices are row-major.

/// `a[m×k] · b[k×n]`
pub(crate) fn mm(a: &[f64], m: usize, k: usize, b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    gemm(
        m,
        k,
        n,
        MatRef::row_major(a, k),
        MatRef::row_major(b, n),
        &mut out,
        0.0,
    );
    out
}

/// `out[m×n] += a[m×k] · b[k×n]`
pub(crate) fn mm_acc(out: &mut [f64], a: &[f64], m: usize, k: usize, b: &[f64], n: usize) {
    gemm(
        m,
        k,
        n,
        MatRef::row_major(a, k),
        MatRef::row_major(b, n),
        out,
        1.0,
    );
}

/// `grad[k×n] += aᵀ · d` where `a` is `m×k` and `d` is `m×n`.
pub(crate) fn acc_at_b(grad: &mut [f64], a: &[f64], m: usize, k: usize, d: &[f64], n: usize) {
    gemm(
        k,
        m,
        n,
        MatRef::transposed(a, k),
        MatRef::row_major(d, n),
        grad,
        1.0,
    );
}

/// `out[m×k] += d[m×n] · wᵀ` where `w` is `k×n`.
pub(crate) fn acc_a_bt(out: &mut [f64], d: &[f64], m: usize, n: usize, w: &[f64], k: usize) {
    gemm(
        m,
        n,
        k,
        MatRef::row_major(d, n),
        MatRef::transposed(w, n),
        out,
        1.0,
    );
}

/// `grad[n] += column sums of d[m×n]`
pub(crate) fn acc_col_sums(grad: &mut [f64], d: &[f64], n: usize) {
    for row in d.chunks_exact(n) {
        grad.iter_mut().zip(row).for_each(|(g, v)| *g += v);
    }
}

pub(crate) fn add_row_bias(y: &mut [f64], bias: &[f64]) {
    let n = bias.len();
    for row in y.chunks_exact_mut(n) {
        row.iter_mut().zip(bias).for_each(|(v, b)| *v += b);
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn params_keep_declaration_order() {
        let mut p = LayerParams::new();
        p.push("weight", Tensor::zeros(&[2, 2]));
        p.push("bias", Tensor::zeros(&[2]));
        let names: Vec<&str> = p.iter().map(|(n, _)| n).collect();
        assert_eq!(names, ["weight", "bias"]);
        assert_eq!(p.get("bias").unwrap().grad.shape(), &[2]);
    }

    #[test]
    fn init_scales() {
        let mut rng = Rng::new(0);
        let t = Init::He.tensor(&[200, 50], 200, &mut rng);
        let var = t.squared_norm() / t.len() as f64;
        assert!((var - 0.01).abs() < 0.001, "{var}");
        assert!(Init::Zeros
            .tensor(&[3], 3, &mut rng)
            .data()
            .iter()
            .all(|v| *v == 0.0));
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0);
        assert!(sigmoid(800.0) <= 1.0);
    }
}
