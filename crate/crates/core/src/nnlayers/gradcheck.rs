//! Central-difference gradient checking.
//!
//! A [`GradProbe`] exposes a scalar objective over a list of tensor "blocks"
//! (parameters first, then inputs) together with its analytic gradient.
//! [`grad_check`] perturbs every coordinate of every block by `±eps` and
//! compares the numeric slope with the analytic one using
//! `|a − n| / max(|a|, |n|, 1e-8)`.

use crate::tensor::Tensor;

pub const DEFAULT_EPS: f64 = 1e-3;
pub const DEFAULT_TOL: f64 = 1e-4;

pub trait GradProbe {
    fn block_names(&self) -> Vec<String>;
    fn block_mut(&mut self, index: usize) -> &mut Tensor;
    /// Forward pass only.
    fn objective(&mut self) -> f64;
    /// Gradient of the objective for each block, in `block_names` order.
    fn analytic(&mut self) -> Vec<Tensor>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst_block: String,
    pub worst_index: usize,
    pub coordinates: usize,
    pub pass: bool,
}

pub fn grad_check(probe: &mut dyn GradProbe, eps: f64, tol: f64) -> GradCheckReport {
    let names = probe.block_names();
    let analytic = probe.analytic();
    assert_eq!(
        analytic.len(),
        names.len(),
        "probe returned wrong block count"
    );
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_block: String::new(),
        worst_index: 0,
        coordinates: 0,
        pass: true,
    };
    for (b, name) in names.iter().enumerate() {
        let len = probe.block_mut(b).len();
        assert_eq!(analytic[b].len(), len, "gradient shape for block {name}");
        for j in 0..len {
            let orig = probe.block_mut(b).data()[j];
            probe.block_mut(b).data_mut()[j] = orig + eps;
            let plus = probe.objective();
            probe.block_mut(b).data_mut()[j] = orig - eps;
            let minus = probe.objective();
            probe.block_mut(b).data_mut()[j] = orig;

            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic[b].data()[j];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            report.coordinates += 1;
            if rel > report.max_rel_err || rel.is_nan() {
                report.max_rel_err = if rel.is_nan() { f64::INFINITY } else { rel };
                report.worst_block = name.clone();
                report.worst_index = j;
            }
        }
    }
    report.pass = report.max_rel_err <= tol;
    report
}

/// Ready-made probes for every layer, built at random points.
pub mod probes {
    use super::GradProbe;
    use crate::nnlayers::{
        maxpool2, maxpool2_backward, relu, relu_backward, softmax_xent, Conv2d, Dense, Embedding,
        GruCell, Init, LayerParams, LstmCell,
    };
    use crate::tensor::{Fill, Rng, Tensor};

    pub(crate) fn normal(shape: &[usize], std: f64, rng: &mut Rng) -> Tensor {
        Tensor::create(
            shape,
            Fill::Normal {
                mean: 0.0,
                std,
                rng,
            },
        )
        .expect("probe shapes are positive")
    }

    pub(crate) fn dot(a: &Tensor, b: &Tensor) -> f64 {
        a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
    }

    fn param_names(prefix: &str, params: &LayerParams) -> Vec<String> {
        params
            .iter()
            .map(|(n, _)| format!("{prefix}.{n}"))
            .collect()
    }

    /// Randomises every parameter so zero-initialised biases are exercised too.
    fn jitter(params: &mut LayerParams, std: f64, rng: &mut Rng) {
        for (_, p) in params.iter_mut() {
            let shape = p.value.shape().to_vec();
            p.value = normal(&shape, std, rng);
        }
    }

    pub struct DenseProbe {
        layer: Dense,
        x: Tensor,
        proj: Tensor,
    }

    impl DenseProbe {
        pub fn random(rng: &mut Rng) -> Self {
            let (b, i, o) = (1 + rng.below(3), 1 + rng.below(4), 1 + rng.below(4));
            let mut layer = Dense::new(i, o, Init::Lecun, rng);
            jitter(&mut layer.params, 1.0, rng);
            Self {
                layer,
                x: normal(&[b, i], 1.0, rng),
                proj: normal(&[b, o], 1.0, rng),
            }
        }

        /// The wrapped layer, for planting faults in tests.
        pub fn layer_mut(&mut self) -> &mut Dense {
            &mut self.layer
        }
    }

    impl GradProbe for DenseProbe {
        fn block_names(&self) -> Vec<String> {
            let mut n = param_names("dense", &self.layer.params);
            n.push("x".into());
            n
        }

        fn block_mut(&mut self, i: usize) -> &mut Tensor {
            match i {
                0 | 1 => &mut self.layer.params.at_mut(i).value,
                _ => &mut self.x,
            }
        }

        fn objective(&mut self) -> f64 {
            dot(&self.layer.forward(&self.x).unwrap().0, &self.proj)
        }

        fn analytic(&mut self) -> Vec<Tensor> {
            self.layer.params.zero_grad();
            let (_, cache) = self.layer.forward(&self.x).unwrap();
            let dx = self.layer.backward(&self.proj, cache).unwrap();
            vec![
                self.layer.params.at(0).grad.clone(),
                self.layer.params.at(1).grad.clone(),
                dx,
            ]
        }
    }

    pub struct ConvProbe {
        layer: Conv2d,
        x: Tensor,
        proj: Tensor,
    }

    impl ConvProbe {
        pub fn random(rng: &mut Rng) -> Self {
            let (b, ci, co) = (1 + rng.below(2), 1 + rng.below(3), 1 + rng.below(3));
            let (h, w) = (1 + rng.below(4), 1 + rng.below(4));
            let mut layer = Conv2d::new(ci, co, Init::He, rng);
            jitter(&mut layer.params, 1.0, rng);
            Self {
                layer,
                x: normal(&[b, ci, h, w], 1.0, rng),
                proj: normal(&[b, co, h, w], 1.0, rng),
            }
        }
    }

    impl GradProbe for ConvProbe {
        fn block_names(&self) -> Vec<String> {
            let mut n = param_names("conv", &self.layer.params);
            n.push("x".into());
            n
        }

        fn block_mut(&mut self, i: usize) -> &mut Tensor {
            match i {
                0 | 1 => &mut self.layer.params.at_mut(i).value,
                _ => &mut self.x,
            }
        }

        fn objective(&mut self) -> f64 {
            dot(&self.layer.forward(&self.x).unwrap().0, &self.proj)
        }

        fn analytic(&mut self) -> Vec<Tensor> {
            self.layer.params.zero_grad();
            let (_, cache) = self.layer.forward(&self.x).unwrap();
            let dx = self.layer.backward(&self.proj, cache).unwrap();
            vec![
                self.layer.params.at(0).grad.clone(),
                self.layer.params.at(1).grad.clone(),
                dx,
            ]
        }
    }

    /// Inputs are a scaled permutation so every pooling window has a unique
    /// maximum at least 0.01 above the rest.
    pub struct MaxPoolProbe {
        x: Tensor,
        proj: Tensor,
    }

    impl MaxPoolProbe {
        pub fn random(rng: &mut Rng) -> Self {
            let (b, c) = (1 + rng.below(2), 1 + rng.below(2));
            let (h, w) = (2 * (1 + rng.below(3)), 2 * (1 + rng.below(3)));
            let n = b * c * h * w;
            let mut order: Vec<usize> = (0..n).collect();
            rng.shuffle(&mut order);
            let data = order.iter().map(|&k| k as f64 * 0.01 - 0.5).collect();
            Self {
                x: Tensor::from_vec(&[b, c, h, w], data).unwrap(),
                proj: normal(&[b, c, h / 2, w / 2], 1.0, rng),
            }
        }
    }

    impl GradProbe for MaxPoolProbe {
        fn block_names(&self) -> Vec<String> {
            vec!["x".into()]
        }

        fn block_mut(&mut self, _: usize) -> &mut Tensor {
            &mut self.x
        }

        fn objective(&mut self) -> f64 {
            dot(&maxpool2(&self.x).unwrap().0, &self.proj)
        }

        fn analytic(&mut self) -> Vec<Tensor> {
            let (_, cache) = maxpool2(&self.x).unwrap();
            vec![maxpool2_backward(&self.proj, cache).unwrap()]
        }
    }

    /// Inputs are kept at least 0.1 away from the kink.
    pub struct ReluProbe {
        x: Tensor,
        proj: Tensor,
    }

    impl ReluProbe {
        pub fn random(rng: &mut Rng) -> Self {
            let n = 1 + rng.below(12);
            let x = normal(&[n], 1.0, rng).map(|v| v.signum() * (0.1 + v.abs()));
            Self {
                x,
                proj: normal(&[n], 1.0, rng),
            }
        }
    }

    impl GradProbe for ReluProbe {
        fn block_names(&self) -> Vec<String> {
            vec!["x".into()]
        }

        fn block_mut(&mut self, _: usize) -> &mut Tensor {
            &mut self.x
        }

        fn objective(&mut self) -> f64 {
            dot(&relu(&self.x).0, &self.proj)
        }

        fn analytic(&mut self) -> Vec<Tensor> {
            let (_, cache) = relu(&self.x);
            vec![relu_backward(&self.proj, cache).unwrap()]
        }
    }

    pub struct EmbeddingProbe {
        layer: Embedding,
        ids: Vec<usize>,
        proj: Tensor,
    }

    impl EmbeddingProbe {
        pub fn random(rng: &mut Rng) -> Self {
            let (vocab, dim, batch) = (2 + rng.below(5), 1 + rng.below(4), 1 + rng.below(6));
            let layer = Embedding::new(vocab, dim, rng);
            let ids = (0..batch).map(|_| rng.below(vocab)).collect();
            Self {
                layer,
                ids,
                proj: normal(&[batch, dim], 1.0, rng),
            }
        }
    }

    impl GradProbe for EmbeddingProbe {
        fn block_names(&self) -> Vec<String> {
            vec!["embedding.table".into()]
        }

        fn block_mut(&mut self, _: usize) -> &mut Tensor {
            &mut self.layer.params.at_mut(0).value
        }

        fn objective(&mut self) -> f64 {
            dot(&self.layer.forward(&self.ids).unwrap().0, &self.proj)
        }

        fn analytic(&mut self) -> Vec<Tensor> {
            self.layer.params.zero_grad();
            let (_, cache) = self.layer.forward(&self.ids).unwrap();
            self.layer.backward(&self.proj, cache).unwrap();
            vec![self.layer.params.at(0).grad.clone()]
        }
    }

    pub struct GruProbe {
        cell: GruCell,
        x: Tensor,
        h: Tensor,
        proj: Tensor,
    }

    impl GruProbe {
        pub fn random(rng: &mut Rng) -> Self {
            let (b, i, hid) = (1 + rng.below(3), 1 + rng.below(3), 1 + rng.below(3));
            let mut cell = GruCell::new(i, hid, rng);
            jitter(&mut cell.params, 0.8, rng);
            Self {
                cell,
                x: normal(&[b, i], 1.0, rng),
                h: normal(&[b, hid], 0.5, rng),
                proj: normal(&[b, hid], 1.0, rng),
            }
        }
    }

    impl GradProbe for GruProbe {
        fn block_names(&self) -> Vec<String> {
            let mut n = param_names("gru", &self.cell.params);
            n.extend(["x".into(), "h".into()]);
            n
        }

        fn block_mut(&mut self, i: usize) -> &mut Tensor {
            match i {
                0..=8 => &mut self.cell.params.at_mut(i).value,
                9 => &mut self.x,
                _ => &mut self.h,
            }
        }

        fn objective(&mut self) -> f64 {
            dot(&self.cell.forward(&self.x, &self.h).unwrap().0, &self.proj)
        }

        fn analytic(&mut self) -> Vec<Tensor> {
            self.cell.params.zero_grad();
            let (_, cache) = self.cell.forward(&self.x, &self.h).unwrap();
            let (dx, dh) = self.cell.backward(&self.proj, cache).unwrap();
            let mut out: Vec<Tensor> = self
                .cell
                .params
                .iter()
                .map(|(_, p)| p.grad.clone())
                .collect();
            out.extend([dx, dh]);
            out
        }
    }

    pub struct LstmProbe {
        cell: LstmCell,
        x: Tensor,
        h: Tensor,
        c: Tensor,
        proj_h: Tensor,
        proj_c: Tensor,
    }

    impl LstmProbe {
        pub fn random(rng: &mut Rng) -> Self {
            let (b, i, hid) = (1 + rng.below(3), 1 + rng.below(3), 1 + rng.below(3));
            let mut cell = LstmCell::new(i, hid, rng);
            jitter(&mut cell.params, 0.8, rng);
            Self {
                cell,
                x: normal(&[b, i], 1.0, rng),
                h: normal(&[b, hid], 0.5, rng),
                c: normal(&[b, hid], 0.5, rng),
                proj_h: normal(&[b, hid], 1.0, rng),
                proj_c: normal(&[b, hid], 1.0, rng),
            }
        }
    }

    impl GradProbe for LstmProbe {
        fn block_names(&self) -> Vec<String> {
            let mut n = param_names("lstm", &self.cell.params);
            n.extend(["x".into(), "h".into(), "c".into()]);
            n
        }

        fn block_mut(&mut self, i: usize) -> &mut Tensor {
            match i {
                0..=11 => &mut self.cell.params.at_mut(i).value,
                12 => &mut self.x,
                13 => &mut self.h,
                _ => &mut self.c,
            }
        }

        fn objective(&mut self) -> f64 {
            let ((h, c), _) = self.cell.forward(&self.x, &self.h, &self.c).unwrap();
            dot(&h, &self.proj_h) + dot(&c, &self.proj_c)
        }

        fn analytic(&mut self) -> Vec<Tensor> {
            self.cell.params.zero_grad();
            let (_, cache) = self.cell.forward(&self.x, &self.h, &self.c).unwrap();
            let (dx, dh, dc) = self
                .cell
                .backward(&self.proj_h, &self.proj_c, cache)
                .unwrap();
            let mut out: Vec<Tensor> = self
                .cell
                .params
                .iter()
                .map(|(_, p)| p.grad.clone())
                .collect();
            out.extend([dx, dh, dc]);
            out
        }
    }

    pub struct SoftmaxXentProbe {
        logits: Tensor,
        targets: Vec<usize>,
    }

    impl SoftmaxXentProbe {
        pub fn random(rng: &mut Rng) -> Self {
            let (b, k) = (1 + rng.below(4), 2 + rng.below(5));
            Self {
                logits: normal(&[b, k], 2.0, rng),
                targets: (0..b).map(|_| rng.below(k)).collect(),
            }
        }
    }

    impl GradProbe for SoftmaxXentProbe {
        fn block_names(&self) -> Vec<String> {
            vec!["logits".into()]
        }

        fn block_mut(&mut self, _: usize) -> &mut Tensor {
            &mut self.logits
        }

        fn objective(&mut self) -> f64 {
            softmax_xent(&self.logits, &self.targets).unwrap().0
        }

        fn analytic(&mut self) -> Vec<Tensor> {
            vec![softmax_xent(&self.logits, &self.targets).unwrap().1]
        }
    }
}
