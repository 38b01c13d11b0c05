//! Gradient probes for the decoder's initial-state map and for the whole
//! captioner unrolled over a short sequence.

use super::config::{CellKind, DecoderConfig, EncoderConfig, Task};
use super::model::{kink_margin, CaptionModel, Decoder, DecoderState};
use crate::lexicon::{DescriptionLevel, Vocabulary};
use crate::nnlayers::gradcheck::probes::{self as lp, dot, normal};
use crate::nnlayers::gradcheck::{DEFAULT_EPS, DEFAULT_TOL};
use crate::nnlayers::{grad_check, GradCheckReport, GradProbe};
use crate::tensor::{Rng, Tensor};

const KINK_MARGIN: f64 = 0.01;
/// Probe points with a nonzero gradient coordinate smaller than this are
/// redrawn: central differences cannot resolve such a coordinate to 1e-4
/// relative error at any step size.
const MIN_GRADIENT: f64 = 1e-6;

fn well_conditioned(probe: &mut dyn GradProbe) -> bool {
    probe
        .analytic()
        .iter()
        .flat_map(|t| t.data().iter())
        .all(|g| *g == 0.0 || g.abs() >= MIN_GRADIENT)
}

/// Step for the gated cells and everything built on them. Their curvature
/// makes `1e-3` truncation error swamp coordinates whose gradient is small;
/// `1e-4` keeps both truncation and rounding under tolerance.
pub const PROBE_EPS: f64 = 1e-4;

fn randomize(params: Vec<&mut crate::nnlayers::Param>, std: f64, rng: &mut Rng) {
    for p in params {
        let shape = p.value.shape().to_vec();
        p.value = normal(&shape, std, rng);
    }
}

/// `h0·P (+ c0·Q)` as a function of the init weights and the features.
pub struct InitMapProbe {
    decoder: Decoder,
    features: Tensor,
    proj_h: Tensor,
    proj_c: Tensor,
}

impl InitMapProbe {
    pub fn random(cell: CellKind, rng: &mut Rng) -> Self {
        loop {
            let mut probe = Self::draw(cell, rng);
            if well_conditioned(&mut probe) {
                return probe;
            }
        }
    }

    fn draw(cell: CellKind, rng: &mut Rng) -> Self {
        let (b, f, h) = (1 + rng.below(3), 1 + rng.below(5), 1 + rng.below(5));
        let cfg = DecoderConfig {
            cell,
            hidden: h,
            embed_dim: 2,
            max_len: 4,
        };
        let mut decoder = Decoder::new(cfg, 5, f, rng).expect("valid probe config");
        let mut params: Vec<&mut crate::nnlayers::Param> =
            decoder.init_h.params.iter_mut().map(|(_, p)| p).collect();
        if let Some(c) = &mut decoder.init_c {
            params.extend(c.params.iter_mut().map(|(_, p)| p));
        }
        randomize(params, 0.4, rng);
        Self {
            decoder,
            features: normal(&[b, f], 1.0, rng),
            proj_h: normal(&[b, h], 1.0, rng),
            proj_c: normal(&[b, h], 1.0, rng),
        }
    }

    fn n_param_blocks(&self) -> usize {
        2 + 2 * usize::from(self.decoder.init_c.is_some())
    }
}

impl GradProbe for InitMapProbe {
    fn block_names(&self) -> Vec<String> {
        let mut n = vec!["init_h.weight".to_string(), "init_h.bias".to_string()];
        if self.decoder.init_c.is_some() {
            n.extend(["init_c.weight".to_string(), "init_c.bias".to_string()]);
        }
        n.push("features".into());
        n
    }

    fn block_mut(&mut self, i: usize) -> &mut Tensor {
        match i {
            0 | 1 => &mut self.decoder.init_h.params.at_mut(i).value,
            _ if i < self.n_param_blocks() => {
                &mut self
                    .decoder
                    .init_c
                    .as_mut()
                    .expect("lstm probe")
                    .params
                    .at_mut(i - 2)
                    .value
            }
            _ => &mut self.features,
        }
    }

    fn objective(&mut self) -> f64 {
        let (s, _) = self.decoder.init_state(&self.features).unwrap();
        dot(&s.h, &self.proj_h) + s.c.map_or(0.0, |c| dot(&c, &self.proj_c))
    }

    fn analytic(&mut self) -> Vec<Tensor> {
        self.decoder.init_h.params.zero_grad();
        if let Some(c) = &mut self.decoder.init_c {
            c.params.zero_grad();
        }
        let (_, cache) = self.decoder.init_state(&self.features).unwrap();
        let lstm = self.decoder.init_c.is_some();
        let dstate = DecoderState {
            h: self.proj_h.clone(),
            c: lstm.then(|| self.proj_c.clone()),
        };
        let df = self.decoder.init_backward(&dstate, cache).unwrap();
        let mut out = vec![
            self.decoder.init_h.params.at(0).grad.clone(),
            self.decoder.init_h.params.at(1).grad.clone(),
        ];
        if let Some(c) = &self.decoder.init_c {
            out.push(c.params.at(0).grad.clone());
            out.push(c.params.at(1).grad.clone());
        }
        out.push(df);
        out
    }
}

/// Teacher-forced loss of a tiny full captioner over every parameter,
/// image to vocabulary logits, across a three-step sequence (plus a shorter
/// padded one in the same batch when the batch has two rows).
pub struct CaptionerProbe {
    model: CaptionModel,
    images: Tensor,
    seqs: Vec<Vec<usize>>,
}

impl CaptionerProbe {
    pub fn random(cell: CellKind, rng: &mut Rng) -> Self {
        Self::scaled(cell, 0.3, 1.0, rng)
    }

    /// Parameters drawn with standard deviation `std`, images with `img_std`.
    pub fn scaled(cell: CellKind, std: f64, img_std: f64, rng: &mut Rng) -> Self {
        let vocab = Vocabulary::from_tokens(
            ["<pad>", "<start>", "<end>", "<unk>", "gold", "ring", "."]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        )
        .expect("valid probe vocabulary");
        let enc = EncoderConfig {
            channels: 3,
            height: 4,
            width: 4,
            blocks: vec![2],
            feature_dim: 3,
        };
        let dec = DecoderConfig {
            cell,
            hidden: 3,
            embed_dim: 2,
            max_len: 4,
        };
        let batch = 1 + rng.below(2);
        loop {
            let mut model = CaptionModel::new(
                enc.clone(),
                dec.clone(),
                vocab.clone(),
                Task::Captioning(DescriptionLevel::Basic),
                rng,
            )
            .expect("valid probe config");
            randomize(model.params_mut(), std, rng);
            let images = normal(&[batch, 3, 4, 4], img_std, rng);
            let mut trace = Vec::new();
            model
                .encoder
                .forward_traced(&images, Some(&mut trace))
                .unwrap();
            if kink_margin(&trace) < KINK_MARGIN {
                continue;
            }
            let seqs = (0..batch)
                .map(|b| {
                    let len = if b == 0 { 4 } else { 3 };
                    let mut s = vec![1];
                    s.extend((1..len).map(|_| 2 + rng.below(5)));
                    s
                })
                .collect();
            let mut probe = Self {
                model,
                images,
                seqs,
            };
            if well_conditioned(&mut probe) {
                return probe;
            }
        }
    }
}

impl GradProbe for CaptionerProbe {
    fn block_names(&self) -> Vec<String> {
        self.model
            .named_params()
            .into_iter()
            .map(|(n, _)| n)
            .collect()
    }

    fn block_mut(&mut self, i: usize) -> &mut Tensor {
        &mut self.model.params_mut().swap_remove(i).value
    }

    fn objective(&mut self) -> f64 {
        self.model
            .sequence_loss(&self.images, &self.seqs, false)
            .unwrap()
    }

    fn analytic(&mut self) -> Vec<Tensor> {
        for p in self.model.params_mut() {
            p.zero_grad();
        }
        self.model
            .sequence_loss(&self.images, &self.seqs, true)
            .unwrap();
        self.model
            .named_params()
            .into_iter()
            .map(|(_, p)| p.grad.clone())
            .collect()
    }
}

/// Outcome of checking one layer at many random probe points.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerCheck {
    pub layer: &'static str,
    pub probes: usize,
    pub failures: usize,
    /// Report of the probe with the largest relative error.
    pub worst: GradCheckReport,
}

impl LayerCheck {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// Names of the layers [`gradient_suite`] checks, in order.
pub const SUITE_LAYERS: [&str; 10] = [
    "dense",
    "conv2d",
    "maxpool",
    "relu",
    "embedding",
    "gru_cell",
    "lstm_cell",
    "softmax_xent",
    "decoder_init",
    "unrolled_captioner",
];

fn make_probe(layer: usize, i: usize, rng: &mut Rng) -> (Box<dyn GradProbe>, f64) {
    let cell = CellKind::ALL[i % 2];
    match layer {
        0 => (Box::new(lp::DenseProbe::random(rng)), DEFAULT_EPS),
        1 => (Box::new(lp::ConvProbe::random(rng)), DEFAULT_EPS),
        2 => (Box::new(lp::MaxPoolProbe::random(rng)), DEFAULT_EPS),
        3 => (Box::new(lp::ReluProbe::random(rng)), DEFAULT_EPS),
        4 => (Box::new(lp::EmbeddingProbe::random(rng)), DEFAULT_EPS),
        5 => (Box::new(lp::GruProbe::random(rng)), PROBE_EPS),
        6 => (Box::new(lp::LstmProbe::random(rng)), PROBE_EPS),
        7 => (Box::new(lp::SoftmaxXentProbe::random(rng)), DEFAULT_EPS),
        8 => (Box::new(InitMapProbe::random(cell, rng)), PROBE_EPS),
        _ => (Box::new(CaptionerProbe::random(cell, rng)), PROBE_EPS),
    }
}

/// Checks every layer at `probes` random points. Decoder probes alternate
/// between GRU and LSTM cells.
pub fn gradient_suite(probes: usize, seed: u64) -> Vec<LayerCheck> {
    SUITE_LAYERS
        .iter()
        .enumerate()
        .map(|(li, &layer)| {
            let mut rng = Rng::split(seed, li as u64);
            let mut check = LayerCheck {
                layer,
                probes,
                failures: 0,
                worst: GradCheckReport {
                    max_rel_err: 0.0,
                    worst_block: String::new(),
                    worst_index: 0,
                    coordinates: 0,
                    pass: true,
                },
            };
            for i in 0..probes {
                let (mut probe, eps) = make_probe(li, i, &mut rng);
                let r = grad_check(probe.as_mut(), eps, DEFAULT_TOL);
                check.failures += usize::from(!r.pass);
                if r.max_rel_err >= check.worst.max_rel_err {
                    check.worst = r;
                }
            }
            check
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_map_gradients() {
        let mut rng = Rng::new(5);
        for cell in CellKind::ALL {
            for _ in 0..100 {
                let r = grad_check(
                    &mut InitMapProbe::random(cell, &mut rng),
                    PROBE_EPS,
                    DEFAULT_TOL,
                );
                assert!(r.pass, "{cell}: {r:?}");
            }
        }
    }

    #[test]
    fn suite_covers_every_layer() {
        let checks = gradient_suite(3, 1);
        let names: Vec<_> = checks.iter().map(|c| c.layer).collect();
        assert_eq!(names, SUITE_LAYERS);
        assert!(
            checks.iter().all(|c| c.passed() && c.worst.coordinates > 0),
            "{checks:?}"
        );
    }

    #[test]
    fn unrolled_captioner_gradients() {
        let mut rng = Rng::new(6);
        for cell in CellKind::ALL {
            for _ in 0..100 {
                let r = grad_check(
                    &mut CaptionerProbe::random(cell, &mut rng),
                    PROBE_EPS,
                    DEFAULT_TOL,
                );
                assert!(r.pass, "{cell}: {r:?}");
            }
        }
    }
}
