use super::config::{CellKind, DecoderConfig, EncoderConfig, Task};
use crate::error::{Error, Result};
use crate::lexicon::{detokenize, JewelryClass, Lexicon, Vocabulary, END, PAD, START};
use crate::nnlayers::{
    maxpool2, maxpool2_backward, relu, relu_backward, softmax_rows, Conv2d, Conv2dCache, Dense,
    DenseCache, Embedding, EmbeddingCache, GruCache, GruCell, Init, LayerParams, LstmCache,
    LstmCell, MaxPoolCache, Param, ReluCache,
};
use crate::tensor::{argmax, Rng, Tensor};

/// Conv/relu/pool blocks followed by a dense projection.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub config: EncoderConfig,
    pub convs: Vec<Conv2d>,
    pub proj: Dense,
}

pub struct EncoderCache {
    blocks: Vec<(Conv2dCache, ReluCache, MaxPoolCache)>,
    pooled_shape: Vec<usize>,
    proj: DenseCache,
}

/// Distance of the encoder from its nearest kink: the smallest |relu input|
/// and, for every pooling window whose winner is positive, the gap to the
/// runner-up. Finite differences are only meaningful well inside both.
pub(crate) fn kink_margin(conv_outputs: &[Tensor]) -> f64 {
    let mut margin = f64::INFINITY;
    for y in conv_outputs {
        margin = y.data().iter().fold(margin, |m, v| m.min(v.abs()));
        let (h, w) = (y.shape()[2], y.shape()[3]);
        for plane in y.data().chunks_exact(h * w) {
            for i in (0..h).step_by(2) {
                for j in (0..w).step_by(2) {
                    let mut win = [
                        plane[i * w + j],
                        plane[i * w + j + 1],
                        plane[(i + 1) * w + j],
                        plane[(i + 1) * w + j + 1],
                    ];
                    win.sort_by(|a, b| b.total_cmp(a));
                    if win[0] > 0.0 {
                        margin = margin.min(win[0] - win[1].max(0.0));
                    }
                }
            }
        }
    }
    margin
}

impl Encoder {
    pub fn new(config: EncoderConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let mut c_in = config.channels;
        let mut convs = Vec::with_capacity(config.blocks.len());
        for &c in &config.blocks {
            convs.push(Conv2d::new(c_in, c, Init::He, rng));
            c_in = c;
        }
        let proj = Dense::new(config.flat_dim(), config.feature_dim, Init::Lecun, rng);
        Ok(Self {
            config,
            convs,
            proj,
        })
    }

    fn check(&self, images: &Tensor) -> Result<usize> {
        let c = &self.config;
        match *images.shape() {
            [b, ch, h, w] if ch == c.channels && h == c.height && w == c.width && b > 0 => Ok(b),
            _ => Err(Error::ShapeMismatch(format!(
                "encoder expects [batch, {}, {}, {}], got {:?}",
                c.channels,
                c.height,
                c.width,
                images.shape()
            ))),
        }
    }

    /// `[batch, c, h, w]` → `[batch, feature_dim]`.
    pub fn forward(&self, images: &Tensor) -> Result<(Tensor, EncoderCache)> {
        self.forward_traced(images, None)
    }

    pub(crate) fn forward_traced(
        &self,
        images: &Tensor,
        mut trace: Option<&mut Vec<Tensor>>,
    ) -> Result<(Tensor, EncoderCache)> {
        let batch = self.check(images)?;
        let mut x = images.clone();
        let mut blocks = Vec::with_capacity(self.convs.len());
        for conv in &self.convs {
            let (y, cc) = conv.forward(&x)?;
            if let Some(t) = trace.as_deref_mut() {
                t.push(y.clone());
            }
            let (a, rc) = relu(&y);
            let (p, pc) = maxpool2(&a)?;
            blocks.push((cc, rc, pc));
            x = p;
        }
        let pooled_shape = x.shape().to_vec();
        let flat = x.reshape(&[batch, self.config.flat_dim()])?;
        let (features, proj) = self.proj.forward(&flat)?;
        Ok((
            features,
            EncoderCache {
                blocks,
                pooled_shape,
                proj,
            },
        ))
    }

    /// Accumulates parameter gradients; the image gradient is not needed.
    pub fn backward(&mut self, dfeatures: &Tensor, cache: EncoderCache) -> Result<()> {
        let dflat = self.proj.backward(dfeatures, cache.proj)?;
        let mut d = dflat.reshape(&cache.pooled_shape)?;
        for (i, (cc, rc, pc)) in cache.blocks.into_iter().enumerate().rev() {
            let da = maxpool2_backward(&d, pc)?;
            let dy = relu_backward(&da, rc)?;
            if i == 0 {
                self.convs[0].backward_params(&dy, cc)?;
                return Ok(());
            }
            d = self.convs[i].backward(&dy, cc)?;
        }
        Ok(())
    }

    fn layer_params(&self) -> Vec<(String, &LayerParams)> {
        let mut out: Vec<(String, &LayerParams)> = self
            .convs
            .iter()
            .enumerate()
            .map(|(i, c)| (format!("encoder.conv{i}"), &c.params))
            .collect();
        out.push(("encoder.proj".into(), &self.proj.params));
        out
    }

    fn layer_params_mut(&mut self) -> Vec<&mut LayerParams> {
        let mut out: Vec<&mut LayerParams> = self.convs.iter_mut().map(|c| &mut c.params).collect();
        out.push(&mut self.proj.params);
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Gru(GruCell),
    Lstm(LstmCell),
}

impl Cell {
    fn params(&self) -> &LayerParams {
        match self {
            Cell::Gru(c) => &c.params,
            Cell::Lstm(c) => &c.params,
        }
    }

    fn params_mut(&mut self) -> &mut LayerParams {
        match self {
            Cell::Gru(c) => &mut c.params,
            Cell::Lstm(c) => &mut c.params,
        }
    }
}

/// Recurrent state for a batch. `c` is present only for LSTM decoders.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderState {
    pub h: Tensor,
    pub c: Option<Tensor>,
}

impl DecoderState {
    fn zeros_like(&self) -> Self {
        Self {
            h: Tensor::zeros(self.h.shape()),
            c: self.c.as_ref().map(|c| Tensor::zeros(c.shape())),
        }
    }
}

pub struct InitCache {
    h: (DenseCache, Tensor),
    c: Option<(DenseCache, Tensor)>,
}

enum CellCache {
    Gru(GruCache),
    Lstm(LstmCache),
}

pub struct StepCache {
    embed: EmbeddingCache,
    cell: CellCache,
    head: DenseCache,
}

/// Embedding, recurrent cell and vocabulary head. The image enters only
/// through the initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoder {
    pub config: DecoderConfig,
    pub embed: Embedding,
    pub init_h: Dense,
    pub init_c: Option<Dense>,
    pub cell: Cell,
    pub head: Dense,
}

fn tanh_backward(dy: &Tensor, y: &Tensor) -> Result<Tensor> {
    let data = dy
        .data()
        .iter()
        .zip(y.data())
        .map(|(g, v)| g * (1.0 - v * v))
        .collect();
    Tensor::from_vec(y.shape(), data)
}

impl Decoder {
    pub fn new(
        config: DecoderConfig,
        vocab_size: usize,
        feature_dim: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        config.validate()?;
        let hid = config.hidden;
        let embed = Embedding::new(vocab_size, config.embed_dim, rng);
        let init_h = Dense::new(feature_dim, hid, Init::Lecun, rng);
        let init_c = match config.cell {
            CellKind::Gru => None,
            CellKind::Lstm => Some(Dense::new(feature_dim, hid, Init::Lecun, rng)),
        };
        let cell = match config.cell {
            CellKind::Gru => Cell::Gru(GruCell::new(config.embed_dim, hid, rng)),
            CellKind::Lstm => Cell::Lstm(LstmCell::new(config.embed_dim, hid, rng)),
        };
        let head = Dense::new(hid, vocab_size, Init::Lecun, rng);
        Ok(Self {
            config,
            embed,
            init_h,
            init_c,
            cell,
            head,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.head.output_dim()
    }

    /// `h0 = tanh(features·W + b)`, and likewise `c0` for an LSTM.
    pub fn init_state(&self, features: &Tensor) -> Result<(DecoderState, InitCache)> {
        let (pre, hc) = self.init_h.forward(features)?;
        let h = pre.map(f64::tanh);
        let c = match &self.init_c {
            None => None,
            Some(d) => {
                let (pre, cc) = d.forward(features)?;
                Some((cc, pre.map(f64::tanh)))
            }
        };
        let state = DecoderState {
            h: h.clone(),
            c: c.as_ref().map(|(_, t)| t.clone()),
        };
        Ok((state, InitCache { h: (hc, h), c }))
    }

    /// Returns the feature gradient.
    pub fn init_backward(&mut self, dstate: &DecoderState, cache: InitCache) -> Result<Tensor> {
        let (hc, h) = cache.h;
        let mut df = self.init_h.backward(&tanh_backward(&dstate.h, &h)?, hc)?;
        if let (Some(d), Some((cc, c)), Some(dc)) =
            (self.init_c.as_mut(), cache.c, dstate.c.as_ref())
        {
            df.add_assign(&d.backward(&tanh_backward(dc, &c)?, cc)?)?;
        }
        Ok(df)
    }

    /// One token per batch row in, vocabulary logits and the next state out.
    pub fn step(
        &self,
        ids: &[usize],
        state: &DecoderState,
    ) -> Result<(Tensor, DecoderState, StepCache)> {
        let (x, embed) = self.embed.forward(ids)?;
        let (next, cell) = match (&self.cell, &state.c) {
            (Cell::Gru(g), None) => {
                let (h, cache) = g.forward(&x, &state.h)?;
                (DecoderState { h, c: None }, CellCache::Gru(cache))
            }
            (Cell::Lstm(l), Some(c)) => {
                let ((h, c), cache) = l.forward(&x, &state.h, c)?;
                (DecoderState { h, c: Some(c) }, CellCache::Lstm(cache))
            }
            _ => {
                return Err(Error::ShapeMismatch(
                    "decoder state does not match its cell".into(),
                ))
            }
        };
        let (logits, head) = self.head.forward(&next.h)?;
        Ok((logits, next, StepCache { embed, cell, head }))
    }

    /// `dnext` is the gradient reaching the step's output state from later
    /// steps. Returns the gradient for the step's input state.
    pub fn step_backward(
        &mut self,
        dlogits: &Tensor,
        dnext: &DecoderState,
        cache: StepCache,
    ) -> Result<DecoderState> {
        let mut dh = self.head.backward(dlogits, cache.head)?;
        dh.add_assign(&dnext.h)?;
        let (dx, dprev) = match (&mut self.cell, cache.cell) {
            (Cell::Gru(g), CellCache::Gru(c)) => {
                let (dx, dh) = g.backward(&dh, c)?;
                (dx, DecoderState { h: dh, c: None })
            }
            (Cell::Lstm(l), CellCache::Lstm(c)) => {
                let dc = dnext.c.clone().unwrap_or_else(|| Tensor::zeros(dh.shape()));
                let (dx, dh, dc) = l.backward(&dh, &dc, c)?;
                (dx, DecoderState { h: dh, c: Some(dc) })
            }
            _ => {
                return Err(Error::ShapeMismatch(
                    "step cache does not match its cell".into(),
                ))
            }
        };
        self.embed.backward(&dx, cache.embed)?;
        Ok(dprev)
    }

    fn layer_params(&self) -> Vec<(String, &LayerParams)> {
        let mut out = vec![
            ("decoder.embed".to_string(), &self.embed.params),
            ("decoder.init_h".to_string(), &self.init_h.params),
        ];
        if let Some(c) = &self.init_c {
            out.push(("decoder.init_c".into(), &c.params));
        }
        out.push(("decoder.cell".into(), self.cell.params()));
        out.push(("decoder.head".into(), &self.head.params));
        out
    }

    fn layer_params_mut(&mut self) -> Vec<&mut LayerParams> {
        let mut out = vec![&mut self.embed.params, &mut self.init_h.params];
        if let Some(c) = &mut self.init_c {
            out.push(&mut c.params);
        }
        out.push(self.cell.params_mut());
        out.push(&mut self.head.params);
        out
    }
}

/// Cross-entropy summed over rows with a target, each row weighted by
/// `scale`. Rows without a target get zero gradient.
pub(crate) fn masked_xent(
    logits: &Tensor,
    targets: &[Option<usize>],
    scale: f64,
) -> Result<(f64, Tensor)> {
    let k = logits.shape()[1];
    let mut grad = logits.data().to_vec();
    let mut loss = 0.0;
    for (row, t) in grad.chunks_exact_mut(k).zip(targets) {
        match *t {
            None => row.fill(0.0),
            Some(t) if t >= k => return Err(Error::VocabOverflow { id: t, size: k }),
            Some(t) => {
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let log_z = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                loss += log_z - row[t];
                for v in row.iter_mut() {
                    *v = (*v - log_z).exp() * scale;
                }
                row[t] -= scale;
            }
        }
    }
    Ok((loss * scale, Tensor::from_vec(logits.shape(), grad)?))
}

struct Unrolled {
    loss: f64,
    last: DecoderState,
    init: InitCache,
    steps: Vec<(StepCache, Tensor)>,
}

/// Encoder, decoder, vocabulary and the task they were built for.
#[derive(Debug, Clone, PartialEq)]
pub struct CaptionModel {
    pub encoder: Encoder,
    pub decoder: Decoder,
    pub vocab: Vocabulary,
    pub task: Task,
}

/// Vocabulary of the classification task: the reserved tokens and the four
/// class names.
pub fn class_vocabulary() -> Vocabulary {
    Vocabulary::build(JewelryClass::ALL.iter().map(|c| [c.name()]))
}

impl CaptionModel {
    pub fn new(
        encoder: EncoderConfig,
        decoder: DecoderConfig,
        vocab: Vocabulary,
        task: Task,
        rng: &mut Rng,
    ) -> Result<Self> {
        let feature_dim = encoder.feature_dim;
        let encoder = Encoder::new(encoder, rng)?;
        let decoder = Decoder::new(decoder, vocab.len(), feature_dim, rng)?;
        Ok(Self {
            encoder,
            decoder,
            vocab,
            task,
        })
    }

    /// Stacks `[3, h, w]` images into a batch.
    pub fn stack(&self, images: &[&Tensor]) -> Result<Tensor> {
        let c = &self.encoder.config;
        let shape = [c.channels, c.height, c.width];
        let mut data = Vec::with_capacity(images.len() * c.channels * c.height * c.width);
        for img in images {
            if img.shape() != shape {
                return Err(Error::ShapeMismatch(format!(
                    "model expects images {:?}, got {:?}",
                    shape,
                    img.shape()
                )));
            }
            data.extend_from_slice(img.data());
        }
        Tensor::from_vec(&[images.len(), c.channels, c.height, c.width], data)
    }

    /// Feature vector `[feature_dim]` of one `[3, h, w]` image.
    pub fn encode_image(&self, image: &Tensor) -> Result<Tensor> {
        let (f, _) = self.encoder.forward(&self.stack(&[image])?)?;
        let n = f.len();
        f.reshape(&[n])
    }

    pub fn features(&self, images: &Tensor) -> Result<Tensor> {
        Ok(self.encoder.forward(images)?.0)
    }

    /// Token-id sequence `<start> … <end>` used as the training target.
    /// Classification targets are `<start> class` with no end token.
    pub fn target_ids(&self, lex: &Lexicon, class: JewelryClass, caption: &str) -> Vec<usize> {
        match self.task {
            Task::Classification => vec![START, self.vocab.id(class.name())],
            Task::Captioning(_) => self.vocab.encode(&lex.tokenize(caption)),
        }
    }

    /// Runs the decoder over `seqs` with teacher forcing. Caches are kept
    /// only when `keep` is set.
    fn unroll(&self, features: &Tensor, seqs: &[Vec<usize>], keep: bool) -> Result<Unrolled> {
        let batch = features.shape()[0];
        if seqs.len() != batch || seqs.iter().any(|s| s.len() < 2) {
            return Err(Error::InputMismatch(format!(
                "{} target sequences (each needs ≥ 2 ids) for batch of {batch}",
                seqs.len()
            )));
        }
        let steps = seqs.iter().map(Vec::len).max().unwrap_or(0) - 1;
        let n_targets: usize = seqs.iter().map(|s| s.len() - 1).sum();
        let scale = 1.0 / n_targets as f64;
        let (mut state, init) = self.decoder.init_state(features)?;
        let mut steps_out = Vec::with_capacity(if keep { steps } else { 0 });
        let mut loss = 0.0;
        for t in 0..steps {
            let ids: Vec<usize> = seqs
                .iter()
                .map(|s| if t + 1 < s.len() { s[t] } else { PAD })
                .collect();
            let targets: Vec<Option<usize>> = seqs.iter().map(|s| s.get(t + 1).copied()).collect();
            let (logits, next, cache) = self.decoder.step(&ids, &state)?;
            let (l, dl) = masked_xent(&logits, &targets, scale)?;
            loss += l;
            if keep {
                steps_out.push((cache, dl));
            }
            state = next;
        }
        Ok(Unrolled {
            loss,
            last: state,
            init,
            steps: steps_out,
        })
    }

    /// Mean teacher-forced cross-entropy over all target tokens.
    pub fn loss_from_features(&self, features: &Tensor, seqs: &[Vec<usize>]) -> Result<f64> {
        Ok(self.unroll(features, seqs, false)?.loss)
    }

    /// Same loss; accumulates decoder gradients and returns the feature
    /// gradient alongside.
    pub fn loss_and_grad_from_features(
        &mut self,
        features: &Tensor,
        seqs: &[Vec<usize>],
    ) -> Result<(f64, Tensor)> {
        let u = self.unroll(features, seqs, true)?;
        let mut dstate = u.last.zeros_like();
        for (cache, dl) in u.steps.into_iter().rev() {
            dstate = self.decoder.step_backward(&dl, &dstate, cache)?;
        }
        let df = self.decoder.init_backward(&dstate, u.init)?;
        Ok((u.loss, df))
    }

    /// End-to-end loss; with `grad`, accumulates every parameter gradient.
    pub fn sequence_loss(
        &mut self,
        images: &Tensor,
        seqs: &[Vec<usize>],
        grad: bool,
    ) -> Result<f64> {
        let (features, cache) = self.encoder.forward(images)?;
        if !grad {
            return self.loss_from_features(&features, seqs);
        }
        let (loss, df) = self.loss_and_grad_from_features(&features, seqs)?;
        self.encoder.backward(&df, cache)?;
        Ok(loss)
    }

    /// Greedy decoding for every image of the batch. Output excludes
    /// `<start>` and `<end>` and has at most `max_len` ids.
    pub fn greedy_from_features(
        &self,
        features: &Tensor,
        max_len: usize,
    ) -> Result<Vec<Vec<usize>>> {
        let batch = features.shape()[0];
        let (mut state, _) = self.decoder.init_state(features)?;
        let mut ids = vec![START; batch];
        let mut out = vec![Vec::new(); batch];
        let mut done = vec![false; batch];
        for _ in 0..max_len {
            let (logits, next, _) = self.decoder.step(&ids, &state)?;
            let v = logits.shape()[1];
            for (b, row) in logits.data().chunks_exact(v).enumerate() {
                let tok = argmax(row);
                ids[b] = tok;
                if done[b] {
                    continue;
                }
                if tok == END {
                    done[b] = true;
                } else {
                    out[b].push(tok);
                }
            }
            state = next;
            if done.iter().all(|d| *d) {
                break;
            }
        }
        Ok(out)
    }

    pub fn greedy_decode(&self, image: &Tensor, max_len: usize) -> Result<Vec<usize>> {
        let f = self.features(&self.stack(&[image])?)?;
        Ok(self.greedy_from_features(&f, max_len)?.remove(0))
    }

    /// Like [`greedy_decode`](Self::greedy_decode) but draws each token from
    /// `softmax(logits / temperature)`.
    pub fn sample_decode(
        &self,
        image: &Tensor,
        max_len: usize,
        temperature: f64,
        rng: &mut Rng,
    ) -> Result<Vec<usize>> {
        if !(temperature > 0.0) {
            return Err(Error::Config(format!(
                "temperature {temperature} must be positive"
            )));
        }
        let f = self.features(&self.stack(&[image])?)?;
        let (mut state, _) = self.decoder.init_state(&f)?;
        let mut prev = START;
        let mut out = Vec::new();
        for _ in 0..max_len {
            let (logits, next, _) = self.decoder.step(&[prev], &state)?;
            let scaled = logits.map(|v| v / temperature);
            let probs = softmax_rows(&scaled)?;
            let u = rng.uniform_range(0.0, 1.0);
            let mut acc = 0.0;
            prev = probs.len() - 1;
            for (i, p) in probs.data().iter().enumerate() {
                acc += p;
                if u < acc {
                    prev = i;
                    break;
                }
            }
            if prev == END {
                break;
            }
            out.push(prev);
            state = next;
        }
        Ok(out)
    }

    /// Decoded ids as display text, first letter capitalised.
    pub fn ids_to_caption(&self, ids: &[usize]) -> Result<String> {
        let words = self.vocab.decode(ids)?;
        let text = detokenize(&words);
        let mut chars = text.chars();
        Ok(match chars.next() {
            Some(c) => c.to_uppercase().chain(chars).collect(),
            None => String::new(),
        })
    }

    pub fn caption(&self, image: &Tensor) -> Result<String> {
        let ids = self.greedy_decode(image, self.decoder.config.max_len)?;
        self.ids_to_caption(&ids)
    }

    fn require_classification(&self) -> Result<()> {
        match self.task {
            Task::Classification => Ok(()),
            other => Err(Error::TaskMismatch {
                expected: Task::Classification.to_string(),
                found: other.to_string(),
            }),
        }
    }

    /// Ids of the four class tokens, in class order.
    fn class_ids(&self) -> Result<[usize; 4]> {
        let mut ids = [0; 4];
        for (slot, c) in ids.iter_mut().zip(JewelryClass::ALL) {
            if !self.vocab.contains(c.name()) {
                return Err(Error::LexiconMiss(format!(
                    "class token {:?} not in vocabulary",
                    c.name()
                )));
            }
            *slot = self.vocab.id(c.name());
        }
        Ok(ids)
    }

    /// One step from the initial state; the argmax over the class tokens.
    pub fn classes_from_features(&self, features: &Tensor) -> Result<Vec<JewelryClass>> {
        self.require_classification()?;
        let ids = self.class_ids()?;
        let batch = features.shape()[0];
        let (state, _) = self.decoder.init_state(features)?;
        let (logits, _, _) = self.decoder.step(&vec![START; batch], &state)?;
        let v = logits.shape()[1];
        logits
            .data()
            .chunks_exact(v)
            .map(|row| {
                let scores: Vec<f64> = ids.iter().map(|&i| row[i]).collect();
                JewelryClass::from_index(argmax(&scores))
            })
            .collect()
    }

    pub fn predict_class(&self, image: &Tensor) -> Result<JewelryClass> {
        self.require_classification()?;
        let f = self.features(&self.stack(&[image])?)?;
        Ok(self.classes_from_features(&f)?[0])
    }

    fn layer_params(&self) -> Vec<(String, &LayerParams)> {
        let mut out = self.encoder.layer_params();
        out.extend(self.decoder.layer_params());
        out
    }

    /// Every parameter with its qualified name, in declaration order.
    pub fn named_params(&self) -> Vec<(String, &Param)> {
        self.layer_params()
            .into_iter()
            .flat_map(|(prefix, lp)| lp.iter().map(move |(n, p)| (format!("{prefix}.{n}"), p)))
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut layers = self.encoder.layer_params_mut();
        layers.extend(self.decoder.layer_params_mut());
        layers
            .into_iter()
            .flat_map(|lp| lp.iter_mut().map(|(_, p)| p))
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.named_params().iter().map(|(_, p)| p.value.len()).sum()
    }
}
