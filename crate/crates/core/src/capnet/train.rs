use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::config::{DecoderConfig, EncoderConfig, Task, TrainConfig};
use super::model::{class_vocabulary, CaptionModel};
use crate::dataforge::{Dataset, Sample, Split};
use crate::error::{Error, Result};
use crate::evalkit::exact_match;
use crate::lexicon::{JewelryClass, Lexicon, Vocabulary};
use crate::optim::{EarlyStop, Optimizer, StopDecision};
use crate::tensor::Rng;

const EVAL_BATCH: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_ccr: f64,
}

/// What the stored weights correspond to. Loss and CCR are those of the
/// best epoch, not the last one.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSummary {
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub best_val_loss: Option<f64>,
    pub best_val_ccr: Option<f64>,
    pub train: Option<TrainConfig>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<EpochLog>,
}

/// Predictions over one split.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitEval {
    pub loss: f64,
    /// Class accuracy, or caption exact match for captioning models.
    pub ccr: f64,
    pub labels: Vec<JewelryClass>,
    /// Filled for classification models.
    pub predicted: Vec<JewelryClass>,
    /// Filled for captioning models.
    pub captions: Vec<String>,
    pub gold: Vec<String>,
}

fn gold_caption(task: Task, s: &Sample) -> String {
    match task {
        Task::Classification => s.class_label.name().to_string(),
        Task::Captioning(level) => s.captions.get(level).to_string(),
    }
}

pub fn evaluate(model: &CaptionModel, samples: &[&Sample], lex: &Lexicon) -> Result<SplitEval> {
    if samples.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let mut out = SplitEval {
        loss: 0.0,
        ccr: 0.0,
        labels: samples.iter().map(|s| s.class_label).collect(),
        predicted: Vec::new(),
        captions: Vec::new(),
        gold: samples
            .iter()
            .map(|s| gold_caption(model.task, s))
            .collect(),
    };
    let mut weighted = 0.0;
    let mut targets = 0usize;
    for chunk in samples.chunks(EVAL_BATCH) {
        let images = model.stack(&chunk.iter().map(|s| &s.image).collect::<Vec<_>>())?;
        let features = model.features(&images)?;
        let seqs: Vec<Vec<usize>> = chunk
            .iter()
            .map(|s| model.target_ids(lex, s.class_label, &gold_caption(model.task, s)))
            .collect();
        let n: usize = seqs.iter().map(|s| s.len() - 1).sum();
        weighted += model.loss_from_features(&features, &seqs)? * n as f64;
        targets += n;
        match model.task {
            Task::Classification => out
                .predicted
                .extend(model.classes_from_features(&features)?),
            Task::Captioning(_) => {
                for ids in model.greedy_from_features(&features, model.decoder.config.max_len)? {
                    out.captions.push(model.ids_to_caption(&ids)?);
                }
            }
        }
    }
    out.loss = weighted / targets as f64;
    out.ccr = match model.task {
        Task::Classification => crate::evalkit::ccr(&out.predicted, &out.labels)?,
        Task::Captioning(_) => exact_match(&out.captions, &out.gold)?,
    };
    Ok(out)
}

pub fn build_vocabulary(task: Task, train: &[&Sample], lex: &Lexicon) -> Vocabulary {
    match task {
        Task::Classification => class_vocabulary(),
        Task::Captioning(level) => {
            Vocabulary::build(train.iter().map(|s| lex.tokenize(s.captions.get(level))))
        }
    }
}

/// Trains on the train split with early stopping on validation loss and
/// returns the best epoch's weights. `observer` sees every epoch as it ends.
pub fn train(
    dataset: &Dataset,
    encoder: &EncoderConfig,
    decoder: &DecoderConfig,
    cfg: &TrainConfig,
    lex: &Lexicon,
    mut observer: Option<&mut dyn FnMut(&EpochLog)>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let train_set = dataset.split(Split::Train);
    let val_set = dataset.split(Split::Val);
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::DatasetError(format!(
            "need non-empty train and val splits, got {} and {}",
            train_set.len(),
            val_set.len()
        )));
    }
    let vocab = build_vocabulary(cfg.task, &train_set, lex);
    let mut model = CaptionModel::new(
        encoder.clone(),
        decoder.clone(),
        vocab,
        cfg.task,
        &mut Rng::split(cfg.seed, 0),
    )?;
    let seqs: Vec<Vec<usize>> = train_set
        .iter()
        .map(|s| model.target_ids(lex, s.class_label, &gold_caption(cfg.task, s)))
        .collect();
    let mut optimizer = Optimizer::new(cfg.optimizer)?;
    let mut stop = EarlyStop::new(cfg.patience, cfg.min_delta);
    let mut shuffle = Rng::split(cfg.seed, 1);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut best = model.clone();
    let mut summary = TrainSummary {
        train: Some(cfg.clone()),
        ..TrainSummary::default()
    };
    let mut log = Vec::new();

    for epoch in 1..=cfg.max_epochs {
        shuffle.shuffle(&mut order);
        let mut weighted = 0.0;
        let mut targets = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let images = model.stack(
                &chunk
                    .iter()
                    .map(|&i| &train_set[i].image)
                    .collect::<Vec<_>>(),
            )?;
            let batch_seqs: Vec<Vec<usize>> = chunk.iter().map(|&i| seqs[i].clone()).collect();
            let loss = model.sequence_loss(&images, &batch_seqs, !cfg.freeze_parameters)?;
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged(format!(
                    "training loss {loss} in epoch {epoch}"
                )));
            }
            if !cfg.freeze_parameters {
                optimizer.step(model.params_mut())?;
            }
            let n: usize = batch_seqs.iter().map(|s| s.len() - 1).sum();
            weighted += loss * n as f64;
            targets += n;
        }
        let val = evaluate(&model, &val_set, lex)?;
        let entry = EpochLog {
            epoch,
            train_loss: weighted / targets as f64,
            val_loss: val.loss,
            val_ccr: val.ccr,
        };
        if let Some(obs) = observer.as_deref_mut() {
            obs(&entry);
        }
        log.push(entry);
        let decision = stop.update(val.loss)?;
        summary.epochs_run = epoch;
        if stop.improved() {
            best = model.clone();
            summary.best_epoch = epoch;
            summary.best_val_loss = Some(val.loss);
            summary.best_val_ccr = Some(val.ccr);
        }
        if decision == StopDecision::Stop {
            break;
        }
    }
    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            model: best,
            summary,
        },
        log,
    })
}
