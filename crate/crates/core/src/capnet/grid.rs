use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{
    CellKind, DecoderConfig, EncoderScale, Task, TrainConfig, BATCH_SIZES, HIDDEN_SIZES,
};
use super::train::{evaluate, train};
use crate::dataforge::{Dataset, Split};
use crate::error::{Error, Result};
use crate::evalkit::ResultRow;
use crate::lexicon::Lexicon;
use crate::optim::{OptimizerConfig, OptimizerKind, LEARNING_RATES};
use crate::tensor::Rng;

/// Axes of a hyperparameter sweep. Every combination is one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub neurons: Vec<usize>,
    pub batch_sizes: Vec<usize>,
    pub learning_rates: Vec<f64>,
    pub optimizers: Vec<OptimizerKind>,
    pub cells: Vec<CellKind>,
    pub scales: Vec<EncoderScale>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub index: usize,
    pub scale: EncoderScale,
    pub cell: CellKind,
    pub neurons: usize,
    pub batch: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
}

/// Settings shared by every point of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBase {
    pub task: Task,
    pub embed_dim: usize,
    pub max_len: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl GridSpec {
    /// The full published axes: 5 widths × 5 batch sizes × 4 rates × 4
    /// optimizers for each (cell, scale) pair.
    pub fn paper(cells: Vec<CellKind>, scales: Vec<EncoderScale>) -> Self {
        Self {
            neurons: HIDDEN_SIZES.to_vec(),
            batch_sizes: BATCH_SIZES.to_vec(),
            learning_rates: LEARNING_RATES.to_vec(),
            optimizers: OptimizerKind::ALL.to_vec(),
            cells,
            scales,
        }
    }

    /// Errors unless every axis value is one the published grid explores.
    pub fn check_paper_axes(&self) -> Result<()> {
        let bad = |what: &str, v: String| {
            Err(Error::Config(format!(
                "{what} {v} is not on the published grid"
            )))
        };
        if let Some(n) = self.neurons.iter().find(|n| !HIDDEN_SIZES.contains(n)) {
            return bad("neurons", n.to_string());
        }
        if let Some(b) = self.batch_sizes.iter().find(|b| !BATCH_SIZES.contains(b)) {
            return bad("batch size", b.to_string());
        }
        if let Some(l) = self
            .learning_rates
            .iter()
            .find(|l| !LEARNING_RATES.contains(l))
        {
            return bad("learning rate", l.to_string());
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.neurons.len()
            * self.batch_sizes.len()
            * self.learning_rates.len()
            * self.optimizers.len()
            * self.cells.len()
            * self.scales.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Enumeration order: scale, cell, neurons, batch, rate, optimizer.
    pub fn points(&self) -> Vec<GridPoint> {
        let mut out = Vec::with_capacity(self.len());
        for &scale in &self.scales {
            for &cell in &self.cells {
                for &neurons in &self.neurons {
                    for &batch in &self.batch_sizes {
                        for &learning_rate in &self.learning_rates {
                            for &optimizer in &self.optimizers {
                                out.push(GridPoint {
                                    index: out.len(),
                                    scale,
                                    cell,
                                    neurons,
                                    batch,
                                    learning_rate,
                                    optimizer,
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

impl GridPoint {
    /// Row with the point's coordinates and no results yet.
    pub fn empty_row(&self) -> ResultRow {
        let mut row = ResultRow::new(
            self.scale.name(),
            &self.cell.to_string(),
            self.neurons,
            f64::NAN,
            f64::NAN,
            f64::NAN,
        );
        row.batch = Some(self.batch);
        row.learning_rate = Some(self.learning_rate);
        row.optimizer = Some(self.optimizer.name().to_string());
        row
    }
}

fn image_size(dataset: &Dataset) -> Result<(usize, usize)> {
    match dataset.samples.first().map(|s| s.image.shape()) {
        Some([3, h, w]) => Ok((*h, *w)),
        _ => Err(Error::DatasetError(
            "dataset has no [3, h, w] images".into(),
        )),
    }
}

/// Trains one point and scores it on the test split. Failures are recorded
/// in the row rather than returned.
pub fn run_point(
    dataset: &Dataset,
    point: &GridPoint,
    base: &GridBase,
    lex: &Lexicon,
) -> ResultRow {
    let mut row = point.empty_row();
    let result = (|| -> Result<(f64, f64, f64)> {
        let (h, w) = image_size(dataset)?;
        let encoder = point.scale.config(h, w);
        let decoder = DecoderConfig {
            cell: point.cell,
            hidden: point.neurons,
            embed_dim: base.embed_dim,
            max_len: base.max_len,
        };
        let mut cfg = TrainConfig::new(
            base.task,
            point.batch,
            OptimizerConfig::new(point.optimizer, point.learning_rate),
        );
        cfg.max_epochs = base.max_epochs;
        cfg.patience = base.patience;
        cfg.seed = Rng::split(base.seed, point.index as u64).next_u64();
        let outcome = train(dataset, &encoder, &decoder, &cfg, lex, None)?;
        let test = dataset.split(Split::Test);
        let test_eval = evaluate(&outcome.checkpoint.model, &test, lex)?;
        let s = &outcome.checkpoint.summary;
        Ok((
            s.best_val_ccr.unwrap_or(f64::NAN),
            s.best_val_loss.unwrap_or(f64::NAN),
            test_eval.ccr,
        ))
    })();
    match result {
        Ok((val_ccr, val_loss, test_ccr)) => {
            row.val_ccr = val_ccr;
            row.val_loss = val_loss;
            row.test_ccr = test_ccr;
        }
        Err(e) => row.failure = Some(e.to_string()),
    }
    row
}

/// Runs every point; rows come back in enumeration order whatever the
/// thread count. `threads == 0` runs serially on the calling thread.
pub fn run_grid(
    dataset: &Dataset,
    spec: &GridSpec,
    base: &GridBase,
    lex: &Lexicon,
    threads: usize,
) -> Result<Vec<ResultRow>> {
    let points = spec.points();
    if threads == 0 {
        return Ok(points
            .iter()
            .map(|p| run_point(dataset, p, base, lex))
            .collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(|| {
        points
            .par_iter()
            .map(|p| run_point(dataset, p, base, lex))
            .collect()
    }))
}
