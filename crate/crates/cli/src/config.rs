//! Run configuration: built-in defaults, optionally replaced by a preset,
//! then a JSON file, then command-line flags.

use std::path::Path;

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use gemcap_core::capnet::{
    CellKind, DecoderConfig, EncoderConfig, EncoderScale, GridSpec, Task, TrainConfig,
};
use gemcap_core::dataforge::DatasetConfig;
use gemcap_core::lexicon::DescriptionLevel;
use gemcap_core::optim::{OptimizerConfig, OptimizerKind};

use crate::failure::Failure;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub dataset: DatasetSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub eval: EvalSection,
    /// Axes for `grid`. An absent axis falls back to the single value in
    /// `model`/`train`, or to the published axis under `--paper-grid`.
    /// Cells default to both under `--paper-grid`; scales default to desk.
    pub grid: GridSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    pub n_base: usize,
    pub multiplier: usize,
    pub size: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub encoder_blocks: Vec<usize>,
    pub feature_dim: usize,
    pub cell: CellKind,
    pub hidden: usize,
    pub embed_dim: usize,
    pub max_len: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum TaskName {
    Classification,
    Captioning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub task: TaskName,
    pub level: DescriptionLevel,
    pub batch: usize,
    pub optimizer: String,
    pub lr: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum, Default)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Text,
    Json,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub format: Format,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub neurons: Option<Vec<usize>>,
    pub batch_sizes: Option<Vec<usize>>,
    pub learning_rates: Option<Vec<f64>>,
    pub optimizers: Option<Vec<String>>,
    pub cells: Option<Vec<CellKind>>,
    pub scales: Option<Vec<EncoderScale>>,
}

impl Default for DatasetSection {
    fn default() -> Self {
        let d = DatasetConfig::default();
        Self {
            n_base: d.n_base,
            multiplier: d.augment_multiplier,
            size: d.height,
            seed: d.master_seed,
        }
    }
}

impl Default for ModelSection {
    fn default() -> Self {
        let enc = EncoderScale::Desk.config(64, 64);
        let dec = DecoderConfig::new(CellKind::Gru, 512);
        Self {
            encoder_blocks: enc.blocks,
            feature_dim: enc.feature_dim,
            cell: dec.cell,
            hidden: dec.hidden,
            embed_dim: dec.embed_dim,
            max_len: dec.max_len,
        }
    }
}

impl Default for TrainSection {
    fn default() -> Self {
        let (_, t) = TrainConfig::paper_classification();
        Self {
            task: TaskName::Classification,
            level: DescriptionLevel::Basic,
            batch: t.batch_size,
            optimizer: t.optimizer.kind.name().into(),
            lr: t.optimizer.learning_rate,
            max_epochs: t.max_epochs,
            patience: t.patience,
            seed: t.seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Hidden 512, batch 8, Adam at 0.001, class token only.
    PaperClassification,
    /// Hidden 256, batch 16, Adam at 0.001, captions.
    PaperCaptioning,
}

impl Preset {
    pub fn config(self) -> RunConfig {
        let mut c = RunConfig::default();
        let (dec, train) = match self {
            Preset::PaperClassification => TrainConfig::paper_classification(),
            Preset::PaperCaptioning => {
                c.train.task = TaskName::Captioning;
                TrainConfig::paper_captioning(DescriptionLevel::Basic)
            }
        };
        c.model.cell = dec.cell;
        c.model.hidden = dec.hidden;
        c.train.batch = train.batch_size;
        c.train.optimizer = train.optimizer.kind.name().into();
        c.train.lr = train.optimizer.learning_rate;
        c
    }
}

/// Flags shared by every command that builds data or models. Each one, when
/// given, overrides the corresponding config value.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<std::path::PathBuf>,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Number of original renders.
    #[arg(long = "n")]
    pub n_base: Option<usize>,
    /// Augmented copies per original.
    #[arg(long)]
    pub multiplier: Option<usize>,
    /// Image side in pixels.
    #[arg(long)]
    pub size: Option<usize>,
    /// Dataset seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Encoder scale; replaces the block list and feature width. Repeatable
    /// for `grid`.
    #[arg(long, value_parser = parse_scale)]
    pub scale: Vec<EncoderScale>,
    /// Decoder cell. Repeatable for `grid`.
    #[arg(long, value_parser = parse_cell)]
    pub cell: Vec<CellKind>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub max_len: Option<usize>,
    #[arg(long, value_enum)]
    pub task: Option<TaskName>,
    #[arg(long, value_parser = parse_level)]
    pub level: Option<DescriptionLevel>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub optimizer: Option<String>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    /// Training seed.
    #[arg(long)]
    pub train_seed: Option<u64>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

pub fn parse_scale(s: &str) -> Result<EncoderScale, String> {
    EncoderScale::parse(s).map_err(|e| e.to_string())
}

pub fn parse_cell(s: &str) -> Result<CellKind, String> {
    CellKind::parse(s).map_err(|e| e.to_string())
}

pub fn parse_level(s: &str) -> Result<DescriptionLevel, String> {
    DescriptionLevel::parse(s).map_err(|e| e.to_string())
}

/// Recursively replaces values of `base` with those present in `over`.
fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Parses a config file on top of `base`. Unknown keys are rejected.
pub fn layer_file(base: &RunConfig, text: &str) -> Result<RunConfig, Failure> {
    let over: Value =
        serde_json::from_str(text).map_err(|e| Failure::Usage(format!("config: {e}")))?;
    // A standalone parse reports unknown keys against the file's own text.
    serde_json::from_value::<RunConfig>(over.clone())
        .map_err(|e| Failure::Usage(format!("config: {e}")))?;
    let mut merged = serde_json::to_value(base).expect("config serializes");
    merge(&mut merged, over);
    serde_json::from_value(merged).map_err(|e| Failure::Usage(format!("config: {e}")))
}

impl Overrides {
    /// Defaults, then the preset, then `--config`, then flags.
    pub fn resolve(&self) -> Result<RunConfig, Failure> {
        if self.cell.len() > 1 || self.scale.len() > 1 {
            return Err(Failure::Usage(
                "--cell and --scale take several values only for grid".into(),
            ));
        }
        self.resolve_axes()
    }

    /// Like [`resolve`](Self::resolve) but allows repeated `--cell` and
    /// `--scale`; the first of each goes into the model section.
    pub fn resolve_axes(&self) -> Result<RunConfig, Failure> {
        let mut c = self.preset.map(Preset::config).unwrap_or_default();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
            c = layer_file(&c, &text)?;
        }
        let d = &mut c.dataset;
        set(&mut d.n_base, self.n_base);
        set(&mut d.multiplier, self.multiplier);
        set(&mut d.size, self.size);
        set(&mut d.seed, self.seed);
        let m = &mut c.model;
        if let Some(scale) = self.scale.first() {
            let e = scale.config(64, 64);
            m.encoder_blocks = e.blocks;
            m.feature_dim = e.feature_dim;
        }
        set(&mut m.cell, self.cell.first().copied());
        set(&mut m.hidden, self.hidden);
        set(&mut m.embed_dim, self.embed_dim);
        set(&mut m.max_len, self.max_len);
        let t = &mut c.train;
        set(&mut t.task, self.task);
        set(&mut t.level, self.level);
        set(&mut t.batch, self.batch);
        set(&mut t.optimizer, self.optimizer.clone());
        set(&mut t.lr, self.lr);
        set(&mut t.max_epochs, self.max_epochs);
        set(&mut t.patience, self.patience);
        set(&mut t.seed, self.train_seed);
        set(&mut c.eval.format, self.format);
        c.validate()?;
        Ok(c)
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn usage(e: gemcap_core::Error) -> Failure {
    Failure::Usage(e.to_string())
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), Failure> {
        self.encoder().validate().map_err(usage)?;
        self.decoder().validate().map_err(usage)?;
        self.train_config()?.validate().map_err(usage)?;
        Ok(())
    }

    pub fn dataset_config(&self) -> DatasetConfig {
        DatasetConfig {
            n_base: self.dataset.n_base,
            augment_multiplier: self.dataset.multiplier,
            master_seed: self.dataset.seed,
            height: self.dataset.size,
            width: self.dataset.size,
            ..DatasetConfig::default()
        }
    }

    pub fn encoder(&self) -> EncoderConfig {
        EncoderConfig {
            channels: 3,
            height: self.dataset.size,
            width: self.dataset.size,
            blocks: self.model.encoder_blocks.clone(),
            feature_dim: self.model.feature_dim,
        }
    }

    pub fn decoder(&self) -> DecoderConfig {
        DecoderConfig {
            cell: self.model.cell,
            hidden: self.model.hidden,
            embed_dim: self.model.embed_dim,
            max_len: self.model.max_len,
        }
    }

    pub fn task(&self) -> Task {
        match self.train.task {
            TaskName::Classification => Task::Classification,
            TaskName::Captioning => Task::Captioning(self.train.level),
        }
    }

    pub fn train_config(&self) -> Result<TrainConfig, Failure> {
        let kind = OptimizerKind::parse(&self.train.optimizer).map_err(usage)?;
        let mut t = TrainConfig::new(
            self.task(),
            self.train.batch,
            OptimizerConfig::new(kind, self.train.lr),
        );
        t.max_epochs = self.train.max_epochs;
        t.patience = self.train.patience;
        t.seed = self.train.seed;
        Ok(t)
    }

    /// The sweep for `grid`. With `paper` the published axes fill every
    /// axis the config leaves open, and any given axis must lie on them.
    pub fn grid_spec(
        &self,
        paper: bool,
        cells: &[CellKind],
        scales: &[EncoderScale],
    ) -> Result<GridSpec, Failure> {
        let g = &self.grid;
        let cells = match (cells.is_empty(), &g.cells) {
            (false, _) => cells.to_vec(),
            (true, Some(c)) => c.clone(),
            (true, None) if paper => CellKind::ALL.to_vec(),
            (true, None) => vec![self.model.cell],
        };
        let scales = match (scales.is_empty(), &g.scales) {
            (false, _) => scales.to_vec(),
            (true, Some(s)) => s.clone(),
            (true, None) => vec![EncoderScale::Desk],
        };
        let base = if paper {
            GridSpec::paper(cells, scales)
        } else {
            GridSpec {
                neurons: vec![self.model.hidden],
                batch_sizes: vec![self.train.batch],
                learning_rates: vec![self.train.lr],
                optimizers: vec![OptimizerKind::parse(&self.train.optimizer).map_err(usage)?],
                cells,
                scales,
            }
        };
        let optimizers = match &g.optimizers {
            Some(names) => names
                .iter()
                .map(|n| OptimizerKind::parse(n))
                .collect::<Result<Vec<_>, _>>()
                .map_err(usage)?,
            None => base.optimizers.clone(),
        };
        let spec = GridSpec {
            neurons: g.neurons.clone().unwrap_or(base.neurons),
            batch_sizes: g.batch_sizes.clone().unwrap_or(base.batch_sizes),
            learning_rates: g.learning_rates.clone().unwrap_or(base.learning_rates),
            optimizers,
            cells: base.cells,
            scales: base.scales,
        };
        if paper {
            spec.check_paper_axes().map_err(usage)?;
        }
        if spec.is_empty() {
            return Err(Failure::Usage("grid has an empty axis".into()));
        }
        Ok(spec)
    }
}

pub fn write_config(config: &RunConfig, dir: &Path) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(config).expect("config serializes");
    std::fs::write(dir.join("config.json"), text + "\n").map_err(Failure::io(dir))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_overrides_preset_and_flags_override_file() {
        let base = Preset::PaperCaptioning.config();
        let c = layer_file(
            &base,
            r#"{"train": {"batch": 4}, "dataset": {"n_base": 12}}"#,
        )
        .unwrap();
        assert_eq!((c.train.batch, c.dataset.n_base), (4, 12));
        assert_eq!(c.model.hidden, 256);
        assert_eq!(c.train.task, TaskName::Captioning);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, r#"{"train": {"batch": 4}}"#).unwrap();
        let flags = Overrides {
            config: Some(path),
            preset: Some(Preset::PaperCaptioning),
            batch: Some(32),
            ..Overrides::default()
        };
        let c = flags.resolve().unwrap();
        assert_eq!((c.train.batch, c.model.hidden), (32, 256));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let base = RunConfig::default();
        for text in [
            r#"{"trian": {}}"#,
            r#"{"train": {"batch_size": 4}}"#,
            r#"{"model": {"cell": "rnn"}}"#,
        ] {
            assert!(
                matches!(layer_file(&base, text), Err(Failure::Usage(_))),
                "{text}"
            );
        }
    }

    #[test]
    fn presets_match_published_configs() {
        let c = Preset::PaperClassification.config();
        assert_eq!((c.model.hidden, c.train.batch, c.train.lr), (512, 8, 0.001));
        assert_eq!(c.train.optimizer, "adam");
        let c = Preset::PaperCaptioning.config();
        assert_eq!(
            (c.model.hidden, c.train.batch, c.train.lr),
            (256, 16, 0.001)
        );
    }

    #[test]
    fn paper_grid_checks_given_axes() {
        let mut c = RunConfig::default();
        let spec = c
            .grid_spec(true, &[CellKind::Gru], &[EncoderScale::Desk])
            .unwrap();
        assert_eq!(spec.len(), 400);
        c.grid.batch_sizes = Some(vec![16]);
        assert!(c.grid_spec(true, &[CellKind::Gru], &[]).is_err());
        assert_eq!(c.grid_spec(false, &[], &[]).unwrap().len(), 1);
    }
}
