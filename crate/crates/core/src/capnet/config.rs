use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexicon::DescriptionLevel;
use crate::optim::{OptimizerConfig, OptimizerKind};

/// Decoder widths explored by the grid.
pub const HIDDEN_SIZES: [usize; 5] = [64, 128, 256, 512, 1024];
/// Batch sizes explored by the grid.
pub const BATCH_SIZES: [usize; 5] = [4, 8, 32, 128, 512];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    /// Output channels of each conv/relu/pool block.
    pub blocks: Vec<usize>,
    pub feature_dim: usize,
}

impl EncoderConfig {
    /// Four blocks of 16, 32, 64 and 64 channels into 128 features.
    pub fn desk(height: usize, width: usize) -> Self {
        EncoderScale::Desk.config(height, width)
    }

    pub fn validate(&self) -> Result<()> {
        let div = 1usize << self.blocks.len();
        if self.channels == 0 || self.height == 0 || self.width == 0 {
            return Err(Error::Config(
                "encoder input dimensions must be positive".into(),
            ));
        }
        if self.height % div != 0 || self.width % div != 0 {
            return Err(Error::Config(format!(
                "input {}×{} is not divisible by 2^{}",
                self.height,
                self.width,
                self.blocks.len()
            )));
        }
        if self.feature_dim == 0 || self.blocks.contains(&0) {
            return Err(Error::Config(
                "feature_dim and block widths must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Length of the flattened activation after the last block.
    pub fn flat_dim(&self) -> usize {
        let div = 1usize << self.blocks.len();
        let c = self.blocks.last().copied().unwrap_or(self.channels);
        c * (self.height / div) * (self.width / div)
    }
}

/// Named encoder sizes, smallest to largest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderScale {
    Small,
    Desk,
    Wide,
}

impl EncoderScale {
    pub const ALL: [EncoderScale; 3] =
        [EncoderScale::Small, EncoderScale::Desk, EncoderScale::Wide];

    pub fn name(self) -> &'static str {
        match self {
            EncoderScale::Small => "small",
            EncoderScale::Desk => "desk",
            EncoderScale::Wide => "wide",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s.trim().to_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown encoder scale {s:?}")))
    }

    pub fn config(self, height: usize, width: usize) -> EncoderConfig {
        let (blocks, feature_dim) = match self {
            EncoderScale::Small => (vec![8, 16, 32, 32], 64),
            EncoderScale::Desk => (vec![16, 32, 64, 64], 128),
            EncoderScale::Wide => (vec![32, 64, 128, 128], 256),
        };
        EncoderConfig {
            channels: 3,
            height,
            width,
            blocks,
            feature_dim,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Gru,
    Lstm,
}

impl CellKind {
    pub const ALL: [CellKind; 2] = [CellKind::Gru, CellKind::Lstm];

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_lowercase().as_str() {
            "gru" => Ok(CellKind::Gru),
            "lstm" => Ok(CellKind::Lstm),
            _ => Err(Error::Config(format!("unknown cell {s:?}"))),
        }
    }
}

impl fmt::Display for CellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CellKind::Gru => "GRU",
            CellKind::Lstm => "LSTM",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecoderConfig {
    pub cell: CellKind,
    pub hidden: usize,
    pub embed_dim: usize,
    /// Longest caption greedy decoding will emit, in tokens.
    pub max_len: usize,
}

impl DecoderConfig {
    pub fn new(cell: CellKind, hidden: usize) -> Self {
        Self {
            cell,
            hidden,
            embed_dim: 64,
            max_len: 32,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.embed_dim == 0 || self.max_len == 0 {
            return Err(Error::Config("decoder dimensions must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// One class token per image.
    Classification,
    Captioning(DescriptionLevel),
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Task::Classification => f.write_str("classification"),
            Task::Captioning(l) => write!(f, "captioning ({})", l.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub max_epochs: usize,
    pub patience: usize,
    #[serde(default)]
    pub min_delta: f64,
    pub seed: u64,
    pub task: Task,
    /// Skip parameter updates entirely. Only useful for exercising the
    /// early-stopping path.
    #[serde(default)]
    pub freeze_parameters: bool,
}

impl TrainConfig {
    pub fn new(task: Task, batch_size: usize, optimizer: OptimizerConfig) -> Self {
        Self {
            batch_size,
            optimizer,
            max_epochs: 60,
            patience: 10,
            min_delta: 0.0,
            seed: 42,
            task,
            freeze_parameters: false,
        }
    }

    /// Hidden 512, batch 8, Adam at 0.001.
    pub fn paper_classification() -> (DecoderConfig, Self) {
        (
            DecoderConfig::new(CellKind::Gru, 512),
            Self::new(
                Task::Classification,
                8,
                OptimizerConfig::new(OptimizerKind::Adam, 0.001),
            ),
        )
    }

    /// Hidden 256, batch 16, Adam at 0.001.
    pub fn paper_captioning(level: DescriptionLevel) -> (DecoderConfig, Self) {
        (
            DecoderConfig::new(CellKind::Gru, 256),
            Self::new(
                Task::Captioning(level),
                16,
                OptimizerConfig::new(OptimizerKind::Adam, 0.001),
            ),
        )
    }

    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config(
                "batch_size and max_epochs must be positive".into(),
            ));
        }
        if self.patience == 0 || !(self.min_delta >= 0.0) {
            return Err(Error::Config(
                "patience must be positive and min_delta ≥ 0".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_encoder_shapes() {
        let e = EncoderConfig::desk(64, 64);
        e.validate().unwrap();
        assert_eq!(e.flat_dim(), 64 * 4 * 4);
        let mut bad = e.clone();
        bad.height = 36;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn task_serde() {
        let t = Task::Captioning(DescriptionLevel::Normal);
        let s = serde_json::to_string(&t).unwrap();
        assert_eq!(s, r#"{"captioning":"normal"}"#);
        assert_eq!(serde_json::from_str::<Task>(&s).unwrap(), t);
        assert_eq!(
            serde_json::to_string(&Task::Classification).unwrap(),
            r#""classification""#
        );
    }
}
