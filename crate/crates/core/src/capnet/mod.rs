//! The encoder-decoder model, its training loop, greedy decoding,
//! checkpoints and the hyperparameter grid.
//!
//! Classification is single-token captioning: the decoder sees `<start>`
//! and must emit the class name.

mod checkpoint;
mod config;
mod grid;
mod model;
pub mod probes;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, FORMAT_VERSION, MAGIC};
pub use config::{
    CellKind, DecoderConfig, EncoderConfig, EncoderScale, Task, TrainConfig, BATCH_SIZES,
    HIDDEN_SIZES,
};
pub use grid::{run_grid, run_point, GridBase, GridPoint, GridSpec};
pub use model::{class_vocabulary, CaptionModel, Cell, Decoder, DecoderState, Encoder};
pub use train::{
    build_vocabulary, evaluate, train, EpochLog, SplitEval, TrainOutcome, TrainSummary,
};
