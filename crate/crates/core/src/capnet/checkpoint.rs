//! Checkpoint layout:
//!
//! ```text
//! "GEMCAP"  version: u8  json_len: u64 LE  json metadata  params: f64 LE…
//! ```
//!
//! Parameters follow [`CaptionModel::named_params`] order; the metadata lists
//! each name and shape so a reader can check the payload before using it.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{DecoderConfig, EncoderConfig, Task};
use super::model::CaptionModel;
use super::train::TrainSummary;
use crate::error::{Error, Result};
use crate::lexicon::Vocabulary;
use crate::tensor::{Rng, Tensor};

pub const MAGIC: &[u8; 6] = b"GEMCAP";
pub const FORMAT_VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: CaptionModel,
    pub summary: TrainSummary,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Metadata {
    encoder: EncoderConfig,
    decoder: DecoderConfig,
    task: Task,
    vocabulary: Vocabulary,
    summary: TrainSummary,
    params: Vec<(String, Vec<usize>)>,
}

impl Checkpoint {
    pub fn untrained(model: CaptionModel) -> Self {
        Self {
            model,
            summary: TrainSummary::default(),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let named = self.model.named_params();
        let meta = Metadata {
            encoder: self.model.encoder.config.clone(),
            decoder: self.model.decoder.config.clone(),
            task: self.model.task,
            vocabulary: self.model.vocab.clone(),
            summary: self.summary.clone(),
            params: named
                .iter()
                .map(|(n, p)| (n.clone(), p.value.shape().to_vec()))
                .collect(),
        };
        let json = serde_json::to_vec(&meta)?;
        let n_values: usize = named.iter().map(|(_, p)| p.value.len()).sum();
        let mut out = Vec::with_capacity(MAGIC.len() + 9 + json.len() + 8 * n_values);
        out.extend_from_slice(MAGIC);
        out.push(FORMAT_VERSION);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, p) in named {
            for v in p.value.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let head = MAGIC.len() + 1 + 8;
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::CheckpointFormatError("missing GEMCAP magic".into()));
        }
        if bytes.len() < head {
            return Err(Error::CheckpointCorrupt("truncated header".into()));
        }
        let version = bytes[MAGIC.len()];
        if version != FORMAT_VERSION {
            return Err(Error::CheckpointFormatError(format!(
                "format version {version}, expected {FORMAT_VERSION}"
            )));
        }
        let len = u64::from_le_bytes(bytes[MAGIC.len() + 1..head].try_into().expect("8 bytes"));
        let json_end = usize::try_from(len)
            .ok()
            .and_then(|l| head.checked_add(l))
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| {
                Error::CheckpointCorrupt("metadata block runs past end of file".into())
            })?;
        let meta: Metadata = serde_json::from_slice(&bytes[head..json_end])
            .map_err(|e| Error::CheckpointCorrupt(format!("metadata: {e}")))?;

        let mut model = CaptionModel::new(
            meta.encoder,
            meta.decoder,
            meta.vocabulary,
            meta.task,
            &mut Rng::new(0),
        )
        .map_err(|e| Error::CheckpointCorrupt(format!("configs: {e}")))?;
        let expected: Vec<(String, Vec<usize>)> = model
            .named_params()
            .into_iter()
            .map(|(n, p)| (n, p.value.shape().to_vec()))
            .collect();
        if expected != meta.params {
            return Err(Error::CheckpointCorrupt(
                "parameter list does not match the stored configs".into(),
            ));
        }
        let mut payload = &bytes[json_end..];
        for (param, (_, shape)) in model.params_mut().into_iter().zip(&meta.params) {
            let n: usize = shape.iter().product();
            if payload.len() < 8 * n {
                return Err(Error::CheckpointCorrupt(
                    "truncated parameter payload".into(),
                ));
            }
            let data = payload[..8 * n]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            param.value = Tensor::from_vec(shape, data)?;
            param.zero_grad();
            payload = &payload[8 * n..];
        }
        if !payload.is_empty() {
            return Err(Error::CheckpointCorrupt(format!(
                "{} trailing bytes after parameters",
                payload.len()
            )));
        }
        Ok(Self {
            model,
            summary: meta.summary,
        })
    }
}

pub fn save_checkpoint(checkpoint: &Checkpoint, path: &Path) -> Result<()> {
    std::fs::write(path, checkpoint.to_bytes()?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capnet::config::CellKind;
    use crate::capnet::model::class_vocabulary;

    fn model(cell: CellKind) -> CaptionModel {
        let enc = EncoderConfig {
            channels: 3,
            height: 8,
            width: 8,
            blocks: vec![3],
            feature_dim: 4,
        };
        let dec = DecoderConfig {
            cell,
            hidden: 3,
            embed_dim: 2,
            max_len: 5,
        };
        CaptionModel::new(
            enc,
            dec,
            class_vocabulary(),
            Task::Classification,
            &mut Rng::new(11),
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        for cell in CellKind::ALL {
            let mut ck = Checkpoint::untrained(model(cell));
            ck.summary.best_epoch = 3;
            ck.summary.best_val_loss = Some(0.1 + 0.2);
            let bytes = ck.to_bytes().unwrap();
            let back = Checkpoint::from_bytes(&bytes).unwrap();
            assert_eq!(back, ck);
            assert_eq!(back.to_bytes().unwrap(), bytes);
        }
    }

    #[test]
    fn planted_faults() {
        let bytes = Checkpoint::untrained(model(CellKind::Gru))
            .to_bytes()
            .unwrap();
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(matches!(
            Checkpoint::from_bytes(&wrong),
            Err(Error::CheckpointFormatError(_))
        ));
        let mut version = bytes.clone();
        version[6] = 9;
        assert!(matches!(
            Checkpoint::from_bytes(&version),
            Err(Error::CheckpointFormatError(_))
        ));
        for cut in [bytes.len() - 1, bytes.len() - 8, 20] {
            assert!(matches!(
                Checkpoint::from_bytes(&bytes[..cut]),
                Err(Error::CheckpointCorrupt(_))
            ));
        }
        let mut extra = bytes;
        extra.push(0);
        assert!(matches!(
            Checkpoint::from_bytes(&extra),
            Err(Error::CheckpointCorrupt(_))
        ));
    }
}
