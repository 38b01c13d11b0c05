use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Captions, Provenance, RenderSpec, Sample, Split};
use crate::error::{Error, Result};
use crate::lexicon::JewelryClass;
use crate::tensor::Tensor;

/// One manifest line. The image itself lives at `path`, relative to the
/// manifest file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRow {
    pub id: String,
    pub path: String,
    pub split: Split,
    pub class: JewelryClass,
    pub caption_basic: String,
    pub caption_normal: String,
    pub caption_complete: String,
    pub spec: RenderSpec,
    pub provenance: Provenance,
}

impl ManifestRow {
    pub fn from_sample(s: &Sample) -> Self {
        Self {
            id: s.id.clone(),
            path: format!("images/{}.png", s.id),
            split: s.split,
            class: s.class_label,
            caption_basic: s.captions.basic.clone(),
            caption_normal: s.captions.normal.clone(),
            caption_complete: s.captions.complete.clone(),
            spec: s.spec.clone(),
            provenance: s.provenance.clone(),
        }
    }

    pub fn into_sample(self, image: Tensor) -> Sample {
        Sample {
            id: self.id,
            image,
            class_label: self.class,
            captions: Captions {
                basic: self.caption_basic,
                normal: self.caption_normal,
                complete: self.caption_complete,
            },
            split: self.split,
            spec: self.spec,
            provenance: self.provenance,
        }
    }
}

pub fn write_manifest(rows: &[ManifestRow], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for row in rows {
        serde_json::to_writer(&mut w, row)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Blank lines are skipped; any other malformed line is reported with its
/// 1-based number.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    let reader = BufReader::new(File::open(path)?);
    let mut rows = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row = serde_json::from_str(&line).map_err(|e| Error::ManifestParseError {
            line: n + 1,
            message: e.to_string(),
        })?;
        rows.push(row);
    }
    Ok(rows)
}

fn image_err(path: &Path, message: impl ToString) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}

/// 8-bit RGB, each value `round(v·255)`.
pub fn write_png(path: &Path, image: &Tensor) -> Result<()> {
    let (h, w) = match *image.shape() {
        [3, h, w] => (h, w),
        _ => {
            return Err(image_err(
                path,
                format!("expected [3, h, w], got {:?}", image.shape()),
            ))
        }
    };
    let plane = h * w;
    let mut bytes = Vec::with_capacity(3 * plane);
    for p in 0..plane {
        for c in 0..3 {
            bytes.push((image.data()[c * plane + p].clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    let file = BufWriter::new(File::create(path)?);
    let mut enc = png::Encoder::new(file, w as u32, h as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(|e| image_err(path, e))?;
    writer
        .write_image_data(&bytes)
        .map_err(|e| image_err(path, e))?;
    writer.finish().map_err(|e| image_err(path, e))?;
    Ok(())
}

/// Reads an 8-bit PNG (grey, grey-alpha, RGB or RGBA) as `[3, h, w]`.
pub fn read_png(path: &Path) -> Result<Tensor> {
    let mut dec = png::Decoder::new(BufReader::new(File::open(path)?));
    dec.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = dec.read_info().map_err(|e| image_err(path, e))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| image_err(path, "image too large"))?;
    let mut buf = vec![0; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| image_err(path, e))?;
    let (h, w) = (info.height as usize, info.width as usize);
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        png::ColorType::Indexed => return Err(image_err(path, "unexpanded palette image")),
    };
    let plane = h * w;
    let mut data = vec![0.0; 3 * plane];
    for p in 0..plane {
        let px = &buf[p * channels..(p + 1) * channels];
        for c in 0..3 {
            let v = if channels < 3 { px[0] } else { px[c] };
            data[c * plane + p] = v as f64 / 255.0;
        }
    }
    Tensor::from_vec(&[3, h, w], data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataforge::{build_dataset, Dataset, DatasetConfig};
    use crate::lexicon::Lexicon;

    #[test]
    fn empty_manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.jsonl");
        write_manifest(&[], &p).unwrap();
        assert!(read_manifest(&p).unwrap().is_empty());
    }

    #[test]
    fn dataset_round_trip_is_lossless() {
        let cfg = DatasetConfig {
            n_base: 8,
            augment_multiplier: 2,
            height: 32,
            width: 32,
            ..DatasetConfig::default()
        };
        let d = build_dataset(&cfg, &Lexicon::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        d.save(dir.path()).unwrap();
        let back = Dataset::load(&dir.path().join("manifest.jsonl")).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn missing_field_reports_line() {
        let cfg = DatasetConfig {
            n_base: 4,
            augment_multiplier: 0,
            height: 32,
            width: 32,
            ..DatasetConfig::default()
        };
        let d = build_dataset(&cfg, &Lexicon::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.jsonl");
        write_manifest(&d.rows(), &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        let mut v: serde_json::Value = serde_json::from_str(&lines[2]).unwrap();
        v.as_object_mut().unwrap().remove("caption_complete");
        lines[2] = v.to_string();
        std::fs::write(&p, lines.join("\n")).unwrap();
        match read_manifest(&p) {
            Err(Error::ManifestParseError { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("caption_complete"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }
}
