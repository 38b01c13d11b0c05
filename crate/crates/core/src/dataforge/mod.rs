//! Synthetic jewelry images, augmentation, stratified splits and the
//! on-disk dataset format.

mod augment;
mod io;
mod render;

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexicon::{
    generate_description, validate_description, DescriptionLevel, JewelryClass, JewelryRecord,
    Lexicon,
};
use crate::tensor::{Rng, Tensor};

pub use augment::{
    apply_augment, background_fill, AugmentOp, BRIGHTNESS_RANGE, MAX_COLOR_GAIN, MAX_CUT_AREA,
    MAX_SHIFT, MAX_ZOOM,
};
pub use io::{read_manifest, read_png, write_manifest, write_png, ManifestRow};
pub use render::{quantize, render_sample, stone_color, STONE_PALETTE};

/// Seed of the per-(class, level) caption choosers. Fixed so that every
/// dataset words a given class the same way.
const CAPTION_SEED: u64 = 0x6A65_7765_6C72_7921;
const SPLIT_STREAM: u64 = u64::MAX;

pub const DEFAULT_FRACTIONS: [f64; 3] = [0.75, 0.15, 0.10];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Material {
    YellowGold,
    RoseGold,
    WhiteGold,
    Silver,
}

impl Material {
    pub const ALL: [Material; 4] = [
        Material::YellowGold,
        Material::RoseGold,
        Material::WhiteGold,
        Material::Silver,
    ];

    pub fn term(self) -> &'static str {
        match self {
            Material::YellowGold => "yellow gold",
            Material::RoseGold => "rose gold",
            Material::WhiteGold => "white gold",
            Material::Silver => "silver",
        }
    }

    pub fn color(self) -> [f64; 3] {
        match self {
            Material::YellowGold => [0.93, 0.75, 0.22],
            Material::RoseGold => [0.85, 0.55, 0.50],
            Material::WhiteGold => [0.95, 0.92, 0.74],
            Material::Silver => [0.62, 0.70, 0.82],
        }
    }

    pub fn parse(term: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.term() == term)
            .ok_or_else(|| Error::LexiconMiss(format!("{term:?} is not a renderable material")))
    }
}

/// Everything needed to redraw one original image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderSpec {
    pub jewelry_class: JewelryClass,
    pub material: String,
    pub stone: Option<String>,
    pub stone_count: usize,
    pub background_shade: f64,
    pub geometry_jitter_seed: u64,
}

impl RenderSpec {
    pub fn sample(class: JewelryClass, rng: &mut Rng) -> Self {
        let material = Material::ALL[rng.below(4)].term().to_string();
        let pick = rng.below(STONE_PALETTE.len() + 1);
        let stone = (pick < STONE_PALETTE.len()).then(|| STONE_PALETTE[pick].0.to_string());
        let stone_count = match class {
            JewelryClass::Necklace => 1,
            JewelryClass::Earrings => 2,
            JewelryClass::Ring => [1, 3][rng.below(2)],
            JewelryClass::Bracelet => 3 + rng.below(3),
        };
        Self {
            jewelry_class: class,
            material,
            stone,
            stone_count,
            background_shade: rng.uniform_range(0.05, 0.35),
            geometry_jitter_seed: rng.next_u64(),
        }
    }

    /// The label this image depicts.
    pub fn record(&self) -> JewelryRecord {
        let mut r = JewelryRecord::new(self.jewelry_class.name(), &self.material);
        if let Some(s) = &self.stone {
            r = r.stone(s, self.stone_count);
        }
        let has_stone = self.stone.is_some();
        match self.jewelry_class {
            JewelryClass::Necklace => r = r.feature("pendant").feature("lobster clasp"),
            JewelryClass::Ring if has_stone => {
                r = r.feature(if self.stone_count == 1 {
                    "central"
                } else {
                    "prong-set"
                })
            }
            JewelryClass::Earrings => {
                if has_stone {
                    r = r.feature("brilliant-cut");
                }
                r = r.feature("push-back clasp");
            }
            _ => {}
        }
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Provenance {
    Original,
    Augmented { parent: String, op: AugmentOp },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Captions {
    pub basic: String,
    pub normal: String,
    pub complete: String,
}

impl Captions {
    pub fn get(&self, level: DescriptionLevel) -> &str {
        match level {
            DescriptionLevel::Basic => &self.basic,
            DescriptionLevel::Normal => &self.normal,
            DescriptionLevel::Complete => &self.complete,
        }
    }

    /// Generates all three levels with the fixed per-(class, level) chooser
    /// and checks each against its grammar.
    pub fn for_spec(spec: &RenderSpec, lex: &Lexicon) -> Result<Self> {
        let record = spec.record();
        let mut out = Vec::with_capacity(3);
        for (li, level) in DescriptionLevel::ALL.into_iter().enumerate() {
            let stream = (spec.jewelry_class.index() * 3 + li) as u64;
            let mut chooser = Rng::split(CAPTION_SEED, stream);
            let c = generate_description(lex, &record, level, true, &mut chooser)?;
            validate_description(&c, level, lex).into_result()?;
            out.push(c);
        }
        let complete = out.pop().unwrap_or_default();
        let normal = out.pop().unwrap_or_default();
        let basic = out.pop().unwrap_or_default();
        Ok(Self {
            basic,
            normal,
            complete,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub image: Tensor,
    pub class_label: JewelryClass,
    pub captions: Captions,
    pub split: Split,
    pub spec: RenderSpec,
    pub provenance: Provenance,
}

impl Sample {
    pub fn parent_id(&self) -> &str {
        match &self.provenance {
            Provenance::Original => &self.id,
            Provenance::Augmented { parent, .. } => parent,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub n_base: usize,
    pub augment_multiplier: usize,
    pub master_seed: u64,
    pub height: usize,
    pub width: usize,
    pub fractions: [f64; 3],
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            n_base: 500,
            augment_multiplier: 3,
            master_seed: 42,
            height: 64,
            width: 64,
            fractions: DEFAULT_FRACTIONS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub samples: Vec<Sample>,
}

fn check_fractions(f: &[f64; 3]) -> Result<()> {
    if f.iter().any(|v| !(*v >= 0.0)) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split fractions {f:?} must be non-negative and sum to 1"
        )));
    }
    Ok(())
}

fn floor_count(fraction: f64, n: usize) -> usize {
    (fraction * n as f64 + 1e-9).floor() as usize
}

/// Split tags for a list of originals, stratified by class. Global counts
/// are `floor(f·n)` for train and validation with the remainder in test;
/// each class gets its floor share plus largest-remainder top-ups.
pub fn assign_splits(
    classes: &[JewelryClass],
    fractions: [f64; 3],
    seed: u64,
) -> Result<Vec<Split>> {
    check_fractions(&fractions)?;
    let mut members: [Vec<usize>; 4] = Default::default();
    for (i, c) in classes.iter().enumerate() {
        members[c.index()].push(i);
    }
    if let Some(empty) = JewelryClass::ALL
        .iter()
        .find(|c| members[c.index()].is_empty())
    {
        return Err(Error::StratificationError(format!(
            "class {empty} has no original images"
        )));
    }
    let n = classes.len();
    let sizes: Vec<usize> = members.iter().map(Vec::len).collect();
    let mut quota = [[0usize; 2]; 4];
    for (s, &f) in fractions[..2].iter().enumerate() {
        let target = floor_count(f, n);
        let mut given = 0;
        for c in 0..4 {
            quota[c][s] = floor_count(f, sizes[c]);
            given += quota[c][s];
        }
        let mut order: Vec<usize> = (0..4).collect();
        let frac = |c: usize| f * sizes[c] as f64 - quota[c][s] as f64;
        order.sort_by(|&a, &b| frac(b).total_cmp(&frac(a)).then(a.cmp(&b)));
        let mut k = 0;
        while given < target && k < 4 * order.len() {
            let c = order[k % 4];
            if quota[c][0] + quota[c][1] < sizes[c] {
                quota[c][s] += 1;
                given += 1;
            }
            k += 1;
        }
    }
    let mut rng = Rng::split(seed, SPLIT_STREAM);
    let mut out = vec![Split::Test; n];
    for c in 0..4 {
        let mut idx = members[c].clone();
        rng.shuffle(&mut idx);
        for (rank, i) in idx.into_iter().enumerate() {
            out[i] = if rank < quota[c][0] {
                Split::Train
            } else if rank < quota[c][0] + quota[c][1] {
                Split::Val
            } else {
                Split::Test
            };
        }
    }
    Ok(out)
}

/// Re-tags `samples` in place: originals are split by [`assign_splits`] and
/// augmented samples copy their parent's split.
pub fn split_dataset(samples: &mut [Sample], fractions: [f64; 3], seed: u64) -> Result<()> {
    let originals: Vec<usize> = (0..samples.len())
        .filter(|&i| samples[i].provenance == Provenance::Original)
        .collect();
    let classes: Vec<JewelryClass> = originals.iter().map(|&i| samples[i].class_label).collect();
    let splits = assign_splits(&classes, fractions, seed)?;
    let mut by_id = HashMap::new();
    for (&i, s) in originals.iter().zip(splits) {
        samples[i].split = s;
        by_id.insert(samples[i].id.clone(), s);
    }
    for s in samples.iter_mut() {
        if let Provenance::Augmented { parent, .. } = &s.provenance {
            s.split = *by_id
                .get(parent)
                .ok_or_else(|| Error::DatasetError(format!("{} has no parent {parent}", s.id)))?;
        }
    }
    Ok(())
}

pub fn original_id(i: usize) -> String {
    format!("orig-{i:06}")
}

pub fn augmented_id(i: usize, k: usize) -> String {
    format!("aug-{i:06}-{k:02}")
}

/// Renders `n_base` originals (class `i mod 4`, so classes are balanced),
/// splits them, then adds `augment_multiplier` augmented children each.
/// Sample `i` draws everything from `Rng::split(master_seed, i)`.
pub fn build_dataset(config: &DatasetConfig, lex: &Lexicon) -> Result<Dataset> {
    if config.n_base < 4 {
        return Err(Error::Config(
            "n_base must be at least 4 (one per class)".into(),
        ));
    }
    check_fractions(&config.fractions)?;
    let mut originals = Vec::with_capacity(config.n_base);
    let mut ops = Vec::with_capacity(config.n_base);
    for i in 0..config.n_base {
        let mut rng = Rng::split(config.master_seed, i as u64);
        let class = JewelryClass::ALL[i % 4];
        let spec = RenderSpec::sample(class, &mut rng);
        let image = render_sample(&spec, config.height, config.width)?;
        let captions = Captions::for_spec(&spec, lex)?;
        ops.push(
            (0..config.augment_multiplier)
                .map(|_| AugmentOp::sample(&mut rng))
                .collect::<Vec<_>>(),
        );
        originals.push(Sample {
            id: original_id(i),
            image,
            class_label: class,
            captions,
            split: Split::Train,
            spec,
            provenance: Provenance::Original,
        });
    }
    let classes: Vec<JewelryClass> = originals.iter().map(|s| s.class_label).collect();
    let splits = assign_splits(&classes, config.fractions, config.master_seed)?;

    let mut samples = Vec::with_capacity(config.n_base * (1 + config.augment_multiplier));
    for (i, ((mut orig, split), ops)) in originals.into_iter().zip(splits).zip(ops).enumerate() {
        orig.split = split;
        let children: Vec<Sample> = ops
            .into_iter()
            .enumerate()
            .map(|(k, op)| {
                let image = apply_augment(&orig.image, &op)?.map(quantize);
                Ok(Sample {
                    id: augmented_id(i, k),
                    image,
                    class_label: orig.class_label,
                    captions: orig.captions.clone(),
                    split,
                    spec: orig.spec.clone(),
                    provenance: Provenance::Augmented {
                        parent: orig.id.clone(),
                        op,
                    },
                })
            })
            .collect::<Result<_>>()?;
        samples.push(orig);
        samples.extend(children);
    }
    Ok(Dataset { samples })
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn split(&self, split: Split) -> Vec<&Sample> {
        self.samples.iter().filter(|s| s.split == split).collect()
    }

    pub fn rows(&self) -> Vec<ManifestRow> {
        self.samples.iter().map(ManifestRow::from_sample).collect()
    }

    /// Writes `images/<id>.png` and `manifest.jsonl` under `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir.join("images"))?;
        let rows = self.rows();
        for (s, row) in self.samples.iter().zip(&rows) {
            write_png(&dir.join(&row.path), &s.image)?;
        }
        write_manifest(&rows, &dir.join("manifest.jsonl"))
    }

    /// Reads a manifest and the images it references (relative to the
    /// manifest's directory).
    pub fn load(manifest: &Path) -> Result<Self> {
        let base = manifest.parent().unwrap_or_else(|| Path::new("."));
        let samples = read_manifest(manifest)?
            .into_iter()
            .map(|row| {
                let image = read_png(&base.join(&row.path))?;
                Ok(row.into_sample(image))
            })
            .collect::<Result<_>>()?;
        Ok(Self { samples })
    }
}
