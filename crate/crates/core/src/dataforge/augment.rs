//! Label-preserving image augmentations on `[3, h, w]` tensors in [0, 1].
//!
//! Every op carries its own parameters, so applying one is a pure
//! function; randomness lives only in [`AugmentOp::sample`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Rng, Tensor};

pub const MAX_SHIFT: f64 = 0.30;
pub const MAX_CUT_AREA: f64 = 0.15;
pub const MAX_ZOOM: f64 = 0.05;
pub const MAX_COLOR_GAIN: f64 = 0.05;
pub const BRIGHTNESS_RANGE: (f64, f64) = (0.2, 1.8);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum AugmentOp {
    /// Counter-clockwise quarter turns.
    Rotate90 {
        k: u8,
    },
    /// Fraction of the width, positive to the right.
    WidthShift {
        fraction: f64,
    },
    /// Fraction of the height, positive downwards.
    HeightShift {
        fraction: f64,
    },
    /// Erases one rectangle given in frame fractions.
    Cut {
        x: f64,
        y: f64,
        width: f64,
        height: f64,
    },
    Zoom {
        factor: f64,
    },
    ColorJitter {
        gains: [f64; 3],
    },
    FlipH,
    FlipV,
    Brightness {
        factor: f64,
    },
}

impl AugmentOp {
    pub const KINDS: [&'static str; 9] = [
        "rotate90",
        "width_shift",
        "height_shift",
        "cut",
        "zoom",
        "color_jitter",
        "flip_h",
        "flip_v",
        "brightness",
    ];

    pub fn name(&self) -> &'static str {
        Self::KINDS[match self {
            AugmentOp::Rotate90 { .. } => 0,
            AugmentOp::WidthShift { .. } => 1,
            AugmentOp::HeightShift { .. } => 2,
            AugmentOp::Cut { .. } => 3,
            AugmentOp::Zoom { .. } => 4,
            AugmentOp::ColorJitter { .. } => 5,
            AugmentOp::FlipH => 6,
            AugmentOp::FlipV => 7,
            AugmentOp::Brightness { .. } => 8,
        }]
    }

    /// Uniform over the nine kinds, then uniform within the kind's bounds.
    pub fn sample(rng: &mut Rng) -> Self {
        let kind = rng.below(Self::KINDS.len());
        Self::sample_kind(kind, rng)
    }

    pub fn sample_kind(kind: usize, rng: &mut Rng) -> Self {
        match kind {
            0 => AugmentOp::Rotate90 {
                k: 1 + rng.below(3) as u8,
            },
            1 => AugmentOp::WidthShift {
                fraction: rng.uniform_range(-MAX_SHIFT, MAX_SHIFT),
            },
            2 => AugmentOp::HeightShift {
                fraction: rng.uniform_range(-MAX_SHIFT, MAX_SHIFT),
            },
            3 => {
                let area = rng.uniform_range(0.0, MAX_CUT_AREA);
                let aspect = rng.uniform_range(0.5, 2.0);
                let width = (area * aspect).sqrt().min(1.0);
                let height = (area / width.max(1e-12)).min(1.0);
                AugmentOp::Cut {
                    x: rng.uniform_range(0.0, 1.0 - width),
                    y: rng.uniform_range(0.0, 1.0 - height),
                    width,
                    height,
                }
            }
            4 => AugmentOp::Zoom {
                factor: 1.0 + rng.uniform_range(-MAX_ZOOM, MAX_ZOOM),
            },
            5 => AugmentOp::ColorJitter {
                gains: [0, 1, 2].map(|_| 1.0 + rng.uniform_range(-MAX_COLOR_GAIN, MAX_COLOR_GAIN)),
            },
            6 => AugmentOp::FlipH,
            7 => AugmentOp::FlipV,
            _ => AugmentOp::Brightness {
                factor: rng.uniform_range(BRIGHTNESS_RANGE.0, BRIGHTNESS_RANGE.1),
            },
        }
    }

    /// The same op with every magnitude forced inside its bound.
    pub fn clamped(self) -> Self {
        let bound = |v: f64, lo: f64, hi: f64| {
            if v.is_nan() {
                0.5 * (lo + hi)
            } else {
                v.clamp(lo, hi)
            }
        };
        match self {
            AugmentOp::Rotate90 { k } => AugmentOp::Rotate90 { k: k % 4 },
            AugmentOp::WidthShift { fraction } => AugmentOp::WidthShift {
                fraction: bound(fraction, -MAX_SHIFT, MAX_SHIFT),
            },
            AugmentOp::HeightShift { fraction } => AugmentOp::HeightShift {
                fraction: bound(fraction, -MAX_SHIFT, MAX_SHIFT),
            },
            AugmentOp::Cut {
                x,
                y,
                width,
                height,
            } => {
                let (mut w, mut h) = (bound(width, 0.0, 1.0), bound(height, 0.0, 1.0));
                if w * h > MAX_CUT_AREA {
                    let s = (MAX_CUT_AREA / (w * h)).sqrt();
                    w *= s;
                    h *= s;
                }
                AugmentOp::Cut {
                    x: bound(x, 0.0, 1.0 - w),
                    y: bound(y, 0.0, 1.0 - h),
                    width: w,
                    height: h,
                }
            }
            AugmentOp::Zoom { factor } => AugmentOp::Zoom {
                factor: bound(factor, 1.0 - MAX_ZOOM, 1.0 + MAX_ZOOM),
            },
            AugmentOp::ColorJitter { gains } => AugmentOp::ColorJitter {
                gains: gains.map(|g| bound(g, 1.0 - MAX_COLOR_GAIN, 1.0 + MAX_COLOR_GAIN)),
            },
            AugmentOp::Brightness { factor } => AugmentOp::Brightness {
                factor: bound(factor, BRIGHTNESS_RANGE.0, BRIGHTNESS_RANGE.1),
            },
            op => op,
        }
    }
}

fn dims(image: &Tensor) -> Result<(usize, usize)> {
    match *image.shape() {
        [3, h, w] => Ok((h, w)),
        _ => Err(Error::ShapeMismatch(format!(
            "augmentations expect [3, h, w], got {:?}",
            image.shape()
        ))),
    }
}

/// Per-channel median of the one-pixel border.
pub fn background_fill(image: &Tensor) -> Result<[f64; 3]> {
    let (h, w) = dims(image)?;
    let plane = h * w;
    let mut out = [0.0; 3];
    for (c, slot) in out.iter_mut().enumerate() {
        let px = |i: usize, j: usize| image.data()[c * plane + i * w + j];
        let mut border: Vec<f64> = Vec::with_capacity(2 * (h + w));
        for j in 0..w {
            border.push(px(0, j));
            if h > 1 {
                border.push(px(h - 1, j));
            }
        }
        for i in 1..h.saturating_sub(1) {
            border.push(px(i, 0));
            if w > 1 {
                border.push(px(i, w - 1));
            }
        }
        border.sort_by(f64::total_cmp);
        *slot = border[border.len() / 2];
    }
    Ok(out)
}

/// Builds the output by pulling each pixel from `source(i, j)`, which
/// returns input coordinates or `None` for out-of-frame.
fn remap(
    image: &Tensor,
    h: usize,
    w: usize,
    fill: [f64; 3],
    source: impl Fn(usize, usize) -> Option<(usize, usize)>,
) -> Vec<f64> {
    let plane = h * w;
    let mut out = vec![0.0; 3 * plane];
    for i in 0..h {
        for j in 0..w {
            let src = source(i, j);
            for c in 0..3 {
                out[c * plane + i * w + j] = match src {
                    Some((si, sj)) => image.data()[c * plane + si * w + sj],
                    None => fill[c],
                };
            }
        }
    }
    out
}

fn inside(v: f64, n: usize) -> Option<usize> {
    let r = v.round();
    (r >= 0.0 && r < n as f64).then_some(r as usize)
}

/// Applies `op` (after clamping it to its bounds). The result has the input
/// shape and values in [0, 1].
pub fn apply_augment(image: &Tensor, op: &AugmentOp) -> Result<Tensor> {
    let (h, w) = dims(image)?;
    let op = op.clamped();
    let fill = background_fill(image)?;
    let (ci, cj) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let data = match op {
        AugmentOp::Rotate90 { k } => {
            let mut cur = image.data().to_vec();
            for _ in 0..k {
                let t = Tensor::from_vec(&[3, h, w], cur)?;
                let f = background_fill(&t)?;
                cur = remap(&t, h, w, f, |i, j| {
                    let (di, dj) = (i as f64 - ci, j as f64 - cj);
                    Some((inside(ci + dj, h)?, inside(cj - di, w)?))
                });
            }
            cur
        }
        AugmentOp::WidthShift { fraction } => {
            let d = (fraction * w as f64).round() as isize;
            remap(image, h, w, fill, |i, j| {
                let sj = j as isize - d;
                (sj >= 0 && sj < w as isize).then_some((i, sj as usize))
            })
        }
        AugmentOp::HeightShift { fraction } => {
            let d = (fraction * h as f64).round() as isize;
            remap(image, h, w, fill, |i, j| {
                let si = i as isize - d;
                (si >= 0 && si < h as isize).then_some((si as usize, j))
            })
        }
        AugmentOp::Cut {
            x,
            y,
            width,
            height,
        } => {
            let j0 = (x * w as f64).round() as usize;
            let i0 = (y * h as f64).round() as usize;
            let j1 = (j0 + (width * w as f64).floor() as usize).min(w);
            let i1 = (i0 + (height * h as f64).floor() as usize).min(h);
            remap(image, h, w, fill, |i, j| {
                (!((i0..i1).contains(&i) && (j0..j1).contains(&j))).then_some((i, j))
            })
        }
        AugmentOp::Zoom { factor } => remap(image, h, w, fill, |i, j| {
            Some((
                inside(ci + (i as f64 - ci) / factor, h)?,
                inside(cj + (j as f64 - cj) / factor, w)?,
            ))
        }),
        AugmentOp::ColorJitter { gains } => {
            let plane = h * w;
            image
                .data()
                .iter()
                .enumerate()
                .map(|(idx, v)| (v * gains[idx / plane]).clamp(0.0, 1.0))
                .collect()
        }
        AugmentOp::FlipH => remap(image, h, w, fill, |i, j| Some((i, w - 1 - j))),
        AugmentOp::FlipV => remap(image, h, w, fill, |i, j| Some((h - 1 - i, j))),
        AugmentOp::Brightness { factor } => {
            if factor == 1.0 {
                image.data().to_vec()
            } else {
                image
                    .data()
                    .iter()
                    .map(|v| (v * factor).clamp(0.0, 1.0))
                    .collect()
            }
        }
    };
    Tensor::from_vec(
        &[3, h, w],
        data.into_iter().map(|v| v.clamp(0.0, 1.0)).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Fill;

    fn random_image(h: usize, w: usize, seed: u64) -> Tensor {
        let mut rng = Rng::new(seed);
        let data = (0..3 * h * w).map(|_| rng.uniform()).collect();
        Tensor::from_vec(&[3, h, w], data).unwrap()
    }

    #[test]
    fn quarter_turn_moves_corner() {
        // single channel marker at (0, w-1) goes to (0, 0) under a CCW turn
        let mut img = Tensor::zeros(&[3, 4, 4]);
        img.data_mut()[3] = 1.0;
        let out = apply_augment(&img, &AugmentOp::Rotate90 { k: 1 }).unwrap();
        assert_eq!(out.data()[0], 1.0);
        assert_eq!(out.data().iter().filter(|v| **v == 1.0).count(), 1);
    }

    #[test]
    fn group_identities() {
        let img = random_image(9, 9, 1);
        let mut r = img.clone();
        for _ in 0..4 {
            r = apply_augment(&r, &AugmentOp::Rotate90 { k: 1 }).unwrap();
        }
        assert_eq!(r, img);
        for op in [AugmentOp::FlipH, AugmentOp::FlipV] {
            let twice = apply_augment(&apply_augment(&img, &op).unwrap(), &op).unwrap();
            assert_eq!(twice, img);
        }
        assert_eq!(
            apply_augment(&img, &AugmentOp::Brightness { factor: 1.0 }).unwrap(),
            img
        );
    }

    #[test]
    fn shift_fills_with_background() {
        let img = Tensor::create(&[3, 8, 10], Fill::Constant(0.25)).unwrap();
        let mut marked = img.clone();
        marked.data_mut()[8 * 10 / 2 + 5] = 0.9;
        let out = apply_augment(&marked, &AugmentOp::WidthShift { fraction: 0.3 }).unwrap();
        // 0.3 · 10 = 3 columns
        assert_eq!(out.data()[8 * 10 / 2 + 8], 0.9);
        assert_eq!(out.data()[0], 0.25);
    }

    #[test]
    fn cut_area_is_capped() {
        let op = AugmentOp::Cut {
            x: 0.0,
            y: 0.0,
            width: 1.0,
            height: 1.0,
        }
        .clamped();
        match op {
            AugmentOp::Cut { width, height, .. } => assert!(width * height <= MAX_CUT_AREA + 1e-12),
            _ => unreachable!(),
        }
        let img = Tensor::create(&[3, 20, 20], Fill::Constant(0.5)).unwrap();
        let mut marked = img.clone();
        for v in marked.data_mut().iter_mut().step_by(7) {
            *v = 1.0;
        }
        let out = apply_augment(&marked, &op).unwrap();
        let changed = out
            .data()
            .iter()
            .zip(marked.data())
            .filter(|(a, b)| a != b)
            .count();
        assert!(changed as f64 <= 3.0 * 400.0 * MAX_CUT_AREA);
    }

    #[test]
    fn magnitudes_clamp_to_bounds() {
        assert_eq!(
            AugmentOp::Brightness { factor: 5.0 }.clamped(),
            AugmentOp::Brightness { factor: 1.8 }
        );
        assert_eq!(
            AugmentOp::WidthShift { fraction: -0.9 }.clamped(),
            AugmentOp::WidthShift { fraction: -0.3 }
        );
        assert_eq!(
            AugmentOp::Zoom { factor: 2.0 }.clamped(),
            AugmentOp::Zoom { factor: 1.05 }
        );
    }

    #[test]
    fn sampled_ops_respect_bounds() {
        let mut rng = Rng::new(4);
        for _ in 0..2000 {
            let op = AugmentOp::sample(&mut rng);
            assert_eq!(op.clamped(), op, "{op:?}");
        }
    }

    #[test]
    fn serde_round_trip() {
        let op = AugmentOp::Cut {
            x: 0.1,
            y: 0.2,
            width: 0.3,
            height: 0.4,
        };
        let json = serde_json::to_string(&op).unwrap();
        assert!(json.contains("\"op\":\"cut\""));
        assert_eq!(serde_json::from_str::<AugmentOp>(&json).unwrap(), op);
    }

    #[test]
    fn wrong_rank_rejected() {
        assert!(apply_augment(&Tensor::zeros(&[4, 4]), &AugmentOp::FlipH).is_err());
    }
}
