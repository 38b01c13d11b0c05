//! Procedural silhouettes for the four classes.

use super::{Material, RenderSpec};
use crate::error::{Error, Result};
use crate::lexicon::JewelryClass;
use crate::tensor::{Rng, Tensor};

/// Stones the renderer knows how to colour, with their disc colour.
pub const STONE_PALETTE: [(&str, [f64; 3]); 5] = [
    ("diamond", [0.55, 0.95, 1.0]),
    ("ruby", [0.9, 0.05, 0.15]),
    ("emerald", [0.05, 0.8, 0.3]),
    ("sapphire", [0.1, 0.2, 0.95]),
    ("amethyst", [0.65, 0.2, 0.9]),
];

pub fn stone_color(stone: &str) -> Result<[f64; 3]> {
    STONE_PALETTE
        .iter()
        .find(|(s, _)| *s == stone)
        .map(|(_, c)| *c)
        .ok_or_else(|| Error::LexiconMiss(format!("{stone:?} has no render palette")))
}

struct Canvas {
    h: usize,
    w: usize,
    data: Vec<f64>,
}

impl Canvas {
    fn new(h: usize, w: usize, shade: f64) -> Self {
        Self {
            h,
            w,
            data: vec![shade; 3 * h * w],
        }
    }

    /// Paints every pixel whose centre (in unit coordinates, y down)
    /// satisfies `inside`.
    fn paint(&mut self, color: [f64; 3], inside: impl Fn(f64, f64) -> bool) {
        let plane = self.h * self.w;
        for i in 0..self.h {
            let y = (i as f64 + 0.5) / self.h as f64;
            for j in 0..self.w {
                let x = (j as f64 + 0.5) / self.w as f64;
                if inside(x, y) {
                    for (c, v) in color.iter().enumerate() {
                        self.data[c * plane + i * self.w + j] = *v;
                    }
                }
            }
        }
    }

    fn disc(&mut self, color: [f64; 3], cx: f64, cy: f64, r: f64) {
        self.paint(color, |x, y| (x - cx).powi(2) + (y - cy).powi(2) <= r * r);
    }
}

/// `a` with `a·(cosh(half/a) − 1) = sag`, by bisection.
fn catenary_parameter(half: f64, sag: f64) -> f64 {
    let (mut lo, mut hi) = (1e-3, 100.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid * ((half / mid).cosh() - 1.0) > sag {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Renders `spec` as a `[3, h, w]` image with values quantised to 1/255.
pub fn render_sample(spec: &RenderSpec, h: usize, w: usize) -> Result<Tensor> {
    if h < 32 || w < 32 {
        return Err(Error::shape(
            &[3, h, w],
            "rendered images must be at least 32×32",
        ));
    }
    let metal = Material::parse(&spec.material)?.color();
    let stone = spec.stone.as_deref().map(stone_color).transpose()?;
    let mut j = Rng::new(spec.geometry_jitter_seed);
    let mut jitter = |amount: f64| j.uniform_range(-amount, amount);
    let mut canvas = Canvas::new(h, w, spec.background_shade.clamp(0.0, 1.0));
    let count = spec.stone_count.max(1);

    match spec.jewelry_class {
        JewelryClass::Ring => {
            let (cx, cy) = (0.5 + jitter(0.05), 0.55 + jitter(0.05));
            let outer = 0.28 + jitter(0.03);
            let inner = outer - (0.075 + jitter(0.01));
            canvas.paint(metal, |x, y| {
                let d = ((x - cx).powi(2) + (y - cy).powi(2)).sqrt();
                d <= outer && d >= inner
            });
            if let Some(sc) = stone {
                let mid = 0.5 * (outer + inner);
                let angles: &[f64] = if count == 1 {
                    &[0.0]
                } else {
                    &[-0.45, 0.0, 0.45]
                };
                let r = if count == 1 { 0.075 } else { 0.055 };
                for a in angles {
                    let t = -std::f64::consts::FRAC_PI_2 + a;
                    canvas.disc(sc, cx + mid * t.cos(), cy + mid * t.sin(), r);
                }
            }
        }
        JewelryClass::Earrings => {
            let spread = 0.19 + jitter(0.03);
            let top = 0.14 + jitter(0.03);
            let drop_y = top + 0.2 + jitter(0.02);
            let (rx, ry) = (0.065 + jitter(0.01), 0.1 + jitter(0.01));
            for side in [-1.0, 1.0] {
                let cx = 0.5 + side * spread;
                canvas.paint(metal, |x, y| {
                    let d = ((x - cx).powi(2) + (y - top).powi(2)).sqrt();
                    (0.025..=0.045).contains(&d) || (x - cx).abs() < 0.012 && y > top && y < drop_y
                });
                canvas.paint(metal, |x, y| {
                    ((x - cx) / rx).powi(2) + ((y - drop_y) / ry).powi(2) <= 1.0
                });
                if let Some(sc) = stone {
                    canvas.disc(sc, cx, drop_y, 0.042);
                }
            }
        }
        JewelryClass::Necklace => {
            let (left, right) = (0.1 + jitter(0.03), 0.9 + jitter(0.03));
            let top = 0.1 + jitter(0.03);
            let sag = 0.45 + jitter(0.05);
            let half = 0.5 * (right - left);
            let cx = 0.5 * (left + right);
            let a = catenary_parameter(half, sag);
            let curve = |x: f64| top + sag - a * (((x - cx) / a).cosh() - 1.0);
            let beads = 28;
            for b in 0..=beads {
                let x = left + (right - left) * b as f64 / beads as f64;
                canvas.disc(metal, x, curve(x), 0.026);
            }
            let bottom = curve(cx);
            canvas.paint(metal, |x, y| {
                ((x - cx) / 0.06).powi(2) + ((y - bottom - 0.07) / 0.08).powi(2) <= 1.0
            });
            if let Some(sc) = stone {
                canvas.disc(sc, cx, bottom + 0.07, 0.045);
            }
        }
        JewelryClass::Bracelet => {
            let (cx, cy) = (0.5 + jitter(0.04), 0.5 + jitter(0.04));
            let (ax, ay) = (0.36 + jitter(0.03), 0.24 + jitter(0.03));
            let thick = 0.065 + jitter(0.01);
            let gap = jitter(0.3);
            canvas.paint(metal, |x, y| {
                let (dx, dy) = (x - cx, y - cy);
                let r = ((dx / ax).powi(2) + (dy / ay).powi(2)).sqrt();
                let band = (r - 1.0).abs() * ax.min(ay) <= 0.5 * thick;
                let angle = dy.atan2(dx);
                band && (angle - gap).abs() > 0.35
            });
            if let Some(sc) = stone {
                for k in 0..count {
                    let t = std::f64::consts::PI * (0.25 + 0.5 * (k as f64 + 0.5) / count as f64);
                    canvas.disc(sc, cx + ax * t.cos(), cy + ay * t.sin(), 0.04);
                }
            }
        }
    }
    let data = canvas.data.into_iter().map(quantize).collect();
    Tensor::from_vec(&[3, h, w], data)
}

pub fn quantize(v: f64) -> f64 {
    (v.clamp(0.0, 1.0) * 255.0).round() / 255.0
}
