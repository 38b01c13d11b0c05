use super::{Init, LayerParams};
use crate::error::{Error, Result};
use crate::tensor::{gemm, MatRef, Rng, Tensor};

const K: usize = 3;

/// 3×3 cross-correlation, stride 1, zero padding of width 1.
/// Parameters: `weight [c_out, c_in, 3, 3]`, `bias [c_out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub params: LayerParams,
}

/// Per-sample im2col buffers, `[c_in·9, h·w]` each.
#[derive(Debug)]
pub struct Conv2dCache {
    cols: Vec<Vec<f64>>,
    shape: [usize; 4],
}

impl Conv2d {
    pub fn new(c_in: usize, c_out: usize, init: Init, rng: &mut Rng) -> Self {
        let fan_in = c_in * K * K;
        let mut params = LayerParams::new();
        params.push("weight", init.tensor(&[c_out, c_in, K, K], fan_in, rng));
        params.push("bias", Tensor::zeros(&[c_out]));
        Self { params }
    }

    pub fn from_weights(weight: Tensor, bias: Tensor) -> Result<Self> {
        match weight.shape() {
            [c_out, _, 3, 3] if bias.shape() == [*c_out] => {}
            _ => {
                return Err(Error::ShapeMismatch(format!(
                    "conv weight {:?} with bias {:?}",
                    weight.shape(),
                    bias.shape()
                )))
            }
        }
        let mut params = LayerParams::new();
        params.push("weight", weight);
        params.push("bias", bias);
        Ok(Self { params })
    }

    pub fn in_channels(&self) -> usize {
        self.params.at(0).value.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.params.at(0).value.shape()[0]
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, Conv2dCache)> {
        let [b, c, h, w] = match *x.shape() {
            [b, c, h, w] => [b, c, h, w],
            _ => {
                return Err(Error::ShapeMismatch(format!(
                    "conv2d expects [batch, c, h, w], got {:?}",
                    x.shape()
                )))
            }
        };
        if c != self.in_channels() {
            return Err(Error::ShapeMismatch(format!(
                "conv2d has {} input channels, got {c}",
                self.in_channels()
            )));
        }
        let c_out = self.out_channels();
        let (hw, kk) = (h * w, c * K * K);
        let weight = self.params.at(0).value.data();
        let bias = self.params.at(1).value.data();
        let mut y = vec![0.0; b * c_out * hw];
        let mut cols = Vec::with_capacity(b);
        for s in 0..b {
            let col = im2col(&x.data()[s * c * hw..(s + 1) * c * hw], c, h, w);
            let out = &mut y[s * c_out * hw..(s + 1) * c_out * hw];
            for (o, row) in out.chunks_exact_mut(hw).enumerate() {
                row.fill(bias[o]);
            }
            gemm(
                c_out,
                kk,
                hw,
                MatRef::row_major(weight, kk),
                MatRef::row_major(&col, hw),
                out,
                1.0,
            );
            cols.push(col);
        }
        Ok((
            Tensor::from_vec(&[b, c_out, h, w], y)?,
            Conv2dCache {
                cols,
                shape: [b, c, h, w],
            },
        ))
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, dy: &Tensor, cache: Conv2dCache) -> Result<Tensor> {
        self.backward_impl(dy, cache, true)
            .map(|dx| dx.expect("input gradient requested"))
    }

    /// Parameter gradients only; used when the input is the image itself.
    pub fn backward_params(&mut self, dy: &Tensor, cache: Conv2dCache) -> Result<()> {
        self.backward_impl(dy, cache, false).map(|_| ())
    }

    fn backward_impl(
        &mut self,
        dy: &Tensor,
        cache: Conv2dCache,
        want_dx: bool,
    ) -> Result<Option<Tensor>> {
        let [b, c, h, w] = cache.shape;
        let c_out = self.out_channels();
        if dy.shape() != [b, c_out, h, w] {
            return Err(Error::ShapeMismatch(format!(
                "conv2d backward expects {:?}, got {:?}",
                [b, c_out, h, w],
                dy.shape()
            )));
        }
        let (hw, kk) = (h * w, c * K * K);
        let mut dx = if want_dx {
            vec![0.0; b * c * hw]
        } else {
            Vec::new()
        };
        let mut dcol = vec![0.0; kk * hw];
        for (s, col) in cache.cols.iter().enumerate() {
            let dys = &dy.data()[s * c_out * hw..(s + 1) * c_out * hw];
            {
                let gw = self.params.at_mut(0).grad.data_mut();
                gemm(
                    c_out,
                    hw,
                    kk,
                    MatRef::row_major(dys, hw),
                    MatRef::transposed(col, hw),
                    gw,
                    1.0,
                );
            }
            {
                let gb = self.params.at_mut(1).grad.data_mut();
                for (o, row) in dys.chunks_exact(hw).enumerate() {
                    gb[o] += row.iter().sum::<f64>();
                }
            }
            if want_dx {
                gemm(
                    kk,
                    c_out,
                    hw,
                    MatRef::transposed(self.params.at(0).value.data(), kk),
                    MatRef::row_major(dys, hw),
                    &mut dcol,
                    0.0,
                );
                col2im_acc(&dcol, c, h, w, &mut dx[s * c * hw..(s + 1) * c * hw]);
            }
        }
        if want_dx {
            Ok(Some(Tensor::from_vec(&[b, c, h, w], dx)?))
        } else {
            Ok(None)
        }
    }
}

fn im2col(x: &[f64], c: usize, h: usize, w: usize) -> Vec<f64> {
    let hw = h * w;
    let mut col = vec![0.0; c * K * K * hw];
    for ci in 0..c {
        let plane = &x[ci * hw..(ci + 1) * hw];
        for ky in 0..K {
            for kx in 0..K {
                let row = &mut col[((ci * K + ky) * K + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &plane[sy as usize * w..][..w];
                    let dst = &mut row[y * w..][..w];
                    // dst[x] = src[x + kx - 1] where in range
                    match kx {
                        0 => dst[1..].copy_from_slice(&src[..w - 1]),
                        1 => dst.copy_from_slice(src),
                        _ => dst[..w - 1].copy_from_slice(&src[1..]),
                    }
                }
            }
        }
    }
    col
}

fn col2im_acc(col: &[f64], c: usize, h: usize, w: usize, dx: &mut [f64]) {
    let hw = h * w;
    for ci in 0..c {
        let plane = &mut dx[ci * hw..(ci + 1) * hw];
        for ky in 0..K {
            for kx in 0..K {
                let row = &col[((ci * K + ky) * K + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[sy as usize * w..][..w];
                    let src = &row[y * w..][..w];
                    match kx {
                        0 => dst[..w - 1]
                            .iter_mut()
                            .zip(&src[1..])
                            .for_each(|(d, s)| *d += s),
                        1 => dst.iter_mut().zip(src).for_each(|(d, s)| *d += s),
                        _ => dst[1..]
                            .iter_mut()
                            .zip(&src[..w - 1])
                            .for_each(|(d, s)| *d += s),
                    }
                }
            }
        }
    }
}
