use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug)]
pub struct MaxPoolCache {
    /// Flat input index chosen for each output element.
    argmax: Vec<usize>,
    input_shape: Vec<usize>,
}

impl MaxPoolCache {
    /// Smallest gap between a window's maximum and its runner-up. Finite
    /// differences with a step below half this value never change the winner.
    pub fn min_margin(&self, x: &Tensor) -> f64 {
        let w = self.input_shape[3];
        let mut margin = f64::INFINITY;
        for &best in &self.argmax {
            let (row, col) = (best / w, best % w);
            let top = row - row % 2;
            let left = col - col % 2;
            for dy in 0..2 {
                for dx in 0..2 {
                    let i = (top + dy) * w + left + dx;
                    if i != best {
                        margin = margin.min(x.data()[best] - x.data()[i]);
                    }
                }
            }
        }
        margin
    }
}

/// 2×2 max pooling with stride 2. Ties go to the first position in
/// row-major window order.
pub fn maxpool2(x: &Tensor) -> Result<(Tensor, MaxPoolCache)> {
    let [b, c, h, w] = match *x.shape() {
        [b, c, h, w] => [b, c, h, w],
        _ => {
            return Err(Error::ShapeMismatch(format!(
                "maxpool2 expects [batch, c, h, w], got {:?}",
                x.shape()
            )))
        }
    };
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::shape(x.shape(), "maxpool2 needs even spatial dims"));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut y = Vec::with_capacity(b * c * oh * ow);
    let mut argmax = Vec::with_capacity(b * c * oh * ow);
    let data = x.data();
    for plane in 0..b * c {
        let base = plane * h * w;
        for i in 0..oh {
            for j in 0..ow {
                let mut best = base + 2 * i * w + 2 * j;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * i + dy) * w + 2 * j + dx;
                    if data[idx] > data[best] {
                        best = idx;
                    }
                }
                y.push(data[best]);
                argmax.push(best);
            }
        }
    }
    Ok((
        Tensor::from_vec(&[b, c, oh, ow], y)?,
        MaxPoolCache {
            argmax,
            input_shape: x.shape().to_vec(),
        },
    ))
}

pub fn maxpool2_backward(dy: &Tensor, cache: MaxPoolCache) -> Result<Tensor> {
    if dy.len() != cache.argmax.len() {
        return Err(Error::ShapeMismatch(format!(
            "maxpool2 backward got {} gradients for {} outputs",
            dy.len(),
            cache.argmax.len()
        )));
    }
    let mut dx = Tensor::zeros(&cache.input_shape);
    let out = dx.data_mut();
    for (&idx, &g) in cache.argmax.iter().zip(dy.data()) {
        out[idx] += g;
    }
    Ok(dx)
}

#[derive(Debug)]
pub struct ReluCache {
    mask: Vec<bool>,
    shape: Vec<usize>,
}

/// `max(x, 0)`; the subgradient at exactly zero is zero.
pub fn relu(x: &Tensor) -> (Tensor, ReluCache) {
    let mask: Vec<bool> = x.data().iter().map(|&v| v > 0.0).collect();
    let y = x.map(|v| if v > 0.0 { v } else { 0.0 });
    (
        y,
        ReluCache {
            mask,
            shape: x.shape().to_vec(),
        },
    )
}

pub fn relu_backward(dy: &Tensor, cache: ReluCache) -> Result<Tensor> {
    if dy.shape() != cache.shape.as_slice() {
        return Err(Error::ShapeMismatch(format!(
            "relu backward {:?} vs {:?}",
            dy.shape(),
            cache.shape
        )));
    }
    let data = dy
        .data()
        .iter()
        .zip(&cache.mask)
        .map(|(&g, &m)| if m { g } else { 0.0 })
        .collect();
    Tensor::from_vec(&cache.shape, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Fill;

    #[test]
    fn constant_image_stays_constant() {
        let x = Tensor::create(&[1, 2, 4, 6], Fill::Constant(0.3)).unwrap();
        let (y, _) = maxpool2(&x).unwrap();
        assert_eq!(y.shape(), &[1, 2, 2, 3]);
        assert!(y.data().iter().all(|v| *v == 0.3));
    }

    #[test]
    fn gradient_goes_to_the_max() {
        let x = Tensor::from_vec(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (y, cache) = maxpool2(&x).unwrap();
        assert_eq!(y.data(), &[4.0]);
        let dx =
            maxpool2_backward(&Tensor::from_vec(&[1, 1, 1, 1], vec![1.0]).unwrap(), cache).unwrap();
        assert_eq!(dx.data(), &[0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn ties_route_to_first_position() {
        let x = Tensor::create(&[1, 1, 2, 2], Fill::Constant(1.0)).unwrap();
        let (_, cache) = maxpool2(&x).unwrap();
        let dx =
            maxpool2_backward(&Tensor::from_vec(&[1, 1, 1, 1], vec![1.0]).unwrap(), cache).unwrap();
        assert_eq!(dx.data(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn odd_dims_rejected() {
        assert!(matches!(
            maxpool2(&Tensor::zeros(&[1, 1, 3, 4])),
            Err(Error::InvalidShape { .. })
        ));
    }

    #[test]
    fn relu_cases() {
        let x = Tensor::from_vec(&[3], vec![-1.0, 0.0, 2.0]).unwrap();
        let (y, cache) = relu(&x);
        assert_eq!(y.data(), &[0.0, 0.0, 2.0]);
        let dx =
            relu_backward(&Tensor::from_vec(&[3], vec![1.0, 1.0, 1.0]).unwrap(), cache).unwrap();
        assert_eq!(dx.data(), &[0.0, 0.0, 1.0]);
        let pos = Tensor::from_vec(&[2], vec![0.5, 3.0]).unwrap();
        assert_eq!(relu(&pos).0, pos);
    }
}
