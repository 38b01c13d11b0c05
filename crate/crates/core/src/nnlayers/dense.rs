use super::{acc_a_bt, acc_at_b, acc_col_sums, add_row_bias, mm, Init, LayerParams};
use crate::error::{Error, Result};
use crate::tensor::{Rng, Tensor};

/// Fully connected layer, `y = x · W + b`. Parameters: `weight [in, out]`, `bias [out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub params: LayerParams,
}

#[derive(Debug)]
pub struct DenseCache {
    x: Tensor,
}

impl Dense {
    pub fn new(input: usize, output: usize, init: Init, rng: &mut Rng) -> Self {
        let mut params = LayerParams::new();
        params.push("weight", init.tensor(&[input, output], input, rng));
        params.push("bias", Tensor::zeros(&[output]));
        Self { params }
    }

    pub fn from_weights(weight: Tensor, bias: Tensor) -> Result<Self> {
        if weight.rank() != 2 || bias.shape() != [weight.shape()[1]] {
            return Err(Error::ShapeMismatch(format!(
                "dense weight {:?} with bias {:?}",
                weight.shape(),
                bias.shape()
            )));
        }
        let mut params = LayerParams::new();
        params.push("weight", weight);
        params.push("bias", bias);
        Ok(Self { params })
    }

    pub fn input_dim(&self) -> usize {
        self.params.at(0).value.shape()[0]
    }

    pub fn output_dim(&self) -> usize {
        self.params.at(0).value.shape()[1]
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, DenseCache)> {
        let (inp, out) = (self.input_dim(), self.output_dim());
        let batch = match x.shape() {
            [b, i] if *i == inp => *b,
            s => {
                return Err(Error::ShapeMismatch(format!(
                    "dense expects [batch, {inp}], got {s:?}"
                )))
            }
        };
        let mut y = mm(x.data(), batch, inp, self.params.at(0).value.data(), out);
        add_row_bias(&mut y, self.params.at(1).value.data());
        Ok((
            Tensor::from_vec(&[batch, out], y)?,
            DenseCache { x: x.clone() },
        ))
    }

    pub fn backward(&mut self, dy: &Tensor, cache: DenseCache) -> Result<Tensor> {
        let (inp, out) = (self.input_dim(), self.output_dim());
        let batch = cache.x.shape()[0];
        if dy.shape() != [batch, out] {
            return Err(Error::ShapeMismatch(format!(
                "dense backward expects [{batch}, {out}], got {:?}",
                dy.shape()
            )));
        }
        acc_at_b(
            self.params.at_mut(0).grad.data_mut(),
            cache.x.data(),
            batch,
            inp,
            dy.data(),
            out,
        );
        acc_col_sums(self.params.at_mut(1).grad.data_mut(), dy.data(), out);
        let mut dx = vec![0.0; batch * inp];
        acc_a_bt(
            &mut dx,
            dy.data(),
            batch,
            out,
            self.params.at(0).value.data(),
            inp,
        );
        Tensor::from_vec(&[batch, inp], dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weights_pass_through() {
        let eye = Tensor::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]).unwrap();
        let d = Dense::from_weights(eye.clone(), Tensor::zeros(&[2])).unwrap();
        let x = Tensor::from_rows(&[&[0.3, -2.0], &[5.0, 1.5]]).unwrap();
        assert_eq!(d.forward(&x).unwrap().0, x);
    }

    #[test]
    fn hand_computed_output() {
        let eye = Tensor::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]).unwrap();
        let d = Dense::from_weights(eye, Tensor::from_vec(&[2], vec![1.0, 1.0]).unwrap()).unwrap();
        let x = Tensor::from_rows(&[&[1.0, 2.0]]).unwrap();
        assert_eq!(d.forward(&x).unwrap().0.data(), &[2.0, 3.0]);
    }

    #[test]
    fn wrong_input_width() {
        let d = Dense::new(3, 2, Init::Lecun, &mut Rng::new(0));
        assert!(matches!(
            d.forward(&Tensor::zeros(&[1, 4])),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn backward_accumulates() {
        let mut d = Dense::new(2, 2, Init::Lecun, &mut Rng::new(0));
        let x = Tensor::from_rows(&[&[1.0, 2.0]]).unwrap();
        let dy = Tensor::from_rows(&[&[1.0, 0.0]]).unwrap();
        for _ in 0..2 {
            let (_, c) = d.forward(&x).unwrap();
            d.backward(&dy, c).unwrap();
        }
        assert_eq!(d.params.at(0).grad.data(), &[2.0, 0.0, 4.0, 0.0]);
        assert_eq!(d.params.at(1).grad.data(), &[2.0, 0.0]);
    }
}
