//! GRU and LSTM cells, one time step each.
//!
//! GRU:
//! ```text
//! z  = σ(x·Wz + h·Uz + bz)
//! r  = σ(x·Wr + h·Ur + br)
//! h̃  = tanh(x·Wh + (r⊙h)·Uh + bh)
//! h' = (1−z)⊙h + z⊙h̃
//! ```
//! LSTM:
//! ```text
//! f, i, o = σ(x·W + h·U + b)   g = tanh(x·Wg + h·Ug + bg)
//! c' = f⊙c + i⊙g               h' = o⊙tanh(c')
//! ```

use super::{
    acc_a_bt, acc_at_b, acc_col_sums, add_row_bias, mm, mm_acc, sigmoid, Init, LayerParams,
};
use crate::error::{Error, Result};
use crate::tensor::{Rng, Tensor};

const GRU_NAMES: [&str; 9] = ["wz", "uz", "bz", "wr", "ur", "br", "wh", "uh", "bh"];
const LSTM_NAMES: [&str; 12] = [
    "wf", "uf", "bf", "wi", "ui", "bi", "wo", "uo", "bo", "wg", "ug", "bg",
];

fn gate_params(names: &[&str], input: usize, hidden: usize, rng: &mut Rng) -> LayerParams {
    let mut params = LayerParams::new();
    for chunk in names.chunks(3) {
        params.push(chunk[0], Init::Lecun.tensor(&[input, hidden], input, rng));
        params.push(chunk[1], Init::Lecun.tensor(&[hidden, hidden], hidden, rng));
        params.push(chunk[2], Tensor::zeros(&[hidden]));
    }
    params
}

fn zero_params(names: &[&str], input: usize, hidden: usize) -> LayerParams {
    let mut params = LayerParams::new();
    for chunk in names.chunks(3) {
        params.push(chunk[0], Tensor::zeros(&[input, hidden]));
        params.push(chunk[1], Tensor::zeros(&[hidden, hidden]));
        params.push(chunk[2], Tensor::zeros(&[hidden]));
    }
    params
}

fn dims(params: &LayerParams) -> (usize, usize) {
    let w = params.at(0).value.shape();
    (w[0], w[1])
}

fn check_inputs(x: &Tensor, h: &Tensor, input: usize, hidden: usize) -> Result<usize> {
    match (x.shape(), h.shape()) {
        ([b, i], [b2, hh]) if *i == input && *hh == hidden && b == b2 => Ok(*b),
        (xs, hs) => Err(Error::ShapeMismatch(format!(
            "cell expects x [batch, {input}] and h [batch, {hidden}], got {xs:?} and {hs:?}"
        ))),
    }
}

/// `x·W + h·U + b` for the gate whose weights start at parameter index `g`.
fn preact(params: &LayerParams, g: usize, x: &[f64], h: &[f64], batch: usize) -> Vec<f64> {
    let (input, hidden) = dims(params);
    let mut a = mm(x, batch, input, params.at(g).value.data(), hidden);
    mm_acc(
        &mut a,
        h,
        batch,
        hidden,
        params.at(g + 1).value.data(),
        hidden,
    );
    add_row_bias(&mut a, params.at(g + 2).value.data());
    a
}

/// Accumulates the gradients of gate `g` given `da` and adds the input and
/// hidden contributions into `dx` and `dh`.
#[allow(clippy::too_many_arguments)]
fn gate_backward(
    params: &mut LayerParams,
    g: usize,
    da: &[f64],
    x: &[f64],
    h: &[f64],
    batch: usize,
    dx: &mut [f64],
    dh: &mut [f64],
) {
    let (input, hidden) = dims(params);
    acc_at_b(
        params.at_mut(g).grad.data_mut(),
        x,
        batch,
        input,
        da,
        hidden,
    );
    acc_at_b(
        params.at_mut(g + 1).grad.data_mut(),
        h,
        batch,
        hidden,
        da,
        hidden,
    );
    acc_col_sums(params.at_mut(g + 2).grad.data_mut(), da, hidden);
    acc_a_bt(dx, da, batch, hidden, params.at(g).value.data(), input);
    acc_a_bt(dh, da, batch, hidden, params.at(g + 1).value.data(), hidden);
}

#[derive(Debug, Clone, PartialEq)]
pub struct GruCell {
    pub params: LayerParams,
}

#[derive(Debug)]
pub struct GruCache {
    x: Tensor,
    h: Tensor,
    z: Vec<f64>,
    r: Vec<f64>,
    rh: Vec<f64>,
    cand: Vec<f64>,
}

impl GruCell {
    pub fn new(input: usize, hidden: usize, rng: &mut Rng) -> Self {
        Self {
            params: gate_params(&GRU_NAMES, input, hidden, rng),
        }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            params: zero_params(&GRU_NAMES, input, hidden),
        }
    }

    pub fn input_dim(&self) -> usize {
        dims(&self.params).0
    }

    pub fn hidden_dim(&self) -> usize {
        dims(&self.params).1
    }

    pub fn forward(&self, x: &Tensor, h: &Tensor) -> Result<(Tensor, GruCache)> {
        let (input, hidden) = dims(&self.params);
        let batch = check_inputs(x, h, input, hidden)?;
        let z: Vec<f64> = preact(&self.params, 0, x.data(), h.data(), batch)
            .into_iter()
            .map(sigmoid)
            .collect();
        let r: Vec<f64> = preact(&self.params, 3, x.data(), h.data(), batch)
            .into_iter()
            .map(sigmoid)
            .collect();
        let rh: Vec<f64> = r.iter().zip(h.data()).map(|(r, h)| r * h).collect();
        let cand: Vec<f64> = preact(&self.params, 6, x.data(), &rh, batch)
            .into_iter()
            .map(f64::tanh)
            .collect();
        let out: Vec<f64> = (0..batch * hidden)
            .map(|k| (1.0 - z[k]) * h.data()[k] + z[k] * cand[k])
            .collect();
        Ok((
            Tensor::from_vec(&[batch, hidden], out)?,
            GruCache {
                x: x.clone(),
                h: h.clone(),
                z,
                r,
                rh,
                cand,
            },
        ))
    }

    /// Returns `(dx, dh)`.
    pub fn backward(&mut self, dh_next: &Tensor, cache: GruCache) -> Result<(Tensor, Tensor)> {
        let (input, hidden) = dims(&self.params);
        let batch = cache.h.shape()[0];
        if dh_next.shape() != [batch, hidden] {
            return Err(Error::ShapeMismatch(format!(
                "gru backward expects [{batch}, {hidden}], got {:?}",
                dh_next.shape()
            )));
        }
        let n = batch * hidden;
        let (h, g) = (cache.h.data(), dh_next.data());
        let mut dh: Vec<f64> = (0..n).map(|k| g[k] * (1.0 - cache.z[k])).collect();
        let daz: Vec<f64> = (0..n)
            .map(|k| g[k] * (cache.cand[k] - h[k]) * cache.z[k] * (1.0 - cache.z[k]))
            .collect();
        let dah: Vec<f64> = (0..n)
            .map(|k| g[k] * cache.z[k] * (1.0 - cache.cand[k] * cache.cand[k]))
            .collect();

        let mut dx = vec![0.0; batch * input];
        // candidate gate: its recurrent input is r⊙h, so route through a scratch buffer
        let mut drh = vec![0.0; n];
        gate_backward(
            &mut self.params,
            6,
            &dah,
            cache.x.data(),
            &cache.rh,
            batch,
            &mut dx,
            &mut drh,
        );
        let dar: Vec<f64> = (0..n)
            .map(|k| drh[k] * h[k] * cache.r[k] * (1.0 - cache.r[k]))
            .collect();
        for k in 0..n {
            dh[k] += drh[k] * cache.r[k];
        }
        gate_backward(
            &mut self.params,
            3,
            &dar,
            cache.x.data(),
            h,
            batch,
            &mut dx,
            &mut dh,
        );
        gate_backward(
            &mut self.params,
            0,
            &daz,
            cache.x.data(),
            h,
            batch,
            &mut dx,
            &mut dh,
        );
        Ok((
            Tensor::from_vec(&[batch, input], dx)?,
            Tensor::from_vec(&[batch, hidden], dh)?,
        ))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmCell {
    pub params: LayerParams,
}

#[derive(Debug)]
pub struct LstmCache {
    x: Tensor,
    h: Tensor,
    c: Tensor,
    f: Vec<f64>,
    i: Vec<f64>,
    o: Vec<f64>,
    g: Vec<f64>,
    tc: Vec<f64>,
}

impl LstmCell {
    pub fn new(input: usize, hidden: usize, rng: &mut Rng) -> Self {
        Self {
            params: gate_params(&LSTM_NAMES, input, hidden, rng),
        }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            params: zero_params(&LSTM_NAMES, input, hidden),
        }
    }

    pub fn input_dim(&self) -> usize {
        dims(&self.params).0
    }

    pub fn hidden_dim(&self) -> usize {
        dims(&self.params).1
    }

    /// Returns `((h', c'), cache)`.
    pub fn forward(
        &self,
        x: &Tensor,
        h: &Tensor,
        c: &Tensor,
    ) -> Result<((Tensor, Tensor), LstmCache)> {
        let (input, hidden) = dims(&self.params);
        let batch = check_inputs(x, h, input, hidden)?;
        if c.shape() != h.shape() {
            return Err(Error::ShapeMismatch(format!(
                "lstm cell state {:?} vs hidden {:?}",
                c.shape(),
                h.shape()
            )));
        }
        let act = |g: usize, f: fn(f64) -> f64| -> Vec<f64> {
            preact(&self.params, g, x.data(), h.data(), batch)
                .into_iter()
                .map(f)
                .collect()
        };
        let f = act(0, sigmoid);
        let i = act(3, sigmoid);
        let o = act(6, sigmoid);
        let g = act(9, f64::tanh);
        let n = batch * hidden;
        let c_next: Vec<f64> = (0..n).map(|k| f[k] * c.data()[k] + i[k] * g[k]).collect();
        let tc: Vec<f64> = c_next.iter().map(|v| v.tanh()).collect();
        let h_next: Vec<f64> = (0..n).map(|k| o[k] * tc[k]).collect();
        Ok((
            (
                Tensor::from_vec(&[batch, hidden], h_next)?,
                Tensor::from_vec(&[batch, hidden], c_next)?,
            ),
            LstmCache {
                x: x.clone(),
                h: h.clone(),
                c: c.clone(),
                f,
                i,
                o,
                g,
                tc,
            },
        ))
    }

    /// Returns `(dx, dh, dc)`.
    pub fn backward(
        &mut self,
        dh_next: &Tensor,
        dc_next: &Tensor,
        cache: LstmCache,
    ) -> Result<(Tensor, Tensor, Tensor)> {
        let (input, hidden) = dims(&self.params);
        let batch = cache.h.shape()[0];
        if dh_next.shape() != [batch, hidden] || dc_next.shape() != [batch, hidden] {
            return Err(Error::ShapeMismatch(format!(
                "lstm backward expects [{batch}, {hidden}], got {:?} and {:?}",
                dh_next.shape(),
                dc_next.shape()
            )));
        }
        let n = batch * hidden;
        let (gh, gc) = (dh_next.data(), dc_next.data());
        let dc: Vec<f64> = (0..n)
            .map(|k| gc[k] + gh[k] * cache.o[k] * (1.0 - cache.tc[k] * cache.tc[k]))
            .collect();
        let daf: Vec<f64> = (0..n)
            .map(|k| dc[k] * cache.c.data()[k] * cache.f[k] * (1.0 - cache.f[k]))
            .collect();
        let dai: Vec<f64> = (0..n)
            .map(|k| dc[k] * cache.g[k] * cache.i[k] * (1.0 - cache.i[k]))
            .collect();
        let dao: Vec<f64> = (0..n)
            .map(|k| gh[k] * cache.tc[k] * cache.o[k] * (1.0 - cache.o[k]))
            .collect();
        let dag: Vec<f64> = (0..n)
            .map(|k| dc[k] * cache.i[k] * (1.0 - cache.g[k] * cache.g[k]))
            .collect();
        let dc_prev: Vec<f64> = (0..n).map(|k| dc[k] * cache.f[k]).collect();

        let mut dx = vec![0.0; batch * input];
        let mut dh = vec![0.0; n];
        let (x, h) = (cache.x.data(), cache.h.data());
        for (g, da) in [(0, &daf), (3, &dai), (6, &dao), (9, &dag)] {
            gate_backward(&mut self.params, g, da, x, h, batch, &mut dx, &mut dh);
        }
        Ok((
            Tensor::from_vec(&[batch, input], dx)?,
            Tensor::from_vec(&[batch, hidden], dh)?,
            Tensor::from_vec(&[batch, hidden], dc_prev)?,
        ))
    }
}
