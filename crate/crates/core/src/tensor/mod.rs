//! Dense row-major `f64` tensors and the handful of primitives the layers need.
//!
//! There is no general broadcasting: elementwise ops take either a tensor of the
//! same shape or a scalar. Matrix products go through `matrixmultiply`'s
//! `dgemm`, which runs single-threaded with a fixed summation order.

mod rng;

pub use rng::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

pub enum Fill<'a> {
    Zeros,
    Constant(f64),
    /// Drawn in row-major element order from `rng`.
    Normal {
        mean: f64,
        std: f64,
        rng: &'a mut Rng,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EwOp {
    Add,
    Sub,
    Mul,
    Max,
}

#[derive(Debug, Clone, Copy)]
pub enum Operand<'a> {
    Tensor(&'a Tensor),
    Scalar(f64),
}

impl<'a> From<&'a Tensor> for Operand<'a> {
    fn from(t: &'a Tensor) -> Self {
        Operand::Tensor(t)
    }
}

impl From<f64> for Operand<'_> {
    fn from(v: f64) -> Self {
        Operand::Scalar(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceOp {
    Sum,
    Mean,
    /// Index of the first maximal element along the axis, stored as `f64`.
    Argmax,
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return Err(Error::shape(shape, "rank must be at least 1"));
    }
    if shape.contains(&0) {
        return Err(Error::shape(shape, "every dimension must be positive"));
    }
    Ok(shape.iter().product())
}

impl Tensor {
    pub fn create(shape: &[usize], fill: Fill<'_>) -> Result<Self> {
        let n = check_shape(shape)?;
        let data = match fill {
            Fill::Zeros => vec![0.0; n],
            Fill::Constant(c) => vec![c; n],
            Fill::Normal { mean, std, rng } => (0..n).map(|_| rng.normal(mean, std)).collect(),
        };
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Zero tensor for shapes known to be valid. Panics otherwise.
    pub fn zeros(shape: &[usize]) -> Self {
        Self::create(shape, Fill::Zeros).expect("valid shape")
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let n = check_shape(shape)?;
        if data.len() != n {
            return Err(Error::shape(
                shape,
                format!("{} elements supplied for {} slots", data.len(), n),
            ));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Convenience for tests and small literals: a rank-2 tensor from rows.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::ShapeMismatch("ragged rows".into()));
        }
        Self::from_vec(&[m, n], rows.concat())
    }

    pub fn scalar(v: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![v],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n = check_shape(shape)?;
        if n != self.data.len() {
            return Err(Error::ShapeMismatch(format!(
                "cannot reshape {:?} into {:?}",
                self.shape, shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// `self += other`, shapes must match.
    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch(format!(
                "{:?} += {:?}",
                self.shape, other.shape
            )));
        }
        self.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, b)| *a += b);
        Ok(())
    }

    pub fn squared_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    fn dims2(&self, what: &str) -> Result<(usize, usize)> {
        match self.shape[..] {
            [m, n] => Ok((m, n)),
            _ => Err(Error::ShapeMismatch(format!(
                "{what} must be rank 2, got {:?}",
                self.shape
            ))),
        }
    }

    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (m, k) = self.dims2("left operand")?;
        let (k2, n) = other.dims2("right operand")?;
        if k != k2 {
            return Err(Error::ShapeMismatch(format!(
                "matmul inner dimensions {:?} x {:?}",
                self.shape, other.shape
            )));
        }
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            MatRef::row_major(&self.data, k),
            MatRef::row_major(&other.data, n),
            &mut out,
            0.0,
        );
        Tensor::from_vec(&[m, n], out)
    }

    /// Transpose of a rank-2 tensor.
    pub fn transpose(&self) -> Result<Tensor> {
        let (m, n) = self.dims2("transpose operand")?;
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = self.data[i * n + j];
            }
        }
        Tensor::from_vec(&[n, m], out)
    }

    pub fn ew<'a>(&self, op: EwOp, rhs: impl Into<Operand<'a>>) -> Result<Tensor> {
        let f = |a: f64, b: f64| match op {
            EwOp::Add => a + b,
            EwOp::Sub => a - b,
            EwOp::Mul => a * b,
            EwOp::Max => a.max(b),
        };
        let data = match rhs.into() {
            Operand::Scalar(b) => self.data.iter().map(|&a| f(a, b)).collect(),
            Operand::Tensor(t) => {
                if t.shape != self.shape {
                    return Err(Error::ShapeMismatch(format!(
                        "elementwise {:?} vs {:?}",
                        self.shape, t.shape
                    )));
                }
                self.data
                    .iter()
                    .zip(&t.data)
                    .map(|(&a, &b)| f(a, b))
                    .collect()
            }
        };
        Ok(Tensor {
            shape: self.shape.clone(),
            data,
        })
    }

    /// Reduces along `axis`, removing it. A rank-1 input reduces to shape `[1]`.
    pub fn reduce(&self, op: ReduceOp, axis: usize) -> Result<Tensor> {
        let rank = self.rank();
        if axis >= rank {
            return Err(Error::InvalidAxis { axis, rank });
        }
        let outer: usize = self.shape[..axis].iter().product();
        let len = self.shape[axis];
        let inner: usize = self.shape[axis + 1..].iter().product();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| self.data[(o * len + j) * inner + i];
                out[o * inner + i] = match op {
                    ReduceOp::Sum => (0..len).map(at).sum(),
                    ReduceOp::Mean => (0..len).map(at).sum::<f64>() / len as f64,
                    ReduceOp::Argmax => {
                        let mut best = 0;
                        for j in 1..len {
                            if at(j) > at(best) {
                                best = j;
                            }
                        }
                        best as f64
                    }
                };
            }
        }
        let mut shape: Vec<usize> = self.shape.clone();
        shape.remove(axis);
        if shape.is_empty() {
            shape.push(1);
        }
        Tensor::from_vec(&shape, out)
    }
}

/// Index of the first maximal element.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Strided view of a matrix stored in a flat slice.
#[derive(Clone, Copy)]
pub struct MatRef<'a> {
    data: &'a [f64],
    row_stride: isize,
    col_stride: isize,
}

impl<'a> MatRef<'a> {
    /// Row-major matrix with `cols` columns.
    pub fn row_major(data: &'a [f64], cols: usize) -> Self {
        Self {
            data,
            row_stride: cols as isize,
            col_stride: 1,
        }
    }

    /// The transpose of a row-major matrix with `cols` columns.
    pub fn transposed(data: &'a [f64], cols: usize) -> Self {
        Self {
            data,
            row_stride: 1,
            col_stride: cols as isize,
        }
    }
}

/// `c = a·b + beta·c` with `a: m×k`, `b: k×n` and `c` row-major `m×n`.
pub fn gemm(m: usize, k: usize, n: usize, a: MatRef<'_>, b: MatRef<'_>, c: &mut [f64], beta: f64) {
    assert!(c.len() >= m * n, "output buffer too small");
    let extent = |v: &MatRef<'_>, r: usize, cc: usize| {
        if r == 0 || cc == 0 {
            0
        } else {
            ((r - 1) as isize * v.row_stride + (cc - 1) as isize * v.col_stride) as usize + 1
        }
    };
    assert!(a.data.len() >= extent(&a, m, k), "left operand too small");
    assert!(b.data.len() >= extent(&b, k, n), "right operand too small");
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: the asserts above keep every strided access inside the slices,
    // and `c` is uniquely borrowed.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            a.row_stride,
            a.col_stride,
            b.data.as_ptr(),
            b.row_stride,
            b.col_stride,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::Rng;
    use super::*;
    use proptest::prelude::*;

    fn naive_matmul(a: &Tensor, b: &Tensor) -> Tensor {
        let (m, k) = (a.shape()[0], a.shape()[1]);
        let n = b.shape()[1];
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    out[i * n + j] += a.data()[i * k + p] * b.data()[p * n + j];
                }
            }
        }
        Tensor::from_vec(&[m, n], out).unwrap()
    }

    fn random(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = Rng::new(seed);
        Tensor::create(
            shape,
            Fill::Normal {
                mean: 0.0,
                std: 1.0,
                rng: &mut rng,
            },
        )
        .unwrap()
    }

    fn rel_close(a: &Tensor, b: &Tensor, tol: f64) -> bool {
        a.shape() == b.shape()
            && a.data()
                .iter()
                .zip(b.data())
                .all(|(x, y)| (x - y).abs() <= tol * x.abs().max(y.abs()).max(1.0))
    }

    #[test]
    fn create_fills() {
        let z = Tensor::create(&[2, 2], Fill::Zeros).unwrap();
        assert_eq!(z.data(), &[0.0; 4]);
        let c = Tensor::create(&[3], Fill::Constant(1.5)).unwrap();
        assert_eq!(c.data(), &[1.5, 1.5, 1.5]);
        assert_eq!(random(&[2], 7), random(&[2], 7));
    }

    #[test]
    fn create_rejects_bad_shapes() {
        assert!(matches!(
            Tensor::create(&[2, 0], Fill::Zeros),
            Err(Error::InvalidShape { .. })
        ));
        assert!(matches!(
            Tensor::create(&[], Fill::Zeros),
            Err(Error::InvalidShape { .. })
        ));
    }

    #[test]
    fn matmul_examples() {
        let a = Tensor::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
        let b = Tensor::from_rows(&[&[5.0, 6.0], &[7.0, 8.0]]).unwrap();
        assert_eq!(a.matmul(&b).unwrap().data(), &[19.0, 22.0, 43.0, 50.0]);

        let eye = Tensor::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]).unwrap();
        let x = random(&[2, 3], 1);
        assert_eq!(eye.matmul(&x).unwrap(), x);

        let zero = Tensor::zeros(&[2, 2]);
        assert!(zero.matmul(&x).unwrap().data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn matmul_inner_mismatch() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[2, 3]);
        assert!(matches!(a.matmul(&b), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn matmul_agrees_with_naive_loops() {
        let a = random(&[7, 13], 2);
        let b = random(&[13, 5], 3);
        assert!(rel_close(
            &a.matmul(&b).unwrap(),
            &naive_matmul(&a, &b),
            1e-12
        ));
    }

    #[test]
    fn gemm_transposed_views() {
        let a = random(&[4, 6], 4);
        let b = random(&[4, 3], 5);
        let mut c = vec![0.0; 18];
        // aᵀ·b
        gemm(
            6,
            4,
            3,
            MatRef::transposed(a.data(), 6),
            MatRef::row_major(b.data(), 3),
            &mut c,
            0.0,
        );
        let expect = naive_matmul(&a.transpose().unwrap(), &b);
        assert!(rel_close(
            &Tensor::from_vec(&[6, 3], c).unwrap(),
            &expect,
            1e-12
        ));
    }

    #[test]
    fn elementwise_examples() {
        let a = Tensor::from_vec(&[2], vec![1.0, 2.0]).unwrap();
        let b = Tensor::from_vec(&[2], vec![3.0, 4.0]).unwrap();
        assert_eq!(a.ew(EwOp::Add, &b).unwrap().data(), &[4.0, 6.0]);
        let x = random(&[3, 2], 6);
        assert_eq!(x.ew(EwOp::Mul, 1.0).unwrap(), x);
        let m = Tensor::from_vec(&[2], vec![-1.0, 2.0]).unwrap();
        assert_eq!(m.ew(EwOp::Max, 0.0).unwrap().data(), &[0.0, 2.0]);
        assert!(matches!(
            a.ew(EwOp::Sub, &Tensor::zeros(&[3])),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn reduce_examples() {
        let a = Tensor::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
        assert_eq!(a.reduce(ReduceOp::Sum, 0).unwrap().data(), &[4.0, 6.0]);
        assert_eq!(a.reduce(ReduceOp::Sum, 1).unwrap().data(), &[3.0, 7.0]);
        let c = Tensor::create(&[4, 3], Fill::Constant(2.5)).unwrap();
        assert!(c
            .reduce(ReduceOp::Mean, 1)
            .unwrap()
            .data()
            .iter()
            .all(|v| *v == 2.5));
        let t = Tensor::from_vec(&[3], vec![0.2, 0.9, 0.9]).unwrap();
        let am = t.reduce(ReduceOp::Argmax, 0).unwrap();
        assert_eq!(am.shape(), &[1]);
        assert_eq!(am.data(), &[1.0]);
        assert!(matches!(
            a.reduce(ReduceOp::Sum, 2),
            Err(Error::InvalidAxis { axis: 2, rank: 2 })
        ));
    }

    proptest! {
        #[test]
        fn matmul_is_associative(seed in 0u64..10_000, m in 1usize..6, k in 1usize..6, n in 1usize..6, p in 1usize..6) {
            let a = random(&[m, k], seed);
            let b = random(&[k, n], seed + 1);
            let c = random(&[n, p], seed + 2);
            let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
            let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
            prop_assert!(rel_close(&left, &right, 1e-9));
        }

        #[test]
        fn add_commutes_and_matmul_distributes(seed in 0u64..10_000, m in 1usize..6, k in 1usize..6, n in 1usize..6) {
            let a = random(&[m, k], seed);
            let b = random(&[k, n], seed + 1);
            let c = random(&[k, n], seed + 2);
            prop_assert_eq!(b.ew(EwOp::Add, &c).unwrap(), c.ew(EwOp::Add, &b).unwrap());
            let lhs = a.matmul(&b.ew(EwOp::Add, &c).unwrap()).unwrap();
            let rhs = a.matmul(&b).unwrap().ew(EwOp::Add, &a.matmul(&c).unwrap()).unwrap();
            prop_assert!(rel_close(&lhs, &rhs, 1e-9));
        }

        #[test]
        fn argmax_picks_first_maximum(mut xs in proptest::collection::vec(-5i32..5, 1..20), dup in 0usize..20) {
            // plant a duplicate of the maximum after its first occurrence
            let max = *xs.iter().max().unwrap();
            let first = xs.iter().position(|&x| x == max).unwrap();
            let at = first + 1 + dup % (xs.len() - first);
            if at < xs.len() { xs[at] = max; }
            let t = Tensor::from_vec(&[xs.len()], xs.iter().map(|&x| x as f64).collect()).unwrap();
            prop_assert_eq!(t.reduce(ReduceOp::Argmax, 0).unwrap().data()[0] as usize, first);
            prop_assert_eq!(argmax(t.data()), first);
        }
    }
}
