use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Row-wise softmax of `[batch, k]` logits, max-subtracted.
pub fn softmax_rows(logits: &Tensor) -> Result<Tensor> {
    let k = match logits.shape() {
        [_, k] => *k,
        s => {
            return Err(Error::ShapeMismatch(format!(
                "softmax expects [batch, k], got {s:?}"
            )))
        }
    };
    let mut out = logits.data().to_vec();
    for row in out.chunks_exact_mut(k) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    Tensor::from_vec(logits.shape(), out)
}

/// Mean cross-entropy over the batch and its gradient `(softmax − onehot)/batch`.
pub fn softmax_xent(logits: &Tensor, targets: &[usize]) -> Result<(f64, Tensor)> {
    let (batch, k) = match logits.shape() {
        [b, k] => (*b, *k),
        s => {
            return Err(Error::ShapeMismatch(format!(
                "softmax_xent expects [batch, k], got {s:?}"
            )))
        }
    };
    if targets.len() != batch {
        return Err(Error::ShapeMismatch(format!(
            "{} targets for batch of {batch}",
            targets.len()
        )));
    }
    if let Some(&bad) = targets.iter().find(|&&t| t >= k) {
        return Err(Error::VocabOverflow { id: bad, size: k });
    }
    let mut grad = logits.data().to_vec();
    let mut loss = 0.0;
    for (row, &t) in grad.chunks_exact_mut(k).zip(targets) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_z = max + sum.ln();
        loss += log_z - row[t];
        for v in row.iter_mut() {
            *v = (*v - log_z).exp() / batch as f64;
        }
        row[t] -= 1.0 / batch as f64;
    }
    Ok((loss / batch as f64, Tensor::from_vec(logits.shape(), grad)?))
}
