//! Softmax cross-entropy over (N, K, 1, 1) logits.

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Mean over the batch of `-log softmax(logits)[label]`, stabilized by
/// per-sample max subtraction. Returns the scalar loss and the softmax
/// probabilities (N, K, 1, 1) for the backward pass.
pub fn softmax_cross_entropy_forward<E: Element>(
    logits: &Tensor<E>,
    labels: &[usize],
) -> Result<(E, Tensor<E>)> {
    let s = logits.shape();
    if s.h != 1 || s.w != 1 {
        return Err(Error::ShapeMismatch(format!(
            "logits must be (N, K, 1, 1), got {s}"
        )));
    }
    if labels.len() != s.n {
        return Err(Error::ShapeMismatch(format!(
            "{} labels for {} samples",
            labels.len(),
            s.n
        )));
    }
    let k = s.c;
    for (i, &label) in labels.iter().enumerate() {
        if label >= k {
            return Err(Error::Data(format!(
                "label {label} out of range for {k} classes at sample {i}"
            )));
        }
    }
    let xs = logits.as_slice();
    let mut softmax = Tensor::zeros(s);
    let mut loss_sum = 0.0f64;
    for n in 0..s.n {
        let row = &xs[n * k..(n + 1) * k];
        let max = row.iter().fold(E::neg_infinity(), |a, &b| a.max(b));
        let mut denom = 0.0f64;
        for &v in row {
            denom += (v - max).to_f64().exp();
        }
        let log_denom = denom.ln();
        let out = &mut softmax.as_mut_slice()[n * k..(n + 1) * k];
        for (o, &v) in out.iter_mut().zip(row) {
            *o = E::from_f64(((v - max).to_f64() - log_denom).exp());
        }
        loss_sum += log_denom - (row[labels[n]] - max).to_f64();
    }
    let loss = E::from_f64(loss_sum / s.n as f64);
    Ok((loss, softmax))
}

/// `dlogits = gloss * (softmax - onehot(labels)) / N`.
pub fn softmax_cross_entropy_backward<E: Element>(
    gloss: E,
    softmax: &Tensor<E>,
    labels: &[usize],
) -> Tensor<E> {
    let s = softmax.shape();
    let k = s.c;
    let inv_n = E::from_f64(1.0 / s.n as f64);
    let mut dx = softmax.clone();
    for (n, &label) in labels.iter().enumerate() {
        let row = &mut dx.as_mut_slice()[n * k..(n + 1) * k];
        row[label] = row[label] - E::one();
        for v in row.iter_mut() {
            *v = *v * inv_n * gloss;
        }
    }
    dx
}
