//! Batch-mean losses. Each returns the scalar loss (accumulated in `f64`)
//! and its gradient with respect to the first argument.

use crate::error::{NnError, Result};
use crate::layers::softmax_rows;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const PROB_CLAMP: f64 = 1e-7;

fn check_pair<T>(a: &[T], b: &[T]) -> Result<()> {
    if a.len() != b.len() || a.is_empty() {
        return Err(NnError::LossInput(format!(
            "prediction and target lengths {} and {} must match and be non-zero",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// Binary cross-entropy on probabilities, clamped to `[1e-7, 1 - 1e-7]`.
pub fn bce<T: Scalar>(prob: &[T], target: &[T]) -> Result<(f64, Vec<T>)> {
    check_pair(prob, target)?;
    let n = prob.len() as f64;
    let mut loss = 0.0f64;
    let mut grad = Vec::with_capacity(prob.len());
    for (&p, &t) in prob.iter().zip(target) {
        if !p.is_finite() {
            return Err(NnError::LossInput(format!("non-finite probability {p}")));
        }
        let (p, t) = (p.as_f64(), t.as_f64());
        let inside = p > PROB_CLAMP && p < 1.0 - PROB_CLAMP;
        let pc = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        loss -= t * pc.ln() + (1.0 - t) * (1.0 - pc).ln();
        let g = if inside { (pc - t) / (pc * (1.0 - pc)) } else { 0.0 };
        grad.push(T::of(g / n));
    }
    Ok((loss / n, grad))
}

/// `bce(sigmoid(logit), target)` evaluated without forming the probability,
/// so saturated logits keep a useful gradient.
pub fn bce_with_logits<T: Scalar>(logits: &[T], target: &[T]) -> Result<(f64, Vec<T>)> {
    check_pair(logits, target)?;
    let n = logits.len() as f64;
    let mut loss = 0.0f64;
    let mut grad = Vec::with_capacity(logits.len());
    for (&z, &t) in logits.iter().zip(target) {
        if !z.is_finite() {
            return Err(NnError::LossInput(format!("non-finite logit {z}")));
        }
        let (z, t) = (z.as_f64(), t.as_f64());
        // max(z,0) - z t + ln(1 + e^{-|z|})
        loss += z.max(0.0) - z * t + (-z.abs()).exp().ln_1p();
        let p = 1.0 / (1.0 + (-z).exp());
        grad.push(T::of((p - t) / n));
    }
    Ok((loss / n, grad))
}

/// Classification target: one class index per row or a distribution per row.
#[derive(Clone, Copy, Debug)]
pub enum ClassTarget<'a, T: Scalar = f32> {
    Index(&'a [usize]),
    Soft(&'a Tensor<T>),
}

/// Softmax cross-entropy on `(N, K)` logits.
pub fn cross_entropy<T: Scalar>(logits: &Tensor<T>, target: ClassTarget<'_, T>) -> Result<(f64, Tensor<T>)> {
    logits.expect_rank("cross_entropy", 2)?;
    let (n, k) = (logits.shape()[0], logits.shape()[1]);
    if n == 0 {
        return Err(NnError::LossInput("empty batch".into()));
    }
    let probs = softmax_rows(logits)?;
    let mut grad = probs.data().to_vec();
    let mut loss = 0.0f64;
    match target {
        ClassTarget::Index(idx) => {
            if idx.len() != n {
                return Err(NnError::LossInput(format!("{} targets for batch of {n}", idx.len())));
            }
            for (row, &c) in idx.iter().enumerate() {
                if c >= k {
                    return Err(NnError::TargetOutOfRange { index: c, classes: k });
                }
                loss -= probs.data()[row * k + c].as_f64().max(PROB_CLAMP).ln();
                grad[row * k + c] -= T::one();
            }
        }
        ClassTarget::Soft(t) => {
            logits.expect_same_shape("cross_entropy", t)?;
            for (j, (&p, &q)) in probs.data().iter().zip(t.data()).enumerate() {
                if q < T::zero() || !q.is_finite() {
                    return Err(NnError::LossInput(format!("invalid target probability {q}")));
                }
                if q > T::zero() {
                    loss -= q.as_f64() * p.as_f64().max(PROB_CLAMP).ln();
                }
                grad[j] -= q;
            }
        }
    }
    let inv_n = T::of(1.0 / n as f64);
    grad.iter_mut().for_each(|g| *g *= inv_n);
    Ok((loss / n as f64, Tensor::new(vec![n, k], grad)?))
}

/// Fraction of rows whose argmax equals the target index.
pub fn accuracy<T: Scalar>(logits: &Tensor<T>, target: &[usize]) -> f32 {
    let k = logits.shape()[1];
    let hits = logits
        .data()
        .chunks(k)
        .zip(target)
        .filter(|(row, &t)| argmax(row) == t)
        .count();
    hits as f32 / target.len().max(1) as f32
}

pub fn argmax<T: Scalar>(row: &[T]) -> usize {
    row.iter()
        .enumerate()
        .fold(
            (0, T::neg_infinity()),
            |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) },
        )
        .0
}
