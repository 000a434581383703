use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use texvib_nn::{Layer, Scalar, Sequential, Tensor};

use super::Discriminator;
use crate::error::{CoreError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct PenaltyOutput {
    /// `lambda · mean((‖∇x̂ D‖₂ − 1)²)`.
    pub value: f64,
    /// Per-sample input-gradient norms.
    pub grad_norms: Vec<f64>,
}

/// `x + scale · σ · u`, with σ the standard deviation over the whole batch
/// and `u ~ U[0, 1]` per element.
pub fn perturb<T: Scalar>(x: &Tensor<T>, scale: f64, seed: u64) -> Tensor<T> {
    let n = x.len().max(1) as f64;
    let mean = x.data().iter().map(|v| v.as_f64()).sum::<f64>() / n;
    let var = x.data().iter().map(|v| (v.as_f64() - mean).powi(2)).sum::<f64>() / n;
    let amp = scale * var.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = x.data().iter().map(|v| T::of(v.as_f64() + amp * rng.random::<f64>())).collect();
    Tensor::new(x.shape().to_vec(), data).expect("shape unchanged")
}

/// Gradient-norm penalty of `head(trunk(x̂))` at `x_hat`; `head` must emit
/// one logit per sample.
///
/// The penalty's parameter gradient is accumulated into both networks; the
/// networks' forward caches are left at `x_hat`.
pub fn gradient_penalty<T: Scalar>(
    trunk: &mut Sequential<T>,
    head: &mut Sequential<T>,
    x_hat: &Tensor<T>,
    lambda: f64,
) -> Result<PenaltyOutput> {
    let features = trunk.forward(x_hat)?;
    let out = head.forward(&features)?;
    let n = x_hat.batch();
    if out.shape() != [n, 1] {
        return Err(CoreError::Dimension(format!(
            "penalty head must emit (N, 1), got {:?}",
            out.shape()
        )));
    }
    let head_grads = head.boundary_grads(&Tensor::full(&[n, 1], T::one()))?;
    let trunk_grads = trunk.boundary_grads(&head_grads[0])?;
    let g = &trunk_grads[0];

    let norms: Vec<f64> = (0..n)
        .map(|i| g.sample(i).iter().map(|v| v.as_f64().powi(2)).sum::<f64>().sqrt())
        .collect();
    if let Some(i) = norms.iter().position(|v| !v.is_finite()) {
        return Err(CoreError::Diverged(format!("non-finite input gradient for penalty sample {i}")));
    }
    let value = lambda / n as f64 * norms.iter().map(|v| (v - 1.0).powi(2)).sum::<f64>();

    // dP/dθ = d<a, g>/dθ with a_i = (λ/N)·2(‖g_i‖ − 1)/‖g_i‖ · g_i held fixed.
    let per = g.sample_len();
    let mut a = Vec::with_capacity(g.len());
    for (i, &norm) in norms.iter().enumerate() {
        let coef = if norm > 0.0 {
            lambda / n as f64 * 2.0 * (norm - 1.0) / norm
        } else {
            0.0
        };
        a.extend(g.data()[i * per..(i + 1) * per].iter().map(|v| T::of(coef * v.as_f64())));
    }
    let a = Tensor::new(g.shape().to_vec(), a)?;
    let a_features = trunk.propagate_second_order(&a, &trunk_grads)?;
    head.propagate_second_order(&a_features, &head_grads)?;
    Ok(PenaltyOutput {
        value,
        grad_norms: norms,
    })
}

/// DRAGAN penalty on the real/fake logit at a perturbation of `real`.
pub fn dragan_penalty(
    disc: &mut Discriminator,
    real: &Tensor,
    lambda: f64,
    scale: f64,
    seed: u64,
) -> Result<PenaltyOutput> {
    if !(lambda > 0.0 && scale > 0.0) {
        return Err(CoreError::config("penalty", "lambda and perturbation scale must be positive"));
    }
    let x_hat = perturb(real, scale, seed);
    gradient_penalty(&mut disc.trunk, &mut disc.real_head, &x_hat, lambda)
}
