use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::scalar::Scalar;
use crate::tensor::{Param, Tensor};

/// Serializable description of one layer: a registered kind name plus the
/// kind's own hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: String,
    #[serde(default)]
    pub config: serde_json::Value,
}

impl LayerSpec {
    pub fn new(kind: &str, config: impl Serialize) -> Self {
        Self {
            kind: kind.to_string(),
            config: serde_json::to_value(config).expect("layer configs serialize"),
        }
    }

    pub fn bare(kind: &str) -> Self {
        Self {
            kind: kind.to_string(),
            config: serde_json::Value::Null,
        }
    }

    pub fn parse_config<T: for<'de> Deserialize<'de>>(&self) -> Result<T> {
        serde_json::from_value(self.config.clone()).map_err(|e| NnError::config(&self.kind, e.to_string()))
    }
}

/// Seeded source of initial weights.
pub struct Initializer {
    rng: ChaCha8Rng,
}

impl Initializer {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Fan-in scaled normal weights, std = sqrt(2 / fan_in). Values are
    /// drawn in `f32` so every precision starts from the same network.
    pub fn kaiming<T: Scalar>(&mut self, shape: &[usize], fan_in: usize) -> Tensor<T> {
        let std = (2.0 / fan_in.max(1) as f32).sqrt();
        let n = shape.iter().product();
        let data = (0..n)
            .map(|_| T::of((self.rng.sample::<f32, _>(StandardNormal) * std) as f64))
            .collect();
        Tensor::new(shape.to_vec(), data).expect("shape and buffer agree")
    }
}

/// A differentiable network stage.
///
/// `forward` caches what `backward` needs; `infer` is the pure inference
/// path (batch norm uses running statistics there). Parameter gradients
/// accumulate across `backward` calls until zeroed.
///
/// The three second-order hooks let a stack of piecewise-linear layers
/// differentiate its own input gradient with respect to its parameters,
/// which is what gradient penalties need. For such layers the input
/// gradient is linear in the upstream gradient with coefficients that do
/// not depend on the input (masks aside), so:
///
/// * `input_grad` is `backward` without touching parameter gradients;
/// * `tangent` applies the layer's local linear map to a forward tangent;
/// * `accumulate_second_order` adds `d<a_in, input_grad(u_out)>/dθ`.
pub trait Layer<T: Scalar = f32>: Send + Sync {
    fn kind(&self) -> &'static str;

    fn spec(&self) -> LayerSpec;

    fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>>;

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>>;

    fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>>;

    fn params(&self) -> Vec<&Param<T>> {
        Vec::new()
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        Vec::new()
    }

    /// Non-trainable state persisted with checkpoints.
    fn buffers(&self) -> Vec<&Tensor<T>> {
        Vec::new()
    }

    fn buffers_mut(&mut self) -> Vec<&mut Tensor<T>> {
        Vec::new()
    }

    fn input_grad(&self, _grad: &Tensor<T>) -> Result<Tensor<T>> {
        Err(NnError::NoSecondOrder(self.kind()))
    }

    fn tangent(&self, _a: &Tensor<T>) -> Result<Tensor<T>> {
        Err(NnError::NoSecondOrder(self.kind()))
    }

    fn accumulate_second_order(&mut self, _a_in: &Tensor<T>, _u_out: &Tensor<T>) -> Result<()> {
        Err(NnError::NoSecondOrder(self.kind()))
    }

    fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }
}
