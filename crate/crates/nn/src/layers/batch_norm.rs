use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::layer::{Layer, LayerSpec};
use crate::scalar::Scalar;
use crate::tensor::{Param, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchNormConfig {
    pub channels: usize,
    #[serde(default = "default_momentum")]
    pub momentum: f32,
    #[serde(default = "default_epsilon")]
    pub epsilon: f32,
}

fn default_momentum() -> f32 {
    0.1
}

fn default_epsilon() -> f32 {
    1e-5
}

impl BatchNormConfig {
    pub fn new(channels: usize) -> Self {
        Self {
            channels,
            momentum: default_momentum(),
            epsilon: default_epsilon(),
        }
    }
}

struct Cache<T> {
    xhat: Vec<T>,
    inv_std: Vec<T>,
    shape: Vec<usize>,
}

/// Per-channel batch normalization over `(N, C)` or `(N, C, H, W)` input.
/// Batch statistics are accumulated in `f64`.
pub struct BatchNorm<T: Scalar = f32> {
    cfg: BatchNormConfig,
    gamma: Param<T>,
    beta: Param<T>,
    running_mean: Tensor<T>,
    running_var: Tensor<T>,
    cache: Option<Cache<T>>,
}

impl BatchNorm {
    pub const KIND: &'static str = "batch_norm";
}

impl<T: Scalar> BatchNorm<T> {
    pub fn new(cfg: BatchNormConfig) -> Result<Self> {
        if cfg.channels == 0 {
            return Err(NnError::config(BatchNorm::KIND, "channels must be positive"));
        }
        if !(cfg.momentum > 0.0 && cfg.momentum <= 1.0) {
            return Err(NnError::config(BatchNorm::KIND, "momentum must lie in (0, 1]"));
        }
        if cfg.epsilon <= 0.0 || !cfg.epsilon.is_finite() {
            return Err(NnError::config(BatchNorm::KIND, "epsilon must be positive"));
        }
        let c = cfg.channels;
        Ok(Self {
            cfg,
            gamma: Param::new("batch_norm.gamma", Tensor::full(&[c], T::one())),
            beta: Param::new("batch_norm.beta", Tensor::zeros(&[c])),
            running_mean: Tensor::zeros(&[c]),
            running_var: Tensor::full(&[c], T::one()),
            cache: None,
        })
    }

    pub fn running_mean(&self) -> &Tensor<T> {
        &self.running_mean
    }

    pub fn running_var(&self) -> &Tensor<T> {
        &self.running_var
    }

    /// (batch, channels, spatial) view of the input.
    fn dims(&self, shape: &[usize]) -> Result<(usize, usize, usize)> {
        if shape.len() != 2 && shape.len() != 4 {
            return Err(NnError::shape(
                BatchNorm::KIND,
                format!("expected (N,C) or NCHW input, got {shape:?}"),
            ));
        }
        if shape[1] != self.cfg.channels {
            return Err(NnError::shape(
                BatchNorm::KIND,
                format!("channel axis (C) is {}, layer expects {}", shape[1], self.cfg.channels),
            ));
        }
        let spatial = shape.iter().skip(2).product();
        Ok((shape[0], shape[1], spatial))
    }

    fn affine(&self, x: &Tensor<T>, mean: &[f64], inv_std: &[f64]) -> Result<(Tensor<T>, Vec<T>)> {
        let (n, c, s) = self.dims(x.shape())?;
        let mut xhat = vec![T::zero(); x.len()];
        let mut y = vec![T::zero(); x.len()];
        for i in 0..n {
            for ch in 0..c {
                let off = (i * c + ch) * s;
                let (g, b) = (
                    self.gamma.value.data()[ch].as_f64(),
                    self.beta.value.data()[ch].as_f64(),
                );
                for j in off..off + s {
                    let h = (x.data()[j].as_f64() - mean[ch]) * inv_std[ch];
                    xhat[j] = T::of(h);
                    y[j] = T::of(g * h + b);
                }
            }
        }
        Ok((Tensor::new(x.shape().to_vec(), y)?, xhat))
    }
}

impl<T: Scalar> Layer<T> for BatchNorm<T> {
    fn kind(&self) -> &'static str {
        BatchNorm::KIND
    }

    fn spec(&self) -> LayerSpec {
        LayerSpec::new(BatchNorm::KIND, self.cfg)
    }

    fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (n, c, s) = self.dims(x.shape())?;
        if n < 2 {
            return Err(NnError::BatchTooSmall(n));
        }
        let count = (n * s) as f64;
        let mut mean = vec![0.0f64; c];
        let mut var = vec![0.0f64; c];
        for ch in 0..c {
            let plane = |i: usize| &x.data()[(i * c + ch) * s..(i * c + ch + 1) * s];
            let m = (0..n).flat_map(plane).map(|v| v.as_f64()).sum::<f64>() / count;
            let sq: f64 = (0..n).flat_map(plane).map(|v| (v.as_f64() - m).powi(2)).sum();
            mean[ch] = m;
            var[ch] = sq / count;
        }
        let eps = self.cfg.epsilon as f64;
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let (y, xhat) = self.affine(x, &mean, &inv_std)?;

        let mom = self.cfg.momentum as f64;
        let unbias = if count > 1.0 { count / (count - 1.0) } else { 1.0 };
        for ch in 0..c {
            let rm = &mut self.running_mean.data_mut()[ch];
            *rm = T::of((1.0 - mom) * rm.as_f64() + mom * mean[ch]);
            let rv = &mut self.running_var.data_mut()[ch];
            *rv = T::of((1.0 - mom) * rv.as_f64() + mom * var[ch] * unbias);
        }
        self.cache = Some(Cache {
            xhat,
            inv_std: inv_std.into_iter().map(T::of).collect(),
            shape: x.shape().to_vec(),
        });
        Ok(y)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let eps = self.cfg.epsilon as f64;
        let inv_std: Vec<f64> = self
            .running_var
            .data()
            .iter()
            .map(|v| 1.0 / (v.as_f64() + eps).sqrt())
            .collect();
        let mean: Vec<f64> = self.running_mean.data().iter().map(|v| v.as_f64()).collect();
        Ok(self.affine(x, &mean, &inv_std)?.0)
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = self.cache.as_ref().ok_or(NnError::NoCache(BatchNorm::KIND))?;
        if grad.shape() != cache.shape.as_slice() {
            return Err(NnError::shape(
                BatchNorm::KIND,
                format!("upstream gradient shape {:?}", grad.shape()),
            ));
        }
        let (n, c, s) = self.dims(&cache.shape)?;
        let m = T::of((n * s) as f64);
        let mut dx = vec![T::zero(); grad.len()];
        for ch in 0..c {
            let gamma = self.gamma.value.data()[ch];
            let (mut sum_dy, mut sum_dy_xhat) = (T::zero(), T::zero());
            for i in 0..n {
                let off = (i * c + ch) * s;
                for j in off..off + s {
                    sum_dy += grad.data()[j];
                    sum_dy_xhat += grad.data()[j] * cache.xhat[j];
                }
            }
            self.gamma.grad[ch] += sum_dy_xhat;
            self.beta.grad[ch] += sum_dy;
            let k = gamma * cache.inv_std[ch] / m;
            for i in 0..n {
                let off = (i * c + ch) * s;
                let span = off..off + s;
                for ((d, &g), &xh) in dx[span.clone()]
                    .iter_mut()
                    .zip(&grad.data()[span.clone()])
                    .zip(&cache.xhat[span])
                {
                    *d = k * (m * g - sum_dy - xh * sum_dy_xhat);
                }
            }
        }
        Tensor::new(cache.shape.clone(), dx)
    }

    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.gamma, &self.beta]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.gamma, &mut self.beta]
    }

    fn buffers(&self) -> Vec<&Tensor<T>> {
        vec![&self.running_mean, &self.running_var]
    }

    fn buffers_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![&mut self.running_mean, &mut self.running_var]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn train_output_is_standardized_per_channel() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let x = Tensor::randn(&[4, 3, 5, 5], &mut rng).map(|v| 3.0 * v + 2.0);
        let mut bn: BatchNorm = BatchNorm::new(BatchNormConfig::new(3)).unwrap();
        let y = bn.forward(&x).unwrap();
        for ch in 0..3 {
            let vals: Vec<f64> = (0..4)
                .flat_map(|i| y.data()[(i * 3 + ch) * 25..(i * 3 + ch + 1) * 25].to_vec())
                .map(|v| v as f64)
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!(mean.abs() < 1e-5, "mean {mean}");
            assert!((var - 1.0).abs() < 1e-3, "var {var}");
        }
    }

    #[test]
    fn constant_channel_normalizes_to_zero() {
        let x = Tensor::full(&[3, 2, 2, 2], 7.5);
        let mut bn: BatchNorm = BatchNorm::new(BatchNormConfig::new(2)).unwrap();
        let y = bn.forward(&x).unwrap();
        assert!(y.data().iter().all(|v| v.abs() < 1e-6 && v.is_finite()));
    }

    #[test]
    fn batch_of_one_rejected_in_train_mode() {
        let mut bn: BatchNorm = BatchNorm::new(BatchNormConfig::new(2)).unwrap();
        let x = Tensor::zeros(&[1, 2, 3, 3]);
        assert!(matches!(bn.forward(&x), Err(NnError::BatchTooSmall(1))));
        assert!(bn.infer(&x).is_ok());
    }

    #[test]
    fn running_stats_change_only_in_train_mode() {
        let mut bn: BatchNorm = BatchNorm::new(BatchNormConfig::new(1)).unwrap();
        let x = Tensor::new(vec![2, 1], vec![1.0, 3.0]).unwrap();
        bn.infer(&x).unwrap();
        assert_eq!(bn.running_mean().data(), &[0.0]);
        bn.forward(&x).unwrap();
        assert!((bn.running_mean().data()[0] - 0.2).abs() < 1e-6);
        // unbiased batch variance is 2
        assert!((bn.running_var().data()[0] - (0.9 + 0.2)).abs() < 1e-6);
    }
}
