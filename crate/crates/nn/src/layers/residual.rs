use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::layer::{Initializer, Layer, LayerSpec};
use crate::layers::{BatchNorm, BatchNormConfig, Conv2d, Conv2dConfig, Relu};
use crate::scalar::Scalar;
use crate::sequential::Sequential;
use crate::tensor::{Param, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResidualBlockConfig {
    pub in_channels: usize,
    pub out_channels: usize,
    #[serde(default = "one")]
    pub stride: usize,
    /// ReLU after the second conv/BN pair, inside the branch.
    #[serde(default)]
    pub branch_relu: bool,
    /// ReLU applied to the sum.
    #[serde(default)]
    pub output_relu: bool,
}

fn one() -> usize {
    1
}

/// `conv3×3 → BN → ReLU → conv3×3 → BN [→ ReLU]` plus a skip connection,
/// projected through `conv1×1 → BN` when the shape changes.
pub struct ResidualBlock<T: Scalar = f32> {
    cfg: ResidualBlockConfig,
    branch: Sequential<T>,
    shortcut: Option<Sequential<T>>,
    sum: Option<Tensor<T>>,
}

impl ResidualBlock {
    pub const KIND: &'static str = "residual_block";
}

impl<T: Scalar> ResidualBlock<T> {
    pub fn new(cfg: ResidualBlockConfig, init: &mut Initializer) -> Result<Self> {
        if cfg.stride == 0 || cfg.in_channels == 0 || cfg.out_channels == 0 {
            return Err(NnError::config(
                ResidualBlock::KIND,
                "channels and stride must be positive",
            ));
        }
        let mut branch = Sequential::default();
        branch.push(Conv2d::new(
            Conv2dConfig::same3x3(cfg.in_channels, cfg.out_channels, cfg.stride).without_bias(),
            init,
        )?);
        branch.push(BatchNorm::new(BatchNormConfig::new(cfg.out_channels))?);
        branch.push(Relu::new());
        branch.push(Conv2d::new(
            Conv2dConfig::same3x3(cfg.out_channels, cfg.out_channels, 1).without_bias(),
            init,
        )?);
        branch.push(BatchNorm::new(BatchNormConfig::new(cfg.out_channels))?);
        if cfg.branch_relu {
            branch.push(Relu::new());
        }
        let shortcut = if cfg.stride != 1 || cfg.in_channels != cfg.out_channels {
            let mut s = Sequential::default();
            s.push(Conv2d::new(
                Conv2dConfig {
                    in_channels: cfg.in_channels,
                    out_channels: cfg.out_channels,
                    kernel: 1,
                    stride: cfg.stride,
                    pad: 0,
                    bias: false,
                },
                init,
            )?);
            s.push(BatchNorm::new(BatchNormConfig::new(cfg.out_channels))?);
            Some(s)
        } else {
            None
        };
        Ok(Self {
            cfg,
            branch,
            shortcut,
            sum: None,
        })
    }

    fn sum_of(main: &Tensor<T>, skip: &Tensor<T>) -> Result<Tensor<T>> {
        main.expect_same_shape(ResidualBlock::KIND, skip)?;
        let data = main.data().iter().zip(skip.data()).map(|(&a, &b)| a + b).collect();
        Tensor::new(main.shape().to_vec(), data)
    }

    fn grad_through_sum(&self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        if !self.cfg.output_relu {
            return Ok(grad.clone());
        }
        let sum = self.sum.as_ref().ok_or(NnError::NoCache(ResidualBlock::KIND))?;
        grad.expect_same_shape(ResidualBlock::KIND, sum)?;
        let data = grad
            .data()
            .iter()
            .zip(sum.data())
            .map(|(&g, &s)| if s > T::zero() { g } else { T::zero() })
            .collect();
        Tensor::new(grad.shape().to_vec(), data)
    }
}

impl<T: Scalar> Layer<T> for ResidualBlock<T> {
    fn kind(&self) -> &'static str {
        ResidualBlock::KIND
    }

    fn spec(&self) -> LayerSpec {
        LayerSpec::new(ResidualBlock::KIND, self.cfg)
    }

    fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let main = self.branch.forward(x)?;
        let skip = match &mut self.shortcut {
            Some(s) => s.forward(x)?,
            None => x.clone(),
        };
        let sum = Self::sum_of(&main, &skip)?;
        if self.cfg.output_relu {
            let out = sum.map(|v| v.max(T::zero()));
            self.sum = Some(sum);
            Ok(out)
        } else {
            Ok(sum)
        }
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let main = self.branch.infer(x)?;
        let skip = match &self.shortcut {
            Some(s) => s.infer(x)?,
            None => x.clone(),
        };
        let sum = Self::sum_of(&main, &skip)?;
        Ok(if self.cfg.output_relu {
            sum.map(|v| v.max(T::zero()))
        } else {
            sum
        })
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let g = self.grad_through_sum(grad)?;
        let mut dx = self.branch.backward(&g)?;
        let dskip = match &mut self.shortcut {
            Some(s) => s.backward(&g)?,
            None => g,
        };
        dx.data_mut().iter_mut().zip(dskip.data()).for_each(|(a, &b)| *a += b);
        Ok(dx)
    }

    fn params(&self) -> Vec<&Param<T>> {
        let mut p = self.branch.params();
        if let Some(s) = &self.shortcut {
            p.extend(s.params());
        }
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut p = self.branch.params_mut();
        if let Some(s) = &mut self.shortcut {
            p.extend(s.params_mut());
        }
        p
    }

    fn buffers(&self) -> Vec<&Tensor<T>> {
        let mut b = self.branch.buffers();
        if let Some(s) = &self.shortcut {
            b.extend(s.buffers());
        }
        b
    }

    fn buffers_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut b = self.branch.buffers_mut();
        if let Some(s) = &mut self.shortcut {
            b.extend(s.buffers_mut());
        }
        b
    }
}
