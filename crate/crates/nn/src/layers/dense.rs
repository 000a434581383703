use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::gemm::gemm;
use crate::layer::{Initializer, Layer, LayerSpec};
use crate::scalar::Scalar;
use crate::tensor::{Param, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenseConfig {
    pub inputs: usize,
    pub outputs: usize,
}

/// Fully connected layer, `y = x Wᵀ + b` with `W` stored `outputs × inputs`.
pub struct Dense<T: Scalar = f32> {
    cfg: DenseConfig,
    weight: Param<T>,
    bias: Param<T>,
    input: Option<Tensor<T>>,
}

impl Dense {
    pub const KIND: &'static str = "dense";
}

impl<T: Scalar> Dense<T> {
    pub fn new(cfg: DenseConfig, init: &mut Initializer) -> Result<Self> {
        if cfg.inputs == 0 || cfg.outputs == 0 {
            return Err(NnError::config(Dense::KIND, "inputs and outputs must be positive"));
        }
        let weight = init.kaiming(&[cfg.outputs, cfg.inputs], cfg.inputs);
        Ok(Self {
            cfg,
            weight: Param::new("dense.weight", weight),
            bias: Param::new("dense.bias", Tensor::zeros(&[cfg.outputs])),
            input: None,
        })
    }

    pub fn config(&self) -> DenseConfig {
        self.cfg
    }

    pub fn weight_mut(&mut self) -> &mut Param<T> {
        &mut self.weight
    }

    pub fn bias_mut(&mut self) -> &mut Param<T> {
        &mut self.bias
    }

    fn check(&self, x: &Tensor<T>) -> Result<()> {
        x.expect_rank(Dense::KIND, 2)?;
        if x.shape()[1] != self.cfg.inputs {
            return Err(NnError::shape(
                Dense::KIND,
                format!("feature axis is {}, layer expects {}", x.shape()[1], self.cfg.inputs),
            ));
        }
        Ok(())
    }

    fn linear(&self, x: &Tensor<T>, with_bias: bool) -> Result<Tensor<T>> {
        self.check(x)?;
        let n = x.batch();
        let out = self.cfg.outputs;
        let mut y = vec![T::zero(); n * out];
        if with_bias {
            for row in y.chunks_mut(out) {
                row.copy_from_slice(self.bias.value.data());
            }
        }
        gemm(
            n,
            self.cfg.inputs,
            out,
            x.data(),
            false,
            self.weight.value.data(),
            true,
            &mut y,
            T::one(),
        );
        Tensor::new(vec![n, out], y)
    }

    fn grad_in(&self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let n = grad.batch();
        if grad.shape() != [n, self.cfg.outputs] {
            return Err(NnError::shape(
                Dense::KIND,
                format!("upstream gradient shape {:?}", grad.shape()),
            ));
        }
        let mut dx = vec![T::zero(); n * self.cfg.inputs];
        gemm(
            n,
            self.cfg.outputs,
            self.cfg.inputs,
            grad.data(),
            false,
            self.weight.value.data(),
            false,
            &mut dx,
            T::zero(),
        );
        Tensor::new(vec![n, self.cfg.inputs], dx)
    }

    fn add_weight_grad(&mut self, x: &Tensor<T>, grad: &Tensor<T>) {
        let n = x.batch();
        gemm(
            self.cfg.outputs,
            n,
            self.cfg.inputs,
            grad.data(),
            true,
            x.data(),
            false,
            &mut self.weight.grad,
            T::one(),
        );
    }
}

impl<T: Scalar> Layer<T> for Dense<T> {
    fn kind(&self) -> &'static str {
        Dense::KIND
    }

    fn spec(&self) -> LayerSpec {
        LayerSpec::new(Dense::KIND, self.cfg)
    }

    fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let y = self.linear(x, true)?;
        self.input = Some(x.clone());
        Ok(y)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.linear(x, true)
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self.input.take().ok_or(NnError::NoCache(Dense::KIND))?;
        let dx = self.grad_in(grad)?;
        self.add_weight_grad(&x, grad);
        for row in grad.data().chunks(self.cfg.outputs) {
            for (b, g) in self.bias.grad.iter_mut().zip(row) {
                *b += *g;
            }
        }
        self.input = Some(x);
        Ok(dx)
    }

    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.weight, &mut self.bias]
    }

    fn input_grad(&self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        self.grad_in(grad)
    }

    fn tangent(&self, a: &Tensor<T>) -> Result<Tensor<T>> {
        self.linear(a, false)
    }

    fn accumulate_second_order(&mut self, a_in: &Tensor<T>, u_out: &Tensor<T>) -> Result<()> {
        self.check(a_in)?;
        if u_out.shape() != [a_in.batch(), self.cfg.outputs] {
            return Err(NnError::shape(
                Dense::KIND,
                format!("upstream gradient shape {:?}", u_out.shape()),
            ));
        }
        self.add_weight_grad(a_in, u_out);
        Ok(())
    }
}
