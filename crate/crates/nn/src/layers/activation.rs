use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::layer::{Layer, LayerSpec};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub fn sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

/// Row-wise softmax over the last axis of a `(N, K)` tensor.
pub fn softmax_rows<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    x.expect_rank("softmax", 2)?;
    let k = x.shape()[1];
    let mut out = x.data().to_vec();
    for row in out.chunks_mut(k) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    Tensor::new(x.shape().to_vec(), out)
}

fn mul_mask<T: Scalar>(grad: &Tensor<T>, input: &Tensor<T>, slope: T, op: &'static str) -> Result<Tensor<T>> {
    grad.expect_same_shape(op, input)?;
    let data = grad
        .data()
        .iter()
        .zip(input.data())
        .map(|(&g, &x)| if x > T::zero() { g } else { g * slope })
        .collect();
    Tensor::new(grad.shape().to_vec(), data)
}

#[derive(Default)]
pub struct Relu<T: Scalar = f32> {
    input: Option<Tensor<T>>,
}

impl Relu {
    pub const KIND: &'static str = "relu";
}

impl<T: Scalar> Relu<T> {
    pub fn new() -> Self {
        Self::default()
    }
}

impl<T: Scalar> Layer<T> for Relu<T> {
    fn kind(&self) -> &'static str {
        Relu::KIND
    }

    fn spec(&self) -> LayerSpec {
        LayerSpec::bare(Relu::KIND)
    }

    fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.input = Some(x.clone());
        self.infer(x)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(x.map(|v| v.max(T::zero())))
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self.input.as_ref().ok_or(NnError::NoCache(Relu::KIND))?;
        mul_mask(grad, x, T::zero(), Relu::KIND)
    }

    fn input_grad(&self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self.input.as_ref().ok_or(NnError::NoCache(Relu::KIND))?;
        mul_mask(grad, x, T::zero(), Relu::KIND)
    }

    fn tangent(&self, a: &Tensor<T>) -> Result<Tensor<T>> {
        self.input_grad(a)
    }

    fn accumulate_second_order(&mut self, _a_in: &Tensor<T>, _u_out: &Tensor<T>) -> Result<()> {
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeakyReluConfig {
    pub slope: f32,
}

pub struct LeakyRelu<T: Scalar = f32> {
    cfg: LeakyReluConfig,
    slope: T,
    input: Option<Tensor<T>>,
}

impl LeakyRelu {
    pub const KIND: &'static str = "leaky_relu";
}

impl<T: Scalar> LeakyRelu<T> {
    pub fn new(cfg: LeakyReluConfig) -> Result<Self> {
        if !(0.0..1.0).contains(&cfg.slope) {
            return Err(NnError::config(LeakyRelu::KIND, "slope must lie in [0, 1)"));
        }
        Ok(Self {
            cfg,
            slope: T::of(cfg.slope as f64),
            input: None,
        })
    }
}

impl<T: Scalar> Layer<T> for LeakyRelu<T> {
    fn kind(&self) -> &'static str {
        LeakyRelu::KIND
    }

    fn spec(&self) -> LayerSpec {
        LayerSpec::new(LeakyRelu::KIND, self.cfg)
    }

    fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.input = Some(x.clone());
        self.infer(x)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let s = self.slope;
        Ok(x.map(|v| if v > T::zero() { v } else { v * s }))
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        self.input_grad(grad)
    }

    fn input_grad(&self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self.input.as_ref().ok_or(NnError::NoCache(LeakyRelu::KIND))?;
        mul_mask(grad, x, self.slope, LeakyRelu::KIND)
    }

    // The mask is locally constant, so the local linear map is the mask itself.
    fn tangent(&self, a: &Tensor<T>) -> Result<Tensor<T>> {
        self.input_grad(a)
    }

    fn accumulate_second_order(&mut self, _a_in: &Tensor<T>, _u_out: &Tensor<T>) -> Result<()> {
        Ok(())
    }
}

#[derive(Default)]
pub struct Sigmoid<T: Scalar = f32> {
    output: Option<Tensor<T>>,
}

impl Sigmoid {
    pub const KIND: &'static str = "sigmoid";
}

impl<T: Scalar> Sigmoid<T> {
    pub fn new() -> Self {
        Self::default()
    }
}

impl<T: Scalar> Layer<T> for Sigmoid<T> {
    fn kind(&self) -> &'static str {
        Sigmoid::KIND
    }

    fn spec(&self) -> LayerSpec {
        LayerSpec::bare(Sigmoid::KIND)
    }

    fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let y = self.infer(x)?;
        self.output = Some(y.clone());
        Ok(y)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(x.map(sigmoid::<T>))
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let y = self.output.as_ref().ok_or(NnError::NoCache(Sigmoid::KIND))?;
        grad.expect_same_shape(Sigmoid::KIND, y)?;
        let data = grad
            .data()
            .iter()
            .zip(y.data())
            .map(|(&g, &s)| g * s * (T::one() - s))
            .collect();
        Tensor::new(grad.shape().to_vec(), data)
    }
}

#[derive(Default)]
pub struct Softmax<T: Scalar = f32> {
    output: Option<Tensor<T>>,
}

impl Softmax {
    pub const KIND: &'static str = "softmax";
}

impl<T: Scalar> Softmax<T> {
    pub fn new() -> Self {
        Self::default()
    }
}

impl<T: Scalar> Layer<T> for Softmax<T> {
    fn kind(&self) -> &'static str {
        Softmax::KIND
    }

    fn spec(&self) -> LayerSpec {
        LayerSpec::bare(Softmax::KIND)
    }

    fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let y = softmax_rows(x)?;
        self.output = Some(y.clone());
        Ok(y)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        softmax_rows(x)
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let y = self.output.as_ref().ok_or(NnError::NoCache(Softmax::KIND))?;
        grad.expect_same_shape(Softmax::KIND, y)?;
        let k = y.shape()[1];
        let mut dx = vec![T::zero(); y.len()];
        for ((d, g), s) in dx.chunks_mut(k).zip(grad.data().chunks(k)).zip(y.data().chunks(k)) {
            let dot: T = g.iter().zip(s).map(|(&a, &b)| a * b).sum();
            for j in 0..k {
                d[j] = s[j] * (g[j] - dot);
            }
        }
        Tensor::new(y.shape().to_vec(), dx)
    }
}
