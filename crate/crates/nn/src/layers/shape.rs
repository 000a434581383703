use std::marker::PhantomData;

use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::layer::{Layer, LayerSpec};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelShuffleConfig {
    pub factor: usize,
}

/// Index of the input element feeding output `(n, c, y, x)`.
fn shuffle_source(in_shape: &[usize], r: usize, n: usize, c: usize, y: usize, x: usize) -> usize {
    let (cin, h, w) = (in_shape[1], in_shape[2], in_shape[3]);
    let ic = c * r * r + (y % r) * r + (x % r);
    ((n * cin + ic) * h + y / r) * w + x / r
}

/// `(N, C·r², H, W) → (N, C, H·r, W·r)`; output channel `c` at `(h·r+i, w·r+j)`
/// reads input channel `c·r² + i·r + j` at `(h, w)`.
pub fn pixel_shuffle<T: Scalar>(x: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    x.expect_rank(PixelShuffle::KIND, 4)?;
    let s = x.shape();
    if r == 0 || !s[1].is_multiple_of(r * r) {
        return Err(NnError::shape(
            PixelShuffle::KIND,
            format!("channel axis {} is not divisible by factor² = {}", s[1], r * r),
        ));
    }
    let (n, c, ho, wo) = (s[0], s[1] / (r * r), s[2] * r, s[3] * r);
    let mut out = vec![T::zero(); x.len()];
    let mut idx = 0;
    for ni in 0..n {
        for ci in 0..c {
            for y in 0..ho {
                for xx in 0..wo {
                    out[idx] = x.data()[shuffle_source(s, r, ni, ci, y, xx)];
                    idx += 1;
                }
            }
        }
    }
    Tensor::new(vec![n, c, ho, wo], out)
}

/// Adjoint (and inverse) of `pixel_shuffle` for an input of shape `in_shape`.
pub fn pixel_unshuffle<T: Scalar>(grad: &Tensor<T>, in_shape: &[usize], r: usize) -> Result<Tensor<T>> {
    let expected = [in_shape[0], in_shape[1] / (r * r), in_shape[2] * r, in_shape[3] * r];
    if grad.shape() != expected {
        return Err(NnError::shape(
            PixelShuffle::KIND,
            format!("upstream gradient shape {:?}", grad.shape()),
        ));
    }
    let mut out = vec![T::zero(); grad.len()];
    let mut idx = 0;
    for n in 0..expected[0] {
        for c in 0..expected[1] {
            for y in 0..expected[2] {
                for x in 0..expected[3] {
                    out[shuffle_source(in_shape, r, n, c, y, x)] = grad.data()[idx];
                    idx += 1;
                }
            }
        }
    }
    Tensor::new(in_shape.to_vec(), out)
}

pub struct PixelShuffle<T: Scalar = f32> {
    cfg: PixelShuffleConfig,
    in_shape: Option<Vec<usize>>,
    _scalar: PhantomData<T>,
}

impl PixelShuffle {
    pub const KIND: &'static str = "pixel_shuffle";
}

impl<T: Scalar> PixelShuffle<T> {
    pub fn new(cfg: PixelShuffleConfig) -> Result<Self> {
        if cfg.factor == 0 {
            return Err(NnError::config(PixelShuffle::KIND, "factor must be positive"));
        }
        Ok(Self {
            cfg,
            in_shape: None,
            _scalar: PhantomData,
        })
    }
}

impl<T: Scalar> Layer<T> for PixelShuffle<T> {
    fn kind(&self) -> &'static str {
        PixelShuffle::KIND
    }

    fn spec(&self) -> LayerSpec {
        LayerSpec::new(PixelShuffle::KIND, self.cfg)
    }

    fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let y = pixel_shuffle(x, self.cfg.factor)?;
        self.in_shape = Some(x.shape().to_vec());
        Ok(y)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        pixel_shuffle(x, self.cfg.factor)
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        self.input_grad(grad)
    }

    fn input_grad(&self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let s = self.in_shape.as_ref().ok_or(NnError::NoCache(PixelShuffle::KIND))?;
        pixel_unshuffle(grad, s, self.cfg.factor)
    }

    fn tangent(&self, a: &Tensor<T>) -> Result<Tensor<T>> {
        pixel_shuffle(a, self.cfg.factor)
    }

    fn accumulate_second_order(&mut self, _a_in: &Tensor<T>, _u_out: &Tensor<T>) -> Result<()> {
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReshapeConfig {
    /// Per-sample target shape; the batch axis is kept.
    pub shape: Vec<usize>,
}

pub struct Reshape<T: Scalar = f32> {
    cfg: ReshapeConfig,
    in_shape: Option<Vec<usize>>,
    _scalar: PhantomData<T>,
}

impl Reshape {
    pub const KIND: &'static str = "reshape";
}

impl<T: Scalar> Reshape<T> {
    pub fn new(cfg: ReshapeConfig) -> Result<Self> {
        if cfg.shape.is_empty() || cfg.shape.contains(&0) {
            return Err(NnError::config(
                Reshape::KIND,
                "target shape must be non-empty and positive",
            ));
        }
        Ok(Self {
            cfg,
            in_shape: None,
            _scalar: PhantomData,
        })
    }

    fn apply(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let per: usize = self.cfg.shape.iter().product();
        if x.sample_len() != per {
            return Err(NnError::shape(
                Reshape::KIND,
                format!("cannot view {:?} as per-sample {:?}", x.shape(), self.cfg.shape),
            ));
        }
        let mut shape = vec![x.batch()];
        shape.extend(&self.cfg.shape);
        x.clone().reshape(shape)
    }
}

impl<T: Scalar> Layer<T> for Reshape<T> {
    fn kind(&self) -> &'static str {
        Reshape::KIND
    }

    fn spec(&self) -> LayerSpec {
        LayerSpec::new(Reshape::KIND, &self.cfg)
    }

    fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.in_shape = Some(x.shape().to_vec());
        self.apply(x)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.apply(x)
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        self.input_grad(grad)
    }

    fn input_grad(&self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let s = self.in_shape.as_ref().ok_or(NnError::NoCache(Reshape::KIND))?;
        grad.clone().reshape(s.clone())
    }

    fn tangent(&self, a: &Tensor<T>) -> Result<Tensor<T>> {
        self.apply(a)
    }

    fn accumulate_second_order(&mut self, _a_in: &Tensor<T>, _u_out: &Tensor<T>) -> Result<()> {
        Ok(())
    }
}

/// Mean over the spatial axes, `(N, C, H, W) → (N, C)`.
#[derive(Default)]
pub struct GlobalAvgPool<T: Scalar = f32> {
    in_shape: Option<Vec<usize>>,
    _scalar: PhantomData<T>,
}

impl GlobalAvgPool {
    pub const KIND: &'static str = "global_avg_pool";
}

impl<T: Scalar> GlobalAvgPool<T> {
    pub fn new() -> Self {
        Self::default()
    }
}

impl<T: Scalar> Layer<T> for GlobalAvgPool<T> {
    fn kind(&self) -> &'static str {
        GlobalAvgPool::KIND
    }

    fn spec(&self) -> LayerSpec {
        LayerSpec::bare(GlobalAvgPool::KIND)
    }

    fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let y = self.infer(x)?;
        self.in_shape = Some(x.shape().to_vec());
        Ok(y)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        x.expect_rank(GlobalAvgPool::KIND, 4)?;
        let s = x.shape();
        let plane = s[2] * s[3];
        let scale = T::of(plane as f64).recip();
        let data = x
            .data()
            .chunks(plane)
            .map(|c| c.iter().copied().sum::<T>() * scale)
            .collect();
        Tensor::new(vec![s[0], s[1]], data)
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        self.input_grad(grad)
    }

    fn input_grad(&self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let s = self.in_shape.as_ref().ok_or(NnError::NoCache(GlobalAvgPool::KIND))?;
        if grad.shape() != [s[0], s[1]] {
            return Err(NnError::shape(
                GlobalAvgPool::KIND,
                format!("upstream gradient shape {:?}", grad.shape()),
            ));
        }
        let plane = s[2] * s[3];
        let mut dx = Vec::with_capacity(plane * grad.len());
        for &g in grad.data() {
            dx.extend(std::iter::repeat_n(g / T::of(plane as f64), plane));
        }
        Tensor::new(s.clone(), dx)
    }

    fn tangent(&self, a: &Tensor<T>) -> Result<Tensor<T>> {
        self.infer(a)
    }

    fn accumulate_second_order(&mut self, _a_in: &Tensor<T>, _u_out: &Tensor<T>) -> Result<()> {
        Ok(())
    }
}
