use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::gemm::gemm;
use crate::layer::{Initializer, Layer, LayerSpec};
use crate::scalar::Scalar;
use crate::tensor::{Param, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conv2dConfig {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    #[serde(default = "yes")]
    pub bias: bool,
}

fn yes() -> bool {
    true
}

impl Conv2dConfig {
    pub fn same3x3(in_channels: usize, out_channels: usize, stride: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel: 3,
            stride,
            pad: 1,
            bias: true,
        }
    }

    pub fn without_bias(self) -> Self {
        Self { bias: false, ..self }
    }

    fn validate(&self) -> Result<()> {
        let bad = |d: &str| Err(NnError::config(Conv2d::KIND, d));
        if self.in_channels == 0 || self.out_channels == 0 {
            return bad("channel counts must be positive");
        }
        if self.kernel == 0 || self.stride == 0 {
            return bad("kernel and stride must be positive");
        }
        if self.pad >= self.kernel {
            return bad("padding must be smaller than the kernel");
        }
        Ok(())
    }

    /// Output spatial size, `floor((h + 2p - k) / s) + 1`.
    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let (hp, wp) = (h + 2 * self.pad, w + 2 * self.pad);
        if hp < self.kernel || wp < self.kernel {
            return Err(NnError::shape(
                Conv2d::KIND,
                format!("kernel {} exceeds padded input {hp}x{wp} (H, W axes)", self.kernel),
            ));
        }
        Ok((
            (hp - self.kernel) / self.stride + 1,
            (wp - self.kernel) / self.stride + 1,
        ))
    }

    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }
}

/// Geometry of one conv application, resolved against an input shape.
#[derive(Clone, Copy)]
struct Geometry {
    cfg: Conv2dConfig,
    h: usize,
    w: usize,
    ho: usize,
    wo: usize,
}

impl Geometry {
    fn resolve(cfg: Conv2dConfig, shape: &[usize]) -> Result<Self> {
        if shape.len() != 4 {
            return Err(NnError::shape(
                Conv2d::KIND,
                format!("expected NCHW input, got {shape:?}"),
            ));
        }
        if shape[1] != cfg.in_channels {
            return Err(NnError::shape(
                Conv2d::KIND,
                format!("channel axis (C) is {}, layer expects {}", shape[1], cfg.in_channels),
            ));
        }
        let (ho, wo) = cfg.output_hw(shape[2], shape[3])?;
        Ok(Self {
            cfg,
            h: shape[2],
            w: shape[3],
            ho,
            wo,
        })
    }

    fn in_len(&self) -> usize {
        self.cfg.in_channels * self.h * self.w
    }

    fn out_pixels(&self) -> usize {
        self.ho * self.wo
    }

    fn out_len(&self) -> usize {
        self.cfg.out_channels * self.out_pixels()
    }

    fn is_pointwise(&self) -> bool {
        self.cfg.kernel == 1 && self.cfg.stride == 1 && self.cfg.pad == 0
    }

    /// Unfold one sample into a `patch_len × out_pixels` matrix.
    fn im2col<T: Scalar>(&self, x: &[T], cols: &mut [T]) {
        let k = self.cfg.kernel;
        let (s, p) = (self.cfg.stride as isize, self.cfg.pad as isize);
        let npix = self.out_pixels();
        for c in 0..self.cfg.in_channels {
            let plane = &x[c * self.h * self.w..(c + 1) * self.h * self.w];
            for kh in 0..k {
                for kw in 0..k {
                    let row = (c * k + kh) * k + kw;
                    let dst = &mut cols[row * npix..(row + 1) * npix];
                    for oy in 0..self.ho {
                        let iy = oy as isize * s + kh as isize - p;
                        let out_row = &mut dst[oy * self.wo..(oy + 1) * self.wo];
                        if iy < 0 || iy >= self.h as isize {
                            out_row.iter_mut().for_each(|v| *v = T::zero());
                            continue;
                        }
                        let src = &plane[iy as usize * self.w..(iy as usize + 1) * self.w];
                        for (ox, v) in out_row.iter_mut().enumerate() {
                            let ix = ox as isize * s + kw as isize - p;
                            *v = if ix < 0 || ix >= self.w as isize {
                                T::zero()
                            } else {
                                src[ix as usize]
                            };
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of `im2col`: scatter-add columns back into one sample.
    fn col2im<T: Scalar>(&self, cols: &[T], x: &mut [T]) {
        let k = self.cfg.kernel;
        let (s, p) = (self.cfg.stride as isize, self.cfg.pad as isize);
        let npix = self.out_pixels();
        for c in 0..self.cfg.in_channels {
            let plane = &mut x[c * self.h * self.w..(c + 1) * self.h * self.w];
            for kh in 0..k {
                for kw in 0..k {
                    let row = (c * k + kh) * k + kw;
                    let src = &cols[row * npix..(row + 1) * npix];
                    for oy in 0..self.ho {
                        let iy = oy as isize * s + kh as isize - p;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        let dst = &mut plane[iy as usize * self.w..(iy as usize + 1) * self.w];
                        for ox in 0..self.wo {
                            let ix = ox as isize * s + kw as isize - p;
                            if ix >= 0 && ix < self.w as isize {
                                dst[ix as usize] += src[oy * self.wo + ox];
                            }
                        }
                    }
                }
            }
        }
    }

    fn with_cols<T: Scalar, R>(&self, x: &[T], scratch: &mut Vec<T>, f: impl FnOnce(&[T]) -> R) -> R {
        if self.is_pointwise() {
            f(x)
        } else {
            scratch.resize(self.cfg.patch_len() * self.out_pixels(), T::zero());
            self.im2col(x, scratch);
            f(scratch)
        }
    }
}

/// Cross-correlation over NCHW input.
pub fn conv2d_forward<T: Scalar>(
    cfg: Conv2dConfig,
    x: &Tensor<T>,
    weight: &[T],
    bias: Option<&[T]>,
) -> Result<Tensor<T>> {
    let g = Geometry::resolve(cfg, x.shape())?;
    let n = x.batch();
    let mut out = vec![T::zero(); n * g.out_len()];
    let mut scratch = Vec::new();
    for i in 0..n {
        let xs = &x.data()[i * g.in_len()..(i + 1) * g.in_len()];
        let ys = &mut out[i * g.out_len()..(i + 1) * g.out_len()];
        if let Some(b) = bias {
            for (co, chunk) in ys.chunks_mut(g.out_pixels()).enumerate() {
                chunk.iter_mut().for_each(|v| *v = b[co]);
            }
        }
        g.with_cols(xs, &mut scratch, |cols| {
            gemm(
                cfg.out_channels,
                cfg.patch_len(),
                g.out_pixels(),
                weight,
                false,
                cols,
                false,
                ys,
                T::one(),
            )
        });
    }
    Tensor::new(vec![n, cfg.out_channels, g.ho, g.wo], out)
}

/// Gradient with respect to the input for an input of shape `in_shape`.
pub fn conv2d_input_grad<T: Scalar>(
    cfg: Conv2dConfig,
    in_shape: &[usize],
    grad: &Tensor<T>,
    weight: &[T],
) -> Result<Tensor<T>> {
    let g = Geometry::resolve(cfg, in_shape)?;
    let n = in_shape[0];
    if grad.shape() != [n, cfg.out_channels, g.ho, g.wo] {
        return Err(NnError::shape(
            Conv2d::KIND,
            format!(
                "upstream gradient {:?} does not match output {:?}",
                grad.shape(),
                [n, cfg.out_channels, g.ho, g.wo]
            ),
        ));
    }
    let mut dx = vec![T::zero(); n * g.in_len()];
    let mut dcols = vec![T::zero(); cfg.patch_len() * g.out_pixels()];
    for i in 0..n {
        let gs = &grad.data()[i * g.out_len()..(i + 1) * g.out_len()];
        let dxs = &mut dx[i * g.in_len()..(i + 1) * g.in_len()];
        if g.is_pointwise() {
            gemm(
                cfg.patch_len(),
                cfg.out_channels,
                g.out_pixels(),
                weight,
                true,
                gs,
                false,
                dxs,
                T::zero(),
            );
        } else {
            gemm(
                cfg.patch_len(),
                cfg.out_channels,
                g.out_pixels(),
                weight,
                true,
                gs,
                false,
                &mut dcols,
                T::zero(),
            );
            g.col2im(&dcols, dxs);
        }
    }
    Tensor::new(in_shape.to_vec(), dx)
}

/// Accumulates `dL/dW` given the layer input and the output gradient.
pub fn conv2d_weight_grad<T: Scalar>(
    cfg: Conv2dConfig,
    x: &Tensor<T>,
    grad: &Tensor<T>,
    dweight: &mut [T],
) -> Result<()> {
    let g = Geometry::resolve(cfg, x.shape())?;
    let n = x.batch();
    if grad.shape() != [n, cfg.out_channels, g.ho, g.wo] {
        return Err(NnError::shape(
            Conv2d::KIND,
            format!("upstream gradient shape {:?}", grad.shape()),
        ));
    }
    let mut scratch = Vec::new();
    for i in 0..n {
        let xs = &x.data()[i * g.in_len()..(i + 1) * g.in_len()];
        let gs = &grad.data()[i * g.out_len()..(i + 1) * g.out_len()];
        g.with_cols(xs, &mut scratch, |cols| {
            gemm(
                cfg.out_channels,
                g.out_pixels(),
                cfg.patch_len(),
                gs,
                false,
                cols,
                true,
                dweight,
                T::one(),
            )
        });
    }
    Ok(())
}

/// 2-D convolution layer with bias.
pub struct Conv2d<T: Scalar = f32> {
    cfg: Conv2dConfig,
    weight: Param<T>,
    bias: Option<Param<T>>,
    input: Option<Tensor<T>>,
}

impl Conv2d {
    pub const KIND: &'static str = "conv2d";
}

impl<T: Scalar> Conv2d<T> {
    pub fn new(cfg: Conv2dConfig, init: &mut Initializer) -> Result<Self> {
        cfg.validate()?;
        let fan_in = cfg.patch_len();
        let weight = init.kaiming(&[cfg.out_channels, cfg.in_channels, cfg.kernel, cfg.kernel], fan_in);
        Ok(Self {
            cfg,
            weight: Param::new("conv2d.weight", weight),
            bias: cfg
                .bias
                .then(|| Param::new("conv2d.bias", Tensor::zeros(&[cfg.out_channels]))),
            input: None,
        })
    }

    pub fn config(&self) -> Conv2dConfig {
        self.cfg
    }

    pub fn weight_mut(&mut self) -> &mut Param<T> {
        &mut self.weight
    }

    pub fn bias_mut(&mut self) -> Option<&mut Param<T>> {
        self.bias.as_mut()
    }
}

impl<T: Scalar> Layer<T> for Conv2d<T> {
    fn kind(&self) -> &'static str {
        Conv2d::KIND
    }

    fn spec(&self) -> LayerSpec {
        LayerSpec::new(Conv2d::KIND, self.cfg)
    }

    fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let y = self.infer(x)?;
        self.input = Some(x.clone());
        Ok(y)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        conv2d_forward(
            self.cfg,
            x,
            self.weight.value.data(),
            self.bias.as_ref().map(|b| b.value.data()),
        )
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self.input.as_ref().ok_or(NnError::NoCache(Conv2d::KIND))?;
        let dx = conv2d_input_grad(self.cfg, x.shape(), grad, self.weight.value.data())?;
        conv2d_weight_grad(self.cfg, x, grad, &mut self.weight.grad)?;
        if let Some(bias) = &mut self.bias {
            let plane = grad.shape()[2] * grad.shape()[3];
            for (i, chunk) in grad.data().chunks(plane).enumerate() {
                bias.grad[i % self.cfg.out_channels] += chunk.iter().copied().sum::<T>();
            }
        }
        Ok(dx)
    }

    fn params(&self) -> Vec<&Param<T>> {
        std::iter::once(&self.weight).chain(self.bias.as_ref()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        std::iter::once(&mut self.weight).chain(self.bias.as_mut()).collect()
    }

    fn input_grad(&self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self.input.as_ref().ok_or(NnError::NoCache(Conv2d::KIND))?;
        conv2d_input_grad(self.cfg, x.shape(), grad, self.weight.value.data())
    }

    fn tangent(&self, a: &Tensor<T>) -> Result<Tensor<T>> {
        conv2d_forward(self.cfg, a, self.weight.value.data(), None)
    }

    fn accumulate_second_order(&mut self, a_in: &Tensor<T>, u_out: &Tensor<T>) -> Result<()> {
        conv2d_weight_grad(self.cfg, a_in, u_out, &mut self.weight.grad)
    }
}
