//! Conditional generator/discriminator pair (auxiliary-classifier GAN) and
//! its training loop with a DRAGAN gradient penalty.

mod penalty;
mod train;

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use texvib_nn::checkpoint::{read_tnn1, write_tnn1};
use texvib_nn::layers::{
    sigmoid, BatchNorm, BatchNormConfig, Conv2d, Conv2dConfig, Dense, DenseConfig, LeakyRelu, LeakyReluConfig,
    PixelShuffle, PixelShuffleConfig, Relu, Reshape, ReshapeConfig, ResidualBlock, ResidualBlockConfig, Sigmoid,
};
use texvib_nn::{Initializer, Layer, LayerRegistry, Sequential, Tensor};

use crate::codec::{CodecConfig, ModelSpectrogram, NormStats, RANGE_TOLERANCE};
use crate::error::{CoreError, Result};
use crate::label::{check_simplex, LabelVector, SIMPLEX_TOLERANCE};

pub use penalty::{dragan_penalty, gradient_penalty, perturb, PenaltyOutput};
pub use train::{gan_train_step, train_gan, GanData, GanState, GanTrainConfig, StepMetrics, TrainedGan};

/// Layer widths of both networks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GanArch {
    pub label_dim: usize,
    pub noise_dim: usize,
    /// Spatial size of the dense projection's output grid.
    pub base_size: usize,
    pub base_channels: usize,
    pub residual_blocks: usize,
    /// Channel count after each ×2 pixel-shuffle stage.
    pub upsample_channels: Vec<usize>,
    /// Output channels of the stride-2 discriminator convolutions.
    pub disc_channels: Vec<usize>,
    pub leaky_slope: f32,
}

impl GanArch {
    /// 8×8×256 projection, three residual blocks, four upsampling stages
    /// (8→128) and a 32→512 five-stage discriminator.
    pub fn reference(label_dim: usize, noise_dim: usize) -> Self {
        Self {
            label_dim,
            noise_dim,
            base_size: 8,
            base_channels: 256,
            residual_blocks: 3,
            upsample_channels: vec![128, 64, 32, 16],
            disc_channels: vec![32, 64, 128, 256, 512],
            leaky_slope: 0.2,
        }
    }

    /// Same topology with widths cut so training fits a single CPU core.
    pub fn desk(label_dim: usize, noise_dim: usize) -> Self {
        Self {
            base_channels: 32,
            residual_blocks: 3,
            upsample_channels: vec![32, 16, 8, 8],
            disc_channels: vec![8, 16, 32, 64, 64],
            ..Self::reference(label_dim, noise_dim)
        }
    }

    pub fn preset(name: &str, label_dim: usize, noise_dim: usize) -> Result<Self> {
        match name {
            "reference" => Ok(Self::reference(label_dim, noise_dim)),
            "desk" => Ok(Self::desk(label_dim, noise_dim)),
            other => Err(CoreError::UnknownStrategy {
                registry: "architecture preset",
                name: other.to_string(),
                known: "desk, reference".into(),
            }),
        }
    }

    pub fn output_size(&self) -> usize {
        self.base_size << self.upsample_channels.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |d: &str| Err(CoreError::config("GAN architecture", d));
        if self.label_dim == 0 || self.noise_dim == 0 {
            return bad("label and noise dimensions must be at least 1");
        }
        if self.base_size == 0 || self.base_channels == 0 || self.upsample_channels.contains(&0) {
            return bad("generator sizes must be positive");
        }
        if self.disc_channels.is_empty() || self.disc_channels.contains(&0) {
            return bad("discriminator needs at least one positive-width stage");
        }
        if !(0.0..1.0).contains(&self.leaky_slope) {
            return bad("leaky slope must lie in [0, 1)");
        }
        if self.disc_feature_size() == 0 {
            return bad("discriminator downsamples below 1 pixel");
        }
        Ok(())
    }

    /// Spatial size after the discriminator's stride-2 stages.
    pub fn disc_final_size(&self) -> usize {
        let mut s = self.output_size();
        for _ in &self.disc_channels {
            s = if s == 0 { 0 } else { (s - 1) / 2 + 1 };
        }
        s
    }

    pub fn disc_feature_size(&self) -> usize {
        let s = self.disc_final_size();
        self.disc_channels.last().copied().unwrap_or(0) * s * s
    }

    pub fn check_codec(&self, codec: &CodecConfig) -> Result<()> {
        let s = self.output_size();
        if (codec.model_freq_bins, codec.model_time_frames) != (s, s) {
            return Err(CoreError::Dimension(format!(
                "generator emits {s}x{s}, model domain is {}x{}",
                codec.model_freq_bins, codec.model_time_frames
            )));
        }
        Ok(())
    }
}

pub fn param_count(net: &Sequential) -> usize {
    net.params().iter().map(|p| p.value.len()).sum()
}

pub fn build_generator(arch: &GanArch, init: &mut Initializer) -> Result<Sequential> {
    arch.validate()?;
    let (b, c0) = (arch.base_size, arch.base_channels);
    let mut g = Sequential::default();
    g.push(Dense::new(
        DenseConfig {
            inputs: arch.noise_dim + arch.label_dim,
            outputs: c0 * b * b,
        },
        init,
    )?);
    g.push(Reshape::new(ReshapeConfig { shape: vec![c0, b, b] })?);
    g.push(BatchNorm::new(BatchNormConfig::new(c0))?);
    g.push(Relu::new());
    for _ in 0..arch.residual_blocks {
        g.push(ResidualBlock::new(
            ResidualBlockConfig {
                in_channels: c0,
                out_channels: c0,
                stride: 1,
                branch_relu: true,
                output_relu: false,
            },
            init,
        )?);
    }
    let mut c = c0;
    for &next in &arch.upsample_channels {
        g.push(Conv2d::new(Conv2dConfig::same3x3(c, 4 * next, 1), init)?);
        g.push(PixelShuffle::new(PixelShuffleConfig { factor: 2 })?);
        g.push(Relu::new());
        c = next;
    }
    g.push(Conv2d::new(Conv2dConfig::same3x3(c, 1, 1), init)?);
    g.push(Sigmoid::new());
    Ok(g)
}

/// Shared convolutional trunk with a real/fake logit head and a class-logit
/// head.
pub struct Discriminator {
    pub trunk: Sequential,
    pub real_head: Sequential,
    pub aux_head: Sequential,
}

pub struct DiscOutput {
    /// Pre-sigmoid real/fake score, `(N, 1)`.
    pub real_logit: Tensor,
    /// Class logits, `(N, classes)`.
    pub class_logits: Tensor,
}

impl DiscOutput {
    pub fn prob_real(&self) -> Vec<f32> {
        self.real_logit.data().iter().map(|&v| sigmoid(v)).collect()
    }
}

impl Discriminator {
    pub fn build(arch: &GanArch, init: &mut Initializer) -> Result<Self> {
        arch.validate()?;
        let mut trunk = Sequential::default();
        let mut c = 1;
        for &next in &arch.disc_channels {
            trunk.push(Conv2d::new(Conv2dConfig::same3x3(c, next, 2), init)?);
            trunk.push(LeakyRelu::new(LeakyReluConfig {
                slope: arch.leaky_slope,
            })?);
            c = next;
        }
        let features = arch.disc_feature_size();
        trunk.push(Reshape::new(ReshapeConfig { shape: vec![features] })?);
        let mut real_head = Sequential::default();
        real_head.push(Dense::new(
            DenseConfig {
                inputs: features,
                outputs: 1,
            },
            init,
        )?);
        let mut aux_head = Sequential::default();
        aux_head.push(Dense::new(
            DenseConfig {
                inputs: features,
                outputs: arch.label_dim,
            },
            init,
        )?);
        Ok(Self {
            trunk,
            real_head,
            aux_head,
        })
    }

    /// Frozen-parameter evaluation; rejects inputs outside [0, 1].
    pub fn infer(&self, x: &Tensor) -> Result<DiscOutput> {
        check_model_batch(x)?;
        let f = self.trunk.infer(x)?;
        Ok(DiscOutput {
            real_logit: self.real_head.infer(&f)?,
            class_logits: self.aux_head.infer(&f)?,
        })
    }

    /// Caching forward pass for training.
    pub fn forward(&mut self, x: &Tensor) -> Result<DiscOutput> {
        let f = self.trunk.forward(x)?;
        Ok(DiscOutput {
            real_logit: self.real_head.forward(&f)?,
            class_logits: self.aux_head.forward(&f)?,
        })
    }

    /// Backpropagates head gradients; returns the input gradient.
    pub fn backward(&mut self, d_real: &Tensor, d_class: &Tensor) -> Result<Tensor> {
        let a = self.real_head.backward(d_real)?;
        let b = self.aux_head.backward(d_class)?;
        let sum: Vec<f32> = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
        Ok(self.trunk.backward(&Tensor::new(a.shape().to_vec(), sum)?)?)
    }

    pub fn zero_grad(&mut self) {
        self.trunk.zero_grad();
        self.real_head.zero_grad();
        self.aux_head.zero_grad();
    }

    pub fn params_mut(&mut self) -> Vec<&mut texvib_nn::Param> {
        let mut p = self.trunk.params_mut();
        p.extend(self.real_head.params_mut());
        p.extend(self.aux_head.params_mut());
        p
    }

    pub fn param_count(&self) -> usize {
        [&self.trunk, &self.real_head, &self.aux_head]
            .iter()
            .flat_map(|s| s.params())
            .map(|p| p.value.len())
            .sum()
    }
}

fn check_model_batch(x: &Tensor) -> Result<()> {
    if x.shape().len() != 4 || x.shape()[1] != 1 {
        return Err(CoreError::Dimension(format!("expected (N, 1, H, W) spectrograms, got {:?}", x.shape())));
    }
    if let Some(v) = x
        .data()
        .iter()
        .find(|v| !(**v >= -RANGE_TOLERANCE && **v <= 1.0 + RANGE_TOLERANCE))
    {
        return Err(CoreError::Range(format!("discriminator input {v} outside [0, 1]")));
    }
    Ok(())
}

/// Row-wise concatenation of noise `(N, noise_dim)` and labels `(N, label_dim)`.
pub fn generator_input(z: &Tensor, c: &Tensor) -> Result<Tensor> {
    if z.shape().len() != 2 || c.shape().len() != 2 || z.batch() != c.batch() {
        return Err(CoreError::Dimension(format!(
            "noise {:?} and labels {:?} must be (N, ·) with equal N",
            z.shape(),
            c.shape()
        )));
    }
    let (nz, nc) = (z.shape()[1], c.shape()[1]);
    let mut data = Vec::with_capacity(z.batch() * (nz + nc));
    for i in 0..z.batch() {
        data.extend_from_slice(z.sample(i));
        data.extend_from_slice(c.sample(i));
    }
    Ok(Tensor::new(vec![z.batch(), nz + nc], data)?)
}

/// Seeded standard-normal noise, `(n, dim)`.
pub fn noise(n: usize, dim: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::randn(&[n, dim], &mut rng)
}

/// Frozen-generator evaluation of `G(z, c)`; every label row must lie on
/// the simplex.
pub fn generator_forward(gen: &Sequential, z: &Tensor, c: &Tensor) -> Result<Tensor> {
    for i in 0..c.batch() {
        check_simplex(c.sample(i), SIMPLEX_TOLERANCE)?;
    }
    Ok(gen.infer(&generator_input(z, c)?)?)
}

/// Everything needed to sample and invert spectrograms.
pub struct GanCheckpoint {
    pub arch: GanArch,
    pub generator: Sequential,
    pub discriminator: Discriminator,
    pub stats: NormStats,
    pub codec: CodecConfig,
    pub class_names: Vec<String>,
    pub step: u64,
}

#[derive(Serialize, Deserialize)]
struct GanMeta {
    kind: String,
    arch: GanArch,
    stats: NormStats,
    codec: CodecConfig,
    class_names: Vec<String>,
    step: u64,
}

const GAN_KIND: &str = "texvib-gan";

/// Checkpoint metadata borrowed from whoever owns the networks.
pub(crate) struct GanHeader<'a> {
    pub arch: &'a GanArch,
    pub stats: NormStats,
    pub codec: &'a CodecConfig,
    pub class_names: &'a [String],
    pub step: u64,
}

pub(crate) fn write_gan<W: std::io::Write>(
    w: W,
    header: &GanHeader<'_>,
    generator: &Sequential,
    disc: &Discriminator,
) -> Result<()> {
    let meta = GanMeta {
        kind: GAN_KIND.into(),
        arch: header.arch.clone(),
        stats: header.stats,
        codec: header.codec.clone(),
        class_names: header.class_names.to_vec(),
        step: header.step,
    };
    let meta = serde_json::to_value(meta).expect("metadata serializes");
    write_tnn1(
        w,
        &meta,
        &[
            ("generator", generator),
            ("disc_trunk", &disc.trunk),
            ("disc_real", &disc.real_head),
            ("disc_aux", &disc.aux_head),
        ],
    )?;
    Ok(())
}

impl GanCheckpoint {
    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        self.arch.check_codec(&self.codec)?;
        self.stats.validate()?;
        if self.class_names.len() != self.arch.label_dim {
            return Err(CoreError::ClassMismatch(format!(
                "{} class names for label dimension {}",
                self.class_names.len(),
                self.arch.label_dim
            )));
        }
        Ok(())
    }

    pub fn label_dim(&self) -> usize {
        self.arch.label_dim
    }

    pub fn write<W: std::io::Write>(&self, w: W) -> Result<()> {
        write_gan(w, &self.header(), &self.generator, &self.discriminator)
    }

    fn header(&self) -> GanHeader<'_> {
        GanHeader {
            arch: &self.arch,
            stats: self.stats,
            codec: &self.codec,
            class_names: &self.class_names,
            step: self.step,
        }
    }

    pub fn read<R: std::io::Read>(r: R) -> Result<Self> {
        let mut loaded = read_tnn1(r, &LayerRegistry::builtin())?;
        let meta: GanMeta = serde_json::from_value(loaded.meta.clone())
            .map_err(|e| CoreError::format("GAN checkpoint", format!("metadata: {e}")))?;
        if meta.kind != GAN_KIND {
            return Err(CoreError::format("GAN checkpoint", format!("holds a `{}`", meta.kind)));
        }
        let ckpt = Self {
            generator: loaded.take("generator")?,
            discriminator: Discriminator {
                trunk: loaded.take("disc_trunk")?,
                real_head: loaded.take("disc_real")?,
                aux_head: loaded.take("disc_aux")?,
            },
            arch: meta.arch,
            stats: meta.stats,
            codec: meta.codec,
            class_names: meta.class_names,
            step: meta.step,
        };
        ckpt.validate()?;
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::new();
        self.write(&mut bytes)?;
        std::fs::write(path, bytes).map_err(|e| CoreError::file(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| CoreError::file(path, e))?;
        Self::read(bytes.as_slice())
    }
}

/// `n` spectrograms `G(z_i, c)` with noise drawn from `seed`; the
/// discriminator is not involved.
pub fn sample(ckpt: &GanCheckpoint, c: &LabelVector, seed: u64, n: usize) -> Result<Vec<ModelSpectrogram>> {
    if c.dim() != ckpt.label_dim() {
        return Err(CoreError::ClassMismatch(format!(
            "label has {} entries, generator expects {}",
            c.dim(),
            ckpt.label_dim()
        )));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let z = noise(n, ckpt.arch.noise_dim, seed);
    let labels = Tensor::new(
        vec![n, c.dim()],
        (0..n).flat_map(|_| c.values().iter().copied()).collect(),
    )?;
    let out = generator_forward(&ckpt.generator, &z, &labels)?;
    to_model_spectrograms(&out, &ckpt.stats, &ckpt.codec)
}

/// Splits a `(N, 1, H, W)` generator output into model spectrograms.
pub fn to_model_spectrograms(out: &Tensor, stats: &NormStats, codec: &CodecConfig) -> Result<Vec<ModelSpectrogram>> {
    let (rows, cols) = (codec.model_freq_bins, codec.model_time_frames);
    if out.shape() != [out.batch(), 1, rows, cols] {
        return Err(CoreError::Dimension(format!(
            "generator output {:?} is not (N, 1, {rows}, {cols})",
            out.shape()
        )));
    }
    (0..out.batch())
        .map(|i| {
            let data = out.sample(i).iter().map(|v| v.clamp(0.0, 1.0)).collect();
            ModelSpectrogram::new(rows, cols, data, *stats, codec.clone())
        })
        .collect()
}

/// Stacks model spectrograms into a `(N, 1, H, W)` tensor.
pub fn stack_spectrograms(specs: &[&ModelSpectrogram]) -> Result<Tensor> {
    let first = specs
        .first()
        .ok_or_else(|| CoreError::Dimension("no spectrograms to stack".into()))?;
    let (rows, cols) = (first.rows, first.cols);
    let mut data = Vec::with_capacity(specs.len() * rows * cols);
    for s in specs {
        if (s.rows, s.cols) != (rows, cols) {
            return Err(CoreError::Dimension("spectrograms differ in size".into()));
        }
        data.extend_from_slice(&s.data);
    }
    Ok(Tensor::new(vec![specs.len(), 1, rows, cols], data)?)
}

/// One-hot rows for class indices.
pub fn one_hot_batch(classes: &[usize], dim: usize) -> Tensor {
    let mut data = vec![0.0; classes.len() * dim];
    for (i, &k) in classes.iter().enumerate() {
        data[i * dim + k] = 1.0;
    }
    Tensor::new(vec![classes.len(), dim], data).expect("shape matches")
}
