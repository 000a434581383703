use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use texvib_nn::loss::{accuracy, bce_with_logits, cross_entropy, ClassTarget};
use texvib_nn::{Adam, AdamConfig, Initializer, Layer, NnError, Sequential, Tensor};

use super::{
    build_generator, dragan_penalty, generator_input, one_hot_batch, stack_spectrograms, write_gan, Discriminator,
    GanArch, GanCheckpoint, GanHeader,
};
use crate::codec::{CodecConfig, ModelSpectrogram, NormStats};
use crate::dataset::Dataset;
use crate::error::{CoreError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GanTrainConfig {
    pub batch_size: usize,
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub dragan_lambda: f64,
    pub dragan_perturb_scale: f64,
    pub aux_loss_weight: f64,
    pub steps: u64,
    pub seed: u64,
    /// Steps between checkpoint files; 0 writes only the final one.
    pub checkpoint_every: u64,
}

impl Default for GanTrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            dragan_lambda: 10.0,
            dragan_perturb_scale: 0.5,
            aux_loss_weight: 1.0,
            steps: 2000,
            seed: 0,
            checkpoint_every: 0,
        }
    }
}

impl GanTrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |d: &str| Err(CoreError::config("GAN training config", d));
        if self.batch_size < 2 {
            return bad("batch size must be at least 2");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return bad("Adam betas must lie in [0, 1)");
        }
        if !(self.dragan_lambda > 0.0 && self.dragan_perturb_scale > 0.0) {
            return bad("penalty weight and perturbation scale must be positive");
        }
        if !(self.aux_loss_weight >= 0.0 && self.aux_loss_weight.is_finite()) {
            return bad("auxiliary loss weight must be non-negative");
        }
        Ok(())
    }

    fn adam(&self) -> Adam {
        Adam::new(AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            ..AdamConfig::default()
        })
    }
}

/// Real model-domain spectrograms with class labels.
#[derive(Clone, Debug)]
pub struct GanData {
    pub specs: Vec<ModelSpectrogram>,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
    pub stats: NormStats,
    pub codec: CodecConfig,
}

impl GanData {
    pub fn from_dataset(dataset: &Dataset, stats: &NormStats) -> Result<Self> {
        Ok(Self {
            specs: dataset.model_spectrograms(stats)?,
            labels: dataset.pairs.iter().map(|p| p.class_index).collect(),
            class_names: dataset.class_names.clone(),
            stats: *stats,
            codec: dataset.codec.clone(),
        })
    }

    fn validate(&self, arch: &GanArch) -> Result<()> {
        if self.specs.is_empty() {
            return Err(CoreError::Dataset("no training spectrograms".into()));
        }
        if self.specs.len() != self.labels.len() {
            return Err(CoreError::Dimension("spectrogram and label counts differ".into()));
        }
        if self.class_names.len() != arch.label_dim {
            return Err(CoreError::ClassMismatch(format!(
                "dataset has {} classes, generator label dimension is {}",
                self.class_names.len(),
                arch.label_dim
            )));
        }
        if let Some(k) = self.labels.iter().find(|&&k| k >= arch.label_dim) {
            return Err(CoreError::ClassMismatch(format!("label {k} outside {} classes", arch.label_dim)));
        }
        arch.check_codec(&self.codec)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: u64,
    pub d_loss: f64,
    pub g_loss: f64,
    pub aux_acc_real: f32,
    pub aux_acc_fake: f32,
    pub penalty: f64,
}

/// Mutable training state: both networks, their optimizers and the RNG
/// driving noise, fake labels, penalty perturbations and batch order.
pub struct GanState {
    pub arch: GanArch,
    pub cfg: GanTrainConfig,
    pub generator: Sequential,
    pub discriminator: Discriminator,
    opt_g: Adam,
    opt_d: Adam,
    rng: ChaCha8Rng,
    pub step: u64,
}

impl GanState {
    pub fn new(arch: &GanArch, cfg: &GanTrainConfig) -> Result<Self> {
        cfg.validate()?;
        let mut init = Initializer::new(cfg.seed);
        let generator = build_generator(arch, &mut init)?;
        let discriminator = Discriminator::build(arch, &mut init)?;
        Ok(Self {
            arch: arch.clone(),
            cfg: cfg.clone(),
            generator,
            discriminator,
            opt_g: cfg.adam(),
            opt_d: cfg.adam(),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x6761_6e5f_7472_6169),
            step: 0,
        })
    }

    fn header<'a>(&'a self, data: &'a GanData) -> GanHeader<'a> {
        GanHeader {
            arch: &self.arch,
            stats: data.stats,
            codec: &data.codec,
            class_names: &data.class_names,
            step: self.step,
        }
    }

    fn to_bytes(&self, data: &GanData) -> Result<Vec<u8>> {
        let mut bytes = Vec::new();
        write_gan(&mut bytes, &self.header(data), &self.generator, &self.discriminator)?;
        Ok(bytes)
    }

    /// Freezes a copy of the current weights into a checkpoint (the
    /// networks hold trait objects, so the copy goes through the container).
    pub fn checkpoint(&self, data: &GanData) -> Result<GanCheckpoint> {
        GanCheckpoint::read(self.to_bytes(data)?.as_slice())
    }
}

fn finite(what: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(CoreError::Diverged(format!("{what} is {v}")))
    }
}

fn diverged(e: texvib_nn::NnError) -> CoreError {
    match e {
        NnError::NonFiniteGradient(name) => CoreError::Diverged(format!("non-finite gradient in {name}")),
        NnError::LossInput(detail) => CoreError::Diverged(detail),
        other => other.into(),
    }
}

fn scaled(t: Tensor, w: f64) -> Tensor {
    t.map(|v| (v as f64 * w) as f32)
}

/// One discriminator update followed by one generator update on a real
/// batch `(N, 1, H, W)` with class indices.
pub fn gan_train_step(state: &mut GanState, real: &Tensor, real_labels: &[usize]) -> Result<StepMetrics> {
    let n = real.batch();
    if n != state.cfg.batch_size || real_labels.len() != n {
        return Err(CoreError::Dimension(format!(
            "batch of {n} spectrograms and {} labels, configured batch size {}",
            real_labels.len(),
            state.cfg.batch_size
        )));
    }
    let arch = &state.arch;
    let w = state.cfg.aux_loss_weight;
    let fake_labels: Vec<usize> = (0..n).map(|_| state.rng.random_range(0..arch.label_dim)).collect();
    let z = Tensor::randn(&[n, arch.noise_dim], &mut state.rng);
    let penalty_seed: u64 = state.rng.random();
    let g_in = generator_input(&z, &one_hot_batch(&fake_labels, arch.label_dim))?;
    let fake = state.generator.forward(&g_in)?;

    // Discriminator.
    let disc = &mut state.discriminator;
    disc.zero_grad();
    let out_real = disc.forward(real)?;
    let (l_real, g_real) = bce_with_logits(out_real.real_logit.data(), &vec![1.0; n]).map_err(diverged)?;
    let (ce_real, g_ce_real) = cross_entropy(&out_real.class_logits, ClassTarget::Index(real_labels)).map_err(diverged)?;
    disc.backward(&Tensor::new(vec![n, 1], g_real)?, &scaled(g_ce_real, w))?;
    let aux_acc_real = accuracy(&out_real.class_logits, real_labels);

    let out_fake = disc.forward(&fake)?;
    let (l_fake, g_fake) = bce_with_logits(out_fake.real_logit.data(), &vec![0.0; n]).map_err(diverged)?;
    let (ce_fake, g_ce_fake) =
        cross_entropy(&out_fake.class_logits, ClassTarget::Index(&fake_labels)).map_err(diverged)?;
    disc.backward(&Tensor::new(vec![n, 1], g_fake)?, &scaled(g_ce_fake, w))?;
    let aux_acc_fake = accuracy(&out_fake.class_logits, &fake_labels);

    let penalty = dragan_penalty(
        disc,
        real,
        state.cfg.dragan_lambda,
        state.cfg.dragan_perturb_scale,
        penalty_seed,
    )?
    .value;
    let d_loss = finite("discriminator loss", l_real + l_fake + w * (ce_real + ce_fake) + penalty)?;
    state.opt_d.step(&mut disc.params_mut()).map_err(diverged)?;

    // Generator, through the updated discriminator.
    state.generator.zero_grad();
    let out = disc.forward(&fake)?;
    let (l_gen, g_gen) = bce_with_logits(out.real_logit.data(), &vec![1.0; n]).map_err(diverged)?;
    let (ce_gen, g_ce_gen) = cross_entropy(&out.class_logits, ClassTarget::Index(&fake_labels)).map_err(diverged)?;
    let g_loss = finite("generator loss", l_gen + w * ce_gen)?;
    let d_fake = disc.backward(&Tensor::new(vec![n, 1], g_gen)?, &scaled(g_ce_gen, w))?;
    state.generator.backward(&d_fake)?;
    state.opt_g.step(&mut state.generator.params_mut()).map_err(diverged)?;
    disc.zero_grad();

    state.step += 1;
    Ok(StepMetrics {
        step: state.step,
        d_loss,
        g_loss,
        aux_acc_real,
        aux_acc_fake,
        penalty,
    })
}

/// Result of [`train_gan`].
pub struct TrainedGan {
    pub checkpoint: GanCheckpoint,
    pub metrics: Vec<StepMetrics>,
}

/// Runs `cfg.steps` training steps over shuffled epochs of `data`.
///
/// With `checkpoint_dir` set, checkpoints are written every
/// `cfg.checkpoint_every` steps plus at the end; on divergence the last
/// good weights are dumped to `diverged.tnn` before the error is returned.
pub fn train_gan(
    data: &GanData,
    arch: &GanArch,
    cfg: &GanTrainConfig,
    checkpoint_dir: Option<&Path>,
    mut on_step: impl FnMut(&StepMetrics),
) -> Result<TrainedGan> {
    data.validate(arch)?;
    let mut state = GanState::new(arch, cfg)?;
    if data.specs.len() < cfg.batch_size {
        return Err(CoreError::Dataset(format!(
            "{} training spectrograms for batch size {}",
            data.specs.len(),
            cfg.batch_size
        )));
    }
    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x006f_7264_6572);
    let mut order: Vec<usize> = (0..data.specs.len()).collect();
    let mut cursor = order.len();
    let mut metrics = Vec::with_capacity(cfg.steps as usize);
    let mut last_good: Option<Vec<u8>> = None;

    while state.step < cfg.steps {
        if cursor + cfg.batch_size > order.len() {
            order.shuffle(&mut order_rng);
            cursor = 0;
        }
        let idx = &order[cursor..cursor + cfg.batch_size];
        cursor += cfg.batch_size;
        let batch: Vec<&ModelSpectrogram> = idx.iter().map(|&i| &data.specs[i]).collect();
        let labels: Vec<usize> = idx.iter().map(|&i| data.labels[i]).collect();
        let real = stack_spectrograms(&batch)?;

        if checkpoint_dir.is_some() {
            last_good = Some(state.to_bytes(data)?);
        }
        match gan_train_step(&mut state, &real, &labels) {
            Ok(m) => {
                on_step(&m);
                metrics.push(m);
            }
            Err(e @ CoreError::Diverged(_)) => {
                if let (Some(dir), Some(bytes)) = (checkpoint_dir, &last_good) {
                    let path = dir.join("diverged.tnn");
                    std::fs::write(&path, bytes).map_err(|err| CoreError::file(&path, err))?;
                    tracing::error!(path = %path.display(), "training diverged; last good weights saved");
                }
                return Err(e);
            }
            Err(e) => return Err(e),
        }
        if let Some(dir) = checkpoint_dir {
            if cfg.checkpoint_every > 0 && state.step % cfg.checkpoint_every == 0 && state.step < cfg.steps {
                state.checkpoint(data)?.save(&step_path(dir, state.step))?;
            }
        }
    }
    let checkpoint = state.checkpoint(data)?;
    if let Some(dir) = checkpoint_dir {
        checkpoint.save(&dir.join("gan.tnn"))?;
    }
    Ok(TrainedGan { checkpoint, metrics })
}

pub fn step_path(dir: &Path, step: u64) -> PathBuf {
    dir.join(format!("gan-step{step:06}.tnn"))
}
