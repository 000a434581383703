use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};
use texvib_nn::loss::{cross_entropy, ClassTarget};
use texvib_nn::{Adam, AdamConfig, Initializer, Layer, Sequential, Tensor};

use super::{augment, build_encoder, image_batch, mixup, AugmentConfig, EncoderArch, EncoderCheckpoint};
use crate::dataset::{Dataset, TextureImage};
use crate::error::{CoreError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderTrainConfig {
    pub batch_size: usize,
    pub lr: f32,
    pub epochs: usize,
    pub seed: u64,
    pub augment: AugmentConfig,
    /// Evaluations without a new best clean loss before the rate decays.
    pub plateau_patience: usize,
    pub lr_decay: f32,
    pub max_decays: usize,
}

impl Default for EncoderTrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            lr: 1e-3,
            epochs: 30,
            seed: 0,
            augment: AugmentConfig::default(),
            plateau_patience: 3,
            lr_decay: 0.1,
            max_decays: 2,
        }
    }
}

impl EncoderTrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |d: &str| Err(CoreError::config("encoder training config", d));
        if self.batch_size < 2 {
            return bad("batch size must be at least 2");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad("decay factor must lie in (0, 1]");
        }
        if self.plateau_patience == 0 {
            return bad("plateau patience must be at least 1");
        }
        self.augment.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean loss over the epoch's augmented (and mixed) batches.
    pub train_loss: f64,
    /// Loss on center-cropped, unaugmented training images after the epoch.
    pub clean_loss: f64,
    pub lr: f32,
}

pub struct TrainedEncoder {
    pub checkpoint: EncoderCheckpoint,
    /// Clean training loss of the initial weights.
    pub initial_clean_loss: f64,
    pub epochs: Vec<EpochMetrics>,
}

/// Decays the learning rate when the monitored loss stops improving.
struct Plateau {
    best: f64,
    waited: usize,
    decays: usize,
}

impl Plateau {
    fn observe(&mut self, loss: f64, cfg: &EncoderTrainConfig) -> bool {
        if loss < self.best {
            self.best = loss;
            self.waited = 0;
            return false;
        }
        self.waited += 1;
        if self.waited >= cfg.plateau_patience && self.decays < cfg.max_decays {
            self.waited = 0;
            self.decays += 1;
            return true;
        }
        false
    }
}

fn sample_seed(seed: u64, epoch: usize, index: usize) -> u64 {
    let mut z = seed ^ ((epoch as u64) << 32) ^ index as u64;
    // splitmix64 finalizer
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn check_dataset(d: &Dataset, arch: &EncoderArch, role: &str) -> Result<()> {
    if d.pairs.is_empty() {
        return Err(CoreError::Dataset(format!("{role} split is empty")));
    }
    if d.class_names.len() != arch.label_dim {
        return Err(CoreError::ClassMismatch(format!(
            "{role} split has {} classes, encoder has {} outputs",
            d.class_names.len(),
            arch.label_dim
        )));
    }
    Ok(())
}

/// Mean cross-entropy and accuracy of the frozen network on center crops.
pub(crate) fn evaluate(net: &Sequential, images: &[TextureImage], labels: &[usize], batch: usize) -> Result<(f64, f32)> {
    let (mut loss, mut hits) = (0.0, 0usize);
    for (imgs, labs) in images.chunks(batch).zip(labels.chunks(batch)) {
        let logits = net.infer(&image_batch(&imgs.iter().collect::<Vec<_>>())?)?;
        let (l, _) = cross_entropy(&logits, ClassTarget::Index(labs))?;
        loss += l * labs.len() as f64;
        hits += logits
            .data()
            .chunks(logits.shape()[1])
            .zip(labs)
            .filter(|(row, &k)| texvib_nn::loss::argmax(row) == k)
            .count();
    }
    Ok((loss / labels.len() as f64, hits as f32 / labels.len() as f32))
}

/// Trains on `train` with augmentation and mixup, decaying the learning rate
/// on plateaus of the clean training loss, and reports accuracy on `test`.
pub fn train_encoder(
    train: &Dataset,
    test: &Dataset,
    arch: &EncoderArch,
    cfg: &EncoderTrainConfig,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainedEncoder> {
    cfg.validate()?;
    arch.validate()?;
    check_dataset(train, arch, "training")?;
    check_dataset(test, arch, "test")?;
    if train.class_names != test.class_names {
        return Err(CoreError::ClassMismatch("training and test splits list different classes".into()));
    }
    if cfg.augment.crop != arch.image_size {
        return Err(CoreError::config("encoder training config", "augmentation crop must equal the input size"));
    }

    let mut net = build_encoder(arch, &mut Initializer::new(cfg.seed))?;
    let mut opt = Adam::new(AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    });
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x0065_6e63_6f64_6572);
    let beta = (cfg.augment.mixup_alpha > 0.0)
        .then(|| Beta::new(cfg.augment.mixup_alpha, cfg.augment.mixup_alpha))
        .transpose()
        .map_err(|e| CoreError::config("mixup", e.to_string()))?;

    let k = arch.label_dim;
    let labels: Vec<usize> = train.pairs.iter().map(|p| p.class_index).collect();
    let clean: Vec<TextureImage> = train.pairs.iter().map(|p| p.image.center_square(arch.image_size)).collect();
    let (initial_clean_loss, _) = evaluate(&net, &clean, &labels, cfg.batch_size)?;
    let mut plateau = Plateau {
        best: initial_clean_loss,
        waited: 0,
        decays: 0,
    };

    let mut order: Vec<usize> = (0..train.pairs.len()).collect();
    let mut epochs = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut seen) = (0.0, 0usize);
        for idx in order.chunks(cfg.batch_size).filter(|c| c.len() >= 2) {
            let mut images = Vec::with_capacity(idx.len());
            let mut targets = Vec::with_capacity(idx.len());
            for &i in idx {
                images.push(augment(&train.pairs[i].image, &cfg.augment, sample_seed(cfg.seed, epoch, i))?);
                let mut t = vec![0.0f32; k];
                t[labels[i]] = 1.0;
                targets.push(t);
            }
            if let Some(beta) = &beta {
                let lambda = beta.sample(&mut rng);
                let mut partner: Vec<usize> = (0..idx.len()).collect();
                partner.shuffle(&mut rng);
                let mixed: Vec<(TextureImage, Vec<f32>)> = (0..idx.len())
                    .map(|j| {
                        let p = partner[j];
                        mixup((&images[j], &targets[j]), (&images[p], &targets[p]), lambda)
                    })
                    .collect::<Result<_>>()?;
                (images, targets) = mixed.into_iter().unzip();
            }
            let x = image_batch(&images.iter().collect::<Vec<_>>())?;
            let t = Tensor::new(vec![idx.len(), k], targets.concat())?;
            net.zero_grad();
            let logits = net.forward(&x)?;
            let (loss, grad) = cross_entropy(&logits, ClassTarget::Soft(&t))?;
            if !loss.is_finite() {
                return Err(CoreError::Diverged(format!("encoder loss {loss} in epoch {}", epoch + 1)));
            }
            net.backward(&grad)?;
            opt.step(&mut net.params_mut())?;
            loss_sum += loss * idx.len() as f64;
            seen += idx.len();
        }
        let (clean_loss, _) = evaluate(&net, &clean, &labels, cfg.batch_size)?;
        let m = EpochMetrics {
            epoch: epoch + 1,
            train_loss: loss_sum / seen.max(1) as f64,
            clean_loss,
            lr: opt.cfg.lr,
        };
        on_epoch(&m);
        epochs.push(m);
        if plateau.observe(clean_loss, cfg) {
            opt.set_lr(opt.cfg.lr * cfg.lr_decay);
            tracing::info!(epoch = epoch + 1, lr = opt.cfg.lr, "clean loss plateaued; learning rate decayed");
        }
    }

    let test_images: Vec<TextureImage> = test.pairs.iter().map(|p| p.image.center_square(arch.image_size)).collect();
    let test_labels: Vec<usize> = test.pairs.iter().map(|p| p.class_index).collect();
    let (_, accuracy) = evaluate(&net, &test_images, &test_labels, cfg.batch_size)?;
    Ok(TrainedEncoder {
        checkpoint: EncoderCheckpoint {
            arch: arch.clone(),
            network: net,
            class_names: train.class_names.clone(),
            test_accuracy: Some(accuracy),
        },
        initial_clean_loss,
        epochs,
    })
}
