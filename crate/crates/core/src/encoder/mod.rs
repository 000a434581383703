//! Texture-image classifier whose final class activation serves as the
//! generator's label vector.

mod augment;
mod train;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use texvib_nn::checkpoint::{read_tnn1, write_tnn1};
use texvib_nn::layers::{
    softmax_rows, BatchNorm, BatchNormConfig, Conv2d, Conv2dConfig, Dense, DenseConfig, GlobalAvgPool, Relu,
    ResidualBlock, ResidualBlockConfig,
};
use texvib_nn::loss::argmax;
use texvib_nn::{Initializer, Layer, LayerRegistry, Sequential, Tensor};

use crate::dataset::TextureImage;
use crate::error::{CoreError, Result};
use crate::label::LabelVector;

pub use augment::{augment, mixup, AugmentConfig};
pub use train::{train_encoder, EncoderTrainConfig, EpochMetrics, TrainedEncoder};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderArch {
    pub label_dim: usize,
    pub image_size: usize,
    pub stem_channels: usize,
    /// Output channels of the residual blocks; every block after the first
    /// halves the spatial size.
    pub block_channels: Vec<usize>,
}

impl EncoderArch {
    pub fn standard(label_dim: usize) -> Self {
        Self {
            label_dim,
            image_size: 128,
            stem_channels: 16,
            block_channels: vec![16, 32, 64, 128],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.label_dim < 2 {
            return Err(CoreError::config("encoder architecture", "at least two classes are required"));
        }
        if self.image_size == 0 || self.stem_channels == 0 || self.block_channels.is_empty() {
            return Err(CoreError::config("encoder architecture", "sizes must be positive"));
        }
        if self.block_channels.contains(&0) {
            return Err(CoreError::config("encoder architecture", "block widths must be positive"));
        }
        Ok(())
    }
}

/// `conv3×3/2 → BN → ReLU → residual blocks → global average pool → dense`.
/// The network ends in class logits; softmax is applied by the caller.
pub fn build_encoder(arch: &EncoderArch, init: &mut Initializer) -> Result<Sequential> {
    arch.validate()?;
    let mut net = Sequential::default();
    net.push(Conv2d::new(Conv2dConfig::same3x3(3, arch.stem_channels, 2).without_bias(), init)?);
    net.push(BatchNorm::new(BatchNormConfig::new(arch.stem_channels))?);
    net.push(Relu::new());
    let mut c = arch.stem_channels;
    for (i, &next) in arch.block_channels.iter().enumerate() {
        net.push(ResidualBlock::new(
            ResidualBlockConfig {
                in_channels: c,
                out_channels: next,
                stride: if i == 0 { 1 } else { 2 },
                branch_relu: false,
                output_relu: true,
            },
            init,
        )?);
        c = next;
    }
    net.push(GlobalAvgPool::new());
    net.push(Dense::new(
        DenseConfig {
            inputs: c,
            outputs: arch.label_dim,
        },
        init,
    )?);
    Ok(net)
}

/// Stacks `size × size` images into an `(N, 3, size, size)` tensor.
pub fn image_batch(images: &[&TextureImage]) -> Result<Tensor> {
    let first = images
        .first()
        .ok_or_else(|| CoreError::Dimension("no images to stack".into()))?;
    let (w, h) = (first.width, first.height);
    let mut data = Vec::with_capacity(images.len() * w * h * 3);
    for img in images {
        if (img.width, img.height) != (w, h) {
            return Err(CoreError::Dimension("images differ in size".into()));
        }
        data.extend(img.to_chw());
    }
    Ok(Tensor::new(vec![images.len(), 3, h, w], data)?)
}

/// Turns the classifier's final activation into a generator label.
pub trait LabelEncoding: Send + Sync {
    fn name(&self) -> &'static str;

    fn encode(&self, logits: &[f32]) -> Result<LabelVector>;
}

/// Softmax of the logits: a soft point on the simplex.
pub struct SoftLabel;

impl SoftLabel {
    pub const NAME: &'static str = "soft";
}

impl LabelEncoding for SoftLabel {
    fn name(&self) -> &'static str {
        Self::NAME
    }

    fn encode(&self, logits: &[f32]) -> Result<LabelVector> {
        let probs = softmax_rows(&Tensor::new(vec![1, logits.len()], logits.to_vec())?)?;
        LabelVector::new(probs.into_data())
    }
}

/// One-hot vector of the arg-max class.
pub struct HardLabel;

impl HardLabel {
    pub const NAME: &'static str = "hard";
}

impl LabelEncoding for HardLabel {
    fn name(&self) -> &'static str {
        Self::NAME
    }

    fn encode(&self, logits: &[f32]) -> Result<LabelVector> {
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::Range("non-finite encoder activation".into()));
        }
        LabelVector::one_hot(argmax(logits), logits.len())
    }
}

/// Label encodings selectable by name.
pub struct LabelEncodingRegistry {
    entries: BTreeMap<&'static str, Box<dyn LabelEncoding>>,
}

impl LabelEncodingRegistry {
    pub const DEFAULT: &'static str = SoftLabel::NAME;

    pub fn builtin() -> &'static Self {
        static REGISTRY: OnceLock<LabelEncodingRegistry> = OnceLock::new();
        REGISTRY.get_or_init(|| {
            let mut r = Self {
                entries: BTreeMap::new(),
            };
            r.register(Box::new(SoftLabel));
            r.register(Box::new(HardLabel));
            r
        })
    }

    pub fn register(&mut self, encoding: Box<dyn LabelEncoding>) {
        self.entries.insert(encoding.name(), encoding);
    }

    pub fn get(&self, name: &str) -> Result<&dyn LabelEncoding> {
        self.entries
            .get(name)
            .map(|b| b.as_ref())
            .ok_or_else(|| CoreError::UnknownStrategy {
                registry: "label encoding",
                name: name.to_string(),
                known: self.names().join(", "),
            })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.keys().copied().collect()
    }
}

pub struct EncoderCheckpoint {
    pub arch: EncoderArch,
    pub network: Sequential,
    pub class_names: Vec<String>,
    pub test_accuracy: Option<f32>,
}

#[derive(Serialize, Deserialize)]
struct EncoderMeta {
    kind: String,
    arch: EncoderArch,
    class_names: Vec<String>,
    test_accuracy: Option<f32>,
}

const ENCODER_KIND: &str = "texvib-encoder";

impl EncoderCheckpoint {
    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        if self.class_names.len() != self.arch.label_dim {
            return Err(CoreError::ClassMismatch(format!(
                "{} class names for {} encoder outputs",
                self.class_names.len(),
                self.arch.label_dim
            )));
        }
        Ok(())
    }

    pub fn write<W: std::io::Write>(&self, w: W) -> Result<()> {
        let meta = EncoderMeta {
            kind: ENCODER_KIND.into(),
            arch: self.arch.clone(),
            class_names: self.class_names.clone(),
            test_accuracy: self.test_accuracy,
        };
        let meta = serde_json::to_value(meta).expect("metadata serializes");
        write_tnn1(w, &meta, &[("encoder", &self.network)])?;
        Ok(())
    }

    pub fn read<R: std::io::Read>(r: R) -> Result<Self> {
        let mut loaded = read_tnn1(r, &LayerRegistry::builtin())?;
        let meta: EncoderMeta = serde_json::from_value(loaded.meta.clone())
            .map_err(|e| CoreError::format("encoder checkpoint", format!("metadata: {e}")))?;
        if meta.kind != ENCODER_KIND {
            return Err(CoreError::format("encoder checkpoint", format!("holds a `{}`", meta.kind)));
        }
        let ckpt = Self {
            network: loaded.take("encoder")?,
            arch: meta.arch,
            class_names: meta.class_names,
            test_accuracy: meta.test_accuracy,
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

    /// Pre-softmax class activations for each image after center-cropping
    /// to the network's input size.
    pub fn logits(&self, images: &[&TextureImage]) -> Result<Vec<Vec<f32>>> {
        if images.is_empty() {
            return Ok(Vec::new());
        }
        let cropped: Vec<TextureImage> = images.iter().map(|i| i.center_square(self.arch.image_size)).collect();
        let batch = image_batch(&cropped.iter().collect::<Vec<_>>())?;
        let out = self.network.infer(&batch)?;
        if out.shape() != [images.len(), self.arch.label_dim] {
            return Err(CoreError::Dimension(format!("encoder emitted {:?}", out.shape())));
        }
        Ok(out.data().chunks(self.arch.label_dim).map(|c| c.to_vec()).collect())
    }

    pub fn encode(&self, img: &TextureImage, encoding: &dyn LabelEncoding) -> Result<LabelVector> {
        let logits = self.logits(&[img])?;
        encoding.encode(&logits[0])
    }

    pub fn encode_batch(&self, images: &[&TextureImage], encoding: &dyn LabelEncoding) -> Result<Vec<LabelVector>> {
        self.logits(images)?.iter().map(|l| encoding.encode(l)).collect()
    }
}
