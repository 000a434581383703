//! Paired (texture image, acceleration signal, class) data: on-disk
//! ingestion, a synthetic generator, normalization statistics and
//! stratified splits.

mod image;
mod ingest;
mod synth;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::codec::{cropped_db_of_magnitude, to_model_domain, CodecConfig, ModelSpectrogram, NormStats, Stft, Waveform};
use crate::error::{CoreError, Result};

pub use self::image::TextureImage;
pub use ingest::{ingest, read_raw_f32, write_dataset, write_raw_f32, ClassEntry, Manifest, SplitRecord, MANIFEST_FILE};
pub use synth::{synthesize_dataset, ClassSignature, Pattern, SyntheticSpec, DEFAULT_CLASS_NAMES};

#[derive(Clone, Debug, PartialEq)]
pub struct SamplePair {
    /// `<class dir>/<file stem>`, unique within a dataset.
    pub id: String,
    pub image: TextureImage,
    pub wave: Waveform,
    pub class_index: usize,
    pub class_name: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub class_names: Vec<String>,
    pub pairs: Vec<SamplePair>,
    pub codec: CodecConfig,
}

/// Directory name for a class: lowercase with runs of other characters
/// collapsed to `_`.
pub fn class_dir_name(name: &str) -> String {
    let mut out = String::new();
    for ch in name.chars() {
        if ch.is_ascii_alphanumeric() {
            out.push(ch.to_ascii_lowercase());
        } else if !out.ends_with('_') {
            out.push('_');
        }
    }
    out.trim_matches('_').to_string()
}

/// Train/test membership as indices into a dataset.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_names.len()];
        for p in &self.pairs {
            counts[p.class_index] += 1;
        }
        counts
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            class_names: self.class_names.clone(),
            pairs: indices.iter().map(|&i| self.pairs[i].clone()).collect(),
            codec: self.codec.clone(),
        }
    }

    /// Stratified split: within each class a seeded shuffle assigns
    /// `round(n · test_fraction)` samples to test. Both sides stay sorted
    /// by dataset order.
    pub fn split(&self, test_fraction: f64, seed: u64) -> Result<Split> {
        if !(test_fraction > 0.0 && test_fraction < 1.0) {
            return Err(CoreError::config("split", "test fraction must lie strictly between 0 and 1"));
        }
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (k, name) in self.class_names.iter().enumerate() {
            let mut members: Vec<usize> = (0..self.pairs.len()).filter(|&i| self.pairs[i].class_index == k).collect();
            let n = members.len();
            let n_test = (n as f64 * test_fraction).round() as usize;
            if n < 2 || n_test == 0 || n_test == n {
                return Err(CoreError::Dataset(format!(
                    "class `{name}` has {n} sample(s); cannot place it in both splits at fraction {test_fraction}"
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            members.shuffle(&mut rng);
            test.extend_from_slice(&members[..n_test]);
            train.extend_from_slice(&members[n_test..]);
        }
        train.sort_unstable();
        test.sort_unstable();
        Ok(Split { train, test })
    }

    pub fn train_test(&self, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        let s = self.split(test_fraction, seed)?;
        Ok((self.subset(&s.train), self.subset(&s.test)))
    }

    /// Every signal converted to the model domain under `stats`.
    pub fn model_spectrograms(&self, stats: &NormStats) -> Result<Vec<ModelSpectrogram>> {
        let engine = Stft::new(&self.codec)?;
        self.pairs
            .iter()
            .map(|p| {
                if p.wave.sample_rate_hz != self.codec.sample_rate_hz {
                    return Err(CoreError::RateMismatch {
                        expected: self.codec.sample_rate_hz,
                        found: p.wave.sample_rate_hz,
                    });
                }
                to_model_domain(&engine.analyze(&p.wave.samples)?, stats, &self.codec)
            })
            .collect()
    }
}

/// Global dB range over the model crop of every signal: `log_max` is the
/// loudest cell, `log_min` the quietest after the floor (`log_floor_db`
/// below `log_max`).
pub fn compute_norm_stats(dataset: &Dataset) -> Result<NormStats> {
    if dataset.is_empty() {
        return Err(CoreError::Dataset("cannot compute norm stats of an empty dataset".into()));
    }
    let cfg = &dataset.codec;
    let engine = Stft::new(cfg)?;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in &dataset.pairs {
        let mag = engine.analyze(&p.wave.samples)?.magnitude();
        for v in cropped_db_of_magnitude(&mag, cfg)? {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if !hi.is_finite() {
        return Err(CoreError::Dataset("every signal is silent; norm stats are undefined".into()));
    }
    let floor = hi + cfg.log_floor_db;
    let log_min = if lo.max(floor) < hi { lo.max(floor) } else { floor };
    NormStats::new(log_min, hi)
}
