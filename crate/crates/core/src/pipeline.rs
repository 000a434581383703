//! End-to-end composition (label or image → spectrogram → waveform) and the
//! quantitative evaluation of a trained generator.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use texvib_nn::loss::argmax;

use crate::codec::{from_model_domain, griffin_lim, CodecConfig, ModelSpectrogram, Waveform};
use crate::dataset::{Dataset, TextureImage};
use crate::encoder::{EncoderCheckpoint, LabelEncoding};
use crate::error::{CoreError, Result};
use crate::gan::{sample, stack_spectrograms, GanCheckpoint};
use crate::label::LabelVector;

/// Schema tag of [`EvalReport`] documents.
pub const EVAL_SCHEMA: &str = "texvib-eval-v1";

/// Allowed distance, in STFT bins, between a dominant frequency and a class
/// signature frequency.
pub const SIGNATURE_TOLERANCE_BINS: f64 = 2.0;

#[derive(Clone, Debug, PartialEq)]
pub struct Generated {
    pub spectrogram: ModelSpectrogram,
    pub waveform: Waveform,
}

/// `sample → from_model_domain → griffin_lim`; the noise and the initial
/// phases both derive from `seed`.
pub fn generate_from_label(gan: &GanCheckpoint, c: &LabelVector, seed: u64, glim_iters: usize) -> Result<Generated> {
    let spectrogram = sample(gan, c, seed, 1)?.remove(0);
    let waveform = invert(&spectrogram, glim_iters, seed)?;
    Ok(Generated { spectrogram, waveform })
}

/// Griffin-Lim inversion of a model-domain spectrogram.
pub fn invert(spectrogram: &ModelSpectrogram, glim_iters: usize, seed: u64) -> Result<Waveform> {
    let mag = from_model_domain(spectrogram)?;
    Ok(griffin_lim(&mag, &spectrogram.config, glim_iters, seed)?.wave)
}

/// Both checkpoints must list the same classes in the same order.
pub fn check_class_lists(encoder: &EncoderCheckpoint, gan: &GanCheckpoint) -> Result<()> {
    if encoder.class_names != gan.class_names {
        return Err(CoreError::ClassMismatch(format!(
            "encoder classes [{}] differ from generator classes [{}]",
            encoder.class_names.join(", "),
            gan.class_names.join(", ")
        )));
    }
    Ok(())
}

/// `encode` followed by [`generate_from_label`]; returns the intermediate
/// label as well.
pub fn generate_from_image(
    encoder: &EncoderCheckpoint,
    gan: &GanCheckpoint,
    img: &TextureImage,
    encoding: &dyn LabelEncoding,
    seed: u64,
    glim_iters: usize,
) -> Result<(LabelVector, Generated)> {
    check_class_lists(encoder, gan)?;
    let c = encoder.encode(img, encoding)?;
    let generated = generate_from_label(gan, &c, seed, glim_iters)?;
    Ok((c, generated))
}

/// Model row with the most energy averaged over time.
pub fn dominant_row(spec: &ModelSpectrogram) -> usize {
    let energy: Vec<f64> = (0..spec.rows)
        .map(|r| spec.data[r * spec.cols..(r + 1) * spec.cols].iter().map(|&v| v as f64).sum())
        .collect();
    argmax(&energy)
}

/// Whether the spectrogram's dominant band lies within
/// [`SIGNATURE_TOLERANCE_BINS`] of `center_hz`.
pub fn matches_signature(spec: &ModelSpectrogram, center_hz: f64) -> Result<bool> {
    let cfg = &spec.config;
    let bin = cfg.crop()?.row_bin(dominant_row(spec), cfg);
    let target = (center_hz / cfg.bin_hz()).round();
    Ok((bin - target).abs() <= SIGNATURE_TOLERANCE_BINS)
}

/// Frequency of the largest DFT magnitude of the whole waveform (DC excluded).
pub fn dominant_frequency_hz(wave: &Waveform) -> f64 {
    let n = wave.samples.len();
    if n < 2 {
        return 0.0;
    }
    let mut buf: Vec<Complex64> = wave.samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let mags: Vec<f64> = buf[1..=n / 2].iter().map(|c| c.norm()).collect();
    (argmax(&mags) + 1) as f64 * wave.sample_rate_hz as f64 / n as f64
}

/// Whether a waveform's dominant frequency lies within
/// [`SIGNATURE_TOLERANCE_BINS`] STFT bins of `center_hz`.
pub fn waveform_matches_signature(wave: &Waveform, center_hz: f64, cfg: &CodecConfig) -> bool {
    (dominant_frequency_hz(wave) - center_hz).abs() <= SIGNATURE_TOLERANCE_BINS * cfg.bin_hz()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub samples_per_class: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            samples_per_class: 20,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub name: String,
    pub center_hz: f64,
    /// Discriminator class-head accuracy on this class's generated samples.
    pub aux_accuracy: f64,
    pub signature_match_rate: f64,
    /// L2 distance between the class-mean generated and test spectrograms.
    pub mean_l2_to_test: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema: String,
    pub samples_per_class: usize,
    pub seed: u64,
    pub classes: Vec<ClassReport>,
    pub aux_accuracy: f64,
    pub signature_match_rate: f64,
    /// Mean inter-class over mean intra-class distance between class-mean
    /// generated and class-mean test spectrograms.
    pub separation_score: f64,
    /// Discriminator class-head accuracy on the real test spectrograms.
    pub aux_accuracy_real_test: f64,
    /// Spectral-signature match rate of spectrograms generated from the
    /// test images through the encoder, when one was supplied.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e2e_signature_match_rate: Option<f64>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let report: Self = serde_json::from_str(text).map_err(|e| CoreError::format("evaluation report", e.to_string()))?;
        if report.schema != EVAL_SCHEMA {
            return Err(CoreError::format(
                "evaluation report",
                format!("schema `{}`, expected `{EVAL_SCHEMA}`", report.schema),
            ));
        }
        Ok(report)
    }
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn mean_of(specs: &[&ModelSpectrogram]) -> Vec<f64> {
    let mut acc = vec![0.0; specs[0].data.len()];
    for s in specs {
        acc.iter_mut().zip(&s.data).for_each(|(a, &v)| *a += v as f64);
    }
    acc.iter_mut().for_each(|a| *a /= specs.len() as f64);
    acc
}

/// Mean inter-class over mean intra-class L2 distance between paired
/// class-mean spectrograms.
pub fn separation_score(generated_means: &[Vec<f64>], test_means: &[Vec<f64>]) -> f64 {
    let k = generated_means.len();
    let (mut intra, mut inter) = (0.0, 0.0);
    for (i, g) in generated_means.iter().enumerate() {
        for (j, t) in test_means.iter().enumerate() {
            let d = l2(g, t);
            if i == j {
                intra += d;
            } else {
                inter += d;
            }
        }
    }
    let intra = intra / k as f64;
    let inter = inter / (k * (k - 1)).max(1) as f64;
    if intra > 0.0 {
        inter / intra
    } else {
        f64::INFINITY
    }
}

fn aux_hits(gan: &GanCheckpoint, specs: &[&ModelSpectrogram], class_of: impl Fn(usize) -> usize) -> Result<usize> {
    let mut hits = 0;
    for (chunk_idx, chunk) in specs.chunks(64).enumerate() {
        let out = gan.discriminator.infer(&stack_spectrograms(chunk)?)?;
        let k = out.class_logits.shape()[1];
        hits += out
            .class_logits
            .data()
            .chunks(k)
            .enumerate()
            .filter(|(i, row)| argmax(row) == class_of(chunk_idx * 64 + i))
            .count();
    }
    Ok(hits)
}

/// Scores a generator against held-out real data: discriminator class-head
/// accuracy on generated samples, spectral-signature match, class separation
/// and, with an encoder, the image-driven signature match.
pub fn eval_generated(
    gan: &GanCheckpoint,
    encoder: Option<(&EncoderCheckpoint, &dyn LabelEncoding)>,
    test: &Dataset,
    centers_hz: &[f64],
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    gan.validate()?;
    let k = gan.label_dim();
    if test.class_names != gan.class_names {
        return Err(CoreError::ClassMismatch("test set and generator list different classes".into()));
    }
    if centers_hz.len() != k {
        return Err(CoreError::ClassMismatch(format!("{} signature frequencies for {k} classes", centers_hz.len())));
    }
    if cfg.samples_per_class == 0 {
        return Err(CoreError::config("evaluation", "samples per class must be positive"));
    }
    let real = test.model_spectrograms(&gan.stats)?;
    let mut test_means = Vec::with_capacity(k);
    for class in 0..k {
        let members: Vec<&ModelSpectrogram> = real
            .iter()
            .zip(&test.pairs)
            .filter(|(_, p)| p.class_index == class)
            .map(|(s, _)| s)
            .collect();
        if members.is_empty() {
            return Err(CoreError::Dataset(format!("test set has no `{}` samples", gan.class_names[class])));
        }
        test_means.push(mean_of(&members));
    }

    let mut classes = Vec::with_capacity(k);
    let mut gen_means = Vec::with_capacity(k);
    let (mut aux_total, mut match_total) = (0usize, 0usize);
    for class in 0..k {
        let c = LabelVector::one_hot(class, k)?;
        let seed = cfg.seed.wrapping_add(class as u64);
        let generated = sample(gan, &c, seed, cfg.samples_per_class)?;
        let refs: Vec<&ModelSpectrogram> = generated.iter().collect();
        let aux = aux_hits(gan, &refs, |_| class)?;
        let mut matched = 0;
        for s in &generated {
            matched += matches_signature(s, centers_hz[class])? as usize;
        }
        let mean = mean_of(&refs);
        let n = cfg.samples_per_class as f64;
        classes.push(ClassReport {
            name: gan.class_names[class].clone(),
            center_hz: centers_hz[class],
            aux_accuracy: aux as f64 / n,
            signature_match_rate: matched as f64 / n,
            mean_l2_to_test: l2(&mean, &test_means[class]),
        });
        gen_means.push(mean);
        aux_total += aux;
        match_total += matched;
    }

    let real_refs: Vec<&ModelSpectrogram> = real.iter().collect();
    let real_hits = aux_hits(gan, &real_refs, |i| test.pairs[i].class_index)?;

    let e2e_signature_match_rate = match encoder {
        Some((enc, encoding)) => {
            check_class_lists(enc, gan)?;
            let mut matched = 0;
            for (i, pair) in test.pairs.iter().enumerate() {
                let c = enc.encode(&pair.image, encoding)?;
                let s = sample(gan, &c, cfg.seed.wrapping_add(i as u64), 1)?;
                matched += matches_signature(&s[0], centers_hz[pair.class_index])? as usize;
            }
            Some(matched as f64 / test.pairs.len() as f64)
        }
        None => None,
    };

    let total = (k * cfg.samples_per_class) as f64;
    Ok(EvalReport {
        schema: EVAL_SCHEMA.into(),
        samples_per_class: cfg.samples_per_class,
        seed: cfg.seed,
        classes,
        aux_accuracy: aux_total as f64 / total,
        signature_match_rate: match_total as f64 / total,
        separation_score: separation_score(&gen_means, &test_means),
        aux_accuracy_real_test: real_hits as f64 / test.pairs.len() as f64,
        e2e_signature_match_rate,
    })
}
