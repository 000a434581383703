use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::{Dataset, Manifest, SamplePair, TextureImage};
use crate::codec::{CodecConfig, Waveform};
use crate::error::{CoreError, Result};

/// Class names used for the nine-class setup.
pub const DEFAULT_CLASS_NAMES: [&str; 9] = [
    "Squared Aluminum Mesh",
    "Stone Tile",
    "Glossy Plastic",
    "Bamboo",
    "Rubber",
    "Carpet",
    "Fine Foam",
    "Card board",
    "Denim",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pattern {
    Stripes,
    Dots,
    Checker,
}

/// What makes one synthetic class recognizable, in both modalities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassSignature {
    pub name: String,
    pub center_hz: f64,
    pub bandwidth_hz: f64,
    pub am_rate_hz: f64,
    pub pattern: Pattern,
    pub period_px: f64,
    pub orientation_deg: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub classes: Vec<ClassSignature>,
    pub samples_per_class: usize,
    pub signal_len: usize,
    /// Standard deviation of the white floor added to unit-RMS band noise.
    pub noise_floor: f64,
    pub image_size: usize,
    pub codec: CodecConfig,
}

const PERIODS_PX: [f64; 3] = [6.0, 12.0, 24.0];
const PATTERNS: [Pattern; 3] = [Pattern::Stripes, Pattern::Dots, Pattern::Checker];

impl SyntheticSpec {
    /// `n` classes with center frequencies `200 + 230·k` Hz, amplitude
    /// modulation at `1.5 + 0.75·k` Hz, and a distinct (pattern, period) pair.
    pub fn standard(n: usize, samples_per_class: usize) -> Self {
        let classes = (0..n)
            .map(|k| ClassSignature {
                name: DEFAULT_CLASS_NAMES
                    .get(k)
                    .map(|s| s.to_string())
                    .unwrap_or_else(|| format!("Class {k}")),
                center_hz: 200.0 + 230.0 * k as f64,
                bandwidth_hz: 20.0,
                am_rate_hz: 1.5 + 0.75 * k as f64,
                pattern: PATTERNS[k % 3],
                period_px: PERIODS_PX[(k / 3) % 3],
                orientation_deg: (20 * k % 180) as f64,
            })
            .collect();
        Self {
            classes,
            samples_per_class,
            signal_len: 40_000,
            noise_floor: 0.01,
            image_size: 160,
            codec: CodecConfig::default(),
        }
    }

    pub fn class_names(&self) -> Vec<String> {
        self.classes.iter().map(|c| c.name.clone()).collect()
    }

    /// Manifest listing these classes with their signature frequencies.
    pub fn manifest(&self) -> Manifest {
        let mut m = Manifest::for_classes(&self.class_names(), self.codec.clone());
        for (entry, sig) in m.classes.iter_mut().zip(&self.classes) {
            entry.center_hz = Some(sig.center_hz);
        }
        m
    }

    pub fn validate(&self) -> Result<()> {
        self.codec.validate()?;
        let bad = |d: String| Err(CoreError::config("synthetic spec", d));
        if self.classes.len() < 2 {
            return bad("at least two classes are needed".into());
        }
        if self.samples_per_class == 0 {
            return bad("samples_per_class must be positive".into());
        }
        if self.signal_len < self.codec.samples_for(self.codec.model_time_frames) {
            return bad(format!(
                "signals of {} samples are shorter than the {}-frame model window",
                self.signal_len, self.codec.model_time_frames
            ));
        }
        if self.image_size < 128 {
            return bad("images must be at least 128 px".into());
        }
        let crop_rows = self.codec.crop()?.source_rows(&self.codec);
        let top_hz = (crop_rows - 1) as f64 * self.codec.bin_hz();
        let min_gap = 3.0 * self.codec.bin_hz();
        for (i, a) in self.classes.iter().enumerate() {
            if a.center_hz - a.bandwidth_hz / 2.0 <= 0.0 || a.center_hz + a.bandwidth_hz / 2.0 >= top_hz {
                return bad(format!(
                    "class `{}` band around {} Hz leaves the 0–{top_hz:.1} Hz crop",
                    a.name, a.center_hz
                ));
            }
            if !(a.period_px >= 2.0 && a.am_rate_hz > 0.0 && a.bandwidth_hz > 0.0) {
                return bad(format!("class `{}` has a degenerate signature", a.name));
            }
            for b in &self.classes[i + 1..] {
                if (a.center_hz - b.center_hz).abs() < min_gap {
                    return bad(format!(
                        "signature collision: `{}` and `{}` are closer than 3 bins",
                        a.name, b.name
                    ));
                }
                if a.pattern == b.pattern && a.period_px == b.period_px {
                    return bad(format!(
                        "signature collision: `{}` and `{}` share a visual pattern",
                        a.name, b.name
                    ));
                }
                if a.name == b.name {
                    return bad(format!("duplicate class name `{}`", a.name));
                }
            }
        }
        Ok(())
    }
}

/// Band-limited noise around `center_hz`, normalized to unit RMS, then
/// amplitude-modulated and summed with a white floor. Samples are rounded
/// to `f32` so the raw on-disk format reproduces them exactly.
fn signal(sig: &ClassSignature, spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = spec.signal_len;
    let fs = spec.codec.sample_rate_hz as f64;
    let mut buf: Vec<Complex64> = (0..n)
        .map(|_| Complex64::new(rng.sample(StandardNormal), 0.0))
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    let (lo, hi) = (sig.center_hz - sig.bandwidth_hz / 2.0, sig.center_hz + sig.bandwidth_hz / 2.0);
    for (k, v) in buf.iter_mut().enumerate() {
        let f = k.min(n - k) as f64 * fs / n as f64;
        if f < lo || f > hi {
            *v = Complex64::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let band: Vec<f64> = buf.iter().map(|c| c.re).collect();
    let rms = (band.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt().max(1e-12);
    let gain = rng.random_range(0.8..1.2) / rms;
    let phase = rng.random_range(0.0..2.0 * PI);
    band.iter()
        .enumerate()
        .map(|(i, v)| {
            let t = i as f64 / fs;
            let am = 1.0 + 0.8 * (2.0 * PI * sig.am_rate_hz * t + phase).sin();
            let floor: f64 = rng.sample::<f64, _>(StandardNormal) * spec.noise_floor;
            (v * gain * am + floor) as f32 as f64
        })
        .collect()
}

fn pattern_value(pattern: Pattern, u: f64, v: f64, period: f64) -> f64 {
    match pattern {
        Pattern::Stripes => 0.5 + 0.5 * (2.0 * PI * u / period).cos(),
        Pattern::Dots => {
            let du = u - period * (u / period).round();
            let dv = v - period * (v / period).round();
            let sigma = 0.2 * period;
            (-(du * du + dv * dv) / (2.0 * sigma * sigma)).exp()
        }
        Pattern::Checker => 0.5 + 0.5 * (4.0 * (2.0 * PI * u / period).cos() * (2.0 * PI * v / period).cos()).tanh(),
    }
}

/// Oriented pattern with random phase, small orientation jitter, random
/// brightness, contrast and tint, plus pixel noise; quantized to 8-bit
/// levels so PNG storage is lossless.
fn image(sig: &ClassSignature, size: usize, rng: &mut ChaCha8Rng) -> TextureImage {
    let theta = (sig.orientation_deg + rng.random_range(-10.0..10.0)).to_radians();
    let (c, s) = (theta.cos(), theta.sin());
    let (pu, pv) = (rng.random_range(0.0..sig.period_px), rng.random_range(0.0..sig.period_px));
    let brightness = rng.random_range(0.35..0.65);
    let contrast = rng.random_range(0.25..0.4);
    let tint: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.9..1.1));
    let mut data = Vec::with_capacity(size * size * 3);
    for y in 0..size {
        for x in 0..size {
            let (xf, yf) = (x as f64, y as f64);
            let u = xf * c + yf * s + pu;
            let v = -xf * s + yf * c + pv;
            let p = pattern_value(sig.pattern, u, v, sig.period_px);
            for t in tint {
                let noise: f64 = rng.sample::<f64, _>(StandardNormal) * 0.03;
                let val = ((brightness + contrast * (2.0 * p - 1.0)) * t + noise).clamp(0.0, 1.0);
                data.push(((val * 255.0).round() / 255.0) as f32);
            }
        }
    }
    TextureImage {
        width: size,
        height: size,
        data,
    }
}

/// Deterministic paired dataset: `samples_per_class` (image, signal) pairs
/// per class, ordered by class then sample index.
pub fn synthesize_dataset(spec: &SyntheticSpec, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    let mut pairs = Vec::with_capacity(spec.classes.len() * spec.samples_per_class);
    for (k, sig) in spec.classes.iter().enumerate() {
        for i in 0..spec.samples_per_class {
            // Independent stream per sample so any subset can be regenerated.
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(((k as u64) << 32) | i as u64);
            let wave = Waveform::new(signal(sig, spec, &mut rng), spec.codec.sample_rate_hz)?;
            let img = image(sig, spec.image_size, &mut rng);
            pairs.push(SamplePair {
                id: format!("{}/{i:04}", super::class_dir_name(&sig.name)),
                image: img,
                wave,
                class_index: k,
                class_name: sig.name.clone(),
            });
        }
    }
    Ok(Dataset {
        class_names: spec.classes.iter().map(|c| c.name.clone()).collect(),
        pairs,
        codec: spec.codec.clone(),
    })
}
