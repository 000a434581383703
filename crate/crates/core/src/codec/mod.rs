//! Waveform ⇄ spectrogram conversion: STFT analysis, least-squares
//! overlap-add synthesis, the normalized 128×128 log-magnitude model domain,
//! Griffin-Lim phase retrieval and the on-disk formats.

mod crop;
mod griffin_lim;
mod resize;
mod spc1;
mod stft;
mod wav;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

pub use crop::{CropRegistry, FreqCrop, LowBins, ResizeToBand};
pub use griffin_lim::{griffin_lim, spectral_convergence, GriffinLimOutput};
pub use resize::bilinear;
pub use spc1::{read_spec, spec_from_bytes, spec_to_bytes, write_spec, SPC1_MAGIC};
pub use stft::{hamming, istft, stft, Stft};
pub use wav::{decode_wav, encode_wav, read_wav, sidecar_path, write_wav, WavSidecar};

pub const DEFAULT_GRIFFIN_LIM_ITERS: usize = 60;

/// Analysis and model-domain parameters shared by every conversion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CodecConfig {
    pub sample_rate_hz: u32,
    pub fft_size: usize,
    pub window: String,
    pub hop: usize,
    pub model_freq_bins: usize,
    pub model_time_frames: usize,
    pub log_floor_db: f64,
    pub freq_crop_mode: String,
}

impl Default for CodecConfig {
    fn default() -> Self {
        Self {
            sample_rate_hz: 10_000,
            fft_size: 512,
            window: "hamming".into(),
            hop: 128,
            model_freq_bins: 128,
            model_time_frames: 128,
            log_floor_db: -80.0,
            freq_crop_mode: LowBins::NAME.into(),
        }
    }
}

impl CodecConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |d: &str| Err(CoreError::config("codec config", d));
        if self.sample_rate_hz == 0 || self.fft_size == 0 || self.hop == 0 {
            return bad("sample rate, fft size and hop must be positive");
        }
        if self.window != "hamming" {
            return bad("window must be `hamming`");
        }
        if self.hop > self.fft_size {
            return bad("hop must not exceed the fft size");
        }
        if self.model_freq_bins == 0 || self.model_freq_bins > self.bins() {
            return bad("model_freq_bins must lie in 1..=fft_size/2+1");
        }
        if self.model_time_frames == 0 {
            return bad("model_time_frames must be positive");
        }
        if !(self.log_floor_db.is_finite() && self.log_floor_db < 0.0) {
            return bad("log_floor_db must be a finite negative dB value");
        }
        CropRegistry::builtin().get(&self.freq_crop_mode)?;
        Ok(())
    }

    /// One-sided bin count, `fft_size / 2 + 1`.
    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Frequency spacing of STFT bins in Hz.
    pub fn bin_hz(&self) -> f64 {
        self.sample_rate_hz as f64 / self.fft_size as f64
    }

    /// Frames produced for a signal of `len` samples (no padding).
    pub fn frames_for(&self, len: usize) -> usize {
        if len < self.fft_size {
            0
        } else {
            (len - self.fft_size) / self.hop + 1
        }
    }

    /// Signal length synthesized from `frames` frames.
    pub fn samples_for(&self, frames: usize) -> usize {
        if frames == 0 {
            0
        } else {
            self.fft_size + (frames - 1) * self.hop
        }
    }

    pub fn crop(&self) -> Result<std::sync::Arc<dyn FreqCrop>> {
        CropRegistry::builtin().get(&self.freq_crop_mode)
    }
}

/// Acceleration signal in arbitrary physical units.
#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate_hz: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(CoreError::Range("waveform has no samples".into()));
        }
        if sample_rate_hz == 0 {
            return Err(CoreError::Range("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(CoreError::Range(format!("sample {i} is not finite")));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// One-sided STFT, stored bin-major: `data[bin * frames + frame]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexSpectrogram {
    pub bins: usize,
    pub frames: usize,
    pub data: Vec<Complex64>,
    pub config: CodecConfig,
}

impl ComplexSpectrogram {
    pub fn at(&self, bin: usize, frame: usize) -> Complex64 {
        self.data[bin * self.frames + frame]
    }

    pub fn magnitude(&self) -> Magnitude {
        Magnitude {
            bins: self.bins,
            frames: self.frames,
            data: self.data.iter().map(|c| c.norm()).collect(),
        }
    }
}

/// Real nonnegative magnitude matrix in full one-sided STFT layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Magnitude {
    pub bins: usize,
    pub frames: usize,
    pub data: Vec<f64>,
}

impl Magnitude {
    pub fn at(&self, bin: usize, frame: usize) -> f64 {
        self.data[bin * self.frames + frame]
    }
}

/// Global dB range mapped onto [0, 1].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub log_min: f64,
    pub log_max: f64,
}

impl NormStats {
    pub fn new(log_min: f64, log_max: f64) -> Result<Self> {
        let s = Self { log_min, log_max };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.log_min.is_finite() && self.log_max.is_finite() && self.log_min < self.log_max) {
            return Err(CoreError::Range(format!(
                "norm stats need finite log_min < log_max, got [{}, {}]",
                self.log_min, self.log_max
            )));
        }
        Ok(())
    }

    pub fn span(&self) -> f64 {
        self.log_max - self.log_min
    }
}

/// The generator's sample space: normalized log magnitude in [0, 1],
/// `model_freq_bins × model_time_frames`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpectrogram {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
    pub stats: NormStats,
    pub config: CodecConfig,
}

/// Tolerance for model-domain entries straying outside [0, 1].
pub const RANGE_TOLERANCE: f32 = 1e-6;

impl ModelSpectrogram {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>, stats: NormStats, config: CodecConfig) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(CoreError::Dimension(format!(
                "{rows}x{cols} spectrogram with {} values",
                data.len()
            )));
        }
        if (rows, cols) != (config.model_freq_bins, config.model_time_frames) {
            return Err(CoreError::Dimension(format!(
                "{rows}x{cols} spectrogram for a {}x{} model domain",
                config.model_freq_bins, config.model_time_frames
            )));
        }
        stats.validate()?;
        check_unit_range(&data)?;
        Ok(Self {
            rows,
            cols,
            data,
            stats,
            config,
        })
    }

    pub fn at(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.cols + col]
    }
}

pub(crate) fn check_unit_range(data: &[f32]) -> Result<()> {
    if let Some((i, v)) = data
        .iter()
        .enumerate()
        .find(|(_, v)| !(**v >= -RANGE_TOLERANCE && **v <= 1.0 + RANGE_TOLERANCE))
    {
        return Err(CoreError::Range(format!("model-domain entry {i} is {v}, outside [0, 1]")));
    }
    Ok(())
}

fn db(mag: f64, floor_linear: f64) -> f64 {
    20.0 * mag.max(floor_linear).log10()
}

/// dB value of every magnitude in the crop region, with the floor placed
/// `log_floor_db` below `reference_db`.
pub(crate) fn cropped_db(spec: &ComplexSpectrogram, reference_db: f64, cfg: &CodecConfig) -> Result<Vec<f64>> {
    let crop = cfg.crop()?;
    let rows = crop.source_rows(cfg);
    let cols = cfg.model_time_frames;
    if spec.bins < rows || spec.frames < cols {
        return Err(CoreError::Dimension(format!(
            "spectrogram is {}x{}, crop needs at least {rows}x{cols}",
            spec.bins, spec.frames
        )));
    }
    let floor_linear = 10f64.powf((reference_db + cfg.log_floor_db) / 20.0);
    let mut out = Vec::with_capacity(rows * cols);
    for b in 0..rows {
        for t in 0..cols {
            out.push(db(spec.at(b, t).norm(), floor_linear));
        }
    }
    Ok(out)
}

/// Unfloored dB values (−∞ for silent cells) of the crop region.
pub(crate) fn cropped_db_of_magnitude(mag: &Magnitude, cfg: &CodecConfig) -> Result<Vec<f64>> {
    let rows = cfg.crop()?.source_rows(cfg);
    let cols = cfg.model_time_frames;
    if mag.bins < rows || mag.frames < cols {
        return Err(CoreError::Dimension(format!(
            "spectrogram is {}x{}, crop needs at least {rows}x{cols}",
            mag.bins, mag.frames
        )));
    }
    Ok((0..rows)
        .flat_map(|b| (0..cols).map(move |t| 20.0 * mag.at(b, t).log10()))
        .collect())
}

/// Log-magnitude, clamp, affine map to [0, 1], frequency crop and (only
/// when the crop strategy needs it) bilinear resize to the model grid.
pub fn to_model_domain(spec: &ComplexSpectrogram, stats: &NormStats, cfg: &CodecConfig) -> Result<ModelSpectrogram> {
    cfg.validate()?;
    stats.validate()?;
    let dbs = cropped_db(spec, stats.log_max, cfg)?;
    let unit: Vec<f64> = dbs
        .iter()
        .map(|d| (d.clamp(stats.log_min, stats.log_max) - stats.log_min) / stats.span())
        .collect();
    let crop = cfg.crop()?;
    let resized = crop.to_model(&unit, cfg);
    let data = resized.iter().map(|v| (*v as f32).clamp(0.0, 1.0)).collect();
    ModelSpectrogram::new(cfg.model_freq_bins, cfg.model_time_frames, data, *stats, cfg.clone())
}

/// Inverse of [`to_model_domain`]: magnitudes in full STFT layout, zero
/// above the crop region, `model_time_frames` frames.
pub fn from_model_domain(m: &ModelSpectrogram) -> Result<Magnitude> {
    let cfg = &m.config;
    cfg.validate()?;
    m.stats.validate()?;
    if (m.rows, m.cols) != (cfg.model_freq_bins, cfg.model_time_frames) || m.data.len() != m.rows * m.cols {
        return Err(CoreError::Dimension(format!("{}x{} model spectrogram", m.rows, m.cols)));
    }
    check_unit_range(&m.data)?;
    let crop = cfg.crop()?;
    let unit: Vec<f64> = m.data.iter().map(|v| v.clamp(0.0, 1.0) as f64).collect();
    let src = crop.to_source(&unit, cfg);
    let rows = crop.source_rows(cfg);
    let (bins, frames) = (cfg.bins(), cfg.model_time_frames);
    let mut data = vec![0.0; bins * frames];
    for (i, v) in src.iter().enumerate().take(rows * frames) {
        let d = m.stats.log_min + v.clamp(0.0, 1.0) * m.stats.span();
        data[i] = 10f64.powf(d / 20.0);
    }
    Ok(Magnitude { bins, frames, data })
}
