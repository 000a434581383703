use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{CodecConfig, ComplexSpectrogram, Waveform};
use crate::error::{CoreError, Result};

/// Periodic Hamming window, `0.54 − 0.46·cos(2πn/N)`.
pub fn hamming(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Planned forward/inverse transforms for one codec configuration; reuse
/// it when transforming many signals (Griffin-Lim does).
pub struct Stft {
    cfg: CodecConfig,
    window: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Stft {
    pub fn new(cfg: &CodecConfig) -> Result<Self> {
        cfg.validate()?;
        let mut planner = FftPlanner::new();
        Ok(Self {
            cfg: cfg.clone(),
            window: hamming(cfg.fft_size),
            forward: planner.plan_fft_forward(cfg.fft_size),
            inverse: planner.plan_fft_inverse(cfg.fft_size),
        })
    }

    pub fn config(&self) -> &CodecConfig {
        &self.cfg
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    pub fn analyze(&self, samples: &[f64]) -> Result<ComplexSpectrogram> {
        let n = self.cfg.fft_size;
        if samples.len() < n {
            return Err(CoreError::SignalTooShort {
                len: samples.len(),
                fft_size: n,
            });
        }
        let frames = self.cfg.frames_for(samples.len());
        let bins = self.cfg.bins();
        let mut data = vec![Complex64::new(0.0, 0.0); bins * frames];
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.forward.get_inplace_scratch_len()];
        for t in 0..frames {
            let seg = &samples[t * self.cfg.hop..t * self.cfg.hop + n];
            for ((b, &x), &w) in buf.iter_mut().zip(seg).zip(&self.window) {
                *b = Complex64::new(x * w, 0.0);
            }
            self.forward.process_with_scratch(&mut buf, &mut scratch);
            for (k, v) in buf.iter().take(bins).enumerate() {
                data[k * frames + t] = *v;
            }
        }
        Ok(ComplexSpectrogram {
            bins,
            frames,
            data,
            config: self.cfg.clone(),
        })
    }

    /// Least-squares overlap-add: each frame is inverse transformed (with the
    /// Hermitian extension implied by a real signal), multiplied by the
    /// window, summed, and divided by the summed squared window.
    pub fn synthesize(&self, spec: &ComplexSpectrogram) -> Result<Vec<f64>> {
        let n = self.cfg.fft_size;
        let bins = self.cfg.bins();
        if spec.bins != bins || spec.data.len() != spec.bins * spec.frames {
            return Err(CoreError::Dimension(format!(
                "spectrogram has {} bins, codec expects {bins}",
                spec.bins
            )));
        }
        if spec.frames == 0 {
            return Err(CoreError::Dimension("spectrogram has no frames".into()));
        }
        let len = self.cfg.samples_for(spec.frames);
        let mut out = vec![0.0; len];
        let mut norm = vec![0.0; len];
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.inverse.get_inplace_scratch_len()];
        let scale = 1.0 / n as f64;
        for t in 0..spec.frames {
            for (k, b) in buf.iter_mut().enumerate() {
                *b = if k < bins {
                    spec.at(k, t)
                } else {
                    spec.at(n - k, t).conj()
                };
            }
            self.inverse.process_with_scratch(&mut buf, &mut scratch);
            let off = t * self.cfg.hop;
            for (i, (b, &w)) in buf.iter().zip(&self.window).enumerate() {
                out[off + i] += w * b.re * scale;
                norm[off + i] += w * w;
            }
        }
        for (i, (o, d)) in out.iter_mut().zip(&norm).enumerate() {
            if *d <= f64::MIN_POSITIVE {
                return Err(CoreError::Range(format!("zero window energy at sample {i}")));
            }
            *o /= d;
        }
        Ok(out)
    }
}

pub fn stft(wave: &Waveform, cfg: &CodecConfig) -> Result<ComplexSpectrogram> {
    if wave.sample_rate_hz != cfg.sample_rate_hz {
        return Err(CoreError::RateMismatch {
            expected: cfg.sample_rate_hz,
            found: wave.sample_rate_hz,
        });
    }
    Stft::new(cfg)?.analyze(&wave.samples)
}

pub fn istft(spec: &ComplexSpectrogram, cfg: &CodecConfig) -> Result<Waveform> {
    let samples = Stft::new(cfg)?.synthesize(spec)?;
    Ok(Waveform {
        samples,
        sample_rate_hz: cfg.sample_rate_hz,
    })
}
