use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;

use super::{CodecConfig, ComplexSpectrogram, Magnitude, Stft, Waveform};
use crate::error::{CoreError, Result};

pub struct GriffinLimOutput {
    pub wave: Waveform,
    /// Spectral convergence after each iteration.
    pub errors: Vec<f64>,
}

/// Weight of a one-sided bin in the two-sided spectrum: interior bins stand
/// for a conjugate pair.
fn pair_weight(k: usize, bins: usize) -> f64 {
    if k == 0 || k == bins - 1 {
        1.0
    } else {
        2.0
    }
}

/// `‖mag − |S|‖_F / ‖mag‖_F` measured over the two-sided spectrum, which is
/// the norm in which the overlap-add inverse is a least-squares projection.
/// Defined as 0 when both are zero.
pub fn spectral_convergence(mag: &Magnitude, spec: &ComplexSpectrogram) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for k in 0..mag.bins {
        let w = pair_weight(k, mag.bins);
        for t in 0..mag.frames {
            let m = mag.at(k, t);
            num += w * (m - spec.at(k, t).norm()).powi(2);
            den += w * m * m;
        }
    }
    if den == 0.0 {
        if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (num / den).sqrt()
    }
}

fn with_phase(mag: &Magnitude, phase_of: impl Fn(usize, usize) -> Complex64, cfg: &CodecConfig) -> ComplexSpectrogram {
    let mut data = Vec::with_capacity(mag.data.len());
    for k in 0..mag.bins {
        for t in 0..mag.frames {
            data.push(phase_of(k, t) * mag.at(k, t));
        }
    }
    ComplexSpectrogram {
        bins: mag.bins,
        frames: mag.frames,
        data,
        config: cfg.clone(),
    }
}

fn unit_phase(c: Complex64) -> Complex64 {
    let n = c.norm();
    if n > 0.0 {
        c / n
    } else {
        Complex64::new(1.0, 0.0)
    }
}

/// Iterative phase retrieval: start from uniform random phases drawn from
/// `seed`, then alternate overlap-add synthesis with re-imposing `mag` on
/// the phases of the re-analysed signal.
pub fn griffin_lim(mag: &Magnitude, cfg: &CodecConfig, iters: usize, seed: u64) -> Result<GriffinLimOutput> {
    if iters == 0 {
        return Err(CoreError::config("griffin-lim", "iteration count must be at least 1"));
    }
    let engine = Stft::new(cfg)?;
    if mag.bins != cfg.bins() || mag.data.len() != mag.bins * mag.frames || mag.frames == 0 {
        return Err(CoreError::Dimension(format!(
            "magnitude is {}x{}, codec expects {} bins",
            mag.bins,
            mag.frames,
            cfg.bins()
        )));
    }
    if let Some(i) = mag.data.iter().position(|v| !v.is_finite() || *v < 0.0) {
        return Err(CoreError::Range(format!("magnitude entry {i} is {}", mag.data[i])));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phases: Vec<Complex64> = (0..mag.data.len())
        .map(|_| Complex64::from_polar(1.0, rng.random_range(0.0..2.0 * PI)))
        .collect();
    let mut x = engine.synthesize(&with_phase(mag, |k, t| phases[k * mag.frames + t], cfg))?;
    let mut spec = engine.analyze(&x)?;
    let mut errors = Vec::with_capacity(iters);
    for _ in 0..iters {
        let target = with_phase(mag, |k, t| unit_phase(spec.at(k, t)), cfg);
        x = engine.synthesize(&target)?;
        spec = engine.analyze(&x)?;
        errors.push(spectral_convergence(mag, &spec));
    }
    Ok(GriffinLimOutput {
        wave: Waveform {
            samples: x,
            sample_rate_hz: cfg.sample_rate_hz,
        },
        errors,
    })
}
