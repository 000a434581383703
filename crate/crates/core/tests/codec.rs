use std::f64::consts::PI;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use texvib_core::codec::{
    from_model_domain, griffin_lim, istft, stft, to_model_domain, CodecConfig, Magnitude, NormStats, Waveform,
};

fn random_wave(len: usize, seed: u64) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Waveform::new((0..len).map(|_| rng.random_range(-1.0..1.0)).collect(), 10_000).unwrap()
}

fn sinusoid(hz: f64, len: usize) -> Waveform {
    Waveform::new(
        (0..len).map(|i| (2.0 * PI * hz * i as f64 / 10_000.0).sin()).collect(),
        10_000,
    )
    .unwrap()
}

/// Relative L2 error over samples every frame overlaps fully.
fn interior_error(a: &[f64], b: &[f64], fft: usize) -> f64 {
    let r = fft..a.len() - fft;
    let num: f64 = a[r.clone()].iter().zip(&b[r.clone()]).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = a[r].iter().map(|x| x * x).sum();
    (num / den).sqrt()
}

/// Frequency of the largest |DFT| coefficient, evaluated term by term.
fn brute_dft_peak_hz(x: &[f64], rate: f64) -> f64 {
    let n = x.len();
    let mut best = (0, 0.0);
    for k in 1..n / 2 {
        let step = -2.0 * PI * k as f64 / n as f64;
        let (mut re, mut im) = (0.0, 0.0);
        for (i, v) in x.iter().enumerate() {
            let a = step * i as f64;
            re += v * a.cos();
            im += v * a.sin();
        }
        let p = re * re + im * im;
        if p > best.1 {
            best = (k, p);
        }
    }
    best.0 as f64 * rate / n as f64
}

#[test]
fn round_trip_on_random_8192_sample_signals() {
    let cfg = CodecConfig::default();
    for seed in 0..5 {
        let x = random_wave(8192, seed);
        let y = istft(&stft(&x, &cfg).unwrap(), &cfg).unwrap();
        let back = &y.samples;
        // 8192 samples → 61 frames → 8192 samples exactly.
        assert_eq!(back.len(), 8192);
        let err = interior_error(&x.samples, back, 512);
        assert!(err < 1e-6, "seed {seed}: {err}");
    }
}

#[test]
fn griffin_lim_error_never_increases_on_random_magnitudes() {
    let cfg = CodecConfig::default();
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let frames = 24;
        let mag = Magnitude {
            bins: 257,
            frames,
            data: (0..257 * frames).map(|_| rng.random_range(0.0..2.0)).collect(),
        };
        let out = griffin_lim(&mag, &cfg, 60, seed).unwrap();
        assert_eq!(out.errors.len(), 60);
        for w in out.errors.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "seed {seed}: {} then {}", w[0], w[1]);
        }
    }
}

#[test]
fn griffin_lim_recovers_200_hz_within_one_bin() {
    let cfg = CodecConfig::default();
    let wave = sinusoid(200.0, cfg.samples_for(128));
    let mag = stft(&wave, &cfg).unwrap().magnitude();
    let out = griffin_lim(&mag, &cfg, 60, 7).unwrap();
    let peak = brute_dft_peak_hz(&out.wave.samples, 10_000.0);
    assert!((peak - 200.0).abs() <= cfg.bin_hz(), "peak at {peak} Hz");
}

#[test]
fn model_domain_endpoints_and_crop_geometry() {
    let cfg = CodecConfig::default();
    let spec = stft(&random_wave(40_000, 11), &cfg).unwrap();
    assert_eq!((spec.bins, spec.frames), (257, 309));
    let mag = spec.magnitude();
    let peak_db = 20.0 * mag.data.iter().fold(0.0f64, |m, v| m.max(*v)).log10();
    // Stats placing the peak exactly at log_max.
    let stats = NormStats::new(peak_db - 50.0, peak_db).unwrap();
    let m = to_model_domain(&spec, &stats, &cfg).unwrap();
    assert_eq!((m.rows, m.cols), (128, 128));
    assert!(m.data.iter().all(|v| (0.0..=1.0).contains(v)));
    for b in 0..128 {
        for t in 0..128 {
            let d = 20.0 * mag.at(b, t).log10();
            let v = m.at(b, t);
            if d >= stats.log_max - 1e-9 {
                assert!((v - 1.0).abs() < 1e-6);
            }
            if d <= stats.log_min {
                assert_eq!(v, 0.0);
            }
        }
    }
    // 128 bins cover 0 to 127 · 19.53 Hz; 128 frames span the samples below.
    assert!((127.0 * cfg.bin_hz() - 2480.5).abs() < 0.1);
    assert_eq!(cfg.samples_for(128), 16_768);
}

#[test]
fn zero_spectrogram_maps_to_zero_model_spectrogram() {
    let cfg = CodecConfig::default();
    let spec = stft(&Waveform::new(vec![0.0; 20_000], 10_000).unwrap(), &cfg).unwrap();
    let m = to_model_domain(&spec, &NormStats::new(-70.0, 10.0).unwrap(), &cfg).unwrap();
    assert!(m.data.iter().all(|v| *v == 0.0));
}

#[test]
fn model_domain_round_trip_within_tolerance() {
    let cfg = CodecConfig::default();
    let spec = stft(&random_wave(20_000, 12), &cfg).unwrap();
    let mag = spec.magnitude();
    let (lo, hi) = mag.data.iter().fold((f64::MAX, 0.0f64), |(a, b), v| (a.min(*v), b.max(*v)));
    let stats = NormStats::new(20.0 * lo.log10() - 1.0, 20.0 * hi.log10() + 1.0).unwrap();
    let m = to_model_domain(&spec, &stats, &cfg).unwrap();
    let back = from_model_domain(&m).unwrap();
    assert_eq!((back.bins, back.frames), (257, 128));
    for b in 0..257 {
        for t in 0..128 {
            if b < 128 {
                let rel = (back.at(b, t) - mag.at(b, t)).abs() / mag.at(b, t);
                assert!(rel < 1e-5, "bin {b} frame {t}: {rel}");
            } else {
                assert_eq!(back.at(b, t), 0.0);
            }
        }
    }
}

#[test]
fn from_model_domain_endpoints() {
    let cfg = CodecConfig::default();
    let stats = NormStats::new(-40.0, 20.0).unwrap();
    let zeros = texvib_core::codec::ModelSpectrogram::new(128, 128, vec![0.0; 128 * 128], stats, cfg.clone()).unwrap();
    let back = from_model_domain(&zeros).unwrap();
    assert!((back.at(3, 3) - 0.01).abs() < 1e-12);
    assert_eq!(back.at(200, 3), 0.0);
    let ones = texvib_core::codec::ModelSpectrogram::new(128, 128, vec![1.0; 128 * 128], stats, cfg).unwrap();
    assert!((from_model_domain(&ones).unwrap().at(127, 127) - 10.0).abs() < 1e-9);
}

#[test]
fn out_of_range_model_entries_rejected() {
    let cfg = CodecConfig::default();
    let stats = NormStats::new(-40.0, 20.0).unwrap();
    let mut data = vec![0.5; 128 * 128];
    data[77] = 1.001;
    assert!(texvib_core::codec::ModelSpectrogram::new(128, 128, data, stats, cfg).is_err());
}

#[test]
fn band_crop_mode_round_trips_through_model_domain() {
    let cfg = CodecConfig {
        freq_crop_mode: "resize-to-256hz".into(),
        ..CodecConfig::default()
    };
    let spec = stft(&sinusoid(120.0, 20_000), &cfg).unwrap();
    let stats = NormStats::new(-60.0, 60.0).unwrap();
    let m = to_model_domain(&spec, &stats, &cfg).unwrap();
    assert_eq!((m.rows, m.cols), (128, 128));
    let back = from_model_domain(&m).unwrap();
    assert!(back.at(14, 0) == 0.0 && back.at(13, 0) > 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn stft_is_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let cfg = CodecConfig::default();
        let x = random_wave(2048, seed);
        let y = random_wave(2048, seed.wrapping_add(1));
        let mix = Waveform::new(
            x.samples.iter().zip(&y.samples).map(|(p, q)| a * p + b * q).collect(),
            10_000,
        ).unwrap();
        let (sx, sy, sm) = (stft(&x, &cfg).unwrap(), stft(&y, &cfg).unwrap(), stft(&mix, &cfg).unwrap());
        for i in 0..sm.data.len() {
            let expect = sx.data[i] * a + sy.data[i] * b;
            prop_assert!((sm.data[i] - expect).norm() < 1e-9);
        }
    }

    // From 1152 samples on, at least one hop lies a full window from both ends.
    #[test]
    fn round_trip_holds_for_any_length(len in 1152usize..6000, seed in any::<u64>()) {
        let cfg = CodecConfig::default();
        let x = random_wave(len, seed);
        let y = istft(&stft(&x, &cfg).unwrap(), &cfg).unwrap();
        let covered = y.samples.len();
        prop_assert!(interior_error(&x.samples[..covered], &y.samples, 512) < 1e-6);
    }

    #[test]
    fn model_domain_is_always_in_unit_range(seed in any::<u64>(), gain in 1e-3f64..1e3, lo in -120.0f64..0.0, span in 1.0f64..100.0) {
        let cfg = CodecConfig::default();
        let mut x = random_wave(17_000, seed);
        x.samples.iter_mut().for_each(|v| *v *= gain);
        let m = to_model_domain(&stft(&x, &cfg).unwrap(), &NormStats::new(lo, lo + span).unwrap(), &cfg).unwrap();
        prop_assert!(m.data.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
