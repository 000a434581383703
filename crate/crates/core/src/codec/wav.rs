use std::io::Cursor;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{CodecConfig, NormStats, Waveform};
use crate::error::{CoreError, Result};

const FULL_SCALE: f64 = 32767.0;

/// Metadata written next to a WAV file so the physical amplitude survives
/// peak normalization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WavSidecar {
    pub sample_rate_hz: u32,
    /// Physical value of a full-scale (32767) sample.
    pub scale_factor: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm_stats: Option<NormStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub codec: Option<CodecConfig>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// 16-bit PCM mono, peak-normalized to full scale. Returns the bytes and
/// the scale factor. Quantization rounds to nearest, so the round-trip
/// error is at most half a step of `peak / 32767`.
pub fn encode_wav(wave: &Waveform) -> Result<(Vec<u8>, f64)> {
    if let Some(i) = wave.samples.iter().position(|v| !v.is_finite()) {
        return Err(CoreError::Range(format!("sample {i} is not finite")));
    }
    let peak = wave.peak();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: wave.sample_rate_hz,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut cursor = Cursor::new(Vec::with_capacity(44 + 2 * wave.samples.len()));
    {
        let mut w = hound::WavWriter::new(&mut cursor, spec).map_err(|e| CoreError::format("WAV", e.to_string()))?;
        for &v in &wave.samples {
            let q = if peak > 0.0 {
                (v / peak * FULL_SCALE).round() as i16
            } else {
                0
            };
            w.write_sample(q).map_err(|e| CoreError::format("WAV", e.to_string()))?;
        }
        w.finalize().map_err(|e| CoreError::format("WAV", e.to_string()))?;
    }
    Ok((cursor.into_inner(), peak))
}

/// Decodes 16-bit PCM mono; samples are multiplied by `scale_factor / 32767`.
pub fn decode_wav(bytes: &[u8], scale_factor: f64) -> Result<Waveform> {
    let mut r = hound::WavReader::new(Cursor::new(bytes)).map_err(|e| CoreError::format("WAV", e.to_string()))?;
    let spec = r.spec();
    if spec.channels != 1 || spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
        return Err(CoreError::format(
            "WAV",
            format!(
                "unsupported encoding: {} channel(s), {}-bit {:?}; need 16-bit PCM mono",
                spec.channels, spec.bits_per_sample, spec.sample_format
            ),
        ));
    }
    let step = scale_factor / FULL_SCALE;
    let samples = r
        .samples::<i16>()
        .map(|s| s.map(|v| v as f64 * step))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| CoreError::format("WAV", e.to_string()))?;
    if samples.is_empty() {
        return Err(CoreError::format("WAV", "no samples"));
    }
    Ok(Waveform {
        samples,
        sample_rate_hz: spec.sample_rate,
    })
}

/// Writes `path` and its `<path>.json` sidecar.
pub fn write_wav(wave: &Waveform, path: &Path, stats: Option<&NormStats>, codec: Option<&CodecConfig>) -> Result<()> {
    let (bytes, scale_factor) = encode_wav(wave)?;
    std::fs::write(path, bytes).map_err(|e| CoreError::file(path, e))?;
    let sidecar = WavSidecar {
        sample_rate_hz: wave.sample_rate_hz,
        scale_factor,
        norm_stats: stats.copied(),
        codec: codec.cloned(),
    };
    let side = sidecar_path(path);
    let text = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    std::fs::write(&side, text).map_err(|e| CoreError::file(side, e))?;
    Ok(())
}

/// Reads `path`, restoring physical units from the sidecar when present.
/// Without a sidecar, samples are in full-scale units (±1).
pub fn read_wav(path: &Path) -> Result<Waveform> {
    let bytes = std::fs::read(path).map_err(|e| CoreError::file(path, e))?;
    let side = sidecar_path(path);
    let scale = if side.exists() {
        let text = std::fs::read_to_string(&side).map_err(|e| CoreError::file(&side, e))?;
        let meta: WavSidecar =
            serde_json::from_str(&text).map_err(|e| CoreError::format("WAV sidecar", e.to_string()))?;
        meta.scale_factor
    } else {
        1.0
    };
    decode_wav(&bytes, scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn round_trip_within_quantization_bound() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.wav");
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let wave = Waveform::new((0..5000).map(|_| rng.random_range(-3.0..3.0)).collect(), 10_000).unwrap();
        write_wav(&wave, &path, None, None).unwrap();
        let back = read_wav(&path).unwrap();
        let bound = wave.peak() / 32767.0;
        for (a, b) in wave.samples.iter().zip(&back.samples) {
            assert!((a - b).abs() <= bound, "{a} vs {b}");
        }
    }

    #[test]
    fn silence_round_trips_to_silence() {
        let wave = Waveform::new(vec![0.0; 100], 10_000).unwrap();
        let (bytes, scale) = encode_wav(&wave).unwrap();
        assert_eq!(scale, 0.0);
        assert!(decode_wav(&bytes, scale).unwrap().samples.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn header_declares_rate_and_length() {
        let wave = Waveform::new(vec![0.25; 40_000], 10_000).unwrap();
        let (bytes, _) = encode_wav(&wave).unwrap();
        let r = hound::WavReader::new(Cursor::new(bytes)).unwrap();
        assert_eq!(r.spec().sample_rate, 10_000);
        assert_eq!(r.duration(), 40_000);
    }

    #[test]
    fn stereo_rejected_as_unsupported() {
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 10_000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut cursor = Cursor::new(Vec::new());
        let mut w = hound::WavWriter::new(&mut cursor, spec).unwrap();
        w.write_sample(1i16).unwrap();
        w.write_sample(1i16).unwrap();
        w.finalize().unwrap();
        let err = decode_wav(&cursor.into_inner(), 1.0).err().unwrap();
        assert!(err.to_string().contains("unsupported encoding"));
    }

    #[test]
    fn garbage_is_a_malformed_header() {
        assert!(matches!(decode_wav(b"nope", 1.0), Err(CoreError::Format { .. })));
    }
}
