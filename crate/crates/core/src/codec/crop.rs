use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};

use super::resize::bilinear;
use super::CodecConfig;
use crate::error::{CoreError, Result};

/// How STFT bins map onto the model's frequency rows. Implementations
/// receive and return bin-major matrices with `model_time_frames` columns.
pub trait FreqCrop: Send + Sync {
    fn name(&self) -> &'static str;

    /// Number of lowest STFT bins the strategy reads.
    fn source_rows(&self, cfg: &CodecConfig) -> usize;

    /// `source_rows × frames` → `model_freq_bins × frames`.
    fn to_model(&self, src: &[f64], cfg: &CodecConfig) -> Vec<f64>;

    /// `model_freq_bins × frames` → `source_rows × frames`.
    fn to_source(&self, model: &[f64], cfg: &CodecConfig) -> Vec<f64>;

    /// STFT bin position (possibly fractional) that model row `row` samples.
    fn row_bin(&self, row: usize, cfg: &CodecConfig) -> f64;
}

/// Keep the lowest `model_freq_bins` bins as they are.
pub struct LowBins;

impl LowBins {
    pub const NAME: &'static str = "low-128-bins";
}

impl FreqCrop for LowBins {
    fn name(&self) -> &'static str {
        Self::NAME
    }

    fn source_rows(&self, cfg: &CodecConfig) -> usize {
        cfg.model_freq_bins
    }

    fn to_model(&self, src: &[f64], _cfg: &CodecConfig) -> Vec<f64> {
        src.to_vec()
    }

    fn to_source(&self, model: &[f64], _cfg: &CodecConfig) -> Vec<f64> {
        model.to_vec()
    }

    fn row_bin(&self, row: usize, _cfg: &CodecConfig) -> f64 {
        row as f64
    }
}

/// Keep the bins at or below 256 Hz and stretch them bilinearly over the
/// model's rows.
pub struct ResizeToBand;

impl ResizeToBand {
    pub const NAME: &'static str = "resize-to-256hz";
    pub const TOP_HZ: f64 = 256.0;
}

impl FreqCrop for ResizeToBand {
    fn name(&self) -> &'static str {
        Self::NAME
    }

    fn source_rows(&self, cfg: &CodecConfig) -> usize {
        ((Self::TOP_HZ / cfg.bin_hz()).floor() as usize + 1).clamp(2, cfg.bins())
    }

    fn to_model(&self, src: &[f64], cfg: &CodecConfig) -> Vec<f64> {
        let t = cfg.model_time_frames;
        bilinear(src, self.source_rows(cfg), t, cfg.model_freq_bins, t)
    }

    fn to_source(&self, model: &[f64], cfg: &CodecConfig) -> Vec<f64> {
        let t = cfg.model_time_frames;
        bilinear(model, cfg.model_freq_bins, t, self.source_rows(cfg), t)
    }

    fn row_bin(&self, row: usize, cfg: &CodecConfig) -> f64 {
        // Corner-aligned stretch.
        let rows = cfg.model_freq_bins.max(2) - 1;
        row as f64 * (self.source_rows(cfg) - 1) as f64 / rows as f64
    }
}

/// Named frequency-crop strategies.
#[derive(Default, Clone)]
pub struct CropRegistry {
    strategies: BTreeMap<String, Arc<dyn FreqCrop>>,
}

impl CropRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Shared registry holding the shipped strategies.
    pub fn builtin() -> &'static CropRegistry {
        static BUILTIN: OnceLock<CropRegistry> = OnceLock::new();
        BUILTIN.get_or_init(|| {
            let mut r = CropRegistry::new();
            r.register(LowBins);
            r.register(ResizeToBand);
            r
        })
    }

    pub fn register(&mut self, strategy: impl FreqCrop + 'static) {
        self.strategies.insert(strategy.name().to_string(), Arc::new(strategy));
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.strategies.keys().map(String::as_str)
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn FreqCrop>> {
        self.strategies
            .get(name)
            .cloned()
            .ok_or_else(|| CoreError::UnknownStrategy {
                registry: "frequency crop",
                name: name.to_string(),
                known: self.names().collect::<Vec<_>>().join(", "),
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_mode_reads_bins_up_to_256_hz() {
        let cfg = CodecConfig::default();
        // 13 · 19.53 Hz = 253.9 Hz is the last bin at or below 256 Hz.
        assert_eq!(ResizeToBand.source_rows(&cfg), 14);
        assert_eq!(LowBins.source_rows(&cfg), 128);
    }

    #[test]
    fn unknown_mode_lists_known_ones() {
        let err = CropRegistry::builtin().get("mel").err().unwrap();
        let msg = err.to_string();
        assert!(msg.contains("low-128-bins") && msg.contains("resize-to-256hz"), "{msg}");
    }
}
