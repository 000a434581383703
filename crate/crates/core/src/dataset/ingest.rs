//! Directory layout:
//!
//! ```text
//! root/manifest.toml
//! root/<class dir>/images/<stem>.png
//! root/<class dir>/accel/<stem>.f32   raw little-endian f32 samples
//! root/<class dir>/accel/<stem>.hdr   one line: `rate=<Hz> length=<samples>`
//! root/<class dir>/accel/<stem>.wav   alternative to .f32 (16-bit PCM mono)
//! ```
//!
//! Images and signals pair up by file stem. Everything is read in sorted
//! path order so ingestion is deterministic.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{class_dir_name, Dataset, SamplePair, Split, TextureImage};
use crate::codec::{read_wav, CodecConfig, NormStats, Waveform};
use crate::error::{CoreError, Result};

pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassEntry {
    pub name: String,
    pub dir: String,
    /// Known dominant vibration frequency of the class, when there is one
    /// (synthetic data); evaluation uses it as the spectral signature.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center_hz: Option<f64>,
}

/// Sample ids on each side of a stored split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub seed: u64,
    pub test_fraction: f64,
    pub train: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub classes: Vec<ClassEntry>,
    #[serde(default)]
    pub codec: CodecConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stats: Option<NormStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitRecord>,
}

impl Manifest {
    pub fn for_classes(names: &[String], codec: CodecConfig) -> Self {
        Self {
            classes: names
                .iter()
                .map(|n| ClassEntry {
                    name: n.clone(),
                    dir: class_dir_name(n),
                    center_hz: None,
                })
                .collect(),
            codec,
            stats: None,
            split: None,
        }
    }

    pub fn load(root: &Path) -> Result<Self> {
        let path = root.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| CoreError::file(&path, e))?;
        let m: Manifest = toml::from_str(&text).map_err(|e| CoreError::format("manifest", e.to_string()))?;
        m.codec.validate()?;
        if m.classes.is_empty() {
            return Err(CoreError::Dataset("manifest lists no classes".into()));
        }
        Ok(m)
    }

    pub fn save(&self, root: &Path) -> Result<()> {
        let path = root.join(MANIFEST_FILE);
        let text = toml::to_string_pretty(self).map_err(|e| CoreError::format("manifest", e.to_string()))?;
        std::fs::write(&path, text).map_err(|e| CoreError::file(&path, e))
    }

    pub fn class_names(&self) -> Vec<String> {
        self.classes.iter().map(|c| c.name.clone()).collect()
    }

    /// Per-class signature frequencies, if every class declares one.
    pub fn class_centers(&self) -> Option<Vec<f64>> {
        self.classes.iter().map(|c| c.center_hz).collect()
    }

    /// Resolves the stored split against a dataset's sample ids.
    pub fn resolve_split(&self, dataset: &Dataset) -> Result<Option<Split>> {
        let Some(rec) = &self.split else {
            return Ok(None);
        };
        let index: BTreeMap<&str, usize> = dataset.pairs.iter().enumerate().map(|(i, p)| (p.id.as_str(), i)).collect();
        let lookup = |ids: &[String]| -> Result<Vec<usize>> {
            let mut out = ids
                .iter()
                .map(|id| {
                    index
                        .get(id.as_str())
                        .copied()
                        .ok_or_else(|| CoreError::Dataset(format!("split names unknown sample `{id}`")))
                })
                .collect::<Result<Vec<_>>>()?;
            out.sort_unstable();
            Ok(out)
        };
        Ok(Some(Split {
            train: lookup(&rec.train)?,
            test: lookup(&rec.test)?,
        }))
    }
}

pub fn write_raw_f32(path: &Path, wave: &Waveform) -> Result<()> {
    let bytes: Vec<u8> = wave.samples.iter().flat_map(|v| (*v as f32).to_le_bytes()).collect();
    std::fs::write(path, bytes).map_err(|e| CoreError::file(path, e))?;
    let hdr = path.with_extension("hdr");
    let line = format!("rate={} length={}\n", wave.sample_rate_hz, wave.samples.len());
    std::fs::write(&hdr, line).map_err(|e| CoreError::file(hdr, e))
}

pub fn read_raw_f32(path: &Path) -> Result<Waveform> {
    let hdr = path.with_extension("hdr");
    let line = std::fs::read_to_string(&hdr).map_err(|e| CoreError::file(&hdr, e))?;
    let mut rate = None;
    let mut length = None;
    for field in line.split_whitespace() {
        let bad = || CoreError::format("signal header", format!("{}: bad field `{field}`", hdr.display()));
        match field.split_once('=') {
            Some(("rate", v)) => rate = Some(v.parse::<u32>().map_err(|_| bad())?),
            Some(("length", v)) => length = Some(v.parse::<usize>().map_err(|_| bad())?),
            _ => return Err(bad()),
        }
    }
    let (Some(rate), Some(length)) = (rate, length) else {
        return Err(CoreError::format(
            "signal header",
            format!("{}: needs `rate=` and `length=`", hdr.display()),
        ));
    };
    let bytes = std::fs::read(path).map_err(|e| CoreError::file(path, e))?;
    if bytes.len() != length * 4 {
        return Err(CoreError::format(
            "raw f32 signal",
            format!("{}: header declares {length} samples, file holds {} bytes", path.display(), bytes.len()),
        ));
    }
    let samples = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Waveform::new(samples, rate).map_err(|e| CoreError::format("raw f32 signal", format!("{}: {e}", path.display())))
}

fn sorted_files(dir: &Path, ext: &[&str]) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| CoreError::file(dir, e))?;
    let mut out = Vec::new();
    for e in entries {
        let path = e.map_err(|e| CoreError::file(dir, e))?.path();
        if path.extension().and_then(|x| x.to_str()).is_some_and(|x| ext.contains(&x)) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn stem(path: &Path) -> String {
    path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string()
}

/// Reads every class listed in `manifest` under `root`.
pub fn ingest(root: &Path, manifest: &Manifest) -> Result<Dataset> {
    manifest.codec.validate()?;
    let mut pairs = Vec::new();
    for (k, class) in manifest.classes.iter().enumerate() {
        let dir = root.join(&class.dir);
        if !dir.is_dir() {
            return Err(CoreError::Dataset(format!(
                "class `{}`: missing directory {}",
                class.name,
                dir.display()
            )));
        }
        let images = sorted_files(&dir.join("images"), &["png", "bmp"])?;
        let signals = sorted_files(&dir.join("accel"), &["f32", "wav"])?;
        if images.is_empty() || signals.is_empty() {
            return Err(CoreError::Dataset(format!("class `{}` has no samples", class.name)));
        }
        let signal_by_stem: BTreeMap<String, PathBuf> = signals.into_iter().map(|p| (stem(&p), p)).collect();
        if signal_by_stem.len() != images.len() {
            return Err(CoreError::Dataset(format!(
                "class `{}`: {} images but {} signals",
                class.name,
                images.len(),
                signal_by_stem.len()
            )));
        }
        for img_path in images {
            let s = stem(&img_path);
            let sig_path = signal_by_stem.get(&s).ok_or_else(|| {
                CoreError::Dataset(format!("class `{}`: image {} has no signal", class.name, img_path.display()))
            })?;
            let wave = if sig_path.extension().is_some_and(|x| x == "wav") {
                read_wav(sig_path)?
            } else {
                read_raw_f32(sig_path)?
            };
            if wave.sample_rate_hz != manifest.codec.sample_rate_hz {
                return Err(CoreError::Dataset(format!(
                    "{}: {}",
                    sig_path.display(),
                    CoreError::RateMismatch {
                        expected: manifest.codec.sample_rate_hz,
                        found: wave.sample_rate_hz
                    }
                )));
            }
            pairs.push(SamplePair {
                id: format!("{}/{s}", class.dir),
                image: TextureImage::load(&img_path)?,
                wave,
                class_index: k,
                class_name: class.name.clone(),
            });
        }
    }
    let dataset = Dataset {
        class_names: manifest.class_names(),
        pairs,
        codec: manifest.codec.clone(),
    };
    let counts = dataset.class_counts();
    for (name, n) in dataset.class_names.iter().zip(&counts) {
        tracing::info!(class = %name, samples = n, "ingested");
    }
    Ok(dataset)
}

/// Writes `dataset` in the layout above, plus `manifest`.
pub fn write_dataset(root: &Path, dataset: &Dataset, manifest: &Manifest) -> Result<()> {
    for class in &manifest.classes {
        for sub in ["images", "accel"] {
            let d = root.join(&class.dir).join(sub);
            std::fs::create_dir_all(&d).map_err(|e| CoreError::file(d, e))?;
        }
    }
    for p in &dataset.pairs {
        let class = &manifest.classes[p.class_index];
        let s = p
            .id
            .rsplit_once('/')
            .map(|(_, s)| s.to_string())
            .unwrap_or_else(|| p.id.clone());
        let base = root.join(&class.dir);
        p.image.save_png(&base.join("images").join(format!("{s}.png")))?;
        write_raw_f32(&base.join("accel").join(format!("{s}.f32")), &p.wave)?;
    }
    manifest.save(root)
}
