use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use texvib_core::dataset::{compute_norm_stats, ingest, synthesize_dataset, Dataset, Manifest, SplitRecord, SyntheticSpec};

use super::overlay;
use crate::error::CliResult;
use crate::Command;

#[derive(Args, Debug)]
pub(crate) struct SynthArgs {
    /// Number of classes.
    #[arg(long)]
    classes: Option<usize>,
    /// Samples per class.
    #[arg(long)]
    per_class: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Held-out fraction of each class.
    #[arg(long)]
    test_fraction: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub(crate) struct SynthSettings {
    classes: usize,
    per_class: usize,
    seed: u64,
    test_fraction: f64,
    out: PathBuf,
}

impl Default for SynthSettings {
    fn default() -> Self {
        Self {
            classes: 9,
            per_class: 40,
            seed: 7,
            test_fraction: 0.2,
            out: PathBuf::from("data"),
        }
    }
}

/// Stores a stratified split of `dataset` and the training-side norm stats.
fn record_split(manifest: &mut Manifest, dataset: &Dataset, test_fraction: f64, seed: u64) -> CliResult<()> {
    let split = dataset.split(test_fraction, seed)?;
    let ids = |idx: &[usize]| idx.iter().map(|&i| dataset.pairs[i].id.clone()).collect();
    manifest.stats = Some(compute_norm_stats(&dataset.subset(&split.train))?);
    manifest.split = Some(SplitRecord {
        seed,
        test_fraction,
        train: ids(&split.train),
        test: ids(&split.test),
    });
    Ok(())
}

fn summarize(root: &Path, manifest: &Manifest, dataset: &Dataset) {
    let split = manifest.split.as_ref().expect("split recorded");
    println!(
        "{}: {} pairs in {} classes ({} train / {} test)",
        root.display(),
        dataset.len(),
        dataset.class_names.len(),
        split.train.len(),
        split.test.len()
    );
}

impl Command for SynthArgs {
    const NAME: &'static str = "synth-dataset";
    type Settings = SynthSettings;

    fn apply(&self, s: &mut SynthSettings) {
        overlay!(self, s; classes => classes, per_class => per_class, seed => seed,
            test_fraction => test_fraction, out => out);
    }

    fn execute(s: &SynthSettings) -> CliResult<()> {
        let spec = SyntheticSpec::standard(s.classes, s.per_class);
        let dataset = synthesize_dataset(&spec, s.seed)?;
        let mut manifest = spec.manifest();
        record_split(&mut manifest, &dataset, s.test_fraction, s.seed)?;
        texvib_core::dataset::write_dataset(&s.out, &dataset, &manifest)?;
        summarize(&s.out, &manifest, &dataset);
        Ok(())
    }
}

#[derive(Args, Debug)]
pub(crate) struct IngestArgs {
    /// Dataset directory holding `manifest.toml`.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    test_fraction: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Replace an already stored split.
    #[arg(long)]
    resplit: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub(crate) struct IngestSettings {
    data: PathBuf,
    test_fraction: f64,
    seed: u64,
    resplit: bool,
}

impl Default for IngestSettings {
    fn default() -> Self {
        Self {
            data: PathBuf::from("data"),
            test_fraction: 0.2,
            seed: 0,
            resplit: false,
        }
    }
}

impl Command for IngestArgs {
    const NAME: &'static str = "ingest";
    type Settings = IngestSettings;

    fn apply(&self, s: &mut IngestSettings) {
        overlay!(self, s; data => data, test_fraction => test_fraction, seed => seed);
        s.resplit |= self.resplit;
    }

    fn execute(s: &IngestSettings) -> CliResult<()> {
        let mut manifest = Manifest::load(&s.data)?;
        let dataset = ingest(&s.data, &manifest)?;
        let stored = if s.resplit { None } else { manifest.resolve_split(&dataset)? };
        match stored {
            Some(split) => manifest.stats = Some(compute_norm_stats(&dataset.subset(&split.train))?),
            None => record_split(&mut manifest, &dataset, s.test_fraction, s.seed)?,
        }
        manifest.save(&s.data)?;
        summarize(&s.data, &manifest, &dataset);
        Ok(())
    }
}
