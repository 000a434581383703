mod data;
mod eval;
mod generate;
mod serve;
mod train;

use std::path::Path;

pub(crate) use data::{IngestArgs, SynthArgs};
pub(crate) use eval::{EvalArgs, GradcheckArgs};
pub(crate) use generate::{EncodeArgs, GenerateArgs, InvertArgs};
pub(crate) use serve::ServeArgs;
use texvib_core::codec::NormStats;
use texvib_core::dataset::{compute_norm_stats, ingest, Dataset, Manifest};
pub(crate) use train::{TrainEncoderArgs, TrainGanArgs};

use crate::error::{CliError, CliResult};

/// Copies each flag that was given into the matching setting.
macro_rules! overlay {
    ($args:expr, $settings:expr; $($flag:ident => $($field:ident).+),* $(,)?) => {
        $(if let Some(v) = &$args.$flag {
            $settings.$($field).+ = v.clone().into();
        })*
    };
}
pub(crate) use overlay;

/// A dataset with its stored split and the norm stats of its training side.
pub(crate) struct Prepared {
    pub manifest: Manifest,
    pub train: Dataset,
    pub test: Dataset,
    pub stats: NormStats,
}

pub(crate) fn prepare(root: &Path) -> CliResult<Prepared> {
    let manifest = Manifest::load(root)?;
    let dataset = ingest(root, &manifest)?;
    let split = manifest.resolve_split(&dataset)?.ok_or_else(|| {
        CliError::new(
            "dataset",
            format!("{} has no stored split; run `texvib ingest` first", root.display()),
        )
    })?;
    let train = dataset.subset(&split.train);
    let test = dataset.subset(&split.test);
    let stats = match manifest.stats {
        Some(s) => s,
        None => compute_norm_stats(&train)?,
    };
    Ok(Prepared {
        manifest,
        train,
        test,
        stats,
    })
}

pub(crate) fn create_parent(path: &Path) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::new("io", format!("{}: {e}", dir.display())))?;
    }
    Ok(())
}

pub(crate) fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> CliResult<()> {
    create_parent(path)?;
    std::fs::write(path, bytes).map_err(|e| CliError::new("io", format!("{}: {e}", path.display())))
}

/// One JSON document per line.
pub(crate) fn json_lines<T: serde::Serialize>(items: &[T]) -> String {
    items
        .iter()
        .map(|m| serde_json::to_string(m).expect("metrics serialize") + "\n")
        .collect()
}

/// Writes `text` to `path`, or to stdout without one.
pub(crate) fn emit(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => write_file(p, text),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}
