use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};
use texvib_core::encoder::{EncoderCheckpoint, LabelEncodingRegistry};
use texvib_core::gan::GanCheckpoint;
use texvib_core::pipeline::{eval_generated, EvalConfig};
use texvib_nn::gradcheck::standard_suite;

use super::{emit, overlay, prepare};
use crate::error::{CliError, CliResult};
use crate::Command;

#[derive(Args, Debug)]
pub(crate) struct EvalArgs {
    /// Generator checkpoint.
    #[arg(long)]
    gan: Option<PathBuf>,
    /// Encoder checkpoint; adds the image-to-vibration path to the report.
    #[arg(long)]
    encoder: Option<PathBuf>,
    /// Dataset whose stored test split is scored against.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    samples_per_class: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// JSON report file (stdout without one).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub(crate) struct EvalSettings {
    gan: PathBuf,
    encoder: Option<PathBuf>,
    encoding: String,
    data: PathBuf,
    eval: EvalConfig,
    out: Option<PathBuf>,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            gan: PathBuf::from("gan/gan.tnn"),
            encoder: None,
            encoding: LabelEncodingRegistry::DEFAULT.into(),
            data: PathBuf::from("data"),
            eval: EvalConfig::default(),
            out: None,
        }
    }
}

impl Command for EvalArgs {
    const NAME: &'static str = "eval";
    type Settings = EvalSettings;

    fn apply(&self, s: &mut EvalSettings) {
        overlay!(self, s; gan => gan, encoder => encoder, data => data,
            samples_per_class => eval.samples_per_class, seed => eval.seed, out => out);
    }

    fn execute(s: &EvalSettings) -> CliResult<()> {
        let p = prepare(&s.data)?;
        let centers = p.manifest.class_centers().ok_or_else(|| {
            CliError::new("dataset", "evaluation needs a `center_hz` signature for every manifest class")
        })?;
        let gan = GanCheckpoint::load(&s.gan)?;
        let encoder = s.encoder.as_deref().map(EncoderCheckpoint::load).transpose()?;
        let encoding = LabelEncodingRegistry::builtin().get(&s.encoding)?;
        let report = eval_generated(&gan, encoder.as_ref().map(|e| (e, encoding)), &p.test, &centers, &s.eval)?;
        tracing::info!(
            aux_accuracy = report.aux_accuracy,
            signature_match_rate = report.signature_match_rate,
            separation_score = report.separation_score,
            "evaluated"
        );
        emit(s.out.as_deref(), &report.to_json())
    }
}

#[derive(Args, Debug)]
pub(crate) struct GradcheckArgs {
    #[arg(long)]
    seed: Option<u64>,
    /// JSON-lines report file (stdout table only without one).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub(crate) struct GradcheckSettings {
    seed: u64,
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct CheckLine<'a> {
    name: &'a str,
    max_rel_error: f64,
    tolerance: f64,
    passed: bool,
    worst: &'a str,
    kinks_skipped: usize,
    failure: Option<&'a str>,
}

impl Command for GradcheckArgs {
    const NAME: &'static str = "gradcheck";
    type Settings = GradcheckSettings;

    fn apply(&self, s: &mut GradcheckSettings) {
        overlay!(self, s; seed => seed, out => out);
    }

    fn execute(s: &GradcheckSettings) -> CliResult<()> {
        let suite = standard_suite(s.seed)?;
        let lines: Vec<CheckLine> = suite
            .iter()
            .map(|(name, r)| CheckLine {
                name,
                max_rel_error: r.max_rel_error,
                tolerance: r.tolerance,
                passed: r.passed,
                worst: &r.worst,
                kinks_skipped: r.kinks_skipped,
                failure: r.failure.as_deref(),
            })
            .collect();
        for l in &lines {
            let verdict = if l.passed { "ok" } else { "FAIL" };
            println!("{verdict:4} {:32} {:.3e} (tol {:.0e})", l.name, l.max_rel_error, l.tolerance);
        }
        if let Some(path) = &s.out {
            super::write_file(path, super::json_lines(&lines))?;
        }
        let failed: Vec<&str> = lines.iter().filter(|l| !l.passed).map(|l| l.name).collect();
        if failed.is_empty() {
            Ok(())
        } else {
            Err(CliError::new("gradcheck", format!("failed: {}", failed.join(", "))))
        }
    }
}
