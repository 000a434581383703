//! The `texvib` command line: one subcommand per workflow, each configured
//! by an optional TOML section with flags taking precedence.

mod commands;
mod error;

use std::ffi::OsString;
use std::io::IsTerminal;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;
use tracing_subscriber::EnvFilter;

pub use error::{CliError, CliResult};

use commands::*;

/// Exit status for runtime failures.
pub const EXIT_FAILURE: u8 = 1;
/// Exit status for malformed invocations.
pub const EXIT_USAGE: u8 = 2;

#[derive(Parser, Debug)]
#[command(name = "texvib", version, about = "Vibrotactile signal synthesis from texture images")]
struct Cli {
    /// TOML file with one table per subcommand, e.g. `[train-gan]`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Write a synthetic paired image/vibration dataset.
    SynthDataset(SynthArgs),
    /// Validate a dataset directory and store its split and norm stats.
    Ingest(IngestArgs),
    /// Train the image-to-label encoder.
    TrainEncoder(TrainEncoderArgs),
    /// Train the class-conditional spectrogram generator.
    TrainGan(TrainGanArgs),
    /// Generate a spectrogram and waveform from a label or an image.
    Generate(GenerateArgs),
    /// Print the label vectors the encoder assigns to images.
    Encode(EncodeArgs),
    /// Reconstruct a waveform from an SPC1 spectrogram.
    Invert(InvertArgs),
    /// Score a generator (and optionally the image path) on a test split.
    Eval(EvalArgs),
    /// Serve the HTTP API over frozen checkpoints.
    Serve(ServeArgs),
    /// Run the finite-difference gradient suite.
    Gradcheck(GradcheckArgs),
}

/// A subcommand: flags layered over a settings table.
pub(crate) trait Command {
    const NAME: &'static str;
    type Settings: Serialize + DeserializeOwned + Default;

    /// Overwrites every setting given on the command line.
    fn apply(&self, settings: &mut Self::Settings);

    fn execute(settings: &Self::Settings) -> CliResult<()>;
}

const COMMAND_NAMES: [&str; 10] = [
    SynthArgs::NAME,
    IngestArgs::NAME,
    TrainEncoderArgs::NAME,
    TrainGanArgs::NAME,
    GenerateArgs::NAME,
    EncodeArgs::NAME,
    InvertArgs::NAME,
    EvalArgs::NAME,
    ServeArgs::NAME,
    GradcheckArgs::NAME,
];

fn read_config(path: &Path) -> CliResult<toml::Table> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::new("io", format!("{}: {e}", path.display())))?;
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| CliError::config(format!("{}: {}", path.display(), e.message())))?;
    if let Some(unknown) = table.keys().find(|k| !COMMAND_NAMES.contains(&k.as_str())) {
        return Err(CliError::config(format!(
            "{}: unknown section `{unknown}`; expected one of {}",
            path.display(),
            COMMAND_NAMES.join(", ")
        )));
    }
    Ok(table)
}

/// Settings from the config section (defaults for missing keys), then
/// flags on top.
fn resolve<C: Command>(args: &C, config: Option<&toml::Table>) -> CliResult<C::Settings> {
    let mut settings = match config.and_then(|t| t.get(C::NAME)) {
        Some(section) => section
            .clone()
            .try_into::<C::Settings>()
            .map_err(|e| CliError::config(format!("[{}]: {}", C::NAME, e.message())))?,
        None => C::Settings::default(),
    };
    args.apply(&mut settings);
    Ok(settings)
}

fn dispatch<C: Command>(args: &C, config: Option<&toml::Table>) -> CliResult<()> {
    let settings = resolve(args, config)?;
    let shown = serde_json::to_string(&settings).expect("settings serialize");
    tracing::info!(command = C::NAME, config = %shown, "resolved configuration");
    C::execute(&settings)
}

fn init_logging() {
    let filter = EnvFilter::try_from_env("TEXVIB_LOG").unwrap_or_else(|_| EnvFilter::new("info"));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .with_ansi(std::io::stderr().is_terminal())
        .without_time()
        .with_target(false)
        .try_init();
}

/// Runs one invocation and returns the process exit status.
pub fn run<I, T>(argv: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    init_logging();
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            EXIT_FAILURE
        }
    }
}

fn execute(cli: &Cli) -> CliResult<()> {
    let config = cli.config.as_deref().map(read_config).transpose()?;
    let config = config.as_ref();
    match &cli.command {
        Cmd::SynthDataset(a) => dispatch(a, config),
        Cmd::Ingest(a) => dispatch(a, config),
        Cmd::TrainEncoder(a) => dispatch(a, config),
        Cmd::TrainGan(a) => dispatch(a, config),
        Cmd::Generate(a) => dispatch(a, config),
        Cmd::Encode(a) => dispatch(a, config),
        Cmd::Invert(a) => dispatch(a, config),
        Cmd::Eval(a) => dispatch(a, config),
        Cmd::Serve(a) => dispatch(a, config),
        Cmd::Gradcheck(a) => dispatch(a, config),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("texvib").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn flags_override_the_config_section() {
        let table: toml::Table = "[invert]\niters = 12\nseed = 4\n".parse().unwrap();
        let Cmd::Invert(a) = parse(&["invert", "--seed", "9"]).command else {
            panic!()
        };
        let s = resolve(&a, Some(&table)).unwrap();
        assert_eq!((s.iters, s.seed), (12, 9));
    }

    #[test]
    fn unknown_config_keys_and_sections_are_rejected() {
        let table: toml::Table = "[invert]\niterz = 12\n".parse().unwrap();
        let Cmd::Invert(a) = parse(&["invert"]).command else { panic!() };
        let err = resolve(&a, Some(&table)).unwrap_err();
        assert_eq!(err.category, "config");
        assert!(err.detail.contains("iterz"), "{}", err.detail);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "[invrt]\n").unwrap();
        assert!(read_config(&path).unwrap_err().detail.contains("invrt"));
    }

    #[test]
    fn unknown_flags_are_usage_errors() {
        assert_eq!(run(["texvib", "invert", "--bogus", "1"]), EXIT_USAGE);
        assert_eq!(run(["texvib", "frobnicate"]), EXIT_USAGE);
    }

    #[test]
    fn runtime_errors_carry_a_category() {
        let e = CliError::from(texvib_core::CoreError::Range("x\ny".into()));
        assert_eq!(e.to_string(), "error[range]: value out of range: x y");
    }
}
