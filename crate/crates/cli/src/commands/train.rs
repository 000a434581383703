use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};
use texvib_core::encoder::{train_encoder, EncoderArch, EncoderTrainConfig};
use texvib_core::gan::{train_gan, GanArch, GanData, GanTrainConfig};

use super::{create_parent, json_lines, overlay, prepare, write_file};
use crate::error::CliResult;
use crate::Command;

#[derive(Args, Debug)]
pub(crate) struct TrainEncoderArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    /// Checkpoint file to write.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-epoch metrics as JSON lines.
    #[arg(long)]
    metrics: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f32>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub(crate) struct TrainEncoderSettings {
    data: PathBuf,
    out: PathBuf,
    metrics: Option<PathBuf>,
    /// Defaults to the standard architecture for the dataset's class count.
    arch: Option<EncoderArch>,
    train: EncoderTrainConfig,
}

impl Default for TrainEncoderSettings {
    fn default() -> Self {
        Self {
            data: PathBuf::from("data"),
            out: PathBuf::from("encoder.tnn"),
            metrics: None,
            arch: None,
            train: EncoderTrainConfig::default(),
        }
    }
}

impl Command for TrainEncoderArgs {
    const NAME: &'static str = "train-encoder";
    type Settings = TrainEncoderSettings;

    fn apply(&self, s: &mut TrainEncoderSettings) {
        overlay!(self, s; data => data, out => out, metrics => metrics, seed => train.seed,
            epochs => train.epochs, batch_size => train.batch_size, lr => train.lr);
    }

    fn execute(s: &TrainEncoderSettings) -> CliResult<()> {
        let p = prepare(&s.data)?;
        let arch = s
            .arch
            .clone()
            .unwrap_or_else(|| EncoderArch::standard(p.manifest.classes.len()));
        let trained = train_encoder(&p.train, &p.test, &arch, &s.train, |m| {
            tracing::info!(epoch = m.epoch, train_loss = m.train_loss, clean_loss = m.clean_loss, lr = m.lr, "epoch");
        })?;
        create_parent(&s.out)?;
        trained.checkpoint.save(&s.out)?;
        if let Some(path) = &s.metrics {
            write_file(path, json_lines(&trained.epochs))?;
        }
        let acc = trained.checkpoint.test_accuracy.unwrap_or(f32::NAN);
        println!("{}: held-out accuracy {acc:.4} on {} images", s.out.display(), p.test.len());
        Ok(())
    }
}

#[derive(Args, Debug)]
pub(crate) struct TrainGanArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    /// Directory for `gan.tnn`, periodic checkpoints and `metrics.jsonl`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Architecture preset: `desk` or `reference`.
    #[arg(long)]
    arch: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f32>,
    #[arg(long)]
    checkpoint_every: Option<u64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub(crate) struct TrainGanSettings {
    data: PathBuf,
    out: PathBuf,
    arch: String,
    noise_dim: usize,
    train: GanTrainConfig,
}

impl Default for TrainGanSettings {
    fn default() -> Self {
        Self {
            data: PathBuf::from("data"),
            out: PathBuf::from("gan"),
            arch: "desk".into(),
            noise_dim: 50,
            train: GanTrainConfig::default(),
        }
    }
}

/// Steps between progress log lines.
const LOG_EVERY: u64 = 25;

impl Command for TrainGanArgs {
    const NAME: &'static str = "train-gan";
    type Settings = TrainGanSettings;

    fn apply(&self, s: &mut TrainGanSettings) {
        overlay!(self, s; data => data, out => out, arch => arch, seed => train.seed, steps => train.steps,
            batch_size => train.batch_size, lr => train.lr, checkpoint_every => train.checkpoint_every);
    }

    fn execute(s: &TrainGanSettings) -> CliResult<()> {
        let p = prepare(&s.data)?;
        let arch = GanArch::preset(&s.arch, p.manifest.classes.len(), s.noise_dim)?;
        let data = GanData::from_dataset(&p.train, &p.stats)?;
        std::fs::create_dir_all(&s.out)?;
        let trained = train_gan(&data, &arch, &s.train, Some(&s.out), |m| {
            if m.step % LOG_EVERY == 0 {
                tracing::info!(
                    step = m.step,
                    d_loss = m.d_loss,
                    g_loss = m.g_loss,
                    aux_acc_real = m.aux_acc_real,
                    aux_acc_fake = m.aux_acc_fake,
                    "step"
                );
            }
        })?;
        write_file(&s.out.join("metrics.jsonl"), json_lines(&trained.metrics))?;
        println!("{}: {} steps", s.out.join("gan.tnn").display(), trained.checkpoint.step);
        Ok(())
    }
}
