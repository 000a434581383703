use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use texvib_core::codec::{read_spec, write_spec, write_wav, DEFAULT_GRIFFIN_LIM_ITERS};
use texvib_core::dataset::TextureImage;
use texvib_core::encoder::{EncoderCheckpoint, LabelEncodingRegistry};
use texvib_core::gan::GanCheckpoint;
use texvib_core::label::LabelVector;
use texvib_core::pipeline::{generate_from_image, generate_from_label, invert, Generated};

use super::{create_parent, emit, overlay};
use crate::error::{CliError, CliResult};
use crate::Command;

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Parses `0,0,1,…` into a label on the simplex.
fn parse_label(text: &str) -> CliResult<LabelVector> {
    let values = text
        .split(',')
        .map(|v| v.trim().parse::<f32>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| CliError::config(format!("label `{text}` is not a comma-separated list of numbers")))?;
    Ok(LabelVector::new(values)?)
}

/// A class given by name or by index.
fn class_label(class: &str, names: &[String]) -> CliResult<LabelVector> {
    let k = names
        .iter()
        .position(|n| n == class)
        .or_else(|| class.parse::<usize>().ok().filter(|&k| k < names.len()))
        .ok_or_else(|| {
            CliError::new(
                "class_list_mismatch",
                format!("no class `{class}`; known: {}", names.join(", ")),
            )
        })?;
    Ok(LabelVector::one_hot(k, names.len())?)
}

#[derive(Args, Debug)]
pub(crate) struct GenerateArgs {
    /// Generator checkpoint.
    #[arg(long)]
    ckpt: Option<PathBuf>,
    /// Label vector, e.g. `0,0,1,0,0,0,0,0,0`.
    #[arg(long, conflicts_with_all = ["class", "image"])]
    label: Option<String>,
    /// Class name or index (one-hot label).
    #[arg(long, conflicts_with = "image")]
    class: Option<String>,
    /// Texture image to encode into the label.
    #[arg(long, requires = "encoder")]
    image: Option<PathBuf>,
    /// Encoder checkpoint (with `--image`).
    #[arg(long)]
    encoder: Option<PathBuf>,
    /// Label encoding for images: `soft` or `hard`.
    #[arg(long)]
    encoding: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Griffin-Lim iterations.
    #[arg(long)]
    iters: Option<usize>,
    /// Output prefix; writes `<out>.spc1`, `<out>.wav` and `<out>.wav.json`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub(crate) struct GenerateSettings {
    ckpt: PathBuf,
    label: Option<String>,
    class: Option<String>,
    image: Option<PathBuf>,
    encoder: Option<PathBuf>,
    encoding: String,
    seed: u64,
    iters: usize,
    out: PathBuf,
}

impl Default for GenerateSettings {
    fn default() -> Self {
        Self {
            ckpt: PathBuf::from("gan/gan.tnn"),
            label: None,
            class: None,
            image: None,
            encoder: None,
            encoding: LabelEncodingRegistry::DEFAULT.into(),
            seed: 0,
            iters: DEFAULT_GRIFFIN_LIM_ITERS,
            out: PathBuf::from("generated"),
        }
    }
}

fn write_generated(g: &Generated, prefix: &Path) -> CliResult<()> {
    create_parent(prefix)?;
    let spec_path = with_suffix(prefix, ".spc1");
    let wav_path = with_suffix(prefix, ".wav");
    write_spec(&g.spectrogram, &spec_path)?;
    write_wav(&g.waveform, &wav_path, Some(&g.spectrogram.stats), Some(&g.spectrogram.config))?;
    println!("{} {}", spec_path.display(), wav_path.display());
    Ok(())
}

impl Command for GenerateArgs {
    const NAME: &'static str = "generate";
    type Settings = GenerateSettings;

    fn apply(&self, s: &mut GenerateSettings) {
        overlay!(self, s; ckpt => ckpt, label => label, class => class, image => image, encoder => encoder,
            encoding => encoding, seed => seed, iters => iters, out => out);
    }

    fn execute(s: &GenerateSettings) -> CliResult<()> {
        let gan = GanCheckpoint::load(&s.ckpt)?;
        let (label, generated) = match (&s.label, &s.class, &s.image) {
            (Some(text), None, None) => {
                let c = parse_label(text)?;
                let g = generate_from_label(&gan, &c, s.seed, s.iters)?;
                (c, g)
            }
            (None, Some(class), None) => {
                let c = class_label(class, &gan.class_names)?;
                let g = generate_from_label(&gan, &c, s.seed, s.iters)?;
                (c, g)
            }
            (None, None, Some(image)) => {
                let enc_path = s
                    .encoder
                    .as_ref()
                    .ok_or_else(|| CliError::config("generating from an image needs an encoder checkpoint"))?;
                let enc = EncoderCheckpoint::load(enc_path)?;
                let encoding = LabelEncodingRegistry::builtin().get(&s.encoding)?;
                generate_from_image(&enc, &gan, &TextureImage::load(image)?, encoding, s.seed, s.iters)?
            }
            _ => return Err(CliError::config("give exactly one of label, class or image")),
        };
        tracing::info!(label = ?label.values(), "generated");
        write_generated(&generated, &s.out)
    }
}

#[derive(Args, Debug)]
pub(crate) struct EncodeArgs {
    /// Encoder checkpoint.
    #[arg(long)]
    encoder: Option<PathBuf>,
    /// Image to encode; repeat for several.
    #[arg(long = "image")]
    images: Vec<PathBuf>,
    #[arg(long)]
    encoding: Option<String>,
    /// JSON output file (stdout without one).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub(crate) struct EncodeSettings {
    encoder: PathBuf,
    images: Vec<PathBuf>,
    encoding: String,
    out: Option<PathBuf>,
}

impl Default for EncodeSettings {
    fn default() -> Self {
        Self {
            encoder: PathBuf::from("encoder.tnn"),
            images: Vec::new(),
            encoding: LabelEncodingRegistry::DEFAULT.into(),
            out: None,
        }
    }
}

#[derive(Serialize)]
struct Encoded<'a> {
    image: &'a Path,
    label: &'a [f32],
    class: &'a str,
}

#[derive(Serialize)]
struct EncodeReport<'a> {
    classes: &'a [String],
    results: Vec<Encoded<'a>>,
}

impl Command for EncodeArgs {
    const NAME: &'static str = "encode";
    type Settings = EncodeSettings;

    fn apply(&self, s: &mut EncodeSettings) {
        overlay!(self, s; encoder => encoder, encoding => encoding, out => out);
        if !self.images.is_empty() {
            s.images = self.images.clone();
        }
    }

    fn execute(s: &EncodeSettings) -> CliResult<()> {
        if s.images.is_empty() {
            return Err(CliError::config("no images to encode"));
        }
        let enc = EncoderCheckpoint::load(&s.encoder)?;
        let encoding = LabelEncodingRegistry::builtin().get(&s.encoding)?;
        let images = s.images.iter().map(|p| TextureImage::load(p)).collect::<Result<Vec<_>, _>>()?;
        let labels = enc.encode_batch(&images.iter().collect::<Vec<_>>(), encoding)?;
        let report = EncodeReport {
            classes: &enc.class_names,
            results: s
                .images
                .iter()
                .zip(&labels)
                .map(|(image, label)| Encoded {
                    image,
                    label: label.values(),
                    class: &enc.class_names[label.argmax()],
                })
                .collect(),
        };
        emit(
            s.out.as_deref(),
            &serde_json::to_string_pretty(&report).expect("report serializes"),
        )
    }
}

#[derive(Args, Debug)]
pub(crate) struct InvertArgs {
    /// SPC1 spectrogram.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// WAV file to write (plus a `.json` sidecar).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub(crate) struct InvertSettings {
    pub(crate) spec: PathBuf,
    pub(crate) iters: usize,
    pub(crate) seed: u64,
    pub(crate) out: PathBuf,
}

impl Default for InvertSettings {
    fn default() -> Self {
        Self {
            spec: PathBuf::from("generated.spc1"),
            iters: DEFAULT_GRIFFIN_LIM_ITERS,
            seed: 0,
            out: PathBuf::from("inverted.wav"),
        }
    }
}

impl Command for InvertArgs {
    const NAME: &'static str = "invert";
    type Settings = InvertSettings;

    fn apply(&self, s: &mut InvertSettings) {
        overlay!(self, s; spec => spec, iters => iters, seed => seed, out => out);
    }

    fn execute(s: &InvertSettings) -> CliResult<()> {
        let spec = read_spec(&s.spec)?;
        let wave = invert(&spec, s.iters, s.seed)?;
        create_parent(&s.out)?;
        write_wav(&wave, &s.out, Some(&spec.stats), Some(&spec.config))?;
        println!("{}: {:.4} s at {} Hz", s.out.display(), wave.duration_s(), wave.sample_rate_hz);
        Ok(())
    }
}
