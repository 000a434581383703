//! End-to-end acceptance run: one PASS/FAIL line per criterion.
//!
//! Trains the encoder and generator at desk scale through the `texvib`
//! binary with the pinned configuration in `configs/desk.toml`, so a full
//! run takes most of an hour on one core.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use texvib_core::codec::{griffin_lim, istft, stft, CodecConfig, Magnitude, Waveform};
use texvib_core::dataset::{ingest, Manifest};
use texvib_core::encoder::{EncoderCheckpoint, LabelEncodingRegistry};
use texvib_core::gan::GanCheckpoint;
use texvib_core::pipeline::{generate_from_image, generate_from_label, EvalReport};
use texvib_nn::gradcheck::{standard_suite, COMPOSITE_TOLERANCE, LAYER_TOLERANCE};
use texvib_service::{router, AppState, ServiceConfig};

const BIN: &str = env!("CARGO_BIN_EXE_texvib");
const PINNED: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/desk.toml");

const ROUND_TRIP_TOLERANCE: f64 = 1e-6;
const ROUND_TRIP_BUDGET: Duration = Duration::from_secs(1);
const GL_MONOTONE_TOLERANCE: f64 = 1e-9;
const GL_BUDGET: Duration = Duration::from_secs(30);
const GRADIENT_BUDGET: Duration = Duration::from_secs(120);
const ENCODER_ACCURACY: f64 = 0.95;
const ENCODER_BUDGET: Duration = Duration::from_secs(15 * 60);
const GAN_AUX_ACCURACY: f64 = 0.80;
const GAN_SIGNATURE_MATCH: f64 = 0.80;
const GAN_SEPARATION: f64 = 1.5;
const GAN_BUDGET: Duration = Duration::from_secs(45 * 60);
const CHANCE_BAND: f64 = 0.15;
const E2E_IMAGES: usize = 20;
const E2E_SIGNATURE_MATCH: f64 = 0.80;

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }

    fn fail(detail: impl Into<String>) -> Self {
        Self::new(false, detail)
    }
}

fn texvib(cwd: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(cwd)
        .env("TEXVIB_LOG", "warn")
        .output()
        .expect("texvib runs")
}

/// Runs `texvib`, turning a nonzero exit into an error carrying stderr.
fn texvib_ok(cwd: &Path, args: &[&str]) -> Result<Output, String> {
    let out = texvib(cwd, args);
    if out.status.success() {
        Ok(out)
    } else {
        Err(format!(
            "`texvib {}` failed: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr).trim()
        ))
    }
}

fn secs(d: Duration) -> String {
    format!("{:.1} s", d.as_secs_f64())
}

fn relative_interior_error(a: &[f64], b: &[f64], margin: usize) -> f64 {
    let r = margin..a.len() - margin;
    let num: f64 = a[r.clone()].iter().zip(&b[r.clone()]).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = a[r].iter().map(|x| x * x).sum();
    (num / den).sqrt()
}

fn stft_round_trip() -> Verdict {
    let cfg = CodecConfig::default();
    let start = Instant::now();
    let mut worst = 0.0f64;
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Waveform::new((0..8192).map(|_| rng.random_range(-1.0..1.0)).collect(), cfg.sample_rate_hz).unwrap();
        let y = match stft(&x, &cfg).and_then(|s| istft(&s, &cfg)) {
            Ok(y) => y,
            Err(e) => return Verdict::fail(e.to_string()),
        };
        if y.samples.len() != x.samples.len() {
            return Verdict::fail(format!("length {} → {}", x.samples.len(), y.samples.len()));
        }
        worst = worst.max(relative_interior_error(&x.samples, &y.samples, cfg.fft_size));
    }
    let t = start.elapsed();
    Verdict::new(
        worst < ROUND_TRIP_TOLERANCE && t < ROUND_TRIP_BUDGET,
        format!("max interior relative error {worst:.2e} over 10 signals of 8192 samples in {}", secs(t)),
    )
}

fn griffin_lim_checks() -> Verdict {
    let cfg = CodecConfig::default();
    let start = Instant::now();
    let mut worst_rise = f64::NEG_INFINITY;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let frames = 32;
        let mag = Magnitude {
            bins: cfg.bins(),
            frames,
            data: (0..cfg.bins() * frames).map(|_| rng.random_range(0.0..1.0)).collect(),
        };
        let out = match griffin_lim(&mag, &cfg, 60, seed) {
            Ok(o) => o,
            Err(e) => return Verdict::fail(e.to_string()),
        };
        for w in out.errors.windows(2) {
            worst_rise = worst_rise.max(w[1] - w[0]);
        }
    }
    let n = cfg.samples_for(128);
    let tone: Vec<f64> = (0..n)
        .map(|i| (2.0 * std::f64::consts::PI * 200.0 * i as f64 / cfg.sample_rate_hz as f64).sin())
        .collect();
    let tone = Waveform::new(tone, cfg.sample_rate_hz).unwrap();
    let peak_bin = stft(&tone, &cfg)
        .and_then(|s| griffin_lim(&s.magnitude(), &cfg, 60, 3))
        .and_then(|out| stft(&out.wave, &cfg))
        .map(|s| {
            let m = s.magnitude();
            (0..m.bins)
                .map(|b| (b, (0..m.frames).map(|f| m.at(b, f)).sum::<f64>()))
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap()
                .0
        });
    let t = start.elapsed();
    let peak_bin = match peak_bin {
        Ok(b) => b,
        Err(e) => return Verdict::fail(e.to_string()),
    };
    let target = (200.0 / cfg.bin_hz()).round() as i64;
    let off = (peak_bin as i64 - target).abs();
    Verdict::new(
        worst_rise <= GL_MONOTONE_TOLERANCE && off <= 1 && t < GL_BUDGET,
        format!(
            "largest per-iteration rise {worst_rise:.2e} on 20 magnitudes; 200 Hz peak in bin {peak_bin} (target {target}); {}",
            secs(t)
        ),
    )
}

fn gradient_suite() -> Verdict {
    let start = Instant::now();
    let suite = match standard_suite(0) {
        Ok(s) => s,
        Err(e) => return Verdict::fail(e.to_string()),
    };
    let t = start.elapsed();
    let failed: Vec<&str> = suite.iter().filter(|(_, r)| !r.passed).map(|(n, _)| n.as_str()).collect();
    let pinned = suite
        .iter()
        .all(|(_, r)| r.tolerance == LAYER_TOLERANCE || r.tolerance == COMPOSITE_TOLERANCE);
    let worst = suite
        .iter()
        .map(|(_, r)| r.max_rel_error / r.tolerance)
        .fold(0.0f64, f64::max);
    Verdict::new(
        failed.is_empty() && pinned && LAYER_TOLERANCE == 1e-4 && COMPOSITE_TOLERANCE == 1e-3 && t < GRADIENT_BUDGET,
        format!(
            "{} checks, failures [{}], worst error/tolerance {worst:.3}, {}",
            suite.len(),
            failed.join(", "),
            secs(t)
        ),
    )
}

struct Workspace {
    root: PathBuf,
}

impl Workspace {
    fn data(&self) -> PathBuf {
        self.root.join("data")
    }
    fn encoder(&self) -> PathBuf {
        self.root.join("encoder.tnn")
    }
    fn gan(&self) -> PathBuf {
        self.root.join("gan").join("gan.tnn")
    }
}

fn encoder_training(ws: &Workspace) -> Verdict {
    let run = || -> Result<Verdict, String> {
        let start = Instant::now();
        texvib_ok(&ws.root, &["--config", PINNED, "synth-dataset", "--out", "data"])?;
        texvib_ok(&ws.root, &["--config", PINNED, "train-encoder", "--data", "data", "--out", "encoder.tnn"])?;
        let t = start.elapsed();
        let ckpt = EncoderCheckpoint::load(&ws.encoder()).map_err(|e| e.to_string())?;
        let acc = ckpt.test_accuracy.map(f64::from).unwrap_or(f64::NAN);
        let manifest = Manifest::load(&ws.data()).map_err(|e| e.to_string())?;
        let split = manifest.split.ok_or("no stored split")?;
        let layout_ok = manifest.classes.len() == 9
            && split.train.len() == 9 * 32
            && split.test.len() == 9 * 8
            && (split.test_fraction - 0.2).abs() < 1e-12;
        Ok(Verdict::new(
            acc >= ENCODER_ACCURACY && layout_ok && t <= ENCODER_BUDGET,
            format!(
                "held-out accuracy {acc:.4} on {} images ({} train), dataset + training {}",
                split.test.len(),
                split.train.len(),
                secs(t)
            ),
        ))
    };
    run().unwrap_or_else(Verdict::fail)
}

fn eval_report(cwd: &Path, gan: &str, extra: &[&str]) -> Result<EvalReport, String> {
    let mut args = vec!["--config", PINNED, "eval", "--gan", gan, "--data", "data"];
    args.extend_from_slice(extra);
    let out = texvib_ok(cwd, &args)?;
    EvalReport::from_json(&String::from_utf8_lossy(&out.stdout)).map_err(|e| e.to_string())
}

fn gan_training(ws: &Workspace) -> Verdict {
    let run = || -> Result<Verdict, String> {
        let start = Instant::now();
        texvib_ok(&ws.root, &["--config", PINNED, "train-gan", "--data", "data", "--out", "gan"])?;
        let t = start.elapsed();
        let trained = eval_report(&ws.root, "gan/gan.tnn", &[])?;
        texvib_ok(
            &ws.root,
            &["--config", PINNED, "train-gan", "--data", "data", "--out", "gan-untrained", "--steps", "0"],
        )?;
        let untrained = eval_report(&ws.root, "gan-untrained/gan.tnn", &[])?;
        let chance = 1.0 / 9.0;
        let control = (untrained.signature_match_rate - chance).abs() <= CHANCE_BAND;
        Ok(Verdict::new(
            trained.aux_accuracy >= GAN_AUX_ACCURACY
                && trained.signature_match_rate >= GAN_SIGNATURE_MATCH
                && trained.separation_score > GAN_SEPARATION
                && t <= GAN_BUDGET
                && control,
            format!(
                "aux accuracy {:.3}, signature match {:.3}, separation {:.3}, training {}; untrained control match {:.3} (chance {chance:.3})",
                trained.aux_accuracy,
                trained.signature_match_rate,
                trained.separation_score,
                secs(t),
                untrained.signature_match_rate
            ),
        ))
    };
    run().unwrap_or_else(Verdict::fail)
}

fn end_to_end(ws: &Workspace) -> Verdict {
    let run = || -> Result<Verdict, String> {
        let gan = GanCheckpoint::load(&ws.gan()).map_err(|e| e.to_string())?;
        let enc = EncoderCheckpoint::load(&ws.encoder()).map_err(|e| e.to_string())?;
        let soft = LabelEncodingRegistry::builtin().get("soft").map_err(|e| e.to_string())?;
        let manifest = Manifest::load(&ws.data()).map_err(|e| e.to_string())?;
        let dataset = ingest(&ws.data(), &manifest).map_err(|e| e.to_string())?;
        let split = manifest
            .resolve_split(&dataset)
            .map_err(|e| e.to_string())?
            .ok_or("no stored split")?;
        let mut identical = 0;
        for (n, &i) in split.test.iter().take(E2E_IMAGES).enumerate() {
            let img = &dataset.pairs[i].image;
            let seed = 500 + n as u64;
            let (c, via_image) = generate_from_image(&enc, &gan, img, soft, seed, 60).map_err(|e| e.to_string())?;
            let direct = enc
                .encode(img, soft)
                .and_then(|c2| generate_from_label(&gan, &c2, seed, 60).map(|g| (c2, g)))
                .map_err(|e| e.to_string())?;
            identical += (c == direct.0 && via_image == direct.1) as usize;
        }
        let report = eval_report(&ws.root, "gan/gan.tnn", &["--encoder", "encoder.tnn"])?;
        let e2e = report.e2e_signature_match_rate.unwrap_or(f64::NAN);
        Ok(Verdict::new(
            identical == E2E_IMAGES && e2e >= E2E_SIGNATURE_MATCH,
            format!(
                "{identical}/{E2E_IMAGES} image generations bit-identical to encode + label generation; \
                 image-path signature match {e2e:.3} on {} held-out images",
                split.test.len()
            ),
        ))
    };
    run().unwrap_or_else(Verdict::fail)
}

/// Every file under `dir`, relative path → contents, in sorted order.
fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

const DETERMINISM_STEPS: [(&str, &[&str]); 11] = [
    (
        "synth-dataset",
        &["synth-dataset", "--classes", "3", "--per-class", "4", "--seed", "5", "--out", "data"],
    ),
    ("ingest", &["ingest", "--data", "data", "--resplit", "--test-fraction", "0.25", "--seed", "2"]),
    (
        "train-encoder",
        &["train-encoder", "--data", "data", "--out", "enc.tnn", "--epochs", "1", "--batch-size", "4", "--seed", "3", "--metrics", "enc.jsonl"],
    ),
    (
        "train-gan",
        &["train-gan", "--data", "data", "--out", "gan", "--steps", "2", "--batch-size", "4", "--checkpoint-every", "1", "--seed", "4"],
    ),
    ("generate", &["generate", "--ckpt", "gan/gan.tnn", "--label", "0,0,1", "--seed", "3", "--iters", "8", "--out", "g/label"]),
    (
        "generate",
        &["generate", "--ckpt", "gan/gan.tnn", "--image", "data/stone_tile/images/0000.png", "--encoder", "enc.tnn", "--seed", "3", "--iters", "8", "--out", "g/image"],
    ),
    ("encode", &["encode", "--encoder", "enc.tnn", "--image", "data/stone_tile/images/0000.png", "--image", "data/glossy_plastic/images/0001.png"]),
    ("invert", &["invert", "--spec", "g/label.spc1", "--iters", "8", "--seed", "1", "--out", "inv.wav"]),
    ("eval", &["eval", "--gan", "gan/gan.tnn", "--encoder", "enc.tnn", "--data", "data", "--samples-per-class", "2", "--seed", "6", "--out", "eval.json"]),
    ("gradcheck", &["gradcheck", "--seed", "1", "--out", "grad.jsonl"]),
    ("serve", &[]),
];

/// One `/generate` body from a `texvib serve` process started in `cwd`.
fn serve_once(cwd: &Path, port: u16) -> Result<Vec<u8>, String> {
    let bind = format!("127.0.0.1:{port}");
    let mut child = Command::new(BIN)
        .args(["serve", "--gan", "gan/gan.tnn", "--encoder", "enc.tnn", "--bind", &bind])
        .current_dir(cwd)
        .env("TEXVIB_LOG", "warn")
        .spawn()
        .map_err(|e| e.to_string())?;
    let rt = tokio::runtime::Runtime::new().unwrap();
    let body = rt.block_on(async {
        let client = reqwest::Client::new();
        let url = format!("http://{bind}/generate");
        for _ in 0..200 {
            let req = client.post(&url).json(&json!({"label": [0.2, 0.3, 0.5], "seed": 9, "iters": 8}));
            if let Ok(resp) = req.send().await {
                return resp.bytes().await.map(|b| b.to_vec()).map_err(|e| e.to_string());
            }
            tokio::time::sleep(Duration::from_millis(100)).await;
        }
        Err("server did not come up".to_string())
    });
    let _ = child.kill();
    let _ = child.wait();
    body
}

fn free_port() -> u16 {
    std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

fn cli_determinism(ws: &Workspace) -> Verdict {
    let dirs = [ws.root.join("det-a"), ws.root.join("det-b")];
    let mut differing = Vec::new();
    for (name, args) in DETERMINISM_STEPS {
        let mut outputs = Vec::new();
        for dir in &dirs {
            std::fs::create_dir_all(dir).unwrap();
            if name == "serve" {
                match serve_once(dir, free_port()) {
                    Ok(body) => outputs.push(body),
                    Err(e) => return Verdict::fail(format!("serve: {e}")),
                }
                continue;
            }
            match texvib_ok(dir, args) {
                Ok(out) => outputs.push(out.stdout),
                Err(e) => return Verdict::fail(e),
            }
        }
        if outputs[0] != outputs[1] || snapshot(&dirs[0]) != snapshot(&dirs[1]) {
            differing.push(name);
        }
    }
    let files = snapshot(&dirs[0]).len();
    Verdict::new(
        differing.is_empty(),
        format!(
            "{} invocations over all 10 subcommands run twice; {files} artifact files compared; differing: [{}]",
            DETERMINISM_STEPS.len(),
            differing.join(", ")
        ),
    )
}

fn service_contract(ws: &Workspace) -> Verdict {
    let run = || -> Result<Verdict, String> {
        let gan = GanCheckpoint::load(&ws.gan()).map_err(|e| e.to_string())?;
        let enc = EncoderCheckpoint::load(&ws.encoder()).map_err(|e| e.to_string())?;
        let names = gan.class_names.clone();
        let cfg = ServiceConfig::default();

        let mut reversed = EncoderCheckpoint::load(&ws.encoder()).map_err(|e| e.to_string())?;
        reversed.class_names.reverse();
        let same_gan = GanCheckpoint::load(&ws.gan()).map_err(|e| e.to_string())?;
        let refused = matches!(
            AppState::new(same_gan, Some(reversed), &cfg),
            Err(e) if e.category() == "class_list_mismatch"
        );

        let state = AppState::new(gan, Some(enc), &cfg).map_err(|e| e.to_string())?;
        let rt = tokio::runtime::Runtime::new().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            let base = format!("http://{}", listener.local_addr().unwrap());
            tokio::spawn(async move { axum_serve(listener, state).await });
            let client = reqwest::Client::new();
            let post = |body: Value| {
                let client = client.clone();
                let url = format!("{base}/generate");
                async move {
                    let resp = client.post(url).json(&body).send().await.unwrap();
                    let status = resp.status().as_u16();
                    (status, resp.bytes().await.unwrap().to_vec())
                }
            };
            let category = |body: &[u8]| -> String {
                serde_json::from_slice::<Value>(body).map_or(String::new(), |v| {
                    v["error"]["category"].as_str().unwrap_or_default().to_string()
                })
            };
            let mut one_hot = vec![0.0f32; 9];
            one_hot[0] = 1.0;
            let a = post(json!({"label": one_hot, "seed": 5})).await;
            let b = post(json!({"label": one_hot, "seed": 5})).await;
            let deterministic = a.0 == 200 && a == b;

            let mut over = one_hot.clone();
            over[1] = 0.2;
            let c = post(json!({"label": over, "seed": 5})).await;
            let simplex = c.0 == 400 && category(&c.1) == "label_not_simplex";

            let mut swapped = names.clone();
            swapped.swap(0, 1);
            let d = post(json!({"label": one_hot, "seed": 5, "classes": swapped})).await;
            let handshake = d.0 == 422 && category(&d.1) == "class_list_mismatch";

            Ok(Verdict::new(
                deterministic && simplex && handshake && refused,
                format!(
                    "/generate repeat identical: {deterministic}; sum 1.2 → {} {}; swapped classes → {} {}; \
                     mismatched checkpoints refused at startup: {refused}",
                    c.0,
                    category(&c.1),
                    d.0,
                    category(&d.1)
                ),
            ))
        })
    };
    run().unwrap_or_else(Verdict::fail)
}

async fn axum_serve(listener: tokio::net::TcpListener, state: AppState) {
    let app = router(Arc::new(state));
    let _ = axum::serve(listener, app).await;
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let ws = Workspace {
        root: tmp.path().to_path_buf(),
    };
    type Criterion = (&'static str, Box<dyn Fn(&Workspace) -> Verdict>);
    let criteria: Vec<Criterion> = vec![
        ("STFT/ISTFT round trip", Box::new(|_| stft_round_trip())),
        ("Griffin-Lim monotone + 200 Hz peak", Box::new(|_| griffin_lim_checks())),
        ("gradient suite", Box::new(|_| gradient_suite())),
        ("encoder held-out accuracy", Box::new(encoder_training)),
        ("GAN conditioning", Box::new(gan_training)),
        ("end-to-end compositionality", Box::new(end_to_end)),
        ("CLI determinism", Box::new(cli_determinism)),
        ("service contract", Box::new(service_contract)),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let v = check(&ws);
        failures += !v.pass as usize;
        println!(
            "criterion {} {} — {name}: {}",
            i + 1,
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
