use std::sync::{Arc, OnceLock};

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use reqwest::multipart::{Form, Part};
use reqwest::{Client, StatusCode};
use serde_json::{json, Value};
use texvib_core::codec::{decode_wav, encode_wav, spec_from_bytes};
use texvib_core::dataset::{compute_norm_stats, synthesize_dataset, Dataset, SyntheticSpec};
use texvib_core::encoder::{build_encoder, EncoderArch, EncoderCheckpoint, LabelEncodingRegistry};
use texvib_core::gan::{train_gan, GanArch, GanCheckpoint, GanData, GanTrainConfig};
use texvib_core::label::LabelVector;
use texvib_core::pipeline::generate_from_label;
use texvib_core::CoreError;
use texvib_nn::Initializer;
use texvib_service::{router, AppState, GenerateResponse, ServiceConfig, API_SCHEMA};
use tokio::net::TcpListener;

const ITERS: usize = 3;

struct Fixture {
    dataset: Dataset,
    gan: Vec<u8>,
    encoder: Vec<u8>,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dataset = synthesize_dataset(&SyntheticSpec::standard(9, 2), 3).unwrap();
        let stats = compute_norm_stats(&dataset).unwrap();
        let data = GanData::from_dataset(&dataset, &stats).unwrap();
        let cfg = GanTrainConfig {
            steps: 0,
            batch_size: 4,
            seed: 1,
            ..GanTrainConfig::default()
        };
        let ckpt = train_gan(&data, &GanArch::desk(9, 50), &cfg, None, |_| {}).unwrap().checkpoint;
        let mut gan = Vec::new();
        ckpt.write(&mut gan).unwrap();
        let mut encoder = Vec::new();
        tiny_encoder(ckpt.class_names.clone()).write(&mut encoder).unwrap();
        Fixture { dataset, gan, encoder }
    })
}

fn tiny_encoder(class_names: Vec<String>) -> EncoderCheckpoint {
    let arch = EncoderArch {
        stem_channels: 4,
        block_channels: vec![4, 4, 4, 4],
        ..EncoderArch::standard(class_names.len())
    };
    EncoderCheckpoint {
        network: build_encoder(&arch, &mut Initializer::new(2)).unwrap(),
        arch,
        class_names,
        test_accuracy: None,
    }
}

fn gan() -> GanCheckpoint {
    GanCheckpoint::read(fixture().gan.as_slice()).unwrap()
}

fn encoder() -> EncoderCheckpoint {
    EncoderCheckpoint::read(fixture().encoder.as_slice()).unwrap()
}

fn config() -> ServiceConfig {
    ServiceConfig {
        max_upload_bytes: 256 << 10,
        ..ServiceConfig::default()
    }
}

async fn start(state: AppState) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move {
        axum::serve(listener, router(Arc::new(state))).await.unwrap();
    });
    format!("http://{addr}")
}

async fn server() -> String {
    start(AppState::new(gan(), Some(encoder()), &config()).unwrap()).await
}

fn one_hot(k: usize) -> Vec<f32> {
    LabelVector::one_hot(k, 9).unwrap().values().to_vec()
}

async fn post_generate(client: &Client, base: &str, body: Value) -> (StatusCode, Vec<u8>) {
    let resp = client.post(format!("{base}/generate")).json(&body).send().await.unwrap();
    (resp.status(), resp.bytes().await.unwrap().to_vec())
}

fn error_category(body: &[u8]) -> String {
    let v: Value = serde_json::from_slice(body).unwrap();
    assert_eq!(v["schema"], API_SCHEMA);
    v["error"]["category"].as_str().unwrap().to_string()
}

#[tokio::test]
async fn health_and_classes() {
    let base = server().await;
    let client = Client::new();
    let health: Value = client.get(format!("{base}/health")).send().await.unwrap().json().await.unwrap();
    assert_eq!(health["schema"], API_SCHEMA);
    assert_eq!(health["status"], "ok");
    assert_eq!(health["checkpoint_step"], 0);
    let classes: Value = client.get(format!("{base}/classes")).send().await.unwrap().json().await.unwrap();
    let names: Vec<&str> = classes["classes"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert_eq!(names.len(), 9);
    for expected in ["Carpet", "Fine Foam", "Squared Aluminum Mesh", "Bamboo", "Card board"] {
        assert!(names.contains(&expected), "{expected} missing from {names:?}");
    }
    let resp = client.get(format!("{base}/nope")).send().await.unwrap();
    assert_eq!(resp.status(), StatusCode::NOT_FOUND);
    assert_eq!(error_category(&resp.bytes().await.unwrap()), "not_found");
}

#[tokio::test]
async fn generate_is_byte_identical_and_matches_the_library() {
    let base = server().await;
    let client = Client::new();
    let body = json!({"label": one_hot(0), "seed": 5, "iters": ITERS});
    let (s1, a) = post_generate(&client, &base, body.clone()).await;
    let (s2, b) = post_generate(&client, &base, body).await;
    assert_eq!((s1, s2), (StatusCode::OK, StatusCode::OK));
    assert_eq!(a, b);

    let resp: GenerateResponse = serde_json::from_slice(&a).unwrap();
    assert_eq!(resp.schema, API_SCHEMA);
    assert_eq!(resp.label_echo, one_hot(0));
    let expected = generate_from_label(&gan(), &LabelVector::one_hot(0, 9).unwrap(), 5, ITERS).unwrap();
    let spec = spec_from_bytes(&STANDARD.decode(&resp.spectrogram).unwrap()).unwrap();
    assert_eq!(spec, expected.spectrogram);
    let (wav, scale) = encode_wav(&expected.waveform).unwrap();
    assert_eq!(STANDARD.decode(&resp.wav).unwrap(), wav);
    assert_eq!(resp.wav_scale_factor, scale);
    let decoded = decode_wav(&wav, scale).unwrap();
    assert_eq!(decoded.samples.len(), expected.waveform.samples.len());

    let (_, other_seed) = post_generate(&client, &base, json!({"label": one_hot(0), "seed": 6, "iters": ITERS})).await;
    assert_ne!(other_seed, a);
}

#[tokio::test]
async fn labels_off_the_simplex_are_rejected() {
    let base = server().await;
    let client = Client::new();
    let mut over = one_hot(2);
    over[3] = 0.2;
    let (status, body) = post_generate(&client, &base, json!({"label": over, "seed": 1, "iters": ITERS})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(error_category(&body), "label_not_simplex");

    let mut negative = vec![0.0f32; 9];
    negative[0] = 1.01;
    negative[1] = -0.01;
    let (status, body) = post_generate(&client, &base, json!({"label": negative, "seed": 1, "iters": ITERS})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(error_category(&body), "label_not_simplex");

    let (status, body) = post_generate(&client, &base, json!({"label": [0.5, 0.5], "seed": 1})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(error_category(&body), "dimension");

    let (status, body) = post_generate(&client, &base, json!({"label": one_hot(0), "seed": 1, "iters": 501})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(error_category(&body), "range");

    let (status, body) = post_generate(&client, &base, json!({"label": "nine floats", "seed": 1})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(error_category(&body), "bad_request");
}

#[tokio::test]
async fn labels_within_tolerance_are_renormalized() {
    let base = server().await;
    let client = Client::new();
    let mut near = vec![0.0f32; 9];
    near[4] = 0.6004;
    near[7] = 0.4;
    let (status, body) = post_generate(&client, &base, json!({"label": near, "seed": 2, "iters": ITERS})).await;
    assert_eq!(status, StatusCode::OK);
    let resp: GenerateResponse = serde_json::from_slice(&body).unwrap();
    let sum: f64 = resp.label_echo.iter().map(|&v| v as f64).sum();
    assert!((sum - 1.0).abs() < 1e-6, "{sum}");
    assert!((resp.label_echo[4] - 0.6004 / 1.0004).abs() < 1e-6);
}

#[tokio::test]
async fn class_list_handshake() {
    let base = server().await;
    let client = Client::new();
    let names = gan().class_names;
    let (status, _) = post_generate(
        &client,
        &base,
        json!({"label": one_hot(1), "seed": 1, "iters": ITERS, "classes": names}),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let mut swapped = names.clone();
    swapped.swap(0, 1);
    let (status, body) = post_generate(
        &client,
        &base,
        json!({"label": one_hot(1), "seed": 1, "iters": ITERS, "classes": swapped}),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(error_category(&body), "class_list_mismatch");
}

#[test]
fn mismatched_checkpoints_refuse_to_start() {
    let mut names = gan().class_names;
    names.reverse();
    let err = AppState::new(gan(), Some(tiny_encoder(names)), &config()).err().unwrap();
    assert!(matches!(err, CoreError::ClassMismatch(_)), "{err}");
    assert_eq!(err.category(), "class_list_mismatch");

    let dir = tempfile_dir();
    let cfg = ServiceConfig {
        gan: dir.join("missing.tnn"),
        ..config()
    };
    let rt = tokio::runtime::Runtime::new().unwrap();
    let err = rt.block_on(texvib_service::serve(cfg, async {})).unwrap_err();
    assert_eq!(err.category(), "io");
}

fn tempfile_dir() -> std::path::PathBuf {
    std::env::temp_dir().join(format!("texvib-service-{}", std::process::id()))
}

#[tokio::test]
async fn concurrent_requests_match_serial_ones() {
    let base = server().await;
    let client = Client::new();
    let bodies: Vec<Value> = (0..6)
        .map(|i| json!({"label": one_hot(i % 9), "seed": 100 + i as u64, "iters": ITERS}))
        .collect();
    let mut serial = Vec::new();
    for b in &bodies {
        serial.push(post_generate(&client, &base, b.clone()).await.1);
    }
    let handles: Vec<_> = bodies
        .into_iter()
        .map(|b| {
            let client = client.clone();
            let base = base.clone();
            tokio::spawn(async move { post_generate(&client, &base, b).await.1 })
        })
        .collect();
    for (h, expected) in handles.into_iter().zip(&serial) {
        assert_eq!(&h.await.unwrap(), expected);
    }
}

fn image_form(bytes: Vec<u8>, seed: u64) -> Form {
    Form::new()
        .part("image", Part::bytes(bytes).file_name("texture.png").mime_str("image/png").unwrap())
        .text("seed", seed.to_string())
        .text("iters", ITERS.to_string())
}

#[tokio::test]
async fn image_upload_composes_encoder_and_generator() {
    let base = server().await;
    let client = Client::new();
    let img = &fixture().dataset.pairs[0].image;
    let resp = client
        .post(format!("{base}/generate-from-image"))
        .multipart(image_form(img.encode_png(), 9))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    let v: Value = resp.json().await.unwrap();
    let label: Vec<f32> = serde_json::from_value(v["label"].clone()).unwrap();
    let soft = LabelEncodingRegistry::builtin().get("soft").unwrap();
    let decoded = texvib_core::dataset::TextureImage::decode(&img.encode_png()).unwrap();
    let expected = encoder().encode(&decoded, soft).unwrap();
    assert_eq!(label, expected.values());
    let g = generate_from_label(&gan(), &expected, 9, ITERS).unwrap();
    let spec = spec_from_bytes(&STANDARD.decode(v["spectrogram"].as_str().unwrap()).unwrap()).unwrap();
    assert_eq!(spec, g.spectrogram);
}

#[tokio::test]
async fn bad_oversized_and_unserved_uploads() {
    let base = server().await;
    let client = Client::new();
    let resp = client
        .post(format!("{base}/generate-from-image"))
        .multipart(image_form(b"not an image".to_vec(), 1))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::BAD_REQUEST);
    assert_eq!(error_category(&resp.bytes().await.unwrap()), "format");

    let resp = client
        .post(format!("{base}/generate-from-image"))
        .multipart(image_form(vec![7u8; 512 << 10], 1))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::PAYLOAD_TOO_LARGE);

    let no_encoder = start(AppState::new(gan(), None, &config()).unwrap()).await;
    let png = fixture().dataset.pairs[0].image.encode_png();
    let resp = client
        .post(format!("{no_encoder}/generate-from-image"))
        .multipart(image_form(png, 1))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::SERVICE_UNAVAILABLE);
}

#[tokio::test]
async fn cors_preflight_is_answered_when_configured() {
    let cfg = ServiceConfig {
        cors_allow_origin: Some("http://localhost:5173".into()),
        ..config()
    };
    let base = start(AppState::new(gan(), None, &cfg).unwrap()).await;
    let resp = Client::new()
        .request(reqwest::Method::OPTIONS, format!("{base}/generate"))
        .header("origin", "http://localhost:5173")
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert_eq!(resp.headers()["access-control-allow-origin"], "http://localhost:5173");
}
