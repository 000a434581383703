use std::sync::Arc;

use axum::extract::multipart::{Multipart, MultipartError, MultipartRejection};
use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};
use texvib_core::codec::{encode_wav, spec_to_bytes};
use texvib_core::dataset::TextureImage;
use texvib_core::label::{check_simplex, LabelVector};
use texvib_core::pipeline::{generate_from_image as pipeline_from_image, generate_from_label, Generated};
use texvib_core::CoreError;

use crate::AppState;

/// Version tag carried by every response body.
pub const API_SCHEMA: &str = "api-v1";

/// How far a submitted label may stray from the simplex before it is
/// rejected; accepted labels are renormalized exactly.
pub const LABEL_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub schema: String,
    pub status: String,
    pub checkpoint_step: u64,
    pub encoder_loaded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassesResponse {
    pub schema: String,
    pub classes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateRequest {
    pub label: Vec<f32>,
    pub seed: u64,
    #[serde(default)]
    pub iters: Option<usize>,
    /// Class list the client was built against; a mismatch answers 422.
    #[serde(default)]
    pub classes: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateResponse {
    pub schema: String,
    /// The label actually fed to the generator (renormalized).
    pub label_echo: Vec<f32>,
    pub seed: u64,
    pub iters: usize,
    pub sample_rate_hz: u32,
    /// Base64 SPC1 spectrogram.
    pub spectrogram: String,
    /// Base64 16-bit PCM WAV, peak-normalized.
    pub wav: String,
    /// Physical value of a full-scale WAV sample.
    pub wav_scale_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageResponse {
    pub schema: String,
    /// Encoder output used as the generator label.
    pub label: Vec<f32>,
    pub seed: u64,
    pub iters: usize,
    pub sample_rate_hz: u32,
    pub spectrogram: String,
    pub wav: String,
    pub wav_scale_factor: f64,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub category: String,
    pub detail: String,
}

impl ApiError {
    fn new(status: StatusCode, category: &str, detail: impl Into<String>) -> Self {
        Self {
            status,
            category: category.into(),
            detail: detail.into(),
        }
    }
}

impl From<CoreError> for ApiError {
    fn from(e: CoreError) -> Self {
        let status = match e.category() {
            "label_not_simplex" | "dimension" | "range" | "format" => StatusCode::BAD_REQUEST,
            "class_list_mismatch" => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.category(), e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        if r.status() == StatusCode::PAYLOAD_TOO_LARGE {
            Self::new(StatusCode::PAYLOAD_TOO_LARGE, "payload_too_large", r.body_text())
        } else {
            Self::new(StatusCode::BAD_REQUEST, "bad_request", r.body_text())
        }
    }
}

impl From<MultipartRejection> for ApiError {
    fn from(r: MultipartRejection) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", r.body_text())
    }
}

impl From<MultipartError> for ApiError {
    fn from(e: MultipartError) -> Self {
        if e.status() == StatusCode::PAYLOAD_TOO_LARGE {
            Self::new(StatusCode::PAYLOAD_TOO_LARGE, "payload_too_large", e.body_text())
        } else {
            Self::new(StatusCode::BAD_REQUEST, "bad_request", e.body_text())
        }
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    schema: &'static str,
    error: ErrorDetail<'a>,
}

#[derive(Serialize)]
struct ErrorDetail<'a> {
    category: &'a str,
    detail: &'a str,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            schema: API_SCHEMA,
            error: ErrorDetail {
                category: &self.category,
                detail: &self.detail,
            },
        };
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

pub async fn health(State(s): State<Arc<AppState>>) -> Json<HealthResponse> {
    Json(HealthResponse {
        schema: API_SCHEMA.into(),
        status: "ok".into(),
        checkpoint_step: s.gan.step,
        encoder_loaded: s.encoder.is_some(),
    })
}

pub async fn classes(State(s): State<Arc<AppState>>) -> Json<ClassesResponse> {
    Json(ClassesResponse {
        schema: API_SCHEMA.into(),
        classes: s.gan.class_names.clone(),
    })
}

pub async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}

fn check_classes(s: &AppState, claimed: Option<&[String]>) -> Result<(), ApiError> {
    match claimed {
        Some(c) if c != s.gan.class_names.as_slice() => Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "class_list_mismatch",
            format!("client classes [{}] differ from server classes [{}]", c.join(", "), s.gan.class_names.join(", ")),
        )),
        _ => Ok(()),
    }
}

fn resolve_iters(s: &AppState, iters: Option<usize>) -> Result<usize, ApiError> {
    let iters = iters.unwrap_or(s.limits.griffin_lim_iters);
    if iters > s.limits.max_griffin_lim_iters {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "range",
            format!("at most {} Griffin-Lim iterations", s.limits.max_griffin_lim_iters),
        ));
    }
    Ok(iters)
}

/// Accepts labels within [`LABEL_TOLERANCE`] of the simplex and projects
/// them onto it.
fn normalized_label(values: &[f32], dim: usize) -> Result<LabelVector, ApiError> {
    if values.len() != dim {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "dimension",
            format!("label has {} entries, expected {dim}", values.len()),
        ));
    }
    check_simplex(values, LABEL_TOLERANCE)?;
    let clipped: Vec<f64> = values.iter().map(|&v| (v as f64).max(0.0)).collect();
    let sum: f64 = clipped.iter().sum();
    Ok(LabelVector::new(clipped.iter().map(|v| (v / sum) as f32).collect())?)
}

struct Payload {
    sample_rate_hz: u32,
    spectrogram: String,
    wav: String,
    wav_scale_factor: f64,
}

fn payload(g: &Generated) -> Result<Payload, CoreError> {
    let (wav, peak) = encode_wav(&g.waveform)?;
    Ok(Payload {
        sample_rate_hz: g.waveform.sample_rate_hz,
        spectrogram: STANDARD.encode(spec_to_bytes(&g.spectrogram)),
        wav: STANDARD.encode(wav),
        wav_scale_factor: peak,
    })
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
}

pub async fn generate(
    State(s): State<Arc<AppState>>,
    body: Result<Json<GenerateRequest>, JsonRejection>,
) -> ApiResult<GenerateResponse> {
    let Json(req) = body?;
    check_classes(&s, req.classes.as_deref())?;
    let iters = resolve_iters(&s, req.iters)?;
    let label = normalized_label(&req.label, s.gan.label_dim())?;
    let seed = req.seed;
    let resp = blocking(move || {
        let g = generate_from_label(&s.gan, &label, seed, iters)?;
        let p = payload(&g)?;
        Ok(GenerateResponse {
            schema: API_SCHEMA.into(),
            label_echo: label.values().to_vec(),
            seed,
            iters,
            sample_rate_hz: p.sample_rate_hz,
            spectrogram: p.spectrogram,
            wav: p.wav,
            wav_scale_factor: p.wav_scale_factor,
        })
    })
    .await?;
    Ok(Json(resp))
}

fn text_field<T: std::str::FromStr>(name: &str, text: &str) -> Result<T, ApiError> {
    text.trim()
        .parse()
        .map_err(|_| ApiError::new(StatusCode::BAD_REQUEST, "bad_request", format!("field `{name}` is malformed")))
}

/// Multipart fields: `image` (PNG or BMP bytes, required), `seed`, `iters`,
/// and `classes` (JSON array of names).
pub async fn generate_from_image(
    State(s): State<Arc<AppState>>,
    form: Result<Multipart, MultipartRejection>,
) -> ApiResult<ImageResponse> {
    let mut form = form?;
    let (mut image, mut seed, mut iters, mut classes) = (None, 0u64, None, None);
    while let Some(field) = form.next_field().await? {
        let name = field.name().unwrap_or_default().to_string();
        match name.as_str() {
            "image" => image = Some(field.bytes().await?),
            "seed" => seed = text_field("seed", &field.text().await?)?,
            "iters" => iters = Some(text_field("iters", &field.text().await?)?),
            "classes" => {
                let text = field.text().await?;
                let list: Vec<String> = serde_json::from_str(&text).map_err(|_| {
                    ApiError::new(StatusCode::BAD_REQUEST, "bad_request", "field `classes` must be a JSON array")
                })?;
                classes = Some(list);
            }
            other => {
                return Err(ApiError::new(
                    StatusCode::BAD_REQUEST,
                    "bad_request",
                    format!("unknown field `{other}`"),
                ))
            }
        }
    }
    check_classes(&s, classes.as_deref())?;
    let iters = resolve_iters(&s, iters)?;
    let image = image.ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "bad_request", "missing `image` field"))?;
    if s.encoder.is_none() {
        return Err(ApiError::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "encoder_unavailable",
            "no encoder checkpoint is loaded",
        ));
    }
    let resp = blocking(move || {
        let img = TextureImage::decode(&image)?;
        let enc = s.encoder.as_ref().expect("checked above");
        let (label, g) = pipeline_from_image(enc, &s.gan, &img, s.encoding, seed, iters)?;
        let p = payload(&g)?;
        Ok(ImageResponse {
            schema: API_SCHEMA.into(),
            label: label.values().to_vec(),
            seed,
            iters,
            sample_rate_hz: p.sample_rate_hz,
            spectrogram: p.spectrogram,
            wav: p.wav,
            wav_scale_factor: p.wav_scale_factor,
        })
    })
    .await?;
    Ok(Json(resp))
}
