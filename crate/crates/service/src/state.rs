use texvib_core::encoder::{EncoderCheckpoint, LabelEncoding, LabelEncodingRegistry};
use texvib_core::gan::GanCheckpoint;
use texvib_core::pipeline::check_class_lists;
use texvib_core::{CoreError, Result};

use crate::ServiceConfig;

/// Request-independent limits copied out of the config.
#[derive(Clone, Debug)]
pub struct Limits {
    pub griffin_lim_iters: usize,
    pub max_griffin_lim_iters: usize,
    pub max_upload_bytes: usize,
    pub cors_allow_origin: Option<String>,
}

/// Frozen checkpoints shared by every request.
pub struct AppState {
    pub gan: GanCheckpoint,
    pub encoder: Option<EncoderCheckpoint>,
    pub encoding: &'static dyn LabelEncoding,
    pub limits: Limits,
}

impl AppState {
    pub fn load(cfg: &ServiceConfig) -> Result<Self> {
        let gan = GanCheckpoint::load(&cfg.gan)?;
        let encoder = cfg.encoder.as_deref().map(EncoderCheckpoint::load).transpose()?;
        Self::new(gan, encoder, cfg)
    }

    /// Refuses checkpoints whose class lists disagree.
    pub fn new(gan: GanCheckpoint, encoder: Option<EncoderCheckpoint>, cfg: &ServiceConfig) -> Result<Self> {
        gan.validate()?;
        if let Some(enc) = &encoder {
            check_class_lists(enc, &gan)?;
        }
        if cfg.griffin_lim_iters > cfg.max_griffin_lim_iters {
            return Err(CoreError::Config {
                what: "service config",
                detail: "default Griffin-Lim iterations exceed the maximum".into(),
            });
        }
        Ok(Self {
            gan,
            encoder,
            encoding: LabelEncodingRegistry::builtin().get(&cfg.label_encoding)?,
            limits: Limits {
                griffin_lim_iters: cfg.griffin_lim_iters,
                max_griffin_lim_iters: cfg.max_griffin_lim_iters,
                max_upload_bytes: cfg.max_upload_bytes,
                cors_allow_origin: cfg.cors_allow_origin.clone(),
            },
        })
    }
}
