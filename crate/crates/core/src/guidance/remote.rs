//! HTTP client for the external guidance and prior service.

use std::thread;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{GuidanceOutput, GuidanceRequest, ImageBatch, NoisePredictor};
use crate::error::{Error, Result};

pub const GUIDANCE_URL_ENV: &str = "SPLATFORGE_GUIDANCE_URL";

/// What the service sends back for a batch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReturnMode {
    /// `ε̂` for the noised images the client sends.
    EpsilonHat,
    /// The residual mapped back to RGB pixels; the service noises the clean
    /// images itself.
    #[default]
    PixelGradient,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PriorBranch {
    #[serde(rename = "text-to-3d")]
    TextTo3d,
    #[serde(rename = "text-to-motion")]
    TextToMotion,
}

#[derive(Clone, Debug, PartialEq, Eq, Deserialize)]
pub struct HealthReport {
    pub status: String,
    pub model_2d: String,
    pub model_3d: String,
}

/// A prior asset as returned by the service.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorAsset {
    pub ply: Vec<u8>,
    pub colors_present: bool,
}

#[derive(Serialize)]
struct PredictBody<'a> {
    prompt: &'a str,
    t_fraction: f64,
    guidance_scale: f64,
    seed: u64,
    shape: [usize; 4],
    images: String,
    #[serde(rename = "return")]
    mode: ReturnMode,
}

#[derive(Deserialize)]
struct ArrayBody {
    shape: Vec<usize>,
    data: String,
}

#[derive(Serialize)]
struct PriorBody<'a> {
    prompt: &'a str,
    branch: PriorBranch,
    seed: u64,
}

#[derive(Deserialize)]
struct PriorReply {
    ply: String,
    colors_present: bool,
}

/// Little-endian `f32` bytes of `values`, base64 encoded.
pub fn encode_f32_le(values: &[f64]) -> String {
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for v in values {
        bytes.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    STANDARD.encode(bytes)
}

pub fn decode_f32_le(text: &str) -> Result<Vec<f32>> {
    let bytes = STANDARD
        .decode(text)
        .map_err(|e| Error::Guidance(format!("bad base64 payload: {e}")))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::Guidance(format!("payload of {} bytes is not f32 aligned", bytes.len())));
    }
    Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
}

enum Failure {
    /// Worth another attempt.
    Transient(String),
    Permanent(String),
}

#[derive(Clone, Debug)]
pub struct RemoteGuidance {
    base_url: String,
    pub mode: ReturnMode,
    pub attempts: u32,
    /// Delay before the second attempt; doubled for each further one.
    pub backoff: Duration,
    agent: ureq::Agent,
}

impl RemoteGuidance {
    pub fn new(base_url: &str) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(300)))
            .http_status_as_error(false)
            .build();
        Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            mode: ReturnMode::default(),
            attempts: 3,
            backoff: Duration::from_millis(500),
            agent: ureq::Agent::new_with_config(config),
        }
    }

    /// Client for the URL in `SPLATFORGE_GUIDANCE_URL`.
    pub fn from_env() -> Result<Self> {
        match std::env::var(GUIDANCE_URL_ENV) {
            Ok(url) if !url.is_empty() => Ok(Self::new(&url)),
            _ => Err(Error::Config(format!("{GUIDANCE_URL_ENV} is not set"))),
        }
    }

    pub fn with_mode(mut self, mode: ReturnMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    fn with_retries<T>(&self, what: &str, mut call: impl FnMut() -> std::result::Result<T, Failure>) -> Result<T> {
        let mut delay = self.backoff;
        let mut last = String::new();
        for attempt in 0..self.attempts.max(1) {
            if attempt > 0 {
                thread::sleep(delay);
                delay *= 2;
            }
            match call() {
                Ok(v) => return Ok(v),
                Err(Failure::Permanent(msg)) => {
                    return Err(Error::Guidance(format!("{what} at {}: {msg}", self.base_url)))
                }
                Err(Failure::Transient(msg)) => last = msg,
            }
        }
        Err(Error::Guidance(format!(
            "{what} at {} failed after {} attempts: {last}",
            self.base_url,
            self.attempts.max(1)
        )))
    }

    fn post<B: Serialize, R: serde::de::DeserializeOwned>(&self, path: &str, body: &B) -> std::result::Result<R, Failure> {
        let url = format!("{}{path}", self.base_url);
        let resp = self.agent.post(&url).send_json(body).map_err(|e| Failure::Transient(e.to_string()))?;
        read_reply(resp)
    }

    pub fn health(&self) -> Result<HealthReport> {
        let url = format!("{}/v1/health", self.base_url);
        self.with_retries("health probe", || {
            let resp = self.agent.get(&url).call().map_err(|e| Failure::Transient(e.to_string()))?;
            read_reply(resp)
        })
    }

    pub fn generate_prior(&self, prompt: &str, branch: PriorBranch, seed: u64) -> Result<PriorAsset> {
        let body = PriorBody { prompt, branch, seed };
        let reply: PriorReply = self.with_retries("prior generation", || self.post("/v1/generate_prior", &body))?;
        let ply = STANDARD
            .decode(reply.ply)
            .map_err(|e| Error::Guidance(format!("bad base64 PLY: {e}")))?;
        Ok(PriorAsset { ply, colors_present: reply.colors_present })
    }
}

fn read_reply<R: serde::de::DeserializeOwned>(mut resp: ureq::http::Response<ureq::Body>) -> std::result::Result<R, Failure> {
    let status = resp.status().as_u16();
    let body = resp.body_mut().with_config().limit(1 << 30);
    if !(200..300).contains(&status) {
        let text = body.read_to_string().unwrap_or_default();
        let msg = format!("HTTP {status}: {}", text.chars().take(200).collect::<String>());
        return Err(if status >= 500 || status == 408 || status == 429 {
            Failure::Transient(msg)
        } else {
            Failure::Permanent(msg)
        });
    }
    body.read_json().map_err(|e| Failure::Transient(format!("malformed response: {e}")))
}

impl NoisePredictor for RemoteGuidance {
    fn predict(&self, request: &GuidanceRequest) -> Result<GuidanceOutput> {
        let images = match self.mode {
            ReturnMode::EpsilonHat => &request.noised,
            ReturnMode::PixelGradient => &request.images,
        };
        let body = PredictBody {
            prompt: &request.prompt,
            t_fraction: request.t,
            guidance_scale: request.guidance_scale,
            seed: request.seed,
            shape: images.shape(),
            images: encode_f32_le(&images.data),
            mode: self.mode,
        };
        let shape = images.shape();
        let reply: ArrayBody = self.with_retries("noise prediction", || {
            let reply: ArrayBody = self.post("/v1/predict_noise", &body)?;
            if reply.shape != shape {
                return Err(Failure::Transient(format!("response shape {:?}, expected {shape:?}", reply.shape)));
            }
            Ok(reply)
        })?;
        let values = decode_f32_le(&reply.data)?;
        let [b, h, w, _] = shape;
        let batch = ImageBatch::new(b, h, w, values.into_iter().map(f64::from).collect())?;
        Ok(match self.mode {
            ReturnMode::EpsilonHat => GuidanceOutput::EpsilonHat(batch),
            ReturnMode::PixelGradient => GuidanceOutput::PixelGradient(batch),
        })
    }
}
