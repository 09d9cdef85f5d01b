use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{MultimodalEncoder, TextEncoder};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    Multimodal,
    Text,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderEndpoint {
    pub base_url: String,
    pub kind: EncoderKind,
    pub timeout_ms: u64,
}

impl EncoderEndpoint {
    pub fn new(base_url: impl Into<String>, kind: EncoderKind, timeout_ms: u64) -> Result<Self> {
        if timeout_ms == 0 {
            return Err(Error::Precondition("encoder timeout must be positive".into()));
        }
        Ok(Self {
            base_url: base_url.into(),
            kind,
            timeout_ms,
        })
    }

    fn embed_url(&self) -> String {
        format!("{}/embed", self.base_url.trim_end_matches('/'))
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    image: Option<String>,
    text: &'a str,
}

// Null entries decode as NaN so the gateway reports them as data errors.
#[derive(Deserialize)]
struct TextResponse {
    vector: Vec<Option<f64>>,
    dim: usize,
}

#[derive(Deserialize)]
struct MultimodalResponse {
    image_vector: Vec<Option<f64>>,
    text_vector: Vec<Option<f64>>,
}

fn unnull(values: Vec<Option<f64>>) -> Vec<f64> {
    values.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect()
}

/// Client for the JSON `POST /embed` encoder protocol.
#[derive(Debug, Clone)]
pub struct HttpEncoder {
    endpoint: EncoderEndpoint,
    agent: ureq::Agent,
}

impl HttpEncoder {
    pub fn new(endpoint: EncoderEndpoint) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(endpoint.timeout_ms)))
            .build()
            .into();
        Self { endpoint, agent }
    }

    pub fn endpoint(&self) -> &EncoderEndpoint {
        &self.endpoint
    }

    fn expect_kind(&self, kind: EncoderKind) -> Result<()> {
        if self.endpoint.kind != kind {
            return Err(Error::Precondition(format!(
                "endpoint {} is {:?}, operation needs {:?}",
                self.endpoint.base_url, self.endpoint.kind, kind
            )));
        }
        Ok(())
    }

    fn post<R: serde::de::DeserializeOwned>(&self, req: &EmbedRequest<'_>) -> Result<R> {
        let mut resp = self
            .agent
            .post(&self.endpoint.embed_url())
            .send_json(req)
            .map_err(transport_error)?;
        resp.body_mut()
            .read_json::<R>()
            .map_err(|e| Error::Data(format!("malformed encoder response: {e}")))
    }

    fn multimodal_call(&self, image: &[u8], text: &str) -> Result<(Vec<f64>, Vec<f64>)> {
        self.expect_kind(EncoderKind::Multimodal)?;
        let req = EmbedRequest {
            image: Some(base64::engine::general_purpose::STANDARD.encode(image)),
            text,
        };
        let resp: MultimodalResponse = self.post(&req)?;
        Ok((unnull(resp.image_vector), unnull(resp.text_vector)))
    }
}

impl TextEncoder for HttpEncoder {
    fn encode_text(&self, text: &str) -> Result<Vec<f64>> {
        self.expect_kind(EncoderKind::Text)?;
        let resp: TextResponse = self.post(&EmbedRequest { image: None, text })?;
        if resp.dim != resp.vector.len() {
            return Err(Error::Data(format!(
                "encoder declared dim {} but sent {} values",
                resp.dim,
                resp.vector.len()
            )));
        }
        Ok(unnull(resp.vector))
    }
}

impl MultimodalEncoder for HttpEncoder {
    fn encode_pair(&self, image: &[u8], text: &str) -> Result<(Vec<f64>, Vec<f64>)> {
        self.multimodal_call(image, text)
    }

    fn encode_image(&self, image: &[u8]) -> Result<Vec<f64>> {
        self.multimodal_call(image, "").map(|(img, _)| img)
    }
}

/// Maps client failures onto retriable / permanent transport errors.
pub(crate) fn transport_error(e: ureq::Error) -> Error {
    let retriable = match &e {
        ureq::Error::StatusCode(code) => *code >= 500 || *code == 429,
        ureq::Error::Timeout(_)
        | ureq::Error::Io(_)
        | ureq::Error::ConnectionFailed
        | ureq::Error::HostNotFound => true,
        _ => false,
    };
    Error::Transport {
        message: e.to_string(),
        retriable,
    }
}
