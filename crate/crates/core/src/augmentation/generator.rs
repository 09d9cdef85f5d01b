use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};

use super::composite::{decode_rgb, encode_png, CompositeImage};
use super::BASELINE_PROMPT;
use crate::embedding::RetryPolicy;
use crate::embedding::http::transport_error;
use crate::error::{Error, Result};

/// A vision-language backend that describes an image given a prompt.
pub trait Generator: Send + Sync {
    fn generate(&self, image_png: &[u8], prompt: &str) -> Result<String>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorEndpoint {
    pub base_url: String,
    pub model_name: String,
    pub timeout_ms: u64,
}

impl GeneratorEndpoint {
    pub fn new(base_url: impl Into<String>, model_name: impl Into<String>, timeout_ms: u64) -> Result<Self> {
        if timeout_ms == 0 {
            return Err(Error::Precondition("generator timeout must be positive".into()));
        }
        Ok(Self {
            base_url: base_url.into(),
            model_name: model_name.into(),
            timeout_ms,
        })
    }

    fn generate_url(&self) -> String {
        format!("{}/generate", self.base_url.trim_end_matches('/'))
    }
}

#[derive(Serialize)]
struct GenerateRequest<'a> {
    image: String,
    prompt: &'a str,
    model: &'a str,
}

#[derive(Deserialize)]
struct GenerateResponse {
    text: String,
}

/// Client for the JSON `POST /generate` protocol.
#[derive(Debug, Clone)]
pub struct HttpGenerator {
    endpoint: GeneratorEndpoint,
    agent: ureq::Agent,
    retry: RetryPolicy,
}

impl HttpGenerator {
    pub fn new(endpoint: GeneratorEndpoint) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(endpoint.timeout_ms)))
            .build()
            .into();
        Self {
            endpoint,
            agent,
            retry: RetryPolicy::default(),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn endpoint(&self) -> &GeneratorEndpoint {
        &self.endpoint
    }
}

impl Generator for HttpGenerator {
    fn generate(&self, image_png: &[u8], prompt: &str) -> Result<String> {
        let req = GenerateRequest {
            image: base64::engine::general_purpose::STANDARD.encode(image_png),
            prompt,
            model: &self.endpoint.model_name,
        };
        self.retry.run(|| {
            let mut resp = self
                .agent
                .post(&self.endpoint.generate_url())
                .send_json(&req)
                .map_err(transport_error)?;
            resp.body_mut()
                .read_json::<GenerateResponse>()
                .map(|r| r.text)
                .map_err(|e| Error::Data(format!("malformed generator response: {e}")))
        })
    }
}

pub const ECHO_PREFIX: &str = "ECHO:";

/// Deterministic stand-in: echoes the first 40 characters of the prompt's
/// last line, which for a retrieval prompt is the retrieved caption.
#[derive(Debug, Clone, Copy, Default)]
pub struct EchoGenerator;

impl EchoGenerator {
    pub fn echo(prompt: &str) -> String {
        let last = prompt.lines().last().unwrap_or("");
        format!("{ECHO_PREFIX}{}", last.chars().take(40).collect::<String>())
    }
}

impl Generator for EchoGenerator {
    fn generate(&self, _image_png: &[u8], prompt: &str) -> Result<String> {
        Ok(Self::echo(prompt))
    }
}

/// Always answers with the same text.
#[derive(Debug, Clone, Default)]
pub struct FixedGenerator(pub String);

impl Generator for FixedGenerator {
    fn generate(&self, _image_png: &[u8], _prompt: &str) -> Result<String> {
        Ok(self.0.clone())
    }
}

fn finish(raw: String) -> Result<String> {
    let text = raw.trim();
    if text.is_empty() {
        return Err(Error::EmptyOutput);
    }
    Ok(text.to_string())
}

/// Sends the composite as PNG with the retrieval prompt.
pub fn generate(composite: &CompositeImage, prompt: &str, generator: &dyn Generator) -> Result<String> {
    finish(generator.generate(&composite.to_png()?, prompt)?)
}

/// Sends a single image with an arbitrary prompt, normalized to PNG.
pub fn generate_with_image(image: &[u8], prompt: &str, generator: &dyn Generator) -> Result<String> {
    let png = encode_png(&decode_rgb(image)?)?;
    finish(generator.generate(&png, prompt)?)
}

/// No retrieval: the new image alone with the plain description prompt.
pub fn baseline_generate(image: &[u8], generator: &dyn Generator) -> Result<String> {
    generate_with_image(image, BASELINE_PROMPT, generator)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augmentation::{build_prompt, concatenate};
    use crate::embedding::mock::png_bytes;
    use std::sync::Mutex;

    struct Recording(Mutex<Vec<(Vec<u8>, String)>>);

    impl Generator for Recording {
        fn generate(&self, image_png: &[u8], prompt: &str) -> Result<String> {
            self.0.lock().unwrap().push((image_png.to_vec(), prompt.to_string()));
            Ok("  described  \n".into())
        }
    }

    #[test]
    fn echo_uses_last_line() {
        let prompt = build_prompt("Construction zone with cones merging two lanes into one at night").unwrap();
        let out = EchoGenerator.generate(b"", &prompt).unwrap();
        assert_eq!(out, "ECHO:Construction zone with cones merging two");
        assert_eq!(EchoGenerator::echo("short"), "ECHO:short");
    }

    #[test]
    fn output_is_trimmed_and_composite_is_png() {
        let rec = Recording(Mutex::new(Vec::new()));
        let a = decode_rgb(&png_bytes(4, 4, [1, 2, 3])).unwrap();
        let c = concatenate(&a, &a).unwrap();
        assert_eq!(generate(&c, "p", &rec).unwrap(), "described");
        let calls = rec.0.lock().unwrap();
        assert_eq!(decode_rgb(&calls[0].0).unwrap(), c.pixels);
        assert_eq!(calls[0].1, "p");
    }

    #[test]
    fn baseline_uses_plain_prompt() {
        let rec = Recording(Mutex::new(Vec::new()));
        baseline_generate(&png_bytes(2, 2, [0, 0, 0]), &rec).unwrap();
        assert_eq!(rec.0.lock().unwrap()[0].1, BASELINE_PROMPT);
    }

    #[test]
    fn blank_output_is_an_error() {
        let g = FixedGenerator("   \n".into());
        assert!(matches!(baseline_generate(&png_bytes(2, 2, [0, 0, 0]), &g), Err(Error::EmptyOutput)));
    }

    #[test]
    fn unreachable_generator_is_retriable() {
        let g = HttpGenerator::new(GeneratorEndpoint::new("http://127.0.0.1:9", "m", 200).unwrap())
            .with_retry(RetryPolicy::none());
        let err = g.generate(b"x", "p").unwrap_err();
        assert!(err.is_retriable(), "{err}");
    }
}
