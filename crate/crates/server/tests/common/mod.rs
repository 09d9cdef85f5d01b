#![allow(dead_code)]

use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use cornerrag_core::augmentation::{EchoGenerator, Generator, GeneratorEndpoint, HttpGenerator};
use cornerrag_core::embedding::mock::{png_bytes, HashingTextEncoder, MockMultimodalEncoder};
use cornerrag_core::embedding::{Dims, EmbeddingGateway, EncoderEndpoint, EncoderKind, HttpEncoder, RetryPolicy};
use cornerrag_core::store::StorePair;
use cornerrag_server::{router, AppState, Endpoints, ServerConfig};
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

pub const DIM: usize = 32;

pub async fn spawn_mocks(dim: usize) -> SocketAddr {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(cornerrag_server::mock::serve(listener, dim));
    addr
}

/// Gateway and generator that talk to the mock services over HTTP.
pub fn http_backends(addr: SocketAddr, dim: usize) -> (EmbeddingGateway, Arc<dyn Generator>, Endpoints) {
    let text = format!("http://{addr}/text");
    let mm = format!("http://{addr}/mm");
    let generator = format!("http://{addr}/gen");
    let gw = EmbeddingGateway::new(Dims::shared(dim).unwrap())
        .with_text(Arc::new(HttpEncoder::new(EncoderEndpoint::new(&text, EncoderKind::Text, 5_000).unwrap())))
        .with_multimodal(Arc::new(HttpEncoder::new(
            EncoderEndpoint::new(&mm, EncoderKind::Multimodal, 5_000).unwrap(),
        )));
    let gen = HttpGenerator::new(GeneratorEndpoint::new(&generator, "echo", 5_000).unwrap());
    let endpoints = Endpoints {
        text_encoder: Some(text),
        multimodal_encoder: Some(mm),
        generator: Some(generator),
    };
    (gw, Arc::new(gen), endpoints)
}

/// In-process mock encoders and the echo generator.
pub fn local_backends(dim: usize) -> (EmbeddingGateway, Arc<dyn Generator>) {
    let gw = EmbeddingGateway::new(Dims::shared(dim).unwrap())
        .with_text(Arc::new(HashingTextEncoder::new(dim)))
        .with_multimodal(Arc::new(MockMultimodalEncoder::new(dim)));
    (gw, Arc::new(EchoGenerator))
}

pub fn dead_backends(dim: usize) -> (EmbeddingGateway, Arc<dyn Generator>) {
    let url = "http://127.0.0.1:9";
    let gw = EmbeddingGateway::new(Dims::shared(dim).unwrap())
        .with_text(Arc::new(HttpEncoder::new(EncoderEndpoint::new(url, EncoderKind::Text, 300).unwrap())))
        .with_multimodal(Arc::new(HttpEncoder::new(
            EncoderEndpoint::new(url, EncoderKind::Multimodal, 300).unwrap(),
        )))
        .with_retry(RetryPolicy {
            max_retries: 1,
            initial_backoff: Duration::from_millis(1),
        });
    (gw, Arc::new(EchoGenerator))
}

pub struct TestApp {
    pub state: Arc<AppState>,
    pub router: Router,
}

impl TestApp {
    pub fn open(dir: &Path, gw: EmbeddingGateway, gen: Arc<dyn Generator>) -> Self {
        let state = Arc::new(AppState::open(gw, None, gen, ServerConfig::new(dir)).unwrap());
        Self {
            router: router(state.clone()),
            state,
        }
    }

    pub fn with_store(dir: &Path, store: StorePair, gw: EmbeddingGateway, gen: Arc<dyn Generator>) -> Self {
        let state = Arc::new(AppState::new(store, gw, None, gen, ServerConfig::new(dir)));
        Self {
            router: router(state.clone()),
            state,
        }
    }

    pub async fn send(&self, req: Request<Body>) -> (StatusCode, Value) {
        let resp = self.router.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        let value = serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()));
        (status, value)
    }

    pub async fn get(&self, uri: &str) -> (StatusCode, Value) {
        self.send(Request::get(uri).body(Body::empty()).unwrap()).await
    }

    pub async fn get_bytes(&self, uri: &str) -> (StatusCode, Vec<u8>) {
        let resp = self.router.clone().oneshot(Request::get(uri).body(Body::empty()).unwrap()).await.unwrap();
        let status = resp.status();
        (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
    }

    pub async fn post_json(&self, uri: &str, body: Value) -> (StatusCode, Value) {
        let req = Request::builder()
            .method(Method::POST)
            .uri(uri)
            .header("content-type", "application/json")
            .body(Body::from(body.to_string()))
            .unwrap();
        self.send(req).await
    }

    pub async fn post_form(&self, uri: &str, image: Option<&[u8]>, fields: &[(&str, &str)]) -> (StatusCode, Value) {
        let (content_type, body) = multipart(image, fields);
        let req = Request::builder()
            .method(Method::POST)
            .uri(uri)
            .header("content-type", content_type)
            .body(Body::from(body))
            .unwrap();
        self.send(req).await
    }

    pub async fn insert(&self, image: &[u8], caption: &str) -> usize {
        let (status, body) = self.post_form("/cases", Some(image), &[("caption", caption)]).await;
        assert_eq!(status, StatusCode::OK, "{body}");
        body["index"].as_u64().unwrap() as usize
    }

    pub async fn query(&self, image: &[u8], alpha: &str) -> (StatusCode, Value) {
        self.post_form("/query", Some(image), &[("alpha", alpha)]).await
    }

    pub async fn size(&self) -> u64 {
        self.get("/health").await.1["size"].as_u64().unwrap()
    }
}

pub fn multipart(image: Option<&[u8]>, fields: &[(&str, &str)]) -> (String, Vec<u8>) {
    let boundary = "----cornerrag-test-boundary";
    let mut body = Vec::new();
    for (name, value) in fields {
        body.extend_from_slice(
            format!("--{boundary}\r\nContent-Disposition: form-data; name=\"{name}\"\r\n\r\n{value}\r\n").as_bytes(),
        );
    }
    if let Some(bytes) = image {
        body.extend_from_slice(
            format!(
                "--{boundary}\r\nContent-Disposition: form-data; name=\"image\"; filename=\"scene.png\"\r\nContent-Type: image/png\r\n\r\n"
            )
            .as_bytes(),
        );
        body.extend_from_slice(bytes);
        body.extend_from_slice(b"\r\n");
    }
    body.extend_from_slice(format!("--{boundary}--\r\n").as_bytes());
    (format!("multipart/form-data; boundary={boundary}"), body)
}

/// A solid image with a marker block, so different scenes embed apart.
pub fn scene(rgb: [u8; 3], marker: [u8; 3]) -> Vec<u8> {
    let mut img = image::RgbImage::from_pixel(24, 16, image::Rgb(rgb));
    for x in 0..8 {
        for y in 0..8 {
            img.put_pixel(x, y, image::Rgb(marker));
        }
    }
    cornerrag_core::embedding::mock::encode_png(&img)
}

pub fn solid(rgb: [u8; 3]) -> Vec<u8> {
    png_bytes(24, 16, rgb)
}

/// `base` with a few pixels nudged: a near-duplicate of the same scene.
pub fn perturbed(base: &[u8]) -> Vec<u8> {
    let mut img = image::load_from_memory(base).unwrap().to_rgb8();
    for x in 10..13 {
        let p = img.get_pixel_mut(x, 12);
        p.0 = p.0.map(|c| c.saturating_add(9));
    }
    cornerrag_core::embedding::mock::encode_png(&img)
}
