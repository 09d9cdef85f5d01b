//! Deterministic stand-ins for the encoder and generator services, speaking
//! the same HTTP protocols as the real ones.
//!
//! Routes: `POST /text/embed`, `POST /mm/embed`, `POST /gen/generate`.

use axum::http::StatusCode;
use axum::routing::post;
use axum::{Json, Router};
use base64::Engine;
use cornerrag_core::augmentation::EchoGenerator;
use cornerrag_core::embedding::mock::{HashingTextEncoder, PixelImageEncoder};
use serde::Deserialize;
use serde_json::{json, Value};

#[derive(Deserialize)]
struct EmbedRequest {
    image: Option<String>,
    #[serde(default)]
    text: String,
}

#[derive(Deserialize)]
struct GenerateRequest {
    prompt: String,
}

type Reply = Result<Json<Value>, (StatusCode, String)>;

fn bad(message: impl ToString) -> (StatusCode, String) {
    (StatusCode::BAD_REQUEST, message.to_string())
}

pub fn router(dim: usize) -> Router {
    let text = HashingTextEncoder::new(dim);
    let image = PixelImageEncoder::new(dim);
    Router::new()
        .route(
            "/text/embed",
            post(move |Json(req): Json<EmbedRequest>| async move {
                Json(json!({ "vector": text.encode(&req.text), "dim": dim }))
            }),
        )
        .route(
            "/mm/embed",
            post(move |Json(req): Json<EmbedRequest>| async move {
                let b64 = req.image.ok_or_else(|| bad("image is required"))?;
                let bytes = base64::engine::general_purpose::STANDARD.decode(b64).map_err(bad)?;
                let image_vector = image.encode(&bytes).map_err(bad)?;
                let reply: Reply = Ok(Json(json!({
                    "image_vector": image_vector,
                    "text_vector": text.encode(&req.text),
                })));
                reply
            }),
        )
        .route(
            "/gen/generate",
            post(|Json(req): Json<GenerateRequest>| async move {
                Json(json!({ "text": EchoGenerator::echo(&req.prompt) }))
            }),
        )
}

/// Serves the mock services until the listener fails.
pub async fn serve(listener: tokio::net::TcpListener, dim: usize) -> std::io::Result<()> {
    axum::serve(listener, router(dim)).await
}
