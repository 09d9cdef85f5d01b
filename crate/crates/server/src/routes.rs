use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Multipart, Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::IntoResponse;
use axum::Json;
use cornerrag_core::augmentation::{decode_rgb, encode_png};
use cornerrag_core::embedding::{project, Dims};
use cornerrag_core::pipeline::{Pipeline, PipelineOptions, Stage};
use cornerrag_core::retrieval::{self, QueryConfig, RetrievalResult};
use cornerrag_core::store::{CaseRecord, CaseSource, NewCase, StorePair};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{ApiError, ApiResult, AppState, Endpoints};

const MAX_PAGE: usize = 1000;

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal("runtime", e.to_string()))?
}

pub(crate) fn content_name(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    format!("{hex}.png")
}

#[derive(Default)]
struct Form {
    image: Option<Vec<u8>>,
    fields: HashMap<String, String>,
}

async fn read_form(mut multipart: Multipart) -> ApiResult<Form> {
    let bad = |e: axum::extract::multipart::MultipartError| ApiError::bad_request("validation", e.body_text());
    let mut form = Form::default();
    while let Some(field) = multipart.next_field().await.map_err(bad)? {
        let name = field.name().unwrap_or_default().to_string();
        if name == "image" {
            form.image = Some(field.bytes().await.map_err(bad)?.to_vec());
        } else {
            form.fields.insert(name, field.text().await.map_err(bad)?);
        }
    }
    Ok(form)
}

impl Form {
    fn parsed<T: std::str::FromStr>(&self, key: &str) -> ApiResult<Option<T>> {
        self.fields
            .get(key)
            .map(|v| {
                v.trim()
                    .parse()
                    .map_err(|_| ApiError::bad_request("validation", format!("invalid {key}: {v:?}")))
            })
            .transpose()
    }

    /// The uploaded image re-encoded as PNG.
    fn png(&self) -> ApiResult<Vec<u8>> {
        let bytes = self
            .image
            .as_deref()
            .ok_or_else(|| ApiError::bad_request("validation", "missing image field"))?;
        let rgb = decode_rgb(bytes).map_err(|e| ApiError::bad_request("decode", e.to_string()))?;
        encode_png(&rgb).map_err(|e| ApiError::internal("decode", e.to_string()))
    }
}

#[derive(Debug, Default, Deserialize)]
pub struct QueryParams {
    alpha: Option<f64>,
    k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResponse {
    pub retrieval: RetrievalResult,
    /// Top-k ranking; the first entry equals `retrieval`.
    pub candidates: Vec<RetrievalResult>,
    pub retrieved_caption: String,
    pub retrieved_image_ref: String,
    pub generated_description: String,
    pub composite_ref: String,
}

pub async fn query(
    State(st): State<Arc<AppState>>,
    Query(params): Query<QueryParams>,
    multipart: Multipart,
) -> ApiResult<Json<QueryResponse>> {
    let form = read_form(multipart).await?;
    let alpha = form.parsed("alpha")?.or(params.alpha).unwrap_or(st.config.alpha_default);
    let k = form.parsed("k")?.or(params.k).unwrap_or(1);
    let cfg = QueryConfig::new(alpha, k).map_err(|e| ApiError::bad_request("validation", e.to_string()))?;
    let image = form.png()?;

    let store = st.snapshot();
    if store.is_empty() {
        return Err(ApiError::from_core("retrieval", cornerrag_core::Error::EmptyStore));
    }
    let state = st.clone();
    blocking(move || {
        let pipeline = Pipeline {
            store: &store,
            image_root: &state.config.db_dir,
            gateway: &state.gateway,
            head: state.head.as_ref(),
            generator: state.generator.as_ref(),
        };
        let opts = PipelineOptions {
            query: cfg,
            ..PipelineOptions::default()
        };
        let q = pipeline
            .embed(&image, &opts)
            .map_err(|e| ApiError::from_core(Stage::Embedding.as_str(), e))?;
        let candidates =
            retrieval::query(&q, &cfg, &store).map_err(|e| ApiError::from_core(Stage::Retrieval.as_str(), e))?;
        let out = pipeline.describe_with_query(&q, &image, &opts)?;

        let composite = out.composite.as_ref().expect("concatenation is on").to_png();
        let png = composite.map_err(|e| ApiError::from_core("augmentation", e))?;
        let name = content_name(&png);
        std::fs::create_dir_all(&state.config.scratch_dir)
            .and_then(|_| std::fs::write(state.config.scratch_dir.join(&name), &png))
            .map_err(|e| ApiError::internal("augmentation", format!("writing composite: {e}")))?;

        Ok(Json(QueryResponse {
            retrieval: out.retrieved,
            candidates,
            retrieved_caption: out.retrieved_case.caption,
            retrieved_image_ref: out.retrieved_case.image_ref,
            generated_description: out.description,
            composite_ref: format!("/composites/{name}"),
        }))
    })
    .await
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InsertResponse {
    pub index: usize,
}

fn parse_source(form: &Form) -> ApiResult<CaseSource> {
    if let Some(s) = form.fields.get("source") {
        return serde_json::from_value(serde_json::Value::String(s.trim().to_string()))
            .map_err(|_| ApiError::bad_request("validation", format!("unknown source {s:?}")));
    }
    Ok(if form.parsed::<bool>("human_correction")?.unwrap_or(false) {
        CaseSource::HumanCorrection
    } else {
        CaseSource::SeedCorpus
    })
}

pub async fn insert_case(State(st): State<Arc<AppState>>, multipart: Multipart) -> ApiResult<Json<InsertResponse>> {
    let form = read_form(multipart).await?;
    let caption = form.fields.get("caption").cloned().unwrap_or_default();
    if caption.trim().is_empty() {
        return Err(ApiError::bad_request("validation", "caption must be non-empty"));
    }
    let source = parse_source(&form)?;
    let image = form.png()?;

    let state = st.clone();
    let caption_for_embed = caption.clone();
    let image_for_embed = image.clone();
    let (mut cm, text_vector) = blocking(move || {
        let embed = |e| ApiError::from_core("embedding", e);
        let cm = state.gateway.embed_pair(&image_for_embed, &caption_for_embed).map_err(embed)?;
        let tv = state.gateway.embed_text(&caption_for_embed).map_err(embed)?;
        Ok((cm, tv))
    })
    .await?;
    if let Some(head) = &st.head {
        cm.image_segment = project(&cm.image_segment, head).map_err(|e| ApiError::from_core("projection", e))?;
    }

    let _writer = st.writer.lock().await;
    let state = st.clone();
    let index = blocking(move || {
        let mut next: StorePair = (*state.snapshot()).clone();
        let rel = crate::image_ref(&image);
        let index = next
            .insert(NewCase::new(rel.clone(), caption, source), &cm, &text_vector)
            .map_err(|e| ApiError::from_core("store", e))?;

        let path: PathBuf = state.config.db_dir.join(&rel);
        let created = !path.exists();
        if created {
            std::fs::create_dir_all(state.config.db_dir.join(crate::IMAGES_DIR))
                .and_then(|_| std::fs::write(&path, &image))
                .map_err(|e| ApiError::internal("persist", format!("writing image: {e}")))?;
        }
        if let Err(e) = next.persist(&state.config.db_dir) {
            if created {
                let _ = std::fs::remove_file(&path);
            }
            return Err(ApiError::from_core("persist", e));
        }
        state.publish(next);
        Ok(index)
    })
    .await?;
    tracing::info!(index, "case inserted");
    Ok(Json(InsertResponse { index }))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrectionRequest {
    pub corrected_caption: String,
    pub operator_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrectionResponse {
    pub index: usize,
    pub revision: u32,
}

pub async fn correct_case(
    State(st): State<Arc<AppState>>,
    Path(index): Path<usize>,
    body: Result<Json<CorrectionRequest>, JsonRejection>,
) -> ApiResult<Json<CorrectionResponse>> {
    let Json(req) = body.map_err(|e| ApiError::bad_request("validation", e.body_text()))?;
    if req.corrected_caption.trim().is_empty() {
        return Err(ApiError::bad_request("validation", "corrected caption must be non-empty"));
    }
    st.snapshot().record(index).map_err(|e| ApiError::from_core("store", e))?;

    let state = st.clone();
    let caption = req.corrected_caption.clone();
    let tv = blocking(move || state.gateway.embed_text(&caption).map_err(|e| ApiError::from_core("embedding", e)))
        .await?;

    let _writer = st.writer.lock().await;
    let state = st.clone();
    let revision = blocking(move || {
        let mut next: StorePair = (*state.snapshot()).clone();
        let revision = next
            .correct_caption(index, &req.corrected_caption, &tv, &req.operator_id)
            .map_err(|e| ApiError::from_core("store", e))?;
        next.persist(&state.config.db_dir)
            .map_err(|e| ApiError::from_core("persist", e))?;
        state.publish(next);
        Ok(revision)
    })
    .await?;
    tracing::info!(index, revision, "caption corrected");
    Ok(Json(CorrectionResponse { index, revision }))
}

pub async fn get_case(State(st): State<Arc<AppState>>, Path(index): Path<usize>) -> ApiResult<Json<CaseRecord>> {
    let store = st.snapshot();
    let record = store.record(index).map_err(|e| ApiError::from_core("store", e))?;
    Ok(Json(record.clone()))
}

#[derive(Debug, Default, Deserialize)]
pub struct ListParams {
    source: Option<CaseSource>,
    offset: Option<usize>,
    limit: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CasePage {
    /// Matching cases before paging.
    pub total: usize,
    pub offset: usize,
    pub limit: usize,
    pub items: Vec<CaseRecord>,
}

pub async fn list_cases(State(st): State<Arc<AppState>>, Query(p): Query<ListParams>) -> Json<CasePage> {
    let store = st.snapshot();
    let offset = p.offset.unwrap_or(0);
    let limit = p.limit.unwrap_or(50).min(MAX_PAGE);
    let matching: Vec<&CaseRecord> = store
        .records()
        .iter()
        .filter(|r| p.source.is_none_or(|s| r.source == s))
        .collect();
    Json(CasePage {
        total: matching.len(),
        offset,
        limit,
        items: matching.into_iter().skip(offset).take(limit).cloned().collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Health {
    pub status: &'static str,
    pub size: usize,
    pub dims: Dims,
    pub checksum: String,
    pub alpha_default: f64,
    pub projection_head: bool,
    pub endpoints: Endpoints,
}

pub async fn health(State(st): State<Arc<AppState>>) -> ApiResult<Json<Health>> {
    let store = st.snapshot();
    let checksum = store.checksum().map_err(|e| ApiError::from_core("store", e))?;
    Ok(Json(Health {
        status: "ok",
        size: store.len(),
        dims: store.dims(),
        checksum: format!("{checksum:08x}"),
        alpha_default: st.config.alpha_default,
        projection_head: st.head.is_some(),
        endpoints: st.config.endpoints.clone(),
    }))
}

pub async fn composite(State(st): State<Arc<AppState>>, Path(name): Path<String>) -> ApiResult<impl IntoResponse> {
    let valid = name
        .strip_suffix(".png")
        .is_some_and(|stem| !stem.is_empty() && stem.bytes().all(|b| b.is_ascii_hexdigit()));
    let not_found = || ApiError::new(StatusCode::NOT_FOUND, "composite", format!("no composite {name}"));
    if !valid {
        return Err(not_found());
    }
    let bytes = tokio::fs::read(st.config.scratch_dir.join(&name)).await.map_err(|_| not_found())?;
    Ok(([(header::CONTENT_TYPE, "image/png")], bytes))
}
