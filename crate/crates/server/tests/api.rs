mod common;

use std::sync::Arc;

use axum::http::StatusCode;
use common::*;
use cornerrag_core::embedding::Dims;
use cornerrag_core::store::StorePair;
use serde_json::json;

fn red() -> Vec<u8> {
    scene([200, 30, 30], [10, 10, 10])
}
fn green() -> Vec<u8> {
    scene([30, 200, 30], [250, 250, 250])
}
fn blue() -> Vec<u8> {
    scene([30, 30, 200], [120, 60, 0])
}

async fn seeded(dir: &std::path::Path) -> TestApp {
    let (gw, gen) = local_backends(DIM);
    let app = TestApp::open(dir, gw, gen);
    app.insert(&red(), "Fallen tree blocking the right lane").await;
    app.insert(&green(), "Pedestrian crossing outside a crosswalk").await;
    app.insert(&blue(), "Flooded underpass with stalled car").await;
    app
}

#[tokio::test(flavor = "multi_thread")]
async fn health_on_fresh_store() {
    let dir = tempfile::tempdir().unwrap();
    let (gw, gen) = local_backends(DIM);
    let app = TestApp::open(dir.path(), gw, gen);
    let (status, body) = app.get("/health").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["status"], "ok");
    assert_eq!(body["size"], 0);
    assert_eq!(body["dims"]["image"], DIM);
    assert_eq!(body["projection_head"], false);
}

#[tokio::test(flavor = "multi_thread")]
async fn insert_then_get_round_trips_manifest_fields() {
    let dir = tempfile::tempdir().unwrap();
    let app = seeded(dir.path()).await;
    let (status, body) = app.get("/cases/1").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["index"], 1);
    assert_eq!(body["caption"], "Pedestrian crossing outside a crosswalk");
    assert_eq!(body["source"], "seed_corpus");
    let image_ref = body["image_ref"].as_str().unwrap();
    assert!(image_ref.starts_with("images/") && image_ref.ends_with(".png"));
    assert!(dir.path().join(image_ref).exists());

    let stored = app.state.snapshot().record(1).unwrap().clone();
    assert_eq!(serde_json::to_value(&stored).unwrap(), body);

    let (status, _) = app.get("/cases/9").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread")]
async fn query_retrieves_the_inserted_scene() {
    let dir = tempfile::tempdir().unwrap();
    let app = seeded(dir.path()).await;
    for (idx, img) in [red(), green(), blue()].iter().enumerate() {
        let (status, body) = app.query(img, "0").await;
        assert_eq!(status, StatusCode::OK, "{body}");
        assert_eq!(body["retrieval"]["index"], idx);
        assert!((body["retrieval"]["img_similarity"].as_f64().unwrap() - 1.0).abs() < 1e-6);
    }

    let (_, body) = app.query(&green(), "0").await;
    assert_eq!(body["retrieved_caption"], "Pedestrian crossing outside a crosswalk");
    assert_eq!(body["generated_description"], "ECHO:Pedestrian crossing outside a crosswalk");
    let composite = body["composite_ref"].as_str().unwrap().to_string();
    let (status, png) = app.get_bytes(&composite).await;
    assert_eq!(status, StatusCode::OK);
    let img = image::load_from_memory(&png).unwrap();
    // Both 24 px scenes side by side, plus the separator.
    assert!(img.width() > 48);
}

#[tokio::test(flavor = "multi_thread")]
async fn query_k_returns_ranked_candidates() {
    let dir = tempfile::tempdir().unwrap();
    let app = seeded(dir.path()).await;
    let (status, body) = app.post_form("/query?k=3", Some(&blue()), &[("alpha", "0.25")]).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let c = body["candidates"].as_array().unwrap();
    assert_eq!(c.len(), 3);
    assert_eq!(c[0], body["retrieval"]);
    let scores: Vec<f64> = c.iter().map(|r| r["combined"].as_f64().unwrap()).collect();
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));
}

#[tokio::test(flavor = "multi_thread")]
async fn validation_and_decode_errors() {
    let dir = tempfile::tempdir().unwrap();
    let app = seeded(dir.path()).await;

    let (status, body) = app.query(b"definitely not an image", "0.5").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["stage"], "decode");

    let (status, body) = app.query(&red(), "1.5").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["stage"], "validation");

    let (status, _) = app.query(&red(), "abc").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let (status, body) = app.post_form("/query", None, &[]).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["stage"], "validation");

    let (status, _) = app.post_form("/cases", Some(&red()), &[("caption", "  ")]).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let (status, _) = app.post_form("/cases", Some(&red()), &[("caption", "x"), ("source", "robot")]).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(app.size().await, 3);
}

#[tokio::test(flavor = "multi_thread")]
async fn query_on_empty_store_conflicts() {
    let dir = tempfile::tempdir().unwrap();
    let (gw, gen) = local_backends(DIM);
    let app = TestApp::open(dir.path(), gw, gen);
    let (status, body) = app.query(&red(), "0.5").await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["stage"], "retrieval");
}

#[tokio::test(flavor = "multi_thread")]
async fn corrections_bump_revisions_and_keep_history() {
    let dir = tempfile::tempdir().unwrap();
    let app = seeded(dir.path()).await;

    let (status, body) = app
        .post_json("/cases/0/correct", json!({"corrected_caption": "", "operator_id": "op"}))
        .await;
    assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
    let (status, _) = app
        .post_json("/cases/42/correct", json!({"corrected_caption": "x", "operator_id": "op"}))
        .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = app.post_json("/cases/0/correct", json!({"caption": "missing fields"})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let (status, body) = app
        .post_json("/cases/0/correct", json!({"corrected_caption": "Tree across both lanes", "operator_id": "ana"}))
        .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, json!({"index": 0, "revision": 1}));
    let (_, body) = app
        .post_json("/cases/0/correct", json!({"corrected_caption": "Tree and debris across both lanes", "operator_id": "bo"}))
        .await;
    assert_eq!(body["revision"], 2);

    let (_, rec) = app.get("/cases/0").await;
    assert_eq!(rec["caption"], "Tree and debris across both lanes");
    assert_eq!(rec["source"], "human_correction");
    let history = rec["history"].as_array().unwrap();
    assert_eq!(history[0]["previous_caption"], "Fallen tree blocking the right lane");
    assert_eq!(history[1]["previous_caption"], "Tree across both lanes");
    assert_eq!(history[1]["operator_id"], "bo");

    // Survives a restart.
    let (gw, gen) = local_backends(DIM);
    let reopened = TestApp::open(dir.path(), gw, gen);
    assert_eq!(reopened.get("/cases/0").await.1, rec);
}

#[tokio::test(flavor = "multi_thread")]
async fn concurrent_corrections_serialize() {
    let dir = tempfile::tempdir().unwrap();
    let app = Arc::new(seeded(dir.path()).await);
    let mut tasks = Vec::new();
    for i in 0..8 {
        let app = app.clone();
        tasks.push(tokio::spawn(async move {
            let body = json!({"corrected_caption": format!("revision text {i}"), "operator_id": format!("op{i}")});
            let (status, body) = app.post_json("/cases/2/correct", body).await;
            assert_eq!(status, StatusCode::OK);
            body["revision"].as_u64().unwrap()
        }));
    }
    let mut revisions = Vec::new();
    for t in tasks {
        revisions.push(t.await.unwrap());
    }
    revisions.sort();
    assert_eq!(revisions, (1..=8).collect::<Vec<u64>>());
    assert_eq!(app.get("/cases/2").await.1["history"].as_array().unwrap().len(), 8);
}

#[tokio::test(flavor = "multi_thread")]
async fn correction_is_visible_to_the_next_query() {
    let dir = tempfile::tempdir().unwrap();
    let app = seeded(dir.path()).await;
    let (_, first) = app.query(&blue(), "0.5").await;
    assert_eq!(first["generated_description"], "ECHO:Flooded underpass with stalled car");

    let fix = json!({"corrected_caption": "Water over the road, car stuck", "operator_id": "op"});
    assert_eq!(app.post_json("/cases/2/correct", fix).await.0, StatusCode::OK);

    let (_, second) = app.query(&blue(), "0.5").await;
    assert_eq!(second["retrieval"]["index"], 2);
    assert_eq!(second["retrieved_caption"], "Water over the road, car stuck");
    assert_eq!(second["generated_description"], "ECHO:Water over the road, car stuck");
}

#[tokio::test(flavor = "multi_thread")]
async fn list_filters_by_source_and_pages() {
    let dir = tempfile::tempdir().unwrap();
    let app = seeded(dir.path()).await;
    let (status, _) = app
        .post_form(
            "/cases",
            Some(&scene([90, 90, 90], [0, 200, 200])),
            &[("caption", "Operator-added flare pattern"), ("human_correction", "true")],
        )
        .await;
    assert_eq!(status, StatusCode::OK);

    let (_, page) = app.get("/cases?source=human_correction").await;
    assert_eq!(page["total"], 1);
    assert_eq!(page["items"][0]["index"], 3);

    let (_, page) = app.get("/cases?source=seed_corpus&offset=1&limit=1").await;
    assert_eq!(page["total"], 3);
    assert_eq!(page["items"].as_array().unwrap().len(), 1);
    assert_eq!(page["items"][0]["index"], 1);

    let (_, page) = app.get("/cases?limit=100000").await;
    assert_eq!(page["limit"], 1000);
    assert_eq!(page["total"], 4);
}

#[tokio::test(flavor = "multi_thread")]
async fn encoder_dimension_mismatch_is_a_server_error() {
    let dir = tempfile::tempdir().unwrap();
    let (gw, gen) = local_backends(DIM);
    let store = StorePair::new(Dims::shared(DIM / 2).unwrap());
    let app = TestApp::with_store(dir.path(), store, gw, gen);
    let (status, body) = app.post_form("/cases", Some(&red()), &[("caption", "dims")]).await;
    assert_eq!(status, StatusCode::INTERNAL_SERVER_ERROR, "{body}");
    assert_eq!(body["stage"], "store");
    assert_eq!(app.size().await, 0);
}

#[tokio::test(flavor = "multi_thread")]
async fn unreachable_encoder_is_a_bad_gateway() {
    let dir = tempfile::tempdir().unwrap();
    let (gw, gen) = dead_backends(DIM);
    let app = TestApp::open(dir.path(), gw, gen);
    let (status, body) = app.post_form("/cases", Some(&red()), &[("caption", "offline")]).await;
    assert_eq!(status, StatusCode::BAD_GATEWAY, "{body}");
    assert_eq!(body["stage"], "embedding");
    assert_eq!(body["retriable"], true);
}

#[tokio::test(flavor = "multi_thread")]
async fn failed_persist_leaves_store_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let app = seeded(dir.path()).await;
    let before = app.get("/health").await.1;

    // A directory where the staged text file should go makes persisting fail.
    let blocker = dir.path().join("text.db.tmp");
    std::fs::create_dir(&blocker).unwrap();
    let novel = scene([5, 5, 5], [255, 0, 255]);
    let (status, body) = app.post_form("/cases", Some(&novel), &[("caption", "never lands")]).await;
    assert_eq!(status, StatusCode::INTERNAL_SERVER_ERROR, "{body}");
    assert_eq!(body["stage"], "persist");
    let fix = json!({"corrected_caption": "never lands either", "operator_id": "op"});
    assert_eq!(app.post_json("/cases/0/correct", fix).await.0, StatusCode::INTERNAL_SERVER_ERROR);

    assert_eq!(app.get("/health").await.1, before);
    assert_eq!(app.get("/cases/0").await.1["revision"], serde_json::Value::Null);
    let on_disk = StorePair::load(dir.path()).unwrap();
    assert_eq!(on_disk.len(), 3);
    assert_eq!(on_disk.record(0).unwrap().revision, 0);
    let images = std::fs::read_dir(dir.path().join("images")).unwrap().count();
    assert_eq!(images, 3, "orphaned image left behind");

    std::fs::remove_dir(&blocker).unwrap();
    assert_eq!(app.insert(&novel, "lands now").await, 3);
    assert_eq!(StorePair::load(dir.path()).unwrap().len(), 4);
}

#[tokio::test(flavor = "multi_thread")]
async fn end_to_end_over_http_services() {
    let addr = spawn_mocks(DIM).await;
    let dir = tempfile::tempdir().unwrap();
    let (gw, gen, endpoints) = http_backends(addr, DIM);
    let mut config = cornerrag_server::ServerConfig::new(dir.path());
    config.endpoints = endpoints.clone();
    let state = Arc::new(cornerrag_server::AppState::open(gw, None, gen, config).unwrap());
    let app = TestApp {
        router: cornerrag_server::router(state.clone()),
        state,
    };

    app.insert(&red(), "Fallen tree blocking the right lane").await;
    app.insert(&green(), "Pedestrian crossing outside a crosswalk").await;
    let health = app.get("/health").await.1;
    assert_eq!(health["size"], 2);
    assert_eq!(health["endpoints"]["generator"], endpoints.generator.unwrap());

    let (status, reply) = app.query(&green(), "0.5").await;
    assert_eq!(status, StatusCode::OK, "{reply}");
    assert_eq!(reply["retrieval"]["index"], 1);
    assert_eq!(reply["generated_description"], "ECHO:Pedestrian crossing outside a crosswalk");

    let fix = json!({"corrected_caption": "Jaywalker between parked cars", "operator_id": "op"});
    assert_eq!(app.post_json("/cases/1/correct", fix).await.0, StatusCode::OK);
    let (_, reply) = app.query(&green(), "0.5").await;
    assert_eq!(reply["generated_description"], "ECHO:Jaywalker between parked cars");
}

#[tokio::test(flavor = "multi_thread")]
async fn two_pass_property_with_a_new_case() {
    let dir = tempfile::tempdir().unwrap();
    let app = seeded(dir.path()).await;
    let novel = scene([140, 0, 160], [255, 255, 255]);

    let (_, first) = app.query(&novel, "0.5").await;
    let before = first["generated_description"].as_str().unwrap().to_string();
    let corrected = "Overturned scooter beside the median";
    assert!(!before.contains(corrected));

    let (status, body) = app
        .post_form("/cases", Some(&novel), &[("caption", corrected), ("source", "human_correction")])
        .await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["index"], 3);

    let (_, second) = app.query(&perturbed(&novel), "0.5").await;
    assert_eq!(second["retrieval"]["index"], 3);
    assert!(second["generated_description"].as_str().unwrap().contains(corrected));
}
