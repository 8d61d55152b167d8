use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use axum::Router;
use serde_json::{json, Value};
use tower::ServiceExt;

use robodiary_core::config::Config;
use robodiary_core::fixture::write_walk;
use robodiary_core::memory::{load_folder, validate_folder, EmotionSet};
use robodiary_service::{router, AppState};

fn app(root: &std::path::Path) -> Router {
    let config = Config {
        root: root.to_path_buf(),
        ..Config::default()
    };
    router(AppState::new(config).unwrap())
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let request = Request::builder().method(method).uri(uri);
    let request = match body {
        Some(b) => request
            .header("content-type", "application/json")
            .body(Body::from(b.to_string())),
        None => request.body(Body::empty()),
    }
    .unwrap();
    let response = app.clone().oneshot(request).await.unwrap();
    let status = response.status();
    let bytes = to_bytes(response.into_body(), usize::MAX).await.unwrap();
    let value = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
    (status, value)
}

async fn create(app: &Router, date: &str) -> (StatusCode, Value) {
    call(app, "POST", "/sessions", Some(json!({ "date": date }))).await
}

#[tokio::test]
async fn create_conflict_and_bad_date() {
    let tmp = tempfile::tempdir().unwrap();
    let app = app(tmp.path());
    let (status, body) = create(&app, "2022-12-12").await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(body["state"], "open");
    assert!(tmp.path().join("2022-12-12/events.json").is_file());
    assert_eq!(create(&app, "2022-12-12").await.0, StatusCode::CONFLICT);
    assert_eq!(create(&app, "2022-13-45").await.0, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn create_conflicts_with_recorded_folder() {
    let tmp = tempfile::tempdir().unwrap();
    write_walk(tmp.path()).unwrap();
    let (status, body) = create(&app(tmp.path()), "2022-12-12").await;
    assert_eq!(status, StatusCode::CONFLICT, "{body}");
}

#[tokio::test]
async fn chat_replies_and_stores_placeholder() {
    let tmp = tempfile::tempdir().unwrap();
    let app = app(tmp.path());
    create(&app, "2022-12-12").await;
    let (status, body) = call(
        &app,
        "POST",
        "/sessions/2022-12-12/chat",
        Some(json!({"message": "Hello!"})),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["reply"]["id"], "greeting");
    assert_eq!(body["record"]["action_number"], 0);
    assert_eq!(body["record"]["event_number"], 1);
    let file = body["record"]["image_file"].as_str().unwrap();
    assert!(tmp.path().join("2022-12-12").join(file).is_file());

    let (status, body) = call(
        &app,
        "POST",
        "/sessions/2022-12-12/chat",
        Some(json!({"message": "  "})),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["kind"], "validation");

    let folder = load_folder(&tmp.path().join("2022-12-12"), &EmotionSet::default()).unwrap();
    assert!(validate_folder(&folder, &EmotionSet::default()).is_empty());
}

#[tokio::test]
async fn supplied_image_is_stored_verbatim() {
    let tmp = tempfile::tempdir().unwrap();
    let app = app(tmp.path());
    create(&app, "2022-12-12").await;
    let (_, body) = call(
        &app,
        "POST",
        "/sessions/2022-12-12/chat",
        Some(json!({"message": "Look!", "image_base64": "aGVsbG8="})),
    )
    .await;
    let file = body["record"]["image_file"].as_str().unwrap();
    assert_eq!(
        std::fs::read(tmp.path().join("2022-12-12").join(file)).unwrap(),
        b"hello"
    );
    let (status, _) = call(
        &app,
        "POST",
        "/sessions/2022-12-12/chat",
        Some(json!({"message": "Look!", "image_base64": "***"})),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn toy_play_and_feed() {
    let tmp = tempfile::tempdir().unwrap();
    let app = app(tmp.path());
    create(&app, "2022-12-12").await;
    let (status, body) = call(
        &app,
        "POST",
        "/sessions/2022-12-12/toy-play",
        Some(json!({"toy_name": "ball", "probability": 0.9})),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["record"]["event_status"], "success");
    assert!(body["record"]["image_file"]
        .as_str()
        .unwrap()
        .ends_with("_ball play.png"));

    let (status, _) = call(
        &app,
        "POST",
        "/sessions/2022-12-12/toy-play",
        Some(json!({"toy_name": "ball", "probability": 1.2})),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let (status, body) = call(
        &app,
        "POST",
        "/sessions/2022-12-12/feed",
        Some(json!({"food_tag": "strawberry", "speech": "Was the strawberry good?"})),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["record"]["robot_response"], "yummy");
    assert_eq!(body["record"]["event_status"], "none");
    assert_eq!(body["chat"]["event_number"], 2);
    assert_eq!(body["record"]["event_number"], 3);
}

#[tokio::test]
async fn closed_session_rejects_writes() {
    let tmp = tempfile::tempdir().unwrap();
    let app = app(tmp.path());
    create(&app, "2022-12-12").await;
    let (_, body) = call(&app, "POST", "/sessions/2022-12-12/close", None).await;
    assert_eq!(body["already_closed"], false);
    let (_, body) = call(&app, "POST", "/sessions/2022-12-12/close", None).await;
    assert_eq!(body["already_closed"], true);
    let (status, body) = call(
        &app,
        "POST",
        "/sessions/2022-12-12/chat",
        Some(json!({"message": "Hello!"})),
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["error"]["kind"], "session_closed");
    let (_, body) = call(&app, "GET", "/sessions/2022-12-12", None).await;
    assert_eq!(body["state"], "closed");
}

#[tokio::test]
async fn unknown_sessions_and_images() {
    let tmp = tempfile::tempdir().unwrap();
    let app = app(tmp.path());
    assert_eq!(
        call(&app, "GET", "/sessions/2030-01-01", None).await.0,
        StatusCode::NOT_FOUND
    );
    assert_eq!(
        call(&app, "GET", "/sessions/nonsense", None).await.0,
        StatusCode::NOT_FOUND
    );
    let diary = json!({"mode": "with", "place": "here", "event": "a walk"});
    assert_eq!(
        call(&app, "POST", "/sessions/2030-01-01/diary", Some(diary))
            .await
            .0,
        StatusCode::NOT_FOUND
    );
    create(&app, "2022-12-12").await;
    for uri in [
        "/sessions/2022-12-12/images/missing.png",
        "/sessions/2022-12-12/images/..%2Fevents.json",
        "/sessions/2022-12-12/images/events.json",
    ] {
        assert_eq!(
            call(&app, "GET", uri, None).await.0,
            StatusCode::NOT_FOUND,
            "{uri}"
        );
    }
}

#[tokio::test]
async fn folders_on_disk_are_served_and_summarized() {
    let tmp = tempfile::tempdir().unwrap();
    let fixture = write_walk(tmp.path()).unwrap();
    let config = Config::from_file(&fixture.config).unwrap();
    let app = router(AppState::new(config).unwrap());

    let (status, body) = call(&app, "GET", "/sessions/2022-12-12", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["records"].as_array().unwrap().len(), 15);
    assert_eq!(body["state"], "closed");

    let request = json!({"mode": "with", "place": "University of Tokyo", "event": "a walk"});
    let (status, body) = call(&app, "POST", "/sessions/2022-12-12/diary", Some(request)).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["diary"]["mode"], "with_interaction");
    assert!(!body["diary"]["text"].as_str().unwrap().is_empty());
    let urls = body["image_urls"].as_array().unwrap();
    assert_eq!(urls.len(), 8);
    assert!(std::path::Path::new(body["saved_to"].as_str().unwrap()).is_file());

    let url = urls
        .iter()
        .map(|u| u.as_str().unwrap())
        .find(|u| u.contains("%20"))
        .unwrap();
    let response = app
        .clone()
        .oneshot(Request::get(url).body(Body::empty()).unwrap())
        .await
        .unwrap();
    assert_eq!(response.status(), StatusCode::OK);
    assert_eq!(response.headers()["content-type"], "image/png");

    let request = json!({"mode": "without", "place": "University of Tokyo", "event": "a walk", "seed": 7, "save": false});
    let (status, body) = call(&app, "POST", "/sessions/2022-12-12/diary", Some(request)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["diary"]["mode"], "without_interaction");
    assert_eq!(body["saved_to"], Value::Null);

    let request = json!({"mode": "sideways", "place": "x", "event": "y"});
    let (status, _) = call(&app, "POST", "/sessions/2022-12-12/diary", Some(request)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let request = json!({"mode": "with", "place": "", "event": "a walk"});
    let (status, _) = call(&app, "POST", "/sessions/2022-12-12/diary", Some(request)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn pipeline_errors_name_the_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let fixture = write_walk(tmp.path()).unwrap();
    let config = Config::from_file(&fixture.config).unwrap();
    let app = router(AppState::new(config).unwrap());
    let request = json!({"mode": "with", "place": "campus", "event": "a walk", "k": 0});
    let (status, body) = call(&app, "POST", "/sessions/2022-12-12/diary", Some(request)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["stage"], "select");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 8)]
async fn concurrent_chats_get_consecutive_numbers() {
    let tmp = tempfile::tempdir().unwrap();
    let app = app(tmp.path());
    create(&app, "2022-12-12").await;
    let tasks: Vec<_> = (0..100)
        .map(|i| {
            let app = app.clone();
            tokio::spawn(async move {
                let body = json!({ "message": format!("message {i}") });
                call(&app, "POST", "/sessions/2022-12-12/chat", Some(body)).await
            })
        })
        .collect();
    let mut numbers = Vec::new();
    for task in tasks {
        let (status, body) = task.await.unwrap();
        assert_eq!(status, StatusCode::OK);
        numbers.push(body["record"]["event_number"].as_u64().unwrap());
    }
    numbers.sort_unstable();
    assert_eq!(numbers, (1..=100).collect::<Vec<u64>>());
    let folder = load_folder(&tmp.path().join("2022-12-12"), &EmotionSet::default()).unwrap();
    assert_eq!(folder.records.len(), 100);
}
