use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use axum::body::{to_bytes, Body};
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use marktrack_core::config::Config;
use marktrack_core::correction::{create_reviews, ReviewKind};
use marktrack_core::harness::{generate_scene, marks_from_gt, write_scene, SceneSpec};
use marktrack_core::marking::{schedule_mark_frames, MarkDocument};
use marktrack_core::tracklets::TrackDocument;
use marktrack_service::{router, AppState};
use serde_json::{json, Value};
use tower::ServiceExt;

struct Fixture {
    _dir: tempfile::TempDir,
    app: Router,
    manifest: String,
    marks: MarkDocument,
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let spec = SceneSpec {
        width: 160,
        height: 120,
        frames: 60,
        targets: 3,
        speed: 2.0,
        seed: 4,
        ..SceneSpec::default()
    };
    let scene = generate_scene(&spec).unwrap();
    let manifest = write_scene(&scene, &dir.path().join("scene")).unwrap();
    let frames = schedule_mark_frames(spec.frames, &[], 3, Config::default().marking.min_total_marks);
    let marks = marks_from_gt(&scene.gt, &frames);
    let app = router(AppState::new(dir.path().join("projects")));
    Fixture {
        manifest: manifest.display().to_string(),
        _dir: dir,
        app,
        marks,
    }
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(v) => req
            .header("content-type", "application/json")
            .body(Body::from(serde_json::to_vec(&v).unwrap())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    (status, to_bytes(resp.into_body(), usize::MAX).await.unwrap().to_vec())
}

async fn call_json(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (status, bytes) = call(app, method, uri, body).await;
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

async fn create(f: &Fixture, id: &str) {
    let (status, body) = call_json(&f.app, Method::POST, "/projects", Some(json!({"id": id, "manifest": f.manifest, "seed": 7}))).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    assert_eq!(body["stage"], "created");
}

async fn track_and_wait(f: &Fixture, id: &str) {
    let (status, body) = call_json(&f.app, Method::POST, &format!("/projects/{id}/track"), None).await;
    assert_eq!(status, StatusCode::ACCEPTED, "{body}");
    for _ in 0..600 {
        let (_, s) = call_json(&f.app, Method::GET, &format!("/projects/{id}"), None).await;
        match s["job"]["state"].as_str().unwrap() {
            "done" => {
                assert_eq!(s["stage"], "matched");
                assert!(s["job"]["progress"].as_array().unwrap().iter().all(|p| p == "matched"));
                return;
            }
            "failed" => panic!("tracking failed: {s}"),
            _ => tokio::time::sleep(Duration::from_millis(100)).await,
        }
    }
    panic!("tracking did not finish");
}

async fn tracks(f: &Fixture, id: &str) -> TrackDocument {
    let (status, bytes) = call(&f.app, Method::GET, &format!("/projects/{id}/tracks"), None).await;
    assert_eq!(status, StatusCode::OK);
    TrackDocument::from_json(std::str::from_utf8(&bytes).unwrap()).unwrap()
}

async fn reviews(f: &Fixture, id: &str) -> (String, Value) {
    let (status, body) = call_json(&f.app, Method::GET, &format!("/projects/{id}/reviews"), None).await;
    assert_eq!(status, StatusCode::OK);
    (body["token"].as_str().unwrap().to_string(), body["reviews"].clone())
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn tracking_an_unmarked_project_is_a_precondition_error() {
    let f = fixture();
    create(&f, "bare").await;
    let (status, body) = call_json(&f.app, Method::POST, "/projects/bare/track", None).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["error"], "stage");
    let (status, body) = call_json(&f.app, Method::GET, "/projects/bare/reviews", None).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["error"], "stage");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn unknown_ids_are_not_found() {
    let f = fixture();
    let (status, body) = call_json(&f.app, Method::GET, "/projects/missing", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error"], "not_found");
    let (status, _) = call_json(&f.app, Method::GET, "/projects/bad.id", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    create(&f, "p").await;
    let (status, body) = call_json(&f.app, Method::POST, "/projects", Some(json!({"id": "p", "manifest": f.manifest}))).await;
    assert_eq!(status, StatusCode::CONFLICT, "{body}");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn marks_schedule_and_frames() {
    let f = fixture();
    create(&f, "m").await;
    let (status, body) = call_json(&f.app, Method::GET, "/projects/m/schedule", None).await;
    assert_eq!(status, StatusCode::OK);
    let first: Vec<usize> = serde_json::from_value(body["frames"].clone()).unwrap();
    assert_eq!((first[0], *first.last().unwrap()), (1, 60));

    let (status, body) = call_json(&f.app, Method::PUT, "/projects/m/marks", Some(serde_json::to_value(&f.marks).unwrap())).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["stage"], "marked");
    let (_, back) = call_json(&f.app, Method::GET, "/projects/m/marks", None).await;
    assert_eq!(serde_json::from_value::<MarkDocument>(back).unwrap(), f.marks);

    let (status, png) = call(&f.app, Method::GET, "/projects/m/frames/1", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(&png[1..4], b"PNG");
    let (status, body) = call_json(&f.app, Method::GET, "/projects/m/frames/61", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error"], "frame_out_of_range");

    let mut bad = f.marks.clone();
    bad.frames[0].frame = 500;
    let (status, _) = call_json(&f.app, Method::PUT, "/projects/m/marks", Some(serde_json::to_value(&bad).unwrap())).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn review_and_apply_exchange() {
    let f = fixture();
    create(&f, "x").await;
    call_json(&f.app, Method::PUT, "/projects/x/marks", Some(serde_json::to_value(&f.marks).unwrap())).await;
    track_and_wait(&f, "x").await;

    let original = tracks(&f, "x").await;
    let (token, list) = reviews(&f, "x").await;
    assert_eq!(token, "r1");
    assert_eq!(list, serde_json::to_value(create_reviews(&original, &Config::default().correction)).unwrap());
    let victim = original.tracklets.iter().find(|t| t.len() > 10).unwrap();
    let (id, frame) = (victim.id, victim.start() + victim.len() / 2);
    assert!(!list
        .as_array()
        .unwrap()
        .iter()
        .any(|r| r["kind"] == "fragment" && r["tracklet_id"] == id));

    // One Break: the head now ends early and must be reviewed.
    let brk = json!({"token": token, "seq": 1, "ops": [{"type": "manual", "op": {"kind": "break", "id": id, "frame": frame}}]});
    let (status, body) = call_json(&f.app, Method::POST, "/projects/x/apply", Some(brk.clone())).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let token2 = body["token"].as_str().unwrap().to_string();
    assert_ne!(token2, token);
    let (served_token, list) = reviews(&f, "x").await;
    assert_eq!(served_token, token2);
    let broken = tracks(&f, "x").await;
    assert_eq!(broken.tracklets.len(), original.tracklets.len() + 1);
    let fresh = create_reviews(&broken, &Config::default().correction);
    assert_eq!(list, serde_json::to_value(&fresh).unwrap());
    let head = fresh
        .iter()
        .find(|r| r.kind == ReviewKind::Fragment && r.tracklet_id == id)
        .expect("fragment review for the severed tracklet");
    assert_eq!(head.error_frame, frame - 1);

    // Replaying the old token is stale; the response names the current one.
    let (status, body) = call_json(&f.app, Method::POST, "/projects/x/apply", Some(brk)).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!((body["error"].as_str(), body["token"].as_str()), (Some("stale_token"), Some(token2.as_str())));

    // Sequence numbers must increase.
    let noop = |seq: u64| json!({"token": token2, "seq": seq, "ops": []});
    let (status, body) = call_json(&f.app, Method::POST, "/projects/x/apply", Some(noop(1))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["error"], "out_of_order");

    // Unknown ids inside a batch are not found and change nothing.
    let ghost = json!({"token": token2, "seq": 5, "ops": [{"type": "manual", "op": {"kind": "remove", "id": 999}}]});
    let (status, body) = call_json(&f.app, Method::POST, "/projects/x/apply", Some(ghost)).await;
    assert_eq!(status, StatusCode::NOT_FOUND, "{body}");
    let ghost = json!({"token": token2, "seq": 5, "ops": [{"type": "answer", "review_id": "nope", "answer": {"special": "remove_track"}}]});
    let (status, _) = call_json(&f.app, Method::POST, "/projects/x/apply", Some(ghost)).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(tracks(&f, "x").await, broken);

    // Answering the new fragment review through the API.
    let answer = json!({"token": token2, "seq": 6, "ops": [{"type": "answer", "review_id": head.id, "answer": {"special": "remove_track"}}]});
    let (status, body) = call_json(&f.app, Method::POST, "/projects/x/apply", Some(answer)).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["results"][0]["report"]["outcome"]["outcome"], "removed");
    assert!(tracks(&f, "x").await.get(id).is_err());

    // Undo walks back both changes.
    let (status, body) = call_json(&f.app, Method::POST, "/projects/x/undo", None).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(tracks(&f, "x").await, broken);
    let (_, body) = call_json(&f.app, Method::POST, "/projects/x/undo", None).await;
    assert_eq!(body["can_undo"], false);
    let restored = tracks(&f, "x").await;
    assert_eq!(restored.tracklets, original.tracklets);
    let (status, _) = call_json(&f.app, Method::POST, "/projects/x/undo", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let (status, csv) = call(&f.app, Method::GET, "/projects/x/tracks?format=csv", None).await;
    assert_eq!(status, StatusCode::OK);
    let csv = String::from_utf8(csv).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "track_id,frame,x,y,orientation_rad,length,width,interpolated,confidence"
    );
    let states: usize = restored.tracklets.iter().map(|t| t.len()).sum();
    assert_eq!(csv.lines().count(), states + 1);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_batches_are_serialized() {
    let f = fixture();
    create(&f, "c").await;
    call_json(&f.app, Method::PUT, "/projects/c/marks", Some(serde_json::to_value(&f.marks).unwrap())).await;
    track_and_wait(&f, "c").await;
    let (token, _) = reviews(&f, "c").await;
    let app = Arc::new(f.app.clone());
    let handles: Vec<_> = (1..=6u64)
        .map(|seq| {
            let app = app.clone();
            let body = json!({"token": token, "seq": seq, "ops": []});
            tokio::spawn(async move { call_json(&app, Method::POST, "/projects/c/apply", Some(body)).await.0 })
        })
        .collect();
    let mut ok = 0;
    for h in handles {
        match h.await.unwrap() {
            StatusCode::OK => ok += 1,
            s => assert_eq!(s, StatusCode::CONFLICT),
        }
    }
    assert_eq!(ok, 1);
    let (_, s) = call_json(&f.app, Method::GET, "/projects/c", None).await;
    assert_eq!(s["revision"], 2);
}

#[test]
fn projects_reload_from_disk() {
    let f = fixture();
    let rt = tokio::runtime::Runtime::new().unwrap();
    rt.block_on(create(&f, "disk"));
    let root = f._dir.path().join("projects");
    let again = router(AppState::new(&root));
    let (status, body) = rt.block_on(call_json(&again, Method::GET, "/projects/disk", None));
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["id"], "disk");
    assert!(Path::new(&root.join("disk/project.json")).is_file());
}
