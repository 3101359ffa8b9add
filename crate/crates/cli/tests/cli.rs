use std::path::Path;
use std::process::{Command, Output};

fn marktrack(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_marktrack")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = marktrack(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path) -> std::path::PathBuf {
    let spec = dir.join("scene.toml");
    std::fs::write(&spec, "width = 160\nheight = 120\nframes = 40\ntargets = 2\nspeed = 2.0\nseed = 3\n").unwrap();
    let out = dir.join("scene");
    ok(&["synth", s(&spec), "--out", s(&out)]);
    out
}

#[test]
fn ground_truth_scores_perfectly_against_itself() {
    let dir = tempfile::tempdir().unwrap();
    let scene = synth(dir.path());
    let gt: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(scene.join("gt.json")).unwrap()).unwrap();
    let states = |t: &serde_json::Value| {
        t["states"]
            .as_array()
            .unwrap()
            .iter()
            .map(|st| {
                serde_json::json!({
                    "frame": st["frame"], "center": st["center"], "orientation": st["orientation"],
                    "length": 10.0, "width": 3.0, "interpolated": false, "confidence": 1.0
                })
            })
            .collect::<Vec<_>>()
    };
    let tracklets: Vec<_> = gt["targets"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| serde_json::json!({ "id": t["id"], "states": states(t) }))
        .collect();
    let doc = serde_json::json!({
        "version": 1, "frame_count": gt["frame_count"], "width": gt["width"], "height": gt["height"],
        "next_id": 100, "connection_threshold": 0.6, "tracklets": tracklets
    });
    let tracks = dir.path().join("tracks.json");
    std::fs::write(&tracks, doc.to_string()).unwrap();
    let report: serde_json::Value = serde_json::from_str(&ok(&["eval", s(&tracks), s(&scene.join("gt.json")), "--json"])).unwrap();
    assert_eq!(report["gt_cov"], 1.0);
    assert_eq!(report["faf"], 0.0);
    assert_eq!(report["avg_pos_error"], 0.0);
    assert_eq!(report["mt"], 2);
    for k in ["ids", "id_integ", "fn_assoc", "pt", "ml"] {
        assert_eq!(report[k], 0, "{k}");
    }
    let table = ok(&["eval", s(&tracks), s(&scene.join("gt.json"))]);
    assert!(table.lines().next().unwrap().contains("GT Cov"));
}

#[test]
fn tracking_without_marks_reports_a_stage_error() {
    let dir = tempfile::tempdir().unwrap();
    let scene = synth(dir.path());
    let project = dir.path().join("p");
    ok(&["init", s(&project), "--manifest", s(&scene.join("manifest.toml"))]);
    let out = marktrack(&["track", s(&project)]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8(out.stderr).unwrap();
    let err: serde_json::Value = serde_json::from_str(stderr.lines().last().unwrap()).unwrap();
    assert_eq!(err["error"], "stage");
}

#[test]
fn missing_files_are_reported_as_errors() {
    let out = marktrack(&["eval", "/nonexistent/tracks.json", "/nonexistent/gt.json"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8(out.stderr).unwrap();
    let err: serde_json::Value = serde_json::from_str(stderr.lines().last().unwrap()).unwrap();
    assert!(err["message"].as_str().unwrap().contains("nonexistent"));
}

#[test]
fn schedule_grows_to_the_marked_target_count() {
    let dir = tempfile::tempdir().unwrap();
    let scene = synth(dir.path());
    let manifest = scene.join("manifest.toml");
    let fresh: Vec<usize> = serde_json::from_str(&ok(&["mark-schedule", s(&manifest)])).unwrap();
    assert_eq!(fresh.first(), Some(&1));
    assert!(fresh.windows(2).all(|w| w[0] < w[1]));
    let marked: Vec<usize> = serde_json::from_str(&ok(&["mark-schedule", s(&manifest), "--marks", s(&scene.join("marks.json"))])).unwrap();
    assert_eq!(fresh, [1, 40]);
    assert!(fresh.iter().all(|f| marked.contains(f)), "{marked:?}");
    assert!(marked.len() > fresh.len());
}

#[test]
fn track_simulate_and_export() {
    let dir = tempfile::tempdir().unwrap();
    let scene = synth(dir.path());
    let project = dir.path().join("p");
    ok(&[
        "--seed",
        "5",
        "init",
        s(&project),
        "--manifest",
        s(&scene.join("manifest.toml")),
        "--marks",
        s(&scene.join("marks.json")),
    ]);
    let summary: serde_json::Value = serde_json::from_str(&ok(&["track", s(&project)])).unwrap();
    assert!(summary["tracklets"].as_u64().unwrap() >= 2);
    let reviews: serde_json::Value = serde_json::from_str(&ok(&["reviews", s(&project)])).unwrap();
    assert!(reviews["token"].is_string());
    let sim = ok(&["simulate", s(&project), "--gt", s(&scene.join("gt.json"))]);
    assert!(sim.starts_with("reviews "));
    let csv_path = dir.path().join("out.csv");
    ok(&["export", s(&project), "--out", s(&csv_path)]);
    let csv = std::fs::read_to_string(csv_path).unwrap();
    assert!(csv.starts_with("track_id,frame,x,y,orientation_rad,length,width,interpolated,confidence"));
    assert!(csv.lines().count() > 40);
}
