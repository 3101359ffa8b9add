use marktrack_core::chunking::plan_chunks;
use marktrack_core::config::{ChunkingConfig, Config};
use marktrack_core::correction::ManualOp;
use marktrack_core::harness::{evaluate, generate_scene, marks_from_gt, write_scene, Scene, SceneSpec};
use marktrack_core::marking::{schedule_mark_frames, MarkDocument};
use marktrack_core::pipeline::{track_video, BatchOp, Project, Stage};
use marktrack_core::Error;

fn scene(frames: usize, targets: usize) -> Scene {
    generate_scene(&SceneSpec {
        width: 160,
        height: 120,
        frames,
        targets,
        speed: 2.0,
        seed: 4,
        ..SceneSpec::default()
    })
    .unwrap()
}

fn marks_for(scene: &Scene, overlaps: &[usize], cfg: &Config) -> MarkDocument {
    let frames = schedule_mark_frames(scene.gt.frame_count, overlaps, scene.gt.targets.len(), cfg.marking.min_total_marks);
    marks_from_gt(&scene.gt, &frames)
}

#[test]
fn chunked_run_matches_ground_truth() {
    let s = scene(200, 4);
    let cfg = Config {
        chunking: ChunkingConfig {
            ideal_len: 100,
            min_len: 40,
            trigger: 150,
        },
        ..Config::default()
    };
    let plan = plan_chunks(200, &cfg.chunking).unwrap();
    assert!(plan.ranges.len() > 1);
    let marks = marks_for(&s, &plan.overlaps, &cfg);
    let run = track_video(&s.video, &marks, &cfg, 2, &|_| {}).unwrap();
    assert_eq!(run.chunks.len(), plan.ranges.len());
    let r = evaluate(&run.document.tracklets, &s.gt, run.params.body_length, cfg.harness.id_return_window);
    assert!(r.gt_cov >= 0.95, "{r:?}");
    assert_eq!((r.ids, r.id_integ), (0, 0), "{r:?}");
    for t in &run.document.tracklets {
        assert!(t.states.windows(2).all(|w| w[1].frame == w[0].frame + 1));
    }
}

#[test]
fn project_lifecycle_survives_reopening() {
    let s = scene(60, 3);
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_scene(&s, &dir.path().join("video")).unwrap();
    let pdir = dir.path().join("p");
    let cfg = Config::default();

    let mut p = Project::create(&pdir, &manifest, cfg.clone(), 9).unwrap();
    assert_eq!(p.meta.stage, Stage::Created);
    assert!(matches!(p.track(&|_| {}), Err(Error::Stage(_))));
    assert!(matches!(Project::create(&pdir, &manifest, cfg.clone(), 9), Err(_)));

    let marks = marks_for(&s, &[], &cfg);
    p.set_marks(marks.clone()).unwrap();
    assert_eq!(Project::open(&pdir).unwrap().marks, Some(marks.clone()));

    let stages = std::sync::Mutex::new(Vec::new());
    p.track(&|pr| stages.lock().unwrap().push(pr.stage)).unwrap();
    let seen = stages.into_inner().unwrap();
    assert!(seen.windows(2).all(|w| w[0] <= w[1]), "{seen:?}");
    assert_eq!(seen.last(), Some(&Stage::Matched));
    assert!(matches!(p.set_marks(marks), Err(Error::Stage(_))));

    let before = Project::open(&pdir).unwrap();
    assert_eq!(before.meta.stage, Stage::Matched);
    let doc = before.documents().unwrap().clone();
    let id = doc.tracklets[0].id;
    let frame = doc.tracklets[0].start() + 10;

    let mut p = Project::open(&pdir).unwrap();
    let token = p.batch_token();
    p.apply(&token, 1, &[BatchOp::Manual { op: ManualOp::Break { id, frame } }]).unwrap();
    assert!(matches!(p.apply(&token, 2, &[]), Err(Error::StaleToken { .. })));
    let reopened = Project::open(&pdir).unwrap();
    assert_eq!(reopened.documents().unwrap().tracklets.len(), doc.tracklets.len() + 1);
    assert_eq!(reopened.meta.last_seq, 1);

    let mut p = reopened;
    assert!(p.can_undo());
    p.undo().unwrap();
    assert_eq!(Project::open(&pdir).unwrap().documents().unwrap().tracklets, doc.tracklets);
}
