//! A tracking project persisted as a directory of JSON documents.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::run::{track_video, ChunkSummary, CorrectionModel, Progress, TrackingRun};
use super::Stage;
use crate::chunking::plan_chunks;
use crate::config::Config;
use crate::correction::{apply_manual, apply_review_answer, create_reviews, AnswerReport, ManualOp, Review, ReviewAnswer};
use crate::error::{Error, Result};
use crate::harness::{simulate_reviews, GroundTruth, SimulationContext, Transcript};
use crate::marking::{schedule_for_marks, DerivedParams, MarkDocument};
use crate::media::{open_sequence, FrameSequence, Video};
use crate::tracklets::TrackDocument;

pub const PROJECT_VERSION: u32 = 1;

const META: &str = "project.json";
const CONFIG: &str = "config.json";
const MARKS: &str = "marks.json";
const PARAMS: &str = "params.json";
const TRACKS: &str = "tracks.json";
const INITIAL: &str = "initial.json";
const MODEL: &str = "model.json";
const CHUNKS: &str = "chunks.json";
const UNDO: &str = "undo.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectMeta {
    pub version: u32,
    pub id: String,
    /// Absolute path of the video manifest.
    pub manifest: PathBuf,
    pub stage: Stage,
    pub seed: u64,
    /// Bumped on every change of the track document; the batch token.
    pub revision: u64,
    /// Last applied client sequence number.
    pub last_seq: u64,
}

/// One entry of an apply-batch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum BatchOp {
    Manual { op: ManualOp },
    Answer { review_id: String, answer: ReviewAnswer },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum OpResult {
    Manual,
    Answer { report: AnswerReport },
}

/// How to undo one applied operation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
enum Undo {
    Op { op: ManualOp },
    Snapshot { document: TrackDocument },
}

#[derive(Debug)]
pub struct Project {
    dir: PathBuf,
    pub meta: ProjectMeta,
    pub config: Config,
    pub marks: Option<MarkDocument>,
    pub params: Option<DerivedParams>,
    pub tracks: Option<TrackDocument>,
    pub initial: Option<TrackDocument>,
    pub model: Option<CorrectionModel>,
    pub chunks: Vec<ChunkSummary>,
    undo: Vec<Undo>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, text + "\n").map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<Option<T>> {
    match std::fs::read_to_string(path) {
        Ok(text) => Ok(Some(serde_json::from_str(&text)?)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(Error::io(path, e)),
    }
}

impl Project {
    /// Creates `dir` (which must not hold a project yet) for the video
    /// described by `manifest`.
    pub fn create(dir: &Path, manifest: &Path, config: Config, seed: u64) -> Result<Project> {
        let manifest = manifest.canonicalize().map_err(|e| Error::io(manifest, e))?;
        open_sequence(&manifest)?;
        if dir.join(META).exists() {
            return Err(Error::Precondition(format!("{} already holds a project", dir.display())));
        }
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let id = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "project".into());
        let p = Project {
            dir: dir.to_path_buf(),
            meta: ProjectMeta {
                version: PROJECT_VERSION,
                id,
                manifest,
                stage: Stage::Created,
                seed,
                revision: 0,
                last_seq: 0,
            },
            config,
            marks: None,
            params: None,
            tracks: None,
            initial: None,
            model: None,
            chunks: vec![],
            undo: vec![],
        };
        p.save()?;
        Ok(p)
    }

    pub fn open(dir: &Path) -> Result<Project> {
        let meta: ProjectMeta = read_json(&dir.join(META))?
            .ok_or_else(|| Error::Precondition(format!("{} holds no project", dir.display())))?;
        if meta.version != PROJECT_VERSION {
            return Err(Error::Serde(format!("unsupported project version {}", meta.version)));
        }
        let tracks: Option<TrackDocument> = read_json(&dir.join(TRACKS))?;
        if let Some(t) = &tracks {
            t.validate()?;
        }
        Ok(Project {
            dir: dir.to_path_buf(),
            meta,
            config: read_json(&dir.join(CONFIG))?.unwrap_or_default(),
            marks: read_json(&dir.join(MARKS))?,
            params: read_json(&dir.join(PARAMS))?,
            tracks,
            initial: read_json(&dir.join(INITIAL))?,
            model: read_json(&dir.join(MODEL))?,
            chunks: read_json(&dir.join(CHUNKS))?.unwrap_or_default(),
            undo: read_json(&dir.join(UNDO))?.unwrap_or_default(),
        })
    }

    pub fn save(&self) -> Result<()> {
        write_json(&self.dir.join(META), &self.meta)?;
        write_json(&self.dir.join(CONFIG), &self.config)?;
        let optional: [(&str, Option<serde_json::Value>); 5] = [
            (MARKS, self.marks.as_ref().map(serde_json::to_value).transpose()?),
            (PARAMS, self.params.as_ref().map(serde_json::to_value).transpose()?),
            (TRACKS, self.tracks.as_ref().map(serde_json::to_value).transpose()?),
            (INITIAL, self.initial.as_ref().map(serde_json::to_value).transpose()?),
            (MODEL, self.model.as_ref().map(serde_json::to_value).transpose()?),
        ];
        for (name, value) in optional {
            if let Some(v) = value {
                write_json(&self.dir.join(name), &v)?;
            }
        }
        write_json(&self.dir.join(CHUNKS), &self.chunks)?;
        write_json(&self.dir.join(UNDO), &self.undo)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn tracks_path(&self) -> PathBuf {
        self.dir.join(TRACKS)
    }

    pub fn video(&self) -> Result<FrameSequence> {
        open_sequence(&self.meta.manifest)
    }

    /// Frames the user should mark next.
    pub fn mark_schedule(&self) -> Result<Vec<usize>> {
        let n = self.video()?.frame_count();
        let plan = plan_chunks(n, &self.config.chunking)?;
        let empty = MarkDocument::new(vec![]);
        Ok(schedule_for_marks(
            n,
            &plan.overlaps,
            self.marks.as_ref().unwrap_or(&empty),
            &self.config.marking,
        ))
    }

    pub fn set_marks(&mut self, marks: MarkDocument) -> Result<()> {
        if self.meta.stage > Stage::Marked {
            return Err(Error::Stage(format!("marks are fixed once tracking ran (stage {:?})", self.meta.stage)));
        }
        let v = self.video()?;
        marks.validate(v.width(), v.height(), v.frame_count())?;
        self.meta.stage = if marks.total_marks() > 0 { Stage::Marked } else { Stage::Created };
        self.marks = Some(marks);
        self.save()
    }

    /// Runs the automatic stages; the project must be marked and not yet
    /// tracked.
    pub fn track(&mut self, progress: &(dyn Fn(Progress) + Sync)) -> Result<TrackingRun> {
        self.check_trackable()?;
        let video = self.video()?;
        let run = track_video(&video, self.marks.as_ref().expect("checked"), &self.config, self.meta.seed, progress)?;
        self.store_run(run)
    }

    pub fn check_trackable(&self) -> Result<()> {
        match self.meta.stage {
            Stage::Created => Err(Error::Stage("the project has no marks yet".into())),
            Stage::Marked => Ok(()),
            s => Err(Error::Stage(format!("tracking already ran (stage {s:?})"))),
        }
    }

    /// Records a finished run: the matched document becomes the working
    /// track document.
    pub fn store_run(&mut self, run: TrackingRun) -> Result<TrackingRun> {
        self.check_trackable()?;
        self.params = Some(run.params.clone());
        self.tracks = Some(run.document.clone());
        self.initial = Some(run.initial.clone());
        self.model = Some(run.model);
        self.chunks = run.chunks.clone();
        self.meta.stage = Stage::Matched;
        self.meta.revision += 1;
        self.undo.clear();
        self.save()?;
        Ok(run)
    }

    pub fn documents(&self) -> Result<&TrackDocument> {
        self.tracks
            .as_ref()
            .ok_or_else(|| Error::Stage("no track document; run tracking first".into()))
    }

    pub fn batch_token(&self) -> String {
        format!("r{}", self.meta.revision)
    }

    /// The full, freshly built review list.
    pub fn reviews(&self) -> Result<Vec<Review>> {
        Ok(create_reviews(self.documents()?, &self.config.correction))
    }

    /// Applies a batch in order. Nothing is changed unless every operation
    /// succeeds.
    pub fn apply(&mut self, token: &str, seq: u64, ops: &[BatchOp]) -> Result<Vec<OpResult>> {
        let current = self.batch_token();
        if token != current {
            return Err(Error::StaleToken {
                current,
                got: token.to_string(),
            });
        }
        if seq <= self.meta.last_seq {
            return Err(Error::OutOfOrder {
                last: self.meta.last_seq,
                got: seq,
            });
        }
        let mut doc = self.documents()?.clone();
        let video = self.video()?;
        let (params, model) = self.correction_inputs()?;
        let gaps = model.gap_model(&video, &self.config.correction);
        let mut undo = Vec::new();
        let mut results = Vec::new();
        for op in ops {
            match op {
                BatchOp::Manual { op } => {
                    let inverse = apply_manual(&mut doc, op)?;
                    undo.push(Undo::Op { op: inverse });
                    results.push(OpResult::Manual);
                }
                BatchOp::Answer { review_id, answer } => {
                    let review = create_reviews(&doc, &self.config.correction)
                        .into_iter()
                        .find(|r| &r.id == review_id)
                        .ok_or_else(|| Error::UnknownReview(review_id.clone()))?;
                    let before = doc.clone();
                    let report = apply_review_answer(&mut doc, &review, answer, &gaps, &params, &self.config.correction)?;
                    undo.push(Undo::Snapshot { document: before });
                    results.push(OpResult::Answer { report });
                }
            }
        }
        doc.validate()?;
        self.tracks = Some(doc);
        self.undo.extend(undo);
        self.meta.last_seq = seq;
        self.commit_change()?;
        Ok(results)
    }

    /// Reverts the most recent operation.
    pub fn undo(&mut self) -> Result<()> {
        let entry = self
            .undo
            .pop()
            .ok_or_else(|| Error::InvalidOperation("nothing to undo".into()))?;
        let mut doc = self.documents()?.clone();
        match entry {
            Undo::Op { op } => {
                apply_manual(&mut doc, &op)?;
            }
            Undo::Snapshot { document } => doc = document,
        }
        self.tracks = Some(doc);
        self.commit_change()
    }

    pub fn can_undo(&self) -> bool {
        !self.undo.is_empty()
    }

    fn commit_change(&mut self) -> Result<()> {
        self.meta.stage = Stage::Correcting;
        self.meta.revision += 1;
        self.save()
    }

    fn correction_inputs(&self) -> Result<(DerivedParams, CorrectionModel)> {
        match (&self.params, &self.model) {
            (Some(p), Some(m)) => Ok((p.clone(), *m)),
            _ => Err(Error::Stage("no tracking results; run tracking first".into())),
        }
    }

    /// Answers every review from ground truth; `match_dist` defaults to the
    /// derived body length.
    pub fn simulate(&mut self, gt: &GroundTruth, match_dist: Option<f64>, max_answers: usize) -> Result<Transcript> {
        let mut doc = self.documents()?.clone();
        let before = doc.clone();
        let video = self.video()?;
        let (params, model) = self.correction_inputs()?;
        let gaps = model.gap_model(&video, &self.config.correction);
        let ctx = SimulationContext {
            gt,
            gaps: &gaps,
            params: &params,
            cfg: &self.config.correction,
            match_dist: match_dist.unwrap_or(params.body_length),
            window: self.config.harness.id_return_window,
            max_answers,
        };
        let transcript = simulate_reviews(&mut doc, &ctx)?;
        if !transcript.entries.is_empty() {
            self.tracks = Some(doc);
            self.undo.push(Undo::Snapshot { document: before });
            self.commit_change()?;
        }
        Ok(transcript)
    }

    pub fn write_csv(&self, out: impl std::io::Write) -> Result<()> {
        self.documents()?.write_csv(out)
    }
}
