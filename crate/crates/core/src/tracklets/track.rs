use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point, Pose};

pub const TRACK_DOCUMENT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackState {
    pub frame: usize,
    pub center: Point,
    pub orientation: f64,
    pub length: f64,
    pub width: f64,
    pub interpolated: bool,
    pub confidence: f64,
}

impl TrackState {
    pub fn from_pose(frame: usize, pose: &Pose, interpolated: bool) -> Self {
        TrackState {
            frame,
            center: pose.center,
            orientation: pose.orientation,
            length: pose.length,
            width: pose.width,
            interpolated,
            confidence: 0.0,
        }
    }

    pub fn pose(&self) -> Pose {
        Pose::new(self.center, self.orientation, self.length, self.width)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConnectionSource {
    Matching,
    Review,
    Manual,
    Stitch,
}

/// One association made on a tracklet: at `frame` the states of `joined_id`
/// (or its gap fill) begin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Connection {
    pub frame: usize,
    pub joined_id: u64,
    pub source: ConnectionSource,
}

/// A keyframe pose supplied by a user (or a simulated one) during review.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub frame: usize,
    pub center: Point,
    pub orientation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tracklet {
    pub id: u64,
    /// One state per frame over a contiguous, ascending range.
    pub states: Vec<TrackState>,
    #[serde(default)]
    pub connections: Vec<Connection>,
    #[serde(default)]
    pub complete: bool,
    #[serde(default)]
    pub exited: bool,
    /// Review annotations applied to this tracklet so far.
    #[serde(default)]
    pub annotations: Vec<Annotation>,
}

impl Tracklet {
    pub fn new(id: u64, states: Vec<TrackState>) -> Self {
        Tracklet {
            id,
            states,
            connections: Vec::new(),
            complete: false,
            exited: false,
            annotations: Vec::new(),
        }
    }

    pub fn start(&self) -> usize {
        self.states[0].frame
    }

    pub fn end(&self) -> usize {
        self.states[self.states.len() - 1].frame
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn covers(&self, frame: usize) -> bool {
        !self.states.is_empty() && frame >= self.start() && frame <= self.end()
    }

    pub fn state(&self, frame: usize) -> Option<&TrackState> {
        if !self.covers(frame) {
            return None;
        }
        self.states.get(frame - self.start())
    }

    pub fn state_mut(&mut self, frame: usize) -> Option<&mut TrackState> {
        if !self.covers(frame) {
            return None;
        }
        let s = self.start();
        self.states.get_mut(frame - s)
    }

    pub fn mean_confidence(&self) -> f64 {
        self.states.iter().map(|s| s.confidence).sum::<f64>() / self.states.len().max(1) as f64
    }

    /// Checks contiguity and ordering of states.
    pub fn validate(&self) -> Result<()> {
        if self.states.is_empty() {
            return Err(Error::InvalidOperation(format!("tracklet {} has no states", self.id)));
        }
        for (i, s) in self.states.iter().enumerate() {
            if s.frame != self.start() + i {
                return Err(Error::InvalidOperation(format!(
                    "tracklet {} states are not contiguous at frame {}",
                    self.id, s.frame
                )));
            }
            if !s.pose().is_finite() {
                return Err(Error::InvalidOperation(format!("tracklet {} has a non-finite state", self.id)));
            }
        }
        Ok(())
    }
}

/// The canonical track document of a video (or of one chunk).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackDocument {
    pub version: u32,
    pub frame_count: usize,
    pub width: u32,
    pub height: u32,
    /// First frame covered, for per-chunk documents; 1 for whole videos.
    #[serde(default = "one")]
    pub first_frame: usize,
    pub next_id: u64,
    /// Current moving threshold on connection-review priority.
    pub connection_threshold: f64,
    pub tracklets: Vec<Tracklet>,
}

fn one() -> usize {
    1
}

impl TrackDocument {
    pub fn new(frame_count: usize, width: u32, height: u32, tracklets: Vec<Tracklet>, threshold: f64) -> Self {
        let next_id = tracklets.iter().map(|t| t.id).max().unwrap_or(0) + 1;
        TrackDocument {
            version: TRACK_DOCUMENT_VERSION,
            frame_count,
            width,
            height,
            first_frame: 1,
            next_id,
            connection_threshold: threshold,
            tracklets,
        }
    }

    pub fn last_frame(&self) -> usize {
        self.first_frame + self.frame_count - 1
    }

    pub fn get(&self, id: u64) -> Result<&Tracklet> {
        self.tracklets.iter().find(|t| t.id == id).ok_or(Error::UnknownTracklet(id))
    }

    pub fn get_mut(&mut self, id: u64) -> Result<&mut Tracklet> {
        self.tracklets.iter_mut().find(|t| t.id == id).ok_or(Error::UnknownTracklet(id))
    }

    pub fn remove(&mut self, id: u64) -> Result<Tracklet> {
        let i = self.tracklets.iter().position(|t| t.id == id).ok_or(Error::UnknownTracklet(id))?;
        Ok(self.tracklets.remove(i))
    }

    pub fn allocate_id(&mut self) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    /// Inserts keeping tracklets ordered by id.
    pub fn insert(&mut self, t: Tracklet) {
        self.next_id = self.next_id.max(t.id + 1);
        let i = self.tracklets.partition_point(|x| x.id < t.id);
        self.tracklets.insert(i, t);
    }

    pub fn in_frame(&self, frame: usize) -> usize {
        self.tracklets.iter().filter(|t| t.covers(frame)).count()
    }

    pub fn validate(&self) -> Result<()> {
        for t in &self.tracklets {
            t.validate()?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("track document serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: TrackDocument = serde_json::from_str(text)?;
        if doc.version != TRACK_DOCUMENT_VERSION {
            return Err(Error::Serde(format!("unsupported track document version {}", doc.version)));
        }
        doc.validate()?;
        Ok(doc)
    }

    /// CSV with one row per state.
    pub fn write_csv(&self, out: impl std::io::Write) -> Result<()> {
        let err = |e: csv::Error| Error::Serde(e.to_string());
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "track_id",
            "frame",
            "x",
            "y",
            "orientation_rad",
            "length",
            "width",
            "interpolated",
            "confidence",
        ])
        .map_err(err)?;
        for t in &self.tracklets {
            for s in &t.states {
                w.write_record([
                    t.id.to_string(),
                    s.frame.to_string(),
                    format!("{:.4}", s.center.x),
                    format!("{:.4}", s.center.y),
                    format!("{:.6}", s.orientation),
                    format!("{:.4}", s.length),
                    format!("{:.4}", s.width),
                    s.interpolated.to_string(),
                    format!("{:.4}", s.confidence),
                ])
                .map_err(err)?;
            }
        }
        w.flush().map_err(|e| Error::Serde(e.to_string()))
    }
}
