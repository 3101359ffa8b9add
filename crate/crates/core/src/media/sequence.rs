use std::collections::{HashMap, VecDeque};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::frame::{ColorMode, Frame};
use crate::error::{Error, Result};

/// Random access to the frames of a video, indexed from 1.
pub trait Video: Sync {
    fn frame_count(&self) -> usize;
    fn width(&self) -> u32;
    fn height(&self) -> u32;
    fn frame(&self, t: usize) -> Result<Arc<Frame>>;

    fn check_index(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.frame_count() {
            return Err(Error::FrameOutOfRange {
                index: t,
                count: self.frame_count(),
            });
        }
        Ok(())
    }
}

/// The text document describing a frame directory.
///
/// `pattern` names frame files relative to the manifest; its run of `#`
/// characters is replaced by the zero-padded frame index.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub frame_count: usize,
    pub width: u32,
    pub height: u32,
    pub color_mode: ColorMode,
    pub pattern: String,
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Manifest> {
        let m: Manifest = toml::from_str(text).map_err(|e| Error::Manifest(e.to_string()))?;
        if !m.pattern.contains('#') {
            return Err(Error::Manifest(format!("pattern {:?} has no '#' index run", m.pattern)));
        }
        Ok(m)
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("manifest serialises")
    }

    pub fn file_name(&self, t: usize) -> String {
        let start = self.pattern.find('#').expect("validated pattern");
        let run = self.pattern[start..].chars().take_while(|&c| c == '#').count();
        format!(
            "{}{:0width$}{}",
            &self.pattern[..start],
            t,
            &self.pattern[start + run..],
            width = run
        )
    }
}

/// A frame directory opened through its manifest. Frames are decoded lazily
/// and kept in a bounded cache.
pub struct FrameSequence {
    manifest: Manifest,
    dir: PathBuf,
    source: PathBuf,
    cache: Mutex<FrameCache>,
}

struct FrameCache {
    frames: HashMap<usize, Arc<Frame>>,
    order: VecDeque<usize>,
    capacity: usize,
}

impl FrameSequence {
    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn source(&self) -> &Path {
        &self.source
    }

    pub fn color_mode(&self) -> ColorMode {
        self.manifest.color_mode
    }

    pub fn frame_path(&self, t: usize) -> PathBuf {
        self.dir.join(self.manifest.file_name(t))
    }

    /// Decodes frame `t` without consulting the cache.
    pub fn read_frame(&self, t: usize) -> Result<Frame> {
        self.check_index(t)?;
        let path = self.frame_path(t);
        let img = image::open(&path).map_err(|e| Error::Decode {
            path: path.clone(),
            message: e.to_string(),
        })?;
        let frame = Frame::from_image(img, self.manifest.color_mode);
        if (frame.width(), frame.height()) != (self.manifest.width, self.manifest.height) {
            return Err(Error::DimensionMismatch {
                frame: t,
                got: (frame.width(), frame.height()),
                expected: (self.manifest.width, self.manifest.height),
            });
        }
        Ok(frame)
    }
}

/// Opens a manifest, checking that every listed frame exists and has the
/// declared dimensions. Only image headers are read.
pub fn open_sequence(manifest_path: &Path) -> Result<FrameSequence> {
    let text = std::fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest = Manifest::parse(&text)?;
    if manifest.frame_count == 0 {
        return Err(Error::Manifest("zero frames".into()));
    }
    if manifest.frame_count < 2 {
        return Err(Error::Manifest("a sequence needs at least two frames".into()));
    }
    let dir = manifest_path.parent().map(Path::to_path_buf).unwrap_or_default();
    for t in 1..=manifest.frame_count {
        let path = dir.join(manifest.file_name(t));
        if !path.exists() {
            return Err(Error::io(
                &path,
                std::io::Error::new(std::io::ErrorKind::NotFound, "frame file missing"),
            ));
        }
        let dims = image::image_dimensions(&path).map_err(|e| Error::Decode {
            path: path.clone(),
            message: e.to_string(),
        })?;
        if dims != (manifest.width, manifest.height) {
            return Err(Error::DimensionMismatch {
                frame: t,
                got: dims,
                expected: (manifest.width, manifest.height),
            });
        }
    }
    Ok(FrameSequence {
        manifest,
        dir,
        source: manifest_path.to_path_buf(),
        cache: Mutex::new(FrameCache {
            frames: HashMap::new(),
            order: VecDeque::new(),
            capacity: 256,
        }),
    })
}

impl Video for FrameSequence {
    fn frame_count(&self) -> usize {
        self.manifest.frame_count
    }

    fn width(&self) -> u32 {
        self.manifest.width
    }

    fn height(&self) -> u32 {
        self.manifest.height
    }

    fn frame(&self, t: usize) -> Result<Arc<Frame>> {
        if let Some(f) = self.cache.lock().expect("frame cache poisoned").frames.get(&t) {
            return Ok(f.clone());
        }
        let frame = Arc::new(self.read_frame(t)?);
        let mut cache = self.cache.lock().expect("frame cache poisoned");
        if !cache.frames.contains_key(&t) {
            if cache.order.len() >= cache.capacity {
                if let Some(old) = cache.order.pop_front() {
                    cache.frames.remove(&old);
                }
            }
            cache.order.push_back(t);
            cache.frames.insert(t, frame.clone());
        }
        Ok(frame)
    }
}

/// Frames held in memory; used for synthetic scenes and tests.
#[derive(Clone, Debug)]
pub struct InMemoryVideo {
    frames: Vec<Arc<Frame>>,
}

impl InMemoryVideo {
    pub fn new(frames: Vec<Frame>) -> Result<Self> {
        let Some(first) = frames.first() else {
            return Err(Error::Manifest("zero frames".into()));
        };
        let dims = (first.width(), first.height());
        for (i, f) in frames.iter().enumerate() {
            if (f.width(), f.height()) != dims {
                return Err(Error::DimensionMismatch {
                    frame: i + 1,
                    got: (f.width(), f.height()),
                    expected: dims,
                });
            }
        }
        Ok(InMemoryVideo {
            frames: frames.into_iter().map(Arc::new).collect(),
        })
    }

    pub fn frames(&self) -> &[Arc<Frame>] {
        &self.frames
    }
}

impl Video for InMemoryVideo {
    fn frame_count(&self) -> usize {
        self.frames.len()
    }

    fn width(&self) -> u32 {
        self.frames[0].width()
    }

    fn height(&self) -> u32 {
        self.frames[0].height()
    }

    fn frame(&self, t: usize) -> Result<Arc<Frame>> {
        self.check_index(t)?;
        Ok(self.frames[t - 1].clone())
    }
}

/// A contiguous frame range `[start, end]` of another video, re-indexed from 1.
pub struct ChunkView<'a> {
    inner: &'a dyn Video,
    start: usize,
    end: usize,
}

impl<'a> ChunkView<'a> {
    pub fn new(inner: &'a dyn Video, start: usize, end: usize) -> Result<Self> {
        inner.check_index(start)?;
        inner.check_index(end)?;
        if end < start {
            return Err(Error::Precondition(format!("empty chunk [{start}, {end}]")));
        }
        Ok(ChunkView { inner, start, end })
    }

    /// Global index of local frame 1.
    pub fn offset(&self) -> usize {
        self.start - 1
    }
}

impl Video for ChunkView<'_> {
    fn frame_count(&self) -> usize {
        self.end - self.start + 1
    }

    fn width(&self) -> u32 {
        self.inner.width()
    }

    fn height(&self) -> u32 {
        self.inner.height()
    }

    fn frame(&self, t: usize) -> Result<Arc<Frame>> {
        self.check_index(t)?;
        self.inner.frame(t + self.offset())
    }
}
