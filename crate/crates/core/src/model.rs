//! Shared data model: detections, camera metadata and per-frame box records.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;

pub type CameraId = u32;
pub type FrameIndex = u32;

/// `(frame, position of the detection within that frame)`.
pub type EmbeddingKey = (FrameIndex, usize);

/// One frame-level observation from the detector. Frames are 1-based.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub frame: FrameIndex,
    pub bbox: BoundingBox,
    pub confidence: f64,
    pub class_id: u32,
    pub embedding_key: Option<EmbeddingKey>,
}

impl Detection {
    pub fn new(frame: FrameIndex, bbox: BoundingBox, confidence: f64, class_id: u32) -> Result<Self> {
        if frame == 0 {
            return Err(Error::Config("frame indices are 1-based".into()));
        }
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::Config(format!("confidence {confidence} outside [0, 1]")));
        }
        Ok(Self {
            frame,
            bbox,
            confidence,
            class_id,
            embedding_key: None,
        })
    }
}

/// Embedding vectors keyed by `(frame, det_index)`, all of one dimension.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmbeddingStore {
    dim: usize,
    vectors: BTreeMap<EmbeddingKey, Vec<f64>>,
}

impl EmbeddingStore {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            vectors: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn insert(&mut self, key: EmbeddingKey, values: Vec<f64>) -> Result<()> {
        if values.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: values.len(),
            });
        }
        self.vectors.insert(key, values);
        Ok(())
    }

    pub fn get(&self, key: &EmbeddingKey) -> Option<&[f64]> {
        self.vectors.get(key).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&EmbeddingKey, &Vec<f64>)> {
        self.vectors.iter()
    }
}

/// A camera's detections (sorted by frame, stable within a frame) plus the
/// embeddings they reference.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DetectionSet {
    pub camera_id: CameraId,
    pub detections: Vec<Detection>,
    pub embeddings: Option<EmbeddingStore>,
}

/// A detection paired with its resolved embedding, the tracker's input unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub detection: Detection,
    pub embedding: Option<Vec<f64>>,
}

impl DetectionSet {
    /// Groups detections into frames, resolving embedding keys.
    pub fn frames(&self) -> BTreeMap<FrameIndex, Vec<Observation>> {
        let mut out: BTreeMap<FrameIndex, Vec<Observation>> = BTreeMap::new();
        for det in &self.detections {
            let embedding = match (&self.embeddings, det.embedding_key) {
                (Some(store), Some(key)) => store.get(&key).map(<[f64]>::to_vec),
                _ => None,
            };
            out.entry(det.frame).or_default().push(Observation {
                detection: det.clone(),
                embedding,
            });
        }
        out
    }

    /// Rebuilds a set from per-frame observations, renumbering embedding keys
    /// to the new in-frame positions.
    pub fn from_observations<'a, I>(camera_id: CameraId, dim: Option<usize>, frames: I) -> Result<Self>
    where
        I: IntoIterator<Item = (FrameIndex, &'a [Observation])>,
    {
        let mut detections = Vec::new();
        let mut store = dim.map(EmbeddingStore::new);
        for (frame, obs) in frames {
            for (index, o) in obs.iter().enumerate() {
                let mut det = o.detection.clone();
                det.frame = frame;
                det.embedding_key = None;
                if let (Some(store), Some(e)) = (store.as_mut(), &o.embedding) {
                    store.insert((frame, index), e.clone())?;
                    det.embedding_key = Some((frame, index));
                }
                detections.push(det);
            }
        }
        detections.sort_by_key(|d| d.frame);
        Ok(Self {
            camera_id,
            detections,
            embeddings: store,
        })
    }
}

/// Static camera description. Adjacency must be symmetric across a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraMeta {
    pub camera_id: CameraId,
    pub fps: f64,
    pub start_offset: f64,
    pub adjacent: Vec<CameraId>,
}

impl CameraMeta {
    /// Seconds on the shared scenario clock for a 1-based local frame index.
    pub fn frame_time(&self, frame: FrameIndex) -> f64 {
        self.start_offset + f64::from(frame) / self.fps
    }
}

/// Checks uniqueness of IDs, positive rates and adjacency symmetry.
pub fn validate_cameras(cameras: &[CameraMeta]) -> Result<()> {
    let mut ids = HashSet::new();
    for cam in cameras {
        if !ids.insert(cam.camera_id) {
            return Err(Error::Camera(format!("duplicate camera id {}", cam.camera_id)));
        }
        if !(cam.fps.is_finite() && cam.fps > 0.0) {
            return Err(Error::Camera(format!("camera {}: fps must be positive", cam.camera_id)));
        }
        if !(cam.start_offset.is_finite() && cam.start_offset >= 0.0) {
            return Err(Error::Camera(format!(
                "camera {}: start offset must be non-negative",
                cam.camera_id
            )));
        }
    }
    let edges: BTreeSet<(CameraId, CameraId)> = cameras
        .iter()
        .flat_map(|c| c.adjacent.iter().map(move |&a| (c.camera_id, a)))
        .collect();
    for &(a, b) in &edges {
        if a == b {
            return Err(Error::Camera(format!("camera {a} lists itself as adjacent")));
        }
        if !ids.contains(&b) {
            return Err(Error::Camera(format!("camera {a} lists unknown neighbour {b}")));
        }
        if !edges.contains(&(b, a)) {
            return Err(Error::Camera(format!(
                "asymmetric adjacency: {b} is adjacent to {a} but not vice versa"
            )));
        }
    }
    Ok(())
}

/// One box of one identity in one camera frame. Used both for ground truth
/// (`id` is the annotated identity) and tracker output (`id` is a local or
/// global track ID).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackRecord {
    pub camera_id: CameraId,
    pub id: u64,
    pub frame: FrameIndex,
    pub bbox: BoundingBox,
}

pub type GroundTruthRecord = TrackRecord;

/// Fails on the first repeated `(camera, id, frame)` key.
pub fn check_unique_keys(records: &[TrackRecord]) -> Result<()> {
    let mut seen = HashSet::with_capacity(records.len());
    for r in records {
        if !seen.insert((r.camera_id, r.id, r.frame)) {
            return Err(Error::DuplicateRecord {
                camera_id: r.camera_id,
                id: r.id,
                frame: r.frame,
            });
        }
    }
    Ok(())
}
