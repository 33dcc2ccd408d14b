//! Single-camera tracking-by-detection.
//!
//! Each frame: predict every live track, associate detections in two
//! stages (appearance with a Mahalanobis gate for confirmed tracks, then box
//! overlap for whatever is left), correct matched tracks, age unmatched
//! ones and start tentative tracks from leftover detections.

use crate::error::{Error, Result};
use crate::geometry::{iou, BoundingBox};
use crate::model::{CameraId, FrameIndex, Observation, TrackRecord};
use crate::reid::distance::{cosine_distance, EmbeddingSet};
use crate::sct::assignment::{min_cost_matching, CostMatrix, FORBIDDEN_COST};
use crate::sct::kalman::{gating_distance, kf_initiate, kf_predict, kf_update, KalmanState, CHI2INV95_4DOF};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackStatus {
    Tentative,
    Confirmed,
    Deleted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig {
    /// Consecutive hits needed to confirm a track.
    pub n_init: u32,
    /// Frames a confirmed track survives without a match.
    pub max_age: u32,
    /// Largest cosine distance accepted in the appearance stage.
    pub appearance_max_distance: f64,
    /// Largest squared Mahalanobis distance accepted in the appearance stage.
    pub gating_threshold: f64,
    /// Smallest IoU accepted in the overlap stage.
    pub iou_min: f64,
    /// Number of most recent embeddings kept per track.
    pub embedding_budget: usize,
    /// Disable to track on box overlap alone.
    pub use_appearance: bool,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            n_init: 3,
            max_age: 30,
            appearance_max_distance: 0.4,
            gating_threshold: CHI2INV95_4DOF,
            iou_min: 0.3,
            embedding_budget: 100,
            use_appearance: true,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_init == 0 {
            return Err(Error::Config("tracker n_init must be at least 1".into()));
        }
        if self.max_age == 0 || self.embedding_budget == 0 {
            return Err(Error::Config("tracker max_age and embedding_budget must be positive".into()));
        }
        for (name, v) in [
            ("appearance_max_distance", self.appearance_max_distance),
            ("gating_threshold", self.gating_threshold),
            ("iou_min", self.iou_min),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("tracker {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tracklet {
    pub local_id: u64,
    pub camera_id: CameraId,
    pub status: TrackStatus,
    pub kstate: KalmanState,
    pub hits: u32,
    /// Frames since the last matched detection.
    pub time_since_update: u32,
    /// Detection boxes of matched frames, frames strictly increasing.
    pub history: Vec<(FrameIndex, BoundingBox)>,
    /// Most recent embeddings, oldest first.
    pub embeddings: Vec<Vec<f64>>,
    pub confirmed_at: Option<FrameIndex>,
}

impl EmbeddingSet for Tracklet {
    fn embeddings(&self) -> &[Vec<f64>] {
        &self.embeddings
    }
}

impl Tracklet {
    fn new(local_id: u64, camera_id: CameraId, obs: &Observation, cfg: &TrackerConfig) -> Self {
        let mut t = Self {
            local_id,
            camera_id,
            status: TrackStatus::Tentative,
            kstate: kf_initiate(&obs.detection.bbox),
            hits: 1,
            time_since_update: 0,
            history: vec![(obs.detection.frame, obs.detection.bbox)],
            embeddings: Vec::new(),
            confirmed_at: None,
        };
        t.push_embedding(obs, cfg.embedding_budget);
        if cfg.n_init <= 1 {
            t.status = TrackStatus::Confirmed;
            t.confirmed_at = Some(obs.detection.frame);
        }
        t
    }

    fn push_embedding(&mut self, obs: &Observation, budget: usize) {
        if let Some(e) = &obs.embedding {
            self.embeddings.push(e.clone());
            if self.embeddings.len() > budget {
                let excess = self.embeddings.len() - budget;
                self.embeddings.drain(..excess);
            }
        }
    }

    pub fn is_confirmed(&self) -> bool {
        self.status == TrackStatus::Confirmed
    }

    pub fn first_frame(&self) -> FrameIndex {
        self.history.first().map_or(0, |h| h.0)
    }

    pub fn last_frame(&self) -> FrameIndex {
        self.history.last().map_or(0, |h| h.0)
    }

    /// Smallest cosine distance between `embedding` and the stored set.
    fn appearance_distance(&self, embedding: &[f64]) -> Result<f64> {
        let mut best = f64::INFINITY;
        for e in &self.embeddings {
            best = best.min(cosine_distance(e, embedding)?);
        }
        Ok(best)
    }

    /// History rows with gaps of at most `max_gap` missing frames filled by
    /// linear interpolation between the neighbouring detections.
    pub fn interpolated_history(&self, max_gap: u32) -> Vec<(FrameIndex, BoundingBox)> {
        let mut out = Vec::with_capacity(self.history.len());
        for (i, &(frame, bbox)) in self.history.iter().enumerate() {
            if i > 0 {
                let (prev_frame, prev) = self.history[i - 1];
                let missing = frame - prev_frame - 1;
                if missing > 0 && missing <= max_gap {
                    let span = f64::from(frame - prev_frame);
                    for f in prev_frame + 1..frame {
                        let t = f64::from(f - prev_frame) / span;
                        let lerp = |a: f64, b: f64| a + (b - a) * t;
                        if let Ok(b) = BoundingBox::new(
                            lerp(prev.left(), bbox.left()),
                            lerp(prev.top(), bbox.top()),
                            lerp(prev.width(), bbox.width()),
                            lerp(prev.height(), bbox.height()),
                        ) {
                            out.push((f, b));
                        }
                    }
                }
            }
            out.push((frame, bbox));
        }
        out
    }
}

/// Result of associating one frame's detections with the current tracks.
/// Indices refer to the `tracks` and `observations` slices passed in.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Association {
    pub matches: Vec<(usize, usize)>,
    pub unmatched_tracks: Vec<usize>,
    pub unmatched_detections: Vec<usize>,
}

/// Runs the two association stages. `tracks` must already be predicted to
/// the observations' frame.
pub fn associate(tracks: &[Tracklet], observations: &[Observation], cfg: &TrackerConfig) -> Result<Association> {
    let mut matches: Vec<(usize, usize)> = Vec::new();
    let mut free_dets: Vec<usize> = (0..observations.len()).collect();
    let mut track_matched = vec![false; tracks.len()];

    if cfg.use_appearance {
        for (i, o) in observations.iter().enumerate() {
            if o.embedding.is_none() {
                return Err(Error::MissingEmbedding {
                    frame: o.detection.frame,
                    index: i,
                });
            }
        }
        // matching cascade: most recently updated tracks choose first
        for level in 1..=cfg.max_age.saturating_add(1) {
            if free_dets.is_empty() {
                break;
            }
            let level_tracks: Vec<usize> = (0..tracks.len())
                .filter(|&t| tracks[t].is_confirmed() && tracks[t].time_since_update == level && !track_matched[t])
                .collect();
            if level_tracks.is_empty() {
                continue;
            }
            let boxes: Vec<BoundingBox> = free_dets.iter().map(|&d| observations[d].detection.bbox).collect();
            let mut cost = CostMatrix::new(level_tracks.len(), free_dets.len(), FORBIDDEN_COST);
            for (r, &t) in level_tracks.iter().enumerate() {
                let gate = gating_distance(&tracks[t].kstate, &boxes)?;
                for (c, &d) in free_dets.iter().enumerate() {
                    if gate[c] > cfg.gating_threshold || tracks[t].embeddings.is_empty() {
                        continue;
                    }
                    let emb = observations[d].embedding.as_deref().unwrap_or_default();
                    let dist = tracks[t].appearance_distance(emb)?;
                    cost.set(r, c, dist);
                }
            }
            let stage = gated_matching(cost, cfg.appearance_max_distance)?;
            let mut taken = vec![false; free_dets.len()];
            for (r, c) in stage {
                track_matched[level_tracks[r]] = true;
                taken[c] = true;
                matches.push((level_tracks[r], free_dets[c]));
            }
            free_dets = free_dets
                .iter()
                .zip(&taken)
                .filter(|(_, &t)| !t)
                .map(|(&d, _)| d)
                .collect();
        }
    }

    // overlap stage over all remaining tracks
    let rest: Vec<usize> = (0..tracks.len()).filter(|&t| !track_matched[t]).collect();
    if !rest.is_empty() && !free_dets.is_empty() {
        let mut cost = CostMatrix::new(rest.len(), free_dets.len(), FORBIDDEN_COST);
        for (r, &t) in rest.iter().enumerate() {
            let predicted = tracks[t].kstate.to_box().ok();
            for (c, &d) in free_dets.iter().enumerate() {
                if let Some(p) = predicted {
                    let overlap = iou(&p, &observations[d].detection.bbox);
                    if overlap >= cfg.iou_min {
                        cost.set(r, c, 1.0 - overlap);
                    }
                }
            }
        }
        let stage = gated_matching(cost, 1.0 - cfg.iou_min)?;
        let mut taken = vec![false; free_dets.len()];
        for (r, c) in stage {
            track_matched[rest[r]] = true;
            taken[c] = true;
            matches.push((rest[r], free_dets[c]));
        }
        free_dets = free_dets
            .iter()
            .zip(&taken)
            .filter(|(_, &t)| !t)
            .map(|(&d, _)| d)
            .collect();
    }

    matches.sort_unstable();
    Ok(Association {
        matches,
        unmatched_tracks: (0..tracks.len()).filter(|&t| !track_matched[t]).collect(),
        unmatched_detections: free_dets,
    })
}

/// Solves with costs above `max_cost` clamped just past it, then keeps only
/// pairs within `max_cost`.
fn gated_matching(mut cost: CostMatrix, max_cost: f64) -> Result<Vec<(usize, usize)>> {
    let ceiling = max_cost + 1e-5;
    for r in 0..cost.rows() {
        for c in 0..cost.cols() {
            if cost.get(r, c) > max_cost {
                cost.set(r, c, ceiling);
            }
        }
    }
    Ok(min_cost_matching(&cost, max_cost)?.matches)
}

/// One camera's tracker.
#[derive(Debug, Clone)]
pub struct Tracker {
    camera_id: CameraId,
    cfg: TrackerConfig,
    tracks: Vec<Tracklet>,
    finished: Vec<Tracklet>,
    next_id: u64,
    last_frame: Option<FrameIndex>,
}

impl Tracker {
    pub fn new(camera_id: CameraId, cfg: TrackerConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            camera_id,
            cfg,
            tracks: Vec::new(),
            finished: Vec::new(),
            next_id: 1,
            last_frame: None,
        })
    }

    pub fn tracks(&self) -> &[Tracklet] {
        &self.tracks
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    /// Processes one frame and returns rows for the confirmed tracks matched
    /// in it. Skipped frame indices are processed as empty frames.
    pub fn step(&mut self, frame: FrameIndex, observations: &[Observation]) -> Result<Vec<TrackRecord>> {
        if let Some(prev) = self.last_frame {
            if frame <= prev {
                return Err(Error::OutOfOrderFrame { frame, previous: prev });
            }
            for empty in prev + 1..frame {
                self.advance(empty, &[])?;
            }
        }
        if let Some(o) = observations.iter().find(|o| o.detection.frame != frame) {
            return Err(Error::MixedFrames {
                first: frame,
                other: o.detection.frame,
            });
        }
        self.advance(frame, observations)
    }

    fn advance(&mut self, frame: FrameIndex, observations: &[Observation]) -> Result<Vec<TrackRecord>> {
        self.last_frame = Some(frame);
        for t in &mut self.tracks {
            t.kstate = kf_predict(&t.kstate);
            t.time_since_update += 1;
        }

        let assoc = associate(&self.tracks, observations, &self.cfg)?;

        for &(ti, di) in &assoc.matches {
            let obs = &observations[di];
            let t = &mut self.tracks[ti];
            t.kstate = kf_update(&t.kstate, &obs.detection.bbox)?;
            t.hits += 1;
            t.time_since_update = 0;
            t.history.push((frame, obs.detection.bbox));
            t.push_embedding(obs, self.cfg.embedding_budget);
            if t.status == TrackStatus::Tentative && t.hits >= self.cfg.n_init {
                t.status = TrackStatus::Confirmed;
                t.confirmed_at = Some(frame);
            }
        }
        for &ti in &assoc.unmatched_tracks {
            let t = &mut self.tracks[ti];
            if t.status == TrackStatus::Tentative || t.time_since_update > self.cfg.max_age {
                t.status = TrackStatus::Deleted;
            }
        }
        for &di in &assoc.unmatched_detections {
            let t = Tracklet::new(self.next_id, self.camera_id, &observations[di], &self.cfg);
            self.next_id += 1;
            self.tracks.push(t);
        }

        let (alive, dead): (Vec<_>, Vec<_>) = std::mem::take(&mut self.tracks)
            .into_iter()
            .partition(|t| t.status != TrackStatus::Deleted);
        self.tracks = alive;
        self.finished
            .extend(dead.into_iter().filter(|t| t.confirmed_at.is_some()));

        Ok(self
            .tracks
            .iter()
            .filter(|t| t.is_confirmed() && t.time_since_update == 0)
            .map(|t| TrackRecord {
                camera_id: self.camera_id,
                id: t.local_id,
                frame,
                bbox: t.history.last().expect("matched track has history").1,
            })
            .collect())
    }

    /// Every tracklet that was ever confirmed, ordered by local ID.
    pub fn finish(self) -> Vec<Tracklet> {
        let mut out: Vec<Tracklet> = self
            .finished
            .into_iter()
            .chain(self.tracks.into_iter().filter(|t| t.confirmed_at.is_some()))
            .collect();
        out.sort_by_key(|t| t.local_id);
        out
    }
}
