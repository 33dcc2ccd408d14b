//! Cross-camera identity synchronization.
//!
//! Cameras are compared pairwise in ascending camera-ID order, normally
//! only when they are adjacent. A tracklet too far from every tracklet in
//! its paired cameras is pruned first. Within each pair, tracklets whose
//! appearance distance falls below the synchronization threshold are
//! merged one-to-one, and merges accumulate transitively across pairs.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::error::{Error, Result};
use crate::model::{validate_cameras, CameraId, CameraMeta, FrameIndex};
use crate::reid::distance::{tracklet_distance, EmbeddingSet, Metric, TrackletDistanceMode};
use crate::sct::assignment::{solve_assignment, CostMatrix, FORBIDDEN_COST};

pub type TrackletKey = (CameraId, u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PairMatching {
    /// Repeatedly take the smallest remaining distance.
    #[default]
    Greedy,
    /// Minimum-cost assignment over the pair's distance matrix.
    Optimal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyncConfig {
    /// Pairs closer than this are merged.
    pub sync_threshold: f64,
    /// Tracklets farther than this from every paired tracklet are pruned.
    pub max_threshold: f64,
    pub adjacency_only: bool,
    /// Largest allowed gap in seconds between two tracklets' time ranges.
    pub temporal_window: Option<f64>,
    pub metric: Metric,
    pub distance_mode: TrackletDistanceMode,
    pub matching: PairMatching,
}

impl Default for SyncConfig {
    fn default() -> Self {
        Self {
            sync_threshold: 3.0,
            max_threshold: 90.0,
            adjacency_only: true,
            temporal_window: None,
            metric: Metric::Euclidean,
            distance_mode: TrackletDistanceMode::MeanEmbedding,
            matching: PairMatching::Greedy,
        }
    }
}

impl SyncConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sync_threshold > 0.0 && self.sync_threshold < self.max_threshold) {
            return Err(Error::Config(format!(
                "sync thresholds must satisfy 0 < sync ({}) < max ({})",
                self.sync_threshold, self.max_threshold
            )));
        }
        if let Some(w) = self.temporal_window {
            if w.is_nan() || w < 0.0 {
                return Err(Error::Config("temporal window must be non-negative".into()));
            }
        }
        Ok(())
    }
}

/// A confirmed single-camera tracklet as seen by synchronization.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraTracklet {
    pub camera_id: CameraId,
    pub local_id: u64,
    pub first_frame: FrameIndex,
    pub last_frame: FrameIndex,
    pub embeddings: Vec<Vec<f64>>,
}

impl CameraTracklet {
    pub fn key(&self) -> TrackletKey {
        (self.camera_id, self.local_id)
    }
}

impl EmbeddingSet for CameraTracklet {
    fn embeddings(&self) -> &[Vec<f64>] {
        &self.embeddings
    }
}

/// `(camera_id, local_id) -> global_id`, global IDs contiguous from 1.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GlobalIdentityMap {
    map: BTreeMap<TrackletKey, u64>,
}

impl GlobalIdentityMap {
    pub fn get(&self, camera_id: CameraId, local_id: u64) -> Option<u64> {
        self.map.get(&(camera_id, local_id)).copied()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&TrackletKey, &u64)> {
        self.map.iter()
    }

    pub fn global_count(&self) -> usize {
        self.map.values().collect::<BTreeSet<_>>().len()
    }

    pub fn rows(&self) -> Vec<(TrackletKey, u64)> {
        self.map.iter().map(|(&k, &v)| (k, v)).collect()
    }
}

/// One accepted merge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    pub a: TrackletKey,
    pub b: TrackletKey,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyncOutcome {
    pub identities: GlobalIdentityMap,
    pub merges: Vec<Merge>,
    pub pruned: BTreeSet<TrackletKey>,
    pub pairs: Vec<(CameraId, CameraId)>,
}

/// Camera pairs to compare, sorted, each unordered pair once.
pub fn order_and_pair(cameras: &[CameraMeta], cfg: &SyncConfig) -> Result<Vec<(CameraId, CameraId)>> {
    validate_cameras(cameras)?;
    let mut pairs = BTreeSet::new();
    if cfg.adjacency_only {
        for c in cameras {
            for &a in &c.adjacent {
                pairs.insert((c.camera_id.min(a), c.camera_id.max(a)));
            }
        }
    } else {
        let ids: BTreeSet<CameraId> = cameras.iter().map(|c| c.camera_id).collect();
        for &a in &ids {
            for &b in ids.range(a + 1..) {
                pairs.insert((a, b));
            }
        }
    }
    Ok(pairs.into_iter().collect())
}

/// Indices of `query` tracklets that have at least one gallery tracklet
/// within `max_threshold`. Everything is retained when the gallery is empty.
pub fn prune_unmatchable(query: &[CameraTracklet], gallery: &[&CameraTracklet], cfg: &SyncConfig) -> Result<Vec<usize>> {
    if gallery.is_empty() {
        return Ok((0..query.len()).collect());
    }
    let mut keep = Vec::new();
    for (i, q) in query.iter().enumerate() {
        let mut best = f64::INFINITY;
        for g in gallery {
            best = best.min(tracklet_distance(q, *g, cfg.metric, cfg.distance_mode)?);
        }
        if best <= cfg.max_threshold {
            keep.push(i);
        }
    }
    Ok(keep)
}

struct Classes {
    parent: Vec<usize>,
    /// Per root: `(camera, first_frame, last_frame)` of every member.
    spans: Vec<Vec<(CameraId, FrameIndex, FrameIndex)>>,
}

impl Classes {
    fn new(tracklets: &[CameraTracklet]) -> Self {
        Self {
            parent: (0..tracklets.len()).collect(),
            spans: tracklets
                .iter()
                .map(|t| vec![(t.camera_id, t.first_frame, t.last_frame)])
                .collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Two classes may merge unless they hold time-overlapping tracklets of
    /// the same camera.
    fn compatible(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.spans[ra].iter().all(|&(ca, fa, la)| {
            self.spans[rb]
                .iter()
                .all(|&(cb, fb, lb)| ca != cb || la < fb || lb < fa)
        })
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        let (keep, gone) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[gone] = keep;
        let moved = std::mem::take(&mut self.spans[gone]);
        self.spans[keep].extend(moved);
    }
}

fn time_range(t: &CameraTracklet, cam: &CameraMeta) -> (f64, f64) {
    (cam.frame_time(t.first_frame), cam.frame_time(t.last_frame))
}

/// Merges per-camera tracklets into global identities.
pub fn synchronize(tracklets: &[CameraTracklet], cameras: &[CameraMeta], cfg: &SyncConfig) -> Result<SyncOutcome> {
    cfg.validate()?;
    let pairs = order_and_pair(cameras, cfg)?;
    let cams: HashMap<CameraId, &CameraMeta> = cameras.iter().map(|c| (c.camera_id, c)).collect();

    let mut by_camera: BTreeMap<CameraId, Vec<usize>> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for (i, t) in tracklets.iter().enumerate() {
        if !cams.contains_key(&t.camera_id) {
            return Err(Error::Camera(format!(
                "tracklet {} refers to unknown camera {}",
                t.local_id, t.camera_id
            )));
        }
        if !seen.insert(t.key()) {
            return Err(Error::Config(format!("duplicate tracklet {:?}", t.key())));
        }
        if t.embeddings.is_empty() {
            return Err(Error::EmptyEmbeddings);
        }
        by_camera.entry(t.camera_id).or_default().push(i);
    }

    // pruning against every paired camera's gallery
    let mut pruned = BTreeSet::new();
    let mut alive = vec![true; tracklets.len()];
    for (&cam, members) in &by_camera {
        let gallery: Vec<&CameraTracklet> = pairs
            .iter()
            .filter_map(|&(a, b)| match (a == cam, b == cam) {
                (true, _) => Some(b),
                (_, true) => Some(a),
                _ => None,
            })
            .flat_map(|other| by_camera.get(&other).into_iter().flatten())
            .map(|&i| &tracklets[i])
            .collect();
        let query: Vec<CameraTracklet> = members.iter().map(|&i| tracklets[i].clone()).collect();
        let keep: BTreeSet<usize> = prune_unmatchable(&query, &gallery, cfg)?.into_iter().collect();
        for (pos, &i) in members.iter().enumerate() {
            if !keep.contains(&pos) {
                alive[i] = false;
                pruned.insert(tracklets[i].key());
            }
        }
    }

    let mut classes = Classes::new(tracklets);
    let mut merges = Vec::new();
    let empty = Vec::new();
    for &(ca, cb) in &pairs {
        let left: Vec<usize> = by_camera.get(&ca).unwrap_or(&empty).iter().copied().filter(|&i| alive[i]).collect();
        let right: Vec<usize> = by_camera.get(&cb).unwrap_or(&empty).iter().copied().filter(|&i| alive[i]).collect();
        if left.is_empty() || right.is_empty() {
            continue;
        }
        let mut dist = vec![vec![f64::INFINITY; right.len()]; left.len()];
        for (r, &i) in left.iter().enumerate() {
            for (c, &j) in right.iter().enumerate() {
                if let Some(window) = cfg.temporal_window {
                    let (s1, e1) = time_range(&tracklets[i], cams[&ca]);
                    let (s2, e2) = time_range(&tracklets[j], cams[&cb]);
                    let gap = (s2 - e1).max(s1 - e2).max(0.0);
                    if gap > window {
                        continue;
                    }
                }
                dist[r][c] = tracklet_distance(&tracklets[i], &tracklets[j], cfg.metric, cfg.distance_mode)?;
            }
        }

        let candidates: Vec<(usize, usize)> = match cfg.matching {
            PairMatching::Greedy => {
                let mut all: Vec<(f64, usize, usize)> = Vec::new();
                for (r, row) in dist.iter().enumerate() {
                    for (c, &d) in row.iter().enumerate() {
                        if d < cfg.sync_threshold {
                            all.push((d, r, c));
                        }
                    }
                }
                all.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
                all.into_iter().map(|(_, r, c)| (r, c)).collect()
            }
            PairMatching::Optimal => {
                let cost = CostMatrix::from_fn(left.len(), right.len(), |r, c| {
                    if dist[r][c] < cfg.sync_threshold {
                        dist[r][c]
                    } else {
                        FORBIDDEN_COST
                    }
                });
                solve_assignment(&cost)?
                    .matches
                    .into_iter()
                    .filter(|&(r, c)| dist[r][c] < cfg.sync_threshold)
                    .collect()
            }
        };

        let mut used_left = vec![false; left.len()];
        let mut used_right = vec![false; right.len()];
        for (r, c) in candidates {
            if used_left[r] || used_right[c] {
                continue;
            }
            let (i, j) = (left[r], right[c]);
            if !classes.compatible(i, j) {
                continue;
            }
            used_left[r] = true;
            used_right[c] = true;
            classes.union(i, j);
            merges.push(Merge {
                a: tracklets[i].key(),
                b: tracklets[j].key(),
                distance: dist[r][c],
            });
        }
    }

    // compact: classes ordered by earliest shared-clock appearance
    let mut roots: BTreeMap<usize, (f64, TrackletKey)> = BTreeMap::new();
    for (i, t) in tracklets.iter().enumerate() {
        let root = classes.find(i);
        let start = cams[&t.camera_id].frame_time(t.first_frame);
        let entry = roots.entry(root).or_insert((start, t.key()));
        if (start, t.key()) < *entry {
            *entry = (start, t.key());
        }
    }
    let mut order: Vec<(f64, TrackletKey, usize)> = roots.into_iter().map(|(r, (s, k))| (s, k, r)).collect();
    order.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
    let global: HashMap<usize, u64> = order
        .iter()
        .enumerate()
        .map(|(g, &(_, _, root))| (root, g as u64 + 1))
        .collect();
    let mut map = BTreeMap::new();
    for (i, t) in tracklets.iter().enumerate() {
        map.insert(t.key(), global[&classes.find(i)]);
    }

    Ok(SyncOutcome {
        identities: GlobalIdentityMap { map },
        merges,
        pruned,
        pairs,
    })
}
