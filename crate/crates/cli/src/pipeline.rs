//! In-memory pipeline stages shared by the commands and the test suites.

use std::collections::{BTreeMap, BTreeSet};

use mcmt_core::io::TrackletEmbeddings;
use mcmt_core::metrics::{evaluate, EvalReport};
use mcmt_core::model::{CameraId, CameraMeta, DetectionSet, TrackRecord};
use mcmt_core::sct::{Tracker, TrackerConfig};
use mcmt_core::simgen::{corrupt_all, generate_scenario, Scenario};
use mcmt_core::suppression::{nms, NmsConfig};
use mcmt_core::sync::{synchronize, CameraTracklet, SyncConfig, SyncOutcome};
use mcmt_core::Result;

use crate::config::{PipelineConfig, TrackOutput};

/// One camera's tracking output.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraTracks {
    pub camera_id: CameraId,
    /// Rows with local tracklet IDs.
    pub records: Vec<TrackRecord>,
    /// Confirmed tracklets that carry at least one embedding.
    pub tracklets: Vec<CameraTracklet>,
}

impl CameraTracks {
    pub fn tracklet_embeddings(&self) -> TrackletEmbeddings {
        self.tracklets
            .iter()
            .map(|t| (t.local_id, t.embeddings.clone()))
            .collect()
    }
}

/// Suppression applied frame by frame.
pub fn suppress(set: &DetectionSet, cfg: &NmsConfig) -> Result<DetectionSet> {
    let mut detections = Vec::with_capacity(set.detections.len());
    let mut start = 0;
    while start < set.detections.len() {
        let frame = set.detections[start].frame;
        let end = start + set.detections[start..].iter().take_while(|d| d.frame == frame).count();
        detections.extend(nms(&set.detections[start..end], cfg)?);
        start = end;
    }
    Ok(DetectionSet {
        camera_id: set.camera_id,
        detections,
        embeddings: set.embeddings.clone(),
    })
}

/// Suppression then single-camera tracking of one camera.
pub fn track_camera(
    set: &DetectionSet,
    nms_cfg: &NmsConfig,
    tracker_cfg: &TrackerConfig,
    output: TrackOutput,
    max_gap: u32,
) -> Result<CameraTracks> {
    let filtered = suppress(set, nms_cfg)?;
    let mut tracker = Tracker::new(set.camera_id, tracker_cfg.clone())?;
    let mut online = Vec::new();
    for (frame, obs) in filtered.frames() {
        online.extend(tracker.step(frame, &obs)?);
    }
    let finished = tracker.finish();
    let records = match output {
        TrackOutput::Online => online,
        TrackOutput::Offline => finished
            .iter()
            .flat_map(|t| {
                t.interpolated_history(max_gap).into_iter().map(|(frame, bbox)| TrackRecord {
                    camera_id: set.camera_id,
                    id: t.local_id,
                    frame,
                    bbox,
                })
            })
            .collect(),
    };
    let mut records = records;
    records.sort_by_key(|r| (r.frame, r.id));
    let tracklets = finished
        .into_iter()
        .filter(|t| !t.embeddings.is_empty())
        .map(|t| CameraTracklet {
            camera_id: set.camera_id,
            local_id: t.local_id,
            first_frame: t.first_frame(),
            last_frame: t.last_frame(),
            embeddings: t.embeddings,
        })
        .collect();
    Ok(CameraTracks {
        camera_id: set.camera_id,
        records,
        tracklets,
    })
}

/// Tracks every camera, spreading cameras over `workers` threads. Results
/// do not depend on the worker count.
pub fn track_all(sets: &BTreeMap<CameraId, DetectionSet>, cfg: &PipelineConfig, workers: usize) -> Result<BTreeMap<CameraId, CameraTracks>> {
    let nms_cfg = cfg.nms_config();
    let tracker_cfg = cfg.tracker_config();
    let jobs: Vec<&DetectionSet> = sets.values().collect();
    let workers = if workers == 0 { jobs.len() } else { workers }.clamp(1, jobs.len().max(1));
    let run = |set: &DetectionSet| track_camera(set, &nms_cfg, &tracker_cfg, cfg.tracker.output, cfg.tracker.max_gap);
    if workers == 1 {
        return jobs.iter().map(|s| Ok((s.camera_id, run(s)?))).collect();
    }
    let results: Vec<Result<CameraTracks>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let mine: Vec<&DetectionSet> = jobs.iter().skip(w).step_by(workers).copied().collect();
                let run = &run;
                scope.spawn(move || mine.into_iter().map(run).collect::<Vec<_>>())
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("tracking worker panicked"))
            .collect()
    });
    let mut out = BTreeMap::new();
    for r in results {
        let t = r?;
        out.insert(t.camera_id, t);
    }
    Ok(out)
}

/// Cross-camera output: global track rows, the identity map and the raw
/// synchronization outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalTracks {
    pub records: Vec<TrackRecord>,
    pub identity_rows: Vec<((CameraId, u64), u64)>,
    pub outcome: SyncOutcome,
}

/// Synchronizes tracklets and relabels every row with its global ID.
/// Rows whose tracklet carried no embedding receive fresh global IDs.
pub fn link_cameras(tracks: &BTreeMap<CameraId, CameraTracks>, cameras: &[CameraMeta], cfg: &SyncConfig) -> Result<GlobalTracks> {
    let tracklets: Vec<CameraTracklet> = tracks.values().flat_map(|t| t.tracklets.iter().cloned()).collect();
    let outcome = synchronize(&tracklets, cameras, cfg)?;
    let mut rows: BTreeMap<(CameraId, u64), u64> = outcome.identities.iter().map(|(&k, &g)| (k, g)).collect();
    let mut next = rows.values().max().map_or(1, |m| m + 1);
    let keys: BTreeSet<(CameraId, u64)> = tracks
        .values()
        .flat_map(|t| t.records.iter().map(|r| (r.camera_id, r.id)))
        .collect();
    for k in keys {
        rows.entry(k).or_insert_with(|| {
            next += 1;
            next - 1
        });
    }
    let mut records: Vec<TrackRecord> = tracks
        .values()
        .flat_map(|t| t.records.iter())
        .map(|r| TrackRecord {
            id: rows[&(r.camera_id, r.id)],
            ..*r
        })
        .collect();
    records.sort_by_key(|r| (r.camera_id, r.frame, r.id));
    Ok(GlobalTracks {
        records,
        identity_rows: rows.into_iter().collect(),
        outcome,
    })
}

/// Everything produced by one synthetic end-to-end run.
#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub scenario: Scenario,
    pub detections: BTreeMap<CameraId, DetectionSet>,
    pub tracks: BTreeMap<CameraId, CameraTracks>,
    pub global: GlobalTracks,
    pub report: EvalReport,
}

/// Generates, corrupts, tracks, links and scores one scenario.
pub fn run_scenario(cfg: &PipelineConfig, workers: usize) -> Result<ScenarioRun> {
    let scenario = generate_scenario(&cfg.scenario_config())?;
    let detections = corrupt_all(&scenario)?;
    let tracks = track_all(&detections, cfg, workers)?;
    let global = link_cameras(&tracks, &scenario.cameras, &cfg.sync_config())?;
    let gt: Vec<TrackRecord> = scenario.ground_truth.values().flatten().copied().collect();
    let known: BTreeSet<CameraId> = scenario.cameras.iter().map(|c| c.camera_id).collect();
    let report = evaluate(&global.records, &gt, cfg.eval.iou_min, Some(&known))?;
    Ok(ScenarioRun {
        scenario,
        detections,
        tracks,
        global,
        report,
    })
}
