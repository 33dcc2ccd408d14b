//! Deterministic synthetic multi-camera scenarios.
//!
//! Cameras form a chain `1 - 2 - ... - n`. Every identity drives through two
//! or three consecutive cameras, left to right in the upper half of the frame
//! when moving up the chain and right to left in the lower half when moving
//! down. Embeddings are
//! `normalize(mu + sigma * N(0, I) + bias(camera))`, where `mu` is uniform on
//! the unit sphere and `bias(camera)` has length `camera_bias_scale`.
//!
//! Draw order from the single `ChaCha8` stream seeded with `seed`:
//! 1. camera start offsets, then camera bias directions, in camera order;
//! 2. per identity: mean direction, class, number of cameras, first camera,
//!    base speed, entry time, then per visited camera the speed factor, size,
//!    lane, drift and (between cameras) transit gap;
//! 3. per camera, per frame, per visible identity in ID order: embedding noise.
//!
//! [`corrupt`] uses its own stream seeded by its `seed` argument.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::io;
use crate::model::{CameraId, CameraMeta, Detection, DetectionSet, EmbeddingStore, FrameIndex, TrackRecord};
use crate::reid::distance::{normalize, EmbeddingVector};

/// Pixels kept between a box and the frame border.
const MARGIN: f64 = 4.0;
/// Base speed range in frame widths per second.
const SPEED: (f64, f64) = (0.08, 0.16);
const SPEED_JITTER: (f64, f64) = (0.85, 1.15);
/// Seconds spent between leaving one view and entering the next.
const TRANSIT: (f64, f64) = (1.0, 3.0);
/// Box width as a fraction of frame width.
const WIDTH: (f64, f64) = (0.05, 0.11);
/// Box height over width.
const SHAPE: (f64, f64) = (0.55, 0.85);
/// Size change factor across one view.
const GROWTH: (f64, f64) = (0.8, 1.25);
/// Vertical drift across one view as a fraction of frame height.
const DRIFT: f64 = 0.06;
const MAX_OFFSET_SECONDS: f64 = 5.0;
const CLASSES: u32 = 3;
const TRUE_CONFIDENCE: (f64, f64) = (0.6, 1.0);
const FALSE_CONFIDENCE: (f64, f64) = (0.05, 0.35);

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub n_cameras: usize,
    pub n_identities: usize,
    pub n_frames: u32,
    pub fps: f64,
    pub frame_width: f64,
    pub frame_height: f64,
    pub embedding_dim: usize,
    pub embedding_noise: f64,
    pub camera_bias_scale: f64,
    pub miss_prob: f64,
    /// Expected false positives per frame.
    pub fp_rate: f64,
    pub box_jitter_std: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_cameras: 4,
            n_identities: 20,
            n_frames: 1000,
            fps: 10.0,
            frame_width: 1280.0,
            frame_height: 960.0,
            embedding_dim: 128,
            embedding_noise: 0.05,
            camera_bias_scale: 0.1,
            miss_prob: 0.05,
            fp_rate: 0.1,
            box_jitter_std: 2.0,
        }
    }
}

impl ScenarioConfig {
    fn offset_cap(&self) -> f64 {
        MAX_OFFSET_SECONDS.min(0.1 * f64::from(self.n_frames) / self.fps)
    }

    /// Longest single-view dwell in seconds.
    fn max_dwell(&self) -> f64 {
        let path = 1.0 - (2.0 * MARGIN + WIDTH.1 * GROWTH.1 * self.frame_width) / self.frame_width;
        path / (SPEED.0 * SPEED_JITTER.0)
    }

    /// Seconds of shared clock every camera is guaranteed to cover.
    fn guaranteed_horizon(&self) -> f64 {
        (f64::from(self.n_frames) - 1.0) / self.fps - self.offset_cap()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Scenario(m.to_string()));
        if self.n_cameras < 2 {
            return bad("at least two cameras are needed for crossings");
        }
        if self.n_identities == 0 || self.n_frames == 0 || self.embedding_dim == 0 {
            return bad("counts must be positive");
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return bad("fps must be positive");
        }
        if !(self.frame_width >= 64.0 && self.frame_height >= 64.0) || !self.frame_width.is_finite() || !self.frame_height.is_finite() {
            return bad("frame size must be at least 64x64 pixels");
        }
        for (name, v) in [
            ("embedding_noise", self.embedding_noise),
            ("camera_bias_scale", self.camera_bias_scale),
            ("fp_rate", self.fp_rate),
            ("box_jitter_std", self.box_jitter_std),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Scenario(format!("{name} must be finite and non-negative")));
            }
        }
        if !(0.0..1.0).contains(&self.miss_prob) {
            return bad("miss_prob must lie in [0, 1)");
        }
        let tallest = WIDTH.1 * GROWTH.1 * SHAPE.1 * self.frame_width;
        if self.frame_height / 2.0 < MARGIN + tallest + 2.0 * DRIFT * self.frame_height {
            return bad("frame too flat for two lanes of boxes");
        }
        let needed = 2.0 * self.max_dwell() + TRANSIT.1;
        if self.guaranteed_horizon() < needed {
            return Err(Error::Scenario(format!(
                "{} frames at {} fps cannot hold a two-camera crossing (needs {needed:.1} s)",
                self.n_frames, self.fps
            )));
        }
        Ok(())
    }
}

/// One identity's pass through one camera view.
#[derive(Debug, Clone, PartialEq)]
pub struct Visit {
    pub camera_id: CameraId,
    pub enter: f64,
    pub exit: f64,
    /// Box at entry and exit; positions and sizes interpolate linearly.
    pub from: BoundingBox,
    pub to: BoundingBox,
}

impl Visit {
    fn box_at(&self, t: f64) -> BoundingBox {
        let u = ((t - self.enter) / (self.exit - self.enter)).clamp(0.0, 1.0);
        let lerp = |a: f64, b: f64| a + (b - a) * u;
        BoundingBox::new(
            lerp(self.from.left(), self.to.left()),
            lerp(self.from.top(), self.to.top()),
            lerp(self.from.width(), self.to.width()),
            lerp(self.from.height(), self.to.height()),
        )
        .expect("interpolated box is valid")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityPlan {
    pub id: u64,
    pub class_id: u32,
    pub mean: Vec<f64>,
    pub visits: Vec<Visit>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub cameras: Vec<CameraMeta>,
    pub identities: Vec<IdentityPlan>,
    pub camera_bias: BTreeMap<CameraId, Vec<f64>>,
    pub ground_truth: BTreeMap<CameraId, Vec<TrackRecord>>,
    /// Uncorrupted detections with confidence 1 and one embedding each.
    pub clean: BTreeMap<CameraId, DetectionSet>,
}

fn unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        if let Ok(n) = normalize(&v) {
            return n;
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    rng.random_range(lo..hi)
}

fn plan_visit(rng: &mut ChaCha8Rng, cfg: &ScenarioConfig, camera_id: CameraId, enter: f64, base_speed: f64, rightward: bool) -> Visit {
    let (w, h) = (cfg.frame_width, cfg.frame_height);
    let speed = base_speed * uniform(rng, SPEED_JITTER);
    let width = uniform(rng, WIDTH) * w;
    let shape = uniform(rng, SHAPE);
    let growth = uniform(rng, GROWTH);
    let (w_in, w_out) = (width, width * growth);
    let w_max = w_in.max(w_out);
    let h_max = w_max * shape;
    let drift = uniform(rng, (-DRIFT, DRIFT)) * h;
    // two-way road: each direction keeps to its own half of the frame
    let (half_lo, half_hi) = if rightward { (MARGIN, h / 2.0) } else { (h / 2.0, h - MARGIN) };
    let top_lo = half_lo + drift.abs();
    let top_hi = (half_hi - h_max - drift.abs()).max(top_lo + 1e-9);
    let top_in = rng.random_range(top_lo..top_hi);
    let x_lo = MARGIN;
    let x_hi = w - MARGIN - w_max;
    let path = (x_hi - x_lo).max(1.0);
    let dwell = path / (speed * w);
    let (l_in, l_out) = if rightward { (x_lo, x_hi) } else { (x_hi, x_lo) };
    // keep the bottom-centre track straight while the box grows or shrinks
    let from = BoundingBox::new(l_in + (w_max - w_in) / 2.0, top_in + (h_max - w_in * shape), w_in, w_in * shape);
    let to = BoundingBox::new(l_out + (w_max - w_out) / 2.0, top_in + drift + (h_max - w_out * shape), w_out, w_out * shape);
    Visit {
        camera_id,
        enter,
        exit: enter + dwell,
        from: from.expect("positive size"),
        to: to.expect("positive size"),
    }
}

/// Generates ground truth, clean detections with embeddings and camera
/// metadata.
pub fn generate_scenario(cfg: &ScenarioConfig) -> Result<Scenario> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n_cams = cfg.n_cameras;
    let ids: Vec<CameraId> = (1..=n_cams as CameraId).collect();

    let offsets: Vec<f64> = ids.iter().map(|_| rng.random_range(0.0..cfg.offset_cap())).collect();
    let cameras: Vec<CameraMeta> = ids
        .iter()
        .zip(&offsets)
        .map(|(&camera_id, &start_offset)| CameraMeta {
            camera_id,
            fps: cfg.fps,
            start_offset,
            adjacent: ids.iter().copied().filter(|&o| o.abs_diff(camera_id) == 1).collect(),
        })
        .collect();
    let camera_bias: BTreeMap<CameraId, Vec<f64>> = ids
        .iter()
        .map(|&c| {
            let dir = unit_vector(&mut rng, cfg.embedding_dim);
            (c, dir.into_iter().map(|x| x * cfg.camera_bias_scale).collect())
        })
        .collect();

    // window every camera records: after the latest first frame, before the earliest last frame
    let lo = cameras.iter().map(|c| c.frame_time(1)).fold(f64::MIN, f64::max);
    let hi = cameras.iter().map(|c| c.frame_time(cfg.n_frames)).fold(f64::MAX, f64::min);

    let mut identities = Vec::with_capacity(cfg.n_identities);
    for id in 1..=cfg.n_identities as u64 {
        let mean = unit_vector(&mut rng, cfg.embedding_dim);
        let class_id = rng.random_range(0..CLASSES);
        let span = rng.random_range(2..=n_cams.min(3));
        let first = rng.random_range(0..=n_cams - span);
        let upward = rng.random_bool(0.5);
        let base_speed = uniform(&mut rng, SPEED);
        let entry_u: f64 = rng.random();

        let order: Vec<CameraId> = if upward {
            ids[first..first + span].to_vec()
        } else {
            ids[first..first + span].iter().rev().copied().collect()
        };
        let mut visits = Vec::with_capacity(span);
        let mut t = 0.0;
        for (k, &cam) in order.iter().enumerate() {
            if k > 0 {
                t += uniform(&mut rng, TRANSIT);
            }
            let v = plan_visit(&mut rng, cfg, cam, t, base_speed, upward);
            t = v.exit;
            visits.push(v);
        }
        // a long route that does not fit is cut back to its first two views
        if t > hi - lo {
            visits.truncate(2);
            t = visits[1].exit;
        }
        let start = lo + entry_u * (hi - lo - t).max(0.0);
        for v in &mut visits {
            v.enter += start;
            v.exit += start;
        }
        identities.push(IdentityPlan {
            id,
            class_id,
            mean,
            visits,
        });
    }

    let mut ground_truth = BTreeMap::new();
    let mut clean = BTreeMap::new();
    for cam in &cameras {
        let visits: Vec<(&IdentityPlan, &Visit)> = identities
            .iter()
            .flat_map(|p| p.visits.iter().filter(|v| v.camera_id == cam.camera_id).map(move |v| (p, v)))
            .collect();
        let mut gt = Vec::new();
        let mut detections = Vec::new();
        let mut store = EmbeddingStore::new(cfg.embedding_dim);
        let bias = &camera_bias[&cam.camera_id];
        for frame in 1..=cfg.n_frames {
            let t = cam.frame_time(frame);
            let mut index = 0;
            for (plan, visit) in &visits {
                if t < visit.enter || t > visit.exit {
                    continue;
                }
                let bbox = visit.box_at(t);
                gt.push(TrackRecord {
                    camera_id: cam.camera_id,
                    id: plan.id,
                    frame,
                    bbox,
                });
                let raw: Vec<f64> = plan
                    .mean
                    .iter()
                    .zip(bias)
                    .map(|(m, b)| {
                        let z: f64 = rng.sample(StandardNormal);
                        m + cfg.embedding_noise * z + b
                    })
                    .collect();
                let emb = normalize(&raw).unwrap_or_else(|_| plan.mean.clone());
                store.insert((frame, index), emb)?;
                let mut det = Detection::new(frame, bbox, 1.0, plan.class_id)?;
                det.embedding_key = Some((frame, index));
                detections.push(det);
                index += 1;
            }
        }
        ground_truth.insert(cam.camera_id, gt);
        clean.insert(
            cam.camera_id,
            DetectionSet {
                camera_id: cam.camera_id,
                detections,
                embeddings: Some(store),
            },
        );
    }

    Ok(Scenario {
        config: cfg.clone(),
        cameras,
        identities,
        camera_bias,
        ground_truth,
        clean,
    })
}

/// Seed for corrupting one camera of a scenario.
pub fn corruption_seed(scenario_seed: u64, camera_id: CameraId) -> u64 {
    scenario_seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(u64::from(camera_id).wrapping_mul(0xD1B5_4A32_D192_ED03))
        ^ 0x5EED
}

/// Degrades clean detections: drops, jitter, confidences and false positives.
///
/// Frames `1..=cfg.n_frames` are visited in order; per frame each true
/// detection draws a drop decision, then (if kept) four jitter normals and a
/// confidence; then the number of false positives and their boxes,
/// embeddings and confidences.
pub fn corrupt(clean: &DetectionSet, cfg: &ScenarioConfig, seed: u64) -> Result<DetectionSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frames = clean.frames();
    let dim = clean.embeddings.as_ref().map_or(cfg.embedding_dim, EmbeddingStore::dim);
    let poisson = if cfg.fp_rate > 0.0 {
        Some(Poisson::new(cfg.fp_rate).map_err(|e| Error::Scenario(e.to_string()))?)
    } else {
        None
    };
    let last = frames.keys().next_back().copied().unwrap_or(0).max(cfg.n_frames);
    let mut out: Vec<(FrameIndex, Vec<crate::model::Observation>)> = Vec::new();
    for frame in 1..=last {
        let mut kept = Vec::new();
        for obs in frames.get(&frame).map(Vec::as_slice).unwrap_or_default() {
            if rng.random_bool(cfg.miss_prob) {
                continue;
            }
            let b = obs.detection.bbox;
            let mut j = [0.0; 4];
            for x in &mut j {
                let z: f64 = rng.sample(StandardNormal);
                *x = cfg.box_jitter_std * z;
            }
            let bbox = BoundingBox::new(b.left() + j[0], b.top() + j[1], (b.width() + j[2]).max(1.0), (b.height() + j[3]).max(1.0))?;
            let mut o = obs.clone();
            o.detection.bbox = bbox;
            o.detection.confidence = uniform(&mut rng, TRUE_CONFIDENCE);
            kept.push(o);
        }
        let n_fp = poisson.as_ref().map_or(0, |p| p.sample(&mut rng) as usize);
        for _ in 0..n_fp {
            let w = uniform(&mut rng, WIDTH) * cfg.frame_width;
            let h = w * uniform(&mut rng, SHAPE);
            let left = rng.random_range(0.0..(cfg.frame_width - w).max(1.0));
            let top = rng.random_range(0.0..(cfg.frame_height - h).max(1.0));
            let embedding = unit_vector(&mut rng, dim);
            let confidence = uniform(&mut rng, FALSE_CONFIDENCE);
            let class_id = rng.random_range(0..CLASSES);
            kept.push(crate::model::Observation {
                detection: Detection::new(frame, BoundingBox::new(left, top, w, h)?, confidence, class_id)?,
                embedding: Some(embedding),
            });
        }
        if !kept.is_empty() {
            out.push((frame, kept));
        }
    }
    DetectionSet::from_observations(clean.camera_id, Some(dim), out.iter().map(|(f, o)| (*f, o.as_slice())))
}

/// Corrupts every camera with [`corruption_seed`].
pub fn corrupt_all(scenario: &Scenario) -> Result<BTreeMap<CameraId, DetectionSet>> {
    scenario
        .clean
        .iter()
        .map(|(&c, set)| Ok((c, corrupt(set, &scenario.config, corruption_seed(scenario.config.seed, c))?)))
        .collect()
}

pub fn ground_truth_file(camera_id: CameraId) -> String {
    format!("gt_c{camera_id}.txt")
}

pub fn detections_file(camera_id: CameraId) -> String {
    format!("det_c{camera_id}.txt")
}

pub fn embeddings_file(camera_id: CameraId) -> String {
    format!("emb_c{camera_id}.txt")
}

pub const CAMERAS_FILE: &str = "cameras.txt";

/// Writes camera metadata, ground truth and the given detections into `dir`.
pub fn write_scenario(dir: &Path, scenario: &Scenario, detections: &BTreeMap<CameraId, DetectionSet>) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(CAMERAS_FILE), io::write_cameras(&scenario.cameras))?;
    for (&c, gt) in &scenario.ground_truth {
        io::write_tracks_to(gt, &dir.join(ground_truth_file(c)))?;
    }
    for (&c, set) in detections {
        let (det, emb) = io::write_detections(set);
        std::fs::write(dir.join(detections_file(c)), det)?;
        if let Some(emb) = emb {
            std::fs::write(dir.join(embeddings_file(c)), emb)?;
        }
    }
    Ok(())
}

/// Labeled features for head training: one random unit mean per identity
/// plus isotropic Gaussian noise of std `noise` per component.
pub fn identity_features(n_identities: usize, per_identity: usize, dim: usize, noise: f64, seed: u64) -> Vec<EmbeddingVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means: Vec<Vec<f64>> = (0..n_identities).map(|_| unit_vector(&mut rng, dim)).collect();
    let mut out = Vec::with_capacity(n_identities * per_identity);
    for (i, mean) in means.iter().enumerate() {
        for _ in 0..per_identity {
            let v = mean
                .iter()
                .map(|m| {
                    let z: f64 = rng.sample(StandardNormal);
                    m + noise * z
                })
                .collect();
            out.push(EmbeddingVector::labeled(v, i as u64 + 1));
        }
    }
    out
}
