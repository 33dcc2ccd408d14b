//! Pipeline configuration.
//!
//! Precedence, lowest to highest: built-in defaults, the config file
//! (`--config`, else `$MCMT_CONFIG`), `--set section.key=value` overrides in
//! command-line order, then the dedicated `--seed`/`--workers` flags.
//! Unknown sections and keys are rejected at every level.

use std::path::Path;

use mcmt_core::reid::distance::{Metric, TrackletDistanceMode};
use mcmt_core::reid::head::TrainConfig;
use mcmt_core::reid::loss::LossConfig;
use mcmt_core::sct::TrackerConfig;
use mcmt_core::simgen::ScenarioConfig;
use mcmt_core::suppression::NmsConfig;
use mcmt_core::sync::{PairMatching, SyncConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const CONFIG_ENV: &str = "MCMT_CONFIG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct PipelineConfig {
    pub run: RunSection,
    pub io: IoSection,
    pub scenario: ScenarioSection,
    pub nms: NmsSection,
    pub tracker: TrackerSection,
    pub loss: LossSection,
    pub train: TrainSection,
    pub sync: SyncSection,
    pub eval: EvalSection,
    pub report: ReportSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct RunSection {
    pub seed: u64,
    /// Worker threads for `track`; 0 means one per camera.
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoSection {
    pub input: Option<String>,
    pub output: String,
    pub ground_truth: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
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
    pub fp_rate: f64,
    pub box_jitter_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NmsSection {
    pub iou_threshold: f64,
    pub interclass: bool,
    pub min_confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackOutput {
    /// Rows emitted while tracking: confirmed tracks matched in each frame.
    Online,
    /// Full histories of every confirmed tracklet, short gaps interpolated.
    Offline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerSection {
    pub n_init: u32,
    pub max_age: u32,
    pub appearance_max_distance: f64,
    pub gating_threshold: f64,
    pub iou_min: f64,
    pub embedding_budget: usize,
    pub use_appearance: bool,
    pub output: TrackOutput,
    /// Longest run of missed frames filled in offline output.
    pub max_gap: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricName {
    Euclidean,
    Cosine,
}

impl From<MetricName> for Metric {
    fn from(m: MetricName) -> Self {
        match m {
            MetricName::Euclidean => Metric::Euclidean,
            MetricName::Cosine => Metric::Cosine,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceModeName {
    Mean,
    Min,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchingName {
    Greedy,
    Optimal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossSection {
    pub margin: f64,
    pub xe_weight: f64,
    pub tr_weight: f64,
    pub metric: MetricName,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub samples_per_identity: usize,
    pub learning_rate: f64,
    pub rho: f64,
    pub epsilon: f64,
    pub embedding_dim: usize,
    /// Synthetic training data: identities, samples each, feature size, noise.
    pub identities: usize,
    pub samples_per_class: usize,
    pub feature_dim: usize,
    pub feature_noise: f64,
    /// Samples per identity held out for rank-1 evaluation.
    pub held_out_per_class: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyncSection {
    pub sync_threshold: f64,
    pub max_threshold: f64,
    pub adjacency_only: bool,
    /// Seconds; pairs further apart in time are never compared.
    pub temporal_window: Option<f64>,
    pub metric: MetricName,
    pub distance_mode: DistanceModeName,
    pub matching: MatchingName,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub iou_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSection {
    pub noise_levels: Vec<f64>,
    pub seeds: u64,
}



impl Default for IoSection {
    fn default() -> Self {
        Self {
            input: None,
            output: "out".into(),
            ground_truth: None,
        }
    }
}

impl Default for ScenarioSection {
    fn default() -> Self {
        let d = ScenarioConfig::default();
        Self {
            n_cameras: d.n_cameras,
            n_identities: d.n_identities,
            n_frames: d.n_frames,
            fps: d.fps,
            frame_width: d.frame_width,
            frame_height: d.frame_height,
            embedding_dim: d.embedding_dim,
            embedding_noise: d.embedding_noise,
            camera_bias_scale: d.camera_bias_scale,
            miss_prob: d.miss_prob,
            fp_rate: d.fp_rate,
            box_jitter_std: d.box_jitter_std,
        }
    }
}

impl Default for NmsSection {
    fn default() -> Self {
        let d = NmsConfig::default();
        Self {
            iou_threshold: d.iou_threshold,
            interclass: d.interclass,
            min_confidence: d.min_confidence,
        }
    }
}

impl Default for TrackerSection {
    fn default() -> Self {
        let d = TrackerConfig::default();
        Self {
            n_init: d.n_init,
            max_age: d.max_age,
            appearance_max_distance: d.appearance_max_distance,
            gating_threshold: d.gating_threshold,
            iou_min: d.iou_min,
            embedding_budget: d.embedding_budget,
            use_appearance: d.use_appearance,
            output: TrackOutput::Offline,
            max_gap: d.max_age,
        }
    }
}

impl Default for LossSection {
    fn default() -> Self {
        let d = LossConfig::default();
        Self {
            margin: d.margin,
            xe_weight: d.xe_weight,
            tr_weight: d.tr_weight,
            metric: metric_name(d.metric),
        }
    }
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            epochs: d.epochs,
            batch_size: d.batch_size,
            samples_per_identity: d.samples_per_identity,
            learning_rate: d.learning_rate,
            rho: d.rho,
            epsilon: d.epsilon,
            embedding_dim: d.embedding_dim,
            identities: 40,
            samples_per_class: 24,
            feature_dim: 64,
            feature_noise: 0.1,
            held_out_per_class: 8,
        }
    }
}

impl Default for SyncSection {
    fn default() -> Self {
        let d = SyncConfig::default();
        Self {
            sync_threshold: d.sync_threshold,
            max_threshold: d.max_threshold,
            adjacency_only: d.adjacency_only,
            temporal_window: d.temporal_window,
            metric: metric_name(d.metric),
            distance_mode: match d.distance_mode {
                TrackletDistanceMode::MeanEmbedding => DistanceModeName::Mean,
                TrackletDistanceMode::MinPairwise => DistanceModeName::Min,
            },
            matching: match d.matching {
                PairMatching::Greedy => MatchingName::Greedy,
                PairMatching::Optimal => MatchingName::Optimal,
            },
        }
    }
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            iou_min: mcmt_core::metrics::DEFAULT_IOU_MIN,
        }
    }
}

impl Default for ReportSection {
    fn default() -> Self {
        Self {
            noise_levels: vec![0.05, 0.2, 0.5],
            seeds: 5,
        }
    }
}

fn metric_name(m: Metric) -> MetricName {
    match m {
        Metric::Euclidean => MetricName::Euclidean,
        Metric::Cosine => MetricName::Cosine,
    }
}

impl PipelineConfig {
    pub fn scenario_config(&self) -> ScenarioConfig {
        let s = &self.scenario;
        ScenarioConfig {
            seed: self.run.seed,
            n_cameras: s.n_cameras,
            n_identities: s.n_identities,
            n_frames: s.n_frames,
            fps: s.fps,
            frame_width: s.frame_width,
            frame_height: s.frame_height,
            embedding_dim: s.embedding_dim,
            embedding_noise: s.embedding_noise,
            camera_bias_scale: s.camera_bias_scale,
            miss_prob: s.miss_prob,
            fp_rate: s.fp_rate,
            box_jitter_std: s.box_jitter_std,
        }
    }

    pub fn nms_config(&self) -> NmsConfig {
        NmsConfig {
            iou_threshold: self.nms.iou_threshold,
            interclass: self.nms.interclass,
            min_confidence: self.nms.min_confidence,
        }
    }

    pub fn tracker_config(&self) -> TrackerConfig {
        let t = &self.tracker;
        TrackerConfig {
            n_init: t.n_init,
            max_age: t.max_age,
            appearance_max_distance: t.appearance_max_distance,
            gating_threshold: t.gating_threshold,
            iou_min: t.iou_min,
            embedding_budget: t.embedding_budget,
            use_appearance: t.use_appearance,
        }
    }

    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            margin: self.loss.margin,
            xe_weight: self.loss.xe_weight,
            tr_weight: self.loss.tr_weight,
            metric: self.loss.metric.into(),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            epochs: t.epochs,
            batch_size: t.batch_size,
            samples_per_identity: t.samples_per_identity,
            learning_rate: t.learning_rate,
            rho: t.rho,
            epsilon: t.epsilon,
            embedding_dim: t.embedding_dim,
            seed: self.run.seed,
        }
    }

    pub fn sync_config(&self) -> SyncConfig {
        let s = &self.sync;
        SyncConfig {
            sync_threshold: s.sync_threshold,
            max_threshold: s.max_threshold,
            adjacency_only: s.adjacency_only,
            temporal_window: s.temporal_window,
            metric: s.metric.into(),
            distance_mode: match s.distance_mode {
                DistanceModeName::Mean => TrackletDistanceMode::MeanEmbedding,
                DistanceModeName::Min => TrackletDistanceMode::MinPairwise,
            },
            matching: match s.matching {
                MatchingName::Greedy => PairMatching::Greedy,
                MatchingName::Optimal => PairMatching::Optimal,
            },
        }
    }

    /// Validates every section through the library's own checks.
    pub fn validate(&self) -> Result<(), CliError> {
        self.nms_config().validate()?;
        self.tracker_config().validate()?;
        self.loss_config().validate()?;
        self.sync_config().validate()?;
        if !(0.0..=1.0).contains(&self.eval.iou_min) {
            return Err(CliError::Config("eval.iou_min must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Canonical TOML text of the effective configuration.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of [`Self::canonical`], hex encoded.
    pub fn hash(&self) -> String {
        hex_digest(self.canonical().as_bytes())
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn parse_table(source: &str, text: &str) -> Result<toml::Table, CliError> {
    text.parse::<toml::Table>()
        .map_err(|e| CliError::Config(format!("{source}: {e}")))
}

/// Applies one `section.key=value` override. The value is read as a TOML
/// literal, falling back to a bare string.
pub fn apply_override(table: &mut toml::Table, item: &str) -> Result<(), CliError> {
    let (path, raw) = item
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{item}` is not of the form section.key=value")))?;
    let (section, key) = path
        .trim()
        .split_once('.')
        .ok_or_else(|| CliError::Config(format!("override key `{path}` must be section.key")))?;
    let raw = raw.trim();
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let entry = table
        .entry(section.to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    match entry {
        toml::Value::Table(t) => {
            t.insert(key.to_string(), value);
            Ok(())
        }
        _ => Err(CliError::Config(format!("`{section}` is not a section"))),
    }
}

/// Builds the effective configuration from an optional file and overrides.
pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<PipelineConfig, CliError> {
    let mut table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", p.display())))?;
            parse_table(&p.display().to_string(), &text)?
        }
        None => toml::Table::new(),
    };
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let source = path.map_or_else(|| "overrides".to_string(), |p| p.display().to_string());
    from_table(&source, table)
}

/// Parses and validates configuration text.
pub fn parse(source: &str, text: &str) -> Result<PipelineConfig, CliError> {
    from_table(source, parse_table(source, text)?)
}

fn from_table(source: &str, table: toml::Table) -> Result<PipelineConfig, CliError> {
    let cfg: PipelineConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(format!("{source}: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}
