//! File-level commands. Each command reads its inputs, writes its artifacts
//! into the output directory and finishes with `manifest.toml`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use mcmt_core::io;
use mcmt_core::metrics::{evaluate, evaluate_per_camera, EvalReport};
use mcmt_core::model::{CameraId, CameraMeta, DetectionSet, TrackRecord};
use mcmt_core::reid::distance::{EmbeddingVector, Metric};
use mcmt_core::reid::head::{rank1_accuracy, train_head, write_checkpoint, TrainedHead};
use mcmt_core::simgen::{self, corrupt_all, generate_scenario, CAMERAS_FILE};
use mcmt_core::sync::CameraTracklet;

use crate::config::{hex_digest, PipelineConfig};
use crate::pipeline::{link_cameras, run_scenario, suppress, track_all, CameraTracks};
use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.toml";
pub const CONFIG_FILE: &str = "config.toml";
pub const GLOBAL_TRACKS_FILE: &str = "global_tracks.txt";
pub const IDENTITY_MAP_FILE: &str = "id_map.txt";
pub const EVAL_TEXT_FILE: &str = "eval.txt";
pub const EVAL_KV_FILE: &str = "eval.kv";
pub const CHECKPOINT_FILE: &str = "checkpoint.txt";
pub const LOSS_FILE: &str = "loss.csv";
pub const TRAIN_KV_FILE: &str = "train.kv";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const NOISE_CURVE_FILE: &str = "idf1_vs_noise.csv";

pub fn tracks_file(camera_id: CameraId) -> String {
    format!("tracks_c{camera_id}.txt")
}

pub fn tracklets_file(camera_id: CameraId) -> String {
    format!("tracklets_c{camera_id}.txt")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Nms,
    Track,
    Mcmt,
    Eval,
    TrainHead,
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Nms => "nms",
            Command::Track => "track",
            Command::Mcmt => "mcmt",
            Command::Eval => "eval",
            Command::TrainHead => "train-head",
            Command::Report => "report",
        }
    }
}

/// Paths a command reads, beyond the configuration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Inputs {
    pub input: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub ground_truth: Option<PathBuf>,
}

/// Collects input digests and output files, then writes the manifest.
struct Run<'a> {
    command: Command,
    cfg: &'a PipelineConfig,
    out: PathBuf,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

impl<'a> Run<'a> {
    fn new(command: Command, cfg: &'a PipelineConfig) -> Result<Self, CliError> {
        let out = PathBuf::from(&cfg.io.output);
        fs::create_dir_all(&out).map_err(|e| file_err(&out, e))?;
        Ok(Self {
            command,
            cfg,
            out,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        })
    }

    fn read(&mut self, role: &str, path: &Path) -> Result<String, CliError> {
        let text = fs::read_to_string(path).map_err(|e| file_err(path, e))?;
        let name = path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
        self.inputs.insert(format!("{role}/{name}"), hex_digest(text.as_bytes()));
        Ok(text)
    }

    fn write(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        let path = self.out.join(name);
        fs::write(&path, text).map_err(|e| file_err(&path, e))?;
        self.outputs.insert(name.to_string(), hex_digest(text.as_bytes()));
        Ok(())
    }

    fn finish(mut self) -> Result<PathBuf, CliError> {
        self.write(CONFIG_FILE, &self.cfg.canonical())?;
        let mut m = String::new();
        let _ = writeln!(m, "command = \"{}\"", self.command.name());
        let _ = writeln!(m, "config_sha256 = \"{}\"", self.cfg.hash());
        let _ = writeln!(m, "seed = {}", self.cfg.run.seed);
        m.push_str("\n[inputs]\n");
        for (k, v) in &self.inputs {
            let _ = writeln!(m, "{k:?} = \"{v}\"");
        }
        m.push_str("\n[outputs]\n");
        for (k, v) in &self.outputs {
            let _ = writeln!(m, "{k:?} = \"{v}\"");
        }
        let path = self.out.join(MANIFEST_FILE);
        fs::write(&path, m).map_err(|e| file_err(&path, e))?;
        Ok(path)
    }
}

fn file_err(path: &Path, source: std::io::Error) -> CliError {
    CliError::File {
        path: path.display().to_string(),
        source,
    }
}

fn require<'p>(path: &'p Option<PathBuf>, what: &str) -> Result<&'p Path, CliError> {
    path.as_deref()
        .ok_or_else(|| CliError::Usage(format!("{what} is required")))
}

fn input_dir<'p>(inputs: &'p Inputs, cfg: &'p PipelineConfig) -> Result<PathBuf, CliError> {
    inputs
        .input
        .clone()
        .or_else(|| cfg.io.input.as_ref().map(PathBuf::from))
        .ok_or_else(|| CliError::Usage("an input directory is required (--in or io.input)".into()))
}

fn read_cameras(run: &mut Run, dir: &Path) -> Result<Vec<CameraMeta>, CliError> {
    let path = dir.join(CAMERAS_FILE);
    let text = run.read("in", &path)?;
    Ok(io::parse_cameras(&path.display().to_string(), &text)?)
}

fn read_detection_sets(run: &mut Run, dir: &Path, cameras: &[CameraMeta]) -> Result<BTreeMap<CameraId, DetectionSet>, CliError> {
    let mut out = BTreeMap::new();
    for cam in cameras {
        let det_path = dir.join(simgen::detections_file(cam.camera_id));
        let det = run.read("in", &det_path)?;
        let emb_path = dir.join(simgen::embeddings_file(cam.camera_id));
        let emb = if emb_path.exists() {
            Some(run.read("in", &emb_path)?)
        } else {
            None
        };
        let set = io::parse_detections(&det_path.display().to_string(), &det, emb.as_deref(), cam.camera_id)?;
        out.insert(cam.camera_id, set);
    }
    Ok(out)
}

fn write_detection_sets(run: &mut Run, sets: &BTreeMap<CameraId, DetectionSet>) -> Result<(), CliError> {
    for (&c, set) in sets {
        let (det, emb) = io::write_detections(set);
        run.write(&simgen::detections_file(c), &det)?;
        if let Some(emb) = emb {
            run.write(&simgen::embeddings_file(c), &emb)?;
        }
    }
    Ok(())
}

/// Writes a simulated scenario: cameras, ground truth and corrupted
/// detections with embeddings.
pub fn simulate(cfg: &PipelineConfig) -> Result<PathBuf, CliError> {
    let mut run = Run::new(Command::Simulate, cfg)?;
    let scenario = generate_scenario(&cfg.scenario_config())?;
    let detections = corrupt_all(&scenario)?;
    run.write(CAMERAS_FILE, &io::write_cameras(&scenario.cameras))?;
    for (&c, gt) in &scenario.ground_truth {
        run.write(&simgen::ground_truth_file(c), &io::write_tracks(gt)?)?;
    }
    write_detection_sets(&mut run, &detections)?;
    run.finish()
}

/// Applies suppression to every camera's detections.
pub fn nms(cfg: &PipelineConfig, inputs: &Inputs) -> Result<PathBuf, CliError> {
    let mut run = Run::new(Command::Nms, cfg)?;
    let dir = input_dir(inputs, cfg)?;
    let cameras = read_cameras(&mut run, &dir)?;
    let sets = read_detection_sets(&mut run, &dir, &cameras)?;
    let nms_cfg = cfg.nms_config();
    let filtered = sets
        .iter()
        .map(|(&c, s)| Ok((c, suppress(s, &nms_cfg)?)))
        .collect::<Result<BTreeMap<_, _>, CliError>>()?;
    run.write(CAMERAS_FILE, &io::write_cameras(&cameras))?;
    write_detection_sets(&mut run, &filtered)?;
    run.finish()
}

/// Suppression and single-camera tracking per camera, in parallel.
pub fn track(cfg: &PipelineConfig, inputs: &Inputs) -> Result<PathBuf, CliError> {
    let mut run = Run::new(Command::Track, cfg)?;
    let dir = input_dir(inputs, cfg)?;
    let cameras = read_cameras(&mut run, &dir)?;
    let sets = read_detection_sets(&mut run, &dir, &cameras)?;
    let tracks = track_all(&sets, cfg, cfg.run.workers)?;
    run.write(CAMERAS_FILE, &io::write_cameras(&cameras))?;
    for (&c, t) in &tracks {
        run.write(&tracks_file(c), &io::write_tracks(&t.records)?)?;
        let text = match t.tracklets.first() {
            Some(first) => io::write_tracklet_embeddings(first.embeddings[0].len(), &t.tracklet_embeddings())?,
            None => String::new(),
        };
        run.write(&tracklets_file(c), &text)?;
    }
    run.finish()
}

/// Cross-camera synchronization of per-camera tracks.
pub fn mcmt(cfg: &PipelineConfig, inputs: &Inputs) -> Result<PathBuf, CliError> {
    let mut run = Run::new(Command::Mcmt, cfg)?;
    let dir = input_dir(inputs, cfg)?;
    let cameras = read_cameras(&mut run, &dir)?;
    let mut tracks = BTreeMap::new();
    for cam in &cameras {
        let c = cam.camera_id;
        let tpath = dir.join(tracks_file(c));
        let text = run.read("in", &tpath)?;
        let records = io::parse_tracks(&tpath.display().to_string(), &text)?;
        if let Some(r) = records.iter().find(|r| r.camera_id != c) {
            return Err(CliError::Usage(format!(
                "{}: row for camera {} in camera {c}'s track file",
                tpath.display(),
                r.camera_id
            )));
        }
        let epath = dir.join(tracklets_file(c));
        let text = run.read("in", &epath)?;
        let (_, embeddings) = io::parse_tracklet_embeddings(&epath.display().to_string(), &text)?;
        let mut span: BTreeMap<u64, (u32, u32)> = BTreeMap::new();
        for r in &records {
            let e = span.entry(r.id).or_insert((r.frame, r.frame));
            e.0 = e.0.min(r.frame);
            e.1 = e.1.max(r.frame);
        }
        let tracklets = embeddings
            .into_iter()
            .filter_map(|(local_id, embeddings)| {
                span.get(&local_id).map(|&(first_frame, last_frame)| CameraTracklet {
                    camera_id: c,
                    local_id,
                    first_frame,
                    last_frame,
                    embeddings,
                })
            })
            .collect();
        tracks.insert(
            c,
            CameraTracks {
                camera_id: c,
                records,
                tracklets,
            },
        );
    }
    let global = link_cameras(&tracks, &cameras, &cfg.sync_config())?;
    run.write(GLOBAL_TRACKS_FILE, &io::write_tracks(&global.records)?)?;
    run.write(IDENTITY_MAP_FILE, &io::write_identity_map(&global.identity_rows))?;
    run.finish()
}

/// Reads a track file, or every file in a directory whose name starts with
/// `prefix`, or the directory's `preferred` file when present.
fn read_track_source(run: &mut Run, role: &str, path: &Path, preferred: &str, prefix: &str) -> Result<Vec<TrackRecord>, CliError> {
    let files: Vec<PathBuf> = if path.is_dir() {
        if path.join(preferred).is_file() {
            vec![path.join(preferred)]
        } else {
            let mut v: Vec<PathBuf> = fs::read_dir(path)
                .map_err(|e| file_err(path, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| {
                    p.file_name()
                        .and_then(|n| n.to_str())
                        .is_some_and(|n| n.starts_with(prefix) && n.ends_with(".txt"))
                })
                .collect();
            v.sort();
            if v.is_empty() {
                return Err(CliError::Usage(format!("{}: no {prefix}*.txt files", path.display())));
            }
            v
        }
    } else {
        vec![path.to_path_buf()]
    };
    let mut out = Vec::new();
    for f in files {
        let text = run.read(role, &f)?;
        out.extend(io::parse_tracks(&f.display().to_string(), &text)?);
    }
    Ok(out)
}

fn report_line(label: &str, r: &EvalReport) -> String {
    format!(
        "{label:<8} {:>7.4} {:>7.4} {:>7.4} {:>9.4} {:>7.4} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7}",
        r.idf1, r.idp, r.idr, r.precision, r.recall, r.idtp, r.idfp, r.idfn, r.tp, r.fp, r.fn_
    )
}

const REPORT_HEADER: &str = "scope       IDF1     IDP     IDR precision  recall    IDTP    IDFP    IDFN      TP      FP      FN";

pub fn format_report_kv(r: &EvalReport) -> String {
    format!(
        "idf1={}\nidp={}\nidr={}\nprecision={}\nrecall={}\nidtp={}\nidfp={}\nidfn={}\ntp={}\nfp={}\nfn={}\n",
        r.idf1, r.idp, r.idr, r.precision, r.recall, r.idtp, r.idfp, r.idfn, r.tp, r.fp, r.fn_
    )
}

/// Scores predictions against ground truth.
pub fn eval(cfg: &PipelineConfig, inputs: &Inputs) -> Result<(PathBuf, EvalReport), CliError> {
    let mut run = Run::new(Command::Eval, cfg)?;
    let pred_path = inputs
        .predictions
        .clone()
        .or_else(|| inputs.input.clone())
        .or_else(|| cfg.io.input.as_ref().map(PathBuf::from));
    let pred_path = require(&pred_path, "a prediction file or directory (--pred)")?.to_path_buf();
    let gt_path = inputs.ground_truth.clone().or_else(|| cfg.io.ground_truth.as_ref().map(PathBuf::from));
    let gt_path = require(&gt_path, "a ground-truth file or directory (--gt)")?.to_path_buf();
    let pred = read_track_source(&mut run, "pred", &pred_path, GLOBAL_TRACKS_FILE, "tracks_c")?;
    let gt = read_track_source(&mut run, "gt", &gt_path, "", "gt_c")?;
    let known: Option<BTreeSet<CameraId>> = if gt_path.is_dir() && gt_path.join(CAMERAS_FILE).is_file() {
        let p = gt_path.join(CAMERAS_FILE);
        let text = run.read("gt", &p)?;
        Some(io::parse_cameras(&p.display().to_string(), &text)?.iter().map(|c| c.camera_id).collect())
    } else {
        None
    };
    let iou_min = cfg.eval.iou_min;
    let report = evaluate(&pred, &gt, iou_min, known.as_ref())?;
    let per_camera = evaluate_per_camera(&pred, &gt, iou_min, known.as_ref())?;
    let mut text = format!("{REPORT_HEADER}\n{}\n", report_line("all", &report));
    for (c, r) in &per_camera {
        text.push_str(&report_line(&format!("camera {c}"), r));
        text.push('\n');
    }
    run.write(EVAL_TEXT_FILE, &text)?;
    let mut kv = format_report_kv(&report);
    for (c, r) in &per_camera {
        for line in format_report_kv(r).lines() {
            let _ = writeln!(kv, "camera{c}.{line}");
        }
    }
    run.write(EVAL_KV_FILE, &kv)?;
    Ok((run.finish()?, report))
}

/// Synthetic training data split into training samples and a held-out
/// query/gallery pair (alternating held-out samples of each identity).
pub fn training_split(cfg: &PipelineConfig) -> (Vec<EmbeddingVector>, Vec<EmbeddingVector>, Vec<EmbeddingVector>) {
    let t = &cfg.train;
    let all = simgen::identity_features(t.identities, t.samples_per_class, t.feature_dim, t.feature_noise, cfg.run.seed);
    let (mut train, mut query, mut gallery) = (Vec::new(), Vec::new(), Vec::new());
    for (i, s) in all.into_iter().enumerate() {
        let k = i % t.samples_per_class.max(1);
        if k >= t.held_out_per_class {
            train.push(s);
        } else if k.is_multiple_of(2) {
            query.push(s);
        } else {
            gallery.push(s);
        }
    }
    (train, query, gallery)
}

pub struct TrainingOutcome {
    pub trained: TrainedHead,
    pub rank1: f64,
}

/// Trains the head on synthetic features and measures held-out rank-1.
pub fn train_synthetic(cfg: &PipelineConfig) -> Result<TrainingOutcome, CliError> {
    let (train, query, gallery) = training_split(cfg);
    let trained = train_head(&train, &cfg.loss_config(), &cfg.train_config())?;
    let embed = |v: &[EmbeddingVector]| -> Result<Vec<EmbeddingVector>, CliError> {
        v.iter()
            .map(|s| {
                Ok(EmbeddingVector {
                    values: trained.head.embed(&s.values)?,
                    ..s.clone()
                })
            })
            .collect()
    };
    let rank1 = rank1_accuracy(&embed(&query)?, &embed(&gallery)?, Metric::from(cfg.loss.metric))?;
    Ok(TrainingOutcome { trained, rank1 })
}

fn loss_csv(trace: &[f64]) -> String {
    let mut out = String::from("epoch,loss\n");
    for (i, l) in trace.iter().enumerate() {
        let _ = writeln!(out, "{},{l}", i + 1);
    }
    out
}

/// Trains the embedding head and writes the checkpoint and loss trace.
pub fn train(cfg: &PipelineConfig) -> Result<PathBuf, CliError> {
    let mut run = Run::new(Command::TrainHead, cfg)?;
    let outcome = train_synthetic(cfg)?;
    run.write(CHECKPOINT_FILE, &write_checkpoint(&outcome.trained.head))?;
    run.write(LOSS_FILE, &loss_csv(&outcome.trained.loss_trace))?;
    let final_loss = outcome.trained.loss_trace.last().copied().unwrap_or(f64::NAN);
    run.write(TRAIN_KV_FILE, &format!("rank1={}\nfinal_loss={final_loss}\nepochs={}\n", outcome.rank1, cfg.train.epochs))?;
    run.finish()
}

/// Mean report over `seeds` simulated runs at each noise level.
pub fn noise_sweep(cfg: &PipelineConfig) -> Result<Vec<(f64, EvalReport)>, CliError> {
    let mut out = Vec::new();
    for &sigma in &cfg.report.noise_levels {
        let mut sum = EvalReport::default();
        for seed in 0..cfg.report.seeds {
            let mut c = cfg.clone();
            c.scenario.embedding_noise = sigma;
            c.run.seed = cfg.run.seed + seed;
            let r = run_scenario(&c, 1)?.report;
            sum.idf1 += r.idf1;
            sum.idp += r.idp;
            sum.idr += r.idr;
            sum.precision += r.precision;
            sum.recall += r.recall;
            sum.idtp += r.idtp;
            sum.idfp += r.idfp;
            sum.idfn += r.idfn;
            sum.tp += r.tp;
            sum.fp += r.fp;
            sum.fn_ += r.fn_;
        }
        let n = cfg.report.seeds.max(1) as f64;
        sum.idf1 /= n;
        sum.idp /= n;
        sum.idr /= n;
        sum.precision /= n;
        sum.recall /= n;
        out.push((sigma, sum));
    }
    Ok(out)
}

/// Noise sweep plus training run, as a summary table and chart data.
pub fn report(cfg: &PipelineConfig, inputs: &Inputs) -> Result<PathBuf, CliError> {
    let mut run = Run::new(Command::Report, cfg)?;
    let sweep = noise_sweep(cfg)?;
    let mut curve = String::from("sigma,idf1,idp,idr,precision,recall\n");
    let mut table = format!("Mean over {} seeds per noise level\n\n{:<8} {:>7} {:>7} {:>7} {:>9} {:>7}\n", cfg.report.seeds, "sigma", "IDF1", "IDP", "IDR", "precision", "recall");
    for (sigma, r) in &sweep {
        let _ = writeln!(curve, "{sigma},{},{},{},{},{}", r.idf1, r.idp, r.idr, r.precision, r.recall);
        let _ = writeln!(table, "{sigma:<8} {:>7.4} {:>7.4} {:>7.4} {:>9.4} {:>7.4}", r.idf1, r.idp, r.idr, r.precision, r.recall);
    }
    run.write(NOISE_CURVE_FILE, &curve)?;

    let existing = inputs.input.as_ref().map(|d| d.join(LOSS_FILE)).filter(|p| p.is_file());
    let (loss, rank1) = match existing {
        Some(p) => {
            let text = run.read("in", &p)?;
            (text, None)
        }
        None => {
            let outcome = train_synthetic(cfg)?;
            (loss_csv(&outcome.trained.loss_trace), Some(outcome.rank1))
        }
    };
    let losses: Vec<f64> = loss.lines().skip(1).filter_map(|l| l.split(',').nth(1)?.parse().ok()).collect();
    table.push_str("\nEmbedding head\n\n");
    let _ = writeln!(table, "{:<12} {:>10}", "epochs", losses.len());
    if let (Some(first), Some(last)) = (losses.first(), losses.last()) {
        let _ = writeln!(table, "{:<12} {:>10.6}", "first loss", first);
        let _ = writeln!(table, "{:<12} {:>10.6}", "final loss", last);
    }
    if let Some(r) = rank1 {
        let _ = writeln!(table, "{:<12} {:>10.4}", "rank-1", r);
    }
    run.write(LOSS_FILE, &loss)?;
    run.write(SUMMARY_FILE, &table)?;
    run.finish()
}

pub fn run_command(command: Command, cfg: &PipelineConfig, inputs: &Inputs) -> Result<PathBuf, CliError> {
    match command {
        Command::Simulate => simulate(cfg),
        Command::Nms => nms(cfg, inputs),
        Command::Track => track(cfg, inputs),
        Command::Mcmt => mcmt(cfg, inputs),
        Command::Eval => eval(cfg, inputs).map(|r| r.0),
        Command::TrainHead => train(cfg),
        Command::Report => report(cfg, inputs),
    }
}
