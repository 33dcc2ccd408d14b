//! Detection-level precision/recall and identity-level IDF1/IDP/IDR.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::geometry::{iou, BoundingBox};
use crate::model::{CameraId, FrameIndex, TrackRecord};
use crate::sct::assignment::{solve_assignment, CostMatrix};

/// MOT overlap criterion for a true positive.
pub const DEFAULT_IOU_MIN: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EvalReport {
    pub idf1: f64,
    pub idp: f64,
    pub idr: f64,
    pub precision: f64,
    pub recall: f64,
    pub idtp: u64,
    pub idfp: u64,
    pub idfn: u64,
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DetectionScores {
    pub precision: f64,
    pub recall: f64,
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct IdentityScores {
    pub idf1: f64,
    pub idp: f64,
    pub idr: f64,
    pub idtp: u64,
    pub idfp: u64,
    pub idfn: u64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

/// One-to-one matching of predicted to ground-truth boxes in a frame:
/// as many pairs with IoU >= `iou_min` as possible, then the largest total
/// IoU. Returns `(gt_index, pred_index)` pairs.
pub fn frame_match(predicted: &[BoundingBox], ground_truth: &[BoundingBox], iou_min: f64) -> Vec<(usize, usize)> {
    if predicted.is_empty() || ground_truth.is_empty() {
        return Vec::new();
    }
    // any forbidden pair costs more than all admissible pairs together
    let forbidden = (ground_truth.len().max(predicted.len()) + 1) as f64;
    let overlaps: Vec<Vec<f64>> = ground_truth
        .iter()
        .map(|g| predicted.iter().map(|p| iou(g, p)).collect())
        .collect();
    let cost = CostMatrix::from_fn(ground_truth.len(), predicted.len(), |g, p| {
        if overlaps[g][p] >= iou_min {
            1.0 - overlaps[g][p]
        } else {
            forbidden
        }
    });
    solve_assignment(&cost)
        .expect("finite costs")
        .matches
        .into_iter()
        .filter(|&(g, p)| overlaps[g][p] >= iou_min)
        .collect()
}

type FrameBoxes = BTreeMap<(CameraId, FrameIndex), Vec<(u64, BoundingBox)>>;

fn group(records: &[TrackRecord]) -> FrameBoxes {
    let mut out: FrameBoxes = BTreeMap::new();
    for r in records {
        out.entry((r.camera_id, r.frame)).or_default().push((r.id, r.bbox));
    }
    out
}

fn check_cameras(predicted: &[TrackRecord], ground_truth: &[TrackRecord], known: Option<&BTreeSet<CameraId>>) -> Result<()> {
    let gt_cams: BTreeSet<CameraId> = ground_truth.iter().map(|r| r.camera_id).collect();
    for r in predicted {
        let ok = gt_cams.contains(&r.camera_id) || known.is_some_and(|k| k.contains(&r.camera_id));
        if !ok {
            return Err(Error::Eval(format!(
                "camera {} appears in predictions but not in ground truth",
                r.camera_id
            )));
        }
    }
    Ok(())
}

/// Frame-level TP/FP/FN summed over all cameras and frames. Identity labels
/// are ignored.
pub fn precision_recall(
    predicted: &[TrackRecord],
    ground_truth: &[TrackRecord],
    iou_min: f64,
    known_cameras: Option<&BTreeSet<CameraId>>,
) -> Result<DetectionScores> {
    check_cameras(predicted, ground_truth, known_cameras)?;
    let pred = group(predicted);
    let gt = group(ground_truth);
    let mut tp = 0u64;
    for (key, g) in &gt {
        if let Some(p) = pred.get(key) {
            let gb: Vec<BoundingBox> = g.iter().map(|x| x.1).collect();
            let pb: Vec<BoundingBox> = p.iter().map(|x| x.1).collect();
            tp += frame_match(&pb, &gb, iou_min).len() as u64;
        }
    }
    let fp = predicted.len() as u64 - tp;
    let fn_ = ground_truth.len() as u64 - tp;
    Ok(DetectionScores {
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fn_),
        tp,
        fp,
        fn_,
    })
}

/// Identity co-occurrence counts.
#[derive(Debug, Clone, PartialEq)]
pub struct Cooccurrence {
    /// Sorted ground-truth identities (table rows).
    pub gt_ids: Vec<u64>,
    /// Sorted predicted identities (table columns).
    pub pred_ids: Vec<u64>,
    /// Rows per ground-truth identity.
    pub n_gt: BTreeMap<u64, u64>,
    /// Rows per predicted identity.
    pub n_pred: BTreeMap<u64, u64>,
    /// `table[g][p]`: camera-frames where both are present with IoU >= `iou_min`.
    pub table: Vec<Vec<u64>>,
}

/// Co-occurrence table of ground-truth against predicted identities.
pub fn cooccurrence(predicted: &[TrackRecord], ground_truth: &[TrackRecord], iou_min: f64) -> Cooccurrence {
    let gt_ids: Vec<u64> = ground_truth.iter().map(|r| r.id).collect::<BTreeSet<_>>().into_iter().collect();
    let pred_ids: Vec<u64> = predicted.iter().map(|r| r.id).collect::<BTreeSet<_>>().into_iter().collect();
    let gi: BTreeMap<u64, usize> = gt_ids.iter().enumerate().map(|(i, &g)| (g, i)).collect();
    let pi: BTreeMap<u64, usize> = pred_ids.iter().enumerate().map(|(i, &p)| (p, i)).collect();
    let mut n_gt: BTreeMap<u64, u64> = BTreeMap::new();
    let mut n_pred: BTreeMap<u64, u64> = BTreeMap::new();
    for r in ground_truth {
        *n_gt.entry(r.id).or_default() += 1;
    }
    for r in predicted {
        *n_pred.entry(r.id).or_default() += 1;
    }
    let mut co = vec![vec![0u64; pred_ids.len()]; gt_ids.len()];
    let pred = group(predicted);
    for (key, g) in group(ground_truth) {
        if let Some(p) = pred.get(&key) {
            for (gid, gb) in &g {
                for (pid, pb) in p {
                    if iou(gb, pb) >= iou_min {
                        co[gi[gid]][pi[pid]] += 1;
                    }
                }
            }
        }
    }
    Cooccurrence {
        gt_ids,
        pred_ids,
        n_gt,
        n_pred,
        table: co,
    }
}

/// Identity measures with one global truth-to-prediction identity matching
/// across all cameras.
pub fn id_measures(
    predicted: &[TrackRecord],
    ground_truth: &[TrackRecord],
    iou_min: f64,
    known_cameras: Option<&BTreeSet<CameraId>>,
) -> Result<IdentityScores> {
    check_cameras(predicted, ground_truth, known_cameras)?;
    let Cooccurrence {
        gt_ids,
        pred_ids,
        n_gt,
        n_pred,
        table: co,
    } = cooccurrence(predicted, ground_truth, iou_min);
    let (g, p) = (gt_ids.len(), pred_ids.len());
    let total_gt = ground_truth.len() as u64;
    let total_pred = predicted.len() as u64;

    let idtp = if g == 0 || p == 0 {
        0
    } else {
        // rows: gt identities then one dummy per predicted identity
        // cols: predicted identities then one dummy per gt identity
        let forbidden = (total_gt + total_pred + 1) as f64;
        let cost = CostMatrix::from_fn(g + p, p + g, |r, c| match (r < g, c < p) {
            (true, true) => {
                let ng = n_gt[&gt_ids[r]];
                let np = n_pred[&pred_ids[c]];
                (ng + np - 2 * co[r][c]) as f64
            }
            (true, false) => {
                if c - p == r {
                    n_gt[&gt_ids[r]] as f64
                } else {
                    forbidden
                }
            }
            (false, true) => {
                if r - g == c {
                    n_pred[&pred_ids[c]] as f64
                } else {
                    forbidden
                }
            }
            (false, false) => 0.0,
        });
        solve_assignment(&cost)?
            .matches
            .iter()
            .filter(|&&(r, c)| r < g && c < p)
            .map(|&(r, c)| co[r][c])
            .sum()
    };
    let idfp = total_pred - idtp;
    let idfn = total_gt - idtp;
    Ok(IdentityScores {
        idf1: ratio(2 * idtp, 2 * idtp + idfp + idfn),
        idp: ratio(idtp, idtp + idfp),
        idr: ratio(idtp, idtp + idfn),
        idtp,
        idfp,
        idfn,
    })
}

/// Full report over all cameras.
pub fn evaluate(
    predicted: &[TrackRecord],
    ground_truth: &[TrackRecord],
    iou_min: f64,
    known_cameras: Option<&BTreeSet<CameraId>>,
) -> Result<EvalReport> {
    let d = precision_recall(predicted, ground_truth, iou_min, known_cameras)?;
    let i = id_measures(predicted, ground_truth, iou_min, known_cameras)?;
    Ok(EvalReport {
        idf1: i.idf1,
        idp: i.idp,
        idr: i.idr,
        precision: d.precision,
        recall: d.recall,
        idtp: i.idtp,
        idfp: i.idfp,
        idfn: i.idfn,
        tp: d.tp,
        fp: d.fp,
        fn_: d.fn_,
    })
}

/// Reports restricted to each camera in turn.
pub fn evaluate_per_camera(
    predicted: &[TrackRecord],
    ground_truth: &[TrackRecord],
    iou_min: f64,
    known_cameras: Option<&BTreeSet<CameraId>>,
) -> Result<BTreeMap<CameraId, EvalReport>> {
    check_cameras(predicted, ground_truth, known_cameras)?;
    let cams: BTreeSet<CameraId> = ground_truth
        .iter()
        .chain(predicted)
        .map(|r| r.camera_id)
        .chain(known_cameras.into_iter().flatten().copied())
        .collect();
    cams.into_iter()
        .map(|c| {
            let p: Vec<TrackRecord> = predicted.iter().filter(|r| r.camera_id == c).copied().collect();
            let g: Vec<TrackRecord> = ground_truth.iter().filter(|r| r.camera_id == c).copied().collect();
            let only = BTreeSet::from([c]);
            Ok((c, evaluate(&p, &g, iou_min, Some(&only))?))
        })
        .collect()
}
