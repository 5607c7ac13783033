//! Segmentation and trajectory metrics.
//!
//! Class 0 is background and class 1 is vehicle strand throughout.

use crate::autolabel::SegMask;
use crate::traj::WorldTrajectory;
use serde::{Deserialize, Serialize};
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("mask shapes differ: {pred:?} vs {truth:?}")]
    ShapeMismatch { pred: (usize, usize), truth: (usize, usize) },
    #[error("trajectories share no aligned timestamps")]
    NoOverlap,
    #[error("MAE threshold must be positive, got {0}")]
    InvalidThreshold(f64),
    #[error("report: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = EvalError> = std::result::Result<T, E>;

/// Default MAE threshold for calling a detected trajectory a true positive.
pub const DEFAULT_MAE_THRESHOLD_FT: f64 = 15.0;
/// Default BF tolerance as a fraction of the image diagonal.
pub const BF_TOLERANCE_FRACTION: f64 = 0.0075;

fn check_shape(pred: &SegMask, truth: &SegMask) -> Result<()> {
    if pred.shape() != truth.shape() {
        return Err(EvalError::ShapeMismatch {
            pred: pred.shape(),
            truth: truth.shape(),
        });
    }
    Ok(())
}

/// Pixel counts indexed `[truth][pred]`, accumulable over many masks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub counts: [[u64; 2]; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub per_class: [f64; 2],
    pub global: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Iou {
    pub per_class: [f64; 2],
    pub mean: f64,
    pub weighted: f64,
    /// Classes absent from both masks, whose IoU was set to 1 by convention.
    pub absent: [bool; 2],
}

impl Confusion {
    pub fn from_masks(pred: &SegMask, truth: &SegMask) -> Result<Self> {
        let mut c = Self::default();
        c.add(pred, truth)?;
        Ok(c)
    }

    pub fn add(&mut self, pred: &SegMask, truth: &SegMask) -> Result<()> {
        check_shape(pred, truth)?;
        for (&p, &t) in pred.labels().iter().zip(truth.labels()) {
            self.counts[t as usize][p as usize] += 1;
        }
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    fn truth_count(&self, k: usize) -> u64 {
        self.counts[k][0] + self.counts[k][1]
    }

    fn pred_count(&self, k: usize) -> u64 {
        self.counts[0][k] + self.counts[1][k]
    }

    /// Per-class `TP / (TP + FN)`. A class missing from the truth scores 1
    /// when the prediction also lacks it and 0 otherwise.
    pub fn accuracy(&self) -> Accuracy {
        let per_class = [0, 1].map(|k| {
            let t = self.truth_count(k);
            if t == 0 {
                if self.pred_count(k) == 0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                self.counts[k][k] as f64 / t as f64
            }
        });
        let total = self.total();
        let global = if total == 0 {
            1.0
        } else {
            (self.counts[0][0] + self.counts[1][1]) as f64 / total as f64
        };
        Accuracy {
            per_class,
            global,
            mean: (per_class[0] + per_class[1]) / 2.0,
        }
    }

    /// Per-class `TP / (TP + FP + FN)`, their mean, and the mean weighted by
    /// truth pixel counts.
    pub fn iou(&self) -> Iou {
        let mut absent = [false; 2];
        let per_class = [0, 1].map(|k| {
            let tp = self.counts[k][k];
            let fp = self.pred_count(k) - tp;
            let fnn = self.truth_count(k) - tp;
            let denom = tp + fp + fnn;
            if denom == 0 {
                absent[k] = true;
                1.0
            } else {
                tp as f64 / denom as f64
            }
        });
        let total = self.total();
        let weighted = if total == 0 {
            1.0
        } else {
            (0..2).map(|k| per_class[k] * self.truth_count(k) as f64).sum::<f64>() / total as f64
        };
        Iou {
            per_class,
            mean: (per_class[0] + per_class[1]) / 2.0,
            weighted,
            absent,
        }
    }
}

pub fn pixel_accuracy(pred: &SegMask, truth: &SegMask) -> Result<Accuracy> {
    Ok(Confusion::from_masks(pred, truth)?.accuracy())
}

pub fn jaccard(pred: &SegMask, truth: &SegMask) -> Result<Iou> {
    Ok(Confusion::from_masks(pred, truth)?.iou())
}

/// Label-1 pixels with a 4-neighbour that is label 0 or off the image.
pub fn boundary_pixels(mask: &SegMask) -> Vec<(usize, usize)> {
    let (rows, cols) = mask.shape();
    let mut out = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if mask.get(r, c) == 0 {
                continue;
            }
            let edge = r == 0
                || c == 0
                || r + 1 == rows
                || c + 1 == cols
                || mask.get(r - 1, c) == 0
                || mask.get(r + 1, c) == 0
                || mask.get(r, c - 1) == 0
                || mask.get(r, c + 1) == 0;
            if edge {
                out.push((r, c));
            }
        }
    }
    out
}

pub fn default_bf_tolerance(rows: usize, cols: usize) -> f64 {
    BF_TOLERANCE_FRACTION * ((rows * rows + cols * cols) as f64).sqrt()
}

/// Fraction of `from` pixels within `tol` of some pixel of `to`, found by
/// scanning a `(2 tol + 1)` window in a boundary bitmap.
fn boundary_precision(from: &[(usize, usize)], to: &SegMask, tol: f64) -> f64 {
    let (rows, cols) = to.shape();
    let reach = tol.floor() as isize;
    let tol2 = tol * tol;
    let hits = from
        .iter()
        .filter(|&&(r, c)| {
            for dr in -reach..=reach {
                let rr = r as isize + dr;
                if rr < 0 || rr >= rows as isize {
                    continue;
                }
                for dc in -reach..=reach {
                    let cc = c as isize + dc;
                    if cc < 0 || cc >= cols as isize {
                        continue;
                    }
                    if ((dr * dr + dc * dc) as f64) <= tol2 && to.get(rr as usize, cc as usize) == 1 {
                        return true;
                    }
                }
            }
            false
        })
        .count();
    hits as f64 / from.len() as f64
}

fn boundary_mask(mask: &SegMask) -> SegMask {
    let mut b = SegMask::empty(mask.rows(), mask.cols(), mask.source());
    for (r, c) in boundary_pixels(mask) {
        b.set(r, c, true);
    }
    b
}

/// Boundary F1: harmonic mean of boundary precision and recall at the given
/// Euclidean pixel tolerance. Two masks without boundaries score 1; one
/// empty boundary against a non-empty one scores 0.
pub fn bf_score(pred: &SegMask, truth: &SegMask, tolerance: f64) -> Result<f64> {
    check_shape(pred, truth)?;
    let bp = boundary_pixels(pred);
    let bt = boundary_pixels(truth);
    match (bp.is_empty(), bt.is_empty()) {
        (true, true) => return Ok(1.0),
        (true, false) | (false, true) => return Ok(0.0),
        _ => {}
    }
    let precision = boundary_precision(&bp, &boundary_mask(truth), tolerance);
    let recall = boundary_precision(&bt, &boundary_mask(pred), tolerance);
    Ok(if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegScore {
    pub per_class_accuracy: [f64; 2],
    pub global_accuracy: f64,
    pub mean_accuracy: f64,
    pub per_class_iou: [f64; 2],
    pub mean_iou: f64,
    pub weighted_iou: f64,
    pub bf_score: f64,
    pub bf_tolerance_px: f64,
    /// Classes absent from both masks (IoU defined as 1).
    pub absent_classes: Vec<usize>,
}

/// All segmentation metrics; `bf_tolerance` defaults to 0.75% of the
/// diagonal.
pub fn segmentation_score(pred: &SegMask, truth: &SegMask, bf_tolerance: Option<f64>) -> Result<SegScore> {
    let conf = Confusion::from_masks(pred, truth)?;
    let acc = conf.accuracy();
    let iou = conf.iou();
    let tol = bf_tolerance.unwrap_or_else(|| default_bf_tolerance(pred.rows(), pred.cols()));
    Ok(SegScore {
        per_class_accuracy: acc.per_class,
        global_accuracy: acc.global,
        mean_accuracy: acc.mean,
        per_class_iou: iou.per_class,
        mean_iou: iou.mean,
        weighted_iou: iou.weighted,
        bf_score: bf_score(pred, truth, tol)?,
        bf_tolerance_px: tol,
        absent_classes: (0..2).filter(|&k| iou.absent[k]).collect(),
    })
}

/// Half the smallest positive gap between consecutive timestamps of either
/// trajectory: half a frame period for per-frame samples.
fn alignment_window(a: &WorldTrajectory, b: &WorldTrajectory) -> f64 {
    let gap = a
        .samples
        .windows(2)
        .chain(b.samples.windows(2))
        .map(|w| w[1].time_s - w[0].time_s)
        .filter(|d| *d > 0.0)
        .fold(f64::INFINITY, f64::min);
    if gap.is_finite() {
        gap / 2.0
    } else {
        0.0
    }
}

/// Mean absolute position error over truth samples that have a detected
/// sample within half a frame period.
pub fn trajectory_mae(detected: &WorldTrajectory, truth: &WorldTrajectory) -> Result<f64> {
    trajectory_mae_within(detected, truth, alignment_window(detected, truth))
}

/// [`trajectory_mae`] with an explicit alignment half-window in seconds.
pub fn trajectory_mae_within(detected: &WorldTrajectory, truth: &WorldTrajectory, half_window: f64) -> Result<f64> {
    let det = &detected.samples;
    if det.is_empty() {
        return Err(EvalError::NoOverlap);
    }
    // Slack absorbs rounding in times computed as frame / rate.
    let limit = half_window + 1e-9 * (1.0 + half_window);
    let mut sum = 0.0;
    let mut n = 0usize;
    for s in &truth.samples {
        let k = det.partition_point(|d| d.time_s < s.time_s);
        let best = [k.checked_sub(1), (k < det.len()).then_some(k)]
            .into_iter()
            .flatten()
            .min_by(|&a, &b| {
                (det[a].time_s - s.time_s)
                    .abs()
                    .total_cmp(&(det[b].time_s - s.time_s).abs())
            })
            .expect("non-empty detected trajectory");
        if (det[best].time_s - s.time_s).abs() <= limit {
            sum += (det[best].position_ft - s.position_ft).abs();
            n += 1;
        }
    }
    if n == 0 {
        return Err(EvalError::NoOverlap);
    }
    Ok(sum / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    pub detected_id: usize,
    pub truth_id: usize,
    pub mae_ft: f64,
    pub true_positive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajMatchReport {
    pub pairs: Vec<MatchPair>,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tpr: f64,
    pub fpr: f64,
    pub mae_threshold_ft: f64,
}

/// Greedy one-to-one matching in ascending MAE order over every
/// (detected, truth) pair with overlapping time support. Matched pairs at
/// or below the threshold are true positives; every other detection is a
/// false positive and every other truth a false negative.
///
/// `tpr = tp / (tp + fn)` and `fpr = fp / (tp + fp)`, each 0 when its
/// denominator is 0.
pub fn match_trajectories(
    detected: &[WorldTrajectory],
    truth: &[WorldTrajectory],
    mae_threshold_ft: f64,
) -> Result<TrajMatchReport> {
    if !(mae_threshold_ft > 0.0) {
        return Err(EvalError::InvalidThreshold(mae_threshold_ft));
    }
    let mut candidates = Vec::new();
    for (i, d) in detected.iter().enumerate() {
        for (j, t) in truth.iter().enumerate() {
            if let Ok(mae) = trajectory_mae(d, t) {
                candidates.push((mae, i, j));
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut det_used = vec![false; detected.len()];
    let mut truth_used = vec![false; truth.len()];
    let mut pairs = Vec::new();
    for (mae, i, j) in candidates {
        if det_used[i] || truth_used[j] {
            continue;
        }
        det_used[i] = true;
        truth_used[j] = true;
        pairs.push(MatchPair {
            detected_id: detected[i].strand_id,
            truth_id: truth[j].strand_id,
            mae_ft: mae,
            true_positive: mae <= mae_threshold_ft,
        });
    }
    let tp = pairs.iter().filter(|p| p.true_positive).count();
    let fp = detected.len() - tp;
    let fn_ = truth.len() - tp;
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Ok(TrajMatchReport {
        pairs,
        tp,
        fp,
        fn_,
        tpr: ratio(tp, tp + fn_),
        fpr: ratio(fp, tp + fp),
        mae_threshold_ft,
    })
}

/// Evaluation report written as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub seg: Option<SegScore>,
    pub traj: Option<TrajMatchReport>,
    pub config: serde_json::Value,
}

const SUMMARY_HEADER: [&str; 12] = [
    "lane",
    "global_accuracy",
    "mean_accuracy",
    "mean_iou",
    "weighted_iou",
    "bf_score",
    "tp",
    "fp",
    "fn",
    "tpr",
    "fpr",
    "mae_threshold_ft",
];

/// One row per lane/scanline: segmentation scores then detection rates.
/// Missing parts leave their cells empty.
pub fn write_summary_csv<W: Write>(rows: &[(String, Report)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let fmt = |e: csv::Error| EvalError::Format(e.to_string());
    w.write_record(SUMMARY_HEADER).map_err(fmt)?;
    for (lane, r) in rows {
        let mut rec = vec![lane.clone()];
        match &r.seg {
            Some(s) => rec.extend(
                [s.global_accuracy, s.mean_accuracy, s.mean_iou, s.weighted_iou, s.bf_score].map(|v| v.to_string()),
            ),
            None => rec.extend(std::iter::repeat_n(String::new(), 5)),
        }
        match &r.traj {
            Some(t) => {
                rec.extend([t.tp, t.fp, t.fn_].map(|v| v.to_string()));
                rec.extend([t.tpr, t.fpr, t.mae_threshold_ft].map(|v| v.to_string()));
            }
            None => rec.extend(std::iter::repeat_n(String::new(), 6)),
        }
        w.write_record(&rec).map_err(fmt)?;
    }
    w.flush()?;
    Ok(())
}
