//! Flat per-class AP at a single IoU threshold and its unweighted mean.
//!
//! No label hierarchy, no group-of boxes: labels match by exact equality and
//! every GT box counts once. Classes without GT boxes are left out of the
//! mean.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::detections::{canonical_cmp, Detection, DetectionSet, GroundTruthSet};
use crate::error::{Error, Result};
use crate::geometry::{iou, BBox};
use crate::io::fmt6;

pub const MAP_ROW_LABEL: &str = "__mAP__";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchParams {
    pub iou_match_threshold: f64,
}

impl Default for MatchParams {
    fn default() -> Self {
        Self { iou_match_threshold: 0.5 }
    }
}

impl MatchParams {
    pub fn validate(&self) -> Result<()> {
        let t = self.iou_match_threshold;
        if !(t.is_finite() && t > 0.0 && t <= 1.0) {
            return Err(Error::Usage(format!("match IoU threshold must be in (0, 1] (got {t})")));
        }
        Ok(())
    }
}

/// A detection together with the image it belongs to.
#[derive(Debug, Clone, Copy)]
pub struct ImageDetection<'a> {
    pub image: &'a str,
    pub det: &'a Detection,
}

/// Evaluation order for one class: score descending, then image id, then
/// the canonical within-image order.
pub fn sort_for_matching(dets: &mut [ImageDetection<'_>]) {
    dets.sort_by(|a, b| {
        b.det.score.total_cmp(&a.det.score).then_with(|| a.image.cmp(b.image)).then_with(|| canonical_cmp(a.det, b.det))
    });
}

/// Greedy single-assignment matching for one class.
///
/// `dets` must already be in [`sort_for_matching`] order; `gt` holds the
/// class's GT boxes per image. Each detection takes the unmatched GT box in
/// its image with the highest IoU (ties go to the earlier box), provided
/// that IoU reaches the threshold. Returns one TP flag per detection.
pub fn match_class(dets: &[ImageDetection<'_>], gt: &BTreeMap<&str, Vec<BBox>>, params: &MatchParams) -> Vec<bool> {
    match_class_assignments(dets, gt, params).iter().map(Option::is_some).collect()
}

/// Like [`match_class`] but returns, for each detection, the index of the
/// GT box it consumed within its image's list.
pub fn match_class_assignments(
    dets: &[ImageDetection<'_>],
    gt: &BTreeMap<&str, Vec<BBox>>,
    params: &MatchParams,
) -> Vec<Option<usize>> {
    let mut used: BTreeMap<&str, Vec<bool>> = gt.iter().map(|(k, v)| (*k, vec![false; v.len()])).collect();
    dets.iter()
        .map(|d| {
            let (Some(boxes), Some(taken)) = (gt.get(d.image), used.get_mut(d.image)) else {
                return None;
            };
            let mut best: Option<(usize, f64)> = None;
            for (j, g) in boxes.iter().enumerate() {
                if taken[j] {
                    continue;
                }
                let o = iou(&d.det.bbox, g);
                if o >= params.iou_match_threshold && best.is_none_or(|(_, b)| o > b) {
                    best = Some((j, o));
                }
            }
            let (j, _) = best?;
            taken[j] = true;
            Some(j)
        })
        .collect()
}

/// Groups GT boxes by label, then by image.
pub fn ground_truth_by_class(gt: &GroundTruthSet) -> BTreeMap<&str, BTreeMap<&str, Vec<BBox>>> {
    let mut by_class: BTreeMap<&str, BTreeMap<&str, Vec<BBox>>> = BTreeMap::new();
    for (image, boxes) in gt.iter() {
        for g in boxes {
            by_class.entry(g.label.as_str()).or_default().entry(image).or_default().push(g.bbox);
        }
    }
    by_class
}

/// Groups detections by label, each group in [`sort_for_matching`] order.
pub fn detections_by_class(ds: &DetectionSet) -> BTreeMap<&str, Vec<ImageDetection<'_>>> {
    let mut by_class: BTreeMap<&str, Vec<ImageDetection<'_>>> = BTreeMap::new();
    for (image, dets) in ds.iter() {
        for det in dets {
            by_class.entry(det.label.as_str()).or_default().push(ImageDetection { image, det });
        }
    }
    for dets in by_class.values_mut() {
        sort_for_matching(dets);
    }
    by_class
}

/// All-point interpolated AP from TP flags in score-descending order.
///
/// Returns `None` when `gt_count` is zero (the class is not scored).
pub fn average_precision(flags: &[bool], gt_count: usize) -> Option<f64> {
    if gt_count == 0 {
        return None;
    }
    let n = flags.len();
    let mut precision = Vec::with_capacity(n);
    let mut recall = Vec::with_capacity(n);
    let (mut tp, mut fp) = (0usize, 0usize);
    for &f in flags {
        if f {
            tp += 1;
        } else {
            fp += 1;
        }
        precision.push(tp as f64 / (tp + fp) as f64);
        recall.push(tp as f64 / gt_count as f64);
    }
    // precision envelope: max precision at any recall >= this point
    for i in (0..n.saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for i in 0..n {
        if recall[i] > prev_recall {
            ap += (recall[i] - prev_recall) * precision[i];
            prev_recall = recall[i];
        }
    }
    Some(ap.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassReport {
    pub ap: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub gt_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Scored classes (those with at least one GT box), by label.
    pub classes: BTreeMap<String, ClassReport>,
    pub map: f64,
    /// Detection labels that never occur in the ground truth.
    pub unscored_labels: Vec<String>,
}

impl EvalReport {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        let io_err = |e: csv::Error| Error::io("<report>", e.into());
        wtr.write_record(["label", "ap", "tp", "fp", "fn", "gt_count"]).map_err(io_err)?;
        for (label, c) in &self.classes {
            wtr.write_record([
                label.clone(),
                fmt6(c.ap),
                c.tp.to_string(),
                c.fp.to_string(),
                c.fn_.to_string(),
                c.gt_count.to_string(),
            ])
            .map_err(io_err)?;
        }
        wtr.write_record([MAP_ROW_LABEL, &fmt6(self.map), "", "", "", ""]).map_err(io_err)?;
        wtr.flush().map_err(|e| Error::io("<report>", e))
    }

    pub fn write_csv_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f)).map_err(|e| match e {
            Error::Io { source, .. } => Error::io(path, source),
            other => other,
        })
    }

    /// Human-readable table, one line per class, then the mean.
    pub fn summary(&self) -> String {
        let width = self.classes.keys().map(String::len).max().unwrap_or(5).max(5);
        let mut s = String::new();
        let _ = writeln!(s, "{:<width$}  {:>8}  {:>6}  {:>6}  {:>6}  {:>6}", "label", "AP", "TP", "FP", "FN", "GT");
        for (label, c) in &self.classes {
            let _ = writeln!(
                s,
                "{:<width$}  {:>8.4}  {:>6}  {:>6}  {:>6}  {:>6}",
                label, c.ap, c.tp, c.fp, c.fn_, c.gt_count
            );
        }
        let _ = writeln!(s, "{} classes scored, mAP {:.4}", self.classes.len(), self.map);
        s
    }
}

/// Matches and scores every class that has GT boxes.
pub fn evaluate(ds: &DetectionSet, gt: &GroundTruthSet, params: &MatchParams) -> EvalReport {
    let gt_by_class = ground_truth_by_class(gt);
    let dets_by_class = detections_by_class(ds);
    let unscored_labels =
        dets_by_class.keys().filter(|l| !gt_by_class.contains_key(*l)).map(|l| l.to_string()).collect();

    let classes: BTreeMap<String, ClassReport> = gt_by_class
        .par_iter()
        .map(|(label, class_gt)| {
            let dets = dets_by_class.get(label).map_or(&[][..], Vec::as_slice);
            let flags = match_class(dets, class_gt, params);
            let gt_count = class_gt.values().map(Vec::len).sum();
            let tp = flags.iter().filter(|f| **f).count();
            let ap = average_precision(&flags, gt_count).expect("class has GT");
            (label.to_string(), ClassReport { ap, tp, fp: flags.len() - tp, fn_: gt_count - tp, gt_count })
        })
        .collect();

    let map = if classes.is_empty() { 0.0 } else { classes.values().map(|c| c.ap).sum::<f64>() / classes.len() as f64 };
    EvalReport { classes, map, unscored_labels }
}
