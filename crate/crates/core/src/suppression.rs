//! Single-source post-processing: greedy hard NMS and SoftNMS.
//!
//! Both operate on one `(image, label)` group at a time. [`suppress_set`]
//! fans a chosen suppressor out over every group of a [`DetectionSet`].

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use crate::detections::{canonical_cmp, sort_canonical, Detection, DetectionSet};
use crate::error::{Error, Result};
use crate::geometry::iou;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SoftNmsMethod {
    /// Overlapping scores are zeroed when `iou > Nt`.
    Hard,
    /// Overlapping scores are multiplied by `1 - iou` when `iou > Nt`.
    Linear,
    /// Every score is multiplied by `exp(-iou^2 / sigma)`.
    Gaussian,
}

impl fmt::Display for SoftNmsMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SoftNmsMethod::Hard => "hard",
            SoftNmsMethod::Linear => "linear",
            SoftNmsMethod::Gaussian => "gaussian",
        })
    }
}

impl FromStr for SoftNmsMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hard" => Ok(SoftNmsMethod::Hard),
            "linear" => Ok(SoftNmsMethod::Linear),
            "gaussian" => Ok(SoftNmsMethod::Gaussian),
            _ => Err(Error::Usage(format!("unknown SoftNMS method {s:?} (expected hard|linear|gaussian)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftNmsParams {
    pub method: SoftNmsMethod,
    /// Overlap threshold `Nt` for the Hard and Linear rules, in `(0, 1]`.
    pub iou_threshold: f64,
    /// Gaussian width, `> 0`.
    pub sigma: f64,
    /// Detections whose decayed score falls below this are dropped, `[0, 1)`.
    pub score_floor: f64,
}

impl Default for SoftNmsParams {
    fn default() -> Self {
        Self { method: SoftNmsMethod::Gaussian, iou_threshold: 0.5, sigma: 0.5, score_floor: 0.001 }
    }
}

impl SoftNmsParams {
    pub fn validate(&self) -> Result<()> {
        validate_nms_threshold(self.iou_threshold)?;
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::Usage(format!("sigma must be > 0 (got {})", self.sigma)));
        }
        if !(self.score_floor.is_finite() && (0.0..1.0).contains(&self.score_floor)) {
            return Err(Error::Usage(format!("score floor must be in [0, 1) (got {})", self.score_floor)));
        }
        Ok(())
    }

    /// Multiplicative decay applied to a detection overlapping the selected
    /// one by `overlap`.
    pub fn decay(&self, overlap: f64) -> f64 {
        match self.method {
            SoftNmsMethod::Hard => {
                if overlap > self.iou_threshold {
                    0.0
                } else {
                    1.0
                }
            }
            SoftNmsMethod::Linear => {
                if overlap > self.iou_threshold {
                    1.0 - overlap
                } else {
                    1.0
                }
            }
            SoftNmsMethod::Gaussian => (-(overlap * overlap) / self.sigma).exp(),
        }
    }
}

pub(crate) fn validate_nms_threshold(nt: f64) -> Result<()> {
    if !(nt.is_finite() && nt > 0.0 && nt <= 1.0) {
        return Err(Error::Usage(format!("IoU threshold must be in (0, 1] (got {nt})")));
    }
    Ok(())
}

/// Which per-group suppressor [`suppress_set`] applies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Suppressor {
    Hard { iou_threshold: f64 },
    Soft(SoftNmsParams),
}

impl Suppressor {
    pub fn validate(&self) -> Result<()> {
        match self {
            Suppressor::Hard { iou_threshold } => validate_nms_threshold(*iou_threshold),
            Suppressor::Soft(p) => p.validate(),
        }
    }

    pub fn apply(&self, dets: &[Detection]) -> Vec<Detection> {
        match self {
            Suppressor::Hard { iou_threshold } => hard_nms(dets, *iou_threshold),
            Suppressor::Soft(p) => soft_nms(dets, p),
        }
    }
}

/// Greedy NMS over one `(image, label)` group: take the best remaining
/// detection, drop everything with `iou > iou_threshold` against it, repeat.
/// Scores and boxes are never modified. Output is in canonical order.
pub fn hard_nms(dets: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    let mut order: Vec<&Detection> = dets.iter().collect();
    order.sort_by(|a, b| canonical_cmp(a, b));
    let mut suppressed = vec![false; order.len()];
    let mut keep = Vec::new();
    for i in 0..order.len() {
        if suppressed[i] {
            continue;
        }
        let seed = order[i];
        keep.push(seed.clone());
        for j in (i + 1)..order.len() {
            if !suppressed[j] && iou(&seed.bbox, &order[j].bbox) > iou_threshold {
                suppressed[j] = true;
            }
        }
    }
    keep
}

/// SoftNMS over one `(image, label)` group.
///
/// Repeatedly selects the remaining detection with the highest current
/// score (ties resolved by the canonical order) and decays every other
/// remaining score by [`SoftNmsParams::decay`] of its overlap with the
/// selection. Detections whose score drops below `score_floor` are dropped.
/// Output is sorted by final score in canonical order.
pub fn soft_nms(dets: &[Detection], params: &SoftNmsParams) -> Vec<Detection> {
    let mut pool: Vec<(Detection, f64)> =
        dets.iter().filter(|d| d.score >= params.score_floor).map(|d| (d.clone(), d.score)).collect();
    let mut out = Vec::with_capacity(pool.len());
    while !pool.is_empty() {
        let best =
            pool.iter().enumerate().min_by(|(_, a), (_, b)| rank_cmp(a, b)).map(|(i, _)| i).expect("pool non-empty");
        let (sel, sel_score) = pool.swap_remove(best);
        for (d, s) in pool.iter_mut() {
            *s *= params.decay(iou(&sel.bbox, &d.bbox));
        }
        pool.retain(|(_, s)| *s >= params.score_floor);
        out.push(sel.with_score(sel_score.clamp(0.0, 1.0)));
    }
    sort_canonical(&mut out);
    out
}

// Order on (detection, current score): higher current score first, then the
// canonical tie-break on the detection itself.
fn rank_cmp(a: &(Detection, f64), b: &(Detection, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then_with(|| canonical_cmp(&a.0, &b.0))
}

/// Applies `suppressor` to each `(image, label)` group independently.
pub fn suppress_set(ds: &DetectionSet, suppressor: &Suppressor) -> DetectionSet {
    ds.map_label_groups(|group| suppressor.apply(group))
}
