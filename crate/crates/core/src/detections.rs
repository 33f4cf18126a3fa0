//! Detection and ground-truth data model.
//!
//! Every container here keeps a canonical order so that downstream
//! algorithms, and therefore output files, are deterministic: images sorted
//! by id, detections within an image by score descending, then
//! lexicographic coordinates, then source tag, then label.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;

/// Source tag written on fused detections.
pub const ENSEMBLE_SOURCE: &str = "ensemble";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BBox,
    pub label: String,
    pub score: f64,
    pub source: String,
}

impl Detection {
    pub fn new(bbox: BBox, label: impl Into<String>, score: f64, source: impl Into<String>) -> Result<Self> {
        let label = label.into();
        if label.is_empty() {
            return Err(Error::InvalidDetection("empty label".into()));
        }
        if !score.is_finite() || !(0.0..=1.0).contains(&score) {
            return Err(Error::InvalidDetection(format!("score {score} outside [0, 1]")));
        }
        Ok(Self { bbox, label, score, source: source.into() })
    }

    /// Same detection with a different score. The caller guarantees the new
    /// score is in `[0, 1]`.
    pub(crate) fn with_score(&self, score: f64) -> Self {
        debug_assert!((0.0..=1.0).contains(&score));
        Self { score, ..self.clone() }
    }
}

/// The canonical within-image order.
pub fn canonical_cmp(a: &Detection, b: &Detection) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.bbox.lex_cmp(&b.bbox))
        .then_with(|| a.source.cmp(&b.source))
        .then_with(|| a.label.cmp(&b.label))
}

pub fn sort_canonical(dets: &mut [Detection]) {
    dets.sort_by(canonical_cmp);
}

/// Per-image detections for one source or a pooled ensemble.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DetectionSet {
    images: BTreeMap<String, Vec<Detection>>,
}

impl DetectionSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_detections<I, S>(items: I) -> Self
    where
        I: IntoIterator<Item = (S, Detection)>,
        S: Into<String>,
    {
        let mut images: BTreeMap<String, Vec<Detection>> = BTreeMap::new();
        for (image, det) in items {
            images.entry(image.into()).or_default().push(det);
        }
        for dets in images.values_mut() {
            sort_canonical(dets);
        }
        Self { images }
    }

    /// Appends detections to an image (creating it if absent, possibly
    /// with no detections) and restores canonical order.
    pub fn extend_image(&mut self, image: impl Into<String>, dets: impl IntoIterator<Item = Detection>) {
        let entry = self.images.entry(image.into()).or_default();
        entry.extend(dets);
        sort_canonical(entry);
    }

    pub fn get(&self, image: &str) -> Option<&[Detection]> {
        self.images.get(image).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[Detection])> {
        self.images.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn image_ids(&self) -> impl Iterator<Item = &str> {
        self.images.keys().map(String::as_str)
    }

    pub fn num_images(&self) -> usize {
        self.images.len()
    }

    pub fn num_detections(&self) -> usize {
        self.images.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Every label occurring in the set, sorted.
    pub fn labels(&self) -> Vec<String> {
        let mut labels: Vec<String> = self.images.values().flatten().map(|d| d.label.clone()).collect();
        labels.sort();
        labels.dedup();
        labels
    }

    /// Keeps only detections with `score >= min_score`. Images are retained
    /// even when all their detections are pruned.
    pub fn filter_min_score(&self, min_score: f64) -> Self {
        let images = self
            .images
            .iter()
            .map(|(k, v)| (k.clone(), v.iter().filter(|d| d.score >= min_score).cloned().collect()))
            .collect();
        Self { images }
    }

    /// Rewrites every detection's source tag.
    pub fn with_source(mut self, source: &str) -> Self {
        for dets in self.images.values_mut() {
            for d in dets.iter_mut() {
                d.source = source.to_string();
            }
            sort_canonical(dets);
        }
        self
    }

    /// Applies `f` to each `(image, label)` group independently and
    /// reassembles the result in canonical order.
    ///
    /// Groups are handed to `f` in canonical order. Work is spread over the
    /// current rayon pool; the output does not depend on scheduling.
    pub fn map_label_groups<F>(&self, f: F) -> Self
    where
        F: Fn(&[Detection]) -> Vec<Detection> + Sync,
    {
        let groups: Vec<(&str, Vec<Detection>)> = self
            .images
            .iter()
            .flat_map(|(image, dets)| {
                let mut by_label: BTreeMap<&str, Vec<Detection>> = BTreeMap::new();
                for d in dets {
                    by_label.entry(d.label.as_str()).or_default().push(d.clone());
                }
                by_label.into_values().map(move |g| (image.as_str(), g))
            })
            .collect();
        let outputs: Vec<(&str, Vec<Detection>)> =
            groups.into_par_iter().map(|(image, group)| (image, f(&group))).collect();

        let mut images: BTreeMap<String, Vec<Detection>> =
            self.images.keys().map(|k| (k.clone(), Vec::new())).collect();
        for (image, dets) in outputs {
            images.get_mut(image).expect("image key present").extend(dets);
        }
        for dets in images.values_mut() {
            sort_canonical(dets);
        }
        Self { images }
    }
}

/// Per-image concatenation of several detection sets. Source tags are kept
/// as they are; the result is in canonical order.
pub fn pool(sets: &[DetectionSet]) -> DetectionSet {
    let mut out = DetectionSet::new();
    for set in sets {
        for (image, dets) in set.iter() {
            out.images.entry(image.to_string()).or_default().extend(dets.iter().cloned());
        }
    }
    for dets in out.images.values_mut() {
        sort_canonical(dets);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub bbox: BBox,
    pub label: String,
}

impl GroundTruth {
    pub fn new(bbox: BBox, label: impl Into<String>) -> Result<Self> {
        let label = label.into();
        if label.is_empty() {
            return Err(Error::InvalidDetection("empty ground-truth label".into()));
        }
        Ok(Self { bbox, label })
    }
}

fn gt_cmp(a: &GroundTruth, b: &GroundTruth) -> Ordering {
    a.label.cmp(&b.label).then_with(|| a.bbox.lex_cmp(&b.bbox))
}

/// Annotated boxes per image. Duplicates are legal and kept.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruthSet {
    images: BTreeMap<String, Vec<GroundTruth>>,
}

impl GroundTruthSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_boxes<I, S>(items: I) -> Self
    where
        I: IntoIterator<Item = (S, GroundTruth)>,
        S: Into<String>,
    {
        let mut set = Self::new();
        for (image, gt) in items {
            set.images.entry(image.into()).or_default().push(gt);
        }
        for boxes in set.images.values_mut() {
            boxes.sort_by(gt_cmp);
        }
        set
    }

    pub fn extend_image(&mut self, image: impl Into<String>, boxes: impl IntoIterator<Item = GroundTruth>) {
        let entry = self.images.entry(image.into()).or_default();
        entry.extend(boxes);
        entry.sort_by(gt_cmp);
    }

    pub fn get(&self, image: &str) -> Option<&[GroundTruth]> {
        self.images.get(image).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[GroundTruth])> {
        self.images.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn num_images(&self) -> usize {
        self.images.len()
    }

    pub fn num_boxes(&self) -> usize {
        self.images.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn labels(&self) -> Vec<String> {
        let mut labels: Vec<String> = self.images.values().flatten().map(|g| g.label.clone()).collect();
        labels.sort();
        labels.dedup();
        labels
    }
}
