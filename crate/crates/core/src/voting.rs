//! Top-k voting-NMS for fusing pooled detections from several models or
//! test scales.
//!
//! Same-label detections are clustered greedily around the current
//! highest-score box (membership: `iou >= iou_threshold` against that seed,
//! not transitively). Each cluster is replaced by a single detection whose
//! score is the mean of its top-k members' scores and whose box is either
//! the seed's box or the mean of the top-k boxes.

use std::fmt;
use std::str::FromStr;

use crate::detections::{canonical_cmp, pool, Detection, DetectionSet, ENSEMBLE_SOURCE};
use crate::error::{Error, Result};
use crate::geometry::{iou, mean_box, weighted_mean_box};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VotingMode {
    /// Average the scores, keep the seed's box.
    ScoreOnly,
    /// Average both scores and boxes.
    ScoreAndLocation,
}

impl fmt::Display for VotingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VotingMode::ScoreOnly => "score",
            VotingMode::ScoreAndLocation => "score-location",
        })
    }
}

impl FromStr for VotingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "score" => Ok(VotingMode::ScoreOnly),
            "score-location" | "score-and-location" => Ok(VotingMode::ScoreAndLocation),
            _ => Err(Error::Usage(format!("unknown voting mode {s:?} (expected score|score-location)"))),
        }
    }
}

/// How voter boxes are combined in [`VotingMode::ScoreAndLocation`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LocationAveraging {
    #[default]
    Uniform,
    ScoreWeighted,
}

/// Denominator of the fused score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScoreAveraging {
    /// Mean over the actual voters; a box found by a single model keeps its
    /// own score.
    #[default]
    Voters,
    /// Sum of the voter scores divided by `max(n, voters)`: clusters backed
    /// by fewer than `n` sources are penalized.
    SourceCount(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VotingParams {
    /// Cluster membership threshold, inclusive, in `(0, 1]`.
    pub iou_threshold: f64,
    /// Number of top-scoring cluster members that vote, `>= 1`.
    pub k: usize,
    pub mode: VotingMode,
    /// Every cluster member votes, regardless of `k`.
    pub all_member_voting: bool,
    pub location: LocationAveraging,
    pub score: ScoreAveraging,
}

impl Default for VotingParams {
    fn default() -> Self {
        Self {
            iou_threshold: 0.5,
            k: 3,
            mode: VotingMode::ScoreAndLocation,
            all_member_voting: false,
            location: LocationAveraging::Uniform,
            score: ScoreAveraging::Voters,
        }
    }
}

impl VotingParams {
    /// Parameters for the all-member "voting soft-nms" variant.
    pub fn all_members() -> Self {
        Self { all_member_voting: true, mode: VotingMode::ScoreAndLocation, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.iou_threshold;
        if !(t.is_finite() && t > 0.0 && t <= 1.0) {
            return Err(Error::Usage(format!("voting IoU threshold must be in (0, 1] (got {t})")));
        }
        if self.k == 0 {
            return Err(Error::Usage("k must be >= 1".into()));
        }
        if self.score == ScoreAveraging::SourceCount(0) {
            return Err(Error::Usage("source count for score averaging must be >= 1".into()));
        }
        Ok(())
    }

    fn voters(&self, members: usize) -> usize {
        if self.all_member_voting {
            members
        } else {
            self.k.min(members)
        }
    }
}

/// A seed detection and everything absorbed around it.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    members: Vec<Detection>,
}

impl Cluster {
    /// The highest-ranked member.
    pub fn seed(&self) -> &Detection {
        &self.members[0]
    }

    /// Members in canonical order, seed first.
    pub fn members(&self) -> &[Detection] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn label(&self) -> &str {
        &self.seed().label
    }
}

/// Pulls one cluster off the front of `dets`.
///
/// `dets` must be in canonical order and share one image and label. The
/// first element is the seed; every other detection with
/// `iou(seed, d) >= iou_threshold` joins it. Returns the cluster and the
/// remaining detections, still in canonical order.
pub fn cluster_once(dets: &[Detection], iou_threshold: f64) -> Result<(Cluster, Vec<Detection>)> {
    let (seed, rest) =
        dets.split_first().ok_or_else(|| Error::Usage("cluster_once on an empty detection list".into()))?;
    if let Some(bad) = rest.iter().find(|d| d.label != seed.label) {
        return Err(Error::Usage(format!("cluster_once: mixed labels {:?} and {:?}", seed.label, bad.label)));
    }
    let (mut members, remaining): (Vec<Detection>, Vec<Detection>) =
        rest.iter().cloned().partition(|d| iou(&seed.bbox, &d.bbox) >= iou_threshold);
    members.insert(0, seed.clone());
    Ok((Cluster { members }, remaining))
}

/// Fuses one cluster into a single detection tagged with the ensemble source.
pub fn vote(cluster: &Cluster, params: &VotingParams) -> Detection {
    let m = params.voters(cluster.len());
    let voters = &cluster.members[..m];
    let total: f64 = voters.iter().map(|d| d.score).sum();
    let divisor = match params.score {
        ScoreAveraging::Voters => m,
        ScoreAveraging::SourceCount(n) => n.max(m),
    } as f64;
    // a mean of values in [lo, hi] can drift past the ends by an ulp
    let (lo, hi) =
        voters.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d.score), hi.max(d.score)));
    let score = match params.score {
        ScoreAveraging::Voters => (total / divisor).clamp(lo, hi),
        ScoreAveraging::SourceCount(_) => (total / divisor).clamp(0.0, hi),
    };

    let bbox = match params.mode {
        VotingMode::ScoreOnly => cluster.seed().bbox,
        VotingMode::ScoreAndLocation => {
            let boxes: Vec<_> = voters.iter().map(|d| d.bbox).collect();
            match params.location {
                LocationAveraging::Uniform => mean_box(&boxes),
                LocationAveraging::ScoreWeighted => {
                    let w: Vec<f64> = voters.iter().map(|d| d.score).collect();
                    weighted_mean_box(&boxes, &w)
                }
            }
            .expect("cluster has at least one voter")
        }
    };
    Detection { bbox, label: cluster.label().to_string(), score, source: ENSEMBLE_SOURCE.to_string() }
}

/// Partitions one `(image, label)` group into seed-relative clusters, in
/// the order they are formed.
pub fn clusters(dets: &[Detection], iou_threshold: f64) -> Vec<Cluster> {
    let mut remaining = dets.to_vec();
    remaining.sort_by(canonical_cmp);
    let mut out = Vec::new();
    while !remaining.is_empty() {
        let (c, rest) = cluster_once(&remaining, iou_threshold).expect("non-empty, single label");
        out.push(c);
        remaining = rest;
    }
    out
}

/// Voting-NMS over a single `(image, label)` group.
pub fn topk_voting_group(dets: &[Detection], params: &VotingParams) -> Vec<Detection> {
    let mut fused: Vec<Detection> = clusters(dets, params.iou_threshold).iter().map(|c| vote(c, params)).collect();
    fused.sort_by(canonical_cmp);
    fused
}

/// Voting-NMS over every `(image, label)` group of a pooled set.
///
/// Intended input is the pool of per-source SoftNMS outputs.
pub fn topk_voting_nms(ds: &DetectionSet, params: &VotingParams) -> DetectionSet {
    ds.map_label_groups(|group| topk_voting_group(group, params))
}

/// Pools the per-source sets and fuses them with [`topk_voting_nms`].
/// Multi-scale test merging uses the same path with one set per scale.
pub fn ensemble(sets: &[DetectionSet], params: &VotingParams) -> Result<DetectionSet> {
    if sets.is_empty() {
        return Err(Error::Usage("ensemble needs at least one detection set".into()));
    }
    Ok(topk_voting_nms(&pool(sets), params))
}
