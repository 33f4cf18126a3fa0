//! Seeded synthetic ground truth and noisy detectors, plus the ablation
//! runner that compares fusion methods on them.
//!
//! # Reproducibility
//!
//! Every random draw comes from ChaCha8 (`rand_chacha`). The key is derived
//! from `rng_seed` with `SeedableRng::seed_from_u64`, and each
//! `(role, image)` pair reads its own ChaCha stream:
//!
//! ```text
//! stream = (role << 40) | image_index
//! role   = 0 for ground truth, 1 + d for detector d,
//!          2^23 - 1 for per-object appearance,
//!          2^23 - 2 for distractors
//! ```
//!
//! Appearances are drawn in the canonical order of each image's GT list.
//!
//! Streams are derived up front, so per-image work can run in any order or
//! in parallel and still produce the same bytes.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Poisson, StandardNormal, StudentT};
use rayon::prelude::*;

use crate::detections::{pool, Detection, DetectionSet, GroundTruth, GroundTruthSet};
use crate::error::{Error, Result};
use crate::evaluation::{detections_by_class, evaluate, ground_truth_by_class, match_class_assignments, MatchParams};
use crate::geometry::{iou, BBox};
use crate::io::fmt6;
use crate::suppression::{suppress_set, SoftNmsParams, Suppressor};
use crate::voting::{topk_voting_nms, VotingMode, VotingParams};

const ROLE_SHIFT: u32 = 40;
const GT_PLACEMENT_ATTEMPTS: usize = 20;
const APPEARANCE_ROLE: u64 = (1 << 23) - 1;
/// Lowest score a simulated detector reports for a box it emits.
pub const MIN_EMITTED_SCORE: f64 = 0.01;

const DISTRACTOR_ROLE: u64 = (1 << 23) - 2;

/// Log-normal box-area sampler: small boxes dominate, a few are large.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxScaleDistribution {
    /// Median box area as a fraction of the image.
    pub median_area: f64,
    /// Standard deviation of `ln(area)`.
    pub area_log_sigma: f64,
    /// Standard deviation of `ln(width / height)`.
    pub aspect_log_sigma: f64,
    pub min_area: f64,
    pub max_area: f64,
}

impl Default for BoxScaleDistribution {
    fn default() -> Self {
        Self { median_area: 0.03, area_log_sigma: 1.0, aspect_log_sigma: 0.4, min_area: 4e-4, max_area: 0.6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub num_images: usize,
    pub classes: usize,
    /// Inclusive range of GT boxes per image.
    pub boxes_per_image: (usize, usize),
    pub box_scale: BoxScaleDistribution,
    pub num_detectors: usize,
    /// Per-coordinate Gaussian noise of each detector, as a fraction of the
    /// box's width or height.
    pub jitter_sigma: f64,
    /// Per-coordinate offset between an object's annotation and the extent
    /// every detector perceives, as a multiple of `jitter_sigma`.
    pub shared_jitter_ratio: f64,
    /// Scale of the additive score noise.
    pub score_noise_sigma: f64,
    /// Degrees of freedom of Student-t score noise; `None` for Gaussian.
    /// Small values model detectors that are occasionally confidently wrong.
    pub score_noise_dof: Option<f64>,
    pub miss_rate: f64,
    /// Mean number of false-positive boxes per image and detector.
    pub false_positive_rate: f64,
    /// Beta distribution shape of false-positive scores.
    pub fp_score_shape: (f64, f64),
    /// Beta shape of each GT object's visibility, a factor shared by every
    /// detector and multiplied into its score. `None` means every object is
    /// fully visible.
    pub visibility_shape: Option<(f64, f64)>,
    /// Visibility is rescaled from `[0, 1]` into `[visibility_floor, 1]`.
    pub visibility_floor: f64,
    /// Mean number of extra proposals a detector emits around each object it
    /// finds, on top of the first (Poisson). Zero gives one box per object.
    /// Without jitter the proposals would coincide, so none are emitted.
    pub extra_proposals: f64,
    /// Mean number of distractors per image, as a multiple of
    /// `false_positive_rate`: unannotated regions that every detector may
    /// fire on like a real object, giving false positives that are
    /// correlated across detectors.
    pub distractor_ratio: f64,
    /// Beta shape of a distractor's confusion, its analog of visibility.
    pub distractor_shape: (f64, f64),
    /// GT boxes of the same label in one image never overlap more than this;
    /// colliding samples are redrawn a bounded number of times, then dropped.
    pub max_same_label_iou: f64,
    pub rng_seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            num_images: 500,
            classes: 5,
            boxes_per_image: (1, 8),
            box_scale: BoxScaleDistribution::default(),
            num_detectors: 5,
            jitter_sigma: 0.08,
            shared_jitter_ratio: 1.25,
            score_noise_sigma: 0.1,
            score_noise_dof: Some(3.0),
            miss_rate: 0.15,
            false_positive_rate: 0.2,
            fp_score_shape: (1.5, 6.0),
            visibility_shape: Some((2.0, 1.0)),
            visibility_floor: 0.25,
            extra_proposals: 2.0,
            distractor_ratio: 5.0,
            distractor_shape: (2.0, 3.0),
            max_same_label_iou: 0.3,
            rng_seed: 0,
        }
    }
}

impl SimulationConfig {
    /// Every noise source switched off.
    pub fn noiseless(self) -> Self {
        Self {
            jitter_sigma: 0.0,
            score_noise_sigma: 0.0,
            miss_rate: 0.0,
            false_positive_rate: 0.0,
            visibility_shape: None,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        let usage = |m: String| Err(Error::Usage(m));
        if self.classes == 0 {
            return usage("classes must be >= 1".into());
        }
        if self.num_detectors == 0 {
            return usage("num_detectors must be >= 1".into());
        }
        let (lo, hi) = self.boxes_per_image;
        if lo > hi {
            return usage(format!("boxes per image: min {lo} > max {hi}"));
        }
        let nonneg = |name: &str, v: f64| -> Result<()> {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::Usage(format!("{name} must be finite and >= 0 (got {v})")))
            }
        };
        nonneg("jitter sigma", self.jitter_sigma)?;
        if let Some(dof) = self.score_noise_dof {
            if !(dof.is_finite() && dof > 0.0) {
                return usage(format!("score noise degrees of freedom must be > 0 (got {dof})"));
            }
        }
        nonneg("shared jitter ratio", self.shared_jitter_ratio)?;
        nonneg("score noise sigma", self.score_noise_sigma)?;
        nonneg("false positive rate", self.false_positive_rate)?;
        nonneg("distractor ratio", self.distractor_ratio)?;
        if !(self.visibility_floor.is_finite() && (0.0..=1.0).contains(&self.visibility_floor)) {
            return usage(format!("visibility floor must be in [0, 1] (got {})", self.visibility_floor));
        }
        nonneg("extra proposals", self.extra_proposals)?;
        let (a, b) = self.distractor_shape;
        if !(a.is_finite() && b.is_finite() && a > 0.0 && b > 0.0) {
            return usage(format!("distractor shape must be positive (got {a}, {b})"));
        }
        if !(self.miss_rate.is_finite() && (0.0..=1.0).contains(&self.miss_rate)) {
            return usage(format!("miss rate must be in [0, 1] (got {})", self.miss_rate));
        }
        let (a, b) = self.fp_score_shape;
        if !(a.is_finite() && b.is_finite() && a > 0.0 && b > 0.0) {
            return usage(format!("false-positive score shape must be positive (got {a}, {b})"));
        }
        if let Some((a, b)) = self.visibility_shape {
            if !(a.is_finite() && b.is_finite() && a > 0.0 && b > 0.0) {
                return usage(format!("visibility shape must be positive (got {a}, {b})"));
            }
        }
        if !(self.max_same_label_iou.is_finite() && (0.0..=1.0).contains(&self.max_same_label_iou)) {
            return usage(format!("max same-label IoU must be in [0, 1] (got {})", self.max_same_label_iou));
        }
        let s = &self.box_scale;
        if !(s.min_area > 0.0 && s.min_area <= s.median_area && s.median_area <= s.max_area && s.max_area <= 1.0) {
            return usage(format!(
                "box areas must satisfy 0 < min {} <= median {} <= max {} <= 1",
                s.min_area, s.median_area, s.max_area
            ));
        }
        nonneg("area log sigma", s.area_log_sigma)?;
        nonneg("aspect log sigma", s.aspect_log_sigma)?;
        Ok(())
    }

    fn stream(&self, role: u64, image_index: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
        rng.set_stream((role << ROLE_SHIFT) | image_index as u64);
        rng
    }
}

pub fn image_id(index: usize) -> String {
    format!("img{index:06}")
}

pub fn class_label(index: usize) -> String {
    format!("class{index:02}")
}

pub fn detector_source(index: usize) -> String {
    format!("det{index}")
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

enum ScoreNoise {
    Gaussian,
    StudentT(StudentT<f64>),
}

impl ScoreNoise {
    fn new(dof: Option<f64>) -> Self {
        match dof {
            None => ScoreNoise::Gaussian,
            Some(v) => ScoreNoise::StudentT(StudentT::new(v).expect("dof validated")),
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            ScoreNoise::Gaussian => normal(rng),
            ScoreNoise::StudentT(t) => t.sample(rng),
        }
    }
}

fn sample_box(rng: &mut ChaCha8Rng, scale: &BoxScaleDistribution) -> BBox {
    let area =
        (scale.median_area.ln() + scale.area_log_sigma * normal(rng)).exp().clamp(scale.min_area, scale.max_area);
    let aspect = (scale.aspect_log_sigma * normal(rng)).exp();
    let w = (area * aspect).sqrt().min(1.0);
    let h = (area / aspect).sqrt().min(1.0);
    let x0 = rng.random::<f64>() * (1.0 - w);
    let y0 = rng.random::<f64>() * (1.0 - h);
    BBox::new(x0, y0, x0 + w, y0 + h).expect("sampled box is ordered and finite")
}

/// Deterministic GT: every image gets an entry, even when its box count is zero.
pub fn generate_ground_truth(cfg: &SimulationConfig) -> GroundTruthSet {
    let (lo, hi) = cfg.boxes_per_image;
    let per_image: Vec<(String, Vec<GroundTruth>)> = (0..cfg.num_images)
        .into_par_iter()
        .map(|i| {
            let mut rng = cfg.stream(0, i);
            let n = rng.random_range(lo..=hi);
            let mut boxes: Vec<GroundTruth> = Vec::with_capacity(n);
            for _ in 0..n {
                let label = class_label(rng.random_range(0..cfg.classes));
                for _ in 0..GT_PLACEMENT_ATTEMPTS {
                    let bbox = sample_box(&mut rng, &cfg.box_scale);
                    let crowded =
                        boxes.iter().any(|g| g.label == label && iou(&g.bbox, &bbox) > cfg.max_same_label_iou);
                    if !crowded {
                        boxes.push(GroundTruth { bbox, label });
                        break;
                    }
                }
            }
            (image_id(i), boxes)
        })
        .collect();
    let mut gt = GroundTruthSet::new();
    for (image, boxes) in per_image {
        gt.extend_image(image, boxes);
    }
    gt
}

/// One emitted box and, for true detections, the GT box it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Emission {
    pub image: String,
    /// Index into the image's GT list; `None` for false positives.
    pub gt_index: Option<usize>,
    pub det: Detection,
}

fn jitter(rng: &mut ChaCha8Rng, b: &BBox, sigma: f64) -> BBox {
    let (w, h) = (b.width(), b.height());
    let x0 = b.xmin() + sigma * w * normal(rng);
    let y0 = b.ymin() + sigma * h * normal(rng);
    let x1 = b.xmax() + sigma * w * normal(rng);
    let y1 = b.ymax() + sigma * h * normal(rng);
    BBox::from_corners(x0, y0, x1, y1).expect("finite jittered corners")
}

/// How every detector perceives one GT object: an extent shifted from the
/// annotation by a shared offset, and a visibility factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Appearance {
    pub perceived: BBox,
    pub visibility: f64,
}

/// Appearance of each GT box of an image, identical for every detector.
pub fn appearances(cfg: &SimulationConfig, image_index: usize, boxes: &[GroundTruth]) -> Vec<Appearance> {
    let beta = cfg.visibility_shape.map(|(a, b)| Beta::new(a, b).expect("shape validated"));
    let mut rng = cfg.stream(APPEARANCE_ROLE, image_index);
    boxes
        .iter()
        .map(|g| {
            let visibility =
                beta.as_ref().map_or(1.0, |d| cfg.visibility_floor + (1.0 - cfg.visibility_floor) * d.sample(&mut rng));
            let perceived = jitter(&mut rng, &g.bbox, cfg.shared_jitter_ratio * cfg.jitter_sigma);
            Appearance { perceived, visibility }
        })
        .collect()
}

/// An unannotated region that detectors mistake for an object of `label`.
#[derive(Debug, Clone, PartialEq)]
pub struct Distractor {
    pub bbox: BBox,
    pub label: String,
    /// Plays the role of visibility in the detector score.
    pub confusion: f64,
}

/// The distractors of one image, identical for every detector.
pub fn distractors(cfg: &SimulationConfig, image_index: usize) -> Vec<Distractor> {
    let rate = cfg.distractor_ratio * cfg.false_positive_rate;
    if rate <= 0.0 {
        return Vec::new();
    }
    let mut rng = cfg.stream(DISTRACTOR_ROLE, image_index);
    let count = Poisson::new(rate).expect("rate validated").sample(&mut rng) as usize;
    let confusion = Beta::new(cfg.distractor_shape.0, cfg.distractor_shape.1).expect("shape validated");
    (0..count)
        .map(|_| {
            let label = class_label(rng.random_range(0..cfg.classes));
            let bbox = sample_box(&mut rng, &cfg.box_scale);
            Distractor { bbox, label, confusion: confusion.sample(&mut rng) }
        })
        .collect()
}

/// Raw output of one simulated detector, with provenance.
///
/// Each GT box is missed with probability `miss_rate`; otherwise the
/// detector emits `1 + Poisson(extra_proposals)` boxes jittered around the
/// object's perceived extent, each scored as the object's visibility times
/// the box's IoU with that extent, plus score noise, clamped to `[MIN_EMITTED_SCORE, 1]`.
/// Distractors are detected the same way, with their confusion in place of
/// visibility. Each image also receives `Poisson(false_positive_rate)` boxes at uniform positions with
/// GT-like sizes, random labels and Beta-distributed scores.
pub fn simulate_emissions(gt: &GroundTruthSet, cfg: &SimulationConfig, detector_index: usize) -> Result<Vec<Emission>> {
    if detector_index >= cfg.num_detectors {
        return Err(Error::Usage(format!(
            "detector index {detector_index} out of range for {} detectors",
            cfg.num_detectors
        )));
    }
    let source = detector_source(detector_index);
    let role = detector_index as u64 + 1;
    let fp_count =
        (cfg.false_positive_rate > 0.0).then(|| Poisson::new(cfg.false_positive_rate).expect("rate validated"));
    let extra = (cfg.extra_proposals > 0.0 && cfg.jitter_sigma > 0.0)
        .then(|| Poisson::new(cfg.extra_proposals).expect("rate validated"));
    let score_noise = ScoreNoise::new(cfg.score_noise_dof);
    let fp_score = Beta::new(cfg.fp_score_shape.0, cfg.fp_score_shape.1)
        .map_err(|e| Error::Usage(format!("false-positive score shape: {e}")))?;
    let images: Vec<(usize, (&str, &[GroundTruth]))> = gt.iter().enumerate().collect();
    let per_image: Vec<Vec<Emission>> = images
        .into_par_iter()
        .map(|(i, (image, boxes))| {
            let looks = appearances(cfg, i, boxes);
            let objects = boxes
                .iter()
                .zip(&looks)
                .enumerate()
                .map(|(j, (g, a))| (Some(j), &g.bbox, &a.perceived, g.label.as_str(), a.visibility));
            let decoy_list = distractors(cfg, i);
            let decoys = decoy_list.iter().map(|d| (None, &d.bbox, &d.bbox, d.label.as_str(), d.confusion));
            let mut rng = cfg.stream(role, i);
            let mut out = Vec::new();
            for (gt_index, _target, perceived, label, strength) in objects.chain(decoys) {
                let missed = rng.random::<f64>() < cfg.miss_rate;
                let proposals = 1 + extra.as_ref().map_or(0, |p| p.sample(&mut rng) as usize);
                for _ in 0..proposals {
                    let bbox = jitter(&mut rng, perceived, cfg.jitter_sigma);
                    let noise = cfg.score_noise_sigma * score_noise.sample(&mut rng);
                    if missed {
                        continue;
                    }
                    let score = (strength * iou(&bbox, perceived) + noise).clamp(MIN_EMITTED_SCORE, 1.0);
                    out.push(Emission {
                        image: image.to_string(),
                        gt_index,
                        det: Detection { bbox, label: label.to_string(), score, source: source.clone() },
                    });
                }
            }
            let n_fp = fp_count.as_ref().map_or(0, |p| p.sample(&mut rng) as usize);
            for _ in 0..n_fp {
                let label = class_label(rng.random_range(0..cfg.classes));
                let bbox = sample_box(&mut rng, &cfg.box_scale);
                let score = fp_score.sample(&mut rng).clamp(MIN_EMITTED_SCORE, 1.0);
                out.push(Emission {
                    image: image.to_string(),
                    gt_index: None,
                    det: Detection { bbox, label, score, source: source.clone() },
                });
            }
            out
        })
        .collect();
    Ok(per_image.into_iter().flatten().collect())
}

/// Raw detections of one simulated detector; see [`simulate_emissions`].
/// Every GT image appears in the output, possibly with no detections.
pub fn simulate_detector(gt: &GroundTruthSet, cfg: &SimulationConfig, detector_index: usize) -> Result<DetectionSet> {
    let emissions = simulate_emissions(gt, cfg, detector_index)?;
    let mut ds = DetectionSet::from_detections(emissions.into_iter().map(|e| (e.image, e.det)));
    for (image, _) in gt.iter() {
        ds.extend_image(image, []);
    }
    Ok(ds)
}

/// Rows of the ablation table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AblationMethod {
    /// Hard NMS over the pooled per-detector outputs.
    Nms,
    /// SoftNMS over the pooled per-detector outputs.
    SoftNms,
    /// Every cluster member votes on score and location.
    VotingSoftNms,
    TopKScore,
    TopKScoreLocation,
    /// Best mAP of any single detector after its own SoftNMS.
    BestSingle,
}

impl AblationMethod {
    pub const ALL: [AblationMethod; 6] = [
        AblationMethod::Nms,
        AblationMethod::SoftNms,
        AblationMethod::VotingSoftNms,
        AblationMethod::TopKScore,
        AblationMethod::TopKScoreLocation,
        AblationMethod::BestSingle,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            AblationMethod::Nms => "nms",
            AblationMethod::SoftNms => "soft-nms",
            AblationMethod::VotingSoftNms => "voting-soft-nms",
            AblationMethod::TopKScore => "topk-score",
            AblationMethod::TopKScoreLocation => "topk-score-location",
            AblationMethod::BestSingle => "best-single",
        }
    }
}

impl fmt::Display for AblationMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AblationMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Usage(format!("unknown ablation method {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AblationParams {
    /// Per-detector post-processing, also the pooled SoftNMS baseline.
    pub soft_nms: SoftNmsParams,
    /// Threshold of the pooled hard-NMS baseline.
    pub nms_iou: f64,
    /// Voting knobs; `mode` and `all_member_voting` are set per method.
    pub voting: VotingParams,
    pub matching: MatchParams,
}

impl Default for AblationParams {
    fn default() -> Self {
        Self {
            soft_nms: SoftNmsParams::default(),
            nms_iou: 0.5,
            voting: VotingParams::default(),
            matching: MatchParams::default(),
        }
    }
}

impl AblationParams {
    pub fn validate(&self) -> Result<()> {
        self.soft_nms.validate()?;
        Suppressor::Hard { iou_threshold: self.nms_iou }.validate()?;
        self.voting.validate()?;
        self.matching.validate()
    }

    pub fn voting_for(&self, method: AblationMethod) -> Option<VotingParams> {
        let v = self.voting;
        match method {
            AblationMethod::VotingSoftNms => {
                Some(VotingParams { all_member_voting: true, mode: VotingMode::ScoreAndLocation, ..v })
            }
            AblationMethod::TopKScore => {
                Some(VotingParams { all_member_voting: false, mode: VotingMode::ScoreOnly, ..v })
            }
            AblationMethod::TopKScoreLocation => {
                Some(VotingParams { all_member_voting: false, mode: VotingMode::ScoreAndLocation, ..v })
            }
            _ => None,
        }
    }
}

/// Everything one simulated run produces before fusion.
#[derive(Debug, Clone)]
pub struct SimulatedRun {
    pub ground_truth: GroundTruthSet,
    /// Raw detector outputs, indexed by detector.
    pub raw: Vec<DetectionSet>,
    /// Each detector's output after its own SoftNMS.
    pub suppressed: Vec<DetectionSet>,
}

pub fn simulate_run(cfg: &SimulationConfig, soft_nms: &SoftNmsParams) -> Result<SimulatedRun> {
    cfg.validate()?;
    soft_nms.validate()?;
    let ground_truth = generate_ground_truth(cfg);
    let raw = (0..cfg.num_detectors).map(|d| simulate_detector(&ground_truth, cfg, d)).collect::<Result<Vec<_>>>()?;
    let suppressor = Suppressor::Soft(*soft_nms);
    let suppressed = raw.iter().map(|ds| suppress_set(ds, &suppressor)).collect();
    Ok(SimulatedRun { ground_truth, raw, suppressed })
}

/// Output of `method` on a simulated run. `BestSingle` has no single fused
/// output and yields `None`.
pub fn fuse(run: &SimulatedRun, method: AblationMethod, params: &AblationParams) -> Option<DetectionSet> {
    let pooled = || pool(&run.suppressed);
    match method {
        AblationMethod::Nms => Some(suppress_set(&pooled(), &Suppressor::Hard { iou_threshold: params.nms_iou })),
        AblationMethod::SoftNms => Some(suppress_set(&pooled(), &Suppressor::Soft(params.soft_nms))),
        AblationMethod::VotingSoftNms | AblationMethod::TopKScore | AblationMethod::TopKScoreLocation => {
            let v = params.voting_for(method).expect("voting method");
            Some(topk_voting_nms(&pooled(), &v))
        }
        AblationMethod::BestSingle => None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub method: AblationMethod,
    pub map: f64,
    pub seed: u64,
}

/// Simulates once with `cfg.rng_seed` and scores every method in `methods`.
pub fn run_ablation(
    cfg: &SimulationConfig,
    methods: &[AblationMethod],
    params: &AblationParams,
) -> Result<Vec<AblationRow>> {
    params.validate()?;
    let run = simulate_run(cfg, &params.soft_nms)?;
    Ok(score_methods(&run, cfg.rng_seed, methods, params))
}

pub fn score_methods(
    run: &SimulatedRun,
    seed: u64,
    methods: &[AblationMethod],
    params: &AblationParams,
) -> Vec<AblationRow> {
    methods
        .iter()
        .map(|&method| {
            let map = match fuse(run, method, params) {
                Some(ds) => evaluate(&ds, &run.ground_truth, &params.matching).map,
                None => run
                    .suppressed
                    .iter()
                    .map(|ds| evaluate(ds, &run.ground_truth, &params.matching).map)
                    .fold(0.0, f64::max),
            };
            AblationRow { method, map, seed }
        })
        .collect()
}

/// [`run_ablation`] for each seed in `seeds`, rows grouped by seed.
pub fn run_ablation_seeds(
    cfg: &SimulationConfig,
    seeds: &[u64],
    methods: &[AblationMethod],
    params: &AblationParams,
) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::new();
    for &seed in seeds {
        rows.extend(run_ablation(&SimulationConfig { rng_seed: seed, ..cfg.clone() }, methods, params)?);
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: AblationMethod,
    pub mean: f64,
    /// Sample standard deviation; zero for a single seed.
    pub stddev: f64,
    pub seeds: usize,
}

pub fn summarize(rows: &[AblationRow]) -> Vec<MethodSummary> {
    let mut by_method: BTreeMap<AblationMethod, Vec<f64>> = BTreeMap::new();
    for r in rows {
        by_method.entry(r.method).or_default().push(r.map);
    }
    by_method
        .into_iter()
        .map(|(method, maps)| {
            let n = maps.len() as f64;
            let mean = maps.iter().sum::<f64>() / n;
            let var =
                if maps.len() > 1 { maps.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
            MethodSummary { method, mean, stddev: var.sqrt(), seeds: maps.len() }
        })
        .collect()
}

pub fn write_ablation_csv<W: Write>(rows: &[AblationRow], mut w: W) -> Result<()> {
    let io = |e| Error::io("<ablation>", e);
    writeln!(w, "method,map,seed").map_err(io)?;
    for r in rows {
        writeln!(w, "{},{},{}", r.method, fmt6(r.map), r.seed).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_summary_csv<W: Write>(summary: &[MethodSummary], mut w: W) -> Result<()> {
    let io = |e| Error::io("<ablation summary>", e);
    writeln!(w, "method,mean_map,stddev_map,seeds").map_err(io)?;
    for s in summary {
        writeln!(w, "{},{},{},{}", s.method, fmt6(s.mean), fmt6(s.stddev), s.seeds).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Mean distance between the centers of true-positive boxes and the GT
/// boxes they matched. `None` when there are no true positives.
pub fn mean_tp_center_error(ds: &DetectionSet, gt: &GroundTruthSet, params: &MatchParams) -> Option<f64> {
    let gt_by_class = ground_truth_by_class(gt);
    let dets_by_class = detections_by_class(ds);
    let (mut total, mut n) = (0.0, 0usize);
    for (label, class_gt) in &gt_by_class {
        let Some(dets) = dets_by_class.get(label) else { continue };
        for (d, m) in dets.iter().zip(match_class_assignments(dets, class_gt, params)) {
            if let Some(j) = m {
                let (dx, dy) = d.det.bbox.center();
                let (gx, gy) = class_gt[d.image][j].center();
                total += ((dx - gx).powi(2) + (dy - gy).powi(2)).sqrt();
                n += 1;
            }
        }
    }
    (n > 0).then(|| total / n as f64)
}
