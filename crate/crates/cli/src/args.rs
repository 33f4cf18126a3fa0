use std::path::PathBuf;

use boxfuse_core::simulation::BoxScaleDistribution;
use boxfuse_core::voting::{LocationAveraging, ScoreAveraging};
use boxfuse_core::{
    AblationParams, MatchParams, SimulationConfig, SoftNmsMethod, SoftNmsParams, VotingMode, VotingParams,
};
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Detection post-processing: NMS, SoftNMS, top-k voting ensembles,
/// mAP evaluation and a seeded detector simulator.
///
/// Exit status: 0 success, 1 data error, 2 usage error, 3 I/O error.
#[derive(Debug, Parser)]
#[command(name = "boxfuse", version, propagate_version = true)]
pub struct Cli {
    /// Worker threads, >= 1. Output never depends on it. Defaults to one
    /// per CPU.
    #[arg(long, global = true, env = "BOXFUSE_THREADS")]
    pub threads: Option<usize>,

    /// More log output on stderr; repeat for more.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    /// Only errors on stderr.
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Greedy hard NMS per (image, label).
    Nms(NmsArgs),
    /// SoftNMS per (image, label).
    Softnms(SoftNmsArgs),
    /// Pool one or more prediction files and fuse them with top-k voting NMS.
    Ensemble(EnsembleArgs),
    /// Score predictions against ground truth (all-point interpolated mAP).
    Eval(EvalArgs),
    /// Simulate ground truth and noisy detectors, then run the fusion ablation.
    Simulate(Box<SimulateArgs>),
}

/// Prediction files are CSV (`image_id,label,score,xmin,ymin,xmax,ymax`,
/// coordinates in [0, 1]) or JSON lines when the name ends in `.jsonl`.
#[derive(Debug, Args)]
pub struct NmsArgs {
    /// Input predictions.
    #[arg(long = "in", value_name = "PATH")]
    pub input: PathBuf,
    /// Output predictions.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    /// Suppress boxes whose IoU with a kept box exceeds this, in (0, 1].
    #[arg(long, default_value_t = 0.5)]
    pub iou: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DecayArg {
    Gaussian,
    Linear,
    Hard,
}

impl From<DecayArg> for SoftNmsMethod {
    fn from(d: DecayArg) -> Self {
        match d {
            DecayArg::Gaussian => SoftNmsMethod::Gaussian,
            DecayArg::Linear => SoftNmsMethod::Linear,
            DecayArg::Hard => SoftNmsMethod::Hard,
        }
    }
}

#[derive(Debug, Args)]
pub struct SoftNmsFlags {
    /// Score decay rule: gaussian exp(-iou^2/sigma), linear (1 - iou) above
    /// --nt, or hard (zero above --nt).
    #[arg(long, value_enum, default_value_t = DecayArg::Gaussian)]
    pub method: DecayArg,
    /// Gaussian width, > 0.
    #[arg(long, default_value_t = 0.5)]
    pub sigma: f64,
    /// Overlap threshold of the linear and hard rules, in (0, 1].
    #[arg(long, default_value_t = 0.5)]
    pub nt: f64,
    /// Drop detections whose decayed score falls below this, in [0, 1).
    #[arg(long, default_value_t = 0.001)]
    pub score_floor: f64,
}

impl SoftNmsFlags {
    pub fn params(&self) -> SoftNmsParams {
        SoftNmsParams {
            method: self.method.into(),
            iou_threshold: self.nt,
            sigma: self.sigma,
            score_floor: self.score_floor,
        }
    }
}

#[derive(Debug, Args)]
pub struct SoftNmsArgs {
    /// Input predictions.
    #[arg(long = "in", value_name = "PATH")]
    pub input: PathBuf,
    /// Output predictions.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    #[command(flatten)]
    pub soft: SoftNmsFlags,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    /// Voters decide the score; the box is the cluster seed's.
    Score,
    /// Voters decide both score and box.
    ScoreLocation,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LocationArg {
    Uniform,
    ScoreWeighted,
}

#[derive(Debug, Args)]
pub struct VotingFlags {
    /// Number of top-scoring cluster members that vote, >= 1.
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    /// A detection joins a cluster when its IoU with the seed is at least
    /// this, in (0, 1].
    #[arg(long = "iou", default_value_t = 0.5)]
    pub iou: f64,
    /// What the voters decide.
    #[arg(long, value_enum, default_value_t = ModeArg::ScoreLocation)]
    pub mode: ModeArg,
    /// Every cluster member votes, ignoring --k.
    #[arg(long)]
    pub all_members: bool,
    /// How voter boxes are averaged in score-location mode.
    #[arg(long, value_enum, default_value_t = LocationArg::Uniform)]
    pub location: LocationArg,
}

impl VotingFlags {
    pub fn params(&self, divide_by: Option<usize>) -> VotingParams {
        VotingParams {
            iou_threshold: self.iou,
            k: self.k,
            mode: match self.mode {
                ModeArg::Score => VotingMode::ScoreOnly,
                ModeArg::ScoreLocation => VotingMode::ScoreAndLocation,
            },
            all_member_voting: self.all_members,
            location: match self.location {
                LocationArg::Uniform => LocationAveraging::Uniform,
                LocationArg::ScoreWeighted => LocationAveraging::ScoreWeighted,
            },
            score: divide_by.map_or(ScoreAveraging::Voters, ScoreAveraging::SourceCount),
        }
    }
}

/// Inputs should each hold one model's output after its own SoftNMS.
#[derive(Debug, Args)]
pub struct EnsembleArgs {
    /// Input predictions, one file per model; repeat the flag.
    #[arg(long = "in", value_name = "PATH", required = true)]
    pub inputs: Vec<PathBuf>,
    /// Fused predictions.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    #[command(flatten)]
    pub voting: VotingFlags,
    /// Divide the voters' score sum by max(number of inputs, voters)
    /// instead of the voter count, penalizing clusters few models agree on.
    #[arg(long)]
    pub divide_by_sources: bool,
    /// Also write the fused set as ImageId,PredictionString rows.
    #[arg(long, value_name = "PATH")]
    pub submission: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Predictions to score.
    #[arg(long, value_name = "PATH")]
    pub pred: PathBuf,
    /// Ground truth CSV: image_id,label,xmin,ymin,xmax,ymax.
    #[arg(long, value_name = "PATH")]
    pub gt: PathBuf,
    /// Per-class report CSV: label,ap,tp,fp,fn,gt_count and a __mAP__ row.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// A detection matches a GT box at IoU >= this, in (0, 1].
    #[arg(long, default_value_t = 0.5)]
    pub iou: f64,
}

impl EvalArgs {
    pub fn params(&self) -> MatchParams {
        MatchParams { iou_match_threshold: self.iou }
    }
}

/// Writes ground_truth.csv, det<N>.csv (raw output of detector N),
/// ablation.csv and ablation_summary.csv into --out-dir. With --num-seeds
/// above 1 the ablation covers seeds seed, seed+1, ...; the ground truth and
/// detector files are those of the first seed.
#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Base random seed. Every output is a function of the flags and this.
    #[arg(long)]
    pub seed: u64,
    /// Output directory, created if missing.
    #[arg(long, value_name = "DIR")]
    pub out_dir: PathBuf,
    /// Number of consecutive seeds in the ablation, >= 1.
    #[arg(long, default_value_t = 1)]
    pub num_seeds: u64,

    /// Images to generate.
    #[arg(long, default_value_t = 500)]
    pub images: usize,
    /// Number of classes, >= 1.
    #[arg(long, default_value_t = 5)]
    pub classes: usize,
    /// Fewest GT boxes per image.
    #[arg(long, default_value_t = 1)]
    pub min_boxes: usize,
    /// Most GT boxes per image, >= --min-boxes.
    #[arg(long, default_value_t = 8)]
    pub max_boxes: usize,
    /// Median GT box area, as a fraction of the image, in [--min-area, --max-area].
    #[arg(long, default_value_t = 0.03)]
    pub median_area: f64,
    /// Log-normal spread of box areas, >= 0.
    #[arg(long, default_value_t = 1.0)]
    pub area_log_sigma: f64,
    /// Log-normal spread of aspect ratios, >= 0.
    #[arg(long, default_value_t = 0.4)]
    pub aspect_log_sigma: f64,
    /// Smallest box area, in (0, 1].
    #[arg(long, default_value_t = 4e-4)]
    pub min_area: f64,
    /// Largest box area, in (0, 1].
    #[arg(long, default_value_t = 0.6)]
    pub max_area: f64,
    /// Same-label GT boxes of one image overlap at most this much, in [0, 1].
    #[arg(long, default_value_t = 0.3)]
    pub max_same_label_iou: f64,

    /// Number of detectors, >= 1.
    #[arg(long, default_value_t = 5)]
    pub detectors: usize,
    /// Per-detector corner noise, as a fraction of box width/height, >= 0.
    #[arg(long, default_value_t = 0.08)]
    pub jitter: f64,
    /// Offset shared by all detectors between annotation and perceived
    /// extent, as a multiple of --jitter, >= 0.
    #[arg(long, default_value_t = 1.25)]
    pub shared_jitter_ratio: f64,
    /// Scale of the additive score noise, >= 0.
    #[arg(long, default_value_t = 0.1)]
    pub score_noise: f64,
    /// Degrees of freedom of the Student-t score noise, > 0.
    #[arg(long, default_value_t = 3.0, conflicts_with = "gaussian_score_noise")]
    pub score_noise_dof: f64,
    /// Gaussian score noise instead of Student-t.
    #[arg(long)]
    pub gaussian_score_noise: bool,
    /// Probability that a detector misses an object, in [0, 1].
    #[arg(long, default_value_t = 0.15)]
    pub miss: f64,
    /// Mean independent false positives per image and detector, >= 0.
    #[arg(long, default_value_t = 0.2)]
    pub fp: f64,
    /// Beta shape (alpha) of false-positive scores, > 0.
    #[arg(long, default_value_t = 1.5)]
    pub fp_score_alpha: f64,
    /// Beta shape (beta) of false-positive scores, > 0.
    #[arg(long, default_value_t = 6.0)]
    pub fp_score_beta: f64,
    /// Beta shape (alpha) of object visibility, > 0.
    #[arg(long, default_value_t = 2.0)]
    pub visibility_alpha: f64,
    /// Beta shape (beta) of object visibility, > 0.
    #[arg(long, default_value_t = 1.0)]
    pub visibility_beta: f64,
    /// Lowest object visibility, in [0, 1].
    #[arg(long, default_value_t = 0.25)]
    pub visibility_floor: f64,
    /// Every object fully visible.
    #[arg(long)]
    pub full_visibility: bool,
    /// Mean extra proposals per detected object, >= 0.
    #[arg(long, default_value_t = 2.0)]
    pub extra_proposals: f64,
    /// Mean unannotated look-alike regions per image, as a multiple of --fp, >= 0.
    #[arg(long, default_value_t = 5.0)]
    pub distractor_ratio: f64,
    /// Beta shape (alpha) of distractor confusion, > 0.
    #[arg(long, default_value_t = 2.0)]
    pub distractor_alpha: f64,
    /// Beta shape (beta) of distractor confusion, > 0.
    #[arg(long, default_value_t = 3.0)]
    pub distractor_beta: f64,

    #[command(flatten)]
    pub soft: SoftNmsFlags,
    /// Threshold of the pooled hard-NMS baseline, in (0, 1].
    #[arg(long, default_value_t = 0.5)]
    pub nms_iou: f64,
    /// Voters per cluster in the top-k methods, >= 1.
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    /// Cluster membership IoU of the voting methods, in (0, 1].
    #[arg(long, default_value_t = 0.5)]
    pub voting_iou: f64,
    /// Evaluation match IoU, in (0, 1].
    #[arg(long, default_value_t = 0.5)]
    pub match_iou: f64,
}

impl SimulateArgs {
    pub fn config(&self) -> SimulationConfig {
        SimulationConfig {
            num_images: self.images,
            classes: self.classes,
            boxes_per_image: (self.min_boxes, self.max_boxes),
            box_scale: BoxScaleDistribution {
                median_area: self.median_area,
                area_log_sigma: self.area_log_sigma,
                aspect_log_sigma: self.aspect_log_sigma,
                min_area: self.min_area,
                max_area: self.max_area,
            },
            num_detectors: self.detectors,
            jitter_sigma: self.jitter,
            shared_jitter_ratio: self.shared_jitter_ratio,
            score_noise_sigma: self.score_noise,
            score_noise_dof: (!self.gaussian_score_noise).then_some(self.score_noise_dof),
            miss_rate: self.miss,
            false_positive_rate: self.fp,
            fp_score_shape: (self.fp_score_alpha, self.fp_score_beta),
            visibility_shape: (!self.full_visibility).then_some((self.visibility_alpha, self.visibility_beta)),
            visibility_floor: self.visibility_floor,
            extra_proposals: self.extra_proposals,
            distractor_ratio: self.distractor_ratio,
            distractor_shape: (self.distractor_alpha, self.distractor_beta),
            max_same_label_iou: self.max_same_label_iou,
            rng_seed: self.seed,
        }
    }

    pub fn ablation_params(&self) -> AblationParams {
        AblationParams {
            soft_nms: self.soft.params(),
            nms_iou: self.nms_iou,
            voting: VotingParams { k: self.k, iou_threshold: self.voting_iou, ..Default::default() },
            matching: MatchParams { iou_match_threshold: self.match_iou },
        }
    }
}
