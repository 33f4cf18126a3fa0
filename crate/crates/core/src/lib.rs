//! Detection post-processing and ensembling.
//!
//! * [`geometry`]: normalized boxes, IoU, box averaging.
//! * [`detections`] and [`io`]: the detection / ground-truth data model and
//!   its CSV, JSON-Lines and submission formats.
//! * [`suppression`]: hard NMS and SoftNMS for a single source.
//! * [`voting`]: top-k voting-NMS over pooled sources.
//! * [`evaluation`]: flat AP@IoU and mAP.
//! * [`simulation`]: seeded synthetic detectors and the ablation runner.

pub mod detections;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod io;
pub mod simulation;
pub mod suppression;
pub mod voting;

pub use detections::{pool, Detection, DetectionSet, GroundTruth, GroundTruthSet, ENSEMBLE_SOURCE};
pub use error::{Error, Result};
pub use evaluation::{average_precision, evaluate, match_class, EvalReport, MatchParams};
pub use geometry::{area, iou, mean_box, BBox};
pub use simulation::{AblationMethod, AblationParams, AblationRow, SimulationConfig};
pub use suppression::{hard_nms, soft_nms, suppress_set, SoftNmsMethod, SoftNmsParams, Suppressor};
pub use voting::{cluster_once, ensemble, topk_voting_nms, vote, Cluster, VotingMode, VotingParams};
