//! Moving-vehicle detection and semantic ROI compression for georegistered
//! aerial video.
//!
//! Stages, in pipeline order:
//!
//! * [`georeg`]: pose-derived ground-plane homographies and frame warping.
//! * [`fluxtensor`]: Gaussian-derivative filtering, structure/flux tensor
//!   traces and motion masks.
//! * [`appearance`]: ingest of externally produced vehicle detections.
//! * [`fusion`]: motion/appearance decision table, building roof-top
//!   detection and temporal aggregation.
//! * [`semcodec`]: base frame + masked abstract frame container.
//! * [`eval`]: precision / recall / F-measure.
//!
//! [`synth`] renders synthetic scenes with exact ground truth and
//! [`pipeline`] wires the stages together through files.

pub mod appearance;
pub mod config;
pub mod detection;
pub mod error;
pub mod eval;
pub mod fluxtensor;
pub mod frame;
pub mod fusion;
pub mod geometry;
pub mod georeg;
pub mod mask;
pub mod pipeline;
pub mod semcodec;
pub mod synth;

pub use config::{SequenceConfig, ThresholdMode};
pub use detection::{BBox, Category, DetectionSet};
pub use error::{Error, Result};
pub use frame::{load_frame, save_frame, Frame};
pub use geometry::{normalize_homography, CameraPose, Homography};
pub use georeg::PlaneConfig;
pub use mask::BinaryMask;
