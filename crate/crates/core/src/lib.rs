//! Palm tree detection and counting in high-resolution overhead imagery.
//!
//! The pipeline binarizes the green band (or luma), closes small gaps,
//! fills enclosed holes, drops speckle, labels connected blobs and keeps the
//! ones whose size, circularity and radial signature fit a palm canopy:
//!
//! ```text
//! raster -> segment -> shape -> detector -> output
//! ```
//!
//! [`synth`] renders groves with known palm positions for scoring.

// `!(x > 0.0)` rejects NaN along with out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod detector;
pub mod error;
mod fsutil;
pub mod output;
pub mod raster;
pub mod segment;
pub mod shape;
pub mod synth;

pub use detector::{detect, Detection, DetectorConfig, RejectReason, RunReport};
pub use error::{Error, Result};
pub use raster::{GeoMeta, GrayRaster, Raster};
pub use segment::{BinaryMask, Connectivity, LabelMap, StructuringElement};
pub use shape::{Component, Point2, RadialSignature};
pub use synth::{GroveSpec, GroveTruth, MatchResult};
