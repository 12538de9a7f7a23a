//! Rotation-only bundle adjustment.
//!
//! Estimates the absolute rotations of calibrated cameras directly from
//! matched bearing vectors, without estimating translations or structure.
//! The multiview cost sums, over all camera pairs, the square root of the
//! smallest eigenvalue of a 3×3 matrix built from the pair's bearings and
//! relative rotation; it is minimized with Adam over stacked rotation vectors.

pub mod epipolar;
pub mod eval;
pub mod graph;
pub mod io;
pub mod optimizer;
pub mod so3;
pub mod stats;
pub mod synth;

#[cfg(test)]
#[path = "../tests/common/oracles.rs"]
mod testutil;

pub use epipolar::{EdgeCostResult, EdgeMoments, EdgeObservations, MMatrix};
pub use eval::ErrorReport;
pub use graph::{Edge, GraphError, GraphStats, ViewGraph};
pub use optimizer::{IterationTrace, OptimizerConfig, OptimizerState};
pub use so3::{Rotation, RotationVector};
pub use synth::{Layout, SimSettings, SyntheticDataset};
