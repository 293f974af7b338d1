//! Relative pose between two partially overlapping keypoint scans.
//!
//! Candidate correspondences are scored by a pairwise consistency kernel,
//! selected by the leading eigenvector of an affinity matrix and refined by
//! iteratively reweighted rigid fitting; the two steps alternate, each
//! feeding the other. The crate also ships a synthetic scene generator, an
//! evaluation harness and a finite-difference tuner for the kernel scales.

pub mod bench;
pub mod error;
pub mod geometry;
pub mod io;
pub mod matching;
pub mod robust_fit;
pub mod solver;
pub mod spectral;
pub mod synth;
pub mod tuner;
pub mod types;

pub use error::{FitError, InvalidInput, IoError, SolveError};
pub use solver::{solve, MatchResult};
pub use types::{
    Candidate, ConsistencyParams, Keypoint, KeypointSet, Mode, RigidTransform, SolverConfig,
};

pub use nalgebra;
