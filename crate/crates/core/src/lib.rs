//! Exact verification of piecewise-linear ReLU networks through typed affine
//! decision structures, with PCA-based dimensionality reduction.

pub mod affine;
pub mod feasibility;
pub mod nn;
pub mod pca;
pub mod tads;
pub mod verify;
