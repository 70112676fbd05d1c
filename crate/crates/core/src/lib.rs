//! Data-driven sparse sensing for drainage-network state reconstruction.
//!
//! The pipeline: learn a tailored orthonormal basis from simulated snapshot
//! matrices (SVD), rank candidate sensor locations (QR with column
//! pivoting), reconstruct the full network state from the few selected
//! measurements (pseudo-inverse least squares), and score everything with
//! Nash-Sutcliffe efficiency and projection-residual diagnostics.
//!
//! The numerical core is generic over the scalar type ([`scalar::Real`],
//! implemented for `f32` and `f64`); the CLI and report layer run in `f64`
//! through the aliases below.

pub mod basis;
pub mod config;
pub mod error;
pub mod evaluate;
pub mod experiments;
pub mod linalg;
pub mod placement;
pub mod reconstruct;
pub mod report;
pub mod rng;
pub mod scalar;
pub mod snapshot;
pub mod synth;

pub use error::{DssError, Result};
pub use scalar::Real;

/// f64 instantiations of the generic core.
pub type TailoredBasis64 = basis::TailoredBasis<f64>;
pub type SnapshotMatrix64 = snapshot::SnapshotMatrix<f64>;
pub type DataSplit64 = snapshot::DataSplit<f64>;
pub type MeasurementVector64 = reconstruct::MeasurementVector<f64>;
pub type ReconstructionResult64 = reconstruct::ReconstructionResult<f64>;
