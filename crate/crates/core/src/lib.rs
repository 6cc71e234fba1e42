//! Random dynamical systems on the circle, the interval and projective
//! spaces: orbits driven by random words, stationary measures,
//! synchronization diagnostics, limit laws, Lyapunov exponents, random
//! matrix products and Ulam discretizations of the associated operators.
//!
//! Every random quantity is driven by a [`WordStream`] addressed by
//! `(seed, stream_id)`; replica loops use the replica index as stream id,
//! so results do not depend on the number of worker threads.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cocycles;
pub mod error;
pub mod gallery;
pub mod geometry;
pub mod limit_laws;
pub mod linalg;
pub mod lyapunov;
pub mod measures;
pub mod operator;
pub mod parallel;
pub mod stats;
pub mod synchronization;
pub mod systems;
pub mod verify;
pub mod words;

pub use cocycles::{CocycleSpec, LogProduct, SpectrumEstimate};
pub use error::{Error, Result};
pub use geometry::{CirclePoint, IntervalPoint, PhaseSpace, Point, ProjectivePoint};
pub use limit_laws::{Observable, ObservableKind};
pub use linalg::SquareMatrix;
pub use lyapunov::{DistortionReport, LdCurve};
pub use measures::EmpiricalMeasure;
pub use operator::{HolderNormEstimate, PairObservable, UlamOperator};
pub use synchronization::{RateFit, SyncTrace};
pub use systems::{MapSpec, SystemSpec, TabulatedMap};
pub use words::{FixedWord, SymbolSource, WordStream};

/// Formats a real with 17 significant digits, enough to round-trip.
pub fn format_real(x: f64) -> String {
    format!("{x:.16e}")
}

/// Version of this crate, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
