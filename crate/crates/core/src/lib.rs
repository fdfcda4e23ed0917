//! Sparse identification of integral kernels in distributed-delay renewal
//! equations.
//!
//! A renewal equation ties the present value of a series to a weighted
//! integral over its recent history,
//!
//! ```text
//! y(t) = ∫₀^σ g(a, X(t − a)) da
//! ```
//!
//! The kernel `g` is identified by discretizing the memory integral with a
//! quadrature rule, evaluating a library of candidate terms on time-shifted
//! data, and solving a sparse linear regression for the term weights.
//!
//! The crate is organised bottom-up:
//!
//! * [`timeseries`]: the aligned data matrix, splitting and time shifts.
//! * [`quadrature`]: nodes and weights over the memory window `[0, σ]`.
//! * [`library`]: candidate terms and the quadrature-weighted design matrix.
//! * [`regression`]: least squares, STLS and coordinate-descent LASSO.
//! * [`driver`]: end-to-end fitting, prediction and fit metrics.
//! * [`optimize`]: particle swarm over the activity exponent ω and
//!   sensitivity sweeps over ω and σ.
//! * [`synth`]: ground-truth generators and a brute-force integral oracle.
//! * [`ingest`]: ISD-lite temperature files, monthly case CSVs and the
//!   canonical table format.

pub mod driver;
pub mod error;
pub mod ingest;
pub mod library;
pub mod optimize;
pub mod quadrature;
pub mod regression;
pub mod rng;
pub mod synth;
pub mod timeseries;

pub use driver::{fit, predict, rmse, FitReport, ModelConfig, OmegaSetting, Preset, SolverConfig, SparseModel};
pub use error::{Error, Result};
pub use library::{CandidateLibrary, TermKind, TermSpec};
pub use optimize::{pso_optimize, PsoConfig, PsoResult, SweepResult};
pub use quadrature::{QuadratureKind, QuadratureRule};
pub use regression::{SparseCoefficients, SolverKind};
pub use timeseries::{ShiftedView, TimeSeriesTable};
