//! Autotuning for parallel-prefix kernels on GPU-embedded architectures.
//!
//! The crate models per-SM occupancy for a described architecture, defines
//! the (S, P, L, r, shuffle) launch-parameter spaces of scan, tridiagonal
//! and FFT prefix kernels, and tunes them with two interchangeable
//! methodologies: an occupancy-driven analytical guideline that needs no
//! measurements, and a Bayesian-optimization search driven by a
//! Gaussian-process surrogate. Results are scored against an
//! exhaustive-search oracle with a harmonic-mean portability metric.
//!
//! CPU reference implementations of the kernels (scans, four tridiagonal
//! solvers, a mixed-radix Stockham FFT) serve as correctness oracles.

pub mod analytical;
pub mod arch;
pub mod backend;
pub mod bayes;
pub mod cli;
pub mod error;
pub mod kernels;
pub mod metrics;
pub mod space;

pub use analytical::{plan_large_fft, tune_analytical, GuidelineTrace, MultiKernelPlan};
pub use arch::{compute_occupancy, load_arch, ArchDescriptor, KernelResourceUsage, OccupancyReport};
pub use backend::{
    external_evaluate, sim_cost, Backend, CommandSpec, Measurement, MeasurementTable, SimBackend,
    SimParams, TableBackend,
};
pub use bayes::{expected_improvement, tune_bo, Evaluation, StopReason, SurrogateModel, TuningRun};
pub use error::{Error, Result};
pub use kernels::{steps_count, Algorithm, NodeOperator, ProblemInstance};
pub use metrics::{efficiency, exhaustive_search, phi, throughput, PortabilityScore};
pub use space::{enumerate, estimate_registers, is_valid, Candidate, KernelConfig, SearchSpace};
