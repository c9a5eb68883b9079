//! Numerical laboratory for the heat equation with a singular absorption
//! potential, ∂ₜu − Δu + V(x,t)u = 0, posed with measure initial data.
//!
//! The crate provides measure/potential catalogs, exact heat-kernel
//! evaluation, an adaptive space-time quadrature with divergence verdicts,
//! classification criteria (admissibility, subcriticality, singular set,
//! capacity), finite-difference approximation schemes with monotone sweeps,
//! reduced-measure estimation, and initial-trace extraction.

pub mod classify;
pub(crate) mod fd;
pub mod error;
pub mod grid;
pub mod kernel;
pub mod measure;
pub mod potential;
pub mod quad;
pub mod solver;
pub mod trace;

pub use error::{Error, Result};
pub use grid::{BoxDomain, GridSpec, SpatialGrid};
pub use kernel::{heat_kernel, heat_potential};
pub use measure::{Atom, DensityGrid, Measure};
pub use potential::{Potential, PotentialKind};
pub use quad::{QuadOptions, QuadratureTrail, Verdict};
pub use solver::{Field, InitData, KernelEstimate, ReduceOutcome, StepOptions};
pub use trace::{CellVerdict, TraceOptions, TraceReport};
