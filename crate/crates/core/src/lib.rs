//! Numerical laboratory for the local times of additive symmetric stable
//! processes `X1(t1) + ... + Xp(tp)` in `R^d`.
//!
//! The crate is split by concern:
//!
//! * [`model`] – parameters, the characteristic exponent `psi`, the kernel `Q`
//!   and closed-form constants of the limit theorems.
//! * [`stablesim`] – exact-in-distribution sampling of stable increments and
//!   of whole sheets on a time grid.
//! * [`localtime`] – occupation histograms, the Fejér-type mollified estimator
//!   and sup-norm extraction.
//! * [`moments`] – permutation prefix-sum kernels and three independent routes
//!   to moments at exponential times.
//! * [`variational`] – grid and lattice solvers for the variational constants
//!   and the identities that tie them together.
//! * [`experiments`] – Monte Carlo campaigns (scaling, tails, LIL, intersection
//!   identity).
//! * [`artifacts`] – JSON/CSV/binary output formats shared with the CLI.

pub mod artifacts;
pub mod error;
pub mod experiments;
pub mod localtime;
pub mod model;
pub mod moments;
pub mod quad;
pub mod rng;
pub mod stablesim;
pub mod stats;
pub mod variational;

pub use error::{Error, Result};
pub use localtime::{LocalTimeField, Mollifier, SpatialGrid};
pub use model::{ModelParams, TheoreticalConstants};
pub use moments::{FrequencyTuple, MomentEstimate, MomentMethod};
pub use rng::StreamRng;
pub use stablesim::{SheetSample, TimeGrid};
pub use variational::{GridFunction, GridSpec, LatticeModel, VariationalSolution};
