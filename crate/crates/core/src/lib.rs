//! Core algorithms for multistage stochastic convex programs.
//!
//! The crate is `no_std` (it only needs `alloc`) and contains no IO. It
//! provides:
//!
//! - [`model`]: stagewise subproblems with linear constraints and separable
//!   convex objective terms,
//! - [`solver`]: a primal-dual interior-point method returning the dual
//!   multipliers used to build cuts,
//! - [`cuts`]: piecewise-linear convex value-function approximations,
//! - [`problems`]: the energy, financial and production planning families,
//! - [`sddp`]: stochastic dual dynamic programming,
//! - [`scenario`]: scenario trees and the deterministic-equivalent program,
//! - [`dataset`]: cut-sequence training data,
//! - [`neural`]: a decoder-only transformer that generates cut sequences,
//! - [`eval`]: policy evaluation and solution-quality metrics.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod cuts;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod math;
pub mod model;
pub mod neural;
pub mod problems;
pub mod rng;
pub mod scenario;
pub mod sddp;
pub mod solver;

pub use cuts::{Cut, CutOrigin, CutSet};
pub use error::{Error, Result};
pub use model::{DistributionParams, Family, ProblemInstance, Realization, StageSubproblem};
pub use solver::{solve, SolveResult, SolveStatus, SolverOptions};
