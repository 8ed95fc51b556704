//! Solver library for generalized Forchheimer-Ward flow of slightly
//! compressible fluids in porous media.
//!
//! The model couples a polynomial momentum closure `F(x,t,|m|) m = -grad rho`
//! with the continuity equation `phi rho_t + div m = f`. This crate provides:
//!
//! * [`constitutive`] — the law `F`, its derivative, the inverse map
//!   `K = 1/F(s)` through the scalar root of `s F(s) = xi`, and the
//!   continuity/monotonicity inequalities as executable margins;
//! * [`grid`] — staggered Cartesian mesh with cell densities and face-normal
//!   fluxes, discrete divergence and norms;
//! * [`assembly`] — the eps-regularized mixed saddle system of one Picard
//!   step and its direct solution;
//! * [`solvers`] — Picard iteration with eps-continuation for the stationary
//!   problem and the implicit-Euler transient loop with energy/a-priori
//!   diagnostics;
//! * [`verify`] — manufactured solutions, convergence studies, and the
//!   randomized property harness for the constitutive inequalities;
//! * [`config`]/[`cli`] — the line-oriented run configuration and the
//!   `forch` command-line front end with CSV outputs.

pub mod assembly;
pub mod cli;
pub mod config;
pub mod constitutive;
pub mod grid;
pub mod solvers;
pub mod sparse;
pub mod verify;

pub use constitutive::{ForchheimerLaw, LemmaConstants, RootOpts};
pub use grid::{build_grid, BoundaryTrace, CartesianGrid, CellField, FaceField};
pub use solvers::{solve_stationary, run_transient, SolverConfig, StationaryProblem, TransientProblem};
