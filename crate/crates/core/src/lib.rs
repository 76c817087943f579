//! Numerical laboratory for rough-coefficient parabolic equations and
//! cross-diffusion reaction systems on structured grids.
//!
//! Modules build on each other:
//! - [`grid`]: cell-centered grids, masked domains, fields, norms, Poisson solver, I/O;
//! - [`heat_kernel`]: discrete Neumann/mixed heat kernels and their decay rates;
//! - [`rough`]: `a ∂_t w − Δw = f` with measurable `a`, explicit constants and estimate checks;
//! - [`rd`]: SKT, quadratic and general reaction–diffusion systems with auxiliary variables;
//! - [`interp`]: one-sided interpolation inequalities and ball coverings;
//! - [`harness`]: JSON configs, presets, runs and reports.

pub mod error;
pub mod grid;
pub mod harness;
pub mod heat_kernel;
pub mod interp;
pub mod rd;
pub mod report;
pub mod rough;

pub use error::{Error, Result};
