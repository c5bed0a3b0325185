//! Numerical laboratory for a widely degenerate parabolic diffusion
//! u_t - div((|Du| - 1)_+^{p-1} Du / |Du|) = f: closed-form flux kernels,
//! a randomized verifier for the structural inequalities behind the theory,
//! a finite-difference solver for the regularized flows, and measured
//! energy-estimate reports.

pub mod config;
pub mod error;
pub mod estimates;
pub mod exec;
pub mod flux;
pub mod grid;
pub mod inequality;
pub mod params;
pub mod quad;
pub mod report;
pub mod solver;

pub use error::{Error, Result};
pub use exec::ExecMode;
pub use params::Params;
