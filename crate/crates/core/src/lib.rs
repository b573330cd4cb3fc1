//! Numerical laboratory for the parabolic MEMS equation with pressure,
//!
//! ```text
//! u_t - Delta u = lambda f(x) / (1 - u)^2 + P,   u = 0 on the boundary,
//! ```
//!
//! on an interval or a radially symmetric ball: minimal steady states,
//! quench/global classification, quenching-time and rate analysis in
//! similarity variables, and critical-parameter searches.

pub mod criticality;
pub mod domain;
pub mod elliptic;
pub mod error;
pub mod fit;
pub mod linalg;
pub mod parabolic;
pub mod quench;

pub use domain::{
    build_grid, check_admissible_initial, discrete_laplacian, evaluate_profile, DomainSpec, Field,
    Grid, InitialSpec, Problem, ProblemSpec, ProfileSpec, SolverControls,
};
pub use error::{Error, Result};
