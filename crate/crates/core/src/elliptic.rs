//! Steady states and spectral data of the Dirichlet Laplacian.

use serde::{Deserialize, Serialize};

use crate::domain::{discrete_laplacian, Field, Grid, Problem};
use crate::error::{Error, Result};

/// Relative eigen-residual at which inverse iteration stops.
pub const EIGEN_TOL: f64 = 1e-10;
const EIGEN_MAX_ITER: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Eigenpair {
    pub mu: f64,
    /// Positive eigenfield normalized to `max = 1`.
    pub phi: Field,
    pub iterations: usize,
    pub residual: f64,
}

/// Principal Dirichlet eigenpair of `-Delta` by inverse power iteration.
pub fn principal_eigenpair(grid: &Grid) -> Result<Eigenpair> {
    let a = grid.neg_laplacian();
    let lu = a.factor()?;
    let m = a.len();
    let mut x = vec![1.0; m];
    for iter in 1..=EIGEN_MAX_ITER {
        lu.solve_in_place(&mut x);
        let norm = x.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::Numerical("inverse iteration collapsed".into()));
        }
        // the principal eigenvector has one sign; keep it positive
        let sign = if x.iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
        x.iter_mut().for_each(|v| *v *= sign / norm);

        let ax = a.apply(&x);
        let mu = ax.iter().zip(&x).map(|(p, q)| p * q).sum::<f64>()
            / x.iter().map(|q| q * q).sum::<f64>();
        let residual =
            ax.iter().zip(&x).map(|(p, q)| (p - mu * q).abs()).fold(0.0, f64::max) / mu;
        if residual <= EIGEN_TOL {
            let mut phi = vec![0.0; grid.len()];
            phi[grid.unknowns()].copy_from_slice(&x);
            return Ok(Eigenpair { mu, phi: Field::new(phi)?, iterations: iter, residual });
        }
    }
    Err(Error::Numerical(format!(
        "inverse iteration did not reach relative residual {EIGEN_TOL} in {EIGEN_MAX_ITER} steps"
    )))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Torsion {
    /// Solution of `-Delta Phi = 1`, zero on the boundary.
    pub phi: Field,
    pub integral: f64,
    pub max: f64,
}

pub fn solve_torsion(grid: &Grid) -> Result<Torsion> {
    let a = grid.neg_laplacian();
    let sol = a.solve(&vec![1.0; a.len()])?;
    let mut phi = vec![0.0; grid.len()];
    phi[grid.unknowns()].copy_from_slice(&sol);
    let phi = Field::new(phi)?;
    Ok(Torsion { integral: grid.integrate(&phi), max: phi.max(), phi })
}

/// Eigen- and torsion data with the integrals entering the parameter bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralData {
    pub mu0: f64,
    pub phi0: Field,
    pub torsion: Field,
    pub volume: f64,
    pub int_torsion: f64,
    pub int_torsion_f: f64,
    pub max_torsion: f64,
    pub int_phi0: f64,
    pub int_f_phi0: f64,
    /// `|| Delta phi0 ||_1`
    pub lap_phi0_l1: f64,
}

impl SpectralData {
    pub fn compute(problem: &Problem) -> Result<SpectralData> {
        let grid = &problem.grid;
        let eig = principal_eigenpair(grid)?;
        let torsion = solve_torsion(grid)?;
        let lap = discrete_laplacian(&eig.phi, grid)?;
        let abs_lap: Vec<f64> = lap.iter().map(|v| v.abs()).collect();
        let f_phi0: Vec<f64> = eig.phi.iter().zip(problem.profile.iter()).map(|(a, b)| a * b).collect();
        let torsion_f: Vec<f64> =
            torsion.phi.iter().zip(problem.profile.iter()).map(|(a, b)| a * b).collect();
        Ok(SpectralData {
            mu0: eig.mu,
            int_phi0: grid.integrate(&eig.phi),
            int_f_phi0: grid.integrate(&f_phi0),
            lap_phi0_l1: grid.integrate(&abs_lap),
            phi0: eig.phi,
            volume: grid.domain().volume(),
            int_torsion: torsion.integral,
            int_torsion_f: grid.integrate(&torsion_f),
            max_torsion: torsion.max,
            torsion: torsion.phi,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaBounds {
    pub pressure: f64,
    /// `4 (P* - P)^3 / (27 P*^2 sup f)` with an operational `P*`; present only
    /// when such an estimate was supplied and `P < P*`.
    pub lower_l22: Option<f64>,
    /// `(|Omega| - P int Phi) / int Phi f`
    pub upper_l22: f64,
    /// `(mu0 - P) / c0`, clamped at zero.
    pub upper_p33: f64,
    /// `4 mu0 / 27`, reported for `P = 0` only.
    pub upper_nopressure: Option<f64>,
    /// `P >= mu0`: no admissible voltage exists.
    pub no_admissible_lambda: bool,
}

impl LambdaBounds {
    /// Smallest of the available upper bounds.
    pub fn best_upper(&self) -> f64 {
        let mut best = self.upper_l22.min(self.upper_p33);
        if let Some(b) = self.upper_nopressure {
            best = best.min(b);
        }
        best
    }
}

pub fn lambda_bounds(
    pressure: f64,
    spectral: &SpectralData,
    c0: f64,
    sup_f: f64,
    operational_p_star: Option<f64>,
) -> LambdaBounds {
    let no_admissible_lambda = pressure >= spectral.mu0;
    let upper_p33 = if no_admissible_lambda { 0.0 } else { (spectral.mu0 - pressure) / c0 };
    let upper_l22 = (spectral.volume - pressure * spectral.int_torsion) / spectral.int_torsion_f;
    let lower_l22 = operational_p_star
        .filter(|&ps| ps > pressure)
        .map(|ps| 4.0 * (ps - pressure).powi(3) / (27.0 * ps * ps * sup_f));
    LambdaBounds {
        pressure,
        lower_l22,
        upper_l22,
        upper_p33,
        upper_nopressure: (pressure == 0.0).then(|| 4.0 * spectral.mu0 / 27.0),
        no_admissible_lambda,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonotoneOptions {
    /// Iterates reaching `max u >= 1 - break_gap` are declared not found.
    pub break_gap: f64,
    pub max_iterations: usize,
}

impl Default for MonotoneOptions {
    fn default() -> Self {
        MonotoneOptions { break_gap: 1e-3, max_iterations: 5000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SteadyResult {
    Exists { u_min: Field, residual: f64, iterations: usize },
    NotFound { max_u: f64, iterations: usize },
}

impl SteadyResult {
    pub fn exists(&self) -> bool {
        matches!(self, SteadyResult::Exists { .. })
    }
}

/// `|| -Delta u - lambda f / (1 - u)^2 - P ||_inf` over interior nodes.
pub fn steady_residual(problem: &Problem, u: &[f64]) -> Result<f64> {
    let lap = discrete_laplacian(u, &problem.grid)?;
    Ok(problem
        .grid
        .interior()
        .iter()
        .map(|&i| (lap[i] + problem.forcing(i, u[i])).abs())
        .fold(0.0, f64::max))
}

/// Minimal steady state by monotone iteration from zero, using
/// [`MonotoneOptions::default`].
pub fn solve_minimal_steady(problem: &Problem) -> Result<SteadyResult> {
    solve_minimal_steady_with(problem, MonotoneOptions::default())
}

/// Iterates `-Delta u_{k+1} = lambda f / (1 - u_k)^2 + P` from `u_0 = 0`.
///
/// The iterates increase nodewise; they either converge below one (the
/// limit is the minimal solution) or climb past `1 - break_gap`.
pub fn solve_minimal_steady_with(problem: &Problem, opts: MonotoneOptions) -> Result<SteadyResult> {
    let grid = &problem.grid;
    let tol = problem.spec.controls.steady_tol;
    let lu = grid.neg_laplacian().factor()?;
    let range = grid.unknowns();
    let mut u = vec![0.0; grid.len()];
    let mut next = vec![0.0; range.len()];
    for iter in 1..=opts.max_iterations {
        for (j, i) in range.clone().enumerate() {
            next[j] = problem.forcing(i, u[i]);
        }
        lu.solve_in_place(&mut next);

        let mut diff = 0.0f64;
        let mut max_u = 0.0f64;
        for (j, i) in range.clone().enumerate() {
            let step = next[j] - u[i];
            if step < -1e-12 {
                return Err(Error::Numerical(format!(
                    "monotone iteration decreased by {step} at node {i}"
                )));
            }
            diff = diff.max(step.abs());
            max_u = max_u.max(next[j]);
        }
        if !max_u.is_finite() || max_u >= 1.0 - opts.break_gap {
            return Ok(SteadyResult::NotFound { max_u, iterations: iter });
        }
        u[range.clone()].copy_from_slice(&next);
        if diff <= tol * (1.0 - max_u) {
            let residual = steady_residual(problem, &u)?;
            if residual <= tol {
                return Ok(SteadyResult::Exists { u_min: Field::new(u)?, residual, iterations: iter });
            }
        }
    }
    let max_u = u.iter().copied().fold(0.0, f64::max);
    Err(Error::Numerical(format!(
        "monotone iteration undecided after {} iterations (max u = {max_u})",
        opts.max_iterations
    )))
}
