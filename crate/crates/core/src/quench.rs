//! Post-processing of quenched runs.
//!
//! Everything here works on a recorded [`Trajectory`]: the quenching time is
//! extrapolated from the collapse of the gap, the quenching set is read off
//! the final snapshot, and the profiles near the quench point are rescaled
//! into similarity variables
//!
//! ```text
//! y = (x - a) / sqrt(T - t),  s = -ln(T - t),  w = (1 - u) (T - t)^(-1/3)
//! ```
//!
//! where the rescaled solution is expected to settle at `(3 lambda f(a))^(1/3)`.

use serde::{Deserialize, Serialize};

use crate::domain::{discrete_laplacian, unit_sphere_area, DomainSpec, Field, Grid, Problem};
use crate::elliptic::principal_eigenpair;
use crate::error::{Error, Result};
use crate::fit::{line, weighted_line, LineFit};
use crate::linalg::Tridiagonal;
use crate::parabolic::{integrate, RunVerdict, Trajectory};

/// Largest gap included in the asymptotic window.
pub const WINDOW_GAP: f64 = 0.1;
/// Minimum samples in a fit window.
pub const MIN_WINDOW_SAMPLES: usize = 8;
/// Minimum decades of gap spanned by a rate window.
pub const MIN_WINDOW_DECADES: f64 = 1.5;
/// Required weighted R^2 of the quenching-time fit.
pub const MIN_TIME_FIT_R2: f64 = 0.999;
/// Quench-set membership: gap within this factor of the smallest gap.
pub const QUENCH_SET_FACTOR: f64 = 3.0;
/// Relative difference between resolutions above which `T` is flagged.
pub const REFINEMENT_TOL: f64 = 0.01;
/// Minimum points per side of a similarity-frame y-grid.
pub const FRAME_POINTS: usize = 100;
/// Largest y-spacing of a frame; a fixed spacing keeps the quadrature error
/// the same on every slice.
pub const FRAME_SPACING: f64 = 0.02;

/// `(3 lambda f(a))^(1/3)`, the limit of the rescaled profile.
pub fn touchdown_amplitude(lambda: f64, f_at_center: f64) -> f64 {
    (3.0 * lambda * f_at_center).cbrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuenchTime {
    pub t_hat: f64,
    pub fit: LineFit,
    /// Smallest and largest gap in the window.
    pub window: (f64, f64),
    pub last_t: f64,
}

/// Extrapolated quenching time from a straight line through
/// `(t, (1 - U)^3)` over samples with gap at most [`WINDOW_GAP`].
///
/// Points are weighted by `(1 - U)^-9` so the smallest gaps pin the root;
/// time is measured from the last sample to keep the normal equations
/// well conditioned.
pub fn estimate_quench_time(traj: &Trajectory, quench_gap: f64) -> Result<QuenchTime> {
    let window: Vec<_> = traj.samples.iter().filter(|s| s.gap > 0.0 && s.gap <= WINDOW_GAP).collect();
    let in_band = window.iter().filter(|s| s.gap >= quench_gap).count();
    if in_band < MIN_WINDOW_SAMPLES {
        return Err(Error::Analysis(format!(
            "only {in_band} samples with gap in [{quench_gap}, {WINDOW_GAP}]; lower the quench gap"
        )));
    }
    let last_t = window.last().expect("non-empty").t;
    let xs: Vec<f64> = window.iter().map(|s| s.t - last_t).collect();
    let ys: Vec<f64> = window.iter().map(|s| s.gap.powi(3)).collect();
    let ws: Vec<f64> = ys.iter().map(|y| y.powi(-3)).collect();
    let fit = weighted_line(&xs, &ys, &ws)?;
    if fit.r2 < MIN_TIME_FIT_R2 || fit.slope >= 0.0 {
        return Err(Error::Analysis(format!(
            "quenching-time fit rejected (R^2 = {}, slope = {})",
            fit.r2, fit.slope
        )));
    }
    let t_hat = last_t + fit.root();
    if t_hat <= last_t {
        return Err(Error::Analysis(format!("extrapolated T = {t_hat} precedes the last sample")));
    }
    let g_lo = window.iter().map(|s| s.gap).fold(f64::INFINITY, f64::min);
    let g_hi = window.iter().map(|s| s.gap).fold(0.0, f64::max);
    Ok(QuenchTime { t_hat, fit, window: (g_lo, g_hi), last_t })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimeBound {
    Applicable { bound: f64 },
    /// `3 lambda ||f phi||_1 <= ||Delta phi||_1`.
    NotApplicable { denominator: f64 },
}

impl TimeBound {
    pub fn value(&self) -> Option<f64> {
        match *self {
            TimeBound::Applicable { bound } => Some(bound),
            TimeBound::NotApplicable { .. } => None,
        }
    }
}

/// `||phi||_1 / (3 lambda ||f phi||_1 - ||Delta phi||_1)` for a nonnegative
/// test field vanishing on the boundary.
pub fn quench_time_upper_bound(problem: &Problem, phi: &[f64]) -> Result<TimeBound> {
    let grid = &problem.grid;
    if phi.len() != grid.len() {
        return Err(Error::Shape { expected: grid.len(), got: phi.len() });
    }
    if phi.iter().any(|v| *v < 0.0) || phi.iter().all(|v| *v == 0.0) {
        return Err(Error::Analysis("test function must be nonnegative and not identically zero".into()));
    }
    if grid.boundary().iter().any(|&i| phi[i] != 0.0) {
        return Err(Error::Analysis("test function must vanish on the boundary".into()));
    }
    let lap = discrete_laplacian(phi, grid)?;
    let abs_lap: Vec<f64> = lap.iter().map(|v| v.abs()).collect();
    let f_phi: Vec<f64> = phi.iter().zip(problem.profile.iter()).map(|(a, b)| a * b).collect();
    let numerator = grid.integrate(phi);
    let denominator = 3.0 * problem.spec.lambda * grid.integrate(&f_phi) - grid.integrate(&abs_lap);
    Ok(if denominator > 0.0 {
        TimeBound::Applicable { bound: numerator / denominator }
    } else {
        TimeBound::NotApplicable { denominator }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuenchSet {
    pub nodes: Vec<usize>,
    /// Distance from the set to the boundary.
    pub margin: f64,
    /// Argmax node of the final snapshot.
    pub center: usize,
    pub center_x: f64,
    pub min_gap: f64,
    /// On balls: whether the smallest gap sits exactly at `r = 0`.
    pub origin_is_argmin: Option<bool>,
}

impl QuenchSet {
    pub fn contains(&self, node: usize) -> bool {
        self.nodes.contains(&node)
    }
}

pub fn locate_quench_set(traj: &Trajectory, problem: &Problem) -> Result<QuenchSet> {
    let grid = &problem.grid;
    let last = traj
        .snapshots
        .last()
        .ok_or_else(|| Error::Analysis("trajectory has no snapshots".into()))?;
    let center = last.u.argmax();
    let min_gap = 1.0 - last.u[center];
    let nodes: Vec<usize> = grid
        .interior()
        .iter()
        .copied()
        .filter(|&i| 1.0 - last.u[i] <= QUENCH_SET_FACTOR * min_gap)
        .collect();
    let margin = nodes
        .iter()
        .map(|&i| grid.distance_to_boundary(grid.nodes()[i]))
        .fold(f64::INFINITY, f64::min);
    let origin_is_argmin = match grid.domain() {
        DomainSpec::RadialBall { .. } => Some(center == 0),
        DomainSpec::Interval { .. } => None,
    };
    Ok(QuenchSet { nodes, margin, center, center_x: grid.nodes()[center], min_gap, origin_is_argmin })
}

/// `(t, 1 - u(a, t))` from snapshots inside the asymptotic window.
fn probe_window(traj: &Trajectory, t_hat: f64, node: usize) -> Vec<(f64, f64, f64)> {
    traj.snapshots
        .iter()
        .filter(|s| s.t < t_hat)
        .filter_map(|s| {
            let gap_a = 1.0 - s.u[node];
            (gap_a > 0.0 && gap_a <= WINDOW_GAP).then_some((s.t, gap_a, s.gap))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub exponent: f64,
    /// Amplitude with the exponent held at 1/3 (geometric mean of
    /// `(1 - u(a, t)) (T - t)^(-1/3)` over the window).
    pub amplitude: f64,
    /// `exp(intercept)` of the free-slope fit; extrapolated to `T - t = 1`.
    pub free_amplitude: f64,
    /// `(3 lambda f(a))^(1/3)`
    pub predicted_amplitude: f64,
    pub amplitude_rel_err: f64,
    pub window: (f64, f64),
    pub r2: f64,
    pub samples: usize,
}

/// Regresses `ln(1 - u(a, t))` on `ln(T - t)` over the snapshot window.
pub fn fit_rate(traj: &Trajectory, t_hat: f64, node: usize, problem: &Problem) -> Result<RateFit> {
    let window = probe_window(traj, t_hat, node);
    if window.len() < MIN_WINDOW_SAMPLES {
        return Err(Error::Analysis(format!(
            "rate window has {} samples, need {MIN_WINDOW_SAMPLES}",
            window.len()
        )));
    }
    let g_lo = window.iter().map(|w| w.1).fold(f64::INFINITY, f64::min);
    let g_hi = window.iter().map(|w| w.1).fold(0.0, f64::max);
    if (g_hi / g_lo).log10() < MIN_WINDOW_DECADES {
        return Err(Error::Analysis(format!(
            "rate window spans {:.2} decades of gap, need {MIN_WINDOW_DECADES}",
            (g_hi / g_lo).log10()
        )));
    }
    let xs: Vec<f64> = window.iter().map(|w| (t_hat - w.0).ln()).collect();
    let ys: Vec<f64> = window.iter().map(|w| w.1.ln()).collect();
    let fit = line(&xs, &ys)?;
    let amplitude = (xs.iter().zip(&ys).map(|(x, y)| y - x / 3.0).sum::<f64>() / xs.len() as f64).exp();
    let f_a = problem.profile[node];
    let predicted = touchdown_amplitude(problem.spec.lambda, f_a);
    Ok(RateFit {
        exponent: fit.slope,
        amplitude,
        free_amplitude: fit.intercept.exp(),
        predicted_amplitude: predicted,
        amplitude_rel_err: (amplitude - predicted).abs() / predicted,
        window: (g_lo, g_hi),
        r2: fit.r2,
        samples: window.len(),
    })
}

/// Largest centered first and second differences along the coordinate.
fn derivative_norms(u: &[f64], grid: &Grid) -> (f64, f64) {
    let h = grid.spacing();
    let mut d1 = 0.0f64;
    let mut d2 = 0.0f64;
    for &i in grid.interior() {
        let (left, right) = if i == 0 { (u[1], u[1]) } else { (u[i - 1], u[i + 1]) };
        d1 = d1.max(((right - left) / (2.0 * h)).abs());
        d2 = d2.max(((right - 2.0 * u[i] + left) / (h * h)).abs());
    }
    (d1, d2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelopes {
    /// Largest `M` with `M (T - t)^(1/3) <= 1 - u(a, t)` on the window.
    pub m_hat: f64,
    /// Smallest `C` with `1 - max u <= C (T - t)^(1/3)` on the window.
    pub c_hat: f64,
    /// `max |grad u| (T - t)^(1/6)`
    pub m1_hat: f64,
    /// `max |D^2 u| (T - t)^(2/3)`
    pub m2_hat: f64,
    pub samples: usize,
    /// Both envelope inequalities hold at every window sample.
    pub inequalities_hold: bool,
    pub pass: bool,
}

pub fn check_envelopes(traj: &Trajectory, t_hat: f64, node: usize, problem: &Problem) -> Result<Envelopes> {
    let window: Vec<_> = traj
        .snapshots
        .iter()
        .filter(|s| s.t < t_hat && s.gap > 0.0 && s.gap <= WINDOW_GAP)
        .collect();
    if window.is_empty() {
        return Err(Error::Analysis("no snapshots in the envelope window".into()));
    }
    let mut m_hat = f64::INFINITY;
    let mut c_hat = 0.0f64;
    let mut m1_hat = 0.0f64;
    let mut m2_hat = 0.0f64;
    for s in &window {
        let tau = t_hat - s.t;
        let scale = tau.cbrt();
        m_hat = m_hat.min((1.0 - s.u[node]) / scale);
        c_hat = c_hat.max(s.gap / scale);
        let (d1, d2) = derivative_norms(&s.u, &problem.grid);
        m1_hat = m1_hat.max(d1 * tau.powf(1.0 / 6.0));
        m2_hat = m2_hat.max(d2 * tau.powf(2.0 / 3.0));
    }
    let inequalities_hold = window.iter().all(|s| {
        let scale = (t_hat - s.t).cbrt();
        m_hat * scale <= 1.0 - s.u[node] && s.gap <= c_hat * scale
    });
    let finite = [m_hat, c_hat, m1_hat, m2_hat].iter().all(|v| v.is_finite());
    Ok(Envelopes {
        m_hat,
        c_hat,
        m1_hat,
        m2_hat,
        samples: window.len(),
        inequalities_hold,
        pass: finite && m_hat > 0.0 && m_hat <= c_hat,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FrameGeometry {
    /// Symmetric `y` range along the coordinate axis.
    Line,
    /// `y = |y| >= 0` about the origin of a ball, with measure `y^(n-1)`.
    Radial { dim: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSlice {
    pub t: f64,
    pub s: f64,
    /// Radius of the y-ball, `min(s, dist(a, boundary) e^(s/2))`.
    pub radius: f64,
    pub y: Vec<f64>,
    pub w: Vec<f64>,
}

impl FrameSlice {
    pub fn w_center(&self) -> f64 {
        let i = self.y.iter().position(|y| *y == 0.0).unwrap_or(0);
        self.w[i]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityFrame {
    pub center: f64,
    pub geometry: FrameGeometry,
    pub slices: Vec<FrameSlice>,
    pub skipped: Vec<String>,
}

impl SimilarityFrame {
    pub fn w_center_series(&self) -> Vec<(f64, f64)> {
        self.slices.iter().map(|sl| (sl.s, sl.w_center())).collect()
    }

    /// Samples outside `lower <= w <= e^(s/3)`, as `(slice, index)`.
    pub fn sandwich_violations(&self, lower: f64) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (k, sl) in self.slices.iter().enumerate() {
            let upper = (sl.s / 3.0).exp();
            for (j, &w) in sl.w.iter().enumerate() {
                if w < lower || w > upper {
                    out.push((k, j));
                }
            }
        }
        out
    }

    /// Slices in the final decade of `T - t`.
    pub fn final_decade(&self) -> &[FrameSlice] {
        let Some(last) = self.slices.last() else { return &self.slices };
        let start = last.s - std::f64::consts::LN_10;
        let first = self.slices.iter().position(|sl| sl.s >= start).unwrap_or(0);
        &self.slices[first..]
    }
}

/// Natural cubic spline through a snapshot on a uniform grid. On balls the
/// data is mirrored through the origin so the profile stays even in `r`.
struct ProfileSpline {
    start: f64,
    h: f64,
    values: Vec<f64>,
    second: Vec<f64>,
}

impl ProfileSpline {
    fn new(grid: &Grid, u: &[f64]) -> Result<ProfileSpline> {
        let h = grid.spacing();
        let (start, values): (f64, Vec<f64>) = match grid.domain() {
            DomainSpec::RadialBall { .. } => {
                let mut v: Vec<f64> = u[1..].iter().rev().copied().collect();
                v.extend_from_slice(u);
                (-grid.nodes()[grid.len() - 1], v)
            }
            DomainSpec::Interval { .. } => (0.0, u.to_vec()),
        };
        let n = values.len();
        let k = n - 2;
        let system = Tridiagonal { lower: vec![1.0; k], diag: vec![4.0; k], upper: vec![1.0; k] };
        let rhs: Vec<f64> =
            (1..n - 1).map(|i| 6.0 * (values[i + 1] - 2.0 * values[i] + values[i - 1]) / (h * h)).collect();
        let mut second = vec![0.0; n];
        second[1..n - 1].copy_from_slice(&system.solve(&rhs)?);
        Ok(ProfileSpline { start, h, values, second })
    }

    fn eval(&self, x: f64) -> f64 {
        let n = self.values.len();
        let pos = ((x - self.start) / self.h).clamp(0.0, (n - 1) as f64);
        let i = (pos.floor() as usize).min(n - 2);
        let b = pos - i as f64;
        let a = 1.0 - b;
        let (m0, m1) = (self.second[i], self.second[i + 1]);
        a * self.values[i]
            + b * self.values[i + 1]
            + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * self.h * self.h / 6.0
    }
}

/// Rescales every snapshot with gap below [`WINDOW_GAP`] about `center`.
///
/// Late snapshots put the whole similarity ball inside one grid cell, so the
/// profile is read from a cubic spline rather than linear interpolation; the
/// kink of a piecewise-linear profile at the node dominates the energy there.
pub fn rescale_similarity(traj: &Trajectory, t_hat: f64, center: f64, problem: &Problem) -> Result<SimilarityFrame> {
    let grid = &problem.grid;
    let h = grid.spacing();
    let (geometry, reach) = match *grid.domain() {
        DomainSpec::RadialBall { radius, dim } if center == 0.0 => (FrameGeometry::Radial { dim }, radius - h),
        DomainSpec::RadialBall { radius, .. } => (FrameGeometry::Line, center.min(radius - center) - h),
        DomainSpec::Interval { length } => (FrameGeometry::Line, center.min(length - center) - h),
    };
    let reach = reach.max(0.0);
    let mut slices = Vec::new();
    let mut skipped = Vec::new();
    for snap in traj.snapshots.iter().filter(|s| s.gap <= WINDOW_GAP) {
        let tau = t_hat - snap.t;
        if tau <= 0.0 {
            skipped.push(format!("snapshot at t = {} is not before T = {t_hat}", snap.t));
            continue;
        }
        let s = -tau.ln();
        let radius = s.min(reach * (s / 2.0).exp()).max(0.0);
        let k = FRAME_POINTS.max((radius / FRAME_SPACING).ceil() as usize);
        let y: Vec<f64> = match geometry {
            FrameGeometry::Radial { .. } => (0..=k).map(|j| radius * j as f64 / k as f64).collect(),
            FrameGeometry::Line => (0..=2 * k).map(|j| radius * (j as f64 - k as f64) / k as f64).collect(),
        };
        let sqrt_tau = tau.sqrt();
        let scale = tau.cbrt();
        let spline = ProfileSpline::new(grid, &snap.u)?;
        let w = y.iter().map(|&yy| (1.0 - spline.eval(center + yy * sqrt_tau)) / scale).collect();
        slices.push(FrameSlice { t: snap.t, s, radius, y, w });
    }
    if slices.is_empty() {
        return Err(Error::Analysis("no snapshots available for rescaling".into()));
    }
    Ok(SimilarityFrame { center, geometry, slices, skipped })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub s: Vec<f64>,
    pub energy: Vec<f64>,
    /// Allowed increase after each sample.
    pub tolerance: Vec<f64>,
    pub c_g: f64,
    pub c_p: f64,
    pub floor: f64,
    /// Samples treated as the initial transient.
    pub transient: usize,
    /// Indices `k` with `E(s_{k+1}) > E(s_k) + tol(s_k)` after the transient.
    pub violations: Vec<usize>,
    pub decay_ok: bool,
}

/// Trapezoid weights on a y-grid including the Gaussian `rho = e^(-|y|^2/4)`.
fn weighted_measure(y: &[f64], geometry: FrameGeometry) -> Vec<f64> {
    let n = y.len();
    if n < 2 {
        return vec![0.0; n];
    }
    (0..n)
        .map(|j| {
            let left = if j > 0 { y[j] - y[j - 1] } else { 0.0 };
            let right = if j + 1 < n { y[j + 1] - y[j] } else { 0.0 };
            let trap = 0.5 * (left + right);
            let rho = (-y[j] * y[j] / 4.0).exp();
            match geometry {
                FrameGeometry::Line => trap * rho,
                FrameGeometry::Radial { dim } => trap * rho * unit_sphere_area(dim) * y[j].powi(dim as i32 - 1),
            }
        })
        .collect()
}

fn gradient(y: &[f64], w: &[f64], geometry: FrameGeometry) -> Vec<f64> {
    let n = y.len();
    if n < 2 {
        return vec![0.0; n];
    }
    (0..n)
        .map(|j| {
            if j == 0 {
                match geometry {
                    FrameGeometry::Radial { .. } => 0.0,
                    FrameGeometry::Line => (w[1] - w[0]) / (y[1] - y[0]),
                }
            } else if j + 1 == n {
                (w[j] - w[j - 1]) / (y[j] - y[j - 1])
            } else {
                (w[j + 1] - w[j - 1]) / (y[j + 1] - y[j - 1])
            }
        })
        .collect()
}

/// `E[w](s) = 1/2 int rho |grad w|^2 - 1/6 int rho w^2 - lambda int rho f(a) / w`
/// over the ball `|y| < radius`.
pub fn slice_energy(slice: &FrameSlice, geometry: FrameGeometry, lambda_f: f64) -> Result<f64> {
    if let Some(j) = slice.w.iter().position(|w| w.is_nan() || *w <= 0.0) {
        return Err(Error::Analysis(format!(
            "rescaled profile not positive at y = {} (s = {})",
            slice.y[j], slice.s
        )));
    }
    let mu = weighted_measure(&slice.y, geometry);
    let grad = gradient(&slice.y, &slice.w, geometry);
    let mut e = 0.0;
    for j in 0..slice.y.len() {
        let w = slice.w[j];
        e += mu[j] * (0.5 * grad[j] * grad[j] - w * w / 6.0 - lambda_f / w);
    }
    Ok(e)
}

pub fn energy_of_frame(frame: &SimilarityFrame, problem: &Problem) -> Result<EnergyReport> {
    let n_slices = frame.slices.len();
    if n_slices < 5 {
        return Err(Error::Analysis(format!("energy needs at least 5 slices, got {n_slices}")));
    }
    let lambda_f = problem.spec.lambda * problem.spec.profile.value_at(frame.center);
    let s: Vec<f64> = frame.slices.iter().map(|sl| sl.s).collect();
    let energy = frame
        .slices
        .iter()
        .map(|sl| slice_energy(sl, frame.geometry, lambda_f))
        .collect::<Result<Vec<f64>>>()?;

    let dim = match frame.geometry {
        FrameGeometry::Line => 1,
        FrameGeometry::Radial { dim } => dim as i32,
    };
    let boundary_basis = |s: f64| s.powi(dim) * (-s * s / 4.0).exp();
    let pressure_basis = |s: f64| (-2.0 * s / 3.0).exp();

    // envelope constants from the first quarter, each covering half of the
    // largest observed increase
    let quarter = (n_slices / 4).max(1);
    let mut c_g = 0.0f64;
    let mut c_p = 0.0f64;
    for k in 0..quarter.min(n_slices - 1) {
        let rise = (energy[k + 1] - energy[k]).max(0.0);
        c_g = c_g.max(rise / (2.0 * boundary_basis(s[k])));
        c_p = c_p.max(rise / (2.0 * pressure_basis(s[k])));
    }
    let floor = 1e-9 * energy.iter().fold(0.0f64, |a, e| a.max(e.abs()));
    let tolerance: Vec<f64> =
        s.iter().map(|&sk| c_g * boundary_basis(sk) + c_p * pressure_basis(sk) + floor).collect();
    let transient = (n_slices as f64 * 0.2).ceil() as usize;
    let violations: Vec<usize> = (transient..n_slices - 1)
        .filter(|&k| energy[k + 1] > energy[k] + tolerance[k])
        .collect();
    Ok(EnergyReport {
        decay_ok: violations.is_empty(),
        s,
        energy,
        tolerance,
        c_g,
        c_p,
        floor,
        transient,
        violations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NondegeneracyVerdict {
    pub center: f64,
    pub w_final: f64,
    /// `w_final / (3 lambda f(a))^(1/3)`
    pub ratio: f64,
    /// Slope of `ln w(0, s)` against `s` over the final decade.
    pub log_slope: f64,
    /// `w(0, s)` stays bounded: the point behaves like a quenching point.
    pub bounded: bool,
}

/// Bounded-versus-divergent classification of `w(0, s)` over the final decade
/// of `T - t`; divergence means growth like `e^(s/3)`, i.e. the point does
/// not quench.
pub fn nondegeneracy_probe(frame: &SimilarityFrame, prediction: f64) -> Result<NondegeneracyVerdict> {
    let tail = frame.final_decade();
    let Some(last) = tail.last() else {
        return Err(Error::Analysis("empty similarity frame".into()));
    };
    let w_final = last.w_center();
    let log_slope = if tail.len() >= 2 {
        let xs: Vec<f64> = tail.iter().map(|sl| sl.s).collect();
        let ys: Vec<f64> = tail.iter().map(|sl| sl.w_center().ln()).collect();
        line(&xs, &ys)?.slope
    } else {
        0.0
    };
    let ratio = w_final / prediction;
    let bounded = ratio <= 3.0 && log_slope < 1.0 / 6.0;
    Ok(NondegeneracyVerdict { center: frame.center, w_final, ratio, log_slope, bounded })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuenchReport {
    pub time: QuenchTime,
    pub quench_set: QuenchSet,
    pub rate: RateFit,
    pub envelopes: Envelopes,
    pub time_bound: TimeBound,
    /// `T <= bound`, when the bound applies.
    pub time_bound_holds: Option<bool>,
}

/// Full analysis of a quenched trajectory about its argmax node.
pub fn analyze(problem: &Problem, traj: &Trajectory) -> Result<QuenchReport> {
    let time = estimate_quench_time(traj, problem.spec.controls.quench_gap)?;
    let quench_set = locate_quench_set(traj, problem)?;
    let a = quench_set.center;
    let rate = fit_rate(traj, time.t_hat, a, problem)?;
    let envelopes = check_envelopes(traj, time.t_hat, a, problem)?;
    let phi0 = principal_eigenpair(&problem.grid)?.phi;
    let time_bound = quench_time_upper_bound(problem, &phi0)?;
    let time_bound_holds = time_bound.value().map(|b| time.t_hat <= b);
    Ok(QuenchReport { time, quench_set, rate, envelopes, time_bound, time_bound_holds })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityAnalysis {
    pub frame: SimilarityFrame,
    pub energy: EnergyReport,
    pub prediction: f64,
    pub center_probe: NondegeneracyVerdict,
    pub control_probe: Option<NondegeneracyVerdict>,
    /// Probe verdicts agree with quench-set membership.
    pub consistent: bool,
}

/// Frame, energy series and nondegeneracy probes about the quench center and
/// an optional control point.
pub fn similarity_analysis(
    problem: &Problem,
    traj: &Trajectory,
    report: &QuenchReport,
    control: Option<f64>,
) -> Result<SimilarityAnalysis> {
    let t_hat = report.time.t_hat;
    let center = report.quench_set.center_x;
    let prediction = touchdown_amplitude(problem.spec.lambda, problem.profile[report.quench_set.center]);
    let frame = rescale_similarity(traj, t_hat, center, problem)?;
    let energy = energy_of_frame(&frame, problem)?;
    let center_probe = nondegeneracy_probe(&frame, prediction)?;
    let mut consistent = center_probe.bounded;
    let control_probe = match control {
        Some(x) => {
            let f = rescale_similarity(traj, t_hat, x, problem)?;
            let v = nondegeneracy_probe(&f, prediction)?;
            let node = (x / problem.grid.spacing()).round() as usize;
            consistent &= v.bounded == report.quench_set.contains(node);
            Some(v)
        }
        None => None,
    };
    Ok(SimilarityAnalysis { frame, energy, prediction, center_probe, control_probe, consistent })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementPair {
    pub coarse: f64,
    pub fine: f64,
    pub rel_diff: f64,
    pub flagged: bool,
}

/// Quenching time at resolution `N` and `2N`.
pub fn refine_quench_time(problem: &Problem) -> Result<RefinementPair> {
    let run = |p: &Problem| -> Result<f64> {
        let (traj, verdict) = integrate(p)?;
        if !matches!(verdict, RunVerdict::Quenched { .. }) {
            return Err(Error::Analysis(format!("run did not quench: {:?}", verdict.kind())));
        }
        Ok(estimate_quench_time(&traj, p.spec.controls.quench_gap)?.t_hat)
    };
    let coarse = run(problem)?;
    let fine_problem = Problem::new(problem.spec.with_resolution(2 * problem.spec.resolution))?;
    let fine = run(&fine_problem)?;
    let rel_diff = (coarse - fine).abs() / fine;
    Ok(RefinementPair { coarse, fine, rel_diff, flagged: rel_diff > REFINEMENT_TOL })
}

/// Builds a trajectory whose every interior node follows
/// `u = 1 - (3 lambda f (T - t))^(1/3)`; useful for checking the
/// post-processing against its own model.
pub fn synthetic_self_similar(problem: &Problem, t_quench: f64, gaps: &[f64]) -> Trajectory {
    use crate::parabolic::{Sample, Snapshot};
    let grid = &problem.grid;
    let lambda = problem.spec.lambda;
    let mut traj = Trajectory::default();
    for &g in gaps {
        let t = t_quench - g.powi(3) / (3.0 * lambda * problem.f_max);
        let values: Vec<f64> = (0..grid.len())
            .map(|i| {
                if grid.is_boundary(i) {
                    0.0
                } else {
                    1.0 - (3.0 * lambda * problem.profile[i] * (t_quench - t)).cbrt()
                }
            })
            .collect();
        let u = Field::from_vec_unchecked(values);
        let argmax = u.argmax();
        traj.samples.push(Sample {
            t,
            max_u: u[argmax],
            gap: 1.0 - u[argmax],
            argmax,
            location: grid.nodes()[argmax],
            ut_inf: lambda * problem.f_max / (g * g),
            dt: 0.0,
        });
        traj.snapshots.push(Snapshot { t, gap: 1.0 - u[argmax], u });
    }
    traj
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::ProblemSpec;
    use std::f64::consts::PI;

    fn geometric_gaps(hi: f64, lo: f64, count: usize) -> Vec<f64> {
        (0..count).map(|k| hi * (lo / hi).powf(k as f64 / (count - 1) as f64)).collect()
    }

    fn synthetic(lambda: f64) -> (Problem, Trajectory) {
        let p = Problem::new(ProblemSpec::unit_interval(lambda, 0.0, 64)).unwrap();
        let traj = synthetic_self_similar(&p, 0.04, &geometric_gaps(0.1, 1e-3, 25));
        (p, traj)
    }

    #[test]
    fn quench_time_of_exact_collapse() {
        let (_, traj) = synthetic(5.0);
        let q = estimate_quench_time(&traj, 1e-3).unwrap();
        assert!((q.t_hat - 0.04).abs() < 1e-6, "{}", q.t_hat);
        assert!(q.fit.r2 > 0.999999);
    }

    #[test]
    fn quench_time_needs_window() {
        let (_, traj) = synthetic(5.0);
        let short = Trajectory { samples: traj.samples[..5].to_vec(), snapshots: vec![] };
        assert!(matches!(estimate_quench_time(&short, 1e-3), Err(Error::Analysis(_))));
    }

    #[test]
    fn rate_of_exact_collapse() {
        let (p, traj) = synthetic(5.0);
        let r = fit_rate(&traj, 0.04, 32, &p).unwrap();
        assert!((r.exponent - 1.0 / 3.0).abs() < 1e-6);
        assert!((r.amplitude - 15f64.cbrt()).abs() < 1e-6);
        assert!((r.predicted_amplitude - 2.4662120743).abs() < 1e-9);
    }

    #[test]
    fn envelopes_of_exact_collapse() {
        let (p, traj) = synthetic(5.0);
        let e = check_envelopes(&traj, 0.04, 32, &p).unwrap();
        assert!((e.m_hat - 15f64.cbrt()).abs() < 1e-9);
        assert!((e.c_hat - 15f64.cbrt()).abs() < 1e-9);
        assert!(e.pass);
    }

    #[test]
    fn rescaling_inverts_exact_collapse() {
        let (p, traj) = synthetic(5.0);
        let frame = rescale_similarity(&traj, 0.04, 0.5, &p).unwrap();
        let k = 15f64.cbrt();
        for sl in &frame.slices {
            for w in &sl.w {
                assert!(((w - k) / k).abs() < 1e-6);
            }
        }
        let v = nondegeneracy_probe(&frame, k).unwrap();
        assert!(v.bounded);
        let off = rescale_similarity(&traj, 0.04, 0.3, &p).unwrap();
        assert!(nondegeneracy_probe(&off, k).unwrap().bounded);
    }

    #[test]
    fn constant_profile_energy() {
        let k = 15f64.cbrt();
        let y: Vec<f64> = (0..=400).map(|j| -40.0 + 0.2 * j as f64).collect();
        let slice = FrameSlice { t: 0.0, s: 40.0, radius: 40.0, w: vec![k; y.len()], y };
        let e = slice_energy(&slice, FrameGeometry::Line, 5.0).unwrap();
        let expected = -PI.sqrt() * 15f64.powf(2.0 / 3.0);
        assert!((e - expected).abs() < 1e-9, "{e} vs {expected}");
        assert!((expected + 10.780).abs() < 1e-3);

        let ones = FrameSlice { w: vec![1.0; slice.y.len()], ..slice.clone() };
        let e = slice_energy(&ones, FrameGeometry::Line, 0.0).unwrap();
        assert!((e + PI.sqrt() / 3.0).abs() < 1e-9);

        // half-line with the radial measure of R^1 gives the same integral
        let half: Vec<f64> = (0..=200).map(|j| 0.2 * j as f64).collect();
        let radial = FrameSlice { t: 0.0, s: 40.0, radius: 40.0, w: vec![1.0; half.len()], y: half };
        let e = slice_energy(&radial, FrameGeometry::Radial { dim: 1 }, 0.0).unwrap();
        assert!((e + PI.sqrt() / 3.0).abs() < 1e-9);

        let bad = FrameSlice { w: vec![0.0; ones.y.len()], ..ones };
        assert!(slice_energy(&bad, FrameGeometry::Line, 1.0).is_err());
    }

    #[test]
    fn time_bound_for_sine() {
        let p = Problem::new(ProblemSpec::unit_interval(10.0, 0.0, 512)).unwrap();
        let phi: Vec<f64> = p.grid.nodes().iter().map(|x| (PI * x).sin().max(0.0)).collect();
        let mut phi = phi;
        phi[512] = 0.0;
        let b = quench_time_upper_bound(&p, &phi).unwrap().value().unwrap();
        assert!((b - 1.0 / (30.0 - PI * PI)).abs() < 1e-4 * b);
        assert!((b - 0.04968).abs() < 1e-5);

        let p5 = Problem::new(ProblemSpec::unit_interval(5.0, 0.0, 512)).unwrap();
        let b5 = quench_time_upper_bound(&p5, &phi).unwrap().value().unwrap();
        assert!((b5 - 1.0 / (15.0 - PI * PI)).abs() < 1e-4 * b5);
        assert!((b5 - 0.1949).abs() < 1e-4);

        let p3 = Problem::new(ProblemSpec::unit_interval(3.0, 0.0, 512)).unwrap();
        assert!(matches!(
            quench_time_upper_bound(&p3, &phi).unwrap(),
            TimeBound::NotApplicable { .. }
        ));
        assert!(quench_time_upper_bound(&p3, &vec![0.0; 513]).is_err());
    }

    #[test]
    fn quench_set_of_flat_profile_is_whole_interior() {
        let (p, traj) = synthetic(5.0);
        let q = locate_quench_set(&traj, &p).unwrap();
        assert_eq!(q.nodes.len(), 63);
        assert_eq!(q.center, 1);
    }
}
