//! Geometry, grids, discrete operators and problem descriptions.
//!
//! Two geometries are supported: an interval `[0, L]` with homogeneous
//! Dirichlet data at both ends, and a radially symmetric ball of radius `R` in
//! `n` dimensions, discretized on `r in [0, R]` with a symmetry condition at
//! the origin and Dirichlet data at `r = R`.

use std::ops::{Deref, Range};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Tridiagonal;

/// Smallest resolution accepted by [`build_grid`].
pub const MIN_RESOLUTION: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainSpec {
    Interval { length: f64 },
    RadialBall { radius: f64, dim: u32 },
}

impl DomainSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            DomainSpec::Interval { length } if !(length > 0.0 && length.is_finite()) => {
                Err(Error::Config(format!("interval length must be positive, got {length}")))
            }
            DomainSpec::RadialBall { radius, .. } if !(radius > 0.0 && radius.is_finite()) => {
                Err(Error::Config(format!("ball radius must be positive, got {radius}")))
            }
            DomainSpec::RadialBall { dim: 0, .. } => {
                Err(Error::Config("ball dimension must be at least 1".into()))
            }
            _ => Ok(()),
        }
    }

    /// Length of the discretized coordinate range.
    pub fn extent(&self) -> f64 {
        match *self {
            DomainSpec::Interval { length } => length,
            DomainSpec::RadialBall { radius, .. } => radius,
        }
    }

    /// Spatial dimension of the underlying domain.
    pub fn dim(&self) -> u32 {
        match *self {
            DomainSpec::Interval { .. } => 1,
            DomainSpec::RadialBall { dim, .. } => dim,
        }
    }

    /// n-dimensional volume |Omega|.
    pub fn volume(&self) -> f64 {
        match *self {
            DomainSpec::Interval { length } => length,
            DomainSpec::RadialBall { radius, dim } => {
                unit_sphere_area(dim) * radius.powi(dim as i32) / dim as f64
            }
        }
    }

    pub fn tag(&self) -> String {
        match *self {
            DomainSpec::Interval { length } => format!("interval(L={length})"),
            DomainSpec::RadialBall { radius, dim } => format!("ball(R={radius},n={dim})"),
        }
    }
}

/// Surface area of the unit sphere in R^n, `2 pi^(n/2) / Gamma(n/2)`.
pub fn unit_sphere_area(dim: u32) -> f64 {
    fn gamma_half(n: u32) -> f64 {
        // Gamma(n / 2)
        match n {
            1 => std::f64::consts::PI.sqrt(),
            2 => 1.0,
            _ => (n as f64 / 2.0 - 1.0) * gamma_half(n - 2),
        }
    }
    2.0 * std::f64::consts::PI.powf(dim as f64 / 2.0) / gamma_half(dim)
}

/// Uniform node set over `[0, extent]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    domain: DomainSpec,
    nodes: Vec<f64>,
    h: f64,
    boundary: Vec<usize>,
    interior: Vec<usize>,
}

pub fn build_grid(domain: DomainSpec, resolution: usize) -> Result<Grid> {
    domain.validate()?;
    if resolution < MIN_RESOLUTION {
        return Err(Error::Config(format!(
            "resolution must be at least {MIN_RESOLUTION}, got {resolution}"
        )));
    }
    Ok(Grid::uniform(domain, resolution))
}

impl Grid {
    /// Builds the grid without the minimum-resolution check. Used for the
    /// tiny hand-checkable grids in tests and by [`build_grid`].
    pub(crate) fn uniform(domain: DomainSpec, resolution: usize) -> Grid {
        let extent = domain.extent();
        let h = extent / resolution as f64;
        let nodes: Vec<f64> = (0..=resolution)
            .map(|i| if i == resolution { extent } else { i as f64 * h })
            .collect();
        let (boundary, interior) = match domain {
            DomainSpec::Interval { .. } => (vec![0, resolution], (1..resolution).collect()),
            DomainSpec::RadialBall { .. } => (vec![resolution], (0..resolution).collect()),
        };
        Grid { domain, nodes, h, boundary, interior }
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn resolution(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn boundary(&self) -> &[usize] {
        &self.boundary
    }

    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    /// Node indices carrying unknowns; always a contiguous range.
    pub fn unknowns(&self) -> Range<usize> {
        let n = self.resolution();
        match self.domain {
            DomainSpec::Interval { .. } => 1..n,
            DomainSpec::RadialBall { .. } => 0..n,
        }
    }

    pub fn is_boundary(&self, i: usize) -> bool {
        self.boundary.contains(&i)
    }

    /// Distance from a coordinate to the Dirichlet boundary.
    pub fn distance_to_boundary(&self, x: f64) -> f64 {
        match self.domain {
            DomainSpec::Interval { length } => x.min(length - x),
            DomainSpec::RadialBall { radius, .. } => radius - x,
        }
    }

    /// Stencil row of the discrete Laplacian at node `i`, as coefficients of
    /// `(u[i-1], u[i], u[i+1])`.
    fn stencil(&self, i: usize) -> (f64, f64, f64) {
        let h2 = self.h * self.h;
        match self.domain {
            DomainSpec::Interval { .. } => (1.0 / h2, -2.0 / h2, 1.0 / h2),
            DomainSpec::RadialBall { dim, .. } => {
                let n = dim as f64;
                if i == 0 {
                    // symmetry limit: Delta u(0) = n u_rr(0)
                    (0.0, -2.0 * n / h2, 2.0 * n / h2)
                } else {
                    let drift = (n - 1.0) / (2.0 * self.nodes[i] * self.h);
                    (1.0 / h2 - drift, -2.0 / h2, 1.0 / h2 + drift)
                }
            }
        }
    }

    /// `-Delta` restricted to the unknowns, with the Dirichlet values
    /// eliminated.
    pub fn neg_laplacian(&self) -> Tridiagonal {
        let range = self.unknowns();
        let m = range.len();
        let mut lower = vec![0.0; m];
        let mut diag = vec![0.0; m];
        let mut upper = vec![0.0; m];
        for (j, i) in range.enumerate() {
            let (a, b, c) = self.stencil(i);
            lower[j] = -a;
            diag[j] = -b;
            upper[j] = -c;
        }
        lower[0] = 0.0;
        upper[m - 1] = 0.0;
        Tridiagonal { lower, diag, upper }
    }

    /// Trapezoid weights for `integral over Omega`, including the radial
    /// measure `omega_{n-1} r^{n-1}` on balls.
    pub fn quadrature_weights(&self) -> Vec<f64> {
        let last = self.resolution();
        let measure = match self.domain {
            DomainSpec::Interval { .. } => None,
            DomainSpec::RadialBall { dim, .. } => Some((dim, unit_sphere_area(dim))),
        };
        self.nodes
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let trap = if i == 0 || i == last { 0.5 * self.h } else { self.h };
                match measure {
                    None => trap,
                    Some((dim, area)) => trap * area * x.powi(dim as i32 - 1),
                }
            })
            .collect()
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.quadrature_weights().iter().zip(values).map(|(w, v)| w * v).sum()
    }

    /// Linear interpolation of nodal values at coordinate `x`, clamped to
    /// the grid.
    pub fn interpolate(&self, values: &[f64], x: f64) -> f64 {
        let last = self.resolution();
        let pos = (x / self.h).clamp(0.0, last as f64);
        let i = (pos.floor() as usize).min(last - 1);
        let t = pos - i as f64;
        values[i] * (1.0 - t) + values[i + 1] * t
    }
}

/// Nodal values aligned with a [`Grid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Field(Vec<f64>);

impl Field {
    pub fn new(values: Vec<f64>) -> Result<Field> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite field value at node {i}")));
        }
        Ok(Field(values))
    }

    pub fn zeros(len: usize) -> Field {
        Field(vec![0.0; len])
    }

    pub(crate) fn from_vec_unchecked(values: Vec<f64>) -> Field {
        Field(values)
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Index of the largest value; ties go to the smallest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.0.iter().enumerate() {
            if v > self.0[best] {
                best = i;
            }
        }
        best
    }

    pub fn sup_distance(&self, other: &Field) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

impl Deref for Field {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Discrete Laplacian at every node. Boundary entries are set to zero.
pub fn discrete_laplacian(u: &[f64], grid: &Grid) -> Result<Field> {
    if u.len() != grid.len() {
        return Err(Error::Shape { expected: grid.len(), got: u.len() });
    }
    let mut out = vec![0.0; u.len()];
    for &i in grid.interior() {
        let (a, b, c) = grid.stencil(i);
        let left = if i > 0 { a * u[i - 1] } else { 0.0 };
        out[i] = left + b * u[i] + c * u[i + 1];
    }
    Field::new(out)
}

/// Spatial profile `f(x)` of the permittivity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProfileSpec {
    Constant { value: f64 },
    /// `base + amplitude * exp(-|x - center|^2 / width^2)`
    Bump { base: f64, amplitude: f64, center: f64, width: f64 },
    Affine { base: f64, slope: f64 },
}

/// Sign information about a profile at the boundary; different results
/// assume different hypotheses on `f`, so both are recorded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileFlags {
    /// `f' > 0` at every node.
    pub gradient_positive: bool,
    /// Outward normal derivative `df/dn <= 0` at every boundary node.
    pub normal_derivative_nonpositive: bool,
}

impl ProfileSpec {
    pub fn value_at(&self, x: f64) -> f64 {
        match *self {
            ProfileSpec::Constant { value } => value,
            ProfileSpec::Bump { base, amplitude, center, width } => {
                base + amplitude * (-(x - center).powi(2) / (width * width)).exp()
            }
            ProfileSpec::Affine { base, slope } => base + slope * x,
        }
    }

    pub fn derivative_at(&self, x: f64) -> f64 {
        match *self {
            ProfileSpec::Constant { .. } => 0.0,
            ProfileSpec::Bump { amplitude, center, width, .. } => {
                let w2 = width * width;
                -2.0 * (x - center) / w2 * amplitude * (-(x - center).powi(2) / w2).exp()
            }
            ProfileSpec::Affine { slope, .. } => slope,
        }
    }

    pub fn flags(&self, grid: &Grid) -> ProfileFlags {
        let gradient_positive = grid.nodes().iter().all(|&x| self.derivative_at(x) > 0.0);
        let normal_derivative_nonpositive = match *grid.domain() {
            DomainSpec::Interval { length } => {
                -self.derivative_at(0.0) <= 0.0 && self.derivative_at(length) <= 0.0
            }
            DomainSpec::RadialBall { radius, .. } => self.derivative_at(radius) <= 0.0,
        };
        ProfileFlags { gradient_positive, normal_derivative_nonpositive }
    }

    pub fn tag(&self) -> String {
        match *self {
            ProfileSpec::Constant { value } => format!("const({value})"),
            ProfileSpec::Bump { base, amplitude, center, width } => {
                format!("bump({base},{amplitude},{center},{width})")
            }
            ProfileSpec::Affine { base, slope } => format!("affine({base},{slope})"),
        }
    }
}

/// Samples the profile on the grid and returns it with `c0 = min f`.
pub fn evaluate_profile(profile: &ProfileSpec, grid: &Grid) -> Result<(Field, f64)> {
    if let ProfileSpec::Bump { width, .. } = profile {
        if *width <= 0.0 {
            return Err(Error::Config(format!("bump width must be positive, got {width}")));
        }
    }
    let values: Vec<f64> = grid.nodes().iter().map(|&x| profile.value_at(x)).collect();
    let field = Field::new(values)?;
    let (worst, c0) = field
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc });
    if c0 <= 0.0 {
        return Err(Error::Config(format!(
            "profile must be positive; f = {c0} at node {worst} (x = {})",
            grid.nodes()[worst]
        )));
    }
    Ok((field, c0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialSpec {
    Zero,
    /// `factor * u_min` where `u_min` is the minimal steady state.
    ScaledSteady { factor: f64 },
    /// `amplitude * exp(-|x - center|^2 / width^2) * b(x)` with the cutoff
    /// `b = 4x(L - x)/L^2` on intervals and `b = 1 - r^2/R^2` on balls.
    BumpInit { amplitude: f64, center: f64, width: f64 },
}

impl InitialSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            InitialSpec::Zero => Ok(()),
            InitialSpec::ScaledSteady { factor } if !(0.0..1.0).contains(&factor) => {
                Err(Error::Config(format!("steady scaling factor must lie in [0, 1), got {factor}")))
            }
            InitialSpec::BumpInit { amplitude, width, .. }
                if !(0.0..1.0).contains(&amplitude) || width <= 0.0 =>
            {
                Err(Error::Config(format!(
                    "bump initial data needs amplitude in [0, 1) and positive width, got {amplitude}, {width}"
                )))
            }
            _ => Ok(()),
        }
    }

    /// Initial field for the variants that need no steady solve.
    pub fn bump_field(&self, grid: &Grid) -> Option<Field> {
        let extent = grid.domain().extent();
        match *self {
            InitialSpec::Zero => Some(Field::zeros(grid.len())),
            InitialSpec::BumpInit { amplitude, center, width } => {
                let values = grid
                    .nodes()
                    .iter()
                    .enumerate()
                    .map(|(i, &x)| {
                        if grid.is_boundary(i) {
                            return 0.0;
                        }
                        let cutoff = match grid.domain() {
                            DomainSpec::Interval { .. } => 4.0 * x * (extent - x) / (extent * extent),
                            DomainSpec::RadialBall { .. } => 1.0 - (x / extent).powi(2),
                        };
                        amplitude * (-(x - center).powi(2) / (width * width)).exp() * cutoff
                    })
                    .collect();
                Some(Field::from_vec_unchecked(values))
            }
            InitialSpec::ScaledSteady { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverControls {
    pub dt_max: f64,
    /// Safety factor on the reaction and diffusion step limits.
    pub dt_safety: f64,
    /// Gap `1 - max u` at which a run is declared quenched.
    pub quench_gap: f64,
    /// Tolerance on steady residuals and on `|u_t|` for a global verdict.
    pub steady_tol: f64,
    /// Minimum gap for a global verdict.
    pub global_gap: f64,
    pub t_max: f64,
    /// Time between regular snapshots.
    pub snapshot_interval: f64,
    /// Snapshots per decade of gap once the gap drops below 0.2.
    pub snapshots_per_decade: u32,
}

impl Default for SolverControls {
    fn default() -> Self {
        SolverControls {
            dt_max: 1e-3,
            dt_safety: 0.02,
            quench_gap: 1e-3,
            steady_tol: 1e-8,
            global_gap: 0.05,
            t_max: 10.0,
            snapshot_interval: 0.05,
            snapshots_per_decade: 10,
        }
    }
}

impl SolverControls {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dt_max", self.dt_max),
            ("dt_safety", self.dt_safety),
            ("quench_gap", self.quench_gap),
            ("steady_tol", self.steady_tol),
            ("global_gap", self.global_gap),
            ("t_max", self.t_max),
            ("snapshot_interval", self.snapshot_interval),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.snapshots_per_decade == 0 {
            return Err(Error::Config("snapshots_per_decade must be positive".into()));
        }
        if !(self.quench_gap < self.global_gap && self.global_gap < 1.0) {
            return Err(Error::Config(format!(
                "need quench_gap < global_gap < 1, got {} and {}",
                self.quench_gap, self.global_gap
            )));
        }
        Ok(())
    }
}

/// One instance of the parabolic problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub domain: DomainSpec,
    pub resolution: usize,
    pub profile: ProfileSpec,
    pub lambda: f64,
    pub pressure: f64,
    pub initial: InitialSpec,
    pub controls: SolverControls,
}

impl ProblemSpec {
    /// Interval `[0, 1]`, `f = 1`, zero initial data, default controls.
    pub fn unit_interval(lambda: f64, pressure: f64, resolution: usize) -> ProblemSpec {
        ProblemSpec {
            domain: DomainSpec::Interval { length: 1.0 },
            resolution,
            profile: ProfileSpec::Constant { value: 1.0 },
            lambda,
            pressure,
            initial: InitialSpec::Zero,
            controls: SolverControls::default(),
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_pressure(mut self, pressure: f64) -> Self {
        self.pressure = pressure;
        self
    }

    pub fn with_resolution(mut self, resolution: usize) -> Self {
        self.resolution = resolution;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        if self.resolution < MIN_RESOLUTION {
            return Err(Error::Config(format!(
                "resolution must be at least {MIN_RESOLUTION}, got {}",
                self.resolution
            )));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.pressure >= 0.0 && self.pressure.is_finite()) {
            return Err(Error::Config(format!("pressure must be >= 0, got {}", self.pressure)));
        }
        self.initial.validate()?;
        self.controls.validate()
    }
}

/// A validated spec together with its grid and sampled profile.
#[derive(Debug, Clone)]
pub struct Problem {
    pub spec: ProblemSpec,
    pub grid: Grid,
    pub profile: Field,
    pub c0: f64,
    pub f_max: f64,
    pub flags: ProfileFlags,
}

impl Problem {
    pub fn new(spec: ProblemSpec) -> Result<Problem> {
        spec.validate()?;
        let grid = build_grid(spec.domain, spec.resolution)?;
        let (profile, c0) = evaluate_profile(&spec.profile, &grid)?;
        let f_max = profile.max();
        let flags = spec.profile.flags(&grid);
        Ok(Problem { spec, grid, profile, c0, f_max, flags })
    }

    /// `lambda f_i / (1 - u)^2 + P`
    #[inline]
    pub fn forcing(&self, i: usize, u: f64) -> f64 {
        let gap = 1.0 - u;
        self.spec.lambda * self.profile[i] / (gap * gap) + self.spec.pressure
    }
}

/// Outcome of [`check_admissible_initial`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Admissibility {
    pub passed: bool,
    /// Node with the smallest value of `Delta u0 + lambda f/(1-u0)^2 + P`.
    pub worst_node: usize,
    pub worst_value: f64,
    pub slack: f64,
    pub reason: Option<String>,
}

impl Admissibility {
    pub fn into_result(self, grid: &Grid) -> Result<Admissibility> {
        if self.passed {
            Ok(self)
        } else {
            Err(Error::Inadmissible {
                node: self.worst_node,
                x: grid.nodes()[self.worst_node],
                reason: self.reason.unwrap_or_default(),
            })
        }
    }

    /// The discrete condition holds without slack, so time monotonicity of
    /// the semi-implicit scheme is exact.
    pub fn strictly_monotone(&self) -> bool {
        self.passed && self.worst_value >= 0.0
    }
}

/// Checks `0 <= u0 < 1`, `u0 = 0` on the boundary and
/// `Delta u0 + lambda f / (1 - u0)^2 + P >= -slack` at interior nodes, with
/// `slack = 10 h^2 (lambda max f + P)`.
pub fn check_admissible_initial(u0: &[f64], problem: &Problem) -> Result<Admissibility> {
    let grid = &problem.grid;
    if u0.len() != grid.len() {
        return Err(Error::Shape { expected: grid.len(), got: u0.len() });
    }
    let h = grid.spacing();
    let slack = 10.0 * h * h * (problem.spec.lambda * problem.f_max + problem.spec.pressure);
    let fail = |node: usize, value: f64, reason: String| Admissibility {
        passed: false,
        worst_node: node,
        worst_value: value,
        slack,
        reason: Some(reason),
    };
    for (i, &v) in u0.iter().enumerate() {
        if !(0.0..1.0).contains(&v) {
            return Ok(fail(i, v, format!("u0 = {v} outside [0, 1)")));
        }
        if grid.is_boundary(i) && v != 0.0 {
            return Ok(fail(i, v, format!("u0 = {v} on a Dirichlet node")));
        }
    }
    let lap = discrete_laplacian(u0, grid)?;
    let (worst_node, worst_value) = grid
        .interior()
        .iter()
        .map(|&i| (i, lap[i] + problem.forcing(i, u0[i])))
        .fold((grid.interior()[0], f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
    if worst_value < -slack {
        return Ok(fail(
            worst_node,
            worst_value,
            format!("Delta u0 + forcing = {worst_value} below -{slack}"),
        ));
    }
    Ok(Admissibility { passed: true, worst_node, worst_value, slack, reason: None })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn tiny_grids() {
        let g = Grid::uniform(DomainSpec::Interval { length: 1.0 }, 4);
        assert_eq!(g.nodes(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(g.spacing(), 0.25);
        assert_eq!(g.boundary(), &[0, 4]);
        assert_eq!(g.interior(), &[1, 2, 3]);

        let b = Grid::uniform(DomainSpec::RadialBall { radius: 1.0, dim: 2 }, 4);
        assert_eq!(b.nodes(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(b.boundary(), &[4]);
        assert_eq!(b.interior(), &[0, 1, 2, 3]);

        let g8 = Grid::uniform(DomainSpec::Interval { length: 1.0 }, 8);
        assert_eq!(g8.spacing(), 0.125);
    }

    #[test]
    fn build_grid_rejects_bad_input() {
        assert!(build_grid(DomainSpec::Interval { length: 1.0 }, 8).is_err());
        assert!(build_grid(DomainSpec::Interval { length: 0.0 }, 32).is_err());
        assert!(build_grid(DomainSpec::RadialBall { radius: 1.0, dim: 0 }, 32).is_err());
        assert!(build_grid(DomainSpec::RadialBall { radius: -1.0, dim: 2 }, 32).is_err());
    }

    #[test]
    fn refinement_halves_spacing_and_nests() {
        let d = DomainSpec::Interval { length: 1.0 };
        let a = build_grid(d, 32).unwrap();
        let b = build_grid(d, 64).unwrap();
        assert_eq!(a.spacing(), 2.0 * b.spacing());
        for (i, x) in a.nodes().iter().enumerate() {
            assert_eq!(*x, b.nodes()[2 * i]);
        }
    }

    #[test]
    fn laplacian_of_interval_quadratic_is_minus_one() {
        let g = build_grid(DomainSpec::Interval { length: 1.0 }, 64).unwrap();
        let u: Vec<f64> = g.nodes().iter().map(|x| x * (1.0 - x) / 2.0).collect();
        let lap = discrete_laplacian(&u, &g).unwrap();
        for &i in g.interior() {
            assert!(close(lap[i], -1.0, 1e-9), "node {i}: {}", lap[i]);
        }
        let zero = discrete_laplacian(&vec![0.0; g.len()], &g).unwrap();
        assert!(zero.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn laplacian_of_radial_quadratic_is_minus_two_n() {
        for dim in 1..=3 {
            let g = build_grid(DomainSpec::RadialBall { radius: 1.0, dim }, 64).unwrap();
            let u: Vec<f64> = g.nodes().iter().map(|r| 1.0 - r * r).collect();
            let lap = discrete_laplacian(&u, &g).unwrap();
            for &i in g.interior() {
                assert!(close(lap[i], -2.0 * dim as f64, 1e-9), "n={dim} node {i}: {}", lap[i]);
            }
        }
    }

    #[test]
    fn laplacian_shape_mismatch() {
        let g = build_grid(DomainSpec::Interval { length: 1.0 }, 16).unwrap();
        assert!(matches!(discrete_laplacian(&[0.0; 3], &g), Err(Error::Shape { .. })));
    }

    #[test]
    fn neg_laplacian_matches_stencil() {
        let g = build_grid(DomainSpec::RadialBall { radius: 1.0, dim: 3 }, 32).unwrap();
        let u: Vec<f64> = g.nodes().iter().map(|r| (1.0 - r * r) * (1.0 + r)).collect();
        let lap = discrete_laplacian(&u, &g).unwrap();
        let mv = g.neg_laplacian().apply(&u[g.unknowns()]);
        for (j, i) in g.unknowns().enumerate() {
            assert!(close(mv[j], -lap[i], 1e-9));
        }
    }

    #[test]
    fn profiles() {
        let g = build_grid(DomainSpec::Interval { length: 1.0 }, 64).unwrap();
        let (f, c0) = evaluate_profile(&ProfileSpec::Constant { value: 1.0 }, &g).unwrap();
        assert!(f.iter().all(|v| *v == 1.0));
        assert_eq!(c0, 1.0);

        let bump = ProfileSpec::Bump { base: 1.0, amplitude: 1.0, center: 0.5, width: 0.2 };
        let (f, c0) = evaluate_profile(&bump, &g).unwrap();
        let edge = 1.0 + (-0.25f64 / 0.04).exp();
        assert!(close(c0, edge, 1e-15));
        assert!(close(f[0], f[64], 1e-15));
        assert!(close(c0, 1.0019305, 1e-6));
        assert!(bump.flags(&g).normal_derivative_nonpositive);
        assert!(!bump.flags(&g).gradient_positive);

        let err = evaluate_profile(&ProfileSpec::Affine { base: 1.0, slope: -2.0 }, &g).unwrap_err();
        assert!(err.to_string().contains("node 64"), "{err}");

        let rising = ProfileSpec::Affine { base: 1.0, slope: 1.0 };
        assert!(rising.flags(&g).gradient_positive);
        assert!(!rising.flags(&g).normal_derivative_nonpositive);
    }

    #[test]
    fn profile_sampling_is_pure() {
        let g = build_grid(DomainSpec::RadialBall { radius: 2.0, dim: 3 }, 100).unwrap();
        let p = ProfileSpec::Bump { base: 0.5, amplitude: 0.3, center: 0.1, width: 0.7 };
        let a = evaluate_profile(&p, &g).unwrap();
        let b = evaluate_profile(&p, &g).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn volumes_and_weights() {
        use std::f64::consts::PI;
        assert!(close(unit_sphere_area(1), 2.0, 1e-15));
        assert!(close(unit_sphere_area(2), 2.0 * PI, 1e-14));
        assert!(close(unit_sphere_area(3), 4.0 * PI, 1e-14));
        let d = DomainSpec::RadialBall { radius: 1.0, dim: 2 };
        assert!(close(d.volume(), PI, 1e-14));
        let g = build_grid(d, 400).unwrap();
        let vol = g.integrate(&vec![1.0; g.len()]);
        assert!(close(vol, PI, 1e-4));
    }

    #[test]
    fn admissibility() {
        let spec = ProblemSpec::unit_interval(3.0, 1.0, 32);
        let p = Problem::new(spec).unwrap();
        let ok = check_admissible_initial(&vec![0.0; p.grid.len()], &p).unwrap();
        assert!(ok.passed && ok.strictly_monotone());

        let p0 = Problem::new(ProblemSpec::unit_interval(0.0, 0.0, 32)).unwrap();
        let mut spike = vec![0.0; p0.grid.len()];
        spike[10] = 0.999;
        let bad = check_admissible_initial(&spike, &p0).unwrap();
        assert!(!bad.passed);
        assert_eq!(bad.worst_node, 10);
        assert!(bad.into_result(&p0.grid).is_err());

        let mut edge = vec![0.0; p0.grid.len()];
        edge[0] = 0.1;
        assert!(!check_admissible_initial(&edge, &p0).unwrap().passed);
        let mut high = vec![0.0; p0.grid.len()];
        high[5] = 1.0;
        assert!(!check_admissible_initial(&high, &p0).unwrap().passed);
    }

    #[test]
    fn spec_validation() {
        let mut s = ProblemSpec::unit_interval(1.0, 0.0, 32);
        assert!(s.validate().is_ok());
        s.pressure = -1.0;
        assert!(s.validate().is_err());
        let mut s = ProblemSpec::unit_interval(1.0, 0.0, 32);
        s.controls.quench_gap = 0.1;
        assert!(s.validate().is_err());
        let mut s = ProblemSpec::unit_interval(1.0, 0.0, 32);
        s.initial = InitialSpec::ScaledSteady { factor: 1.0 };
        assert!(s.validate().is_err());
    }
}
