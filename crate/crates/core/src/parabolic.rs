//! Time integration and run classification.
//!
//! Diffusion is taken implicitly and the reaction explicitly:
//!
//! ```text
//! (I - dt Delta) u_new = u + dt (lambda f / (1 - u)^2 + P)
//! ```
//!
//! The step is limited by `sigma g^3 / (lambda max f)`, which follows the
//! collapse `dg/dt ~ -lambda f / g^2` of the gap `g = 1 - max u` near
//! touchdown, and by `10 sigma h^2` for accuracy of the diffusion.

use serde::{Deserialize, Serialize};

use crate::domain::{check_admissible_initial, discrete_laplacian, Field, InitialSpec, Problem};
use crate::elliptic::{solve_minimal_steady, steady_residual, SteadyResult};
use crate::error::{Error, Result};
use crate::linalg::{Tridiagonal, TridiagonalLu};

/// Steps below this size signal imminent touchdown.
pub const DT_UNDERFLOW: f64 = 1e-15;
/// Tolerance of the nodewise time-monotonicity check.
pub const MONOTONE_TOL: f64 = 1e-12;
/// Gap below which snapshots follow the gap instead of the clock.
pub const REFINE_GAP: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub t: f64,
    pub u: Field,
    /// Size of the step that produced this state (zero initially).
    pub dt: f64,
    pub steps: usize,
    pub gap: f64,
    /// `max |u_new - u| / dt` over the last step.
    pub ut_inf: f64,
}

impl SimState {
    pub fn initial(u: Field, ut_inf: f64) -> SimState {
        let gap = 1.0 - u.max();
        SimState { t: 0.0, u, dt: 0.0, steps: 0, gap, ut_inf }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub max_u: f64,
    pub gap: f64,
    pub argmax: usize,
    /// Coordinate of `argmax`.
    pub location: f64,
    pub ut_inf: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub gap: f64,
    pub u: Field,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub snapshots: Vec<Snapshot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum RunVerdict {
    Quenched { t_stop: f64, gap: f64, final_state: Field, dt_underflow: bool },
    Global { t: f64, steady: Field, residual: f64 },
    Undecided { t: f64, gap: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictKind {
    Quenched,
    Global,
    Undecided,
}

impl RunVerdict {
    pub fn kind(&self) -> VerdictKind {
        match self {
            RunVerdict::Quenched { .. } => VerdictKind::Quenched,
            RunVerdict::Global { .. } => VerdictKind::Global,
            RunVerdict::Undecided { .. } => VerdictKind::Undecided,
        }
    }
}

impl VerdictKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            VerdictKind::Quenched => "quenched",
            VerdictKind::Global => "global",
            VerdictKind::Undecided => "undecided",
        }
    }
}

/// Initial field described by the problem's [`InitialSpec`].
pub fn build_initial(problem: &Problem) -> Result<Field> {
    if let Some(u) = problem.spec.initial.bump_field(&problem.grid) {
        return Ok(u);
    }
    let InitialSpec::ScaledSteady { factor } = problem.spec.initial else {
        unreachable!("bump_field covers the other variants")
    };
    match solve_minimal_steady(problem)? {
        SteadyResult::Exists { u_min, .. } => Field::new(u_min.iter().map(|v| factor * v).collect()),
        SteadyResult::NotFound { .. } => Err(Error::Config(
            "scaled steady initial data requested but no steady state exists".into(),
        )),
    }
}

/// `Delta u + lambda f / (1 - u)^2 + P` at interior nodes, zero elsewhere.
fn time_derivative(problem: &Problem, u: &[f64]) -> Result<Vec<f64>> {
    let lap = discrete_laplacian(u, &problem.grid)?;
    let mut out = vec![0.0; u.len()];
    for &i in problem.grid.interior() {
        out[i] = lap[i] + problem.forcing(i, u[i]);
    }
    Ok(out)
}

/// Reason a step could not be taken.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepFailure {
    /// The step size fell below [`DT_UNDERFLOW`]; touchdown is imminent.
    DtUnderflow { dt: f64 },
}

/// Semi-implicit stepper bound to one problem.
pub struct Stepper<'a> {
    problem: &'a Problem,
    neg_lap: Tridiagonal,
    cached: Option<(u64, TridiagonalLu)>,
    enforce_monotone: bool,
    rhs: Vec<f64>,
}

impl<'a> Stepper<'a> {
    pub fn new(problem: &'a Problem, enforce_monotone: bool) -> Stepper<'a> {
        let neg_lap = problem.grid.neg_laplacian();
        let m = neg_lap.len();
        Stepper { problem, neg_lap, cached: None, enforce_monotone, rhs: vec![0.0; m] }
    }

    /// `min(dt_max, sigma g^3 / (lambda max f), 10 sigma h^2)`
    pub fn proposed_dt(&self, gap: f64) -> f64 {
        let c = &self.problem.spec.controls;
        let h = self.problem.grid.spacing();
        let mut dt = c.dt_max.min(10.0 * c.dt_safety * h * h);
        let reaction = self.problem.spec.lambda * self.problem.f_max;
        if reaction > 0.0 {
            dt = dt.min(c.dt_safety * gap.powi(3) / reaction);
        }
        dt
    }

    fn factor(&mut self, dt: f64) -> Result<&TridiagonalLu> {
        let key = dt.to_bits();
        if self.cached.as_ref().map(|c| c.0) != Some(key) {
            let lu = self.neg_lap.shifted_identity(dt).factor()?;
            self.cached = Some((key, lu));
        }
        Ok(&self.cached.as_ref().expect("just filled").1)
    }

    /// Advances one step. The proposed step is halved until it keeps
    /// `max u < 1` and, for admissible data, nodewise monotonicity.
    pub fn step(&mut self, state: &SimState) -> Result<std::result::Result<SimState, StepFailure>> {
        let problem = self.problem;
        let range = problem.grid.unknowns();
        let u = &state.u;
        let mut dt = self.proposed_dt(state.gap);
        loop {
            if dt < DT_UNDERFLOW {
                return Ok(Err(StepFailure::DtUnderflow { dt }));
            }
            let mut rhs = std::mem::take(&mut self.rhs);
            for (j, i) in range.clone().enumerate() {
                rhs[j] = u[i] + dt * problem.forcing(i, u[i]);
            }
            self.factor(dt)?.solve_in_place(&mut rhs);

            let mut ok = true;
            let mut max_u = f64::NEG_INFINITY;
            let mut ut_inf = 0.0f64;
            for (j, i) in range.clone().enumerate() {
                let v = rhs[j];
                let du = v - u[i];
                if !v.is_finite() || v >= 1.0 || (self.enforce_monotone && du < -MONOTONE_TOL) {
                    ok = false;
                    break;
                }
                max_u = max_u.max(v);
                ut_inf = ut_inf.max(du.abs());
            }
            if ok {
                let mut next = u.to_vec();
                next[range.clone()].copy_from_slice(&rhs);
                self.rhs = rhs;
                return Ok(Ok(SimState {
                    t: state.t + dt,
                    u: Field::from_vec_unchecked(next),
                    dt,
                    steps: state.steps + 1,
                    gap: 1.0 - max_u,
                    ut_inf: ut_inf / dt,
                }));
            }
            self.rhs = rhs;
            dt *= 0.5;
        }
    }
}

/// One step from `state` with monotonicity enforced.
pub fn step(state: &SimState, problem: &Problem) -> Result<std::result::Result<SimState, StepFailure>> {
    Stepper::new(problem, true).step(state)
}

/// Collects samples and snapshots while a run progresses.
struct Recorder<'a> {
    problem: &'a Problem,
    traj: Trajectory,
    sample_interval: f64,
    last_sample_t: f64,
    next_snapshot_t: f64,
    next_level: u32,
}

impl<'a> Recorder<'a> {
    fn new(problem: &'a Problem) -> Recorder<'a> {
        let c = &problem.spec.controls;
        Recorder {
            problem,
            traj: Trajectory::default(),
            sample_interval: c.t_max / 4000.0,
            last_sample_t: f64::NEG_INFINITY,
            next_snapshot_t: 0.0,
            next_level: 0,
        }
    }

    fn gap_level(&self, k: u32) -> f64 {
        let per = self.problem.spec.controls.snapshots_per_decade as f64;
        REFINE_GAP * 10f64.powf(-(k as f64) / per)
    }

    fn sample(&mut self, s: &SimState) {
        let argmax = s.u.argmax();
        self.traj.samples.push(Sample {
            t: s.t,
            max_u: s.u[argmax],
            gap: s.gap,
            argmax,
            location: self.problem.grid.nodes()[argmax],
            ut_inf: s.ut_inf,
            dt: s.dt,
        });
        self.last_sample_t = s.t;
    }

    fn snapshot(&mut self, s: &SimState) {
        if self.traj.snapshots.last().map(|l| l.t) == Some(s.t) {
            return;
        }
        self.traj.snapshots.push(Snapshot { t: s.t, gap: s.gap, u: s.u.clone() });
    }

    fn observe(&mut self, s: &SimState) {
        if s.gap < REFINE_GAP || s.t - self.last_sample_t >= self.sample_interval {
            self.sample(s);
        }
        let mut take = false;
        if s.t >= self.next_snapshot_t {
            take = true;
            let dt = self.problem.spec.controls.snapshot_interval;
            while self.next_snapshot_t <= s.t {
                self.next_snapshot_t += dt;
            }
        }
        while s.gap <= self.gap_level(self.next_level) {
            take = true;
            self.next_level += 1;
        }
        if take {
            self.snapshot(s);
        }
    }

    fn finish(mut self, s: &SimState) -> Trajectory {
        if self.traj.samples.last().map(|l| l.t) != Some(s.t) {
            self.sample(s);
        }
        self.snapshot(s);
        self.traj
    }
}

/// Runs the problem until it quenches, settles, or reaches `t_max`.
pub fn integrate(problem: &Problem) -> Result<(Trajectory, RunVerdict)> {
    let u0 = build_initial(problem)?;
    let admissible = check_admissible_initial(&u0, problem)?.into_result(&problem.grid)?;
    let ut0 = time_derivative(problem, &u0)?.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let controls = problem.spec.controls;

    let mut stepper = Stepper::new(problem, admissible.strictly_monotone());
    let mut recorder = Recorder::new(problem);
    let mut state = SimState::initial(u0, ut0);
    recorder.observe(&state);

    let verdict = loop {
        if state.gap <= controls.quench_gap {
            break RunVerdict::Quenched {
                t_stop: state.t,
                gap: state.gap,
                final_state: state.u.clone(),
                dt_underflow: false,
            };
        }
        if state.steps > 0 && state.ut_inf <= controls.steady_tol && state.gap >= controls.global_gap {
            let residual = steady_residual(problem, &state.u)?;
            break RunVerdict::Global { t: state.t, steady: state.u.clone(), residual };
        }
        if state.t >= controls.t_max {
            break RunVerdict::Undecided { t: state.t, gap: state.gap };
        }
        match stepper.step(&state)? {
            Ok(next) => {
                state = next;
                recorder.observe(&state);
            }
            Err(StepFailure::DtUnderflow { .. }) => {
                break RunVerdict::Quenched {
                    t_stop: state.t,
                    gap: state.gap,
                    final_state: state.u.clone(),
                    dt_underflow: true,
                };
            }
        }
    };
    Ok((recorder.finish(&state), verdict))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassificationRoute {
    /// Decided by the minimal steady state alone.
    Steady,
    /// Decided by time integration.
    Integrated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub verdict: RunVerdict,
    pub route: ClassificationRoute,
    pub steady: Option<SteadyResult>,
    pub trajectory: Option<Trajectory>,
    pub note: Option<String>,
}

/// Quench/global verdict. A minimal steady state dominating the initial data
/// settles the question without time stepping; otherwise the problem is
/// integrated.
pub fn classify(problem: &Problem) -> Result<Classification> {
    let u0 = build_initial(problem)?;
    let steady = solve_minimal_steady(problem);
    let mut note = None;
    match &steady {
        Ok(SteadyResult::Exists { u_min, residual, .. }) => {
            if u0.iter().zip(u_min.iter()).all(|(a, b)| a <= b) {
                return Ok(Classification {
                    verdict: RunVerdict::Global { t: 0.0, steady: u_min.clone(), residual: *residual },
                    route: ClassificationRoute::Steady,
                    steady: steady.ok(),
                    trajectory: None,
                    note: None,
                });
            }
        }
        Ok(SteadyResult::NotFound { .. }) => {}
        Err(e) => note = Some(format!("steady solve undecided: {e}")),
    }
    let (trajectory, mut verdict) = integrate(problem)?;
    if let (Ok(SteadyResult::NotFound { .. }), RunVerdict::Global { t, .. }) = (&steady, &verdict) {
        note = Some("time integration settled although no minimal steady state was found".into());
        verdict = RunVerdict::Undecided { t: *t, gap: 1.0 - trajectory.samples.last().map_or(0.0, |s| s.max_u) };
    }
    Ok(Classification {
        verdict,
        route: ClassificationRoute::Integrated,
        steady: steady.ok(),
        trajectory: Some(trajectory),
        note,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{DomainSpec, ProblemSpec, ProfileSpec};

    fn problem(lambda: f64, pressure: f64, n: usize) -> Problem {
        Problem::new(ProblemSpec::unit_interval(lambda, pressure, n)).unwrap()
    }

    #[test]
    fn zero_state_is_equilibrium() {
        let p = problem(0.0, 0.0, 32);
        let s = SimState::initial(Field::zeros(p.grid.len()), 0.0);
        let next = step(&s, &p).unwrap().unwrap();
        assert!(next.u.iter().all(|v| *v == 0.0));
        assert!(next.dt > 0.0);
    }

    #[test]
    fn pressure_lifts_interior_only() {
        let p = problem(0.0, 1.0, 32);
        let s = SimState::initial(Field::zeros(p.grid.len()), 1.0);
        let next = step(&s, &p).unwrap().unwrap();
        assert_eq!(next.u[0], 0.0);
        assert_eq!(next.u[32], 0.0);
        assert!(p.grid.interior().iter().all(|&i| next.u[i] > 0.0));
    }

    #[test]
    fn reaction_limited_step() {
        let mut spec = ProblemSpec::unit_interval(5.0, 0.0, 32);
        spec.controls.dt_safety = 0.1;
        let p = Problem::new(spec).unwrap();
        let stepper = Stepper::new(&p, true);
        let dt = stepper.proposed_dt(1e-2);
        assert!(dt <= 0.1 * 1e-6 / 5.0 * (1.0 + 1e-12));
        assert!((dt - 2e-8).abs() < 1e-20);
    }

    #[test]
    fn dt_underflow_is_signalled() {
        let mut spec = ProblemSpec::unit_interval(5.0, 0.0, 32);
        spec.controls.dt_safety = 1e-3;
        let p = Problem::new(spec).unwrap();
        let mut u = vec![0.0; p.grid.len()];
        u[16] = 1.0 - 1e-5;
        let s = SimState { t: 0.0, gap: 1e-5, u: Field::new(u).unwrap(), dt: 0.0, steps: 0, ut_inf: 0.0 };
        let out = Stepper::new(&p, false).step(&s).unwrap();
        assert!(matches!(out, Err(StepFailure::DtUnderflow { .. })));
    }

    #[test]
    fn linear_heat_limit_is_torsion() {
        let p = problem(0.0, 1.0, 64);
        let (traj, verdict) = integrate(&p).unwrap();
        let RunVerdict::Global { steady, .. } = verdict else { panic!("{verdict:?}") };
        assert!((steady.max() - 0.125).abs() < 1e-6);
        assert!(traj.samples.windows(2).all(|w| w[1].t > w[0].t));
    }

    #[test]
    fn supercritical_quenches() {
        let p = problem(5.0, 0.0, 64);
        let (traj, verdict) = integrate(&p).unwrap();
        let RunVerdict::Quenched { gap, dt_underflow, .. } = verdict else { panic!("{verdict:?}") };
        assert!(gap <= 1e-3);
        assert!(!dt_underflow);
        let last: Vec<f64> = traj.samples.iter().rev().take(5).map(|s| s.ut_inf).collect();
        assert!(last.windows(2).all(|w| w[0] > w[1]), "{last:?}");
        assert!(traj.samples.windows(2).all(|w| w[1].max_u >= w[0].max_u));
    }

    #[test]
    fn symmetric_data_stays_symmetric() {
        let mut spec = ProblemSpec::unit_interval(5.0, 0.0, 64);
        spec.profile = ProfileSpec::Bump { base: 1.0, amplitude: 0.5, center: 0.5, width: 0.2 };
        let p = Problem::new(spec).unwrap();
        let (traj, _) = integrate(&p).unwrap();
        for snap in &traj.snapshots {
            for i in 0..=64 {
                assert!((snap.u[i] - snap.u[64 - i]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn classify_routes() {
        let c = classify(&problem(0.5, 0.0, 64)).unwrap();
        assert_eq!(c.route, ClassificationRoute::Steady);
        assert_eq!(c.verdict.kind(), VerdictKind::Global);

        let c = classify(&problem(0.0, 0.0, 64)).unwrap();
        let RunVerdict::Global { steady, .. } = &c.verdict else { panic!() };
        assert!(steady.iter().all(|v| *v == 0.0));

        let c = classify(&problem(5.0, 0.0, 64)).unwrap();
        assert_eq!(c.route, ClassificationRoute::Integrated);
        assert_eq!(c.verdict.kind(), VerdictKind::Quenched);
    }

    #[test]
    fn inadmissible_data_is_rejected() {
        let mut spec = ProblemSpec::unit_interval(0.0, 0.0, 64);
        spec.initial = InitialSpec::BumpInit { amplitude: 0.9, center: 0.5, width: 0.05 };
        let p = Problem::new(spec).unwrap();
        assert!(matches!(integrate(&p), Err(Error::Inadmissible { .. })));
    }

    #[test]
    fn scaled_steady_initial_data() {
        let mut spec = ProblemSpec::unit_interval(0.5, 0.0, 64);
        spec.initial = InitialSpec::ScaledSteady { factor: 0.5 };
        let p = Problem::new(spec).unwrap();
        let u0 = build_initial(&p).unwrap();
        assert!(check_admissible_initial(&u0, &p).unwrap().passed);
    }

    #[test]
    fn radial_runs_keep_dirichlet_node() {
        let mut spec = ProblemSpec::unit_interval(5.0, 0.0, 64);
        spec.domain = DomainSpec::RadialBall { radius: 1.0, dim: 2 };
        let p = Problem::new(spec).unwrap();
        let (traj, verdict) = integrate(&p).unwrap();
        assert_eq!(verdict.kind(), VerdictKind::Quenched);
        for s in &traj.snapshots {
            assert_eq!(s.u[64], 0.0);
            assert!(s.u.iter().all(|v| (0.0..1.0).contains(v)));
        }
    }
}
