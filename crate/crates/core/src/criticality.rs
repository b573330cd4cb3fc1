//! Critical parameters and parameter sweeps.
//!
//! The critical voltage `lambda*_P` is located by bisection on the run verdict
//! with `u0 = 0`: a probe that settles lies below it, a probe that quenches
//! above. `P*` has no independent numerical definition here; it is taken as the
//! quench threshold in `P` at a tiny fixed voltage and labelled operational.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::{InitialSpec, Problem, ProblemSpec};
use crate::elliptic::{lambda_bounds, LambdaBounds, SpectralData};
use crate::error::{Error, Result};
use crate::fit::line;
use crate::parabolic::{classify, integrate, RunVerdict, VerdictKind};
use crate::quench::estimate_quench_time;

/// Default relative bracket width.
pub const DEFAULT_TOL: f64 = 1e-3;
/// Classification horizon in units of `1 / mu0`.
pub const HORIZON_FACTOR: f64 = 100.0;
/// Relative margin added above the analytic upper bound.
pub const BRACKET_MARGIN: f64 = 0.05;
/// `lambda_tiny / mu0` for the operational `P*`.
pub const TINY_LAMBDA_FACTOR: f64 = 1e-4;
/// Step-size safety factor used by classification probes.
pub const PROBE_DT_SAFETY: f64 = 0.5;
const MAX_BISECTIONS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchParameter {
    Lambda,
    Pressure,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub value: f64,
    pub verdict: VerdictKind,
    /// Horizon of the decisive attempt.
    pub t_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalityResult {
    pub parameter: SearchParameter,
    /// The parameter held fixed (`P` for a `lambda` search and vice versa).
    pub fixed: f64,
    pub estimate: f64,
    /// `(global side, quenched side)`
    pub bracket: (f64, f64),
    pub log: Vec<Probe>,
    pub bounds: Option<LambdaBounds>,
    pub mu0: f64,
    pub horizon: f64,
    pub converged: bool,
    pub horizon_limited: bool,
    /// `P >= mu0`: the search was not run.
    pub no_admissible_lambda: bool,
    pub label: String,
}

impl CriticalityResult {
    pub fn relative_width(&self) -> f64 {
        (self.bracket.1 - self.bracket.0) / self.bracket.1
    }
}

/// Verdict of `spec` with `u0 = 0` under the probe controls, doubling the
/// horizon once on an undecided outcome.
pub fn probe_verdict(spec: &ProblemSpec, horizon: f64) -> Result<Probe> {
    let mut spec = *spec;
    spec.initial = InitialSpec::Zero;
    spec.controls.dt_safety = PROBE_DT_SAFETY;
    let mut t_max = horizon;
    for attempt in 0..2 {
        spec.controls.t_max = t_max;
        let verdict = classify(&Problem::new(spec)?)?.verdict.kind();
        if verdict != VerdictKind::Undecided || attempt == 1 {
            return Ok(Probe { value: f64::NAN, verdict, t_max });
        }
        t_max *= 2.0;
    }
    unreachable!()
}

struct Bisection<'a> {
    oracle: &'a dyn Fn(f64) -> Result<Probe>,
    log: Vec<Probe>,
    horizon_limited: bool,
}

impl<'a> Bisection<'a> {
    fn new(oracle: &'a dyn Fn(f64) -> Result<Probe>) -> Self {
        Bisection { oracle, log: Vec::new(), horizon_limited: false }
    }

    fn probe(&mut self, value: f64) -> Result<VerdictKind> {
        let mut p = (self.oracle)(value)?;
        p.value = value;
        self.log.push(p);
        Ok(p.verdict)
    }

    /// Shrinks `(lo, hi)` until its relative width is at most `tol`.
    ///
    /// Undecided probes split the bracket into `[lo, und_lo]`, the undecided
    /// stretch, and `[und_hi, hi]`; the outer pieces keep being bisected from
    /// the decided ends until the bracket is narrow enough or both pieces are
    /// exhausted.
    fn run(&mut self, mut lo: f64, mut hi: f64, tol: f64) -> Result<(f64, f64, bool)> {
        let at_lo = self.probe(lo)?;
        let at_hi = self.probe(hi)?;
        if at_lo != VerdictKind::Global || at_hi != VerdictKind::Quenched {
            return Err(Error::Config(format!(
                "bracket endpoints classify as {} at {lo} and {} at {hi}",
                at_lo.as_str(),
                at_hi.as_str()
            )));
        }
        let mut undecided: Option<(f64, f64)> = None;
        for _ in 0..MAX_BISECTIONS {
            if (hi - lo) / hi <= tol {
                return Ok((lo, hi, true));
            }
            let target = match undecided {
                None => 0.5 * (lo + hi),
                Some((ulo, uhi)) => {
                    let (below, above) = (ulo - lo, hi - uhi);
                    if below.max(above) <= 0.25 * tol * hi {
                        return Ok((lo, hi, false));
                    }
                    if above >= below {
                        0.5 * (uhi + hi)
                    } else {
                        0.5 * (lo + ulo)
                    }
                }
            };
            match self.probe(target)? {
                VerdictKind::Global => lo = target,
                VerdictKind::Quenched => hi = target,
                VerdictKind::Undecided => {
                    self.horizon_limited = true;
                    undecided = Some(match undecided {
                        None => (target, target),
                        Some((a, b)) => (a.min(target), b.max(target)),
                    });
                }
            }
            // decided probes can overtake the undecided stretch
            if let Some((a, b)) = undecided {
                let (a, b) = (a.max(lo), b.min(hi));
                undecided = (a < b || (a == b && a > lo && a < hi)).then_some((a, b));
            }
        }
        Ok((lo, hi, (hi - lo) / hi <= tol))
    }
}

fn horizon_for(mu0: f64) -> f64 {
    HORIZON_FACTOR / mu0
}

/// `lambda*_P` by bisection between zero and the analytic upper bound.
pub fn find_lambda_star(template: &ProblemSpec, pressure: f64, tol: f64) -> Result<CriticalityResult> {
    find_lambda_star_with(template, pressure, tol, None)
}

/// As [`find_lambda_star`], with an operational `P*` for the lower bound.
pub fn find_lambda_star_with(
    template: &ProblemSpec,
    pressure: f64,
    tol: f64,
    operational_p_star: Option<f64>,
) -> Result<CriticalityResult> {
    let base = template.with_pressure(pressure);
    let problem = Problem::new(base)?;
    let spectral = SpectralData::compute(&problem)?;
    let bounds = lambda_bounds(pressure, &spectral, problem.c0, problem.f_max, operational_p_star);
    let horizon = horizon_for(spectral.mu0);
    let mut result = CriticalityResult {
        parameter: SearchParameter::Lambda,
        fixed: pressure,
        estimate: f64::NAN,
        bracket: (0.0, 0.0),
        log: Vec::new(),
        bounds: Some(bounds.clone()),
        mu0: spectral.mu0,
        horizon,
        converged: false,
        horizon_limited: false,
        no_admissible_lambda: bounds.no_admissible_lambda,
        label: format!("lambda* at P = {pressure}"),
    };
    if bounds.no_admissible_lambda {
        return Ok(result);
    }
    let hi = bounds.upper_l22.min(bounds.upper_p33) * (1.0 + BRACKET_MARGIN);
    let oracle = move |lambda: f64| probe_verdict(&base.with_lambda(lambda), horizon);
    let mut search = Bisection::new(&oracle);
    let (lo, hi, converged) = search.run(0.0, hi, tol)?;
    result.bracket = (lo, hi);
    result.estimate = 0.5 * (lo + hi);
    result.converged = converged;
    result.horizon_limited = search.horizon_limited;
    result.log = search.log;
    Ok(result)
}

/// Operational `P*`: the quench threshold in `P` at `lambda = 1e-4 mu0`.
pub fn find_p_star(template: &ProblemSpec, tol: f64) -> Result<CriticalityResult> {
    let problem = Problem::new(*template)?;
    let spectral = SpectralData::compute(&problem)?;
    let lambda = TINY_LAMBDA_FACTOR * spectral.mu0;
    let base = template.with_lambda(lambda);
    let horizon = horizon_for(spectral.mu0);
    let oracle = move |p: f64| probe_verdict(&base.with_pressure(p), horizon);
    let mut search = Bisection::new(&oracle);
    let (lo, hi, converged) = search.run(0.0, spectral.mu0, tol)?;
    let estimate = 0.5 * (lo + hi);
    if estimate > spectral.mu0 {
        return Err(Error::Analysis(format!("operational P* = {estimate} exceeds mu0 = {}", spectral.mu0)));
    }
    Ok(CriticalityResult {
        parameter: SearchParameter::Pressure,
        fixed: lambda,
        estimate,
        bracket: (lo, hi),
        log: search.log,
        bounds: None,
        mu0: spectral.mu0,
        horizon,
        converged,
        horizon_limited: search.horizon_limited,
        no_admissible_lambda: false,
        label: format!("operational P* at lambda_tiny = {lambda}"),
    })
}

/// Identity of a sweep run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepKey {
    pub lambda: f64,
    pub pressure: f64,
    pub domain: String,
    pub profile: String,
    pub resolution: usize,
}

impl SweepKey {
    pub fn of(spec: &ProblemSpec) -> SweepKey {
        SweepKey {
            lambda: spec.lambda,
            pressure: spec.pressure,
            domain: spec.domain.tag(),
            profile: spec.profile.tag(),
            resolution: spec.resolution,
        }
    }

    /// SHA-256 of the key's canonical text, in hex.
    pub fn hash(&self) -> String {
        let text = format!(
            "{:016x}|{:016x}|{}|{}|{}",
            self.lambda.to_bits(),
            self.pressure.to_bits(),
            self.domain,
            self.profile,
            self.resolution
        );
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub key: SweepKey,
    pub hash: String,
    pub verdict: VerdictKind,
    pub t_hat: Option<f64>,
    /// Digest of the verdict and quenching time.
    pub digest: String,
    pub seconds: f64,
    pub note: Option<String>,
}

impl SweepRecord {
    pub fn new(key: SweepKey, verdict: VerdictKind, t_hat: Option<f64>, seconds: f64, note: Option<String>) -> Self {
        let hash = key.hash();
        let digest_text = format!("{hash}|{}|{:016x}", verdict.as_str(), t_hat.map_or(0, f64::to_bits));
        let digest = hex::encode(Sha256::digest(digest_text.as_bytes()));
        SweepRecord { key, hash, verdict, t_hat, digest, seconds, note }
    }
}

/// Integrates one configuration and extracts `T` when it quenches.
pub fn run_record(spec: &ProblemSpec) -> Result<SweepRecord> {
    let start = Instant::now();
    let problem = Problem::new(*spec)?;
    let (traj, verdict) = integrate(&problem)?;
    let (t_hat, note) = match verdict {
        RunVerdict::Quenched { .. } => match estimate_quench_time(&traj, spec.controls.quench_gap) {
            Ok(q) => (Some(q.t_hat), None),
            Err(e) => (None, Some(e.to_string())),
        },
        _ => (None, None),
    };
    Ok(SweepRecord::new(SweepKey::of(spec), verdict.kind(), t_hat, start.elapsed().as_secs_f64(), note))
}

/// Runs every spec concurrently; output order follows the input.
pub fn run_records(specs: &[ProblemSpec]) -> Result<Vec<SweepRecord>> {
    specs.par_iter().map(run_record).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// Parameter range of the fit.
    pub range: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaSweep {
    pub pressure: f64,
    pub records: Vec<SweepRecord>,
    pub excluded: Vec<String>,
    pub fit: Option<ScalingFit>,
    /// `T` strictly decreasing in `lambda` over the quenched points.
    pub monotone: bool,
}

/// `T(lambda)` at fixed `P`, with a log-log slope over the top decade.
pub fn sweep_t_vs_lambda(lambdas: &[f64], pressure: f64, template: &ProblemSpec) -> Result<LambdaSweep> {
    let mut sorted = lambdas.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let specs: Vec<ProblemSpec> =
        sorted.iter().map(|&l| template.with_lambda(l).with_pressure(pressure)).collect();
    let records = run_records(&specs)?;
    Ok(summarize_lambda_sweep(pressure, records))
}

pub fn summarize_lambda_sweep(pressure: f64, records: Vec<SweepRecord>) -> LambdaSweep {
    let mut excluded = Vec::new();
    let mut points = Vec::new();
    for r in &records {
        match r.t_hat {
            Some(t) if r.verdict == VerdictKind::Quenched => points.push((r.key.lambda, t)),
            _ => excluded.push(format!(
                "lambda = {}: {}{}",
                r.key.lambda,
                r.verdict.as_str(),
                r.note.as_deref().map(|n| format!(" ({n})")).unwrap_or_default()
            )),
        }
    }
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    let monotone = points.windows(2).all(|w| w[1].1 < w[0].1);
    let fit = points.last().and_then(|&(top, _)| {
        let window: Vec<_> = points.iter().filter(|p| p.0 >= top / 10.0 * (1.0 - 1e-12)).collect();
        if window.len() < 2 {
            return None;
        }
        let xs: Vec<f64> = window.iter().map(|p| p.0.ln()).collect();
        let ys: Vec<f64> = window.iter().map(|p| p.1.ln()).collect();
        line(&xs, &ys).ok().map(|f| ScalingFit {
            slope: f.slope,
            intercept: f.intercept,
            r2: f.r2,
            range: (window[0].0, top),
        })
    });
    LambdaSweep { pressure, records, excluded, fit, monotone }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityViolation {
    /// Which parameter increases between the two cells.
    pub along: SearchParameter,
    pub from: (f64, f64),
    pub to: (f64, f64),
    pub t_from: Option<f64>,
    pub t_to: Option<f64>,
    pub seconds: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityMatrix {
    pub lambdas: Vec<f64>,
    pub pressures: Vec<f64>,
    /// `cells[i][j]` is the run at `lambdas[i]`, `pressures[j]`.
    pub cells: Vec<Vec<SweepRecord>>,
    pub violations: Vec<MonotonicityViolation>,
    pub pass: bool,
}

/// `T` over a `lambda x P` grid; `T` must fall strictly along both axes.
pub fn monotonicity_matrix(lambdas: &[f64], pressures: &[f64], template: &ProblemSpec) -> Result<MonotonicityMatrix> {
    let sort = |v: &[f64]| {
        let mut v = v.to_vec();
        v.sort_by(f64::total_cmp);
        v
    };
    let lambdas = sort(lambdas);
    let pressures = sort(pressures);
    let specs: Vec<ProblemSpec> = lambdas
        .iter()
        .flat_map(|&l| pressures.iter().map(move |&p| template.with_lambda(l).with_pressure(p)))
        .collect();
    let flat = run_records(&specs)?;
    let cells: Vec<Vec<SweepRecord>> = flat.chunks(pressures.len().max(1)).map(<[SweepRecord]>::to_vec).collect();

    let mut violations = Vec::new();
    let mut check = |along, a: &SweepRecord, b: &SweepRecord| {
        let same = a.key == b.key;
        let ok = match (a.t_hat, b.t_hat) {
            (Some(ta), Some(tb)) => if same { ta == tb } else { tb < ta },
            _ => false,
        };
        if !ok {
            violations.push(MonotonicityViolation {
                along,
                from: (a.key.lambda, a.key.pressure),
                to: (b.key.lambda, b.key.pressure),
                t_from: a.t_hat,
                t_to: b.t_hat,
                seconds: (a.seconds, b.seconds),
            });
        }
    };
    for row in &cells {
        for w in row.windows(2) {
            check(SearchParameter::Pressure, &w[0], &w[1]);
        }
    }
    for pair in cells.windows(2) {
        for (below, above) in pair[0].iter().zip(&pair[1]) {
            check(SearchParameter::Lambda, below, above);
        }
    }
    // a lone cell still has to quench
    if cells.len() == 1 && pressures.len() == 1 && cells[0][0].t_hat.is_none() {
        check(SearchParameter::Lambda, &cells[0][0], &cells[0][0]);
    }
    let pass = violations.is_empty();
    Ok(MonotonicityMatrix { lambdas, pressures, cells, violations, pass })
}
