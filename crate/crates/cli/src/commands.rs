//! One function per subcommand. Each writes its artifacts and `manifest.json`
//! into the output directory and returns the manifest.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use memsq_core::criticality::{
    find_lambda_star_with, find_p_star, run_record, summarize_lambda_sweep, CriticalityResult, SweepKey,
};
use memsq_core::elliptic::{lambda_bounds, solve_minimal_steady, SpectralData, SteadyResult};
use memsq_core::parabolic::{integrate, RunVerdict, Trajectory};
use memsq_core::quench::{
    analyze, estimate_quench_time, similarity_analysis, QuenchReport, SimilarityAnalysis, REFINEMENT_TOL, WINDOW_GAP,
};
use memsq_core::{Problem, ProblemSpec};

use crate::config::{Config, ConfigError};
use crate::error::{CliError, Result};
use crate::manifest::{finite, CriticalSummary, RunManifest, SweepSummary};
use crate::output::{create_dir, write_csv, write_run_outputs, Cell, MANIFEST_JSON};
use crate::store::{spawn_writer, SweepStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Simulate,
    Steady,
    Eigen,
    Bounds,
    Critical,
    Pstar,
    Sweep,
    Rate,
    Similarity,
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Steady => "steady",
            Command::Eigen => "eigen",
            Command::Bounds => "bounds",
            Command::Critical => "critical",
            Command::Pstar => "pstar",
            Command::Sweep => "sweep",
            Command::Rate => "rate",
            Command::Similarity => "similarity",
            Command::Report => "report",
        }
    }
}

pub struct Context {
    pub config: Config,
    pub config_path: PathBuf,
    pub out: PathBuf,
}

impl Context {
    fn spec(&self) -> ProblemSpec {
        self.config.spec
    }

    fn manifest(&self, command: Command) -> RunManifest {
        RunManifest::new(command.name(), self.config.spec, self.config.command.clone())
    }

    fn config_error(&self, message: impl Into<String>) -> CliError {
        CliError::Config {
            path: self.config_path.clone(),
            error: ConfigError { line: None, message: message.into() },
        }
    }

    fn pressures(&self) -> Vec<f64> {
        let p = &self.config.command.pressures;
        if p.is_empty() {
            vec![self.config.spec.pressure]
        } else {
            p.clone()
        }
    }
}

pub struct Outcome {
    pub manifest: RunManifest,
    /// Some verdict in the command's output is undecided.
    pub undecided: bool,
    pub summary: Vec<String>,
}

pub fn execute(command: Command, ctx: &Context) -> Result<Outcome> {
    let start = Instant::now();
    create_dir(&ctx.out)?;
    let mut outcome = match command {
        Command::Simulate => simulate(ctx, command, false),
        Command::Report => simulate(ctx, command, true),
        Command::Similarity => simulate(ctx, command, false),
        Command::Rate => rate(ctx),
        Command::Steady => steady(ctx),
        Command::Eigen => eigen(ctx),
        Command::Bounds => bounds(ctx),
        Command::Critical => critical(ctx),
        Command::Pstar => pstar(ctx),
        Command::Sweep => sweep(ctx),
    }?;
    outcome.manifest.seconds = start.elapsed().as_secs_f64();
    outcome.manifest.files.push(MANIFEST_JSON.to_string());
    outcome.manifest.write(&ctx.out.join(MANIFEST_JSON))?;
    Ok(outcome)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("n/a".into(), |v| format!("{v:.6}"))
}

struct RunPieces {
    traj: Trajectory,
    verdict: RunVerdict,
    report: Option<QuenchReport>,
    similarity: Option<SimilarityAnalysis>,
}

fn run_and_analyze(problem: &Problem, control: Option<f64>, with_similarity: bool, notes: &mut Vec<String>) -> Result<RunPieces> {
    let (traj, verdict) = integrate(problem)?;
    let mut report = None;
    let mut similarity = None;
    if matches!(verdict, RunVerdict::Quenched { .. }) {
        match analyze(problem, &traj) {
            Ok(r) => {
                if with_similarity {
                    match similarity_analysis(problem, &traj, &r, control) {
                        Ok(s) => similarity = Some(s),
                        Err(e) => notes.push(format!("similarity analysis skipped: {e}")),
                    }
                }
                report = Some(r);
            }
            Err(e) => notes.push(format!("quench analysis skipped: {e}")),
        }
    }
    Ok(RunPieces { traj, verdict, report, similarity })
}

fn fill_run_headline(m: &mut RunManifest, pieces: &RunPieces, summary: &mut Vec<String>) {
    let h = &mut m.headline;
    m.verdict = Some(pieces.verdict.kind().as_str().to_string());
    match &pieces.verdict {
        RunVerdict::Quenched { t_stop, gap, dt_underflow, .. } => {
            h.t_stop = Some(*t_stop);
            h.final_gap = Some(*gap);
            if *dt_underflow {
                m.notes.push("stopped on time-step underflow before reaching quench_gap".into());
            }
        }
        RunVerdict::Global { t, steady, residual } => {
            h.t_stop = Some(*t);
            h.steady_max = Some(steady.max());
            h.steady_residual = finite(*residual);
        }
        RunVerdict::Undecided { t, gap } => {
            h.t_stop = Some(*t);
            h.final_gap = Some(*gap);
        }
    }
    summary.push(format!("verdict: {}", pieces.verdict.kind().as_str()));
    if let Some(r) = &pieces.report {
        h.t_hat = finite(r.time.t_hat);
        h.time_bound = r.time_bound.value();
        h.rate_exponent = finite(r.rate.exponent);
        h.rate_amplitude = finite(r.rate.amplitude);
        h.predicted_amplitude = finite(r.rate.predicted_amplitude);
        h.m_hat = finite(r.envelopes.m_hat);
        h.c_hat = finite(r.envelopes.c_hat);
        h.quench_center = Some(r.quench_set.center_x);
        h.quench_margin = finite(r.quench_set.margin);
        summary.push(format!("T_hat: {:.8}", r.time.t_hat));
        summary.push(format!("time bound: {}", fmt_opt(r.time_bound.value())));
        summary.push(format!(
            "rate: exponent {:.4}, amplitude {:.4} (predicted {:.4})",
            r.rate.exponent, r.rate.amplitude, r.rate.predicted_amplitude
        ));
        summary.push(format!("envelopes: M = {:.4}, C = {:.4}", r.envelopes.m_hat, r.envelopes.c_hat));
        summary.push(format!("quench set: {} node(s) around x = {:.4}", r.quench_set.nodes.len(), r.quench_set.center_x));
    }
    if let Some(s) = &pieces.similarity {
        h.w0_final = s.frame.slices.last().map(|sl| sl.w_center());
        h.energy_decay_ok = Some(s.energy.decay_ok);
        summary.push(format!(
            "similarity: w(0, s_end) = {}, energy non-increasing: {}",
            fmt_opt(h.w0_final),
            s.energy.decay_ok
        ));
        if let Some(p) = &s.control_probe {
            summary.push(format!("control point x = {}: ratio {:.2}, bounded {}", p.center, p.ratio, p.bounded));
        }
    }
}

fn fine_quench_time(spec: ProblemSpec) -> Result<Option<f64>> {
    let fine = Problem::new(spec.with_resolution(2 * spec.resolution))?;
    let (traj, verdict) = integrate(&fine)?;
    Ok(match verdict {
        RunVerdict::Quenched { .. } => estimate_quench_time(&traj, spec.controls.quench_gap).ok().map(|q| q.t_hat),
        _ => None,
    })
}

fn refine_headline(m: &mut RunManifest, spec: ProblemSpec, summary: &mut Vec<String>) -> Result<()> {
    let Some(coarse) = m.headline.t_hat else { return Ok(()) };
    let fine = fine_quench_time(spec)?;
    m.headline.t_hat_refined = fine;
    match fine {
        Some(fine) => {
            let rel = (coarse - fine).abs() / fine;
            summary.push(format!("T_hat at N = {}: {fine:.8} (relative change {rel:.2e})", 2 * spec.resolution));
            if rel > REFINEMENT_TOL {
                m.notes.push(format!("T_hat changes by {rel:.3e} under N -> 2N"));
            }
        }
        None => m.notes.push("refined run did not produce a quenching time".into()),
    }
    Ok(())
}

/// `simulate`, `similarity` and `report`: one run with its artifacts.
fn simulate(ctx: &Context, command: Command, full: bool) -> Result<Outcome> {
    let problem = Problem::new(ctx.spec())?;
    let mut m = ctx.manifest(command);
    let mut summary = Vec::new();
    let pieces = run_and_analyze(&problem, ctx.config.command.control_point, true, &mut m.notes)?;
    fill_run_headline(&mut m, &pieces, &mut summary);
    m.files = write_run_outputs(&ctx.out, &pieces.traj, &problem.grid, pieces.similarity.as_ref())?;
    if full {
        let spectral = SpectralData::compute(&problem)?;
        let b = lambda_bounds(problem.spec.pressure, &spectral, problem.c0, problem.f_max, ctx.config.command.p_star);
        m.headline.mu0 = Some(spectral.mu0);
        m.headline.lower_l22 = b.lower_l22;
        m.headline.upper_l22 = finite(b.upper_l22);
        m.headline.upper_p33 = finite(b.upper_p33);
        m.headline.upper_nopressure = b.upper_nopressure;
        summary.push(format!("mu0: {:.6}", spectral.mu0));
        if ctx.config.command.refine {
            refine_headline(&mut m, ctx.spec(), &mut summary)?;
        }
    }
    let undecided = matches!(pieces.verdict, RunVerdict::Undecided { .. });
    Ok(Outcome { manifest: m, undecided, summary })
}

fn rate(ctx: &Context) -> Result<Outcome> {
    let problem = Problem::new(ctx.spec())?;
    let mut m = ctx.manifest(Command::Rate);
    let mut summary = Vec::new();
    let pieces = run_and_analyze(&problem, None, false, &mut m.notes)?;
    fill_run_headline(&mut m, &pieces, &mut summary);
    m.files = write_run_outputs(&ctx.out, &pieces.traj, &problem.grid, None)?;
    if let Some(r) = &pieces.report {
        let t_hat = r.time.t_hat;
        let a = r.quench_set.center;
        let rows = pieces.traj.snapshots.iter().filter(|s| s.t < t_hat).filter_map(|s| {
            let gap_a = 1.0 - s.u[a];
            let tau = t_hat - s.t;
            (gap_a > 0.0 && gap_a <= WINDOW_GAP)
                .then(|| vec![s.t.into(), tau.into(), gap_a.into(), s.gap.into(), (gap_a / tau.cbrt()).into()])
        });
        write_csv(&ctx.out.join("rate.csv"), &["t", "tau", "gap_a", "gap", "ratio"], rows)?;
        m.files.push("rate.csv".into());
        if ctx.config.command.refine {
            refine_headline(&mut m, ctx.spec(), &mut summary)?;
        }
    }
    let undecided = matches!(pieces.verdict, RunVerdict::Undecided { .. });
    Ok(Outcome { manifest: m, undecided, summary })
}

fn steady(ctx: &Context) -> Result<Outcome> {
    let problem = Problem::new(ctx.spec())?;
    let mut m = ctx.manifest(Command::Steady);
    let mut summary = Vec::new();
    let mut undecided = false;
    match solve_minimal_steady(&problem) {
        Ok(SteadyResult::Exists { u_min, residual, iterations }) => {
            m.headline.steady_max = Some(u_min.max());
            m.headline.steady_residual = finite(residual);
            write_csv(
                &ctx.out.join("steady.csv"),
                &["x", "u"],
                problem.grid.nodes().iter().zip(u_min.iter()).map(|(x, u)| vec![(*x).into(), (*u).into()]),
            )?;
            m.files.push("steady.csv".into());
            summary.push(format!(
                "minimal steady state: max u = {:.8}, residual {residual:.2e}, {iterations} iterations",
                u_min.max()
            ));
        }
        Ok(SteadyResult::NotFound { max_u, iterations }) => {
            m.notes.push(format!("no minimal steady state: iterates reached max u = {max_u} after {iterations}"));
            summary.push("no minimal steady state".into());
        }
        Err(memsq_core::Error::Numerical(msg)) => {
            undecided = true;
            m.verdict = Some("undecided".into());
            m.notes.push(msg.clone());
            summary.push(format!("undecided: {msg}"));
        }
        Err(e) => return Err(e.into()),
    }
    Ok(Outcome { manifest: m, undecided, summary })
}

fn eigen(ctx: &Context) -> Result<Outcome> {
    let problem = Problem::new(ctx.spec())?;
    let spectral = SpectralData::compute(&problem)?;
    let mut m = ctx.manifest(Command::Eigen);
    m.headline.mu0 = Some(spectral.mu0);
    m.headline.torsion_integral = Some(spectral.int_torsion);
    m.headline.torsion_max = Some(spectral.max_torsion);
    write_csv(
        &ctx.out.join("eigen.csv"),
        &["x", "phi0", "torsion"],
        problem
            .grid
            .nodes()
            .iter()
            .zip(spectral.phi0.iter().zip(spectral.torsion.iter()))
            .map(|(x, (p, t))| vec![(*x).into(), (*p).into(), (*t).into()]),
    )?;
    m.files.push("eigen.csv".into());
    let summary = vec![
        format!("mu0: {:.10}", spectral.mu0),
        format!("torsion: integral {:.10}, max {:.10}", spectral.int_torsion, spectral.max_torsion),
    ];
    Ok(Outcome { manifest: m, undecided: false, summary })
}

fn bounds(ctx: &Context) -> Result<Outcome> {
    let problem = Problem::new(ctx.spec())?;
    let spectral = SpectralData::compute(&problem)?;
    let mut m = ctx.manifest(Command::Bounds);
    let p_star = ctx.config.command.p_star;
    let all: Vec<_> = ctx
        .pressures()
        .into_iter()
        .map(|p| lambda_bounds(p, &spectral, problem.c0, problem.f_max, p_star))
        .collect();
    m.headline.mu0 = Some(spectral.mu0);
    m.headline.p_star = p_star;
    if let Some(b) = all.first() {
        m.headline.lower_l22 = b.lower_l22;
        m.headline.upper_l22 = finite(b.upper_l22);
        m.headline.upper_p33 = finite(b.upper_p33);
        m.headline.upper_nopressure = b.upper_nopressure;
    }
    write_csv(
        &ctx.out.join("bounds.csv"),
        &["pressure", "lower_l22", "upper_l22", "upper_p33", "upper_nopressure", "no_admissible_lambda"],
        all.iter().map(|b| {
            vec![
                b.pressure.into(),
                b.lower_l22.into(),
                b.upper_l22.into(),
                b.upper_p33.into(),
                b.upper_nopressure.into(),
                b.no_admissible_lambda.into(),
            ]
        }),
    )?;
    m.files.push("bounds.csv".into());
    let summary = all
        .iter()
        .map(|b| {
            format!(
                "P = {}: lower {}, upper_l22 {:.6}, upper_p33 {:.6}, upper_nopressure {}{}",
                b.pressure,
                fmt_opt(b.lower_l22),
                b.upper_l22,
                b.upper_p33,
                fmt_opt(b.upper_nopressure),
                if b.no_admissible_lambda { " (no admissible lambda)" } else { "" }
            )
        })
        .collect();
    Ok(Outcome { manifest: m, undecided: false, summary })
}

fn probe_rows(results: &[(usize, CriticalityResult)]) -> Vec<Vec<Cell>> {
    results
        .iter()
        .flat_map(|(n, r)| {
            r.log.iter().map(move |p| {
                vec![r.fixed.into(), (*n).into(), p.value.into(), p.verdict.as_str().into(), p.t_max.into()]
            })
        })
        .collect()
}

fn critical(ctx: &Context) -> Result<Outcome> {
    let spec = ctx.spec();
    let tol = ctx.config.command.tol;
    let mut jobs: Vec<(f64, usize)> = ctx.pressures().into_iter().map(|p| (p, spec.resolution)).collect();
    if ctx.config.command.refine {
        jobs.extend(ctx.pressures().into_iter().map(|p| (p, 2 * spec.resolution)));
    }
    let given_p_star = ctx.config.command.p_star;
    let (p_star, searches) = rayon::join(
        || match given_p_star {
            Some(p) => Ok(Some(p)),
            None => find_p_star(&spec, tol).map(|r| r.converged.then_some(r.estimate)),
        },
        || {
            jobs.par_iter()
                .map(|&(p, n)| find_lambda_star_with(&spec.with_resolution(n), p, tol, None).map(|r| (n, r)))
                .collect::<memsq_core::Result<Vec<_>>>()
        },
    );
    let p_star = p_star?;
    let mut searches = searches?;
    // Lower bounds need the operational P*, which was searched concurrently.
    for (n, r) in &mut searches {
        let problem = Problem::new(spec.with_resolution(*n).with_pressure(r.fixed))?;
        let spectral = SpectralData::compute(&problem)?;
        r.bounds = Some(lambda_bounds(r.fixed, &spectral, problem.c0, problem.f_max, p_star));
    }

    let mut m = ctx.manifest(Command::Critical);
    m.headline.p_star = p_star;
    let mut summary = Vec::new();
    let mut undecided = false;
    for (n, r) in &searches {
        undecided |= !r.converged && !r.no_admissible_lambda;
        m.headline.critical.push(CriticalSummary {
            pressure: r.fixed,
            resolution: *n,
            estimate: finite(r.estimate),
            bracket: r.bracket,
            converged: r.converged,
            horizon_limited: r.horizon_limited,
            no_admissible_lambda: r.no_admissible_lambda,
        });
        summary.push(if r.no_admissible_lambda {
            format!("P = {}, N = {n}: P >= mu0, no admissible lambda", r.fixed)
        } else {
            format!(
                "P = {}, N = {n}: lambda* = {:.6} in [{:.6}, {:.6}] (relative width {:.1e}{})",
                r.fixed,
                r.estimate,
                r.bracket.0,
                r.bracket.1,
                r.relative_width(),
                if r.converged { "" } else { ", not converged" }
            )
        });
    }
    write_csv(
        &ctx.out.join("critical.csv"),
        &[
            "pressure",
            "resolution",
            "estimate",
            "lo",
            "hi",
            "relative_width",
            "converged",
            "horizon_limited",
            "lower_l22",
            "upper_l22",
            "upper_p33",
            "upper_nopressure",
        ],
        searches.iter().map(|(n, r)| {
            let b = r.bounds.as_ref();
            vec![
                r.fixed.into(),
                (*n).into(),
                finite(r.estimate).into(),
                r.bracket.0.into(),
                r.bracket.1.into(),
                finite(r.relative_width()).into(),
                r.converged.into(),
                r.horizon_limited.into(),
                b.and_then(|b| b.lower_l22).into(),
                b.map(|b| b.upper_l22).into(),
                b.map(|b| b.upper_p33).into(),
                b.and_then(|b| b.upper_nopressure).into(),
            ]
        }),
    )?;
    write_csv(&ctx.out.join("probes.csv"), &["fixed", "resolution", "value", "verdict", "t_max"], probe_rows(&searches))?;
    m.files.extend(["critical.csv".to_string(), "probes.csv".to_string()]);
    summary.push(format!("operational P*: {}", fmt_opt(p_star)));
    Ok(Outcome { manifest: m, undecided, summary })
}

fn pstar(ctx: &Context) -> Result<Outcome> {
    let spec = ctx.spec();
    let r = find_p_star(&spec, ctx.config.command.tol)?;
    let mut m = ctx.manifest(Command::Pstar);
    m.headline.p_star = finite(r.estimate);
    m.headline.mu0 = Some(r.mu0);
    write_csv(
        &ctx.out.join("probes.csv"),
        &["fixed", "resolution", "value", "verdict", "t_max"],
        probe_rows(&[(spec.resolution, r.clone())]),
    )?;
    m.files.push("probes.csv".into());
    let summary = vec![format!(
        "operational P* (lambda = {:.3e}): {:.6} in [{:.6}, {:.6}]{}",
        r.fixed,
        r.estimate,
        r.bracket.0,
        r.bracket.1,
        if r.converged { "" } else { ", not converged" }
    )];
    Ok(Outcome { manifest: m, undecided: !r.converged, summary })
}

fn sweep(ctx: &Context) -> Result<Outcome> {
    let spec = ctx.spec();
    let opts = &ctx.config.command;
    if opts.lambdas.is_empty() {
        return Err(ctx.config_error("sweep needs `lambdas` in [command]"));
    }
    let pressures = ctx.pressures();
    let grid: Vec<ProblemSpec> = opts
        .lambdas
        .iter()
        .flat_map(|&l| pressures.iter().map(move |&p| spec.with_lambda(l).with_pressure(p)))
        .collect();
    let store_path = opts.store.clone().unwrap_or_else(|| ctx.out.join("sweep.jsonl"));
    let store = SweepStore::new(store_path.clone());
    let done = store.hashes()?;
    let todo: Vec<&ProblemSpec> = grid.iter().filter(|s| !done.contains(&SweepKey::of(s).hash())).collect();
    let skipped = grid.len() - todo.len();

    let (tx, writer) = spawn_writer(store.clone());
    let run: memsq_core::Result<()> = todo.par_iter().try_for_each_with(tx, |tx, s| {
        let record = run_record(s)?;
        // The writer only stops after every sender is gone.
        let _ = tx.send(record);
        Ok(())
    });
    let merged = writer.join().expect("store writer panicked")?;
    run?;

    let records = store.load()?.records;
    let wanted: Vec<String> = grid.iter().map(|s| SweepKey::of(s).hash()).collect();
    let selected: Vec<_> = records.into_iter().filter(|r| wanted.contains(&r.hash)).collect();

    let mut m = ctx.manifest(Command::Sweep);
    m.notes.extend(merged.warnings);
    let mut summary = vec![format!(
        "{} configurations: {} run, {} resumed from {}",
        grid.len(),
        todo.len(),
        skipped,
        store_path.display()
    )];
    for &p in &pressures {
        let at_p: Vec<_> = selected.iter().filter(|r| r.key.pressure == p).cloned().collect();
        let s = summarize_lambda_sweep(p, at_p);
        summary.push(format!(
            "P = {p}: {} quenched, slope {}, T decreasing in lambda: {}",
            s.records.len() - s.excluded.len(),
            fmt_opt(s.fit.as_ref().map(|f| f.slope)),
            s.monotone
        ));
        m.headline.sweep.push(SweepSummary {
            pressure: p,
            quenched: s.records.len() - s.excluded.len(),
            excluded: s.excluded.len(),
            slope: s.fit.as_ref().and_then(|f| finite(f.slope)),
            r2: s.fit.as_ref().and_then(|f| finite(f.r2)),
            monotone: s.monotone,
        });
        m.notes.extend(s.excluded);
    }
    write_csv(
        &ctx.out.join("sweep.csv"),
        &["lambda", "pressure", "resolution", "verdict", "T", "seconds", "hash"],
        selected.iter().map(|r| {
            vec![
                r.key.lambda.into(),
                r.key.pressure.into(),
                r.key.resolution.into(),
                r.verdict.as_str().into(),
                r.t_hat.into(),
                r.seconds.into(),
                r.hash.as_str().into(),
            ]
        }),
    )?;
    m.files.push("sweep.csv".into());
    if store_path.starts_with(&ctx.out) {
        if let Ok(rel) = store_path.strip_prefix(&ctx.out) {
            m.files.push(rel.display().to_string());
        }
    }
    Ok(Outcome { manifest: m, undecided: false, summary })
}

/// Output directory: the command line wins over `[command] out`.
pub fn output_dir(cli: Option<&Path>, config: &Config, command: Command) -> PathBuf {
    cli.map(Path::to_path_buf)
        .or_else(|| config.command.out.clone())
        .unwrap_or_else(|| PathBuf::from(format!("memsq-{}", command.name())))
}
