use approx::assert_relative_eq;
use proptest::prelude::*;

use memsq_core::criticality::SweepKey;
use memsq_core::elliptic::{lambda_bounds, SpectralData};
use memsq_core::linalg::Tridiagonal;
use memsq_core::parabolic::{build_initial, step, SimState};
use memsq_core::quench::{estimate_quench_time, synthetic_self_similar};
use memsq_core::{DomainSpec, Problem, ProblemSpec};

fn diag_dominant() -> impl Strategy<Value = (Tridiagonal, Vec<f64>)> {
    (3usize..40).prop_flat_map(|n| {
        (
            prop::collection::vec(-1.0f64..1.0, n),
            prop::collection::vec(-1.0f64..1.0, n),
            prop::collection::vec(0.1f64..2.0, n),
            prop::collection::vec(-5.0f64..5.0, n),
        )
            .prop_map(|(lower, upper, extra, rhs)| {
                let n = extra.len();
                let diag = (0..n)
                    .map(|i| {
                        let off = if i > 0 { lower[i].abs() } else { 0.0 } + if i + 1 < n { upper[i].abs() } else { 0.0 };
                        off + extra[i]
                    })
                    .collect();
                (Tridiagonal { lower, diag, upper }, rhs)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tridiagonal_solve_inverts_apply((a, rhs) in diag_dominant()) {
        let x = a.solve(&rhs).unwrap();
        let back = a.apply(&x);
        for (b, r) in back.iter().zip(&rhs) {
            prop_assert!((b - r).abs() <= 1e-10 * (1.0 + r.abs()));
        }
    }

    #[test]
    fn steps_keep_bounds_and_grow_in_time(lambda in 0.0f64..8.0, pressure in 0.0f64..3.0, n in 16usize..80) {
        let problem = Problem::new(ProblemSpec::unit_interval(lambda, pressure, n)).unwrap();
        let mut state = SimState::initial(build_initial(&problem).unwrap(), 0.0);
        for _ in 0..25 {
            let Ok(next) = step(&state, &problem).unwrap() else { break };
            prop_assert!(next.u.iter().all(|u| (0.0..1.0).contains(u)));
            prop_assert_eq!(next.u[0], 0.0);
            prop_assert_eq!(next.u[n], 0.0);
            for (a, b) in state.u.iter().zip(next.u.iter()) {
                prop_assert!(*b >= a - 1e-10);
            }
            state = next;
        }
    }

    #[test]
    fn centered_data_stays_symmetric(lambda in 0.5f64..6.0, half in 8usize..40) {
        let n = 2 * half;
        let problem = Problem::new(ProblemSpec::unit_interval(lambda, 0.0, n)).unwrap();
        let mut state = SimState::initial(build_initial(&problem).unwrap(), 0.0);
        for _ in 0..20 {
            state = step(&state, &problem).unwrap().unwrap();
        }
        for i in 0..=n {
            prop_assert!((state.u[i] - state.u[n - i]).abs() <= 1e-12);
        }
    }

    #[test]
    fn sweep_hash_depends_only_on_the_key(lambda in 0.0f64..100.0, pressure in 0.0f64..5.0) {
        let spec = ProblemSpec::unit_interval(lambda, pressure, 128);
        let k = SweepKey::of(&spec);
        prop_assert_eq!(k.hash(), SweepKey::of(&spec.clone()).hash());
        prop_assert_ne!(k.hash(), SweepKey::of(&spec.with_resolution(256)).hash());
        prop_assert_eq!(k.hash().len(), 64);
    }

    #[test]
    fn synthetic_quench_time_is_recovered(lambda in 1.0f64..200.0) {
        let problem = Problem::new(ProblemSpec::unit_interval(lambda, 0.0, 32)).unwrap();
        let gaps: Vec<f64> = (0..30).map(|k| 0.1 * 10f64.powf(-2.0 * k as f64 / 29.0)).collect();
        let t = 1.0 / (3.0 * lambda);
        let traj = synthetic_self_similar(&problem, t, &gaps);
        let q = estimate_quench_time(&traj, 1e-3).unwrap();
        prop_assert!((q.t_hat - t).abs() <= 1e-9 * (1.0 + t));
    }

    #[test]
    fn pressure_lowers_every_upper_bound(p in 0.0f64..9.0) {
        let problem = Problem::new(ProblemSpec::unit_interval(1.0, p, 64)).unwrap();
        let spectral = SpectralData::compute(&problem).unwrap();
        let at_zero = lambda_bounds(0.0, &spectral, problem.c0, problem.f_max, None);
        let at_p = lambda_bounds(p, &spectral, problem.c0, problem.f_max, None);
        prop_assert!(at_p.upper_l22 <= at_zero.upper_l22);
        prop_assert!(at_p.upper_p33 <= at_zero.upper_p33);
    }
}

#[test]
fn closed_form_bounds_on_the_unit_interval() {
    let problem = Problem::new(ProblemSpec::unit_interval(1.0, 0.0, 512)).unwrap();
    let spectral = SpectralData::compute(&problem).unwrap();
    let pi2 = std::f64::consts::PI.powi(2);
    let b = lambda_bounds(0.0, &spectral, problem.c0, problem.f_max, None);
    assert_relative_eq!(b.upper_l22, 12.0, max_relative = 1e-3);
    assert_relative_eq!(b.upper_p33, pi2, max_relative = 1e-3);
    assert_relative_eq!(b.upper_nopressure.unwrap(), 4.0 * pi2 / 27.0, max_relative = 1e-3);
    let b = lambda_bounds(2.0, &spectral, problem.c0, problem.f_max, None);
    assert_relative_eq!(b.upper_l22, 10.0, max_relative = 1e-3);
    assert_relative_eq!(b.upper_p33, pi2 - 2.0, max_relative = 1e-3);
    let b = lambda_bounds(spectral.mu0, &spectral, problem.c0, problem.f_max, None);
    assert!(b.no_admissible_lambda && b.upper_p33 == 0.0);
}

#[test]
fn larger_domains_have_smaller_eigenvalues() {
    let mu = |length: f64| {
        let mut spec = ProblemSpec::unit_interval(0.0, 0.0, 512);
        spec.domain = DomainSpec::Interval { length };
        SpectralData::compute(&Problem::new(spec).unwrap()).unwrap().mu0
    };
    let pi2 = std::f64::consts::PI.powi(2);
    assert_relative_eq!(mu(1.0), pi2, max_relative = 1e-3);
    assert_relative_eq!(mu(2.0), pi2 / 4.0, max_relative = 1e-3);
}
