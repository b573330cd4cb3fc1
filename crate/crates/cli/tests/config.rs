use memsq_cli::parse_config;
use memsq_core::{DomainSpec, InitialSpec, ProfileSpec, SolverControls};

const MINIMAL: &str = "\
lambda = 5
pressure = 0

[domain]
kind = interval
length = 1

[profile]
kind = constant
value = 1
";

#[test]
fn minimal_config_gets_documented_defaults() {
    let c = parse_config(MINIMAL).unwrap();
    assert_eq!(c.spec.lambda, 5.0);
    assert_eq!(c.spec.pressure, 0.0);
    assert_eq!(c.spec.domain, DomainSpec::Interval { length: 1.0 });
    assert_eq!(c.spec.profile, ProfileSpec::Constant { value: 1.0 });
    assert_eq!(c.spec.resolution, 256);
    assert_eq!(c.spec.initial, InitialSpec::Zero);
    assert_eq!(c.spec.controls, SolverControls::default());
    assert_eq!(c.command.tol, 1e-3);
    assert!(c.command.refine);
}

#[test]
fn empty_file_is_the_zero_problem() {
    let c = parse_config("# nothing\n").unwrap();
    assert_eq!(c.spec.lambda, 0.0);
    assert_eq!(c.spec.domain, DomainSpec::Interval { length: 1.0 });
}

#[test]
fn negative_pressure_is_rejected_with_its_line() {
    let err = parse_config("lambda = 5\n\npressure = -1\n").unwrap_err();
    assert_eq!(err.line, Some(3));
    assert!(err.message.contains("pressure"), "{err}");
}

#[test]
fn duplicate_key_is_rejected() {
    let err = parse_config("[domain]\nresolution = 64\nresolution = 128\n").unwrap_err();
    assert_eq!(err.line, Some(3));
    assert!(err.message.contains("duplicate"), "{err}");
}

#[test]
fn unknown_keys_and_sections_are_rejected() {
    assert_eq!(parse_config("lambda = 1\nmu = 2\n").unwrap_err().line, Some(2));
    assert_eq!(parse_config("[domian]\n").unwrap_err().line, Some(1));
    assert_eq!(parse_config("[solver]\ndt = 1e-3\n").unwrap_err().line, Some(2));
    assert_eq!(parse_config("[domain]\n[domain]\n").unwrap_err().line, Some(2));
}

#[test]
fn keys_of_another_kind_are_rejected() {
    let err = parse_config("[domain]\nkind = interval\nradius = 2\n").unwrap_err();
    assert_eq!(err.line, Some(3));
}

#[test]
fn malformed_values_point_at_their_line() {
    for (text, line) in [
        ("lambda = five\n", 1),
        ("lambda = nan\n", 1),
        ("\n[domain]\nresolution = 8\n", 3),
        ("[domain]\nkind = torus\n", 2),
        ("[solver]\ndt_max = 0\n", 2),
        ("[command]\nrefine = maybe\n", 2),
        ("[command]\nlambdas = 1, x\n", 2),
        ("lambda\n", 1),
        ("lambda =\n", 1),
    ] {
        let err = parse_config(text).unwrap_err();
        assert_eq!(err.line, Some(line), "{text:?}: {err}");
    }
}

#[test]
fn missing_kind_fields_are_reported() {
    let err = parse_config("[profile]\nkind = bump\nbase = 1\n").unwrap_err();
    assert_eq!(err.line, Some(2));
    assert!(err.message.contains("amplitude"), "{err}");
}

#[test]
fn full_config_round_trips_every_section() {
    let text = "\
lambda = 2.5   # trailing comment
pressure = 1
[domain]
kind = ball
radius = 2
dim = 3
resolution = 128
[profile]
kind = bump
base = 0.5
amplitude = 1
center = 0
width = 0.2
[initial]
kind = bump
amplitude = 0.1
center = 0
width = 0.3
[solver]
dt_safety = 0.1
t_max = 5
snapshots_per_decade = 20
[command]
lambdas = 15, 30, 60
pressures = 0,1
control_point = 0.25
store = runs/sweep.jsonl
refine = false
";
    let c = parse_config(text).unwrap();
    assert_eq!(c.spec.domain, DomainSpec::RadialBall { radius: 2.0, dim: 3 });
    assert_eq!(c.spec.resolution, 128);
    assert_eq!(c.spec.profile, ProfileSpec::Bump { base: 0.5, amplitude: 1.0, center: 0.0, width: 0.2 });
    assert_eq!(c.spec.initial, InitialSpec::BumpInit { amplitude: 0.1, center: 0.0, width: 0.3 });
    assert_eq!(c.spec.controls.dt_safety, 0.1);
    assert_eq!(c.spec.controls.snapshots_per_decade, 20);
    assert_eq!(c.command.lambdas, vec![15.0, 30.0, 60.0]);
    assert_eq!(c.command.pressures, vec![0.0, 1.0]);
    assert_eq!(c.command.control_point, Some(0.25));
    assert!(!c.command.refine);
}
