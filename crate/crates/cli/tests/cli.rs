use std::fs;
use std::path::Path;
use std::process::{Command, Stdio};

use memsq_cli::output::{read_numeric_csv, RUN_HEADER, SIMILARITY_HEADER};
use memsq_cli::{exit, parse_config, RunManifest};
use memsq_core::parabolic::integrate;
use memsq_core::Problem;

const QUENCH: &str = "lambda = 5\n[domain]\nresolution = 128\n[command]\ncontrol_point = 0.25\n";
const GLOBAL: &str = "lambda = 0.5\n[domain]\nresolution = 64\n";
const UNDECIDED: &str = "lambda = 5\n[domain]\nresolution = 64\n[solver]\nt_max = 0.01\n";

fn memsq(dir: &Path, args: &[&str], config: &str) -> (i32, String) {
    let cfg = dir.join("run.cfg");
    fs::write(&cfg, config).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_memsq"))
        .args(args)
        .arg(&cfg)
        .current_dir(dir)
        .env_remove("MEMSQ_THREADS")
        .output()
        .unwrap();
    let text = String::from_utf8_lossy(&out.stdout).into_owned() + &String::from_utf8_lossy(&out.stderr);
    (out.status.code().unwrap(), text)
}

#[test]
fn quenched_run_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let (code, log) = memsq(dir.path(), &["simulate", "-o", "q"], QUENCH);
    assert_eq!(code, exit::SUCCESS, "{log}");
    let q = dir.path().join("q");
    for f in ["run.csv", "similarity.csv", "manifest.json", "snapshots/0000.csv", "snapshots/index.csv"] {
        assert!(q.join(f).is_file(), "missing {f}");
    }
    let m = RunManifest::read(&q.join("manifest.json")).unwrap();
    assert_eq!(m.verdict.as_deref(), Some("quenched"));
    assert!(m.headline.t_hat.is_some());
    for f in &m.files {
        assert!(q.join(f).is_file(), "inventory lists missing {f}");
    }

    let (header, rows) = read_numeric_csv(&q.join("similarity.csv")).unwrap();
    assert_eq!(header, SIMILARITY_HEADER);
    assert!(!rows.is_empty());
    let (header, _) = read_numeric_csv(&q.join("snapshots/0000.csv")).unwrap();
    assert_eq!(header, ["x", "u"]);
}

#[test]
fn global_run_has_no_similarity_file() {
    let dir = tempfile::tempdir().unwrap();
    let (code, log) = memsq(dir.path(), &["simulate", "-o", "g"], GLOBAL);
    assert_eq!(code, exit::SUCCESS, "{log}");
    let g = dir.path().join("g");
    assert!(g.join("run.csv").is_file());
    assert!(!g.join("similarity.csv").exists());
    let m = RunManifest::read(&g.join("manifest.json")).unwrap();
    assert_eq!(m.verdict.as_deref(), Some("global"));
}

#[test]
fn undecided_run_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let (code, log) = memsq(dir.path(), &["simulate", "-o", "u"], UNDECIDED);
    assert_eq!(code, exit::UNDECIDED, "{log}");
    let m = RunManifest::read(&dir.path().join("u/manifest.json")).unwrap();
    assert_eq!(m.verdict.as_deref(), Some("undecided"));
}

#[test]
fn configuration_errors_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let (code, log) = memsq(dir.path(), &["simulate"], "lambda = 5\npressure = -1\n");
    assert_eq!(code, exit::CONFIG);
    assert!(log.contains("line 2"), "{log}");
    let (code, _) = memsq(dir.path(), &["simulate"], "lambda = 5\nlambda = 5\n");
    assert_eq!(code, exit::CONFIG);
    let (code, _) = memsq(dir.path(), &["nonsense"], GLOBAL);
    assert_eq!(code, exit::CONFIG);
    let (code, _) = memsq(dir.path(), &["sweep", "-o", "s"], GLOBAL);
    assert_eq!(code, exit::CONFIG, "sweep without lambdas");

    let cfg = dir.path().join("run.cfg");
    let status = Command::new(env!("CARGO_BIN_EXE_memsq"))
        .args(["eigen"])
        .arg(&cfg)
        .env("MEMSQ_THREADS", "zero")
        .current_dir(dir.path())
        .stderr(Stdio::null())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(exit::CONFIG));
}

#[test]
fn io_errors_exit_with_four() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("blocker"), "a file").unwrap();
    let (code, log) = memsq(dir.path(), &["eigen", "-o", "blocker/out"], GLOBAL);
    assert_eq!(code, exit::IO, "{log}");

    let status = Command::new(env!("CARGO_BIN_EXE_memsq"))
        .args(["eigen", "does-not-exist.cfg"])
        .current_dir(dir.path())
        .stderr(Stdio::null())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(exit::IO));
}

#[test]
fn identical_configs_give_identical_run_csv() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(memsq(dir.path(), &["simulate", "-o", "a"], QUENCH).0, 0);
    assert_eq!(memsq(dir.path(), &["simulate", "-o", "b"], QUENCH).0, 0);
    let a = fs::read(dir.path().join("a/run.csv")).unwrap();
    let b = fs::read(dir.path().join("b/run.csv")).unwrap();
    assert_eq!(a, b);
    assert!(!a.contains(&b'\r'));
}

#[test]
fn run_csv_reparses_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(memsq(dir.path(), &["simulate", "-o", "q"], QUENCH).0, 0);
    let (header, rows) = read_numeric_csv(&dir.path().join("q/run.csv")).unwrap();
    assert_eq!(header, RUN_HEADER);

    let spec = parse_config(QUENCH).unwrap().spec;
    let (traj, _) = integrate(&Problem::new(spec).unwrap()).unwrap();
    assert_eq!(rows.len(), traj.samples.len());
    for (row, s) in rows.iter().zip(&traj.samples) {
        let want = [s.t, s.max_u, s.gap, s.location, s.dt, s.ut_inf];
        for (got, want) in row.iter().zip(want) {
            assert_eq!(got.to_bits(), want.to_bits());
        }
    }
}

#[test]
fn manifest_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(memsq(dir.path(), &["report", "-o", "r"], QUENCH).0, 0);
    let path = dir.path().join("r/manifest.json");
    let m = RunManifest::read(&path).unwrap();
    assert_eq!(RunManifest::from_json(&m.to_json()).unwrap(), m);
    assert_eq!(m.to_json() + "\n", fs::read_to_string(&path).unwrap());
    assert!(m.headline.t_hat_refined.is_some());
    assert!(m.headline.mu0.is_some());
}

#[test]
fn sweep_resumes_from_its_store() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[domain]\nresolution = 64\n[command]\nlambdas = 15, 30\npressures = 0, 1\nstore = runs.jsonl\n";
    let (code, log) = memsq(dir.path(), &["sweep", "-o", "s"], cfg);
    assert_eq!(code, 0, "{log}");
    assert!(log.contains("4 run, 0 resumed"), "{log}");
    let first = fs::read(dir.path().join("runs.jsonl")).unwrap();
    let (code, log) = memsq(dir.path(), &["sweep", "-o", "s"], cfg);
    assert_eq!(code, 0);
    assert!(log.contains("0 run, 4 resumed"), "{log}");
    assert_eq!(fs::read(dir.path().join("runs.jsonl")).unwrap(), first);
    let (header, rows) = read_numeric_csv(&dir.path().join("s/sweep.csv")).unwrap();
    assert_eq!(header[..5], ["lambda", "pressure", "resolution", "verdict", "T"]);
    assert_eq!(rows.len(), 4);
}

#[test]
fn elliptic_commands_write_their_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "lambda = 0.5\n[domain]\nresolution = 64\n[command]\npressures = 0, 2, 20\n";
    for (cmd, file) in [("steady", "steady.csv"), ("eigen", "eigen.csv"), ("bounds", "bounds.csv")] {
        let (code, log) = memsq(dir.path(), &[cmd, "-o", cmd], cfg);
        assert_eq!(code, 0, "{cmd}: {log}");
        assert!(dir.path().join(cmd).join(file).is_file(), "{cmd}");
    }
    let (_, rows) = read_numeric_csv(&dir.path().join("bounds/bounds.csv")).unwrap();
    assert_eq!(rows.len(), 3);
    assert!((rows[1][2] - 10.0).abs() < 0.01, "upper_l22 at P = 2: {}", rows[1][2]);
}
