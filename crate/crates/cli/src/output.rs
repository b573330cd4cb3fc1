//! CSV artifacts. Every file has one header line, LF line endings and floats
//! printed with 17 significant digits, which is enough to parse back to the
//! same `f64`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use memsq_core::parabolic::Trajectory;
use memsq_core::quench::SimilarityAnalysis;
use memsq_core::Grid;

use crate::error::{CliError, Result};

pub const RUN_CSV: &str = "run.csv";
pub const SIMILARITY_CSV: &str = "similarity.csv";
pub const SNAPSHOT_DIR: &str = "snapshots";
pub const SNAPSHOT_INDEX: &str = "snapshots/index.csv";
pub const MANIFEST_JSON: &str = "manifest.json";

pub const RUN_HEADER: [&str; 6] = ["t", "U", "gap", "argmax", "dt", "ut_inf"];
pub const SNAPSHOT_HEADER: [&str; 2] = ["x", "u"];
pub const SIMILARITY_HEADER: [&str; 4] = ["s", "w0", "E", "tolE"];

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// A cell of a CSV row.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(v) => fmt_f64(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Num)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<Cell>>) -> Result<()> {
    let io = |e| CliError::io(path, e);
    let file = fs::File::create(path).map_err(io)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{}", header.join(",")).map_err(io)?;
    for row in rows {
        let line: Vec<String> = row.iter().map(Cell::render).collect();
        writeln!(w, "{}", line.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Header and numeric rows of a CSV file written by [`write_csv`]; empty cells
/// read as NaN.
pub fn read_numeric_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("").split(',').map(str::to_string).collect();
    let rows = lines
        .map(|l| l.split(',').map(|c| if c.is_empty() { f64::NAN } else { c.parse().unwrap_or(f64::NAN) }).collect())
        .collect();
    Ok((header, rows))
}

pub fn write_run_csv(path: &Path, traj: &Trajectory) -> Result<()> {
    write_csv(
        path,
        &RUN_HEADER,
        traj.samples.iter().map(|s| {
            vec![s.t.into(), s.max_u.into(), s.gap.into(), s.location.into(), s.dt.into(), s.ut_inf.into()]
        }),
    )
}

/// `snapshots/NNNN.csv` plus `snapshots/index.csv` mapping indices to times.
pub fn write_snapshots(dir: &Path, traj: &Trajectory, grid: &Grid) -> Result<Vec<String>> {
    let snap_dir = dir.join(SNAPSHOT_DIR);
    create_dir(&snap_dir)?;
    let mut files = Vec::with_capacity(traj.snapshots.len() + 1);
    for (k, snap) in traj.snapshots.iter().enumerate() {
        let name = format!("{SNAPSHOT_DIR}/{k:04}.csv");
        write_csv(
            &dir.join(&name),
            &SNAPSHOT_HEADER,
            grid.nodes().iter().zip(snap.u.iter()).map(|(x, u)| vec![(*x).into(), (*u).into()]),
        )?;
        files.push(name);
    }
    write_csv(
        &dir.join(SNAPSHOT_INDEX),
        &["index", "t", "gap"],
        traj.snapshots.iter().enumerate().map(|(k, s)| vec![k.into(), s.t.into(), s.gap.into()]),
    )?;
    files.push(SNAPSHOT_INDEX.to_string());
    Ok(files)
}

pub fn write_similarity_csv(path: &Path, sim: &SimilarityAnalysis) -> Result<()> {
    write_csv(
        path,
        &SIMILARITY_HEADER,
        sim.frame.slices.iter().enumerate().map(|(k, slice)| {
            vec![
                slice.s.into(),
                slice.w_center().into(),
                sim.energy.energy.get(k).copied().into(),
                sim.energy.tolerance.get(k).copied().into(),
            ]
        }),
    )
}

/// Run artifacts: `run.csv`, snapshots, and `similarity.csv` when a
/// similarity analysis is available. Returns the written paths relative to
/// `dir`.
pub fn write_run_outputs(
    dir: &Path,
    traj: &Trajectory,
    grid: &Grid,
    similarity: Option<&SimilarityAnalysis>,
) -> Result<Vec<String>> {
    create_dir(dir)?;
    write_run_csv(&dir.join(RUN_CSV), traj)?;
    let mut files = vec![RUN_CSV.to_string()];
    files.extend(write_snapshots(dir, traj, grid)?);
    if let Some(sim) = similarity {
        write_similarity_csv(&dir.join(SIMILARITY_CSV), sim)?;
        files.push(SIMILARITY_CSV.to_string());
    }
    Ok(files)
}
