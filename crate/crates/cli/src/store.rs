//! Resumable sweep store: one JSON [`SweepRecord`] per line, unique by key
//! hash, kept sorted by key.
//!
//! Every merge rewrites the file through a temporary sibling and an atomic
//! rename, so a reader sees either the old or the new store. A trailing line
//! that does not parse (an interrupted write) is dropped with a warning.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fs;
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::thread;

use memsq_core::criticality::SweepRecord;

use crate::error::{CliError, Result};

pub fn record_order(a: &SweepRecord, b: &SweepRecord) -> Ordering {
    a.key
        .lambda
        .total_cmp(&b.key.lambda)
        .then(a.key.pressure.total_cmp(&b.key.pressure))
        .then_with(|| a.key.domain.cmp(&b.key.domain))
        .then_with(|| a.key.profile.cmp(&b.key.profile))
        .then(a.key.resolution.cmp(&b.key.resolution))
        .then_with(|| a.hash.cmp(&b.hash))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Loaded {
    pub records: Vec<SweepRecord>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MergeOutcome {
    pub added: usize,
    pub total: usize,
    pub rewritten: bool,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SweepStore {
    path: PathBuf,
}

impl SweepStore {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        SweepStore { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Records in file order; a missing file is an empty store.
    pub fn load(&self) -> Result<Loaded> {
        let text = match fs::read_to_string(&self.path) {
            Ok(t) => t,
            Err(e) if e.kind() == ErrorKind::NotFound => return Ok(Loaded::default()),
            Err(e) => return Err(CliError::io(&self.path, e)),
        };
        let lines: Vec<&str> = text.lines().collect();
        let mut out = Loaded::default();
        for (idx, line) in lines.iter().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<SweepRecord>(line) {
                Ok(r) => out.records.push(r),
                Err(e) if idx + 1 == lines.len() => out.warnings.push(format!(
                    "{}: dropped unreadable trailing line {} ({e})",
                    self.path.display(),
                    idx + 1
                )),
                Err(e) => {
                    return Err(CliError::CorruptStore {
                        path: self.path.clone(),
                        line: idx + 1,
                        message: e.to_string(),
                    })
                }
            }
        }
        Ok(out)
    }

    pub fn hashes(&self) -> Result<HashSet<String>> {
        Ok(self.load()?.records.into_iter().map(|r| r.hash).collect())
    }

    /// Adds the records whose key is not stored yet. Existing records are
    /// kept as they are; the file is left alone when nothing changes.
    pub fn merge(&self, new: impl IntoIterator<Item = SweepRecord>) -> Result<MergeOutcome> {
        let Loaded { mut records, warnings } = self.load()?;
        let mut seen: HashSet<String> = HashSet::with_capacity(records.len());
        records.retain(|r| seen.insert(r.hash.clone()));
        let before = records.len();
        for r in new {
            if seen.insert(r.hash.clone()) {
                records.push(r);
            }
        }
        let added = records.len() - before;
        let sorted = records.windows(2).all(|w| record_order(&w[0], &w[1]) != Ordering::Greater);
        let rewritten = added > 0 || !warnings.is_empty() || !sorted;
        if rewritten {
            records.sort_by(record_order);
            self.write_all(&records)?;
        }
        Ok(MergeOutcome { added, total: records.len(), rewritten, warnings })
    }

    fn write_all(&self, records: &[SweepRecord]) -> Result<()> {
        if let Some(parent) = self.path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        let mut tmp_name = self.path.as_os_str().to_owned();
        tmp_name.push(".tmp");
        let tmp = PathBuf::from(tmp_name);
        let io = |e| CliError::io(&tmp, e);
        let mut text = String::new();
        for r in records {
            text.push_str(&serde_json::to_string(r).expect("records serialize"));
            text.push('\n');
        }
        let mut file = fs::File::create(&tmp).map_err(io)?;
        file.write_all(text.as_bytes()).map_err(io)?;
        file.sync_all().map_err(io)?;
        fs::rename(&tmp, &self.path).map_err(|e| CliError::io(&self.path, e))
    }
}

/// Starts the single writer thread of a sweep. Each received record is merged
/// at once, so an interrupted sweep resumes from everything finished so far.
pub fn spawn_writer(store: SweepStore) -> (mpsc::Sender<SweepRecord>, thread::JoinHandle<Result<MergeOutcome>>) {
    let (tx, rx) = mpsc::channel::<SweepRecord>();
    let handle = thread::spawn(move || {
        let mut total = store.merge(std::iter::empty())?;
        for record in rx {
            let step = store.merge([record])?;
            total.added += step.added;
            total.total = step.total;
            total.rewritten |= step.rewritten;
            total.warnings.extend(step.warnings);
        }
        Ok(total)
    });
    (tx, handle)
}
