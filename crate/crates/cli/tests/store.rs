use std::fs;
use std::thread;

use memsq_cli::store::{spawn_writer, SweepStore};
use memsq_cli::CliError;
use memsq_core::criticality::{SweepKey, SweepRecord};
use memsq_core::parabolic::VerdictKind;
use proptest::prelude::*;

fn record(i: usize) -> SweepRecord {
    let key = SweepKey {
        lambda: 1.0 + (i % 7) as f64 * 2.5,
        pressure: (i / 7) as f64 * 0.5,
        domain: "interval(L=1)".into(),
        profile: "const(1)".into(),
        resolution: 64,
    };
    let t_hat = (!i.is_multiple_of(3)).then(|| 1.0 / (3.0 * key.lambda));
    let verdict = if t_hat.is_some() { VerdictKind::Quenched } else { VerdictKind::Global };
    SweepRecord::new(key, verdict, t_hat, 0.125 * i as f64, None)
}

fn store_in(dir: &tempfile::TempDir) -> SweepStore {
    SweepStore::new(dir.path().join("sweep.jsonl"))
}

#[test]
fn three_records_then_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let store = store_in(&dir);
    let out = store.merge((0..3).map(record)).unwrap();
    assert_eq!((out.added, out.total), (3, 3));
    let first = fs::read_to_string(store.path()).unwrap();
    assert_eq!(first.lines().count(), 3);

    let again = store.merge((0..3).map(record)).unwrap();
    assert_eq!(again.added, 0);
    assert!(!again.rewritten);
    assert_eq!(fs::read_to_string(store.path()).unwrap(), first);
}

#[test]
fn existing_records_are_never_replaced() {
    let dir = tempfile::tempdir().unwrap();
    let store = store_in(&dir);
    store.merge([record(4)]).unwrap();
    let mut changed = record(4);
    changed.seconds = 99.0;
    store.merge([changed, record(5)]).unwrap();
    let loaded = store.load().unwrap().records;
    assert_eq!(loaded.len(), 2);
    assert_eq!(loaded.iter().find(|r| r.hash == record(4).hash).unwrap().seconds, record(4).seconds);
}

#[test]
fn truncated_trailing_line_is_dropped_with_warning() {
    let dir = tempfile::tempdir().unwrap();
    let store = store_in(&dir);
    store.merge((0..4).map(record)).unwrap();
    let text = fs::read_to_string(store.path()).unwrap();
    let cut = text.len() - 20;
    fs::write(store.path(), &text[..cut]).unwrap();

    let loaded = store.load().unwrap();
    assert_eq!(loaded.records.len(), 3);
    assert_eq!(loaded.warnings.len(), 1);

    let out = store.merge((0..6).map(record)).unwrap();
    assert_eq!(out.warnings.len(), 1);
    assert_eq!(out.total, 6);
    assert!(store.load().unwrap().warnings.is_empty());
}

#[test]
fn valid_after_truncation_at_every_line_boundary() {
    let dir = tempfile::tempdir().unwrap();
    let store = store_in(&dir);
    store.merge((0..8).map(record)).unwrap();
    let text = fs::read_to_string(store.path()).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    for k in 0..=lines.len() {
        let prefix: String = lines[..k].iter().map(|l| format!("{l}\n")).collect();
        fs::write(store.path(), prefix).unwrap();
        let loaded = store.load().unwrap();
        assert_eq!(loaded.records.len(), k);
        assert!(loaded.warnings.is_empty());
    }
}

#[test]
fn corrupt_interior_line_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let store = store_in(&dir);
    store.merge((0..3).map(record)).unwrap();
    let mut lines: Vec<String> = fs::read_to_string(store.path()).unwrap().lines().map(String::from).collect();
    lines[1] = "{garbage".into();
    fs::write(store.path(), lines.join("\n") + "\n").unwrap();
    match store.load() {
        Err(CliError::CorruptStore { line, .. }) => assert_eq!(line, 2),
        other => panic!("expected corrupt store, got {other:?}"),
    }
}

#[test]
fn concurrent_producers_through_the_writer() {
    let dir = tempfile::tempdir().unwrap();
    let store = store_in(&dir);
    let (tx, writer) = spawn_writer(store.clone());
    let producers: Vec<_> = (0..4)
        .map(|p| {
            let tx = tx.clone();
            thread::spawn(move || {
                for i in (p..20).step_by(4) {
                    tx.send(record(i)).unwrap();
                    tx.send(record(i)).unwrap();
                }
            })
        })
        .collect();
    drop(tx);
    for p in producers {
        p.join().unwrap();
    }
    let out = writer.join().unwrap().unwrap();
    assert_eq!(out.total, 20);

    let reference = SweepStore::new(dir.path().join("reference.jsonl"));
    reference.merge((0..20).map(record)).unwrap();
    assert_eq!(fs::read(store.path()).unwrap(), fs::read(reference.path()).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn any_merge_order_gives_the_sorted_union(
        batches in prop::collection::vec(prop::collection::vec(0usize..30, 0..10), 1..6),
        order in prop::collection::vec(any::<prop::sample::Index>(), 6),
    ) {
        let dir = tempfile::tempdir().unwrap();
        let store = store_in(&dir);
        let mut batches = batches;
        for (k, idx) in order.iter().enumerate().take(batches.len()) {
            let j = idx.index(batches.len());
            batches.swap(k, j);
        }
        for b in &batches {
            store.merge(b.iter().map(|&i| record(i))).unwrap();
        }
        let mut all: Vec<usize> = batches.concat();
        all.sort();
        all.dedup();
        let reference = SweepStore::new(dir.path().join("reference.jsonl"));
        reference.merge(all.iter().rev().map(|&i| record(i))).unwrap();
        let got = fs::read(store.path()).unwrap_or_default();
        let want = fs::read(reference.path()).unwrap_or_default();
        prop_assert_eq!(got, want);
    }
}
