mod common;

use common::*;
use deeprft::io::{Checkpoint, RunConfig};

#[test]
fn runs_checkpoints_and_resumes_are_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let p = persistence_report(dir.path());
    assert!(p.runs_identical, "{p:?}");
    assert!(p.save_load_identical, "{p:?}");
    assert!(p.resume_identical, "{p:?}");
}

#[test]
fn different_seeds_give_different_checkpoints() {
    let cfg = tiny_run(2);
    let mut other = cfg.clone();
    other.train.seed += 1;
    let a = Checkpoint::from_state(&cfg, &run_to(&cfg, None)).encode();
    let b = Checkpoint::from_state(&other, &run_to(&other, None)).encode();
    assert_ne!(a, b);
}

#[test]
fn corrupted_checkpoints_are_rejected() {
    let cfg = tiny_run(1);
    let bytes = Checkpoint::from_state(&cfg, &run_to(&cfg, None)).encode();
    assert!(Checkpoint::decode(&bytes[..bytes.len() - 1]).is_err());
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(Checkpoint::decode(&extra).is_err());
    let mut magic = bytes.clone();
    magic[0] = b'X';
    assert!(Checkpoint::decode(&magic).is_err());
    let mut version = bytes;
    version[4] = 9;
    assert!(Checkpoint::decode(&version).is_err());
}

#[test]
fn config_text_round_trips() {
    let cfg = tiny_run(7);
    assert_eq!(RunConfig::parse(&cfg.to_ini()).unwrap(), cfg);
}
