#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use memotion_core::dataset::store::{split_path, write_records};
use memotion_core::dataset::synthetic::{generate, MarginalCounts};
use memotion_core::dataset::{MemeRecord, Split};

pub fn memotion() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_memotion"));
    c.env_remove("SOURCE_DATE_EPOCH").env_remove("RUST_LOG");
    c
}

pub fn run(args: &[&str]) -> Output {
    memotion().args(args).output().expect("spawn memotion")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

pub fn balanced(n: usize, seed: u64, prefix: &str, image_dir: &Path) -> Vec<MemeRecord> {
    generate(&MarginalCounts::balanced(n), seed, prefix, Some(image_dir), 16).unwrap()
}

/// A labeled store with balanced train and dev splits and real image files.
pub fn toy_store(root: &Path, n_train: usize, n_dev: usize) -> PathBuf {
    let store = root.join("store");
    std::fs::create_dir_all(&store).unwrap();
    let images = root.join("images");
    write_records(&split_path(&store, Split::Train), &balanced(n_train, 1, "tr", &images)).unwrap();
    write_records(&split_path(&store, Split::Dev), &balanced(n_dev, 2, "dv", &images)).unwrap();
    store
}

/// Training overrides small enough for a test run.
pub fn quick_config(root: &Path) -> PathBuf {
    let path = root.join("quick.toml");
    std::fs::write(&path, "max_epochs = 2\nhidden_dim = 8\nlearning_rate = 1e-3\n").unwrap();
    path
}
