#![allow(dead_code)]

use std::path::{Path, PathBuf};

use sqlrank_core::harness::ExperimentConfig;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

/// Loads a fixture config and redirects its output into `out`.
pub fn fixture_config(rel: &str, out: &Path) -> ExperimentConfig {
    let mut config = ExperimentConfig::load(&fixtures().join(rel)).expect("fixture config loads");
    config.output_dir = out.to_path_buf();
    config
}

pub fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub fn expected(rel: &str) -> serde_json::Value {
    serde_json::from_str(&read(&fixtures().join(rel))).expect("expected.json parses")
}

/// Compares against a committed golden file. With `SQLRANK_BLESS=1` the
/// golden file is rewritten instead.
pub fn assert_golden(rel: &str, actual: &str) {
    let path = fixtures().join(rel);
    if std::env::var_os("SQLRANK_BLESS").is_some() {
        std::fs::write(&path, actual).unwrap();
        return;
    }
    assert_eq!(
        read(&path),
        actual,
        "{rel} differs from the committed golden file"
    );
}
