#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const BASE_CONFIG: &str = r#"seed = 3

[corpus]
path = "corpus.jsonl"

[lexicon]
path = "lexicon.tsv"

[views]
sentiment = 1.0

[[views.external]]
path = "planted.csv"

[fusion]
latent_dim = 4

[output]
features = "out/features.csv"
model = "out/model.json"
metrics = "out/metrics.json"
ablation = "out/ablation.csv"
predictions = "out/predictions.jsonl"
"#;

/// Fixture directory holding the synthetic two-task corpus and a config.
pub fn fixture(posts_per_class: usize, config: &str) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    medsev::synthetic::write_fixture(dir.path(), posts_per_class, 17).unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, config).unwrap();
    (dir, cfg)
}

pub fn medsev(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_medsev")).args(args).output().unwrap()
}

pub fn run_ok(args: &[&str]) -> Output {
    let out = medsev(args);
    assert!(
        out.status.success(),
        "medsev {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}
