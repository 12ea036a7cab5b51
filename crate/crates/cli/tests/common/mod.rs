#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;

use serde_json::json;

/// A small bench and model that train in about a second.
pub fn tiny_config(out: &Path) -> serde_json::Value {
    json!({
        "data": { "bench": {
            "channels": 4, "height": 8, "width": 8,
            "n_train": 256, "n_test_normal": 12, "n_test_anomalous": 12,
            "seed": 3
        }},
        "train": {
            "epochs": 8, "batch_size": 32, "warmup_epochs": 2, "seed": 1,
            "model": { "depth": 1, "width": 32, "time_dim": 16 }
        },
        "out_height": 16,
        "out_width": 16,
        "output_dir": out,
    })
}

pub fn write_config(dir: &Path, value: &serde_json::Value) -> PathBuf {
    std::fs::create_dir_all(dir).unwrap();
    let path = dir.join("run.json");
    std::fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}

/// Runs the command in-process and returns its exit code.
pub fn run(args: &[&str]) -> i32 {
    let mut all = vec!["inversion-ad"];
    all.extend_from_slice(args);
    inversion_ad_cli::run(all)
}

pub fn binary(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_inversion-ad"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .unwrap()
}

pub fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{}: {e}", dir.join(name).display()))
}

/// Output dir holding a model trained once with [`tiny_config`], and its config file.
pub fn trained() -> &'static (PathBuf, PathBuf) {
    static CELL: OnceLock<(PathBuf, PathBuf)> = OnceLock::new();
    CELL.get_or_init(|| {
        let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join(format!("fixture-{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&dir);
        let cfg = write_config(&dir, &tiny_config(&dir));
        assert_eq!(run(&["train", "--config", cfg.to_str().unwrap()]), 0);
        (dir, cfg)
    })
}
