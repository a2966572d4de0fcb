#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use vultureboost::synth::two_blobs;

/// Writes a two-blob table with string labels `neg` / `pos` in a `label` column.
pub fn write_blobs_csv(path: &Path, n: usize, d: usize, separation: f64, seed: u64) {
    let (x, y) = two_blobs::<f64>(n, d, separation, seed);
    let mut w = csv::Writer::from_path(path).unwrap();
    let mut header: Vec<String> = x.feature_names().to_vec();
    header.push("label".into());
    w.write_record(&header).unwrap();
    for (row, &l) in x.rows().zip(y.labels()) {
        let mut fields: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        fields.push(if l == 1 { "pos" } else { "neg" }.into());
        w.write_record(&fields).unwrap();
    }
    w.flush().unwrap();
}

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_vultureboost"))
}

pub fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .env_remove("VULTUREBOOST_OUT")
        .output()
        .expect("binary runs")
}

/// Relative path and contents of every file under `dir`, sorted by path.
pub fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

pub fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}
