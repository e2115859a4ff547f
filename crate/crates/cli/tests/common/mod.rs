#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use clpu_core::series::{write_csv, CsvSchema};
use clpu_core::EnergySeries;

pub fn run(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clpu"))
        .args(args)
        .current_dir(cwd)
        .env_remove("CLPU_CONFIG")
        .output()
        .expect("spawn clpu")
}

pub fn run_env(args: &[&str], cwd: &Path, env: &[(&str, &str)]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clpu"))
        .args(args)
        .current_dir(cwd)
        .envs(env.iter().copied())
        .output()
        .expect("spawn clpu")
}

pub fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[track_caller]
pub fn ok(o: &Output) {
    assert_eq!(code(o), 0, "stderr: {}", stderr(o));
}

pub fn write_series(dir: &Path, name: &str, s: &EnergySeries) -> PathBuf {
    let path = dir.join(name);
    write_csv(s, &CsvSchema::default(), fs::File::create(&path).unwrap()).unwrap();
    path
}

/// Relative path to contents for every file under `dir`.
pub fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

pub fn read_csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let header = rdr.headers().unwrap().iter().map(String::from).collect();
    let rows = rdr
        .records()
        .map(|r| r.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

/// Small-grid configuration that keeps CLI runs quick.
pub const FAST_CONFIG: &str = r#"
[search]
p_limit = 3
q_limit = 3

[backtest]
max_origins = 6

[synth]
n_series = 2
days = 9

[etp]
n_houses = 1
days = 20
outage_hours = [1.0, 2.0]
"#;
