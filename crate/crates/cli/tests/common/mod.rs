#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use laconic::sparse::write_vectors_jsonl;
use laconic::SparseVector;

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_laconic")
}

pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl From<Output> for Outcome {
    fn from(o: Output) -> Self {
        Outcome {
            code: o.status.code().unwrap_or(-1),
            stdout: String::from_utf8_lossy(&o.stdout).into_owned(),
            stderr: String::from_utf8_lossy(&o.stderr).into_owned(),
        }
    }
}

pub fn laconic<I, S>(args: I) -> Outcome
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    Command::new(bin())
        .args(args)
        .env_remove("LACONIC_THREADS")
        .output()
        .expect("binary runs")
        .into()
}

pub fn laconic_ok<I, S>(args: I) -> Outcome
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    let out = laconic(args);
    assert_eq!(out.code, 0, "stderr: {}", out.stderr);
    out
}

pub fn write_jsonl(path: &Path, records: &[(String, SparseVector)]) {
    let mut buf = Vec::new();
    write_vectors_jsonl(&mut buf, records.iter().map(|(id, v)| (id.as_str(), v))).unwrap();
    std::fs::write(path, buf).unwrap();
}

pub fn path_str(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

pub fn in_dir(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}
