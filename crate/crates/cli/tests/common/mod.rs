#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

/// A pipeline small enough to run end to end in about a second.
pub const TINY: &str = "\
scales = 16,32
channels = 4,8
activations = tanh,relu
synth_train = 6
synth_test = 3
synth_size = 96
max_iterations = 40
batch_size = 8
log_every = 10
cap = 50
superpixels = 60
strategy = maxa,mean,resize
";

pub fn write_config(dir: &Path, run_id: &str, body: &str) -> PathBuf {
    let path = dir.join(format!("{run_id}.cfg"));
    let text = format!("runs_dir = {}\nrun_id = {run_id}\n{body}", dir.join("runs").display());
    fs::write(&path, text).unwrap();
    path
}

pub fn forge(args: &[&str]) -> Output {
    forge_env(args, &[])
}

pub fn forge_in(dir: &Path, args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_forge"));
    cmd.current_dir(dir).args(args).env_remove("FORGE_CONFIG");
    cmd.output().expect("forge binary runs")
}

pub fn forge_env(args: &[&str], env: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_forge"));
    cmd.args(args).env_remove("FORGE_CONFIG");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("forge binary runs")
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Relative path to contents of every file under `root`, skipping `logs/`.
pub fn artifacts(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            let rel = path.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
            if rel == "logs" {
                continue;
            }
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

/// Names of files that differ or exist on one side only.
pub fn differences(a: &BTreeMap<String, Vec<u8>>, b: &BTreeMap<String, Vec<u8>>) -> Vec<String> {
    let mut keys: Vec<&String> = a.keys().chain(b.keys()).collect();
    keys.sort();
    keys.dedup();
    keys.into_iter().filter(|k| a.get(*k) != b.get(*k)).cloned().collect()
}
