#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use horizon_core::{Label, RecordItem};
use sha2::{Digest, Sha256};

pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/scan")
}

pub fn horizon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_horizon"))
        .args(args)
        .output()
        .expect("spawn horizon")
}

pub fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Write records as a dataset CSV with columns `id,title,abstract,included`.
pub fn write_dataset(records: &[RecordItem], path: &Path) {
    let mut w = csv::Writer::from_path(path).unwrap();
    w.write_record(["id", "title", "abstract", "included"]).unwrap();
    for r in records {
        let flag = if r.label == Label::Include { "1" } else { "0" };
        w.write_record([r.id.as_str(), r.title.as_str(), r.reference_text.as_str(), flag])
            .unwrap();
    }
    w.flush().unwrap();
}

/// Flags that point `horizon simulate` at a dataset written by [`write_dataset`].
pub fn dataset_flags(path: &Path) -> Vec<String> {
    [
        "--dataset",
        path.to_str().unwrap(),
        "--text-col",
        "abstract",
        "--title-col",
        "title",
        "--id-col",
        "id",
        "--label-col",
        "included",
        "--positive",
        "1",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

/// sha256 of every file under `dir`, keyed by relative path.
pub fn checksums(dir: &Path) -> BTreeMap<String, String> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, String>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
                out.insert(rel, hex::encode(Sha256::digest(std::fs::read(&path).unwrap())));
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}
