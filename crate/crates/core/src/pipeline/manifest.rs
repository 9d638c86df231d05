use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub role: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Every file in an output directory except the manifest itself, sorted by path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_sha256: String,
    pub files: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn role_of(file: &str) -> &'static str {
    match file {
        "cohort.csv" => "cohort_snapshot",
        "cohort.json" => "cohort_summary",
        "risk_distribution.csv" => "risk_distribution",
        "utility_curve.csv" => "utility_curve",
        "table1.csv" => "table1",
        "capacity_table1.csv" => "capacity_table1",
        "utility_report.json" => "utility_report",
        "sweep.csv" => "sweep",
        "subgroups.csv" => "subgroups",
        f if f.starts_with("models/") => "model",
        f if f.starts_with("calibration/") => "calibration",
        _ => "other",
    }
}

fn walk(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            walk(root, &path, out)?;
        } else {
            out.push(path.strip_prefix(root).expect("walk stays under root").to_path_buf());
        }
    }
    Ok(())
}

/// Relative paths (with `/` separators) of all files under `dir`.
pub fn list_files(dir: &Path) -> std::io::Result<Vec<String>> {
    let mut paths = Vec::new();
    walk(dir, dir, &mut paths)?;
    let mut names: Vec<String> = paths
        .iter()
        .map(|p| p.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect::<Vec<_>>().join("/"))
        .collect();
    names.sort();
    Ok(names)
}

pub fn build_manifest(dir: &Path, config_sha256: String) -> std::io::Result<Manifest> {
    let mut files = Vec::new();
    for name in list_files(dir)? {
        if name == MANIFEST_FILE {
            continue;
        }
        let bytes = std::fs::read(dir.join(&name))?;
        files.push(ManifestEntry {
            role: role_of(&name).to_string(),
            sha256: sha256_hex(&bytes),
            bytes: bytes.len() as u64,
            file: name,
        });
    }
    Ok(Manifest { config_sha256, files })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_of_empty_input() {
        assert_eq!(sha256_hex(b""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }

    #[test]
    fn manifest_lists_nested_files_sorted() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("models")).unwrap();
        std::fs::write(dir.path().join("models/m.json"), b"{}").unwrap();
        std::fs::write(dir.path().join("table1.csv"), b"x").unwrap();
        std::fs::write(dir.path().join(MANIFEST_FILE), b"old").unwrap();
        let m = build_manifest(dir.path(), String::new()).unwrap();
        let names: Vec<&str> = m.files.iter().map(|f| f.file.as_str()).collect();
        assert_eq!(names, ["models/m.json", "table1.csv"]);
        assert_eq!(m.files[0].role, "model");
        assert_eq!(m.files[1].bytes, 1);
    }
}
