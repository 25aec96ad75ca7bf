//! Locating (trial, AE type) datasets on disk.
//!
//! A dataset file `T01__nausea.csv` is trial `T01`, AE type `nausea`; a stem
//! without `__` is used for both. Directories contribute every `*.csv` they
//! contain (not recursively), except `manifest.csv`. A manifest is a CSV with
//! columns `trial_id,ae_type_id,path`; relative paths resolve against the
//! manifest's own directory.

use std::fs::File;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use savvy_core::data::{read_subjects, validate_dataset};
use savvy_core::AnalysisDataset;

use crate::config::{ConfigError, RunConfig};

pub const MANIFEST_NAME: &str = "manifest.csv";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct DatasetSource {
    pub trial_id: String,
    pub ae_type_id: String,
    pub path: PathBuf,
}

impl DatasetSource {
    pub fn from_path(path: &Path) -> DatasetSource {
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let (trial, ae) = match stem.split_once("__") {
            Some((t, a)) => (t.to_string(), a.to_string()),
            None => (stem.clone(), stem.clone()),
        };
        DatasetSource { trial_id: trial, ae_type_id: ae, path: path.to_path_buf() }
    }

    pub fn load(&self) -> anyhow::Result<AnalysisDataset> {
        let file = File::open(&self.path).map_err(|e| anyhow::anyhow!("{}: {e}", self.path.display()))?;
        let records = read_subjects(file)?;
        Ok(validate_dataset(self.trial_id.clone(), self.ae_type_id.clone(), records)?)
    }
}

#[derive(Deserialize)]
struct ManifestRow {
    trial_id: String,
    ae_type_id: String,
    path: PathBuf,
}

pub fn read_manifest(path: &Path) -> Result<Vec<DatasetSource>, ConfigError> {
    let base = path.parent().unwrap_or(Path::new("."));
    let mut rdr = csv::Reader::from_path(path).map_err(|e| ConfigError(format!("manifest {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for row in rdr.deserialize::<ManifestRow>() {
        let row = row.map_err(|e| ConfigError(format!("manifest {}: {e}", path.display())))?;
        let resolved = if row.path.is_absolute() { row.path } else { base.join(row.path) };
        out.push(DatasetSource { trial_id: row.trial_id, ae_type_id: row.ae_type_id, path: resolved });
    }
    Ok(out)
}

fn csv_files_in(dir: &Path) -> Result<Vec<PathBuf>, ConfigError> {
    let entries = std::fs::read_dir(dir).map_err(|e| ConfigError(format!("{}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "csv"))
        .filter(|p| p.file_name().is_some_and(|n| n != MANIFEST_NAME))
        .collect();
    files.sort();
    Ok(files)
}

/// All datasets named by the config, in a stable order. Missing paths are a
/// configuration error; unreadable file contents surface later per dataset.
pub fn discover(cfg: &RunConfig) -> Result<Vec<DatasetSource>, ConfigError> {
    let mut out = Vec::new();
    if let Some(m) = &cfg.manifest {
        out.extend(read_manifest(m)?);
    }
    for input in &cfg.inputs {
        if input.is_dir() {
            out.extend(csv_files_in(input)?.iter().map(|p| DatasetSource::from_path(p)));
        } else if input.is_file() {
            out.push(DatasetSource::from_path(input));
        } else {
            return Err(ConfigError(format!("input {} does not exist", input.display())));
        }
    }
    let mut seen = std::collections::HashSet::new();
    for s in &out {
        if !seen.insert((s.trial_id.as_str(), s.ae_type_id.as_str())) {
            return Err(ConfigError(format!("dataset {}/{} listed twice", s.trial_id, s.ae_type_id)));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stem_naming() {
        let s = DatasetSource::from_path(Path::new("/x/T01__nausea.csv"));
        assert_eq!((s.trial_id.as_str(), s.ae_type_id.as_str()), ("T01", "nausea"));
        let plain = DatasetSource::from_path(Path::new("study.csv"));
        assert_eq!((plain.trial_id.as_str(), plain.ae_type_id.as_str()), ("study", "study"));
    }
}
