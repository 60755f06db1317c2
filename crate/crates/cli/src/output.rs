use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use svdformer::training::Metrics;
use svdformer::{Error, Matrix};

use crate::config::RunConfig;

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), Error> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let io_err = |e: std::io::Error| Error::Io {
        path: path.to_path_buf(),
        source: e,
    };
    fs::create_dir_all(dir).map_err(io_err)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
    tmp.write_all(contents).map_err(io_err)?;
    tmp.as_file().sync_all().map_err(io_err)?;
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}

pub fn matrix_csv(m: &Matrix) -> String {
    svdformer::graph::io::format_features(m)
}

/// Result of one seed of `train`, written as `report.json` in its run directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedReport {
    pub config: RunConfig,
    pub config_hash: String,
    pub seed: u64,
    pub best_epoch: usize,
    pub final_epoch: usize,
    pub stopped_early: bool,
    pub train: Option<Metrics>,
    pub val: Option<Metrics>,
    pub test: Option<Metrics>,
}

pub fn non_empty(m: Metrics) -> Option<Metrics> {
    (m.total > 0).then_some(m)
}
