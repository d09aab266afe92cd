//! Writing a run to its output directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::runner::RunOutput;

/// Facts about one invocation that are deliberately kept out of `report.json`.
#[derive(Clone, Debug, Serialize)]
pub struct RunMeta {
    pub wall_clock_seconds: f64,
    pub workers: Option<usize>,
    pub out_dir: PathBuf,
    pub artifacts: Vec<PathBuf>,
}

pub fn report_json(out: &RunOutput) -> String {
    let mut s = serde_json::to_string_pretty(&out.report).expect("reports serialize");
    s.push('\n');
    s
}

/// Writes the artifacts, `report.json` and `run_meta.json`; returns the
/// paths written.
pub fn write_outputs(
    dir: &Path,
    out: &RunOutput,
    wall_clock_seconds: f64,
    workers: Option<usize>,
) -> std::io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for a in &out.artifacts {
        let path = dir.join(&a.name);
        fs::write(&path, &a.bytes)?;
        written.push(path);
    }
    let report = dir.join("report.json");
    fs::write(&report, report_json(out))?;
    written.push(report);
    let meta = RunMeta { wall_clock_seconds, workers, out_dir: dir.to_path_buf(), artifacts: written.clone() };
    let meta_path = dir.join("run_meta.json");
    fs::write(&meta_path, serde_json::to_string_pretty(&meta).expect("meta serializes") + "\n")?;
    written.push(meta_path);
    Ok(written)
}
