//! Report emission: CSV files whose leading `#` lines embed the run
//! manifest (command, seed, config hash) so every artifact is traceable and
//! reruns with identical inputs are byte-identical.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::estimates::EstimateReport;
use crate::inequality::LemmaReport;
use crate::solver::StepLog;

/// Provenance of one CLI invocation.
///
/// The timestamp is kept for interactive display only; it is deliberately
/// not written into output files so reruns with the same config and seed
/// reproduce outputs byte for byte.
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub command: String,
    pub config_path: PathBuf,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub config_hash: u64,
    pub timestamp: std::time::SystemTime,
}

impl RunManifest {
    pub fn new(
        command: &str,
        config_path: &Path,
        out_dir: &Path,
        seed: u64,
        config_hash: u64,
    ) -> RunManifest {
        RunManifest {
            command: command.to_string(),
            config_path: config_path.to_path_buf(),
            out_dir: out_dir.to_path_buf(),
            seed,
            config_hash,
            timestamp: std::time::SystemTime::now(),
        }
    }

    /// The deterministic header block embedded at the top of every output.
    pub fn header(&self) -> String {
        format!(
            "# command: {}\n# seed: {}\n# config: {:016x}\n",
            self.command, self.seed, self.config_hash
        )
    }
}

/// Writes one CSV file under the manifest's output directory: manifest
/// header, column header, then rows.
pub fn write_csv(
    manifest: &RunManifest,
    file_name: &str,
    columns: &str,
    rows: &[String],
) -> Result<PathBuf> {
    fs::create_dir_all(&manifest.out_dir)?;
    let path = manifest.out_dir.join(file_name);
    let mut text = manifest.header();
    text.push_str(columns);
    text.push('\n');
    for r in rows {
        text.push_str(r);
        text.push('\n');
    }
    let mut fh = fs::File::create(&path)?;
    fh.write_all(text.as_bytes())?;
    Ok(path)
}

pub fn lemma_csv_columns() -> &'static str {
    "lemma_id,p,delta,n,samples,min_gap,calibrated_constant,seed"
}

pub fn lemma_csv_row(r: &LemmaReport) -> String {
    format!(
        "{},{},{},{},{},{:.6e},{},{}",
        r.lemma_id.as_str(),
        r.p,
        r.delta,
        r.n,
        r.samples,
        r.min_gap,
        r.calibrated_constant
            .map(|c| format!("{c:.6e}"))
            .unwrap_or_else(|| "-".into()),
        r.seed
    )
}

pub fn convergence_csv_columns() -> &'static str {
    "step,iters,residual"
}

pub fn convergence_csv_row(l: &StepLog) -> String {
    format!("{},{},{:.6e}", l.step, l.iters, l.residual)
}

/// Human-readable text summary of a batch of estimate reports.
pub fn estimate_summary(reports: &[EstimateReport]) -> String {
    let mut s = String::new();
    for r in reports {
        let _ = write!(s, "{r}");
    }
    s
}

/// Validates that the output directory exists (or can be created) and is
/// writable, per the manifest invariant.
pub fn ensure_writable(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let probe = dir.join(".write-probe");
    fs::write(&probe, b"ok").map_err(|e| {
        Error::InvalidInput(format!("output directory {} not writable: {e}", dir.display()))
    })?;
    fs::remove_file(&probe)?;
    Ok(())
}
