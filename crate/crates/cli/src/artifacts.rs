//! Run artifacts on disk. Every file goes through a temporary sibling and a
//! rename, so readers never see a half-written log.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};

use qlm_core::model::Checkpoint;
use qlm_core::optim::EpochRecord;
use qlm_core::training::StageSummary;

pub const EPOCHS_CSV: &str = "epochs.csv";
pub const CHECKPOINT_JSON: &str = "checkpoint.json";
pub const SUMMARY_JSON: &str = "summary.json";
pub const CONFIG_JSON: &str = "config.json";
pub const STAGE_SUMMARY_CSV: &str = "stage_summary.csv";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub start_rms: f64,
    pub finish_rms: f64,
    pub epochs_run: usize,
    pub wall_ms: u64,
    pub stalled: bool,
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let name = path.file_name().context("artifact path has no file name")?.to_string_lossy();
    let tmp = dir.join(format!(".{name}.tmp"));
    {
        let mut f = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).with_context(|| format!("renaming {} into place", path.display()))
}

fn csv_bytes<T: Serialize>(rows: &[T]) -> anyhow::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    Ok(w.into_inner().map_err(|e| anyhow::anyhow!("csv buffer: {e}"))?)
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> anyhow::Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    r.deserialize().map(|row| row.with_context(|| format!("parsing {}", path.display()))).collect()
}

pub fn write_epochs(dir: &Path, records: &[EpochRecord]) -> anyhow::Result<()> {
    write_atomic(&dir.join(EPOCHS_CSV), &csv_bytes(records)?)
}

pub fn read_epochs(dir: &Path) -> anyhow::Result<Vec<EpochRecord>> {
    read_csv(&dir.join(EPOCHS_CSV))
}

pub fn write_stage_summary(dir: &Path, rows: &[StageSummary]) -> anyhow::Result<()> {
    write_atomic(&dir.join(STAGE_SUMMARY_CSV), &csv_bytes(rows)?)
}

pub fn read_stage_summary(dir: &Path) -> anyhow::Result<Vec<StageSummary>> {
    read_csv(&dir.join(STAGE_SUMMARY_CSV))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn read_checkpoint(path: &Path) -> anyhow::Result<Checkpoint> {
    read_json(path)
}

pub fn stage_dir(root: &Path, n_qubits: usize) -> PathBuf {
    root.join(format!("stage_{n_qubits}"))
}
