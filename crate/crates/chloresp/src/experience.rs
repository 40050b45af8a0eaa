//! JSONL persistence of per-step experience records.
//!
//! One JSON object per line; the reader skips malformed lines with a warning
//! count instead of failing the whole file, so partially corrupted logs stay
//! usable for ingestion.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::env::Trajectory;
use crate::error::{Error, Result};
use crate::reward::RewardComponents;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecordReward {
    pub penalty: f64,
    pub bonus: f64,
    pub cost: f64,
    pub total: f64,
}

impl From<RewardComponents> for RecordReward {
    fn from(r: RewardComponents) -> Self {
        Self {
            penalty: r.penalty_cl,
            bonus: r.bonus_cl,
            cost: r.cost_cl,
            total: r.total,
        }
    }
}

/// One timestep of one rollout, with full provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperienceRecord {
    pub iteration: usize,
    pub scenario_seed: u64,
    pub genome_id: u64,
    pub t: usize,
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub reward_components: RecordReward,
}

/// Flatten a trajectory into per-step records.
pub fn records_from_trajectory(
    traj: &Trajectory,
    iteration: usize,
    scenario_seed: u64,
    genome_id: u64,
) -> Vec<ExperienceRecord> {
    traj.steps
        .iter()
        .map(|s| ExperienceRecord {
            iteration,
            scenario_seed,
            genome_id,
            t: s.t,
            obs: s.obs.clone(),
            action: s.action.clone(),
            reward_components: s.reward.into(),
        })
        .collect()
}

/// Append-only JSONL writer with per-batch flushing.
pub struct ExperienceWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl ExperienceWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        })
    }

    pub fn append(path: &Path) -> Result<Self> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        })
    }

    pub fn write_batch(&mut self, records: &[ExperienceRecord]) -> Result<()> {
        for record in records {
            let line =
                serde_json::to_string(record).map_err(|e| Error::json(&self.path, e))?;
            self.out
                .write_all(line.as_bytes())
                .and_then(|_| self.out.write_all(b"\n"))
                .map_err(|e| Error::io(&self.path, e))?;
        }
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Read every well-formed record, returning the records and the number of
/// malformed lines skipped. If `expected_arity` is given, a well-formed
/// record with the wrong obs/action arity fails the whole read.
pub fn read_experience(
    path: &Path,
    expected_arity: Option<(usize, usize)>,
) -> Result<(Vec<ExperienceRecord>, usize)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    let mut skipped = 0usize;
    for line in reader.lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<ExperienceRecord>(&line) {
            Ok(record) => {
                if let Some((k, m)) = expected_arity {
                    if record.obs.len() != k || record.action.len() != m {
                        return Err(Error::Data(format!(
                            "experience record arity {}x{} does not match configured {k}x{m}",
                            record.obs.len(),
                            record.action.len()
                        )));
                    }
                }
                records.push(record);
            }
            Err(_) => skipped += 1,
        }
    }
    Ok((records, skipped))
}
