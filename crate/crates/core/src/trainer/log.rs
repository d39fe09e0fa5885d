//! Append-only JSON-lines training log.

use crate::error::{CoreError, Result};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub stage: String,
    pub epoch: usize,
    pub lr: f64,
    /// Mean objective value over the epoch.
    pub loss: f64,
    pub samples: usize,
    pub batches: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss_ce: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss_cf: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped_no_phrase: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped_confusion_t1: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_acc_all: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_s: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    records: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn new() -> Self {
        TrainLog::default()
    }

    pub fn records(&self) -> &[EpochRecord] {
        &self.records
    }

    /// Epochs must be strictly increasing within a stage.
    pub fn append(&mut self, record: EpochRecord) -> Result<()> {
        if let Some(last) = self
            .records
            .iter()
            .rev()
            .find(|r| r.stage == record.stage)
        {
            if record.epoch <= last.epoch {
                return Err(CoreError::validation(format!(
                    "epoch {} not greater than previous {} in stage '{}'",
                    record.epoch, last.epoch, record.stage
                )));
            }
        }
        self.records.push(record);
        Ok(())
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).map_err(|e| CoreError::Json {
                line: None,
                source: e,
            })?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path).map_err(|e| CoreError::io(path, e))?;
        file.write_all(self.to_jsonl()?.as_bytes())
            .map_err(|e| CoreError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<TrainLog> {
        let file = std::fs::File::open(path).map_err(|e| CoreError::io(path, e))?;
        let mut log = TrainLog::new();
        for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| CoreError::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let record: EpochRecord = serde_json::from_str(&line).map_err(|e| CoreError::Json {
                line: Some(i + 1),
                source: e,
            })?;
            log.append(record)?;
        }
        Ok(log)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(stage: &str, epoch: usize) -> EpochRecord {
        EpochRecord {
            stage: stage.into(),
            epoch,
            lr: 1e-3,
            loss: 0.5,
            samples: 10,
            batches: 2,
            loss_ce: None,
            loss_cf: None,
            skipped_no_phrase: None,
            skipped_confusion_t1: None,
            eval_acc_all: None,
            wall_s: None,
        }
    }

    #[test]
    fn epochs_must_increase_within_stage() {
        let mut log = TrainLog::new();
        log.append(rec("accl", 0)).unwrap();
        log.append(rec("accl", 1)).unwrap();
        assert!(log.append(rec("accl", 1)).is_err());
        // a new stage restarts numbering
        log.append(rec("finetune", 0)).unwrap();
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.log");
        let mut log = TrainLog::new();
        log.append(rec("accl", 0)).unwrap();
        log.append(rec("accl", 1)).unwrap();
        log.write(&path).unwrap();
        let loaded = TrainLog::load(&path).unwrap();
        assert_eq!(loaded, log);
    }

    #[test]
    fn optional_fields_are_omitted_from_lines() {
        let mut log = TrainLog::new();
        log.append(rec("accl", 0)).unwrap();
        let line = log.to_jsonl().unwrap();
        assert!(!line.contains("wall_s"));
        assert!(!line.contains("eval_acc_all"));
    }
}
