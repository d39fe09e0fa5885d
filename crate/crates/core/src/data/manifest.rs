//! JSON-lines question manifests.

use crate::error::{CoreError, Result};
use crate::qparse::{self, Lexicon};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QType {
    Causal,
    Temporal,
    Descriptive,
    #[default]
    Other,
}

impl QType {
    pub fn key(&self) -> &'static str {
        match self {
            QType::Causal => "causal",
            QType::Temporal => "temporal",
            QType::Descriptive => "descriptive",
            QType::Other => "other",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuestionRecord {
    pub question_id: String,
    pub video_id: String,
    pub question_text: String,
    pub candidates: Vec<String>,
    pub gold_index: usize,
    #[serde(default)]
    pub qtype: QType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action_phrase: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temporal_sensitive: Option<bool>,
}

impl QuestionRecord {
    pub fn validate(&self, line: Option<usize>) -> Result<()> {
        let fail = |msg: String| CoreError::Validation { line, msg };
        if self.candidates.len() < 2 {
            return Err(fail(format!(
                "question {}: needs >= 2 candidates, got {}",
                self.question_id,
                self.candidates.len()
            )));
        }
        if self.gold_index >= self.candidates.len() {
            return Err(fail(format!(
                "question {}: gold_index {} out of range for {} candidates",
                self.question_id,
                self.gold_index,
                self.candidates.len()
            )));
        }
        if let Some(phrase) = &self.action_phrase {
            if !self.question_text.contains(phrase.as_str()) {
                return Err(fail(format!(
                    "question {}: action_phrase {phrase:?} is not a substring of the question text",
                    self.question_id
                )));
            }
        }
        Ok(())
    }

    /// Fill `action_phrase` and `temporal_sensitive` where absent; fields
    /// already present in the manifest win over the chunker.
    pub fn annotate(&mut self, lex: &Lexicon) {
        if self.action_phrase.is_none() {
            self.action_phrase = qparse::extract_action_phrase(&self.question_text, lex);
        }
        if self.temporal_sensitive.is_none() {
            self.temporal_sensitive =
                Some(qparse::classify_temporal_sensitivity(&self.question_text, lex));
        }
    }
}

pub fn load_question_manifest(path: &Path) -> Result<Vec<QuestionRecord>> {
    let file = std::fs::File::open(path).map_err(|e| CoreError::io(path, e))?;
    let reader = std::io::BufReader::new(file);
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| CoreError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: QuestionRecord = serde_json::from_str(&line).map_err(|e| CoreError::Json {
            line: Some(line_no),
            source: e,
        })?;
        record.validate(Some(line_no))?;
        records.push(record);
    }
    Ok(records)
}

pub fn write_question_manifest(path: &Path, records: &[QuestionRecord]) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|e| CoreError::io(path, e))?;
    for record in records {
        let line = serde_json::to_string(record).map_err(|e| CoreError::Json {
            line: None,
            source: e,
        })?;
        writeln!(file, "{line}").map_err(|e| CoreError::io(path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(gold: usize, n: usize) -> QuestionRecord {
        QuestionRecord {
            question_id: "q1".into(),
            video_id: "v1".into(),
            question_text: "what happens after waving the flag?".into(),
            candidates: (0..n).map(|i| format!("a{i}")).collect(),
            gold_index: gold,
            qtype: QType::Temporal,
            action_phrase: None,
            temporal_sensitive: None,
        }
    }

    #[test]
    fn empty_file_gives_empty_list() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        std::fs::write(&path, "").unwrap();
        assert!(load_question_manifest(&path).unwrap().is_empty());
    }

    #[test]
    fn five_candidates_gold_four_is_accepted() {
        assert!(record(4, 5).validate(None).is_ok());
    }

    #[test]
    fn gold_index_boundary_is_rejected_with_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        let good = serde_json::to_string(&record(4, 5)).unwrap();
        let bad = serde_json::to_string(&record(5, 5)).unwrap();
        std::fs::write(&path, format!("{good}\n{bad}\n")).unwrap();
        match load_question_manifest(&path) {
            Err(CoreError::Validation { line: Some(2), .. }) => {}
            other => panic!("expected validation error at line 2, got {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("extra.jsonl");
        std::fs::write(
            &path,
            r#"{"question_id":"q","video_id":"v","question_text":"x?","candidates":["a","b"],"gold_index":0,"bogus":1}"#,
        )
        .unwrap();
        assert!(matches!(
            load_question_manifest(&path),
            Err(CoreError::Json { line: Some(1), .. })
        ));
    }

    #[test]
    fn action_phrase_must_be_substring() {
        let mut r = record(0, 3);
        r.action_phrase = Some("not in the text".into());
        assert!(r.validate(None).is_err());
        r.action_phrase = Some("waving the flag".into());
        assert!(r.validate(None).is_ok());
    }

    #[test]
    fn missing_qtype_defaults_to_other() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("noqtype.jsonl");
        std::fs::write(
            &path,
            r#"{"question_id":"q","video_id":"v","question_text":"x?","candidates":["a","b"],"gold_index":0}"#,
        )
        .unwrap();
        let records = load_question_manifest(&path).unwrap();
        assert_eq!(records[0].qtype, QType::Other);
    }

    #[test]
    fn annotate_fills_missing_fields_and_keeps_present_ones() {
        let lex = Lexicon::builtin();
        let mut r = record(0, 3);
        r.annotate(lex);
        assert_eq!(r.action_phrase.as_deref(), Some("waving the flag"));
        assert_eq!(r.temporal_sensitive, Some(true));

        let mut pre = record(0, 3);
        pre.action_phrase = Some("waving".into());
        pre.annotate(lex);
        assert_eq!(pre.action_phrase.as_deref(), Some("waving"));
    }

    #[test]
    fn round_trip_preserves_records() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rt.jsonl");
        let records = vec![record(0, 3), record(2, 4)];
        write_question_manifest(&path, &records).unwrap();
        assert_eq!(load_question_manifest(&path).unwrap(), records);
    }
}
