//! Feature bundles, manifests, temporal transforms, and the synthetic
//! temporality benchmark.

mod atmf;
mod manifest;
mod synth;
mod transform;

pub use atmf::{read_feature_bundle, write_feature_bundle, ATMF_MAGIC, ATMF_VERSION};
pub use manifest::{
    load_question_manifest, write_question_manifest, QType, QuestionRecord,
};
pub use synth::{generate_synthetic_dataset, oracle_answer, OracleVerdict, SignaturePools, SynthConfig};
pub use transform::{middle_clip_view, middle_index, shuffle_clips, ClipPermutation};

use crate::error::{CoreError, Result};
use crate::tensor::Tensor;
use std::collections::BTreeMap;
use std::path::Path;

/// Per-video clip features for the three streams (object, frame appearance,
/// motion). All streams share the clip count `T`; widths may differ.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBundle {
    pub video_id: String,
    pub object: Tensor,
    pub frame: Tensor,
    pub motion: Tensor,
}

impl FeatureBundle {
    pub fn new(video_id: String, object: Tensor, frame: Tensor, motion: Tensor) -> Result<Self> {
        let t_o = object.dims2()?.0;
        let t_r = frame.dims2()?.0;
        let t_m = motion.dims2()?.0;
        if t_o != t_r || t_o != t_m {
            return Err(CoreError::Shape {
                op: "feature_bundle",
                msg: format!("streams disagree on clip count: {t_o}/{t_r}/{t_m}"),
            });
        }
        if t_o == 0 {
            return Err(CoreError::Shape {
                op: "feature_bundle",
                msg: "clip count must be >= 1".into(),
            });
        }
        for (name, t) in [("object", &object), ("frame", &frame), ("motion", &motion)] {
            t.ensure_finite(&format!("{name} stream of {video_id}"))?;
        }
        Ok(FeatureBundle {
            video_id,
            object,
            frame,
            motion,
        })
    }

    /// Clip count shared by all three streams.
    pub fn t(&self) -> usize {
        self.object.dims2().expect("validated").0
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (
            self.object.dims2().expect("validated").1,
            self.frame.dims2().expect("validated").1,
            self.motion.dims2().expect("validated").1,
        )
    }
}

/// In-memory dataset: bundles keyed by video id plus the question list.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub bundles: BTreeMap<String, FeatureBundle>,
    pub questions: Vec<QuestionRecord>,
}

impl Dataset {
    pub fn from_parts(bundles: Vec<FeatureBundle>, questions: Vec<QuestionRecord>) -> Result<Self> {
        let map: BTreeMap<String, FeatureBundle> = bundles
            .into_iter()
            .map(|b| (b.video_id.clone(), b))
            .collect();
        for (i, q) in questions.iter().enumerate() {
            if !map.contains_key(&q.video_id) {
                return Err(CoreError::validation_at(
                    i + 1,
                    format!("question {} references missing video '{}'", q.question_id, q.video_id),
                ));
            }
        }
        Ok(Dataset {
            bundles: map,
            questions,
        })
    }

    /// Load `questions.jsonl` plus `features/<video_id>.atmf` from a directory.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let manifest = dir.join("questions.jsonl");
        let questions = load_question_manifest(&manifest)?;
        let mut bundles = Vec::new();
        let mut seen = std::collections::BTreeSet::new();
        for q in &questions {
            if seen.insert(q.video_id.clone()) {
                let path = dir.join("features").join(format!("{}.atmf", q.video_id));
                bundles.push(read_feature_bundle(&path)?);
            }
        }
        Dataset::from_parts(bundles, questions)
    }

    pub fn bundle(&self, video_id: &str) -> Result<&FeatureBundle> {
        self.bundles.get(video_id).ok_or_else(|| {
            CoreError::validation(format!("missing feature bundle for video '{video_id}'"))
        })
    }

    /// Write the dataset in the directory layout `load_dir` expects.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        let features = dir.join("features");
        std::fs::create_dir_all(&features).map_err(|e| CoreError::io(&features, e))?;
        for bundle in self.bundles.values() {
            let path = features.join(format!("{}.atmf", bundle.video_id));
            write_feature_bundle(&path, bundle)?;
        }
        write_question_manifest(&dir.join("questions.jsonl"), &self.questions)
    }
}
