//! Batch loss construction, shared by the training loops and the gradient
//! checker so both exercise the same forward path.

use crate::autodiff::Node;
use crate::data::{FeatureBundle, QuestionRecord};
use crate::error::{CoreError, Result};
use crate::losses::{accl_loss, combined_objective, ContrastiveBatch, ObjectiveSample};
use crate::model::ModelForward;
use crate::tensor::{logsumexp_slice, softmax_slice};

/// One pretraining pair: a video aligned with its parsed action phrase.
pub struct AcclPair<'a> {
    pub bundle: &'a FeatureBundle,
    pub phrase: &'a str,
}

/// Contrastive loss over a batch, with in-batch negatives.
pub fn accl_batch_loss(fwd: &ModelForward, pairs: &[AcclPair]) -> Result<Node> {
    if pairs.len() < 2 {
        return Err(CoreError::validation(
            "contrastive batch needs at least 2 usable pairs",
        ));
    }
    let mut videos = Vec::with_capacity(pairs.len());
    let mut phrases = Vec::with_capacity(pairs.len());
    for pair in pairs {
        videos.push(fwd.encode_video(pair.bundle, fwd.cfg.use_pos_embed)?);
        phrases.push(fwd.encode_text(pair.phrase)?);
    }
    let batch = ContrastiveBatch::new(Node::concat_rows(&videos)?, Node::concat_rows(&phrases)?)?;
    accl_loss(&batch)
}

/// One fine-tuning sample. `shuffled` is set by the caller exactly when the
/// confusion term applies (temporal-sensitive question, TSC active, T >= 2).
pub struct FinetunePlan<'a> {
    pub record: &'a QuestionRecord,
    pub bundle: &'a FeatureBundle,
    pub shuffled: Option<FeatureBundle>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BatchStats {
    pub ce_sum: f64,
    pub ce_count: usize,
    pub cf_sum: f64,
    pub cf_count: usize,
}

fn entropy_of_logits(logits: &[f64]) -> f64 {
    let p = softmax_slice(logits);
    let expected: f64 = p.iter().zip(logits).map(|(pi, li)| pi * li).sum();
    logsumexp_slice(logits) - expected
}

/// Build the combined objective for one batch. Candidate text encodings are
/// shared between the clean and shuffled branches unless `stop_text_grad`
/// re-inserts them as constants.
pub fn finetune_batch_objective(
    fwd: &ModelForward,
    plans: &[FinetunePlan],
    ce_weight: f64,
    cf_weight: f64,
    stop_text_grad: bool,
) -> Result<(Node, BatchStats)> {
    if plans.is_empty() {
        return Err(CoreError::validation("empty fine-tuning batch"));
    }
    let mut samples = Vec::with_capacity(plans.len());
    let mut stats = BatchStats::default();
    for plan in plans {
        let record = plan.record;
        let logits = if fwd.cfg.open_ended {
            let f_qv = fwd.encode_video_oe(plan.bundle, &record.question_text)?;
            fwd.score_candidates_oe(&f_qv, &record.question_text, &record.candidates)?
        } else {
            let f_v = fwd.encode_video(plan.bundle, fwd.cfg.use_pos_embed)?;
            let mut f_qas = Vec::with_capacity(record.candidates.len());
            for cand in &record.candidates {
                let ids = fwd.vocab.encode_pair(&record.question_text, cand);
                f_qas.push(fwd.encode_text_ids(&ids)?);
            }
            let scores: Vec<Node> = f_qas
                .iter()
                .map(|f_qa| f_v.dot_row(f_qa))
                .collect::<Result<_>>()?;
            let logits = Node::concat_cols(&scores)?;

            if let Some(shuffled) = &plan.shuffled {
                let f_v_sh = fwd.encode_video(shuffled, fwd.cfg.use_pos_embed)?;
                let mut sh_scores = Vec::with_capacity(f_qas.len());
                for f_qa in &f_qas {
                    let text_node = if stop_text_grad {
                        fwd.graph.constant(f_qa.value())?
                    } else {
                        f_qa.clone()
                    };
                    sh_scores.push(f_v_sh.dot_row(&text_node)?);
                }
                let shuffled_logits = Node::concat_cols(&sh_scores)?;
                stats.cf_sum += entropy_of_logits(shuffled_logits.value().data());
                stats.cf_count += 1;
                let ce_val = {
                    let v = logits.value();
                    logsumexp_slice(v.data()) - v.data()[record.gold_index]
                };
                stats.ce_sum += ce_val;
                stats.ce_count += 1;
                samples.push(ObjectiveSample {
                    logits,
                    gold_index: record.gold_index,
                    sensitive: true,
                    shuffled_logits: Some(shuffled_logits),
                });
                continue;
            }
            logits
        };

        let ce_val = {
            let v = logits.value();
            logsumexp_slice(v.data()) - v.data()[record.gold_index]
        };
        stats.ce_sum += ce_val;
        stats.ce_count += 1;
        samples.push(ObjectiveSample {
            logits,
            gold_index: record.gold_index,
            sensitive: false,
            shuffled_logits: None,
        });
    }
    let loss = combined_objective(&samples, ce_weight, cf_weight)?;
    Ok((loss, stats))
}
