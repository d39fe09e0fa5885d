//! Training objectives: action-centric contrastive loss, answer
//! cross-entropy, and the entropy confusion term, plus their composition.
//!
//! The contrastive loss is the negative-log (InfoNCE) form with raw
//! dot-product logits and no temperature; negatives are in-batch. All
//! log-sum-exp computation is max-subtracted. Reductions over a batch are
//! means, so loss magnitudes do not depend on batch size.

use crate::autodiff::Node;
use crate::error::{CoreError, Result};

/// Paired video/action-phrase vectors, `[B, d]` each. Every other phrase in
/// the batch is a negative, so `B >= 2`.
pub struct ContrastiveBatch {
    pub videos: Node,
    pub phrases: Node,
    batch: usize,
}

impl ContrastiveBatch {
    pub fn new(videos: Node, phrases: Node) -> Result<Self> {
        let (b, d) = videos.dims();
        let (b2, d2) = phrases.dims();
        if (b, d) != (b2, d2) {
            return Err(CoreError::Shape {
                op: "contrastive_batch",
                msg: format!("videos [{b}x{d}] vs phrases [{b2}x{d2}]"),
            });
        }
        if b < 2 {
            return Err(CoreError::validation(
                "contrastive batch needs B >= 2 (no negatives otherwise)",
            ));
        }
        Ok(ContrastiveBatch {
            videos,
            phrases,
            batch: b,
        })
    }

    pub fn batch_size(&self) -> usize {
        self.batch
    }
}

/// Mean over i of `-log( exp(s_ii) / sum_j exp(s_ij) )` where
/// `s_ij = dot(f_v[i], c[j])`.
pub fn accl_loss(batch: &ContrastiveBatch) -> Result<Node> {
    let logits = batch.videos.matmul(&batch.phrases.transpose()?)?;
    let lse = logits.logsumexp_rows()?;
    let positives = logits.take_diag()?;
    lse.sub(&positives)?.mean_all()
}

/// Logits over the candidate answers of one question, `[1, |A|]`.
pub struct AnswerDistribution {
    logits: Node,
}

impl AnswerDistribution {
    pub fn new(logits: Node) -> Result<Self> {
        let (r, a) = logits.dims();
        if r != 1 || a == 0 {
            return Err(CoreError::Shape {
                op: "answer_distribution",
                msg: format!("logits must be [1xA], got [{r}x{a}]"),
            });
        }
        Ok(AnswerDistribution { logits })
    }

    pub fn len(&self) -> usize {
        self.logits.dims().1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn logits(&self) -> &Node {
        &self.logits
    }

    /// Softmax probabilities; positive, sum to 1.
    pub fn probabilities(&self) -> Result<Node> {
        self.logits.softmax_rows()
    }
}

/// `-log p[gold]`, computed as `logsumexp(s) - s[gold]`.
pub fn cross_entropy(dist: &AnswerDistribution, gold_index: usize) -> Result<Node> {
    if gold_index >= dist.len() {
        return Err(CoreError::validation(format!(
            "gold index {gold_index} out of range for {} candidates",
            dist.len()
        )));
    }
    let lse = dist.logits.logsumexp_rows()?;
    let picked = dist.logits.slice_cols(gold_index, 1)?;
    lse.sub(&picked)
}

/// Entropy `H(p) = -sum p log p` of the predicted distribution, written as
/// `logsumexp(s) - sum(p * s)` so saturated logits stay finite. The combined
/// objective subtracts this term, so minimizing it maximizes entropy.
pub fn confusion_loss(dist: &AnswerDistribution) -> Result<Node> {
    let lse = dist.logits.logsumexp_rows()?;
    let p = dist.probabilities()?;
    let expected_logit = p.mul(&dist.logits)?.sum_rows()?;
    lse.sub(&expected_logit)
}

/// One question's contribution to the fine-tuning objective.
pub struct ObjectiveSample {
    pub logits: Node,
    pub gold_index: usize,
    pub sensitive: bool,
    /// Logits from the shuffled-video forward; required when `sensitive`.
    pub shuffled_logits: Option<Node>,
}

/// Mean over sensitive samples of `ce_weight * L_ce - cf_weight * L_cf`
/// plus mean over insensitive samples of `ce_weight * L_ce`. An
/// all-insensitive batch reduces to plain mean cross-entropy; an
/// all-sensitive batch omits the second term.
pub fn combined_objective(
    samples: &[ObjectiveSample],
    ce_weight: f64,
    cf_weight: f64,
) -> Result<Node> {
    if samples.is_empty() {
        return Err(CoreError::validation("combined objective over an empty batch"));
    }
    let mut sensitive_terms = Vec::new();
    let mut insensitive_terms = Vec::new();
    for sample in samples {
        let dist = AnswerDistribution::new(sample.logits.clone())?;
        let ce = cross_entropy(&dist, sample.gold_index)?.scale(ce_weight)?;
        if sample.sensitive {
            let shuffled = sample.shuffled_logits.clone().ok_or_else(|| {
                CoreError::validation("sensitive sample missing shuffled logits")
            })?;
            let h = confusion_loss(&AnswerDistribution::new(shuffled)?)?;
            sensitive_terms.push(ce.sub(&h.scale(cf_weight)?)?);
        } else {
            insensitive_terms.push(ce);
        }
    }
    let mean_of = |terms: &[Node]| -> Result<Node> { Node::concat_cols(terms)?.mean_all() };
    match (sensitive_terms.is_empty(), insensitive_terms.is_empty()) {
        (false, false) => mean_of(&sensitive_terms)?.add(&mean_of(&insensitive_terms)?),
        (false, true) => mean_of(&sensitive_terms),
        (true, false) => mean_of(&insensitive_terms),
        (true, true) => unreachable!("samples is non-empty"),
    }
}
