//! Answer selection from similarity scores.

use super::{ModelConfig, ModelForward, Vocab};
use crate::autodiff::Graph;
use crate::data::{FeatureBundle, QuestionRecord};
use crate::error::{CoreError, Result};
use crate::params::ParamSet;

/// Similarity scores over the candidate list plus the argmax choice.
/// Ties break toward the lowest index.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredAnswers {
    pub scores: Vec<f64>,
    pub chosen: usize,
}

impl ScoredAnswers {
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        if scores.is_empty() {
            return Err(CoreError::validation("no scores to choose from"));
        }
        let chosen = argmax_scores(&scores);
        Ok(ScoredAnswers { scores, chosen })
    }
}

/// First index of the maximal score (strict `>` keeps ties at the lowest).
pub fn argmax_scores(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Score one question against a frozen parameter snapshot (no gradients).
/// Open-ended mode routes through the cross-modal encoder and joint score.
pub fn score_record(
    params: &ParamSet,
    cfg: &ModelConfig,
    vocab: &Vocab,
    bundle: &FeatureBundle,
    record: &QuestionRecord,
) -> Result<ScoredAnswers> {
    let graph = Graph::new();
    let bound = params.bind_const(&graph)?;
    let fwd = ModelForward::new(&graph, cfg, &bound, vocab);
    let logits = if cfg.open_ended {
        let f_qv = fwd.encode_video_oe(bundle, &record.question_text)?;
        fwd.score_candidates_oe(&f_qv, &record.question_text, &record.candidates)?
    } else {
        let f_v = fwd.encode_video(bundle, cfg.use_pos_embed)?;
        fwd.score_candidates(&f_v, &record.question_text, &record.candidates)?
    };
    ScoredAnswers::new(logits.value().data().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{Graph, Node};
    use crate::tensor::Tensor;

    #[test]
    fn all_zero_scores_choose_index_zero() {
        let s = ScoredAnswers::new(vec![0.0, 0.0, 0.0]).unwrap();
        assert_eq!(s.chosen, 0);
    }

    #[test]
    fn scaling_scores_preserves_argmax() {
        let scores = vec![0.2, -0.4, 0.9, 0.1];
        let chosen = argmax_scores(&scores);
        let scaled: Vec<f64> = scores.iter().map(|s| s * 3.5).collect();
        assert_eq!(argmax_scores(&scaled), chosen);
    }

    #[test]
    fn hand_set_encodings_give_hand_computed_dots() {
        // five candidates with hand-set 3-d encodings
        let g = Graph::new();
        let f_v = g.constant(Tensor::row(vec![1.0, 2.0, -1.0]).unwrap()).unwrap();
        let cands = [
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![1.0, 1.0, 1.0],
            vec![-1.0, 0.5, 2.0],
        ];
        let mut scores = Vec::new();
        for c in &cands {
            let cn = g.constant(Tensor::row(c.clone()).unwrap()).unwrap();
            scores.push(f_v.dot_row(&cn).unwrap());
        }
        let logits = Node::concat_cols(&scores).unwrap().value();
        assert_eq!(logits.data(), &[1.0, 2.0, -1.0, 2.0, -2.0]);
        // tie between index 1 and 3 resolves to 1
        assert_eq!(argmax_scores(logits.data()), 1);
    }

    #[test]
    fn orthogonal_video_vector_scores_zero_everywhere() {
        let g = Graph::new();
        let f_v = g.constant(Tensor::row(vec![0.0, 0.0, 1.0]).unwrap()).unwrap();
        let cands = [vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]];
        let mut scores = Vec::new();
        for c in &cands {
            let cn = g.constant(Tensor::row(c.clone()).unwrap()).unwrap();
            scores.push(f_v.dot_row(&cn).unwrap());
        }
        let logits = Node::concat_cols(&scores).unwrap().value();
        assert_eq!(logits.data(), &[0.0, 0.0]);
        let picked = ScoredAnswers::new(logits.data().to_vec()).unwrap();
        assert_eq!(picked.chosen, 0);
    }

    #[test]
    fn oe_score_is_product_of_dot_and_cosine() {
        let g = Graph::new();
        let f_qv = g.constant(Tensor::row(vec![2.0, 0.0, 1.0]).unwrap()).unwrap();
        let f_q = g.constant(Tensor::row(vec![1.0, 1.0, 0.0]).unwrap()).unwrap();
        let f_a = g.constant(Tensor::row(vec![0.0, 2.0, 2.0]).unwrap()).unwrap();
        let dot = f_qv.dot_row(&f_a).unwrap();
        let cos = crate::nn::cosine_similarity(&f_q, &f_a).unwrap();
        let score = dot.mul(&cos).unwrap().scalar_value();
        // dot = 2, cos = 2 / (sqrt(2) * sqrt(8)) = 0.5
        assert!((score - 1.0).abs() < 1e-12);
    }

    #[test]
    fn oe_orthogonal_texts_score_zero_regardless_of_video() {
        let g = Graph::new();
        let f_qv = g.constant(Tensor::row(vec![5.0, -3.0]).unwrap()).unwrap();
        let f_q = g.constant(Tensor::row(vec![1.0, 0.0]).unwrap()).unwrap();
        let f_a = g.constant(Tensor::row(vec![0.0, 1.0]).unwrap()).unwrap();
        let dot = f_qv.dot_row(&f_a).unwrap();
        let cos = crate::nn::cosine_similarity(&f_q, &f_a).unwrap();
        assert_eq!(dot.mul(&cos).unwrap().scalar_value(), 0.0);
    }

    #[test]
    fn oe_video_factor_is_linear() {
        let g = Graph::new();
        let f_q = g.constant(Tensor::row(vec![1.0, 2.0]).unwrap()).unwrap();
        let f_a = g.constant(Tensor::row(vec![2.0, 1.0]).unwrap()).unwrap();
        let cos = crate::nn::cosine_similarity(&f_q, &f_a).unwrap();
        let v1 = g.constant(Tensor::row(vec![1.0, 1.0]).unwrap()).unwrap();
        let v2 = v1.scale(2.0).unwrap();
        let s1 = v1.dot_row(&f_a).unwrap().mul(&cos).unwrap().scalar_value();
        let s2 = v2.dot_row(&f_a).unwrap().mul(&cos).unwrap().scalar_value();
        assert!((s2 - 2.0 * s1).abs() < 1e-12);
    }
}
