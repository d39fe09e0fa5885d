//! Forward passes: video encoding (projections + fusion MLP + MSA +
//! mean-pool), text encoding, candidate scoring, and the open-ended variant
//! with cross-modal interaction.

use super::{ModelConfig, Vocab};
use crate::autodiff::{Graph, Node};
use crate::error::{CoreError, Result};
use crate::data::FeatureBundle;
use crate::nn::{self, AttnBlock};
use crate::params::BoundParams;

/// One graph's worth of bound parameters plus the config, with every encoder
/// entry point as a method. Forward passes over a frozen snapshot are
/// read-only; training binds trainable leaves instead.
pub struct ModelForward<'a> {
    pub graph: &'a Graph,
    pub cfg: &'a ModelConfig,
    pub params: &'a BoundParams,
    pub vocab: &'a Vocab,
}

impl<'a> ModelForward<'a> {
    pub fn new(
        graph: &'a Graph,
        cfg: &'a ModelConfig,
        params: &'a BoundParams,
        vocab: &'a Vocab,
    ) -> Self {
        ModelForward {
            graph,
            cfg,
            params,
            vocab,
        }
    }

    fn linear(&self, x: &Node, prefix: &str) -> Result<Node> {
        let w = self.params.node(&format!("{prefix}.w"))?;
        let b = self.params.node(&format!("{prefix}.b"))?;
        x.matmul(&w)?.add_row(&b)
    }

    /// Token sequence of a video before pooling: per-stream projections,
    /// per-clip concatenation, fusion MLP, MSA.
    pub fn encode_video_tokens(
        &self,
        bundle: &FeatureBundle,
        use_pos_embed: bool,
    ) -> Result<Node> {
        let t = bundle.t();
        if use_pos_embed && t > self.cfg.t_max {
            return Err(CoreError::Config(format!(
                "bundle '{}' has {t} clips but t_max is {}",
                bundle.video_id, self.cfg.t_max
            )));
        }
        let (d_o, d_r, d_m) = bundle.dims();
        if (d_o, d_r, d_m) != (self.cfg.dim_object, self.cfg.dim_frame, self.cfg.dim_motion) {
            return Err(CoreError::Config(format!(
                "bundle '{}' stream widths {:?} do not match the model ({}, {}, {})",
                bundle.video_id,
                (d_o, d_r, d_m),
                self.cfg.dim_object,
                self.cfg.dim_frame,
                self.cfg.dim_motion
            )));
        }
        let f_o = self.graph.constant(bundle.object.clone())?;
        let f_r = self.graph.constant(bundle.frame.clone())?;
        let f_m = self.graph.constant(bundle.motion.clone())?;

        let p_o = self.linear(&f_o, "video.proj.object")?;
        let p_r = self.linear(&f_r, "video.proj.frame")?;
        let p_m = self.linear(&f_m, "video.proj.motion")?;
        let cat = Node::concat_cols(&[p_o, p_r, p_m])?;
        let fused = nn::mlp(
            &cat,
            &self.params.node("video.fuse.l1.w")?,
            &self.params.node("video.fuse.l1.b")?,
            &self.params.node("video.fuse.l2.w")?,
            &self.params.node("video.fuse.l2.b")?,
        )?;

        let block = AttnBlock::bind(self.params, "video.msa")?;
        let pos = if use_pos_embed {
            Some(self.params.node("video.pos")?)
        } else {
            None
        };
        nn::multi_head_self_attention(&fused, &block, self.cfg.heads, pos.as_ref())
    }

    /// Global video vector `[1, d]`: encoder tokens mean-pooled over clips.
    pub fn encode_video(&self, bundle: &FeatureBundle, use_pos_embed: bool) -> Result<Node> {
        self.encode_video_tokens(bundle, use_pos_embed)?.mean_rows()
    }

    /// Text vector `[1, d]` from token ids: embedding lookup + text position
    /// embedding, MSA, mean-pool.
    pub fn encode_text_ids(&self, ids: &[usize]) -> Result<Node> {
        if ids.is_empty() {
            return Err(CoreError::validation("cannot encode empty text"));
        }
        if ids.len() > self.cfg.max_text_len {
            return Err(CoreError::validation(format!(
                "text of {} tokens exceeds max_text_len {}",
                ids.len(),
                self.cfg.max_text_len
            )));
        }
        let embed = self.params.node("text.embed")?;
        let (vocab_size, _) = embed.dims();
        if let Some(&bad) = ids.iter().find(|&&i| i >= vocab_size) {
            return Err(CoreError::validation(format!(
                "token id {bad} outside vocabulary of {vocab_size}"
            )));
        }
        let tokens = embed.gather_rows(ids)?;
        let block = AttnBlock::bind(self.params, "text.msa")?;
        let pos = self.params.node("text.pos")?;
        nn::multi_head_self_attention(&tokens, &block, self.cfg.heads, Some(&pos))?.mean_rows()
    }

    pub fn encode_text(&self, text: &str) -> Result<Node> {
        self.encode_text_ids(&self.vocab.encode(text))
    }

    /// Multi-choice logits `[1, |A|]`: each candidate is encoded as the
    /// `[question ; candidate]` pair and scored by raw dot product.
    pub fn score_candidates(
        &self,
        f_v: &Node,
        question: &str,
        candidates: &[String],
    ) -> Result<Node> {
        if candidates.is_empty() {
            return Err(CoreError::validation("empty candidate list"));
        }
        let mut scores = Vec::with_capacity(candidates.len());
        for cand in candidates {
            let ids = self.vocab.encode_pair(question, cand);
            let f_qa = self.encode_text_ids(&ids)?;
            scores.push(f_v.dot_row(&f_qa)?);
        }
        Node::concat_cols(&scores)
    }

    /// Open-ended video encoding: post-MSA tokens attend to the question
    /// vector through one residual cross-attention block, then mean-pool.
    pub fn encode_video_oe(&self, bundle: &FeatureBundle, question: &str) -> Result<Node> {
        if !self.cfg.open_ended {
            return Err(CoreError::Config(
                "encode_video_oe requires open_ended mode (ci params absent)".into(),
            ));
        }
        let tokens = self.encode_video_tokens(bundle, self.cfg.use_pos_embed)?;
        let f_q = self.encode_text(question)?;
        let block = AttnBlock::bind(self.params, "ci")?;
        nn::cross_attention(&tokens, &f_q, &block, self.cfg.heads)?.mean_rows()
    }

    /// Open-ended score: dot(f_qv, F_q(a)) * cos(F_q(q), F_q(a)).
    pub fn score_oe(&self, f_qv: &Node, question: &str, answer: &str) -> Result<Node> {
        let f_a = self.encode_text(answer)?;
        let f_q = self.encode_text(question)?;
        let video_term = f_qv.dot_row(&f_a)?;
        let text_term = nn::cosine_similarity(&f_q, &f_a)?;
        video_term.mul(&text_term)
    }

    /// Open-ended logits over the answer list.
    pub fn score_candidates_oe(
        &self,
        f_qv: &Node,
        question: &str,
        candidates: &[String],
    ) -> Result<Node> {
        if candidates.is_empty() {
            return Err(CoreError::validation("empty candidate list"));
        }
        let mut scores = Vec::with_capacity(candidates.len());
        for cand in candidates {
            scores.push(self.score_oe(f_qv, question, cand)?);
        }
        Node::concat_cols(&scores)
    }
}
