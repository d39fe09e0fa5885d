//! Attention blocks and the fusion MLP, as graph-level functions.

use crate::autodiff::Node;
use crate::error::{CoreError, Result};
use crate::params::BoundParams;

/// Query/key/value/output projections of one attention block.
pub struct AttnBlock {
    pub wq: Node,
    pub wk: Node,
    pub wv: Node,
    pub wo: Node,
    pub bq: Node,
    pub bk: Node,
    pub bv: Node,
    pub bo: Node,
}

impl AttnBlock {
    /// Fetch the eight projection tensors under `prefix` (e.g. "video.msa").
    pub fn bind(params: &BoundParams, prefix: &str) -> Result<Self> {
        Ok(AttnBlock {
            wq: params.node(&format!("{prefix}.wq"))?,
            wk: params.node(&format!("{prefix}.wk"))?,
            wv: params.node(&format!("{prefix}.wv"))?,
            wo: params.node(&format!("{prefix}.wo"))?,
            bq: params.node(&format!("{prefix}.bq"))?,
            bk: params.node(&format!("{prefix}.bk"))?,
            bv: params.node(&format!("{prefix}.bv"))?,
            bo: params.node(&format!("{prefix}.bo"))?,
        })
    }
}

/// Multi-head self-attention over a `[T, d]` token sequence.
///
/// When `pos_embed` is given its first `T` rows are added to the input before
/// the projections. Per-head scores are scaled by `1/sqrt(d/heads)`; heads
/// are concatenated and linearly projected. Attention mixing and softmax use
/// order-independent summation, so without a position embedding the output
/// rows permute exactly with the input rows.
pub fn multi_head_self_attention(
    x: &Node,
    block: &AttnBlock,
    heads: usize,
    pos_embed: Option<&Node>,
) -> Result<Node> {
    let (t, d) = x.dims();
    if heads == 0 || d % heads != 0 {
        return Err(CoreError::Config(format!(
            "model width {d} not divisible by {heads} heads"
        )));
    }
    let dh = d / heads;
    let x = match pos_embed {
        Some(pe) => {
            let (rows, pcols) = pe.dims();
            if pcols != d || rows < t {
                return Err(CoreError::Config(format!(
                    "position embedding [{rows}x{pcols}] cannot cover a [{t}x{d}] sequence"
                )));
            }
            x.add(&pe.slice_rows(0, t)?)?
        }
        None => x.clone(),
    };
    let q = x.matmul(&block.wq)?.add_row(&block.bq)?;
    let k = x.matmul(&block.wk)?.add_row(&block.bk)?;
    let v = x.matmul(&block.wv)?.add_row(&block.bv)?;
    let scale = 1.0 / (dh as f64).sqrt();

    let mut head_outputs = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = q.slice_cols(h * dh, dh)?;
        let kh = k.slice_cols(h * dh, dh)?;
        let vh = v.slice_cols(h * dh, dh)?;
        let scores = qh.matmul(&kh.transpose()?)?.scale(scale)?;
        let attn = scores.softmax_rows()?;
        head_outputs.push(attn.mix_rows(&vh)?);
    }
    let merged = Node::concat_cols(&head_outputs)?;
    merged.matmul(&block.wo)?.add_row(&block.bo)
}

/// Cross-attention from `[T, d]` tokens onto a single `[1, d]` context
/// vector, with a residual connection. With a zero output projection this is
/// the identity.
pub fn cross_attention(
    tokens: &Node,
    context: &Node,
    block: &AttnBlock,
    heads: usize,
) -> Result<Node> {
    let (_, d) = tokens.dims();
    if context.dims() != (1, d) {
        return Err(CoreError::Config(format!(
            "cross-attention context must be [1x{d}], got {:?}",
            context.dims()
        )));
    }
    if heads == 0 || d % heads != 0 {
        return Err(CoreError::Config(format!(
            "model width {d} not divisible by {heads} heads"
        )));
    }
    let dh = d / heads;
    let q = tokens.matmul(&block.wq)?.add_row(&block.bq)?;
    let k = context.matmul(&block.wk)?.add_row(&block.bk)?;
    let v = context.matmul(&block.wv)?.add_row(&block.bv)?;
    let scale = 1.0 / (dh as f64).sqrt();

    let mut head_outputs = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = q.slice_cols(h * dh, dh)?;
        let kh = k.slice_cols(h * dh, dh)?;
        let vh = v.slice_cols(h * dh, dh)?;
        // one key: softmax over a singleton is identically 1
        let scores = qh.matmul(&kh.transpose()?)?.scale(scale)?;
        let attn = scores.softmax_rows()?;
        head_outputs.push(attn.mix_rows(&vh)?);
    }
    let merged = Node::concat_cols(&head_outputs)?;
    let out = merged.matmul(&block.wo)?.add_row(&block.bo)?;
    tokens.add(&out)
}

/// One-hidden-layer MLP with ReLU.
pub fn mlp(x: &Node, w1: &Node, b1: &Node, w2: &Node, b2: &Node) -> Result<Node> {
    x.matmul(w1)?.add_row(b1)?.relu()?.matmul(w2)?.add_row(b2)
}

/// Cosine similarity of two `[1, d]` rows. A zero-norm side yields exactly 0.
pub fn cosine_similarity(a: &Node, b: &Node) -> Result<Node> {
    let na = a.mul(a)?.sum_all()?.sqrt()?;
    let nb = b.mul(b)?.sum_all()?.sqrt()?;
    if na.scalar_value() == 0.0 || nb.scalar_value() == 0.0 {
        return a.graph().scalar(0.0);
    }
    let dot = a.dot_row(b)?;
    dot.scale_by(&na.mul(&nb)?.recip()?)
}
