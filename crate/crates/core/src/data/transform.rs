//! Temporal transforms: clip shuffling and the middle-clip view.
//!
//! These are alternative evaluation/training conditions and are never
//! composed: the trainer shuffles only for the confusion branch and the
//! evaluator picks exactly one condition per run.

use super::FeatureBundle;
use crate::error::{CoreError, Result};
use crate::rng::rng_from;
use crate::tensor::Tensor;
use rand::seq::SliceRandom;

/// A bijection over clip indices `0..T-1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClipPermutation {
    order: Vec<usize>,
}

impl ClipPermutation {
    pub fn new(order: Vec<usize>) -> Result<Self> {
        let t = order.len();
        let mut seen = vec![false; t];
        for &i in &order {
            if i >= t || seen[i] {
                return Err(CoreError::Usage(format!(
                    "clip permutation {order:?} is not a bijection over 0..{t}"
                )));
            }
            seen[i] = true;
        }
        Ok(ClipPermutation { order })
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn is_identity(&self) -> bool {
        self.order.iter().enumerate().all(|(i, &o)| i == o)
    }

    pub fn inverse(&self) -> ClipPermutation {
        let mut inv = vec![0; self.order.len()];
        for (i, &o) in self.order.iter().enumerate() {
            inv[o] = i;
        }
        ClipPermutation { order: inv }
    }

    /// Reorder a `[T, D]` tensor's rows: output row i = input row order[i].
    fn apply_rows(&self, t: &Tensor) -> Result<Tensor> {
        let (rows, cols) = t.dims2()?;
        if rows != self.order.len() {
            return Err(CoreError::Shape {
                op: "permute_clips",
                msg: format!("permutation over {} clips vs tensor with {rows}", self.order.len()),
            });
        }
        let mut data = Vec::with_capacity(rows * cols);
        for &src in &self.order {
            data.extend_from_slice(&t.data()[src * cols..(src + 1) * cols]);
        }
        Tensor::matrix(rows, cols, data)
    }

    pub fn apply(&self, bundle: &FeatureBundle) -> Result<FeatureBundle> {
        FeatureBundle::new(
            bundle.video_id.clone(),
            self.apply_rows(&bundle.object)?,
            self.apply_rows(&bundle.frame)?,
            self.apply_rows(&bundle.motion)?,
        )
    }
}

/// Permute all three streams by one uniformly drawn non-identity
/// permutation. `T = 1` has no non-identity permutation and is an error.
pub fn shuffle_clips(bundle: &FeatureBundle, seed: u64) -> Result<(FeatureBundle, ClipPermutation)> {
    let t = bundle.t();
    if t < 2 {
        return Err(CoreError::Usage(
            "shuffle_clips needs T >= 2 (shuffling a single clip is undefined)".into(),
        ));
    }
    let mut rng = rng_from(seed);
    let mut order: Vec<usize> = (0..t).collect();
    loop {
        order.shuffle(&mut rng);
        if order.iter().enumerate().any(|(i, &o)| i != o) {
            break;
        }
    }
    let perm = ClipPermutation::new(order)?;
    let shuffled = perm.apply(bundle)?;
    Ok((shuffled, perm))
}

/// Index of the clip kept by the middle-clip condition: the exact center for
/// odd T, the left-center for even T (clip 7 when T = 16).
pub fn middle_index(t: usize) -> usize {
    (t.max(1) - 1) / 2
}

/// Keep only the middle clip; all three streams are sliced identically.
pub fn middle_clip_view(bundle: &FeatureBundle) -> FeatureBundle {
    let t = bundle.t();
    if t == 1 {
        return bundle.clone();
    }
    let idx = middle_index(t);
    let slice = |tensor: &Tensor| {
        let (_, cols) = tensor.dims2().expect("validated");
        Tensor::matrix(1, cols, tensor.data()[idx * cols..(idx + 1) * cols].to_vec())
            .expect("slice is valid")
    };
    FeatureBundle {
        video_id: bundle.video_id.clone(),
        object: slice(&bundle.object),
        frame: slice(&bundle.frame),
        motion: slice(&bundle.motion),
    }
}
