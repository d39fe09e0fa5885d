//! Dense row-major tensors and order-independent summation.
//!
//! Everything runs in f64 internally; file formats narrow to f32. The
//! [`ExactSum`] accumulator returns the correctly rounded sum of its inputs,
//! so reductions over a permuted multiset of values give bit-identical
//! results. Reductions that cross the clip axis (softmax denominators,
//! attention mixing, mean-pooling) use it; plain matmul keeps ordinary
//! fixed-order loops.

use crate::error::{CoreError, Result};
use rand::Rng;
use rand_distr::StandardNormal;

/// Dense tensor: positive dimensions, row-major f64 data.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    requires_grad: bool,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.iter().any(|&d| d == 0) {
            return Err(CoreError::Shape {
                op: "tensor",
                msg: format!("dimensions must be positive, got {shape:?}"),
            });
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(CoreError::Shape {
                op: "tensor",
                msg: format!("shape {shape:?} wants {numel} values, got {}", data.len()),
            });
        }
        let t = Tensor {
            shape,
            data,
            requires_grad: false,
        };
        t.ensure_finite("tensor construction")?;
        Ok(t)
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel: usize = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; numel],
            requires_grad: false,
        }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            shape: vec![1, 1],
            data: vec![v],
            requires_grad: false,
        }
    }

    /// Row vector `[1, n]`.
    pub fn row(data: Vec<f64>) -> Result<Self> {
        let n = data.len();
        Tensor::new(vec![1, n], data)
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(CoreError::Shape {
                op: "from_rows",
                msg: "no rows".into(),
            });
        }
        let cols = rows[0].len();
        if rows.iter().any(|r| r.len() != cols) {
            return Err(CoreError::Shape {
                op: "from_rows",
                msg: "ragged rows".into(),
            });
        }
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            data.extend_from_slice(r);
        }
        Tensor::new(vec![rows.len(), cols], data)
    }

    /// Gaussian init, snapped to f32 precision so checkpoints round-trip
    /// losslessly.
    pub fn randn<R: Rng>(rows: usize, cols: usize, std: f64, rng: &mut R) -> Self {
        let data = (0..rows * cols)
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                (z * std) as f32 as f64
            })
            .collect();
        Tensor {
            shape: vec![rows, cols],
            data,
            requires_grad: false,
        }
    }

    /// Xavier-uniform init for a linear layer, snapped to f32 precision.
    pub fn xavier<R: Rng>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| (rng.random_range(-limit..limit) as f32) as f64)
            .collect();
        Tensor {
            shape: vec![fan_in, fan_out],
            data,
            requires_grad: false,
        }
    }

    pub fn with_requires_grad(mut self, flag: bool) -> Self {
        self.requires_grad = flag;
        self
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Interpret as a matrix: rank-2 stays as-is, rank-1 becomes `[1, n]`.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape.len() {
            1 => Ok((1, self.shape[0])),
            2 => Ok((self.shape[0], self.shape[1])),
            _ => Err(CoreError::Shape {
                op: "dims2",
                msg: format!("expected rank <= 2, got shape {:?}", self.shape),
            }),
        }
    }

    pub fn get2(&self, i: usize, j: usize) -> f64 {
        let cols = *self.shape.last().unwrap();
        self.data[i * cols + j]
    }

    pub fn ensure_finite(&self, context: &str) -> Result<()> {
        ensure_finite_slice(&self.data, context)
    }
}

pub fn ensure_finite_slice(data: &[f64], context: &str) -> Result<()> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(CoreError::NonFinite {
            context: context.to_string(),
        })
    }
}

/// Correctly rounded floating-point summation (Shewchuk partials).
///
/// The result equals the true real sum rounded once to f64, so it does not
/// depend on the order values are added in. This is what makes mean-pool and
/// attention bitwise invariant to clip permutations.
#[derive(Debug, Default)]
pub struct ExactSum {
    partials: Vec<f64>,
}

impl ExactSum {
    pub fn new() -> Self {
        ExactSum {
            partials: Vec::with_capacity(8),
        }
    }

    pub fn reset(&mut self) {
        self.partials.clear();
    }

    pub fn add(&mut self, mut x: f64) {
        debug_assert!(x.is_finite());
        let mut i = 0;
        for j in 0..self.partials.len() {
            let mut y = self.partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                self.partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        self.partials.truncate(i);
        self.partials.push(x);
    }

    /// Final rounding follows CPython's `math.fsum`: sum the non-overlapping
    /// partials from largest to smallest, with a half-way correction so the
    /// result is the correctly rounded exact sum.
    pub fn value(&self) -> f64 {
        let p = &self.partials;
        let mut n = p.len();
        let mut hi = 0.0;
        if n > 0 {
            n -= 1;
            hi = p[n];
            let mut lo = 0.0;
            while n > 0 {
                let x = hi;
                n -= 1;
                let y = p[n];
                hi = x + y;
                let yr = hi - x;
                lo = y - yr;
                if lo != 0.0 {
                    break;
                }
            }
            if n > 0 && ((lo < 0.0 && p[n - 1] < 0.0) || (lo > 0.0 && p[n - 1] > 0.0)) {
                let y = lo * 2.0;
                let x = hi + y;
                if y == x - hi {
                    hi = x;
                }
            }
        }
        hi
    }
}

pub fn exact_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = ExactSum::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// Numerically stable softmax of a slice (max-subtraction, exact denominator).
pub fn softmax_slice(xs: &[f64]) -> Vec<f64> {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = xs.iter().map(|&x| (x - max).exp()).collect();
    let denom = exact_sum(exps.iter().copied());
    exps.iter().map(|e| e / denom).collect()
}

/// log(sum(exp(xs))) with max-subtraction.
pub fn logsumexp_slice(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + exact_sum(xs.iter().map(|&x| (x - max).exp())).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn tensor_rejects_zero_dims() {
        assert!(Tensor::new(vec![0, 3], vec![]).is_err());
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(vec![2, 3], vec![0.0; 6]).is_ok());
    }

    #[test]
    fn tensor_rejects_non_finite() {
        assert!(Tensor::new(vec![2], vec![1.0, f64::NAN]).is_err());
        assert!(Tensor::new(vec![2], vec![1.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn exact_sum_handles_cancellation() {
        // naive left-to-right would give 0.0 here
        assert_eq!(exact_sum([1e16, 1.0, -1e16]), 1.0);
        assert_eq!(exact_sum([1.0, 1e100, 1.0, -1e100]), 2.0);
    }

    #[test]
    fn exact_sum_matches_naive_on_easy_input() {
        let xs = [0.25, 0.5, 0.125, 1.0];
        assert_eq!(exact_sum(xs), 1.875);
    }

    proptest! {
        #[test]
        fn exact_sum_is_order_independent(
            values in proptest::collection::vec(-1e6f64..1e6, 1..40),
            seed in any::<u64>(),
        ) {
            let base = exact_sum(values.iter().copied());
            let mut shuffled = values.clone();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            shuffled.shuffle(&mut rng);
            let re = exact_sum(shuffled.iter().copied());
            prop_assert_eq!(base.to_bits(), re.to_bits());
        }

        #[test]
        fn softmax_slice_sums_to_one(values in proptest::collection::vec(-50f64..50.0, 1..12)) {
            let p = softmax_slice(&values);
            prop_assert!(p.iter().all(|&x| x > 0.0));
            let total = exact_sum(p.iter().copied());
            prop_assert!((total - 1.0).abs() <= 1e-12);
        }
    }
}
