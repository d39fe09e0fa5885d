//! Central-finite-difference verification of analytic gradients.

use crate::autodiff::Node;
use crate::error::{CoreError, Result};
use crate::params::{BoundParams, ParamSet};
use crate::rng::{mix64, rng_from};
use rand::seq::index::sample;

#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub h: f64,
    /// Pass threshold on the worst relative error.
    pub tol: f64,
    /// Coordinate sample cap per parameter tensor (seeded).
    pub max_coords_per_tensor: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            h: 1e-5,
            tol: 1e-4,
            max_coords_per_tensor: 512,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub coords_checked: usize,
    pub tol: f64,
    pub passed: bool,
}

impl std::fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}: max rel err {:.3e} at {}[{}] over {} coords (tol {:.1e})",
            if self.passed { "pass" } else { "FAIL" },
            self.max_rel_err,
            self.worst_param,
            self.worst_index,
            self.coords_checked,
            self.tol
        )
    }
}

// Floor keeps finite-difference noise (~1e-10 absolute at h = 1e-5) from
// dominating coordinates whose true gradient is itself negligible.
fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-5)
}

/// Compare analytic gradients against `(f(th+h) - f(th-h)) / 2h` on a seeded
/// coordinate sample. `build` must construct the loss graph from scratch on
/// every call; two forward passes that disagree bitwise are reported as
/// non-determinism.
pub fn grad_check<F>(params: &ParamSet, cfg: &GradCheckConfig, build: F) -> Result<GradCheckReport>
where
    F: Fn(&ParamSet) -> Result<(Node, BoundParams)>,
{
    let (loss, bound) = build(params)?;
    let v1 = loss.scalar_value();
    let (loss2, _) = build(params)?;
    let v2 = loss2.scalar_value();
    if v1.to_bits() != v2.to_bits() {
        return Err(CoreError::NonDeterministic(format!(
            "two forward passes disagree: {v1:?} vs {v2:?}"
        )));
    }
    loss.backward()?;
    let analytic = bound.grads();

    let mut work = params.clone();
    let mut max_rel = 0.0f64;
    let mut worst_param = String::new();
    let mut worst_index = 0usize;
    let mut checked = 0usize;

    let names: Vec<String> = params.iter().map(|(n, _)| n.clone()).collect();
    for (pi, name) in names.iter().enumerate() {
        let numel = params.get(name)?.numel();
        let coords: Vec<usize> = if numel <= cfg.max_coords_per_tensor {
            (0..numel).collect()
        } else {
            let mut rng = rng_from(mix64(cfg.seed, pi as u64));
            let mut picked = sample(&mut rng, numel, cfg.max_coords_per_tensor).into_vec();
            picked.sort_unstable();
            picked
        };
        let a_grad = &analytic[name];
        for &c in &coords {
            let orig = work.get(name)?.data()[c];
            work.get_mut(name)?.data_mut()[c] = orig + cfg.h;
            let (plus, _) = build(&work)?;
            let fp = plus.scalar_value();
            work.get_mut(name)?.data_mut()[c] = orig - cfg.h;
            let (minus, _) = build(&work)?;
            let fm = minus.scalar_value();
            work.get_mut(name)?.data_mut()[c] = orig;

            let numeric = (fp - fm) / (2.0 * cfg.h);
            let r = rel_err(a_grad[c], numeric);
            checked += 1;
            if r > max_rel {
                max_rel = r;
                worst_param = name.clone();
                worst_index = c;
            }
        }
    }

    Ok(GradCheckReport {
        max_rel_err: max_rel,
        worst_param,
        worst_index,
        coords_checked: checked,
        tol: cfg.tol,
        passed: max_rel < cfg.tol,
    })
}
