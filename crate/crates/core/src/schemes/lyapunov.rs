//! Grid surrogate for the mean-reverting Lyapunov condition
//! `⟨∇V, b⟩ + λ_p Tr(σσ*) ≤ β − ρ V^a`.
//!
//! A finite grid can never prove the condition; the report is a diagnostic
//! that flags models whose drift fails to pull `V` back on the outer part of
//! the grid.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use super::model::DiffusionModel;
use crate::error::{Error, Result};
use crate::numeric::ols_slope;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LyapunovReport {
    pub beta_hat: f64,
    pub rho_hat: f64,
    pub lambda_p_hat: f64,
    /// `max (|b|² + Tr(σσ*)) / V^a` over the grid.
    pub growth_constant_hat: f64,
    /// `min V^{p+a−1}(x)/|x|` over the outer half of the grid.
    pub growth_ratio_hat: f64,
    pub satisfied: bool,
}

/// `v`, `grad_v` (d-vector) and `hess_v` (row-major d×d) describe the
/// candidate Lyapunov function.
#[allow(clippy::too_many_arguments)]
pub fn lyapunov_grid_check(
    model: &DiffusionModel,
    v: &dyn Fn(&[f64]) -> f64,
    grad_v: &dyn Fn(&[f64], &mut [f64]),
    hess_v: &dyn Fn(&[f64], &mut [f64]),
    a: f64,
    p: f64,
    grid: &[Vec<f64>],
) -> Result<LyapunovReport> {
    if grid.is_empty() {
        return Err(Error::invalid("grid", "must be nonempty"));
    }
    if !(a > 0.0 && a <= 1.0) {
        return Err(Error::invalid("a", "must lie in (0, 1]"));
    }
    if !(p > 1.0) {
        return Err(Error::invalid("p", "must exceed 1"));
    }
    let d = model.dim();
    let mut grad = vec![0.0; d];
    let mut hess = vec![0.0; d * d];
    let mut b = vec![0.0; d];

    let mut vals = Vec::with_capacity(grid.len());
    let mut lambda_p: f64 = 0.0;
    for x in grid {
        let vx = v(x);
        if !(vx > 0.0 && vx.is_finite()) {
            return Err(Error::invalid("grid", "V must be positive and finite on the grid"));
        }
        grad_v(x, &mut grad);
        hess_v(x, &mut hess);
        let m = DMatrix::from_fn(d, d, |i, j| {
            hess[i * d + j] + (p - 1.0) * grad[i] * grad[j] / vx
        });
        let sym = 0.5 * (&m + m.transpose());
        let top = SymmetricEigen::new(sym).eigenvalues.max().max(0.0);
        lambda_p = lambda_p.max(0.5 * top);
        vals.push(vx);
    }

    let mut lhs = Vec::with_capacity(grid.len());
    let mut growth_constant: f64 = 0.0;
    for (x, &vx) in grid.iter().zip(&vals) {
        grad_v(x, &mut grad);
        model.drift(x, &mut b);
        let tr = model.sigma_frobenius_sq(x);
        let inner: f64 = grad.iter().zip(&b).map(|(g, b)| g * b).sum();
        lhs.push(inner + lambda_p * tr);
        let b2: f64 = b.iter().map(|c| c * c).sum();
        growth_constant = growth_constant.max((b2 + tr) / vx.powf(a));
    }

    // Fit the decay of the left side against V^a on the outer half of the grid.
    let va: Vec<f64> = vals.iter().map(|v| v.powf(a)).collect();
    let mut sorted = va.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let (tx, ty): (Vec<f64>, Vec<f64>) = va
        .iter()
        .zip(&lhs)
        .filter(|(v, _)| **v >= median)
        .map(|(v, l)| (*v, *l))
        .unzip();
    let slope = if tx.len() >= 2 && sorted[sorted.len() - 1] > median {
        ols_slope(&tx, &ty)
    } else {
        0.0
    };
    let scale = lhs.iter().fold(1.0f64, |m, l| m.max(l.abs()));
    let rho_hat = if -slope > 1e-12 * scale { -slope } else { 0.0 };
    let beta_hat = va
        .iter()
        .zip(&lhs)
        .map(|(v, l)| l + rho_hat * v)
        .fold(f64::NEG_INFINITY, f64::max);

    let growth_ratio = grid
        .iter()
        .zip(&vals)
        .zip(&va)
        .filter(|(_, v)| **v >= median)
        .filter_map(|((x, vx), _)| {
            let norm = x.iter().map(|c| c * c).sum::<f64>().sqrt();
            (norm > 0.0).then(|| vx.powf(p + a - 1.0) / norm)
        })
        .fold(f64::INFINITY, f64::min);

    Ok(LyapunovReport {
        beta_hat,
        rho_hat,
        lambda_p_hat: lambda_p,
        growth_constant_hat: growth_constant,
        growth_ratio_hat: growth_ratio,
        satisfied: rho_hat > 0.0,
    })
}
