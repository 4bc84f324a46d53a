//! Constant-step strong-error ladders for the genuine scheme.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::DiffusionModel;
use super::stream::GaussianStream;
use super::{euler_step_in_place, EulerWorkspace};
use crate::error::{Error, Result};
use crate::numeric::{mean_var, ols_slope};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LadderSettings {
    pub horizon: f64,
    /// Reference points per coarse step.
    pub refine: usize,
    pub paths: usize,
    pub seed: u64,
}

impl Default for LadderSettings {
    fn default() -> Self {
        Self {
            horizon: 1.0,
            refine: 64,
            paths: 2000,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LadderPoint {
    pub gamma: f64,
    /// `E sup_t |ξ_t − X_t|` against the reference path.
    pub sup_error: f64,
    pub sup_error_se: f64,
    /// `E sup_t |ξ_t − ξ_{t̲}|²`.
    pub gap_sq: f64,
    pub gap_sq_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrongErrorLadder {
    pub points: Vec<LadderPoint>,
    /// Log-log slope of `sup_error` against `γ`.
    pub sup_exponent: f64,
    /// Log-log slope of `gap_sq` against `γ`.
    pub gap_exponent: f64,
    /// Whether the reference came from exact transitions rather than a fine
    /// Euler scheme.
    pub exact_reference: bool,
}

/// For every constant step `γ`, runs the genuine scheme and a reference path
/// on `[0, T]` driven by the same Brownian path, observed on a grid
/// `refine` times finer than `γ`. The reference uses the model's exact
/// transition when available and Euler on the fine grid otherwise.
pub fn strong_error_ladder(
    model: &DiffusionModel,
    x0: &[f64],
    gammas: &[f64],
    s: &LadderSettings,
) -> Result<StrongErrorLadder> {
    if gammas.len() < 2 {
        return Err(Error::invalid("gammas", "need at least two steps to fit an exponent"));
    }
    if s.refine == 0 || s.paths < 2 || !(s.horizon > 0.0) {
        return Err(Error::invalid("settings", "need refine ≥ 1, paths ≥ 2 and T > 0"));
    }
    if x0.len() != model.dim() {
        return Err(Error::invalid("x0", "length must match the model dimension"));
    }
    let mut points = Vec::with_capacity(gammas.len());
    for (level, &gamma) in gammas.iter().enumerate() {
        let steps = (s.horizon / gamma).round() as usize;
        if !(gamma > 0.0) || steps == 0 || ((steps as f64) * gamma - s.horizon).abs() > 1e-9 * s.horizon {
            return Err(Error::invalid("gammas", format!("step {gamma} does not divide T = {}", s.horizon)));
        }
        let per_path: Vec<Result<(f64, f64)>> = (0..s.paths)
            .into_par_iter()
            .map(|p| {
                let mut stream = GaussianStream::for_replicate(s.seed, p as u64, 4 + level as u8);
                one_path(model, x0, gamma, steps, s.refine, &mut stream)
            })
            .collect();
        let (mut sups, mut gaps) = (Vec::with_capacity(s.paths), Vec::with_capacity(s.paths));
        for r in per_path {
            let (a, b) = r?;
            sups.push(a);
            gaps.push(b);
        }
        let (ms, vs) = mean_var(&sups);
        let (mg, vg) = mean_var(&gaps);
        let n = s.paths as f64;
        points.push(LadderPoint {
            gamma,
            sup_error: ms,
            sup_error_se: (vs / n).sqrt(),
            gap_sq: mg,
            gap_sq_se: (vg / n).sqrt(),
        });
    }
    let lg: Vec<f64> = points.iter().map(|p| p.gamma.ln()).collect();
    let ls: Vec<f64> = points.iter().map(|p| p.sup_error.ln()).collect();
    let lq: Vec<f64> = points.iter().map(|p| p.gap_sq.ln()).collect();
    Ok(StrongErrorLadder {
        sup_exponent: ols_slope(&lg, &ls),
        gap_exponent: ols_slope(&lg, &lq),
        exact_reference: model.analytic.exact_transition.is_some(),
        points,
    })
}

fn one_path(
    model: &DiffusionModel,
    x0: &[f64],
    gamma: f64,
    steps: usize,
    refine: usize,
    stream: &mut GaussianStream,
) -> Result<(f64, f64)> {
    let d = model.dim();
    let q = model.noise_dim();
    let delta = gamma / refine as f64;
    let exact = model.analytic.exact_transition.as_ref();
    let mut ws = EulerWorkspace::for_model(model);
    let mut coarse = x0.to_vec();
    let mut reference = x0.to_vec();
    let mut next_ref = vec![0.0; d];
    let mut dw = vec![0.0; q];
    let mut w_since = vec![0.0; q];
    let mut drift = vec![0.0; d];
    let mut sigma = vec![0.0; d * q];
    let mut genuine = vec![0.0; d];
    let (mut sup_err, mut sup_gap) = (0.0f64, 0.0f64);

    for _ in 0..steps {
        model.drift(&coarse, &mut drift);
        model.diffusion(&coarse, &mut sigma);
        w_since.iter_mut().for_each(|w| *w = 0.0);
        for j in 1..=refine {
            match exact {
                Some(tr) => {
                    tr(&reference, delta, stream, &mut next_ref, &mut dw);
                    reference.copy_from_slice(&next_ref);
                }
                None => {
                    stream.fill_normal(&mut dw);
                    dw.iter_mut().for_each(|w| *w *= delta.sqrt());
                    euler_step_in_place(model, &mut reference, &dw, delta, &mut ws);
                }
            }
            for (acc, w) in w_since.iter_mut().zip(&dw) {
                *acc += w;
            }
            let elapsed = j as f64 * delta;
            let mut err = 0.0f64;
            let mut gap = 0.0f64;
            for i in 0..d {
                let noise: f64 = sigma[i * q..(i + 1) * q].iter().zip(&w_since).map(|(s, w)| s * w).sum();
                genuine[i] = coarse[i] + elapsed * drift[i] + noise;
                err += (genuine[i] - reference[i]).powi(2);
                if j < refine {
                    gap += (genuine[i] - coarse[i]).powi(2);
                }
            }
            sup_err = sup_err.max(err.sqrt());
            sup_gap = sup_gap.max(gap);
        }
        coarse.copy_from_slice(&genuine);
        if coarse.iter().chain(&reference).any(|v| !v.is_finite()) {
            return Err(Error::BlowUp { step: 0 });
        }
    }
    Ok((sup_err, sup_gap))
}
