//! Euler-type schemes along a decreasing step grid.
//!
//! The stepwise constant scheme and the genuine scheme share the same grid
//! values; they only differ in how the path is read between grid times.
//! Both `b` and `σ` are evaluated at the current (left) grid point.

mod lyapunov;
mod model;
mod stream;
mod strong;

pub use lyapunov::{lyapunov_grid_check, LyapunovReport};
pub use model::{
    cir_stationary_sampler, AnalyticExtras, DiffusionModel, ExactTransition, InvariantSampler,
    ModelSpec, PoissonSolution, ScalarField, VecField,
};
pub use stream::GaussianStream;
pub use strong::{strong_error_ladder, LadderPoint, LadderSettings, StrongErrorLadder};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;

/// Grid value of a scheme after `step_index` steps.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeState {
    pub step_index: usize,
    pub value: Vec<f64>,
    clock: CompensatedSum,
}

impl SchemeState {
    pub fn start(x0: Vec<f64>) -> Self {
        Self {
            step_index: 0,
            value: x0,
            clock: CompensatedSum::new(),
        }
    }

    /// `Γ_n`, accumulated with the same compensated summation as
    /// [`crate::StepSchedule::cum_time`].
    pub fn clock(&self) -> f64 {
        self.clock.value()
    }

    pub(crate) fn advance_clock(&mut self, h: f64) {
        self.clock.add(h);
        self.step_index += 1;
    }
}

/// Scratch buffers for coefficient evaluations.
#[derive(Debug, Clone)]
pub struct EulerWorkspace {
    drift: Vec<f64>,
    diffusion: Vec<f64>,
}

impl EulerWorkspace {
    pub fn for_model(model: &DiffusionModel) -> Self {
        Self {
            drift: vec![0.0; model.dim()],
            diffusion: vec![0.0; model.dim() * model.noise_dim()],
        }
    }

    /// Diffusion matrix evaluated by the last [`euler_step_in_place`].
    pub fn last_diffusion(&self) -> &[f64] {
        &self.diffusion
    }
}

/// `x ← x + h b(x) + σ(x) dW`. Leaves the coefficients used in `ws`.
#[inline]
pub fn euler_step_in_place(
    model: &DiffusionModel,
    x: &mut [f64],
    dw: &[f64],
    h: f64,
    ws: &mut EulerWorkspace,
) {
    model.drift(x, &mut ws.drift);
    model.diffusion(x, &mut ws.diffusion);
    let q = model.noise_dim();
    for (i, xi) in x.iter_mut().enumerate() {
        let row = &ws.diffusion[i * q..(i + 1) * q];
        let noise: f64 = row.iter().zip(dw).map(|(s, w)| s * w).sum();
        *xi += h * ws.drift[i] + noise;
    }
}

/// One step of the discrete Euler scheme. `dw` holds `N(0, h)` increments.
pub fn euler_step(
    model: &DiffusionModel,
    state: &SchemeState,
    dw: &[f64],
    h: f64,
) -> Result<SchemeState> {
    let mut next = state.clone();
    let mut ws = EulerWorkspace::for_model(model);
    euler_step_in_place(model, &mut next.value, dw, h, &mut ws);
    next.advance_clock(h);
    if next.value.iter().any(|v| !v.is_finite()) {
        return Err(Error::BlowUp {
            step: next.step_index,
        });
    }
    Ok(next)
}

/// Genuine scheme at `t ∈ [Γ_n, Γ_{n+1}]`:
/// `ξ_t = ξ_{Γ_n} + (t − Γ_n) b(ξ_{Γ_n}) + σ(ξ_{Γ_n})(W_t − W_{Γ_n})`.
///
/// Panics when `t` lies outside `[Γ_n, Γ_n + h]`.
pub fn genuine_interpolate(
    model: &DiffusionModel,
    state: &SchemeState,
    h: f64,
    t: f64,
    bridge_noise: &[f64],
) -> Vec<f64> {
    let left = state.clock();
    assert!(
        t >= left && t <= left + h,
        "t = {t} outside the current grid interval [{left}, {}]",
        left + h
    );
    let mut x = state.value.clone();
    let mut ws = EulerWorkspace::for_model(model);
    euler_step_in_place(model, &mut x, bridge_noise, t - left, &mut ws);
    x
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CirParams {
    pub k: f64,
    pub theta: f64,
    pub varsigma: f64,
}

/// Reflected Euler step `|v + k h (θ − v) + ς √v dW²|`.
#[inline]
pub fn cir_reflected_step(p: CirParams, v: f64, h: f64, dw2: f64) -> f64 {
    (v + p.k * h * (p.theta - v) + p.varsigma * v.sqrt() * dw2).abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogPriceParams {
    pub r: f64,
    pub rho_corr: f64,
}

/// Heston log-price step with the volatility frozen at `vbar` over the step.
#[inline]
pub fn heston_logprice_step(p: LogPriceParams, xi: f64, vbar: f64, h: f64, dw1: f64, dw2: f64) -> f64 {
    let sv = vbar.sqrt();
    xi + (p.r - 0.5 * vbar) * h
        + p.rho_corr * sv * dw2
        + ((1.0 - p.rho_corr * p.rho_corr) * vbar).sqrt() * dw1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuParams {
    pub lambda: f64,
    pub sigma0: f64,
}

/// Exact OU transition `e^{−λh} x + σ₀ √((1 − e^{−2λh})/(2λ)) z`.
#[inline]
pub fn ou_exact_step(p: OuParams, x: f64, h: f64, z: f64) -> f64 {
    let sd = p.sigma0 * (-(-2.0 * p.lambda * h).exp_m1() / (2.0 * p.lambda)).sqrt();
    (-p.lambda * h).exp() * x + sd * z
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::sync::Arc;

    fn ou() -> DiffusionModel {
        DiffusionModel::ou(1.0, 1.0).unwrap()
    }

    #[test]
    fn euler_step_examples() {
        let s = euler_step(&ou(), &SchemeState::start(vec![2.0]), &[0.0], 0.1).unwrap();
        assert_relative_eq!(s.value[0], 1.8, epsilon = 1e-15);
        assert_eq!(s.step_index, 1);
        let s = euler_step(&ou(), &SchemeState::start(vec![0.0]), &[0.5], 0.25).unwrap();
        assert_eq!(s.value[0], 0.5);

        let frozen = DiffusionModel::new(
            "frozen",
            1,
            1,
            Arc::new(|_, o| o[0] = 0.0),
            Arc::new(|_, o| o[0] = 0.0),
        )
        .unwrap();
        let s = euler_step(&frozen, &SchemeState::start(vec![3.25]), &[1.7], 0.3).unwrap();
        assert_eq!(s.value[0], 3.25);
    }

    #[test]
    fn euler_step_reports_blow_up() {
        let wild = DiffusionModel::new(
            "wild",
            1,
            1,
            Arc::new(|x, o| o[0] = x[0] * 1e300),
            Arc::new(|_, o| o[0] = 0.0),
        )
        .unwrap();
        let err = euler_step(&wild, &SchemeState::start(vec![1e10]), &[0.0], 1.0).unwrap_err();
        assert_eq!(err, Error::BlowUp { step: 1 });
    }

    #[test]
    fn genuine_interpolation_examples() {
        let m = ou();
        let s = SchemeState::start(vec![1.0]);
        assert_eq!(genuine_interpolate(&m, &s, 0.5, 0.0, &[0.0]), vec![1.0]);
        assert_relative_eq!(genuine_interpolate(&m, &s, 0.5, 0.1, &[0.0])[0], 0.9, epsilon = 1e-15);
    }

    #[test]
    fn genuine_endpoint_matches_euler_bitwise() {
        let m = DiffusionModel::heston(0.05, 0.5, 2.0, 0.01, 0.1).unwrap();
        let mut stream = GaussianStream::new(9, 0);
        let mut state = SchemeState::start(vec![0.0, 0.012]);
        let sched = crate::StepSchedule::poly(0.1, 0.6).unwrap();
        for step in sched.iter().take(200) {
            let dw = [step.gamma.sqrt() * stream.normal(), step.gamma.sqrt() * stream.normal()];
            let interp = genuine_interpolate(&m, &state, step.gamma, state.clock() + step.gamma, &dw);
            let next = euler_step(&m, &state, &dw, step.gamma).unwrap();
            // (t − Γ_n) recomputed from the clock can differ from h by one ulp
            let expect = {
                let mut x = state.value.clone();
                let mut ws = EulerWorkspace::for_model(&m);
                euler_step_in_place(&m, &mut x, &dw, step.gamma, &mut ws);
                x
            };
            assert_eq!(next.value, expect);
            for (a, b) in interp.iter().zip(&next.value) {
                assert!((a - b).abs() <= 1e-15 * (1.0 + b.abs()));
            }
            assert_eq!(next.clock(), sched.cum_time(step.index));
            state = next;
        }
    }

    #[test]
    #[should_panic]
    fn genuine_rejects_time_outside_interval() {
        genuine_interpolate(&ou(), &SchemeState::start(vec![0.0]), 0.5, 0.6, &[0.0]);
    }

    #[test]
    fn cir_step_examples() {
        let p = CirParams {
            k: 2.0,
            theta: 0.01,
            varsigma: 0.1,
        };
        assert_relative_eq!(cir_reflected_step(p, 0.0001, 0.01, -0.05), 0.000_248, epsilon = 1e-15);
        assert_relative_eq!(cir_reflected_step(p, 0.0001, 0.01, -0.5), 0.000_202, epsilon = 1e-15);
        assert_relative_eq!(cir_reflected_step(p, 0.0, 0.01, 3.0), 2.0 * 0.01 * 0.01, epsilon = 1e-18);
    }

    #[test]
    fn logprice_step_examples() {
        let p = LogPriceParams { r: 0.05, rho_corr: 0.5 };
        assert_relative_eq!(heston_logprice_step(p, 1.0, 0.0, 1.0, 0.0, 0.0), 1.05, epsilon = 1e-15);
        let p = LogPriceParams { r: 0.05, rho_corr: 0.0 };
        assert_relative_eq!(heston_logprice_step(p, 1.0, 0.01, 0.0, 0.2, 5.0), 1.02, epsilon = 1e-15);
        let p = LogPriceParams { r: 0.0, rho_corr: 1.0 };
        assert_relative_eq!(heston_logprice_step(p, 1.0, 0.04, 0.0, 9.0, 0.5), 1.1, epsilon = 1e-15);
    }

    #[test]
    fn ou_exact_examples() {
        let p = OuParams { lambda: 1.0, sigma0: 1.0 };
        assert!(ou_exact_step(p, 5.0, 100.0, 0.0).abs() < 1e-40);
        assert_relative_eq!(ou_exact_step(p, 1.0, 2f64.ln(), 0.0), 0.5, epsilon = 1e-15);

        let p = OuParams { lambda: 1.0, sigma0: 2f64.sqrt() };
        let mut s = GaussianStream::new(2, 0);
        let draws: Vec<f64> = (0..100_000).map(|_| ou_exact_step(p, 0.0, 10.0, s.normal())).collect();
        let (_, v) = crate::numeric::mean_var(&draws);
        assert!((v - 1.0).abs() < 0.02, "variance {v}");
    }

    #[test]
    fn cir_step_is_nonnegative() {
        let p = CirParams {
            k: 2.0,
            theta: 0.01,
            varsigma: 0.1,
        };
        let mut s = GaussianStream::new(4, 0);
        let mut v = 0.01;
        for _ in 0..100_000 {
            v = cir_reflected_step(p, v, 0.05, 0.05f64.sqrt() * s.normal());
            assert!(v >= 0.0);
        }
    }
}
