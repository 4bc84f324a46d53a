//! Asymptotic variances from the Poisson-equation representations.
//!
//! Both functional estimators work on stationary paths sampled on a uniform
//! fine grid `h = T/m`, read the functional stepwise at grid points and use
//! the trapezoid rule in time. Exact transitions are used when the model
//! provides them; otherwise a fine Euler surrogate is used and flagged.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{mean_var, trapezoid_uniform};
use crate::pathfun::{FunctionalSpec, GridPath, MarginalPoint, PathFunctional, ScalarMap};
use crate::schemes::{euler_step_in_place, DiffusionModel, EulerWorkspace, GaussianStream, ScalarField, VecField};

/// A Monte Carlo quantity with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let (m, v) = mean_var(xs);
        Self {
            value: m,
            stderr: (v / xs.len() as f64).sqrt(),
        }
    }

    fn scaled(self, c: f64) -> Self {
        Self {
            value: c * self.value,
            stderr: c.abs() * self.stderr,
        }
    }

    /// `|a − b|` in units of the combined standard error.
    pub fn z_distance(&self, other: &Estimate) -> f64 {
        (self.value - other.value).abs() / self.stderr.hypot(other.stderr)
    }
}

/// `σ_f² = ∫|σ*∇g|² dν` for the model's Poisson solution.
///
/// Uses invariant draws when the model can sample `ν`, otherwise a
/// decreasing-step marginal average over `samples` Euler steps (no standard
/// error in that case).
pub fn marginal_sigma2(model: &DiffusionModel, samples: usize, stream: &mut GaussianStream) -> Result<Estimate> {
    let ps = model
        .analytic
        .poisson_solution
        .as_ref()
        .ok_or_else(|| Error::UnsupportedModel(format!("{} has no Poisson solution", model.name())))?;
    let integrand = integrand_sigma_grad(model, ps.grad_g.clone());
    if samples == 0 {
        return Err(Error::invalid("samples", "must be positive"));
    }
    match &model.analytic.invariant_sampler {
        Some(sampler) => {
            let mut x = vec![0.0; model.dim()];
            let vals: Vec<f64> = (0..samples)
                .map(|_| {
                    sampler(stream, &mut x);
                    integrand(&x)
                })
                .collect();
            Ok(Estimate::from_samples(&vals))
        }
        None => {
            let sched = crate::StepSchedule::default();
            let x0 = vec![0.0; model.dim()];
            let v = crate::empirical::marginal_average(model, &sched, &x0, samples, &[&*integrand], stream)?;
            Ok(Estimate {
                value: v[0],
                stderr: f64::NAN,
            })
        }
    }
}

fn integrand_sigma_grad(model: &DiffusionModel, grad_g: VecField) -> ScalarField {
    let model = model.clone();
    Arc::new(move |x| {
        let mut g = vec![0.0; model.dim()];
        let mut out = vec![0.0; model.noise_dim()];
        grad_g(x, &mut g);
        model.sigma_transpose_times(x, &g, &mut out);
        out.iter().map(|c| c * c).sum()
    })
}

/// `f_F(x) = E_x F_T(X)` and the gradient of `g_F`, the solution of
/// `𝒜 g_F = f_F − ν(f_F)`.
#[derive(Clone)]
pub struct FunctionalCompanion {
    pub f_f: ScalarField,
    pub grad_g_f: VecField,
}

impl FunctionalCompanion {
    /// Closed forms on OU `dX = −λX dt + σ₀ dW` for constant functionals and
    /// for `α(0)`, `α(T)` with the identity map.
    pub fn ou(lambda: f64, spec: &FunctionalSpec, horizon: f64) -> Result<Self> {
        let linear = |c: f64| FunctionalCompanion {
            f_f: Arc::new(move |x| c * x[0]),
            grad_g_f: Arc::new(move |_, out| out[0] = -c / lambda),
        };
        match spec {
            FunctionalSpec::Constant { value } => {
                let v = *value;
                Ok(FunctionalCompanion {
                    f_f: Arc::new(move |_| v),
                    grad_g_f: Arc::new(|_, out| out.fill(0.0)),
                })
            }
            FunctionalSpec::Marginal {
                which: MarginalPoint::Start,
                map: ScalarMap::Identity,
            } => Ok(linear(1.0)),
            FunctionalSpec::Marginal {
                which: MarginalPoint::End,
                map: ScalarMap::Identity,
            } => Ok(linear((-lambda * horizon).exp())),
            other => Err(Error::UnsupportedModel(format!(
                "no closed-form Poisson companion on OU for {other:?}"
            ))),
        }
    }
}

/// Monte Carlo budget of the functional variance estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VarianceBudget {
    pub outer_points: usize,
    /// Continuations per conditional expectation; split in two independent
    /// halves.
    pub inner_paths: usize,
    /// Fine steps per horizon `T`.
    pub fine_steps: usize,
    /// Number of uniform lags on `[0, T]` for the covariance curve.
    pub lags: usize,
    pub seed: u64,
}

impl Default for VarianceBudget {
    fn default() -> Self {
        Self {
            outer_points: 2000,
            inner_paths: 64,
            fine_steps: 64,
            lags: 33,
            seed: 1,
        }
    }
}

/// Stationary fine-grid path sampler shared by both estimators.
struct FineSampler<'a> {
    model: &'a DiffusionModel,
    h: f64,
}

impl FineSampler<'_> {
    fn start(&self, stream: &mut GaussianStream, path: &mut GridPath) -> Result<()> {
        let sampler = self.model.analytic.invariant_sampler.as_ref().ok_or_else(|| {
            Error::UnsupportedModel(format!("{} cannot sample its invariant law", self.model.name()))
        })?;
        let mut x = vec![0.0; self.model.dim()];
        sampler(stream, &mut x);
        path.times.clear();
        path.values.clear();
        path.push(0.0, &x);
        Ok(())
    }

    /// Appends `steps` points, pushing the `q` Brownian increments of each
    /// step onto `dw`.
    fn extend(&self, path: &mut GridPath, steps: usize, stream: &mut GaussianStream, dw: &mut Vec<f64>) {
        let d = self.model.dim();
        let q = self.model.noise_dim();
        let mut x = path.point(path.len() - 1).to_vec();
        let mut next = vec![0.0; d];
        let mut inc = vec![0.0; q];
        let mut ws = EulerWorkspace::for_model(self.model);
        let t0 = *path.times.last().expect("path has a start point");
        for i in 1..=steps {
            match &self.model.analytic.exact_transition {
                Some(exact) => {
                    exact(&x, self.h, stream, &mut next, &mut inc);
                    x.copy_from_slice(&next);
                }
                None => {
                    let sd = self.h.sqrt();
                    for w in inc.iter_mut() {
                        *w = sd * stream.normal();
                    }
                    euler_step_in_place(self.model, &mut x, &inc, self.h, &mut ws);
                }
            }
            dw.extend_from_slice(&inc);
            path.push(t0 + i as f64 * self.h, &x);
        }
    }
}

struct Integrand<'a> {
    model: &'a DiffusionModel,
    f: &'a PathFunctional,
    companion: &'a FunctionalCompanion,
    m: usize,
}

impl Integrand<'_> {
    /// `F_T(X^{(u_j)}) − f_F(X_{u_j})` on the fine grid.
    fn at(&self, path: &GridPath, j: usize) -> f64 {
        let span = path.span(j, j + self.m, self.f.needs_sup());
        self.f.evaluate(&span) - (self.companion.f_f)(path.point(j))
    }

    fn functional(&self, path: &GridPath, j: usize) -> f64 {
        self.f.evaluate(&path.span(j, j + self.m, self.f.needs_sup()))
    }

    /// `Σ_{j ∈ range} σ*∇g_F(X_j) · ΔW_j`.
    fn ito(&self, path: &GridPath, dw: &[f64], range: std::ops::Range<usize>) -> f64 {
        let d = self.model.dim();
        let q = self.model.noise_dim();
        let mut g = vec![0.0; d];
        let mut sg = vec![0.0; q];
        range
            .map(|j| {
                let x = path.point(j);
                (self.companion.grad_g_f)(x, &mut g);
                self.model.sigma_transpose_times(x, &g, &mut sg);
                sg.iter().zip(&dw[j * q..(j + 1) * q]).map(|(a, b)| a * b).sum::<f64>()
            })
            .sum()
    }

    fn sigma_grad_sq(&self, x: &[f64]) -> f64 {
        let mut g = vec![0.0; self.model.dim()];
        let mut sg = vec![0.0; self.model.noise_dim()];
        (self.companion.grad_g_f)(x, &mut g);
        self.model.sigma_transpose_times(x, &g, &mut sg);
        sg.iter().map(|c| c * c).sum()
    }
}

fn validate(f: &PathFunctional, budget: &VarianceBudget) -> Result<f64> {
    let t = f.horizon();
    if !(t > 0.0) {
        return Err(Error::invalid("horizon", "functional variance needs T > 0"));
    }
    if budget.fine_steps == 0 || budget.outer_points < 2 {
        return Err(Error::invalid("budget", "need fine_steps ≥ 1 and outer_points ≥ 2"));
    }
    Ok(t)
}

/// Conditional-expectation form
/// `σ_F² = (1/T) E_ν[(E(A_{2T}|ℱ_{2T}) − E(A_T|ℱ_T) − ∫_T^{2T} σ*∇g_F dW)²]`
/// with `A_t = ∫_0^t (F_T(X^{(u)}) − f_F(X_u)) du`.
///
/// Each conditional expectation is averaged over fresh continuations of the
/// frozen path (from `T` for `A_T`, from `2T` for `A_{2T}`). The two halves
/// of the continuations give independent estimates `D₁`, `D₂` of the
/// bracket, and `D₁D₂` is unbiased for its square.
pub fn sigma2_conditional_form(
    model: &DiffusionModel,
    f: &PathFunctional,
    companion: &FunctionalCompanion,
    budget: &VarianceBudget,
) -> Result<Estimate> {
    let t = validate(f, budget)?;
    if budget.inner_paths < 2 {
        return Err(Error::invalid("inner_paths", "need at least 2 continuations"));
    }
    let m = budget.fine_steps;
    let h = t / m as f64;
    let fine = FineSampler { model, h };
    let integ = Integrand { model, f, companion, m };
    let half = budget.inner_paths / 2;

    let products: Vec<f64> = (0..budget.outer_points)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let mut stream = GaussianStream::for_replicate(budget.seed, i as u64, 2);
            let mut outer = GridPath::with_capacity(model.dim(), 3 * m + 1);
            let mut dw = Vec::new();
            fine.start(&mut stream, &mut outer)?;
            fine.extend(&mut outer, 2 * m, &mut stream, &mut dw);
            let ito = integ.ito(&outer, &dw, m..2 * m);
            // integrand values for u ≤ T only look at [0, 2T]
            let fixed: Vec<f64> = (0..=m).map(|j| integ.at(&outer, j)).collect();

            let mut d = [0.0; 2];
            let mut scratch = GridPath::with_capacity(model.dim(), 3 * m + 1);
            let mut vals = vec![0.0; 2 * m + 1];
            let mut junk = Vec::new();
            for dh in d.iter_mut() {
                let (mut e_t, mut e_2t) = (0.0, 0.0);
                for _ in 0..half {
                    // continuation from T
                    scratch.times.clear();
                    scratch.values.clear();
                    scratch.times.extend_from_slice(&outer.times[..=m]);
                    scratch.values.extend_from_slice(&outer.values[..(m + 1) * model.dim()]);
                    fine.extend(&mut scratch, m, &mut stream, &mut junk);
                    vals[0] = fixed[0];
                    for (j, v) in vals.iter_mut().enumerate().take(m + 1).skip(1) {
                        *v = integ.at(&scratch, j);
                    }
                    e_t += trapezoid_uniform(&vals[..=m], h);

                    // continuation from 2T
                    scratch.times.clear();
                    scratch.values.clear();
                    scratch.times.extend_from_slice(&outer.times);
                    scratch.values.extend_from_slice(&outer.values);
                    fine.extend(&mut scratch, m, &mut stream, &mut junk);
                    vals[..=m].copy_from_slice(&fixed);
                    for (j, v) in vals.iter_mut().enumerate().skip(m + 1) {
                        *v = integ.at(&scratch, j);
                    }
                    e_2t += trapezoid_uniform(&vals, h);
                    junk.clear();
                }
                *dh = (e_2t - e_t) / half as f64 - ito;
            }
            Ok(d[0] * d[1])
        })
        .collect::<Result<_>>()?;
    Ok(Estimate::from_samples(&products).scaled(1.0 / t))
}

/// `C_F(v) = E_ν[(F_T(X^{(v)}) − f_F(X_v))(F_T(X) − f_F(X_0))]` on uniform lags.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CovarianceCurve {
    pub lags: Vec<f64>,
    pub values: Vec<f64>,
    pub mc_error: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CovarianceForm {
    pub total: Estimate,
    /// `2∫_0^T (1 − v/T) C_F(v) dv`.
    pub covariance_term: Estimate,
    /// `−2 E_ν(F_T(X) ∫_0^T σ*∇g_F(X_u) dW_u)`.
    pub cross_term: Estimate,
    /// `∫ |σ*∇g_F|² dν`.
    pub martingale_term: Estimate,
    pub curve: CovarianceCurve,
    pub exact_paths: bool,
}

/// Covariance form `σ_F² = 2∫_0^T(1 − v/T)C_F(v)dv − 2E_ν(F_T(X)∫_0^T σ*∇g_F dW) + ∫|σ*∇g_F|²dν`.
///
/// The three addends are estimated per path and summed per path, so the
/// total carries a proper standard error.
pub fn sigma2_covariance_form(
    model: &DiffusionModel,
    f: &PathFunctional,
    companion: &FunctionalCompanion,
    budget: &VarianceBudget,
) -> Result<CovarianceForm> {
    let t = validate(f, budget)?;
    let m = budget.fine_steps;
    if budget.lags < 2 || m % (budget.lags - 1) != 0 {
        return Err(Error::invalid("lags", "lags − 1 must divide fine_steps"));
    }
    let stride = m / (budget.lags - 1);
    let h = t / m as f64;
    let dv = t / (budget.lags - 1) as f64;
    let fine = FineSampler { model, h };
    let integ = Integrand { model, f, companion, m };

    struct PathTerms {
        z: Vec<f64>,
        q: [f64; 3],
    }
    let per_path: Vec<PathTerms> = (0..budget.outer_points)
        .into_par_iter()
        .map(|i| -> Result<PathTerms> {
            let mut stream = GaussianStream::for_replicate(budget.seed, i as u64, 3);
            let mut path = GridPath::with_capacity(model.dim(), 2 * m + 1);
            let mut dw = Vec::new();
            fine.start(&mut stream, &mut path)?;
            fine.extend(&mut path, 2 * m, &mut stream, &mut dw);
            let base = integ.at(&path, 0);
            let z: Vec<f64> = (0..budget.lags).map(|l| integ.at(&path, l * stride) * base).collect();
            let weighted: Vec<f64> = z
                .iter()
                .enumerate()
                .map(|(l, zl)| (1.0 - l as f64 * dv / t) * zl)
                .collect();
            let q1 = 2.0 * trapezoid_uniform(&weighted, dv);
            let q2 = -2.0 * integ.functional(&path, 0) * integ.ito(&path, &dw, 0..m);
            let q3 = integ.sigma_grad_sq(path.point(0));
            Ok(PathTerms { z, q: [q1, q2, q3] })
        })
        .collect::<Result<_>>()?;

    let column = |k: usize| -> Vec<f64> { per_path.iter().map(|p| p.q[k]).collect() };
    let totals: Vec<f64> = per_path.iter().map(|p| p.q.iter().sum()).collect();
    let mut values = Vec::with_capacity(budget.lags);
    let mut mc_error = Vec::with_capacity(budget.lags);
    for l in 0..budget.lags {
        let zl: Vec<f64> = per_path.iter().map(|p| p.z[l]).collect();
        let e = Estimate::from_samples(&zl);
        values.push(e.value);
        mc_error.push(e.stderr);
    }
    Ok(CovarianceForm {
        total: Estimate::from_samples(&totals),
        covariance_term: Estimate::from_samples(&column(0)),
        cross_term: Estimate::from_samples(&column(1)),
        martingale_term: Estimate::from_samples(&column(2)),
        curve: CovarianceCurve {
            lags: (0..budget.lags).map(|l| l as f64 * dv).collect(),
            values,
            mc_error,
        },
        exact_paths: model.analytic.exact_transition.is_some(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn small_budget() -> VarianceBudget {
        VarianceBudget {
            outer_points: 400,
            inner_paths: 8,
            fine_steps: 32,
            lags: 17,
            seed: 5,
        }
    }

    #[test]
    fn marginal_sigma2_examples() {
        let mut s = GaussianStream::new(1, 0);
        let e = marginal_sigma2(&DiffusionModel::ou(1.0, 2f64.sqrt()).unwrap(), 100, &mut s).unwrap();
        assert_relative_eq!(e.value, 2.0, epsilon = 1e-12);
        let e = marginal_sigma2(&DiffusionModel::ou(2.0, 1.0).unwrap(), 100, &mut s).unwrap();
        assert_relative_eq!(e.value, 0.25, epsilon = 1e-12);
        let e = marginal_sigma2(&DiffusionModel::ou(1.0, 0.0).unwrap(), 100, &mut s).unwrap();
        assert_eq!(e.value, 0.0);
        let cir = DiffusionModel::cir(2.0, 0.01, 0.1).unwrap();
        assert!(matches!(marginal_sigma2(&cir, 10, &mut s), Err(Error::UnsupportedModel(_))));
    }

    #[test]
    fn constant_functional_has_zero_variance() {
        let m = DiffusionModel::ou(1.0, 2f64.sqrt()).unwrap();
        let spec = FunctionalSpec::Constant { value: 0.7 };
        let f = PathFunctional::constant(0.7).with_horizon(1.0).unwrap();
        let c = FunctionalCompanion::ou(1.0, &spec, 1.0).unwrap();
        let e = sigma2_conditional_form(&m, &f, &c, &small_budget()).unwrap();
        assert_eq!(e.value, 0.0);
        let cov = sigma2_covariance_form(&m, &f, &c, &small_budget()).unwrap();
        assert_eq!(cov.total.value, 0.0);
    }

    #[test]
    fn start_marginal_reduces_to_marginal_variance() {
        let m = DiffusionModel::ou(1.0, 2f64.sqrt()).unwrap();
        let spec = FunctionalSpec::Marginal {
            which: MarginalPoint::Start,
            map: ScalarMap::Identity,
        };
        let f = PathFunctional::marginal(MarginalPoint::Start, ScalarMap::Identity, 1.0)
            .and_then(|f| f.with_horizon(1.0))
            .unwrap();
        let c = FunctionalCompanion::ou(1.0, &spec, 1.0).unwrap();
        let e = sigma2_conditional_form(&m, &f, &c, &small_budget()).unwrap();
        assert!((e.value - 2.0).abs() < 3.0 * e.stderr, "{e:?}");
        let cov = sigma2_covariance_form(&m, &f, &c, &small_budget()).unwrap();
        assert_eq!(cov.covariance_term.value, 0.0);
        assert!(cov.cross_term.value.abs() < 3.0 * cov.cross_term.stderr);
        assert_relative_eq!(cov.martingale_term.value, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn rejects_single_continuation_and_bad_lags() {
        let m = DiffusionModel::ou(1.0, 1.0).unwrap();
        let spec = FunctionalSpec::Constant { value: 0.0 };
        let f = PathFunctional::running_max(1.0).unwrap();
        let c = FunctionalCompanion::ou(1.0, &spec, 1.0).unwrap();
        let b = VarianceBudget {
            inner_paths: 1,
            ..small_budget()
        };
        assert!(sigma2_conditional_form(&m, &f, &c, &b).is_err());
        let b = VarianceBudget {
            lags: 33,
            fine_steps: 40,
            ..small_budget()
        };
        assert!(sigma2_covariance_form(&m, &f, &c, &b).is_err());
    }
}
