//! Replicated normalized errors `Ε = √Γ_N (ν̄_N − target)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stats::{density_grid, kernel_density, normality_stats, NormalityStats};
use crate::empirical::{EmpiricalAccumulator, FunctionalStream};
use crate::error::{Error, Result};
use crate::numeric::mean_var;
use crate::pathfun::{bridge_sup_inverse, FunctionalSpec, PathFunctional, PathSpan};
use crate::schemes::{euler_step_in_place, DiffusionModel, EulerWorkspace, GaussianStream, ModelSpec};
use crate::stepgrid::{StepCondition, StepFamily, StepSchedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeMode {
    /// Euler grid values with Brownian-bridge suprema between grid times.
    Genuine,
    /// Piecewise-constant reading of the Euler grid values.
    Stepwise,
    /// Exact transitions of the diffusion itself (models that provide them).
    Exact,
}

fn default_true() -> bool {
    true
}

fn default_delta() -> f64 {
    0.1
}

/// Configuration of a replicated normalized-error experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltConfig {
    pub model: ModelSpec,
    pub scheme: SchemeMode,
    pub functional: FunctionalSpec,
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(default)]
    pub schedule: StepFamily,
    /// `P_ν(F_T)`, analytic or from a high-budget reference run.
    pub target: f64,
    pub replicates: usize,
    /// Euler steps per replicate.
    pub steps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_true")]
    pub strict_schedule: bool,
    /// δ of the stepwise summability condition.
    #[serde(default = "default_delta")]
    pub stepwise_delta: f64,
    /// Starting point; drawn from the invariant law when absent and possible.
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    /// Kernel bandwidth; `M^{-1/5}` when absent.
    #[serde(default)]
    pub bandwidth: Option<f64>,
    /// Spot and rate for option payoffs; taken from the model when absent.
    #[serde(default)]
    pub s0: Option<f64>,
    #[serde(default)]
    pub r: Option<f64>,
}

impl CltConfig {
    pub fn build_functional(&self) -> Result<PathFunctional> {
        let (s0, r) = match self.model {
            ModelSpec::Heston { s0, r, .. } => (s0, r),
            ModelSpec::BsLog { r, .. } => (1.0, r),
            _ => (1.0, 0.0),
        };
        self.functional
            .build(self.horizon, self.s0.unwrap_or(s0), self.r.unwrap_or(r))
    }

    /// The summability condition the chosen scheme and functional rely on.
    pub fn required_condition(&self, f: &PathFunctional) -> Option<StepCondition> {
        match self.scheme {
            SchemeMode::Exact => None,
            _ if f.horizon() == 0.0 => Some(StepCondition::Marginal),
            SchemeMode::Genuine => Some(StepCondition::Functional),
            SchemeMode::Stepwise => Some(StepCondition::Stepwise {
                delta: self.stepwise_delta,
            }),
        }
    }
}

/// Result of a replicated experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CltExperiment {
    pub replicates: usize,
    pub steps: usize,
    /// Emitted `F_T` terms per replicate.
    pub terms: usize,
    pub gamma_total: f64,
    pub samples: Vec<f64>,
    pub mean: f64,
    pub sigma2_hat: f64,
    /// Standard error of `sigma2_hat` under approximate normality.
    pub sigma2_se: f64,
    pub bandwidth: f64,
    pub density_grid: Vec<(f64, f64)>,
    pub normality: Option<NormalityStats>,
    /// Replicate indices that produced a non-finite state.
    pub blowups: Vec<usize>,
    pub warnings: Vec<String>,
}

impl CltExperiment {
    pub fn from_samples(
        samples: Vec<f64>,
        steps: usize,
        terms: usize,
        gamma_total: f64,
        bandwidth: Option<f64>,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("samples", "no replicate finished"));
        }
        let m = samples.len();
        let (mean, var) = mean_var(&samples);
        let sigma2_hat = var.max(0.0);
        let h = bandwidth.unwrap_or_else(|| (m as f64).powf(-0.2));
        let grid = density_grid(&samples, h, 401);
        let density = kernel_density(&samples, h, &grid)?;
        let normality = if m >= 100 && sigma2_hat > 0.0 {
            Some(normality_stats(&samples, sigma2_hat)?)
        } else {
            None
        };
        Ok(Self {
            replicates: m,
            steps,
            terms,
            gamma_total,
            sigma2_se: sigma2_hat * (2.0 / (m.max(2) - 1) as f64).sqrt(),
            samples,
            mean,
            sigma2_hat,
            bandwidth: h,
            density_grid: density,
            normality,
            blowups: Vec::new(),
            warnings: Vec::new(),
        })
    }
}

/// Outcome of one replicate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReplicateRun {
    pub value: f64,
    pub terms: usize,
    pub gamma_total: f64,
}

/// Runs one path of `steps` steps and returns `ν̄_N(F)` over the emitted terms.
pub fn run_replicate(
    model: &DiffusionModel,
    f: &PathFunctional,
    schedule: &StepSchedule,
    mode: SchemeMode,
    steps: usize,
    x0: Option<&[f64]>,
    stream: &mut GaussianStream,
) -> Result<ReplicateRun> {
    let d = model.dim();
    let q = model.noise_dim();
    let mut x = match (x0, &model.analytic.invariant_sampler) {
        (Some(x0), _) => {
            if x0.len() != d {
                return Err(Error::invalid("x0", "dimension does not match the model"));
            }
            x0.to_vec()
        }
        (None, Some(sampler)) => {
            let mut x = vec![0.0; d];
            sampler(stream, &mut x);
            x
        }
        (None, None) => vec![0.0; d],
    };
    let exact = match mode {
        SchemeMode::Exact => {
            if f.needs_sup() {
                return Err(Error::UnsupportedModel(
                    "exact mode has no interval suprema".into(),
                ));
            }
            Some(model.analytic.exact_transition.clone().ok_or_else(|| {
                Error::UnsupportedModel(format!("{} has no exact transition", model.name()))
            })?)
        }
        _ => None,
    };
    let track = f.needs_sup();
    // A horizon-0 functional of the origin is emitted one step later with
    // the weight of that step, so no window is needed.
    let direct = f.horizon() == 0.0 && !track;
    let mut fs = FunctionalStream::new(f.clone(), &x, track);
    let mut acc = EmpiricalAccumulator::new();
    let mut origin_time = [0.0];
    let mut dw = vec![0.0; q];
    let mut next = vec![0.0; d];
    let mut ws = EulerWorkspace::for_model(model);
    for step in schedule.iter().take(steps) {
        let h = step.gamma;
        let left = x[0];
        if direct {
            acc.fold(h, f.evaluate(&PathSpan::new(d, &origin_time, &x, None)));
            origin_time[0] = step.time;
        }
        match &exact {
            Some(tr) => {
                tr(&x, h, stream, &mut next, &mut dw);
                x.copy_from_slice(&next);
            }
            None => {
                let sd = h.sqrt();
                for w in dw.iter_mut() {
                    *w = sd * stream.normal();
                }
                euler_step_in_place(model, &mut x, &dw, h, &mut ws);
            }
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp { step: step.index });
        }
        let sup = match (track, mode) {
            (false, _) => None,
            (true, SchemeMode::Genuine) => {
                let row = &ws.last_diffusion()[..q];
                let lam = row.iter().map(|s| s * s).sum::<f64>().sqrt();
                Some(bridge_sup_inverse(left, x[0], lam, h, stream.uniform()))
            }
            (true, _) => Some(left.max(x[0])),
        };
        if !direct {
            fs.on_step(h, step.time, &x, sup)?;
        }
    }
    let snap = if direct { acc.snapshot()? } else { fs.accumulator().snapshot()? };
    Ok(ReplicateRun {
        value: snap.value,
        terms: snap.terms,
        gamma_total: snap.gamma_total,
    })
}

/// `M` independent replicates of `Ε = √Γ_N (ν̄_N − target)`, with the
/// schedule checked against the condition the scheme relies on.
pub fn run_clt_experiment(cfg: &CltConfig) -> Result<CltExperiment> {
    if cfg.replicates == 0 || cfg.steps == 0 {
        return Err(Error::invalid("replicates", "replicates and steps must be positive"));
    }
    let model = cfg.model.build()?;
    let f = cfg.build_functional()?;
    let schedule = StepSchedule::from_family(cfg.schedule.clone())?;
    let mut warnings = Vec::new();
    if let Some(cond) = cfg.required_condition(&f) {
        let report = schedule.check_conditions(cond, cfg.steps.max(1000))?;
        if !report.converges {
            let detail = format!(
                "fitted tail exponent {:.3} for {}",
                report.fitted_tail_exponent,
                cond.describe()
            );
            if cfg.strict_schedule {
                return Err(Error::ConditionFailed {
                    condition: cond.describe(),
                    detail,
                });
            }
            warnings.push(format!("schedule fails {}: {detail}", cond.describe()));
        }
    }
    if cfg.scheme == SchemeMode::Exact {
        warnings.push("exact mode: diffusion sampled with exact transitions".into());
    }

    let runs: Vec<Result<ReplicateRun>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|i| {
            let mut stream = GaussianStream::for_replicate(cfg.seed, i as u64, 0);
            run_replicate(&model, &f, &schedule, cfg.scheme, cfg.steps, cfg.x0.as_deref(), &mut stream)
        })
        .collect();

    let mut samples = Vec::with_capacity(cfg.replicates);
    let mut blowups = Vec::new();
    let mut shape = None;
    for (i, run) in runs.into_iter().enumerate() {
        match run {
            Ok(r) => {
                samples.push(r.gamma_total.sqrt() * (r.value - cfg.target));
                shape.get_or_insert((r.terms, r.gamma_total));
            }
            Err(Error::BlowUp { .. }) => blowups.push(i),
            Err(e) => return Err(e),
        }
    }
    let (terms, gamma_total) = shape.ok_or_else(|| Error::BlowUp { step: 0 })?;
    if !blowups.is_empty() {
        warnings.push(format!("{} replicates blew up", blowups.len()));
    }
    let mut exp = CltExperiment::from_samples(samples, cfg.steps, terms, gamma_total, cfg.bandwidth)?;
    exp.blowups = blowups;
    exp.warnings = warnings;
    Ok(exp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pathfun::{MarginalPoint, ScalarMap};

    fn ou_config(sigma0: f64, steps: usize) -> CltConfig {
        CltConfig {
            model: ModelSpec::Ou { lambda: 1.0, sigma0 },
            scheme: SchemeMode::Genuine,
            functional: FunctionalSpec::Marginal {
                which: MarginalPoint::Start,
                map: ScalarMap::Identity,
            },
            horizon: 1.0,
            schedule: StepFamily::Poly { gamma1: 1.0, rho: 0.6 },
            target: 0.0,
            replicates: 200,
            steps,
            seed: 3,
            strict_schedule: true,
            stepwise_delta: 0.1,
            x0: None,
            bandwidth: None,
            s0: None,
            r: None,
        }
    }

    #[test]
    fn direct_marginal_fold_matches_windowed_stream() {
        let model = DiffusionModel::ou(1.0, 1.0).unwrap();
        let sched = StepSchedule::default();
        let f = PathFunctional::marginal(MarginalPoint::Start, ScalarMap::Tanh, 0.0).unwrap();
        // a vanishing positive horizon reads the same origin point through the window
        let windowed = f.clone().with_horizon(1e-300).unwrap();
        let a = run_replicate(&model, &f, &sched, SchemeMode::Genuine, 5000, None, &mut GaussianStream::new(9, 0)).unwrap();
        let b = run_replicate(&model, &windowed, &sched, SchemeMode::Genuine, 5000, None, &mut GaussianStream::new(9, 0))
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn deterministic_flow_has_vanishing_spread() {
        let mut cfg = ou_config(0.0, 20_000);
        cfg.x0 = Some(vec![1.0]);
        let exp = run_clt_experiment(&cfg).unwrap();
        assert!(exp.sigma2_hat < 1e-24, "{}", exp.sigma2_hat);
        assert!(exp.samples.iter().all(|&s| s == exp.samples[0]));
    }

    #[test]
    fn strict_gating_rejects_bad_schedule() {
        let mut cfg = ou_config(1.0, 2000);
        cfg.schedule = StepFamily::Poly { gamma1: 1.0, rho: 0.2 };
        assert!(matches!(run_clt_experiment(&cfg), Err(Error::ConditionFailed { .. })));
        cfg.strict_schedule = false;
        cfg.replicates = 4;
        let exp = run_clt_experiment(&cfg).unwrap();
        assert_eq!(exp.warnings.len(), 1);
    }

    #[test]
    fn replicates_are_reproducible() {
        let cfg = ou_config(2f64.sqrt(), 5000);
        let a = run_clt_experiment(&cfg).unwrap();
        let b = run_clt_experiment(&cfg).unwrap();
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.terms, 5000);
    }

    #[test]
    fn exact_mode_needs_exact_transitions() {
        let mut cfg = ou_config(1.0, 1000);
        cfg.scheme = SchemeMode::Exact;
        cfg.model = ModelSpec::Cir {
            k: 2.0,
            theta: 0.01,
            varsigma: 0.1,
        };
        assert!(matches!(run_clt_experiment(&cfg), Err(Error::UnsupportedModel(_))));
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = ou_config(1.0, 10);
        let text = serde_json::to_string(&cfg).unwrap();
        let back: CltConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        let minimal = r#"{"model":{"type":"ou","lambda":1,"sigma0":1},"scheme":"stepwise",
            "functional":{"name":"running-max"},"T":1,"target":0,"replicates":10,"steps":100}"#;
        let cfg: CltConfig = serde_json::from_str(minimal).unwrap();
        assert!(cfg.strict_schedule);
        assert_eq!(cfg.schedule, StepFamily::default());
    }
}
