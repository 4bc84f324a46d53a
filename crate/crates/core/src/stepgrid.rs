//! Decreasing step sequences and the time-index machinery built on them.
//!
//! A [`StepSchedule`] owns the steps `γ_n` (n ≥ 1) and the cumulative times
//! `Γ_n = γ_1 + … + γ_n` with `Γ_0 = 0`. Cumulative times are accumulated with
//! compensated summation and cached; [`StepSchedule::iter`] replays the exact
//! same arithmetic so that a scheme walking the grid step by step sees
//! bitwise the same clock as random-access lookups through
//! [`StepSchedule::cum_time`] and [`StepSchedule::locate`].

use std::sync::RwLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{ols_slope, CompensatedSum};

/// How the step sequence is generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum StepFamily {
    /// `γ_n = gamma1 · n^{-rho}`. `rho = 0` gives constant steps.
    Poly { gamma1: f64, rho: f64 },
    /// A user-supplied finite nonincreasing sequence `γ_1, γ_2, …`.
    Explicit { values: Vec<f64> },
}

impl Default for StepFamily {
    fn default() -> Self {
        StepFamily::Poly {
            gamma1: 1.0,
            rho: 0.6,
        }
    }
}

/// `N(t)` together with `Γ_{N(t)}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridLocation {
    pub index: usize,
    pub floor_time: f64,
}

/// One step of the grid as produced by [`StepSchedule::iter`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridStep {
    /// Step number `n ≥ 1`.
    pub index: usize,
    /// `γ_n`.
    pub gamma: f64,
    /// `Γ_n`.
    pub time: f64,
}

#[derive(Debug, Clone)]
struct Cache {
    // cum[n] = Γ_n, cum[0] = 0.
    cum: Vec<f64>,
    acc: CompensatedSum,
}

impl Cache {
    fn new() -> Self {
        Self {
            cum: vec![0.0],
            acc: CompensatedSum::new(),
        }
    }
}

#[derive(Debug)]
pub struct StepSchedule {
    family: StepFamily,
    cache: RwLock<Cache>,
}

impl Clone for StepSchedule {
    fn clone(&self) -> Self {
        let cache = self.cache.read().expect("step cache poisoned").clone();
        Self {
            family: self.family.clone(),
            cache: RwLock::new(cache),
        }
    }
}

impl PartialEq for StepSchedule {
    fn eq(&self, other: &Self) -> bool {
        self.family == other.family
    }
}

impl Default for StepSchedule {
    fn default() -> Self {
        Self::from_family(StepFamily::default()).expect("default schedule is valid")
    }
}

impl StepSchedule {
    pub fn poly(gamma1: f64, rho: f64) -> Result<Self> {
        Self::from_family(StepFamily::Poly { gamma1, rho })
    }

    pub fn constant(step: f64) -> Result<Self> {
        Self::poly(step, 0.0)
    }

    pub fn explicit(values: Vec<f64>) -> Result<Self> {
        Self::from_family(StepFamily::Explicit {
            values,
        })
    }

    pub fn from_family(family: StepFamily) -> Result<Self> {
        match &family {
            StepFamily::Poly { gamma1, rho } => {
                if !(gamma1.is_finite() && *gamma1 > 0.0) {
                    return Err(Error::invalid("gamma1", "must be positive and finite"));
                }
                if !(0.0..1.0).contains(rho) {
                    return Err(Error::invalid("rho", "must lie in [0, 1)"));
                }
            }
            StepFamily::Explicit { values } => {
                if values.is_empty() {
                    return Err(Error::invalid("values", "explicit schedule is empty"));
                }
                if values.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
                    return Err(Error::invalid("values", "steps must be positive and finite"));
                }
                if values.windows(2).any(|w| w[1] > w[0]) {
                    return Err(Error::invalid("values", "steps must be nonincreasing"));
                }
            }
        }
        Ok(Self {
            family,
            cache: RwLock::new(Cache::new()),
        })
    }

    pub fn family(&self) -> &StepFamily {
        &self.family
    }

    /// Number of available steps; `None` for the unbounded polynomial family.
    pub fn len_limit(&self) -> Option<usize> {
        match &self.family {
            StepFamily::Poly { .. } => None,
            StepFamily::Explicit { values } => Some(values.len()),
        }
    }

    /// `γ_n`, or an error when an explicit schedule runs out.
    ///
    /// Panics for `n = 0`.
    pub fn try_gamma(&self, n: usize) -> Result<f64> {
        assert!(n >= 1, "step index starts at 1");
        match &self.family {
            StepFamily::Poly { gamma1, rho } => Ok(poly_gamma(*gamma1, *rho, n)),
            StepFamily::Explicit { values } => {
                values
                    .get(n - 1)
                    .copied()
                    .ok_or(Error::ScheduleExhausted {
                        requested: n,
                        available: values.len(),
                    })
            }
        }
    }

    /// `γ_n`. Panics for `n = 0` or past the end of an explicit schedule.
    pub fn gamma(&self, n: usize) -> f64 {
        self.try_gamma(n).unwrap_or_else(|e| panic!("{e}"))
    }

    pub fn try_cum_time(&self, n: usize) -> Result<f64> {
        if let Some(&c) = self.cache.read().expect("step cache poisoned").cum.get(n) {
            return Ok(c);
        }
        self.extend_to(n)?;
        Ok(self.cache.read().expect("step cache poisoned").cum[n])
    }

    /// `Γ_n`, with `Γ_0 = 0`.
    pub fn cum_time(&self, n: usize) -> f64 {
        self.try_cum_time(n).unwrap_or_else(|e| panic!("{e}"))
    }

    /// Pre-size the cache so that `Γ_0 … Γ_n` are available without locking
    /// for write later.
    pub fn prepare(&self, n: usize) -> Result<()> {
        self.extend_to(n)
    }

    fn extend_to(&self, n: usize) -> Result<()> {
        let mut cache = self.cache.write().expect("step cache poisoned");
        while cache.cum.len() <= n {
            let k = cache.cum.len();
            let g = self.try_gamma(k)?;
            cache.acc.add(g);
            let c = cache.acc.value();
            cache.cum.push(c);
        }
        Ok(())
    }

    /// `N(t) = min{n ≥ 0 : Γ_{n+1} > t}` and `Γ_{N(t)}`.
    pub fn try_locate(&self, t: f64) -> Result<GridLocation> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::invalid("t", "must be finite and nonnegative"));
        }
        loop {
            let cached_steps = {
                let cache = self.cache.read().expect("step cache poisoned");
                if *cache.cum.last().expect("cum has Γ_0") > t {
                    let index = cache.cum.partition_point(|&c| c <= t) - 1;
                    return Ok(GridLocation {
                        index,
                        floor_time: cache.cum[index],
                    });
                }
                cache.cum.len() - 1
            };
            let target = match self.len_limit() {
                None => (2 * cached_steps).max(64),
                Some(available) if cached_steps >= available => {
                    return Err(Error::ScheduleExhausted {
                        requested: cached_steps + 1,
                        available,
                    })
                }
                Some(available) => (2 * cached_steps).max(64).min(available),
            };
            self.extend_to(target)?;
        }
    }

    pub fn locate(&self, t: f64) -> GridLocation {
        self.try_locate(t).unwrap_or_else(|e| panic!("{e}"))
    }

    /// Walk the grid, producing `(n, γ_n, Γ_n)` for n = 1, 2, ….
    pub fn iter(&self) -> GridIter<'_> {
        GridIter {
            schedule: self,
            next: 1,
            acc: CompensatedSum::new(),
        }
    }

    /// Check one of the summability conditions on the step sequence up to
    /// `horizon` terms.
    pub fn check_conditions(
        &self,
        condition: StepCondition,
        horizon: usize,
    ) -> Result<ConditionReport> {
        if horizon < 1000 {
            return Err(Error::invalid("horizon", "must be at least 1000"));
        }
        let exponent = condition.step_exponent()?;
        let summand = |k: usize| -> Result<f64> {
            Ok(self.try_gamma(k)?.powf(exponent) / self.try_cum_time(k)?.sqrt())
        };
        self.prepare(horizon)?;

        let mut partial = CompensatedSum::new();
        for k in 1..=horizon {
            partial.add(summand(k)?);
        }

        // log-spaced sample of the summand over the last decade
        let lo = (horizon / 10).max(1) as f64;
        let hi = horizon as f64;
        let points = 48;
        let mut xs = Vec::with_capacity(points);
        let mut ys = Vec::with_capacity(points);
        for j in 0..points {
            let k = (lo * (hi / lo).powf(j as f64 / (points - 1) as f64)).round() as usize;
            let k = k.clamp(1, horizon);
            xs.push((k as f64).ln());
            ys.push(summand(k)?.ln());
        }
        let fitted = ols_slope(&xs, &ys);

        let (converges, analytic) = match self.family {
            StepFamily::Poly { rho, .. } => (rho * exponent + 0.5 * (1.0 - rho) > 1.0, true),
            StepFamily::Explicit { .. } => (fitted < -1.0, false),
        };
        Ok(ConditionReport {
            condition,
            converges,
            analytic_verdict: analytic,
            partial_sum: partial.value(),
            fitted_tail_exponent: fitted,
        })
    }
}

#[inline]
fn poly_gamma(gamma1: f64, rho: f64, n: usize) -> f64 {
    if rho == 0.0 {
        gamma1
    } else {
        gamma1 * (n as f64).powf(-rho)
    }
}

pub struct GridIter<'a> {
    schedule: &'a StepSchedule,
    next: usize,
    acc: CompensatedSum,
}

impl Iterator for GridIter<'_> {
    type Item = GridStep;

    fn next(&mut self) -> Option<GridStep> {
        let gamma = self.schedule.try_gamma(self.next).ok()?;
        self.acc.add(gamma);
        let step = GridStep {
            index: self.next,
            gamma,
            time: self.acc.value(),
        };
        self.next += 1;
        Some(step)
    }
}

/// Summability conditions on the steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "kebab-case")]
pub enum StepCondition {
    /// `Σ γ_k² / √Γ_k < ∞`, the marginal-CLT condition.
    Marginal,
    /// `Σ γ_k^{3/2} / √Γ_k < ∞`, required for the genuine scheme.
    Functional,
    /// `Σ γ_k^{3/2-δ} / √Γ_k < ∞`, required for the stepwise constant scheme.
    Stepwise { delta: f64 },
}

impl StepCondition {
    fn step_exponent(&self) -> Result<f64> {
        match *self {
            StepCondition::Marginal => Ok(2.0),
            StepCondition::Functional => Ok(1.5),
            StepCondition::Stepwise { delta } => {
                if !(delta > 0.0 && delta < 0.5) {
                    return Err(Error::invalid("delta", "must lie in (0, 1/2)"));
                }
                Ok(1.5 - delta)
            }
        }
    }

    pub fn describe(&self) -> String {
        match self {
            StepCondition::Marginal => "sum gamma^2/sqrt(Gamma) < inf".into(),
            StepCondition::Functional => "sum gamma^(3/2)/sqrt(Gamma) < inf".into(),
            StepCondition::Stepwise { delta } => {
                format!("sum gamma^(3/2-{delta})/sqrt(Gamma) < inf")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub condition: StepCondition,
    pub converges: bool,
    /// True when `converges` comes from the closed-form exponent criterion of
    /// the polynomial family rather than the fitted tail exponent.
    pub analytic_verdict: bool,
    pub partial_sum: f64,
    pub fitted_tail_exponent: f64,
}
