//! Stationary Heston up-and-out call priced from one long decreasing-step
//! path, with a Black–Scholes companion path as control variate.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::cltlab::CltExperiment;
use crate::empirical::{EmpiricalAccumulator, FunctionalStream};
use crate::error::{Error, Result};
use crate::numeric::mean_var;
use crate::pathfun::{bridge_sup_inverse, BarrierParams, PathFunctional};
use crate::schemes::{
    cir_reflected_step, cir_stationary_sampler, heston_logprice_step, CirParams, GaussianStream, LogPriceParams,
};
use crate::stepgrid::StepSchedule;

/// Market and model parameters. Defaults are the reference set
/// `s0 = 50, r = 0.05, T = 1, ρ = 0.5, θ = 0.01, ς = 0.1, k = 2, K = 50, L = 55`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HestonConfig {
    pub s0: f64,
    pub r: f64,
    #[serde(rename = "T")]
    pub maturity: f64,
    pub rho_corr: f64,
    pub theta: f64,
    pub varsigma: f64,
    pub k: f64,
    #[serde(rename = "K")]
    pub strike: f64,
    #[serde(rename = "L")]
    pub barrier: f64,
    /// Fixed initial variance; drawn from the stationary law when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v0: Option<f64>,
}

impl Default for HestonConfig {
    fn default() -> Self {
        Self {
            s0: 50.0,
            r: 0.05,
            maturity: 1.0,
            rho_corr: 0.5,
            theta: 0.01,
            varsigma: 0.1,
            k: 2.0,
            strike: 50.0,
            barrier: 55.0,
            v0: None,
        }
    }
}

impl HestonConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.k > 0.0 && self.theta > 0.0 && self.varsigma >= 0.0) {
            return bad("need k > 0, theta > 0, varsigma ≥ 0".into());
        }
        if 2.0 * self.k * self.theta <= self.varsigma * self.varsigma {
            return bad(format!(
                "positivity condition 2k·theta > varsigma² fails: {} ≤ {}",
                2.0 * self.k * self.theta,
                self.varsigma * self.varsigma
            ));
        }
        if !(self.barrier > self.strike && self.strike > 0.0) {
            return bad(format!("need L > K > 0, got K = {}, L = {}", self.strike, self.barrier));
        }
        if self.rho_corr.abs() > 1.0 {
            return bad(format!("|rho_corr| must be ≤ 1, got {}", self.rho_corr));
        }
        if !(self.s0 > 0.0 && self.maturity > 0.0) {
            return bad("s0 and T must be positive".into());
        }
        if let Some(v0) = self.v0 {
            if !(v0 >= 0.0) {
                return bad("v0 must be nonnegative".into());
            }
        }
        Ok(())
    }

    pub fn cir(&self) -> CirParams {
        CirParams {
            k: self.k,
            theta: self.theta,
            varsigma: self.varsigma,
        }
    }

    fn barrier_params(&self) -> BarrierParams {
        BarrierParams {
            s0: self.s0,
            r: self.r,
            strike: self.strike,
            barrier: self.barrier,
            horizon: self.maturity,
        }
    }

    /// Black–Scholes parameters with the volatility frozen at `√θ`.
    pub fn bs_reference(&self) -> BsBarrierParams {
        BsBarrierParams {
            s0: self.s0,
            r: self.r,
            sigma: self.theta.sqrt(),
            maturity: self.maturity,
            strike: self.strike,
            barrier: self.barrier,
        }
    }
}

/// One draw of the stationary variance: Gamma with shape `2kθ/ς²` and rate
/// `2k/ς²`.
pub fn sample_stationary_v(p: CirParams, stream: &mut GaussianStream) -> Result<f64> {
    let sampler = cir_stationary_sampler(p.k, p.theta, p.varsigma).map_err(|e| Error::Config(e.to_string()))?;
    Ok(sampler(stream))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BsBarrierParams {
    pub s0: f64,
    pub r: f64,
    pub sigma: f64,
    #[serde(rename = "T")]
    pub maturity: f64,
    #[serde(rename = "K")]
    pub strike: f64,
    #[serde(rename = "L")]
    pub barrier: f64,
}

/// Closed-form up-and-out call under geometric Brownian motion (reflection
/// principle, continuous monitoring, `K < L`).
pub fn bs_barrier_price(p: &BsBarrierParams) -> Result<f64> {
    if !(p.barrier > p.strike && p.strike > 0.0) {
        return Err(Error::Config(format!("need L > K > 0, got K = {}, L = {}", p.strike, p.barrier)));
    }
    if !(p.sigma > 0.0 && p.maturity > 0.0 && p.s0 > 0.0) {
        return Err(Error::Config("need sigma, T and s0 positive".into()));
    }
    if p.s0 >= p.barrier {
        return Ok(0.0);
    }
    let n = Normal::standard();
    let (s, k, h, t, r, sig) = (p.s0, p.strike, p.barrier, p.maturity, p.r, p.sigma);
    let sst = sig * t.sqrt();
    let mu = (r - 0.5 * sig * sig) / (sig * sig);
    let shift = (1.0 + mu) * sst;
    let disc = k * (-r * t).exp();
    let x1 = (s / k).ln() / sst + shift;
    let x2 = (s / h).ln() / sst + shift;
    let y1 = (h * h / (s * k)).ln() / sst + shift;
    let y2 = (h / s).ln() / sst + shift;
    let ratio = h / s;
    let up = ratio.powf(2.0 * (mu + 1.0));
    let down = ratio.powf(2.0 * mu);
    let a = s * n.cdf(x1) - disc * n.cdf(x1 - sst);
    let b = s * n.cdf(x2) - disc * n.cdf(x2 - sst);
    let c = s * up * n.cdf(-y1) - disc * down * n.cdf(-y1 + sst);
    let d = s * up * n.cdf(-y2) - disc * down * n.cdf(-y2 + sst);
    Ok((a - b + c - d).max(0.0))
}

/// Vanilla Black–Scholes call, the `L → ∞` limit of [`bs_barrier_price`].
pub fn bs_call_price(s0: f64, r: f64, sigma: f64, maturity: f64, strike: f64) -> f64 {
    let n = Normal::standard();
    let sst = sigma * maturity.sqrt();
    let d1 = ((s0 / strike).ln() + (r + 0.5 * sigma * sigma) * maturity) / sst;
    s0 * n.cdf(d1) - strike * (-r * maturity).exp() * n.cdf(d1 - sst)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HestonPrice {
    /// `raw_value` or, with the control variate, `raw − companion + closed form`.
    pub price: f64,
    /// `closed form − companion` (zero without the control variate).
    pub cv_adjustment: f64,
    pub raw_value: f64,
    pub bs_companion: f64,
    pub bs_closed_form: f64,
    pub terms: usize,
    pub gamma_total: f64,
    pub steps: usize,
    /// γ-weighted averages of `v̄` and `v̄²` along the path.
    pub v_mean: f64,
    pub v_second_moment: f64,
}

/// Running estimates after `terms` emitted payoffs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PriceTracePoint {
    pub terms: usize,
    pub gamma_total: f64,
    pub raw_value: f64,
    pub bs_companion: f64,
    pub price: f64,
}

/// One long path of the reflected CIR variance and the frozen-volatility
/// log-price, folding the barrier payoff over every shift origin. The
/// companion Black–Scholes path (volatility `√θ`) consumes the same
/// `(dW¹, dW²)` and the same bridge uniforms.
pub fn price_stationary_heston(
    cfg: &HestonConfig,
    schedule: &StepSchedule,
    steps: usize,
    stream: &mut GaussianStream,
    control_variate: bool,
) -> Result<HestonPrice> {
    price_stationary_heston_traced(cfg, schedule, steps, stream, control_variate, 0).map(|(p, _)| p)
}

/// [`price_stationary_heston`] keeping the running estimates every
/// `trace_every` emitted payoffs (0 keeps none).
pub fn price_stationary_heston_traced(
    cfg: &HestonConfig,
    schedule: &StepSchedule,
    steps: usize,
    stream: &mut GaussianStream,
    control_variate: bool,
    trace_every: usize,
) -> Result<(HestonPrice, Vec<PriceTracePoint>)> {
    cfg.validate()?;
    let bs_params = cfg.bs_reference();
    let bs_closed_form = bs_barrier_price(&bs_params)?;
    let payoff = PathFunctional::barrier_uo_call(cfg.barrier_params())?;
    let cir = cfg.cir();
    let lp = LogPriceParams {
        r: cfg.r,
        rho_corr: cfg.rho_corr,
    };
    let sqrt_theta = cfg.theta.sqrt();

    let mut v = match cfg.v0 {
        Some(v0) => v0,
        None => sample_stationary_v(cir, stream)?,
    };
    let (mut xi, mut xi_bs) = (0.0f64, 0.0f64);
    let mut heston = FunctionalStream::new(payoff.clone(), &[xi], true).with_trace(trace_every);
    let mut bs = FunctionalStream::new(payoff, &[xi_bs], true).with_trace(trace_every);
    let mut v1 = EmpiricalAccumulator::new();
    let mut v2 = EmpiricalAccumulator::new();

    for step in schedule.iter().take(steps) {
        let h = step.gamma;
        let sd = h.sqrt();
        let dw1 = sd * stream.normal();
        let dw2 = sd * stream.normal();
        let u = stream.uniform();
        v1.fold(h, v);
        v2.fold(h, v * v);

        let next = heston_logprice_step(lp, xi, v, h, dw1, dw2);
        let sup = bridge_sup_inverse(xi, next, v.sqrt(), h, u);
        let next_bs = heston_logprice_step(lp, xi_bs, cfg.theta, h, dw1, dw2);
        let sup_bs = bridge_sup_inverse(xi_bs, next_bs, sqrt_theta, h, u);
        v = cir_reflected_step(cir, v, h, dw2);
        xi = next;
        xi_bs = next_bs;
        if !(xi.is_finite() && v.is_finite()) {
            return Err(Error::BlowUp { step: step.index });
        }
        heston.on_step(h, step.time, &[xi], Some(sup))?;
        bs.on_step(h, step.time, &[xi_bs], Some(sup_bs))?;
    }
    let raw = heston.accumulator().snapshot()?;
    let companion = bs.accumulator().snapshot()?;
    let cv_adjustment = if control_variate {
        bs_closed_form - companion.value
    } else {
        0.0
    };
    // both streams see the same grid, so their traces line up term by term
    let trace = heston
        .accumulator()
        .trace()
        .iter()
        .zip(bs.accumulator().trace())
        .map(|(h, b)| PriceTracePoint {
            terms: h.terms,
            gamma_total: h.gamma_total,
            raw_value: h.value,
            bs_companion: b.value,
            price: if control_variate {
                h.value - b.value + bs_closed_form
            } else {
                h.value
            },
        })
        .collect();
    let price = HestonPrice {
        price: raw.value + cv_adjustment,
        cv_adjustment,
        raw_value: raw.value,
        bs_companion: companion.value,
        bs_closed_form,
        terms: raw.terms,
        gamma_total: raw.gamma_total,
        steps,
        v_mean: v1.snapshot()?.value,
        v_second_moment: v2.snapshot()?.value,
    };
    Ok((price, trace))
}

/// High-budget price used to center normalized errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferencePrice {
    pub price: f64,
    /// Standard error across the independent runs.
    pub stderr: f64,
    pub runs: usize,
    pub steps: usize,
    pub seed: u64,
}

/// Mean of `runs` independent control-variate prices of `steps` steps each.
pub fn reference_price(
    cfg: &HestonConfig,
    schedule: &StepSchedule,
    steps: usize,
    runs: usize,
    seed: u64,
) -> Result<ReferencePrice> {
    if runs < 2 {
        return Err(Error::invalid("runs", "need at least two runs for a standard error"));
    }
    let prices: Vec<f64> = (0..runs)
        .into_par_iter()
        .map(|i| {
            let mut stream = GaussianStream::for_replicate(seed, i as u64, 1);
            price_stationary_heston(cfg, schedule, steps, &mut stream, true).map(|p| p.price)
        })
        .collect::<Result<_>>()?;
    let (mean, var) = mean_var(&prices);
    Ok(ReferencePrice {
        price: mean,
        stderr: (var / runs as f64).sqrt(),
        runs,
        steps,
        seed,
    })
}

/// γ-weighted averages of `v̄` and `v̄²` along one reflected CIR path.
pub fn cir_marginal_moments(
    p: CirParams,
    v0: f64,
    schedule: &StepSchedule,
    steps: usize,
    stream: &mut GaussianStream,
) -> Result<(f64, f64)> {
    let mut v = v0;
    let mut m1 = EmpiricalAccumulator::new();
    let mut m2 = EmpiricalAccumulator::new();
    for step in schedule.iter().take(steps) {
        m1.fold(step.gamma, v);
        m2.fold(step.gamma, v * v);
        v = cir_reflected_step(p, v, step.gamma, step.gamma.sqrt() * stream.normal());
    }
    Ok((m1.snapshot()?.value, m2.snapshot()?.value))
}

/// Settings of the replicated normalized-error experiment on the Heston
/// barrier price.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Figure1Settings {
    pub steps: usize,
    pub replicates: usize,
    pub seed: u64,
    /// Price the errors are centered on.
    pub reference: f64,
    pub control_variate: bool,
    /// Kernel bandwidth; `M^{-1/5}` when absent.
    pub bandwidth: Option<f64>,
}

/// `M` independent prices `p_ℓ` and the normalized errors
/// `√Γ_N (p_ℓ − reference)`.
pub fn run_figure1(cfg: &HestonConfig, schedule: &StepSchedule, s: &Figure1Settings) -> Result<CltExperiment> {
    cfg.validate()?;
    if s.replicates == 0 {
        return Err(Error::invalid("replicates", "must be positive"));
    }
    let runs: Vec<Result<HestonPrice>> = (0..s.replicates)
        .into_par_iter()
        .map(|i| {
            let mut stream = GaussianStream::for_replicate(s.seed, i as u64, 0);
            price_stationary_heston(cfg, schedule, s.steps, &mut stream, s.control_variate)
        })
        .collect();
    let mut samples = Vec::with_capacity(s.replicates);
    let mut blowups = Vec::new();
    let mut shape = None;
    for (i, run) in runs.into_iter().enumerate() {
        match run {
            Ok(p) => {
                samples.push(p.gamma_total.sqrt() * (p.price - s.reference));
                shape.get_or_insert((p.terms, p.gamma_total));
            }
            Err(Error::BlowUp { .. }) => blowups.push(i),
            Err(e) => return Err(e),
        }
    }
    let (terms, gamma_total) = shape.ok_or(Error::BlowUp { step: 0 })?;
    let mut exp = CltExperiment::from_samples(samples, s.steps, terms, gamma_total, s.bandwidth)?;
    if !blowups.is_empty() {
        exp.warnings.push(format!("{} replicates blew up", blowups.len()));
    }
    exp.blowups = blowups;
    Ok(exp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn reference_bs() -> BsBarrierParams {
        HestonConfig::default().bs_reference()
    }

    #[test]
    fn config_validation() {
        assert!(HestonConfig::default().validate().is_ok());
        let bad = HestonConfig {
            varsigma: 0.3,
            ..Default::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let bad = HestonConfig {
            strike: 60.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = HestonConfig {
            rho_corr: 1.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let cfg: HestonConfig = serde_json::from_str(r#"{"K": 45, "L": 60}"#).unwrap();
        assert_eq!(cfg.s0, 50.0);
        assert_eq!(cfg.strike, 45.0);
    }

    #[test]
    fn stationary_variance_moments() {
        let mut s = GaussianStream::new(4, 0);
        let p = HestonConfig::default().cir();
        let xs: Vec<f64> = (0..100_000).map(|_| sample_stationary_v(p, &mut s).unwrap()).collect();
        assert!(xs.iter().all(|&x| x > 0.0));
        let (m, v) = mean_var(&xs);
        assert!((m / 0.01 - 1.0).abs() < 0.01, "mean {m}");
        assert!((v / 2.5e-5 - 1.0).abs() < 0.05, "variance {v}");
        let bad = CirParams {
            k: 2.0,
            theta: 0.01,
            varsigma: 0.3,
        };
        assert!(matches!(sample_stationary_v(bad, &mut s), Err(Error::Config(_))));
    }

    #[test]
    fn barrier_closed_form_limits() {
        let p = reference_bs();
        assert_eq!(bs_barrier_price(&BsBarrierParams { s0: 55.0, ..p }).unwrap(), 0.0);
        assert_eq!(bs_barrier_price(&BsBarrierParams { s0: 60.0, ..p }).unwrap(), 0.0);
        let far = BsBarrierParams {
            barrier: 1e6 * p.strike,
            ..p
        };
        let vanilla = bs_call_price(p.s0, p.r, p.sigma, p.maturity, p.strike);
        assert_relative_eq!(bs_barrier_price(&far).unwrap(), vanilla, epsilon = 1e-6);
        assert!(bs_barrier_price(&BsBarrierParams { strike: 56.0, ..p }).is_err());
        let price = bs_barrier_price(&p).unwrap();
        assert!(price > 0.0 && price < vanilla);
    }

    #[test]
    fn barrier_closed_form_matches_bridge_monte_carlo() {
        // The log-price is a drifted Brownian motion, so piecewise bridge
        // maxima over any grid sample the continuous supremum exactly.
        let p = reference_bs();
        let payoff = BarrierParams {
            s0: p.s0,
            r: p.r,
            strike: p.strike,
            barrier: p.barrier,
            horizon: p.maturity,
        };
        let steps = 8;
        let h = p.maturity / steps as f64;
        let drift = (p.r - 0.5 * p.sigma * p.sigma) * h;
        let mut s = GaussianStream::new(21, 0);
        let n = 1_000_000;
        let mut pays = Vec::with_capacity(n);
        for _ in 0..n {
            let (mut x, mut peak) = (0.0f64, 0.0f64);
            for _ in 0..steps {
                let y = x + drift + p.sigma * h.sqrt() * s.normal();
                peak = peak.max(bridge_sup_inverse(x, y, p.sigma, h, s.uniform()));
                x = y;
            }
            let times = [0.0, p.maturity];
            let vals = [0.0, x];
            let span = crate::pathfun::PathSpan::new(1, &times, &vals, Some(peak));
            pays.push(crate::pathfun::barrier_payoff(&span, &payoff));
        }
        let (m, v) = mean_var(&pays);
        let se = (v / n as f64).sqrt();
        let exact = bs_barrier_price(&p).unwrap();
        assert!((m - exact).abs() < 3.0 * se, "closed form {exact}, MC {m} ± {se}");
    }

    #[test]
    fn knocked_out_at_inception_prices_zero() {
        let cfg = HestonConfig {
            s0: 56.0,
            ..Default::default()
        };
        let sched = StepSchedule::default();
        let mut s = GaussianStream::new(1, 0);
        let p = price_stationary_heston(&cfg, &sched, 20_000, &mut s, false).unwrap();
        assert_eq!(p.price, 0.0);
    }

    #[test]
    fn vanishing_vol_of_vol_matches_black_scholes() {
        let cfg = HestonConfig {
            varsigma: 0.0,
            v0: Some(0.01),
            ..Default::default()
        };
        let sched = StepSchedule::default();
        let mut s = GaussianStream::new(2, 0);
        let p = price_stationary_heston(&cfg, &sched, 200_000, &mut s, true).unwrap();
        // both paths coincide, so the control variate removes all noise
        assert_eq!(p.raw_value, p.bs_companion);
        assert_eq!(p.price, p.bs_closed_form);
    }

    #[test]
    fn pricing_is_reproducible() {
        let cfg = HestonConfig::default();
        let sched = StepSchedule::default();
        let a = price_stationary_heston(&cfg, &sched, 10_000, &mut GaussianStream::new(5, 1), true).unwrap();
        let b = price_stationary_heston(&cfg, &sched, 10_000, &mut GaussianStream::new(5, 1), true).unwrap();
        assert_eq!(a, b);
        assert_relative_eq!(a.price, a.raw_value + a.cv_adjustment);
    }

    #[test]
    fn trace_ends_at_the_final_estimate() {
        let cfg = HestonConfig::default();
        let sched = StepSchedule::default();
        let mut s = GaussianStream::new(8, 0);
        let (p, trace) = price_stationary_heston_traced(&cfg, &sched, 20_000, &mut s, true, 1).unwrap();
        assert_eq!(trace.len(), p.terms);
        let last = trace.last().unwrap();
        assert_eq!(last.raw_value, p.raw_value);
        assert_relative_eq!(last.price, p.price, epsilon = 1e-12);
        let plain = price_stationary_heston(&cfg, &sched, 20_000, &mut GaussianStream::new(8, 0), true).unwrap();
        assert_eq!(plain, p);
    }

    #[test]
    fn reference_price_reports_spread() {
        let cfg = HestonConfig::default();
        let sched = StepSchedule::default();
        let r = reference_price(&cfg, &sched, 20_000, 4, 3).unwrap();
        assert!(r.stderr > 0.0 && r.price > 0.0);
        assert!(reference_price(&cfg, &sched, 20_000, 1, 3).is_err());
    }
}
