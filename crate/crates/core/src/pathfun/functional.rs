//! Path functionals `F_T` and their stopped evaluation on a window.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::window::{PathSpan, PathWindow};
use crate::error::{Error, Result};

pub type SpanEval = Arc<dyn Fn(&PathSpan<'_>) -> f64 + Send + Sync>;

/// A functional of the path stopped at horizon `T`.
///
/// `bound` and `lip` are metadata (sup norm and Lipschitz constant for the
/// uniform norm on `[0, T]`); an infinite `bound` means undeclared.
#[derive(Clone)]
pub struct PathFunctional {
    name: String,
    horizon: f64,
    needs_sup: bool,
    pub bound: f64,
    pub lip: f64,
    eval: SpanEval,
}

impl fmt::Debug for PathFunctional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PathFunctional")
            .field("name", &self.name)
            .field("horizon", &self.horizon)
            .field("needs_sup", &self.needs_sup)
            .field("bound", &self.bound)
            .field("lip", &self.lip)
            .finish_non_exhaustive()
    }
}

impl PathFunctional {
    pub fn new(
        name: impl Into<String>,
        horizon: f64,
        needs_sup: bool,
        bound: f64,
        lip: f64,
        eval: SpanEval,
    ) -> Result<Self> {
        if !(horizon >= 0.0 && horizon.is_finite()) {
            return Err(Error::invalid("horizon", "must be finite and nonnegative"));
        }
        if !(bound >= 0.0) || !(lip >= 0.0) {
            return Err(Error::invalid("bound", "bound and lip must be nonnegative"));
        }
        Ok(Self {
            name: name.into(),
            horizon,
            needs_sup,
            bound,
            lip,
            eval,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Whether evaluation reads per-interval suprema.
    pub fn needs_sup(&self) -> bool {
        self.needs_sup
    }

    /// Same evaluation, declared on a different horizon (the evaluation
    /// still only reads what it reads).
    pub fn with_horizon(mut self, horizon: f64) -> Result<Self> {
        if !(horizon >= 0.0 && horizon.is_finite()) {
            return Err(Error::invalid("horizon", "must be finite and nonnegative"));
        }
        self.horizon = horizon;
        Ok(self)
    }

    pub fn evaluate(&self, span: &PathSpan<'_>) -> f64 {
        (self.eval)(span)
    }

    pub fn constant(c: f64) -> Self {
        Self::new("constant", 0.0, false, c.abs(), 0.0, Arc::new(move |_| c)).expect("valid constant")
    }

    /// `f(α(0))` or `f(α(T))` applied to the first coordinate.
    pub fn marginal(which: MarginalPoint, map: ScalarMap, horizon: f64) -> Result<Self> {
        let horizon = match which {
            MarginalPoint::Start => 0.0,
            MarginalPoint::End => horizon,
        };
        let eval: SpanEval = match which {
            MarginalPoint::Start => Arc::new(move |s| map.apply(s.start()[0])),
            MarginalPoint::End => Arc::new(move |s| map.apply(s.terminal()[0])),
        };
        Self::new(
            format!("marginal-{}-{}", which.id(), map.id()),
            horizon,
            false,
            map.bound(),
            map.lip(),
            eval,
        )
    }

    /// Supremum of the first coordinate over `[0, T]`, read from interval
    /// suprema when present (each must dominate its endpoints) and from grid
    /// points otherwise.
    pub fn running_max(horizon: f64) -> Result<Self> {
        Self::new(
            "running-max",
            horizon,
            true,
            f64::INFINITY,
            1.0,
            Arc::new(|s| span_sup(s)),
        )
    }

    /// Up-and-out barrier call on a log-price path in the first coordinate.
    pub fn barrier_uo_call(params: BarrierParams) -> Result<Self> {
        params.validate()?;
        let bound = (-params.r * params.horizon).exp() * (params.barrier - params.strike).max(0.0);
        Self::new(
            "barrier-uo-call",
            params.horizon,
            true,
            bound,
            f64::INFINITY,
            Arc::new(move |s| barrier_payoff(s, &params)),
        )
    }

    /// Discounted European call on a log-price path.
    pub fn terminal_call(s0: f64, r: f64, strike: f64, horizon: f64) -> Result<Self> {
        if !(strike >= 0.0) || !(s0 > 0.0) {
            return Err(Error::Config("terminal-call needs K ≥ 0 and s0 > 0".into()));
        }
        let disc = (-r * horizon).exp();
        Self::new(
            "terminal-call",
            horizon,
            false,
            f64::INFINITY,
            f64::INFINITY,
            Arc::new(move |s| disc * (s0 * (s.terminal()[0] - s.start()[0]).exp() - strike).max(0.0)),
        )
    }
}

// Interval suprema dominate their endpoints, so the grid scan is only the
// fallback for untracked windows.
fn span_sup(s: &PathSpan<'_>) -> f64 {
    match s.running_max() {
        Some(v) => v,
        None => (0..s.len()).map(|i| s.point(i)[0]).fold(f64::NEG_INFINITY, f64::max),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MarginalPoint {
    Start,
    End,
}

impl MarginalPoint {
    fn id(self) -> &'static str {
        match self {
            Self::Start => "start",
            Self::End => "end",
        }
    }
}

/// Scalar maps selectable by id in configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalarMap {
    Identity,
    Square,
    Tanh,
    Atan,
    Cos,
}

impl ScalarMap {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Self::Identity => x,
            Self::Square => x * x,
            Self::Tanh => x.tanh(),
            Self::Atan => x.atan(),
            Self::Cos => x.cos(),
        }
    }

    pub fn bound(self) -> f64 {
        match self {
            Self::Identity | Self::Square => f64::INFINITY,
            Self::Tanh | Self::Cos => 1.0,
            Self::Atan => std::f64::consts::FRAC_PI_2,
        }
    }

    pub fn lip(self) -> f64 {
        match self {
            Self::Square => f64::INFINITY,
            _ => 1.0,
        }
    }

    pub fn id(self) -> &'static str {
        match self {
            Self::Identity => "identity",
            Self::Square => "square",
            Self::Tanh => "tanh",
            Self::Atan => "atan",
            Self::Cos => "cos",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarrierParams {
    pub s0: f64,
    pub r: f64,
    #[serde(rename = "K")]
    pub strike: f64,
    #[serde(rename = "L")]
    pub barrier: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
}

impl BarrierParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.barrier > 0.0) {
            return Err(Error::Config(format!("barrier L must be positive, got {}", self.barrier)));
        }
        if !(self.strike >= 0.0) {
            return Err(Error::Config(format!("strike K must be nonnegative, got {}", self.strike)));
        }
        if !(self.s0 > 0.0) || !(self.horizon > 0.0) {
            return Err(Error::Config("s0 and T must be positive".into()));
        }
        Ok(())
    }
}

/// `e^{−rT}(s0 e^{ξ_T − ξ_0} − K)_+ 1{s0 sup e^{ξ_t − ξ_0} ≤ L}` on a span
/// whose first coordinate is the log-price.
pub fn barrier_payoff(span: &PathSpan<'_>, p: &BarrierParams) -> f64 {
    let x0 = span.start()[0];
    let peak = p.s0 * (span_sup(span) - x0).exp();
    if peak > p.barrier {
        return 0.0;
    }
    let terminal = p.s0 * (span.terminal()[0] - x0).exp();
    (-p.r * p.horizon).exp() * (terminal - p.strike).max(0.0)
}

/// Functional description as it appears in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum FunctionalSpec {
    BarrierUoCall {
        #[serde(rename = "K")]
        strike: f64,
        #[serde(rename = "L")]
        barrier: f64,
    },
    Marginal {
        which: MarginalPoint,
        map: ScalarMap,
    },
    TerminalCall {
        #[serde(rename = "K")]
        strike: f64,
    },
    RunningMax,
    Constant {
        value: f64,
    },
}

impl FunctionalSpec {
    /// `s0` and `r` are only read by the option payoffs.
    pub fn build(&self, horizon: f64, s0: f64, r: f64) -> Result<PathFunctional> {
        match *self {
            Self::BarrierUoCall { strike, barrier } => PathFunctional::barrier_uo_call(BarrierParams {
                s0,
                r,
                strike,
                barrier,
                horizon,
            }),
            Self::Marginal { which, map } => PathFunctional::marginal(which, map, horizon),
            Self::TerminalCall { strike } => PathFunctional::terminal_call(s0, r, strike, horizon),
            Self::RunningMax => PathFunctional::running_max(horizon),
            Self::Constant { value } => Ok(PathFunctional::constant(value)),
        }
    }
}

/// `F_T` of the path shifted to the grid time `u`.
///
/// The window must hold the origin and every grid point up to
/// `Γ_{N(u+T)+1}`; anything less is a retention bug and reported as an error.
pub fn eval_stopped(f: &PathFunctional, window: &PathWindow, u: f64) -> Result<f64> {
    let span = window.span_at_time(u, f.horizon())?;
    Ok(f.evaluate(&span))
}
