//! Online γ-weighted empirical means `ν̄⁽ⁿ⁾ = (1/Γ_n) Σ_{k≤n} γ_k y_k`.

use std::collections::VecDeque;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;
use crate::pathfun::{eval_stopped, PathFunctional, PathWindow};
use crate::schemes::{euler_step_in_place, DiffusionModel, EulerWorkspace, GaussianStream};
use crate::stepgrid::StepSchedule;

/// Read-only view of an accumulator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Snapshot {
    pub value: f64,
    pub gamma_total: f64,
    pub terms: usize,
}

/// Convex fold `value ← value + (γ_k/Γ_k)(y_k − value)` with Kahan
/// compensation on `value`.
#[derive(Debug, Clone, Default)]
pub struct EmpiricalAccumulator {
    value: f64,
    comp: f64,
    gamma_total: CompensatedSum,
    terms: usize,
    trace_every: usize,
    trace: Vec<Snapshot>,
}

impl EmpiricalAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Keep a snapshot every `every` terms (0 disables the trace).
    pub fn with_trace(mut self, every: usize) -> Self {
        self.trace_every = every;
        self
    }

    #[inline]
    pub fn fold(&mut self, gamma: f64, y: f64) {
        self.gamma_total.add(gamma);
        self.terms += 1;
        let w = gamma / self.gamma_total.value();
        let inc = w * (y - (self.value + self.comp)) - self.comp;
        let t = self.value + inc;
        self.comp = (t - self.value) - inc;
        self.value = t;
        if self.trace_every > 0 && self.terms % self.trace_every == 0 {
            self.trace.push(self.peek());
        }
    }

    fn peek(&self) -> Snapshot {
        Snapshot {
            value: self.value,
            gamma_total: self.gamma_total.value(),
            terms: self.terms,
        }
    }

    pub fn terms(&self) -> usize {
        self.terms
    }

    pub fn gamma_total(&self) -> f64 {
        self.gamma_total.value()
    }

    pub fn snapshot(&self) -> Result<Snapshot> {
        if self.terms == 0 {
            return Err(Error::EmptyAccumulator);
        }
        Ok(self.peek())
    }

    pub fn trace(&self) -> &[Snapshot] {
        &self.trace
    }
}

/// Batch form `(1/Σγ_k) Σ γ_k y_k` of a sequence of `(γ_k, y_k)`.
pub fn batch_average(terms: &[(f64, f64)]) -> Result<f64> {
    if terms.is_empty() {
        return Err(Error::EmptyAccumulator);
    }
    let mut num = CompensatedSum::new();
    let mut den = CompensatedSum::new();
    for &(g, y) in terms {
        num.add(g * y);
        den.add(g);
    }
    Ok(num.value() / den.value())
}

/// Streams `F_T` terms of a path: origins are grid points, the term for
/// origin `Γ_{k−1}` (weight `γ_k`) is emitted once the grid passes
/// `Γ_{k−1} + T`, and the window forgets everything before the oldest
/// pending origin.
#[derive(Debug, Clone)]
pub struct FunctionalStream {
    functional: PathFunctional,
    window: PathWindow,
    // (origin index k−1, origin time, γ_k)
    pending: VecDeque<(usize, f64, f64)>,
    acc: EmpiricalAccumulator,
}

impl FunctionalStream {
    pub fn new(functional: PathFunctional, x0: &[f64], track_sups: bool) -> Self {
        let mut window = PathWindow::new(x0.len(), track_sups);
        window.push_point(0.0, x0);
        Self {
            functional,
            window,
            pending: VecDeque::new(),
            acc: EmpiricalAccumulator::new(),
        }
    }

    pub fn with_trace(mut self, every: usize) -> Self {
        self.acc = self.acc.with_trace(every);
        self
    }

    /// Registers grid point `n` reached after a step of size `gamma`, with
    /// the supremum of the first coordinate over the interval just covered
    /// when sups are tracked, then emits every term that became available.
    pub fn on_step(&mut self, gamma: f64, time: f64, value: &[f64], interval_sup: Option<f64>) -> Result<()> {
        let prev = self.window.last_index();
        let prev_time = self.window.time(prev);
        self.pending.push_back((prev, prev_time, gamma));
        self.window.push_point(time, value);
        if let Some(v) = interval_sup {
            self.window.push_interval_sup(v);
        }
        let horizon = self.functional.horizon();
        while let Some(&(origin, u, g)) = self.pending.front() {
            if time <= u + horizon {
                break;
            }
            self.window.release_before(origin);
            let y = eval_stopped(&self.functional, &self.window, u)?;
            self.acc.fold(g, y);
            self.pending.pop_front();
        }
        let keep = match self.pending.front() {
            Some(&(origin, _, _)) => origin,
            None => self.window.last_index(),
        };
        self.window.release_before(keep);
        Ok(())
    }

    pub fn accumulator(&self) -> &EmpiricalAccumulator {
        &self.acc
    }

    pub fn window(&self) -> &PathWindow {
        &self.window
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }
}

/// `(1/Γ_n) Σ γ_k f_j(X̄_{Γ_{k−1}})` for each `f_j`, along `steps` Euler
/// steps started at `x0`.
pub fn marginal_average(
    model: &DiffusionModel,
    schedule: &StepSchedule,
    x0: &[f64],
    steps: usize,
    fs: &[&dyn Fn(&[f64]) -> f64],
    stream: &mut GaussianStream,
) -> Result<Vec<f64>> {
    if x0.len() != model.dim() {
        return Err(Error::invalid("x0", "dimension does not match the model"));
    }
    let mut accs = vec![EmpiricalAccumulator::new(); fs.len()];
    let mut x = x0.to_vec();
    let mut dw = vec![0.0; model.noise_dim()];
    let mut ws = EulerWorkspace::for_model(model);
    for step in schedule.iter().take(steps) {
        for (acc, f) in accs.iter_mut().zip(fs) {
            acc.fold(step.gamma, f(&x));
        }
        let sd = step.gamma.sqrt();
        for w in dw.iter_mut() {
            *w = sd * stream.normal();
        }
        euler_step_in_place(model, &mut x, &dw, step.gamma, &mut ws);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp { step: step.index });
        }
    }
    accs.iter().map(|a| a.snapshot().map(|s| s.value)).collect()
}
