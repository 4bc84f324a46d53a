//! Path windows, stopped functionals and Brownian-bridge suprema.

mod bridge;
mod functional;
mod window;

pub use bridge::{bridge_sup_cdf, bridge_sup_sample};
pub(crate) use bridge::bridge_sup_inverse;
pub use functional::{
    barrier_payoff, eval_stopped, BarrierParams, FunctionalSpec, MarginalPoint, PathFunctional,
    ScalarMap, SpanEval,
};
pub use window::{GridPath, PathSpan, PathWindow};

#[cfg(test)]
mod tests;
