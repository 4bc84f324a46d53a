//! Ergodic approximation of stationary diffusions with decreasing-step Euler
//! schemes.

pub mod cltlab;
pub mod config;
pub mod empirical;
pub mod error;
pub mod heston;
mod numeric;
pub mod pathfun;
pub mod schemes;
pub mod stepgrid;

pub use empirical::{EmpiricalAccumulator, FunctionalStream, Snapshot};
pub use error::{Error, Result};
pub use heston::{HestonConfig, HestonPrice};
pub use pathfun::{eval_stopped, PathFunctional, PathWindow};
pub use schemes::{DiffusionModel, GaussianStream, SchemeState};
pub use stepgrid::{GridLocation, StepCondition, StepSchedule};
