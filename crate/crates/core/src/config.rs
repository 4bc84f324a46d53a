//! Run configurations as read from JSON files, and the command-line values
//! that override them.

use serde::{Deserialize, Serialize};

use crate::cltlab::CltConfig;
use crate::heston::{BsBarrierParams, Figure1Settings, HestonConfig};
use crate::stepgrid::{StepCondition, StepFamily};

/// Values given on the command line; `None` keeps the file's value.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub steps: Option<usize>,
    pub replicates: Option<usize>,
    pub strict_schedule: Option<bool>,
}

pub trait Overridable {
    fn apply(&mut self, o: &Overrides);
}

/// One long Heston pricing run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriceConfig {
    #[serde(flatten)]
    pub heston: HestonConfig,
    pub schedule: StepFamily,
    pub steps: usize,
    pub seed: u64,
    pub control_variate: bool,
    /// Snapshot period of the convergence trace, in emitted terms.
    pub trace_every: usize,
}

impl Default for PriceConfig {
    fn default() -> Self {
        Self {
            heston: HestonConfig::default(),
            schedule: StepFamily::default(),
            steps: 1_000_000,
            seed: 1,
            control_variate: true,
            trace_every: 1000,
        }
    }
}

impl Overridable for PriceConfig {
    fn apply(&mut self, o: &Overrides) {
        self.seed = o.seed.unwrap_or(self.seed);
        self.steps = o.steps.unwrap_or(self.steps);
    }
}

/// Replicated normalized errors of the Heston barrier price.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Figure1Config {
    #[serde(flatten)]
    pub heston: HestonConfig,
    pub schedule: StepFamily,
    pub steps: usize,
    pub replicates: usize,
    pub seed: u64,
    /// Known price to center on; computed from `reference_runs` control-variate
    /// runs of `reference_steps` steps when absent.
    pub reference: Option<f64>,
    pub reference_steps: usize,
    pub reference_runs: usize,
    pub control_variate: bool,
    pub bandwidth: Option<f64>,
}

impl Default for Figure1Config {
    fn default() -> Self {
        Self {
            heston: HestonConfig::default(),
            schedule: StepFamily::default(),
            steps: 500_000,
            replicates: 2000,
            seed: 1,
            reference: None,
            reference_steps: 10_000_000,
            reference_runs: 8,
            control_variate: false,
            bandwidth: None,
        }
    }
}

impl Figure1Config {
    pub fn settings(&self, reference: f64) -> Figure1Settings {
        Figure1Settings {
            steps: self.steps,
            replicates: self.replicates,
            seed: self.seed,
            reference,
            control_variate: self.control_variate,
            bandwidth: self.bandwidth,
        }
    }
}

impl Overridable for Figure1Config {
    fn apply(&mut self, o: &Overrides) {
        self.seed = o.seed.unwrap_or(self.seed);
        self.steps = o.steps.unwrap_or(self.steps);
        self.replicates = o.replicates.unwrap_or(self.replicates);
    }
}

impl Overridable for CltConfig {
    fn apply(&mut self, o: &Overrides) {
        self.seed = o.seed.unwrap_or(self.seed);
        self.steps = o.steps.unwrap_or(self.steps);
        self.replicates = o.replicates.unwrap_or(self.replicates);
        self.strict_schedule = o.strict_schedule.unwrap_or(self.strict_schedule);
    }
}

/// Summability checks of a step sequence over its first `terms` steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleCheckConfig {
    pub schedule: StepFamily,
    pub terms: usize,
    pub conditions: Vec<StepCondition>,
}

impl Default for ScheduleCheckConfig {
    fn default() -> Self {
        Self {
            schedule: StepFamily::default(),
            terms: 1_000_000,
            conditions: vec![
                StepCondition::Marginal,
                StepCondition::Functional,
                StepCondition::Stepwise { delta: 0.1 },
            ],
        }
    }
}

impl Overridable for ScheduleCheckConfig {
    fn apply(&mut self, o: &Overrides) {
        self.terms = o.steps.unwrap_or(self.terms);
    }
}

impl Default for BsBarrierParams {
    fn default() -> Self {
        HestonConfig::default().bs_reference()
    }
}

impl Overridable for BsBarrierParams {
    fn apply(&mut self, _: &Overrides) {}
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn price_config_reads_flat_market_keys() {
        let c: PriceConfig = serde_json::from_str(r#"{"K": 48, "L": 60, "steps": 5000, "schedule": {"family": "poly", "gamma1": 0.5, "rho": 0.7}}"#)
            .unwrap();
        assert_eq!(c.heston.strike, 48.0);
        assert_eq!(c.heston.barrier, 60.0);
        assert_eq!(c.heston.s0, 50.0);
        assert_eq!(c.steps, 5000);
        assert_eq!(c.schedule, StepFamily::Poly { gamma1: 0.5, rho: 0.7 });
        assert!(c.control_variate);
        let back: PriceConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn overrides_replace_only_given_values() {
        let mut c = Figure1Config::default();
        c.apply(&Overrides {
            seed: Some(9),
            replicates: Some(10),
            ..Default::default()
        });
        assert_eq!((c.seed, c.replicates, c.steps), (9, 10, 500_000));
        let mut s = ScheduleCheckConfig::default();
        s.apply(&Overrides {
            steps: Some(5000),
            ..Default::default()
        });
        assert_eq!(s.terms, 5000);
    }

    #[test]
    fn schedule_check_defaults_cover_all_conditions() {
        let c: ScheduleCheckConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(c.conditions.len(), 3);
        let c: ScheduleCheckConfig = serde_json::from_str(r#"{"conditions": [{"id": "stepwise", "delta": 0.2}]}"#).unwrap();
        assert_eq!(c.conditions, vec![StepCondition::Stepwise { delta: 0.2 }]);
    }

    #[test]
    fn bs_params_default_to_the_reference_market() {
        let p: BsBarrierParams = serde_json::from_str(r#"{"sigma": 0.2}"#).unwrap();
        assert_eq!(p.sigma, 0.2);
        assert_eq!(p.barrier, 55.0);
    }
}
