//! Experiment configuration. Every field has a default, so an empty TOML file
//! is a valid configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::belief::WindowSpec;
use crate::cousins::{MemqParams, SyntheticCost};
use crate::error::{Error, Result};
use crate::mdp::LearningSchedule;
use crate::wireless::NetworkConfig;

/// Which extremum the coordination bootstrap terms take over next actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extremum {
    #[default]
    Min,
    Max,
}

impl Extremum {
    pub fn pick(self, a: f64, b: f64) -> f64 {
        match self {
            Extremum::Min => a.min(b),
            Extremum::Max => a.max(b),
        }
    }

    pub fn identity(self) -> f64 {
        match self {
            Extremum::Min => f64::INFINITY,
            Extremum::Max => f64::NEG_INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MemqConfig {
    /// Synthetic orders per agent; `None` cycles through 2, 3 and 5.
    pub orders: Option<Vec<Vec<u32>>>,
    pub smoothing: f64,
    pub eps_w: Option<f64>,
    pub synthetic_cost: SyntheticCost,
}

impl Default for MemqConfig {
    fn default() -> Self {
        let p = MemqParams::default();
        Self {
            orders: None,
            smoothing: p.smoothing,
            eps_w: p.eps_w,
            synthetic_cost: p.synthetic_cost,
        }
    }
}

impl MemqConfig {
    pub fn params(&self) -> MemqParams {
        MemqParams {
            smoothing: self.smoothing,
            eps_w: self.eps_w,
            synthetic_cost: self.synthetic_cost,
        }
    }

    pub fn orders_for(&self, agent: usize) -> Vec<u32> {
        match &self.orders {
            Some(o) => o[agent % o.len()].clone(),
            None => vec![[2, 3, 5][agent % 3]],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    pub delta0_m: f64,
    /// Belief reset period `l` in steps.
    pub reset_period: u64,
    pub sigma_db: f64,
    pub adaptive_sigma: bool,
    /// Cap on the candidate tuples held by one belief.
    pub max_candidates: usize,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            delta0_m: 2.0,
            reset_period: 30,
            sigma_db: 1.0,
            adaptive_sigma: false,
            max_candidates: 1_000_000,
        }
    }
}

impl EstimatorConfig {
    pub fn window(&self, cell_m: f64) -> WindowSpec {
        WindowSpec {
            delta0_m: self.delta0_m,
            cell_m,
            period: self.reset_period,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    pub buffer_capacity: usize,
    /// Buffer draws per agent per step that feed the transition estimate.
    pub ptt_samples_per_step: usize,
    pub bootstrap: Extremum,
    /// Index coordination updates by the true joint state instead of the estimate.
    pub ground_truth_indexing: bool,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            buffer_capacity: 100_000,
            ptt_samples_per_step: 1,
            bootstrap: Extremum::Min,
            ground_truth_indexing: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    /// Hysteretic rate for cost increases as a fraction of the learning rate.
    pub hq_beta_ratio: f64,
    /// Ask and give budgets of the advising baseline as a fraction of the horizon.
    pub psaq_budget_frac: f64,
    /// Cousin orders of the centralized learner.
    pub cmemq_orders: Vec<u32>,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            hq_beta_ratio: 0.1,
            psaq_budget_frac: 0.1,
            cmemq_orders: vec![2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Horizon `T`.
    pub iterations: u64,
    pub seed: u64,
    pub replications: usize,
    /// Largest joint state-action count for which oracle metrics are computed.
    pub oracle_budget: usize,
    /// Trace stride; `None` means 10 when `T >= 10^4`, else 1.
    pub decimation: Option<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            iterations: 5000,
            seed: 0,
            replications: 1,
            oracle_budget: 1_000_000,
            decimation: None,
        }
    }
}

impl RunConfig {
    pub fn stride(&self) -> u64 {
        self.decimation
            .unwrap_or(if self.iterations >= 10_000 { 10 } else { 1 })
            .max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub network: NetworkConfig,
    pub schedule: LearningSchedule,
    pub memq: MemqConfig,
    pub estimator: EstimatorConfig,
    pub protocol: ProtocolConfig,
    pub baselines: BaselineConfig,
    pub run: RunConfig,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        self.schedule.validate()?;
        self.estimator.window(self.network.cell_m).validate()?;
        if !(self.estimator.sigma_db > 0.0) {
            return Err(Error::Config("estimator.sigma_db must be positive".into()));
        }
        if let Some(orders) = &self.memq.orders {
            if orders.is_empty() {
                return Err(Error::Config("memq.orders must not be empty".into()));
            }
            for o in orders {
                crate::cousins::CousinSet::new(1, 1, o)?;
            }
        }
        crate::cousins::CousinSet::new(1, 1, &self.baselines.cmemq_orders)?;
        if !(self.memq.smoothing >= 0.0) {
            return Err(Error::Config("memq.smoothing must be >= 0".into()));
        }
        if self.memq.eps_w.is_some_and(|e| !(e > 0.0)) {
            return Err(Error::Config("memq.eps_w must be positive".into()));
        }
        if self.protocol.buffer_capacity < self.network.n_tx {
            return Err(Error::Config("protocol.buffer_capacity must hold one sample per agent".into()));
        }
        let b = &self.baselines;
        if !(b.hq_beta_ratio > 0.0 && b.hq_beta_ratio <= 1.0) {
            return Err(Error::Config("baselines.hq_beta_ratio must lie in (0,1]".into()));
        }
        if !(b.psaq_budget_frac >= 0.0) {
            return Err(Error::Config("baselines.psaq_budget_frac must be >= 0".into()));
        }
        if self.run.replications == 0 {
            return Err(Error::Config("run.replications must be at least 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = ExperimentConfig::from_toml_str("").unwrap();
        assert_eq!(cfg.run.iterations, 5000);
        assert_eq!(cfg.estimator.reset_period, 30);
        assert_eq!(cfg.schedule.gamma, 0.95);
        assert_eq!(cfg.network.side_m, 100.0);
        assert_eq!(cfg.network.n_bins, 10);
        assert_eq!(cfg.network.tx_power_dbm, 20.0);
        assert_eq!(cfg.network.noise_std_mw, 1e-3);
        assert_eq!(cfg.estimator.delta0_m, 2.0);
        assert_eq!(cfg.memq.orders_for(4), vec![3]);
    }

    #[test]
    fn unknown_keys_and_bad_values_rejected() {
        assert!(ExperimentConfig::from_toml_str("[network]\nbogus = 1").is_err());
        assert!(ExperimentConfig::from_toml_str("[schedule]\ngamma = 1.5").is_err());
        assert!(ExperimentConfig::from_toml_str("[run]\nreplications = 0").is_err());
        assert!(ExperimentConfig::from_toml_str("[memq]\norders = [[1]]").is_err());
    }

    #[test]
    fn infinite_threshold_parses() {
        let cfg = ExperimentConfig::from_toml_str("[network]\ni_thr_dbm = inf").unwrap();
        assert_eq!(cfg.network.i_thr(), f64::INFINITY);
    }

    #[test]
    fn stride_defaults() {
        let mut r = RunConfig::default();
        assert_eq!(r.stride(), 1);
        r.iterations = 20_000;
        assert_eq!(r.stride(), 10);
    }
}
