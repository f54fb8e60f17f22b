//! The environment loop shared by every learning algorithm, and the metric trace.

use std::time::Instant;

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::oracle::Oracle;
use crate::protocol::MessageLedger;
use crate::rng::{stream, Stream};
use crate::wireless::{Position, WirelessEnv};

/// Everything a learner sees after one environment step.
#[derive(Debug)]
pub struct StepObs<'a> {
    pub t: u64,
    pub states: &'a [usize],
    pub actions: &'a [usize],
    pub costs: &'a [f64],
    pub next_states: &'a [usize],
    pub positions: &'a [Position],
    pub coord_before: bool,
    pub coord_after: bool,
    /// Environment after the move.
    pub env: &'a WirelessEnv,
}

/// Per-step report back to the loop.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepInfo {
    /// Mean summed position error of the estimates formed this step, meters.
    pub est_err_m: Option<f64>,
}

pub trait Algorithm {
    fn name(&self) -> &'static str;
    fn act(&mut self, t: u64, env: &WirelessEnv) -> Result<Vec<usize>>;
    fn learn(&mut self, step: &StepObs<'_>) -> Result<StepInfo>;
    /// Called once after the last step.
    fn finish(&mut self) -> Result<()> {
        Ok(())
    }
    /// Current joint action value.
    fn joint_value(&self, states: &[usize], actions: &[usize]) -> f64;
    fn ledger(&self) -> &MessageLedger;
    /// Steps handled without any coordination.
    fn uncoordinated_steps(&self) -> u64 {
        0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub t: u64,
    pub ape: Option<f64>,
    pub aqd: Option<f64>,
    pub coordinated: bool,
    pub msgs_total: u64,
    pub est_err_m: Option<f64>,
    pub costs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub algorithm: String,
    pub seed: u64,
    pub iterations: u64,
    pub runtime_s: f64,
    pub final_ape: Option<f64>,
    pub final_aqd: Option<f64>,
    pub coordinated_fraction: f64,
    pub uncoordinated_steps: u64,
    pub messages: MessageLedger,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricTrace {
    pub stride: u64,
    pub rows: Vec<TraceRow>,
    pub summary: RunSummary,
}

/// Runs `algo` for the configured horizon on `env`.
///
/// Costs and mobility draw from the environment stream of `seed`. Oracle
/// metrics are filled in whenever `oracle` is given.
pub fn simulate(
    cfg: &ExperimentConfig,
    env: &mut WirelessEnv,
    algo: &mut dyn Algorithm,
    oracle: Option<&Oracle>,
    seed: u64,
) -> Result<MetricTrace> {
    let started = Instant::now();
    let mut env_rng = stream(seed, Stream::Environment);
    let stride = cfg.run.stride();
    let horizon = cfg.run.iterations;
    let n_a = env.n_actions();
    let mut rows = Vec::with_capacity((horizon / stride) as usize);
    let mut coordinated_steps = 0u64;

    for t in 0..horizon {
        let states = env.states();
        let positions = env.positions().to_vec();
        let coord_before = env.coordinated();
        coordinated_steps += coord_before as u64;
        let actions = algo.act(t, env)?;
        if actions.len() != states.len() || actions.iter().any(|&a| a >= n_a) {
            return Err(Error::Protocol(format!("{} produced an invalid action vector", algo.name())));
        }
        let costs = env.sample_costs(&actions, &mut env_rng);
        env.advance(&mut env_rng)?;
        let next_states = env.states();
        let obs = StepObs {
            t,
            states: &states,
            actions: &actions,
            costs: &costs,
            next_states: &next_states,
            positions: &positions,
            coord_before,
            coord_after: env.coordinated(),
            env,
        };
        let info = algo.learn(&obs)?;
        if (t + 1) % stride == 0 {
            let (ape, aqd) = match oracle {
                Some(o) => {
                    let (p, q) = o.score(&|s, a| algo.joint_value(s, a))?;
                    (Some(p), Some(q))
                }
                None => (None, None),
            };
            rows.push(TraceRow {
                t,
                ape,
                aqd,
                coordinated: coord_before,
                msgs_total: algo.ledger().total(),
                est_err_m: info.est_err_m,
                costs,
            });
        }
    }
    algo.finish()?;
    let (final_ape, final_aqd) = match oracle {
        Some(o) => {
            let (p, q) = o.score(&|s, a| algo.joint_value(s, a))?;
            (Some(p), Some(q))
        }
        None => (None, None),
    };
    if rows.iter().flat_map(|r| r.costs.iter()).any(|c| !c.is_finite()) {
        return Err(Error::NonFinite("trace cost"));
    }
    Ok(MetricTrace {
        stride,
        rows,
        summary: RunSummary {
            algorithm: algo.name().to_string(),
            seed,
            iterations: horizon,
            runtime_s: started.elapsed().as_secs_f64(),
            final_ape,
            final_aqd,
            coordinated_fraction: if horizon == 0 { 0.0 } else { coordinated_steps as f64 / horizon as f64 },
            uncoordinated_steps: algo.uncoordinated_steps(),
            messages: algo.ledger().clone(),
        },
    })
}
