//! Comparison learners: independent, hysteretic, advising, sparse cooperative
//! and centralized MEMQ.

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::cousins::{MemqAgent, Sample, StepRates};
use crate::error::{Error, Result};
use crate::joint::JointSpace;
use crate::mdp::{argmin_valid, epsilon_greedy, q_update, ActionMask, QRole, QTable};
use crate::protocol::{MaMemq, MessageLedger};
use crate::rng::{stream, Stream, StreamRng};
use crate::sim::{Algorithm, StepInfo, StepObs};
use crate::wireless::WirelessEnv;

/// Learner selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlgorithmKind {
    Mamemq,
    Iq,
    Hq,
    Psaq,
    Scq,
    Cmemq,
}

impl AlgorithmKind {
    pub const ALL: [AlgorithmKind; 6] = [
        AlgorithmKind::Mamemq,
        AlgorithmKind::Iq,
        AlgorithmKind::Hq,
        AlgorithmKind::Psaq,
        AlgorithmKind::Scq,
        AlgorithmKind::Cmemq,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AlgorithmKind::Mamemq => "mamemq",
            AlgorithmKind::Iq => "iq",
            AlgorithmKind::Hq => "hq",
            AlgorithmKind::Psaq => "psaq",
            AlgorithmKind::Scq => "scq",
            AlgorithmKind::Cmemq => "cmemq",
        }
    }
}

impl std::str::FromStr for AlgorithmKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown algorithm {s:?}")))
    }
}

/// Builds the learner for `kind` on `env`.
pub fn make_algorithm(kind: AlgorithmKind, cfg: &ExperimentConfig, env: &WirelessEnv, seed: u64) -> Result<Box<dyn Algorithm>> {
    Ok(match kind {
        AlgorithmKind::Mamemq => Box::new(MaMemq::new(cfg, env, seed)?),
        AlgorithmKind::Iq => Box::new(Independent::new(cfg, env, seed, Variant::Plain)),
        AlgorithmKind::Hq => Box::new(Independent::new(cfg, env, seed, Variant::Hysteretic(cfg.baselines.hq_beta_ratio))),
        AlgorithmKind::Psaq => {
            let budget = (cfg.baselines.psaq_budget_frac * cfg.run.iterations as f64).floor() as u64;
            Box::new(Independent::new(cfg, env, seed, Variant::Advising { budget }))
        }
        AlgorithmKind::Scq => Box::new(MaMemq::sparse_cooperative(cfg, env, seed)?),
        AlgorithmKind::Cmemq => Box::new(Centralized::new(cfg, env, seed)?),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Variant {
    Plain,
    /// Cost increases learn at this fraction of the learning rate.
    Hysteretic(f64),
    /// Per-agent ask and give budgets.
    Advising { budget: u64 },
}

/// Independent tabular learners sharing nothing but, for the advising variant,
/// greedy actions.
pub struct Independent {
    cfg: ExperimentConfig,
    variant: Variant,
    mask: ActionMask,
    pub tables: Vec<QTable>,
    rngs: Vec<StreamRng>,
    visits: Vec<Vec<u64>>,
    ask_left: Vec<u64>,
    give_left: Vec<u64>,
    ledger: MessageLedger,
}

impl Independent {
    pub fn new(cfg: &ExperimentConfig, env: &WirelessEnv, seed: u64, variant: Variant) -> Self {
        let n = env.n_tx();
        let (n_s, n_a) = (env.space.n_states(), env.n_actions());
        let budget = match variant {
            Variant::Advising { budget } => budget,
            _ => 0,
        };
        Self {
            cfg: cfg.clone(),
            variant,
            mask: env.mask.clone(),
            tables: (0..n).map(|_| QTable::zeros(n_s, n_a, QRole::Individual { order: 1 })).collect(),
            rngs: (0..n).map(|i| stream(seed, Stream::Agent(i))).collect(),
            visits: vec![vec![0; n_s]; n],
            ask_left: vec![budget; n],
            give_left: vec![budget; n],
            ledger: MessageLedger::default(),
        }
    }

    fn advisor(&self, i: usize, s: usize) -> Option<usize> {
        if self.ask_left[i] == 0 {
            return None;
        }
        let mut best: Option<usize> = None;
        for j in 0..self.tables.len() {
            if j == i || self.give_left[j] == 0 || self.visits[j][s] <= self.visits[i][s] {
                continue;
            }
            if best.is_none_or(|b| self.visits[j][s] > self.visits[b][s]) {
                best = Some(j);
            }
        }
        best
    }
}

impl Algorithm for Independent {
    fn name(&self) -> &'static str {
        match self.variant {
            Variant::Plain => "iq",
            Variant::Hysteretic(_) => "hq",
            Variant::Advising { .. } => "psaq",
        }
    }

    fn act(&mut self, t: u64, env: &WirelessEnv) -> Result<Vec<usize>> {
        let states = env.states();
        let eps = self.cfg.schedule.epsilon(t);
        let mut actions = Vec::with_capacity(states.len());
        for (i, &s) in states.iter().enumerate() {
            if matches!(self.variant, Variant::Advising { .. }) {
                if let Some(j) = self.advisor(i, s) {
                    let a = argmin_valid(self.tables[j].row(s), Some(self.mask.row(s)))
                        .ok_or(Error::NoValidAction { state: s })?
                        .0;
                    self.ask_left[i] -= 1;
                    self.give_left[j] -= 1;
                    self.ledger.advice += 2;
                    actions.push(a);
                    continue;
                }
            }
            actions.push(epsilon_greedy(&self.tables[i], s, eps, Some(self.mask.row(s)), &mut self.rngs[i])?);
        }
        Ok(actions)
    }

    fn learn(&mut self, step: &StepObs<'_>) -> Result<StepInfo> {
        let alpha = self.cfg.schedule.alpha(step.t);
        let gamma = self.cfg.schedule.gamma;
        for i in 0..self.tables.len() {
            let (s, a, s2, c) = (step.states[i], step.actions[i], step.next_states[i], step.costs[i]);
            self.visits[i][s] += 1;
            let rate = match self.variant {
                Variant::Hysteretic(ratio) => {
                    let q = &self.tables[i];
                    let boot = q.min_valid(s2, Some(self.mask.row(s2))).map_or(0.0, |(_, v)| v);
                    let delta = c + gamma * boot - q.get(s, a);
                    if delta <= 0.0 {
                        alpha
                    } else {
                        ratio * alpha
                    }
                }
                _ => alpha,
            };
            q_update(&mut self.tables[i], s, a, c, s2, rate, gamma, Some(self.mask.row(s2)))?;
        }
        Ok(StepInfo::default())
    }

    fn joint_value(&self, states: &[usize], actions: &[usize]) -> f64 {
        states.iter().zip(actions).zip(&self.tables).map(|((&s, &a), q)| q.get(s, a)).sum()
    }

    fn ledger(&self) -> &MessageLedger {
        &self.ledger
    }

    fn uncoordinated_steps(&self) -> u64 {
        0
    }
}

/// A single MEMQ learner over the joint state and action spaces.
pub struct Centralized {
    cfg: ExperimentConfig,
    joint: JointSpace,
    mask: ActionMask,
    pub agent: MemqAgent,
    rng: StreamRng,
    ledger: MessageLedger,
}

impl Centralized {
    pub fn new(cfg: &ExperimentConfig, env: &WirelessEnv, seed: u64) -> Result<Self> {
        let joint = JointSpace::new(env.n_tx(), env.space.n_states(), env.n_actions())?;
        let n_a = joint.n_joint_actions();
        let n_s = joint
            .n_joint_states()
            .filter(|n| n.checked_mul(n_a).is_some_and(|x| x <= cfg.run.oracle_budget))
            .ok_or_else(|| Error::JointSpaceTooLarge("centralized learner needs a dense joint table".into()))?;
        let decoded: Vec<Vec<usize>> = (0..n_a).map(|j| joint.decode_action(j)).collect();
        let mut flags = Vec::with_capacity(n_s * n_a);
        for s in 0..n_s {
            let states = joint.decode_state(s as u128);
            flags.extend(decoded.iter().map(|acts| joint.joint_valid(&env.mask, &states, acts)));
        }
        let mask = ActionMask::from_fn(n_s, n_a, |s, a| flags[s * n_a + a]);
        Ok(Self {
            cfg: cfg.clone(),
            joint,
            mask,
            agent: MemqAgent::new(n_s, n_a, &cfg.baselines.cmemq_orders, cfg.memq.params())?,
            rng: stream(seed, Stream::Agent(0)),
            ledger: MessageLedger::default(),
        })
    }
}

impl Algorithm for Centralized {
    fn name(&self) -> &'static str {
        "cmemq"
    }

    fn act(&mut self, t: u64, env: &WirelessEnv) -> Result<Vec<usize>> {
        let s = self.joint.state_key(&env.states()) as usize;
        let eps = self.cfg.schedule.epsilon(t);
        let j = epsilon_greedy(&self.agent.ensemble, s, eps, Some(self.mask.row(s)), &mut self.rng)?;
        Ok(self.joint.decode_action(j))
    }

    fn learn(&mut self, step: &StepObs<'_>) -> Result<StepInfo> {
        let sample = Sample {
            s: self.joint.state_key(step.states) as usize,
            a: self.joint.action_index(step.actions),
            s_next: self.joint.state_key(step.next_states) as usize,
            cost: step.costs.iter().sum(),
        };
        self.agent.observe(&sample)?;
        let rates = StepRates::at(&self.cfg.schedule, step.t);
        self.agent.memq_step(&sample, &rates, Some(&self.mask), &mut self.rng)?;
        Ok(StepInfo::default())
    }

    fn joint_value(&self, states: &[usize], actions: &[usize]) -> f64 {
        self.agent
            .ensemble
            .get(self.joint.state_key(states) as usize, self.joint.action_index(actions))
    }

    fn ledger(&self) -> &MessageLedger {
        &self.ledger
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_parsing() {
        for k in AlgorithmKind::ALL {
            assert_eq!(k.as_str().parse::<AlgorithmKind>().unwrap(), k);
        }
        assert!("sarsa".parse::<AlgorithmKind>().is_err());
    }
}
