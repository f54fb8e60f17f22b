//! Partially decentralized multi-agent MEMQ.
//!
//! Agents learn independently with their own ensemble learners while no
//! transmitter senses interference above the threshold. Once the network is
//! coordinated, every agent estimates the joint state from its ARSS reading, the
//! leader picks the most confident estimate, selects a joint action from the
//! joint table and the agents report their costs back.

use std::collections::{HashMap, VecDeque};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::belief::{JointStateEstimator, LikelihoodModel};
use crate::config::{ExperimentConfig, Extremum};
use crate::cousins::{MemqAgent, Sample, StepRates};
use crate::error::{Error, Result};
use crate::joint::JointSpace;
use crate::mdp::{argmin_valid, epsilon_greedy, ActionMask, QRole, QTable};
use crate::rng::{stream, Stream, StreamRng};
use crate::sim::{Algorithm, StepInfo, StepObs};
use crate::wireless::{arss_dbm, quantize_arss, Position, TxState, WirelessEnv};

/// Message counters by kind.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct MessageLedger {
    pub estimate_share: u64,
    pub broadcast: u64,
    pub cost_share: u64,
    /// Q-table entries shipped to the leader.
    pub q_share: u64,
    /// Raw states exchanged by learners that skip estimation.
    pub state_share: u64,
    /// Advice requests and replies.
    pub advice: u64,
}

impl MessageLedger {
    pub fn total(&self) -> u64 {
        self.estimate_share + self.broadcast + self.cost_share + self.q_share + self.state_share + self.advice
    }

    /// One coordination round among `n` agents.
    pub fn record_round(&mut self, n: usize) {
        let peers = n.saturating_sub(1) as u64;
        self.estimate_share += peers;
        self.broadcast += peers;
        self.cost_share += peers;
    }
}

/// Per-agent FIFO partitions of the shared sample buffer.
#[derive(Debug, Clone)]
pub struct SharedBuffer {
    capacity: usize,
    parts: Vec<VecDeque<Sample>>,
}

impl SharedBuffer {
    /// Total capacity is split evenly across agents.
    pub fn new(capacity: usize, n_agents: usize) -> Self {
        Self {
            capacity,
            parts: vec![VecDeque::new(); n_agents],
        }
    }

    fn part_capacity(&self) -> usize {
        (self.capacity / self.parts.len().max(1)).max(1)
    }

    pub fn push(&mut self, agent: usize, sample: Sample) {
        let cap = self.part_capacity();
        let part = &mut self.parts[agent];
        if part.len() == cap {
            part.pop_front();
        }
        part.push_back(sample);
    }

    pub fn len(&self) -> usize {
        self.parts.iter().map(VecDeque::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Uniform draw with replacement from the samples of `agent`.
    pub fn sample_for<R: Rng + ?Sized>(&self, agent: usize, rng: &mut R) -> Option<Sample> {
        let part = &self.parts[agent];
        if part.is_empty() {
            return None;
        }
        Some(part[rng.random_range(0..part.len())])
    }
}

/// Coordination status before and after a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum TransitionClass {
    UU,
    UC,
    CU,
    CC,
}

pub fn classify_transition(coord_before: bool, coord_after: bool) -> TransitionClass {
    match (coord_before, coord_after) {
        (false, false) => TransitionClass::UU,
        (false, true) => TransitionClass::UC,
        (true, false) => TransitionClass::CU,
        (true, true) => TransitionClass::CC,
    }
}

/// Index of the largest radius, lowest index on ties.
pub fn elect_leader(radii: &[f64]) -> usize {
    let mut best = 0;
    for (i, &r) in radii.iter().enumerate() {
        if r > radii[best] {
            best = i;
        }
    }
    best
}

/// `c_i + (γ/N)·ext Q̄(s̄′, ·)`: target of every individual table on entering coordination.
pub fn uc_target(cost: f64, gamma: f64, n_agents: usize, joint_next: f64) -> f64 {
    cost + gamma / n_agents as f64 * joint_next
}

/// `Σ_i (c_i + γ·ext Q_i^e(s_i′, ·))`: joint target on leaving coordination.
pub fn cu_target(costs: &[f64], gamma: f64, individual_next: &[f64]) -> f64 {
    costs.iter().zip(individual_next).map(|(c, q)| c + gamma * q).sum()
}

/// `Σ_i c_i + γ·ext Q̄(s̄′, ·)`: joint target while coordination persists.
pub fn cc_target(costs: &[f64], gamma: f64, joint_next: f64) -> f64 {
    costs.iter().sum::<f64>() + gamma * joint_next
}

/// The leader's joint table: entries written by coordination updates, with
/// every other entry read through as the sum of the individual ensembles.
#[derive(Debug, Clone)]
pub struct LeaderState {
    pub leader: usize,
    joint: JointSpace,
    written: HashMap<u128, Vec<f64>>,
    /// Estimates received in the latest round: per-agent state tuple and posterior mass.
    pub received: Vec<(Vec<usize>, f64)>,
    pub broadcasts: u64,
}

impl LeaderState {
    pub fn new(leader: usize, joint: JointSpace) -> Self {
        Self {
            leader,
            joint,
            written: HashMap::new(),
            received: Vec::new(),
            broadcasts: 0,
        }
    }

    pub fn joint(&self) -> &JointSpace {
        &self.joint
    }

    pub fn written(&self, key: u128, action: usize) -> Option<f64> {
        self.written.get(&key).map(|row| row[action]).filter(|v| !v.is_nan())
    }

    pub fn write(&mut self, key: u128, action: usize, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::NonFinite("joint table entry"));
        }
        let n = self.joint.n_joint_actions();
        self.written.entry(key).or_insert_with(|| vec![f64::NAN; n])[action] = value;
        Ok(())
    }

    pub fn written_entries(&self) -> usize {
        self.written.values().map(|r| r.iter().filter(|v| !v.is_nan()).count()).sum()
    }

    /// Entry `(states, action)` of the read-through joint table.
    pub fn value(&self, ensembles: &[&QTable], states: &[usize], actions: &[usize]) -> f64 {
        let key = self.joint.state_key(states);
        self.written(key, self.joint.action_index(actions))
            .unwrap_or_else(|| states.iter().zip(actions).zip(ensembles).map(|((&s, &a), q)| q.get(s, a)).sum())
    }

    /// Extremum of the read-through table over the valid joint actions of `states`.
    pub fn extremum(&self, ensembles: &[&QTable], mask: &ActionMask, states: &[usize], ext: Extremum) -> Result<f64> {
        let mut best = ext.identity();
        let mut any = false;
        for j in 0..self.joint.n_joint_actions() {
            let acts = self.joint.decode_action(j);
            if self.joint.joint_valid(mask, states, &acts) {
                best = ext.pick(best, self.value(ensembles, states, &acts));
                any = true;
            }
        }
        if !any {
            return Err(Error::NoValidAction {
                state: states.first().copied().unwrap_or(0),
            });
        }
        Ok(best)
    }
}

/// Dense joint table: coordination-written entries kept, all others set to the
/// sum of the individual ensemble values.
pub fn finalize_joint_from_individuals(ensembles: &[&QTable], leader: &LeaderState, budget: usize) -> Result<QTable> {
    let joint = leader.joint;
    let n_a = joint.n_joint_actions();
    let n_s = joint
        .n_joint_states()
        .filter(|n| n.checked_mul(n_a).is_some_and(|x| x <= budget))
        .ok_or_else(|| Error::JointSpaceTooLarge(format!("joint table exceeds budget {budget}")))?;
    let decoded: Vec<Vec<usize>> = (0..n_a).map(|j| joint.decode_action(j)).collect();
    let mut values = Vec::with_capacity(n_s * n_a);
    for s in 0..n_s {
        let states = joint.decode_state(s as u128);
        for acts in &decoded {
            values.push(leader.value(ensembles, &states, acts));
        }
    }
    QTable::from_values(n_s, n_a, values, QRole::Joint)
}

/// Per-agent state tuple described by a set of positions, with bins from geometry.
/// The entry of `owner` keeps its measured state.
pub fn states_from_positions(env: &WirelessEnv, positions: &[Position], owner: usize, own_state: usize) -> Result<Vec<usize>> {
    (0..positions.len())
        .map(|j| {
            if j == owner {
                return Ok(own_state);
            }
            let bin = quantize_arss(arss_dbm(&env.cfg, positions, j)?, &env.cfg);
            Ok(env.space.index(TxState { pos: positions[j], bin }))
        })
        .collect()
}

/// The multi-agent learner.
pub struct MaMemq {
    cfg: ExperimentConfig,
    n: usize,
    joint: JointSpace,
    mask: ActionMask,
    pub agents: Vec<MemqAgent>,
    agent_rngs: Vec<StreamRng>,
    leader_rng: StreamRng,
    sensing_rng: StreamRng,
    obs_noise: Normal<f64>,
    pub leader: LeaderState,
    pub ledger: MessageLedger,
    pub buffer: SharedBuffer,
    estimators: Vec<JointStateEstimator>,
    /// Leader-selected estimate of the joint state at a given time.
    selected: Option<(u64, Vec<usize>)>,
    /// Estimate used for the current step's coordinated action.
    acting_estimate: Option<Vec<usize>>,
    uu_steps: u64,
    pub class_counts: HashMap<TransitionClass, u64>,
    /// Plain Q-learning on true states, sharing raw states instead of estimates.
    sparse: bool,
}

impl MaMemq {
    pub fn new(cfg: &ExperimentConfig, env: &WirelessEnv, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let n = env.n_tx();
        let n_s = env.space.n_states();
        let n_a = env.n_actions();
        let joint = JointSpace::new(n, n_s, n_a)?;
        let agents = (0..n)
            .map(|i| MemqAgent::new(n_s, n_a, &cfg.memq.orders_for(i), cfg.memq.params()))
            .collect::<Result<Vec<_>>>()?;
        let window = cfg.estimator.window(env.cfg.cell_m);
        let estimators = if n > 1 {
            (0..n)
                .map(|i| {
                    let model = LikelihoodModel::new(
                        cfg.estimator.sigma_db,
                        cfg.estimator.adaptive_sigma,
                        cfg.estimator.reset_period as usize,
                    )?;
                    JointStateEstimator::new(i, &env.cfg, window, env.positions().to_vec(), model, cfg.estimator.max_candidates)
                })
                .collect::<Result<Vec<_>>>()?
        } else {
            Vec::new()
        };
        Ok(Self {
            cfg: cfg.clone(),
            n,
            joint,
            mask: env.mask.clone(),
            agents,
            agent_rngs: (0..n).map(|i| stream(seed, Stream::Agent(i))).collect(),
            leader_rng: stream(seed, Stream::Leader),
            sensing_rng: stream(seed, Stream::Sensing),
            obs_noise: Normal::new(0.0, env.cfg.obs_noise_db).map_err(|e| Error::Config(e.to_string()))?,
            leader: LeaderState::new(elect_leader(&env.topology.tx_radius_m), joint),
            ledger: MessageLedger::default(),
            buffer: SharedBuffer::new(cfg.protocol.buffer_capacity, n),
            estimators,
            selected: None,
            acting_estimate: None,
            uu_steps: 0,
            class_counts: HashMap::new(),
            sparse: false,
        })
    }

    /// Sparse cooperative Q-learning: single-order learners on true states that
    /// coordinate through the same joint table.
    pub fn sparse_cooperative(cfg: &ExperimentConfig, env: &WirelessEnv, seed: u64) -> Result<Self> {
        let mut cfg = cfg.clone();
        cfg.memq.orders = Some(vec![Vec::new()]);
        cfg.protocol.ground_truth_indexing = true;
        let mut out = Self::new(&cfg, env, seed)?;
        out.sparse = true;
        Ok(out)
    }

    fn ensembles(&self) -> Vec<&QTable> {
        self.agents.iter().map(|a| &a.ensemble).collect()
    }

    fn reading(&mut self, env: &WirelessEnv, i: usize) -> f64 {
        env.arss()[i] + self.obs_noise.sample(&mut self.sensing_rng)
    }

    /// Every agent estimates the joint state at time `tau`; the leader keeps the
    /// most confident estimate. Returns it with the mean position error.
    fn estimation_round(&mut self, tau: u64, env: &WirelessEnv) -> Result<(Vec<usize>, Option<f64>)> {
        let truth = env.states();
        if self.cfg.protocol.ground_truth_indexing || self.n == 1 {
            return Ok((truth, None));
        }
        let positions = env.positions().to_vec();
        let mut received = Vec::with_capacity(self.n);
        let mut err = 0.0;
        for i in 0..self.n {
            let obs = self.reading(env, i);
            let est = self.estimators[i].observe(tau, positions[i], obs)?;
            err += est
                .positions
                .iter()
                .zip(&positions)
                .map(|(p, q)| p.distance(*q, env.cfg.cell_m))
                .sum::<f64>();
            received.push((states_from_positions(env, &est.positions, i, truth[i])?, est.mass));
        }
        let leader = self.leader.leader;
        let mut pick = leader;
        for (i, (_, mass)) in received.iter().enumerate() {
            if *mass > received[pick].1 {
                pick = i;
            }
        }
        // each sender's own component is exact, so its position is now confirmed
        for est in &mut self.estimators {
            for (j, &p) in positions.iter().enumerate() {
                est.set_anchor(j, p);
            }
        }
        let chosen = received[pick].0.clone();
        self.leader.received = received;
        Ok((chosen, Some(err / self.n as f64)))
    }

    fn ext_individual(&self, i: usize, s: usize) -> Result<f64> {
        let ext = self.cfg.protocol.bootstrap;
        let row = self.agents[i].ensemble.row(s);
        let valid = self.mask.row(s);
        let mut best = ext.identity();
        let mut any = false;
        for (a, &v) in row.iter().enumerate() {
            if valid[a] {
                best = ext.pick(best, v);
                any = true;
            }
        }
        if !any {
            return Err(Error::NoValidAction { state: s });
        }
        Ok(best)
    }

    fn leader_action(&mut self, t: u64, states: &[usize]) -> Result<Vec<usize>> {
        let n_j = self.joint.n_joint_actions();
        let ensembles = self.ensembles();
        let mut values = vec![0.0; n_j];
        let mut valid = vec![false; n_j];
        for j in 0..n_j {
            let acts = self.joint.decode_action(j);
            valid[j] = self.joint.joint_valid(&self.mask, states, &acts);
            values[j] = self.leader.value(&ensembles, states, &acts);
        }
        let row = QTable::from_values(1, n_j, values, QRole::Joint)?;
        let eps = self.cfg.schedule.epsilon(t);
        let j = epsilon_greedy(&row, 0, eps, Some(&valid), &mut self.leader_rng)?;
        self.leader.broadcasts += 1;
        Ok(self.joint.decode_action(j))
    }

    pub fn leader_state(&self) -> &LeaderState {
        &self.leader
    }

    /// Dense joint table at the end of a run.
    pub fn joint_table(&self) -> Result<QTable> {
        finalize_joint_from_individuals(&self.ensembles(), &self.leader, self.cfg.run.oracle_budget)
    }
}

impl Algorithm for MaMemq {
    fn name(&self) -> &'static str {
        if self.sparse {
            "scq"
        } else {
            "mamemq"
        }
    }

    fn act(&mut self, t: u64, env: &WirelessEnv) -> Result<Vec<usize>> {
        let truth = env.states();
        if self.n > 1 && t % self.cfg.estimator.reset_period == 0 {
            for i in 0..self.n {
                let obs = self.reading(env, i);
                self.estimators[i].reinit(t, env.positions()[i], Some(obs))?;
            }
        }
        if env.coordinated() {
            let estimate = match self.selected.take() {
                Some((when, s)) if when == t => s,
                _ => self.estimation_round(t, env)?.0,
            };
            let mut actions = self.leader_action(t, &estimate)?;
            for (i, a) in actions.iter_mut().enumerate() {
                if !self.mask.is_valid(truth[i], *a) {
                    *a = argmin_valid(self.agents[i].ensemble.row(truth[i]), Some(self.mask.row(truth[i])))
                        .ok_or(Error::NoValidAction { state: truth[i] })?
                        .0;
                }
            }
            self.acting_estimate = Some(estimate);
            Ok(actions)
        } else {
            self.acting_estimate = None;
            let eps = self.cfg.schedule.epsilon(t);
            (0..self.n)
                .map(|i| {
                    epsilon_greedy(
                        &self.agents[i].ensemble,
                        truth[i],
                        eps,
                        Some(self.mask.row(truth[i])),
                        &mut self.agent_rngs[i],
                    )
                })
                .collect()
        }
    }

    fn learn(&mut self, step: &StepObs<'_>) -> Result<StepInfo> {
        let t = step.t;
        let mut rates = StepRates::at(&self.cfg.schedule, t);
        if self.sparse {
            rates.u = 0.0;
        }
        let samples: Vec<Sample> = (0..self.n)
            .map(|i| Sample {
                s: step.states[i],
                a: step.actions[i],
                s_next: step.next_states[i],
                cost: step.costs[i],
            })
            .collect();
        for (i, sample) in samples.iter().enumerate() {
            self.agents[i].observe_cost(sample.s, sample.a, sample.cost)?;
            self.buffer.push(i, *sample);
        }
        for i in 0..self.n {
            if self.agents[i].cousins.orders().len() < 2 {
                continue;
            }
            for _ in 0..self.cfg.protocol.ptt_samples_per_step {
                if let Some(b) = self.buffer.sample_for(i, &mut self.agent_rngs[i]) {
                    self.agents[i].record_transition(b.s, b.a, b.s_next)?;
                }
            }
        }

        let class = classify_transition(step.coord_before, step.coord_after);
        *self.class_counts.entry(class).or_insert(0) += 1;
        let mut info = StepInfo::default();
        let next_estimate = if step.coord_after {
            let (est, err) = self.estimation_round(t + 1, step.env)?;
            info.est_err_m = err;
            self.selected = Some((t + 1, est.clone()));
            Some(est)
        } else {
            None
        };
        let ext = self.cfg.protocol.bootstrap;
        let gamma = rates.gamma;

        match class {
            TransitionClass::UU => {
                for (i, sample) in samples.iter().enumerate() {
                    self.agents[i].memq_step(sample, &rates, Some(&self.mask), &mut self.agent_rngs[i])?;
                }
                self.uu_steps += 1;
            }
            TransitionClass::UC => {
                let s_next = next_estimate.expect("coordinated next state");
                let boot = self.leader.extremum(&self.ensembles(), &self.mask, &s_next, ext)?;
                for (i, sample) in samples.iter().enumerate() {
                    let target = uc_target(sample.cost, gamma, self.n, boot);
                    self.agents[i].update_all_toward(sample.s, sample.a, target, rates.alpha)?;
                    self.agents[i].blend_ensemble(rates.u)?;
                }
            }
            TransitionClass::CU | TransitionClass::CC => {
                let s_now = self
                    .acting_estimate
                    .clone()
                    .ok_or_else(|| Error::Protocol("coordinated step without a joint estimate".into()))?;
                let target = if class == TransitionClass::CU {
                    let next: Vec<f64> = (0..self.n)
                        .map(|i| self.ext_individual(i, step.next_states[i]))
                        .collect::<Result<_>>()?;
                    cu_target(step.costs, gamma, &next)
                } else {
                    let s_next = next_estimate.expect("coordinated next state");
                    let boot = self.leader.extremum(&self.ensembles(), &self.mask, &s_next, ext)?;
                    cc_target(step.costs, gamma, boot)
                };
                let old = self.leader.value(&self.ensembles(), &s_now, step.actions);
                let key = self.joint.state_key(&s_now);
                let a = self.joint.action_index(step.actions);
                self.leader.write(key, a, (1.0 - rates.alpha) * old + rates.alpha * target)?;
            }
        }
        if class != TransitionClass::UU {
            self.ledger.record_round(self.n);
            if self.sparse {
                let peers = self.ledger.estimate_share;
                self.ledger.state_share += peers;
                self.ledger.estimate_share = 0;
            }
        }
        Ok(info)
    }

    fn finish(&mut self) -> Result<()> {
        if self.uu_steps > 0 && !self.sparse {
            let entries = (self.agents[0].n_states() * self.agents[0].n_actions()) as u64;
            self.ledger.q_share += (self.n as u64 - 1) * entries;
        }
        Ok(())
    }

    fn joint_value(&self, states: &[usize], actions: &[usize]) -> f64 {
        self.leader.value(&self.ensembles(), states, actions)
    }

    fn ledger(&self) -> &MessageLedger {
        &self.ledger
    }

    fn uncoordinated_steps(&self) -> u64 {
        self.uu_steps
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn leader_election() {
        assert_eq!(elect_leader(&[5.0, 9.0, 3.0]), 1);
        assert_eq!(elect_leader(&[4.0, 4.0, 4.0]), 0);
        assert_eq!(elect_leader(&[0.5, 0.9, 0.3].map(|r| r * 7.5)), 1);
    }

    #[test]
    fn classification() {
        assert_eq!(classify_transition(false, false), TransitionClass::UU);
        assert_eq!(classify_transition(false, true), TransitionClass::UC);
        assert_eq!(classify_transition(true, false), TransitionClass::CU);
        assert_eq!(classify_transition(true, true), TransitionClass::CC);
    }

    #[test]
    fn table_targets() {
        let uc = 0.5 * 0.0 + 0.5 * uc_target(1.0, 0.9, 3, 3.0);
        assert!((uc - 0.95).abs() < 1e-12);
        assert_eq!(cc_target(&[1.0, 1.0, 1.0], 0.9, 0.0), 3.0);
        assert_eq!(cu_target(&[1.0, 1.0, 1.0], 0.7, &[0.0, 0.0, 0.0]), 3.0);
    }

    #[test]
    fn ledger_round_and_total() {
        let mut l = MessageLedger::default();
        l.record_round(3);
        assert_eq!(l.total(), 6);
        l.q_share += 10;
        assert_eq!(l.total(), 16);
    }

    #[test]
    fn buffer_is_fifo_and_bounded() {
        let mut b = SharedBuffer::new(4, 2);
        for k in 0..5 {
            b.push(0, Sample { s: k, a: 0, s_next: 0, cost: 0.0 });
        }
        assert_eq!(b.len(), 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            assert!(b.sample_for(0, &mut rng).unwrap().s >= 3);
        }
        assert!(b.sample_for(1, &mut rng).is_none());
    }

    fn constant(n_s: usize, n_a: usize, v: f64) -> QTable {
        QTable::from_values(n_s, n_a, vec![v; n_s * n_a], QRole::Ensemble).unwrap()
    }

    #[test]
    fn finalize_sums_untouched_entries() {
        let joint = JointSpace::new(2, 3, 2).unwrap();
        let (q1, q2) = (constant(3, 2, 1.0), constant(3, 2, 2.0));
        let mut leader = LeaderState::new(0, joint);
        leader.write(joint.state_key(&[1, 2]), 3, -7.0).unwrap();
        let full = finalize_joint_from_individuals(&[&q1, &q2], &leader, 1000).unwrap();
        for s in 0..9 {
            for a in 0..4 {
                let want = if s == 5 && a == 3 { -7.0 } else { 3.0 };
                assert_eq!(full.get(s, a), want);
            }
        }
        let zero = finalize_joint_from_individuals(&[&constant(3, 2, 0.0), &constant(3, 2, 0.0)], &LeaderState::new(0, joint), 1000).unwrap();
        assert!(zero.values().iter().all(|&v| v == 0.0));
        assert!(finalize_joint_from_individuals(&[&q1, &q2], &leader, 10).is_err());
    }
}
