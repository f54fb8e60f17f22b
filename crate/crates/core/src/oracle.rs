//! Exact joint-MDP solution for small networks, and the APE/AQD metrics.
//!
//! Only joint states whose ARSS bins agree with the transmitter positions are
//! reachable, so the oracle enumerates position tuples and derives the bins.

use crate::error::{Error, Result};
use crate::joint::JointSpace;
use crate::mdp::{value_iteration, ActionInvariantTransitions, ActionMask, Policy, QTable, Transitions};
use crate::wireless::{arss_dbm, quantize_arss, CostModel, NetworkConfig, Position, StateSpace, Topology, TxState};

/// Optimal joint values over the reachable joint states.
#[derive(Debug, Clone)]
pub struct Oracle {
    pub joint: JointSpace,
    /// Per-agent state indices of each reachable joint state.
    pub states: Vec<Vec<usize>>,
    pub keys: Vec<u128>,
    /// Valid joint actions per reachable state.
    pub mask: ActionMask,
    pub q: QTable,
    pub policy: Policy,
}

/// Tolerance of the value-iteration solve behind the oracle.
pub const ORACLE_TOL: f64 = 1e-10;

/// Optimal values closer than this are treated as tied.
pub const TIE_TOL: f64 = 1e-6;

impl Oracle {
    /// Solves the joint MDP, or returns `None` when it exceeds `budget` state-action pairs.
    pub fn build(cfg: &NetworkConfig, topo: &Topology, gamma: f64, budget: usize) -> Result<Option<Self>> {
        let space = StateSpace::new(cfg);
        let n = topo.tx.len();
        let joint = JointSpace::new(n, space.n_states(), topo.bs.len())?;
        let cells = space.n_cells();
        let Some(n_tuples) = (0..n).try_fold(1usize, |acc, _| acc.checked_mul(cells)) else {
            return Ok(None);
        };
        if n_tuples.checked_mul(joint.n_joint_actions()).is_none_or(|x| x > budget) {
            return Ok(None);
        }
        let tuple_of = |mut k: usize| -> Vec<Position> {
            let mut out = vec![Position::new(0, 0); n];
            for slot in out.iter_mut().rev() {
                *slot = space.cell(k % cells);
                k /= cells;
            }
            out
        };
        let tuple_index = |t: &[Position]| t.iter().fold(0, |acc, &p| acc * cells + space.cell_index(p));

        let mask = crate::wireless::coverage_mask(cfg, topo);
        let cost_model = CostModel::new(cfg, topo);
        let agent_cost = cost_model.expected_table();
        let n_a = topo.bs.len();
        let n_joint_a = joint.n_joint_actions();
        let decoded: Vec<Vec<usize>> = (0..n_joint_a).map(|j| joint.decode_action(j)).collect();

        let mut states = Vec::with_capacity(n_tuples);
        let mut keys = Vec::with_capacity(n_tuples);
        let mut cost = Vec::with_capacity(n_tuples * n_joint_a);
        let mut valid = Vec::with_capacity(n_tuples * n_joint_a);
        let mut transitions = ActionInvariantTransitions::new(n_joint_a);
        for k in 0..n_tuples {
            let tuple = tuple_of(k);
            let s: Vec<usize> = (0..n)
                .map(|i| {
                    let bin = quantize_arss(arss_dbm(cfg, &tuple, i)?, cfg);
                    Ok(space.index(TxState { pos: tuple[i], bin }))
                })
                .collect::<Result<_>>()?;
            for acts in &decoded {
                cost.push(s.iter().zip(acts).map(|(&si, &ai)| agent_cost[si * n_a + ai]).sum::<f64>());
                valid.push(joint.joint_valid(&mask, &s, acts));
            }
            keys.push(joint.state_key(&s));
            states.push(s);
            transitions.push_row(successors(&tuple, space.side, &tuple_index));
        }
        let joint_mask = ActionMask::from_fn(n_tuples, n_joint_a, |s, a| valid[s * n_joint_a + a]);
        let sol = value_iteration(&transitions, &cost, Some(&joint_mask), gamma, ORACLE_TOL)?;
        Ok(Some(Self {
            joint,
            states,
            keys,
            mask: joint_mask,
            q: sol.q,
            policy: sol.policy,
        }))
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    /// Row-major table of `value(states, actions)` over the reachable states.
    pub fn tabulate(&self, value: &dyn Fn(&[usize], &[usize]) -> f64) -> QTable {
        let n_a = self.joint.n_joint_actions();
        let decoded: Vec<Vec<usize>> = (0..n_a).map(|j| self.joint.decode_action(j)).collect();
        let mut values = Vec::with_capacity(self.states.len() * n_a);
        for s in &self.states {
            for a in &decoded {
                values.push(value(s, a));
            }
        }
        QTable::from_values(self.states.len(), n_a, values, crate::mdp::QRole::Joint).expect("shape by construction")
    }

    /// `(APE, AQD)` of a learned joint value function. A greedy action counts
    /// as correct when it is one of several tied optimal actions.
    pub fn score(&self, value: &dyn Fn(&[usize], &[usize]) -> f64) -> Result<(f64, f64)> {
        let q = self.tabulate(value);
        let policy = crate::mdp::greedy_policy(&q, Some(&self.mask))?;
        Ok((ape_tied(&policy, &self.q, &self.mask, TIE_TOL)?, aqd(&q, &self.q, Some(&self.mask))?))
    }
}

/// Successor distribution of a position tuple under independent random walks.
fn successors(tuple: &[Position], side: usize, index: &dyn Fn(&[Position]) -> usize) -> Vec<(usize, f64)> {
    let moves = |p: Position| -> [Position; 5] {
        let (x, y) = (p.x as i64, p.y as i64);
        let mut out = [p; 5];
        for (k, (nx, ny)) in [(x, y + 1), (x + 1, y), (x, y - 1), (x - 1, y)].into_iter().enumerate() {
            if nx >= 0 && ny >= 0 && (nx as usize) < side && (ny as usize) < side {
                out[k + 1] = Position::new(nx as usize, ny as usize);
            }
        }
        out
    };
    let mut rows: Vec<(Vec<Position>, f64)> = vec![(Vec::new(), 1.0)];
    for &p in tuple {
        let m = moves(p);
        rows = rows
            .into_iter()
            .flat_map(|(prefix, pr)| {
                m.iter().map(move |&q| {
                    let mut next = prefix.clone();
                    next.push(q);
                    (next, pr * 0.2)
                })
            })
            .collect();
    }
    let mut merged: Vec<(usize, f64)> = rows.into_iter().map(|(t, p)| (index(&t), p)).collect();
    merged.sort_by_key(|&(k, _)| k);
    merged.dedup_by(|b, a| {
        if a.0 == b.0 {
            a.1 += b.1;
            true
        } else {
            false
        }
    });
    merged
}

/// Fraction of states where the two policies disagree.
pub fn ape(estimate: &Policy, optimal: &Policy) -> Result<f64> {
    if estimate.n_states() != optimal.n_states() {
        return Err(Error::ShapeMismatch("policies cover different state spaces".into()));
    }
    if estimate.n_states() == 0 {
        return Ok(0.0);
    }
    let wrong = estimate
        .action_of
        .iter()
        .zip(&optimal.action_of)
        .filter(|(a, b)| a != b)
        .count();
    Ok(wrong as f64 / estimate.n_states() as f64)
}

/// Fraction of states whose chosen action is not within `tol` of the optimal value.
pub fn ape_tied(estimate: &Policy, optimal: &QTable, mask: &ActionMask, tol: f64) -> Result<f64> {
    if estimate.n_states() != optimal.n_states() || estimate.n_actions != optimal.n_actions() {
        return Err(Error::ShapeMismatch("policy and q-table cover different spaces".into()));
    }
    if estimate.n_states() == 0 {
        return Ok(0.0);
    }
    let mut wrong = 0usize;
    for (s, &a) in estimate.action_of.iter().enumerate() {
        let best = optimal
            .min_valid(s, Some(mask.row(s)))
            .ok_or(Error::NoValidAction { state: s })?
            .1;
        if !mask.is_valid(s, a) || optimal.get(s, a) > best + tol {
            wrong += 1;
        }
    }
    Ok(wrong as f64 / estimate.n_states() as f64)
}

/// Mean squared entrywise difference, over the masked entries when a mask is given.
pub fn aqd(estimate: &QTable, optimal: &QTable, mask: Option<&ActionMask>) -> Result<f64> {
    if !estimate.same_shape(optimal) {
        return Err(Error::ShapeMismatch("q-tables differ in shape".into()));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for s in 0..estimate.n_states() {
        for a in 0..estimate.n_actions() {
            if mask.is_some_and(|m| !m.is_valid(s, a)) {
                continue;
            }
            let d = estimate.get(s, a) - optimal.get(s, a);
            sum += d * d;
            n += 1;
        }
    }
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

/// Checks the successor rows of the oracle transition model.
pub fn check_walk_rows(side: usize, n: usize) -> Result<()> {
    let cells = side * side;
    let mut t = ActionInvariantTransitions::new(1);
    let space = StateSpace { side, bins: 1 };
    let index = |tp: &[Position]| tp.iter().fold(0, |acc, &p| acc * cells + space.cell_index(p));
    let total = cells.pow(n as u32);
    for k in 0..total {
        let mut rem = k;
        let mut tuple = vec![Position::new(0, 0); n];
        for slot in tuple.iter_mut().rev() {
            *slot = space.cell(rem % cells);
            rem /= cells;
        }
        t.push_row(successors(&tuple, side, &index));
    }
    t.validate()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::QRole;
    use crate::wireless::init_topology;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ape_examples() {
        let p = Policy::new(2, vec![0, 1, 0, 1, 0, 1]).unwrap();
        assert_eq!(ape(&p, &p).unwrap(), 0.0);
        let flip = Policy::new(2, p.action_of.iter().map(|a| 1 - a).collect()).unwrap();
        assert_eq!(ape(&p, &flip).unwrap(), 1.0);
        let half = Policy::new(2, vec![0, 1, 0, 0, 1, 0]).unwrap();
        assert_eq!(ape(&p, &half).unwrap(), 0.5);
        assert!(ape(&p, &Policy::new(2, vec![0]).unwrap()).is_err());
    }

    #[test]
    fn tied_actions_count_as_optimal() {
        let q = QTable::from_values(2, 2, vec![1.0, 1.0, 0.0, 2.0], QRole::Joint).unwrap();
        let mask = ActionMask::all_valid(2, 2);
        let p = |v: Vec<usize>| Policy::new(2, v).unwrap();
        assert_eq!(ape_tied(&p(vec![1, 0]), &q, &mask, TIE_TOL).unwrap(), 0.0);
        assert_eq!(ape_tied(&p(vec![0, 1]), &q, &mask, TIE_TOL).unwrap(), 0.5);
        let strict = p(vec![0, 0]);
        assert_eq!(ape(&p(vec![1, 0]), &strict).unwrap(), 0.5);
    }

    #[test]
    fn aqd_examples() {
        let a = QTable::from_values(2, 2, vec![1.0, 0.0, 0.0, 2.0], QRole::Joint).unwrap();
        let z = QTable::zeros(2, 2, QRole::Joint);
        assert_eq!(aqd(&z, &z, None).unwrap(), 0.0);
        assert_eq!(aqd(&a, &z, None).unwrap(), 1.25);
        let shifted = QTable::from_values(2, 2, vec![3.0; 4], QRole::Joint).unwrap();
        assert_eq!(aqd(&shifted, &z, None).unwrap(), 9.0);
    }

    #[test]
    fn walk_rows_are_stochastic() {
        check_walk_rows(3, 2).unwrap();
    }

    #[test]
    fn oracle_satisfies_bellman_equation() {
        let cfg = NetworkConfig {
            side_m: 2.0,
            n_tx: 2,
            n_bs: 2,
            n_bins: 3,
            ..NetworkConfig::default()
        };
        let topo = init_topology(&cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let o = Oracle::build(&cfg, &topo, 0.9, 1_000_000).unwrap().unwrap();
        assert_eq!(o.n_states(), 81);
        assert!(Oracle::build(&cfg, &topo, 0.9, 100).unwrap().is_none());
        // learned value equal to the oracle scores perfectly
        let lookup = |s: &[usize], a: &[usize]| {
            let k = o.keys.iter().position(|&k| k == o.joint.state_key(s)).unwrap();
            o.q.get(k, o.joint.action_index(a))
        };
        let (ape_v, aqd_v) = o.score(&lookup).unwrap();
        assert_eq!((ape_v, aqd_v), (0.0, 0.0));
    }
}
