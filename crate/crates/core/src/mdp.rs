//! Finite MDP primitives: transition tensors, Q-tables, the tabular Q-update,
//! epsilon-greedy selection and an exact value-iteration solver.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row sums of stochastic matrices must match 1 within this tolerance.
pub const STOCHASTIC_TOL: f64 = 1e-9;

/// Anything that can enumerate the successor distribution of a state-action pair.
pub trait Transitions {
    fn n_states(&self) -> usize;
    fn n_actions(&self) -> usize;
    /// Calls `f(next_state, probability)` for every successor with nonzero mass.
    fn for_each_successor(&self, action: usize, state: usize, f: &mut dyn FnMut(usize, f64));

    /// Checks every row is a probability distribution.
    fn validate(&self) -> Result<()> {
        for a in 0..self.n_actions() {
            for s in 0..self.n_states() {
                let mut sum = 0.0;
                let mut bad = false;
                self.for_each_successor(a, s, &mut |_, p| {
                    if !(0.0..=1.0 + STOCHASTIC_TOL).contains(&p) || !p.is_finite() {
                        bad = true;
                    }
                    sum += p;
                });
                if bad || (sum - 1.0).abs() > STOCHASTIC_TOL {
                    return Err(Error::NotStochastic { action: a, state: s, sum });
                }
            }
        }
        Ok(())
    }
}

/// Dense per-action transition matrices, laid out `[action][state][next_state]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionTensor {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl TransitionTensor {
    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        let p = 1.0 / n_states as f64;
        Self {
            n_states,
            n_actions,
            probs: vec![p; n_states * n_states * n_actions],
        }
    }

    /// Builds a tensor from nested `[action][state][next]` rows and validates it.
    pub fn from_rows(rows: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let n_actions = rows.len();
        let n_states = rows.first().map_or(0, Vec::len);
        let mut probs = Vec::with_capacity(n_actions * n_states * n_states);
        for matrix in &rows {
            if matrix.len() != n_states {
                return Err(Error::ShapeMismatch("ragged transition tensor".into()));
            }
            for row in matrix {
                if row.len() != n_states {
                    return Err(Error::ShapeMismatch("non-square transition matrix".into()));
                }
                probs.extend_from_slice(row);
            }
        }
        let t = Self {
            n_states,
            n_actions,
            probs,
        };
        t.validate()?;
        Ok(t)
    }

    pub(crate) fn from_raw(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Self {
        debug_assert_eq!(probs.len(), n_states * n_states * n_actions);
        Self {
            n_states,
            n_actions,
            probs,
        }
    }

    pub fn prob(&self, action: usize, state: usize, next: usize) -> f64 {
        self.probs[(action * self.n_states + state) * self.n_states + next]
    }

    pub fn row(&self, action: usize, state: usize) -> &[f64] {
        let start = (action * self.n_states + state) * self.n_states;
        &self.probs[start..start + self.n_states]
    }

    /// Square matrix of one action, row-major.
    pub fn matrix(&self, action: usize) -> &[f64] {
        let n2 = self.n_states * self.n_states;
        &self.probs[action * n2..(action + 1) * n2]
    }

    /// Largest deviation of any row sum from 1.
    pub fn max_row_error(&self) -> f64 {
        self.probs
            .chunks(self.n_states.max(1))
            .map(|row| (row.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

impl Transitions for TransitionTensor {
    fn n_states(&self) -> usize {
        self.n_states
    }

    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn for_each_successor(&self, action: usize, state: usize, f: &mut dyn FnMut(usize, f64)) {
        for (next, &p) in self.row(action, state).iter().enumerate() {
            if p != 0.0 {
                f(next, p);
            }
        }
    }
}

/// Sparse transitions whose successor distribution does not depend on the action.
#[derive(Debug, Clone)]
pub struct ActionInvariantTransitions {
    n_states: usize,
    n_actions: usize,
    offsets: Vec<usize>,
    targets: Vec<usize>,
    probs: Vec<f64>,
}

impl ActionInvariantTransitions {
    pub fn new(n_actions: usize) -> Self {
        Self {
            n_states: 0,
            n_actions,
            offsets: vec![0],
            targets: Vec::new(),
            probs: Vec::new(),
        }
    }

    /// Appends the successor row of the next state index.
    pub fn push_row(&mut self, row: impl IntoIterator<Item = (usize, f64)>) {
        for (t, p) in row {
            self.targets.push(t);
            self.probs.push(p);
        }
        self.offsets.push(self.targets.len());
        self.n_states += 1;
    }

    pub fn row(&self, state: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (lo, hi) = (self.offsets[state], self.offsets[state + 1]);
        self.targets[lo..hi]
            .iter()
            .copied()
            .zip(self.probs[lo..hi].iter().copied())
    }
}

impl Transitions for ActionInvariantTransitions {
    fn n_states(&self) -> usize {
        self.n_states
    }

    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn for_each_successor(&self, _action: usize, state: usize, f: &mut dyn FnMut(usize, f64)) {
        for (t, p) in self.row(state) {
            f(t, p);
        }
    }
}

/// Which of the Q-functions a table holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QRole {
    /// Per-environment table of one agent, tagged with the environment order.
    Individual { order: u32 },
    Ensemble,
    Joint,
}

/// Dense `[state][action]` table of expected discounted cost.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
    role: QRole,
}

impl QTable {
    pub fn zeros(n_states: usize, n_actions: usize, role: QRole) -> Self {
        Self {
            n_states,
            n_actions,
            values: vec![0.0; n_states * n_actions],
            role,
        }
    }

    pub fn from_values(n_states: usize, n_actions: usize, values: Vec<f64>, role: QRole) -> Result<Self> {
        if values.len() != n_states * n_actions {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {n_states}x{n_actions} table",
                values.len()
            )));
        }
        Ok(Self {
            n_states,
            n_actions,
            values,
            role,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn role(&self) -> QRole {
        self.role
    }

    #[inline]
    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.n_actions + a]
    }

    #[inline]
    pub fn set(&mut self, s: usize, a: usize, v: f64) {
        self.values[s * self.n_actions + a] = v;
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn same_shape(&self, other: &QTable) -> bool {
        self.n_states == other.n_states && self.n_actions == other.n_actions
    }

    /// Frobenius norm of the entrywise difference.
    pub fn distance(&self, other: &QTable) -> Result<f64> {
        if !self.same_shape(other) {
            return Err(Error::ShapeMismatch("q-table distance".into()));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }

    /// Lowest-index minimizer over the valid actions of `s`, with its value.
    pub fn min_valid(&self, s: usize, mask: Option<&[bool]>) -> Option<(usize, f64)> {
        argmin_valid(self.row(s), mask)
    }

    fn check_state(&self, s: usize) -> Result<()> {
        if s >= self.n_states {
            return Err(Error::IndexOutOfRange {
                what: "state",
                index: s,
                limit: self.n_states,
            });
        }
        Ok(())
    }

    fn check_action(&self, a: usize) -> Result<()> {
        if a >= self.n_actions {
            return Err(Error::IndexOutOfRange {
                what: "action",
                index: a,
                limit: self.n_actions,
            });
        }
        Ok(())
    }
}

/// Lowest-index argmin of `row` restricted to `mask`.
pub fn argmin_valid(row: &[f64], mask: Option<&[bool]>) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (a, &v) in row.iter().enumerate() {
        if mask.is_some_and(|m| !m[a]) {
            continue;
        }
        match best {
            Some((_, b)) if v >= b => {}
            _ => best = Some((a, v)),
        }
    }
    best
}

/// Per-state valid-action flags.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionMask {
    n_states: usize,
    n_actions: usize,
    valid: Vec<bool>,
}

impl ActionMask {
    pub fn all_valid(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            valid: vec![true; n_states * n_actions],
        }
    }

    pub fn from_fn(n_states: usize, n_actions: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut valid = Vec::with_capacity(n_states * n_actions);
        for s in 0..n_states {
            for a in 0..n_actions {
                valid.push(f(s, a));
            }
        }
        Self {
            n_states,
            n_actions,
            valid,
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn row(&self, s: usize) -> &[bool] {
        &self.valid[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn is_valid(&self, s: usize, a: usize) -> bool {
        self.valid[s * self.n_actions + a]
    }
}

/// Deterministic stationary policy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Policy {
    pub n_actions: usize,
    pub action_of: Vec<usize>,
}

impl Policy {
    pub fn new(n_actions: usize, action_of: Vec<usize>) -> Result<Self> {
        if let Some(&bad) = action_of.iter().find(|&&a| a >= n_actions) {
            return Err(Error::IndexOutOfRange {
                what: "policy action",
                index: bad,
                limit: n_actions,
            });
        }
        Ok(Self { n_actions, action_of })
    }

    pub fn n_states(&self) -> usize {
        self.action_of.len()
    }
}

/// Learning-rate, exploration and ensemble-ratio schedules plus the discount.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningSchedule {
    pub gamma: f64,
    /// `alpha_t = 1 / (1 + t / alpha_scale)`.
    pub alpha_scale: f64,
    /// `epsilon_t = max(eps_decay^(t+1), eps_min)`.
    pub eps_decay: f64,
    pub eps_min: f64,
    /// `u_t = 1 - exp(-t / u_scale)`.
    pub u_scale: f64,
}

impl Default for LearningSchedule {
    fn default() -> Self {
        Self {
            gamma: 0.95,
            alpha_scale: 1000.0,
            eps_decay: 0.99,
            eps_min: 0.01,
            u_scale: 1000.0,
        }
    }
}

impl LearningSchedule {
    pub fn alpha(&self, t: u64) -> f64 {
        1.0 / (1.0 + t as f64 / self.alpha_scale)
    }

    /// Exploration probability of step `t`; the first step already uses one decay factor.
    pub fn epsilon(&self, t: u64) -> f64 {
        let exp = (t.saturating_add(1)).min(i32::MAX as u64) as i32;
        self.eps_decay.powi(exp).max(self.eps_min)
    }

    pub fn u(&self, t: u64) -> f64 {
        1.0 - (-(t as f64) / self.u_scale).exp()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config(format!("gamma must lie in (0,1), got {}", self.gamma)));
        }
        if !(self.alpha_scale > 0.0 && self.u_scale > 0.0) {
            return Err(Error::Config("schedule scales must be positive".into()));
        }
        if !(self.eps_decay > 0.0 && self.eps_decay <= 1.0) {
            return Err(Error::Config("eps_decay must lie in (0,1]".into()));
        }
        if !(self.eps_min > 0.0 && self.eps_min <= 1.0) {
            return Err(Error::Config("eps_min must lie in (0,1]".into()));
        }
        Ok(())
    }
}

/// One tabular Q-learning step on entry `(s, a)`; returns the new value.
///
/// `next_mask` restricts the bootstrap minimum to the valid actions of `s_next`.
#[allow(clippy::too_many_arguments)]
pub fn q_update(
    q: &mut QTable,
    s: usize,
    a: usize,
    cost: f64,
    s_next: usize,
    alpha: f64,
    gamma: f64,
    next_mask: Option<&[bool]>,
) -> Result<f64> {
    q.check_state(s)?;
    q.check_action(a)?;
    q.check_state(s_next)?;
    if !cost.is_finite() {
        return Err(Error::NonFinite("cost"));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidParameter(format!("alpha {alpha} outside (0,1]")));
    }
    let bootstrap = q
        .min_valid(s_next, next_mask)
        .ok_or(Error::NoValidAction { state: s_next })?
        .1;
    let updated = (1.0 - alpha) * q.get(s, a) + alpha * (cost + gamma * bootstrap);
    q.set(s, a, updated);
    Ok(updated)
}

/// Epsilon-greedy action over the valid actions of `s`.
pub fn epsilon_greedy<R: Rng + ?Sized>(
    q: &QTable,
    s: usize,
    epsilon: f64,
    mask: Option<&[bool]>,
    rng: &mut R,
) -> Result<usize> {
    q.check_state(s)?;
    let valid = mask.map_or(q.n_actions, |m| m.iter().filter(|&&v| v).count());
    if valid == 0 {
        return Err(Error::NoValidAction { state: s });
    }
    if rng.random::<f64>() < epsilon {
        let pick = rng.random_range(0..valid);
        let a = match mask {
            None => pick,
            Some(m) => m
                .iter()
                .enumerate()
                .filter(|(_, &v)| v)
                .nth(pick)
                .map(|(a, _)| a)
                .expect("pick < valid count"),
        };
        return Ok(a);
    }
    Ok(q.min_valid(s, mask).expect("nonempty mask").0)
}

/// Per-state argmin over valid actions, lowest index on ties.
pub fn greedy_policy(q: &QTable, mask: Option<&ActionMask>) -> Result<Policy> {
    let action_of = (0..q.n_states())
        .map(|s| {
            q.min_valid(s, mask.map(|m| m.row(s)))
                .map(|(a, _)| a)
                .ok_or(Error::NoValidAction { state: s })
        })
        .collect::<Result<Vec<_>>>()?;
    Policy::new(q.n_actions(), action_of)
}

/// Output of [`value_iteration`].
#[derive(Debug, Clone)]
pub struct ValueSolution {
    pub v: Vec<f64>,
    pub q: QTable,
    pub policy: Policy,
    pub sweeps: usize,
}

/// Bellman optimality backup `c + gamma * P min Q` of every entry.
pub fn bellman_backup<T: Transitions + ?Sized>(
    p: &T,
    cost: &[f64],
    mask: Option<&ActionMask>,
    gamma: f64,
    q: &QTable,
) -> QTable {
    let (n_s, n_a) = (p.n_states(), p.n_actions());
    let v: Vec<f64> = (0..n_s)
        .map(|s| q.min_valid(s, mask.map(|m| m.row(s))).map_or(0.0, |(_, v)| v))
        .collect();
    let mut out = QTable::zeros(n_s, n_a, q.role());
    for s in 0..n_s {
        for a in 0..n_a {
            let mut ev = 0.0;
            p.for_each_successor(a, s, &mut |t, pr| ev += pr * v[t]);
            out.set(s, a, cost[s * n_a + a] + gamma * ev);
        }
    }
    out
}

/// Synchronous value iteration on Q until the Bellman residual is at most `tol`.
///
/// `cost` is row-major `[state][action]`. Masked actions still receive a
/// Q-value but never enter the minimum.
pub fn value_iteration<T: Transitions + ?Sized>(
    p: &T,
    cost: &[f64],
    mask: Option<&ActionMask>,
    gamma: f64,
    tol: f64,
) -> Result<ValueSolution> {
    if tol <= 0.0 || !tol.is_finite() {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tol}")));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidParameter(format!("gamma must lie in (0,1), got {gamma}")));
    }
    let (n_s, n_a) = (p.n_states(), p.n_actions());
    if cost.len() != n_s * n_a {
        return Err(Error::ShapeMismatch("cost matrix".into()));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite("cost matrix"));
    }
    p.validate()?;
    if let Some(m) = mask {
        if m.n_states() != n_s || m.n_actions() != n_a {
            return Err(Error::ShapeMismatch("action mask".into()));
        }
        if let Some(s) = (0..n_s).find(|&s| !m.row(s).iter().any(|&v| v)) {
            return Err(Error::NoValidAction { state: s });
        }
    }

    let mut q = QTable::zeros(n_s, n_a, QRole::Joint);
    let mut v = vec![0.0; n_s];
    let mut next = vec![0.0; n_s * n_a];
    let mut sweeps = 0;
    loop {
        sweeps += 1;
        let mut delta: f64 = 0.0;
        for s in 0..n_s {
            for a in 0..n_a {
                let mut ev = 0.0;
                p.for_each_successor(a, s, &mut |t, pr| ev += pr * v[t]);
                let val = cost[s * n_a + a] + gamma * ev;
                delta = delta.max((val - q.get(s, a)).abs());
                next[s * n_a + a] = val;
            }
        }
        q.values_mut().copy_from_slice(&next);
        for (s, vs) in v.iter_mut().enumerate() {
            *vs = q.min_valid(s, mask.map(|m| m.row(s))).expect("validated mask").1;
        }
        // residual of the new iterate is at most gamma times the last change
        if gamma * delta <= tol {
            break;
        }
        if sweeps > 1_000_000 {
            return Err(Error::InvalidParameter("value iteration did not converge".into()));
        }
    }
    let policy = greedy_policy(&q, mask)?;
    Ok(ValueSolution { v, q, policy, sweeps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn table(rows: &[&[f64]]) -> QTable {
        let n_a = rows[0].len();
        let values = rows.iter().flat_map(|r| r.iter().copied()).collect();
        QTable::from_values(rows.len(), n_a, values, QRole::Individual { order: 1 }).unwrap()
    }

    #[test]
    fn q_update_reduces_to_cost() {
        let mut q = QTable::zeros(2, 2, QRole::Individual { order: 1 });
        assert_eq!(q_update(&mut q, 0, 1, 2.0, 1, 1.0, 0.0, None).unwrap(), 2.0);
        assert_eq!(q.get(0, 0), 0.0);
        assert_eq!(q.get(1, 1), 0.0);
    }

    #[test]
    fn q_update_half_step() {
        let mut q = QTable::zeros(2, 2, QRole::Individual { order: 1 });
        assert!((q_update(&mut q, 0, 0, 2.0, 1, 0.5, 0.9, None).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn q_update_with_bootstrap() {
        let mut q = table(&[&[4.0, 9.0], &[4.0, 7.0]]);
        let v = q_update(&mut q, 0, 0, 2.0, 1, 0.5, 0.9, None).unwrap();
        assert!((v - 4.8).abs() < 1e-12);
    }

    #[test]
    fn q_update_rejects_bad_inputs() {
        let mut q = QTable::zeros(2, 2, QRole::Joint);
        assert!(matches!(
            q_update(&mut q, 2, 0, 1.0, 0, 0.5, 0.9, None),
            Err(Error::IndexOutOfRange { .. })
        ));
        assert!(matches!(
            q_update(&mut q, 0, 0, f64::NAN, 0, 0.5, 0.9, None),
            Err(Error::NonFinite(_))
        ));
        assert!(matches!(
            q_update(&mut q, 0, 0, f64::INFINITY, 0, 0.5, 0.9, None),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn masked_bootstrap_skips_invalid_actions() {
        let mut q = table(&[&[0.0, 0.0], &[0.0, 10.0]]);
        let v = q_update(&mut q, 0, 0, 0.0, 1, 1.0, 0.5, Some(&[false, true])).unwrap();
        assert_eq!(v, 5.0);
    }

    #[test]
    fn epsilon_greedy_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = table(&[&[3.0, 1.0, 2.0], &[1.0, 1.0, 2.0]]);
        assert_eq!(epsilon_greedy(&q, 0, 0.0, None, &mut rng).unwrap(), 1);
        assert_eq!(epsilon_greedy(&q, 1, 0.0, None, &mut rng).unwrap(), 0);
        for _ in 0..100 {
            let a = epsilon_greedy(&q, 0, 1.0, Some(&[false, false, true]), &mut rng).unwrap();
            assert_eq!(a, 2);
        }
        assert!(matches!(
            epsilon_greedy(&q, 0, 0.5, Some(&[false, false, false]), &mut rng),
            Err(Error::NoValidAction { state: 0 })
        ));
    }

    #[test]
    fn epsilon_one_is_uniform_over_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let q = QTable::zeros(1, 4, QRole::Joint);
        let mask = [true, false, true, true];
        let mut counts = [0usize; 4];
        for _ in 0..30_000 {
            counts[epsilon_greedy(&q, 0, 1.0, Some(&mask), &mut rng).unwrap()] += 1;
        }
        assert_eq!(counts[1], 0);
        for a in [0, 2, 3] {
            assert!((counts[a] as f64 / 30_000.0 - 1.0 / 3.0).abs() < 0.015);
        }
    }

    #[test]
    fn greedy_policy_ties_and_masks() {
        let q = table(&[&[0.0, 5.0], &[2.0, 2.0]]);
        let p = greedy_policy(&q, None).unwrap();
        assert_eq!(p.action_of, vec![0, 0]);
        let mask = ActionMask::from_fn(2, 2, |s, a| !(s == 0 && a == 0));
        assert_eq!(greedy_policy(&q, Some(&mask)).unwrap().action_of, vec![1, 0]);
        let empty = ActionMask::from_fn(2, 2, |s, _| s == 0);
        assert!(greedy_policy(&q, Some(&empty)).is_err());
    }

    #[test]
    fn schedule_values() {
        let s = LearningSchedule::default();
        assert_eq!(s.alpha(0), 1.0);
        assert!((s.alpha(1000) - 0.5).abs() < 1e-15);
        assert!((s.epsilon(0) - 0.99).abs() < 1e-15);
        assert_eq!(s.epsilon(100_000), 0.01);
        assert_eq!(s.u(0), 0.0);
        assert!(s.u(10) < s.u(11));
    }

    #[test]
    fn value_iteration_constant_cost() {
        let p = TransitionTensor::from_rows(vec![
            vec![vec![0.3, 0.7], vec![0.5, 0.5]],
            vec![vec![1.0, 0.0], vec![0.2, 0.8]],
        ])
        .unwrap();
        let sol = value_iteration(&p, &[1.0; 4], None, 0.9, 1e-10).unwrap();
        for v in &sol.v {
            assert!((v - 10.0).abs() < 1e-8);
        }
    }

    #[test]
    fn value_iteration_absorbing_chain() {
        let p = TransitionTensor::from_rows(vec![vec![vec![1.0, 0.0], vec![1.0, 0.0]]]).unwrap();
        let sol = value_iteration(&p, &[0.0, 1.0], None, 0.9, 1e-12).unwrap();
        assert!(sol.v[0].abs() < 1e-12);
        assert!((sol.v[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn value_iteration_rejects_bad_inputs() {
        let bad = TransitionTensor::from_raw(2, 1, vec![0.5, 0.4, 0.5, 0.5]);
        assert!(matches!(
            value_iteration(&bad, &[0.0; 2], None, 0.9, 1e-6),
            Err(Error::NotStochastic { .. })
        ));
        let ok = TransitionTensor::uniform(2, 1);
        assert!(value_iteration(&ok, &[0.0; 2], None, 0.9, 0.0).is_err());
        assert!(value_iteration(&ok, &[0.0; 2], None, 0.9, -1.0).is_err());
    }

    #[test]
    fn action_invariant_transitions_validate() {
        let mut t = ActionInvariantTransitions::new(3);
        t.push_row([(0, 0.5), (1, 0.5)]);
        t.push_row([(1, 1.0)]);
        assert!(t.validate().is_ok());
        let sol = value_iteration(&t, &[1.0, 2.0, 3.0, 0.0, 0.0, 0.0], None, 0.5, 1e-12).unwrap();
        assert_eq!(sol.policy.action_of, vec![0, 0]);
        assert!(sol.v[1].abs() < 1e-12);
    }
}
