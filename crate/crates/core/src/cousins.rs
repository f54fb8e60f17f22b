//! Transition estimation, digital-cousin environments and the ensemble learner.
//!
//! A cousin of order `n` is the environment whose one-step dynamics are the
//! `n`-th power of the estimated transition tensor. Each agent runs Q-learning
//! in the real environment (order 1) and in every cousin, and fuses the tables
//! into an ensemble with weights that shrink with distance from the order-1 table.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{QRole, QTable, TransitionTensor, Transitions};

/// Sparse visit counts `n(a, s, s')`, one row per `(action, state)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionCounts {
    n_states: usize,
    n_actions: usize,
    rows: Vec<CountRow>,
}

#[derive(Debug, Clone, Default, PartialEq)]
struct CountRow {
    entries: Vec<(usize, u64)>,
    total: u64,
}

impl TransitionCounts {
    pub fn new(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            rows: vec![CountRow::default(); n_states * n_actions],
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn record(&mut self, s: usize, a: usize, s_next: usize) -> Result<()> {
        for (what, index, limit) in [
            ("state", s, self.n_states),
            ("action", a, self.n_actions),
            ("next state", s_next, self.n_states),
        ] {
            if index >= limit {
                return Err(Error::IndexOutOfRange { what, index, limit });
            }
        }
        let row = &mut self.rows[a * self.n_states + s];
        match row.entries.iter_mut().find(|(t, _)| *t == s_next) {
            Some((_, c)) => *c += 1,
            None => row.entries.push((s_next, 1)),
        }
        row.total += 1;
        Ok(())
    }

    pub fn count(&self, a: usize, s: usize, s_next: usize) -> u64 {
        self.rows[a * self.n_states + s]
            .entries
            .iter()
            .find(|(t, _)| *t == s_next)
            .map_or(0, |&(_, c)| c)
    }

    pub fn total(&self, a: usize, s: usize) -> u64 {
        self.rows[a * self.n_states + s].total
    }

    /// Smoothed estimate of one transition probability.
    pub fn probability(&self, a: usize, s: usize, s_next: usize, smoothing: f64) -> f64 {
        let total = self.total(a, s);
        if total == 0 {
            return 1.0 / self.n_states as f64;
        }
        (self.count(a, s, s_next) as f64 + smoothing) / (total as f64 + smoothing * self.n_states as f64)
    }

    /// Draws a successor from the smoothed estimate of row `(a, s)`.
    pub fn sample_next<R: Rng + ?Sized>(&self, a: usize, s: usize, smoothing: f64, rng: &mut R) -> usize {
        let row = &self.rows[a * self.n_states + s];
        if row.total == 0 {
            return rng.random_range(0..self.n_states);
        }
        if smoothing > 0.0 {
            let prior = smoothing * self.n_states as f64;
            if rng.random::<f64>() * (row.total as f64 + prior) < prior {
                return rng.random_range(0..self.n_states);
            }
        }
        let mut r = rng.random_range(0..row.total);
        for &(t, c) in &row.entries {
            if r < c {
                return t;
            }
            r -= c;
        }
        unreachable!("row total matches entry counts")
    }
}

/// Dense smoothed estimate of the transition tensor; unvisited rows are uniform.
pub fn estimate_ptt(counts: &TransitionCounts, smoothing: f64) -> Result<TransitionTensor> {
    if !(smoothing >= 0.0 && smoothing.is_finite()) {
        return Err(Error::InvalidParameter(format!("smoothing must be >= 0, got {smoothing}")));
    }
    let n = counts.n_states;
    let mut probs = vec![0.0; counts.n_actions * n * n];
    for a in 0..counts.n_actions {
        for s in 0..n {
            let row = &counts.rows[a * n + s];
            let out = &mut probs[(a * n + s) * n..(a * n + s + 1) * n];
            if row.total == 0 {
                out.fill(1.0 / n as f64);
                continue;
            }
            let denom = row.total as f64 + smoothing * n as f64;
            out.fill(smoothing / denom);
            for &(t, c) in &row.entries {
                out[t] += c as f64 / denom;
            }
        }
    }
    Ok(TransitionTensor::from_raw(n, counts.n_actions, probs))
}

fn mat_mul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            if aik == 0.0 {
                continue;
            }
            let (brow, orow) = (&b[k * n..(k + 1) * n], &mut out[i * n..(i + 1) * n]);
            for (o, &bkj) in orow.iter_mut().zip(brow) {
                *o += aik * bkj;
            }
        }
    }
    out
}

/// Per-action matrix power `P^n`.
pub fn cousin_ptt(p: &TransitionTensor, n: u32) -> Result<TransitionTensor> {
    if n == 0 {
        return Err(Error::InvalidParameter("environment order must be >= 1".into()));
    }
    p.validate()?;
    let size = p.n_states();
    let mut probs = Vec::with_capacity(p.n_actions() * size * size);
    for a in 0..p.n_actions() {
        let base = p.matrix(a).to_vec();
        let mut result: Option<Vec<f64>> = None;
        let mut square = base;
        let mut e = n;
        loop {
            if e & 1 == 1 {
                result = Some(match result {
                    None => square.clone(),
                    Some(r) => mat_mul(&r, &square, size),
                });
            }
            e >>= 1;
            if e == 0 {
                break;
            }
            square = mat_mul(&square, &square, size);
        }
        probs.extend(result.expect("n >= 1"));
    }
    Ok(TransitionTensor::from_raw(size, p.n_actions(), probs))
}

/// Normalized ensemble weights, one per table in the order they were given.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleWeights {
    pub w: Vec<f64>,
}

/// Weights `∝ 1/(‖Q_n − Q_1‖ + eps_w)`; `tables[0]` is the order-1 table.
pub fn ensemble_weights(tables: &[QTable], eps_w: f64) -> Result<EnsembleWeights> {
    if !(eps_w > 0.0 && eps_w.is_finite()) {
        return Err(Error::InvalidParameter(format!("eps_w must be positive, got {eps_w}")));
    }
    let Some(reference) = tables.first() else {
        return Err(Error::ShapeMismatch("no tables to weight".into()));
    };
    let raw = tables
        .iter()
        .map(|q| Ok(1.0 / (q.distance(reference)? + eps_w)))
        .collect::<Result<Vec<f64>>>()?;
    let sum: f64 = raw.iter().sum();
    Ok(EnsembleWeights {
        w: raw.iter().map(|r| r / sum).collect(),
    })
}

/// `0.1 ×` the median nonzero cousin distance, floored at `1e-6`.
pub fn relative_eps_w(tables: &[QTable]) -> Result<f64> {
    let mut d = Vec::new();
    for q in tables.iter().skip(1) {
        let dist = q.distance(&tables[0])?;
        if dist > 0.0 {
            d.push(dist);
        }
    }
    if d.is_empty() {
        return Ok(1e-6);
    }
    d.sort_by(f64::total_cmp);
    let mid = d.len() / 2;
    let median = if d.len() % 2 == 1 { d[mid] } else { 0.5 * (d[mid - 1] + d[mid]) };
    Ok((0.1 * median).max(1e-6))
}

/// How a cousin sample is turned into a learning target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticCost {
    /// Cost of the first hop only, bootstrapped with `gamma`.
    SingleStep,
    /// Discounted cost accumulated along the `n` hops, bootstrapped with `gamma^n`.
    #[default]
    NHop,
}

/// Hyperparameters of one ensemble learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MemqParams {
    /// Additive smoothing of the transition estimate.
    pub smoothing: f64,
    /// Fixed weight regularizer; `None` uses [`relative_eps_w`].
    pub eps_w: Option<f64>,
    pub synthetic_cost: SyntheticCost,
}

impl Default for MemqParams {
    fn default() -> Self {
        Self {
            smoothing: 0.0,
            eps_w: None,
            synthetic_cost: SyntheticCost::NHop,
        }
    }
}

/// One real transition with its cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub s: usize,
    pub a: usize,
    pub s_next: usize,
    pub cost: f64,
}

/// Per-step rates of the ensemble learner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRates {
    pub alpha: f64,
    pub gamma: f64,
    pub u: f64,
}

impl StepRates {
    pub fn at(schedule: &crate::mdp::LearningSchedule, t: u64) -> Self {
        Self {
            alpha: schedule.alpha(t),
            gamma: schedule.gamma,
            u: schedule.u(t),
        }
    }
}

/// Source of next states for the cousin environments.
#[derive(Debug, Clone)]
pub enum Dynamics {
    Estimated(TransitionCounts),
    Known(TransitionTensor),
}

impl Dynamics {
    fn sample<R: Rng + ?Sized>(&self, a: usize, s: usize, smoothing: f64, rng: &mut R) -> usize {
        match self {
            Dynamics::Estimated(c) => c.sample_next(a, s, smoothing, rng),
            Dynamics::Known(p) => {
                let mut r: f64 = rng.random();
                let row = p.row(a, s);
                for (t, &pr) in row.iter().enumerate() {
                    if r < pr {
                        return t;
                    }
                    r -= pr;
                }
                row.iter().rposition(|&pr| pr > 0.0).unwrap_or(row.len() - 1)
            }
        }
    }
}

/// Environment orders and their Q-tables; order 1 comes first.
#[derive(Debug, Clone)]
pub struct CousinSet {
    orders: Vec<u32>,
    tables: Vec<QTable>,
}

impl CousinSet {
    /// `synthetic` lists the cousin orders; order 1 is always added in front.
    pub fn new(n_states: usize, n_actions: usize, synthetic: &[u32]) -> Result<Self> {
        let mut orders = vec![1];
        for &n in synthetic {
            if n < 2 {
                return Err(Error::Config(format!("synthetic order must be >= 2, got {n}")));
            }
            if orders.contains(&n) {
                return Err(Error::Config(format!("duplicate environment order {n}")));
            }
            orders.push(n);
        }
        let tables = orders
            .iter()
            .map(|&order| QTable::zeros(n_states, n_actions, QRole::Individual { order }))
            .collect();
        Ok(Self { orders, tables })
    }

    pub fn orders(&self) -> &[u32] {
        &self.orders
    }

    pub fn tables(&self) -> &[QTable] {
        &self.tables
    }

    pub fn table(&self, order: u32) -> Option<&QTable> {
        self.orders.iter().position(|&o| o == order).map(|k| &self.tables[k])
    }

    pub fn tables_mut(&mut self) -> &mut [QTable] {
        &mut self.tables
    }
}

/// One agent's ensemble learner: cousin tables, ensemble table, dynamics model
/// and a running estimate of the per-pair cost.
#[derive(Debug, Clone)]
pub struct MemqAgent {
    pub cousins: CousinSet,
    pub ensemble: QTable,
    pub dynamics: Dynamics,
    pub params: MemqParams,
    cost_mean: Vec<f64>,
    cost_visits: Vec<u32>,
    weights: EnsembleWeights,
}

impl MemqAgent {
    pub fn new(n_states: usize, n_actions: usize, synthetic: &[u32], params: MemqParams) -> Result<Self> {
        Self::with_dynamics(
            synthetic,
            params,
            Dynamics::Estimated(TransitionCounts::new(n_states, n_actions)),
            n_states,
            n_actions,
        )
    }

    pub fn with_known_dynamics(p: TransitionTensor, synthetic: &[u32], params: MemqParams) -> Result<Self> {
        p.validate()?;
        let (n_s, n_a) = (p.n_states(), p.n_actions());
        Self::with_dynamics(synthetic, params, Dynamics::Known(p), n_s, n_a)
    }

    fn with_dynamics(
        synthetic: &[u32],
        params: MemqParams,
        dynamics: Dynamics,
        n_states: usize,
        n_actions: usize,
    ) -> Result<Self> {
        if !(params.smoothing >= 0.0 && params.smoothing.is_finite()) {
            return Err(Error::Config("smoothing must be >= 0".into()));
        }
        if let Some(e) = params.eps_w {
            if !(e > 0.0 && e.is_finite()) {
                return Err(Error::Config("eps_w must be positive".into()));
            }
        }
        let cousins = CousinSet::new(n_states, n_actions, synthetic)?;
        let k = cousins.orders.len();
        Ok(Self {
            cousins,
            ensemble: QTable::zeros(n_states, n_actions, QRole::Ensemble),
            dynamics,
            params,
            cost_mean: vec![0.0; n_states * n_actions],
            cost_visits: vec![0; n_states * n_actions],
            weights: EnsembleWeights {
                w: vec![1.0 / k as f64; k],
            },
        })
    }

    pub fn n_states(&self) -> usize {
        self.ensemble.n_states()
    }

    pub fn n_actions(&self) -> usize {
        self.ensemble.n_actions()
    }

    pub fn weights(&self) -> &EnsembleWeights {
        &self.weights
    }

    /// Adds a real transition to the dynamics estimate and the cost estimate.
    pub fn observe(&mut self, sample: &Sample) -> Result<()> {
        if let Dynamics::Estimated(c) = &mut self.dynamics {
            c.record(sample.s, sample.a, sample.s_next)?;
        }
        self.observe_cost(sample.s, sample.a, sample.cost)
    }

    /// Adds a transition to the dynamics estimate only.
    pub fn record_transition(&mut self, s: usize, a: usize, s_next: usize) -> Result<()> {
        if let Dynamics::Estimated(c) = &mut self.dynamics {
            c.record(s, a, s_next)?;
        }
        Ok(())
    }

    pub fn observe_cost(&mut self, s: usize, a: usize, cost: f64) -> Result<()> {
        if !cost.is_finite() {
            return Err(Error::NonFinite("cost"));
        }
        let k = s * self.n_actions() + a;
        self.cost_visits[k] += 1;
        self.cost_mean[k] += (cost - self.cost_mean[k]) / self.cost_visits[k] as f64;
        Ok(())
    }

    fn cost_estimate(&self, s: usize, a: usize, fallback: f64) -> f64 {
        let k = s * self.n_actions() + a;
        if self.cost_visits[k] == 0 {
            fallback
        } else {
            self.cost_mean[k]
        }
    }

    /// Moves `Q_k(s, a)` toward `target` with rate `alpha`.
    fn blend_entry(q: &mut QTable, s: usize, a: usize, target: f64, alpha: f64) {
        let v = (1.0 - alpha) * q.get(s, a) + alpha * target;
        q.set(s, a, v);
    }

    /// Applies the same target to entry `(s, a)` of every environment table.
    pub fn update_all_toward(&mut self, s: usize, a: usize, target: f64, alpha: f64) -> Result<()> {
        if !target.is_finite() {
            return Err(Error::NonFinite("target"));
        }
        for q in &mut self.cousins.tables {
            Self::blend_entry(q, s, a, target, alpha);
        }
        Ok(())
    }

    /// Recomputes the weights and applies `Q_e ← u Q_e + (1-u) Σ w_n Q_n`.
    pub fn blend_ensemble(&mut self, u: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::InvalidParameter(format!("ensemble ratio {u} outside [0,1]")));
        }
        let eps_w = match self.params.eps_w {
            Some(e) => e,
            None => relative_eps_w(&self.cousins.tables)?,
        };
        self.weights = ensemble_weights(&self.cousins.tables, eps_w)?;
        if u == 1.0 {
            return Ok(());
        }
        let tables = &self.cousins.tables;
        let w = &self.weights.w;
        for (idx, e) in self.ensemble.values_mut().iter_mut().enumerate() {
            let mixed: f64 = tables.iter().zip(w).map(|(q, wk)| wk * q.values()[idx]).sum();
            *e = u * *e + (1.0 - u) * mixed;
        }
        Ok(())
    }

    /// One ensemble step driven by a real sample.
    ///
    /// The order-1 table takes the real sample; each cousin of order `n` draws an
    /// `n`-hop chain from the dynamics model with the action held fixed. The
    /// ensemble is then blended. `mask` restricts bootstrap minima.
    pub fn memq_step<R: Rng + ?Sized>(
        &mut self,
        sample: &Sample,
        rates: &StepRates,
        mask: Option<&crate::mdp::ActionMask>,
        rng: &mut R,
    ) -> Result<()> {
        let n_s = self.n_states();
        if sample.s >= n_s || sample.s_next >= n_s {
            return Err(Error::IndexOutOfRange {
                what: "state",
                index: sample.s.max(sample.s_next),
                limit: n_s,
            });
        }
        if sample.a >= self.n_actions() {
            return Err(Error::IndexOutOfRange {
                what: "action",
                index: sample.a,
                limit: self.n_actions(),
            });
        }
        if !sample.cost.is_finite() {
            return Err(Error::NonFinite("cost"));
        }
        let row_mask = |s: usize| mask.map(|m| m.row(s));
        let min_of = |q: &QTable, s: usize| -> Result<f64> {
            q.min_valid(s, row_mask(s))
                .map(|(_, v)| v)
                .ok_or(Error::NoValidAction { state: s })
        };

        let real_target = sample.cost + rates.gamma * min_of(&self.cousins.tables[0], sample.s_next)?;
        Self::blend_entry(&mut self.cousins.tables[0], sample.s, sample.a, real_target, rates.alpha);

        for k in 1..self.cousins.orders.len() {
            let order = self.cousins.orders[k];
            let mut state = sample.s;
            let mut acc = 0.0;
            let mut discount = 1.0;
            for hop in 0..order {
                if self.params.synthetic_cost == SyntheticCost::NHop || hop == 0 {
                    let c = if hop == 0 {
                        sample.cost
                    } else {
                        self.cost_estimate(state, sample.a, sample.cost)
                    };
                    acc += discount * c;
                }
                state = self.dynamics.sample(sample.a, state, self.params.smoothing, rng);
                discount *= rates.gamma;
            }
            let bootstrap_discount = match self.params.synthetic_cost {
                SyntheticCost::NHop => discount,
                SyntheticCost::SingleStep => rates.gamma,
            };
            let target = acc + bootstrap_discount * min_of(&self.cousins.tables[k], state)?;
            Self::blend_entry(&mut self.cousins.tables[k], sample.s, sample.a, target, rates.alpha);
        }
        self.blend_ensemble(rates.u)
    }
}
