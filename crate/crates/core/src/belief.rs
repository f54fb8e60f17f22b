//! Windowed Bayesian estimation of the other transmitters' positions from the
//! local ARSS reading.
//!
//! The belief lives on the product of one box of grid points per hidden
//! transmitter. Between readings the belief is propagated through the
//! random-walk kernel, and each reading multiplies in a Gaussian likelihood.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::wireless::{mw_to_dbm, path_gain_mw, NetworkConfig, Position};

/// Masses summing to within this tolerance of 1 count as normalized.
pub const MASS_TOL: f64 = 1e-9;

/// Relative tolerance under which two posterior scores tie.
const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowSpec {
    pub delta0_m: f64,
    pub cell_m: f64,
    /// Reset period in steps.
    pub period: u64,
}

impl WindowSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta0_m >= 0.0 && self.cell_m > 0.0 && self.period >= 1) {
            return Err(Error::Config(format!("invalid window {self:?}")));
        }
        Ok(())
    }
}

/// Window radius in meters: `δ₀ + 2·Δ_L·min(l, t mod l)`.
pub fn search_window(t: u64, window: &WindowSpec) -> f64 {
    window.delta0_m + 2.0 * window.cell_m * window.period.min(t % window.period) as f64
}

/// Unnormalized Gaussian densities of `obs` under each prediction.
///
/// The densities are scaled so the best candidate has density 1, which keeps
/// the product with a belief away from underflow.
pub fn likelihood(obs_dbm: f64, predictions: &[f64], sigma_db: f64) -> Vec<f64> {
    let best = predictions
        .iter()
        .map(|p| (obs_dbm - p).powi(2))
        .fold(f64::INFINITY, f64::min);
    predictions
        .iter()
        .map(|p| (-((obs_dbm - p).powi(2) - best) / (2.0 * sigma_db * sigma_db)).exp())
        .collect()
}

/// Measurement noise model with an optional running variance estimate.
#[derive(Debug, Clone)]
pub struct LikelihoodModel {
    pub sigma_db: f64,
    pub adaptive: bool,
    pub floor_db: f64,
    residuals: VecDeque<f64>,
    capacity: usize,
}

impl LikelihoodModel {
    pub fn new(sigma_db: f64, adaptive: bool, capacity: usize) -> Result<Self> {
        if !(sigma_db > 0.0) {
            return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma_db}")));
        }
        Ok(Self {
            sigma_db,
            adaptive,
            floor_db: 0.25,
            residuals: VecDeque::with_capacity(capacity),
            capacity: capacity.max(1),
        })
    }

    pub fn record_residual(&mut self, r: f64) {
        if self.residuals.len() == self.capacity {
            self.residuals.pop_front();
        }
        self.residuals.push_back(r);
    }

    /// Fixed sigma, or the standard deviation of the recent residuals once two exist.
    pub fn sigma(&self) -> f64 {
        if !self.adaptive || self.residuals.len() < 2 {
            return self.sigma_db;
        }
        let n = self.residuals.len() as f64;
        let mean = self.residuals.iter().sum::<f64>() / n;
        let var = self.residuals.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
        var.sqrt().max(self.floor_db)
    }
}

/// Inclusive rectangle of grid points.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellBox {
    pub x0: usize,
    pub x1: usize,
    pub y0: usize,
    pub y1: usize,
}

impl CellBox {
    /// Points within Chebyshev radius `half` of `center`, clipped to the grid.
    pub fn around(center: Position, half: usize, side: usize) -> Result<Self> {
        if center.x >= side || center.y >= side {
            return Err(Error::EmptyWindow);
        }
        Ok(Self {
            x0: center.x.saturating_sub(half),
            x1: (center.x + half).min(side - 1),
            y0: center.y.saturating_sub(half),
            y1: (center.y + half).min(side - 1),
        })
    }

    pub fn width(&self) -> usize {
        self.x1 - self.x0 + 1
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0 + 1
    }

    pub fn len(&self) -> usize {
        self.width() * self.height()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, p: Position) -> bool {
        (self.x0..=self.x1).contains(&p.x) && (self.y0..=self.y1).contains(&p.y)
    }

    /// Offset of `p` within the box, x-major.
    pub fn offset(&self, p: Position) -> usize {
        (p.x - self.x0) * self.height() + (p.y - self.y0)
    }

    pub fn at(&self, k: usize) -> Position {
        Position::new(self.x0 + k / self.height(), self.y0 + k % self.height())
    }

    fn union(&self, other: &CellBox) -> CellBox {
        CellBox {
            x0: self.x0.min(other.x0),
            x1: self.x1.max(other.x1),
            y0: self.y0.min(other.y0),
            y1: self.y1.max(other.y1),
        }
    }
}

/// Normalized distribution over tuples of hidden-transmitter positions.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefGrid {
    side: usize,
    boxes: Vec<CellBox>,
    mass: Vec<f64>,
}

impl BeliefGrid {
    pub fn uniform(side: usize, boxes: Vec<CellBox>) -> Result<Self> {
        if boxes.is_empty() {
            return Err(Error::EmptyWindow);
        }
        let n: usize = boxes.iter().map(CellBox::len).product();
        Ok(Self {
            side,
            boxes,
            mass: vec![1.0 / n as f64; n],
        })
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn boxes(&self) -> &[CellBox] {
        &self.boxes
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// Position tuple of candidate `k`; the first hidden transmitter varies slowest.
    pub fn candidate(&self, mut k: usize) -> Vec<Position> {
        let mut out = vec![Position::new(0, 0); self.boxes.len()];
        for (j, b) in self.boxes.iter().enumerate().rev() {
            out[j] = b.at(k % b.len());
            k /= b.len();
        }
        out
    }

    fn index_of(&self, tuple: &[Position]) -> Option<usize> {
        let mut k = 0;
        for (b, &p) in self.boxes.iter().zip(tuple) {
            if !b.contains(p) {
                return None;
            }
            k = k * b.len() + b.offset(p);
        }
        Some(k)
    }

    pub fn probability_of(&self, tuple: &[Position]) -> f64 {
        self.index_of(tuple).map_or(0.0, |k| self.mass[k])
    }

    /// Calls `f(k, tuple)` for every candidate in index order.
    pub fn for_each_candidate(&self, mut f: impl FnMut(usize, &[Position])) {
        let mut tuple: Vec<Position> = self.boxes.iter().map(|b| b.at(0)).collect();
        let mut digits = vec![0usize; self.boxes.len()];
        for k in 0..self.mass.len() {
            f(k, &tuple);
            for j in (0..digits.len()).rev() {
                digits[j] += 1;
                if digits[j] < self.boxes[j].len() {
                    tuple[j] = self.boxes[j].at(digits[j]);
                    break;
                }
                digits[j] = 0;
                tuple[j] = self.boxes[j].at(0);
            }
        }
    }

    fn reset_uniform(&mut self) {
        let p = 1.0 / self.mass.len() as f64;
        self.mass.fill(p);
    }

    /// Multiplies in `densities` and renormalizes; degenerate evidence resets to uniform.
    pub fn update(&mut self, densities: &[f64]) -> Result<()> {
        if densities.len() != self.mass.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} densities for {} candidates",
                densities.len(),
                self.mass.len()
            )));
        }
        let mut total = 0.0;
        for (m, &d) in self.mass.iter_mut().zip(densities) {
            *m *= if d.is_finite() && d > 0.0 { d } else { 0.0 };
            total += *m;
        }
        if !(total > 0.0 && total.is_finite()) {
            self.reset_uniform();
        } else {
            self.mass.iter_mut().for_each(|m| *m /= total);
        }
        Ok(())
    }

    /// Grows the support to cover `boxes`, keeping existing mass in place.
    pub fn expand(&mut self, boxes: &[CellBox]) -> Result<()> {
        if boxes.len() != self.boxes.len() {
            return Err(Error::ShapeMismatch("window count".into()));
        }
        let merged: Vec<CellBox> = self.boxes.iter().zip(boxes).map(|(a, b)| a.union(b)).collect();
        if merged == self.boxes {
            return Ok(());
        }
        let mut grown = BeliefGrid {
            side: self.side,
            boxes: merged,
            mass: Vec::new(),
        };
        grown.mass = vec![0.0; grown.boxes.iter().map(CellBox::len).product()];
        self.for_each_candidate(|k, tuple| {
            let target = grown.index_of(tuple).expect("merged box contains old box");
            grown.mass[target] = self.mass[k];
        });
        *self = grown;
        Ok(())
    }

    /// One step of the five-way random walk applied to every hidden transmitter.
    /// Moves leaving the grid or the support turn into stays.
    pub fn diffuse(&mut self) {
        let mut stride = 1;
        let strides: Vec<usize> = self
            .boxes
            .iter()
            .rev()
            .map(|b| {
                let s = stride;
                stride *= b.len();
                s
            })
            .collect::<Vec<_>>()
            .into_iter()
            .rev()
            .collect();
        for (j, b) in self.boxes.clone().iter().enumerate() {
            let step = strides[j];
            let mut next = vec![0.0; self.mass.len()];
            for (k, &m) in self.mass.iter().enumerate() {
                if m == 0.0 {
                    continue;
                }
                let local = (k / step) % b.len();
                let p = b.at(local);
                let share = m / 5.0;
                next[k] += share;
                let targets = [
                    (p.x as i64, p.y as i64 + 1),
                    (p.x as i64 + 1, p.y as i64),
                    (p.x as i64, p.y as i64 - 1),
                    (p.x as i64 - 1, p.y as i64),
                ];
                for (x, y) in targets {
                    let inside = x >= b.x0 as i64 && x <= b.x1 as i64 && y >= b.y0 as i64 && y <= b.y1 as i64;
                    if inside && (x as usize) < self.side && (y as usize) < self.side {
                        let q = Position::new(x as usize, y as usize);
                        let moved = k - local * step + b.offset(q) * step;
                        next[moved] += share;
                    } else {
                        next[k] += share;
                    }
                }
            }
            self.mass = next;
        }
    }

    /// Candidate maximizing `density · mass` with its normalized posterior mass.
    ///
    /// Ties go to the candidate closest to `anchors` in summed distance, then to
    /// the lexicographically smallest tuple.
    pub fn map_estimate(&self, densities: &[f64], anchors: &[Position]) -> Result<(Vec<Position>, f64)> {
        if densities.len() != self.mass.len() {
            return Err(Error::ShapeMismatch("densities do not match support".into()));
        }
        let scores: Vec<f64> = self.mass.iter().zip(densities).map(|(m, d)| m * d).collect();
        let total: f64 = scores.iter().sum();
        let best = scores.iter().copied().fold(0.0, f64::max);
        if !(total > 0.0) {
            // no evidence survives: fall back to the prior mode
            let fallback = vec![1.0; densities.len()];
            return self.map_estimate(&fallback, anchors);
        }
        let closeness = |tuple: &[Position]| -> f64 {
            tuple
                .iter()
                .zip(anchors)
                .map(|(p, a)| p.distance(*a, 1.0))
                .sum()
        };
        let mut choice: Option<(Vec<Position>, f64, f64)> = None;
        self.for_each_candidate(|k, tuple| {
            if scores[k] < best * (1.0 - TIE_TOL) {
                return;
            }
            let d = closeness(tuple);
            let better = match &choice {
                None => true,
                Some((t, _, cd)) => d < cd - 1e-12 || ((d - cd).abs() <= 1e-12 && tuple < t.as_slice()),
            };
            if better {
                choice = Some((tuple.to_vec(), scores[k] / total, d));
            }
        });
        let (tuple, mass, _) = choice.expect("nonempty support");
        Ok((tuple, mass))
    }
}

/// Window boxes of half-width `radius_m` around each anchor.
pub fn window_boxes(anchors: &[Position], radius_m: f64, cell_m: f64, side: usize) -> Result<Vec<CellBox>> {
    let half = (radius_m / cell_m + 1e-9).floor() as usize;
    anchors.iter().map(|&a| CellBox::around(a, half, side)).collect()
}

/// Fresh belief over the `δ₀` window; weighted by the first reading when given.
pub fn reinit_belief(
    window: &WindowSpec,
    side: usize,
    anchors: &[Position],
    first_obs: Option<(f64, &dyn Fn(&[Position]) -> f64)>,
    sigma_db: f64,
) -> Result<BeliefGrid> {
    let boxes = window_boxes(anchors, window.delta0_m, window.cell_m, side)?;
    let mut grid = BeliefGrid::uniform(side, boxes)?;
    if let Some((obs, predict)) = first_obs {
        let mut preds = vec![0.0; grid.len()];
        grid.for_each_candidate(|k, tuple| preds[k] = predict(tuple));
        grid.update(&likelihood(obs, &preds, sigma_db))?;
    }
    Ok(grid)
}

/// One transmitter's estimate of the others: MAP positions plus posterior mass.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    /// Positions of every transmitter, the owner's being exact.
    pub positions: Vec<Position>,
    pub mass: f64,
}

/// Tracks the hidden transmitters for one observer.
#[derive(Debug, Clone)]
pub struct JointStateEstimator {
    pub owner: usize,
    cfg: NetworkConfig,
    window: WindowSpec,
    side: usize,
    anchors: Vec<Position>,
    belief: Option<BeliefGrid>,
    pub model: LikelihoodModel,
    pub max_candidates: usize,
    last_t: u64,
    reset_t: u64,
}

impl JointStateEstimator {
    /// `anchors` holds the starting positions of all transmitters; the owner's entry is ignored.
    pub fn new(
        owner: usize,
        cfg: &NetworkConfig,
        window: WindowSpec,
        anchors: Vec<Position>,
        model: LikelihoodModel,
        max_candidates: usize,
    ) -> Result<Self> {
        window.validate()?;
        if owner >= anchors.len() {
            return Err(Error::IndexOutOfRange {
                what: "estimator owner",
                index: owner,
                limit: anchors.len(),
            });
        }
        Ok(Self {
            owner,
            cfg: cfg.clone(),
            window,
            side: cfg.side_points(),
            anchors,
            belief: None,
            model,
            max_candidates: max_candidates.max(1),
            last_t: 0,
            reset_t: 0,
        })
    }

    pub fn belief(&self) -> Option<&BeliefGrid> {
        self.belief.as_ref()
    }

    pub fn anchors(&self) -> &[Position] {
        &self.anchors
    }

    pub fn set_anchor(&mut self, j: usize, p: Position) {
        if j != self.owner {
            self.anchors[j] = p;
        }
    }

    fn hidden_anchors(&self) -> Vec<Position> {
        self.anchors
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != self.owner)
            .map(|(_, &p)| p)
            .collect()
    }

    /// Largest box half-width not above `radius_m` whose candidate count fits the cap.
    fn boxes_for(&self, radius_m: f64) -> Result<Vec<CellBox>> {
        let anchors = self.hidden_anchors();
        let mut half = (radius_m / self.window.cell_m + 1e-9).floor() as usize;
        loop {
            let boxes: Vec<CellBox> = anchors
                .iter()
                .map(|&a| CellBox::around(a, half, self.side))
                .collect::<Result<_>>()?;
            let n = boxes.iter().try_fold(1usize, |acc, b| acc.checked_mul(b.len()));
            if n.is_some_and(|n| n <= self.max_candidates) || half == 0 {
                return Ok(boxes);
            }
            half -= 1;
        }
    }

    /// Predicted ARSS at the owner for each candidate tuple, dBm.
    fn predictions(&self, grid: &BeliefGrid, own: Position) -> Vec<f64> {
        let p = self.cfg.tx_power_mw();
        let gains: Vec<f64> = (0..self.side * self.side)
            .map(|c| path_gain_mw(&self.cfg, own, Position::new(c / self.side, c % self.side), p))
            .collect();
        let mut preds = vec![0.0; grid.len()];
        grid.for_each_candidate(|k, tuple| {
            let total: f64 = tuple.iter().map(|q| gains[q.x * self.side + q.y]).sum();
            preds[k] = mw_to_dbm(total);
        });
        preds
    }

    /// Restarts the belief at time `t` over the `δ₀` window around the anchors.
    pub fn reinit(&mut self, t: u64, own: Position, obs_dbm: Option<f64>) -> Result<()> {
        let boxes = self.boxes_for(self.window.delta0_m)?;
        let mut grid = BeliefGrid::uniform(self.side, boxes)?;
        if let Some(obs) = obs_dbm {
            let preds = self.predictions(&grid, own);
            grid.update(&likelihood(obs, &preds, self.model.sigma()))?;
        }
        self.belief = Some(grid);
        self.last_t = t;
        self.reset_t = t;
        Ok(())
    }

    /// Propagates the belief to time `t`, folds in the reading and returns the MAP estimate.
    pub fn observe(&mut self, t: u64, own: Position, obs_dbm: f64) -> Result<Estimate> {
        if self.belief.is_none() {
            self.reinit(t, own, None)?;
        }
        let elapsed = t.saturating_sub(self.last_t);
        if elapsed > 0 {
            let radius = search_window(t - self.reset_t, &self.window);
            let boxes = self.boxes_for(radius)?;
            let grid = self.belief.as_mut().expect("initialized above");
            grid.expand(&boxes)?;
            for _ in 0..elapsed.min(self.window.period) {
                grid.diffuse();
            }
        }
        self.last_t = t;
        let grid = self.belief.as_ref().expect("initialized above");
        let preds = self.predictions(grid, own);
        let dens = likelihood(obs_dbm, &preds, self.model.sigma());
        let anchors = self.hidden_anchors();
        let (tuple, mass) = grid.map_estimate(&dens, &anchors)?;
        let map_idx = grid.index_of(&tuple).expect("MAP lies in support");
        self.model.record_residual(obs_dbm - preds[map_idx]);
        self.belief.as_mut().expect("initialized above").update(&dens)?;

        let mut positions = Vec::with_capacity(self.anchors.len());
        let mut hidden = tuple.into_iter();
        for j in 0..self.anchors.len() {
            positions.push(if j == self.owner { own } else { hidden.next().expect("one per hidden") });
        }
        Ok(Estimate { positions, mass })
    }
}

/// Symmetric 2×2 matrix `[[a, b], [b, c]]`.
pub type Sym2 = [f64; 3];

/// Eigenvalues of a symmetric 2×2 matrix, ascending.
pub fn sym2_eigenvalues(m: Sym2) -> [f64; 2] {
    let [a, b, c] = m;
    let mean = 0.5 * (a + c);
    let r = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    [mean - r, mean + r]
}

/// Posterior of a Gaussian prior on a 2-D position after a Gaussian observation.
///
/// Returns `(mean, cov)` with `cov = Σ − Σ(Σ + R)⁻¹Σ`.
pub fn gaussian_posterior(mean: [f64; 2], cov: Sym2, obs: [f64; 2], obs_cov: Sym2) -> Result<([f64; 2], Sym2)> {
    let s = [cov[0] + obs_cov[0], cov[1] + obs_cov[1], cov[2] + obs_cov[2]];
    let det = s[0] * s[2] - s[1] * s[1];
    if !(det > 0.0) {
        return Err(Error::InvalidParameter("innovation covariance is not positive definite".into()));
    }
    let inv = [s[2] / det, -s[1] / det, s[0] / det];
    // gain K = Σ S⁻¹
    let k = [
        [cov[0] * inv[0] + cov[1] * inv[1], cov[0] * inv[1] + cov[1] * inv[2]],
        [cov[1] * inv[0] + cov[2] * inv[1], cov[1] * inv[1] + cov[2] * inv[2]],
    ];
    let innov = [obs[0] - mean[0], obs[1] - mean[1]];
    let post_mean = [
        mean[0] + k[0][0] * innov[0] + k[0][1] * innov[1],
        mean[1] + k[1][0] * innov[0] + k[1][1] * innov[1],
    ];
    // Σ' = Σ − K Σ, symmetrized
    let kc00 = k[0][0] * cov[0] + k[0][1] * cov[1];
    let kc01 = k[0][0] * cov[1] + k[0][1] * cov[2];
    let kc10 = k[1][0] * cov[0] + k[1][1] * cov[1];
    let kc11 = k[1][0] * cov[1] + k[1][1] * cov[2];
    let post = [cov[0] - kc00, cov[1] - 0.5 * (kc01 + kc10), cov[2] - kc11];
    Ok((post_mean, post))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_examples() {
        let window = WindowSpec {
            delta0_m: 2.0,
            cell_m: 1.0,
            period: 30,
        };
        assert_eq!(search_window(60, &window), 2.0);
        assert_eq!(search_window(35, &window), 12.0);
        for t in 0..200 {
            assert!(search_window(t, &window) <= 2.0 + 2.0 * 30.0);
        }
    }

    #[test]
    fn likelihood_examples() {
        let d = likelihood(-40.0, &[-40.0, -41.0, -39.0], 1.0);
        assert_eq!(d[0], 1.0);
        assert_eq!(d[1], d[2]);
        assert!((d[0] / d[1] - 0.5f64.exp()).abs() < 1e-12);
    }

    fn two_point() -> BeliefGrid {
        let b = CellBox { x0: 0, x1: 0, y0: 0, y1: 1 };
        BeliefGrid::uniform(3, vec![b]).unwrap()
    }

    #[test]
    fn update_examples() {
        let mut g = two_point();
        g.update(&[0.2, 0.8]).unwrap();
        assert!((g.mass()[0] - 0.2).abs() < 1e-15 && (g.mass()[1] - 0.8).abs() < 1e-15);
        let before = g.mass().to_vec();
        g.update(&[3.0, 3.0]).unwrap();
        assert!((g.mass()[0] - before[0]).abs() < 1e-15);

        let mut g = two_point();
        g.update(&[1.0, 3.0]).unwrap();
        assert_eq!(g.mass(), &[0.25, 0.75]);

        g.update(&[0.0, 0.0]).unwrap();
        assert_eq!(g.mass(), &[0.5, 0.5]);
        assert!(g.update(&[1.0]).is_err());
    }

    #[test]
    fn map_examples() {
        let mut g = two_point();
        g.update(&[0.0, 1.0]).unwrap();
        let anchors = [Position::new(0, 0)];
        assert_eq!(g.map_estimate(&[5.0, 1.0], &anchors).unwrap().0, vec![Position::new(0, 1)]);
        let u = two_point();
        let (tuple, mass) = u.map_estimate(&[0.1, 0.3], &anchors).unwrap();
        assert_eq!(tuple, vec![Position::new(0, 1)]);
        assert!((mass - 0.75).abs() < 1e-12);
        // exact tie resolves toward the anchor
        let (tuple, _) = u.map_estimate(&[1.0, 1.0], &[Position::new(0, 2)]).unwrap();
        assert_eq!(tuple, vec![Position::new(0, 1)]);
    }

    #[test]
    fn reinit_counts_and_uniformity() {
        let window = WindowSpec {
            delta0_m: 2.0,
            cell_m: 1.0,
            period: 30,
        };
        let g = reinit_belief(&window, 11, &[Position::new(5, 5)], None, 1.0).unwrap();
        assert_eq!(g.len(), 25);
        assert!(g.mass().iter().all(|&m| (m - 0.04).abs() < 1e-15));
        let clipped = reinit_belief(&window, 11, &[Position::new(0, 0)], None, 1.0).unwrap();
        assert_eq!(clipped.len(), 9);
        assert!(reinit_belief(&window, 11, &[Position::new(11, 0)], None, 1.0).is_err());
    }

    #[test]
    fn expand_and_diffuse_preserve_mass() {
        let b = CellBox::around(Position::new(2, 2), 0, 5).unwrap();
        let mut g = BeliefGrid::uniform(5, vec![b, b]).unwrap();
        g.expand(&[CellBox::around(Position::new(2, 2), 1, 5).unwrap(); 2]).unwrap();
        assert_eq!(g.len(), 81);
        assert!((g.probability_of(&[Position::new(2, 2), Position::new(2, 2)]) - 1.0).abs() < 1e-15);
        g.diffuse();
        assert!((g.total_mass() - 1.0).abs() < 1e-12);
        assert!((g.probability_of(&[Position::new(2, 2), Position::new(2, 2)]) - 0.04).abs() < 1e-12);
        assert!((g.probability_of(&[Position::new(2, 3), Position::new(1, 2)]) - 0.04).abs() < 1e-12);
    }

    #[test]
    fn candidate_enumeration_matches_indexing() {
        let boxes = vec![
            CellBox { x0: 0, x1: 1, y0: 2, y1: 3 },
            CellBox { x0: 3, x1: 3, y0: 0, y1: 2 },
        ];
        let g = BeliefGrid::uniform(5, boxes).unwrap();
        g.for_each_candidate(|k, tuple| {
            assert_eq!(g.candidate(k), tuple);
            assert_eq!(g.index_of(tuple), Some(k));
        });
    }

    #[test]
    fn posterior_covariance_shrinks() {
        let (m, c) = gaussian_posterior([0.0, 0.0], [2.0, 0.0, 2.0], [1.0, 1.0], [2.0, 0.0, 2.0]).unwrap();
        assert_eq!(m, [0.5, 0.5]);
        assert_eq!(c, [1.0, 0.0, 1.0]);
        assert_eq!(sym2_eigenvalues([2.0, 1.0, 2.0]), [1.0, 3.0]);
    }

    #[test]
    fn adaptive_sigma_has_floor() {
        let mut m = LikelihoodModel::new(1.0, true, 4).unwrap();
        assert_eq!(m.sigma(), 1.0);
        for _ in 0..4 {
            m.record_residual(0.1);
        }
        assert_eq!(m.sigma(), 0.25);
        assert!(LikelihoodModel::new(0.0, false, 4).is_err());
    }
}
