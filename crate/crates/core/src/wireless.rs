//! Grid wireless network: topology, random-walk mobility, aggregated received
//! signal strength (ARSS), link cost and the coordination predicate.
//!
//! Units: distances in meters, powers in dBm at the interface and linear mW
//! inside the physics.

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::ActionMask;

/// Network parameters. Thresholds left as `None` resolve from the transmitter count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    /// Grid side in meters.
    pub side_m: f64,
    /// Grid spacing in meters.
    pub cell_m: f64,
    pub n_tx: usize,
    pub n_bs: usize,
    pub tx_power_dbm: f64,
    /// Standard deviation of the additive receiver noise, linear mW.
    pub noise_std_mw: f64,
    /// Modulation constant inside the reliability term.
    pub modulation_k: f64,
    /// Number of ARSS quantization levels.
    pub n_bins: usize,
    pub i_min_dbm: Option<f64>,
    pub i_max_dbm: Option<f64>,
    pub i_thr_dbm: Option<f64>,
    /// `(efficiency, reliability, fairness)` weights.
    pub cost_weights: [f64; 3],
    /// Scale of the fairness argument in dB; defaults to one bin width.
    pub fairness_scale_db: Option<f64>,
    pub path_loss_exponent: f64,
    /// Extra attenuation on transmitter-to-transmitter sensing paths.
    pub arss_coupling_loss_db: f64,
    /// Distance floor; defaults to half a cell.
    pub min_separation_m: Option<f64>,
    /// Radii are drawn from `unif[lo·L, hi·L]`.
    pub radius_frac: [f64; 2],
    pub bs_radii_m: Option<Vec<f64>>,
    pub tx_radii_m: Option<Vec<f64>>,
    /// Cost charged for an action whose BS does not cover the transmitter.
    pub invalid_cost: f64,
    /// Floor on the SNR denominator, linear mW.
    pub snr_floor_mw: f64,
    /// Redraw topologies until every grid point is covered by some BS.
    pub require_full_coverage: bool,
    /// Standard deviation of the ARSS readings used by the estimator, dB.
    pub obs_noise_db: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            side_m: 100.0,
            cell_m: 1.0,
            n_tx: 3,
            n_bs: 2,
            tx_power_dbm: 20.0,
            noise_std_mw: 1e-3,
            modulation_k: 1.0,
            n_bins: 10,
            i_min_dbm: None,
            i_max_dbm: None,
            i_thr_dbm: None,
            cost_weights: [1.0 / 3.0; 3],
            fairness_scale_db: None,
            path_loss_exponent: 2.0,
            arss_coupling_loss_db: 0.0,
            min_separation_m: None,
            radius_frac: [1.0 / 3.0, 2.0 / 3.0],
            bs_radii_m: None,
            tx_radii_m: None,
            invalid_cost: 1e3,
            snr_floor_mw: 1e-9,
            require_full_coverage: false,
            obs_noise_db: 1.0,
        }
    }
}

const MAX_TOPOLOGY_TRIES: usize = 10_000;

/// `10·log10(max(N_T − 1, 1))`, the shift shared by the default thresholds.
pub fn threshold_offset_db(n_tx: usize) -> f64 {
    10.0 * (n_tx.saturating_sub(1).max(1) as f64).log10()
}

impl NetworkConfig {
    pub fn i_max(&self) -> f64 {
        self.i_max_dbm.unwrap_or(threshold_offset_db(self.n_tx) - 10.0)
    }

    pub fn i_thr(&self) -> f64 {
        self.i_thr_dbm.unwrap_or(threshold_offset_db(self.n_tx) - 45.0)
    }

    pub fn i_min(&self) -> f64 {
        self.i_min_dbm.unwrap_or(threshold_offset_db(self.n_tx) - 60.0)
    }

    pub fn bin_width_db(&self) -> f64 {
        (self.i_max() - self.i_min()) / (self.n_bins - 1) as f64
    }

    pub fn fairness_scale(&self) -> f64 {
        self.fairness_scale_db.unwrap_or_else(|| self.bin_width_db())
    }

    pub fn min_separation(&self) -> f64 {
        self.min_separation_m.unwrap_or(0.5 * self.cell_m)
    }

    /// Grid points per side.
    pub fn side_points(&self) -> usize {
        (self.side_m / self.cell_m).round() as usize + 1
    }

    pub fn tx_power_mw(&self) -> f64 {
        dbm_to_mw(self.tx_power_dbm)
    }

    pub fn coupling_gain(&self) -> f64 {
        10f64.powf(-self.arss_coupling_loss_db / 10.0)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.side_m > 0.0 && self.cell_m > 0.0) {
            return bad("side_m and cell_m must be positive".into());
        }
        let ratio = self.side_m / self.cell_m;
        if (ratio - ratio.round()).abs() > 1e-9 {
            return bad(format!("cell_m = {} does not divide side_m = {}", self.cell_m, self.side_m));
        }
        if self.n_tx == 0 || self.n_bs == 0 {
            return bad("n_tx and n_bs must be at least 1".into());
        }
        if self.n_bins < 2 {
            return bad("n_bins must be at least 2".into());
        }
        let (lo, hi, thr) = (self.i_min(), self.i_max(), self.i_thr());
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return bad(format!("need finite i_min < i_max, got {lo} and {hi}"));
        }
        if thr.is_nan() || (thr.is_finite() && !(lo < thr && thr < hi)) {
            return bad(format!("i_thr = {thr} must lie strictly inside ({lo}, {hi}) or be infinite"));
        }
        let w = self.cost_weights;
        if w.iter().any(|&x| !(x >= 0.0)) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad(format!("cost weights {w:?} must be nonnegative and sum to 1"));
        }
        if !(self.fairness_scale() > 0.0) {
            return bad("fairness scale must be positive".into());
        }
        if !(self.noise_std_mw >= 0.0 && self.snr_floor_mw > 0.0) {
            return bad("noise_std_mw must be >= 0 and snr_floor_mw > 0".into());
        }
        if !(self.path_loss_exponent > 0.0 && self.min_separation() >= 0.0) {
            return bad("path_loss_exponent must be positive and min_separation_m nonnegative".into());
        }
        let [rlo, rhi] = self.radius_frac;
        if !(0.0 < rlo && rlo <= rhi) {
            return bad("radius_frac must satisfy 0 < lo <= hi".into());
        }
        for (name, radii, n) in [("bs_radii_m", &self.bs_radii_m, self.n_bs), ("tx_radii_m", &self.tx_radii_m, self.n_tx)] {
            if let Some(r) = radii {
                if r.len() != n || r.iter().any(|&x| !(x > 0.0)) {
                    return bad(format!("{name} must hold {n} positive radii"));
                }
            }
        }
        if !(self.invalid_cost.is_finite() && self.invalid_cost >= 0.0) {
            return bad("invalid_cost must be finite and nonnegative".into());
        }
        if !(self.obs_noise_db >= 0.0) {
            return bad("obs_noise_db must be nonnegative".into());
        }
        let cells = self.side_points() * self.side_points();
        if cells < self.n_tx + self.n_bs {
            return Err(Error::GridTooSmall {
                cells,
                needed: self.n_tx + self.n_bs,
            });
        }
        Ok(())
    }
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

pub fn mw_to_dbm(mw: f64) -> f64 {
    10.0 * mw.log10()
}

/// Grid point in cell units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Position {
    pub x: usize,
    pub y: usize,
}

impl Position {
    pub fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }

    /// Euclidean distance in meters.
    pub fn distance(self, other: Position, cell_m: f64) -> f64 {
        let dx = self.x as f64 - other.x as f64;
        let dy = self.y as f64 - other.y as f64;
        cell_m * (dx * dx + dy * dy).sqrt()
    }
}

/// Per-transmitter state `(x, y, bin)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TxState {
    pub pos: Position,
    pub bin: usize,
}

/// Row-major `(x, y, bin)` indexing of one transmitter's states.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateSpace {
    pub side: usize,
    pub bins: usize,
}

impl StateSpace {
    pub fn new(cfg: &NetworkConfig) -> Self {
        Self {
            side: cfg.side_points(),
            bins: cfg.n_bins,
        }
    }

    pub fn n_states(&self) -> usize {
        self.side * self.side * self.bins
    }

    pub fn n_cells(&self) -> usize {
        self.side * self.side
    }

    pub fn index(&self, st: TxState) -> usize {
        (st.pos.x * self.side + st.pos.y) * self.bins + st.bin
    }

    pub fn decode(&self, s: usize) -> TxState {
        let bin = s % self.bins;
        let cell = s / self.bins;
        TxState {
            pos: Position::new(cell / self.side, cell % self.side),
            bin,
        }
    }

    pub fn cell_index(&self, p: Position) -> usize {
        p.x * self.side + p.y
    }

    pub fn cell(&self, c: usize) -> Position {
        Position::new(c / self.side, c % self.side)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseStation {
    pub pos: Position,
    pub radius_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub bs: Vec<BaseStation>,
    pub tx: Vec<Position>,
    pub tx_radius_m: Vec<f64>,
}

fn draw_radii<R: Rng + ?Sized>(cfg: &NetworkConfig, n: usize, fixed: &Option<Vec<f64>>, rng: &mut R) -> Vec<f64> {
    match fixed {
        Some(r) => r.clone(),
        None => {
            let [lo, hi] = cfg.radius_frac;
            (0..n)
                .map(|_| {
                    if lo == hi {
                        lo * cfg.side_m
                    } else {
                        rng.random_range(lo * cfg.side_m..=hi * cfg.side_m)
                    }
                })
                .collect()
        }
    }
}

/// Uniform collision-free placement of BSs and TXs with sampled radii.
pub fn init_topology<R: Rng + ?Sized>(cfg: &NetworkConfig, rng: &mut R) -> Result<Topology> {
    let space = StateSpace::new(cfg);
    let needed = cfg.n_tx + cfg.n_bs;
    if space.n_cells() < needed {
        return Err(Error::GridTooSmall {
            cells: space.n_cells(),
            needed,
        });
    }
    for _ in 0..MAX_TOPOLOGY_TRIES {
        let cells = sample_indices(rng, space.n_cells(), needed).into_vec();
        let bs_r = draw_radii(cfg, cfg.n_bs, &cfg.bs_radii_m, rng);
        let tx_r = draw_radii(cfg, cfg.n_tx, &cfg.tx_radii_m, rng);
        let topo = Topology {
            bs: cells[..cfg.n_bs]
                .iter()
                .zip(bs_r)
                .map(|(&c, radius_m)| BaseStation {
                    pos: space.cell(c),
                    radius_m,
                })
                .collect(),
            tx: cells[cfg.n_bs..].iter().map(|&c| space.cell(c)).collect(),
            tx_radius_m: tx_r,
        };
        if !cfg.require_full_coverage || fully_covered(&topo, cfg) {
            return Ok(topo);
        }
    }
    Err(Error::Config(format!(
        "no fully covered topology found in {MAX_TOPOLOGY_TRIES} draws"
    )))
}

/// True when every grid point lies inside some BS radius.
pub fn fully_covered(topo: &Topology, cfg: &NetworkConfig) -> bool {
    let space = StateSpace::new(cfg);
    (0..space.n_cells()).all(|c| {
        let p = space.cell(c);
        topo.bs.iter().any(|b| p.distance(b.pos, cfg.cell_m) <= b.radius_m)
    })
}

/// One random-walk step: stay, up, right, down or left with equal probability;
/// a move that would leave the grid becomes a stay.
pub fn move_tx<R: Rng + ?Sized>(pos: Position, side: usize, rng: &mut R) -> Position {
    let (x, y) = (pos.x as i64, pos.y as i64);
    let (nx, ny) = match rng.random_range(0..5u8) {
        0 => (x, y),
        1 => (x, y + 1),
        2 => (x + 1, y),
        3 => (x, y - 1),
        _ => (x - 1, y),
    };
    let limit = side as i64;
    if nx < 0 || ny < 0 || nx >= limit || ny >= limit {
        pos
    } else {
        Position::new(nx as usize, ny as usize)
    }
}

/// Received power at `observer` from a transmitter at `source`, linear mW.
pub fn path_gain_mw(cfg: &NetworkConfig, observer: Position, source: Position, power_mw: f64) -> f64 {
    let d = observer.distance(source, cfg.cell_m).max(cfg.min_separation());
    power_mw * cfg.coupling_gain() / d.powf(cfg.path_loss_exponent)
}

/// ARSS at transmitter `i`: superposition over all other transmitters, linear mW.
pub fn arss_mw(cfg: &NetworkConfig, positions: &[Position], i: usize) -> Result<f64> {
    let p = cfg.tx_power_mw();
    let mut total = 0.0;
    for (j, &pj) in positions.iter().enumerate() {
        if j == i {
            continue;
        }
        if pj == positions[i] && cfg.min_separation() == 0.0 {
            return Err(Error::CoincidentTransmitters(i.min(j), i.max(j)));
        }
        total += path_gain_mw(cfg, positions[i], pj, p);
    }
    Ok(total)
}

pub fn arss_dbm(cfg: &NetworkConfig, positions: &[Position], i: usize) -> Result<f64> {
    Ok(mw_to_dbm(arss_mw(cfg, positions, i)?))
}

/// Nearest of the evenly spaced dBm levels after clamping to `[i_min, i_max]`.
pub fn quantize_arss(dbm: f64, cfg: &NetworkConfig) -> usize {
    let (lo, hi) = (cfg.i_min(), cfg.i_max());
    let clamped = if dbm.is_nan() { lo } else { dbm.clamp(lo, hi) };
    let k = ((clamped - lo) / cfg.bin_width_db()).round() as usize;
    k.min(cfg.n_bins - 1)
}

pub fn dequantize(bin: usize, cfg: &NetworkConfig) -> f64 {
    cfg.i_min() + bin as f64 * cfg.bin_width_db()
}

/// `P / (d^2 · max(n + I, floor))`, all linear.
pub fn snr(power_mw: f64, distance_m: f64, noise_plus_interference_mw: f64, floor_mw: f64) -> f64 {
    power_mw / (distance_m * distance_m * noise_plus_interference_mw.max(floor_mw))
}

/// Standard normal upper tail.
pub fn gaussian_tail(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// Weighted sum of the efficiency, reliability and fairness terms for one link.
pub fn link_cost(cfg: &NetworkConfig, power_mw: f64, snr: f64, arss_dbm: f64) -> f64 {
    let [w_eff, w_rel, w_fair] = cfg.cost_weights;
    let eff = if w_eff > 0.0 { w_eff * power_mw / (1.0 + snr).log2() } else { 0.0 };
    let rel = w_rel * gaussian_tail(cfg.modulation_k * snr.sqrt());
    let fair = w_fair * gaussian_tail((cfg.i_thr() - arss_dbm) / cfg.fairness_scale());
    eff + rel + fair
}

/// True iff some dequantized ARSS level strictly exceeds the threshold.
pub fn is_coordinated(bins: &[usize], cfg: &NetworkConfig) -> bool {
    let thr = cfg.i_thr();
    bins.iter().any(|&b| dequantize(b, cfg) > thr)
}

/// Per-state mask of covering BSs; an uncovered state keeps only its nearest BS.
pub fn coverage_mask(cfg: &NetworkConfig, topo: &Topology) -> ActionMask {
    let space = StateSpace::new(cfg);
    let covered = |p: Position| -> Vec<bool> {
        let mut row: Vec<bool> = topo
            .bs
            .iter()
            .map(|b| p.distance(b.pos, cfg.cell_m) <= b.radius_m)
            .collect();
        if !row.iter().any(|&v| v) {
            row[nearest_bs(cfg, topo, p)] = true;
        }
        row
    };
    let rows: Vec<Vec<bool>> = (0..space.n_cells()).map(|c| covered(space.cell(c))).collect();
    ActionMask::from_fn(space.n_states(), topo.bs.len(), |s, a| rows[s / space.bins][a])
}

fn nearest_bs(cfg: &NetworkConfig, topo: &Topology, p: Position) -> usize {
    let mut best = 0;
    for (b, bs) in topo.bs.iter().enumerate() {
        if p.distance(bs.pos, cfg.cell_m) < p.distance(topo.bs[best].pos, cfg.cell_m) {
            best = b;
        }
    }
    best
}

/// Per-transmitter cost model over its own state space.
#[derive(Debug, Clone)]
pub struct CostModel {
    cfg: NetworkConfig,
    topo: Topology,
    space: StateSpace,
}

impl CostModel {
    pub fn new(cfg: &NetworkConfig, topo: &Topology) -> Self {
        Self {
            cfg: cfg.clone(),
            topo: topo.clone(),
            space: StateSpace::new(cfg),
        }
    }

    fn covers(&self, p: Position, a: usize) -> bool {
        let b = &self.topo.bs[a];
        p.distance(b.pos, self.cfg.cell_m) <= b.radius_m
    }

    fn link(&self, s: usize, a: usize) -> Option<(f64, f64, f64)> {
        let st = self.space.decode(s);
        if !self.covers(st.pos, a) {
            return None;
        }
        let d = st.pos.distance(self.topo.bs[a].pos, self.cfg.cell_m).max(self.cfg.min_separation());
        let level = dequantize(st.bin, &self.cfg);
        Some((d, level, dbm_to_mw(level)))
    }

    /// Cost of action `a` in state `s` for one noise draw (linear mW).
    pub fn sampled(&self, s: usize, a: usize, noise_mw: f64) -> f64 {
        match self.link(s, a) {
            None => self.cfg.invalid_cost,
            Some((d, level, interference)) => {
                let p = self.cfg.tx_power_mw();
                let r = snr(p, d, noise_mw + interference, self.cfg.snr_floor_mw);
                link_cost(&self.cfg, p, r, level)
            }
        }
    }

    /// Expectation of [`Self::sampled`] over zero-mean Gaussian noise.
    pub fn expected(&self, s: usize, a: usize) -> f64 {
        let Some((d, level, interference)) = self.link(s, a) else {
            return self.cfg.invalid_cost;
        };
        let p = self.cfg.tx_power_mw();
        let sigma = self.cfg.noise_std_mw;
        let floor = self.cfg.snr_floor_mw;
        let at = |n: f64| link_cost(&self.cfg, p, snr(p, d, n + interference, floor), level);
        if sigma == 0.0 {
            return at(0.0);
        }
        // below `cut` the denominator sits on the floor and the cost is constant
        let cut = floor - interference;
        let lower_mass = 1.0 - gaussian_tail(cut / sigma);
        let mut total = lower_mass * at(cut - 1.0);
        let hi = 8.0 * sigma;
        if cut < hi {
            let intervals = 2000;
            let h = (hi - cut) / intervals as f64;
            let density = |n: f64| (-(n * n) / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt());
            let f = |n: f64| at(n) * density(n);
            let mut acc = f(cut) + f(hi);
            for k in 1..intervals {
                let n = cut + k as f64 * h;
                acc += if k % 2 == 1 { 4.0 } else { 2.0 } * f(n);
            }
            total += acc * h / 3.0;
        }
        total
    }

    /// Row-major expected cost table.
    pub fn expected_table(&self) -> Vec<f64> {
        let n_a = self.topo.bs.len();
        let mut out = Vec::with_capacity(self.space.n_states() * n_a);
        for s in 0..self.space.n_states() {
            for a in 0..n_a {
                out.push(self.expected(s, a));
            }
        }
        out
    }
}

/// The live network: positions, quantized ARSS and per-state action masks.
#[derive(Debug, Clone)]
pub struct WirelessEnv {
    pub cfg: NetworkConfig,
    pub topology: Topology,
    pub space: StateSpace,
    pub mask: ActionMask,
    pub costs: CostModel,
    positions: Vec<Position>,
    bins: Vec<usize>,
    arss: Vec<f64>,
}

impl WirelessEnv {
    pub fn new(cfg: NetworkConfig, topology: Topology) -> Result<Self> {
        cfg.validate()?;
        let space = StateSpace::new(&cfg);
        let mask = coverage_mask(&cfg, &topology);
        let costs = CostModel::new(&cfg, &topology);
        let positions = topology.tx.clone();
        let mut env = Self {
            cfg,
            topology,
            space,
            mask,
            costs,
            positions,
            bins: Vec::new(),
            arss: Vec::new(),
        };
        env.refresh()?;
        Ok(env)
    }

    fn refresh(&mut self) -> Result<()> {
        self.arss = (0..self.positions.len())
            .map(|i| arss_dbm(&self.cfg, &self.positions, i))
            .collect::<Result<_>>()?;
        self.bins = self.arss.iter().map(|&d| quantize_arss(d, &self.cfg)).collect();
        Ok(())
    }

    pub fn n_tx(&self) -> usize {
        self.positions.len()
    }

    pub fn n_actions(&self) -> usize {
        self.topology.bs.len()
    }

    pub fn positions(&self) -> &[Position] {
        &self.positions
    }

    pub fn bins(&self) -> &[usize] {
        &self.bins
    }

    /// Noiseless ARSS of every transmitter, dBm.
    pub fn arss(&self) -> &[f64] {
        &self.arss
    }

    pub fn tx_state(&self, i: usize) -> TxState {
        TxState {
            pos: self.positions[i],
            bin: self.bins[i],
        }
    }

    pub fn states(&self) -> Vec<usize> {
        (0..self.n_tx()).map(|i| self.space.index(self.tx_state(i))).collect()
    }

    pub fn coordinated(&self) -> bool {
        is_coordinated(&self.bins, &self.cfg)
    }

    /// Sampled cost of every transmitter for the given actions.
    pub fn sample_costs<R: Rng + ?Sized>(&self, actions: &[usize], rng: &mut R) -> Vec<f64> {
        let normal = rand_distr::Normal::new(0.0, self.cfg.noise_std_mw).expect("validated std");
        self.states()
            .into_iter()
            .zip(actions)
            .map(|(s, &a)| {
                let n = rand_distr::Distribution::sample(&normal, rng);
                self.costs.sampled(s, a, n)
            })
            .collect()
    }

    /// Moves every transmitter one random-walk step and recomputes ARSS.
    pub fn advance<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        for p in &mut self.positions {
            *p = move_tx(*p, self.space.side, rng);
        }
        self.refresh()
    }

    /// Places the transmitters directly.
    pub fn set_positions(&mut self, positions: Vec<Position>) -> Result<()> {
        if positions.len() != self.positions.len() {
            return Err(Error::ShapeMismatch("transmitter count".into()));
        }
        self.positions = positions;
        self.refresh()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg3() -> NetworkConfig {
        NetworkConfig {
            side_m: 20.0,
            n_tx: 3,
            ..NetworkConfig::default()
        }
    }

    #[test]
    fn default_thresholds_for_three_transmitters() {
        let c = cfg3();
        assert!((c.i_max() - (10.0 * 2f64.log10() - 10.0)).abs() < 1e-12);
        assert!((c.i_max() + 6.99).abs() < 0.005);
        assert!((c.i_thr() + 41.99).abs() < 0.005);
        assert!((c.i_min() + 56.99).abs() < 0.005);
    }

    #[test]
    fn validation_catches_bad_thresholds() {
        let mut c = cfg3();
        c.i_thr_dbm = Some(0.0);
        assert!(c.validate().is_err());
        c.i_thr_dbm = Some(f64::INFINITY);
        assert!(c.validate().is_ok());
        c.i_thr_dbm = Some(f64::NEG_INFINITY);
        assert!(c.validate().is_ok());
        c.cell_m = 3.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn pigeonhole_topology() {
        let c = NetworkConfig {
            side_m: 1.0,
            n_tx: 2,
            n_bs: 2,
            ..NetworkConfig::default()
        };
        let t = init_topology(&c, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let mut cells: Vec<Position> = t.bs.iter().map(|b| b.pos).chain(t.tx.iter().copied()).collect();
        cells.sort();
        cells.dedup();
        assert_eq!(cells.len(), 4);
        let too_many = NetworkConfig { n_tx: 3, ..c };
        assert!(matches!(
            init_topology(&too_many, &mut ChaCha8Rng::seed_from_u64(1)),
            Err(Error::GridTooSmall { .. })
        ));
    }

    #[test]
    fn topology_is_deterministic() {
        let c = cfg3();
        let a = init_topology(&c, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b = init_topology(&c, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a, b);
        for &r in a.bs.iter().map(|b| &b.radius_m).chain(&a.tx_radius_m) {
            assert!((20.0 / 3.0..=40.0 / 3.0).contains(&r));
        }
    }

    #[test]
    fn center_moves_are_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c = Position::new(5, 5);
        let mut hits = std::collections::HashMap::new();
        for _ in 0..10_000 {
            *hits.entry(move_tx(c, 11, &mut rng)).or_insert(0usize) += 1;
        }
        assert_eq!(hits.len(), 5);
        for n in hits.values() {
            assert!((*n as f64 / 10_000.0 - 0.2).abs() < 0.02);
        }
    }

    #[test]
    fn corner_clamps_to_stay() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut stay = 0;
        for _ in 0..10_000 {
            let p = move_tx(Position::new(0, 0), 5, &mut rng);
            assert!([Position::new(0, 0), Position::new(1, 0), Position::new(0, 1)].contains(&p));
            stay += (p == Position::new(0, 0)) as usize;
        }
        assert!((stay as f64 / 10_000.0 - 0.6).abs() < 0.02);
    }

    #[test]
    fn arss_examples() {
        let c = NetworkConfig {
            side_m: 40.0,
            n_tx: 2,
            ..NetworkConfig::default()
        };
        let pos = [Position::new(0, 0), Position::new(10, 0)];
        assert!(arss_dbm(&c, &pos, 0).unwrap().abs() < 1e-12);
        // three transmitters on an equilateral triangle of side 10 is off-grid,
        // so place the observer at the origin with two sources at distance 10
        let pos3 = [Position::new(10, 10), Position::new(0, 10), Position::new(10, 0)];
        assert!((arss_mw(&c, &pos3, 0).unwrap() - 2.0).abs() < 1e-12);
        let far = [Position::new(0, 0), Position::new(20, 0)];
        let drop = arss_dbm(&c, &pos, 0).unwrap() - arss_dbm(&c, &far, 0).unwrap();
        assert!((drop - 20.0 * 2f64.log10()).abs() < 1e-12);
        let zero = NetworkConfig {
            min_separation_m: Some(0.0),
            ..c
        };
        assert!(matches!(
            arss_mw(&zero, &[Position::new(1, 1), Position::new(1, 1)], 0),
            Err(Error::CoincidentTransmitters(0, 1))
        ));
    }

    #[test]
    fn quantization_examples() {
        let c = NetworkConfig {
            i_min_dbm: Some(-60.0),
            i_max_dbm: Some(-10.0),
            i_thr_dbm: Some(-45.0),
            n_bins: 6,
            ..NetworkConfig::default()
        };
        assert_eq!(quantize_arss(-100.0, &c), 0);
        assert_eq!(quantize_arss(-10.0, &c), 5);
        assert_eq!(quantize_arss(-33.0, &c), 3);
        for b in 0..6 {
            assert_eq!(quantize_arss(dequantize(b, &c), &c), b);
        }
    }

    #[test]
    fn snr_and_cost_examples() {
        assert_eq!(snr(100.0, 10.0, 1.0, 1e-9), 1.0);
        assert!(snr(100.0, 10.0, 1e300, 1e-9) < 1e-290);
        assert_eq!(snr(100.0, 1.0, -5.0, 1e-9), 100.0 / 1e-9);
        let c = NetworkConfig {
            cost_weights: [1.0, 0.0, 0.0],
            ..cfg3()
        };
        assert!((link_cost(&c, 100.0, 1.0, -30.0) - 100.0).abs() < 1e-12);
        let fair = NetworkConfig {
            cost_weights: [0.0, 0.0, 1.0],
            ..cfg3()
        };
        assert!((link_cost(&fair, 100.0, 1.0, fair.i_thr()) - 0.5).abs() < 1e-15);
        let rel = NetworkConfig {
            cost_weights: [0.0, 1.0, 0.0],
            ..cfg3()
        };
        assert_eq!(link_cost(&rel, 100.0, f64::INFINITY, -30.0), 0.0);
    }

    #[test]
    fn gaussian_tail_values() {
        assert_eq!(gaussian_tail(0.0), 0.5);
        assert_eq!(gaussian_tail(f64::INFINITY), 0.0);
        assert!((gaussian_tail(1.0) - 0.158655).abs() < 1e-6);
    }

    #[test]
    fn coordination_predicate() {
        let c = cfg3();
        assert!(!is_coordinated(&[0, 0, 0], &c));
        assert!(is_coordinated(&[0, c.n_bins - 1, 0], &c));
        // a grid whose middle level lands exactly on the threshold
        let edge = NetworkConfig {
            i_min_dbm: Some(-60.0),
            i_max_dbm: Some(-20.0),
            i_thr_dbm: Some(-40.0),
            n_bins: 3,
            ..c
        };
        assert_eq!(dequantize(1, &edge), -40.0);
        assert!(!is_coordinated(&[1, 1, 1], &edge));
        assert!(is_coordinated(&[1, 2, 0], &edge));
    }

    #[test]
    fn state_indexing_roundtrip() {
        let space = StateSpace { side: 5, bins: 3 };
        for s in 0..space.n_states() {
            assert_eq!(space.index(space.decode(s)), s);
        }
    }

    #[test]
    fn expected_cost_matches_monte_carlo() {
        let cfg = NetworkConfig {
            side_m: 4.0,
            n_tx: 2,
            n_bins: 3,
            arss_coupling_loss_db: 65.0,
            bs_radii_m: Some(vec![10.0, 10.0]),
            ..NetworkConfig::default()
        };
        let topo = init_topology(&cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let model = CostModel::new(&cfg, &topo);
        let normal = rand_distr::Normal::new(0.0, cfg.noise_std_mw).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for s in [0, 7, 40] {
            let n = 200_000;
            let mc: f64 = (0..n)
                .map(|_| model.sampled(s, 0, rand_distr::Distribution::sample(&normal, &mut rng)))
                .sum::<f64>()
                / n as f64;
            let exact = model.expected(s, 0);
            assert!((mc - exact).abs() < 0.01 * exact, "{mc} vs {exact}");
        }
    }

    #[test]
    fn uncovered_states_keep_nearest_bs() {
        let cfg = NetworkConfig {
            side_m: 4.0,
            n_tx: 1,
            n_bs: 2,
            n_bins: 3,
            bs_radii_m: Some(vec![0.5, 0.5]),
            ..NetworkConfig::default()
        };
        let topo = Topology {
            bs: vec![
                BaseStation { pos: Position::new(0, 0), radius_m: 0.5 },
                BaseStation { pos: Position::new(4, 4), radius_m: 0.5 },
            ],
            tx: vec![Position::new(2, 2)],
            tx_radius_m: vec![1.0],
        };
        let mask = coverage_mask(&cfg, &topo);
        let space = StateSpace::new(&cfg);
        let s = space.index(TxState { pos: Position::new(1, 0), bin: 0 });
        assert_eq!(mask.row(s), &[true, false]);
        let model = CostModel::new(&cfg, &topo);
        assert_eq!(model.sampled(s, 0, 0.0), cfg.invalid_cost);
        let s0 = space.index(TxState { pos: Position::new(0, 0), bin: 0 });
        assert!(model.sampled(s0, 0, 0.0) < cfg.invalid_cost);
    }
}
