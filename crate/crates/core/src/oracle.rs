//! Brute-force checks that do not rely on the reaction or equilibrium formulas:
//! iterative spot solving, grid deviation scans for the forward stage and
//! exhaustive scans over symmetric profiles.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::math::{abs, floor, sqrt};
use crate::model::{MarketParams, ModelError};
use crate::spot::{
    best_response_value, one_deviator_equilibrium, symmetric_production, SpotOutcome,
};

const SPOT_STOP: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Refinement {
    None,
    GoldenSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub grid_step: f64,
    pub deviation_radius: f64,
    pub epsilon: f64,
    pub max_iterations: usize,
    pub refinement: Refinement,
    /// Re-solve the spot stage iteratively at the best follower deviation and
    /// require agreement with the closed form.
    pub cross_check: bool,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            grid_step: 1e-3,
            deviation_radius: 4.0,
            epsilon: 1e-3,
            max_iterations: 10_000,
            refinement: Refinement::GoldenSection,
            cross_check: true,
        }
    }
}

impl OracleConfig {
    pub fn new(grid_step: f64, deviation_radius: f64, epsilon: f64) -> Result<Self, ModelError> {
        let cfg = OracleConfig {
            grid_step,
            deviation_radius,
            epsilon,
            ..OracleConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Step and radius in units of [`MarketParams::quantity_scale`], epsilon in
    /// units of [`MarketParams::profit_scale`].
    pub fn relative(
        params: &MarketParams,
        grid_step: f64,
        deviation_radius: f64,
        epsilon: f64,
    ) -> Result<Self, ModelError> {
        let q = params.quantity_scale();
        Self::new(
            grid_step * q,
            deviation_radius * q,
            epsilon * params.profit_scale(),
        )
    }

    pub fn with_refinement(mut self, refinement: Refinement) -> Self {
        self.refinement = refinement;
        self
    }

    pub fn with_max_iterations(mut self, n: usize) -> Self {
        self.max_iterations = n;
        self
    }

    pub fn with_cross_check(mut self, on: bool) -> Self {
        self.cross_check = on;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !pos(self.grid_step) {
            return Err(ModelError::InvalidParameter {
                name: "grid_step",
                reason: "must be positive and finite",
            });
        }
        if !pos(self.deviation_radius) {
            return Err(ModelError::InvalidParameter {
                name: "deviation_radius",
                reason: "must be positive and finite",
            });
        }
        if !pos(self.epsilon) {
            return Err(ModelError::InvalidParameter {
                name: "epsilon",
                reason: "must be positive and finite",
            });
        }
        if self.max_iterations < 1 {
            return Err(ModelError::InvalidParameter {
                name: "max_iterations",
                reason: "must be at least 1",
            });
        }
        Ok(())
    }
}

/// Spot equilibrium by cyclic best responses starting from zero production.
pub fn spot_iterative(
    f: &[f64],
    x: &[f64],
    params: &MarketParams,
    config: &OracleConfig,
) -> Result<SpotOutcome, ModelError> {
    let start = vec![0.0; params.followers() as usize];
    spot_iterative_from(&start, f, x, params, config)
}

/// [`spot_iterative`] from an arbitrary starting point.
pub fn spot_iterative_from(
    start: &[f64],
    f: &[f64],
    x: &[f64],
    params: &MarketParams,
    config: &OracleConfig,
) -> Result<SpotOutcome, ModelError> {
    let n = params.followers() as usize;
    for (got, expected) in [
        (f.len(), n),
        (start.len(), n),
        (x.len(), params.leaders() as usize),
    ] {
        if got != expected {
            return Err(ModelError::LengthMismatch { expected, got });
        }
    }
    let sum_x: f64 = x.iter().sum();
    let mut y = start.to_vec();
    let mut total: f64 = y.iter().sum();
    let stop = SPOT_STOP * params.capacity().max(1.0);
    let mut residual = f64::INFINITY;
    for _ in 0..config.max_iterations {
        residual = 0.0;
        for j in 0..n {
            let next = best_response_value(f[j], sum_x, total - y[j], params);
            residual = residual.max(abs(next - y[j]));
            total += next - y[j];
            y[j] = next;
        }
        if residual < stop {
            return Ok(SpotOutcome::new(y, x, params, true));
        }
    }
    Err(ModelError::NotConverged {
        iterations: config.max_iterations,
        residual,
        last: y,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "index", rename_all = "snake_case")]
pub enum Agent {
    Leader(usize),
    Follower(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum OracleVerdict {
    Pass,
    Fail {
        agent: Agent,
        deviation: f64,
        gain: f64,
    },
    Inconclusive {
        iterations: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerificationResult {
    pub verdict: OracleVerdict,
    pub leader_max_gain: f64,
    pub follower_max_gain: f64,
    /// Deviation achieving each maximum.
    pub leader_best_deviation: f64,
    pub follower_best_deviation: f64,
}

impl VerificationResult {
    pub fn passed(&self) -> bool {
        self.verdict == OracleVerdict::Pass
    }
}

/// Symmetric profile `(f, x)` with cached payoffs.
struct Profile<'a> {
    params: &'a MarketParams,
    f: f64,
    x: f64,
    x_vec: Vec<f64>,
    leader_now: f64,
    follower_now: f64,
}

impl<'a> Profile<'a> {
    fn new(f: f64, x: f64, params: &'a MarketParams) -> Self {
        let (m, n, beta) = (params.m(), params.n(), params.beta());
        let y = symmetric_production(f, m * x, params);
        let q = m * x + n * y;
        Profile {
            params,
            f,
            x,
            x_vec: vec![x; params.leaders() as usize],
            leader_now: beta * (params.alpha_x() - q) * x,
            follower_now: beta * (params.alpha_y() - q) * y,
        }
    }

    fn leader_payoff(&self, dev: f64) -> f64 {
        let p = self.params;
        let others = (p.m() - 1.0) * self.x;
        let y = symmetric_production(self.f, others + dev, p);
        p.beta() * (p.alpha_x() - others - dev - p.n() * y) * dev
    }

    fn follower_spot(&self, dev: f64) -> (f64, f64) {
        one_deviator_equilibrium(dev, self.f, &self.x_vec, self.params)
    }

    fn follower_payoff(&self, dev: f64) -> f64 {
        let p = self.params;
        let (y_l, y_o) = self.follower_spot(dev);
        let q = p.m() * self.x + y_l + (p.n() - 1.0) * y_o;
        p.beta() * (p.alpha_y() - q) * y_l
    }

    fn leader_top(&self, config: &OracleConfig) -> f64 {
        let a = 2.0 * self.params.alpha_x() / (self.params.m() + 1.0);
        a.max(self.x + config.deviation_radius).max(0.0)
    }
}

struct Gains {
    leader: (f64, f64),
    follower: (f64, f64),
}

fn scan_gains(
    prof: &Profile,
    leader_idx: impl Iterator<Item = i64>,
    follower_idx: impl Iterator<Item = i64>,
    h: f64,
    early_exit: Option<f64>,
) -> Gains {
    let mut g = Gains {
        leader: (f64::NEG_INFINITY, prof.x),
        follower: (f64::NEG_INFINITY, prof.f),
    };
    for j in follower_idx {
        let dev = prof.f + j as f64 * h;
        let gain = prof.follower_payoff(dev) - prof.follower_now;
        if gain > g.follower.0 {
            g.follower = (gain, dev);
        }
        if early_exit.is_some_and(|e| gain > e) {
            return g;
        }
    }
    for i in leader_idx {
        let dev = i as f64 * h;
        let gain = prof.leader_payoff(dev) - prof.leader_now;
        if gain > g.leader.0 {
            g.leader = (gain, dev);
        }
        if early_exit.is_some_and(|e| gain > e) {
            return g;
        }
    }
    g
}

fn golden_max(lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> (f64, f64) {
    let r = (sqrt(5.0) - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    if fc >= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

fn grid_count(span: f64, h: f64) -> i64 {
    floor(span / h + 1e-9) as i64
}

fn run_verify(
    prof: &Profile,
    config: &OracleConfig,
    leader_idx: impl Iterator<Item = i64>,
    follower_idx: impl Iterator<Item = i64>,
    early_exit: bool,
) -> Result<VerificationResult, ModelError> {
    let h = config.grid_step;
    let eps = config.epsilon;
    let mut g = scan_gains(prof, leader_idx, follower_idx, h, early_exit.then_some(eps));
    if config.refinement == Refinement::GoldenSection {
        if g.leader.0.is_finite() {
            let c = g.leader.1;
            let (dev, v) = golden_max((c - h).max(0.0), c + h, |d| prof.leader_payoff(d));
            if v - prof.leader_now > g.leader.0 {
                g.leader = (v - prof.leader_now, dev);
            }
        }
        if g.follower.0.is_finite() {
            let c = g.follower.1;
            let (dev, v) = golden_max(c - h, c + h, |d| prof.follower_payoff(d));
            if v - prof.follower_now > g.follower.0 {
                g.follower = (v - prof.follower_now, dev);
            }
        }
    }
    if config.cross_check && g.follower.0.is_finite() {
        let p = prof.params;
        let mut f_vec = vec![prof.f; p.followers() as usize];
        f_vec[0] = g.follower.1;
        match spot_iterative(&f_vec, &prof.x_vec, p, config) {
            Ok(out) => {
                let closed = prof.follower_spot(g.follower.1).0;
                if abs(out.y[0] - closed) > 1e-6 * p.capacity().max(1.0) {
                    return Err(ModelError::SolverDisagreement {
                        closed_form: closed,
                        iterative: out.y[0],
                    });
                }
            }
            Err(ModelError::NotConverged { iterations, .. }) => {
                return Ok(VerificationResult {
                    verdict: OracleVerdict::Inconclusive { iterations },
                    leader_max_gain: g.leader.0,
                    follower_max_gain: g.follower.0,
                    leader_best_deviation: g.leader.1,
                    follower_best_deviation: g.follower.1,
                })
            }
            Err(e) => return Err(e),
        }
    }
    let verdict = if g.follower.0 > eps && g.follower.0 >= g.leader.0 {
        OracleVerdict::Fail {
            agent: Agent::Follower(0),
            deviation: g.follower.1,
            gain: g.follower.0,
        }
    } else if g.leader.0 > eps {
        OracleVerdict::Fail {
            agent: Agent::Leader(0),
            deviation: g.leader.1,
            gain: g.leader.0,
        }
    } else if g.follower.0 > eps {
        OracleVerdict::Fail {
            agent: Agent::Follower(0),
            deviation: g.follower.1,
            gain: g.follower.0,
        }
    } else {
        OracleVerdict::Pass
    };
    Ok(VerificationResult {
        verdict,
        leader_max_gain: g.leader.0.max(0.0),
        follower_max_gain: g.follower.0.max(0.0),
        leader_best_deviation: g.leader.1,
        follower_best_deviation: g.follower.1,
    })
}

/// Checks the symmetric profile `(f, x)` against unilateral deviations: forward
/// positions on `[f - radius, f + radius]` and leader productions on
/// `[0, max(2 alpha_x/(M+1), x + radius)]`, both with the configured step.
/// By symmetry one representative of each type suffices.
pub fn verify_forward_equilibrium(
    f: f64,
    x: f64,
    params: &MarketParams,
    config: &OracleConfig,
) -> Result<VerificationResult, ModelError> {
    config.validate()?;
    if !(x >= 0.0) || !f.is_finite() || !x.is_finite() {
        return Err(ModelError::Precondition(
            "x must be finite and non-negative, f finite",
        ));
    }
    let prof = Profile::new(f, x, params);
    let h = config.grid_step;
    let top = grid_count(prof.leader_top(config), h);
    let j = grid_count(config.deviation_radius, h);
    run_verify(&prof, config, 0..=top, (-j..=j).filter(|&v| v != 0), false)
}

/// Checks leader production `x` in the market without forward contracts:
/// followers hold `f = 0` and only react in the spot stage, so only leader
/// deviations are scanned.
pub fn verify_stackelberg_equilibrium(
    x: f64,
    params: &MarketParams,
    config: &OracleConfig,
) -> Result<VerificationResult, ModelError> {
    config.validate()?;
    if !(x >= 0.0) || !x.is_finite() {
        return Err(ModelError::Precondition(
            "x must be finite and non-negative",
        ));
    }
    let prof = Profile::new(0.0, x, params);
    let top = grid_count(prof.leader_top(config), config.grid_step);
    run_verify(&prof, config, 0..=top, core::iter::empty(), false)
}

/// A connected group of passing grid profiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub members: usize,
    pub f_min: f64,
    pub f_max: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub f_center: f64,
    pub x_center: f64,
}

impl Cluster {
    /// Distance from `(f, x)` to the cluster's bounding box in the max norm.
    pub fn distance_to(&self, f: f64, x: f64) -> f64 {
        let df = (self.f_min - f).max(f - self.f_max).max(0.0);
        let dx = (self.x_min - x).max(x - self.x_max).max(0.0);
        df.max(dx)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    /// Passing profiles in grid order.
    pub profiles: Vec<(f64, f64)>,
    pub clusters: Vec<Cluster>,
    pub epsilon: f64,
    pub grid_step: f64,
    /// Every exact symmetric equilibrium inside the box has a grid neighbour
    /// whose scanned gains are all below this band.
    pub certified_band: f64,
}

impl ScanResult {
    /// An empty result rules out exact symmetric equilibria in the box only
    /// when the scan tolerance covers the certified band.
    pub fn certifies_emptiness(&self) -> bool {
        self.profiles.is_empty() && self.epsilon >= self.certified_band
    }
}

/// Grid of symmetric profiles `f_lo + i h`, `x_lo + j h`. Evaluation of each
/// point is independent, so callers may distribute [`ScanGrid::passes`] freely
/// and hand the passing indices to [`ScanGrid::finish`].
pub struct ScanGrid<'a> {
    params: &'a MarketParams,
    config: OracleConfig,
    f_lo: f64,
    x_lo: f64,
    nf: usize,
    nx: usize,
    band: f64,
}

impl<'a> ScanGrid<'a> {
    pub fn new(
        params: &'a MarketParams,
        f_range: (f64, f64),
        x_range: (f64, f64),
        config: &OracleConfig,
    ) -> Result<Self, ModelError> {
        config.validate()?;
        for (lo, hi) in [f_range, x_range] {
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(ModelError::InvalidBounds { lo, hi });
            }
        }
        if x_range.0 < 0.0 {
            return Err(ModelError::Precondition("x range must be non-negative"));
        }
        let h = config.grid_step;
        let nf = grid_count(f_range.1 - f_range.0, h) as usize + 1;
        let nx = grid_count(x_range.1 - x_range.0, h) as usize + 1;
        let top =
            (2.0 * params.alpha_x() / (params.m() + 1.0)).max(x_range.1 + config.deviation_radius);
        let band = cell_band(params, x_range.1, 0.5 * config.grid_step, top);
        Ok(ScanGrid {
            params,
            config: *config,
            f_lo: f_range.0,
            x_lo: x_range.0,
            nf,
            nx,
            band,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nf, self.nx)
    }

    pub fn profile(&self, i: usize, j: usize) -> (f64, f64) {
        let h = self.config.grid_step;
        (self.f_lo + i as f64 * h, self.x_lo + j as f64 * h)
    }

    pub fn certified_band(&self) -> f64 {
        self.band
    }

    /// Full deviation check at grid point `(i, j)`, after a cheap screen on a
    /// subset of the same deviation grid.
    pub fn passes(&self, i: usize, j: usize) -> Result<bool, ModelError> {
        let (f, x) = self.profile(i, j);
        self.profile_passes(f, x, self.config.epsilon)
    }

    fn profile_passes(&self, f: f64, x: f64, eps: f64) -> Result<bool, ModelError> {
        let prof = Profile::new(f, x, self.params);
        let h = self.config.grid_step;
        let cfg = self.config.with_epsilon(eps);
        let top = grid_count(prof.leader_top(&cfg), h);
        let radius = grid_count(cfg.deviation_radius, h);
        let near = floor(x / h) as i64;
        let screen_cfg = OracleConfig {
            refinement: Refinement::None,
            cross_check: false,
            ..cfg
        };
        let leaders = (near - 1..=near + 2)
            .chain((0..=top).step_by(16))
            .filter(move |&v| (0..=top).contains(&v));
        let followers = [-2i64, -1, 1, 2]
            .into_iter()
            .filter(move |v| v.abs() <= radius);
        if !run_verify(&prof, &screen_cfg, leaders, followers, true)?.passed() {
            return Ok(false);
        }
        let full = run_verify(
            &prof,
            &cfg,
            0..=top,
            (-radius..=radius).filter(|&v| v != 0),
            true,
        )?;
        Ok(full.passed())
    }

    /// Groups passing indices into 8-connected clusters, ordered by their first
    /// member in grid order.
    pub fn finish(&self, passing: Vec<(usize, usize)>) -> ScanResult {
        let (passing, clusters) = cluster_lattice(passing, |i, j| self.profile(i, j));
        ScanResult {
            profiles: passing.iter().map(|&(i, j)| self.profile(i, j)).collect(),
            clusters,
            epsilon: self.config.epsilon,
            grid_step: self.config.grid_step,
            certified_band: self.band,
        }
    }
}

fn cluster_lattice(
    mut passing: Vec<(usize, usize)>,
    coord: impl Fn(usize, usize) -> (f64, f64),
) -> (Vec<(usize, usize)>, Vec<Cluster>) {
    passing.sort_unstable();
    passing.dedup();
    let set: BTreeSet<(usize, usize)> = passing.iter().copied().collect();
    let mut seen: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut clusters = Vec::new();
    for &start in &passing {
        if !seen.insert(start) {
            continue;
        }
        let mut stack = vec![start];
        let mut pts = Vec::new();
        while let Some((i, j)) = stack.pop() {
            pts.push(coord(i, j));
            for di in -1i64..=1 {
                for dj in -1i64..=1 {
                    let (ni, nj) = (i as i64 + di, j as i64 + dj);
                    if ni < 0 || nj < 0 {
                        continue;
                    }
                    let key = (ni as usize, nj as usize);
                    if set.contains(&key) && seen.insert(key) {
                        stack.push(key);
                    }
                }
            }
        }
        clusters.push(summarize(&pts));
    }
    (passing, clusters)
}

fn summarize(pts: &[(f64, f64)]) -> Cluster {
    let mut c = Cluster {
        members: pts.len(),
        f_min: f64::INFINITY,
        f_max: f64::NEG_INFINITY,
        x_min: f64::INFINITY,
        x_max: f64::NEG_INFINITY,
        f_center: 0.0,
        x_center: 0.0,
    };
    for &(f, x) in pts {
        c.f_min = c.f_min.min(f);
        c.f_max = c.f_max.max(f);
        c.x_min = c.x_min.min(x);
        c.x_max = c.x_max.max(x);
        c.f_center += f;
        c.x_center += x;
    }
    c.f_center /= pts.len() as f64;
    c.x_center /= pts.len() as f64;
    c
}

/// `half` times the largest sum of profit-Lipschitz constants in `f` and `x`
/// (deviation payoff plus current payoff) for leader productions up to `x_hi`
/// and leader deviations up to `top`.
/// An exact equilibrium within `half` (max norm) of a profile leaves every
/// deviation gain at that profile below this value.
fn cell_band(params: &MarketParams, x_hi: f64, half: f64, top: f64) -> f64 {
    let (m, n, k, beta) = (params.m(), params.n(), params.capacity(), params.beta());
    let (ax, ay) = (params.alpha_x(), params.alpha_y());
    let spread = |a: f64, q_max: f64| abs(a).max(abs(a - q_max));
    let a_f = spread(ay, m * x_hi + n * k);
    let follower = 2.0 * beta * (k + a_f) * (1.0 + m);
    let a_l = spread(ax, (m - 1.0) * x_hi + top + n * k);
    let leader = beta * (top * m + x_hi + a_l + m * x_hi);
    half * follower.max(leader)
}

/// Sequential scan of all grid profiles in the box.
pub fn scan_symmetric_profiles(
    params: &MarketParams,
    f_range: (f64, f64),
    x_range: (f64, f64),
    config: &OracleConfig,
) -> Result<ScanResult, ModelError> {
    let grid = ScanGrid::new(params, f_range, x_range, config)?;
    let (nf, nx) = grid.dims();
    let mut passing = Vec::new();
    for i in 0..nf {
        for j in 0..nx {
            if grid.passes(i, j)? {
                passing.push((i, j));
            }
        }
    }
    Ok(grid.finish(passing))
}

/// Best unilateral deviations at a symmetric profile over the whole strategy
/// space, found by maximizing each piece of the piecewise-quadratic payoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactGains {
    pub leader_gain: f64,
    pub leader_deviation: f64,
    pub follower_gain: f64,
    /// Spot production the deviating follower ends up with.
    pub follower_production: f64,
}

impl ExactGains {
    pub fn max_gain(&self) -> f64 {
        self.leader_gain.max(self.follower_gain)
    }
}

fn best_on_pieces(
    breaks: &[f64],
    peaks: &[f64],
    lo: f64,
    hi: f64,
    value: impl Fn(f64) -> f64,
) -> (f64, f64) {
    let mut best = (value(lo), lo);
    let mut consider = |v: f64| {
        if v.is_finite() && v >= lo && v <= hi {
            let p = value(v);
            if p > best.0 {
                best = (p, v);
            }
        }
    };
    if hi.is_finite() {
        consider(hi);
    }
    for &b in breaks {
        consider(b);
    }
    // each piece is a concave quadratic, so its peak clamped to the piece is its maximum
    let mut edges: Vec<f64> = breaks
        .iter()
        .copied()
        .filter(|b| *b > lo && *b < hi)
        .collect();
    edges.push(lo);
    edges.push(hi);
    edges.sort_by(f64::total_cmp);
    for w in edges.windows(2) {
        for &pk in peaks {
            consider(pk.clamp(w[0], w[1]));
        }
    }
    best
}

pub fn exact_gains(f: f64, x: f64, params: &MarketParams) -> Result<ExactGains, ModelError> {
    if !(x >= 0.0) || !f.is_finite() || !x.is_finite() {
        return Err(ModelError::Precondition(
            "x must be finite and non-negative, f finite",
        ));
    }
    let prof = Profile::new(f, x, params);
    let (m, n, k) = (params.m(), params.n(), params.capacity());
    let (ax, ay) = (params.alpha_x(), params.alpha_y());

    let s0 = (m - 1.0) * x;
    let b_cap = ay + f - s0 - (n + 1.0) * k;
    let b_zero = ay + f - s0;
    let leader_peaks = [
        (ax - s0 - n * k) / 2.0,
        (n + 1.0) / 2.0 * ((ax - s0) - n * (ay + f - s0) / (n + 1.0)),
        (ax - s0) / 2.0,
    ];
    let (lv, ld) = best_on_pieces(&[b_cap, b_zero], &leader_peaks, 0.0, f64::INFINITY, |d| {
        prof.leader_payoff(d)
    });

    let base = ay - m * x;
    let a_o = ay + f - m * x;
    let y_others = |y_l: f64| (a_o - y_l) / n;
    let follower_value = |y_l: f64| {
        let y_o = y_others(y_l).clamp(0.0, k);
        params.beta() * (base - y_l - (n - 1.0) * y_o) * y_l
    };
    let follower_peaks = [
        (base - (n - 1.0) * k) / 2.0,
        n * (base - (n - 1.0) * a_o / n) / 2.0,
        base / 2.0,
    ];
    let (fv, fy) = best_on_pieces(&[a_o - n * k, a_o], &follower_peaks, 0.0, k, follower_value);

    Ok(ExactGains {
        leader_gain: (lv - prof.leader_now).max(0.0),
        leader_deviation: ld,
        follower_gain: (fv - prof.follower_now).max(0.0),
        follower_production: fy,
    })
}

fn leader_fixed_gain(f: f64, x: f64, dev: f64, params: &MarketParams) -> f64 {
    let (m, n) = (params.m(), params.n());
    let others = (m - 1.0) * x;
    let y_dev = symmetric_production(f, others + dev, params);
    let y_now = symmetric_production(f, m * x, params);
    params.beta()
        * ((params.alpha_x() - others - dev - n * y_dev) * dev
            - (params.alpha_x() - m * x - n * y_now) * x)
}

fn follower_fixed_gain(f: f64, x: f64, y_l: f64, params: &MarketParams) -> f64 {
    let (m, n, k) = (params.m(), params.n(), params.capacity());
    let base = params.alpha_y() - m * x;
    let y_o = ((base + f - y_l) / n).clamp(0.0, k);
    let y_now = symmetric_production(f, m * x, params);
    params.beta() * ((base - y_l - (n - 1.0) * y_o) * y_l - (base - n * y_now) * y_now)
}

/// Minimum over `[-1, 1]^2` of the quadratic through the nine stencil values of `q`.
fn quadratic_box_min(q: impl Fn(f64, f64) -> f64) -> f64 {
    let a = q(0.0, 0.0);
    let (sp, sm, tp, tm) = (q(1.0, 0.0), q(-1.0, 0.0), q(0.0, 1.0), q(0.0, -1.0));
    let corners = [q(1.0, 1.0), q(1.0, -1.0), q(-1.0, 1.0), q(-1.0, -1.0)];
    let (b, c) = ((sp - sm) / 2.0, (tp - tm) / 2.0);
    let (d, g) = ((sp + sm) / 2.0 - a, (tp + tm) / 2.0 - a);
    let e = (corners[0] - corners[1] - corners[2] + corners[3]) / 4.0;
    let poly = |s: f64, t: f64| a + b * s + c * t + d * s * s + e * s * t + g * t * t;
    let mut best = corners.iter().copied().fold(f64::INFINITY, f64::min);
    for side in [-1.0, 1.0] {
        if g > 0.0 {
            best = best.min(poly(side, (-(c + e * side) / (2.0 * g)).clamp(-1.0, 1.0)));
        }
        if d > 0.0 {
            best = best.min(poly((-(b + e * side) / (2.0 * d)).clamp(-1.0, 1.0), side));
        }
    }
    let det = 4.0 * d * g - e * e;
    if d > 0.0 && det > 0.0 {
        let s = (e * c - 2.0 * g * b) / det;
        let t = (e * b - 2.0 * d * c) / det;
        if s.abs() <= 1.0 && t.abs() <= 1.0 {
            best = best.min(poly(s, t));
        }
    }
    best
}

/// Lower bound on one agent's best gain over the cell `(f0, f1, x0, x1)`,
/// using the deviation `dev` throughout. Returns `-inf` unless the cell lies in
/// one piece of the fixed-deviation gain, which is then quadratic in `(f, x)`.
fn fixed_deviation_floor(
    params: &MarketParams,
    cell: (f64, f64, f64, f64),
    agent: Agent,
    dev: f64,
) -> f64 {
    let (f0, f1, x0, x1) = cell;
    let (m, n, k) = (params.m(), params.n(), params.capacity());
    let ay = params.alpha_y();
    let inner = match agent {
        Agent::Leader(_) => (n + 1.0) * k,
        Agent::Follower(_) => n * k,
    };
    let corners = [(f0, x0), (f0, x1), (f1, x0), (f1, x1)];
    let one_piece = |arg: &dyn Fn(f64, f64) -> f64, top: f64| {
        [0.0, top].iter().all(|&t| {
            let above = corners.iter().filter(|&&(f, x)| arg(f, x) > t).count();
            let below = corners.iter().filter(|&&(f, x)| arg(f, x) < t).count();
            above == 0 || below == 0
        })
    };
    let shifted = |f: f64, x: f64| match agent {
        Agent::Leader(_) => ay + f - (m - 1.0) * x - dev,
        Agent::Follower(_) => ay + f - m * x - dev,
    };
    let now = |f: f64, x: f64| ay + f - m * x;
    if !one_piece(&shifted, inner) || !one_piece(&now, (n + 1.0) * k) {
        return f64::NEG_INFINITY;
    }
    let (fc, xc, hf, hx) = (
        (f0 + f1) / 2.0,
        (x0 + x1) / 2.0,
        (f1 - f0) / 2.0,
        (x1 - x0) / 2.0,
    );
    let gain = |s: f64, t: f64| {
        let (f, x) = (fc + s * hf, xc + t * hx);
        match agent {
            Agent::Leader(_) => leader_fixed_gain(f, x, dev, params),
            Agent::Follower(_) => follower_fixed_gain(f, x, dev, params),
        }
    };
    let scale = abs(params.alpha_x()) + abs(ay) + abs(fc) + hf + m * x1 + (n + 1.0) * k + abs(dev);
    quadratic_box_min(gain) - 64.0 * f64::EPSILON * params.beta() * scale * scale
}

/// Splits cells around a regular grid of symmetric profiles until each is ruled
/// out by [`exact_gains`] at its centre exceeding the cell's Lipschitz band, or
/// reaches side `step / 2^depth`.
pub struct Certifier<'a> {
    params: &'a MarketParams,
    f_lo: f64,
    x_lo: f64,
    nf: usize,
    nx: usize,
    step: f64,
    depth: u32,
}

impl<'a> Certifier<'a> {
    pub fn new(
        params: &'a MarketParams,
        f_range: (f64, f64),
        x_range: (f64, f64),
        step: f64,
        depth: u32,
    ) -> Result<Self, ModelError> {
        if !(step > 0.0) || !step.is_finite() {
            return Err(ModelError::InvalidParameter {
                name: "grid_step",
                reason: "must be positive and finite",
            });
        }
        if depth > 30 {
            return Err(ModelError::InvalidParameter {
                name: "depth",
                reason: "at most 30",
            });
        }
        for (lo, hi) in [f_range, x_range] {
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(ModelError::InvalidBounds { lo, hi });
            }
        }
        if x_range.0 < 0.0 {
            return Err(ModelError::Precondition("x range must be non-negative"));
        }
        // a box starting within half a step of 0 is widened to start at 0
        let x_lo = if x_range.0 < 0.5 * step {
            0.0
        } else {
            x_range.0
        };
        Ok(Certifier {
            params,
            f_lo: f_range.0,
            x_lo,
            nf: grid_count(f_range.1 - f_range.0, step) as usize + 1,
            nx: grid_count(x_range.1 - x_lo, step) as usize + 1,
            step,
            depth,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nf, self.nx)
    }

    fn fine(&self) -> f64 {
        self.step / (1u64 << self.depth) as f64
    }

    fn corner(&self, a: usize, b: usize) -> (f64, f64) {
        let fine = self.fine();
        let h = 0.5 * self.step;
        // leader productions are never negative, so cells start at x_lo when it is 0
        let x0 = if self.x_lo > 0.0 { self.x_lo - h } else { 0.0 };
        (self.f_lo - h + a as f64 * fine, x0 + b as f64 * fine)
    }

    fn piece_gap(&self, a: usize, b: usize, level: u32) -> Result<f64, ModelError> {
        let half = 0.5 * (1usize << level) as f64 * self.fine();
        let (f0, x0) = self.corner(a, b);
        let (f, x) = (f0 + half, x0 + half);
        let top = self.params.alpha_x().max(0.0);
        let band = cell_band(self.params, x + half, half, top);
        let g = exact_gains(f, x, self.params)?;
        let mut gap = g.max_gain() - band;
        if gap <= 0.0 {
            let cell = (f0, f0 + 2.0 * half, x0, x0 + 2.0 * half);
            gap = gap
                .max(fixed_deviation_floor(
                    self.params,
                    cell,
                    Agent::Leader(0),
                    g.leader_deviation,
                ))
                .max(fixed_deviation_floor(
                    self.params,
                    cell,
                    Agent::Follower(0),
                    g.follower_production,
                ));
        }
        Ok(gap)
    }

    /// Whether some piece of the base cell around grid point `(i, j)` survives.
    pub fn resolve_cell(&self, i: usize, j: usize) -> Result<bool, ModelError> {
        Ok(self.resolve_within(i, j, usize::MAX)? == CellStatus::Survives)
    }

    /// Splits the base cell `(i, j)` lowest gap first, evaluating at most
    /// `budget` pieces. Stops at the first surviving piece of the finest size.
    pub fn resolve_within(
        &self,
        i: usize,
        j: usize,
        budget: usize,
    ) -> Result<CellStatus, ModelError> {
        let d = self.depth;
        let (a, b) = (i << d, j << d);
        if self.piece_gap(a, b, d)? > 0.0 {
            return Ok(CellStatus::Excluded);
        }
        let mut stack = vec![((a, b), d)];
        let mut spent = 1usize;
        while let Some(((a, b), level)) = stack.pop() {
            if level == 0 {
                return Ok(CellStatus::Survives);
            }
            if spent >= budget {
                return Ok(CellStatus::Undecided);
            }
            let w = 1usize << (level - 1);
            let mut kids = Vec::with_capacity(4);
            for (da, db) in [(0, 0), (w, 0), (0, w), (w, w)] {
                let gap = self.piece_gap(a + da, b + db, level - 1)?;
                if gap <= 0.0 {
                    kids.push((gap, (a + da, b + db)));
                }
            }
            spent += 4;
            kids.sort_by(|p, q| q.0.total_cmp(&p.0));
            stack.extend(kids.into_iter().map(|(_, c)| (c, level - 1)));
        }
        Ok(CellStatus::Excluded)
    }

    /// Clusters the surviving base cells (8-connected) in grid order.
    pub fn finish(&self, survivors: Vec<(usize, usize)>) -> CertifiedScan {
        let h = self.step;
        let centre = |i: usize, j: usize| {
            let (f, x) = self.corner(i << self.depth, j << self.depth);
            (f + 0.5 * h, x + 0.5 * h)
        };
        let (cells, mut clusters) = cluster_lattice(survivors, centre);
        for c in &mut clusters {
            c.f_min -= 0.5 * h;
            c.f_max += 0.5 * h;
            c.x_min -= 0.5 * h;
            c.x_max += 0.5 * h;
        }
        CertifiedScan {
            survivors: cells.iter().map(|&(i, j)| centre(i, j)).collect(),
            clusters,
            grid_step: h,
            cell_side: self.fine(),
        }
    }
}

/// Fate of one base cell under [`Certifier::resolve_within`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellStatus {
    Excluded,
    Survives,
    Undecided,
}

/// Outcome of a scan whose cells were split until ruled out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertifiedScan {
    /// Centres of the base cells that could not be ruled out, in grid order.
    pub survivors: Vec<(f64, f64)>,
    /// Connected groups of surviving base cells; boxes cover the whole cells.
    pub clusters: Vec<Cluster>,
    pub grid_step: f64,
    /// Side of the smallest pieces examined.
    pub cell_side: f64,
}

impl CertifiedScan {
    /// No exact symmetric equilibrium lies in the scanned box.
    pub fn certifies_emptiness(&self) -> bool {
        self.survivors.is_empty()
    }
}

/// Pieces examined per base cell before a neighbour of a surviving cell is
/// kept without further splitting.
pub const NEIGHBOUR_BUDGET: usize = 64;

/// Depth increment between certification stages.
pub const DEPTH_STAGE: u32 = 4;

fn certify_stage(
    cert: &Certifier<'_>,
    candidates: &[(usize, usize)],
) -> Result<Vec<(usize, usize)>, ModelError> {
    let mut status = Vec::with_capacity(candidates.len());
    for &(i, j) in candidates {
        status.push(cert.resolve_within(i, j, NEIGHBOUR_BUDGET)?);
    }
    let survives = |i: usize, j: usize| {
        candidates
            .binary_search(&(i, j))
            .is_ok_and(|at| status[at] == CellStatus::Survives)
    };
    let touches = |i: usize, j: usize| {
        (i.saturating_sub(1)..=i + 1)
            .any(|p| (j.saturating_sub(1)..=j + 1).any(|q| (p, q) != (i, j) && survives(p, q)))
    };
    let mut kept = Vec::new();
    for (&(i, j), st) in candidates.iter().zip(&status) {
        let keep = match st {
            CellStatus::Excluded => false,
            CellStatus::Survives => true,
            CellStatus::Undecided => touches(i, j) || cert.resolve_cell(i, j)?,
        };
        if keep {
            kept.push((i, j));
        }
    }
    Ok(kept)
}

/// Certifies the box in stages of increasing depth up to `max_depth`; each
/// stage splits only the base cells the previous one kept. Every exact
/// symmetric equilibrium in the box lies in a surviving cell.
///
/// Base cells touching a fully resolved survivor are kept once they exceed
/// [`NEIGHBOUR_BUDGET`], so clusters may be one cell wider than necessary.
pub fn certify_symmetric_profiles(
    params: &MarketParams,
    f_range: (f64, f64),
    x_range: (f64, f64),
    step: f64,
    max_depth: u32,
) -> Result<CertifiedScan, ModelError> {
    certify_until(params, f_range, x_range, step, max_depth, |_| false)
}

/// Like [`certify_symmetric_profiles`], but returns after the first stage
/// whose outcome satisfies `done`.
pub fn certify_until(
    params: &MarketParams,
    f_range: (f64, f64),
    x_range: (f64, f64),
    step: f64,
    max_depth: u32,
    done: impl Fn(&CertifiedScan) -> bool,
) -> Result<CertifiedScan, ModelError> {
    let mut cert = Certifier::new(params, f_range, x_range, step, max_depth.min(DEPTH_STAGE))?;
    let (nf, nx) = cert.dims();
    let mut cells: Vec<(usize, usize)> =
        (0..nf).flat_map(|i| (0..nx).map(move |j| (i, j))).collect();
    loop {
        cells = certify_stage(&cert, &cells)?;
        let scan = cert.finish(cells.clone());
        if cells.is_empty() || cert.depth >= max_depth || done(&scan) {
            return Ok(scan);
        }
        let depth = (cert.depth + DEPTH_STAGE).min(max_depth);
        cert = Certifier::new(params, f_range, x_range, step, depth)?;
    }
}
