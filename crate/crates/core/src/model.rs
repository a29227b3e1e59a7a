//! Market primitives and profit functions.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::math::abs;
use crate::spot::SpotSolver;

/// Default relative tolerance used for every region and threshold test.
pub const DEFAULT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter {
        name: &'static str,
        reason: &'static str,
    },
    #[error("invalid clamp bounds: lower {lo} exceeds upper {hi}")]
    InvalidBounds { lo: f64, hi: f64 },
    #[error("square root of negative value {value} in {expr}")]
    Domain { expr: &'static str, value: f64 },
    #[error("precondition violated: {0}")]
    Precondition(&'static str),
    #[error("expected {expected} entries, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error(
        "forward positions are neither symmetric nor a single deviation; use an iterative solver"
    )]
    UnsupportedSpotPattern,
    #[error(
        "spot iteration did not converge after {iterations} iterations (last change {residual})"
    )]
    NotConverged {
        iterations: usize,
        residual: f64,
        last: Vec<f64>,
    },
    #[error("closed-form and iterative spot solutions disagree: {closed_form} vs {iterative}")]
    SolverDisagreement { closed_form: f64, iterative: f64 },
}

/// Relative tolerance `tau` for boundary classification.
///
/// Two values compare equal when they differ by at most `tau * max(1, |a|, |b|)`.
/// Closed inequalities accept values within the band; strict ones reject them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerance(pub f64);

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance(DEFAULT_TOLERANCE)
    }
}

impl Tolerance {
    #[inline]
    pub fn band(self, a: f64, b: f64) -> f64 {
        self.0 * abs(a).max(abs(b)).max(1.0)
    }

    /// `a <= b` up to the band.
    #[inline]
    pub fn le(self, a: f64, b: f64) -> bool {
        a <= b + self.band(a, b)
    }

    /// `a < b` by more than the band.
    #[inline]
    pub fn lt(self, a: f64, b: f64) -> bool {
        a < b - self.band(a, b)
    }

    #[inline]
    pub fn ge(self, a: f64, b: f64) -> bool {
        self.le(b, a)
    }

    #[inline]
    pub fn gt(self, a: f64, b: f64) -> bool {
        self.lt(b, a)
    }

    #[inline]
    pub fn eq(self, a: f64, b: f64) -> bool {
        abs(a - b) <= self.band(a, b)
    }
}

/// Market primitives: linear demand `P(q) = alpha - beta*q`, leader cost `C`,
/// follower cost `c >= C`, `M` leaders, `N >= 2` followers with capacity `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    alpha: f64,
    beta: f64,
    #[serde(rename = "C")]
    leader_cost: f64,
    #[serde(rename = "c")]
    follower_cost: f64,
    #[serde(rename = "M")]
    leaders: u32,
    #[serde(rename = "N")]
    followers: u32,
    #[serde(rename = "k")]
    capacity: f64,
    #[serde(skip, default)]
    tolerance: Tolerance,
}

impl MarketParams {
    pub fn new(
        alpha: f64,
        beta: f64,
        leader_cost: f64,
        follower_cost: f64,
        leaders: u32,
        followers: u32,
        capacity: f64,
    ) -> Result<Self, ModelError> {
        let check = |ok: bool, name, reason| {
            if ok {
                Ok(())
            } else {
                Err(ModelError::InvalidParameter { name, reason })
            }
        };
        for (v, name) in [
            (alpha, "alpha"),
            (beta, "beta"),
            (leader_cost, "C"),
            (follower_cost, "c"),
            (capacity, "k"),
        ] {
            check(v.is_finite(), name, "must be finite")?;
        }
        check(beta > 0.0, "beta", "must be positive")?;
        check(leader_cost > 0.0, "C", "must be positive")?;
        check(follower_cost >= leader_cost, "c", "must be at least C")?;
        check(capacity > 0.0, "k", "must be positive")?;
        check(leaders >= 1, "M", "at least one leader is required")?;
        check(followers >= 2, "N", "at least two followers are required")?;
        check(
            alpha >= leader_cost,
            "alpha",
            "normalized leader demand (alpha - C)/beta must be nonnegative",
        )?;
        Ok(MarketParams {
            alpha,
            beta,
            leader_cost,
            follower_cost,
            leaders,
            followers,
            capacity,
            tolerance: Tolerance::default(),
        })
    }

    /// Builds parameters directly from normalized quantities with `beta = 1`.
    ///
    /// `alpha_x` is the normalized leader demand and `cost_gap` is `(c - C)/beta`.
    /// The leader cost is pinned to 1.
    pub fn normalized(
        alpha_x: f64,
        cost_gap: f64,
        leaders: u32,
        followers: u32,
        capacity: f64,
    ) -> Result<Self, ModelError> {
        let leader_cost = 1.0;
        Self::new(
            alpha_x + leader_cost,
            1.0,
            leader_cost,
            leader_cost + cost_gap,
            leaders,
            followers,
            capacity,
        )
    }

    pub fn with_tolerance(mut self, tolerance: Tolerance) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn leader_cost(&self) -> f64 {
        self.leader_cost
    }
    pub fn follower_cost(&self) -> f64 {
        self.follower_cost
    }
    pub fn leaders(&self) -> u32 {
        self.leaders
    }
    pub fn followers(&self) -> u32 {
        self.followers
    }
    pub fn capacity(&self) -> f64 {
        self.capacity
    }
    pub fn tolerance(&self) -> Tolerance {
        self.tolerance
    }

    /// `(alpha - C)/beta`.
    pub fn alpha_x(&self) -> f64 {
        (self.alpha - self.leader_cost) / self.beta
    }

    /// `(alpha - c)/beta`.
    pub fn alpha_y(&self) -> f64 {
        (self.alpha - self.follower_cost) / self.beta
    }

    /// `(c - C)/beta`.
    pub fn cost_gap(&self) -> f64 {
        (self.follower_cost - self.leader_cost) / self.beta
    }

    #[inline]
    pub(crate) fn m(&self) -> f64 {
        self.leaders as f64
    }

    #[inline]
    pub(crate) fn n(&self) -> f64 {
        self.followers as f64
    }

    /// Natural quantity scale used for sampling and grid ranges.
    pub fn quantity_scale(&self) -> f64 {
        self.alpha_x().max(self.capacity)
    }

    /// Natural money scale: `beta * max(alpha_x, k)^2`.
    pub fn profit_scale(&self) -> f64 {
        let q = self.quantity_scale();
        self.beta * q * q
    }
}

/// `[z]_a^b`: `a` when `z <= a`, `b` when `z >= b`, `z` otherwise.
pub fn clamp(z: f64, a: f64, b: f64) -> Result<f64, ModelError> {
    if a > b {
        return Err(ModelError::InvalidBounds { lo: a, hi: b });
    }
    Ok(clamp_unchecked(z, a, b))
}

#[inline]
pub(crate) fn clamp_unchecked(z: f64, a: f64, b: f64) -> f64 {
    if z <= a {
        a
    } else if z >= b {
        b
    } else {
        z
    }
}

/// Inverse demand `alpha - beta * total_q`. Negative prices are allowed.
pub fn price(total_q: f64, params: &MarketParams) -> f64 {
    params.alpha - params.beta * total_q
}

/// Follower `j`'s spot-stage profit `P(sum x + sum y) (y_j - f_j) - c y_j`.
pub fn follower_spot_profit(
    j: usize,
    y: &[f64],
    f: &[f64],
    x: &[f64],
    params: &MarketParams,
) -> Result<f64, ModelError> {
    check_len(y.len(), params.followers as usize)?;
    check_len(f.len(), params.followers as usize)?;
    check_len(x.len(), params.leaders as usize)?;
    let total: f64 = x.iter().sum::<f64>() + y.iter().sum::<f64>();
    let p = price(total, params);
    Ok(p * (y[j] - f[j]) - params.follower_cost * y[j])
}

/// Follower `j`'s two-stage profit `(P - c) y_j(f, x)` at the spot equilibrium.
pub fn follower_total_profit<S: SpotSolver + ?Sized>(
    j: usize,
    f: &[f64],
    x: &[f64],
    params: &MarketParams,
    solver: &S,
) -> Result<f64, ModelError> {
    let spot = solver.solve(f, x, params)?;
    Ok((spot.price - params.follower_cost) * spot.y[j])
}

/// Leader `i`'s profit `(P - C) x_i` at the spot equilibrium induced by `(f, x)`.
pub fn leader_profit<S: SpotSolver + ?Sized>(
    i: usize,
    x: &[f64],
    f: &[f64],
    params: &MarketParams,
    solver: &S,
) -> Result<f64, ModelError> {
    let spot = solver.solve(f, x, params)?;
    Ok((spot.price - params.leader_cost) * x[i])
}

fn check_len(got: usize, expected: usize) -> Result<(), ModelError> {
    if got == expected {
        Ok(())
    } else {
        Err(ModelError::LengthMismatch { expected, got })
    }
}

/// Follower production class attached to reactions and equilibria.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum ProductionLabel {
    Zero,
    Interior(f64),
    AtCapacity,
}

impl ProductionLabel {
    /// Classifies a follower production `y` in `[0, k]`.
    pub fn classify(y: f64, params: &MarketParams) -> Self {
        let tol = params.tolerance;
        let k = params.capacity;
        if tol.le(y, 0.0) {
            ProductionLabel::Zero
        } else if tol.ge(y, k) {
            ProductionLabel::AtCapacity
        } else {
            ProductionLabel::Interior(y)
        }
    }

    /// The production value this label stands for.
    pub fn production(&self, capacity: f64) -> f64 {
        match *self {
            ProductionLabel::Zero => 0.0,
            ProductionLabel::Interior(y) => y,
            ProductionLabel::AtCapacity => capacity,
        }
    }
}

/// A strategy profile: symmetric follower position `f` and leader production
/// `x`, optionally overridden by explicit per-agent vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyProfile {
    pub f: f64,
    pub x: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_vec: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_vec: Option<Vec<f64>>,
}

impl StrategyProfile {
    pub fn symmetric(f: f64, x: f64) -> Result<Self, ModelError> {
        if !(x >= 0.0) {
            return Err(ModelError::InvalidParameter {
                name: "x",
                reason: "leader production must be nonnegative",
            });
        }
        Ok(StrategyProfile {
            f,
            x,
            f_vec: None,
            x_vec: None,
        })
    }

    pub fn with_vectors(
        f_vec: Vec<f64>,
        x_vec: Vec<f64>,
        params: &MarketParams,
    ) -> Result<Self, ModelError> {
        check_len(f_vec.len(), params.followers as usize)?;
        check_len(x_vec.len(), params.leaders as usize)?;
        if x_vec.iter().any(|&v| !(v >= 0.0)) {
            return Err(ModelError::InvalidParameter {
                name: "x_vec",
                reason: "leader productions must be nonnegative",
            });
        }
        let f = f_vec.iter().sum::<f64>() / f_vec.len() as f64;
        let x = x_vec.iter().sum::<f64>() / x_vec.len() as f64;
        Ok(StrategyProfile {
            f,
            x,
            f_vec: Some(f_vec),
            x_vec: Some(x_vec),
        })
    }

    pub fn follower_positions(&self, params: &MarketParams) -> Vec<f64> {
        match &self.f_vec {
            Some(v) => v.clone(),
            None => vec![self.f; params.followers as usize],
        }
    }

    pub fn leader_productions(&self, params: &MarketParams) -> Vec<f64> {
        match &self.x_vec {
            Some(v) => v.clone(),
            None => vec![self.x; params.leaders as usize],
        }
    }
}
