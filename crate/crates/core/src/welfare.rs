//! Social welfare and the forward-vs-Stackelberg efficiency comparison.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::equilibria::{forward_equilibria, stackelberg_equilibria, EquilibriumSet};
use crate::math::sqrt;
use crate::model::{MarketParams, ModelError};
use crate::spot::symmetric_production;

/// Gross consumer surplus minus production cost at symmetric productions `y` and `x`:
/// `beta (alpha_x Q - N dC y - Q^2 / 2)` with `Q = Mx + Ny`.
pub fn social_welfare(y: f64, x: f64, params: &MarketParams) -> f64 {
    let q = params.m() * x + params.n() * y;
    params.beta() * (params.alpha_x() * q - params.n() * params.cost_gap() * y - 0.5 * q * q)
}

/// One symmetric outcome of a market.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketPoint {
    pub f: f64,
    pub x: f64,
    pub y: f64,
    pub total: f64,
    pub welfare: f64,
}

impl MarketPoint {
    fn new(f: f64, x: f64, params: &MarketParams) -> Self {
        let y = symmetric_production(f, params.m() * x, params);
        MarketPoint {
            f,
            x,
            y,
            total: params.m() * x + params.n() * y,
            welfare: social_welfare(y, x, params),
        }
    }
}

/// Closed-form worst-case ratios at the top of the inefficiency window and their limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioBounds {
    pub production: f64,
    pub welfare: f64,
    /// `(production, welfare)` as the number of followers grows.
    pub limits_n_inf: (f64, f64),
    /// `(production, welfare)` as the number of leaders grows.
    pub limits_m_inf: (f64, f64),
}

pub fn ratio_bounds(leaders: u32, followers: u32) -> Result<RatioBounds, ModelError> {
    if leaders < 1 {
        return Err(ModelError::InvalidParameter {
            name: "M",
            reason: "must be at least 1",
        });
    }
    if followers < 2 {
        return Err(ModelError::InvalidParameter {
            name: "N",
            reason: "must be at least 2",
        });
    }
    let (m, n) = (leaders as f64, followers as f64);
    let s = sqrt(n + 1.0);
    let a = n * m + m + n;
    let production = a * (m + 1.0) / (m * (m + 1.0) * (n + 1.0) + 2.0 * (n + 1.0 - s));
    let welfare = (m + 1.0) * (m + 1.0) * a * (a + 2.0)
        / ((n + 1.0) * ((m * m + m + 2.0) * s - 2.0) * ((m * m + 3.0 * m) * s + 2.0));
    let q = m * m + m + 2.0;
    let mp = (m + 1.0) * (m + 1.0);
    Ok(RatioBounds {
        production,
        welfare,
        limits_n_inf: (mp / q, mp * mp / (q * (m * m + 3.0 * m))),
        limits_m_inf: (1.0, 1.0),
    })
}

/// `[(M+N+1)k, (M+1) s N k / (2(s-1))]` with `s = sqrt(N+1)`.
pub fn inefficiency_window(params: &MarketParams) -> (f64, f64) {
    let (n, m, k) = (params.n(), params.m(), params.capacity());
    let s = sqrt(n + 1.0);
    ((m + n + 1.0) * k, (m + 1.0) * s * n * k / (2.0 * (s - 1.0)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub window: (f64, f64),
    /// False when `alpha_x` lies outside the window or the cost gap is positive;
    /// the ratios are then reported without any inefficiency claim.
    pub in_window: bool,
    /// Forward equilibrium with the smallest total production.
    pub forward: MarketPoint,
    /// Stackelberg equilibrium with the largest total production.
    pub stackelberg: MarketPoint,
    /// Forward equilibrium with the smallest welfare.
    pub forward_welfare_min: MarketPoint,
    /// Stackelberg equilibrium with the largest welfare.
    pub stackelberg_welfare_max: MarketPoint,
    pub production_ratio: f64,
    pub welfare_ratio: f64,
    /// Present only for a zero cost gap.
    pub bounds: Option<RatioBounds>,
}

impl ComparisonReport {
    /// Forward market strictly worse on both counts.
    pub fn forward_inefficient(&self) -> bool {
        self.production_ratio > 1.0 && self.welfare_ratio > 1.0
    }
}

fn candidate_points(set: &EquilibriumSet, params: &MarketParams) -> Vec<MarketPoint> {
    let mut out = Vec::new();
    for r in &set.regions {
        // totals are monotone in f on every region, so the extreme f values suffice
        let mut fs = Vec::new();
        match (r.f_set.inf(), r.f_set.sup()) {
            (Some(lo), Some(hi)) if lo.is_finite() && hi.is_finite() => {
                fs.push(lo);
                fs.push(hi);
            }
            (Some(lo), _) if lo.is_finite() => fs.push(lo),
            (_, Some(hi)) if hi.is_finite() => fs.push(hi),
            _ => fs.push(0.0),
        }
        for f in fs {
            for x in r.x.at(f) {
                out.push(MarketPoint::new(f, x, params));
            }
        }
    }
    out
}

fn pick(points: &[MarketPoint], key: impl Fn(&MarketPoint) -> f64, largest: bool) -> MarketPoint {
    let mut best = points[0];
    for p in &points[1..] {
        let better = if largest {
            key(p) > key(&best)
        } else {
            key(p) < key(&best)
        };
        if better {
            best = *p;
        }
    }
    best
}

/// Compares the least productive forward equilibrium with the most productive
/// Stackelberg equilibrium. Fails when either market has no symmetric equilibrium.
pub fn compare_markets(params: &MarketParams) -> Result<ComparisonReport, ModelError> {
    let forward = candidate_points(&forward_equilibria(params)?, params);
    let stack = candidate_points(&stackelberg_equilibria(params)?, params);
    if forward.is_empty() {
        return Err(ModelError::Precondition(
            "forward market has no symmetric equilibrium",
        ));
    }
    if stack.is_empty() {
        return Err(ModelError::Precondition(
            "Stackelberg market has no equilibrium",
        ));
    }
    let fwd = pick(&forward, |p| p.total, false);
    let stk = pick(&stack, |p| p.total, true);
    let fwd_w = pick(&forward, |p| p.welfare, false);
    let stk_w = pick(&stack, |p| p.welfare, true);
    let window = inefficiency_window(params);
    let tol = params.tolerance();
    let zero_gap = params.cost_gap() == 0.0;
    let in_window =
        zero_gap && tol.le(window.0, params.alpha_x()) && tol.le(params.alpha_x(), window.1);
    let bounds = if zero_gap {
        Some(ratio_bounds(params.leaders(), params.followers())?)
    } else {
        None
    };
    Ok(ComparisonReport {
        window,
        in_window,
        forward: fwd,
        stackelberg: stk,
        forward_welfare_min: fwd_w,
        stackelberg_welfare_max: stk_w,
        production_ratio: stk.total / fwd.total,
        welfare_ratio: stk_w.welfare / fwd_w.welfare,
        bounds,
    })
}
