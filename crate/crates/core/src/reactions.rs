//! Symmetric reaction correspondences.
//!
//! `F(x)` collects the common forward positions from which no follower wants
//! to deviate when every leader produces `x`. `X(f)` collects the common
//! leader productions that are mutual best responses when every follower
//! holds `f`. Both are returned as exact [`RealSet`]s with one production
//! label per component.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::math::sqrt;
use crate::model::{MarketParams, ModelError, ProductionLabel};
use crate::set::RealSet;
use crate::spot::symmetric_production;

pub type Thresholds = BTreeMap<String, f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReactionResult {
    pub set: RealSet,
    /// Follower production class, one per component of `set` in increasing order.
    pub labels: Vec<ProductionLabel>,
    pub thresholds: Thresholds,
}

/// `(N^2+1)(N-1)/(N^2-2 sqrt N+1) * k`: the largest `xi` with an interior follower reaction.
pub fn xi_interior_bound(params: &MarketParams) -> f64 {
    let n = params.n();
    (n * n + 1.0) * (n - 1.0) / (n * n - 2.0 * sqrt(n) + 1.0) * params.capacity()
}

/// `(N+1)k`: the smallest `xi` with a capacity follower reaction.
pub fn xi_capacity_bound(params: &MarketParams) -> f64 {
    (params.n() + 1.0) * params.capacity()
}

/// Symmetric follower reactions `F(x)` to a common leader production `x`.
pub fn follower_reaction(x: f64, params: &MarketParams) -> Result<ReactionResult, ModelError> {
    if !(x >= 0.0) {
        return Err(ModelError::InvalidParameter {
            name: "x",
            reason: "leader production must be nonnegative",
        });
    }
    let tol = params.tolerance();
    let n = params.n();
    let xi = params.alpha_y() - params.m() * x;
    let upper = xi_interior_bound(params);
    let cap = xi_capacity_bound(params);

    let mut thresholds = Thresholds::new();
    thresholds.insert("xi".to_string(), xi);
    thresholds.insert("xi_interior_upper".to_string(), upper);
    thresholds.insert("xi_capacity_lower".to_string(), cap);

    let (set, labels) = if tol.lt(xi, 0.0) {
        (
            RealSet::half_line_left(-xi, true),
            alloc::vec![ProductionLabel::Zero],
        )
    } else if tol.le(xi, upper) {
        let xi = xi.max(0.0);
        let f = (n - 1.0) * xi / (n * n + 1.0);
        let y = n * xi / (n * n + 1.0);
        (
            RealSet::point(f),
            alloc::vec![ProductionLabel::classify(y, params)],
        )
    } else if tol.ge(xi, cap) {
        (
            RealSet::half_line_right(-xi + cap, true),
            alloc::vec![ProductionLabel::AtCapacity],
        )
    } else {
        (RealSet::Empty, Vec::new())
    };
    Ok(ReactionResult {
        set,
        labels,
        thresholds,
    })
}

fn sqrt_snapped(
    radicand: f64,
    expr: &'static str,
    params: &MarketParams,
) -> Result<f64, ModelError> {
    if radicand >= 0.0 {
        Ok(sqrt(radicand))
    } else if radicand >= -params.tolerance().0 {
        Ok(0.0)
    } else {
        Err(ModelError::Domain {
            expr,
            value: radicand,
        })
    }
}

/// `k - ((alpha_x - Nk)/N) * 2(s-1)/(M+1)` with `s = sqrt(N+1)`.
pub fn eta1(params: &MarketParams) -> f64 {
    let (n, m, k) = (params.n(), params.m(), params.capacity());
    let s = sqrt(n + 1.0);
    k - (params.alpha_x() - n * k) / n * (2.0 * (s - 1.0) / (m + 1.0))
}

/// `-(a+Nk)/2 * (1 - sqrt(1 - (a/(a+Nk))^2))` with `a = 2(alpha_x - Nk)/(M+1)`.
pub fn eta2(params: &MarketParams) -> Result<f64, ModelError> {
    let (n, m, k) = (params.n(), params.m(), params.capacity());
    let a = 2.0 * (params.alpha_x() - n * k) / (m + 1.0);
    let d = a + n * k;
    let r = a / d;
    let root = sqrt_snapped(1.0 - r * r, "eta2", params)?;
    Ok(-0.5 * d * (1.0 - root))
}

/// `k - ((alpha_x - Nk)/N) * 2(s-1)/(2 + (M-1)s)` with `s = sqrt(N+1)`.
pub fn eta3(params: &MarketParams) -> f64 {
    let (n, m, k) = (params.n(), params.m(), params.capacity());
    let s = sqrt(n + 1.0);
    k - (params.alpha_x() - n * k) / n * (2.0 * (s - 1.0) / (2.0 + (m - 1.0) * s))
}

/// `-(a+b)/2 * (1 - sqrt(1 - (a/(a+b))^2))` with `a = 2(alpha_x - NMk)/(M+1)`
/// and `b = (2M/(M+1))^2 Nk`.
pub fn eta4(params: &MarketParams) -> Result<f64, ModelError> {
    let (n, m, k) = (params.n(), params.m(), params.capacity());
    let a = 2.0 * (params.alpha_x() - n * m * k) / (m + 1.0);
    let b = (2.0 * m / (m + 1.0)) * (2.0 * m / (m + 1.0)) * n * k;
    let d = a + b;
    let r = a / d;
    let root = sqrt_snapped(1.0 - r * r, "eta4", params)?;
    Ok(-0.5 * d * (1.0 - root))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaThresholds {
    pub eta1: f64,
    pub eta2: f64,
    pub eta3: f64,
    pub eta4: f64,
}

/// All four leader-reaction thresholds; fails when either radicand is negative.
pub fn eta_thresholds(params: &MarketParams) -> Result<EtaThresholds, ModelError> {
    Ok(EtaThresholds {
        eta1: eta1(params),
        eta2: eta2(params)?,
        eta3: eta3(params),
        eta4: eta4(params)?,
    })
}

/// `1 + (M+1)s/(s-1)^2` with `s = sqrt(N+1)`; above this multiple of `Nk` the
/// capacity branch starts at `eta2` instead of `eta1`.
pub fn high_demand_factor(params: &MarketParams) -> f64 {
    let s = sqrt(params.n() + 1.0);
    1.0 + (params.m() + 1.0) * s / ((s - 1.0) * (s - 1.0))
}

/// Upper end of the drive-out window in `g = f - dC`: `min(-alpha_x/(NM+M+1), eta4)`.
///
/// `eta4` only takes part once `alpha_x > (NM+M+1)k`; below that the
/// capacity-constrained deviation it guards against cannot occur.
pub fn driveout_upper(params: &MarketParams) -> f64 {
    let nm1 = params.n() * params.m() + params.m() + 1.0;
    let base = -params.alpha_x() / nm1;
    if !params
        .tolerance()
        .gt(params.alpha_x(), nm1 * params.capacity())
    {
        return base;
    }
    match eta4(params) {
        Ok(e) => base.min(e),
        Err(_) => base,
    }
}

/// Lower end in `g = f - dC` of the capacity branch of `X(f)`.
pub fn capacity_branch_lower(params: &MarketParams) -> Result<f64, ModelError> {
    let tol = params.tolerance();
    let nk = params.n() * params.capacity();
    let ax = params.alpha_x();
    if tol.lt(ax, nk) {
        Ok(params.capacity() - (ax - nk))
    } else if tol.ge(ax, high_demand_factor(params) * nk) {
        eta2(params)
    } else {
        Ok(eta1(params))
    }
}

/// Upper end in `g = f - dC` of the interior branch of `X(f)`.
pub fn interior_branch_upper(params: &MarketParams) -> f64 {
    let k = params.capacity();
    eta3(params).max(k - (params.alpha_x() - params.n() * k))
}

/// Symmetric leader reactions `X(f)` to a common follower position `f`.
pub fn leader_reaction(f: f64, params: &MarketParams) -> Result<ReactionResult, ModelError> {
    let tol = params.tolerance();
    let (n, m, k) = (params.n(), params.m(), params.capacity());
    let ax = params.alpha_x();
    let g = f - params.cost_gap();

    let b1 = -ax / (m + 1.0);
    let b2 = driveout_upper(params);
    let b3 = -ax / (n * m + m + 1.0);
    let u3 = interior_branch_upper(params);
    let l4 = capacity_branch_lower(params)?;

    let mut thresholds = Thresholds::new();
    thresholds.insert("g".to_string(), g);
    thresholds.insert("eta1".to_string(), eta1(params));
    thresholds.insert("eta3".to_string(), eta3(params));
    if let Ok(e) = eta2(params) {
        thresholds.insert("eta2".to_string(), e);
    }
    if let Ok(e) = eta4(params) {
        thresholds.insert("eta4".to_string(), e);
    }
    thresholds.insert("monopoly_upper".to_string(), b1);
    thresholds.insert("driveout_upper".to_string(), b2);
    thresholds.insert("interior_lower".to_string(), b3);
    thresholds.insert("interior_upper".to_string(), u3);
    thresholds.insert("capacity_lower".to_string(), l4);

    let mut candidates: Vec<f64> = Vec::new();
    if tol.lt(g, b1) {
        candidates.push(ax.max(0.0) / (m + 1.0));
    }
    if tol.ge(g, b1) && tol.le(g, b2) {
        candidates.push((ax + g) / m);
    }
    if tol.gt(g, b3) && tol.le(g, u3) {
        candidates.push((ax - n * g).max(0.0) / (m + 1.0));
    }
    if tol.ge(g, l4) {
        candidates.push((ax - n * k).max(0.0) / (m + 1.0));
    }

    candidates.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
    candidates.dedup_by(|a, b| tol.eq(*a, *b));
    let labels = candidates
        .iter()
        .map(|&x| ProductionLabel::classify(symmetric_production(f, m * x, params), params))
        .collect();
    let set = if candidates.is_empty() {
        RealSet::Empty
    } else {
        RealSet::Points { values: candidates }
    };
    Ok(ReactionResult {
        set,
        labels,
        thresholds,
    })
}
