//! Structural thresholds: production gaps, drive-out and jump windows,
//! existence/multiplicity regimes and the finite-size ratios behind the
//! asymptotic rates.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::equilibria::{
    forward_capacity_threshold, stackelberg_capacity_threshold, zeta2_forward, zeta2_stackelberg,
};
use crate::math::sqrt;
use crate::model::{clamp_unchecked, MarketParams, ModelError};
use crate::reactions::{
    capacity_branch_lower, driveout_upper, eta3, high_demand_factor, xi_capacity_bound,
    xi_interior_bound, Thresholds,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Context {
    FollowerReaction,
    LeaderReaction,
    ForwardMarket,
    Stackelberg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    /// Nothing of the relevant kind exists strictly inside `(lower, upper)`.
    Gap,
    /// Two distinct solutions coexist on `[lower, upper]`.
    Overlap,
    /// The property holds on the closed window `[lower, upper]`.
    Window,
    /// The window is empty.
    Degenerate,
}

/// A dimensionless finite-size ratio and the constant it should stay below.
/// `bound` is `None` when no finite constant exists for these sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCheck {
    pub name: String,
    pub ratio: f64,
    pub bound: Option<f64>,
}

impl RateCheck {
    fn new(name: &str, ratio: f64, bound: Option<f64>) -> Self {
        RateCheck {
            name: name.to_string(),
            ratio,
            bound,
        }
    }

    pub fn holds(&self, tol: f64) -> bool {
        match self.bound {
            Some(b) => self.ratio <= b + tol * b.abs().max(1.0),
            None => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub context: Context,
    /// Largest attainable follower production below capacity.
    pub y_bar: Option<f64>,
    pub lower: f64,
    pub upper: f64,
    pub verdict: Verdict,
    pub rates: Vec<RateCheck>,
    pub details: Thresholds,
}

impl RegimeReport {
    pub fn rate(&self, name: &str) -> Option<&RateCheck> {
        self.rates.iter().find(|r| r.name == name)
    }
}

fn sroot(params: &MarketParams) -> f64 {
    sqrt(params.n() + 1.0)
}

/// Follower-side gap: leader totals with `alpha_y - Mx` in `(xi_bar, (N+1)k)` admit no
/// symmetric follower reaction, and productions in `(y_bar, k)` never occur.
pub fn follower_gap(params: &MarketParams) -> RegimeReport {
    let n = params.n();
    let k = params.capacity();
    let rn = sqrt(n);
    let y_bar = (1.0 - (n - 2.0 * rn + 1.0) / (n * n - 2.0 * rn + 1.0)) * k;
    let xi_bar = xi_interior_bound(params);
    let xi_low = xi_capacity_bound(params);
    let rates = alloc::vec![
        RateCheck::new(
            "production",
            n * (1.0 - y_bar / k),
            Some((n + 1.0) / n * (n * n / (n * n - 2.0 * rn))),
        ),
        RateCheck::new(
            "gap_width",
            n * (xi_low - xi_bar) / xi_low,
            Some(2.0 * (n * n + 1.0) / (n * n - 2.0 * rn)),
        ),
    ];
    let mut details = Thresholds::new();
    let m = params.m();
    details.insert("x_at_xi_bar".to_string(), (params.alpha_y() - xi_bar) / m);
    details.insert("x_at_xi_low".to_string(), (params.alpha_y() - xi_low) / m);
    RegimeReport {
        context: Context::FollowerReaction,
        y_bar: Some(y_bar),
        lower: xi_bar,
        upper: xi_low,
        verdict: Verdict::Gap,
        rates,
        details,
    }
}

/// Forward positions `[f_low, f_bar]` on which leaders produce `(alpha_x - dC + f)/M`
/// and push followers to zero.
pub fn leader_driveout_interval(params: &MarketParams) -> RegimeReport {
    let (n, m) = (params.n(), params.m());
    let ax = params.alpha_x();
    let dc = params.cost_gap();
    let f_low = dc - ax / (m + 1.0);
    let f_bar = dc + driveout_upper(params);
    let nonempty = params.tolerance().le(f_low, f_bar);
    let ratio = if ax > 0.0 {
        m * (f_bar - f_low) / ax
    } else {
        0.0
    };
    let mut details = Thresholds::new();
    // the part compatible with a forward equilibrium needs f >= 0
    details.insert("equilibrium_f_low".to_string(), f_low.max(0.0));
    RegimeReport {
        context: Context::LeaderReaction,
        y_bar: Some(0.0),
        lower: f_low,
        upper: f_bar,
        verdict: if nonempty {
            Verdict::Window
        } else {
            Verdict::Degenerate
        },
        rates: alloc::vec![RateCheck::new("width", ratio, Some(n / (n + 1.0)))],
        details,
    }
}

/// `Nk(1 + (M+1)s/(s-1)^2 + (M-1)s/(s-1))`: above this the interior leader
/// branch never reaches the capacity branch.
pub fn jump_interior_limit(params: &MarketParams) -> f64 {
    let s = sroot(params);
    let m = params.m();
    params.n()
        * params.capacity()
        * (1.0 + (m + 1.0) * s / ((s - 1.0) * (s - 1.0)) + (m - 1.0) * s / (s - 1.0))
}

/// Discontinuity of `X(f)` between the low-production and capacity branches.
/// Requires `alpha_x > Nk`.
pub fn leader_jump(params: &MarketParams) -> Result<RegimeReport, ModelError> {
    let tol = params.tolerance();
    let (n, m, k) = (params.n(), params.m(), params.capacity());
    let ax = params.alpha_x();
    let dc = params.cost_gap();
    if !tol.gt(ax, n * k) {
        return Err(ModelError::Precondition("alpha_x must exceed N k"));
    }
    let s = sroot(params);
    let nm1 = n * m + m + 1.0;
    let interior = tol.le(ax, jump_interior_limit(params));
    let (y_bar, g_bar) = if interior {
        let e3 = eta3(params);
        let y = (ax + e3 * nm1) / ((m + 1.0) * (n + 1.0));
        (clamp_unchecked(y, 0.0, k), e3)
    } else {
        (0.0, driveout_upper(params))
    };
    let f_bar = dc + g_bar;
    let f_low = dc + capacity_branch_lower(params)?;
    let excess = ax - n * k;

    let mut rates = Vec::new();
    if interior {
        let bound = if m > 1.0 {
            Some(m * (n + 2.0) / ((n + 1.0) * (m - 1.0)))
        } else {
            None
        };
        rates.push(RateCheck::new(
            "production",
            (k - y_bar) * n * m / excess,
            bound,
        ));
    }
    if tol.le(ax, high_demand_factor(params) * n * k) {
        let bound = if m > 1.0 {
            Some(2.0 * sqrt((n + 1.0) / n) * m / (m - 1.0))
        } else {
            None
        };
        rates.push(RateCheck::new(
            "width",
            (f_bar - f_low) * m * sqrt(n) / excess,
            bound,
        ));
    }
    let mut details = Thresholds::new();
    details.insert("interior_limit".to_string(), jump_interior_limit(params));
    details.insert("s".to_string(), s);
    Ok(RegimeReport {
        context: Context::LeaderReaction,
        y_bar: Some(y_bar),
        lower: f_low,
        upper: f_bar,
        verdict: if tol.le(f_low, f_bar) {
            Verdict::Overlap
        } else {
            Verdict::Degenerate
        },
        rates,
        details,
    })
}

/// `k - (s-1)^2 dC / N`: effective capacity headroom once the cost gap is priced in.
pub fn effective_capacity(params: &MarketParams) -> f64 {
    let s = sroot(params);
    params.capacity() - (s - 1.0) * (s - 1.0) * params.cost_gap() / params.n()
}

/// `(M+1)dC + min(NM dC, NMk + 2M sqrt(N k dC))`: largest `alpha_x` at which
/// followers can be kept out of the market.
pub fn zero_supply_zeta1(params: &MarketParams) -> f64 {
    let (n, m, k, dc) = (params.n(), params.m(), params.capacity(), params.cost_gap());
    (m + 1.0) * dc + (n * m * dc).min(n * m * k + 2.0 * m * sqrt(n * k * dc))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroSupplyReport {
    pub zeta1: f64,
    /// `alpha_x` at which the zero-supply Stackelberg production changes slope.
    pub kink: f64,
    /// Whether some forward equilibrium has zero follower production.
    pub forward_zero_supply: bool,
    /// Stackelberg leader production when followers stay out, if they do.
    pub stackelberg_x: Option<f64>,
}

/// Zero-supply regime of both markets at the given demand.
pub fn zero_supply_threshold(params: &MarketParams) -> ZeroSupplyReport {
    let tol = params.tolerance();
    let z1 = zero_supply_zeta1(params);
    let (m, dc, ax) = (params.m(), params.cost_gap(), params.alpha_x());
    let kink = (m + 1.0) * dc;
    let zero = tol.le(ax, z1);
    let stackelberg_x = if !zero {
        None
    } else if tol.lt(ax, kink) {
        Some(ax / (m + 1.0))
    } else {
        Some((ax - dc) / m)
    };
    ZeroSupplyReport {
        zeta1: z1,
        kink,
        forward_zero_supply: zero,
        stackelberg_x,
    }
}

/// Right-hand side of the leader-count condition for a forward-market gap when `dC > 0`,
/// in the closed form stated alongside the regime result.
pub fn gap_leader_threshold(params: &MarketParams) -> f64 {
    let (n, k, dc) = (params.n(), params.capacity(), params.cost_gap());
    let s = sroot(params);
    let d = n * n + (s - 1.0) * (s - 1.0);
    let a = n * k - (s - 1.0) * (s - 1.0) * dc;
    if (s - 1.0) * (s - 1.0) * dc < n * k {
        ((n + 1.0) * k - (n * n + 1.0) / d * a) / (n * dc - k + (n + 1.0) / d * a)
    } else {
        ((n + 1.0) * k - dc) / (n * k + dc - k + 2.0 * sqrt(n * k * dc))
    }
}

/// Existence/multiplicity regime of the forward market as a function of demand.
/// Only `M`, `N`, `k` and the cost gap matter; the demand stored in `params` is ignored.
pub fn market_regime(params: &MarketParams) -> RegimeReport {
    let tol = params.tolerance();
    let (n, m, k, dc) = (params.n(), params.m(), params.capacity(), params.cost_gap());
    let s = sroot(params);
    let nm1 = n * m + m + 1.0;
    let den = n * n + nm1;
    let alpha_low = forward_capacity_threshold(params);
    let mut details = Thresholds::new();
    let mut rates = Vec::new();

    let (alpha_bar, y_bar) = if dc == 0.0 {
        let z2 = zeta2_forward(params);
        details.insert("leader_threshold".to_string(), n * s - 1.0);
        (z2, n * z2 / den)
    } else {
        details.insert("leader_threshold".to_string(), gap_leader_threshold(params));
        details.insert("effective_capacity".to_string(), effective_capacity(params));
        if (s - 1.0) * (s - 1.0) * dc < n * k {
            let z2 = zeta2_forward(params);
            (z2, n * (z2 - nm1 * dc) / den)
        } else {
            (zero_supply_zeta1(params), 0.0)
        }
    };
    let gap = tol.lt(alpha_bar, alpha_low);
    if dc == 0.0 {
        rates.push(RateCheck::new(
            "production",
            n * (1.0 - y_bar / k),
            Some(n / (n + 1.0)),
        ));
        if gap {
            rates.push(RateCheck::new(
                "gap_width",
                n * (alpha_low - alpha_bar) / alpha_low,
                Some(2.0),
            ));
        } else {
            rates.push(RateCheck::new(
                "overlap_width",
                n * sqrt(n) * (alpha_bar - alpha_low) / alpha_low,
                Some(2.0 * sqrt((n + 2.0) / n)),
            ));
        }
    } else if (s - 1.0) * (s - 1.0) * dc < n * k {
        let kp = effective_capacity(params);
        rates.push(RateCheck::new(
            "production",
            n * (1.0 - y_bar / kp),
            Some(1.0),
        ));
    }
    let (lower, upper) = if gap {
        (alpha_bar, alpha_low)
    } else {
        (alpha_low, alpha_bar)
    };
    details.insert("alpha_bar".to_string(), alpha_bar);
    details.insert("alpha_low".to_string(), alpha_low);
    RegimeReport {
        context: Context::ForwardMarket,
        y_bar: Some(y_bar),
        lower,
        upper,
        verdict: if gap { Verdict::Gap } else { Verdict::Overlap },
        rates,
        details,
    }
}

/// Stackelberg counterpart of [`market_regime`]: two equilibria coexist on
/// `[alpha_low, alpha_bar]` and productions in `(y_bar, k)` never occur.
pub fn stackelberg_gap(params: &MarketParams) -> RegimeReport {
    let tol = params.tolerance();
    let (n, k, dc) = (params.n(), params.capacity(), params.cost_gap());
    let s = sroot(params);
    let kp = effective_capacity(params);
    let interior = (s - 1.0) * (s - 1.0) * dc < n * k;
    let (alpha_bar, y_bar) = if interior {
        (zeta2_stackelberg(params), (1.0 + 1.0 / s) * kp / 2.0)
    } else {
        (zero_supply_zeta1(params), 0.0)
    };
    let alpha_low = stackelberg_capacity_threshold(params);
    let mut rates = Vec::new();
    if interior {
        rates.push(RateCheck::new(
            "expansion",
            sqrt(n) * (2.0 * y_bar / kp - 1.0),
            Some(1.0),
        ));
    }
    let mut details = Thresholds::new();
    details.insert("effective_capacity".to_string(), kp);
    details.insert("alpha_bar".to_string(), alpha_bar);
    details.insert("alpha_low".to_string(), alpha_low);
    let overlap = tol.le(alpha_low, alpha_bar);
    RegimeReport {
        context: Context::Stackelberg,
        y_bar: Some(y_bar),
        lower: if overlap { alpha_low } else { alpha_bar },
        upper: if overlap { alpha_bar } else { alpha_low },
        verdict: if overlap {
            Verdict::Overlap
        } else {
            Verdict::Gap
        },
        rates,
        details,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibria::{forward_equilibria, stackelberg_equilibria, RegionTag};
    use crate::model::ProductionLabel;
    use crate::reactions::{follower_reaction, leader_reaction};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1.0)
    }

    fn with(ax: f64, dc: f64, m: u32, n: u32, k: f64) -> MarketParams {
        MarketParams::normalized(ax, dc, m, n, k).unwrap()
    }

    #[test]
    fn follower_gap_two_followers() {
        let p = with(8.0, 0.0, 1, 2, 1.0);
        let r = follower_gap(&p);
        let r2 = 2f64.sqrt();
        assert!(rel(r.y_bar.unwrap(), 1.0 - (3.0 - 2.0 * r2) / (5.0 - 2.0 * r2)) < 1e-12);
        assert_eq!(r.upper, 3.0);
        assert!(rel(r.lower, 5.0 / (5.0 - 2.0 * r2)) < 1e-12);
        assert!((r.lower - 2.301).abs() < 2e-3);
        // a leader total inside the window has no follower reaction
        let xi = 0.5 * (r.lower + r.upper);
        assert!(follower_reaction(p.alpha_y() - xi, &p)
            .unwrap()
            .set
            .is_empty());
        assert!(!follower_reaction(p.alpha_y() - r.lower, &p)
            .unwrap()
            .set
            .is_empty());
    }

    #[test]
    fn follower_gap_hundred_followers() {
        let p = with(8.0, 0.0, 1, 100, 1.0);
        let r = follower_gap(&p);
        let c = r.rate("production").unwrap();
        assert!(c.holds(0.0));
        assert!(rel(c.bound.unwrap(), 1.01 * 1e4 / (1e4 - 20.0)) < 1e-12);
        assert!(c.bound.unwrap() < 1.03);
    }

    #[test]
    fn follower_gap_is_sup_of_interior_labels() {
        for n in [2u32, 3, 5, 9] {
            let p = with(40.0, 0.0, 1, n, 1.0);
            let want = follower_gap(&p).y_bar.unwrap();
            let interior = |x: f64| match follower_reaction(x, &p).unwrap().labels[..] {
                [ProductionLabel::Interior(y)] => Some(y),
                _ => None,
            };
            let mut sup: f64 = 0.0;
            let mut bracket = (0.0, 0.0);
            let steps = 20_000;
            for i in 0..=steps {
                let x = p.alpha_y() * i as f64 / steps as f64;
                if let Some(y) = interior(x) {
                    if y > sup {
                        sup = y;
                        bracket = (x, x - p.alpha_y() / steps as f64);
                    }
                }
            }
            // refine the edge of the interior run between the best grid point and its neighbour
            let (mut inside, mut outside) = bracket;
            for _ in 0..80 {
                let mid = 0.5 * (inside + outside);
                match interior(mid) {
                    Some(y) => {
                        sup = sup.max(y);
                        inside = mid;
                    }
                    None => outside = mid,
                }
            }
            assert!((sup - want).abs() < 1e-6, "n={n} sup={sup} want={want}");
        }
    }

    #[test]
    fn driveout_duopoly_matches_increasing_segment() {
        let p = with(8.0, 0.0, 1, 2, 5.0);
        let r = leader_driveout_interval(&p);
        assert_eq!(r.verdict, Verdict::Window);
        assert!(rel(r.lower, -4.0) < 1e-12);
        assert!(rel(r.upper, -2.0) < 1e-12);
        for i in 0..=10 {
            let f = r.lower + (r.upper - r.lower) * i as f64 / 10.0;
            let x = p.alpha_x() + f;
            let lr = leader_reaction(f, &p).unwrap();
            assert!(lr.set.contains(x, p.tolerance()));
            assert_eq!(crate::spot::symmetric_production(f, x, &p), 0.0);
        }
    }

    #[test]
    fn driveout_equilibrium_part_matches_q2() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut hits = [0usize; 2];
        for _ in 0..4000 {
            let m = rng.gen_range(1..=6);
            let n = rng.gen_range(2..=6);
            let k = 1.0;
            let dc = rng.gen_range(0.01..3.0);
            let ax = rng.gen_range(0.0..2.0 * ((n * m + m + 1) as f64) * dc);
            let p = with(ax, dc, m, n, k);
            let cond = (p.n() * p.m() + p.m() + 1.0) * dc;
            let limit = cond.min(crate::equilibria::zeta1(&p));
            if (ax - limit).abs() < 1e-6 * limit.max(1.0) {
                continue;
            }
            let r = leader_driveout_interval(&p);
            let nonempty = r.details["equilibrium_f_low"] <= r.upper;
            assert_eq!(nonempty, ax <= limit, "m={m} n={n} ax={ax} dc={dc}");
            let q2 = forward_equilibria(&p)
                .unwrap()
                .region(RegionTag::Q2)
                .is_some();
            assert_eq!(q2, nonempty);
            hits[nonempty as usize] += 1;
        }
        assert!(hits[0] > 100 && hits[1] > 100);
    }

    #[test]
    fn jump_requires_excess_demand() {
        let p = with(2.0, 0.0, 1, 2, 1.0);
        assert!(matches!(leader_jump(&p), Err(ModelError::Precondition(_))));
    }

    #[test]
    fn jump_two_leaders() {
        let p = with(4.0, 0.0, 2, 2, 1.0);
        let r = leader_jump(&p).unwrap();
        assert_eq!(r.verdict, Verdict::Overlap);
        let mid = 0.5 * (r.lower + r.upper);
        let lr = leader_reaction(mid, &p).unwrap();
        assert_eq!(lr.set.component_count(), 2);
        assert_eq!(lr.labels[0], ProductionLabel::AtCapacity);
        assert!(r.rates.iter().all(|c| c.holds(1e-12)));
        // just above the window only the capacity branch is left
        let lr = leader_reaction(r.upper + 1e-3, &p).unwrap();
        assert_eq!(lr.labels, alloc::vec![ProductionLabel::AtCapacity]);
    }

    #[test]
    fn jump_at_huge_demand_has_zero_ceiling() {
        let p = with(1e4, 0.0, 2, 2, 1.0);
        let r = leader_jump(&p).unwrap();
        assert_eq!(r.y_bar, Some(0.0));
    }

    #[test]
    fn jump_window_has_two_reactions() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let m = rng.gen_range(1..=8);
            let n = rng.gen_range(2..=8);
            let k = 1.0;
            let dc = rng.gen_range(0.0..1.0);
            let nk = n as f64 * k;
            let ax = nk + rng.gen_range(0.01..60.0) * nk;
            let p = with(ax, dc, m, n, k);
            let r = leader_jump(&p).unwrap();
            if r.verdict != Verdict::Overlap {
                continue;
            }
            for t in [0.0, 0.3, 0.7, 1.0] {
                let f = r.lower + t * (r.upper - r.lower);
                let lr = leader_reaction(f, &p).unwrap();
                assert_eq!(lr.set.component_count(), 2, "m={m} n={n} ax={ax} f={f}");
                let top = lr
                    .labels
                    .iter()
                    .map(|l| l.production(k))
                    .fold(0.0, f64::max);
                let low = lr.labels.iter().map(|l| l.production(k)).fold(k, f64::min);
                assert_eq!(top, k);
                assert!(low <= r.y_bar.unwrap() + 1e-9);
            }
        }
    }

    #[test]
    fn duopoly_market_gap() {
        let p = with(3.8, 0.0, 1, 2, 1.0);
        let r = market_regime(&p);
        assert_eq!(r.verdict, Verdict::Gap);
        assert!(rel(r.lower, 8.0 / (4.0 - 3f64.sqrt())) < 1e-12);
        assert!(rel(r.upper, 4.0) < 1e-12);
        assert!(rel(r.details["leader_threshold"], 2.0 * 3f64.sqrt() - 1.0) < 1e-12);
    }

    #[test]
    fn many_leaders_overlap() {
        let p = with(10.0, 0.0, 5, 2, 1.0);
        let r = market_regime(&p);
        assert_eq!(r.verdict, Verdict::Overlap);
        let ax = 0.5 * (r.lower + r.upper);
        let q = forward_equilibria(&with(ax, 0.0, 5, 2, 1.0)).unwrap();
        assert!(q.region(RegionTag::Q3).is_some());
        assert!(q.region(RegionTag::Q4).is_some());
    }

    #[test]
    fn market_gap_condition_on_leader_count() {
        for n in 2..=64u32 {
            for m in 1..=64u32 {
                let p = with(1.0, 0.0, m, n, 1.0);
                let r = market_regime(&p);
                let predicted = (m as f64) < n as f64 * ((n + 1) as f64).sqrt() - 1.0;
                assert_eq!(r.verdict == Verdict::Gap, predicted, "m={m} n={n}");
            }
        }
    }

    #[test]
    fn positive_cost_gap_leader_condition() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..3000 {
            let m = rng.gen_range(1..=40);
            let n = rng.gen_range(2..=30);
            let k = 1.0;
            let p0 = with(1.0, 0.0, m, n, k);
            let s = sroot(&p0);
            let limit = p0.n() * k / ((s - 1.0) * (s - 1.0));
            let dc = rng.gen_range(0.001..0.999) * limit;
            let p = with(1.0, dc, m, n, k);
            let r = market_regime(&p);
            let thr = gap_leader_threshold(&p);
            if (p.m() - thr).abs() < 1e-9 * thr.abs().max(1.0) {
                continue;
            }
            assert_eq!(
                r.verdict == Verdict::Gap,
                p.m() < thr,
                "m={m} n={n} dc={dc}"
            );
        }
    }

    #[test]
    fn regime_consistent_with_equilibria() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut checked = 0;
        while checked < 200 {
            let m = rng.gen_range(1..=8);
            let n = rng.gen_range(2..=8);
            let k = rng.gen_range(0.5..2.0);
            let dc = if rng.gen_bool(0.5) {
                0.0
            } else {
                rng.gen_range(0.0..k)
            };
            let r = market_regime(&with(1.0, dc, m, n, k));
            let width = r.upper - r.lower;
            if width <= 1e-6 {
                continue;
            }
            let ax = r.lower + rng.gen_range(0.01..0.99) * width;
            let q = forward_equilibria(&with(ax, dc, m, n, k)).unwrap();
            match r.verdict {
                Verdict::Gap => assert!(q.is_empty(), "m={m} n={n} dc={dc} ax={ax}"),
                _ => {
                    assert!(q.region(RegionTag::Q4).is_some());
                    assert!(q.regions.len() >= 2);
                }
            }
            let below = with(r.lower * 0.99, dc, m, n, k);
            assert!(!forward_equilibria(&below).unwrap().is_empty());
            let above = with(r.upper * 1.01 + 1e-6, dc, m, n, k);
            assert!(!forward_equilibria(&above).unwrap().is_empty());
            checked += 1;
        }
    }

    #[test]
    fn zero_supply_examples() {
        let p = with(3.5, 1.0, 1, 2, 1.0);
        let z = zero_supply_threshold(&p);
        assert!(rel(z.zeta1, 4.0) < 1e-12);
        assert!(z.forward_zero_supply);
        assert!(forward_equilibria(&p)
            .unwrap()
            .region(RegionTag::Q2)
            .is_some());
        let p = with(4.5, 1.0, 1, 2, 1.0);
        assert!(!zero_supply_threshold(&p).forward_zero_supply);
        assert!(forward_equilibria(&p)
            .unwrap()
            .region(RegionTag::Q2)
            .is_none());
        let p = with(3.5, 1e-12, 2, 3, 1.0);
        assert!(zero_supply_threshold(&p).zeta1 < 1e-10);
    }

    #[test]
    fn stackelberg_kink() {
        let (m, dc) = (2u32, 1.0);
        let kink = 3.0;
        let x = |ax: f64| {
            zero_supply_threshold(&with(ax, dc, m, 3, 1.0))
                .stackelberg_x
                .unwrap()
        };
        let h = 1e-3;
        assert!(rel((x(kink - h) - x(kink - 2.0 * h)) / h, 1.0 / 3.0) < 1e-9);
        assert!(rel((x(kink + 2.0 * h) - x(kink + h)) / h, 0.5) < 1e-9);
        for ax in [0.5, 2.9, 3.0, 4.0] {
            let p = with(ax, dc, m, 3, 1.0);
            let s = stackelberg_equilibria(&p).unwrap();
            let got = s
                .regions
                .iter()
                .find(|r| r.y_label == ProductionLabel::Zero)
                .unwrap();
            assert!(rel(got.x.at(0.0)[0], x(ax)) < 1e-12);
        }
    }

    #[test]
    fn stackelberg_gap_examples() {
        let p = with(8.0, 0.0, 1, 2, 1.0);
        let r = stackelberg_gap(&p);
        assert!(rel(r.y_bar.unwrap(), (1.0 + 1.0 / 3f64.sqrt()) / 2.0) < 1e-12);
        assert!(rel(r.y_bar.unwrap(), 1.0 / (3.0 - 3f64.sqrt())) < 1e-12);
        assert_eq!(r.verdict, Verdict::Overlap);
        let big = stackelberg_gap(&with(8.0, 0.0, 1, 10_000, 1.0));
        assert!((big.y_bar.unwrap() - 0.5).abs() < 0.006);
        let s = sroot(&with(8.0, 0.0, 1, 4, 1.0));
        let dc = 4.0 / ((s - 1.0) * (s - 1.0)) + 0.1;
        assert_eq!(stackelberg_gap(&with(8.0, dc, 1, 4, 1.0)).y_bar, Some(0.0));
    }

    #[test]
    fn stackelberg_window_has_two_equilibria() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..500 {
            let m = rng.gen_range(1..=8);
            let n = rng.gen_range(2..=8);
            let dc = if rng.gen_bool(0.5) {
                0.0
            } else {
                rng.gen_range(0.0..3.0)
            };
            let r = stackelberg_gap(&with(1.0, dc, m, n, 1.0));
            assert_eq!(r.verdict, Verdict::Overlap, "m={m} n={n} dc={dc}");
            let ax = 0.5 * (r.lower + r.upper);
            let s = stackelberg_equilibria(&with(ax, dc, m, n, 1.0)).unwrap();
            assert_eq!(s.regions.len(), 2, "m={m} n={n} dc={dc} ax={ax}");
            let ys: alloc::vec::Vec<f64> = s
                .regions
                .iter()
                .map(|r| r.y_label.production(1.0))
                .collect();
            assert!(ys.contains(&1.0));
            assert!(ys.iter().any(|&y| y <= r.y_bar.unwrap() + 1e-9));
        }
    }

    #[test]
    fn rate_ratios_stay_within_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..3000 {
            let m = rng.gen_range(1..=50);
            let n = rng.gen_range(2..=400);
            let k = rng.gen_range(0.2..3.0);
            let dc = if rng.gen_bool(0.3) {
                0.0
            } else {
                rng.gen_range(0.0..2.0 * k)
            };
            let nk = n as f64 * k;
            let ax = nk * (1.0 + rng.gen_range(0.001..30.0));
            let p = with(ax, dc, m, n, k);
            let mut reports = alloc::vec![
                follower_gap(&p),
                leader_driveout_interval(&p),
                market_regime(&p),
                stackelberg_gap(&p),
            ];
            reports.push(leader_jump(&p).unwrap());
            for r in &reports {
                if let Some(y) = r.y_bar {
                    assert!((0.0..k).contains(&y) || y == 0.0, "{r:?}");
                }
                for c in &r.rates {
                    assert!(c.holds(1e-9), "m={m} n={n} k={k} dc={dc} ax={ax} {c:?}");
                }
            }
        }
    }

    #[test]
    fn single_leader_jump_ceiling_has_no_uniform_rate() {
        let ratio = |n: u32| {
            let nk = n as f64;
            let r = leader_jump(&with(nk + nk.sqrt(), 0.0, 1, n, 1.0)).unwrap();
            let c = r.rate("production").unwrap().clone();
            assert!(c.bound.is_none());
            c.ratio
        };
        let (a, b, c) = (ratio(100), ratio(10_000), ratio(1_000_000));
        assert!(a < b && b < c);
        assert!(rel(c / b, 10.0) < 0.05);
    }
}
