//! Symmetric subgame-perfect equilibria with and without a forward market.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::math::sqrt;
use crate::model::{MarketParams, ModelError, ProductionLabel};
use crate::reactions::{driveout_upper, eta1, eta2, high_demand_factor};
use crate::set::RealSet;
use crate::spot::symmetric_production;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegionTag {
    Q1,
    Q2,
    Q3,
    Q4,
    S1,
    S2,
    S3,
    S4,
}

/// Common leader production on a region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LeaderProduction {
    /// `x` ranges over a fixed set, independent of `f`.
    Fixed { values: RealSet },
    /// `x = intercept + slope * f`.
    Affine { intercept: f64, slope: f64 },
}

impl LeaderProduction {
    fn constant(x: f64) -> Self {
        LeaderProduction::Fixed {
            values: RealSet::point(x),
        }
    }

    /// Leader productions paired with forward position `f`.
    pub fn at(&self, f: f64) -> Vec<f64> {
        match self {
            LeaderProduction::Fixed { values } => values.sample(1, 0.0),
            LeaderProduction::Affine { intercept, slope } => alloc::vec![intercept + slope * f],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub tag: RegionTag,
    pub f_set: RealSet,
    pub x: LeaderProduction,
    pub y_label: ProductionLabel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Existence {
    NonEmpty,
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "count", rename_all = "snake_case")]
pub enum Multiplicity {
    None,
    Unique,
    Finite(usize),
    Continuum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSet {
    pub regions: Vec<Region>,
    pub zeta1: f64,
    pub zeta2: f64,
    pub existence: Existence,
    pub multiplicity: Multiplicity,
    /// Set when more than one region is active at these parameters.
    pub overlapping: bool,
}

impl EquilibriumSet {
    fn from_regions(regions: Vec<Region>, zeta1: f64, zeta2: f64) -> Self {
        let continuum = regions.iter().any(|r| {
            matches!(
                r.f_set,
                RealSet::Interval { .. }
                    | RealSet::HalfLineLeft { .. }
                    | RealSet::HalfLineRight { .. }
                    | RealSet::Union { .. }
            )
        });
        let points: usize = regions.iter().map(|r| r.f_set.component_count()).sum();
        let multiplicity = match (continuum, points) {
            (true, _) => Multiplicity::Continuum,
            (false, 0) => Multiplicity::None,
            (false, 1) => Multiplicity::Unique,
            (false, n) => Multiplicity::Finite(n),
        };
        EquilibriumSet {
            existence: if regions.is_empty() {
                Existence::Empty
            } else {
                Existence::NonEmpty
            },
            overlapping: regions.len() > 1,
            multiplicity,
            regions,
            zeta1,
            zeta2,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.existence == Existence::Empty
    }

    pub fn region(&self, tag: RegionTag) -> Option<&Region> {
        self.regions.iter().find(|r| r.tag == tag)
    }

    /// Representative `(f, x)` pairs: `per_component` per continuum component
    /// (half-lines sampled over a stretch of length `span`), every isolated point.
    pub fn sample_points(&self, per_component: usize, span: f64) -> Vec<(RegionTag, f64, f64)> {
        let mut out = Vec::new();
        for r in &self.regions {
            for f in r.f_set.sample(per_component, span) {
                for x in r.x.at(f) {
                    out.push((r.tag, f, x));
                }
            }
        }
        out
    }
}

/// `NMk + (M+1)dC + 2M sqrt(N k dC)`.
pub fn zeta1(params: &MarketParams) -> f64 {
    let (n, m, k, dc) = (params.n(), params.m(), params.capacity(), params.cost_gap());
    n * m * k + (m + 1.0) * dc + 2.0 * m * sqrt(n * k * dc)
}

/// Upper end of the interior forward-market regime.
pub fn zeta2_forward(params: &MarketParams) -> f64 {
    let (n, m, k, dc) = (params.n(), params.m(), params.capacity(), params.cost_gap());
    let s = sqrt(n + 1.0);
    let nm1 = n * m + m + 1.0;
    nm1 * dc
        + (n * n + nm1) / (n * (n + 1.0) + 2.0 * (1.0 - s)) * (n * k - (s - 1.0) * (s - 1.0) * dc)
}

/// Upper end of the interior Stackelberg regime.
pub fn zeta2_stackelberg(params: &MarketParams) -> f64 {
    let (n, m, k, dc) = (params.n(), params.m(), params.capacity(), params.cost_gap());
    let s = sqrt(n + 1.0);
    (n * m + m + 1.0) * dc
        + (m + 1.0) * s / (2.0 * (s - 1.0)) * (n * k - (s - 1.0) * (s - 1.0) * dc)
}

/// `(M+1)(dC + k) + Nk`: smallest `alpha_x` with capacity forward equilibria.
pub fn forward_capacity_threshold(params: &MarketParams) -> f64 {
    let (n, m, k, dc) = (params.n(), params.m(), params.capacity(), params.cost_gap());
    (m + 1.0) * (dc + k) + n * k
}

/// Smallest `alpha_x` with a capacity Stackelberg equilibrium.
pub fn stackelberg_capacity_threshold(params: &MarketParams) -> f64 {
    let (n, m, k, dc) = (params.n(), params.m(), params.capacity(), params.cost_gap());
    let s = sqrt(n + 1.0);
    if (s - 1.0) * (s - 1.0) * dc < n * k {
        n * k + n * (m + 1.0) / (2.0 * (s - 1.0)) * (dc + k)
    } else {
        n * k + (m + 1.0) * (dc + sqrt(n * k * dc))
    }
}

/// The interior forward equilibrium `(f, x)`, whether or not its regime is active.
pub fn interior_forward_point(params: &MarketParams) -> (f64, f64) {
    let (n, m, dc, ax) = (params.n(), params.m(), params.cost_gap(), params.alpha_x());
    let nm1 = n * m + m + 1.0;
    let den = n * n + nm1;
    let f = (n - 1.0) * (ax - nm1 * dc) / den;
    let x = (n + 1.0) * (ax + n * n * dc) / den;
    (f, x)
}

/// Lower end of the forward positions supporting capacity forward equilibria.
pub fn forward_capacity_f_lower(params: &MarketParams) -> Result<f64, ModelError> {
    let nk = params.n() * params.capacity();
    let g = if params
        .tolerance()
        .le(params.alpha_x(), high_demand_factor(params) * nk)
    {
        eta1(params)
    } else {
        eta2(params)?
    };
    Ok(params.cost_gap() + g)
}

/// All symmetric equilibria `(f, x)` of the two-stage market with forward contracting.
pub fn forward_equilibria(params: &MarketParams) -> Result<EquilibriumSet, ModelError> {
    let tol = params.tolerance();
    let (n, m, k, dc, ax) = (
        params.n(),
        params.m(),
        params.capacity(),
        params.cost_gap(),
        params.alpha_x(),
    );
    let nm1 = n * m + m + 1.0;
    let z1 = zeta1(params);
    let z2 = zeta2_forward(params);
    let mut regions = Vec::new();

    if tol.le(ax, (m + 1.0) * dc) {
        regions.push(Region {
            tag: RegionTag::Q1,
            f_set: RealSet::half_line_left(dc - ax / (m + 1.0), false),
            x: LeaderProduction::constant(ax / (m + 1.0)),
            y_label: ProductionLabel::Zero,
        });
    }
    if tol.le(ax, (nm1 * dc).min(z1)) {
        let lo = (dc - ax / (m + 1.0)).max(0.0);
        let hi = dc + driveout_upper(params);
        let f_set = closed_with_tolerance(lo, hi, params);
        if !f_set.is_empty() {
            regions.push(Region {
                tag: RegionTag::Q2,
                f_set,
                x: LeaderProduction::Affine {
                    intercept: (ax - dc) / m,
                    slope: 1.0 / m,
                },
                y_label: ProductionLabel::Zero,
            });
        }
    }
    if tol.lt(nm1 * dc, ax) && tol.le(ax, z2) {
        let (f, x) = interior_forward_point(params);
        regions.push(Region {
            tag: RegionTag::Q3,
            f_set: RealSet::point(f),
            x: LeaderProduction::constant(x),
            y_label: ProductionLabel::classify(symmetric_production(f, m * x, params), params),
        });
    }
    if tol.ge(ax, forward_capacity_threshold(params)) {
        regions.push(Region {
            tag: RegionTag::Q4,
            f_set: RealSet::half_line_right(forward_capacity_f_lower(params)?, true),
            x: LeaderProduction::constant((ax - n * k) / (m + 1.0)),
            y_label: ProductionLabel::AtCapacity,
        });
    }
    Ok(EquilibriumSet::from_regions(regions, z1, z2))
}

// Closed interval whose endpoints may cross by rounding only.
fn closed_with_tolerance(lo: f64, hi: f64, params: &MarketParams) -> RealSet {
    if lo <= hi {
        RealSet::closed(lo, hi)
    } else if params.tolerance().eq(lo, hi) {
        RealSet::point(0.5 * (lo + hi))
    } else {
        RealSet::Empty
    }
}

/// All symmetric leader productions when followers hold no forward positions.
pub fn stackelberg_equilibria(params: &MarketParams) -> Result<EquilibriumSet, ModelError> {
    let tol = params.tolerance();
    let (n, m, k, dc, ax) = (
        params.n(),
        params.m(),
        params.capacity(),
        params.cost_gap(),
        params.alpha_x(),
    );
    let nm1 = n * m + m + 1.0;
    let z1 = zeta1(params);
    let z2 = zeta2_stackelberg(params);
    let mut candidates: Vec<(RegionTag, f64)> = Vec::new();

    if tol.lt(ax, (m + 1.0) * dc) {
        candidates.push((RegionTag::S1, ax.max(0.0) / (m + 1.0)));
    }
    if tol.ge(ax, (m + 1.0) * dc) && tol.le(ax, (nm1 * dc).min(z1)) {
        candidates.push((RegionTag::S2, (ax - dc) / m));
    }
    if tol.lt(nm1 * dc, ax) && tol.le(ax, z2) {
        candidates.push((RegionTag::S3, (ax + n * dc).max(0.0) / (m + 1.0)));
    }
    if tol.ge(ax, stackelberg_capacity_threshold(params)) {
        candidates.push((RegionTag::S4, (ax - n * k).max(0.0) / (m + 1.0)));
    }
    let regions = candidates
        .into_iter()
        .map(|(tag, x)| Region {
            tag,
            f_set: RealSet::point(0.0),
            x: LeaderProduction::constant(x),
            y_label: ProductionLabel::classify(symmetric_production(0.0, m * x, params), params),
        })
        .collect();
    Ok(EquilibriumSet::from_regions(regions, z1, z2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reactions::{follower_reaction, leader_reaction};
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn duopoly(alpha_x: f64, k: f64) -> MarketParams {
        MarketParams::normalized(alpha_x, 0.0, 1, 2, k).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1.0)
    }

    fn single_point(r: &Region) -> (f64, f64) {
        let f = r.f_set.sample(1, 0.0);
        assert_eq!(f.len(), 1);
        (f[0], r.x.at(f[0])[0])
    }

    #[test]
    fn forward_low_demand() {
        let q = forward_equilibria(&duopoly(8.0, 3.0)).unwrap();
        assert_eq!(q.regions.len(), 1);
        let r = &q.regions[0];
        assert_eq!(r.tag, RegionTag::Q3);
        let (f, x) = single_point(r);
        assert!(rel(f, 1.0) < 1e-12 && rel(x, 3.0) < 1e-12);
        match r.y_label {
            ProductionLabel::Interior(y) => assert!(rel(y, 2.0) < 1e-12),
            other => panic!("{other:?}"),
        }
        assert_eq!(q.multiplicity, Multiplicity::Unique);
    }

    #[test]
    fn forward_medium_demand_is_empty() {
        let q = forward_equilibria(&duopoly(3.8, 1.0)).unwrap();
        assert!(q.is_empty());
        assert_eq!(q.multiplicity, Multiplicity::None);
        assert!(rel(zeta2_forward(&duopoly(3.8, 1.0)), 8.0 / (4.0 - 3f64.sqrt())) < 1e-12);
    }

    #[test]
    fn forward_high_demand() {
        let q = forward_equilibria(&duopoly(8.0, 1.0)).unwrap();
        assert_eq!(q.regions.len(), 1);
        let r = &q.regions[0];
        assert_eq!(r.tag, RegionTag::Q4);
        assert!(matches!(
            r.f_set,
            RealSet::HalfLineRight { closed: true, .. }
        ));
        // the leader only settles on the capacity branch from the jump point on
        let jump = -(3f64.sqrt() - 1.0) * 4.0 + 3f64.sqrt();
        assert!(rel(r.f_set.inf().unwrap(), jump) < 1e-12);
        assert_eq!(r.x.at(5.0), vec![3.0]);
        // followers alone would accept any f >= -alpha/2 + 2k = -2
        let p = duopoly(8.0, 1.0);
        assert!(rel(follower_reaction(3.0, &p).unwrap().set.inf().unwrap(), -2.0) < 1e-12);
        assert!(!leader_reaction(-1.5, &p)
            .unwrap()
            .set
            .contains(3.0, p.tolerance()));
        assert_eq!(q.multiplicity, Multiplicity::Continuum);
    }

    #[test]
    fn zero_supply_family() {
        let p = MarketParams::normalized(3.5, 1.0, 1, 2, 1.0).unwrap();
        assert!(rel(zeta1(&p), 2.0 + 2.0 + 2.0 * 2f64.sqrt()) < 1e-12);
        let q = forward_equilibria(&p).unwrap();
        let r = q.region(RegionTag::Q2).expect("drive-out region");
        assert!(matches!(r.x, LeaderProduction::Affine { .. }));
        for (_, f, x) in q.sample_points(5, 1.0) {
            if x > 0.0 {
                assert_eq!(symmetric_production(f, x, &p), 0.0);
            }
        }
        let p = MarketParams::normalized(4.5, 1.0, 1, 2, 1.0).unwrap();
        assert!(forward_equilibria(&p)
            .unwrap()
            .region(RegionTag::Q2)
            .is_none());
    }

    #[test]
    fn stackelberg_examples() {
        let s = stackelberg_equilibria(&duopoly(8.0, 3.0)).unwrap();
        assert_eq!(s.regions.len(), 1);
        assert_eq!(s.regions[0].x.at(0.0), vec![4.0]);
        match s.regions[0].y_label {
            ProductionLabel::Interior(y) => assert!(rel(y, 4.0 / 3.0) < 1e-12),
            other => panic!("{other:?}"),
        }

        let s3 = 3f64.sqrt();
        let edge = 2.0 * s3 / (s3 - 1.0);
        let p = duopoly(edge, 1.0);
        assert!(rel(stackelberg_capacity_threshold(&p), edge) < 1e-12);
        let s = stackelberg_equilibria(&p).unwrap();
        let xs: Vec<f64> = s.regions.iter().map(|r| r.x.at(0.0)[0]).collect();
        assert_eq!(xs.len(), 2);
        assert!(rel(xs[0], edge / 2.0) < 1e-12);
        assert!(rel(xs[1], edge / 2.0 - 1.0) < 1e-12);

        let s = stackelberg_equilibria(&duopoly(8.0, 1.0)).unwrap();
        assert_eq!(s.regions.len(), 1);
        assert_eq!(s.regions[0].x.at(0.0), vec![3.0]);
        assert_eq!(s.regions[0].y_label, ProductionLabel::AtCapacity);
    }

    fn random_params(rng: &mut ChaCha8Rng) -> MarketParams {
        let m = rng.gen_range(1..=8);
        let n = rng.gen_range(2..=8);
        let k = rng.gen_range(0.5..2.0);
        let dc = if rng.gen_bool(0.3) {
            0.0
        } else {
            rng.gen_range(0.0..k)
        };
        let ax = rng.gen_range(0.0..10.0 * (n + m) as f64 * k);
        MarketParams::normalized(ax, dc, m, n, k).unwrap()
    }

    #[test]
    fn stackelberg_equals_leader_reaction_at_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..2000 {
            let p = random_params(&mut rng);
            let s = stackelberg_equilibria(&p).unwrap();
            let mut xs: Vec<f64> = s.regions.iter().map(|r| r.x.at(0.0)[0]).collect();
            xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            xs.dedup_by(|a, b| p.tolerance().eq(*a, *b));
            let r = leader_reaction(0.0, &p).unwrap();
            let want = r.set.sample(1, 0.0);
            assert_eq!(xs.len(), want.len(), "{p:?}");
            for (a, b) in xs.iter().zip(want.iter()) {
                assert!(rel(*a, *b) < 1e-9);
            }
        }
    }

    #[test]
    fn equilibria_lie_on_both_reactions() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut seen = [0usize; 4];
        for _ in 0..3000 {
            let p = random_params(&mut rng);
            let tol = p.tolerance();
            let q = forward_equilibria(&p).unwrap();
            for r in &q.regions {
                seen[r.tag as usize] += 1;
            }
            for (tag, f, x) in q.sample_points(4, p.quantity_scale()) {
                let fr = follower_reaction(x, &p).unwrap();
                assert!(
                    fr.set.contains(f, tol),
                    "{tag:?} f={f} x={x} {p:?} {:?}",
                    fr.set
                );
                let lr = leader_reaction(f, &p).unwrap();
                assert!(
                    lr.set.contains(x, tol),
                    "{tag:?} f={f} x={x} {p:?} {:?}",
                    lr.set
                );
                let y = symmetric_production(f, p.m() * x, &p);
                assert!(p.alpha_x() - p.m() * x - p.n() * y >= -1e-9 || p.alpha_x() == 0.0);
            }
        }
        assert!(seen.iter().all(|&c| c > 0), "{seen:?}");
    }

    #[test]
    fn no_cost_gap_has_only_interior_or_capacity_regions() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..500 {
            let m = rng.gen_range(1..=8);
            let n = rng.gen_range(2..=8);
            let ax = rng.gen_range(1e-3..10.0 * (n + m) as f64);
            let p = MarketParams::normalized(ax, 0.0, m, n, 1.0).unwrap();
            let q = forward_equilibria(&p).unwrap();
            assert!(q
                .regions
                .iter()
                .all(|r| matches!(r.tag, RegionTag::Q3 | RegionTag::Q4)));
        }
    }
}
