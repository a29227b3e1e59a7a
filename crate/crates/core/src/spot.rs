//! Spot-stage equilibria.
//!
//! Given forward positions `f` and leader productions `x`, every follower
//! maximizes `P (y_j - f_j) - c y_j` over `[0, k]`. The best response is
//! `[(alpha_y + f_j - sum x - sum_{i != j} y_i) / 2]_0^k` and the equilibrium
//! is unique.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::math::abs;
use crate::model::{clamp_unchecked, price, MarketParams, ModelError};

/// Follower productions at a spot equilibrium together with the induced
/// total quantity and price.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpotOutcome {
    #[serde(rename = "y_vec")]
    pub y: Vec<f64>,
    pub total_q: f64,
    pub price: f64,
    pub converged: bool,
}

impl SpotOutcome {
    pub fn new(y: Vec<f64>, x: &[f64], params: &MarketParams, converged: bool) -> Self {
        let total_q = x.iter().sum::<f64>() + y.iter().sum::<f64>();
        SpotOutcome {
            y,
            total_q,
            price: price(total_q, params),
            converged,
        }
    }
}

/// Anything able to produce the spot equilibrium for given `(f, x)`.
pub trait SpotSolver {
    fn solve(&self, f: &[f64], x: &[f64], params: &MarketParams)
        -> Result<SpotOutcome, ModelError>;
}

/// Closed forms for symmetric positions and for a single deviating follower.
/// Other position patterns are rejected with [`ModelError::UnsupportedSpotPattern`].
#[derive(Debug, Clone, Copy, Default)]
pub struct ClosedFormSpot;

impl SpotSolver for ClosedFormSpot {
    fn solve(
        &self,
        f: &[f64],
        x: &[f64],
        params: &MarketParams,
    ) -> Result<SpotOutcome, ModelError> {
        let n = params.followers() as usize;
        check_len(f.len(), n)?;
        check_len(x.len(), params.leaders() as usize)?;
        match deviation_pattern(f) {
            Pattern::Symmetric(fs) => Ok(spot_symmetric(fs, x, params)),
            Pattern::OneDeviator { l, f_l, f_others } => {
                let (y_l, y_o) = one_deviator_equilibrium(f_l, f_others, x, params);
                let mut y = vec![y_o; n];
                y[l] = y_l;
                Ok(SpotOutcome::new(y, x, params, true))
            }
            Pattern::Other => Err(ModelError::UnsupportedSpotPattern),
        }
    }
}

enum Pattern {
    Symmetric(f64),
    OneDeviator { l: usize, f_l: f64, f_others: f64 },
    Other,
}

fn deviation_pattern(f: &[f64]) -> Pattern {
    let first = f[0];
    let odd: Vec<usize> = (0..f.len()).filter(|&i| f[i] != first).collect();
    match odd.len() {
        0 => Pattern::Symmetric(first),
        _ if odd.len() == f.len() - 1 && odd.iter().all(|&i| f[i] == f[odd[0]]) => {
            Pattern::OneDeviator {
                l: 0,
                f_l: first,
                f_others: f[odd[0]],
            }
        }
        1 => Pattern::OneDeviator {
            l: odd[0],
            f_l: f[odd[0]],
            f_others: first,
        },
        _ => Pattern::Other,
    }
}

fn check_len(got: usize, expected: usize) -> Result<(), ModelError> {
    if got == expected {
        Ok(())
    } else {
        Err(ModelError::LengthMismatch { expected, got })
    }
}

/// Symmetric spot equilibrium `y_j = [(alpha_y + f - sum x)/(N+1)]_0^k`.
pub fn spot_symmetric(f: f64, x: &[f64], params: &MarketParams) -> SpotOutcome {
    let y = symmetric_production(f, x.iter().sum(), params);
    SpotOutcome::new(vec![y; params.followers() as usize], x, params, true)
}

/// Common symmetric spot production given total leader production.
pub fn symmetric_production(f: f64, sum_x: f64, params: &MarketParams) -> f64 {
    let v = (params.alpha_y() + f - sum_x) / (params.n() + 1.0);
    clamp_unchecked(v, 0.0, params.capacity())
}

/// Common production of the `N-1` followers sharing position `f_others`
/// when follower `l` produces `y_l`: `[(alpha_y + f - sum x - y_l)/N]_0^k`.
pub fn spot_one_deviator(
    _l: usize,
    f_others: f64,
    y_l: f64,
    x: &[f64],
    params: &MarketParams,
) -> f64 {
    others_response(f_others, y_l, x.iter().sum(), params)
}

fn others_response(f_others: f64, y_l: f64, sum_x: f64, params: &MarketParams) -> f64 {
    let v = (params.alpha_y() + f_others - sum_x - y_l) / params.n();
    clamp_unchecked(v, 0.0, params.capacity())
}

/// Follower `j`'s spot best response. `y` holds everyone's production; entry `j` is ignored.
pub fn spot_best_response(j: usize, f: &[f64], x: &[f64], y: &[f64], params: &MarketParams) -> f64 {
    let others: f64 = y
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != j)
        .map(|(_, v)| v)
        .sum();
    best_response_value(f[j], x.iter().sum(), others, params)
}

#[inline]
pub(crate) fn best_response_value(f_j: f64, sum_x: f64, others: f64, params: &MarketParams) -> f64 {
    let v = (params.alpha_y() + f_j - sum_x - others) / 2.0;
    clamp_unchecked(v, 0.0, params.capacity())
}

/// Spot equilibrium when one follower holds `f_l` and the rest hold `f_others`.
/// Returns `(y_l, y_others)`.
///
/// The deviator's production is the unique fixed point of `y_l -> BR(R(y_l))`,
/// where `R` is the others' common response. That map is piecewise linear with
/// one piece per regime of `R` (zero, interior, capacity), so each piece's fixed
/// point is a candidate and the consistent one is kept.
pub fn one_deviator_equilibrium(
    f_l: f64,
    f_others: f64,
    x: &[f64],
    params: &MarketParams,
) -> (f64, f64) {
    let sum_x: f64 = x.iter().sum();
    let n = params.n();
    let k = params.capacity();
    let a_l = params.alpha_y() + f_l - sum_x;
    let a_o = params.alpha_y() + f_others - sum_x;
    let step = |y_l: f64| {
        let y_o = others_response(f_others, y_l, sum_x, params);
        best_response_value(f_l, sum_x, (n - 1.0) * y_o, params)
    };
    let candidates = [
        a_l / 2.0,
        (n * a_l - (n - 1.0) * a_o) / (n + 1.0),
        (a_l - (n - 1.0) * k) / 2.0,
    ];
    let mut best = (f64::INFINITY, 0.0);
    for c in candidates {
        let c = clamp_unchecked(c, 0.0, k);
        let err = abs(step(c) - c);
        if err < best.0 {
            best = (err, c);
        }
    }
    let y_l = best.1;
    (y_l, others_response(f_others, y_l, sum_x, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fixture(k: f64) -> MarketParams {
        MarketParams::new(18.0, 1.0, 10.0, 10.0, 1, 2, k).unwrap()
    }

    fn random_params(rng: &mut ChaCha8Rng) -> MarketParams {
        let m = rng.gen_range(1..=6);
        let n = rng.gen_range(2..=8);
        let k = rng.gen_range(0.2..3.0);
        let dc = rng.gen_range(0.0..k);
        let ax = rng.gen_range(0.0..4.0 * (n + m) as f64 * k);
        MarketParams::new(ax + 1.0, rng.gen_range(0.5..2.0), 1.0, 1.0 + dc, m, n, k)
            .map(|p| p.with_tolerance(Default::default()))
            .unwrap()
    }

    #[test]
    fn symmetric_examples() {
        let p = fixture(3.0);
        let s = spot_symmetric(1.0, &[3.0], &p);
        assert_eq!(s.y, vec![2.0, 2.0]);
        assert_eq!(s.total_q, 7.0);
        assert_eq!(s.price, 11.0);
        assert_eq!(spot_symmetric(50.0, &[3.0], &p).y, vec![3.0, 3.0]);
        assert_eq!(spot_symmetric(0.0, &[9.0], &p).y, vec![0.0, 0.0]);
    }

    #[test]
    fn one_deviator_examples() {
        let p = MarketParams::new(18.0, 1.0, 10.0, 10.0, 1, 3, 3.0).unwrap();
        assert_eq!(spot_one_deviator(0, 0.0, 2.0, &[9.0], &p), 0.0);
        assert_eq!(spot_one_deviator(0, 20.0, 0.0, &[1.0], &p), 3.0);
        assert_eq!(spot_one_deviator(0, 1.0, 1.0, &[2.0], &p), 2.0);
        // symmetric positions reproduce the symmetric equilibrium
        let s = spot_symmetric(0.5, &[2.0], &p);
        let (y_l, y_o) = one_deviator_equilibrium(0.5, 0.5, &[2.0], &p);
        assert!((y_l - s.y[0]).abs() < 1e-14);
        assert!((y_o - s.y[0]).abs() < 1e-14);
        assert_eq!(spot_one_deviator(1, 0.5, s.y[0], &[2.0], &p), s.y[0]);
    }

    #[test]
    fn best_response_corners() {
        let p = fixture(3.0);
        assert_eq!(
            spot_best_response(0, &[1.0, 1.0], &[3.0], &[0.0, 2.0], &p),
            2.0
        );
        assert_eq!(
            spot_best_response(0, &[0.0, 0.0], &[8.0], &[0.0, 1.0], &p),
            0.0
        );
        assert_eq!(
            spot_best_response(0, &[20.0, 0.0], &[0.0], &[0.0, 0.0], &p),
            3.0
        );
    }

    // Golden-section maximization of the follower's spot profit.
    fn golden_best_response(j: usize, f: &[f64], x: &[f64], y: &[f64], p: &MarketParams) -> f64 {
        let obj = |v: f64| {
            let mut yy = y.to_vec();
            yy[j] = v;
            crate::model::follower_spot_profit(j, &yy, f, x, p).unwrap()
        };
        let k = p.capacity();
        let grid = 400usize;
        let mut best = 0usize;
        for i in 0..=grid {
            if obj(k * i as f64 / grid as f64) > obj(k * best as f64 / grid as f64) {
                best = i;
            }
        }
        let mut a = k * (best.saturating_sub(1)) as f64 / grid as f64;
        let mut b = k * ((best + 1).min(grid)) as f64 / grid as f64;
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if obj(c) >= obj(d) {
                b = d;
            } else {
                a = c;
            }
        }
        0.5 * (a + b)
    }

    #[test]
    fn best_response_matches_golden_section() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let p = random_params(&mut rng);
            let n = p.followers() as usize;
            let m = p.leaders() as usize;
            let f: Vec<f64> = (0..n)
                .map(|_| rng.gen_range(-2.0..2.0) * p.capacity())
                .collect();
            let x: Vec<f64> = (0..m)
                .map(|_| rng.gen_range(0.0..p.alpha_x() / m as f64 + 0.1))
                .collect();
            let y: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..p.capacity())).collect();
            let j = rng.gen_range(0..n);
            let br = spot_best_response(j, &f, &x, &y, &p);
            let gs = golden_best_response(j, &f, &x, &y, &p);
            assert!(
                (br - gs).abs() < 1e-6 * p.capacity().max(1.0),
                "{br} vs {gs}"
            );
        }
    }

    #[test]
    fn symmetric_is_a_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let p = random_params(&mut rng);
            let n = p.followers() as usize;
            let fs = rng.gen_range(-3.0..3.0) * p.capacity();
            let x = vec![rng.gen_range(0.0..p.alpha_x() + 1.0); p.leaders() as usize];
            let s = spot_symmetric(fs, &x, &p);
            let f = vec![fs; n];
            for j in 0..n {
                assert!((spot_best_response(j, &f, &x, &s.y, &p) - s.y[j]).abs() < 1e-9);
            }
            let spread = s.y.iter().cloned().fold(f64::MIN, f64::max)
                - s.y.iter().cloned().fold(f64::MAX, f64::min);
            assert_eq!(spread, 0.0);
        }
    }

    #[test]
    fn one_deviator_is_a_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..500 {
            let p = random_params(&mut rng);
            let n = p.followers() as usize;
            let x = vec![rng.gen_range(0.0..p.alpha_x() + 1.0); p.leaders() as usize];
            let mut f = vec![rng.gen_range(-2.0..2.0) * p.capacity(); n];
            let l = rng.gen_range(0..n);
            f[l] = rng.gen_range(-4.0..4.0) * p.capacity();
            let s = ClosedFormSpot.solve(&f, &x, &p).unwrap();
            for j in 0..n {
                assert!((spot_best_response(j, &f, &x, &s.y, &p) - s.y[j]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn unsupported_pattern() {
        let p = MarketParams::new(18.0, 1.0, 10.0, 10.0, 1, 3, 3.0).unwrap();
        assert_eq!(
            ClosedFormSpot.solve(&[0.0, 1.0, 2.0], &[1.0], &p),
            Err(ModelError::UnsupportedSpotPattern)
        );
        assert!(ClosedFormSpot.solve(&[1.0, 0.0, 0.0], &[1.0], &p).is_ok());
        assert!(ClosedFormSpot.solve(&[0.0, 0.0, 1.0], &[1.0], &p).is_ok());
    }
}
