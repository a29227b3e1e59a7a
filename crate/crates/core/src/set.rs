//! Exact subsets of the real line built from points, intervals and half-lines.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use serde::{Deserialize, Serialize};

use crate::model::Tolerance;

/// A finite union of points, intervals and half-lines.
///
/// Values built through the constructors are normalized: `Union` members are
/// pairwise disjoint and sorted, degenerate intervals collapse to points and
/// infinite endpoints are carried by the half-line variants only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RealSet {
    Empty,
    Points {
        values: Vec<f64>,
    },
    Interval {
        lo: f64,
        hi: f64,
        lo_closed: bool,
        hi_closed: bool,
    },
    /// `(-inf, bound]` or `(-inf, bound)`.
    HalfLineLeft {
        bound: f64,
        closed: bool,
    },
    /// `[bound, inf)` or `(bound, inf)`.
    HalfLineRight {
        bound: f64,
        closed: bool,
    },
    Union {
        parts: Vec<RealSet>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Seg {
    lo: f64,
    hi: f64,
    lo_closed: bool,
    hi_closed: bool,
}

impl Seg {
    fn is_point(&self) -> bool {
        self.lo == self.hi
    }

    fn into_set(self) -> RealSet {
        match (self.lo.is_finite(), self.hi.is_finite()) {
            (true, true) if self.is_point() => RealSet::Points {
                values: vec![self.lo],
            },
            (true, true) => RealSet::Interval {
                lo: self.lo,
                hi: self.hi,
                lo_closed: self.lo_closed,
                hi_closed: self.hi_closed,
            },
            (false, true) => RealSet::HalfLineLeft {
                bound: self.hi,
                closed: self.hi_closed,
            },
            (true, false) => RealSet::HalfLineRight {
                bound: self.lo,
                closed: self.lo_closed,
            },
            (false, false) => RealSet::Union {
                parts: vec![
                    RealSet::HalfLineLeft {
                        bound: 0.0,
                        closed: true,
                    },
                    RealSet::HalfLineRight {
                        bound: 0.0,
                        closed: false,
                    },
                ],
            },
        }
    }
}

impl RealSet {
    pub fn point(v: f64) -> Self {
        RealSet::Points { values: vec![v] }
    }

    /// Interval with the given endpoint closedness. `lo > hi` or an open
    /// degenerate interval yields `Empty`; a closed degenerate one yields a point.
    pub fn interval(lo: f64, hi: f64, lo_closed: bool, hi_closed: bool) -> Self {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return RealSet::Empty;
        }
        if lo == hi {
            return if lo_closed && hi_closed && lo.is_finite() {
                RealSet::point(lo)
            } else {
                RealSet::Empty
            };
        }
        Seg {
            lo,
            hi,
            lo_closed: lo_closed && lo.is_finite(),
            hi_closed: hi_closed && hi.is_finite(),
        }
        .into_set()
    }

    pub fn closed(lo: f64, hi: f64) -> Self {
        Self::interval(lo, hi, true, true)
    }

    pub fn half_line_left(bound: f64, closed: bool) -> Self {
        RealSet::HalfLineLeft { bound, closed }
    }

    pub fn half_line_right(bound: f64, closed: bool) -> Self {
        RealSet::HalfLineRight { bound, closed }
    }

    /// Normalized union. Pieces whose boundaries are within the tolerance of
    /// each other are merged when at least one side is closed; points closer
    /// than the tolerance are deduplicated.
    pub fn union_of<I: IntoIterator<Item = RealSet>>(parts: I, tol: Tolerance) -> Self {
        let mut segs = Vec::new();
        for p in parts {
            p.push_segs(&mut segs);
        }
        Self::from_segs(segs, tol)
    }

    pub fn union(&self, other: &RealSet, tol: Tolerance) -> Self {
        Self::union_of([self.clone(), other.clone()], tol)
    }

    fn push_segs(&self, out: &mut Vec<Seg>) {
        match self {
            RealSet::Empty => {}
            RealSet::Points { values } => out.extend(values.iter().map(|&v| Seg {
                lo: v,
                hi: v,
                lo_closed: true,
                hi_closed: true,
            })),
            &RealSet::Interval {
                lo,
                hi,
                lo_closed,
                hi_closed,
            } => {
                if lo < hi || (lo == hi && lo_closed && hi_closed) {
                    out.push(Seg {
                        lo,
                        hi,
                        lo_closed,
                        hi_closed,
                    })
                }
            }
            &RealSet::HalfLineLeft { bound, closed } => out.push(Seg {
                lo: f64::NEG_INFINITY,
                hi: bound,
                lo_closed: false,
                hi_closed: closed,
            }),
            &RealSet::HalfLineRight { bound, closed } => out.push(Seg {
                lo: bound,
                hi: f64::INFINITY,
                lo_closed: closed,
                hi_closed: false,
            }),
            RealSet::Union { parts } => parts.iter().for_each(|p| p.push_segs(out)),
        }
    }

    fn from_segs(mut segs: Vec<Seg>, tol: Tolerance) -> Self {
        segs.retain(|s| !s.lo.is_nan() && !s.hi.is_nan());
        segs.sort_by(|a, b| {
            a.lo.partial_cmp(&b.lo)
                .unwrap_or(Ordering::Equal)
                .then(b.lo_closed.cmp(&a.lo_closed))
        });
        let mut merged: Vec<Seg> = Vec::new();
        for s in segs {
            if let Some(last) = merged.last_mut() {
                let touching = last.hi == f64::INFINITY
                    || s.lo < last.hi
                    || (tol.eq(s.lo, last.hi) && (last.hi_closed || s.lo_closed));
                if touching {
                    if s.hi > last.hi && !s.is_point() {
                        last.hi = s.hi;
                        last.hi_closed = s.hi_closed;
                    } else if tol.eq(s.hi, last.hi) {
                        last.hi_closed |= s.hi_closed;
                    }
                    continue;
                }
            }
            merged.push(s);
        }
        match merged.len() {
            0 => RealSet::Empty,
            1 => merged[0].into_set(),
            _ if merged.iter().all(Seg::is_point) => RealSet::Points {
                values: merged.iter().map(|s| s.lo).collect(),
            },
            _ => RealSet::Union {
                parts: merged.into_iter().map(Seg::into_set).collect(),
            },
        }
    }

    pub fn is_empty(&self) -> bool {
        match self {
            RealSet::Empty => true,
            RealSet::Points { values } => values.is_empty(),
            &RealSet::Interval {
                lo,
                hi,
                lo_closed,
                hi_closed,
            } => lo > hi || (lo == hi && !(lo_closed && hi_closed)),
            RealSet::HalfLineLeft { .. } | RealSet::HalfLineRight { .. } => false,
            RealSet::Union { parts } => parts.iter().all(RealSet::is_empty),
        }
    }

    /// Connected components in increasing order; each point is its own component.
    pub fn components(&self) -> Vec<RealSet> {
        let mut segs = Vec::new();
        self.push_segs(&mut segs);
        segs.into_iter().map(Seg::into_set).collect()
    }

    pub fn component_count(&self) -> usize {
        let mut segs = Vec::new();
        self.push_segs(&mut segs);
        segs.len()
    }

    /// Membership with closed sides widened and open sides narrowed by the tolerance.
    pub fn contains(&self, v: f64, tol: Tolerance) -> bool {
        let mut segs = Vec::new();
        self.push_segs(&mut segs);
        segs.iter().any(|s| {
            let above = if s.lo.is_infinite() {
                true
            } else if s.lo_closed {
                tol.ge(v, s.lo)
            } else {
                tol.gt(v, s.lo)
            };
            let below = if s.hi.is_infinite() {
                true
            } else if s.hi_closed {
                tol.le(v, s.hi)
            } else {
                tol.lt(v, s.hi)
            };
            above && below
        })
    }

    /// Infimum, `-inf` for left half-lines and `None` for the empty set.
    pub fn inf(&self) -> Option<f64> {
        let mut segs = Vec::new();
        self.push_segs(&mut segs);
        segs.iter().map(|s| s.lo).reduce(f64::min)
    }

    /// Supremum, `inf` for right half-lines and `None` for the empty set.
    pub fn sup(&self) -> Option<f64> {
        let mut segs = Vec::new();
        self.push_segs(&mut segs);
        segs.iter().map(|s| s.hi).reduce(f64::max)
    }

    /// Representative members of every component. Bounded components get
    /// `per_component` evenly spaced points (open ends nudged inside);
    /// half-lines are sampled over a stretch of length `span` from the bound.
    pub fn sample(&self, per_component: usize, span: f64) -> Vec<f64> {
        let n = per_component.max(1);
        let mut segs = Vec::new();
        self.push_segs(&mut segs);
        let mut out = Vec::new();
        for s in segs {
            if s.is_point() {
                out.push(s.lo);
                continue;
            }
            let (lo, hi) = match (s.lo.is_finite(), s.hi.is_finite()) {
                (true, true) => (s.lo, s.hi),
                (false, true) => (s.hi - span, s.hi),
                (true, false) => (s.lo, s.lo + span),
                (false, false) => (-span, span),
            };
            let width = hi - lo;
            let inset = width * 1e-6;
            let a = if s.lo_closed || s.lo.is_infinite() {
                lo
            } else {
                lo + inset
            };
            let b = if s.hi_closed || s.hi.is_infinite() {
                hi
            } else {
                hi - inset
            };
            if n == 1 {
                out.push(0.5 * (a + b));
            } else {
                for i in 0..n {
                    out.push(a + (b - a) * i as f64 / (n - 1) as f64);
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const T: Tolerance = Tolerance(1e-9);

    #[test]
    fn degenerate_interval_collapses() {
        assert_eq!(RealSet::closed(2.0, 2.0), RealSet::point(2.0));
        assert_eq!(RealSet::interval(2.0, 2.0, true, false), RealSet::Empty);
        assert_eq!(RealSet::closed(3.0, 2.0), RealSet::Empty);
    }

    #[test]
    fn union_merges_and_sorts() {
        let s = RealSet::union_of(
            [
                RealSet::point(5.0),
                RealSet::closed(0.0, 1.0),
                RealSet::interval(1.0, 2.0, false, true),
                RealSet::point(5.0 + 1e-12),
            ],
            T,
        );
        assert_eq!(
            s,
            RealSet::Union {
                parts: vec![RealSet::closed(0.0, 2.0), RealSet::point(5.0)]
            }
        );
        assert_eq!(s.component_count(), 2);
    }

    #[test]
    fn open_ends_stay_apart() {
        let s = RealSet::union_of(
            [
                RealSet::interval(0.0, 1.0, true, false),
                RealSet::interval(1.0, 2.0, false, true),
            ],
            T,
        );
        assert_eq!(s.component_count(), 2);
        assert!(!s.contains(1.0, T));
    }

    #[test]
    fn point_absorbed_by_interval() {
        let s = RealSet::union_of([RealSet::closed(0.0, 4.0), RealSet::point(2.0)], T);
        assert_eq!(s, RealSet::closed(0.0, 4.0));
        let s = RealSet::union_of(
            [RealSet::half_line_right(1.0, true), RealSet::point(3.0)],
            T,
        );
        assert_eq!(s, RealSet::half_line_right(1.0, true));
    }

    #[test]
    fn points_stay_points() {
        let s = RealSet::union_of([RealSet::point(3.0), RealSet::point(1.0)], T);
        assert_eq!(
            s,
            RealSet::Points {
                values: vec![1.0, 3.0]
            }
        );
        assert_eq!(s.components().len(), 2);
    }

    #[test]
    fn membership_respects_closedness() {
        let s = RealSet::half_line_left(-2.0, true);
        assert!(s.contains(-2.0, T));
        assert!(s.contains(-100.0, T));
        assert!(!s.contains(-1.9, T));
        let s = RealSet::half_line_right(-2.0, false);
        assert!(!s.contains(-2.0, T));
        assert!(s.contains(-1.9, T));
        assert!(!RealSet::Empty.contains(0.0, T));
    }

    #[test]
    fn bounds_and_samples() {
        let s = RealSet::union_of([RealSet::half_line_left(0.0, true), RealSet::point(3.0)], T);
        assert_eq!(s.inf(), Some(f64::NEG_INFINITY));
        assert_eq!(s.sup(), Some(3.0));
        let pts = s.sample(3, 1.0);
        assert_eq!(pts, vec![-1.0, -0.5, 0.0, 3.0]);
        assert!(pts.iter().all(|&v| s.contains(v, T)));
        assert_eq!(RealSet::Empty.inf(), None);
    }

    #[test]
    fn serde_shape() {
        let s = RealSet::half_line_right(-2.0, true);
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(
            json,
            r#"{"type":"half_line_right","bound":-2.0,"closed":true}"#
        );
        let back: RealSet = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
    }
}
