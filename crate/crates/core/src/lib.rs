//! Symmetric equilibria of a two-stage Cournot market with leaders and
//! capacity-constrained followers.
//!
//! `M` leaders commit their productions in a forward stage. `N` followers,
//! each with capacity `k`, sell forward contracts in the same stage and then
//! choose productions in a spot stage. Demand is linear, `P(q) = alpha - beta*q`.
//!
//! The crate provides:
//!
//! * [`model`]: market primitives, the clamp operator and the three profit functions.
//! * [`spot`]: closed-form spot-stage equilibria (symmetric and one-deviator).
//! * [`reactions`]: set-valued symmetric reaction correspondences `F(x)` and `X(f)`.
//! * [`equilibria`]: the forward-market equilibrium set `Q` and the Stackelberg set `X(0)`.
//! * [`structure`]: thresholds, existence/multiplicity regimes and finite-size rate ratios.
//! * [`welfare`]: social welfare and the forward-vs-Stackelberg inefficiency comparison.
//! * [`oracle`]: brute-force best-response checks independent of the closed forms.
//!
//! The crate is `no_std` and only needs `alloc`.
#![no_std]
#![deny(unsafe_code)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod equilibria;
pub mod model;
pub mod oracle;
pub mod reactions;
pub mod set;
pub mod spot;
pub mod structure;
pub mod welfare;

mod math;

pub use model::{MarketParams, ModelError, ProductionLabel, StrategyProfile, Tolerance};

pub use equilibria::{forward_equilibria, stackelberg_equilibria, EquilibriumSet};
pub use oracle::{
    certify_symmetric_profiles, certify_until, exact_gains, scan_symmetric_profiles,
    spot_iterative, verify_forward_equilibrium, verify_stackelberg_equilibrium, OracleConfig,
};
pub use reactions::{follower_reaction, leader_reaction, ReactionResult};
pub use set::RealSet;
pub use spot::SpotOutcome;
pub use structure::RegimeReport;
pub use welfare::{compare_markets, social_welfare, ComparisonReport};
