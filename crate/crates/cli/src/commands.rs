use std::path::PathBuf;

use clap::{Args, ValueEnum};
use cournot_core::equilibria::RegionTag;
use cournot_core::model::price;
use cournot_core::oracle::{OracleVerdict, VerificationResult};
use cournot_core::spot::{spot_symmetric, symmetric_production};
use cournot_core::structure::{
    follower_gap, leader_driveout_interval, leader_jump, market_regime, stackelberg_gap,
    zero_supply_threshold, RegimeReport,
};
use cournot_core::{
    compare_markets, forward_equilibria, reactions, spot_iterative, stackelberg_equilibria,
    verify_forward_equilibrium, verify_stackelberg_equilibrium, ComparisonReport, EquilibriumSet,
    MarketParams, OracleConfig, ProductionLabel, ReactionResult, RealSet, Tolerance,
};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::output::Document;
use crate::scenario::Scenario;
use crate::{CliError, Result};

pub struct Report {
    pub document: Document,
    /// Some oracle check failed; `--strict` turns this into exit status 3.
    pub failed: bool,
}

impl From<Document> for Report {
    fn from(document: Document) -> Self {
        Report {
            document,
            failed: false,
        }
    }
}

#[derive(Args, Debug)]
pub struct ScenarioArgs {
    /// Scenario JSON file.
    #[arg(long)]
    pub scenario: PathBuf,
    /// Sample points per component of each equilibrium region.
    #[arg(long, default_value_t = 3)]
    pub samples: usize,
}

#[derive(Args, Debug)]
pub struct SpotArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// Follower forward positions: one value (symmetric) or N values.
    #[arg(
        long,
        value_delimiter = ',',
        allow_hyphen_values = true,
        required = true
    )]
    pub f: Vec<f64>,
    /// Leader productions: one value (symmetric) or M values.
    #[arg(long, value_delimiter = ',', required = true)]
    pub x: Vec<f64>,
}

#[derive(Args, Debug)]
pub struct FollowerReactionArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// Common leader production.
    #[arg(long)]
    pub x: f64,
}

#[derive(Args, Debug)]
pub struct LeaderReactionArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// Common follower forward position.
    #[arg(long, allow_hyphen_values = true)]
    pub f: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Market {
    Forward,
    Stackelberg,
    Both,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long, value_enum, default_value_t = Market::Both)]
    pub market: Market,
    /// Check this symmetric profile `f,x` instead of the computed equilibria (repeatable).
    #[arg(long = "profile", value_parser = parse_pair, allow_hyphen_values = true)]
    pub profiles: Vec<(f64, f64)>,
    /// Deviation grid step.
    #[arg(long, default_value_t = 1e-3)]
    pub grid_step: f64,
    /// Half-width of the follower forward-position deviation range.
    #[arg(long, default_value_t = 4.0)]
    pub radius: f64,
    /// Accepted gain; defaults to 1e-3 times the profit scale.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Sample points per component of each equilibrium region.
    #[arg(long, default_value_t = 2)]
    pub samples: usize,
    /// Exit with status 3 if any check fails.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Args, Debug)]
pub struct CurvesArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// Leader production grid for F(x); the upper end defaults to 1.5 alpha_x + k.
    #[arg(long, default_value_t = 0.0)]
    pub x_lo: f64,
    #[arg(long)]
    pub x_hi: Option<f64>,
    #[arg(long, default_value_t = 101)]
    pub x_steps: usize,
    /// Forward position grid for X(f); defaults to [-alpha_x - k, alpha_x + k].
    #[arg(long, allow_hyphen_values = true)]
    pub f_lo: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub f_hi: Option<f64>,
    #[arg(long, default_value_t = 101)]
    pub f_steps: usize,
}

fn parse_pair(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("expected `f,x`, got {s:?}"))?;
    let num = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}"));
    Ok((num(a)?, num(b)?))
}

/// Evenly spaced grid including both ends.
pub fn linspace(lo: f64, hi: f64, steps: usize) -> Result<Vec<f64>> {
    if !(lo.is_finite() && hi.is_finite() && lo < hi) || steps < 2 {
        return Err(CliError::Input(format!(
            "grid needs finite lo < hi and at least 2 steps (got {lo}, {hi}, {steps})"
        )));
    }
    let d = (hi - lo) / (steps - 1) as f64;
    Ok((0..steps)
        .map(|i| {
            if i + 1 == steps {
                hi
            } else {
                lo + d * i as f64
            }
        })
        .collect())
}

pub fn head(s: &Scenario, p: &MarketParams) -> Result<Document> {
    Document::default().field("scenario", s)?.field(
        "normalized",
        json!({
            "alpha_x": p.alpha_x(),
            "alpha_y": p.alpha_y(),
            "cost_gap": p.cost_gap(),
            "tolerance": p.tolerance().0,
        }),
    )
}

fn label_cells(l: &ProductionLabel, k: f64) -> (&'static str, f64) {
    match *l {
        ProductionLabel::Zero => ("zero", 0.0),
        ProductionLabel::Interior(y) => ("interior", y),
        ProductionLabel::AtCapacity => ("at_capacity", k),
    }
}

fn tag_name(t: RegionTag) -> String {
    format!("{t:?}")
}

/// `(type, lo, hi, lo_closed, hi_closed)` of one connected component.
fn component_cells(c: &RealSet) -> (&'static str, Option<f64>, Option<f64>, bool, bool) {
    match c {
        RealSet::Empty => ("empty", None, None, false, false),
        RealSet::Points { values } => (
            "point",
            values.first().copied(),
            values.first().copied(),
            true,
            true,
        ),
        RealSet::Interval {
            lo,
            hi,
            lo_closed,
            hi_closed,
        } => ("interval", Some(*lo), Some(*hi), *lo_closed, *hi_closed),
        RealSet::HalfLineLeft { bound, closed } => {
            ("half_line_left", None, Some(*bound), false, *closed)
        }
        RealSet::HalfLineRight { bound, closed } => {
            ("half_line_right", Some(*bound), None, *closed, false)
        }
        RealSet::Union { .. } => ("union", c.inf(), c.sup(), false, false),
    }
}

pub fn reaction_rows(r: &ReactionResult, k: f64) -> Vec<Value> {
    let comps = r.set.components();
    if comps.is_empty() {
        return vec![json!({
            "component": null, "type": "empty", "lo": null, "hi": null,
            "lo_closed": null, "hi_closed": null, "label": null, "y": null,
        })];
    }
    comps
        .iter()
        .zip(&r.labels)
        .enumerate()
        .map(|(i, (c, l))| {
            let (ty, lo, hi, lc, hc) = component_cells(c);
            let (label, y) = label_cells(l, k);
            json!({
                "component": i, "type": ty, "lo": lo, "hi": hi,
                "lo_closed": lc, "hi_closed": hc, "label": label, "y": y,
            })
        })
        .collect()
}

pub fn equilibrium_rows(set: &EquilibriumSet, p: &MarketParams, samples: usize) -> Vec<Value> {
    let m = p.leaders() as f64;
    let n = p.followers() as f64;
    set.sample_points(samples.max(1), p.quantity_scale())
        .into_iter()
        .map(|(tag, f, x)| {
            let y = symmetric_production(f, m * x, p);
            let total = m * x + n * y;
            let region = set
                .region(tag)
                .map(|r| label_cells(&r.y_label, p.capacity()).0);
            json!({
                "region": tag_name(tag), "f": f, "x": x, "y": y, "label": region,
                "total": total, "price": price(total, p),
            })
        })
        .collect()
}

pub fn regime_reports(p: &MarketParams) -> Vec<(&'static str, Option<RegimeReport>)> {
    vec![
        ("forward_market", Some(market_regime(p))),
        ("follower_reaction", Some(follower_gap(p))),
        ("leader_reaction", Some(leader_driveout_interval(p))),
        ("leader_jump", leader_jump(p).ok()),
        ("stackelberg", Some(stackelberg_gap(p))),
    ]
}

pub fn regime_rows(reports: &[(&'static str, Option<RegimeReport>)]) -> Vec<Value> {
    let mut rows = Vec::new();
    for (name, r) in reports {
        let Some(r) = r else { continue };
        let base = |rate: Option<&cournot_core::structure::RateCheck>| {
            json!({
                "report": name, "verdict": format!("{:?}", r.verdict), "lower": r.lower,
                "upper": r.upper, "y_bar": r.y_bar, "rate": rate.map(|c| c.name.clone()),
                "ratio": rate.map(|c| c.ratio), "bound": rate.and_then(|c| c.bound),
            })
        };
        if r.rates.is_empty() {
            rows.push(base(None));
        }
        rows.extend(r.rates.iter().map(|c| base(Some(c))));
    }
    rows
}

pub fn compare_row(r: &ComparisonReport, p: &MarketParams) -> Value {
    json!({
        "alpha_x": p.alpha_x(),
        "in_window": r.in_window,
        "window_lo": r.window.0,
        "window_hi": r.window.1,
        "forward_total": r.forward.total,
        "stackelberg_total": r.stackelberg.total,
        "forward_welfare": r.forward_welfare_min.welfare,
        "stackelberg_welfare": r.stackelberg_welfare_max.welfare,
        "production_ratio": r.production_ratio,
        "welfare_ratio": r.welfare_ratio,
        "forward_inefficient": r.forward_inefficient(),
        "production_bound": r.bounds.map(|b| b.production),
        "welfare_bound": r.bounds.map(|b| b.welfare),
    })
}

pub struct VerifySettings {
    pub market: Market,
    pub profiles: Vec<(f64, f64)>,
    pub grid_step: f64,
    pub radius: f64,
    pub epsilon: Option<f64>,
    pub samples: usize,
}

impl VerifySettings {
    pub fn config(&self, p: &MarketParams) -> Result<OracleConfig> {
        let eps = self.epsilon.unwrap_or(1e-3 * p.profit_scale());
        Ok(OracleConfig::new(self.grid_step, self.radius, eps)?)
    }
}

fn verdict_cells(v: &VerificationResult) -> Value {
    let (verdict, agent, deviation, gain) = match v.verdict {
        OracleVerdict::Pass => ("pass", None, None, None),
        OracleVerdict::Fail {
            agent,
            deviation,
            gain,
        } => (
            "fail",
            Some(serde_json::to_value(agent).unwrap_or(Value::Null)),
            Some(deviation),
            Some(gain),
        ),
        OracleVerdict::Inconclusive { .. } => ("inconclusive", None, None, None),
    };
    let agent = agent.map(|a| match (a.get("kind"), a.get("index")) {
        (Some(k), Some(i)) => format!("{}:{}", k.as_str().unwrap_or(""), i),
        _ => a.to_string(),
    });
    json!({
        "verdict": verdict, "agent": agent, "deviation": deviation, "gain": gain,
        "leader_max_gain": v.leader_max_gain, "follower_max_gain": v.follower_max_gain,
        "leader_best_deviation": v.leader_best_deviation,
        "follower_best_deviation": v.follower_best_deviation,
    })
}

/// Rows of oracle checks and whether any failed.
pub fn verify_rows(p: &MarketParams, s: &VerifySettings) -> Result<(Vec<Value>, bool)> {
    let cfg = s.config(p)?;
    let mut jobs: Vec<(&'static str, Option<String>, f64, f64)> = Vec::new();
    if !s.profiles.is_empty() {
        jobs.extend(s.profiles.iter().map(|&(f, x)| ("forward", None, f, x)));
    } else {
        let span = p.quantity_scale();
        if s.market != Market::Stackelberg {
            for (t, f, x) in forward_equilibria(p)?.sample_points(s.samples.max(1), span) {
                jobs.push(("forward", Some(tag_name(t)), f, x));
            }
        }
        if s.market != Market::Forward {
            for (t, f, x) in stackelberg_equilibria(p)?.sample_points(s.samples.max(1), span) {
                jobs.push(("stackelberg", Some(tag_name(t)), f, x));
            }
        }
    }
    let results: Vec<Result<(Value, bool)>> = jobs
        .par_iter()
        .map(|(market, tag, f, x)| {
            let v = if *market == "stackelberg" {
                verify_stackelberg_equilibrium(*x, p, &cfg)?
            } else {
                verify_forward_equilibrium(*f, *x, p, &cfg)?
            };
            let mut row = json!({"market": market, "region": tag, "f": f, "x": x});
            if let (Value::Object(m), Value::Object(extra)) = (&mut row, verdict_cells(&v)) {
                m.extend(extra);
            }
            Ok((row, matches!(v.verdict, OracleVerdict::Fail { .. })))
        })
        .collect();
    let mut rows = Vec::with_capacity(results.len());
    let mut failed = false;
    for r in results {
        let (row, bad) = r?;
        failed |= bad;
        rows.push(row);
    }
    Ok((rows, failed))
}

pub fn spot(a: &SpotArgs, tol: Tolerance) -> Result<Report> {
    let (s, p) = Scenario::load(&a.scenario, tol)?;
    let (m, n) = (p.leaders() as usize, p.followers() as usize);
    let widen = |v: &[f64], len: usize, name: &str| -> Result<Vec<f64>> {
        match v.len() {
            1 => Ok(vec![v[0]; len]),
            l if l == len => Ok(v.to_vec()),
            l => Err(CliError::Input(format!(
                "--{name}: expected 1 or {len} values, got {l}"
            ))),
        }
    };
    let f = widen(&a.f, n, "f")?;
    let x = widen(&a.x, m, "x")?;
    if x.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || f.iter().any(|v| !v.is_finite()) {
        return Err(CliError::Input(
            "--x must be non-negative and all values finite".into(),
        ));
    }
    let out = if f.iter().all(|&v| v == f[0]) {
        spot_symmetric(f[0], &x, &p)
    } else {
        spot_iterative(&f, &x, &p, &OracleConfig::default())?
    };
    let rows = out
        .y
        .iter()
        .zip(&f)
        .enumerate()
        .map(|(j, (&y, &fj))| {
            let label = label_cells(&ProductionLabel::classify(y, &p), p.capacity()).0;
            json!({"follower": j, "f": fj, "y": y, "label": label})
        })
        .collect();
    Ok(head(&s, &p)?
        .field("f", &f)?
        .field("x", &x)?
        .field("total_q", out.total_q)?
        .field("price", out.price)?
        .field("converged", out.converged)?
        .rows(rows)
        .into())
}

pub fn follower_reaction(a: &FollowerReactionArgs, tol: Tolerance) -> Result<Report> {
    let (s, p) = Scenario::load(&a.scenario, tol)?;
    let r = reactions::follower_reaction(a.x, &p)?;
    let rows = reaction_rows(&r, p.capacity());
    Ok(head(&s, &p)?
        .field("x", a.x)?
        .field("reaction", &r)?
        .rows(rows)
        .into())
}

pub fn leader_reaction(a: &LeaderReactionArgs, tol: Tolerance) -> Result<Report> {
    let (s, p) = Scenario::load(&a.scenario, tol)?;
    let r = reactions::leader_reaction(a.f, &p)?;
    let rows = reaction_rows(&r, p.capacity());
    Ok(head(&s, &p)?
        .field("f", a.f)?
        .field("reaction", &r)?
        .rows(rows)
        .into())
}

pub fn equilibria(a: &ScenarioArgs, tol: Tolerance, stackelberg: bool) -> Result<Report> {
    let (s, p) = Scenario::load(&a.scenario, tol)?;
    let set = if stackelberg {
        stackelberg_equilibria(&p)?
    } else {
        forward_equilibria(&p)?
    };
    let rows = equilibrium_rows(&set, &p, a.samples);
    Ok(head(&s, &p)?.field("equilibria", &set)?.rows(rows).into())
}

pub fn regimes(a: &ScenarioArgs, tol: Tolerance) -> Result<Report> {
    let (s, p) = Scenario::load(&a.scenario, tol)?;
    let reports = regime_reports(&p);
    let main = market_regime(&p);
    let mut doc = head(&s, &p)?
        .field("verdict", main.verdict)?
        .field("window", [main.lower, main.upper])?;
    let mut all = serde_json::Map::new();
    for (name, r) in &reports {
        all.insert(name.to_string(), serde_json::to_value(r)?);
    }
    doc = doc
        .field("reports", all)?
        .field("zero_supply", zero_supply_threshold(&p))?;
    Ok(doc.rows(regime_rows(&reports)).into())
}

pub fn compare(a: &ScenarioArgs, tol: Tolerance) -> Result<Report> {
    let (s, p) = Scenario::load(&a.scenario, tol)?;
    let r = compare_markets(&p)?;
    let row = compare_row(&r, &p);
    Ok(head(&s, &p)?
        .field("comparison", &r)?
        .rows(vec![row])
        .into())
}

pub fn verify(a: &VerifyArgs, tol: Tolerance) -> Result<Report> {
    let (s, p) = Scenario::load(&a.scenario, tol)?;
    let settings = VerifySettings {
        market: a.market,
        profiles: a.profiles.clone(),
        grid_step: a.grid_step,
        radius: a.radius,
        epsilon: a.epsilon,
        samples: a.samples,
    };
    let cfg = settings.config(&p)?;
    let (rows, failed) = verify_rows(&p, &settings)?;
    let document = head(&s, &p)?
        .field("config", cfg)?
        .field("passed", !failed)?
        .rows(rows);
    Ok(Report {
        document,
        failed: failed && a.strict,
    })
}

pub fn curves(a: &CurvesArgs, tol: Tolerance) -> Result<Report> {
    let (s, p) = Scenario::load(&a.scenario, tol)?;
    let (ax, k) = (p.alpha_x(), p.capacity());
    let xs = linspace(a.x_lo, a.x_hi.unwrap_or(1.5 * ax + k), a.x_steps)?;
    let fs = linspace(
        a.f_lo.unwrap_or(-ax - k),
        a.f_hi.unwrap_or(ax + k),
        a.f_steps,
    )?;
    if xs[0] < 0.0 {
        return Err(CliError::Input("--x-lo must be non-negative".into()));
    }
    let mut rows = Vec::new();
    for (curve, grid) in [("F", &xs), ("X", &fs)] {
        let blocks: Vec<Result<Vec<Value>>> = grid
            .par_iter()
            .map(|&v| {
                let r = if curve == "F" {
                    reactions::follower_reaction(v, &p)?
                } else {
                    reactions::leader_reaction(v, &p)?
                };
                Ok(prefix(
                    &[("curve", json!(curve)), ("input", json!(v))],
                    reaction_rows(&r, k),
                ))
            })
            .collect();
        for b in blocks {
            rows.extend(b?);
        }
    }
    Ok(head(&s, &p)?.rows(rows).into())
}

/// Prepends fixed columns to each row.
pub fn prefix(cols: &[(&str, Value)], rows: Vec<Value>) -> Vec<Value> {
    rows.into_iter()
        .map(|r| {
            let mut m = serde_json::Map::new();
            for (k, v) in cols {
                m.insert(k.to_string(), v.clone());
            }
            if let Value::Object(rest) = r {
                m.extend(rest);
            }
            Value::Object(m)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linspace_hits_both_ends() {
        let g = linspace(12.0, 20.0, 9).unwrap();
        assert_eq!(g, [12.0, 13.0, 14.0, 15.0, 16.0, 17.0, 18.0, 19.0, 20.0]);
        assert!(linspace(1.0, 1.0, 3).is_err());
        assert!(linspace(0.0, 1.0, 1).is_err());
    }

    #[test]
    fn reaction_rows_cover_empty_and_half_lines() {
        let p = MarketParams::normalized(8.0, 0.0, 1, 2, 1.0).unwrap();
        let rows = reaction_rows(&cournot_core::follower_reaction(5.5, &p).unwrap(), 1.0);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0]["type"], "empty");
        let rows = reaction_rows(&cournot_core::follower_reaction(1.0, &p).unwrap(), 1.0);
        assert_eq!(rows[0]["type"], "half_line_right");
        assert_eq!(rows[0]["hi"], Value::Null);
        assert_eq!(rows[0]["lo"], json!(-4.0));
        assert_eq!(rows[0]["label"], "at_capacity");
    }

    #[test]
    fn jump_points_give_two_rows() {
        let p = MarketParams::normalized(40.0, 0.0, 1, 2, 1.0).unwrap();
        let eta2 = -20.0 + 39f64.sqrt();
        let rows = reaction_rows(&cournot_core::leader_reaction(eta2, &p).unwrap(), 1.0);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0]["y"], json!(1.0));
        assert_eq!(rows[1]["label"], "zero");
    }

    #[test]
    fn parse_pair_accepts_negative() {
        assert_eq!(parse_pair("-1.5, 2").unwrap(), (-1.5, 2.0));
        assert!(parse_pair("1").is_err());
    }
}
