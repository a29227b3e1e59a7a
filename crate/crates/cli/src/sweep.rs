use std::path::PathBuf;

use clap::{Args, ValueEnum};
use cournot_core::{
    compare_markets, follower_reaction, forward_equilibria, leader_reaction, MarketParams,
    Tolerance,
};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::commands::{
    compare_row, equilibrium_rows, head, linspace, prefix, reaction_rows, regime_reports,
    regime_rows, verify_rows, Market, Report, VerifySettings,
};
use crate::output::Document;
use crate::scenario::Scenario;
use crate::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum SweepParam {
    #[value(name = "alpha")]
    #[serde(rename = "alpha")]
    Alpha,
    #[value(name = "k")]
    #[serde(rename = "k")]
    Capacity,
    #[value(name = "M")]
    #[serde(rename = "M")]
    Leaders,
    #[value(name = "N")]
    #[serde(rename = "N")]
    Followers,
    #[value(name = "c")]
    #[serde(rename = "c")]
    FollowerCost,
    #[value(name = "C")]
    #[serde(rename = "C")]
    LeaderCost,
}

impl SweepParam {
    fn name(self) -> &'static str {
        match self {
            SweepParam::Alpha => "alpha",
            SweepParam::Capacity => "k",
            SweepParam::Leaders => "M",
            SweepParam::Followers => "N",
            SweepParam::FollowerCost => "c",
            SweepParam::LeaderCost => "C",
        }
    }

    fn integer(self) -> bool {
        matches!(self, SweepParam::Leaders | SweepParam::Followers)
    }

    fn apply(self, base: &Scenario, v: f64) -> Scenario {
        let mut s = *base;
        match self {
            SweepParam::Alpha => s.alpha = v,
            SweepParam::Capacity => s.k = v,
            SweepParam::Leaders => s.leaders = v as u32,
            SweepParam::Followers => s.followers = v as u32,
            SweepParam::FollowerCost => s.follower_cost = v,
            SweepParam::LeaderCost => s.leader_cost = v,
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepOutput {
    Equilibria,
    Reactions,
    Regimes,
    Compare,
    Verify,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// Base scenario; defaults to alpha=9, beta=1, C=c=1, M=1, N=2, k=3.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub param: SweepParam,
    #[arg(long, requires_all = ["hi", "steps"], conflicts_with = "values", allow_hyphen_values = true)]
    pub lo: Option<f64>,
    #[arg(long, requires_all = ["lo", "steps"], allow_hyphen_values = true)]
    pub hi: Option<f64>,
    #[arg(long, requires_all = ["lo", "hi"])]
    pub steps: Option<usize>,
    /// Explicit comma-separated values (required for M and N).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub values: Vec<f64>,
    /// Analyses to run at each point (comma-separated).
    #[arg(long, value_enum, value_delimiter = ',', default_value = "equilibria")]
    pub output: Vec<SweepOutput>,
    /// Leader production at which `reactions` evaluates F.
    #[arg(long, default_value_t = 0.0)]
    pub x: f64,
    /// Forward position at which `reactions` evaluates X.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub f: f64,
    /// Sample points per equilibrium component.
    #[arg(long, default_value_t = 2)]
    pub samples: usize,
}

/// A validated one-parameter sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub values: Vec<f64>,
    pub outputs: Vec<SweepOutput>,
}

impl SweepSpec {
    pub fn from_args(a: &SweepArgs) -> Result<Self> {
        let bad = |m: String| Err(CliError::Input(m));
        let values = match (a.lo, a.hi, a.steps, a.values.is_empty()) {
            (Some(lo), Some(hi), Some(steps), true) => {
                if a.param.integer() {
                    return bad(format!(
                        "--param {} is an integer; give --values",
                        a.param.name()
                    ));
                }
                linspace(lo, hi, steps)?
            }
            (None, None, None, false) => a.values.clone(),
            _ => return bad("give either --lo/--hi/--steps or --values".into()),
        };
        if a.param.integer() {
            if let Some(v) = values
                .iter()
                .find(|v| v.fract() != 0.0 || **v < 0.0 || **v > u32::MAX as f64)
            {
                return bad(format!(
                    "--param {}: {v} is not a non-negative integer",
                    a.param.name()
                ));
            }
        }
        let mut outputs = a.output.clone();
        outputs.dedup();
        Ok(SweepSpec {
            param: a.param,
            values,
            outputs,
        })
    }
}

fn point_rows(p: &MarketParams, plan: &SweepSpec, a: &SweepArgs) -> Result<Vec<Value>> {
    let mut rows = Vec::new();
    for out in &plan.outputs {
        let tag = json!(out);
        let block = (|| -> Result<Vec<Value>> {
            Ok(match out {
                SweepOutput::Equilibria => equilibrium_rows(&forward_equilibria(p)?, p, a.samples),
                SweepOutput::Reactions => {
                    let mut r = prefix(
                        &[("curve", json!("F")), ("input", json!(a.x))],
                        reaction_rows(&follower_reaction(a.x, p)?, p.capacity()),
                    );
                    r.extend(prefix(
                        &[("curve", json!("X")), ("input", json!(a.f))],
                        reaction_rows(&leader_reaction(a.f, p)?, p.capacity()),
                    ));
                    r
                }
                SweepOutput::Regimes => regime_rows(&regime_reports(p)),
                SweepOutput::Compare => vec![compare_row(&compare_markets(p)?, p)],
                SweepOutput::Verify => {
                    let settings = VerifySettings {
                        market: Market::Both,
                        profiles: Vec::new(),
                        grid_step: 1e-3,
                        radius: 4.0,
                        epsilon: None,
                        samples: a.samples,
                    };
                    verify_rows(p, &settings)?.0
                }
            })
        })();
        let block = match block {
            Ok(b) => b,
            Err(CliError::Model(e)) => vec![json!({ "error": e.to_string() })],
            Err(e) => return Err(e),
        };
        rows.extend(prefix(&[("output", tag)], block));
    }
    Ok(rows)
}

pub fn run(a: &SweepArgs, tol: Tolerance) -> Result<Report> {
    let plan = SweepSpec::from_args(a)?;
    let (base, base_params) = match &a.scenario {
        Some(path) => Scenario::load(path, tol)?,
        None => (Scenario::DEFAULT, Scenario::DEFAULT.params(tol)?),
    };
    let name = plan.param.name();
    let blocks: Vec<Result<Vec<Value>>> = plan
        .values
        .par_iter()
        .map(|&v| {
            let s = plan.param.apply(&base, v);
            let p = s
                .params(tol)
                .map_err(|e| CliError::Input(format!("{name} = {v}: {e}")))?;
            let value = if plan.param.integer() {
                json!(v as u32)
            } else {
                json!(v)
            };
            Ok(prefix(&[(name, value)], point_rows(&p, &plan, a)?))
        })
        .collect();
    let mut rows = Vec::new();
    for b in blocks {
        rows.extend(b?);
    }
    let document: Document = head(&base, &base_params)?.field("sweep", &plan)?.rows(rows);
    Ok(document.into())
}
