use std::path::Path;

use cournot_core::{MarketParams, ModelError, Tolerance};
use serde::{Deserialize, Serialize};

use crate::{CliError, Result};

pub const TOLERANCE_VAR: &str = "COURNOT_TOLERANCE";

/// Market scenario as read from a JSON file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub alpha: f64,
    pub beta: f64,
    #[serde(rename = "C")]
    pub leader_cost: f64,
    #[serde(rename = "c")]
    pub follower_cost: f64,
    #[serde(rename = "M")]
    pub leaders: u32,
    #[serde(rename = "N")]
    pub followers: u32,
    pub k: f64,
}

impl Scenario {
    pub const DEFAULT: Scenario = Scenario {
        alpha: 9.0,
        beta: 1.0,
        leader_cost: 1.0,
        follower_cost: 1.0,
        leaders: 1,
        followers: 2,
        k: 3.0,
    };

    pub fn params(&self, tol: Tolerance) -> std::result::Result<MarketParams, ModelError> {
        Ok(MarketParams::new(
            self.alpha,
            self.beta,
            self.leader_cost,
            self.follower_cost,
            self.leaders,
            self.followers,
            self.k,
        )?
        .with_tolerance(tol))
    }

    pub fn load(path: &Path, tol: Tolerance) -> Result<(Scenario, MarketParams)> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string(), tol)
    }

    /// Parses and validates, reporting `origin:line[:column]` on failure.
    pub fn parse(text: &str, origin: &str, tol: Tolerance) -> Result<(Scenario, MarketParams)> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| {
            let msg = e.to_string();
            let msg = msg
                .rsplit_once(" at line ")
                .map_or(msg.as_str(), |(m, _)| m);
            CliError::Input(format!("{origin}:{}:{}: {msg}", e.line(), e.column()))
        })?;
        let p = s.params(tol).map_err(|e| match e {
            ModelError::InvalidParameter { name, reason } => CliError::Input(format!(
                "{origin}:{}: field `{name}`: {reason}",
                key_line(text, name)
            )),
            other => other.into(),
        })?;
        Ok((s, p))
    }
}

fn key_line(text: &str, key: &str) -> usize {
    let quoted = format!("\"{key}\"");
    text.lines()
        .position(|l| l.contains(&quoted))
        .map_or(1, |i| i + 1)
}

pub fn env_tolerance() -> Result<Tolerance> {
    match std::env::var(TOLERANCE_VAR) {
        Err(_) => Ok(Tolerance::default()),
        Ok(v) => match v.trim().parse::<f64>() {
            Ok(t) if t.is_finite() && t > 0.0 => Ok(Tolerance(t)),
            _ => Err(CliError::Input(format!(
                "{TOLERANCE_VAR}: expected a positive number, got {v:?}"
            ))),
        },
    }
}
