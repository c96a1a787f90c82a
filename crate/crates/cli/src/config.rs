//! Run configuration: JSON schema, defaults, validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sqrtdiff::model::CubicSpline;
use sqrtdiff::{Coefficient, CoefficientSet};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Bounds,
    CirDensity,
    Classify,
    Simulate,
    Estimate,
    VerifyTail,
    VerifyZero,
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Bounds => "bounds",
            Command::CirDensity => "cir-density",
            Command::Classify => "classify",
            Command::Simulate => "simulate",
            Command::Estimate => "estimate",
            Command::VerifyTail => "verify-tail",
            Command::VerifyZero => "verify-zero",
            Command::Report => "report",
        }
    }
}

/// Coefficient family. Polynomial coefficients are listed from the constant
/// term up; tabulated ones share one knot vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelConfig {
    Constant {
        a: f64,
        b: f64,
        gamma: f64,
        alpha: f64,
    },
    Polynomial {
        a: Vec<f64>,
        b: Vec<f64>,
        gamma: Vec<f64>,
        alpha: f64,
        #[serde(default)]
        eta: f64,
    },
    Tabulated {
        knots: Vec<f64>,
        a: Vec<f64>,
        b: Vec<f64>,
        gamma: Vec<f64>,
        alpha: f64,
        #[serde(default)]
        eta: f64,
    },
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::Constant {
            a: 1.0,
            b: 1.0,
            gamma: 1.0,
            alpha: 0.5,
        }
    }
}

impl ModelConfig {
    pub fn build(&self) -> Result<CoefficientSet, CliError> {
        let field = |e: sqrtdiff::Error, name: &str| {
            CliError::validation(format!("model.{name}"), e.to_string())
        };
        let set = match self {
            ModelConfig::Constant { a, b, gamma, alpha } => {
                CoefficientSet::constant(*a, *b, *gamma, *alpha)
            }
            ModelConfig::Polynomial {
                a,
                b,
                gamma,
                alpha,
                eta,
            } => CoefficientSet::new(
                Coefficient::Polynomial(a.clone()),
                Coefficient::Polynomial(b.clone()),
                Coefficient::Polynomial(gamma.clone()),
                *alpha,
                *eta,
            ),
            ModelConfig::Tabulated {
                knots,
                a,
                b,
                gamma,
                alpha,
                eta,
            } => {
                let spline = |v: &Vec<f64>, name: &str| {
                    CubicSpline::new(knots.clone(), v.clone())
                        .map(Coefficient::Spline)
                        .map_err(|e| field(e, name))
                };
                CoefficientSet::new(
                    spline(a, "a")?,
                    spline(b, "b")?,
                    spline(gamma, "gamma")?,
                    *alpha,
                    *eta,
                )
            }
        };
        set.map_err(|e| {
            let name = match &e {
                sqrtdiff::Error::InvalidParameter { name, .. } => *name,
                _ => "model",
            };
            match e {
                sqrtdiff::Error::InvalidParameter { reason, .. } => {
                    CliError::validation(format!("model.{name}"), reason)
                }
                other => field(other, name),
            }
        })
    }

    pub fn alpha(&self) -> f64 {
        match self {
            ModelConfig::Constant { alpha, .. }
            | ModelConfig::Polynomial { alpha, .. }
            | ModelConfig::Tabulated { alpha, .. } => *alpha,
        }
    }

    /// `(a, b, γ)` for the constant CIR family (α = 1/2).
    pub fn constant_cir(&self) -> Option<(f64, f64, f64)> {
        match *self {
            ModelConfig::Constant {
                a,
                b,
                gamma,
                alpha: 0.5,
            } => Some((a, b, gamma)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
    #[serde(default)]
    pub log: bool,
}

impl GridSpec {
    pub fn points(&self) -> Vec<f64> {
        if self.n == 1 {
            return vec![self.lo];
        }
        (0..self.n)
            .map(|i| {
                let s = i as f64 / (self.n - 1) as f64;
                if self.log {
                    self.lo * (self.hi / self.lo).powf(s)
                } else {
                    self.lo + (self.hi - self.lo) * s
                }
            })
            .collect()
    }

    /// Parses `lo:hi:n`, with an optional `:log` suffix.
    pub fn parse(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        if !(3..=4).contains(&parts.len()) {
            return Err(format!("expected lo:hi:n[:log], got {s}"));
        }
        let num = |t: &str| t.parse::<f64>().map_err(|e| format!("{t}: {e}"));
        let log = match parts.get(3) {
            None => false,
            Some(&"log") => true,
            Some(other) => return Err(format!("unknown grid flag {other}")),
        };
        Ok(GridSpec {
            lo: num(parts[0])?,
            hi: num(parts[1])?,
            n: parts[2].parse().map_err(|e| format!("{}: {e}", parts[2]))?,
            log,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeName {
    Euler,
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum MethodName {
    Kde,
    KdeLog,
    FourierLocal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SourceName {
    /// Closed-form CIR density (constant coefficients, α = 1/2).
    Analytic,
    /// Log-kernel estimate from simulated terminal states.
    Samples,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskConfig {
    /// Optional; must match the subcommand when present.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    pub x0: f64,
    pub t: f64,
    /// Bound evaluation: dimension, derivative order, centre, radius.
    pub m: u32,
    pub k: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y0: Option<f64>,
    pub radius: f64,
    /// Use every norm equal to this value instead of the model's norms.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub norm_value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    pub scheme: SchemeName,
    pub method: MethodName,
    pub source: SourceName,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y_range: Option<[f64; 2]>,
    pub cpoint: f64,
    pub write_paths: bool,
    pub p_orders: Vec<f64>,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            command: None,
            x0: 1.0,
            t: 1.0,
            m: 1,
            k: 3,
            y0: None,
            radius: 1.0,
            norm_value: None,
            grid: None,
            scheme: SchemeName::Euler,
            method: MethodName::KdeLog,
            source: SourceName::Analytic,
            y_range: None,
            cpoint: 1.0,
            write_paths: false,
            p_orders: sqrtdiff::verify::POLYDECAY_ORDERS.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Numerics {
    pub steps: usize,
    pub paths: usize,
    pub kappa: f64,
    pub gamma0: f64,
    pub grid_points: usize,
    pub xi_step: f64,
    /// Fixed ξ cutoff; adaptive at the noise floor when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub xi_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<f64>,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            steps: 512,
            paths: 100_000,
            kappa: 1.0,
            gamma0: 0.25,
            grid_points: 400,
            xi_step: sqrtdiff::density::XI_STEP,
            xi_max: None,
            bandwidth: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub task: TaskConfig,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default)]
    pub seed: u64,
    /// Where artifacts go. Not part of the run's identity: left out of the
    /// echoed config and the hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

/// Parses configuration text. Syntax errors carry line and column; schema
/// errors (unknown keys, wrong types) and range errors name the field.
pub fn parse_config(text: &str, origin: &str) -> Result<RunConfig, CliError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| CliError::Parse {
        origin: origin.to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let cfg: RunConfig = serde_json::from_value(value).map_err(|e| {
        let msg = e.to_string();
        let field = msg
            .split('`')
            .nth(1)
            .filter(|_| msg.starts_with("unknown field") || msg.starts_with("missing field"))
            .unwrap_or("config")
            .to_string();
        CliError::validation(field, msg)
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text, &path.display().to_string())
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        self.model.build()?;
        let t = &self.task;
        let n = &self.numerics;
        let check = |ok: bool, field: &str, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(CliError::validation(field, msg))
            }
        };
        check(t.t > 0.0 && t.t.is_finite(), "task.t", "t must be > 0")?;
        check(t.x0 > 0.0 && t.x0.is_finite(), "task.x0", "x0 must be > 0")?;
        check(
            t.radius > 0.0 && t.radius <= 1.0,
            "task.radius",
            "R must lie in (0, 1]",
        )?;
        check(t.m >= 1, "task.m", "m must be >= 1")?;
        check(t.cpoint > 0.0, "task.cpoint", "cpoint must be > 0")?;
        check(
            t.norm_value.map_or(true, |v| v >= 1.0),
            "task.norm_value",
            "norms are >= 1",
        )?;
        check(
            t.p_orders.iter().all(|p| *p >= 0.0),
            "task.p_orders",
            "orders must be >= 0",
        )?;
        if let Some(g) = &t.grid {
            check(
                g.n >= 1 && g.hi >= g.lo && (!g.log || g.lo > 0.0),
                "task.grid",
                "need lo <= hi, n >= 1, lo > 0 on log grids",
            )?;
        }
        if let Some([lo, hi]) = t.y_range {
            check(hi > lo, "task.y_range", "need lo < hi")?;
        }
        check(n.steps >= 1, "numerics.steps", "steps must be >= 1")?;
        check(n.paths >= 1, "numerics.paths", "paths must be >= 1")?;
        check(n.kappa > 0.0, "numerics.kappa", "kappa must be > 0")?;
        check(
            n.gamma0 > 0.0 && n.gamma0 < 0.5,
            "numerics.gamma0",
            "gamma0 must lie in (0, 1/2)",
        )?;
        check(
            n.grid_points >= 2,
            "numerics.grid_points",
            "need at least two grid points",
        )?;
        check(n.xi_step > 0.0, "numerics.xi_step", "xi_step must be > 0")?;
        check(
            n.xi_max.map_or(true, |x| x > n.xi_step),
            "numerics.xi_max",
            "xi_max must exceed xi_step",
        )?;
        check(
            n.bandwidth.map_or(true, |h| h > 0.0),
            "numerics.bandwidth",
            "bandwidth must be > 0",
        )?;
        Ok(())
    }

    /// The config as echoed into artifacts: the output directory removed.
    pub fn canonical(&self) -> RunConfig {
        RunConfig {
            output: None,
            ..self.clone()
        }
    }

    /// SHA-256 of the canonical config's compact JSON.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let text = serde_json::to_string(&self.canonical()).expect("config serialises");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}
