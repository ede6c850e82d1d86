//! Run configuration: a flat TOML table of run parameters with defaults,
//! range checks and rejection of unknown keys.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::anderson::GammaConfig;
use crate::besov::DyadicPartition;
use crate::error::{PcfError, Result};
use crate::field::GridSpec;
use crate::paracalc::LocalizationParams;
use crate::regularity::LadderCriteria;
use crate::variational::{DescentConfig, Nonlinearity};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub n: usize,
    pub mu: f64,
    pub seed: u64,
    pub eps: f64,
    pub kappa: f64,
    /// Exponent `α` of the paracontrolled space, also the contraction norm.
    pub alpha: f64,
    /// `zero`, `cubic:C3`, `double_well:A,B` or `table:S=F,...`.
    pub nl: String,
    /// Descent stopping tolerance on `‖𝓛^{-1/2}g‖`.
    pub tol: f64,
    pub max_iter: usize,
    pub gamma_tol: f64,
    pub gamma_max_iter: usize,
    /// Localization thresholds; chosen by probing when absent.
    pub threshold_l: Option<i32>,
    pub threshold_k: Option<i32>,
    pub margin: f64,
    pub pass_rate: f64,
    pub out_dir: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let d = DescentConfig::default();
        let g = GammaConfig::default();
        let l = LadderCriteria::default();
        RunConfig {
            n: 128,
            mu: 1.0,
            seed: 1,
            eps: 0.0,
            kappa: 0.1,
            alpha: 0.8,
            nl: "cubic:0.3333333333333333".into(),
            tol: d.tol,
            max_iter: d.max_iter,
            gamma_tol: g.tol,
            gamma_max_iter: g.max_iter,
            threshold_l: None,
            threshold_k: None,
            margin: l.margin,
            pass_rate: l.pass_rate,
            out_dir: None,
        }
    }
}

fn bad(key: &str, msg: impl Into<String>) -> PcfError {
    PcfError::ConfigValue {
        key: key.into(),
        msg: msg.into(),
    }
}

/// 1-based line and column of a byte offset.
fn line_col(src: &str, offset: usize) -> (usize, usize) {
    let before = &src[..offset.min(src.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, col)
}

impl RunConfig {
    pub fn from_toml_str(src: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(src).map_err(|e| {
            let (line, col) = e.span().map_or((0, 0), |s| line_col(src, s.start));
            PcfError::ConfigParse {
                line,
                col,
                msg: e.message().trim().to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("plain scalar table serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if !self.n.is_power_of_two() || self.n < 8 {
            return Err(bad("n", format!("{} is not a power of two ≥ 8", self.n)));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(bad("mu", "must lie in (0, ∞)"));
        }
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            return Err(bad("eps", "must lie in [0, ∞)"));
        }
        if !(self.alpha > 2.0 / 3.0 && self.alpha < 1.0) {
            return Err(bad("alpha", format!("{} outside (2/3, 1)", self.alpha)));
        }
        if !(self.kappa > 0.0 && self.kappa < 1.0 - self.alpha) {
            return Err(bad("kappa", format!("{} outside (0, {})", self.kappa, 1.0 - self.alpha)));
        }
        self.nonlinearity()?;
        self.descent().validate()?;
        self.gamma().validate()?;
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return Err(bad("margin", "must lie in [0, ∞)"));
        }
        if !(self.pass_rate > 0.0 && self.pass_rate <= 1.0) {
            return Err(bad("pass_rate", "must lie in (0, 1]"));
        }
        if let Some(loc) = self.thresholds()? {
            loc.validate(&DyadicPartition::new(self.grid()?)?)?;
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(self.n, self.mu)
    }

    pub fn nonlinearity(&self) -> Result<Nonlinearity> {
        self.nl.parse()
    }

    pub fn descent(&self) -> DescentConfig {
        DescentConfig {
            tol: self.tol,
            max_iter: self.max_iter,
            ..DescentConfig::default()
        }
    }

    pub fn gamma(&self) -> GammaConfig {
        GammaConfig {
            tol: self.gamma_tol,
            max_iter: self.gamma_max_iter,
            gamma: self.alpha,
            ..GammaConfig::default()
        }
    }

    pub fn ladder(&self) -> LadderCriteria {
        LadderCriteria {
            margin: self.margin,
            pass_rate: self.pass_rate,
            ..LadderCriteria::default()
        }
    }

    /// Both thresholds or neither.
    pub fn thresholds(&self) -> Result<Option<LocalizationParams>> {
        match (self.threshold_l, self.threshold_k) {
            (Some(l), Some(k)) => Ok(Some(LocalizationParams::new(l, k))),
            (None, None) => Ok(None),
            _ => Err(bad("threshold_l", "threshold_l and threshold_k must be given together")),
        }
    }
}

/// Reads and validates a configuration file.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let src = std::fs::read_to_string(path)?;
    RunConfig::from_toml_str(&src)
}
