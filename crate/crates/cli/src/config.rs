//! Run configuration: a sectioned TOML file, overridden by long flags.
//!
//! Every key and its default is documented in `docs/config.md`.

use std::path::{Path, PathBuf};

use frag_avalanche::{ClipPolicy, ModelParams};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SEED_ENV: &str = "FRAG_AVALANCHE_SEED";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelSection,
    pub run: RunSection,
    pub output: OutputSection,
    pub verify: VerifySection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub r: f64,
    /// Explicit thresholds `d_1 > d_2 > …`; excludes `threshold_rule`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thresholds: Option<Vec<f64>>,
    /// `"geometric:<base>"`: `d_k = base^{-k}`, `base > 1`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold_rule: Option<String>,
    /// Number of thresholds; truncates an explicit list.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            r: 0.5,
            thresholds: None,
            threshold_rule: None,
            depth: None,
        }
    }
}

pub const DEFAULT_RULE_BASE: f64 = 4.0;
pub const DEFAULT_DEPTH: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SdeModeName {
    #[default]
    Banded,
    Whole,
}

/// Named test functions on `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FunctionName {
    /// `1`
    One,
    /// `x`
    Id,
    /// `e^{-x}`
    ExpNeg,
}

impl FunctionName {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            FunctionName::One => 1.0,
            FunctionName::Id => x,
            FunctionName::ExpNeg => (-x).exp(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    /// Starting sizes; chain and SDE runs use a single entry.
    pub x0: Vec<f64>,
    pub t_end: f64,
    pub replicas: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub clip_policy: ClipPolicy,
    pub sde_mode: SdeModeName,
    pub population_cap: usize,
    /// Projection level of `simulate-sizes`; defaults to the depth.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub level: Option<usize>,
    /// Worker threads, `0` = all available cores.
    pub workers: usize,
    pub semigroup_tol: f64,
    pub cumulant_tol: f64,
    pub resolvent_alpha: f64,
    /// Function the resolvent is applied to.
    pub resolvent_f: FunctionName,
    /// Initial datum of the cumulant equation.
    pub phi: FunctionName,
    /// Write the per-event log (can be large).
    pub log_events: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            x0: vec![1.0],
            t_end: 1.0,
            replicas: 1000,
            seed: None,
            clip_policy: ClipPolicy::Edge,
            sde_mode: SdeModeName::Banded,
            population_cap: frag_avalanche::montecarlo::DEFAULT_POPULATION_CAP,
            level: None,
            workers: 0,
            semigroup_tol: frag_avalanche::semigroup::DEFAULT_SEMIGROUP_TOL,
            cumulant_tol: frag_avalanche::semigroup::DEFAULT_CUMULANT_TOL,
            resolvent_alpha: 1.0,
            resolvent_f: FunctionName::One,
            phi: FunctionName::ExpNeg,
            log_events: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub csv: bool,
    pub json: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            csv: true,
            json: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    /// Multiplies every deterministic tolerance; `0` forces failures.
    pub tolerance_scale: f64,
    /// Criteria to run; empty runs all.
    pub criteria: Vec<u32>,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            tolerance_scale: 1.0,
            criteria: Vec::new(),
        }
    }
}

/// Flag values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub r: Option<f64>,
    pub x0: Option<Vec<f64>>,
    pub t_end: Option<f64>,
    pub replicas: Option<usize>,
    pub seed: Option<u64>,
    pub depth: Option<usize>,
    pub clip_policy: Option<ClipPolicy>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(r) = o.r {
            self.model.r = r;
        }
        if let Some(d) = o.depth {
            self.model.depth = Some(d);
        }
        if let Some(x0) = &o.x0 {
            self.run.x0 = x0.clone();
        }
        if let Some(t) = o.t_end {
            self.run.t_end = t;
        }
        if let Some(n) = o.replicas {
            self.run.replicas = n;
        }
        if let Some(s) = o.seed {
            self.run.seed = Some(s);
        }
        if let Some(p) = o.clip_policy {
            self.run.clip_policy = p;
        }
        if let Some(dir) = &o.out {
            self.output.dir = dir.clone();
        }
        if let Some(w) = o.workers {
            self.run.workers = w;
        }
    }

    /// Seed from the config, else `FRAG_AVALANCHE_SEED`, else 0.
    pub fn seed(&self) -> Result<u64, CliError> {
        if let Some(s) = self.run.seed {
            return Ok(s);
        }
        match std::env::var(SEED_ENV) {
            Ok(v) => v.trim().parse().map_err(|_| {
                CliError::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer"))
            }),
            Err(_) => Ok(0),
        }
    }

    pub fn params(&self) -> Result<ModelParams, CliError> {
        let m = &self.model;
        let params = match (&m.thresholds, &m.threshold_rule) {
            (Some(_), Some(_)) => {
                return Err(CliError::Config(
                    "model.thresholds and model.threshold_rule are mutually exclusive".into(),
                ))
            }
            (Some(list), None) => {
                let mut list = list.clone();
                if let Some(d) = m.depth {
                    if d == 0 || d > list.len() {
                        return Err(CliError::Config(format!(
                            "depth {d} does not fit {} explicit thresholds",
                            list.len()
                        )));
                    }
                    list.truncate(d);
                }
                ModelParams::new(m.r, list)?
            }
            (None, rule) => {
                let base = match rule {
                    Some(rule) => parse_rule(rule)?,
                    None => DEFAULT_RULE_BASE,
                };
                ModelParams::with_geometric_thresholds(m.r, base, m.depth.unwrap_or(DEFAULT_DEPTH))?
            }
        };
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.params()?;
        self.seed()?;
        let r = &self.run;
        if r.x0.is_empty() {
            return Err(CliError::Config(
                "run.x0 must list at least one size".into(),
            ));
        }
        if !(r.t_end >= 0.0 && r.t_end.is_finite()) {
            return Err(CliError::Config(format!(
                "run.t_end = {} must be finite and >= 0",
                r.t_end
            )));
        }
        if !(r.resolvent_alpha > 0.0) {
            return Err(CliError::Config(
                "run.resolvent_alpha must be positive".into(),
            ));
        }
        if !(self.verify.tolerance_scale >= 0.0) {
            return Err(CliError::Config(
                "verify.tolerance_scale must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

fn parse_rule(rule: &str) -> Result<f64, CliError> {
    let bad = || {
        CliError::Config(format!(
            "threshold rule {rule:?} is not of the form geometric:<base>"
        ))
    };
    let base = rule.strip_prefix("geometric:").ok_or_else(bad)?;
    base.trim().parse().map_err(|_| bad())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_reference_scenario() {
        let p = RunConfig::default().params().unwrap();
        assert_eq!(p.thresholds(), &[0.25, 0.0625]);
        assert!((p.beta() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn round_trip() {
        let mut c = RunConfig::default();
        c.model.thresholds = Some(vec![0.3, 0.1]);
        c.run.seed = Some(9);
        c.run.level = Some(1);
        c.verify.criteria = vec![1, 4];
        let back = RunConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert_eq!(
            RunConfig::from_toml(&RunConfig::default().to_toml()).unwrap(),
            RunConfig::default()
        );
    }

    #[test]
    fn documented_defaults_match() {
        let doc = include_str!("../../../docs/config.md");
        let block = doc
            .split("```toml\n")
            .nth(1)
            .and_then(|rest| rest.split("```").next())
            .unwrap();
        assert_eq!(RunConfig::from_toml(block).unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_keys_are_errors() {
        assert!(RunConfig::from_toml("[model]\nrr = 0.5\n").is_err());
        assert!(RunConfig::from_toml("[extra]\n").is_err());
    }

    #[test]
    fn threshold_sources() {
        let c =
            RunConfig::from_toml("[model]\nthreshold_rule = \"geometric:5\"\ndepth = 3\n").unwrap();
        let p = c.params().unwrap();
        assert_eq!(p.depth(), 3);
        assert!((p.thresholds()[2] - 0.008).abs() < 1e-15);

        let c = RunConfig::from_toml("[model]\nthresholds = [0.25, 0.0625]\ndepth = 1\n").unwrap();
        assert_eq!(c.params().unwrap().thresholds(), &[0.25]);

        let c = RunConfig::from_toml(
            "[model]\nthresholds = [0.25]\nthreshold_rule = \"geometric:2\"\n",
        )
        .unwrap();
        assert!(c.params().is_err());
        let c = RunConfig::from_toml("[model]\nthreshold_rule = \"linear:0.5\"\n").unwrap();
        assert!(c.params().is_err());
    }

    #[test]
    fn flags_override_file() {
        let mut c = RunConfig::from_toml("[run]\nreplicas = 5\nseed = 1\n").unwrap();
        c.apply(&Overrides {
            replicas: Some(7),
            depth: Some(1),
            ..Default::default()
        });
        assert_eq!(c.run.replicas, 7);
        assert_eq!(c.run.seed, Some(1));
        assert_eq!(c.params().unwrap().depth(), 1);
    }
}
