//! Flat key = value configuration files for the experiment runner.
//!
//! Lines are `key = value`; `#` starts a comment. Unknown keys are
//! rejected so typos fail loudly. Every key has a default, so an empty
//! file is a valid spec.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::design::DesignPoint;
use crate::error::ConfigError;
use crate::params::SuspensionParams;

/// Which experiment to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Pareto,
    Stationarity,
    Psd,
    SlAccuracy,
    MpcEnergy,
    MpcComfort,
    MpcMixed,
    Observer,
    Timing,
}

impl Experiment {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "pareto" => Experiment::Pareto,
            "stationarity" => Experiment::Stationarity,
            "psd" => Experiment::Psd,
            "sl-accuracy" => Experiment::SlAccuracy,
            "mpc-energy" => Experiment::MpcEnergy,
            "mpc-comfort" => Experiment::MpcComfort,
            "mpc-mixed" => Experiment::MpcMixed,
            "observer" => Experiment::Observer,
            "timing" => Experiment::Timing,
            _ => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Pareto => "pareto",
            Experiment::Stationarity => "stationarity",
            Experiment::Psd => "psd",
            Experiment::SlAccuracy => "sl-accuracy",
            Experiment::MpcEnergy => "mpc-energy",
            Experiment::MpcComfort => "mpc-comfort",
            Experiment::MpcMixed => "mpc-mixed",
            Experiment::Observer => "observer",
            Experiment::Timing => "timing",
        }
    }
}

/// A fully resolved experiment specification.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub experiment: Experiment,
    /// Parameter preset name (currently `table1`).
    pub preset: String,
    /// Pareto point geometry applied on top of the preset.
    pub rp: f64,
    pub r: f64,
    pub ce: f64,
    pub seeds: Vec<u64>,
    pub duration: f64,
    pub speed: f64,
    pub gr: f64,
    pub out_dir: PathBuf,
    /// MPC weights (used by the mpc-* experiments).
    pub alpha1: f64,
    pub alpha2: f64,
    pub horizon: usize,
    /// Design grid resolution per axis for `pareto`.
    pub grid: usize,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        let pt = crate::design::point3();
        ExperimentSpec {
            experiment: Experiment::Stationarity,
            preset: "table1".into(),
            rp: pt.rp,
            r: pt.r,
            ce: pt.ce,
            seeds: (0..50).collect(),
            duration: 2000.0,
            speed: 20.0,
            gr: crate::road::GR_CLASS_C,
            out_dir: PathBuf::from("artifacts"),
            alpha1: 0.0,
            alpha2: 1.0,
            horizon: 15,
            grid: 8,
        }
    }
}

impl ExperimentSpec {
    /// Suspension parameters implied by the spec.
    pub fn params(&self) -> Result<SuspensionParams, ConfigError> {
        let base = match self.preset.as_str() {
            "table1" => SuspensionParams::table1(),
            other => return Err(ConfigError::UnknownPreset(other.to_string())),
        };
        Ok(DesignPoint {
            rp: self.rp,
            r: self.r,
            ce: self.ce,
        }
        .apply(&base))
    }

    /// The raw key = value pairs in canonical order, used for manifests.
    pub fn canonical_pairs(&self) -> Vec<(String, String)> {
        let seeds = self
            .seeds
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>()
            .join(",");
        vec![
            ("experiment".into(), self.experiment.name().into()),
            ("preset".into(), self.preset.clone()),
            ("rp".into(), format!("{}", self.rp)),
            ("r".into(), format!("{}", self.r)),
            ("ce".into(), format!("{}", self.ce)),
            ("seeds".into(), seeds),
            ("duration".into(), format!("{}", self.duration)),
            ("speed".into(), format!("{}", self.speed)),
            ("gr".into(), format!("{}", self.gr)),
            ("alpha1".into(), format!("{}", self.alpha1)),
            ("alpha2".into(), format!("{}", self.alpha2)),
            ("horizon".into(), format!("{}", self.horizon)),
            ("grid".into(), format!("{}", self.grid)),
        ]
    }
}

fn parse_seeds(value: &str) -> Option<Vec<u64>> {
    // either "a..b" (half-open range) or a comma list
    if let Some((a, b)) = value.split_once("..") {
        let a: u64 = a.trim().parse().ok()?;
        let b: u64 = b.trim().parse().ok()?;
        if a >= b {
            return None;
        }
        return Some((a..b).collect());
    }
    let seeds: Option<Vec<u64>> = value.split(',').map(|s| s.trim().parse().ok()).collect();
    seeds.filter(|v: &Vec<u64>| !v.is_empty())
}

/// Parses a flat key = value config into a spec, starting from defaults.
pub fn parse_config(text: &str) -> Result<ExperimentSpec, ConfigError> {
    let mut spec = ExperimentSpec::default();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or(ConfigError::Malformed {
            line: line_no,
            reason: "expected `key = value`".into(),
        })?;
        let key = key.trim();
        let value = value.trim();
        let bad = |expected: &'static str| ConfigError::BadValue {
            key: key.to_string(),
            expected,
            got: value.to_string(),
        };
        match key {
            "experiment" => {
                spec.experiment = Experiment::parse(value).ok_or_else(|| bad("experiment name"))?
            }
            "preset" => spec.preset = value.to_string(),
            "rp" => spec.rp = value.parse().map_err(|_| bad("float"))?,
            "r" => spec.r = value.parse().map_err(|_| bad("float"))?,
            "ce" => spec.ce = value.parse().map_err(|_| bad("float"))?,
            "seeds" => {
                spec.seeds = parse_seeds(value).ok_or_else(|| bad("`a..b` or comma list"))?
            }
            "duration" => spec.duration = value.parse().map_err(|_| bad("float"))?,
            "speed" => spec.speed = value.parse().map_err(|_| bad("float"))?,
            "gr" => spec.gr = value.parse().map_err(|_| bad("float"))?,
            "out_dir" => spec.out_dir = PathBuf::from(value),
            "alpha1" => spec.alpha1 = value.parse().map_err(|_| bad("float"))?,
            "alpha2" => spec.alpha2 = value.parse().map_err(|_| bad("float"))?,
            "horizon" => spec.horizon = value.parse().map_err(|_| bad("positive integer"))?,
            "grid" => spec.grid = value.parse().map_err(|_| bad("positive integer"))?,
            other => {
                return Err(ConfigError::UnknownKey {
                    key: other.to_string(),
                })
            }
        }
    }
    if spec.seeds.is_empty() {
        return Err(ConfigError::BadValue {
            key: "seeds".into(),
            expected: "non-empty seed list",
            got: String::new(),
        });
    }
    if spec.duration <= 0.0 || spec.horizon == 0 || spec.grid == 0 {
        return Err(ConfigError::BadValue {
            key: "duration/horizon/grid".into(),
            expected: "positive values",
            got: format!("{} / {} / {}", spec.duration, spec.horizon, spec.grid),
        });
    }
    Ok(spec)
}

/// Reads and parses a config file.
pub fn load_config(path: &Path) -> Result<ExperimentSpec, ConfigError> {
    parse_config(&std::fs::read_to_string(path)?)
}

/// Overrides applied on top of a parsed config (flags win over file keys).
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub pairs: BTreeMap<String, String>,
}

impl Overrides {
    pub fn apply(&self, spec: ExperimentSpec) -> Result<ExperimentSpec, ConfigError> {
        if self.pairs.is_empty() {
            return Ok(spec);
        }
        // round-trip through the parser so overrides share its validation
        let mut text = spec
            .canonical_pairs()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}"))
            .collect::<Vec<_>>()
            .join("\n");
        let out_dir = spec.out_dir.clone();
        for (k, v) in &self.pairs {
            text.push_str(&format!("\n{k} = {v}"));
        }
        let mut merged = parse_config(&text)?;
        if !self.pairs.contains_key("out_dir") {
            merged.out_dir = out_dir;
        }
        Ok(merged)
    }
}
