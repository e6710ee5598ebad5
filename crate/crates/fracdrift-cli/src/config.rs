//! Experiment configuration: a flat `key = value` text format plus
//! command-line overrides, resolved into a validated config that every
//! report echoes back in full.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use fracdrift::estimator::PenaltyConfig;
use fracdrift::simulate::TimeFn;
use serde::Serialize;

use crate::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    MolchanJ,
    BlackScholes,
    Fsv,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Scenario::MolchanJ => "molchan-j",
            Scenario::BlackScholes => "black-scholes",
            Scenario::Fsv => "fsv",
        };
        f.write_str(s)
    }
}

/// Basis family used by the experiment fits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisChoice {
    /// Half-range cosine system; its even periodic extension is continuous,
    /// which is what the benchmark targets need. The default.
    Cosine,
    /// Full Fourier system (sine/cosine pairs).
    Trig,
}

impl BasisChoice {
    pub fn build(self, horizon: f64, max_dim: usize) -> fracdrift::Result<fracdrift::basis::BasisFamily> {
        match self {
            BasisChoice::Cosine => fracdrift::basis::BasisFamily::cosine(horizon, max_dim),
            BasisChoice::Trig => fracdrift::basis::BasisFamily::trigonometric(horizon, max_dim),
        }
    }
}

impl fmt::Display for BasisChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BasisChoice::Cosine => "cosine",
            BasisChoice::Trig => "trig",
        })
    }
}

/// Built-in drift/coefficient selectors plus small expression forms
/// (`const:<v>`, `poly:<c0,c1,...>`).
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(into = "String")]
pub enum DriftSpec {
    /// `10 t^2`
    QuadraticRamp,
    /// `10 (-log t)^(1/2)`
    LogSingular,
    /// `20 t^(-0.05)`
    PowerSingular,
    /// `sin(2 pi t) + cos(2 pi t)`
    Periodic,
    Zero,
    Const(f64),
    Poly(Vec<f64>),
}

impl DriftSpec {
    pub fn parse(text: &str) -> CliResult<Self> {
        let t = text.trim();
        match t {
            "J01" => return Ok(Self::QuadraticRamp),
            "J02" => return Ok(Self::LogSingular),
            "J03" => return Ok(Self::PowerSingular),
            "b-periodic" => return Ok(Self::Periodic),
            "zero" => return Ok(Self::Zero),
            _ => {}
        }
        if let Some(v) = t.strip_prefix("const:") {
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| CliError::Config(format!("bad constant in drift {t:?}")))?;
            if !v.is_finite() {
                return Err(CliError::Config("drift constant must be finite".into()));
            }
            return Ok(Self::Const(v));
        }
        if let Some(cs) = t.strip_prefix("poly:") {
            let coeffs: Result<Vec<f64>, _> = cs.split(',').map(|c| c.trim().parse::<f64>()).collect();
            let coeffs = coeffs.map_err(|_| CliError::Config(format!("bad coefficients in drift {t:?}")))?;
            if coeffs.is_empty() || coeffs.iter().any(|c| !c.is_finite()) {
                return Err(CliError::Config("polynomial drift needs finite coefficients".into()));
            }
            return Ok(Self::Poly(coeffs));
        }
        Err(CliError::Config(format!(
            "unknown drift {t:?}; expected J01, J02, J03, b-periodic, zero, const:<v> or poly:<c0,c1,...>"
        )))
    }

    pub fn as_fn(&self) -> TimeFn {
        match self {
            Self::QuadraticRamp => Arc::new(|t: f64| 10.0 * t * t),
            Self::LogSingular => Arc::new(|t: f64| 10.0 * (-(t.ln())).max(0.0).sqrt()),
            Self::PowerSingular => Arc::new(|t: f64| 20.0 * t.powf(-0.05)),
            Self::Periodic => Arc::new(|t: f64| {
                let x = 2.0 * std::f64::consts::PI * t;
                x.sin() + x.cos()
            }),
            Self::Zero => Arc::new(|_| 0.0),
            Self::Const(v) => {
                let v = *v;
                Arc::new(move |_| v)
            }
            Self::Poly(coeffs) => {
                let coeffs = coeffs.clone();
                Arc::new(move |t: f64| coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c))
            }
        }
    }
}

impl From<DriftSpec> for String {
    fn from(d: DriftSpec) -> String {
        match d {
            DriftSpec::QuadraticRamp => "J01".into(),
            DriftSpec::LogSingular => "J02".into(),
            DriftSpec::PowerSingular => "J03".into(),
            DriftSpec::Periodic => "b-periodic".into(),
            DriftSpec::Zero => "zero".into(),
            DriftSpec::Const(v) => format!("const:{v}"),
            DriftSpec::Poly(cs) => {
                let parts: Vec<String> = cs.iter().map(|c| c.to_string()).collect();
                format!("poly:{}", parts.join(","))
            }
        }
    }
}

fn serialize_penalty<S: serde::Serializer>(p: &PenaltyConfig, s: S) -> Result<S::Ok, S::Error> {
    let text = match p {
        PenaltyConfig::Fixed { c_cal } => format!("fixed:{c_cal}"),
        PenaltyConfig::SlopeHeuristic { .. } => "slope".to_string(),
    };
    s.serialize_str(&text)
}

/// Fully resolved experiment configuration.
///
/// `steps` counts observations per copy for `molchan-j` and `fsv`, and the
/// total observations of the single long record for `black-scholes` (whose
/// copies then have `steps / copies` observations each).
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub hurst: f64,
    pub horizon: f64,
    pub copies: usize,
    pub steps: usize,
    pub dims: Vec<usize>,
    pub basis: BasisChoice,
    #[serde(serialize_with = "serialize_penalty")]
    pub penalty: PenaltyConfig,
    pub repetitions: usize,
    pub seed: u64,
    pub drift: DriftSpec,
    pub sigma: f64,
    pub s0: f64,
    pub estimate_sigma: bool,
    pub upsilon: f64,
    pub sigma0: f64,
    pub gap: f64,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::MolchanJ,
            hurst: 0.6,
            horizon: 1.0,
            copies: 100,
            steps: 5000,
            dims: (2..=12).collect(),
            basis: BasisChoice::Cosine,
            penalty: PenaltyConfig::slope_heuristic(),
            repetitions: 100,
            seed: 1,
            drift: DriftSpec::QuadraticRamp,
            sigma: 0.2,
            s0: 10.0,
            estimate_sigma: false,
            upsilon: 0.3,
            sigma0: 0.5,
            gap: 5.0,
            output_dir: PathBuf::from("fracdrift-out"),
        }
    }
}

impl ExperimentConfig {
    /// Parse a flat `key = value` file ('#' starts a comment).
    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> CliResult<()> {
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Config(format!("line {}: expected key = value", ln + 1)));
            };
            self.set(key.trim(), value.trim())
                .map_err(|e| CliError::Config(format!("line {}: {e}", ln + 1)))?;
        }
        Ok(())
    }

    /// Apply one `key=value` override.
    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        match key {
            "scenario" => {
                self.scenario = match value {
                    "molchan-j" => Scenario::MolchanJ,
                    "black-scholes" => Scenario::BlackScholes,
                    "fsv" => Scenario::Fsv,
                    other => {
                        return Err(CliError::Config(format!(
                            "unknown scenario {other:?}; expected molchan-j, black-scholes or fsv"
                        )))
                    }
                }
            }
            "hurst" => self.hurst = parse_num(key, value)?,
            "horizon" => self.horizon = parse_num(key, value)?,
            "copies" => self.copies = parse_num(key, value)?,
            "steps" => self.steps = parse_num(key, value)?,
            "dims" => self.dims = parse_dims(value)?,
            "basis" => {
                self.basis = match value {
                    "cosine" => BasisChoice::Cosine,
                    "trig" => BasisChoice::Trig,
                    other => {
                        return Err(CliError::Config(format!(
                            "unknown basis {other:?}; expected cosine or trig"
                        )))
                    }
                }
            }
            "penalty" => {
                self.penalty = if value == "slope" {
                    PenaltyConfig::slope_heuristic()
                } else if let Some(c) = value.strip_prefix("fixed:") {
                    let c: f64 = c
                        .trim()
                        .parse()
                        .map_err(|_| CliError::Config(format!("bad penalty constant {c:?}")))?;
                    PenaltyConfig::fixed(c).map_err(|e| CliError::Config(e.to_string()))?
                } else {
                    return Err(CliError::Config(format!(
                        "unknown penalty {value:?}; expected slope or fixed:<c>"
                    )));
                }
            }
            "repetitions" => self.repetitions = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "drift" => self.drift = DriftSpec::parse(value)?,
            "sigma" => self.sigma = parse_num(key, value)?,
            "s0" => self.s0 = parse_num(key, value)?,
            "estimate-sigma" => {
                self.estimate_sigma = value
                    .parse()
                    .map_err(|_| CliError::Config(format!("bad boolean {value:?}")))?
            }
            "upsilon" => self.upsilon = parse_num(key, value)?,
            "sigma0" => self.sigma0 = parse_num(key, value)?,
            "gap" => self.gap = parse_num(key, value)?,
            "out" => self.output_dir = PathBuf::from(value),
            other => return Err(CliError::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    pub fn apply_overrides(&mut self, overrides: &[String]) -> CliResult<()> {
        for item in overrides {
            let Some((key, value)) = item.split_once('=') else {
                return Err(CliError::Config(format!("override {item:?} is not key=value")));
            };
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Validate cross-field constraints; returns advisory warnings.
    pub fn validate(&self) -> CliResult<Vec<String>> {
        let mut warnings = Vec::new();
        if !(0.5..1.0).contains(&self.hurst) {
            return Err(CliError::Config(format!("hurst {} outside [0.5, 1)", self.hurst)));
        }
        if !(self.horizon > 0.0) {
            return Err(CliError::Config("horizon must be positive".into()));
        }
        if self.copies == 0 || self.steps == 0 || self.repetitions == 0 {
            return Err(CliError::Config("copies, steps and repetitions must be at least 1".into()));
        }
        if self.dims.is_empty() {
            return Err(CliError::Config("dims must be nonempty".into()));
        }
        if *self.dims.iter().max().unwrap() > self.copies {
            return Err(CliError::Config(format!(
                "largest dimension {} exceeds the {} copies",
                self.dims.iter().max().unwrap(),
                self.copies
            )));
        }
        match self.scenario {
            Scenario::MolchanJ => {}
            Scenario::BlackScholes => {
                if !(self.sigma > 0.0 && self.s0 > 0.0) {
                    return Err(CliError::Config("black-scholes needs sigma > 0 and s0 > 0".into()));
                }
                if self.steps % self.copies != 0 {
                    return Err(CliError::Config(format!(
                        "total steps {} must divide evenly into {} copies",
                        self.steps, self.copies
                    )));
                }
            }
            Scenario::Fsv => {
                if !(self.upsilon > 0.0 && self.sigma0 > 0.0 && self.s0 > 0.0 && self.gap >= 0.0) {
                    return Err(CliError::Config(
                        "fsv needs upsilon > 0, sigma0 > 0, s0 > 0 and gap >= 0".into(),
                    ));
                }
                let blocks = (self.horizon + self.gap) / self.horizon * self.steps as f64;
                if (blocks - blocks.round()).abs() > 1e-9 * blocks {
                    return Err(CliError::Config(
                        "gap must translate to a whole number of per-copy steps".into(),
                    ));
                }
            }
        }
        // the discretization term of the risk stays subdominant for n of
        // order N^2
        let effective_n = match self.scenario {
            Scenario::BlackScholes => self.steps / self.copies,
            _ => self.steps,
        } as f64;
        let n_sq = (self.copies * self.copies) as f64;
        if effective_n < 0.1 * n_sq || effective_n > 10.0 * n_sq {
            warnings.push(format!(
                "per-copy steps {} far from copies^2 = {}; discretization may dominate",
                effective_n, n_sq
            ));
        }
        Ok(warnings)
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> CliResult<T> {
    value
        .parse()
        .map_err(|_| CliError::Config(format!("bad value {value:?} for {key}")))
}

/// `2..12` (inclusive range) or a comma list `2,3,5`.
pub fn parse_dims(text: &str) -> CliResult<Vec<usize>> {
    let t = text.trim();
    if let Some((lo, hi)) = t.split_once("..") {
        let lo: usize = parse_num("dims", lo.trim())?;
        let hi: usize = parse_num("dims", hi.trim())?;
        if lo == 0 || hi < lo {
            return Err(CliError::Config(format!("bad dimension range {t:?}")));
        }
        return Ok((lo..=hi).collect());
    }
    let dims: Result<Vec<usize>, _> = t.split(',').map(|d| d.trim().parse::<usize>()).collect();
    let dims = dims.map_err(|_| CliError::Config(format!("bad dimension list {t:?}")))?;
    if dims.is_empty() || dims.contains(&0) {
        return Err(CliError::Config("dims must be positive".into()));
    }
    Ok(dims)
}

/// Stable key order echo of the resolved configuration for reports.
pub fn config_echo(cfg: &ExperimentConfig) -> BTreeMap<String, String> {
    let mut map = BTreeMap::new();
    map.insert("scenario".into(), cfg.scenario.to_string());
    map.insert("hurst".into(), cfg.hurst.to_string());
    map.insert("horizon".into(), cfg.horizon.to_string());
    map.insert("copies".into(), cfg.copies.to_string());
    map.insert("steps".into(), cfg.steps.to_string());
    let dims: Vec<String> = cfg.dims.iter().map(|d| d.to_string()).collect();
    map.insert("dims".into(), dims.join(","));
    map.insert("basis".into(), cfg.basis.to_string());
    map.insert(
        "penalty".into(),
        match &cfg.penalty {
            PenaltyConfig::Fixed { c_cal } => format!("fixed:{c_cal}"),
            PenaltyConfig::SlopeHeuristic { .. } => "slope".into(),
        },
    );
    map.insert("repetitions".into(), cfg.repetitions.to_string());
    map.insert("seed".into(), cfg.seed.to_string());
    map.insert("drift".into(), String::from(cfg.drift.clone()));
    map.insert("sigma".into(), cfg.sigma.to_string());
    map.insert("s0".into(), cfg.s0.to_string());
    map.insert("estimate-sigma".into(), cfg.estimate_sigma.to_string());
    map.insert("upsilon".into(), cfg.upsilon.to_string());
    map.insert("sigma0".into(), cfg.sigma0.to_string());
    map.insert("gap".into(), cfg.gap.to_string());
    map.insert("out".into(), cfg.output_dir.display().to_string());
    map
}
