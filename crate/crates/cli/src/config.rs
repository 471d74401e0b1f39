use std::path::{Path, PathBuf};

use gpcurve::curves::ParametricFamily;
use gpcurve::finite_model::Monotonicity;
use gpcurve::kernels::KernelFamily;
use serde::Deserialize;
use toml::{Table, Value};

use crate::CliError;

/// Keys whose values are file paths; relative paths resolve against the
/// directory of the file (or working directory) they came from.
const PATH_KEYS: [&str; 4] = ["quotes", "discount", "panel", "output"];

/// Length scale: a number, one per input dimension, or estimated from the quotes.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum ThetaSetting {
    Scalar(f64),
    Vector(Vec<f64>),
    Keyword(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub quotes: Option<PathBuf>,
    pub discount: Option<PathBuf>,
    /// Surface input: CSV with columns `file,t`.
    pub panel: Option<PathBuf>,
    pub output: PathBuf,
    pub kernel: String,
    pub theta: Option<ThetaSetting>,
    pub sigma2: f64,
    pub nugget: Option<f64>,
    pub lower: f64,
    pub upper: Option<f64>,
    pub n: usize,
    pub n_x: usize,
    pub n_t: usize,
    pub cone: String,
    /// Value pinned at the lower end of the domain (discount and survival start at one).
    pub anchor: f64,
    pub pin_lower: bool,
    pub samples: usize,
    pub level: f64,
    pub seed: u64,
    /// Points of the evaluation grid written to the output files.
    pub grid_points: usize,
    pub floating_frequency: Option<u32>,
    pub bid_ask_noise: bool,
    /// `acv` (constrained) or `classical` (kriging) cross-validation.
    pub method: String,
    pub theta_min: f64,
    pub theta_max: f64,
    pub mc_samples: usize,
    pub estimate_sigma: bool,
    /// Parametric references for `compare`.
    pub parametric: Vec<String>,
    pub restarts: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            quotes: None,
            discount: None,
            panel: None,
            output: PathBuf::from("out"),
            kernel: "matern52".into(),
            theta: None,
            sigma2: 1.0,
            nugget: None,
            lower: 0.0,
            upper: None,
            n: 50,
            n_x: 40,
            n_t: 20,
            cone: "non_increasing".into(),
            anchor: 1.0,
            pin_lower: true,
            samples: 100,
            level: 0.95,
            seed: 0,
            grid_points: 401,
            floating_frequency: None,
            bid_ask_noise: false,
            method: "acv".into(),
            theta_min: 0.5,
            theta_max: 60.0,
            mc_samples: 2000,
            estimate_sigma: true,
            parametric: Vec::new(),
            restarts: 50,
        }
    }
}

impl RunConfig {
    /// Shared top-level keys, then the command's own section, then `overrides`.
    pub fn load(path: Option<&Path>, section: &str, overrides: &[(String, String)]) -> Result<Self, CliError> {
        let mut merged = Table::new();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            let doc: Table = toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            let base = path.parent().unwrap_or(Path::new("."));
            for (k, v) in &doc {
                if !v.is_table() {
                    merged.insert(k.clone(), resolve(k, v.clone(), base));
                }
            }
            if let Some(Value::Table(own)) = doc.get(section) {
                for (k, v) in own {
                    merged.insert(k.clone(), resolve(k, v.clone(), base));
                }
            }
        }
        for (k, raw) in overrides {
            let value = if PATH_KEYS.contains(&k.as_str()) { Value::String(raw.clone()) } else { parse_flag(raw) };
            merged.insert(k.clone(), value);
        }
        let cfg: RunConfig = merged.try_into().map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if !(self.level > 0.0 && self.level < 1.0) {
            return bad(format!("level must lie in (0, 1), got {}", self.level));
        }
        if self.n == 0 || self.n_x == 0 || self.n_t == 0 {
            return bad("grid sizes must be positive".into());
        }
        if self.grid_points < 2 {
            return bad("grid_points must be at least 2".into());
        }
        if !(self.sigma2 > 0.0) {
            return bad(format!("sigma2 must be positive, got {}", self.sigma2));
        }
        for path in [&self.quotes, &self.discount, &self.panel].into_iter().flatten() {
            if !path.exists() {
                return bad(format!("{} does not exist", path.display()));
            }
        }
        self.family()?;
        self.monotonicity()?;
        self.parametric_families()?;
        Ok(())
    }

    pub fn family(&self) -> Result<KernelFamily, CliError> {
        self.kernel.parse().map_err(|e: gpcurve::Error| CliError::Config(e.to_string()))
    }

    pub fn monotonicity(&self) -> Result<Monotonicity, CliError> {
        self.cone.parse().map_err(|e: gpcurve::Error| CliError::Config(e.to_string()))
    }

    pub fn parametric_families(&self) -> Result<Vec<ParametricFamily>, CliError> {
        self.parametric.iter().map(|s| s.parse().map_err(|e: gpcurve::Error| CliError::Config(e.to_string()))).collect()
    }

    pub fn anchor(&self) -> Option<f64> {
        self.pin_lower.then_some(self.anchor)
    }

    pub fn quotes_path(&self) -> Result<&Path, CliError> {
        self.quotes.as_deref().ok_or_else(|| CliError::Config("missing `quotes`".into()))
    }

    /// Scalar length scale, `None` when it should be estimated.
    pub fn scalar_theta(&self) -> Result<Option<f64>, CliError> {
        match &self.theta {
            None => Ok(Some(30.0)),
            Some(ThetaSetting::Scalar(t)) => Ok(Some(*t)),
            Some(ThetaSetting::Keyword(k)) if k == "estimate" => Ok(None),
            Some(other) => Err(CliError::Config(format!("theta must be a number or \"estimate\", got {other:?}"))),
        }
    }

    /// Length scales `(x, t)` of a surface kernel.
    pub fn surface_theta(&self) -> Result<Vec<f64>, CliError> {
        match &self.theta {
            None => Ok(vec![5.0, std::f64::consts::FRAC_1_SQRT_2]),
            Some(ThetaSetting::Vector(v)) if v.len() == 2 => Ok(v.clone()),
            Some(other) => Err(CliError::Config(format!("surface theta must be two numbers, got {other:?}"))),
        }
    }
}

fn resolve(key: &str, value: Value, base: &Path) -> Value {
    match value {
        Value::String(s) if PATH_KEYS.contains(&key) && Path::new(&s).is_relative() => Value::String(base.join(s).to_string_lossy().into_owned()),
        v => v,
    }
}

/// Flag values are read as TOML literals when they parse, bare strings otherwise.
fn parse_flag(raw: &str) -> Value {
    toml::from_str::<Table>(&format!("v = {raw}")).ok().and_then(|mut t| t.remove("v")).unwrap_or_else(|| Value::String(raw.to_string()))
}
