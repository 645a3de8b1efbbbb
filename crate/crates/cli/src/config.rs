//! Flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use biot_core::assembly::permeability::{PermeabilityLaw, PermeabilityModel};
use biot_core::assembly::IncompatibleSourceMode;
use biot_core::cases::{Case, Physics};
use biot_core::mesh::BcLayout;
use biot_core::solver::{step_count, PicardMode, PicardOptions};

/// Every accepted key, in the order of the resolved-config header.
pub const KEYS: [&str; 22] = [
    "mesh.n",
    "mesh.bc",
    "case",
    "physics.lambda",
    "physics.mu",
    "physics.c0",
    "physics.alpha",
    "perm.model",
    "perm.k0",
    "perm.scale",
    "perm.a",
    "perm.b",
    "perm.c",
    "perm.k1",
    "perm.k2",
    "time.dt",
    "time.T",
    "picard.mode",
    "picard.tol",
    "picard.max_iter",
    "neumann.incompatible",
    "out.dir",
];

/// Keys without a default, checked in this order.
pub const REQUIRED: [&str; 6] = ["mesh.n", "mesh.bc", "case", "time.dt", "time.T", "perm.model"];

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    /// 1-based line of the offending entry, if there is one.
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl ConfigError {
    fn at(line: usize, key: &str, message: impl Into<String>) -> Self {
        Self { line: Some(line), key: Some(key.to_string()), message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.line, &self.key) {
            (Some(l), Some(k)) => write!(f, "line {l}: {k}: {}", self.message),
            (Some(l), None) => write!(f, "line {l}: {}", self.message),
            (None, Some(k)) => write!(f, "{k}: {}", self.message),
            (None, None) => write!(f, "{}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PermKind {
    Constant,
    CarmanKozeny,
    Quadratic,
}

impl PermKind {
    pub fn name(self) -> &'static str {
        match self {
            PermKind::Constant => "constant",
            PermKind::CarmanKozeny => "carman_kozeny",
            PermKind::Quadratic => "quadratic",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub n: usize,
    pub layout: BcLayout,
    pub case: String,
    pub physics: Physics,
    pub perm: PermKind,
    pub k0: f64,
    pub scale: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub k1: f64,
    pub k2: f64,
    pub dt: f64,
    pub t_end: f64,
    pub picard: PicardOptions,
    pub incompatible: IncompatibleSourceMode,
    pub out_dir: PathBuf,
}

impl RunConfig {
    pub fn model(&self) -> PermeabilityModel {
        let law = match self.perm {
            PermKind::Constant => PermeabilityLaw::Constant { k0: self.k0 },
            PermKind::CarmanKozeny => PermeabilityLaw::CarmanKozeny { scale: self.scale },
            PermKind::Quadratic => PermeabilityLaw::Quadratic { a: self.a, b: self.b, c: self.c },
        };
        PermeabilityModel::new(law, self.k1, self.k2).expect("validated at parse time")
    }

    pub fn case(&self) -> Case {
        Case::from_name(&self.case, self.physics, &self.model()).expect("validated at parse time")
    }

    /// Every key with its resolved value, in [`KEYS`] order.
    pub fn resolved(&self) -> Vec<(&'static str, String)> {
        let mode = match self.incompatible {
            IncompatibleSourceMode::Correct => "correct",
            IncompatibleSourceMode::Strict => "strict",
        };
        let values = [
            self.n.to_string(),
            self.layout.name().to_string(),
            self.case.clone(),
            format!("{:?}", self.physics.lambda),
            format!("{:?}", self.physics.mu),
            format!("{:?}", self.physics.c0),
            format!("{:?}", self.physics.alpha),
            self.perm.name().to_string(),
            format!("{:?}", self.k0),
            format!("{:?}", self.scale),
            format!("{:?}", self.a),
            format!("{:?}", self.b),
            format!("{:?}", self.c),
            format!("{:?}", self.k1),
            format!("{:?}", self.k2),
            format!("{:?}", self.dt),
            format!("{:?}", self.t_end),
            self.picard.mode.name().to_string(),
            format!("{:?}", self.picard.tol),
            self.picard.max_iter.to_string(),
            mode.to_string(),
            self.out_dir.display().to_string(),
        ];
        KEYS.into_iter().zip(values).collect()
    }
}

struct Entry {
    line: usize,
    value: String,
}

/// Parses and validates a configuration.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut entries: BTreeMap<&'static str, Entry> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(ConfigError { line: Some(line), key: None, message: format!("expected `key = value`, got `{content}`") });
        };
        let (key, value) = (key.trim(), value.trim());
        let Some(known) = KEYS.iter().find(|k| **k == key) else {
            return Err(ConfigError::at(line, key, "unknown key"));
        };
        if value.is_empty() {
            return Err(ConfigError::at(line, key, "missing value"));
        }
        if let Some(prev) = entries.get(known) {
            return Err(ConfigError::at(line, key, format!("duplicate key (first set on line {})", prev.line)));
        }
        entries.insert(known, Entry { line, value: value.to_string() });
    }
    for key in REQUIRED {
        if !entries.contains_key(key) {
            return Err(ConfigError { line: None, key: Some(key.to_string()), message: "required key is missing".into() });
        }
    }

    let p = Parser { entries: &entries };
    let n = p.usize("mesh.n", 1, |v| *v >= 1, "must be at least 1")?;
    let layout = p.choice("mesh.bc", "dirichlet", BcLayout::from_name, "expected dirichlet, neumann or mixed_left")?;
    let physics = Physics {
        lambda: p.f64("physics.lambda", 1.0, |v| v >= 0.0, "must be >= 0")?,
        mu: p.f64("physics.mu", 1.0, |v| v > 0.0, "must be > 0")?,
        c0: p.f64("physics.c0", 0.0, |v| v >= 0.0, "must be >= 0")?,
        alpha: p.f64("physics.alpha", 1.0, |v| v > 0.0, "must be > 0")?,
    };
    let perm = p.choice(
        "perm.model",
        "constant",
        |s| match s {
            "constant" => Some(PermKind::Constant),
            "carman_kozeny" => Some(PermKind::CarmanKozeny),
            "quadratic" => Some(PermKind::Quadratic),
            _ => None,
        },
        "expected constant, carman_kozeny or quadratic",
    )?;
    let k0 = p.f64("perm.k0", 1.0, |v| v > 0.0, "must be > 0")?;
    let scale = p.f64("perm.scale", 1.0, |v| v > 0.0, "must be > 0")?;
    let a = p.f64("perm.a", 1.0, |_| true, "")?;
    let b = p.f64("perm.b", 0.0, |_| true, "")?;
    let c = p.f64("perm.c", 0.0, |_| true, "")?;
    let k1 = p.f64("perm.k1", 1e-3, |v| v > 0.0, "must be > 0")?;
    let k2 = p.f64("perm.k2", 1e3, |v| v > 0.0, "must be > 0")?;
    if k1 > k2 {
        return Err(p.error("perm.k2", format!("must be >= perm.k1 = {k1}")));
    }
    let dt = p.f64("time.dt", 0.0, |v| v > 0.0, "must be > 0")?;
    let t_end = p.f64("time.T", 0.0, |v| v > 0.0, "must be > 0")?;
    if let Err(e) = step_count(dt, t_end) {
        return Err(p.error("time.T", e.to_string()));
    }
    let mode = p.choice("picard.mode", "global", PicardMode::from_name, "expected global or per_step")?;
    let tol = p.f64("picard.tol", 1e-8, |v| v > 0.0, "must be > 0")?;
    let max_iter = p.usize("picard.max_iter", 50, |v| *v >= 1, "must be at least 1")?;
    let incompatible = p.choice(
        "neumann.incompatible",
        "correct",
        |s| match s {
            "correct" => Some(IncompatibleSourceMode::Correct),
            "strict" => Some(IncompatibleSourceMode::Strict),
            _ => None,
        },
        "expected correct or strict",
    )?;
    let out_dir = PathBuf::from(p.raw("out.dir").unwrap_or("out"));
    let case = p.raw("case").expect("required").to_string();

    let cfg = RunConfig {
        n,
        layout,
        case,
        physics,
        perm,
        k0,
        scale,
        a,
        b,
        c,
        k1,
        k2,
        dt,
        t_end,
        picard: PicardOptions { tol, max_iter, mode },
        incompatible,
        out_dir,
    };
    let law = match perm {
        PermKind::Constant => PermeabilityLaw::Constant { k0 },
        PermKind::CarmanKozeny => PermeabilityLaw::CarmanKozeny { scale },
        PermKind::Quadratic => PermeabilityLaw::Quadratic { a, b, c },
    };
    let model = PermeabilityModel::new(law, k1, k2).map_err(|e| p.error("perm.model", e.to_string()))?;
    Case::from_name(&cfg.case, physics, &model).map_err(|e| p.error("case", e.to_string()))?;
    Ok(cfg)
}

struct Parser<'a> {
    entries: &'a BTreeMap<&'static str, Entry>,
}

impl Parser<'_> {
    fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|e| e.value.as_str())
    }

    fn error(&self, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError { line: self.entries.get(key).map(|e| e.line), key: Some(key.to_string()), message: message.into() }
    }

    fn f64(&self, key: &str, default: f64, ok: impl Fn(f64) -> bool, rule: &str) -> Result<f64, ConfigError> {
        let Some(e) = self.entries.get(key) else { return Ok(default) };
        let v: f64 = e.value.parse().map_err(|_| self.error(key, format!("`{}` is not a number", e.value)))?;
        if !v.is_finite() {
            return Err(self.error(key, "must be finite"));
        }
        if !ok(v) {
            return Err(self.error(key, format!("{rule}, got {v}")));
        }
        Ok(v)
    }

    fn usize(&self, key: &str, default: usize, ok: impl Fn(&usize) -> bool, rule: &str) -> Result<usize, ConfigError> {
        let Some(e) = self.entries.get(key) else { return Ok(default) };
        let v: usize = e.value.parse().map_err(|_| self.error(key, format!("`{}` is not a non-negative integer", e.value)))?;
        if !ok(&v) {
            return Err(self.error(key, format!("{rule}, got {v}")));
        }
        Ok(v)
    }

    fn choice<T>(&self, key: &str, default: &str, pick: impl Fn(&str) -> Option<T>, rule: &str) -> Result<T, ConfigError> {
        let value = self.raw(key).unwrap_or(default);
        pick(value).ok_or_else(|| self.error(key, format!("{rule}, got `{value}`")))
    }
}
