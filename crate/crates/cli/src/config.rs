//! Flat `key = value` spec files with dotted keys.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use fragstat_core::kernels::{CoefficientSpec, DaughterSpec, Profile, RateSpec};
use fragstat_core::solver::{Formulation, SolverConfig};
use serde_json::Value;

/// A malformed spec, override or flag. Maps to exit status 2.
#[derive(Debug)]
pub struct InputError(pub String);

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

pub fn input_error<T>(msg: impl Into<String>) -> anyhow::Result<T> {
    Err(InputError(msg.into()).into())
}

pub const KNOWN_KEYS: &[&str] = &[
    "rate.amplitude",
    "rate.gamma",
    "daughter.variant",
    "daughter.nu",
    "daughter.theta",
    "daughter.chi",
    "daughter.m0",
    "daughter.lambda",
    "solver.n",
    "solver.x_max",
    "solver.tail_tol",
    "solver.eig_tol",
    "solver.norm_tol",
    "solver.max_iter",
    "solver.formulation",
    "solver.origin",
    "solver.geometric_share",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    entries: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return input_error(format!("line {}: expected `key = value`, got `{}`", idx + 1, raw.trim()));
            };
            let (k, v) = (k.trim(), v.trim());
            if !KNOWN_KEYS.contains(&k) {
                return input_error(format!("line {}: unknown key `{k}`", idx + 1));
            }
            if v.is_empty() {
                return input_error(format!("line {}: empty value for `{k}`", idx + 1));
            }
            if entries.insert(k.to_string(), v.to_string()).is_some() {
                return input_error(format!("line {}: duplicate key `{k}`", idx + 1));
            }
        }
        Ok(RawConfig { entries })
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| InputError(format!("cannot read spec {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| InputError(format!("{}: {e}", path.display())).into())
    }

    /// Applies a `key=value` override.
    pub fn set(&mut self, assignment: &str) -> anyhow::Result<()> {
        let Some((k, v)) = assignment.split_once('=') else {
            return input_error(format!("override `{assignment}` is not of the form key=value"));
        };
        let (k, v) = (k.trim(), v.trim());
        if !KNOWN_KEYS.contains(&k) {
            return input_error(format!("override references unknown key `{k}`"));
        }
        self.entries.insert(k.to_string(), v.to_string());
        Ok(())
    }

    pub fn insert(&mut self, key: &str, value: String) {
        self.entries.insert(key.to_string(), value);
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    fn real(&self, key: &str) -> anyhow::Result<Option<f64>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => match v.parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(Some(x)),
                _ => input_error(format!("field `{key}`: `{v}` is not a finite real number")),
            },
        }
    }

    fn required_real(&self, key: &str) -> anyhow::Result<f64> {
        self.real(key)?.ok_or_else(|| InputError(format!("missing required field `{key}`")).into())
    }

    fn integer(&self, key: &str) -> anyhow::Result<Option<usize>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<usize>()
                .map(Some)
                .map_err(|_| InputError(format!("field `{key}`: `{v}` is not a non-negative integer")).into()),
        }
    }

    /// Builds the coefficient spec, the solver configuration and the fully resolved key table.
    pub fn resolve(&self) -> anyhow::Result<Resolved> {
        let amplitude = self.real("rate.amplitude")?.unwrap_or(1.0);
        let gamma = self.required_real("rate.gamma")?;
        let rate = RateSpec::power_law(amplitude, gamma).map_err(to_input)?;
        let variant = self.get("daughter.variant").unwrap_or("power_law");
        let mut table = BTreeMap::new();
        table.insert("rate.amplitude".to_string(), num(amplitude));
        table.insert("rate.gamma".to_string(), num(gamma));
        table.insert("daughter.variant".to_string(), Value::from(variant));
        let mut daughter = match variant {
            "power_law" => {
                let nu = self.required_real("daughter.nu")?;
                table.insert("daughter.nu".to_string(), num(nu));
                DaughterSpec::power_law(nu).map_err(to_input)?
            }
            "log_power" => {
                let theta = self.required_real("daughter.theta")?;
                table.insert("daughter.theta".to_string(), num(theta));
                let mut d = DaughterSpec::log_power(theta).map_err(to_input)?;
                if let Some(l) = self.real("daughter.lambda")? {
                    if let fragstat_core::kernels::Daughter::SelfSimilar { lambda, .. } = &mut d.variant {
                        *lambda = Some(l);
                    }
                }
                d
            }
            other => {
                return input_error(format!(
                    "field `daughter.variant`: unknown variant `{other}` (expected power_law or log_power)"
                ))
            }
        };
        if variant == "power_law" {
            for k in ["daughter.theta", "daughter.lambda"] {
                if self.get(k).is_some() {
                    return input_error(format!("field `{k}` does not apply to the power_law variant"));
                }
            }
        } else if self.get("daughter.nu").is_some() {
            return input_error("field `daughter.nu` does not apply to the log_power variant");
        }
        if let Some(chi) = self.real("daughter.chi")? {
            daughter.chi = chi;
        }
        if let Some(m0) = self.real("daughter.m0")? {
            daughter.m0 = m0;
        }
        table.insert("daughter.chi".to_string(), num(daughter.chi));
        table.insert("daughter.m0".to_string(), num(daughter.m0));
        if let fragstat_core::kernels::Daughter::SelfSimilar { lambda: Some(l), profile: Profile::LogPower { .. } } =
            &daughter.variant
        {
            table.insert("daughter.lambda".to_string(), num(*l));
        }
        let spec = CoefficientSpec::new(rate, daughter).map_err(to_input)?;

        let mut solver = SolverConfig::default();
        if let Some(n) = self.integer("solver.n")? {
            solver.n = n;
        }
        solver.x_max = self.real("solver.x_max")?;
        if let Some(v) = self.real("solver.tail_tol")? {
            solver.tail_tol = v;
        }
        if let Some(v) = self.real("solver.eig_tol")? {
            solver.eig_tol = v;
        }
        if let Some(v) = self.real("solver.norm_tol")? {
            solver.norm_tol = v;
        }
        if let Some(v) = self.integer("solver.max_iter")? {
            solver.max_iter = v;
        }
        if let Some(v) = self.get("solver.formulation") {
            solver.formulation = v
                .parse::<Formulation>()
                .map_err(|e| InputError(format!("field `solver.formulation`: {e}")))?;
        }
        if let Some(v) = self.real("solver.origin")? {
            solver.origin = v;
        }
        if let Some(v) = self.real("solver.geometric_share")? {
            solver.geometric_share = v;
        }
        solver.validate().map_err(to_input)?;
        table.insert("solver.n".to_string(), Value::from(solver.n));
        table.insert(
            "solver.x_max".to_string(),
            solver.x_max.map(num).unwrap_or_else(|| Value::from("auto")),
        );
        table.insert("solver.tail_tol".to_string(), num(solver.tail_tol));
        table.insert("solver.eig_tol".to_string(), num(solver.eig_tol));
        table.insert("solver.norm_tol".to_string(), num(solver.norm_tol));
        table.insert("solver.max_iter".to_string(), Value::from(solver.max_iter));
        table.insert("solver.formulation".to_string(), Value::from(solver.formulation.name()));
        table.insert("solver.origin".to_string(), num(solver.origin));
        table.insert("solver.geometric_share".to_string(), num(solver.geometric_share));
        Ok(Resolved { spec, solver, table })
    }
}

fn to_input(e: fragstat_core::FragError) -> anyhow::Error {
    if e.is_input_error() {
        InputError(e.to_string()).into()
    } else {
        e.into()
    }
}

pub struct Resolved {
    pub spec: CoefficientSpec,
    pub solver: SolverConfig,
    pub table: BTreeMap<String, Value>,
}

/// JSON number, or a string for non-finite values.
pub fn num(v: f64) -> Value {
    if v.is_finite() {
        Value::from(v)
    } else if v.is_nan() {
        Value::from("nan")
    } else if v > 0.0 {
        Value::from("inf")
    } else {
        Value::from("-inf")
    }
}
