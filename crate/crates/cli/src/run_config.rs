//! Run configuration files: a versioned JSON document holding the model
//! descriptor plus engine, simulation, sweep and output settings.

use std::path::Path;

use bulkvac::config::ModelConfig;
use bulkvac::{Engine, ModelSpec, SimConfig};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum EngineChoice {
    Analytic,
    Truncated,
}

impl From<EngineChoice> for Engine {
    fn from(e: EngineChoice) -> Self {
        match e {
            EngineChoice::Analytic => Engine::Analytic,
            EngineChoice::Truncated => Engine::Truncated,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Truncation {
    /// Queue-length cap of the truncated chain.
    pub queue_cap: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Simulation {
    #[serde(default = "default_slots")]
    pub slots: u64,
    #[serde(default = "default_warmup")]
    pub warmup: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_replications")]
    pub replications: u32,
}

fn default_slots() -> u64 {
    10_000_000
}

fn default_warmup() -> u64 {
    100_000
}

fn default_replications() -> u32 {
    1
}

impl Default for Simulation {
    fn default() -> Self {
        Self {
            slots: default_slots(),
            warmup: default_warmup(),
            seed: 0,
            replications: default_replications(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "tv_tol")]
    pub tv: f64,
    #[serde(default = "wait_tol")]
    pub wait: f64,
    #[serde(default = "idle_tol")]
    pub idle: f64,
    #[serde(default = "throughput_tol")]
    pub throughput: f64,
}

fn tv_tol() -> f64 {
    0.01
}

fn wait_tol() -> f64 {
    0.02
}

fn idle_tol() -> f64 {
    0.03
}

fn throughput_tol() -> f64 {
    0.03
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            tv: tv_tol(),
            wait: wait_tol(),
            idle: idle_tol(),
            throughput: throughput_tol(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    /// JSON pointer into this document, or one of the aliases `lambda`, `p`.
    pub param: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub model: ModelConfig,
    #[serde(default)]
    pub engine: Option<EngineChoice>,
    #[serde(default)]
    pub truncation: Truncation,
    #[serde(default)]
    pub format: Option<Format>,
    #[serde(default)]
    pub simulation: Simulation,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub sweep: Option<Sweep>,
}

impl RunConfig {
    pub fn spec(&self) -> Result<ModelSpec, CliError> {
        Ok(self.model.to_spec("/model")?)
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            slots: self.simulation.slots,
            warmup: self.simulation.warmup,
            seed: self.simulation.seed,
            replications: self.simulation.replications,
        }
    }
}

fn pointer_of(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        match seg {
            Segment::Seq { index } => out.push_str(&format!("/{index}")),
            Segment::Map { key } => out.push_str(&format!("/{key}")),
            Segment::Enum { variant } => out.push_str(&format!("/{variant}")),
            Segment::Unknown => out.push_str("/?"),
        }
    }
    if out.is_empty() {
        out.push('/');
    }
    out
}

/// Parses a document already loaded as JSON, reporting errors by JSON pointer.
pub fn from_value(v: Value) -> Result<RunConfig, CliError> {
    let cfg: RunConfig = serde_path_to_error::deserialize(v)
        .map_err(|e| CliError::Config(format!("{}: {}", pointer_of(e.path()), e.inner())))?;
    if cfg.schema_version != SCHEMA_VERSION {
        return Err(CliError::Config(format!(
            "/schema_version: unsupported version {} (expected {SCHEMA_VERSION})",
            cfg.schema_version
        )));
    }
    Ok(cfg)
}

pub fn read_value(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: invalid JSON: {e}", path.display())))
}

pub fn load(path: &Path) -> Result<RunConfig, CliError> {
    from_value(read_value(path)?)
}

/// Resolves sweep aliases to JSON pointers.
pub fn resolve_param(param: &str) -> Result<String, CliError> {
    match param {
        "lambda" => Ok("/model/lambda".into()),
        "p" => Ok("/model/p".into()),
        s if s.starts_with('/') => Ok(s.into()),
        s => Err(CliError::Config(format!(
            "sweep parameter `{s}` is neither an alias (lambda, p) nor a JSON pointer"
        ))),
    }
}

/// Writes `x` at `pointer`, which must already hold a number.
pub fn set_scalar(doc: &mut Value, pointer: &str, x: f64) -> Result<(), CliError> {
    let slot = doc.pointer_mut(pointer).ok_or_else(|| {
        CliError::Config(format!("{pointer}: sweep parameter path does not exist"))
    })?;
    if !slot.is_number() {
        return Err(CliError::Config(format!(
            "{pointer}: sweep parameter must address a number, found {slot}"
        )));
    }
    *slot = serde_json::Number::from_f64(x)
        .map(Value::Number)
        .ok_or_else(|| CliError::Config(format!("{pointer}: value {x} is not finite")))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn doc() -> Value {
        json!({
            "schema_version": 1,
            "model": {
                "a": 2, "b": 3, "lambda": 0.4,
                "group_size": {"type": "explicit", "offset": 1, "mass": [0.6, 0.4]},
                "p": 0.3, "policy": "single",
                "fes": {"all": {"type": "deterministic", "d": 2}},
                "sos": {"all": {"type": "deterministic", "d": 1}},
                "vacation": {"each": [{"type": "geometric", "q": 0.4}, {"type": "geometric", "q": 0.6}]}
            }
        })
    }

    #[test]
    fn parses_with_defaults() {
        let c = from_value(doc()).unwrap();
        assert_eq!(c.simulation, Simulation::default());
        assert!(c.engine.is_none() && c.sweep.is_none());
        c.spec().unwrap();
    }

    #[test]
    fn schema_errors_carry_pointers() {
        let mut d = doc();
        d["model"]["vacation"]["each"][1] = json!({"type": "geometric", "q": "x"});
        let e = from_value(d).unwrap_err().to_string();
        assert!(e.starts_with("/model/vacation/each/1"), "{e}");

        let mut d = doc();
        d["model"]["fes"] = json!({"all": {"type": "weibull"}});
        let e = from_value(d).unwrap_err().to_string();
        assert!(e.contains("/model/fes/all"), "{e}");

        let mut d = doc();
        d["schema_version"] = json!(2);
        let e = from_value(d).unwrap_err().to_string();
        assert!(e.contains("/schema_version"), "{e}");

        let mut d = doc();
        d["model"]["bogus"] = json!(1);
        assert!(from_value(d).is_err());
    }

    #[test]
    fn sweep_pointer_edits() {
        let mut d = doc();
        set_scalar(&mut d, &resolve_param("lambda").unwrap(), 0.25).unwrap();
        assert_eq!(d["model"]["lambda"], json!(0.25));
        assert!(set_scalar(&mut d, "/model/fes", 1.0).is_err());
        assert!(set_scalar(&mut d, "/model/nothing", 1.0).is_err());
        assert!(resolve_param("mu").is_err());
    }
}
