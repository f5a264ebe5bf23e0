//! The four subcommands as library calls returning serializable results.

use bulkvac::config::ModelConfig;
use bulkvac::measures::{self, PerformanceReport};
use bulkvac::{
    simulate, solve_model, ArbitraryDistribution, DepartureDistribution, Engine, Error,
    NormalizationConstants, SimConfig, SimulationEstimate,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::run_config::{self, RunConfig};
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub model: ModelConfig,
    pub engine: Engine,
    pub constants: NormalizationConstants,
    pub departure: DepartureDistribution,
    pub arbitrary: ArbitraryDistribution,
    pub report: PerformanceReport,
}

pub fn analyze(cfg: &RunConfig, engine: Engine) -> Result<Analysis, CliError> {
    let spec = cfg.spec()?;
    let sol = solve_model(&spec, engine, cfg.truncation.queue_cap)?;
    let report = measures::report(&spec, &sol.departure, &sol.constants, &sol.arbitrary)?;
    Ok(Analysis {
        model: cfg.model.clone(),
        engine,
        constants: sol.constants,
        departure: sol.departure,
        arbitrary: sol.arbitrary,
        report,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Simulated {
    pub model: ModelConfig,
    pub config: SimConfig,
    pub estimate: SimulationEstimate,
    pub psi_sys: Vec<f64>,
    pub esf: f64,
    pub lq: f64,
}

pub fn simulate_run(cfg: &RunConfig, sim: &SimConfig) -> Result<Simulated, CliError> {
    let spec = cfg.spec()?;
    let estimate = simulate(&spec, sim)?;
    let (psi_sys, _) = measures::queue_system_pmfs(&estimate.arbitrary);
    let lq = estimate
        .psi_queue
        .iter()
        .enumerate()
        .map(|(n, p)| n as f64 * p)
        .sum();
    Ok(Simulated {
        model: cfg.model.clone(),
        config: *sim,
        esf: measures::energy_saving_factor(&estimate.arbitrary),
        psi_sys,
        lq,
        estimate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    /// `tv` for total-variation distance, `rel` for relative error,
    /// `abs` for the largest absolute entry difference.
    pub metric: String,
    pub analytic: Option<f64>,
    pub simulated: Option<f64>,
    pub value: f64,
    /// None for informational rows that do not enter the verdict.
    pub tolerance: Option<f64>,
    pub pass: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub checks: Vec<Check>,
    pub pass: bool,
}

pub fn tv(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().max(y.len());
    (0..n)
        .map(|i| (x.get(i).copied().unwrap_or(0.0) - y.get(i).copied().unwrap_or(0.0)).abs())
        .sum::<f64>()
        / 2.0
}

fn flat(rows: &[Vec<f64>], width: usize, len: usize, scale: f64) -> Vec<f64> {
    let mut out = vec![0.0; width * len];
    for (n, row) in rows.iter().enumerate().take(len) {
        for (j, x) in row.iter().enumerate() {
            out[n * width + j] = x / scale;
        }
    }
    out
}

fn joint_arbitrary(a: &ArbitraryDistribution, len: usize) -> Vec<f64> {
    let d = a.policy.delta();
    let mut v: Vec<f64> = (0..a.a).map(|n| (1.0 - d) * a.theta(n)).collect();
    v.extend(flat(&a.alpha, a.b - a.a + 1, len, 1.0));
    v.extend(flat(&a.beta, a.b, len, 1.0));
    v.extend(flat(&a.gamma, a.a, len, 1.0));
    v
}

/// Joint law at completion epochs, per completion.
fn joint_departure(d: &DepartureDistribution, len: usize) -> Vec<f64> {
    let mut v = flat(&d.alpha_plus, d.b - d.a + 1, len, d.scale);
    v.extend(flat(&d.beta_plus, d.b, len, d.scale));
    v.extend(flat(&d.gamma_plus, d.a, len, d.scale));
    v
}

pub fn compare(cfg: &RunConfig, engine: Engine, sim: &SimConfig) -> Result<Comparison, CliError> {
    let an = analyze(cfg, engine)?;
    let si = simulate_run(cfg, sim)?;
    let tol = &cfg.tolerances;
    let est = &si.estimate;
    let r = &an.report;
    let mut checks = Vec::new();
    let mut push =
        |name: &str, metric: &str, a: Option<f64>, s: Option<f64>, value: f64, t: Option<f64>| {
            checks.push(Check {
                name: name.into(),
                metric: metric.into(),
                analytic: a,
                simulated: s,
                value,
                tolerance: t,
                pass: t.map(|t| value < t),
            });
        };
    let rel = |a: f64, s: f64| (s - a).abs() / a.abs().max(f64::MIN_POSITIVE);

    push(
        "psi_queue",
        "tv",
        None,
        None,
        tv(&r.psi_queue, &est.psi_queue),
        Some(tol.tv),
    );
    push(
        "psi_sys",
        "tv",
        None,
        None,
        tv(&r.psi_sys, &si.psi_sys),
        Some(tol.tv),
    );
    let len = an.arbitrary.n_max.max(est.arbitrary.n_max) + 1;
    push(
        "arbitrary_joint",
        "tv",
        None,
        None,
        tv(
            &joint_arbitrary(&an.arbitrary, len),
            &joint_arbitrary(&est.arbitrary, len),
        ),
        None,
    );
    push(
        "departure_joint",
        "tv",
        None,
        None,
        tv(
            &joint_departure(&an.departure, len),
            &joint_departure(&est.departure, len),
        ),
        None,
    );
    push(
        "mean_wait",
        "rel",
        Some(r.wq),
        Some(est.mean_wait),
        rel(r.wq, est.mean_wait),
        Some(tol.wait),
    );
    push(
        "expected_idle",
        "rel",
        Some(r.expected_idle.total),
        Some(est.mean_idle),
        rel(r.expected_idle.total, est.mean_idle),
        Some(tol.idle),
    );
    push(
        "flow_throughput",
        "rel",
        Some(r.flow_throughput),
        Some(est.departures_per_slot),
        rel(r.flow_throughput, est.departures_per_slot),
        Some(tol.throughput),
    );
    push(
        "throughput",
        "rel",
        Some(r.throughput),
        Some(est.departures_per_slot),
        rel(r.throughput, est.departures_per_slot),
        None,
    );
    push(
        "esf",
        "rel",
        Some(r.esf),
        Some(si.esf),
        rel(r.esf, si.esf),
        None,
    );
    push("lq", "rel", Some(r.lq), Some(si.lq), rel(r.lq, si.lq), None);
    let beta_len = an.arbitrary.beta.len().max(est.arbitrary.beta.len());
    let b = an.arbitrary.b;
    let beta_diff = flat(&an.arbitrary.beta, b, beta_len, 1.0)
        .iter()
        .zip(flat(&est.arbitrary.beta, b, beta_len, 1.0))
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    push("beta_block", "abs", None, None, beta_diff, None);

    let pass = checks.iter().all(|c| c.pass != Some(false));
    Ok(Comparison { checks, pass })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PointStatus {
    Ok,
    Unstable,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub param: String,
    pub value: f64,
    pub measure: String,
    pub result: Option<f64>,
    pub status: PointStatus,
    pub message: Option<String>,
}

pub const SWEEP_MEASURES: &[&str] = &[
    "rho",
    "lq",
    "ls_fes",
    "ls_sos",
    "wq",
    "ws_fes",
    "ws_sos",
    "esf",
    "expected_idle",
    "dormant_after_fes",
    "dormant_after_sos",
    "vacation_after_fes",
    "vacation_after_sos",
    "utility_fes",
    "utility_sos",
    "utility",
    "cycle",
    "throughput",
    "flow_throughput",
    "p_idle",
    "p_busy_fes",
    "p_busy_sos",
];

pub fn measure_value(r: &PerformanceReport, name: &str) -> f64 {
    let i = &r.expected_idle;
    match name {
        "rho" => r.rho,
        "lq" => r.lq,
        "ls_fes" => r.ls_fes,
        "ls_sos" => r.ls_sos,
        "wq" => r.wq,
        "ws_fes" => r.ws_fes,
        "ws_sos" => r.ws_sos,
        "esf" => r.esf,
        "expected_idle" => i.total,
        "dormant_after_fes" => i.dormant_after_fes,
        "dormant_after_sos" => i.dormant_after_sos,
        "vacation_after_fes" => i.vacation_after_fes,
        "vacation_after_sos" => i.vacation_after_sos,
        "utility_fes" => r.utility.fes,
        "utility_sos" => r.utility.sos,
        "utility" => r.utility.total,
        "cycle" => r.cycle,
        "throughput" => r.throughput,
        "flow_throughput" => r.flow_throughput,
        "p_idle" => r.p_idle,
        "p_busy_fes" => r.p_busy_fes,
        "p_busy_sos" => r.p_busy_sos,
        other => panic!("unknown measure {other}"),
    }
}

fn point(base: &Value, pointer: &str, x: f64, engine: Engine) -> Result<Vec<SweepRow>, CliError> {
    let mut doc = base.clone();
    run_config::set_scalar(&mut doc, pointer, x)?;
    let cfg = run_config::from_value(doc)?;
    let row = |measure: &str, result: Option<f64>, status: PointStatus, message: Option<String>| {
        SweepRow {
            param: pointer.to_string(),
            value: x,
            measure: measure.into(),
            result,
            status,
            message,
        }
    };
    match analyze(&cfg, engine) {
        Ok(a) => Ok(SWEEP_MEASURES
            .iter()
            .map(|m| row(m, Some(measure_value(&a.report, m)), PointStatus::Ok, None))
            .collect()),
        Err(CliError::Model(Error::Unstable { rho })) => Ok(vec![row(
            "rho",
            Some(rho),
            PointStatus::Unstable,
            Some(format!("rho = {rho:.6} >= 1")),
        )]),
        Err(CliError::Model(e)) if e.exit_code() == 3 => Ok(vec![row(
            "rho",
            None,
            PointStatus::Unstable,
            Some(e.to_string()),
        )]),
        Err(CliError::Model(e)) if e.exit_code() == 4 => Ok(vec![row(
            "rho",
            None,
            PointStatus::Error,
            Some(e.to_string()),
        )]),
        Err(e) => Err(e),
    }
}

/// Long-format sweep: one row per value and measure, sorted by value.
pub fn sweep(
    base: &Value,
    param: &str,
    values: &[f64],
    engine: Engine,
) -> Result<Vec<SweepRow>, CliError> {
    let pointer = run_config::resolve_param(param)?;
    if values.is_empty() {
        return Err(CliError::Config("sweep needs at least one value".into()));
    }
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(CliError::Config(format!("sweep value {bad} is not finite")));
    }
    let mut probe = base.clone();
    run_config::set_scalar(&mut probe, &pointer, values[0])?;
    let mut order: Vec<f64> = values.to_vec();
    order.sort_by(|a, b| a.partial_cmp(b).unwrap());
    order.dedup();
    let chunks: Vec<Vec<SweepRow>> = order
        .par_iter()
        .map(|&x| point(base, &pointer, x, engine))
        .collect::<Result<_, _>>()?;
    Ok(chunks.into_iter().flatten().collect())
}
