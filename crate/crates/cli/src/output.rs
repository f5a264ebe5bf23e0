//! Table and document emission. CSV numbers carry 6 decimals; JSON keeps
//! full precision and reads back to identical values.

use std::io::Write;
use std::path::Path;

use bulkvac::measures::PerformanceReport;
use bulkvac::{ArbitraryDistribution, DepartureDistribution};
use serde::Serialize;

use crate::commands::{Analysis, Comparison, Simulated, SweepRow};
use crate::run_config::Format;
use crate::CliError;

pub fn fmt6(x: f64) -> String {
    format!("{x:.6}")
}

fn opt6(x: Option<f64>) -> String {
    x.map(fmt6).unwrap_or_default()
}

pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn write_to<W: Write>(&self, w: W) -> Result<(), CliError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(&self.header)?;
        for r in &self.rows {
            out.write_record(r)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn row_or_zero(v: &[Vec<f64>], n: usize, width: usize) -> Vec<f64> {
    v.get(n).cloned().unwrap_or_else(|| vec![0.0; width])
}

/// Rows n with alpha+_{n,r}, their total, beta+_{n,y}, total, gamma+_n^[k], total.
pub fn departure_table(d: &DepartureDistribution) -> Table {
    let (a, b) = (d.a, d.b);
    let mut header = vec!["n".to_string()];
    header.extend((a..=b).map(|r| format!("alpha+_{r}")));
    header.push("alpha+".into());
    header.extend((1..=b).map(|y| format!("beta+_{y}")));
    header.push("beta+".into());
    header.extend((0..a).map(|k| format!("gamma+[{k}]")));
    header.push("gamma+".into());
    let rows = (0..=d.n_max)
        .map(|n| {
            let mut r = vec![n.to_string()];
            for block in [
                row_or_zero(&d.alpha_plus, n, b - a + 1),
                row_or_zero(&d.beta_plus, n, b),
                row_or_zero(&d.gamma_plus, n, a),
            ] {
                r.extend(block.iter().map(|x| fmt6(*x)));
                r.push(fmt6(block.iter().sum()));
            }
            r
        })
        .collect();
    Table { header, rows }
}

/// Rows n with theta, alpha_{n,r}, beta_{n,y}, gamma_n^[k] and the queue and
/// system pmfs.
pub fn arbitrary_table(x: &ArbitraryDistribution, psi_queue: &[f64], psi_sys: &[f64]) -> Table {
    let (a, b) = (x.a, x.b);
    let mut header = vec!["n".to_string(), "theta".to_string()];
    header.extend((a..=b).map(|r| format!("alpha_{r}")));
    header.push("alpha".into());
    header.extend((1..=b).map(|y| format!("beta_{y}")));
    header.push("beta".into());
    header.extend((0..a).map(|k| format!("gamma[{k}]")));
    header.push("gamma".into());
    header.push("psi_queue".into());
    header.push("psi_sys".into());
    let rows = (0..=x.n_max)
        .map(|n| {
            let mut r = vec![n.to_string(), fmt6(x.theta(n))];
            for block in [
                row_or_zero(&x.alpha, n, b - a + 1),
                row_or_zero(&x.beta, n, b),
                row_or_zero(&x.gamma, n, a),
            ] {
                r.extend(block.iter().map(|v| fmt6(*v)));
                r.push(fmt6(block.iter().sum()));
            }
            r.push(fmt6(psi_queue.get(n).copied().unwrap_or(0.0)));
            r.push(fmt6(psi_sys.get(n).copied().unwrap_or(0.0)));
            r
        })
        .collect();
    Table { header, rows }
}

pub fn measures_table(r: &PerformanceReport) -> Table {
    let i = &r.expected_idle;
    let mut rows: Vec<(String, f64)> = vec![
        ("rho".into(), r.rho),
        ("lq".into(), r.lq),
        ("ls_fes".into(), r.ls_fes),
        ("ls_sos".into(), r.ls_sos),
        ("wq".into(), r.wq),
        ("ws_fes".into(), r.ws_fes),
        ("ws_sos".into(), r.ws_sos),
        ("esf".into(), r.esf),
        ("esf_percent".into(), 100.0 * r.esf),
        ("expected_idle".into(), i.total),
        ("dormant_after_fes".into(), i.dormant_after_fes),
        ("dormant_after_sos".into(), i.dormant_after_sos),
        ("vacation_after_fes".into(), i.vacation_after_fes),
        ("vacation_after_sos".into(), i.vacation_after_sos),
        ("utility_fes".into(), r.utility.fes),
        ("utility_sos".into(), r.utility.sos),
        ("utility".into(), r.utility.total),
        ("cycle".into(), r.cycle),
        ("throughput".into(), r.throughput),
        ("flow_throughput".into(), r.flow_throughput),
        ("p_idle".into(), r.p_idle),
        ("p_busy_fes".into(), r.p_busy_fes),
        ("p_busy_sos".into(), r.p_busy_sos),
        ("tail_mass_bound".into(), r.tail_mass_bound),
    ];
    // fes covers r = a..=b and sos covers y = 1..=b
    let b = r.server_marginals.sos.len();
    let a = b + 1 - r.server_marginals.fes.len();
    for (j, p) in r.server_marginals.fes.iter().enumerate() {
        rows.push((format!("psi_ser_{}", a + j), *p));
    }
    for (j, p) in r.server_marginals.sos.iter().enumerate() {
        rows.push((format!("eta_ser_{}", j + 1), *p));
    }
    Table {
        header: vec!["measure".into(), "value".into()],
        rows: rows.into_iter().map(|(k, v)| vec![k, fmt6(v)]).collect(),
    }
}

pub fn simulation_table(s: &Simulated) -> Table {
    let e = &s.estimate;
    let rows: Vec<(&str, Option<f64>, Option<f64>)> = vec![
        ("lq", Some(s.lq), None),
        ("esf", Some(s.esf), None),
        ("esf_percent", Some(100.0 * s.esf), None),
        ("mean_wait", Some(e.mean_wait), e.mean_wait_se),
        ("mean_idle", Some(e.mean_idle), e.mean_idle_se),
        (
            "departures_per_slot",
            Some(e.departures_per_slot),
            e.departures_per_slot_se,
        ),
        ("slots_observed", Some(e.slots_observed as f64), None),
        ("completions", Some(e.completions as f64), None),
    ];
    Table {
        header: vec!["measure".into(), "value".into(), "std_error".into()],
        rows: rows
            .into_iter()
            .map(|(k, v, se)| vec![k.to_string(), opt6(v), opt6(se)])
            .collect(),
    }
}

pub fn comparison_table(c: &Comparison) -> Table {
    let header = [
        "check",
        "metric",
        "analytic",
        "simulated",
        "value",
        "tolerance",
        "verdict",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let rows = c
        .checks
        .iter()
        .map(|k| {
            vec![
                k.name.clone(),
                k.metric.clone(),
                opt6(k.analytic),
                opt6(k.simulated),
                fmt6(k.value),
                opt6(k.tolerance),
                match k.pass {
                    Some(true) => "PASS".into(),
                    Some(false) => "FAIL".into(),
                    None => "INFO".into(),
                },
            ]
        })
        .collect();
    Table { header, rows }
}

pub fn sweep_table(rows: &[SweepRow]) -> Table {
    let header = ["param", "value", "measure", "result", "status", "message"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let rows = rows
        .iter()
        .map(|r| {
            vec![
                r.param.clone(),
                fmt6(r.value),
                r.measure.clone(),
                opt6(r.result),
                serde_json::to_value(r.status)
                    .ok()
                    .and_then(|v| v.as_str().map(String::from))
                    .unwrap_or_default(),
                r.message.clone().unwrap_or_default(),
            ]
        })
        .collect();
    Table { header, rows }
}

fn write_json<T: Serialize>(value: &T, path: Option<&Path>) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)?;
    match path {
        Some(p) => std::fs::write(p, text + "\n")?,
        None => println!("{text}"),
    }
    Ok(())
}

fn write_table(t: &Table, path: Option<&Path>) -> Result<(), CliError> {
    match path {
        Some(p) => t.write_to(std::fs::File::create(p)?),
        None => t.write_to(std::io::stdout().lock()),
    }
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))
}

pub fn emit_analysis(a: &Analysis, out: Option<&Path>, format: Format) -> Result<(), CliError> {
    match (out, format) {
        (None, Format::Json) => write_json(a, None),
        (None, Format::Csv) => write_table(&measures_table(&a.report), None),
        (Some(dir), Format::Json) => {
            ensure_dir(dir)?;
            write_json(a, Some(&dir.join("analysis.json")))
        }
        (Some(dir), Format::Csv) => {
            ensure_dir(dir)?;
            write_table(
                &departure_table(&a.departure),
                Some(&dir.join("departure.csv")),
            )?;
            write_table(
                &arbitrary_table(&a.arbitrary, &a.report.psi_queue, &a.report.psi_sys),
                Some(&dir.join("arbitrary.csv")),
            )?;
            write_table(&measures_table(&a.report), Some(&dir.join("measures.csv")))
        }
    }
}

pub fn emit_simulation(s: &Simulated, out: Option<&Path>, format: Format) -> Result<(), CliError> {
    match (out, format) {
        (None, Format::Json) => write_json(s, None),
        (None, Format::Csv) => write_table(&simulation_table(s), None),
        (Some(dir), Format::Json) => {
            ensure_dir(dir)?;
            write_json(s, Some(&dir.join("simulation.json")))
        }
        (Some(dir), Format::Csv) => {
            ensure_dir(dir)?;
            write_table(
                &departure_table(&s.estimate.departure),
                Some(&dir.join("departure.csv")),
            )?;
            write_table(
                &arbitrary_table(&s.estimate.arbitrary, &s.estimate.psi_queue, &s.psi_sys),
                Some(&dir.join("arbitrary.csv")),
            )?;
            write_table(&simulation_table(s), Some(&dir.join("measures.csv")))
        }
    }
}

pub fn emit_comparison(c: &Comparison, out: Option<&Path>, format: Format) -> Result<(), CliError> {
    let file = |dir: &Path, name: &str| -> Result<std::path::PathBuf, CliError> {
        ensure_dir(dir)?;
        Ok(dir.join(name))
    };
    match format {
        Format::Json => match out {
            Some(d) => write_json(c, Some(&file(d, "compare.json")?)),
            None => write_json(c, None),
        },
        Format::Csv => match out {
            Some(d) => write_table(&comparison_table(c), Some(&file(d, "compare.csv")?)),
            None => write_table(&comparison_table(c), None),
        },
    }
}

pub fn emit_sweep(rows: &[SweepRow], out: Option<&Path>, format: Format) -> Result<(), CliError> {
    let path = match out {
        Some(d) => {
            ensure_dir(d)?;
            Some(d.join(match format {
                Format::Csv => "sweep.csv",
                Format::Json => "sweep.json",
            }))
        }
        None => None,
    };
    match format {
        Format::Json => write_json(&rows, path.as_deref()),
        Format::Csv => write_table(&sweep_table(rows), path.as_deref()),
    }
}
