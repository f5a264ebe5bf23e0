use std::path::PathBuf;
use std::process::ExitCode;

use bulkvac::Engine;
use bulkvac_cli::run_config::{self, EngineChoice, Format, RunConfig};
use bulkvac_cli::{commands, output, CliError};
use clap::{Args, Parser, Subcommand};

/// Stationary distributions and performance measures of a discrete-time
/// batch-service queue with optional second service and vacations.
///
/// Log verbosity is read from BULKVAC_LOG (error, warn, info, debug, trace).
#[derive(Parser)]
#[command(name = "bulkvac", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the model and write departure-epoch, arbitrary-slot and measure tables.
    Analyze(Common),
    /// Run the slot-level simulator.
    Simulate(Common),
    /// Run the solver and the simulator and report distances and relative errors.
    Compare(Common),
    /// Re-solve over a list of values of one scalar parameter.
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; without it results go to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long, value_enum)]
    engine: Option<EngineChoice>,
    #[arg(long)]
    slots: Option<u64>,
    #[arg(long)]
    warmup: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replications: Option<u32>,
    /// JSON pointer into the config (e.g. /model/sos/family/scale) or an alias: lambda, p.
    #[arg(long)]
    param: Option<String>,
    /// Comma-separated values, or start:step:end (inclusive).
    #[arg(long)]
    values: Option<String>,
}

fn parse_values(s: &str) -> Result<Vec<f64>, CliError> {
    let bad = |t: &str| CliError::Config(format!("--values: cannot parse `{t}`"));
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() == 3 {
        let nums: Vec<f64> = parts
            .iter()
            .map(|t| t.trim().parse::<f64>().map_err(|_| bad(t)))
            .collect::<Result<_, _>>()?;
        let (start, step, end) = (nums[0], nums[1], nums[2]);
        if !(step > 0.0) || end < start {
            return Err(CliError::Config(format!("--values: bad range `{s}`")));
        }
        let count = ((end - start) / step + 1e-9).floor() as usize;
        return Ok((0..=count)
            .map(|i| ((start + i as f64 * step) * 1e9).round() / 1e9)
            .collect());
    }
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| bad(t)))
        .collect()
}

impl Common {
    fn engine(&self, cfg: &RunConfig) -> Engine {
        self.engine
            .or(cfg.engine)
            .unwrap_or(EngineChoice::Analytic)
            .into()
    }

    fn format(&self, cfg: &RunConfig) -> Format {
        self.format.or(cfg.format).unwrap_or(Format::Csv)
    }

    fn sim(&self, cfg: &RunConfig) -> bulkvac::SimConfig {
        let mut s = cfg.sim_config();
        if let Some(x) = self.slots {
            s.slots = x;
        }
        if let Some(x) = self.warmup {
            s.warmup = x;
        }
        if let Some(x) = self.seed {
            s.seed = x;
        }
        if let Some(x) = self.replications {
            s.replications = x;
        }
        s
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Analyze(c) => {
            let cfg = run_config::load(&c.config)?;
            let a = commands::analyze(&cfg, c.engine(&cfg))?;
            output::emit_analysis(&a, c.out.as_deref(), c.format(&cfg))
        }
        Command::Simulate(c) => {
            let cfg = run_config::load(&c.config)?;
            let s = commands::simulate_run(&cfg, &c.sim(&cfg))?;
            output::emit_simulation(&s, c.out.as_deref(), c.format(&cfg))
        }
        Command::Compare(c) => {
            let cfg = run_config::load(&c.config)?;
            let cmp = commands::compare(&cfg, c.engine(&cfg), &c.sim(&cfg))?;
            output::emit_comparison(&cmp, c.out.as_deref(), c.format(&cfg))?;
            eprintln!("compare: {}", if cmp.pass { "PASS" } else { "FAIL" });
            Ok(())
        }
        Command::Sweep(c) => {
            let doc = run_config::read_value(&c.config)?;
            let cfg = run_config::from_value(doc.clone())?;
            let (param, values) = match (&c.param, &c.values, &cfg.sweep) {
                (Some(p), Some(v), _) => (p.clone(), parse_values(v)?),
                (Some(p), None, Some(s)) if *p == s.param => (p.clone(), s.values.clone()),
                (None, Some(v), Some(s)) => (s.param.clone(), parse_values(v)?),
                (None, None, Some(s)) => (s.param.clone(), s.values.clone()),
                _ => {
                    return Err(CliError::Config(
                        "sweep needs --param and --values or a `sweep` section in the config"
                            .into(),
                    ))
                }
            };
            let rows = commands::sweep(&doc, &param, &values, c.engine(&cfg))?;
            output::emit_sweep(&rows, c.out.as_deref(), c.format(&cfg))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("BULKVAC_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
