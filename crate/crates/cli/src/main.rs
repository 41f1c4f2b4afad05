use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use apportion::config::{ConfigError, DelayKindConfig, ScenarioConfig};
use apportion::replicate::{self, UnknownSuite};
use apportion::run::{self, OverrideError, Overrides};
use apportion_core::Error as CoreError;
use clap::{Parser, Subcommand};

const OUT_DIR_ENV: &str = "APPORTION_OUT_DIR";

mod exit {
    pub const CRITERION: u8 = 1;
    pub const CONFIG: u8 = 2;
    pub const INFEASIBLE: u8 = 3;
    pub const FAULT: u8 = 4;
}

#[derive(Parser)]
#[command(name = "apportion", version, about = "Delay-tolerant ratio consensus dispatch simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario (the built-in six-unit ring when --config is absent).
    Run(RunArgs),
    /// Run a replication suite and print one pass/fail line per criterion.
    Replicate {
        /// fig1-misconvergence, six-lis-day or oracle-sweep
        suite: String,
    },
    /// Print the resolved scenario as TOML.
    Config {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Termination threshold on max - min of the ratios.
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    tau_bar: Option<u32>,
    #[arg(long, value_enum)]
    delay_model: Option<DelayKindConfig>,
    /// Seconds between dispatch instants.
    #[arg(long)]
    dispatch_period: Option<f64>,
    /// One trace row per node per step instead of per checkpoint.
    #[arg(long)]
    verbose_trace: bool,
    /// Run a single cycle instead of the whole day.
    #[arg(long)]
    cycle_only: bool,
    /// Hour of the single cycle.
    #[arg(long, default_value_t = 4.0, requires = "cycle_only")]
    at: f64,
    /// Constant demand in watts, replacing the scenario's schedule.
    #[arg(long)]
    demand: Option<f64>,
    /// Refuse to run if any dispatch instant is infeasible.
    #[arg(long)]
    check_feasibility: bool,
    /// Output directory; defaults to $APPORTION_OUT_DIR, then the
    /// scenario's [output] dir, then ./apportion-out.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn load(path: Option<&PathBuf>) -> Result<ScenarioConfig, ConfigError> {
    match path {
        Some(p) => ScenarioConfig::load(p),
        None => Ok(ScenarioConfig::six_lis()),
    }
}

fn cmd_run(args: RunArgs) -> anyhow::Result<u8> {
    let config = match load(args.config.as_ref()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(exit::CONFIG);
        }
    };
    let overrides = Overrides {
        seed: args.seed,
        rho: args.rho,
        tau_bar: args.tau_bar,
        delay_model: args.delay_model,
        dispatch_period_s: args.dispatch_period,
        demand: args.demand,
        cycle_at: args.cycle_only.then_some(args.at),
    };
    let scenario = match config.build().map_err(anyhow::Error::from).and_then(|s| Ok(overrides.apply(s)?)) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e:#}");
            return Ok(exit::CONFIG);
        }
    };

    let infeasible = run::infeasible_instants(&scenario)?;
    if !infeasible.is_empty() && (args.check_feasibility || args.cycle_only) {
        for (h, demand, lo, hi) in &infeasible {
            eprintln!("infeasible at {h:.4} h: demand {demand} W outside capacity range [{lo}, {hi}] W");
        }
        return Ok(exit::INFEASIBLE);
    }

    let dir = args
        .out_dir
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .or_else(|| scenario.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("apportion-out"));
    let artifacts = match run::run_to_dir(&scenario, args.verbose_trace, &dir) {
        Ok(a) => a,
        Err(e) if e.downcast_ref::<CoreError>().is_some() => {
            eprintln!("fault: {e}");
            return Ok(exit::FAULT);
        }
        Err(e) => return Err(e),
    };
    let s = &artifacts.summary;
    println!(
        "{} dispatch instants ({} infeasible, {} overran), worst |delivered - demand| {:.3} W, max theta {}",
        s.cycles, s.infeasible, s.overruns, s.worst_error_w, s.max_theta
    );
    if let [only] = s.dispatches.as_slice() {
        println!("sum of commands {:.3} W for demand {} W", only.total_command, only.demand);
    }
    println!("wrote trace.csv, summary.json, report.txt to {}", artifacts.dir.display());
    Ok(0)
}

fn cmd_replicate(suite: &str) -> anyhow::Result<u8> {
    let checks = match replicate::run_suite(suite) {
        Ok(c) => c,
        Err(e) if e.is::<UnknownSuite>() => {
            eprintln!("error: {e}");
            return Ok(exit::CONFIG);
        }
        Err(e) => return Err(e),
    };
    for c in &checks {
        println!("{c}");
    }
    Ok(if checks.iter().all(|c| c.pass) { 0 } else { exit::CRITERION })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Replicate { suite } => cmd_replicate(&suite),
        Command::Config { config } => match load(config.as_ref()) {
            Ok(c) => {
                print!("{}", c.to_toml());
                Ok(0)
            }
            Err(e) => {
                eprintln!("error: {e}");
                Ok(exit::CONFIG)
            }
        },
    };
    match result.context("apportion") {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            let code = if e.root_cause().downcast_ref::<OverrideError>().is_some() {
                exit::CONFIG
            } else {
                exit::FAULT
            };
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}
