//! Executes a scenario and writes its artifacts: `trace.csv`,
//! `summary.json` and `report.txt`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use apportion_core::netsim::{DelayKind, DelayModel, FixedDelays, RunOptions};
use apportion_core::scenario::{self, DayOptions, DayTrace, DemandProfile, DispatchStatus};
use serde::Serialize;

use crate::config::{DelayKindConfig, Scenario};
use crate::trace;

/// Command-line overrides on top of a scenario.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub rho: Option<f64>,
    pub tau_bar: Option<u32>,
    pub delay_model: Option<DelayKindConfig>,
    pub dispatch_period_s: Option<f64>,
    pub demand: Option<f64>,
    /// Run the single dispatch instant at this hour instead of the day.
    pub cycle_at: Option<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum OverrideError {
    #[error("fixed delay {delay} on link {from} -> {to} exceeds tau_bar {tau_bar}")]
    DelayAboveBound { from: usize, to: usize, delay: u32, tau_bar: u32 },
    #[error("rho must be a non-negative number")]
    Rho,
    #[error(transparent)]
    Core(#[from] apportion_core::Error),
}

impl Overrides {
    pub fn apply(&self, mut s: Scenario) -> Result<Scenario, OverrideError> {
        if let Some(seed) = self.seed {
            s.seed = seed;
        }
        if let Some(rho) = self.rho {
            if !(rho >= 0.0 && rho.is_finite()) {
                return Err(OverrideError::Rho);
            }
            s.rho = rho;
        }
        let tau_bar = self.tau_bar.unwrap_or(s.delays.tau_bar);
        s.delays = match (self.delay_model, &s.delays.kind) {
            (Some(DelayKindConfig::Stochastic), _) | (None, DelayKind::Stochastic { .. }) => {
                DelayModel::stochastic(tau_bar, s.seed)
            }
            // switching to fixed draws one seeded delay per directed link
            (Some(DelayKindConfig::Fixed), DelayKind::Stochastic { .. }) => {
                DelayModel::fixed(tau_bar, FixedDelays::random(&s.graph, tau_bar, s.seed))
            }
            (_, DelayKind::Fixed(fixed)) => {
                if let Some(((a, b), delay)) = fixed.iter().find(|&(_, d)| d > tau_bar) {
                    return Err(OverrideError::DelayAboveBound {
                        from: a.label(),
                        to: b.label(),
                        delay,
                        tau_bar,
                    });
                }
                DelayModel::fixed(tau_bar, fixed.clone())
            }
        };
        s.graph.check_delay_bounds(tau_bar)?;
        if let Some(p) = self.dispatch_period_s {
            s.schedule.dispatch_period_s = p;
        }
        if let Some(d) = self.demand {
            s.schedule.demand = DemandProfile::constant(d);
        }
        if let Some(h) = self.cycle_at {
            s.schedule.start_h = h;
            s.schedule.end_h = h;
        }
        s.schedule.validate()?;
        Ok(s)
    }
}

/// Dispatch instants where the demand is outside the capacity range, as
/// `(hours, demand, min_total, max_total)`.
pub fn infeasible_instants(s: &Scenario) -> apportion_core::Result<Vec<(f64, f64, f64, f64)>> {
    let mut out = Vec::new();
    for h in s.schedule.instants() {
        let bounds = s.fleet.bounds_at(h, s.schedule.epsilon)?;
        let lo: f64 = bounds.iter().flatten().map(|b| b.min).sum();
        let hi: f64 = bounds.iter().flatten().map(|b| b.max).sum();
        let demand = s.schedule.demand.at(h);
        if demand < lo || demand > hi || bounds.iter().all(Option::is_none) {
            out.push((h, demand, lo, hi));
        }
    }
    Ok(out)
}

pub fn execute(s: &Scenario, verbose: bool) -> apportion_core::Result<DayTrace> {
    let options = DayOptions {
        rho: s.rho,
        diameter: s.diameter,
        seed: s.seed,
        run: RunOptions {
            record_states: verbose,
            ..RunOptions::default()
        },
    };
    scenario::run_day(&s.fleet, &s.graph, &s.schedule, &s.delays, options)
}

#[derive(Debug, Clone, Serialize)]
pub struct DispatchSummary {
    pub cycle: usize,
    pub hours: f64,
    pub demand: f64,
    pub status: &'static str,
    pub theta: Option<u64>,
    pub steps: Option<u64>,
    pub overrun: bool,
    pub total_command: f64,
    pub total_delivered: f64,
    pub max_conservation_error: Option<f64>,
    pub commands: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub format: &'static str,
    pub seed: u64,
    pub rho: f64,
    pub tau_bar: u32,
    pub delay_model: &'static str,
    pub nodes: usize,
    pub dispatch_period_s: f64,
    pub cycles: usize,
    pub infeasible: usize,
    pub overruns: usize,
    pub max_theta: u64,
    pub max_steps: u64,
    /// Largest |Σ delivered − demand| over dispatched instants.
    pub worst_error_w: f64,
    pub max_conservation_error: f64,
    pub trace_sha256: String,
    pub dispatches: Vec<DispatchSummary>,
}

pub const SUMMARY_FORMAT: &str = "apportion-summary v1";

pub fn summarize(s: &Scenario, day: &DayTrace, trace_bytes: &[u8]) -> Summary {
    let dispatches: Vec<DispatchSummary> = day
        .dispatches
        .iter()
        .map(|d| {
            let out = d.outcome();
            DispatchSummary {
                cycle: d.cycle,
                hours: d.hours,
                demand: d.demand,
                status: match d.status {
                    DispatchStatus::Dispatched(_) => "dispatched",
                    DispatchStatus::Infeasible { .. } => "infeasible",
                },
                theta: out.map(|o| o.theta),
                steps: out.map(|o| o.steps),
                overrun: d.overrun,
                total_command: d.total_command(),
                total_delivered: d.total_delivered(),
                max_conservation_error: out.map(|o| o.trace.max_conservation_error()),
                commands: d.commands.clone(),
            }
        })
        .collect();
    let dispatched = || dispatches.iter().filter(|d| d.theta.is_some());
    Summary {
        format: SUMMARY_FORMAT,
        seed: s.seed,
        rho: s.rho,
        tau_bar: s.delays.tau_bar,
        delay_model: match s.delays.kind {
            DelayKind::Fixed(_) => "fixed",
            DelayKind::Stochastic { .. } => "stochastic",
        },
        nodes: s.graph.node_count(),
        dispatch_period_s: s.schedule.dispatch_period_s,
        cycles: dispatches.len(),
        infeasible: dispatches.len() - dispatched().count(),
        overruns: dispatches.iter().filter(|d| d.overrun).count(),
        max_theta: dispatched().filter_map(|d| d.theta).max().unwrap_or(0),
        max_steps: dispatched().filter_map(|d| d.steps).max().unwrap_or(0),
        worst_error_w: dispatched()
            .map(|d| (d.total_delivered - d.demand).abs())
            .fold(0.0, f64::max),
        max_conservation_error: dispatched()
            .filter_map(|d| d.max_conservation_error)
            .fold(0.0, f64::max),
        trace_sha256: trace::sha256_hex(trace_bytes),
        dispatches,
    }
}

pub fn report(summary: &Summary) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "seed {}  rho {}  tau_bar {}  delays {}", summary.seed, summary.rho, summary.tau_bar, summary.delay_model);
    let _ = writeln!(
        out,
        "{} dispatch instants, {} infeasible, {} overran the dispatch period",
        summary.cycles, summary.infeasible, summary.overruns
    );
    let _ = writeln!(
        out,
        "worst |delivered - demand| {:.3} W, max theta {}, max iterations {}, conservation error {:.3e}",
        summary.worst_error_w, summary.max_theta, summary.max_steps, summary.max_conservation_error
    );
    let _ = writeln!(out, "trace sha256 {}", summary.trace_sha256);
    let _ = writeln!(out);
    let _ = writeln!(out, "{:>6} {:>8} {:>9} {:>11} {:>11} {:>5} {:>5}  status", "cycle", "hours", "demand", "sum_pi", "delivered", "theta", "iters");
    for d in &summary.dispatches {
        let _ = writeln!(
            out,
            "{:>6} {:>8.4} {:>9.1} {:>11.3} {:>11.3} {:>5} {:>5}  {}{}",
            d.cycle,
            d.hours,
            d.demand,
            d.total_command,
            d.total_delivered,
            d.theta.map_or("-".into(), |t| t.to_string()),
            d.steps.map_or("-".into(), |t| t.to_string()),
            d.status,
            if d.overrun { " (overrun)" } else { "" },
        );
    }
    out
}

pub struct Artifacts {
    pub dir: PathBuf,
    pub summary: Summary,
}

/// Runs `s` and writes the three artifacts into `dir`.
pub fn run_to_dir(s: &Scenario, verbose: bool, dir: &Path) -> anyhow::Result<Artifacts> {
    let day = execute(s, verbose)?;
    let bytes = trace::render(&day, s.schedule.consensus_period_s, verbose)?;
    let summary = summarize(s, &day, &bytes);
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("trace.csv"), &bytes)?;
    std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    std::fs::write(dir.join("report.txt"), report(&summary))?;
    Ok(Artifacts {
        dir: dir.to_path_buf(),
        summary,
    })
}
