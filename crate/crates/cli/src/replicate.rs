//! Built-in replication suites with pinned settings. Each suite returns
//! one [`Check`] per acceptance criterion it covers.

use std::fmt;
use std::time::Instant;

use apportion_core::apportion::{closed_form, ApportionProblem, Bounds};
use apportion_core::consensus::{ConsensusState, LocalWeights};
use apportion_core::netsim::{self, DelayModel, FixedDelays, RunOptions, Simulator};
use apportion_core::scenario::{DayTrace, UnitKind};
use apportion_core::termination::{CheckpointSchedule, NodeAgent};
use apportion_core::topology::{build_weights, metropolis_weights, Graph};
use apportion_core::NodeId;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::ScenarioConfig;
use crate::run;
use crate::trace;

pub const SUITES: [&str; 3] = ["fig1-misconvergence", "six-lis-day", "oracle-sweep"];

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub criterion: u8,
    pub pass: bool,
    pub detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.pass { "PASS" } else { "FAIL" };
        write!(f, "criterion {} {verdict}: {}", self.criterion, self.detail)
    }
}

fn check(criterion: u8, pass: bool, detail: String) -> Check {
    Check {
        criterion,
        pass,
        detail,
    }
}

#[derive(Debug, thiserror::Error)]
#[error("unknown suite `{0}`; expected one of fig1-misconvergence, six-lis-day, oracle-sweep")]
pub struct UnknownSuite(pub String);

pub fn run_suite(name: &str) -> anyhow::Result<Vec<Check>> {
    match name {
        "fig1-misconvergence" => fig1_misconvergence(),
        "six-lis-day" => six_lis_day(),
        "oracle-sweep" => oracle_sweep(),
        other => Err(UnknownSuite(other.to_string()).into()),
    }
}

/// Five nodes, values summing to 2000.
pub fn fig1_network() -> (Graph, Vec<f64>) {
    let g = Graph::new(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (0, 2)]).expect("static graph");
    (g, vec![100.0, 250.0, 300.0, 550.0, 800.0])
}

/// Ratio averaging with a conservation audit after every step. Returns the
/// final per-node values and the worst relative conservation error.
pub fn audited_averaging(
    g: &Graph,
    x: &[f64],
    delays: &DelayModel,
    steps: u64,
) -> apportion_core::Result<(Vec<f64>, f64)> {
    let w = build_weights(g)?;
    let states: Vec<ConsensusState> = x.iter().map(|&v| ConsensusState::new(v, 1.0)).collect();
    let schedule = CheckpointSchedule::new(g.diameter()?.max(1) as u32, delays.tau_bar)?;
    let mut sim = Simulator::new(g, &w, &states, delays, schedule, 0.0)?;
    let first = sim.audit();
    let mut worst: f64 = 0.0;
    for _ in 0..steps {
        sim.step()?;
        worst = worst.max(sim.audit().conservation_error(&first));
    }
    let values = sim.agents().iter().map(|a| a.state().r / a.state().s).collect();
    Ok((values, worst))
}

fn fig1_misconvergence() -> anyhow::Result<Vec<Check>> {
    let start = Instant::now();
    let (g, x) = fig1_network();
    let truth = x.iter().sum::<f64>() / x.len() as f64;
    let tau_bar = 3;
    let mut worst_err: f64 = 0.0;
    let mut worst_cons: f64 = 0.0;
    for seed in 0..4 {
        for d in [
            DelayModel::fixed(tau_bar, FixedDelays::random(&g, tau_bar, seed)),
            DelayModel::fixed(tau_bar, FixedDelays::worst_case(&g, tau_bar)),
            DelayModel::stochastic(tau_bar, seed),
        ] {
            let (values, cons) = audited_averaging(&g, &x, &d, 600)?;
            worst_cons = worst_cons.max(cons);
            for v in values {
                worst_err = worst_err.max((v - truth).abs());
            }
        }
    }
    let mw = metropolis_weights(&g)?;
    let mut naive_worst: f64 = 0.0;
    for seed in 0..8 {
        let out = netsim::run_naive_averaging(&g, &mw, &x, &DelayModel::stochastic(tau_bar, seed), 600)?;
        for v in out {
            naive_worst = naive_worst.max((v - truth).abs() / truth);
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    Ok(vec![
        check(
            1,
            worst_err <= 1e-6 && naive_worst > 0.01 && elapsed < 1.0,
            format!(
                "ratio consensus max |x/w - {truth}| = {worst_err:.2e} under fixed and stochastic delays (tau_bar 3); \
                 naive baseline worst error {:.2}%; {elapsed:.3} s",
                naive_worst * 100.0
            ),
        ),
        check(6, worst_cons <= 1e-9, format!("averaging runs: max relative mass error {worst_cons:.2e}")),
    ])
}

/// Statistics over a six-LIS day.
pub struct DayStats {
    pub worst_error_w: f64,
    pub res_violations: usize,
    pub proportional_spread: f64,
    pub max_conservation_error: f64,
    pub theta_histogram: Vec<(u64, usize)>,
    pub max_theta: u64,
    pub overruns: usize,
    pub dispatched: usize,
    pub instants: usize,
}

pub fn day_stats(config: &ScenarioConfig, day: &DayTrace) -> anyhow::Result<DayStats> {
    let s = config.build()?;
    let mut stats = DayStats {
        worst_error_w: 0.0,
        res_violations: 0,
        proportional_spread: 0.0,
        max_conservation_error: 0.0,
        theta_histogram: Vec::new(),
        max_theta: 0,
        overruns: 0,
        dispatched: 0,
        instants: day.dispatches.len(),
    };
    let mut hist = std::collections::BTreeMap::new();
    for d in &day.dispatches {
        stats.worst_error_w = stats.worst_error_w.max((d.total_delivered() - d.demand).abs());
        stats.overruns += usize::from(d.overrun);
        let mut shares = Vec::new();
        for unit in &s.fleet.units {
            let i = unit.id.0;
            match &unit.kind {
                UnitKind::Renewable(p) => {
                    let power = p.power_at(d.hours)?;
                    let lo = (power - s.schedule.epsilon).max(0.0);
                    if !(lo <= d.commands[i] && d.commands[i] <= power) {
                        stats.res_violations += 1;
                    }
                }
                UnitKind::Dispatchable(b) => {
                    if b.min == 0.0 {
                        shares.push(d.commands[i] / b.max);
                    }
                }
            }
        }
        if let (Some(hi), Some(lo)) = (
            shares.iter().copied().reduce(f64::max),
            shares.iter().copied().reduce(f64::min),
        ) {
            stats.proportional_spread = stats.proportional_spread.max(hi - lo);
        }
        if let Some(o) = d.outcome() {
            stats.dispatched += 1;
            stats.max_conservation_error = stats.max_conservation_error.max(o.trace.max_conservation_error());
            stats.max_theta = stats.max_theta.max(o.theta);
            *hist.entry(o.theta).or_insert(0) += 1;
        }
    }
    stats.theta_histogram = hist.into_iter().collect();
    Ok(stats)
}

fn six_lis_day() -> anyhow::Result<Vec<Check>> {
    let config = ScenarioConfig::six_lis();
    let s = config.build()?;
    let rho = s.rho;
    let start = Instant::now();
    let day = run::execute(&s, false)?;
    let elapsed = start.elapsed().as_secs_f64();
    let stats = day_stats(&config, &day)?;

    let first = trace::render(&day, s.schedule.consensus_period_s, false)?;
    let again = trace::render(&run::execute(&s, false)?, s.schedule.consensus_period_s, false)?;

    let all = stats.dispatched == stats.instants;
    let within3 = stats.theta_histogram.iter().filter(|(t, _)| *t <= 3).map(|(_, n)| n).sum::<usize>();
    let hist = stats
        .theta_histogram
        .iter()
        .map(|(t, n)| format!("theta {t}: {n}"))
        .collect::<Vec<_>>()
        .join(", ");
    Ok(vec![
        check(
            2,
            all && stats.worst_error_w <= 150.0 && elapsed < 60.0,
            format!(
                "{} instants, worst |delivered - 7000| = {:.3} W, {} overran the dispatch period; {elapsed:.3} s",
                stats.instants, stats.worst_error_w, stats.overruns
            ),
        ),
        check(
            3,
            stats.res_violations == 0 && stats.proportional_spread <= 2.0 * rho,
            format!(
                "renewable command outside [P - eps, P] at {} instants; non-renewable share spread {:.2e} (limit {})",
                stats.res_violations,
                stats.proportional_spread,
                2.0 * rho
            ),
        ),
        check(
            6,
            stats.max_conservation_error <= 1e-9,
            format!("six-LIS day: max relative mass error {:.2e}", stats.max_conservation_error),
        ),
        check(
            7,
            all && stats.max_theta <= 100 && within3 == stats.dispatched,
            format!(
                "all {} cycles froze simultaneously, max theta {}; cycles within 3 checkpoints: {within3}/{} ({hist})",
                stats.dispatched, stats.max_theta, stats.dispatched
            ),
        ),
        check(
            8,
            first == again,
            format!("repeat day run trace sha256 {} vs {}", trace::sha256_hex(&first), trace::sha256_hex(&again)),
        ),
    ])
}

fn random_connected(n: usize, extra: f64, rng: &mut ChaCha8Rng) -> Graph {
    let mut edges = Vec::new();
    for i in 1..n {
        edges.push((rng.random_range(0..i), i));
    }
    for a in 0..n {
        for b in a + 1..n {
            if !edges.contains(&(a, b)) && rng.random_bool(extra) {
                edges.push((a, b));
            }
        }
    }
    Graph::new(n, &edges).expect("generated edges are valid")
}

fn random_problem(n: usize, rng: &mut ChaCha8Rng) -> anyhow::Result<ApportionProblem> {
    let bounds: Vec<Bounds> = (0..n)
        .map(|_| {
            let min = rng.random_range(0.0..500.0);
            Bounds::new(min, min + rng.random_range(10.0..2000.0))
        })
        .collect();
    let lo: f64 = bounds.iter().map(|b| b.min).sum();
    let hi: f64 = bounds.iter().map(|b| b.max).sum();
    let demand = lo + rng.random_range(0.0..=1.0) * (hi - lo);
    let p = rng.random_range(1..=n);
    let mut ids: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        ids.swap(i, rng.random_range(0..=i));
    }
    Ok(ApportionProblem::new(demand, bounds, ids[..p].iter().map(|&i| NodeId(i)))?)
}

pub const SWEEP_SEED: u64 = 0x5eed;
pub const SWEEP_INSTANCES: usize = 200;

fn oracle_sweep() -> anyhow::Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(SWEEP_SEED);
    let rho = 0.02;
    let start = Instant::now();
    let mut node_violations = 0;
    let mut sum_violations = 0;
    let mut worst_node: f64 = 0.0;
    let mut worst_cons: f64 = 0.0;
    let mut max_theta = 0;
    let mut runs = 0;
    for _ in 0..SWEEP_INSTANCES {
        let n = rng.random_range(2..=8);
        let tau_bar = rng.random_range(0..=3);
        let g = random_connected(n, 0.3, &mut rng);
        let problem = random_problem(n, &mut rng)?;
        let w = build_weights(&g)?;
        let schedule = CheckpointSchedule::new(g.diameter()?.max(1) as u32, tau_bar)?;
        let seed = rng.random();
        let oracle = closed_form(&problem);
        for d in [
            DelayModel::fixed(tau_bar, FixedDelays::random(&g, tau_bar, seed)),
            DelayModel::stochastic(tau_bar, seed),
        ] {
            let out = netsim::run_cycle(&g, &w, &problem, &d, schedule, rho, RunOptions::default())?;
            runs += 1;
            max_theta = max_theta.max(out.theta);
            worst_cons = worst_cons.max(out.trace.max_conservation_error());
            for (i, b) in problem.units().iter().enumerate() {
                let span = b.map_or(0.0, |b| b.span());
                let err = (out.commands.watts[i] - oracle.watts[i]).abs();
                worst_node = worst_node.max(err / span);
                if err > rho * span {
                    node_violations += 1;
                }
            }
            if (out.commands.total() - problem.demand()).abs() > rho * problem.span_total() {
                sum_violations += 1;
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();

    // max consensus on random graphs up to ten nodes
    let mut exact = 0;
    let mut cases = 0;
    for _ in 0..SWEEP_INSTANCES {
        let n = rng.random_range(1..=10);
        let tau_bar = rng.random_range(0..=3);
        let g = random_connected(n, 0.25, &mut rng);
        cases += 1;
        if max_consensus_is_exact(&g, tau_bar, &mut rng)? {
            exact += 1;
        }
    }

    Ok(vec![
        check(
            4,
            exact == cases,
            format!("z equals the global max (and y the min) exactly after D(1 + tau_bar) + tau_bar steps in {exact}/{cases} random graphs"),
        ),
        check(
            5,
            node_violations == 0 && sum_violations == 0 && elapsed < 30.0,
            format!(
                "{SWEEP_INSTANCES} problems x 2 delay models: {node_violations} node and {sum_violations} total \
                 violations of the rho budget, worst node error {worst_node:.2e} x span; {elapsed:.3} s"
            ),
        ),
        check(6, worst_cons <= 1e-9, format!("oracle sweep: max relative mass error {worst_cons:.2e}")),
        check(
            7,
            max_theta <= 100,
            format!("{runs} sweep cycles froze simultaneously, max theta {max_theta}"),
        ),
    ])
}

fn max_consensus_is_exact(g: &Graph, tau_bar: u32, rng: &mut ChaCha8Rng) -> anyhow::Result<bool> {
    let n = g.node_count();
    let w = build_weights(g)?;
    let schedule = CheckpointSchedule::new(g.diameter()?.max(1) as u32, tau_bar)?;
    let zs: Vec<f64> = (0..n).map(|_| rng.random_range(-1e3..1e3)).collect();
    let ys: Vec<f64> = (0..n).map(|_| rng.random_range(-1e3..1e3)).collect();
    let agents = g
        .nodes()
        .map(|i| NodeAgent::with_extremes(LocalWeights::from_matrix(&w, g, i), ConsensusState::new(1.0, 1.0), zs[i.0], ys[i.0]))
        .collect();
    let delays = DelayModel::fixed(tau_bar, FixedDelays::random(g, tau_bar, rng.random()));
    let mut sim = Simulator::from_agents(g, agents, &delays, schedule, 0.0)?;
    let mut events = Vec::new();
    while events.is_empty() {
        events = sim.step()?;
    }
    let max = zs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = ys.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(sim.step_index() == schedule.checkpoint_len() && events.iter().all(|e| e.z == max && e.y == min))
}
