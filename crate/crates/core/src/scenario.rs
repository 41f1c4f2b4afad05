//! Inverter fleet over a day: PV capacity profiles, renewable priority,
//! the aggregator's demand schedule, and the dispatch loop that reruns the
//! termination protocol at every dispatch instant.
//!
//! A renewable unit is pinned to `[P(t) - eps, P(t)]` so the consensus has to
//! absorb all of its available power; dispatchable units keep static bounds
//! and share the remainder in proportion to their capacity spans. A
//! renewable unit with no output sits out of the apportioning for that cycle
//! but keeps relaying messages, so the network diameter does not change.

use alloc::vec;
use alloc::vec::Vec;

use crate::apportion::{ApportionProblem, Bounds};
use crate::error::{Error, Result};
use crate::netsim::{self, CycleOutcome, DelayModel, RunOptions};
use crate::termination::CheckpointSchedule;
use crate::topology::{build_weights, Graph, NodeId};

/// Piecewise-linear power profile over time in hours.
#[derive(Debug, Clone, PartialEq)]
pub struct PvProfile {
    breakpoints: Vec<(f64, f64)>,
}

impl PvProfile {
    /// `breakpoints` are `(hours, watts)` with strictly increasing times and
    /// non-negative power.
    pub fn new(breakpoints: Vec<(f64, f64)>) -> Result<Self> {
        let increasing = breakpoints.windows(2).all(|w| w[0].0 < w[1].0);
        let valid = breakpoints
            .iter()
            .all(|&(t, p)| t.is_finite() && p.is_finite() && p >= 0.0);
        if breakpoints.len() < 2 || !increasing || !valid {
            return Err(Error::InvalidProfile);
        }
        Ok(Self { breakpoints })
    }

    /// Sunny-day shape: ramp 0 -> 1 kW over 3 h, hold until 5 h, ramp back
    /// to 0 at 8 h.
    pub fn sunny_day() -> Self {
        Self {
            breakpoints: vec![(0.0, 0.0), (3.0, 1000.0), (5.0, 1000.0), (8.0, 0.0)],
        }
    }

    pub fn breakpoints(&self) -> &[(f64, f64)] {
        &self.breakpoints
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.breakpoints[0].0, self.breakpoints[self.breakpoints.len() - 1].0)
    }

    pub fn power_at(&self, hours: f64) -> Result<f64> {
        let (start, end) = self.domain();
        if !(start..=end).contains(&hours) {
            return Err(Error::OutsideProfile(hours));
        }
        let idx = self
            .breakpoints
            .windows(2)
            .position(|w| hours <= w[1].0)
            .unwrap_or(self.breakpoints.len() - 2);
        let (t0, p0) = self.breakpoints[idx];
        let (t1, p1) = self.breakpoints[idx + 1];
        Ok(p0 + (p1 - p0) * (hours - t0) / (t1 - t0))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum UnitKind {
    /// Renewable unit following a maximum-power-point profile.
    Renewable(PvProfile),
    Dispatchable(Bounds),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tracking {
    Instant,
    /// First-order lag with the given time constant in seconds.
    FirstOrder { time_constant_s: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LisUnit {
    pub id: NodeId,
    pub kind: UnitKind,
    pub tracking: Tracking,
}

impl LisUnit {
    pub fn dispatchable(id: NodeId, min: f64, max: f64) -> Self {
        Self {
            id,
            kind: UnitKind::Dispatchable(Bounds::new(min, max)),
            tracking: Tracking::Instant,
        }
    }

    pub fn renewable(id: NodeId, profile: PvProfile) -> Self {
        Self {
            id,
            kind: UnitKind::Renewable(profile),
            tracking: Tracking::Instant,
        }
    }

    pub fn is_renewable(&self) -> bool {
        matches!(self.kind, UnitKind::Renewable(_))
    }
}

/// Capacity interval of `unit` at `hours`. `None` means the unit has no
/// capacity right now and sits the cycle out.
pub fn bounds_at(unit: &LisUnit, hours: f64, epsilon: f64) -> Result<Option<Bounds>> {
    match &unit.kind {
        UnitKind::Dispatchable(b) => {
            if !(0.0 <= b.min && b.min < b.max) {
                return Err(Error::InvalidBounds {
                    node: unit.id,
                    min: b.min,
                    max: b.max,
                });
            }
            Ok(Some(*b))
        }
        UnitKind::Renewable(profile) => {
            let p = profile.power_at(hours)?;
            if p <= 0.0 {
                return Ok(None);
            }
            Ok(Some(Bounds::new((p - epsilon).max(0.0), p)))
        }
    }
}

/// Power delivered after `dt_s` seconds of following `command` from
/// `previous`. The command must lie within `bounds`.
pub fn track(unit: &LisUnit, bounds: Bounds, previous: f64, command: f64, dt_s: f64) -> Result<f64> {
    if !bounds.contains(command) {
        return Err(Error::CommandOutOfBounds {
            node: unit.id,
            command,
            min: bounds.min,
            max: bounds.max,
        });
    }
    Ok(follow(unit, previous, command, dt_s))
}

fn follow(unit: &LisUnit, previous: f64, command: f64, dt_s: f64) -> f64 {
    match unit.tracking {
        Tracking::Instant => command,
        Tracking::FirstOrder { time_constant_s } => {
            previous + (command - previous) * (1.0 - libm::exp(-dt_s / time_constant_s))
        }
    }
}

/// Piecewise-constant demand: each `(hours, watts)` entry holds until the
/// next one.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandProfile {
    steps: Vec<(f64, f64)>,
}

impl DemandProfile {
    pub fn constant(watts: f64) -> Self {
        Self {
            steps: vec![(f64::NEG_INFINITY, watts)],
        }
    }

    pub fn steps(steps: Vec<(f64, f64)>) -> Result<Self> {
        if steps.is_empty() || !steps.windows(2).all(|w| w[0].0 < w[1].0) {
            return Err(Error::Config("demand steps must be non-empty with increasing times"));
        }
        Ok(Self { steps })
    }

    pub fn entries(&self) -> &[(f64, f64)] {
        &self.steps
    }

    pub fn at(&self, hours: f64) -> f64 {
        self.steps
            .iter()
            .take_while(|&&(t, _)| t <= hours)
            .last()
            .unwrap_or(&self.steps[0])
            .1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DispatchSchedule {
    pub demand: DemandProfile,
    /// Wall-clock length of one consensus iteration.
    pub consensus_period_s: f64,
    pub dispatch_period_s: f64,
    /// Width of the renewable capacity interval.
    pub epsilon: f64,
    pub start_h: f64,
    pub end_h: f64,
}

impl DispatchSchedule {
    pub fn new(demand: DemandProfile, start_h: f64, end_h: f64) -> Self {
        Self {
            demand,
            consensus_period_s: 1.0,
            dispatch_period_s: 60.0,
            epsilon: 1.0,
            start_h,
            end_h,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::Config("epsilon must be positive"));
        }
        if !(self.consensus_period_s > 0.0 && self.dispatch_period_s >= self.consensus_period_s) {
            return Err(Error::Config("dispatch period must cover at least one consensus period"));
        }
        if !(self.start_h <= self.end_h) {
            return Err(Error::Config("schedule ends before it starts"));
        }
        Ok(())
    }

    /// Dispatch instants in hours, from `start_h` through `end_h` inclusive.
    pub fn instants(&self) -> Vec<f64> {
        let step_h = self.dispatch_period_s / 3600.0;
        let count = libm::floor((self.end_h - self.start_h) / step_h + 1e-9) as usize;
        (0..=count).map(|m| self.start_h + m as f64 * step_h).collect()
    }

    /// Iterations that fit in one dispatch period.
    pub fn iteration_budget(&self) -> u64 {
        libm::floor(self.dispatch_period_s / self.consensus_period_s + 1e-9) as u64
    }
}

/// Units indexed like the graph nodes, plus the demand-circulation nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Fleet {
    pub units: Vec<LisUnit>,
    pub demand_nodes: Vec<NodeId>,
}

impl Fleet {
    pub fn validate(&self, graph: &Graph) -> Result<()> {
        if self.units.len() != graph.node_count() {
            return Err(Error::Config("fleet needs exactly one unit per graph node"));
        }
        if let Some((i, _)) = self.units.iter().enumerate().find(|(i, u)| u.id != NodeId(*i)) {
            return Err(Error::UnknownNode(NodeId(i)));
        }
        if self.demand_nodes.is_empty() {
            return Err(Error::EmptyDemandSet);
        }
        if let Some(&bad) = self.demand_nodes.iter().find(|n| !graph.contains(**n)) {
            return Err(Error::UnknownNode(bad));
        }
        Ok(())
    }

    pub fn bounds_at(&self, hours: f64, epsilon: f64) -> Result<Vec<Option<Bounds>>> {
        self.units.iter().map(|u| bounds_at(u, hours, epsilon)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DayOptions {
    pub rho: f64,
    /// Diameter bound handed to every node. Defaults to the true diameter;
    /// a smaller value is raised to it.
    pub diameter: Option<u32>,
    pub seed: u64,
    pub run: RunOptions,
}

impl Default for DayOptions {
    fn default() -> Self {
        Self {
            rho: 0.02,
            diameter: None,
            seed: 0,
            run: RunOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DispatchStatus {
    Dispatched(CycleOutcome),
    /// Demand outside the capacity range; previous commands are held.
    Infeasible { min_total: f64, max_total: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DispatchRecord {
    pub cycle: usize,
    pub hours: f64,
    pub demand: f64,
    pub bounds: Vec<Option<Bounds>>,
    /// Nodes with capacity this cycle; the rest only relay.
    pub participants: Vec<NodeId>,
    pub demand_nodes: Vec<NodeId>,
    pub diameter: u32,
    /// Command per fleet unit; zero for units that sat out.
    pub commands: Vec<f64>,
    pub delivered: Vec<f64>,
    pub status: DispatchStatus,
    /// The cycle needed more iterations than fit into one dispatch period.
    /// Commands are still applied.
    pub overrun: bool,
}

impl DispatchRecord {
    pub fn total_delivered(&self) -> f64 {
        self.delivered.iter().sum()
    }

    pub fn total_command(&self) -> f64 {
        self.commands.iter().sum()
    }

    pub fn outcome(&self) -> Option<&CycleOutcome> {
        match &self.status {
            DispatchStatus::Dispatched(out) => Some(out),
            DispatchStatus::Infeasible { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DayTrace {
    pub dispatches: Vec<DispatchRecord>,
}

/// Seed for cycle `cycle` derived from the run seed (splitmix64 finalizer).
pub fn cycle_seed(seed: u64, cycle: usize) -> u64 {
    let mut z = seed.wrapping_add((cycle as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs one termination cycle per dispatch instant and applies the
/// resulting commands to the units. Every cycle starts from fresh initial
/// states.
pub fn run_day(
    fleet: &Fleet,
    graph: &Graph,
    schedule: &DispatchSchedule,
    delays: &DelayModel,
    options: DayOptions,
) -> Result<DayTrace> {
    fleet.validate(graph)?;
    schedule.validate()?;
    let n = graph.node_count();
    let diameter = (graph.diameter()? as u32).max(options.diameter.unwrap_or(0)).max(1);
    let check = CheckpointSchedule::new(diameter, delays.tau_bar)?;
    let weights = build_weights(graph)?;
    let budget = schedule.iteration_budget();
    let dt = schedule.dispatch_period_s;
    let mut commands = vec![0.0; n];
    let mut delivered = vec![0.0; n];
    let mut trace = DayTrace::default();

    for (cycle, hours) in schedule.instants().into_iter().enumerate() {
        let demand = schedule.demand.at(hours);
        let bounds = fleet.bounds_at(hours, schedule.epsilon)?;
        let participants: Vec<NodeId> = graph.nodes().filter(|i| bounds[i.0].is_some()).collect();
        let mut demand_nodes: Vec<NodeId> = fleet
            .demand_nodes
            .iter()
            .copied()
            .filter(|i| bounds[i.0].is_some())
            .collect();
        if demand_nodes.is_empty() {
            demand_nodes.extend(participants.first().copied());
        }
        let mut record = DispatchRecord {
            cycle,
            hours,
            demand,
            bounds: bounds.clone(),
            participants,
            demand_nodes: demand_nodes.clone(),
            diameter,
            commands: Vec::new(),
            delivered: Vec::new(),
            status: DispatchStatus::Infeasible {
                min_total: 0.0,
                max_total: 0.0,
            },
            overrun: false,
        };

        match ApportionProblem::with_relays(demand, bounds.clone(), demand_nodes) {
            Ok(problem) => {
                let cycle_delays = delays.reseeded(cycle_seed(options.seed, cycle));
                let outcome =
                    netsim::run_cycle(graph, &weights, &problem, &cycle_delays, check, options.rho, options.run)?;
                commands.copy_from_slice(&outcome.commands.watts);
                for (i, unit) in fleet.units.iter().enumerate() {
                    let b = bounds[i].unwrap_or(Bounds::new(0.0, 0.0));
                    delivered[i] = track(unit, b, delivered[i], commands[i], dt)?;
                }
                record.overrun = outcome.steps > budget;
                record.status = DispatchStatus::Dispatched(outcome);
            }
            // Nothing to apportion (no capacity at all) or demand out of
            // range: hold the previous commands.
            Err(Error::Infeasible {
                min_total,
                max_total,
                ..
            }) => {
                for (i, unit) in fleet.units.iter().enumerate() {
                    delivered[i] = follow(unit, delivered[i], commands[i], dt);
                }
                record.status = DispatchStatus::Infeasible { min_total, max_total };
            }
            Err(Error::EmptyGraph | Error::EmptyDemandSet) => {
                for (i, unit) in fleet.units.iter().enumerate() {
                    delivered[i] = follow(unit, delivered[i], commands[i], dt);
                }
                record.status = DispatchStatus::Infeasible {
                    min_total: 0.0,
                    max_total: 0.0,
                };
            }
            Err(e) => return Err(e),
        }
        record.commands = commands.clone();
        record.delivered = delivered.clone();
        trace.dispatches.push(record);
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sunny_day_profile() {
        let p = PvProfile::sunny_day();
        assert_eq!(p.power_at(0.0).unwrap(), 0.0);
        assert_eq!(p.power_at(1.5).unwrap(), 500.0);
        assert_eq!(p.power_at(3.0).unwrap(), 1000.0);
        assert_eq!(p.power_at(4.0).unwrap(), 1000.0);
        assert_eq!(p.power_at(6.5).unwrap(), 500.0);
        assert_eq!(p.power_at(8.0).unwrap(), 0.0);
        assert_eq!(p.power_at(8.5), Err(Error::OutsideProfile(8.5)));
        assert_eq!(p.power_at(-0.1), Err(Error::OutsideProfile(-0.1)));
    }

    #[test]
    fn profile_validation() {
        assert!(PvProfile::new(vec![(0.0, 1.0)]).is_err());
        assert!(PvProfile::new(vec![(1.0, 1.0), (1.0, 2.0)]).is_err());
        assert!(PvProfile::new(vec![(0.0, -1.0), (1.0, 2.0)]).is_err());
    }

    #[test]
    fn renewable_bounds() {
        let pv = LisUnit::renewable(NodeId(1), PvProfile::sunny_day());
        assert_eq!(bounds_at(&pv, 4.0, 1.0).unwrap(), Some(Bounds::new(999.0, 1000.0)));
        assert_eq!(bounds_at(&pv, 1.5, 1.0).unwrap(), Some(Bounds::new(499.0, 500.0)));
        assert_eq!(bounds_at(&pv, 0.0, 1.0).unwrap(), None);
        let tiny = bounds_at(&pv, 0.001, 1.0).unwrap().unwrap();
        assert_eq!(tiny.min, 0.0);
        assert!(tiny.max > 0.0);
        assert!(bounds_at(&pv, 9.0, 1.0).is_err());
    }

    #[test]
    fn dispatchable_bounds_are_static() {
        let u = LisUnit::dispatchable(NodeId(5), 0.0, 2000.0);
        for t in [0.0, 3.3, 8.0, 100.0] {
            assert_eq!(bounds_at(&u, t, 1.0).unwrap(), Some(Bounds::new(0.0, 2000.0)));
        }
    }

    #[test]
    fn tracking_modes() {
        let mut u = LisUnit::dispatchable(NodeId(0), 0.0, 2000.0);
        let b = Bounds::new(0.0, 2000.0);
        assert_eq!(track(&u, b, 0.0, 1200.0, 60.0).unwrap(), 1200.0);
        assert_eq!(track(&u, b, 500.0, 0.0, 60.0).unwrap(), 0.0);
        u.tracking = Tracking::FirstOrder { time_constant_s: 10.0 };
        let y = track(&u, Bounds::new(0.0, 1000.0), 0.0, 1000.0, 10.0).unwrap();
        assert!((y - 632.120_558_828_557_7).abs() < 1e-9);
        assert!(matches!(
            track(&u, b, 0.0, 2500.0, 1.0),
            Err(Error::CommandOutOfBounds { .. })
        ));
    }

    #[test]
    fn demand_profile_steps() {
        let d = DemandProfile::steps(vec![(0.0, 7000.0), (4.0, 6000.0)]).unwrap();
        assert_eq!(d.at(0.0), 7000.0);
        assert_eq!(d.at(3.99), 7000.0);
        assert_eq!(d.at(4.0), 6000.0);
        assert_eq!(DemandProfile::constant(5.0).at(123.0), 5.0);
        assert!(DemandProfile::steps(vec![]).is_err());
    }

    #[test]
    fn instants_cover_the_day() {
        let s = DispatchSchedule::new(DemandProfile::constant(1.0), 0.0, 8.0);
        let t = s.instants();
        assert_eq!(t.len(), 481);
        assert_eq!(t[0], 0.0);
        assert!((t[480] - 8.0).abs() < 1e-12);
        assert_eq!(s.iteration_budget(), 60);
    }

    #[test]
    fn cycle_seeds_differ() {
        assert_ne!(cycle_seed(7, 0), cycle_seed(7, 1));
        assert_ne!(cycle_seed(7, 0), cycle_seed(8, 0));
        assert_eq!(cycle_seed(7, 3), cycle_seed(7, 3));
    }
}
