//! Deterministic lockstep simulator for delayed message passing.
//!
//! Time is the integer iteration index. In iteration `k` every active node
//! emits its state `k`, then absorbs the envelopes whose delivery step is
//! `k` and runs its epoch and checkpoint logic on the new state `k + 1`. An
//! envelope sent with state `k` over a link with delay `d` is due in
//! iteration `k + d`, so the receiver sees `x_j(k - d)` exactly as in the
//! delayed update rule. Between iterations every unit of mass is either in
//! a node state or in exactly one envelope in flight. Delays are either fixed per directed link or drawn
//! i.i.d. per message from `{0, ..., bound}` with a seeded ChaCha8 stream.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::apportion::{self, ApportionProblem, ReferenceCommand};
use crate::consensus::{self, ConsensusState, Envelope, Extremes, LocalWeights};
use crate::error::{Error, ProtocolError, Result};
use crate::termination::{CheckpointEvent, CheckpointSchedule, NodeAgent};
use crate::topology::{Graph, NodeId, WeightMatrix};

/// Fixed delay per directed link `(src, dst)`. Links without an entry have
/// zero delay.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FixedDelays {
    delays: BTreeMap<(NodeId, NodeId), u32>,
}

impl FixedDelays {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, src: NodeId, dst: NodeId, delay: u32) {
        self.delays.insert((src, dst), delay);
    }

    pub fn get(&self, src: NodeId, dst: NodeId) -> u32 {
        self.delays.get(&(src, dst)).copied().unwrap_or(0)
    }

    /// The same delay on every directed link of `graph`.
    pub fn uniform(graph: &Graph, delay: u32) -> Self {
        let mut out = Self::new();
        for (a, b) in graph.edges() {
            out.set(a, b, delay);
            out.set(b, a, delay);
        }
        out
    }

    /// Every link at its worst case: the explicit link bound, else `tau_bar`.
    pub fn worst_case(graph: &Graph, tau_bar: u32) -> Self {
        let mut out = Self::new();
        for (a, b) in graph.edges() {
            let d = graph.effective_delay_bound(a, b, tau_bar);
            out.set(a, b, d);
            out.set(b, a, d);
        }
        out
    }

    /// Independent uniform draw per directed link, fixed thereafter.
    pub fn random(graph: &Graph, tau_bar: u32, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Self::new();
        for (a, b) in graph.edges() {
            let bound = graph.effective_delay_bound(a, b, tau_bar);
            out.set(a, b, rng.random_range(0..=bound));
            out.set(b, a, rng.random_range(0..=bound));
        }
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = ((NodeId, NodeId), u32)> + '_ {
        self.delays.iter().map(|(&k, &v)| (k, v))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DelayKind {
    Fixed(FixedDelays),
    Stochastic { seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DelayModel {
    pub tau_bar: u32,
    pub kind: DelayKind,
}

impl DelayModel {
    pub fn fixed(tau_bar: u32, delays: FixedDelays) -> Self {
        Self {
            tau_bar,
            kind: DelayKind::Fixed(delays),
        }
    }

    pub fn stochastic(tau_bar: u32, seed: u64) -> Self {
        Self {
            tau_bar,
            kind: DelayKind::Stochastic { seed },
        }
    }

    /// No delays at all.
    pub fn none() -> Self {
        Self::fixed(0, FixedDelays::new())
    }

    /// Same model with the stochastic seed replaced by `seed`.
    pub fn reseeded(&self, seed: u64) -> Self {
        match self.kind {
            DelayKind::Stochastic { .. } => Self::stochastic(self.tau_bar, seed),
            DelayKind::Fixed(_) => self.clone(),
        }
    }

    fn sampler(&self, graph: &Graph) -> Result<DelaySampler> {
        graph.check_delay_bounds(self.tau_bar)?;
        let mut bounds = BTreeMap::new();
        for (a, b) in graph.edges() {
            let d = graph.effective_delay_bound(a, b, self.tau_bar);
            bounds.insert((a, b), d);
            bounds.insert((b, a), d);
        }
        match &self.kind {
            DelayKind::Fixed(fixed) => {
                for ((src, dst), delay) in fixed.iter() {
                    let bound = *bounds.get(&(src, dst)).ok_or(Error::UnknownEdge(src, dst))?;
                    if delay > bound {
                        return Err(Error::DelayBound {
                            from: src,
                            to: dst,
                            delay,
                            bound,
                        });
                    }
                }
                Ok(DelaySampler::Fixed(fixed.clone()))
            }
            DelayKind::Stochastic { seed } => Ok(DelaySampler::Stochastic {
                bounds,
                rng: ChaCha8Rng::seed_from_u64(*seed),
            }),
        }
    }
}

#[derive(Debug, Clone)]
enum DelaySampler {
    Fixed(FixedDelays),
    Stochastic {
        bounds: BTreeMap<(NodeId, NodeId), u32>,
        rng: ChaCha8Rng,
    },
}

impl DelaySampler {
    fn delay(&mut self, src: NodeId, dst: NodeId) -> u32 {
        match self {
            DelaySampler::Fixed(f) => f.get(src, dst),
            DelaySampler::Stochastic { bounds, rng } => {
                let bound = bounds.get(&(src, dst)).copied().unwrap_or(0);
                rng.random_range(0..=bound)
            }
        }
    }
}

/// Envelopes in flight, keyed by the iteration that absorbs them. Envelopes
/// due in the same iteration come out in the order they were sent.
#[derive(Debug, Clone, Default)]
pub struct Mailbox {
    pending: BTreeMap<u64, Vec<Envelope>>,
    tau_bar: u32,
}

impl Mailbox {
    pub fn new(tau_bar: u32) -> Self {
        Self {
            pending: BTreeMap::new(),
            tau_bar,
        }
    }

    pub fn push(&mut self, env: Envelope, deliver_step: u64) -> Result<()> {
        if deliver_step < env.send_step || deliver_step - env.send_step > u64::from(self.tau_bar) {
            return Err(ProtocolError::LateDelivery {
                src: env.src,
                sent: env.send_step,
                due: deliver_step,
            }
            .into());
        }
        self.pending.entry(deliver_step).or_default().push(env);
        Ok(())
    }

    pub fn take_due(&mut self, step: u64) -> Vec<Envelope> {
        self.pending.remove(&step).unwrap_or_default()
    }

    pub fn len(&self) -> usize {
        self.pending.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.values().all(Vec::is_empty)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Envelope> + '_ {
        self.pending.values().flatten()
    }

    /// Latest delivery step of anything in flight.
    pub fn horizon(&self) -> Option<u64> {
        self.pending.keys().next_back().copied()
    }
}

/// Conservation and disagreement snapshot after a step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditReport {
    pub step: u64,
    pub node_mass_r: f64,
    pub inflight_mass_r: f64,
    pub node_mass_s: f64,
    pub inflight_mass_s: f64,
    /// `M(k) - m(k)` over every node's last `tau_bar + 1` states.
    pub max_gap: Option<f64>,
}

impl AuditReport {
    pub fn total_r(&self) -> f64 {
        self.node_mass_r + self.inflight_mass_r
    }

    pub fn total_s(&self) -> f64 {
        self.node_mass_s + self.inflight_mass_s
    }

    /// Largest relative deviation of the total masses from `initial`.
    pub fn conservation_error(&self, initial: &AuditReport) -> f64 {
        let rel = |now: f64, then: f64| {
            let scale = then.abs().max(f64::MIN_POSITIVE);
            (now - then).abs() / scale
        };
        rel(self.total_r(), initial.total_r()).max(rel(self.total_s(), initial.total_s()))
    }
}

/// State of one node after a step, for verbose traces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeSnapshot {
    pub step: u64,
    pub node: NodeId,
    pub r: f64,
    pub s: f64,
    pub z: f64,
    pub y: f64,
    pub theta: u64,
    pub frozen: bool,
}

/// Lockstep network of [`NodeAgent`]s.
#[derive(Debug, Clone)]
pub struct Simulator {
    agents: Vec<NodeAgent>,
    mailbox: Mailbox,
    parked: Vec<Envelope>,
    sampler: DelaySampler,
    schedule: CheckpointSchedule,
    rho: f64,
    step: u64,
    history: Vec<VecDeque<(f64, f64)>>,
    sent: u64,
    delivered: u64,
}

impl Simulator {
    pub fn new(
        graph: &Graph,
        weights: &WeightMatrix,
        initial: &[ConsensusState],
        delays: &DelayModel,
        schedule: CheckpointSchedule,
        rho: f64,
    ) -> Result<Self> {
        if initial.len() != graph.node_count() || weights.size() != graph.node_count() {
            return Err(Error::Config("state, weight and graph sizes differ"));
        }
        let agents = graph
            .nodes()
            .map(|i| NodeAgent::new(LocalWeights::from_matrix(weights, graph, i), initial[i.0]))
            .collect::<Result<Vec<_>>>()?;
        Self::from_agents(graph, agents, delays, schedule, rho)
    }

    /// Simulator over prepared agents; agent `i` must be node `i` of `graph`.
    pub fn from_agents(
        graph: &Graph,
        agents: Vec<NodeAgent>,
        delays: &DelayModel,
        schedule: CheckpointSchedule,
        rho: f64,
    ) -> Result<Self> {
        if agents.len() != graph.node_count() {
            return Err(Error::Config("one agent per node required"));
        }
        let sampler = delays.sampler(graph)?;
        let mailbox = Mailbox::new(delays.tau_bar);
        let depth = delays.tau_bar as usize + 1;
        let history = agents
            .iter()
            .map(|a| {
                let mut h = VecDeque::with_capacity(depth);
                h.push_back((a.state().r, a.state().s));
                h
            })
            .collect();
        Ok(Self {
            agents,
            mailbox,
            parked: Vec::new(),
            sampler,
            schedule,
            rho,
            step: 0,
            history,
            sent: 0,
            delivered: 0,
        })
    }

    pub fn step_index(&self) -> u64 {
        self.step
    }

    pub fn agents(&self) -> &[NodeAgent] {
        &self.agents
    }

    pub fn mailbox(&self) -> &Mailbox {
        &self.mailbox
    }

    pub fn schedule(&self) -> &CheckpointSchedule {
        &self.schedule
    }

    pub fn all_frozen(&self) -> bool {
        self.agents.iter().all(NodeAgent::is_frozen)
    }

    /// `(sent, delivered)` envelope counts. Envelopes addressed to frozen
    /// nodes stay parked and count as neither delivered nor in the mailbox.
    pub fn envelope_counts(&self) -> (u64, u64) {
        (self.sent, self.delivered)
    }

    pub fn parked(&self) -> &[Envelope] {
        &self.parked
    }

    /// Runs iteration `k` for every active node: emit state `k`, deliver
    /// what is due, absorb. Returns the checkpoint events raised on the new
    /// state `k + 1`.
    pub fn step(&mut self) -> Result<Vec<CheckpointEvent>> {
        let k = self.step;
        for agent in &self.agents {
            for env in agent.emit() {
                let d = self.sampler.delay(env.src, env.dst);
                self.mailbox.push(env, k + u64::from(d))?;
                self.sent += 1;
            }
        }
        let mut inboxes: Vec<Vec<Envelope>> = vec![Vec::new(); self.agents.len()];
        for env in self.mailbox.take_due(k) {
            if self.agents[env.dst.0].is_frozen() {
                self.parked.push(env);
            } else {
                inboxes[env.dst.0].push(env);
                self.delivered += 1;
            }
        }
        let mut events = Vec::new();
        for (agent, inbox) in self.agents.iter_mut().zip(&inboxes) {
            if agent.is_frozen() {
                continue;
            }
            if let Some(event) = agent.step(inbox, &self.schedule, self.rho)?.checkpoint {
                events.push(event);
            }
        }
        let depth = self.schedule.tau_bar() as usize + 1;
        for (h, agent) in self.history.iter_mut().zip(&self.agents) {
            if h.len() == depth {
                h.pop_front();
            }
            h.push_back((agent.state().r, agent.state().s));
        }
        self.step = k + 1;
        Ok(events)
    }

    /// Global max/min of the ratio over the last `tau_bar + 1` states.
    pub fn extremes(&self) -> Option<Extremes> {
        consensus::global_extremes(self.history.iter().flatten().copied())
    }

    pub fn audit(&self) -> AuditReport {
        let inflight = self.mailbox.iter().chain(&self.parked);
        let (inflight_r, inflight_s) = inflight.fold((0.0, 0.0), |(r, s), e| (r + e.payload_r, s + e.payload_s));
        AuditReport {
            step: self.step,
            node_mass_r: self.agents.iter().map(|a| a.state().r).sum(),
            inflight_mass_r: inflight_r,
            node_mass_s: self.agents.iter().map(|a| a.state().s).sum(),
            inflight_mass_s: inflight_s,
            max_gap: self.extremes().map(|e| e.gap()),
        }
    }

    pub fn snapshots(&self) -> impl Iterator<Item = NodeSnapshot> + '_ {
        self.agents.iter().map(move |a| {
            let t = a.termination();
            NodeSnapshot {
                step: self.step,
                node: a.id(),
                r: a.state().r,
                s: a.state().s,
                z: t.z,
                y: t.y,
                theta: t.theta,
                frozen: t.frozen,
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunOptions {
    /// Step ceiling; `None` means `1000 * checkpoint_len`.
    pub max_steps: Option<u64>,
    /// Keep a [`NodeSnapshot`] per node per step.
    pub record_states: bool,
    /// Carry the analysis state `t` alongside `r` and `s`.
    pub track_t: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CycleTrace {
    pub checkpoints: Vec<CheckpointEvent>,
    /// One report per step, starting with the initial state at step 0.
    pub audits: Vec<AuditReport>,
    pub states: Vec<NodeSnapshot>,
}

impl CycleTrace {
    /// Worst relative conservation error over all recorded steps.
    pub fn max_conservation_error(&self) -> f64 {
        match self.audits.first() {
            None => 0.0,
            Some(first) => self
                .audits
                .iter()
                .map(|a| a.conservation_error(first))
                .fold(0.0, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleOutcome {
    pub commands: ReferenceCommand,
    /// Frozen ratios `r* / s*`, before clamping.
    pub ratios: Vec<f64>,
    /// Checkpoint index at which every node froze.
    pub theta: u64,
    /// Iterations until the last node froze.
    pub steps: u64,
    /// `r_i / t_i` at freeze when `t` is tracked.
    pub r_over_t: Option<Vec<f64>>,
    pub trace: CycleTrace,
}

/// One full termination cycle: initialize from `problem`, iterate until all
/// nodes freeze, and turn the frozen states into reference commands.
///
/// Fails with [`ProtocolError::SplitTermination`] if a checkpoint freezes
/// some nodes but not others, and with [`Error::NonTermination`] at the step
/// ceiling.
pub fn run_cycle(
    graph: &Graph,
    weights: &WeightMatrix,
    problem: &ApportionProblem,
    delays: &DelayModel,
    schedule: CheckpointSchedule,
    rho: f64,
    options: RunOptions,
) -> Result<CycleOutcome> {
    if problem.node_count() != graph.node_count() {
        return Err(Error::Config("problem and graph sizes differ"));
    }
    let initial = apportion::init_states(problem, options.track_t);
    let mut sim = Simulator::new(graph, weights, &initial, delays, schedule, rho)?;
    let max_steps = options
        .max_steps
        .unwrap_or(1000 * schedule.checkpoint_len());

    let mut trace = CycleTrace::default();
    trace.audits.push(sim.audit());
    if options.record_states {
        trace.states.extend(sim.snapshots());
    }
    let mut theta = 0;
    while !sim.all_frozen() {
        if sim.step_index() >= max_steps {
            return Err(Error::NonTermination(max_steps));
        }
        let events = sim.step()?;
        trace.audits.push(sim.audit());
        if options.record_states {
            trace.states.extend(sim.snapshots());
        }
        if !events.is_empty() {
            let frozen = events.iter().filter(|e| e.frozen).count();
            if events.len() != graph.node_count() || (frozen != 0 && frozen != events.len()) {
                return Err(ProtocolError::SplitTermination.into());
            }
            theta = events[0].theta;
            trace.checkpoints.extend(events);
        }
    }

    let mut watts = Vec::with_capacity(graph.node_count());
    let mut ratios = Vec::with_capacity(graph.node_count());
    for agent in sim.agents() {
        let t = agent.termination();
        watts.push(apportion::reference_command(problem, agent.id(), t.r_star, t.s_star)?);
        ratios.push(t.r_star / t.s_star);
    }
    let r_over_t = options.track_t.then(|| {
        sim.agents()
            .iter()
            .map(|a| a.termination().r_star / a.state().t.unwrap_or(f64::NAN))
            .collect()
    });
    Ok(CycleOutcome {
        commands: ReferenceCommand { watts },
        ratios,
        theta,
        steps: sim.step_index(),
        r_over_t,
        trace,
    })
}

/// Plain ratio consensus for `steps` iterations with `w(0) = 1`; returns
/// each node's `x / w`. Never terminates early.
pub fn run_ratio_averaging(
    graph: &Graph,
    weights: &WeightMatrix,
    initial: &[f64],
    delays: &DelayModel,
    steps: u64,
) -> Result<Vec<f64>> {
    let states: Vec<ConsensusState> = initial.iter().map(|&x| ConsensusState::new(x, 1.0)).collect();
    let diameter = graph.diameter()?.max(1) as u32;
    let schedule = CheckpointSchedule::new(diameter, delays.tau_bar)?;
    // rho = 0 never satisfies `gap < rho`
    let mut sim = Simulator::new(graph, weights, &states, delays, schedule, 0.0)?;
    for _ in 0..steps {
        sim.step()?;
    }
    Ok(sim
        .agents()
        .iter()
        .map(|a| a.state().r / a.state().s)
        .collect())
}

/// Delay-oblivious averaging baseline: each node combines its own value with
/// the last value it received from each neighbor using row-stochastic
/// weights, as if the received values were current. Until a neighbor's
/// first message arrives the node substitutes its own value.
pub fn run_naive_averaging(
    graph: &Graph,
    weights: &WeightMatrix,
    initial: &[f64],
    delays: &DelayModel,
    steps: u64,
) -> Result<Vec<f64>> {
    let n = graph.node_count();
    if initial.len() != n || weights.size() != n {
        return Err(Error::Config("state, weight and graph sizes differ"));
    }
    if !weights.is_row_stochastic(1e-12) {
        return Err(Error::NotStochastic("row stochastic"));
    }
    let mut sampler = delays.sampler(graph)?;
    let mut x = initial.to_vec();
    // last[i][j]: (send_step, value) of the freshest value i has from j
    let mut last: Vec<BTreeMap<NodeId, (u64, f64)>> = vec![BTreeMap::new(); n];
    let mut in_flight: BTreeMap<u64, Vec<(NodeId, NodeId, u64, f64)>> = BTreeMap::new();
    for k in 0..steps {
        for i in graph.nodes() {
            for &j in graph.neighbors(i) {
                let due = k + u64::from(sampler.delay(i, j));
                in_flight.entry(due).or_default().push((i, j, k, x[i.0]));
            }
        }
        for (src, dst, sent, value) in in_flight.remove(&k).unwrap_or_default() {
            let slot = last[dst.0].entry(src).or_insert((sent, value));
            if sent >= slot.0 {
                *slot = (sent, value);
            }
        }
        let next: Vec<f64> = graph
            .nodes()
            .map(|i| {
                let mut v = weights.self_weight(i) * x[i.0];
                for &j in graph.neighbors(i) {
                    let seen = last[i.0].get(&j).map_or(x[i.0], |&(_, val)| val);
                    v += weights.get(i, j) * seen;
                }
                v
            })
            .collect();
        x = next;
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::apportion::Bounds;
    use crate::topology::build_weights;

    fn env(send_step: u64) -> Envelope {
        Envelope {
            src: NodeId(0),
            dst: NodeId(1),
            send_step,
            payload_r: 1.0,
            payload_s: 1.0,
            payload_t: None,
            payload_z: 0.0,
            payload_y: 0.0,
        }
    }

    #[test]
    fn mailbox_delivers_in_order_and_bounds_delay() {
        let mut mb = Mailbox::new(3);
        let mut a = env(2);
        a.payload_r = 1.0;
        let mut b = env(1);
        b.payload_r = 2.0;
        mb.push(a, 4).unwrap();
        mb.push(b, 4).unwrap();
        assert!(mb.push(env(0), 4).is_err());
        assert!(mb.push(env(5), 4).is_err());
        assert_eq!(mb.len(), 2);
        let due = mb.take_due(4);
        assert_eq!(due.iter().map(|e| e.payload_r).collect::<Vec<_>>(), vec![1.0, 2.0]);
        assert!(mb.is_empty());
    }

    #[test]
    fn audit_at_step_zero() {
        let g = Graph::cycle(4).unwrap();
        let w = build_weights(&g).unwrap();
        let states: Vec<_> = [1.0, 2.0, 3.0, 4.0].iter().map(|&r| ConsensusState::new(r, 1.0)).collect();
        let sched = CheckpointSchedule::new(2, 2).unwrap();
        let sim = Simulator::new(&g, &w, &states, &DelayModel::stochastic(2, 1), sched, 0.0).unwrap();
        let audit = sim.audit();
        assert_eq!(audit.step, 0);
        assert_eq!(audit.inflight_mass_r, 0.0);
        assert_eq!(audit.node_mass_r, 10.0);
        assert_eq!(audit.node_mass_s, 4.0);
        assert_eq!(audit.max_gap, Some(3.0));
    }

    #[test]
    fn mass_is_conserved_every_step() {
        let g = Graph::cycle(5).unwrap();
        let w = build_weights(&g).unwrap();
        let states: Vec<_> = (0..5).map(|i| ConsensusState::new(i as f64 * 10.0 - 7.0, 1.0 + i as f64)).collect();
        let sched = CheckpointSchedule::new(2, 3).unwrap();
        let mut sim = Simulator::new(&g, &w, &states, &DelayModel::stochastic(3, 9), sched, 0.0).unwrap();
        let first = sim.audit();
        for _ in 0..200 {
            sim.step().unwrap();
            let a = sim.audit();
            assert!(a.conservation_error(&first) < 1e-12, "{a:?}");
            assert!(sim.mailbox().horizon().map_or(true, |h| h <= sim.step_index() + 3));
        }
        let (sent, delivered) = sim.envelope_counts();
        assert_eq!(sent, delivered + sim.mailbox().len() as u64);
    }

    #[test]
    fn two_nodes_terminate_at_first_checkpoint() {
        let g = Graph::complete(2).unwrap();
        let w = build_weights(&g).unwrap();
        let p = ApportionProblem::new(
            5.0,
            vec![Bounds::new(0.0, 4.0), Bounds::new(0.0, 6.0)],
            [NodeId(0)],
        )
        .unwrap();
        let sched = CheckpointSchedule::new(1, 0).unwrap();
        // initial ratios 1.25 and 0; a threshold above that gap stops at once
        let out = run_cycle(&g, &w, &p, &DelayModel::none(), sched, 2.0, RunOptions::default()).unwrap();
        assert_eq!(out.theta, 1);
        assert_eq!(out.steps, 1);
        assert!((out.commands.total() - 5.0).abs() < 1e-12);
        // a tighter one needs the second checkpoint
        let out = run_cycle(&g, &w, &p, &DelayModel::none(), sched, 0.5, RunOptions::default()).unwrap();
        assert_eq!(out.theta, 2);
    }

    #[test]
    fn fixed_delays_outside_bound_are_rejected() {
        let g = Graph::cycle(3).unwrap();
        let w = build_weights(&g).unwrap();
        let states = vec![ConsensusState::new(1.0, 1.0); 3];
        let sched = CheckpointSchedule::new(1, 1).unwrap();
        let bad = DelayModel::fixed(1, FixedDelays::uniform(&g, 2));
        assert!(matches!(
            Simulator::new(&g, &w, &states, &bad, sched, 0.0),
            Err(Error::DelayBound { .. })
        ));
        let mut stray = FixedDelays::new();
        stray.set(NodeId(0), NodeId(0), 0);
        assert!(Simulator::new(&g, &w, &states, &DelayModel::fixed(1, stray), sched, 0.0).is_err());
    }

    #[test]
    fn random_fixed_delays_respect_link_bounds() {
        let mut g = Graph::cycle(5).unwrap();
        g.set_delay_bound(NodeId(0), NodeId(1), 1).unwrap();
        for seed in 0..20 {
            let f = FixedDelays::random(&g, 3, seed);
            assert!(f.get(NodeId(0), NodeId(1)) <= 1);
            assert!(f.iter().all(|(_, d)| d <= 3));
        }
    }

    #[test]
    fn naive_baseline_is_exact_without_delays() {
        let g = Graph::new(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (1, 3)]).unwrap();
        let w = crate::topology::metropolis_weights(&g).unwrap();
        let x = run_naive_averaging(&g, &w, &[1000.0, 600.0, 200.0, 150.0, 50.0], &DelayModel::none(), 500).unwrap();
        for v in x {
            assert!((v - 400.0).abs() < 1e-9);
        }
        let cols = build_weights(&g).unwrap();
        assert!(run_naive_averaging(&g, &cols, &[0.0; 5], &DelayModel::none(), 1).is_err());
    }
}
