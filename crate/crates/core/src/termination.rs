//! Distributed finite-time termination.
//!
//! Every node runs max and min consensus on the consensus ratio alongside
//! the numerator/denominator iterations. The max/min estimates `z` and `y`
//! are held for an epoch of `1 + tau_bar` iterations and updated at epoch
//! boundaries from the values neighbors sent during the epoch that just
//! ended; a value sent at the start of an epoch has arrived by its end, so
//! one epoch moves the extremes one hop. A checkpoint period spans
//! `D (1 + tau_bar) + tau_bar` iterations and always contains `D` complete
//! epochs, so at each checkpoint every node holds the exact global max and
//! min of the ratios the period started from. If their gap is below the
//! threshold `rho` the node freezes its numerator and denominator; otherwise
//! it restarts max/min consensus.
//!
//! A restart seeds `z` and `y` with the node's own largest and smallest
//! ratio over its last `tau_bar + 1` states, not just the current one.
//! Envelopes still in flight carry older ratios, so only the windowed
//! extremes bound every ratio the network can reach afterwards; seeding
//! from the current ratio alone lets a node freeze on a small gap while
//! delayed mass later pulls the ratios outside it.
//!
//! Epoch boundaries are global multiples of `1 + tau_bar` and need not line
//! up with checkpoints. Values sent before the latest restart are ignored.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

use crate::consensus::{self, ConsensusState, Envelope, Extremes, LocalWeights};
use crate::error::{Error, ProtocolError, Result};
use crate::topology::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CheckpointSchedule {
    diameter: u32,
    tau_bar: u32,
}

impl CheckpointSchedule {
    /// `diameter` and `tau_bar` are upper bounds on the network diameter and
    /// the link delay. A single-node network still needs `diameter >= 1`.
    pub fn new(diameter: u32, tau_bar: u32) -> Result<Self> {
        if diameter == 0 {
            return Err(Error::Config("diameter bound must be at least 1"));
        }
        Ok(Self { diameter, tau_bar })
    }

    pub fn diameter(&self) -> u32 {
        self.diameter
    }

    pub fn tau_bar(&self) -> u32 {
        self.tau_bar
    }

    pub fn epoch_len(&self) -> u64 {
        1 + u64::from(self.tau_bar)
    }

    pub fn checkpoint_len(&self) -> u64 {
        u64::from(self.diameter) * self.epoch_len() + u64::from(self.tau_bar)
    }

    /// Whether the state with index `step` is produced at an epoch boundary.
    pub fn is_epoch_boundary(&self, step: u64) -> bool {
        step > 0 && step % self.epoch_len() == 0
    }

    pub fn is_checkpoint(&self, step: u64) -> bool {
        step > 0 && step % self.checkpoint_len() == 0
    }

    /// First epoch boundary strictly after `step`.
    pub fn next_epoch_boundary(&self, step: u64) -> u64 {
        (step / self.epoch_len() + 1) * self.epoch_len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TerminationState {
    pub z: f64,
    pub y: f64,
    /// Epoch counter; the next boundary is `l * (1 + tau_bar)`.
    pub l: u64,
    /// Checkpoint counter; the next checkpoint is `theta * checkpoint_len`.
    pub theta: u64,
    pub frozen: bool,
    pub r_star: f64,
    pub s_star: f64,
    /// Step at which max/min consensus was last (re)started.
    pub period_start: u64,
}

/// Result of one checkpoint evaluation, recorded before any restart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckpointEvent {
    pub node: NodeId,
    pub step: u64,
    pub theta: u64,
    pub z: f64,
    pub y: f64,
    pub r: f64,
    pub s: f64,
    pub ratio: f64,
    pub frozen: bool,
}

impl CheckpointEvent {
    pub fn gap(&self) -> f64 {
        self.z - self.y
    }
}

impl TerminationState {
    pub fn new(initial_ratio: f64) -> Self {
        Self::with_extremes(initial_ratio, initial_ratio)
    }

    pub fn with_extremes(z: f64, y: f64) -> Self {
        Self {
            z,
            y,
            l: 1,
            theta: 1,
            frozen: false,
            r_star: 0.0,
            s_star: 0.0,
            period_start: 0,
        }
    }

    /// Checkpoint gap `z - y`, the local convergence certificate.
    pub fn beta(&self) -> f64 {
        self.z - self.y
    }

    /// Max/min update for the boundary producing state `step`.
    pub fn epoch_update(
        &self,
        step: u64,
        schedule: &CheckpointSchedule,
        neighbor_z: &[f64],
        neighbor_y: &[f64],
    ) -> Result<Self> {
        if step != self.l * schedule.epoch_len() {
            return Err(ProtocolError::OffEpoch(step).into());
        }
        let mut next = *self;
        next.z = neighbor_z.iter().copied().fold(self.z, f64::max);
        next.y = neighbor_y.iter().copied().fold(self.y, f64::min);
        next.l += 1;
        Ok(next)
    }

    /// Threshold test at the checkpoint producing state `step`, where
    /// `(r, s)` is the node's state at that step and `recent` spans its own
    /// ratios over the last `tau_bar + 1` states. Below the threshold the
    /// node freezes `(r, s)`; otherwise `z` and `y` restart from `recent`.
    pub fn checkpoint(
        &self,
        step: u64,
        schedule: &CheckpointSchedule,
        r: f64,
        s: f64,
        recent: Extremes,
        rho: f64,
    ) -> Result<Self> {
        if step != self.theta * schedule.checkpoint_len() {
            return Err(ProtocolError::OffCheckpoint(step).into());
        }
        let mut next = *self;
        if self.beta() < rho {
            next.frozen = true;
            next.r_star = r;
            next.s_star = s;
        } else {
            next.z = recent.max;
            next.y = recent.min;
            next.theta += 1;
            next.period_start = step;
        }
        Ok(next)
    }
}

/// Everything that happened to a node in one iteration.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepOutcome {
    pub epoch: bool,
    pub checkpoint: Option<CheckpointEvent>,
}

/// One node running the full termination protocol.
#[derive(Debug, Clone)]
pub struct NodeAgent {
    local: LocalWeights,
    state: ConsensusState,
    term: TerminationState,
    epoch_z: Vec<f64>,
    epoch_y: Vec<f64>,
    /// Own `(r, s)` over the last `tau_bar + 1` states, oldest first.
    recent: VecDeque<(f64, f64)>,
}

impl NodeAgent {
    /// A node starting with `s = 0` and `r = 0` is a relay: it enters max
    /// and min consensus with the neutral values `-inf` and `+inf` and picks
    /// up a positive denominator from its first delivery.
    pub fn new(local: LocalWeights, initial: ConsensusState) -> Result<Self> {
        if initial.s == 0.0 && initial.r == 0.0 {
            return Ok(Self::with_extremes(local, initial, f64::NEG_INFINITY, f64::INFINITY));
        }
        if !(initial.s > 0.0) {
            return Err(Error::ZeroDenominator(local.node));
        }
        let mu = initial.r / initial.s;
        Ok(Self::with_extremes(local, initial, mu, mu))
    }

    /// Starts max/min consensus from arbitrary values instead of the
    /// initial ratio.
    pub fn with_extremes(local: LocalWeights, initial: ConsensusState, z: f64, y: f64) -> Self {
        Self {
            local,
            state: initial,
            term: TerminationState::with_extremes(z, y),
            epoch_z: Vec::new(),
            epoch_y: Vec::new(),
            recent: VecDeque::from([(initial.r, initial.s)]),
        }
    }

    pub fn id(&self) -> NodeId {
        self.local.node
    }

    pub fn state(&self) -> &ConsensusState {
        &self.state
    }

    pub fn termination(&self) -> &TerminationState {
        &self.term
    }

    pub fn is_frozen(&self) -> bool {
        self.term.frozen
    }

    /// Envelopes carrying the current state and max/min estimates. A frozen
    /// node emits nothing.
    pub fn emit(&self) -> Vec<Envelope> {
        if self.term.frozen {
            return Vec::new();
        }
        consensus::emit(&self.state, &self.local, self.term.z, self.term.y)
    }

    /// Runs iteration `k` after [`NodeAgent::emit`]: absorbs the envelopes
    /// due now and applies the epoch and checkpoint logic to the new state
    /// `k + 1`.
    pub fn step(
        &mut self,
        inbox: &[Envelope],
        schedule: &CheckpointSchedule,
        rho: f64,
    ) -> Result<StepOutcome> {
        if self.term.frozen {
            return Err(ProtocolError::Frozen(self.local.node).into());
        }
        let k = self.state.k;
        let boundary = schedule.next_epoch_boundary(k);
        let window_start = (boundary - schedule.epoch_len()).max(self.term.period_start);
        for env in inbox {
            if env.send_step >= window_start {
                self.epoch_z.push(env.payload_z);
                self.epoch_y.push(env.payload_y);
            }
        }
        let was_positive = self.state.s > 0.0;
        self.state = consensus::absorb(&self.state, &self.local, inbox)?;
        if self.state.s < 0.0 || (was_positive && self.state.s == 0.0) {
            return Err(Error::ZeroDenominator(self.local.node));
        }

        let depth = schedule.tau_bar() as usize + 1;
        while self.recent.len() >= depth {
            self.recent.pop_front();
        }
        self.recent.push_back((self.state.r, self.state.s));

        let next = k + 1;
        let mut outcome = StepOutcome::default();
        if schedule.is_epoch_boundary(next) {
            self.term = self
                .term
                .epoch_update(next, schedule, &self.epoch_z, &self.epoch_y)?;
            self.epoch_z.clear();
            self.epoch_y.clear();
            outcome.epoch = true;
        }
        if schedule.is_checkpoint(next) {
            let before = self.term;
            let recent = consensus::global_extremes(self.recent.iter().copied())
                .ok_or(Error::ZeroDenominator(self.local.node))?;
            self.term = before.checkpoint(next, schedule, self.state.r, self.state.s, recent, rho)?;
            outcome.checkpoint = Some(CheckpointEvent {
                node: self.local.node,
                step: next,
                theta: before.theta,
                z: before.z,
                y: before.y,
                r: self.state.r,
                s: self.state.s,
                ratio: self.state.r / self.state.s,
                frozen: self.term.frozen,
            });
            if !self.term.frozen {
                // whatever arrived for the running epoch predates the restart
                self.epoch_z.clear();
                self.epoch_y.clear();
            }
        }
        Ok(outcome)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn schedule(d: u32, tau: u32) -> CheckpointSchedule {
        CheckpointSchedule::new(d, tau).unwrap()
    }

    #[test]
    fn schedule_lengths() {
        let s = schedule(3, 3);
        assert_eq!(s.epoch_len(), 4);
        assert_eq!(s.checkpoint_len(), 15);
        assert!(s.is_epoch_boundary(12));
        assert!(!s.is_epoch_boundary(15));
        assert!(s.is_checkpoint(30));
        assert_eq!(s.next_epoch_boundary(11), 12);
        assert_eq!(s.next_epoch_boundary(12), 16);
        assert!(CheckpointSchedule::new(0, 3).is_err());
    }

    #[test]
    fn epoch_update_takes_max_and_min() {
        let s = schedule(3, 3);
        let t = TerminationState::with_extremes(2.0, 2.0);
        let next = t.epoch_update(4, &s, &[1.0, 5.0], &[1.0, 5.0]).unwrap();
        assert_eq!((next.z, next.y, next.l), (5.0, 1.0, 2));
        let alone = t.epoch_update(4, &s, &[], &[]).unwrap();
        assert_eq!((alone.z, alone.y), (2.0, 2.0));
    }

    #[test]
    fn epoch_update_off_schedule() {
        let s = schedule(3, 3);
        let t = TerminationState::new(0.0);
        assert_eq!(
            t.epoch_update(5, &s, &[], &[]),
            Err(ProtocolError::OffEpoch(5).into())
        );
    }

    #[test]
    fn path_propagates_max_in_diameter_epochs() {
        // path 0-1-2-3, z = (0, 0, 0, 9), three epochs of pure max consensus
        let s = schedule(3, 0);
        let mut z = [0.0, 0.0, 0.0, 9.0];
        let mut states: Vec<TerminationState> =
            z.iter().map(|&v| TerminationState::with_extremes(v, v)).collect();
        for epoch in 1..=3u64 {
            let prev = z;
            for i in 0..4usize {
                let nbrs: Vec<f64> = [i.wrapping_sub(1), i + 1]
                    .into_iter()
                    .filter(|&j| j < 4)
                    .map(|j| prev[j])
                    .collect();
                states[i] = states[i].epoch_update(epoch, &s, &nbrs, &nbrs).unwrap();
                z[i] = states[i].z;
            }
        }
        assert_eq!(z, [9.0; 4]);
    }

    #[test]
    fn checkpoint_freezes_below_threshold() {
        let s = schedule(3, 3);
        let t = TerminationState::with_extremes(0.5001, 0.5000);
        let here = Extremes { max: 0.5, min: 0.5 };
        let next = t.checkpoint(15, &s, 2.0, 4.0, here, 1e-3).unwrap();
        assert!(next.frozen);
        assert_eq!((next.r_star, next.s_star), (2.0, 4.0));
        assert_eq!(next.theta, 1);
    }

    #[test]
    fn checkpoint_restarts_above_threshold() {
        let s = schedule(3, 3);
        let t = TerminationState::with_extremes(0.9, 0.1);
        let here = Extremes { max: 0.25, min: 0.25 };
        let next = t.checkpoint(15, &s, 1.0, 4.0, here, 1e-3).unwrap();
        assert!(!next.frozen);
        assert_eq!((next.z, next.y, next.theta), (0.25, 0.25, 2));
        assert_eq!(next.period_start, 15);
        assert!(t.checkpoint(16, &s, 1.0, 4.0, here, 1e-3).is_err());
        let window = Extremes { max: 0.4, min: 0.2 };
        let next = t.checkpoint(15, &s, 1.0, 4.0, window, 1e-3).unwrap();
        assert_eq!((next.z, next.y), (0.4, 0.2));
    }

    #[test]
    fn infinite_threshold_freezes_at_first_checkpoint() {
        let local = LocalWeights {
            node: NodeId(0),
            self_weight: 1.0,
            out: vec![],
        };
        let mut agent = NodeAgent::new(local, ConsensusState::new(100.0, 200.0)).unwrap();
        let s = schedule(1, 0);
        let out = agent.step(&[], &s, f64::INFINITY).unwrap();
        let event = out.checkpoint.unwrap();
        assert!(event.frozen);
        assert_eq!(event.theta, 1);
        assert!(agent.emit().is_empty());
        assert!(agent.step(&[], &s, f64::INFINITY).is_err());
    }

    #[test]
    fn single_node_freezes_with_closed_form_ratio() {
        // demand 100 W on a [0, 200] W unit: ratio 0.5
        let local = LocalWeights {
            node: NodeId(0),
            self_weight: 1.0,
            out: vec![],
        };
        let mut agent = NodeAgent::new(local, ConsensusState::new(100.0, 200.0)).unwrap();
        let s = schedule(1, 3);
        let mut event = None;
        for _ in 0..s.checkpoint_len() {
            event = agent.step(&[], &s, 1e-3).unwrap().checkpoint;
        }
        let event = event.unwrap();
        assert!(event.frozen);
        let t = agent.termination();
        assert_eq!(t.r_star / t.s_star, 0.5);
    }
}
