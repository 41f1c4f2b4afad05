//! The resource apportioning problem and its consensus encoding.
//!
//! Given a demand `rho_d` and per-node capacity intervals
//! `[pi_min, pi_max]`, find commands inside the intervals summing to the
//! demand. Ratio consensus on
//!
//! ```text
//! r_i(0) = rho_d / p - pi_min_i   (i in the demand set, p = |demand set|)
//! r_i(0) = -pi_min_i              (otherwise)
//! s_i(0) = pi_max_i - pi_min_i
//! ```
//!
//! drives every ratio to `(rho_d - Σ pi_min) / Σ (pi_max - pi_min)`, and
//! `pi_i = pi_min_i + ratio * (pi_max_i - pi_min_i)` solves the problem.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use crate::consensus::ConsensusState;
use crate::error::{Error, Result};
use crate::topology::NodeId;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub min: f64,
    pub max: f64,
}

impl Bounds {
    pub fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub fn span(&self) -> f64 {
        self.max - self.min
    }

    pub fn contains(&self, value: f64) -> bool {
        self.min <= value && value <= self.max
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApportionProblem {
    demand: f64,
    /// `None` marks a relay: a node with no capacity this cycle that still
    /// forwards consensus messages with zero numerator and denominator.
    units: Vec<Option<Bounds>>,
    demand_set: BTreeSet<NodeId>,
}

impl ApportionProblem {
    /// Validates bounds (`min < max`, finite), the demand set, and
    /// feasibility `Σ min <= demand <= Σ max`.
    pub fn new(
        demand: f64,
        bounds: Vec<Bounds>,
        demand_set: impl IntoIterator<Item = NodeId>,
    ) -> Result<Self> {
        Self::with_relays(demand, bounds.into_iter().map(Some).collect(), demand_set)
    }

    /// Like [`ApportionProblem::new`], with `None` entries for relay nodes.
    /// Demand-circulation nodes must have capacity.
    pub fn with_relays(
        demand: f64,
        units: Vec<Option<Bounds>>,
        demand_set: impl IntoIterator<Item = NodeId>,
    ) -> Result<Self> {
        let demand_set: BTreeSet<NodeId> = demand_set.into_iter().collect();
        if units.iter().all(Option::is_none) {
            return Err(Error::EmptyGraph);
        }
        if demand_set.is_empty() {
            return Err(Error::EmptyDemandSet);
        }
        if let Some(&bad) = demand_set
            .iter()
            .find(|id| units.get(id.0).is_none_or(Option::is_none))
        {
            return Err(Error::UnknownNode(bad));
        }
        for (i, b) in units.iter().enumerate() {
            let Some(b) = b else { continue };
            if !(b.min.is_finite() && b.max.is_finite() && b.min < b.max) {
                return Err(Error::InvalidBounds {
                    node: NodeId(i),
                    min: b.min,
                    max: b.max,
                });
            }
        }
        if !demand.is_finite() {
            return Err(Error::Config("demand must be finite"));
        }
        let problem = Self {
            demand,
            units,
            demand_set,
        };
        problem.check_feasible()?;
        Ok(problem)
    }

    fn check_feasible(&self) -> Result<()> {
        let (min_total, max_total) = (self.min_total(), self.max_total());
        if self.demand < min_total || self.demand > max_total {
            return Err(Error::Infeasible {
                demand: self.demand,
                min_total,
                max_total,
            });
        }
        Ok(())
    }

    pub fn demand(&self) -> f64 {
        self.demand
    }

    /// Per-node bounds; `None` for relays.
    pub fn units(&self) -> &[Option<Bounds>] {
        &self.units
    }

    pub fn bounds_of(&self, node: NodeId) -> Option<Bounds> {
        self.units.get(node.0).copied().flatten()
    }

    pub fn is_relay(&self, node: NodeId) -> bool {
        self.bounds_of(node).is_none()
    }

    fn bounds(&self) -> impl Iterator<Item = &Bounds> + '_ {
        self.units.iter().flatten()
    }

    pub fn node_count(&self) -> usize {
        self.units.len()
    }

    pub fn demand_set(&self) -> &BTreeSet<NodeId> {
        &self.demand_set
    }

    pub fn min_total(&self) -> f64 {
        self.bounds().map(|b| b.min).sum()
    }

    pub fn max_total(&self) -> f64 {
        self.bounds().map(|b| b.max).sum()
    }

    pub fn span_total(&self) -> f64 {
        self.bounds().map(Bounds::span).sum()
    }

    /// The ratio every node converges to.
    pub fn limit_ratio(&self) -> f64 {
        (self.demand - self.min_total()) / self.span_total()
    }
}

/// Initial consensus states. With `track_t` each node also carries the
/// analysis state `t(0) = 1`. Relays start from zero.
pub fn init_states(problem: &ApportionProblem, track_t: bool) -> Vec<ConsensusState> {
    let share = problem.demand / problem.demand_set.len() as f64;
    problem
        .units
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let state = match b {
                None => ConsensusState::new(0.0, 0.0),
                Some(b) if problem.demand_set.contains(&NodeId(i)) => {
                    ConsensusState::new(share - b.min, b.span())
                }
                Some(b) => ConsensusState::new(-b.min, b.span()),
            };
            if track_t {
                state.with_t(1.0)
            } else {
                state
            }
        })
        .collect()
}

/// Per-node power reference commands in watts.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceCommand {
    pub watts: Vec<f64>,
}

impl ReferenceCommand {
    pub fn total(&self) -> f64 {
        self.watts.iter().sum()
    }
}

/// Command for `node` from its frozen numerator and denominator. The ratio
/// is clamped to `[0, 1]` so the command always respects the node bounds.
/// Relays get zero.
pub fn reference_command(
    problem: &ApportionProblem,
    node: NodeId,
    r_star: f64,
    s_star: f64,
) -> Result<f64> {
    let b = problem.units.get(node.0).ok_or(Error::UnknownNode(node))?;
    let Some(b) = b else { return Ok(0.0) };
    if s_star == 0.0 {
        return Err(Error::ZeroDenominator(node));
    }
    let ratio = (r_star / s_star).clamp(0.0, 1.0);
    Ok(b.min + ratio * b.span())
}

/// Exact apportioning, independent of any consensus run.
pub fn closed_form(problem: &ApportionProblem) -> ReferenceCommand {
    let ratio = problem.limit_ratio();
    ReferenceCommand {
        watts: problem
            .units
            .iter()
            .map(|b| b.map_or(0.0, |b| b.min + ratio * b.span()))
            .collect(),
    }
}

/// Generation capacity minus local load; positive means the unit is a
/// network source.
pub fn net_reserve(generation: &[f64], loads: &[f64]) -> f64 {
    generation.iter().sum::<f64>() - loads.iter().sum::<f64>()
}
