//! Ratio consensus under bounded delays.
//!
//! Weighting is done by the sender: node `j` splits its state into a
//! retained share `p_jj * r_j` and one envelope per neighbor `i` carrying
//! `p_ij * r_j`. Because column `j` of the weight matrix sums to one, the
//! split conserves mass no matter when (or in which order) the envelopes
//! arrive. An envelope sent at step `k` with delay `tau` is absorbed in
//! step `k + tau`, i.e. it contributes `p_ij * r_j(k)` to `r_i(k + tau + 1)`.

use alloc::vec::Vec;

use crate::error::{Error, ProtocolError, Result};
use crate::topology::{Graph, NodeId, WeightMatrix};

/// Numerator, denominator and (optionally) the analysis state `t` of one node
/// at iteration `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsensusState {
    pub r: f64,
    pub s: f64,
    pub t: Option<f64>,
    pub k: u64,
}

impl ConsensusState {
    pub fn new(r: f64, s: f64) -> Self {
        Self { r, s, t: None, k: 0 }
    }

    pub fn with_t(mut self, t: f64) -> Self {
        self.t = Some(t);
        self
    }
}

/// One `j -> i` summand of the update, plus the sender's max/min estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Envelope {
    pub src: NodeId,
    pub dst: NodeId,
    pub send_step: u64,
    pub payload_r: f64,
    pub payload_s: f64,
    pub payload_t: Option<f64>,
    pub payload_z: f64,
    pub payload_y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct RatioView {
    pub mu: f64,
}

/// What one node knows about the weights: its own column.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalWeights {
    pub node: NodeId,
    pub self_weight: f64,
    /// `(i, p_ij)` for every out-neighbor `i` of this node `j`.
    pub out: Vec<(NodeId, f64)>,
}

impl LocalWeights {
    pub fn from_matrix(weights: &WeightMatrix, graph: &Graph, node: NodeId) -> Self {
        Self {
            node,
            self_weight: weights.self_weight(node),
            out: graph
                .neighbors(node)
                .iter()
                .map(|&i| (i, weights.get(i, node)))
                .collect(),
        }
    }
}

/// Splits `state` into one envelope per out-neighbor. The retained share is
/// `local.self_weight` times the state and is applied by [`absorb`].
pub fn emit(state: &ConsensusState, local: &LocalWeights, z: f64, y: f64) -> Vec<Envelope> {
    local
        .out
        .iter()
        .map(|&(dst, w)| Envelope {
            src: local.node,
            dst,
            send_step: state.k,
            payload_r: w * state.r,
            payload_s: w * state.s,
            payload_t: state.t.map(|t| w * t),
            payload_z: z,
            payload_y: y,
        })
        .collect()
}

/// Applies one update: retained share plus every delivered envelope.
pub fn absorb(
    state: &ConsensusState,
    local: &LocalWeights,
    delivered: &[Envelope],
) -> Result<ConsensusState> {
    let mut r = local.self_weight * state.r;
    let mut s = local.self_weight * state.s;
    let mut t = state.t.map(|t| local.self_weight * t);
    for env in delivered {
        if env.dst != local.node {
            return Err(ProtocolError::Misaddressed {
                expected: local.node,
                got: env.dst,
            }
            .into());
        }
        r += env.payload_r;
        s += env.payload_s;
        if let (Some(acc), Some(p)) = (t.as_mut(), env.payload_t) {
            *acc += p;
        }
    }
    if !(r.is_finite() && s.is_finite()) {
        return Err(Error::NonFinite(local.node));
    }
    Ok(ConsensusState {
        r,
        s,
        t,
        k: state.k + 1,
    })
}

pub fn ratio(state: &ConsensusState, node: NodeId) -> Result<RatioView> {
    if state.s == 0.0 {
        return Err(Error::ZeroDenominator(node));
    }
    Ok(RatioView {
        mu: state.r / state.s,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extremes {
    pub max: f64,
    pub min: f64,
}

impl Extremes {
    pub fn gap(&self) -> f64 {
        self.max - self.min
    }
}

/// Global max and min of `r / s` over a set of `(r, s)` samples, skipping
/// samples with `s == 0`. The simulator feeds it every node's last
/// `tau_bar + 1` states.
pub fn global_extremes<I>(samples: I) -> Option<Extremes>
where
    I: IntoIterator<Item = (f64, f64)>,
{
    samples
        .into_iter()
        .filter(|&(_, s)| s != 0.0)
        .map(|(r, s)| r / s)
        .fold(None, |acc, mu| match acc {
            None => Some(Extremes { max: mu, min: mu }),
            Some(e) => Some(Extremes {
                max: e.max.max(mu),
                min: e.min.min(mu),
            }),
        })
}
