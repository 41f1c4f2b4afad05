use crate::topology::NodeId;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("graph is disconnected")]
    Disconnected,
    #[error("node {0} is not part of the graph")]
    UnknownNode(NodeId),
    #[error("self-edge on node {0}")]
    SelfEdge(NodeId),
    #[error("no edge between {0} and {1}")]
    UnknownEdge(NodeId, NodeId),
    #[error("delay {delay} on link {from}->{to} exceeds bound {bound}")]
    DelayBound {
        from: NodeId,
        to: NodeId,
        delay: u32,
        bound: u32,
    },
    #[error("weight matrix is not {0}")]
    NotStochastic(&'static str),
    #[error("invalid bounds on node {node}: min {min} must be below max {max}")]
    InvalidBounds { node: NodeId, min: f64, max: f64 },
    #[error("infeasible demand {demand} W: capacity range is [{min_total}, {max_total}] W")]
    Infeasible {
        demand: f64,
        min_total: f64,
        max_total: f64,
    },
    #[error("demand-circulation set is empty")]
    EmptyDemandSet,
    #[error("zero denominator at node {0}")]
    ZeroDenominator(NodeId),
    #[error("state at node {0} is not finite")]
    NonFinite(NodeId),
    #[error("no termination within {0} steps")]
    NonTermination(u64),
    #[error("time {0} h is outside the profile domain")]
    OutsideProfile(f64),
    #[error("profile needs at least two breakpoints with increasing times")]
    InvalidProfile,
    #[error("command {command} W on node {node} is outside [{min}, {max}] W")]
    CommandOutOfBounds {
        node: NodeId,
        command: f64,
        min: f64,
        max: f64,
    },
    #[error("invalid configuration: {0}")]
    Config(&'static str),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

/// Violations of the per-node message protocol.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProtocolError {
    #[error("envelope for node {got} delivered to node {expected}")]
    Misaddressed { expected: NodeId, got: NodeId },
    #[error("epoch update requested at step {0}, which is not an epoch boundary")]
    OffEpoch(u64),
    #[error("checkpoint requested at step {0}, which is not a checkpoint")]
    OffCheckpoint(u64),
    #[error("node {0} is frozen")]
    Frozen(NodeId),
    #[error("nodes stopped at different checkpoints")]
    SplitTermination,
    #[error("envelope from {src} sent at step {sent} would be delivered at step {due}, beyond the delay bound")]
    LateDelivery { src: NodeId, sent: u64, due: u64 },
}
