//! Distributed power apportioning for networks of local inverter systems.
//!
//! Each node runs ratio consensus on a numerator/denominator pair whose
//! messages may be delayed by up to `tau_bar` iterations. Max/min consensus
//! on the node ratios, piggybacked on the same messages, gives every node a
//! local certificate that the network has converged to within a threshold,
//! so all nodes stop at the same checkpoint and compute their power
//! reference command without any central coordinator.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, the CLI and the
//! replication suites live in the companion `apportion` crate.
//!
//! Module map:
//!
//! - [`topology`]: communication graph, column-stochastic weights, diameter.
//! - [`consensus`]: per-node delayed linear iterations with sender-side weighting.
//! - [`termination`]: max/min consensus epochs, checkpoints and the node agent.
//! - [`apportion`]: problem definition, initial states, reference commands.
//! - [`netsim`]: lockstep message-passing simulator with bounded delays.
//! - [`scenario`]: inverter fleet, PV profile and the repeated dispatch loop.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod apportion;
pub mod consensus;
mod error;
pub mod netsim;
pub mod scenario;
pub mod termination;
pub mod topology;

pub use error::{Error, ProtocolError, Result};
pub use topology::NodeId;
