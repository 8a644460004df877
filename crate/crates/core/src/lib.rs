//! Deterministic discrete-event simulator for a metropolitan star-topology
//! quantum network.
//!
//! A central *Qonnector* hub routes photons, creates EPR pairs and GHZ
//! states and performs Bell state measurements; *Qlients* prepare or measure
//! one photonic qubit at a time. This crate holds the whole algorithmic core:
//!
//! - [`engine`]: integer-nanosecond event scheduler and seeded RNG streams.
//! - [`qstate`]: dense density-operator backend and a fast stochastic
//!   trajectory backend with identical gate/channel/measurement semantics.
//! - [`hardware`]: sources, fibers, switch, detectors and the BSM station.
//! - [`network`]: topology, per-node parameters and the Paris presets.
//! - [`protocols`]: event-driven runs of the QKD, delegation and GHZ protocols.
//! - [`metrics`]: sifting, QBER, throughput and closed-form oracles.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, the CLI and
//! parallel aggregation live in the `qcity` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod engine;
pub mod hardware;
pub mod metrics;
pub mod network;
pub mod protocols;
pub mod qstate;

pub use engine::{EngineError, EventHandle, RngStream, Scheduled, Scheduler, SimTime};
pub use network::{NetworkError, NodeSpec, ProtocolKind, Role, RunSpec, Topology};
