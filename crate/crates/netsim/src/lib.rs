//! Deterministic discrete-event simulator for the DAG consensus core.
//!
//! One seeded, single-threaded event loop drives a whole replica cluster
//! under three network models (fixed-delay synchronous, partial synchrony
//! with a global stabilization time, and random asynchrony), with crash and
//! recovery injection. Identical `(seed, config)` inputs produce
//! byte-identical traces.

pub mod config;
pub mod net;
pub mod sim;
pub mod trace;

pub use config::{ConfigError, FaultEvent, FaultPlan, NetModelCfg, SimConfig, SlowLink};
pub use net::NetModel;
pub use sim::run;
pub use trace::{
    CommitRecord, CommittedRef, DecidedSlotRecord, LatencySample, RefRecord, ReplicaTrace,
    SimTrace, SubmittedTx,
};
