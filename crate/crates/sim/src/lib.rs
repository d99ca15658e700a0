//! Deterministic discrete-event simulation of membership protocol
//! clusters: virtual time in integer microseconds, per-node randomness
//! derived from one master seed, a uniform-latency link model with
//! optional loss, and lock-step anomaly injection. Identical (plan, seed)
//! pairs produce byte-identical event logs.

pub mod config;
pub mod kernel;
pub mod log;
pub mod runner;

pub use config::{ExperimentKind, PlanFile, RunSpec};
pub use kernel::{derive_seed, Counters, Kernel};
pub use log::{EventRecord, MsgKind, SimEventLog, UpdateNote};
pub use runner::{run_control, run_interval, run_spec, run_threshold, RunResult};
