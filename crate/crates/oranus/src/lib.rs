//! Desk-scale single-cell simulator and control library for multiple uRLLC
//! services: empirical-MGF stochastic network calculus delay bounds, a
//! near-RT guaranteed resource-block allocator, and a per-TTI RT controller
//! with EDF sharing and an anomaly-mitigation state machine.
//!
//! With the default `parallel` feature, multi-seed experiment runs and the
//! grid oracle use rayon; without it, everything falls back to sequential
//! loops with identical results.

pub mod capacity;
pub mod domain;
pub mod estimator;
pub mod near_rt;
pub mod report;
pub mod rt_ctl;
pub mod scenario;
pub mod sim;
pub mod snc;
pub mod trace_io;

pub use domain::{CellConfig, ConfigError, Packet, ServiceSpec};
pub use near_rt::Allocation;
pub use snc::EnvelopeSolution;
