//! Shared vocabulary types and configuration validation.
//!
//! Units are fixed once here: rates in bits/second, delays in seconds,
//! queue ages in TTIs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Static cell parameters shared by every control loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellConfig {
    /// RBs available per TTI.
    pub n_cell_rb: u32,
    /// Seconds per TTI.
    pub t_slot: f64,
    /// TTIs per near-RT decision period.
    #[serde(default = "default_t_out")]
    pub t_out: u64,
    /// TTIs per observation window.
    pub t_obs: u64,
    pub rng_seed: u64,
}

fn default_t_out() -> u64 {
    1000
}

/// Per-service SLA and traffic-source binding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceSpec {
    pub id: usize,
    /// Delay budget in seconds.
    pub w_th: f64,
    /// Target violation probability, in (0,1).
    pub epsilon: f64,
    pub source: TrafficSource,
}

/// Where a service's arrivals come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrafficSource {
    /// A converted trace file (canonical CSV, header `tti,ue_id,bits,rbs`).
    Trace { path: String },
    /// Synthetic generator, see [`crate::trace_io::gen_synthetic`].
    Synthetic(crate::trace_io::GeneratorParams),
}

/// A transport-block unit queued for transmission.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Packet {
    pub service_id: usize,
    pub size_bits: u64,
    pub arrival_tti: u64,
    pub bits_remaining: u64,
    /// Bits one RB carries for this packet (fixed MCS per packet).
    pub bits_per_rb: u64,
}

impl Packet {
    pub fn new(service_id: usize, size_bits: u64, arrival_tti: u64, bits_per_rb: u64) -> Self {
        Packet {
            service_id,
            size_bits,
            arrival_tti,
            bits_remaining: size_bits,
            bits_per_rb: bits_per_rb.max(1),
        }
    }

    /// RBs still needed to fully transmit this packet.
    pub fn rbs_needed(&self) -> u64 {
        self.bits_remaining.div_ceil(self.bits_per_rb)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("n_cell_rb must be >= 1, got {0}")]
    NoCellRbs(u32),
    #[error("t_slot must be > 0, got {0}")]
    BadSlotDuration(f64),
    #[error("t_out must be >= 1")]
    BadTOut,
    #[error("t_obs must be >= 1")]
    BadTObs,
    #[error("t_obs ({t_obs}) must be >= t_out ({t_out})")]
    WindowShorterThanPeriod { t_obs: u64, t_out: u64 },
    #[error("service {id}: epsilon must be in (0,1), got {epsilon}")]
    BadEpsilon { id: usize, epsilon: f64 },
    #[error("service {id}: w_th ({w_th}) must be >= t_slot ({t_slot})")]
    BudgetBelowSlot { id: usize, w_th: f64, t_slot: f64 },
    #[error("n_cell_rb ({n_cell_rb}) must be >= number of services ({n_services}) for the equal-split initializer")]
    TooManyServices { n_cell_rb: u32, n_services: usize },
    #[error("no services configured")]
    NoServices,
    #[error("service ids must be 0..n_services in order, got {0} at position {1}")]
    BadServiceId(usize, usize),
}

/// Checks every type invariant and returns the inputs unchanged.
///
/// Idempotent: validating an already-validated configuration is a no-op.
pub fn validate_config<'a>(
    cell: &'a CellConfig,
    services: &'a [ServiceSpec],
) -> Result<(&'a CellConfig, &'a [ServiceSpec]), ConfigError> {
    if cell.n_cell_rb < 1 {
        return Err(ConfigError::NoCellRbs(cell.n_cell_rb));
    }
    if !(cell.t_slot > 0.0) {
        return Err(ConfigError::BadSlotDuration(cell.t_slot));
    }
    if cell.t_out < 1 {
        return Err(ConfigError::BadTOut);
    }
    if cell.t_obs < 1 {
        return Err(ConfigError::BadTObs);
    }
    if cell.t_obs < cell.t_out {
        return Err(ConfigError::WindowShorterThanPeriod {
            t_obs: cell.t_obs,
            t_out: cell.t_out,
        });
    }
    if services.is_empty() {
        return Err(ConfigError::NoServices);
    }
    if (cell.n_cell_rb as usize) < services.len() {
        return Err(ConfigError::TooManyServices {
            n_cell_rb: cell.n_cell_rb,
            n_services: services.len(),
        });
    }
    for (pos, s) in services.iter().enumerate() {
        if s.id != pos {
            return Err(ConfigError::BadServiceId(s.id, pos));
        }
        if !(s.epsilon > 0.0 && s.epsilon < 1.0) {
            return Err(ConfigError::BadEpsilon {
                id: s.id,
                epsilon: s.epsilon,
            });
        }
        if s.w_th < cell.t_slot {
            return Err(ConfigError::BudgetBelowSlot {
                id: s.id,
                w_th: s.w_th,
                t_slot: cell.t_slot,
            });
        }
    }
    Ok((cell, services))
}
