//! Builds per-service capacity sample vectors from transmitted-packet
//! records: per-RB bit capacities are concatenated across packets and
//! regrouped into runs of `n + n_min` consecutive RBs.

use thiserror::Error;

/// Flat vector of per-RB bit capacities, one entry per RB used by each
/// transmitted packet, in transmission order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConcatenatedRbSamples {
    pub x_con: Vec<u64>,
}

#[derive(Debug, Error, PartialEq)]
pub enum CapacityError {
    #[error("insufficient samples: no full group of {n_set} RBs for region n = {n}")]
    InsufficientSamples { n: usize, n_set: u32 },
}

/// Per-RB bit capacity of one packet, repeated once per RB it used.
/// Floor of size/rbs, clamped to at least 1 bit per RB.
pub fn per_packet_rb_vector(size_bits: u64, rbs_used: u64) -> Vec<u64> {
    assert!(size_bits >= 1 && rbs_used >= 1);
    let c_rb = (size_bits / rbs_used).max(1);
    vec![c_rb; rbs_used as usize]
}

/// Concatenates per-packet RB vectors in packet-transmission order.
pub fn concat_samples(packets: &[(u64, u64)]) -> ConcatenatedRbSamples {
    let mut x_con = Vec::new();
    for &(size, rbs) in packets {
        x_con.extend(per_packet_rb_vector(size, rbs));
    }
    ConcatenatedRbSamples { x_con }
}

/// Groups `x_con` into non-overlapping runs of `n + n_min` consecutive
/// entries for each n in `[0, n_cell_rb - n_min]`; sample i is the sum of
/// run i; the trailing remainder is dropped.
pub fn build_capacity_samples(
    x_con: &ConcatenatedRbSamples,
    n_min: u32,
    n_cell_rb: u32,
) -> Result<Vec<Vec<u64>>, CapacityError> {
    assert!(n_min >= 1 && n_cell_rb >= n_min);
    let n_add = (n_cell_rb - n_min) as usize;
    let mut sets = Vec::with_capacity(n_add + 1);
    for n in 0..=n_add {
        let n_set = n as u32 + n_min;
        let samples: Vec<u64> = x_con
            .x_con
            .chunks_exact(n_set as usize)
            .map(|run| run.iter().sum())
            .collect();
        if samples.is_empty() {
            return Err(CapacityError::InsufficientSamples { n, n_set });
        }
        sets.push(samples);
    }
    Ok(sets)
}

/// Like [`build_capacity_samples`] but truncates the region index at the
/// largest n with at least one full group instead of failing. Returns an
/// empty vec when even n = 0 has no full group.
pub fn build_capacity_samples_truncated(
    x_con: &ConcatenatedRbSamples,
    n_min: u32,
    n_cell_rb: u32,
) -> Vec<Vec<u64>> {
    assert!(n_min >= 1 && n_cell_rb >= n_min);
    let n_add = (n_cell_rb - n_min) as usize;
    let mut sets = Vec::new();
    for n in 0..=n_add {
        let n_set = (n as u32 + n_min) as usize;
        let samples: Vec<u64> = x_con
            .x_con
            .chunks_exact(n_set)
            .map(|run| run.iter().sum())
            .collect();
        if samples.is_empty() {
            break;
        }
        sets.push(samples);
    }
    sets
}
