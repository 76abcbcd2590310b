//! Near-RT guaranteed-RB allocation: iterative single-RB descent on the
//! worst normalized delay bound, plus a brute-force enumeration oracle.

use crate::capacity::{build_capacity_samples_truncated, concat_samples};
use crate::domain::{CellConfig, ServiceSpec};
use crate::estimator::RbEstimator;
use crate::snc::{algorithm1_delay_bound, Algorithm1Params, ServiceSampleSet, SncError};
use crate::trace_io::SampleWindow;
use thiserror::Error;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// A committed guaranteed-RB assignment with its per-service bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    /// Guaranteed RBs per service, each >= 1, summing to <= n_cell_rb.
    pub n_min: Vec<u32>,
    /// Delay bound per service in seconds (+inf where no stable bound).
    pub w: Vec<f64>,
    /// max over services of w / w_th.
    pub objective: f64,
    /// Candidate evaluations performed to reach this allocation.
    pub iterations: usize,
}

#[derive(Debug, Error)]
pub enum NearRtError {
    #[error("every service is unstable at the initial equal split")]
    Infeasible,
    #[error("enumeration size {size} exceeds the cap {cap}")]
    SearchSpaceTooLarge { size: u64, cap: u64 },
}

/// Worst normalized delay bound; +inf bounds propagate.
pub fn objective_g(w: &[f64], w_th: &[f64]) -> f64 {
    assert_eq!(w.len(), w_th.len());
    w.iter()
        .zip(w_th)
        .map(|(&wi, &ti)| wi / ti)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Evaluates one candidate allocation: per-service PMF, capacity sample
/// sets, and the shrinking-theta bound.
fn evaluate_candidate(
    candidate: &[u32],
    windows: &[SampleWindow],
    estimator: &dyn RbEstimator,
    cell: &CellConfig,
    specs: &[ServiceSpec],
    alg1: Algorithm1Params,
) -> Vec<f64> {
    let eval_one = |m: usize| -> f64 {
        let n_min = candidate[m];
        let x_con = concat_samples(&windows[m].packets);
        let sets = build_capacity_samples_truncated(&x_con, n_min, cell.n_cell_rb);
        if sets.is_empty() {
            return f64::INFINITY;
        }
        // The estimator answers over the full region range; truncate to the
        // regions that actually have samples and renormalize.
        let full_n_add = (cell.n_cell_rb - n_min) as usize;
        let mut pi = estimator.pi(m, candidate, full_n_add);
        pi.truncate(sets.len());
        let mass: f64 = pi.iter().sum();
        if mass <= 0.0 {
            return f64::INFINITY;
        }
        for p in pi.iter_mut() {
            *p /= mass;
        }
        let samples = match ServiceSampleSet::new(sets, pi) {
            Ok(s) => s,
            Err(_) => return f64::INFINITY,
        };
        match algorithm1_delay_bound(&windows[m].x_d, &samples, specs[m].epsilon, cell.t_slot, alg1)
        {
            Ok(sol) => sol.w_bound,
            Err(SncError::NoStableBound { .. }) => f64::INFINITY,
            Err(_) => f64::INFINITY,
        }
    };

    #[cfg(feature = "parallel")]
    {
        (0..specs.len()).into_par_iter().map(eval_one).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..specs.len()).map(eval_one).collect()
    }
}

/// Iterative descent: start from the equal split, repeatedly move one RB
/// from the best-ratio service to the worst-ratio service while the worst
/// normalized bound improves.
pub fn allocate_guaranteed(
    windows: &[SampleWindow],
    estimator: &dyn RbEstimator,
    cell: &CellConfig,
    specs: &[ServiceSpec],
    alg1: Algorithm1Params,
) -> Result<Allocation, NearRtError> {
    let m = specs.len();
    assert!(m >= 1 && cell.n_cell_rb as usize >= m);
    assert_eq!(windows.len(), m);
    let w_th: Vec<f64> = specs.iter().map(|s| s.w_th).collect();

    // Equal split with the remainder spread over the first services, so the
    // candidate always sums to exactly n_cell_rb (the brute-force search
    // space enumerates exact-sum compositions).
    let base = cell.n_cell_rb / m as u32;
    let rem = cell.n_cell_rb as usize % m;
    let mut candidate: Vec<u32> = (0..m).map(|i| base + u32::from(i < rem)).collect();
    let mut best: Option<Allocation> = None;
    let mut iterations = 0usize;
    // Each RB can migrate a bounded number of times before g stops
    // improving; the cap guards against cycling.
    let max_iterations = (cell.n_cell_rb as usize) * m;

    loop {
        iterations += 1;
        let w = evaluate_candidate(&candidate, windows, estimator, cell, specs, alg1);
        let g = objective_g(&w, &w_th);
        let improved = best.as_ref().map_or(g.is_finite(), |b| g < b.objective);
        if !improved || iterations > max_iterations {
            return best.ok_or(NearRtError::Infeasible);
        }
        best = Some(Allocation { n_min: candidate.clone(), w: w.clone(), objective: g, iterations });

        // Receiver: worst ratio. Donor: best ratio not at the 1-RB floor.
        let ratios: Vec<f64> = w.iter().zip(&w_th).map(|(&wi, &ti)| wi / ti).collect();
        let receiver = argmax(&ratios);
        let donor = ratios
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != receiver && candidate[i] > 1)
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i);
        let Some(donor) = donor else {
            return best.ok_or(NearRtError::Infeasible);
        };
        if donor == receiver {
            return best.ok_or(NearRtError::Infeasible);
        }
        candidate[donor] -= 1;
        candidate[receiver] += 1;
    }
}

fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap()
}

/// Number of compositions of `n_cell_rb` into `m` parts, each >= 1:
/// C(n_cell_rb - 1, m - 1).
pub fn enumeration_size(n_cell_rb: u32, m: usize) -> u64 {
    let n = (n_cell_rb - 1) as u64;
    let k = (m - 1) as u64;
    if k > n {
        return 0;
    }
    let mut result = 1u64;
    for i in 0..k {
        result = result * (n - i) / (i + 1);
    }
    result
}

/// Exhaustive oracle: enumerates every allocation summing to exactly
/// `n_cell_rb` with each part >= 1, evaluates the identical pipeline, and
/// returns the argmin with lexicographically-smallest tie breaking.
pub fn brute_force_allocate(
    windows: &[SampleWindow],
    estimator: &dyn RbEstimator,
    cell: &CellConfig,
    specs: &[ServiceSpec],
    alg1: Algorithm1Params,
    enumeration_cap: u64,
) -> Result<Allocation, NearRtError> {
    let m = specs.len();
    let size = enumeration_size(cell.n_cell_rb, m);
    if size > enumeration_cap {
        return Err(NearRtError::SearchSpaceTooLarge { size, cap: enumeration_cap });
    }
    let w_th: Vec<f64> = specs.iter().map(|s| s.w_th).collect();
    let mut candidates = Vec::with_capacity(size as usize);
    compositions(cell.n_cell_rb, m, &mut Vec::new(), &mut candidates);
    debug_assert_eq!(candidates.len() as u64, size);

    let evaluate = |candidate: &Vec<u32>| -> (Vec<f64>, f64) {
        let w = evaluate_candidate(candidate, windows, estimator, cell, specs, alg1);
        let g = objective_g(&w, &w_th);
        (w, g)
    };

    #[cfg(feature = "parallel")]
    let results: Vec<(Vec<f64>, f64)> = candidates.par_iter().map(evaluate).collect();
    #[cfg(not(feature = "parallel"))]
    let results: Vec<(Vec<f64>, f64)> = candidates.iter().map(evaluate).collect();

    let mut best: Option<(usize, f64)> = None;
    for (i, (_, g)) in results.iter().enumerate() {
        if !g.is_finite() {
            continue;
        }
        let replace = match best {
            None => true,
            Some((bi, bg)) => *g < bg || (*g == bg && candidates[i] < candidates[bi]),
        };
        if replace {
            best = Some((i, *g));
        }
    }
    let (idx, g) = best.ok_or(NearRtError::Infeasible)?;
    Ok(Allocation {
        n_min: candidates[idx].clone(),
        w: results[idx].0.clone(),
        objective: g,
        iterations: candidates.len(),
    })
}

fn compositions(remaining: u32, parts: usize, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if parts == 1 {
        if remaining >= 1 {
            let mut full = prefix.clone();
            full.push(remaining);
            out.push(full);
        }
        return;
    }
    // Leave at least 1 RB for each remaining part.
    let max_here = remaining.saturating_sub(parts as u32 - 1);
    for v in 1..=max_here {
        prefix.push(v);
        compositions(remaining - v, parts - 1, prefix, out);
        prefix.pop();
    }
}
