//! Empirical-MGF stochastic network calculus: envelope rate parameters, the
//! delay-bound objective, the shrinking-theta search, and an exhaustive grid
//! oracle for validating it.
//!
//! All MGF sums go through log-sum-exp so large bit counts never overflow.
//! Burst offsets are zero throughout (the envelopes are fitted to empirical
//! MGFs, which absorb the burstiness into the rate parameters).

use thiserror::Error;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Result of the delay-bound search for one service.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeSolution {
    /// Chernoff free parameter, > 0.
    pub theta: f64,
    /// Sample-path slack, > 0.
    pub delta: f64,
    /// Arrival envelope rate, bits/s.
    pub rho_a: f64,
    /// Service envelope rate, bits/s.
    pub rho_s: f64,
    /// Delay bound, seconds.
    pub w_bound: f64,
}

/// Capacity sample vectors per extra-RB region, with the region PMF.
///
/// `sets[n]` holds the bits servable in one TTI when the service has
/// `n + n_min` RBs; `pi[n]` is the probability of that region.
#[derive(Debug, Clone, PartialEq)]
pub struct ServiceSampleSet {
    sets: Vec<Vec<u64>>,
    pi: Vec<f64>,
    /// Per-set run-length histogram of the sorted samples; capacity samples
    /// repeat heavily, so the MGF sums run over distinct values only.
    compressed: Vec<Vec<(u64, u32)>>,
}

/// Sorted (value, count) histogram of a sample vector.
fn run_length(values: &[u64]) -> Vec<(u64, u32)> {
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    let mut out: Vec<(u64, u32)> = Vec::new();
    for v in sorted {
        match out.last_mut() {
            Some((last, count)) if *last == v => *count += 1,
            _ => out.push((v, 1)),
        }
    }
    out
}

#[derive(Debug, Error, PartialEq)]
pub enum SncError {
    #[error("sample set is empty or carries no probability mass")]
    EmptySampleSet,
    #[error("pi has {pi} entries but there are {sets} sample vectors")]
    LengthMismatch { pi: usize, sets: usize },
    #[error("pi must be a probability vector (sum {sum})")]
    BadPi { sum: f64 },
    #[error("no stable bound: service rate never exceeds arrival rate for theta >= {theta_min}")]
    NoStableBound { theta_min: f64 },
}

impl ServiceSampleSet {
    pub fn new(sets: Vec<Vec<u64>>, pi: Vec<f64>) -> Result<Self, SncError> {
        if pi.len() != sets.len() {
            return Err(SncError::LengthMismatch { pi: pi.len(), sets: sets.len() });
        }
        let sum: f64 = pi.iter().sum();
        if pi.iter().any(|&p| p < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(SncError::BadPi { sum });
        }
        let has_mass = sets
            .iter()
            .zip(&pi)
            .any(|(set, &p)| p > 0.0 && !set.is_empty());
        if !has_mass {
            return Err(SncError::EmptySampleSet);
        }
        let compressed = sets.iter().map(|s| run_length(s)).collect();
        Ok(ServiceSampleSet { sets, pi, compressed })
    }

    /// Single-region set (everything served with the guaranteed RBs).
    pub fn single(samples: Vec<u64>) -> Result<Self, SncError> {
        Self::new(vec![samples], vec![1.0])
    }

    pub fn sets(&self) -> &[Vec<u64>] {
        &self.sets
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn max_sample(&self) -> u64 {
        self.sets
            .iter()
            .zip(&self.pi)
            .filter(|(_, &p)| p > 0.0)
            .flat_map(|(s, _)| s.iter().copied())
            .max()
            .unwrap_or(0)
    }

    /// ln M_C(-theta) = ln sum_n (pi_n / T_n) sum_i exp(-theta c_i),
    /// evaluated as a weighted log-sum-exp.
    pub fn log_neg_mgf(&self, theta: f64) -> f64 {
        // Terms are exp(-theta * c) with c >= 0, so exponents are <= 0 and
        // the max exponent anchors the sum without overflow.
        let mut max_exp = f64::NEG_INFINITY;
        for (set, &p) in self.compressed.iter().zip(&self.pi) {
            if p <= 0.0 || set.is_empty() {
                continue;
            }
            // Sets are sorted, so the minimum is the first entry.
            let m = -theta * set[0].0 as f64;
            if m > max_exp {
                max_exp = m;
            }
        }
        let mut acc = 0.0;
        for ((set, full), &p) in self.compressed.iter().zip(&self.sets).zip(&self.pi) {
            if p <= 0.0 || set.is_empty() {
                continue;
            }
            let w = p / full.len() as f64;
            for &(c, count) in set {
                acc += w * count as f64 * (-theta * c as f64 - max_exp).exp();
            }
        }
        max_exp + acc.ln()
    }
}

/// Arrival envelope rate: ln(mean over samples of exp(theta*d)) / (theta*t_slot).
pub fn arrival_rate_param(x_d: &[u64], theta: f64, t_slot: f64) -> f64 {
    assert!(!x_d.is_empty());
    arrival_rate_from_hist(&run_length(x_d), x_d.len(), theta, t_slot)
}

/// Same rate over a precomputed sorted histogram (the sample vector is fixed
/// across the many theta evaluations of one search).
fn arrival_rate_from_hist(hist: &[(u64, u32)], total: usize, theta: f64, t_slot: f64) -> f64 {
    assert!(theta > 0.0 && !hist.is_empty());
    let max_d = hist.last().unwrap().0 as f64;
    let mean: f64 = hist
        .iter()
        .map(|&(d, count)| count as f64 * (theta * (d as f64 - max_d)).exp())
        .sum::<f64>()
        / total as f64;
    (theta * max_d + mean.ln()) / (theta * t_slot)
}

/// Service envelope rate: -ln M_C(-theta) / (theta*t_slot).
pub fn service_rate_param(samples: &ServiceSampleSet, theta: f64, t_slot: f64) -> f64 {
    assert!(theta > 0.0);
    -samples.log_neg_mgf(theta) / (theta * t_slot)
}

/// ln(1 - exp(-x)) for x > 0, stable near zero.
fn ln_one_minus_exp_neg(x: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    (-(-x).exp_m1()).ln()
}

/// The delay-bound objective W(theta, delta) in seconds.
///
/// Returns `+inf` when the point is infeasible (denominator >= 0) or when
/// theta*delta collapses the numerator.
pub fn delay_bound_objective(
    theta: f64,
    delta: f64,
    samples: &ServiceSampleSet,
    epsilon: f64,
    t_slot: f64,
) -> f64 {
    assert!(theta > 0.0 && delta > 0.0);
    assert!(epsilon > 0.0 && epsilon < 1.0);
    delay_bound_from_mgf(theta, delta, samples.log_neg_mgf(theta), epsilon, t_slot)
}

/// The objective with ln M_C(-theta) precomputed (it is shared by every
/// delta at a fixed theta).
fn delay_bound_from_mgf(theta: f64, delta: f64, ln_mgf: f64, epsilon: f64, t_slot: f64) -> f64 {
    let denom = ln_mgf + delta * theta * t_slot;
    if denom >= 0.0 || !denom.is_finite() {
        return f64::INFINITY;
    }
    let numer = 2.0 * t_slot * ((epsilon / 2.0).ln() + ln_one_minus_exp_neg(theta * delta));
    if numer == f64::NEG_INFINITY {
        return f64::INFINITY;
    }
    numer / denom
}

/// Tuning knobs for the shrinking-theta search.
#[derive(Debug, Clone, Copy)]
pub struct Algorithm1Params {
    /// Multiplicative shrink factor per iteration, in (0,1).
    pub delta_shrink: f64,
    /// Hard stop: below this theta with no feasible iterate the system is
    /// declared overloaded.
    pub theta_min: f64,
}

impl Default for Algorithm1Params {
    fn default() -> Self {
        Algorithm1Params { delta_shrink: 0.9, theta_min: 1e-8 }
    }
}

/// Shrinking-theta delay-bound search.
///
/// Starting from theta = 1, shrinks theta geometrically; at each feasible
/// theta (service rate above arrival rate) takes delta on the constraint
/// boundary and keeps going while the product theta*delta improves. Returns
/// the last improving iterate.
pub fn algorithm1_delay_bound(
    x_d: &[u64],
    samples: &ServiceSampleSet,
    epsilon: f64,
    t_slot: f64,
    params: Algorithm1Params,
) -> Result<EnvelopeSolution, SncError> {
    assert!(params.delta_shrink > 0.0 && params.delta_shrink < 1.0);
    assert!(params.theta_min > 0.0);
    assert!(!x_d.is_empty());
    let hist = run_length(x_d);
    let mut theta_z = 1.0f64;
    let mut best: Option<EnvelopeSolution> = None;
    let mut y = 0.0f64;
    loop {
        theta_z *= params.delta_shrink;
        if theta_z < params.theta_min {
            return best.ok_or(SncError::NoStableBound { theta_min: params.theta_min });
        }
        let rho_a = arrival_rate_from_hist(&hist, x_d.len(), theta_z, t_slot);
        let rho_s = service_rate_param(samples, theta_z, t_slot);
        if rho_s <= rho_a {
            continue;
        }
        let delta_z = (rho_s - rho_a) / 2.0;
        let y_z = theta_z * delta_z;
        if y_z <= y {
            // Product stopped improving: the previous iterate is the answer.
            return best.ok_or(SncError::NoStableBound { theta_min: params.theta_min });
        }
        y = y_z;
        let w_bound = delay_bound_objective(theta_z, delta_z, samples, epsilon, t_slot);
        best = Some(EnvelopeSolution {
            theta: theta_z,
            delta: delta_z,
            rho_a,
            rho_s,
            w_bound,
        });
    }
}

/// Grid for the brute-force oracle.
#[derive(Debug, Clone, Copy)]
pub struct GridSpec {
    pub theta_points: usize,
    pub delta_points: usize,
    pub theta_min: f64,
    pub theta_max: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            theta_points: 200,
            delta_points: 200,
            theta_min: 1e-6,
            theta_max: 1.0,
        }
    }
}

fn grid_min_at_theta(
    theta: f64,
    hist: &[(u64, u32)],
    total: usize,
    samples: &ServiceSampleSet,
    epsilon: f64,
    t_slot: f64,
    delta_points: usize,
) -> f64 {
    let rho_a = arrival_rate_from_hist(hist, total, theta, t_slot);
    let ln_mgf = samples.log_neg_mgf(theta);
    let rho_s = -ln_mgf / (theta * t_slot);
    if rho_s <= rho_a {
        return f64::INFINITY;
    }
    let delta_max = (rho_s - rho_a) / 2.0;
    let mut min = f64::INFINITY;
    for j in 1..=delta_points {
        let delta = delta_max * j as f64 / delta_points as f64;
        let w = delay_bound_from_mgf(theta, delta, ln_mgf, epsilon, t_slot);
        if w < min {
            min = w;
        }
    }
    min
}

/// Exhaustive minimum of the objective over a log-spaced theta grid and a
/// per-theta linear delta grid over the feasible slab. `+inf` when no grid
/// point is feasible. Refining either grid 2x never increases the result
/// (the coarser grid points are a subset of the finer ones).
pub fn grid_oracle_delay_bound(
    x_d: &[u64],
    samples: &ServiceSampleSet,
    epsilon: f64,
    t_slot: f64,
    grid: &GridSpec,
) -> f64 {
    assert!(grid.theta_points >= 1 && grid.delta_points >= 1);
    let ln_lo = grid.theta_min.ln();
    let ln_hi = grid.theta_max.ln();
    let n = grid.theta_points;
    let theta_at = move |i: usize| (ln_hi + (ln_lo - ln_hi) * i as f64 / n as f64).exp();

    let hist = run_length(x_d);
    #[cfg(feature = "parallel")]
    {
        (0..=n)
            .into_par_iter()
            .map(|i| {
                grid_min_at_theta(theta_at(i), &hist, x_d.len(), samples, epsilon, t_slot, grid.delta_points)
            })
            .reduce(|| f64::INFINITY, f64::min)
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..=n)
            .map(|i| {
                grid_min_at_theta(theta_at(i), &hist, x_d.len(), samples, epsilon, t_slot, grid.delta_points)
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Sequential twin of [`grid_oracle_delay_bound`], kept for the benchmark
/// comparison regardless of the feature set.
pub fn grid_oracle_delay_bound_seq(
    x_d: &[u64],
    samples: &ServiceSampleSet,
    epsilon: f64,
    t_slot: f64,
    grid: &GridSpec,
) -> f64 {
    let ln_lo = grid.theta_min.ln();
    let ln_hi = grid.theta_max.ln();
    let n = grid.theta_points;
    let hist = run_length(x_d);
    (0..=n)
        .map(|i| {
            let theta = (ln_hi + (ln_lo - ln_hi) * i as f64 / n as f64).exp();
            grid_min_at_theta(theta, &hist, x_d.len(), samples, epsilon, t_slot, grid.delta_points)
        })
        .fold(f64::INFINITY, f64::min)
}
