//! Estimation of the extra-RB availability PMF per service: a pessimistic
//! fallback, an empirical frequency counter, and a from-scratch mixture
//! density network.

pub mod mdn;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

pub use mdn::{mdn_train, MdnError, MdnHyperparams, MdnModel, TrainSample};

/// One Gaussian mixture component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmmComponent {
    pub weight: f64,
    pub mean: f64,
    pub stddev: f64,
}

/// Mixture parameters for one service.
pub type GmmParams = Vec<GmmComponent>;

pub fn gmm_is_valid(gmm: &GmmParams) -> bool {
    let sum: f64 = gmm.iter().map(|c| c.weight).sum();
    (sum - 1.0).abs() <= 1e-9 && gmm.iter().all(|c| c.weight >= 0.0 && c.stddev > 0.0)
}

/// Discretizes a GMM into a PMF over extra-RB regions 0..=n_add.
///
/// Interior region n integrates [n-0.5, n+0.5]; the first and last regions
/// fold the left and right tails, so the result sums to 1 exactly.
pub fn region_probabilities(gmm: &GmmParams, n_add: usize) -> Vec<f64> {
    debug_assert!(gmm_is_valid(gmm));
    if n_add == 0 {
        return vec![1.0];
    }
    let mut pi = vec![0.0f64; n_add + 1];
    for comp in gmm {
        if comp.weight == 0.0 {
            continue;
        }
        let normal = Normal::new(comp.mean, comp.stddev).expect("stddev > 0");
        let mut lower_cdf = 0.0; // CDF at the previous boundary; -inf folds to 0
        for (n, slot) in pi.iter_mut().enumerate() {
            let upper_cdf = if n == n_add {
                1.0
            } else {
                normal.cdf(n as f64 + 0.5)
            };
            *slot += comp.weight * (upper_cdf - lower_cdf);
            lower_cdf = upper_cdf;
        }
    }
    pi
}

/// Frequency-count PMF over a history of observed extra-RB availability,
/// restricted to TTIs where the service's demand exceeded its guarantee.
/// Empty history falls back to the pessimistic point mass at zero.
pub fn empirical_pi(history: &[u32], n_add: usize) -> Vec<f64> {
    let mut pi = vec![0.0f64; n_add + 1];
    if history.is_empty() {
        pi[0] = 1.0;
        return pi;
    }
    let inc = 1.0 / history.len() as f64;
    for &extra in history {
        pi[(extra as usize).min(n_add)] += inc;
    }
    pi
}

/// Point mass at zero extra RBs: the service never sees more than its
/// guarantee.
pub fn pessimistic_pi(n_add: usize) -> Vec<f64> {
    let mut pi = vec![0.0f64; n_add + 1];
    pi[0] = 1.0;
    pi
}

/// One interface for every PMF source the near-RT controller accepts.
pub trait RbEstimator: Sync {
    /// PMF over extra RBs 0..=n_add for `service`, given the candidate
    /// guaranteed allocation for the next period.
    fn pi(&self, service: usize, candidate_n_min: &[u32], n_add: usize) -> Vec<f64>;
}

/// Always assumes no free RBs will be available.
#[derive(Debug, Clone, Default)]
pub struct PessimisticEstimator;

impl RbEstimator for PessimisticEstimator {
    fn pi(&self, _service: usize, _candidate: &[u32], n_add: usize) -> Vec<f64> {
        pessimistic_pi(n_add)
    }
}

/// Frequency counting over per-service availability histories collected by
/// the simulator.
#[derive(Debug, Clone, Default)]
pub struct EmpiricalEstimator {
    histories: Vec<Vec<u32>>,
}

impl EmpiricalEstimator {
    pub fn new(n_services: usize) -> Self {
        EmpiricalEstimator { histories: vec![Vec::new(); n_services] }
    }

    pub fn record(&mut self, service: usize, extra_rbs: u32) {
        self.histories[service].push(extra_rbs);
    }

    pub fn history(&self, service: usize) -> &[u32] {
        &self.histories[service]
    }
}

impl RbEstimator for EmpiricalEstimator {
    fn pi(&self, service: usize, _candidate: &[u32], n_add: usize) -> Vec<f64> {
        empirical_pi(&self.histories[service], n_add)
    }
}

/// Telemetry snapshot the MDN consumes: one 8-value block per service.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorFeatures {
    /// Mean RB utilization over the last decision period, per service.
    pub mean_rb_util: Vec<f64>,
    /// (p25, p50, p75) of incoming bits per TTI, per service.
    pub incoming_pct: Vec<[f64; 3]>,
    /// (p25, p50, p75) of enqueued bits per TTI, per service.
    pub enqueued_pct: Vec<[f64; 3]>,
    /// Candidate guaranteed RBs for the next period, per service.
    pub candidate_n_min: Vec<f64>,
}

impl EstimatorFeatures {
    pub fn flatten(&self) -> Vec<f64> {
        let m = self.mean_rb_util.len();
        let mut out = Vec::with_capacity(8 * m);
        for s in 0..m {
            out.push(self.mean_rb_util[s]);
            out.extend_from_slice(&self.incoming_pct[s]);
            out.extend_from_slice(&self.enqueued_pct[s]);
            out.push(self.candidate_n_min[s]);
        }
        out
    }
}

/// Fixed-telemetry MDN adapter: the candidate allocation is patched into the
/// feature vector at query time.
pub struct MdnEstimator {
    pub model: MdnModel,
    pub telemetry: EstimatorFeatures,
}

impl RbEstimator for MdnEstimator {
    fn pi(&self, service: usize, candidate: &[u32], n_add: usize) -> Vec<f64> {
        let mut features = self.telemetry.clone();
        for (dst, &c) in features.candidate_n_min.iter_mut().zip(candidate) {
            *dst = c as f64;
        }
        let gmms = self
            .model
            .forward(&features.flatten())
            .expect("telemetry shape matches the model");
        region_probabilities(&gmms[service], n_add)
    }
}

/// Linear-interpolation percentile over raw samples; used to build
/// [`EstimatorFeatures`] from histories.
pub fn percentiles_25_50_75(samples: &[u64]) -> [f64; 3] {
    if samples.is_empty() {
        return [0.0; 3];
    }
    let mut sorted: Vec<u64> = samples.to_vec();
    sorted.sort_unstable();
    let pick = |q: f64| -> f64 {
        let pos = q * (sorted.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        let frac = pos - lo as f64;
        sorted[lo] as f64 * (1.0 - frac) + sorted[hi] as f64 * frac
    };
    [pick(0.25), pick(0.50), pick(0.75)]
}
