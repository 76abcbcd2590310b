//! Deterministic TTI-loop engine binding traffic, the near-RT allocator,
//! and the per-TTI controller; implements the full scheme plus the three
//! reference disciplines and collects delay metrics.

use crate::domain::{validate_config, CellConfig, ConfigError, Packet, ServiceSpec, TrafficSource};
use crate::estimator::{
    percentiles_25_50_75, EmpiricalEstimator, EstimatorFeatures, MdnEstimator,
    MdnModel, PessimisticEstimator,
};
use crate::near_rt::{allocate_guaranteed, NearRtError};
use crate::rt_ctl::{edf_allocate_free, rt_tick, RtServiceState, ServiceQueue};
use crate::snc::Algorithm1Params;
use crate::trace_io::{gen_synthetic, group_ues, load_trace, window, ArrivalStream, History, TraceError};
use thiserror::Error;

/// Scheduling discipline under test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimMode {
    /// Guaranteed RBs + EDF sharing + anomaly mitigation.
    Oranus,
    /// Pure EDF over the whole cell, no guarantees, no near-RT logic.
    Ref1EdfOnly,
    /// Dedicated guaranteed RBs, no sharing, pessimistic availability.
    Ref2DedicatedSnc,
    /// Guarantees + EDF sharing, mitigation disabled.
    Ref3SncRtNoMitigation,
}

impl SimMode {
    pub fn name(&self) -> &'static str {
        match self {
            SimMode::Oranus => "oranus",
            SimMode::Ref1EdfOnly => "ref1_edf_only",
            SimMode::Ref2DedicatedSnc => "ref2_dedicated_snc",
            SimMode::Ref3SncRtNoMitigation => "ref3_snc_rt_no_mitigation",
        }
    }
}

/// How the near-RT controller obtains the free-RB availability PMF.
#[derive(Debug, Clone)]
pub enum EstimatorChoice {
    /// Assume no free RBs ever (most conservative).
    Pessimistic,
    /// Frequency counting over the run's own availability history.
    Empirical,
    /// Trained mixture density network fed live telemetry.
    Mdn(MdnModel),
}

/// RT FSM thresholds, scaled from each service's delay budget.
#[derive(Debug, Clone, Copy)]
pub struct FsmParams {
    pub eta: f64,
    pub tau: f64,
}

impl Default for FsmParams {
    fn default() -> Self {
        FsmParams { eta: 0.75, tau: 0.3 }
    }
}

/// One deterministic simulation run.
#[derive(Debug, Clone)]
pub struct SimRun {
    pub mode: SimMode,
    pub cell: CellConfig,
    pub specs: Vec<ServiceSpec>,
    /// Total TTIs; must cover warm-up plus one decision period.
    pub horizon: u64,
    pub seed: u64,
    pub estimator: EstimatorChoice,
    pub fsm: FsmParams,
}

/// One fully transmitted packet's delay accounting.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayRecord {
    pub service_id: usize,
    pub arrival_tti: u64,
    pub completion_tti: u64,
    /// (completion - arrival + 1) * t_slot; counts both edge TTIs.
    pub delay_s: f64,
    /// (delay - w_th) / w_th.
    pub excess_norm: f64,
}

/// Outcome of one near-RT decision point.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationEvent {
    pub tti: u64,
    pub n_min: Vec<u32>,
    /// Model delay bound per service in seconds at the committed allocation.
    pub w: Vec<f64>,
    pub objective: f64,
    /// False when the allocator reported no stable bound and the previous
    /// allocation was kept.
    pub feasible: bool,
}

/// Everything a run emits.
#[derive(Debug, Clone)]
pub struct RunMetrics {
    pub records: Vec<DelayRecord>,
    /// P[delay > w_th] per service; 0.0 with `no_records` set when a
    /// service completed nothing.
    pub violation: Vec<f64>,
    pub no_records: Vec<bool>,
    /// Fraction of cell RBs granted, one entry per TTI.
    pub rb_utilization: Vec<f64>,
    pub allocations: Vec<AllocationEvent>,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("trace: {0}")]
    Trace(#[from] TraceError),
    #[error("horizon {horizon} shorter than t_obs + t_out = {min}")]
    HorizonTooShort { horizon: u64, min: u64 },
    #[error("near-rt: {0}")]
    NearRt(#[from] NearRtError),
}

/// Fraction of records for `service` whose delay exceeds its budget.
/// Returns (0.0, true) when the service has no records.
pub fn violation_probability(records: &[DelayRecord], service: usize, w_th: f64) -> (f64, bool) {
    let mut total = 0u64;
    let mut over = 0u64;
    for r in records.iter().filter(|r| r.service_id == service) {
        total += 1;
        if r.delay_s > w_th {
            over += 1;
        }
    }
    if total == 0 {
        (0.0, true)
    } else {
        (over as f64 / total as f64, false)
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("no records to build a CCDF from")]
pub struct EmptyRecords;

/// Right-continuous empirical CCDF of the normalized excess: pairs
/// (x, P[X > x]) at each distinct sample value, ascending in x.
pub fn ccdf(records: &[DelayRecord]) -> Result<Vec<(f64, f64)>, EmptyRecords> {
    if records.is_empty() {
        return Err(EmptyRecords);
    }
    let mut xs: Vec<f64> = records.iter().map(|r| r.excess_norm).collect();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    let mut i = 0usize;
    while i < xs.len() {
        let x = xs[i];
        let mut j = i;
        while j < xs.len() && xs[j] == x {
            j += 1;
        }
        out.push((x, (xs.len() - j) as f64 / n));
        i = j;
    }
    Ok(out)
}

fn arrivals_for_service(spec: &ServiceSpec, horizon: u64, seed: u64) -> Result<ArrivalStream, TraceError> {
    match &spec.source {
        TrafficSource::Synthetic(params) => {
            let sub_seed = seed ^ (spec.id as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            gen_synthetic(params, horizon, sub_seed)
        }
        TrafficSource::Trace { path } => {
            let records = load_trace(std::path::Path::new(path))?;
            let mut stream = group_ues(&records, 1)?.remove(0);
            // Tile shorter traces to cover the horizon.
            let len = stream.bits_per_tti.len();
            for t in len..horizon as usize {
                stream.bits_per_tti.push(stream.bits_per_tti[t % len]);
                stream.packets_per_tti.push(stream.packets_per_tti[t % len].clone());
            }
            stream.bits_per_tti.truncate(horizon as usize);
            stream.packets_per_tti.truncate(horizon as usize);
            Ok(stream)
        }
    }
}

struct Telemetry {
    /// Per-service series over the trailing decision period.
    grants: Vec<Vec<u64>>,
    enqueued_bits: Vec<Vec<u64>>,
    cap: usize,
}

impl Telemetry {
    fn new(m: usize, cap: usize) -> Self {
        Telemetry {
            grants: vec![Vec::new(); m],
            enqueued_bits: vec![Vec::new(); m],
            cap,
        }
    }

    fn push(&mut self, service: usize, grant: u64, enqueued: u64) {
        let g = &mut self.grants[service];
        g.push(grant);
        if g.len() > self.cap {
            g.remove(0);
        }
        let e = &mut self.enqueued_bits[service];
        e.push(enqueued);
        if e.len() > self.cap {
            e.remove(0);
        }
    }

    fn features(&self, history: &[History], n_cell_rb: u32, n_min: &[u32]) -> EstimatorFeatures {
        let m = self.grants.len();
        let mut mean_rb_util = Vec::with_capacity(m);
        let mut incoming_pct = Vec::with_capacity(m);
        let mut enqueued_pct = Vec::with_capacity(m);
        for s in 0..m {
            let g = &self.grants[s];
            let mean = if g.is_empty() {
                0.0
            } else {
                g.iter().sum::<u64>() as f64 / g.len() as f64 / n_cell_rb as f64
            };
            mean_rb_util.push(mean);
            let tail = history[s].bits_in.len().saturating_sub(self.cap);
            incoming_pct.push(percentiles_25_50_75(&history[s].bits_in[tail..]));
            enqueued_pct.push(percentiles_25_50_75(&self.enqueued_bits[s]));
        }
        EstimatorFeatures {
            mean_rb_util,
            incoming_pct,
            enqueued_pct,
            candidate_n_min: n_min.iter().map(|&n| n as f64).collect(),
        }
    }
}

/// Runs a plain EDF drain over `spec.horizon` TTIs and returns the trailing
/// `t_obs`-TTI sample window per service; used by offline allocator studies
/// that need realistic windows without a full controlled run.
pub fn collect_windows(spec: &SimRun) -> Result<Vec<crate::trace_io::SampleWindow>, SimError> {
    validate_config(&spec.cell, &spec.specs)?;
    if spec.horizon < spec.cell.t_obs {
        return Err(SimError::HorizonTooShort {
            horizon: spec.horizon,
            min: spec.cell.t_obs,
        });
    }
    let m = spec.specs.len();
    let streams: Vec<ArrivalStream> = spec
        .specs
        .iter()
        .map(|s| arrivals_for_service(s, spec.horizon, spec.seed))
        .collect::<Result<_, _>>()?;
    let mut queues: Vec<ServiceQueue> = (0..m).map(|_| ServiceQueue::default()).collect();
    let mut history: Vec<History> = (0..m).map(|_| History::default()).collect();
    for tti in 0..spec.horizon {
        let mut bits_in = vec![0u64; m];
        for s in 0..m {
            for p in &streams[s].packets_per_tti[tti as usize] {
                queues[s].push(Packet::new(s, p.size_bits, tti, p.bits_per_rb));
                bits_in[s] += p.size_bits;
            }
        }
        let zeros = vec![0u64; m];
        let grants = edf_allocate_free(
            spec.cell.n_cell_rb as u64,
            &queues,
            &zeros,
            &spec.specs,
            spec.cell.t_slot,
        );
        for s in 0..m {
            let completed = queues[s].transmit(grants[s], tti);
            let pairs = completed.iter().map(|c| (c.size_bits, c.rbs_used)).collect();
            history[s].push_tti(bits_in[s], pairs);
        }
    }
    (0..m)
        .map(|s| window(&history[s], s, spec.horizon - 1, spec.cell.t_obs).map_err(Into::into))
        .collect()
}

/// Executes the run TTI by TTI. Same input, same output, bit for bit.
pub fn run(spec: &SimRun) -> Result<RunMetrics, SimError> {
    validate_config(&spec.cell, &spec.specs)?;
    let min_horizon = spec.cell.t_obs + spec.cell.t_out;
    if spec.horizon < min_horizon {
        return Err(SimError::HorizonTooShort { horizon: spec.horizon, min: min_horizon });
    }
    let m = spec.specs.len();
    let cell = &spec.cell;

    let streams: Vec<ArrivalStream> = spec
        .specs
        .iter()
        .map(|s| arrivals_for_service(s, spec.horizon, spec.seed))
        .collect::<Result<_, _>>()?;

    let mut queues: Vec<ServiceQueue> = (0..m).map(|_| ServiceQueue::default()).collect();
    let mut states: Vec<RtServiceState> = spec
        .specs
        .iter()
        .map(|s| RtServiceState::new(s.w_th, cell.t_slot, spec.fsm.eta, spec.fsm.tau))
        .collect();
    let mut history: Vec<History> = (0..m).map(|_| History::default()).collect();
    let mut telemetry = Telemetry::new(m, cell.t_out as usize);
    let mut empirical = EmpiricalEstimator::new(m);

    // Warm-up allocation: equal split (remainder to the first services)
    // until the first full window exists.
    let warm_base = cell.n_cell_rb / m as u32;
    let warm_rem = cell.n_cell_rb as usize % m;
    let mut n_min: Vec<u32> = (0..m).map(|i| warm_base + u32::from(i < warm_rem)).collect();
    let mut records: Vec<DelayRecord> = Vec::new();
    let mut rb_utilization: Vec<f64> = Vec::with_capacity(spec.horizon as usize);
    let mut allocations: Vec<AllocationEvent> = Vec::new();

    let needs_near_rt = spec.mode != SimMode::Ref1EdfOnly;
    let alg1 = Algorithm1Params::default();

    for tti in 0..spec.horizon {
        // 1. Arrivals enter the transmission queues.
        let mut bits_in = vec![0u64; m];
        for s in 0..m {
            for p in &streams[s].packets_per_tti[tti as usize] {
                queues[s].push(Packet::new(s, p.size_bits, tti, p.bits_per_rb));
                bits_in[s] += p.size_bits;
            }
        }

        // 2. Near-RT decision every t_out TTIs once a full window exists.
        if needs_near_rt && tti >= cell.t_obs && tti % cell.t_out == 0 {
            let windows: Vec<_> = (0..m)
                .map(|s| window(&history[s], s, tti - 1, cell.t_obs))
                .collect::<Result<_, _>>()?;
            let features = telemetry.features(&history, cell.n_cell_rb, &n_min);
            let outcome = match (&spec.estimator, spec.mode) {
                // The no-sharing discipline never sees free RBs.
                (_, SimMode::Ref2DedicatedSnc) => allocate_guaranteed(
                    &windows, &PessimisticEstimator, cell, &spec.specs, alg1,
                ),
                (EstimatorChoice::Pessimistic, _) => allocate_guaranteed(
                    &windows, &PessimisticEstimator, cell, &spec.specs, alg1,
                ),
                (EstimatorChoice::Empirical, _) => {
                    allocate_guaranteed(&windows, &empirical, cell, &spec.specs, alg1)
                }
                (EstimatorChoice::Mdn(model), _) => {
                    let est = MdnEstimator { model: model.clone(), telemetry: features };
                    allocate_guaranteed(&windows, &est, cell, &spec.specs, alg1)
                }
            };
            match outcome {
                Ok(alloc) => {
                    allocations.push(AllocationEvent {
                        tti,
                        n_min: alloc.n_min.clone(),
                        w: alloc.w.clone(),
                        objective: alloc.objective,
                        feasible: true,
                    });
                    n_min = alloc.n_min;
                }
                Err(NearRtError::Infeasible) => {
                    // Keep the previous allocation and note the miss.
                    allocations.push(AllocationEvent {
                        tti,
                        n_min: n_min.clone(),
                        w: vec![f64::INFINITY; m],
                        objective: f64::INFINITY,
                        feasible: false,
                    });
                }
                Err(e) => return Err(e.into()),
            }
        }

        // 3. Per-TTI grants under the selected discipline.
        let grants: Vec<u64> = match spec.mode {
            SimMode::Oranus => {
                rt_tick(&queues, &n_min, &mut states, cell, &spec.specs, tti, true)
            }
            SimMode::Ref3SncRtNoMitigation => {
                rt_tick(&queues, &n_min, &mut states, cell, &spec.specs, tti, false)
            }
            SimMode::Ref1EdfOnly => {
                let zeros = vec![0u64; m];
                edf_allocate_free(
                    cell.n_cell_rb as u64,
                    &queues,
                    &zeros,
                    &spec.specs,
                    cell.t_slot,
                )
            }
            SimMode::Ref2DedicatedSnc => (0..m)
                .map(|s| queues[s].demand_rbs().min(n_min[s] as u64))
                .collect(),
        };

        // 4. Transmission and delay recording.
        let mut used = 0u64;
        for s in 0..m {
            used += grants[s];
            let completed = queues[s].transmit(grants[s], tti);
            let mut pairs = Vec::with_capacity(completed.len());
            for c in &completed {
                let delay_s = (c.completion_tti - c.arrival_tti + 1) as f64 * cell.t_slot;
                records.push(DelayRecord {
                    service_id: s,
                    arrival_tti: c.arrival_tti,
                    completion_tti: c.completion_tti,
                    delay_s,
                    excess_norm: (delay_s - spec.specs[s].w_th) / spec.specs[s].w_th,
                });
                pairs.push((c.size_bits, c.rbs_used));
            }
            history[s].push_tti(bits_in[s], pairs);
            telemetry.push(s, grants[s], queues[s].enqueued_bits());
            // Availability history: extra RBs actually obtained beyond the
            // guarantee whenever demand exceeded it.
            let extra = grants[s].saturating_sub(n_min[s] as u64);
            empirical.record(s, extra.min(u32::MAX as u64) as u32);
        }
        rb_utilization.push(used as f64 / cell.n_cell_rb as f64);
    }

    let mut violation = Vec::with_capacity(m);
    let mut no_records = Vec::with_capacity(m);
    for s in 0..m {
        let (v, none) = violation_probability(&records, s, spec.specs[s].w_th);
        violation.push(v);
        no_records.push(none);
    }

    Ok(RunMetrics { records, violation, no_records, rb_utilization, allocations })
}
