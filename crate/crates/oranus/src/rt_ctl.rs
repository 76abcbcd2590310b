//! Per-TTI control: guaranteed-RB enforcement, EDF sharing of free RBs, and
//! the three-state anomaly-mitigation machine with donor/borrower
//! reallocation.

use crate::domain::{CellConfig, Packet, ServiceSpec};
use std::collections::VecDeque;

/// Transmission-queue pressure states.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FsmState {
    /// Baseline: the near-RT guarantee is enough.
    A,
    /// Head-of-line age very close to the budget; request one more RB per TTI.
    B,
    /// Intermediate hold: keep the current request.
    C,
}

/// Per-service RT controller state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RtServiceState {
    pub fsm: FsmState,
    /// Extra RBs requested while in B or C; zero in A.
    pub n_req: u32,
    /// Upper age threshold (TTIs): at or above it, escalate to B.
    pub q_u: u64,
    /// Lower age threshold (TTIs): below it, relax to A.
    pub q_l: u64,
}

impl RtServiceState {
    /// Thresholds derive from the budget: Q_T = floor(w_th / t_slot),
    /// q_u = floor(eta * Q_T), q_l = floor(tau * Q_T); q_u must exceed q_l.
    pub fn new(w_th: f64, t_slot: f64, eta: f64, tau: f64) -> Self {
        assert!(eta > 0.0 && eta <= 1.0 && tau > 0.0 && tau <= 1.0);
        let q_t = (w_th / t_slot).floor() as u64;
        let q_u = (eta * q_t as f64).floor() as u64;
        let q_l = (tau * q_t as f64).floor() as u64;
        assert!(q_u > q_l, "thresholds collapsed: q_u = {q_u}, q_l = {q_l} (Q_T = {q_t})");
        RtServiceState { fsm: FsmState::A, n_req: 0, q_u, q_l }
    }
}

/// One FSM transition. `q` is the head-of-line age in TTIs, `None` for an
/// empty queue (forces A). `n_req` growth is capped at `n_req_cap`.
pub fn fsm_step(state: &mut RtServiceState, q: Option<u64>, n_req_cap: u32) {
    let Some(q) = q else {
        state.fsm = FsmState::A;
        state.n_req = 0;
        return;
    };
    if q >= state.q_u {
        state.fsm = FsmState::B;
        state.n_req = (state.n_req + 1).min(n_req_cap);
    } else if q >= state.q_l {
        if state.fsm != FsmState::A {
            state.fsm = FsmState::C;
        }
        // In A with intermediate age: stay A, nothing requested yet.
    } else {
        state.fsm = FsmState::A;
        state.n_req = 0;
    }
}

/// Round-robin single-RB transfers from services in A (donors) to services
/// in B or C (borrowers). Preserves the total exactly; donors never drop
/// below 1 RB.
pub fn mitigate(states: &[RtServiceState], n_min: &[u32]) -> Vec<u32> {
    let mut n_min_i = n_min.to_vec();
    let mut donors: Vec<usize> = (0..states.len())
        .filter(|&m| states[m].fsm == FsmState::A)
        .collect();
    let borrowers: Vec<usize> = (0..states.len())
        .filter(|&m| states[m].fsm != FsmState::A)
        .collect();
    if donors.is_empty() || borrowers.is_empty() {
        return n_min_i;
    }
    let n_ite: u64 = borrowers.iter().map(|&m| states[m].n_req as u64).sum();
    let mut j_d = 0usize;
    let mut j_b = 0usize;
    let mut transfers = 0u64;
    while transfers < n_ite && !donors.is_empty() {
        let donor = donors[j_d];
        if n_min_i[donor] <= 1 {
            donors.remove(j_d);
            if !donors.is_empty() && j_d >= donors.len() {
                j_d = 0;
            }
            continue;
        }
        let borrower = borrowers[j_b];
        n_min_i[donor] -= 1;
        n_min_i[borrower] += 1;
        transfers += 1;
        j_d = (j_d + 1) % donors.len();
        j_b = (j_b + 1) % borrowers.len();
    }
    n_min_i
}

/// A packet sitting in a service's transmission queue, with the RBs it has
/// consumed so far.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueuedPacket {
    pub packet: Packet,
    pub rbs_consumed: u64,
}

/// A fully transmitted packet, for delay accounting and capacity sampling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompletedPacket {
    pub service_id: usize,
    pub size_bits: u64,
    pub arrival_tti: u64,
    pub completion_tti: u64,
    pub rbs_used: u64,
}

/// FIFO transmission queue of one service.
#[derive(Debug, Clone, Default)]
pub struct ServiceQueue {
    packets: VecDeque<QueuedPacket>,
}

impl ServiceQueue {
    pub fn push(&mut self, packet: Packet) {
        self.packets.push_back(QueuedPacket { packet, rbs_consumed: 0 });
    }

    pub fn is_empty(&self) -> bool {
        self.packets.is_empty()
    }

    pub fn len(&self) -> usize {
        self.packets.len()
    }

    pub fn enqueued_bits(&self) -> u64 {
        self.packets.iter().map(|p| p.packet.bits_remaining).sum()
    }

    /// Head-of-line age in TTIs at `tti`; `None` when empty.
    pub fn head_age(&self, tti: u64) -> Option<u64> {
        self.packets
            .front()
            .map(|p| tti.saturating_sub(p.packet.arrival_tti))
    }

    pub fn head_arrival(&self) -> Option<u64> {
        self.packets.front().map(|p| p.packet.arrival_tti)
    }

    /// RBs required to drain the whole queue.
    pub fn demand_rbs(&self) -> u64 {
        self.packets.iter().map(|p| p.packet.rbs_needed()).sum()
    }

    /// Consumes up to `grant` RBs from the head of the queue; packets whose
    /// last bit leaves now are returned with `completion_tti = tti`.
    pub fn transmit(&mut self, mut grant: u64, tti: u64) -> Vec<CompletedPacket> {
        let mut completed = Vec::new();
        while grant > 0 {
            let Some(head) = self.packets.front_mut() else { break };
            let need = head.packet.rbs_needed();
            let use_rbs = need.min(grant);
            grant -= use_rbs;
            head.rbs_consumed += use_rbs;
            let bits = use_rbs * head.packet.bits_per_rb;
            head.packet.bits_remaining = head.packet.bits_remaining.saturating_sub(bits);
            if head.packet.bits_remaining == 0 {
                let done = self.packets.pop_front().unwrap();
                completed.push(CompletedPacket {
                    service_id: done.packet.service_id,
                    size_bits: done.packet.size_bits,
                    arrival_tti: done.packet.arrival_tti,
                    completion_tti: tti,
                    rbs_used: done.rbs_consumed,
                });
            }
        }
        completed
    }
}

/// Read-only walk over a queue with some RBs already hypothetically spent,
/// used to plan EDF grants without touching the queue.
struct QueueCursor<'a> {
    queue: &'a ServiceQueue,
    idx: usize,
    head_rbs_left: u64,
}

impl<'a> QueueCursor<'a> {
    fn new(queue: &'a ServiceQueue, already_granted: u64) -> Self {
        let mut cursor = QueueCursor { queue, idx: 0, head_rbs_left: 0 };
        cursor.head_rbs_left = cursor.current_need();
        cursor.advance(already_granted);
        cursor
    }

    fn current_need(&self) -> u64 {
        self.queue
            .packets
            .get(self.idx)
            .map(|p| p.packet.rbs_needed())
            .unwrap_or(0)
    }

    fn backlogged(&self) -> bool {
        self.idx < self.queue.packets.len()
    }

    fn head_arrival(&self) -> Option<u64> {
        self.queue.packets.get(self.idx).map(|p| p.packet.arrival_tti)
    }

    fn advance(&mut self, mut rbs: u64) {
        while rbs > 0 && self.backlogged() {
            let used = self.head_rbs_left.min(rbs);
            self.head_rbs_left -= used;
            rbs -= used;
            if self.head_rbs_left == 0 {
                self.idx += 1;
                self.head_rbs_left = self.current_need();
            }
        }
    }
}

/// Shares free RBs by earliest head-of-line deadline (arrival time plus the
/// service budget), packet by packet; ties break toward the lower service
/// id. `already_granted` holds the guaranteed-phase grants.
pub fn edf_allocate_free(
    mut free_rbs: u64,
    queues: &[ServiceQueue],
    already_granted: &[u64],
    specs: &[ServiceSpec],
    t_slot: f64,
) -> Vec<u64> {
    let mut cursors: Vec<QueueCursor> = queues
        .iter()
        .zip(already_granted)
        .map(|(q, &g)| QueueCursor::new(q, g))
        .collect();
    let mut extra = vec![0u64; queues.len()];
    while free_rbs > 0 {
        let next = cursors
            .iter()
            .enumerate()
            .filter(|(_, c)| c.backlogged())
            .min_by(|(ia, a), (ib, b)| {
                let da = a.head_arrival().unwrap() as f64 * t_slot + specs[*ia].w_th;
                let db = b.head_arrival().unwrap() as f64 * t_slot + specs[*ib].w_th;
                da.partial_cmp(&db).unwrap().then(ia.cmp(ib))
            })
            .map(|(i, _)| i);
        let Some(m) = next else { break };
        // The granted packet has the minimum deadline among all backlogged
        // heads by construction of the selection above.
        let grant = cursors[m].head_rbs_left.min(free_rbs);
        cursors[m].advance(grant);
        extra[m] += grant;
        free_rbs -= grant;
    }
    extra
}

/// One RT tick: FSM updates, mitigation, guaranteed grants, then EDF over
/// the free RBs. Returns total grants per service; the caller applies them
/// to the queues.
pub fn rt_tick(
    queues: &[ServiceQueue],
    n_min: &[u32],
    states: &mut [RtServiceState],
    cell: &CellConfig,
    specs: &[ServiceSpec],
    tti: u64,
    mitigation: bool,
) -> Vec<u64> {
    let m = queues.len();
    for s in 0..m {
        fsm_step(&mut states[s], queues[s].head_age(tti), cell.n_cell_rb);
    }
    let n_min_i = if mitigation {
        mitigate(states, n_min)
    } else {
        n_min.to_vec()
    };
    let mut grants = vec![0u64; m];
    let mut used = 0u64;
    for s in 0..m {
        grants[s] = queues[s].demand_rbs().min(n_min_i[s] as u64);
        used += grants[s];
    }
    let free = (cell.n_cell_rb as u64).saturating_sub(used);
    let extra = edf_allocate_free(free, queues, &grants, specs, cell.t_slot);
    for s in 0..m {
        grants[s] += extra[s];
    }
    debug_assert!(grants.iter().sum::<u64>() <= cell.n_cell_rb as u64);
    grants
}
