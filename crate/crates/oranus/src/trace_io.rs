//! Trace ingestion, UE grouping, synthetic traffic generation, and rolling
//! observation windows.
//!
//! The canonical trace format is CSV with header `tti,ue_id,bits,rbs`,
//! LF line endings, base-10 integers. Raw FALCON-style dumps are converted
//! once via [`convert_raw_trace`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::Path;
use thiserror::Error;

/// One decoded scheduling record: what a UE received in one TTI.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRecord {
    pub tti: u64,
    pub ue_id: u64,
    pub bits: u64,
    /// RBs the real scheduler used; 0 if unknown.
    pub rbs: u32,
}

/// A packet arrival produced by a trace or a synthetic generator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArrivalPacket {
    pub size_bits: u64,
    pub bits_per_rb: u64,
}

/// Per-service arrival stream: incoming bits per TTI plus the packets that
/// carry them.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ArrivalStream {
    pub bits_per_tti: Vec<u64>,
    pub packets_per_tti: Vec<Vec<ArrivalPacket>>,
}

impl ArrivalStream {
    pub fn len(&self) -> usize {
        self.bits_per_tti.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits_per_tti.is_empty()
    }
}

/// Rolling per-service history: incoming bits per TTI and packets fully
/// transmitted per TTI (size, RBs used). Fed by the simulator or inferred
/// from trace `rbs` columns.
#[derive(Debug, Clone, Default)]
pub struct History {
    pub bits_in: Vec<u64>,
    /// Per TTI: (size_bits, rbs_used) of packets whose last bit left then.
    pub completed: Vec<Vec<(u64, u64)>>,
}

impl History {
    pub fn push_tti(&mut self, bits_in: u64, completed: Vec<(u64, u64)>) {
        self.bits_in.push(bits_in);
        self.completed.push(completed);
    }
}

/// The empirical vectors the SNC model consumes: incoming bits over the last
/// `t_obs` TTIs and the packets fully transmitted within them.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleWindow {
    pub service_id: usize,
    pub x_d: Vec<u64>,
    /// (size_bits, rbs_used) per packet, transmission order.
    pub packets: Vec<(u64, u64)>,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("trace contains no records")]
    EmptyTrace,
    #[error("need at least {needed} distinct UEs, trace has {got}")]
    TooFewUes { needed: usize, got: usize },
    #[error("bad generator params: {0}")]
    BadGeneratorParams(String),
    #[error("insufficient history: end_tti {end_tti} < t_obs-1 = {}", t_obs - 1)]
    InsufficientHistory { end_tti: u64, t_obs: u64 },
}

/// Loads a canonical trace CSV. Records come back sorted by (tti, ue_id);
/// TTI gaps are legal and mean zero arrivals.
pub fn load_trace(path: &Path) -> Result<Vec<TraceRecord>, TraceError> {
    let file = std::fs::File::open(path)?;
    parse_trace(std::io::BufReader::new(file))
}

pub fn parse_trace<R: BufRead>(reader: R) -> Result<Vec<TraceRecord>, TraceError> {
    let mut records = Vec::new();
    let mut lines = reader.lines().enumerate();
    let header = match lines.next() {
        Some((_, line)) => line?,
        None => return Err(TraceError::EmptyTrace),
    };
    if header.trim() != "tti,ue_id,bits,rbs" {
        return Err(TraceError::Parse {
            line: 1,
            reason: format!("expected header `tti,ue_id,bits,rbs`, got `{}`", header.trim()),
        });
    }
    for (idx, line) in lines {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let mut fields = trimmed.split(',');
        let mut next_num = |name: &str| -> Result<u64, TraceError> {
            let raw = fields.next().ok_or_else(|| TraceError::Parse {
                line: lineno,
                reason: format!("missing field `{name}`"),
            })?;
            raw.trim().parse().map_err(|_| TraceError::Parse {
                line: lineno,
                reason: format!("non-numeric `{name}` field: `{raw}`"),
            })
        };
        let tti = next_num("tti")?;
        let ue_id = next_num("ue_id")?;
        let bits = next_num("bits")?;
        let rbs = next_num("rbs")? as u32;
        records.push(TraceRecord { tti, ue_id, bits, rbs });
    }
    if records.is_empty() {
        return Err(TraceError::EmptyTrace);
    }
    records.sort_by_key(|r| (r.tti, r.ue_id));
    Ok(records)
}

/// Converts a raw FALCON-style dump (whitespace- or semicolon-separated
/// columns `subframe rnti tbs_bits prbs`, no header) into the canonical CSV.
pub fn convert_raw_trace<R: BufRead, W: std::io::Write>(
    reader: R,
    writer: &mut W,
) -> Result<usize, TraceError> {
    writeln!(writer, "tti,ue_id,bits,rbs")?;
    let mut count = 0usize;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed
            .split(|c: char| c.is_whitespace() || c == ';' || c == ',')
            .filter(|s| !s.is_empty())
            .collect();
        if fields.len() < 4 {
            return Err(TraceError::Parse {
                line: idx + 1,
                reason: format!("expected 4 columns, got {}", fields.len()),
            });
        }
        let parse = |raw: &str, name: &str| -> Result<u64, TraceError> {
            raw.parse().map_err(|_| TraceError::Parse {
                line: idx + 1,
                reason: format!("non-numeric `{name}` field: `{raw}`"),
            })
        };
        let tti = parse(fields[0], "subframe")?;
        let ue = parse(fields[1], "rnti")?;
        let bits = parse(fields[2], "tbs_bits")?;
        let rbs = parse(fields[3], "prbs")?;
        writeln!(writer, "{tti},{ue},{bits},{rbs}")?;
        count += 1;
    }
    if count == 0 {
        return Err(TraceError::EmptyTrace);
    }
    Ok(count)
}

/// Splits UEs into `n_services` contiguous groups ordered by descending total
/// traffic volume; remainder UEs go to the last group. Each service's
/// per-TTI bits is the sum over its UEs.
pub fn group_ues(
    records: &[TraceRecord],
    n_services: usize,
) -> Result<Vec<ArrivalStream>, TraceError> {
    assert!(n_services >= 1, "n_services must be >= 1");
    let mut totals: BTreeMap<u64, u64> = BTreeMap::new();
    for r in records {
        *totals.entry(r.ue_id).or_default() += r.bits;
    }
    if totals.len() < n_services {
        return Err(TraceError::TooFewUes {
            needed: n_services,
            got: totals.len(),
        });
    }
    // Descending volume, ue_id breaks ties for a stable order.
    let mut ues: Vec<(u64, u64)> = totals.into_iter().collect();
    ues.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));

    let group_size = ues.len() / n_services;
    let mut ue_to_service: BTreeMap<u64, usize> = BTreeMap::new();
    for (rank, (ue, _)) in ues.iter().enumerate() {
        let svc = (rank / group_size).min(n_services - 1);
        ue_to_service.insert(*ue, svc);
    }

    let horizon = records.iter().map(|r| r.tti).max().unwrap_or(0) as usize + 1;
    let mut streams = vec![
        ArrivalStream {
            bits_per_tti: vec![0; horizon],
            packets_per_tti: vec![Vec::new(); horizon],
        };
        n_services
    ];
    for r in records {
        if r.bits == 0 {
            continue;
        }
        let svc = ue_to_service[&r.ue_id];
        let stream = &mut streams[svc];
        let tti = r.tti as usize;
        stream.bits_per_tti[tti] += r.bits;
        // One RB carries bits/rbs when the real scheduler's RB count is
        // known, otherwise the packet is assumed to fit one RB.
        let bits_per_rb = if r.rbs > 0 {
            (r.bits / r.rbs as u64).max(1)
        } else {
            r.bits
        };
        stream.packets_per_tti[tti].push(ArrivalPacket {
            size_bits: r.bits,
            bits_per_rb,
        });
    }
    Ok(streams)
}

/// Discrete per-packet channel table: each transmitted packet draws its
/// bits-per-RB value from this distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelEntry {
    pub bits_per_rb: u64,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "gen", rename_all = "snake_case")]
pub enum GeneratorKind {
    /// `bits` arrive every TTI.
    Constant { bits: u64 },
    /// Poisson number of packets per TTI with mean `lambda`.
    PoissonBatch { lambda: f64 },
    /// Two-state Markov source: `p_on` = P(off -> on), `p_off` = P(on -> off),
    /// `bits` arrive per TTI while on. Starts off.
    OnOff { p_on: f64, p_off: f64, bits: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    #[serde(flatten)]
    pub kind: GeneratorKind,
    pub pkt_size: u64,
    /// Defaults to every packet carrying `pkt_size` bits per RB.
    #[serde(default)]
    pub channel: Vec<ChannelEntry>,
}

impl GeneratorParams {
    pub fn constant(bits: u64, pkt_size: u64) -> Self {
        GeneratorParams {
            kind: GeneratorKind::Constant { bits },
            pkt_size,
            channel: Vec::new(),
        }
    }

    fn validate(&self) -> Result<(), TraceError> {
        if self.pkt_size == 0 {
            return Err(TraceError::BadGeneratorParams("pkt_size must be >= 1".into()));
        }
        match &self.kind {
            GeneratorKind::Constant { .. } => {}
            GeneratorKind::PoissonBatch { lambda } => {
                if !(*lambda >= 0.0 && lambda.is_finite()) {
                    return Err(TraceError::BadGeneratorParams(format!(
                        "lambda must be finite and >= 0, got {lambda}"
                    )));
                }
            }
            GeneratorKind::OnOff { p_on, p_off, .. } => {
                for (name, p) in [("p_on", p_on), ("p_off", p_off)] {
                    if !(0.0..=1.0).contains(p) {
                        return Err(TraceError::BadGeneratorParams(format!(
                            "{name} must be in [0,1], got {p}"
                        )));
                    }
                }
            }
        }
        if !self.channel.is_empty() {
            let total: f64 = self.channel.iter().map(|e| e.prob).sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(TraceError::BadGeneratorParams(format!(
                    "channel probabilities sum to {total}, expected 1"
                )));
            }
            if self.channel.iter().any(|e| e.bits_per_rb == 0 || e.prob < 0.0) {
                return Err(TraceError::BadGeneratorParams(
                    "channel entries need bits_per_rb >= 1 and prob >= 0".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Deterministic synthetic arrivals: same params + seed give a bit-identical
/// stream.
pub fn gen_synthetic(
    params: &GeneratorParams,
    n_ttis: u64,
    seed: u64,
) -> Result<ArrivalStream, TraceError> {
    params.validate()?;
    assert!(n_ttis >= 1, "n_ttis must be >= 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stream = ArrivalStream {
        bits_per_tti: Vec::with_capacity(n_ttis as usize),
        packets_per_tti: Vec::with_capacity(n_ttis as usize),
    };
    let mut on = false;
    for _ in 0..n_ttis {
        let bits = match &params.kind {
            GeneratorKind::Constant { bits } => *bits,
            GeneratorKind::PoissonBatch { lambda } => {
                sample_poisson(&mut rng, *lambda) * params.pkt_size
            }
            GeneratorKind::OnOff { p_on, p_off, bits } => {
                if on {
                    if rng.gen::<f64>() < *p_off {
                        on = false;
                    }
                } else if rng.gen::<f64>() < *p_on {
                    on = true;
                }
                if on {
                    *bits
                } else {
                    0
                }
            }
        };
        let mut packets = Vec::new();
        let mut remaining = bits;
        while remaining > 0 {
            let size = remaining.min(params.pkt_size);
            packets.push(ArrivalPacket {
                size_bits: size,
                bits_per_rb: sample_channel(&mut rng, params, size),
            });
            remaining -= size;
        }
        stream.bits_per_tti.push(bits);
        stream.packets_per_tti.push(packets);
    }
    Ok(stream)
}

fn sample_channel<R: Rng>(rng: &mut R, params: &GeneratorParams, pkt_size: u64) -> u64 {
    if params.channel.is_empty() {
        return pkt_size;
    }
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for entry in &params.channel {
        acc += entry.prob;
        if u < acc {
            return entry.bits_per_rb;
        }
    }
    params.channel.last().unwrap().bits_per_rb
}

// Knuth inversion; lambda is small (packets per TTI) in every scenario here.
fn sample_poisson<R: Rng>(rng: &mut R, lambda: f64) -> u64 {
    if lambda == 0.0 {
        return 0;
    }
    let limit = (-lambda).exp();
    let mut k = 0u64;
    let mut p = 1.0;
    loop {
        p *= rng.gen::<f64>();
        if p <= limit {
            return k;
        }
        k += 1;
    }
}

/// Returns exactly the last `t_obs` TTIs of arrivals and the packets fully
/// transmitted within them.
pub fn window(
    history: &History,
    service_id: usize,
    end_tti: u64,
    t_obs: u64,
) -> Result<SampleWindow, TraceError> {
    if end_tti + 1 < t_obs || (end_tti as usize) >= history.bits_in.len() {
        return Err(TraceError::InsufficientHistory { end_tti, t_obs });
    }
    let start = (end_tti + 1 - t_obs) as usize;
    let end = end_tti as usize + 1;
    let x_d = history.bits_in[start..end].to_vec();
    let packets = history.completed[start..end]
        .iter()
        .flatten()
        .copied()
        .collect();
    Ok(SampleWindow {
        service_id,
        x_d,
        packets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn parses_simple_trace() {
        let csv = "tti,ue_id,bits,rbs\n0,1,120,3\n0,2,80,2\n";
        let records = parse_trace(Cursor::new(csv)).unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(records[0], TraceRecord { tti: 0, ue_id: 1, bits: 120, rbs: 3 });
    }

    #[test]
    fn non_numeric_field_reports_line() {
        let csv = "tti,ue_id,bits,rbs\n0,1,120,3\n1,2,oops,2\n";
        match parse_trace(Cursor::new(csv)) {
            Err(TraceError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn empty_trace_detected() {
        assert!(matches!(
            parse_trace(Cursor::new("tti,ue_id,bits,rbs\n")),
            Err(TraceError::EmptyTrace)
        ));
        assert!(matches!(parse_trace(Cursor::new("")), Err(TraceError::EmptyTrace)));
    }

    fn rec(tti: u64, ue_id: u64, bits: u64) -> TraceRecord {
        TraceRecord { tti, ue_id, bits, rbs: 1 }
    }

    #[test]
    fn groups_six_ues_into_three_pairs() {
        let records: Vec<TraceRecord> = (1..=6).map(|ue| rec(0, ue, ue * 10)).collect();
        let streams = group_ues(&records, 3).unwrap();
        assert_eq!(streams.len(), 3);
        // UEs sorted descending: 6,5 | 4,3 | 2,1.
        assert_eq!(streams[0].bits_per_tti[0], 110);
        assert_eq!(streams[1].bits_per_tti[0], 70);
        assert_eq!(streams[2].bits_per_tti[0], 30);
    }

    #[test]
    fn single_ue_single_service_is_identity() {
        let records = vec![rec(0, 1, 100), rec(2, 1, 50)];
        let streams = group_ues(&records, 1).unwrap();
        assert_eq!(streams[0].bits_per_tti, vec![100, 0, 50]);
    }

    #[test]
    fn remainder_ues_go_to_last_group() {
        let records: Vec<TraceRecord> = (1..=7).map(|ue| rec(0, ue, ue)).collect();
        let streams = group_ues(&records, 3).unwrap();
        let counts: Vec<usize> = streams.iter().map(|s| s.packets_per_tti[0].len()).collect();
        assert_eq!(counts, vec![2, 2, 3]);
    }

    #[test]
    fn too_few_ues_rejected() {
        let records = vec![rec(0, 1, 100)];
        assert!(matches!(
            group_ues(&records, 2),
            Err(TraceError::TooFewUes { needed: 2, got: 1 })
        ));
    }

    #[test]
    fn grouping_conserves_bits_per_tti() {
        let records = vec![
            rec(0, 1, 100),
            rec(0, 2, 30),
            rec(1, 3, 70),
            rec(1, 1, 5),
            rec(3, 4, 11),
        ];
        let streams = group_ues(&records, 2).unwrap();
        for tti in 0..4usize {
            let total: u64 = records.iter().filter(|r| r.tti == tti as u64).map(|r| r.bits).sum();
            let split: u64 = streams.iter().map(|s| s.bits_per_tti[tti]).sum();
            assert_eq!(total, split, "tti {tti}");
        }
    }

    #[test]
    fn constant_generator_is_constant() {
        let stream = gen_synthetic(&GeneratorParams::constant(100, 100), 5, 1).unwrap();
        assert_eq!(stream.bits_per_tti, vec![100; 5]);
        assert!(stream.packets_per_tti.iter().all(|p| p.len() == 1));
    }

    #[test]
    fn poisson_mean_matches_analytic() {
        let params = GeneratorParams {
            kind: GeneratorKind::PoissonBatch { lambda: 2.0 },
            pkt_size: 100,
            channel: Vec::new(),
        };
        let n = 100_000u64;
        let stream = gen_synthetic(&params, n, 42).unwrap();
        let mean = stream.bits_per_tti.iter().sum::<u64>() as f64 / n as f64;
        // Var of bits/TTI is lambda*pkt_size^2; allow 3 sigma of the mean.
        let sigma_of_mean = (2.0f64 * 100.0 * 100.0 / n as f64).sqrt();
        assert!((mean - 200.0).abs() < 3.0 * sigma_of_mean, "mean {mean}");
    }

    #[test]
    fn on_off_with_zero_p_on_never_fires() {
        let params = GeneratorParams {
            kind: GeneratorKind::OnOff { p_on: 0.0, p_off: 0.1, bits: 500 },
            pkt_size: 100,
            channel: Vec::new(),
        };
        let stream = gen_synthetic(&params, 1000, 9).unwrap();
        assert!(stream.bits_per_tti.iter().all(|&b| b == 0));
    }

    #[test]
    fn same_seed_same_stream() {
        let params = GeneratorParams {
            kind: GeneratorKind::PoissonBatch { lambda: 1.5 },
            pkt_size: 64,
            channel: vec![
                ChannelEntry { bits_per_rb: 32, prob: 0.5 },
                ChannelEntry { bits_per_rb: 64, prob: 0.5 },
            ],
        };
        let a = gen_synthetic(&params, 2000, 77).unwrap();
        let b = gen_synthetic(&params, 2000, 77).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn window_takes_trailing_ttis() {
        let mut h = History::default();
        for t in 0..10u64 {
            h.push_tti(t, vec![]);
        }
        let w = window(&h, 0, 9, 4).unwrap();
        assert_eq!(w.x_d, vec![6, 7, 8, 9]);
        let again = window(&h, 0, 9, 4).unwrap();
        assert_eq!(w, again);
    }

    #[test]
    fn window_needs_enough_history() {
        let mut h = History::default();
        for t in 0..3u64 {
            h.push_tti(t, vec![]);
        }
        assert!(matches!(
            window(&h, 0, 2, 4),
            Err(TraceError::InsufficientHistory { .. })
        ));
    }

    #[test]
    fn raw_conversion_roundtrips() {
        let raw = "0 17 120 3\n1 17 80 2\n";
        let mut out = Vec::new();
        let n = convert_raw_trace(Cursor::new(raw), &mut out).unwrap();
        assert_eq!(n, 2);
        let records = parse_trace(Cursor::new(out)).unwrap();
        assert_eq!(records[1], TraceRecord { tti: 1, ue_id: 17, bits: 80, rbs: 2 });
    }
}
