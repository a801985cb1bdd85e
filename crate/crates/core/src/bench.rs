//! Marking-pipeline microbenchmark over in-memory packet buffers.
//!
//! Both pipelines decode the network and marking headers, look up the
//! destination in a longest-prefix-match table and re-encode the packet.
//! The marking pipeline additionally runs the transit procedure (clock
//! check, nonce, slot MAC).

use std::hint::black_box;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::crypto::LocalKeys;
use crate::dataplane::{transit_forward, Fib, FibEntry, Lcg, TransitMarker};
use crate::wire::{
    decode_fair_prefix, encode_fair_into, encoded_len, AsSlot, FairHeader, Framing, IpVersion, NetHeader, NextAs,
    IPV6_HEADER_LEN,
};
use crate::{PortId, Prefix, SimTime};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct BenchConfig {
    /// Packets per worker per round.
    pub packets: usize,
    pub hops: usize,
    pub workers: usize,
    /// IPv6 packet size in bytes including the marking header.
    pub pkt_size: usize,
    /// Routing-table size.
    pub prefixes: usize,
    pub rounds: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            packets: 200_000,
            hops: 5,
            workers: 1,
            pkt_size: 68,
            prefixes: 18_000,
            rounds: 5,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchResult {
    pub config: BenchConfig,
    /// Best round, packets per second across all workers.
    pub baseline_pps: f64,
    pub fair_pps: f64,
    /// Extra time per packet relative to baseline.
    pub overhead: f64,
    /// Per-round (baseline, marking) throughputs.
    pub rounds: Vec<(f64, f64)>,
}

impl BenchResult {
    /// Sample standard deviation of the per-round overhead.
    pub fn overhead_stddev(&self) -> f64 {
        let xs: Vec<f64> = self.rounds.iter().map(|(b, f)| b / f - 1.0).collect();
        let n = xs.len() as f64;
        if xs.len() < 2 {
            return 0.0;
        }
        let mean = xs.iter().sum::<f64>() / n;
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum BenchError {
    #[error("packet size {size} is below the {min} bytes of headers for {hops} hops")]
    PacketTooSmall { size: usize, min: usize, hops: usize },
    #[error("packets, workers, rounds and prefixes must be positive")]
    Empty,
}

/// Random routing table: `/16` to `/48` IPv6 prefixes.
pub fn build_fib(prefixes: usize, rng: &mut ChaCha8Rng) -> (Fib, Vec<Prefix>) {
    let mut fib = Fib::new();
    let mut list = Vec::with_capacity(prefixes);
    let mut seen = std::collections::HashSet::new();
    while list.len() < prefixes {
        let mut a = [0u8; 16];
        rng.fill(&mut a[..6]);
        let p = Prefix::new(a, rng.gen_range(16..=48));
        if !seen.insert(p) {
            continue;
        }
        fib.insert(p, FibEntry::route(PortId((list.len() % 8) as u8)));
        list.push(p);
    }
    (fib, list)
}

/// Encoded packets addressed into random table prefixes.
pub fn build_packets(cfg: &BenchConfig, prefixes: &[Prefix], now: SimTime, rng: &mut ChaCha8Rng) -> Vec<Vec<u8>> {
    let fair_len = encoded_len(cfg.hops, Framing::Ipv6Eh);
    (0..cfg.packets)
        .map(|i| {
            let p = prefixes[rng.gen_range(0..prefixes.len())];
            let mut dst = p.addr();
            rng.fill(&mut dst[6..]);
            let net = NetHeader {
                version: IpVersion::V6,
                src: [0x20; 16],
                dst,
                payload_len: (cfg.pkt_size - IPV6_HEADER_LEN) as u16,
                next_header: crate::wire::FAIR_PROTOCOL,
            };
            let fair = FairHeader {
                timestamp: now.timestamp16(),
                seqno: i as u32 & 0xff_ffff,
                icv: rng.gen(),
                next_as: NextAs::new(rng.gen_range(0..cfg.hops.max(1)) as u8, false),
                slots: vec![AsSlot::default(); cfg.hops],
            };
            let mut out = Vec::with_capacity(cfg.pkt_size);
            net.encode_into(&mut out).expect("valid header");
            encode_fair_into(&fair, Framing::Ipv6Eh, 17, &mut out).expect("valid header");
            out.resize(IPV6_HEADER_LEN + fair_len.max(cfg.pkt_size - IPV6_HEADER_LEN), 0);
            out
        })
        .collect()
}

/// Parses, looks up and re-encodes one packet; marks it when `marker` is
/// given. Returns the egress port.
fn process(
    buf: &[u8],
    fib: &Fib,
    marker: Option<(&crate::crypto::BlockMac, &mut Lcg, SimTime)>,
    out: &mut Vec<u8>,
) -> Option<PortId> {
    let (net, used) = NetHeader::decode(buf).ok()?;
    let (mut fair, nh, flen) = decode_fair_prefix(&buf[used..], Framing::Ipv6Eh).ok()?;
    let port = fib.lookup(&net.dst)?.port;
    if let Some((cipher, rng, now)) = marker {
        transit_forward(cipher, rng, &net, &mut fair, now).ok()?;
    }
    out.clear();
    net.encode_into(out).ok()?;
    encode_fair_into(&fair, Framing::Ipv6Eh, nh, out).ok()?;
    out.extend_from_slice(&buf[used + flen..]);
    Some(port)
}

struct Worker {
    fib: Fib,
    packets: Vec<Vec<u8>>,
    marker: TransitMarker,
    now: SimTime,
}

impl Worker {
    fn pass(&mut self, mark: bool) -> usize {
        let mut out = Vec::with_capacity(256);
        let mut forwarded = 0;
        let cipher = self.marker.cipher_at(self.now).clone();
        let mut rng = self.marker.rng().clone();
        for buf in &self.packets {
            let m = mark.then_some((&cipher, &mut rng, self.now));
            if black_box(process(buf, &self.fib, m, &mut out)).is_some() {
                forwarded += 1;
            }
            black_box(&out);
        }
        forwarded
    }
}

/// Runs `workers` isolated threads per pass and returns aggregate
/// packets per second.
fn timed(workers: &mut [Worker], mark: bool) -> f64 {
    let start = Instant::now();
    let total: usize = std::thread::scope(|s| {
        let handles: Vec<_> = workers.iter_mut().map(|w| s.spawn(move || w.pass(mark))).collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).sum()
    });
    total as f64 / start.elapsed().as_secs_f64()
}

pub fn run_bench(cfg: &BenchConfig) -> Result<BenchResult, BenchError> {
    if cfg.packets == 0 || cfg.workers == 0 || cfg.rounds == 0 || cfg.prefixes == 0 {
        return Err(BenchError::Empty);
    }
    let min = IPV6_HEADER_LEN + encoded_len(cfg.hops, Framing::Ipv6Eh);
    if cfg.pkt_size < min {
        return Err(BenchError::PacketTooSmall {
            size: cfg.pkt_size,
            min,
            hops: cfg.hops,
        });
    }
    let now = SimTime::from_secs(1_700_000_000);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (fib, prefixes) = build_fib(cfg.prefixes, &mut rng);
    let mut workers: Vec<Worker> = (0..cfg.workers)
        .map(|w| Worker {
            fib: fib.clone(),
            packets: build_packets(cfg, &prefixes, now, &mut rng),
            marker: TransitMarker::new(LocalKeys::new([w as u8; 32], 60), cfg.seed ^ w as u64),
            now,
        })
        .collect();

    // warm-up
    timed(&mut workers, false);
    timed(&mut workers, true);
    let mut rounds = Vec::with_capacity(cfg.rounds);
    for i in 0..cfg.rounds {
        let (b, f) = if i % 2 == 0 {
            let b = timed(&mut workers, false);
            (b, timed(&mut workers, true))
        } else {
            let f = timed(&mut workers, true);
            (timed(&mut workers, false), f)
        };
        rounds.push((b, f));
    }
    let baseline_pps = rounds.iter().map(|r| r.0).fold(0.0, f64::max);
    let fair_pps = rounds.iter().map(|r| r.1).fold(0.0, f64::max);
    Ok(BenchResult {
        config: *cfg,
        baseline_pps,
        fair_pps,
        overhead: baseline_pps / fair_pps - 1.0,
        rounds,
    })
}
