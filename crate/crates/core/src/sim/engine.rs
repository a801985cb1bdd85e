use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{Behavior, Role, ScenarioConfig, ShiftMode};
use super::{as_address, as_prefix, ScenarioError, EPOCH_SECS};
use crate::crypto::{hash, hash_parts, Digest, KeyRegistry, LocalKeys};
use crate::dataplane::{source_send, DestCounters, Destination, DropReason, Fib, FibEntry, TransitMarker};
use crate::policy::{create_policy, dest_complete, establish_channel, transit_endorse, Channel};
use crate::protest::{
    adjudicate, assemble_evidence, examine_complaint, AdjudicateParams, Admission, ComplaintResponse, EvidenceBundle,
    ExamineParams, RejectReason, Verdict,
};
use crate::sbit::{PrefixTable, SbAction, SbState};
use crate::tokenbucket::{DualShaper, TokenBucket};
use crate::wire::{AsSlot, FairHeader, NetHeader, NextAs, FAIR_PROTOCOL};
use crate::{Asn, PortId, SimTime};

const NANOS: f64 = 1e9;
const SEQNO_MOD: u32 = 1 << 24;
/// Extra hold time for traffic whose suspicious-bit action is `delay`.
const SB_DELAY_NS: u64 = 10_000_000;

/// Per-AS forwarding counters.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HopStats {
    pub asn: Asn,
    pub processed: u64,
    pub clock_drops: u64,
    pub malformed: u64,
    pub replayed: u64,
    pub injected: u64,
    pub sb_flagged: u64,
    pub sb_dropped: u64,
}

#[derive(Clone, Debug)]
pub struct ProtestResult {
    pub bundle: EvidenceBundle,
    pub responses: Vec<ComplaintResponse>,
    pub verdict: Verdict,
}

/// Everything a run produced.
#[derive(Clone, Debug)]
pub struct ScenarioResult {
    pub config: ScenarioConfig,
    pub config_hash: Digest,
    /// Packets the source emitted.
    pub sent: u64,
    pub hops: Vec<HopStats>,
    pub destination: DestCounters,
    /// Packets that reached the destination with the suspicious bit set.
    pub flagged_arrivals: u64,
    pub dest: Destination,
    pub registry: KeyRegistry,
    /// Local keys of the cooperating transits, in path order.
    pub transit_keys: Vec<(Asn, LocalKeys)>,
    pub protest: Option<ProtestResult>,
    /// Why a triggered protest produced no bundle.
    pub protest_error: Option<String>,
}

impl ScenarioResult {
    pub fn channel(&self) -> &Channel {
        self.dest.channel()
    }
}

enum Payload {
    Packet(NetHeader, FairHeader),
    Inject,
}

struct Transit {
    marker: TransitMarker,
    slot: usize,
    sb: Option<SbState>,
    last_seqno: Option<u32>,
    injected: u32,
    rng: ChaCha8Rng,
}

enum Node {
    Source,
    Transit(Box<Transit>),
    Plain,
    Destination,
}

struct Engine<'a> {
    cfg: &'a ScenarioConfig,
    nodes: Vec<Node>,
    stats: Vec<HopStats>,
    offsets: Vec<i64>,
    latencies: Vec<u64>,
    queue: BinaryHeap<Reverse<(u64, usize, u64)>>,
    payloads: HashMap<u64, Payload>,
    next_seq: u64,
    template: NetHeader,
    sizes: (Vec<u16>, WeightedIndex<f64>),
    slots: usize,
    dest: Destination,
    flagged_arrivals: u64,
}

fn ns(secs: f64) -> u64 {
    (secs * NANOS).round() as u64
}

fn epoch() -> SimTime {
    SimTime::from_secs(EPOCH_SECS)
}

/// Seconds since the scenario epoch on some AS's local clock.
fn elapsed(local: SimTime) -> f64 {
    local.as_nanos() as f64 / NANOS - EPOCH_SECS as f64
}

impl Engine<'_> {
    fn schedule(&mut self, at: u64, node: usize, payload: Payload) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.payloads.insert(seq, payload);
        self.queue.push(Reverse((at, node, seq)));
    }

    fn local(&self, node: usize, true_ns: u64) -> SimTime {
        SimTime::from_nanos(true_ns).offset(self.offsets[node])
    }

    fn to_true(&self, node: usize, local: SimTime) -> u64 {
        local.offset(-self.offsets[node]).as_nanos()
    }

    fn sized_net(&self, rng: &mut ChaCha8Rng) -> NetHeader {
        let bytes = self.sizes.0[self.sizes.1.sample(rng)];
        let mut net = self.template;
        net.payload_len = bytes - net.header_len() as u16;
        net
    }

    /// Emits the source's whole schedule into the queue.
    fn generate(&mut self, fib: &mut Fib, rng: &mut ChaCha8Rng) -> Result<u64, ScenarioError> {
        let cfg = self.cfg;
        let (cir, cbs) = (cfg.policy.cir, cfg.policy.cbs());
        let adversary = cfg.ases[0].adversary;
        let start = epoch();
        let mut shaper = DualShaper::new(cir, cbs, start).map_err(|e| ScenarioError::Runtime(e.to_string()))?;
        let mut replica = TokenBucket::new(cir, cbs, start)
            .map_err(|e| ScenarioError::Runtime(e.to_string()))?
            .quantized(1_000_000_000);
        let first_shift_second = adversary.map(|a| EPOCH_SECS + a.from.floor() as u64);
        let end = start + ns(cfg.duration);
        let mut clock = start;
        let mut sent = 0;
        while clock < end {
            let active = adversary.filter(|a| a.active(elapsed(clock))).map(|a| a.behavior);
            let (rate, shaped, shift) = match active {
                Some(Behavior::Flood { multiplier }) => (multiplier, false, None),
                Some(Behavior::TimestampShift { multiplier, mode }) => (multiplier, false, Some(mode)),
                _ => (cfg.traffic.rate, cfg.traffic.shaped, None),
            };
            if rate <= 0.0 {
                break;
            }
            let net = self.sized_net(rng);
            let len = net.wire_len();
            let send = if shaped {
                shaper
                    .shape(len, clock)
                    .map_err(|e| ScenarioError::Runtime(e.to_string()))?
            } else {
                clock
            };
            let second = send.secs();
            let mut stamp = second.max(replica.last_update().secs());
            let conform = replica.police(len, SimTime::from_secs(stamp)).conforms();
            if let Some(mode) = shift {
                let allowed = mode == ShiftMode::Rolling || Some(second) == first_shift_second;
                if !conform && allowed && stamp == second {
                    stamp = second + 1;
                    replica.police(len, SimTime::from_secs(stamp));
                }
            }
            let stamp_time = if stamp == second {
                send
            } else {
                SimTime::from_secs(stamp)
            };
            let fair = source_send(fib, &net, stamp_time, self.slots)
                .map_err(|e| ScenarioError::Runtime(format!("source: {e:?}")))?;
            let at = self.to_true(0, send) + self.latencies[0];
            self.schedule(at, 1, Payload::Packet(net, fair));
            sent += 1;
            clock = clock + ((len as f64 / (rate * cir as f64)) * NANOS).max(1.0) as u64;
        }
        Ok(sent)
    }

    fn schedule_injections(&mut self) {
        let cfg = self.cfg;
        let end = cfg.duration;
        let gap = cfg.traffic.mean_size() / cfg.policy.cir as f64;
        for node in 1..cfg.ases.len() - 1 {
            let Some(adv) = cfg.ases[node].adversary else { continue };
            let Behavior::Inject { rate } = adv.behavior else {
                continue;
            };
            let stop = adv.until.unwrap_or(end).min(end);
            let mut t = adv.from;
            while t < stop {
                let local = epoch() + ns(t);
                let at = self.to_true(node, local);
                self.schedule(at, node, Payload::Inject);
                t += gap / rate;
            }
        }
    }

    fn run(&mut self) {
        while let Some(Reverse((at, node, seq))) = self.queue.pop() {
            let payload = self.payloads.remove(&seq).expect("scheduled payload");
            match payload {
                Payload::Inject => self.inject(at, node),
                Payload::Packet(net, fair) => self.process(at, node, net, fair),
            }
        }
    }

    fn forward(&mut self, at: u64, node: usize, net: NetHeader, fair: FairHeader) {
        self.schedule(at + self.latencies[node], node + 1, Payload::Packet(net, fair));
    }

    /// Suspicious-bit handling after marking; returns the extra delay or
    /// `None` if the packet is dropped.
    fn apply_sb(&mut self, node: usize, net: &NetHeader, fair: &mut FairHeader) -> Option<u64> {
        let Node::Transit(t) = &mut self.nodes[node] else {
            return Some(0);
        };
        let Some(sb) = t.sb.as_mut() else { return Some(0) };
        let action = sb.forward(net, fair, PortId(0));
        if fair.next_as.suspicious() {
            self.stats[node].sb_flagged += 1;
        }
        match action {
            SbAction::Forward => Some(0),
            SbAction::Delay => Some(SB_DELAY_NS),
            SbAction::Drop => {
                self.stats[node].sb_dropped += 1;
                None
            }
        }
    }

    fn mark(&mut self, node: usize, net: &NetHeader, fair: &mut FairHeader, local: SimTime) -> bool {
        let Node::Transit(t) = &mut self.nodes[node] else {
            return true;
        };
        match t.marker.forward(net, fair, local) {
            Ok(()) => true,
            Err(DropReason::Clock) => {
                self.stats[node].clock_drops += 1;
                false
            }
            Err(_) => {
                self.stats[node].malformed += 1;
                false
            }
        }
    }

    fn emit(&mut self, at: u64, node: usize, net: NetHeader, mut fair: FairHeader) {
        if let Some(delay) = self.apply_sb(node, &net, &mut fair) {
            self.forward(at + delay, node, net, fair);
        }
    }

    fn process(&mut self, at: u64, node: usize, net: NetHeader, mut fair: FairHeader) {
        self.stats[node].processed += 1;
        let local = self.local(node, at);
        match &self.nodes[node] {
            Node::Source => unreachable!("the source only sends"),
            Node::Plain => self.forward(at, node, net, fair),
            Node::Destination => {
                if fair.next_as.suspicious() {
                    self.flagged_arrivals += 1;
                }
                self.dest.receive(&net, &fair, local);
            }
            Node::Transit(_) => {
                if !self.mark(node, &net, &mut fair, local) {
                    return;
                }
                let adversary = self.cfg.ases[node]
                    .adversary
                    .filter(|a| a.active(elapsed(SimTime::from_nanos(at))));
                let Node::Transit(t) = &mut self.nodes[node] else {
                    unreachable!()
                };
                t.last_seqno = Some(fair.seqno);
                let mut copies = Vec::new();
                match adversary.map(|a| a.behavior) {
                    Some(Behavior::CorruptUpstreamMacs) => {
                        for s in &mut fair.slots[..t.slot] {
                            *s = AsSlot::from_byte(t.rng.gen());
                        }
                    }
                    Some(Behavior::Replay { factor, rerandomize }) => {
                        for _ in 1..factor {
                            let mut copy = fair.clone();
                            if rerandomize {
                                copy.next_as = NextAs::new(t.slot as u8, copy.next_as.suspicious());
                                t.marker
                                    .forward(&net, &mut copy, local)
                                    .expect("already passed the clock check");
                            }
                            copies.push(copy);
                        }
                        self.stats[node].replayed += copies.len() as u64;
                    }
                    _ => {}
                }
                self.emit(at, node, net, fair);
                for copy in copies {
                    self.emit(at, node, net, copy);
                }
            }
        }
    }

    fn inject(&mut self, at: u64, node: usize) {
        let local = self.local(node, at);
        let slots = self.slots;
        let Node::Transit(t) = &mut self.nodes[node] else {
            return;
        };
        let mut rng = t.rng.clone();
        let base = t.last_seqno.unwrap_or(0);
        let seqno = (base + (1 << 23) + t.injected) % SEQNO_MOD;
        t.injected += 1;
        let mut fair = FairHeader {
            timestamp: local.timestamp16(),
            seqno,
            icv: rng.gen(),
            next_as: NextAs::new(t.slot as u8, false),
            slots: (0..slots).map(|_| AsSlot::from_byte(rng.gen())).collect(),
        };
        let net = self.sized_net(&mut rng);
        if let Node::Transit(t) = &mut self.nodes[node] {
            t.rng = rng;
        }
        self.stats[node].injected += 1;
        if self.mark(node, &net, &mut fair, local) {
            self.emit(at, node, net, fair);
        }
    }
}

fn rng_for(seed: u64, label: &[u8], index: u64) -> ChaCha8Rng {
    let d = hash_parts([label, &seed.to_be_bytes()[..], &index.to_be_bytes()[..]]);
    ChaCha8Rng::from_seed(d)
}

/// Runs setup, transmission and, if the destination saw violations, the
/// protest phase.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioResult, ScenarioError> {
    cfg.validate()?;
    let config_hash = hash(
        toml::to_string(cfg)
            .map_err(|e| ScenarioError::Runtime(e.to_string()))?
            .as_bytes(),
    );
    let n = cfg.ases.len();
    let asns: Vec<Asn> = cfg.ases.iter().map(|a| a.asn()).collect();
    let (src, dst) = (asns[0], asns[n - 1]);
    let registry = KeyRegistry::deterministic(cfg.seed, asns.iter().copied());
    let runtime = |e: &dyn std::fmt::Display| ScenarioError::Runtime(e.to_string());

    // setup
    let mut transit_keys = Vec::new();
    for (i, a) in cfg.ases.iter().enumerate() {
        if a.role == Role::Transit {
            let master = hash_parts([
                b"fair/sim-master".as_slice(),
                &cfg.seed.to_be_bytes(),
                &(i as u64).to_be_bytes(),
            ]);
            transit_keys.push((a.asn(), LocalKeys::new(master, 60)));
        }
    }
    let path: Vec<Asn> = transit_keys.iter().map(|(a, _)| *a).collect();
    let mut policy = create_policy(&registry, src, EPOCH_SECS, path).map_err(|e| runtime(&e))?;
    for (asn, keys) in &transit_keys {
        let epoch = keys.epoch_of(EPOCH_SECS);
        policy = transit_endorse(policy, *asn, &keys.control_key(epoch)).map_err(|e| runtime(&e))?;
    }
    let policy = dest_complete(
        policy,
        &registry,
        dst,
        EPOCH_SECS + cfg.policy.validity,
        cfg.policy.cir,
        cfg.policy.cbs(),
    )
    .map_err(|e| runtime(&e))?;
    let src_channel = establish_channel(&registry, src, policy.clone()).map_err(|e| runtime(&e))?;
    let dst_channel = establish_channel(&registry, dst, policy).map_err(|e| runtime(&e))?;

    let version = cfg.traffic.ip_version;
    let mut fib = Fib::new();
    fib.insert(
        as_prefix(dst, version),
        FibEntry::channel(PortId(0), src_channel.k_sd, 0),
    );

    let prefixes: PrefixTable = asns.iter().map(|&a| (a, vec![as_prefix(a, version)])).collect();
    let mut nodes = Vec::with_capacity(n);
    let mut slot = 0;
    for (i, a) in cfg.ases.iter().enumerate() {
        nodes.push(match a.role {
            Role::Source => Node::Source,
            Role::Destination => Node::Destination,
            Role::TransitNoncoop => Node::Plain,
            Role::Transit => {
                let sb = a.sb.as_ref().map(|c| {
                    let mut s = SbState::new(c.action);
                    for asn in &c.sus_sources {
                        s.add_sources(prefixes.get(&Asn(*asn)).into_iter().flatten().copied());
                    }
                    s
                });
                let keys = transit_keys[slot].1.clone();
                let t = Transit {
                    marker: TransitMarker::new(keys, rng_for(cfg.seed, b"nonce", i as u64).gen()),
                    slot,
                    sb,
                    last_seqno: None,
                    injected: 0,
                    rng: rng_for(cfg.seed, b"adversary", i as u64),
                };
                slot += 1;
                Node::Transit(Box::new(t))
            }
        });
    }

    let sizes: Vec<u16> = cfg.traffic.sizes.iter().map(|s| s.bytes).collect();
    let weights = WeightedIndex::new(cfg.traffic.sizes.iter().map(|s| s.weight)).map_err(|e| runtime(&e))?;
    let offsets: Vec<i64> = cfg
        .ases
        .iter()
        .map(|a| (a.clock_offset * NANOS).round() as i64)
        .collect();
    // The destination meters from before the earliest possible arrival.
    let dest_start = epoch().offset(offsets[n - 1] - 2_000_000_000);
    let mut engine = Engine {
        cfg,
        nodes,
        stats: asns
            .iter()
            .map(|&asn| HopStats {
                asn,
                processed: 0,
                clock_drops: 0,
                malformed: 0,
                replayed: 0,
                injected: 0,
                sb_flagged: 0,
                sb_dropped: 0,
            })
            .collect(),
        latencies: cfg.ases.iter().map(|a| ns(a.latency)).collect(),
        offsets,
        queue: BinaryHeap::new(),
        payloads: HashMap::new(),
        next_seq: 0,
        template: NetHeader {
            version,
            src: as_address(src, version),
            dst: as_address(dst, version),
            payload_len: 0,
            next_header: FAIR_PROTOCOL,
        },
        sizes: (sizes, weights),
        slots: transit_keys.len(),
        dest: Destination::new(dst_channel, dest_start),
        flagged_arrivals: 0,
    };

    // transmission
    let mut traffic_rng = rng_for(cfg.seed, b"traffic", 0);
    let sent = engine.generate(&mut fib, &mut traffic_rng)?;
    engine.stats[0].processed = sent;
    engine.schedule_injections();
    engine.run();

    // protest
    let frame = match cfg.ases[n - 1].adversary.map(|a| a.behavior) {
        Some(Behavior::FrameDuplicateEvidence { factor }) => Some(factor),
        _ => None,
    };
    let mut protest = None;
    let mut protest_error = None;
    if engine.dest.counters().violations > 0 || frame.is_some() {
        let path_latency: f64 = cfg.ases[..n - 1].iter().map(|a| a.latency).sum();
        let complaint = epoch() + ns(cfg.duration + path_latency + cfg.evidence.complaint_delay);
        let window = cfg.evidence.window.map(|[a, b]| (epoch() + ns(a), epoch() + ns(b)));
        match assemble_evidence(engine.dest.store(), engine.dest.channel(), window, complaint) {
            Err(e) => protest_error = Some(e.to_string()),
            Ok(mut bundle) => {
                if let Some(factor) = frame {
                    let originals = bundle.records.clone();
                    for _ in 1..factor {
                        bundle.records.extend(originals.iter().cloned());
                    }
                    bundle.sort();
                }
                let digest = bundle.digest();
                let examine = ExamineParams {
                    slack: cfg.evidence.slack,
                    ..ExamineParams::default()
                };
                let mut responses = Vec::with_capacity(transit_keys.len());
                for (asn, keys) in &transit_keys {
                    let i = asns.iter().position(|a| a == asn).expect("on path");
                    let colluding = matches!(
                        cfg.ases[i].adversary.map(|a| a.behavior),
                        Some(Behavior::CorruptUpstreamMacs)
                    );
                    responses.push(if colluding {
                        let kp = registry.keypair(*asn).map_err(|e| runtime(&e))?;
                        let checked = bundle.records.len() as u64;
                        ComplaintResponse::signed(
                            kp,
                            *asn,
                            Admission::Reject,
                            RejectReason::NoViolation,
                            0,
                            checked,
                            0,
                            digest,
                        )
                    } else {
                        examine_complaint(*asn, keys, &bundle, &registry, &examine).map_err(|e| runtime(&e))?
                    });
                }
                let params = AdjudicateParams {
                    theta: cfg.evidence.theta,
                };
                let verdict = adjudicate(&responses, &bundle, &registry, &params).map_err(|e| runtime(&e))?;
                protest = Some(ProtestResult {
                    bundle,
                    responses,
                    verdict,
                });
            }
        }
    }

    Ok(ScenarioResult {
        config: cfg.clone(),
        config_hash,
        sent,
        hops: engine.stats,
        destination: engine.dest.counters(),
        flagged_arrivals: engine.flagged_arrivals,
        dest: engine.dest,
        registry,
        transit_keys,
        protest,
        protest_error,
    })
}
