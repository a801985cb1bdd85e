//! Acceptance criteria 1 to 14. Each test prints one `criterion N: PASS|FAIL`
//! line to stderr (uncaptured) before asserting.

use std::io::Write as _;
use std::path::Path;
use std::sync::{Mutex, MutexGuard};
use std::time::Instant;

use fair_core::bench::{run_bench, BenchConfig};
use fair_core::calc::{
    bandwidth_overhead, channel_key_bytes, fair_bytes_v4, header_storage_bytes, replay_capacity_bps, TraceModel,
    Weighting,
};
use fair_core::crypto::{LocalKeys, MacWidth};
use fair_core::dataplane::compute_icv;
use fair_core::protest::{detect_replay, police_evidence, slot_mac_valid, Outcome, Verdict};
use fair_core::sbit::{SbAction, SbState};
use fair_core::sim::{
    as_address, as_prefix, parse_scenario, run_scenario, Adversary, AsConfig, Behavior, EvidenceConfig, OutputConfig,
    PolicyConfig, Report, Role, ScenarioConfig, ScenarioResult, ShiftMode, SizeWeight, TrafficConfig,
};
use fair_core::tokenbucket::TokenBucket;
use fair_core::wire::{
    decode_dump, decode_fair, encode_dump, encode_fair, encoded_len, v4_mapped, AsSlot, FairHeader, Framing, IpVersion,
    NetHeader, NextAs, PacketRecord, FAIR_PROTOCOL, MAX_SLOTS,
};
use fair_core::{Asn, PortId, SimTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

static SERIAL: Mutex<()> = Mutex::new(());

/// Runs the criteria one at a time so the timing criteria measure an idle
/// machine.
fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(n: u32, name: &str, pass: bool, detail: String) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let line = format!("criterion {n}: {verdict} ({name}) {detail}\n");
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "criterion {n} ({name}) failed: {detail}");
}

/// `|x - p| <= 4 sigma` for a binomial proportion over `n` trials.
fn within_4_sigma(hits: u64, n: u64, p: f64) -> (bool, f64, f64) {
    let x = hits as f64 / n as f64;
    let sigma = (p * (1.0 - p) / n as f64).sqrt();
    ((x - p).abs() <= 4.0 * sigma, x, sigma)
}

const CIR: u64 = 100_000;

/// Source AS 100, cooperating transits 1..=n, destination AS 200.
fn line(n: u32, rate: f64, seed: u64) -> ScenarioConfig {
    let mut ases = vec![AsConfig::new(100, Role::Source)];
    ases.extend((1..=n).map(|i| AsConfig::new(i, Role::Transit)));
    ases.push(AsConfig::new(200, Role::Destination));
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let last = ases.len() - 1;
    for (i, a) in ases.iter_mut().enumerate() {
        a.clock_offset = rng.gen_range(-0.5..=0.5);
        if i < last {
            a.latency = rng.gen_range(0.0..0.15);
        }
    }
    ScenarioConfig {
        name: "acceptance".into(),
        seed,
        duration: 4.0,
        policy: PolicyConfig {
            cir: CIR,
            cbs: None,
            validity: 3600,
        },
        traffic: TrafficConfig::fixed(rate, 500),
        evidence: EvidenceConfig::default(),
        output: OutputConfig::default(),
        ases,
    }
}

fn with(mut cfg: ScenarioConfig, pos: usize, b: Behavior) -> ScenarioConfig {
    cfg.ases[pos].adversary = Some(Adversary::new(b));
    cfg
}

fn verdict(r: &ScenarioResult) -> Option<&Verdict> {
    r.protest.as_ref().map(|p| &p.verdict)
}

#[test]
fn criterion_01_honest_path() {
    let _serial = serial();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut failures = Vec::new();
    let mut total = 0;
    let runs = 5;
    for k in 0..runs {
        let hops = rng.gen_range(1..=10u32);
        let mut ases = vec![AsConfig::new(100, Role::Source)];
        ases.extend((1..=hops).map(|i| AsConfig::new(i, Role::Transit)));
        ases.push(AsConfig::new(200, Role::Destination));
        let budget: f64 = rng.gen_range(0.0..=1.0);
        let raw: Vec<f64> = (0..ases.len() - 1).map(|_| rng.gen_range(0.0..1.0)).collect();
        let sum: f64 = raw.iter().sum();
        for (i, a) in ases.iter_mut().enumerate() {
            a.clock_offset = rng.gen_range(-0.5..=0.5);
            if let Some(w) = raw.get(i) {
                a.latency = w / sum * budget * 0.999;
            }
        }
        let cir = 10_000_000;
        let sizes: Vec<SizeWeight> = (0..4)
            .map(|_| SizeWeight {
                bytes: rng.gen_range(100..=1500),
                weight: rng.gen_range(0.1..1.0),
            })
            .collect();
        let traffic = TrafficConfig {
            rate: rng.gen_range(0.5..0.95),
            sizes,
            ip_version: if rng.gen_bool(0.5) {
                IpVersion::V4
            } else {
                IpVersion::V6
            },
            shaped: true,
        };
        let duration = 1.02e5 * traffic.mean_size() / (traffic.rate * cir as f64);
        let cfg = ScenarioConfig {
            name: format!("honest-{k}"),
            seed: k,
            duration,
            policy: PolicyConfig {
                cir,
                cbs: None,
                validity: 3600,
            },
            traffic,
            evidence: EvidenceConfig::default(),
            output: OutputConfig::default(),
            ases,
        };
        cfg.validate().expect("valid topology");
        let r = run_scenario(&cfg).unwrap();
        total += r.sent;
        let d = r.destination;
        let hop_drops: u64 = r.hops.iter().map(|h| h.clock_drops).sum();
        if r.sent < 100_000 || d.clock_drops + hop_drops + d.icv_failures + d.violations > 0 || d.delivered != r.sent {
            failures.push(format!("run {k}: sent {} {d:?} hop drops {hop_drops}", r.sent));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        1,
        "honest-path soundness",
        failures.is_empty() && secs < 30.0,
        format!("{runs} topologies, {total} packets, {secs:.1}s, failures {failures:?}"),
    );
}

#[test]
fn criterion_02_forged_mac_rates() {
    let _serial = serial();
    let keys = LocalKeys::new([7; 32], 60);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 100_000u64;
    let mut details = Vec::new();
    let mut pass = true;
    for bits in [4u8, 8, 1] {
        let width = MacWidth::new(bits).unwrap();
        let mut hits = 0;
        for _ in 0..n {
            // mid-epoch, so exactly one key is a candidate
            let secs = (rng.gen_range(28_000_000..29_000_000u64)) * 60 + 30;
            let rec = PacketRecord {
                net: NetHeader {
                    version: IpVersion::V6,
                    src: [1; 16],
                    dst: [2; 16],
                    payload_len: rng.gen_range(20..1500),
                    next_header: FAIR_PROTOCOL,
                },
                fair: FairHeader {
                    timestamp: secs as u16,
                    seqno: rng.gen_range(0..1 << 24),
                    icv: rng.gen(),
                    next_as: NextAs::new(1, false),
                    slots: vec![AsSlot {
                        nonce: rng.gen_range(0..16),
                        mac: rng.gen_range(0..=((1u16 << bits) - 1) as u8),
                    }],
                },
                arrival: SimTime::from_secs(secs),
            };
            assert_eq!(keys.candidate_epochs(secs).len(), 1);
            if slot_mac_valid(&keys, 0, &rec, secs, width) {
                hits += 1;
            }
        }
        let p = 1.0 / (1u64 << bits) as f64;
        let (ok, x, sigma) = within_4_sigma(hits, n, p);
        pass &= ok;
        details.push(format!(
            "m={bits}: {:.4}% (expect {:.4}% +/- {:.4}%)",
            x * 100.0,
            p * 100.0,
            4.0 * sigma * 100.0
        ));
    }
    report(2, "forged-MAC detection", pass, details.join(", "));
}

#[test]
fn criterion_03_collusion_suffix() {
    let _serial = serial();
    let seeds = 20u64;
    let (mut exact, mut runs) = (0, 0);
    let (mut adjacent_ok, mut adjacent_runs) = (0, 0);
    let mut misses = Vec::new();
    for pos in 1..=5u32 {
        for s in 0..seeds {
            let cfg = with(
                line(5, 0.9, 1000 + 100 * pos as u64 + s),
                pos as usize,
                Behavior::CorruptUpstreamMacs,
            );
            let cfg = with(cfg, 0, Behavior::Flood { multiplier: 2.0 });
            let r = run_scenario(&cfg).unwrap();
            let admitting = verdict(&r).map(|v| v.admitting.clone()).unwrap_or_default();
            let expected: Vec<Asn> = (pos + 1..=5).map(Asn).collect();
            runs += 1;
            if admitting == expected {
                exact += 1;
            } else {
                misses.push(format!("pos {pos} seed {s}: {admitting:?}"));
            }
            if pos < 5 {
                adjacent_runs += 1;
                if admitting.contains(&Asn(5)) {
                    adjacent_ok += 1;
                }
            }
        }
    }
    let rate = exact as f64 / runs as f64;
    report(
        3,
        "collusion suffix",
        rate >= 0.99 && adjacent_ok == adjacent_runs,
        format!("exact {exact}/{runs}, AS5 admits {adjacent_ok}/{adjacent_runs}, misses {misses:?}"),
    );
}

#[test]
fn criterion_04_replay_localization() {
    let _serial = serial();
    let (mut ok, mut runs) = (0, 0);
    let mut misses = Vec::new();
    for factor in [2u32, 5] {
        for pos in 1..=5usize {
            for rerandomize in [false, true] {
                for s in 0..3u64 {
                    let seed = 2000 + 100 * factor as u64 + 10 * pos as u64 + s + if rerandomize { 5 } else { 0 };
                    let cfg = with(line(5, 0.9, seed), pos, Behavior::Replay { factor, rerandomize });
                    let r = run_scenario(&cfg).unwrap();
                    runs += 1;
                    let p = r.protest.as_ref();
                    let groups = p.map(|p| detect_replay(&p.bundle).len()).unwrap_or(0);
                    let hit = match p.map(|p| &p.verdict.outcome) {
                        Some(Outcome::ReplayDetected { interval }) => groups > 0 && interval.contains(pos),
                        _ => false,
                    };
                    if hit {
                        ok += 1;
                    } else {
                        misses.push(format!(
                            "factor {factor} pos {pos} rerandomize {rerandomize} seed {seed}: groups {groups} {:?}",
                            p.map(|p| &p.verdict.outcome)
                        ));
                    }
                }
            }
        }
    }
    report(
        4,
        "replay localization",
        ok == runs,
        format!("{ok}/{runs} localized, misses {misses:?}"),
    );
}

#[test]
fn criterion_05_injection() {
    let _serial = serial();
    let n = 4u32;
    let (mut hits, mut trials) = (0u64, 0u64);
    let mut problems = Vec::new();
    for pos in 1..=n {
        for s in 0..3u64 {
            let cfg = with(
                line(n, 0.5, 3000 + 10 * pos as u64 + s),
                pos as usize,
                Behavior::Inject { rate: 1.5 },
            );
            let r = run_scenario(&cfg).unwrap();
            let Some(p) = r.protest.as_ref() else {
                problems.push(format!("pos {pos} seed {s}: no protest"));
                continue;
            };
            for a in pos..=n {
                if !p.verdict.admitting.contains(&Asn(a)) {
                    problems.push(format!("pos {pos} seed {s}: AS{a} did not admit"));
                }
            }
            let icv_key = r.channel().k_sd.cipher();
            for rec in &p.bundle.records {
                let f = &rec.fair;
                if compute_icv(&icv_key, rec.net.payload_len, f.timestamp, f.seqno) == f.icv {
                    continue;
                }
                let secs = p.bundle.record_secs(rec);
                for (slot, (_, keys)) in r.transit_keys.iter().enumerate().take(pos as usize - 1) {
                    trials += 1;
                    if slot_mac_valid(keys, slot, rec, secs, MacWidth::SLOT) {
                        hits += 1;
                    }
                }
            }
        }
    }
    let (ok, x, sigma) = within_4_sigma(hits, trials, 1.0 / 16.0);
    report(
        5,
        "injection",
        ok && problems.is_empty(),
        format!(
            "upstream pass {:.4}% over {trials} checks (expect 6.25% +/- {:.4}%), problems {problems:?}",
            x * 100.0,
            4.0 * sigma * 100.0
        ),
    );
}

#[test]
fn criterion_06_timestamp_shift() {
    let _serial = serial();
    let (mut ok, mut runs) = (0, 0);
    let mut misses = Vec::new();
    for s in 0..20u64 {
        let mut cfg = with(
            line(2, 0.9, 4000 + s),
            0,
            Behavior::TimestampShift {
                multiplier: 1.5,
                mode: ShiftMode::Once,
            },
        );
        cfg.duration = 5.0;
        let r = run_scenario(&cfg).unwrap();
        runs += 1;
        let Some(p) = r.protest.as_ref() else {
            misses.push(format!("seed {s}: no protest"));
            continue;
        };
        let recs: Vec<(u64, u32, u64)> = p
            .bundle
            .records
            .iter()
            .map(|x| (p.bundle.record_secs(x), x.fair.seqno, x.net.wire_len()))
            .collect();
        let per = police_evidence(&recs, CIR, CIR, 0).per_second();
        let first = recs.iter().map(|r| r.0).min().unwrap();
        let last = recs.iter().map(|r| r.0).max().unwrap();
        // the final second is partial
        let flagged = (first + 1..last).all(|sec| per.get(&sec).copied().unwrap_or(0) > 0);
        if flagged && p.verdict.outcome == Outcome::SourceGuilty {
            ok += 1;
        } else {
            misses.push(format!("seed {s}: {per:?} {:?}", p.verdict.outcome));
        }
    }
    report(
        6,
        "timestamp shift",
        ok == runs,
        format!("{ok}/{runs} flagged from the second interval on, misses {misses:?}"),
    );
}

/// Fluid bucket in micro-bytes advanced in 1 ms steps.
fn fluid_decisions(cir: u64, cbs: u64, arrivals: &[(u64, u64)]) -> Vec<bool> {
    let cap = cbs as u128 * 1_000_000;
    let per_ms = cir as u128 * 1_000;
    let (mut tokens, mut t) = (cap, 0u64);
    let mut out = Vec::with_capacity(arrivals.len());
    for &(ms, len) in arrivals {
        while t < ms {
            tokens = (tokens + per_ms).min(cap);
            t += 1;
        }
        let need = len as u128 * 1_000_000;
        out.push(tokens >= need);
        if tokens >= need {
            tokens -= need;
        }
    }
    out
}

#[test]
fn criterion_07_token_bucket_oracle() {
    let _serial = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut matched, mut decisions) = (0, 0);
    let mut first_mismatch = None;
    for i in 0..1000 {
        let cir = rng.gen_range(1_000..=10_000_000u64);
        let cbs = rng.gen_range(100..=2 * cir);
        let mean_gap = rng.gen_range(0..50u64);
        let mut ms = 0;
        let arrivals: Vec<(u64, u64)> = (0..300)
            .map(|_| {
                ms += rng.gen_range(0..=2 * mean_gap);
                (ms, rng.gen_range(1..=cbs.min(3000) + cbs / 10))
            })
            .collect();
        let start = SimTime::from_secs(1_700_000_000);
        let mut tb = TokenBucket::new(cir, cbs, start).unwrap();
        let got: Vec<bool> = arrivals
            .iter()
            .map(|&(ms, len)| tb.police(len, start.offset((ms * 1_000_000) as i64)).conforms())
            .collect();
        let want = fluid_decisions(cir, cbs, &arrivals);
        decisions += got.len();
        if got == want {
            matched += 1;
        } else if first_mismatch.is_none() {
            first_mismatch = Some(i);
        }
    }
    report(
        7,
        "token-bucket oracle",
        matched == 1000,
        format!("{matched}/1000 instances identical ({decisions} decisions), first mismatch {first_mismatch:?}"),
    );
}

fn golden_records() -> Vec<PacketRecord> {
    let s6 = [0x20, 0x01, 0x0d, 0xb8, 0, 100, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1];
    let d6 = [0x20, 0x01, 0x0d, 0xb8, 0, 200, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1];
    let slots = |v: &[(u8, u8)]| v.iter().map(|&(n, m)| AsSlot::new(n, m)).collect::<Vec<_>>();
    vec![
        PacketRecord {
            net: NetHeader {
                version: IpVersion::V6,
                src: s6,
                dst: d6,
                payload_len: 460,
                next_header: FAIR_PROTOCOL,
            },
            fair: FairHeader {
                timestamp: 0xf100,
                seqno: 0x000102,
                icv: 0x5e,
                next_as: NextAs::new(5, false),
                slots: slots(&[(0xe, 0x4), (0x1, 0xf), (0x7, 0x0), (0x0, 0x9), (0xa, 0xb)]),
            },
            arrival: SimTime::from_nanos(1_700_000_000_250_000_000),
        },
        PacketRecord {
            net: NetHeader {
                version: IpVersion::V4,
                src: v4_mapped([10, 0, 100, 1]),
                dst: v4_mapped([10, 0, 200, 1]),
                payload_len: 480,
                next_header: FAIR_PROTOCOL,
            },
            fair: FairHeader {
                timestamp: 3,
                seqno: 0xff_ffff,
                icv: 0,
                next_as: NextAs::new(2, true),
                slots: slots(&[(0x3, 0xc), (0xf, 0x0), (0, 0)]),
            },
            arrival: SimTime::from_nanos(1_700_000_001_000_000_001),
        },
        PacketRecord {
            net: NetHeader {
                version: IpVersion::V6,
                src: d6,
                dst: s6,
                payload_len: 9,
                next_header: FAIR_PROTOCOL,
            },
            fair: FairHeader {
                timestamp: 0xffff,
                seqno: 0,
                icv: 0xff,
                next_as: NextAs::new(0, false),
                slots: vec![],
            },
            arrival: SimTime::from_nanos(7),
        },
    ]
}

#[test]
fn criterion_08_wire_exactness() {
    let _serial = serial();
    let mut problems = Vec::new();
    for n in 0..=MAX_SLOTS {
        let h = FairHeader {
            timestamp: 1,
            seqno: 2,
            icv: 3,
            next_as: NextAs::new(0, false),
            slots: vec![AsSlot::default(); n],
        };
        let raw = encode_fair(&h, Framing::Raw).unwrap().len();
        let eh = encode_fair(&h, Framing::Ipv6Eh).unwrap().len();
        if raw != 7 + n || eh != 9 + n || encoded_len(n, Framing::Raw) != raw {
            problems.push(format!("n={n}: raw {raw} eh {eh}"));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let framings = [Framing::Raw, Framing::Ipv6Eh, Framing::Ipv6EhPadded];
    let mut round_trips = 0;
    for _ in 0..10_000 {
        let n = rng.gen_range(0..=MAX_SLOTS);
        let h = FairHeader {
            timestamp: rng.gen(),
            seqno: rng.gen_range(0..1 << 24),
            icv: rng.gen(),
            next_as: NextAs::new(rng.gen_range(0..=n as u8), rng.gen()),
            slots: (0..n).map(|_| AsSlot::from_byte(rng.gen())).collect(),
        };
        let framing = framings[rng.gen_range(0..3)];
        let bytes = encode_fair(&h, framing).unwrap();
        if decode_fair(&bytes, framing).as_ref() == Ok(&h) && bytes.len() == encoded_len(n, framing) {
            round_trips += 1;
        }
    }
    if round_trips != 10_000 {
        problems.push(format!("{round_trips}/10000 round trips"));
    }

    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let empty = std::fs::read(dir.join("empty.fairdump")).unwrap();
    let mixed = std::fs::read(dir.join("mixed.fairdump")).unwrap();
    let records = golden_records();
    if encode_dump(&[]).unwrap() != empty {
        problems.push("empty dump differs".into());
    }
    if encode_dump(&records).unwrap() != mixed {
        problems.push("mixed dump differs".into());
    }
    if decode_dump(&mixed).as_ref() != Ok(&records) {
        problems.push("mixed dump decodes differently".into());
    }
    report(
        8,
        "wire exactness",
        problems.is_empty(),
        format!("sizes n=0..=127, {round_trips} round trips, 2 golden dumps, problems {problems:?}"),
    );
}

#[test]
fn criterion_09_overhead_bound() {
    let _serial = serial();
    let traces = TraceModel::published();
    let mut totals = Vec::new();
    let mut pass = true;
    for w in [Weighting::ByteShare, Weighting::PacketShare] {
        for t in &traces {
            let o = bandwidth_overhead(t, w);
            pass &= o.total <= 0.02;
            totals.push(format!("{:.3}%", o.total * 100.0));
        }
    }
    let v4 = bandwidth_overhead(&traces[0], Weighting::ByteShare).v4;
    let exact = 12.0 / 747.0;
    pass &= ((v4 - exact) / exact).abs() <= 1e-6 && fair_bytes_v4(5) == 12;
    report(
        9,
        "overhead bound",
        pass,
        format!(
            "byte-share then packet-share totals {totals:?}; trace 1 v4 {:.6}% vs 12/747; published 1.71/1.39/1.74% not reconstructible",
            v4 * 100.0
        ),
    );
}

#[test]
fn criterion_10_storage() {
    let _serial = serial();
    let keys = channel_key_bytes(50_000);
    let published = [30.2, 56.0, 67.3];
    let got: Vec<f64> = TraceModel::published()
        .iter()
        .map(|m| header_storage_bytes(m) / 1e9)
        .collect();
    let within = got.iter().zip(published).all(|(g, p)| ((g - p) / p).abs() <= 0.10);
    report(
        10,
        "storage figures",
        keys == 800_000 && within,
        format!("channel keys {keys} B, destination stores {got:.2?} GB vs {published:?}"),
    );
}

#[test]
fn criterion_11_replay_capacity() {
    let _serial = serial();
    let gbps = replay_capacity_bps((1u64 << 24) as f64, 413.0, 3.0) / 1e9;
    report(
        11,
        "replay capacity",
        (17.0..=19.0).contains(&gbps),
        format!("{gbps:.3} Gbps for 2^24 numbers, 413 B packets, 3 s window"),
    );
}

fn sb_packet(src: Asn, suspicious: bool) -> (NetHeader, FairHeader) {
    let net = NetHeader {
        version: IpVersion::V6,
        src: as_address(src, IpVersion::V6),
        dst: as_address(Asn(9), IpVersion::V6),
        payload_len: 100,
        next_header: FAIR_PROTOCOL,
    };
    let fair = FairHeader {
        timestamp: 0,
        seqno: 0,
        icv: 0,
        next_as: NextAs::new(0, suspicious),
        slots: vec![AsSlot::default(); 3],
    };
    (net, fair)
}

#[test]
fn criterion_12_suspicious_bit() {
    let _serial = serial();
    // AS0 (bad customer) and AS5 (benign customer) reach AS1 on ports 1 and
    // 2; AS1 reaches AS2 on AS2's port 7. AS2 has convicted AS0.
    let (bad, good) = (Asn(10), Asn(5));
    let to_as2 = PortId(7);
    let mut as1 = SbState::new(SbAction::Forward);
    let mut as2 = SbState::new(SbAction::Forward);
    as2.add_sources([as_prefix(bad, IpVersion::V6)]);

    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut traffic: Vec<Asn> = (0..2000).map(|_| if rng.gen_bool(0.3) { bad } else { good }).collect();
    traffic[0] = bad;

    let hop = |as1: &mut SbState, as2: &mut SbState, src: Asn| {
        let (net, mut fair) = sb_packet(src, false);
        let port_in = if src == bad { PortId(1) } else { PortId(2) };
        as1.forward(&net, &mut fair, port_in);
        let arrived_flagged = fair.next_as.suspicious();
        as2.forward(&net, &mut fair, to_as2);
        (arrived_flagged, fair.next_as.suspicious())
    };

    // phase 1: AS1 does not flag
    let phase1: Vec<bool> = traffic.iter().map(|&s| hop(&mut as1, &mut as2, s).1).collect();
    let flagged1 = phase1.iter().filter(|&&f| f).count();
    let benign1 = traffic.iter().filter(|&&s| s == good).count();

    // phase 2: AS1 starts flagging AS0
    as1.add_sources([as_prefix(bad, IpVersion::V6)]);
    let mut first_sb_arrival = None;
    let mut late_flagged_benign = Vec::new();
    for (i, &s) in traffic.iter().enumerate() {
        let (arrived, left) = hop(&mut as1, &mut as2, s);
        if arrived && first_sb_arrival.is_none() {
            first_sb_arrival = Some(i);
        }
        if s == good && left {
            late_flagged_benign.push(i);
        }
    }
    let cleared_within_one = match first_sb_arrival {
        Some(f) => late_flagged_benign.iter().all(|&i| i <= f + 1),
        None => false,
    };
    report(
        12,
        "suspicious bit",
        flagged1 == traffic.len() && cleared_within_one,
        format!(
            "phase 1: {flagged1}/{} left AS2 flagged ({benign1} benign); phase 2: first SB arrival at packet {first_sb_arrival:?}, benign flagged afterwards at {late_flagged_benign:?}",
            traffic.len()
        ),
    );
}

#[test]
fn criterion_13_determinism() {
    let _serial = serial();
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut files: Vec<_> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "toml"))
        .collect();
    files.sort();
    let mut differing = Vec::new();
    for f in &files {
        let cfg = parse_scenario(&std::fs::read_to_string(f).unwrap()).unwrap();
        for seed in [cfg.seed, cfg.seed + 1000] {
            let cfg = ScenarioConfig { seed, ..cfg.clone() };
            let a = Report::from_result(&run_scenario(&cfg).unwrap());
            let b = Report::from_result(&run_scenario(&cfg).unwrap());
            if a.to_text() != b.to_text() || a.to_json() != b.to_json() {
                differing.push(format!("{} seed {seed}", f.display()));
            }
        }
    }
    report(
        13,
        "determinism",
        !files.is_empty() && differing.is_empty(),
        format!("{} scenario files x 2 seeds, differing {differing:?}", files.len()),
    );
}

#[test]
fn criterion_14_bench() {
    let _serial = serial();
    let base = BenchConfig {
        rounds: 9,
        ..BenchConfig::default()
    };
    let one = run_bench(&base).unwrap();
    let two = run_bench(&BenchConfig { workers: 2, ..base }).unwrap();
    let scaling = two.fair_pps / one.fair_pps;
    let cpus = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    report(
        14,
        "benchmark sanity",
        one.overhead <= 0.05 && scaling >= 1.7,
        format!(
            "overhead {:.2}% (stddev {:.2}%), 2-worker scaling {scaling:.2}x on {cpus} CPU(s)",
            one.overhead * 100.0,
            one.overhead_stddev() * 100.0
        ),
    );
}
