//! Per-packet procedures of the source, transit and destination border
//! routers.

mod fib;
mod store;

use crate::crypto::{BlockBuilder, BlockMac, LocalKeys, MacWidth};
use crate::policy::Channel;
use crate::tokenbucket::{Decision, TokenBucket};
use crate::wire::{AsSlot, FairHeader, NetHeader, NextAs, PacketRecord};
use crate::{SimTime, CLOCK_TOLERANCE_SECS};

pub use fib::{Fib, FibEntry, FIB_ENTRY_BYTES_V6};
pub use store::HeaderStore;

const SEQNO_MOD: u32 = 1 << 24;

/// Why a router discarded a packet.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DropReason {
    /// Timestamp more than three seconds from local time.
    Clock,
    /// Next-AS index points past the allocated slots.
    Malformed,
    /// ICV does not match at the destination.
    Icv,
    /// No forwarding entry.
    NoRoute,
}

/// Wraparound-safe timestamp check: drop iff the 16-bit distance `d`
/// satisfies `3 < d < 2^16 - 3`.
pub fn clock_check(ts: u16, now: SimTime) -> bool {
    let d = ts.wrapping_sub(now.timestamp16());
    let tol = CLOCK_TOLERANCE_SECS;
    d <= tol || d >= tol.wrapping_neg()
}

/// 8-bit source ICV over payload length, timestamp and sequence number.
pub fn compute_icv(cipher: &BlockMac, payload_len: u16, ts: u16, seqno: u32) -> u8 {
    let block = BlockBuilder::new().u16(payload_len).u16(ts).u24(seqno).finish();
    cipher.mac(&block, MacWidth::ICV)
}

/// Transit slot MAC: the ICV input extended by the nonce, truncated to
/// `width` bits.
pub fn compute_slot_mac(cipher: &BlockMac, payload_len: u16, ts: u16, seqno: u32, nonce: u8, width: MacWidth) -> u8 {
    let block = BlockBuilder::new()
        .u16(payload_len)
        .u16(ts)
        .u24(seqno)
        .u8(nonce)
        .finish();
    cipher.mac(&block, width)
}

/// 64-bit linear congruential generator (Knuth's MMIX constants). Nonces
/// come from the high bits, which have the longest period.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Lcg(u64);

impl Lcg {
    pub fn new(seed: u64) -> Self {
        Lcg(seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self
            .0
            .wrapping_mul(6_364_136_223_846_793_005)
            .wrapping_add(1_442_695_040_888_963_407);
        self.0
    }

    pub fn nonce(&mut self) -> u8 {
        (self.next_u64() >> 60) as u8
    }
}

/// Source step: looks up the channel entry for the destination, stamps
/// time, sequence number and ICV, and allocates `slots` empty slots.
pub fn source_send(fib: &mut Fib, net: &NetHeader, now: SimTime, slots: usize) -> Result<FairHeader, DropReason> {
    let entry = fib.lookup_mut(&net.dst).ok_or(DropReason::NoRoute)?;
    let cipher = entry.cipher().ok_or(DropReason::NoRoute)?;
    let seqno = entry.seq;
    let timestamp = now.timestamp16();
    let icv = compute_icv(cipher, net.payload_len, timestamp, seqno);
    entry.seq = (seqno + 1) % SEQNO_MOD;
    Ok(FairHeader {
        timestamp,
        seqno,
        icv,
        next_as: NextAs::default(),
        slots: vec![AsSlot::default(); slots],
    })
}

/// Transit step for one cooperating AS: clock check, nonce, pointer
/// increment, slot MAC.
pub fn transit_forward(
    cipher: &BlockMac,
    rng: &mut Lcg,
    net: &NetHeader,
    fair: &mut FairHeader,
    now: SimTime,
) -> Result<(), DropReason> {
    if !clock_check(fair.timestamp, now) {
        return Err(DropReason::Clock);
    }
    let i = fair.next_as.index() as usize;
    if i >= fair.slots.len() {
        return Err(DropReason::Malformed);
    }
    let nonce = rng.nonce();
    fair.next_as.advance();
    let mac = compute_slot_mac(
        cipher,
        net.payload_len,
        fair.timestamp,
        fair.seqno,
        nonce,
        MacWidth::SLOT,
    );
    fair.slots[i] = AsSlot::new(nonce, mac);
    Ok(())
}

/// A cooperating transit's marking state: rotating local keys and the nonce
/// generator. Holds nothing per packet or per flow.
#[derive(Clone, Debug)]
pub struct TransitMarker {
    keys: LocalKeys,
    rng: Lcg,
    cached: Option<(u64, BlockMac)>,
}

impl TransitMarker {
    pub fn new(keys: LocalKeys, seed: u64) -> Self {
        TransitMarker {
            keys,
            rng: Lcg::new(seed),
            cached: None,
        }
    }

    pub fn keys(&self) -> &LocalKeys {
        &self.keys
    }

    pub fn rng(&self) -> &Lcg {
        &self.rng
    }

    /// Data-plane cipher for the epoch containing local time `now`.
    pub fn cipher_at(&mut self, now: SimTime) -> &BlockMac {
        let epoch = self.keys.epoch_of(now.secs());
        if self.cached.as_ref().map(|(e, _)| *e) != Some(epoch) {
            self.cached = Some((epoch, self.keys.data_key(epoch).cipher()));
        }
        &self.cached.as_ref().expect("just filled").1
    }

    pub fn forward(&mut self, net: &NetHeader, fair: &mut FairHeader, now: SimTime) -> Result<(), DropReason> {
        self.cipher_at(now);
        let cipher = &self.cached.as_ref().expect("filled").1;
        transit_forward(cipher, &mut self.rng, net, fair, now)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DestCounters {
    pub received: u64,
    pub clock_drops: u64,
    pub icv_failures: u64,
    pub delivered: u64,
    pub violations: u64,
}

/// Outcome of the destination step for one packet.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Delivery {
    /// ICV valid; `conform` is the live policer's decision and `inner` the
    /// network header handed on after removing the marking header.
    Accepted {
        conform: bool,
        inner: NetHeader,
    },
    Dropped(DropReason),
}

/// The destination border router for one channel.
///
/// Packets failing the ICV are dropped from delivery but still metered and
/// stored: the stored headers are the evidence, and packets forged en route
/// are part of what the evidence must show.
#[derive(Clone, Debug)]
pub struct Destination {
    channel: Channel,
    cipher: BlockMac,
    policer: TokenBucket,
    store: HeaderStore,
    counters: DestCounters,
    violation_times: Vec<SimTime>,
    inner_next_header: u8,
}

impl Destination {
    pub fn new(channel: Channel, start: SimTime) -> Self {
        let policer = TokenBucket::new(channel.cir(), channel.cbs(), start).expect("policy parameters are positive");
        Destination {
            cipher: channel.k_sd.cipher(),
            channel,
            policer,
            store: HeaderStore::default(),
            counters: DestCounters::default(),
            violation_times: Vec::new(),
            inner_next_header: 17,
        }
    }

    pub fn channel(&self) -> &Channel {
        &self.channel
    }

    pub fn store(&self) -> &HeaderStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut HeaderStore {
        &mut self.store
    }

    pub fn counters(&self) -> DestCounters {
        self.counters
    }

    /// Local arrival times of packets the live policer flagged.
    pub fn violation_times(&self) -> &[SimTime] {
        &self.violation_times
    }

    pub fn receive(&mut self, net: &NetHeader, fair: &FairHeader, now: SimTime) -> Delivery {
        self.counters.received += 1;
        if !clock_check(fair.timestamp, now) {
            self.counters.clock_drops += 1;
            return Delivery::Dropped(DropReason::Clock);
        }
        let icv_ok = compute_icv(&self.cipher, net.payload_len, fair.timestamp, fair.seqno) == fair.icv;
        let decision = self.policer.police(net.wire_len(), now);
        if decision == Decision::Violate {
            self.counters.violations += 1;
            self.violation_times.push(now);
        }
        self.store.append(
            self.channel.id,
            PacketRecord {
                net: *net,
                fair: fair.clone(),
                arrival: now,
            },
        );
        if !icv_ok {
            self.counters.icv_failures += 1;
            return Delivery::Dropped(DropReason::Icv);
        }
        self.counters.delivered += 1;
        let fair_len = crate::wire::encoded_len(fair.slots.len(), net.version.framing());
        Delivery::Accepted {
            conform: decision.conforms(),
            inner: net.stripped(fair_len, self.inner_next_header),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{KeyRegistry, SymKey};
    use crate::policy::{create_policy, dest_complete, establish_channel};
    use crate::wire::{encode_fair, Framing, IpVersion};
    use crate::{Asn, PortId, Prefix};
    use proptest::prelude::*;

    const T0: u64 = 1_700_000_000;

    fn net(len: u16) -> NetHeader {
        NetHeader {
            version: IpVersion::V6,
            src: [0x20, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1],
            dst: [0x20, 2, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1],
            payload_len: len,
            next_header: 253,
        }
    }

    fn fib_with(key: SymKey, seq: u32) -> Fib {
        let mut fib = Fib::new();
        let mut a = [0u8; 16];
        a[..2].copy_from_slice(&[0x20, 2]);
        fib.insert(Prefix::new(a, 16), FibEntry::channel(PortId(1), key, seq));
        fib
    }

    /// Modular-distance reference for the clock check.
    fn within_three(ts: u16, now: u16) -> bool {
        let fwd = ts.wrapping_sub(now);
        let back = now.wrapping_sub(ts);
        fwd.min(back) <= 3
    }

    #[test]
    fn clock_check_examples() {
        let at = |s: u64| SimTime::from_secs(s);
        assert!(clock_check(100, at(102)));
        assert!(!clock_check(100, at(104)));
        assert!(clock_check(65535, at(65536 + 1)));
    }

    #[test]
    fn clock_check_exhaustive_against_modular_distance() {
        for now in [0u16, 1, 2, 3, 4, 1000, 32768, 65532, 65533, 65534, 65535] {
            for ts in 0..=u16::MAX {
                assert_eq!(
                    clock_check(ts, SimTime::from_secs(now as u64)),
                    within_three(ts, now),
                    "ts={ts} now={now}"
                );
            }
        }
    }

    #[test]
    fn consecutive_sends_and_wrap() {
        let key = SymKey::from_bytes([3; 16]);
        let mut fib = fib_with(key, (1 << 24) - 2);
        let now = SimTime::from_secs(T0);
        let a = source_send(&mut fib, &net(50), now, 3).unwrap();
        let b = source_send(&mut fib, &net(50), now, 3).unwrap();
        let c = source_send(&mut fib, &net(50), now, 3).unwrap();
        assert_eq!((a.seqno, b.seqno, c.seqno), ((1 << 24) - 2, (1 << 24) - 1, 0));
        assert_eq!(a.slots.len(), 3);
        assert_eq!(a.icv, compute_icv(&key.cipher(), 50, T0 as u16, a.seqno));
        let mut other = net(50);
        other.dst[0] = 0x30;
        assert_eq!(source_send(&mut fib, &other, now, 3), Err(DropReason::NoRoute));
    }

    #[test]
    fn transit_marks_and_verifies() {
        let key = SymKey::from_bytes([4; 16]);
        let mut fib = fib_with(SymKey::from_bytes([5; 16]), 0);
        let now = SimTime::from_secs(T0);
        let n = net(60);
        let mut h = source_send(&mut fib, &n, now, 2).unwrap();
        let mut rng = Lcg::new(7);
        transit_forward(&key.cipher(), &mut rng, &n, &mut h, now + 500_000_000).unwrap();
        assert_eq!(h.next_as.index(), 1);
        let slot = h.slots[0];
        assert_eq!(
            slot.mac,
            compute_slot_mac(&key.cipher(), 60, h.timestamp, h.seqno, slot.nonce, MacWidth::SLOT)
        );
        // stale timestamp
        let mut stale = h.clone();
        assert_eq!(
            transit_forward(&key.cipher(), &mut rng, &n, &mut stale, SimTime::from_secs(T0 + 5)),
            Err(DropReason::Clock)
        );
        assert_eq!(stale, h);
        // all slots used
        transit_forward(&key.cipher(), &mut rng, &n, &mut h, now).unwrap();
        assert_eq!(
            transit_forward(&key.cipher(), &mut rng, &n, &mut h, now),
            Err(DropReason::Malformed)
        );
    }

    #[test]
    fn marking_keeps_length_and_suspicious_bit() {
        let key = SymKey::from_bytes([4; 16]);
        let mut fib = fib_with(SymKey::from_bytes([5; 16]), 0);
        let now = SimTime::from_secs(T0);
        let n = net(60);
        let mut h = source_send(&mut fib, &n, now, 4).unwrap();
        h.next_as.set_suspicious(true);
        let len = encode_fair(&h, Framing::Ipv6Eh).unwrap().len();
        let mut rng = Lcg::new(1);
        for _ in 0..4 {
            transit_forward(&key.cipher(), &mut rng, &n, &mut h, now).unwrap();
            assert_eq!(encode_fair(&h, Framing::Ipv6Eh).unwrap().len(), len);
        }
        assert!(h.next_as.suspicious());
        assert_eq!(h.next_as.index(), 4);
    }

    #[test]
    fn marker_is_stateless_apart_from_rng() {
        let keys = LocalKeys::new([9; 32], 60);
        let mut marker = TransitMarker::new(keys.clone(), 3);
        let fresh = TransitMarker::new(keys, 3);
        let mut fib = fib_with(SymKey::from_bytes([5; 16]), 0);
        let now = SimTime::from_secs(T0);
        for _ in 0..100 {
            let mut h = source_send(&mut fib, &net(80), now, 1).unwrap();
            marker.forward(&net(80), &mut h, now).unwrap();
        }
        let mut rng = fresh.rng().clone();
        for _ in 0..100 {
            rng.nonce();
        }
        assert_eq!(marker.rng(), &rng);
    }

    fn destination(cir: u64, cbs: u64) -> (Destination, SymKey) {
        let reg = KeyRegistry::deterministic(3, [Asn(1), Asn(2)]);
        let p = create_policy(&reg, Asn(1), T0, vec![]).unwrap();
        let p = dest_complete(p, &reg, Asn(2), T0 + 100, cir, cbs).unwrap();
        let ch = establish_channel(&reg, Asn(2), p).unwrap();
        let key = ch.k_sd;
        (Destination::new(ch, SimTime::from_secs(T0)), key)
    }

    #[test]
    fn destination_accepts_polices_and_stores() {
        let (mut dst, key) = destination(1000, 1000);
        let mut fib = fib_with(key, 0);
        let now = SimTime::from_secs(T0);
        let n = net(400);
        let h = source_send(&mut fib, &n, now, 0).unwrap();
        match dst.receive(&n, &h, now) {
            Delivery::Accepted { conform, inner } => {
                assert!(conform);
                assert_eq!(inner.payload_len, 400 - 9);
            }
            other => panic!("{other:?}"),
        }
        // 440 + 440 + 440 bytes at once: the third overflows a 1000-byte bucket
        let h2 = source_send(&mut fib, &n, now, 0).unwrap();
        assert!(matches!(
            dst.receive(&n, &h2, now),
            Delivery::Accepted { conform: true, .. }
        ));
        let h3 = source_send(&mut fib, &n, now, 0).unwrap();
        assert!(matches!(
            dst.receive(&n, &h3, now),
            Delivery::Accepted { conform: false, .. }
        ));

        let mut tampered = n;
        tampered.payload_len += 1;
        let h4 = source_send(&mut fib, &n, now, 0).unwrap();
        let before = dst.store().len();
        assert_eq!(dst.receive(&tampered, &h4, now), Delivery::Dropped(DropReason::Icv));
        assert_eq!(dst.store().len(), before + 1);
        assert_eq!(dst.counters().icv_failures, 1);
        assert_eq!(dst.counters().violations, 2);

        let h5 = source_send(&mut fib, &n, now, 0).unwrap();
        assert_eq!(
            dst.receive(&n, &h5, now + 4_000_000_000),
            Delivery::Dropped(DropReason::Clock)
        );
        assert_eq!(dst.store().len(), before + 1);
    }

    proptest! {
        #[test]
        fn honest_single_hop_never_fails(
            offsets in proptest::collection::vec(-500i64..=500, 3),
            latency_ms in 0u64..=1000,
            start_ms in 0u64..10_000,
        ) {
            // source, one transit, destination with bounded clock offsets
            let (mut dst, key) = destination(1_000_000, 1_000_000);
            let mut fib = fib_with(key, 0);
            let mut marker = TransitMarker::new(LocalKeys::new([1; 32], 60), 9);
            let n = net(100);
            let global = SimTime::from_secs(T0) + start_ms * 1_000_000;
            let ms = |x: i64| x * 1_000_000;
            let mut h = source_send(&mut fib, &n, global.offset(ms(offsets[0])), 1).unwrap();
            let mid = global + latency_ms * 500_000;
            prop_assert!(marker.forward(&n, &mut h, mid.offset(ms(offsets[1]))).is_ok());
            let end = global + latency_ms * 1_000_000;
            let delivered = matches!(
                dst.receive(&n, &h, end.offset(ms(offsets[2]))),
                Delivery::Accepted { .. }
            );
            prop_assert!(delivered);
        }
    }
}
