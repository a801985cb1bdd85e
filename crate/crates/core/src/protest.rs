//! Proofs of misbehavior.
//!
//! The destination bundles the policy with stored headers; every
//! cooperating transit checks the policy signatures, re-computes its own
//! slot MAC on each record and runs the token bucket over the records whose
//! MAC verified. Signed responses are then adjudicated together with the
//! duplicate-sequence-number evidence.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::crypto::{hash, sign, verify, Digest, KeyPair, KeyRegistry, LocalKeys, MacWidth, Signature};
use crate::dataplane::{compute_slot_mac, HeaderStore};
use crate::policy::{verify_policy, Channel, PolicyPacket};
use crate::tokenbucket::TokenBucket;
use crate::wire::{encode_dump, encode_policy, PacketRecord};
use crate::{unwrap_timestamp, Asn, SimTime, PROTEST_MARGIN_SECS};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProtestError {
    #[error("no records in the requested window")]
    EmptyWindow,
    #[error("evidence from second {oldest} is older than the protest margin at {complaint}")]
    Stale { oldest: u64, complaint: u64 },
    #[error("policy is incomplete")]
    IncompletePolicy,
    #[error("response from {0} has an invalid signature")]
    BadResponseSignature(Asn),
    #[error("response from {0} refers to a different bundle")]
    ForeignResponse(Asn),
    #[error("no key material for {0}")]
    UnknownSigner(Asn),
    #[error("a replay group needs at least two records")]
    SingletonGroup,
}

/// Policy plus stored headers, ordered by (timestamp, sequence number, slots).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EvidenceBundle {
    pub policy: PolicyPacket,
    pub records: Vec<PacketRecord>,
    /// Seconds.
    pub complaint_time: u64,
}

impl EvidenceBundle {
    /// Absolute second of a record's timestamp, resolved against the
    /// complaint time.
    pub fn record_secs(&self, record: &PacketRecord) -> u64 {
        unwrap_timestamp(record.fair.timestamp, self.complaint_time)
    }

    pub fn digest(&self) -> Digest {
        let mut bytes = encode_policy(&self.policy);
        bytes.extend_from_slice(&encode_dump(&self.records).expect("stored records encode"));
        bytes.extend_from_slice(&self.complaint_time.to_be_bytes());
        hash(&bytes)
    }

    pub(crate) fn sort(&mut self) {
        let t = self.complaint_time;
        self.records.sort_by(|a, b| {
            let key = |r: &PacketRecord| (unwrap_timestamp(r.fair.timestamp, t), r.fair.seqno);
            key(a)
                .cmp(&key(b))
                .then_with(|| a.fair.slots.cmp(&b.fair.slots))
                .then_with(|| a.arrival.cmp(&b.arrival))
        });
    }
}

/// Collects the channel's records that arrived within `window` (inclusive,
/// destination-local time) and whose timestamps fall inside the policy's
/// validity period.
pub fn assemble_evidence(
    store: &HeaderStore,
    channel: &Channel,
    window: Option<(SimTime, SimTime)>,
    complaint_time: SimTime,
) -> Result<EvidenceBundle, ProtestError> {
    if !channel.policy.is_complete() {
        return Err(ProtestError::IncompletePolicy);
    }
    let complaint = complaint_time.secs();
    let (start, expiration) = (channel.start(), channel.expiration());
    let records: Vec<PacketRecord> = store
        .records(&channel.id)
        .iter()
        .filter(|r| window.is_none_or(|(from, to)| r.arrival >= from && r.arrival <= to))
        .filter(|r| {
            let secs = unwrap_timestamp(r.fair.timestamp, complaint);
            secs + crate::CLOCK_TOLERANCE_SECS as u64 >= start && secs <= expiration
        })
        .cloned()
        .collect();
    let oldest = records
        .iter()
        .map(|r| unwrap_timestamp(r.fair.timestamp, complaint))
        .min()
        .ok_or(ProtestError::EmptyWindow)?;
    if complaint.saturating_sub(oldest) > PROTEST_MARGIN_SECS {
        return Err(ProtestError::Stale { oldest, complaint });
    }
    let mut bundle = EvidenceBundle {
        policy: channel.policy.clone(),
        records,
        complaint_time: complaint,
    };
    bundle.sort();
    Ok(bundle)
}

/// Outcome of running the quantized policer over a record sequence.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PolicingOutcome {
    pub checked: u64,
    /// Absolute timestamp second of every violating record.
    pub violation_secs: Vec<u64>,
}

impl PolicingOutcome {
    pub fn violations(&self) -> u64 {
        self.violation_secs.len() as u64
    }

    /// Violations per timestamp second.
    pub fn per_second(&self) -> BTreeMap<u64, u64> {
        let mut out = BTreeMap::new();
        for s in &self.violation_secs {
            *out.entry(*s).or_insert(0) += 1;
        }
        out
    }
}

/// Token bucket over timestamps: records are taken in (second, seqno)
/// order and the bucket refills once per second. `slack` extends the burst
/// size.
pub fn police_evidence(records: &[(u64, u32, u64)], cir: u64, cbs: u64, slack: u64) -> PolicingOutcome {
    let mut sorted = records.to_vec();
    sorted.sort_by_key(|&(secs, seqno, _)| (secs, seqno));
    let mut out = PolicingOutcome::default();
    let Some(&(first, _, _)) = sorted.first() else {
        return out;
    };
    let mut bucket = TokenBucket::new(cir, cbs + slack, SimTime::from_secs(first))
        .expect("policy parameters are positive")
        .quantized(1_000_000_000);
    for (secs, _, len) in sorted {
        out.checked += 1;
        if !bucket.police(len, SimTime::from_secs(secs)).conforms() {
            out.violation_secs.push(secs);
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Admission {
    Admit,
    Reject,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    None,
    PolicySignature,
    NotEndorsed,
    NoViolation,
}

/// A transit AS's signed answer to a complaint.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ComplaintResponse {
    pub asn: Asn,
    pub admission: Admission,
    pub reason: RejectReason,
    pub mac_failures: u64,
    pub mac_checked: u64,
    pub tb_violations: u64,
    pub bundle_digest: Digest,
    pub sig: Signature,
}

impl ComplaintResponse {
    fn signed_bytes(
        asn: Asn,
        admission: Admission,
        reason: RejectReason,
        counts: [u64; 3],
        bundle_digest: &Digest,
    ) -> Vec<u8> {
        let mut out = Vec::with_capacity(64);
        out.extend_from_slice(b"fair/response");
        out.extend_from_slice(&asn.0.to_be_bytes());
        out.push(admission as u8);
        out.push(reason as u8);
        for c in counts {
            out.extend_from_slice(&c.to_be_bytes());
        }
        out.extend_from_slice(bundle_digest);
        out
    }

    /// Builds and signs a response with the given findings.
    #[allow(clippy::too_many_arguments)]
    pub fn signed(
        keys: &KeyPair,
        asn: Asn,
        admission: Admission,
        reason: RejectReason,
        mac_failures: u64,
        mac_checked: u64,
        tb_violations: u64,
        bundle_digest: Digest,
    ) -> Self {
        let msg = Self::signed_bytes(
            asn,
            admission,
            reason,
            [mac_failures, mac_checked, tb_violations],
            &bundle_digest,
        );
        ComplaintResponse {
            asn,
            admission,
            reason,
            mac_failures,
            mac_checked,
            tb_violations,
            bundle_digest,
            sig: sign(keys, &msg),
        }
    }

    pub fn verify(&self, registry: &KeyRegistry) -> bool {
        let msg = Self::signed_bytes(
            self.asn,
            self.admission,
            self.reason,
            [self.mac_failures, self.mac_checked, self.tb_violations],
            &self.bundle_digest,
        );
        registry
            .public_key(self.asn)
            .is_ok_and(|public| verify(public, &msg, &self.sig))
    }

    pub fn admits(&self) -> bool {
        self.admission == Admission::Admit
    }

    pub fn failure_fraction(&self) -> f64 {
        if self.mac_checked == 0 {
            0.0
        } else {
            self.mac_failures as f64 / self.mac_checked as f64
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExamineParams {
    /// Extra burst allowance for the evidence policer, bytes.
    pub slack: u64,
    pub mac_width: MacWidth,
}

impl Default for ExamineParams {
    fn default() -> Self {
        ExamineParams {
            slack: 0,
            mac_width: MacWidth::SLOT,
        }
    }
}

/// Whether `asn`'s slot MAC on `record` verifies under any key epoch that
/// could have been current when it was stamped.
pub fn slot_mac_valid(keys: &LocalKeys, slot: usize, record: &PacketRecord, secs: u64, width: MacWidth) -> bool {
    let Some(s) = record.fair.slots.get(slot) else {
        return false;
    };
    let f = &record.fair;
    keys.candidate_epochs(secs).into_iter().any(|e| {
        let cipher = keys.data_key(e).cipher();
        compute_slot_mac(&cipher, record.net.payload_len, f.timestamp, f.seqno, s.nonce, width) == s.mac
    })
}

/// Findings of the three-step examination, before signing.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Examination {
    pub admission: Admission,
    pub reason: RejectReason,
    pub mac_failures: u64,
    pub mac_checked: u64,
    pub policing: PolicingOutcome,
}

/// The three-step examination by transit `asn`: policy signatures, own slot
/// MACs, then the token bucket over the records whose MAC verified.
pub fn examine(
    asn: Asn,
    keys: &LocalKeys,
    bundle: &EvidenceBundle,
    registry: &KeyRegistry,
    params: &ExamineParams,
) -> Examination {
    let reject = |reason| Examination {
        admission: Admission::Reject,
        reason,
        mac_failures: 0,
        mac_checked: 0,
        policing: PolicingOutcome::default(),
    };
    let report = verify_policy(&bundle.policy, registry, Some((asn, keys)));
    if !report.signatures_valid() || !report.path_consistent {
        return reject(RejectReason::PolicySignature);
    }
    let source = bundle.policy.source().expect("verified");
    let dest = bundle.policy.dest().expect("verified");
    let (Some(true), Some(slot)) = (report.own_mac, source.path.iter().position(|&a| a == asn)) else {
        return reject(RejectReason::NotEndorsed);
    };

    let mut mac_failures = 0;
    let mut mac_checked = 0;
    let mut valid = Vec::with_capacity(bundle.records.len());
    for record in &bundle.records {
        let secs = bundle.record_secs(record);
        if secs > dest.expiration {
            continue;
        }
        mac_checked += 1;
        if slot_mac_valid(keys, slot, record, secs, params.mac_width) {
            valid.push((secs, record.fair.seqno, record.net.wire_len()));
        } else {
            mac_failures += 1;
        }
    }
    let policing = police_evidence(&valid, dest.cir, dest.cbs, params.slack);
    let (admission, reason) = if policing.violations() > 0 {
        (Admission::Admit, RejectReason::None)
    } else {
        (Admission::Reject, RejectReason::NoViolation)
    };
    Examination {
        admission,
        reason,
        mac_failures,
        mac_checked,
        policing,
    }
}

/// [`examine`] followed by signing with `asn`'s key from the registry.
pub fn examine_complaint(
    asn: Asn,
    keys: &LocalKeys,
    bundle: &EvidenceBundle,
    registry: &KeyRegistry,
    params: &ExamineParams,
) -> Result<ComplaintResponse, ProtestError> {
    let signer = registry.keypair(asn).map_err(|_| ProtestError::UnknownSigner(asn))?;
    let e = examine(asn, keys, bundle, registry, params);
    Ok(ComplaintResponse::signed(
        signer,
        asn,
        e.admission,
        e.reason,
        e.mac_failures,
        e.mac_checked,
        e.policing.violations(),
        bundle.digest(),
    ))
}

/// Indices of records sharing one (timestamp, sequence number).
pub type DuplicateGroup = Vec<usize>;

/// Groups of at least two records with the same absolute timestamp second
/// and sequence number.
pub fn detect_replay(bundle: &EvidenceBundle) -> Vec<DuplicateGroup> {
    let mut groups: BTreeMap<(u64, u32), Vec<usize>> = BTreeMap::new();
    for (i, r) in bundle.records.iter().enumerate() {
        groups.entry((bundle.record_secs(r), r.fair.seqno)).or_default().push(i);
    }
    groups.into_values().filter(|g| g.len() > 1).collect()
}

/// A stretch of the path between two adjacent cooperating entities.
/// Positions count the source as 0, cooperating transits as 1..=n and the
/// destination as n + 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Interval {
    pub upstream: Asn,
    pub downstream: Asn,
    pub upstream_pos: usize,
}

impl Interval {
    pub fn downstream_pos(&self) -> usize {
        self.upstream_pos + 1
    }

    /// Whether the entity at path position `pos` is an endpoint.
    pub fn contains(&self, pos: usize) -> bool {
        pos == self.upstream_pos || pos == self.downstream_pos()
    }
}

/// Source, cooperating transits and destination of a policy, in order.
pub fn path_entities(policy: &PolicyPacket) -> Vec<Asn> {
    let mut out = Vec::new();
    if let Some(s) = policy.source() {
        out.push(s.asn);
        out.extend(s.path.iter().copied());
    }
    if let Some(d) = policy.dest() {
        out.push(d.asn);
    }
    out
}

fn interval_at(entities: &[Asn], upstream_pos: usize) -> Interval {
    let upstream_pos = upstream_pos.min(entities.len().saturating_sub(2));
    Interval {
        upstream: entities[upstream_pos],
        downstream: entities[upstream_pos + 1],
        upstream_pos,
    }
}

/// Number of leading cooperating slots whose nonce is identical across the
/// group.
pub fn identical_prefix(bundle: &EvidenceBundle, group: &[usize]) -> Result<usize, ProtestError> {
    if group.len() < 2 {
        return Err(ProtestError::SingletonGroup);
    }
    let slots = |i: usize| &bundle.records[i].fair.slots;
    let n = group.iter().map(|&i| slots(i).len()).min().unwrap_or(0);
    let first = slots(group[0]);
    Ok((0..n)
        .take_while(|&k| group[1..].iter().all(|&i| slots(i)[k].nonce == first[k].nonce))
        .count())
}

/// Localizes a single duplicate group: if the first `j` slots repeat, the
/// duplication happened between the `j`-th cooperating entity and the next.
pub fn localize_adversary(bundle: &EvidenceBundle, group: &[usize]) -> Result<Interval, ProtestError> {
    let j = identical_prefix(bundle, group)?;
    Ok(interval_at(&path_entities(&bundle.policy), j))
}

/// Localizes over all groups. Fresh 4-bit nonces coincide by chance, which
/// can only lengthen a group's identical prefix, so the shortest prefix
/// over all groups is the estimate.
pub fn localize_replay(bundle: &EvidenceBundle, groups: &[DuplicateGroup]) -> Result<Option<Interval>, ProtestError> {
    let mut best: Option<usize> = None;
    for g in groups {
        let j = identical_prefix(bundle, g)?;
        best = Some(best.map_or(j, |b| b.min(j)));
    }
    Ok(best.map(|j| interval_at(&path_entities(&bundle.policy), j)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    SourceGuilty,
    EnrouteAdversary { interval: Interval },
    ReplayDetected { interval: Interval },
    FramingSuspected,
    Rejected,
}

impl Outcome {
    pub fn name(&self) -> &'static str {
        match self {
            Outcome::SourceGuilty => "source_guilty",
            Outcome::EnrouteAdversary { .. } => "enroute_adversary",
            Outcome::ReplayDetected { .. } => "replay_detected",
            Outcome::FramingSuspected => "framing_suspected",
            Outcome::Rejected => "rejected",
        }
    }

    pub fn interval(&self) -> Option<Interval> {
        match self {
            Outcome::EnrouteAdversary { interval } | Outcome::ReplayDetected { interval } => Some(*interval),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Verdict {
    /// Source AS of the channel under complaint.
    pub source: Asn,
    pub outcome: Outcome,
    /// Admitting transits in path order.
    pub admitting: Vec<Asn>,
    pub duplicate_groups: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdjudicateParams {
    /// MAC failure fraction above which a response indicates tampering.
    pub theta: f64,
}

impl Default for AdjudicateParams {
    fn default() -> Self {
        AdjudicateParams { theta: 2.0 / 16.0 }
    }
}

/// Second-round classification of the collected responses.
///
/// In order: duplicate evidence means replay; no admission means either an
/// en-route adversary (if MACs were tampered with) or no case; unanimous
/// clean admission convicts the source; otherwise the adversary sits just
/// upstream of the admitting destination-side suffix, and admissions that
/// fit no such pattern suggest framing.
pub fn adjudicate(
    responses: &[ComplaintResponse],
    bundle: &EvidenceBundle,
    registry: &KeyRegistry,
    params: &AdjudicateParams,
) -> Result<Verdict, ProtestError> {
    let digest = bundle.digest();
    for r in responses {
        if !r.verify(registry) {
            return Err(ProtestError::BadResponseSignature(r.asn));
        }
        if r.bundle_digest != digest {
            return Err(ProtestError::ForeignResponse(r.asn));
        }
    }
    let entities = path_entities(&bundle.policy);
    let transits = &entities[1..entities.len() - 1];
    let response = |asn: Asn| responses.iter().find(|r| r.asn == asn);
    let admits: Vec<bool> = transits
        .iter()
        .map(|&a| response(a).is_some_and(|r| r.admits()))
        .collect();
    let suspicious: Vec<bool> = transits
        .iter()
        .map(|&a| response(a).is_some_and(|r| r.failure_fraction() > params.theta))
        .collect();
    let admitting: Vec<Asn> = transits
        .iter()
        .zip(&admits)
        .filter(|(_, &ok)| ok)
        .map(|(&a, _)| a)
        .collect();
    let groups = detect_replay(bundle);
    let verdict = |outcome| Verdict {
        source: entities[0],
        outcome,
        admitting: admitting.clone(),
        duplicate_groups: groups.len(),
    };

    if let Some(interval) = localize_replay(bundle, &groups)? {
        return Ok(verdict(Outcome::ReplayDetected { interval }));
    }
    let last_suspicious = suspicious.iter().rposition(|&s| s);
    if admitting.is_empty() {
        return Ok(verdict(match last_suspicious {
            Some(k) => Outcome::EnrouteAdversary {
                interval: Interval {
                    upstream: transits[k],
                    downstream: *entities.last().expect("destination"),
                    upstream_pos: k + 1,
                },
            },
            None => Outcome::Rejected,
        }));
    }
    if admits.iter().all(|&a| a) {
        return Ok(verdict(match last_suspicious {
            None => Outcome::SourceGuilty,
            Some(k) => Outcome::EnrouteAdversary {
                interval: interval_at(&entities, k + 1),
            },
        }));
    }
    // first admitting position (1-based among entities)
    let a = admits.iter().position(|&x| x).expect("someone admits") + 1;
    if admits[a - 1..].iter().all(|&x| x) {
        return Ok(verdict(Outcome::EnrouteAdversary {
            interval: interval_at(&entities, a - 1),
        }));
    }
    Ok(verdict(Outcome::FramingSuspected))
}
