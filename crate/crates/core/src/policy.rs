//! Sending-policy setup.
//!
//! The source signs its ASN, the start time and the list of cooperating
//! transits; each cooperating transit appends its ASN and a MAC under its
//! control-plane key over everything before it; the destination appends the
//! expiration and token-bucket parameters and signs the whole packet.

use thiserror::Error;

use crate::crypto::{
    derive_shared_key, digest_mac, hash, hash_parts, sign, verify, CryptoError, Digest, KeyRegistry, LocalKeys, SymKey,
};
use crate::wire::WireError;
pub use crate::wire::{DestRecord, PolicyPacket, PolicyRecord, SourceRecord, TransitRecord};
use crate::Asn;

/// Default sending policy every destination advertises before negotiation:
/// 1 Gbit/s with a one-second burst.
pub const DEFAULT_CIR: u64 = 125_000_000;
pub const DEFAULT_CBS: u64 = DEFAULT_CIR;

const SEQNO_MOD: u32 = 1 << 24;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PolicyError {
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error(transparent)]
    Structure(#[from] WireError),
    #[error("{0} is not in the declared cooperating path")]
    NotInPath(Asn),
    #[error("source signature does not verify")]
    SourceSignature,
    #[error("destination signature does not verify")]
    DestSignature,
    #[error("expiration {expiration} is not after the start time {start}")]
    Expiration { expiration: u64, start: u64 },
    #[error("policy is already complete")]
    Complete,
    #[error("policy is not complete")]
    Incomplete,
    #[error("{0} is neither endpoint of the channel")]
    NotEndpoint(Asn),
}

/// Step 1: the source's signed record.
pub fn create_policy(
    registry: &KeyRegistry,
    src: Asn,
    now_secs: u64,
    path: Vec<Asn>,
) -> Result<PolicyPacket, PolicyError> {
    let keys = registry.keypair(src)?;
    let mut signed = Vec::new();
    SourceRecord::unsigned_into(src, now_secs, &path, &mut signed);
    let sig = sign(keys, &signed);
    Ok(PolicyPacket {
        records: vec![PolicyRecord::Source(SourceRecord {
            asn: src,
            time: now_secs,
            path,
            sig,
        })],
    })
}

fn transit_mac(p: &PolicyPacket, upto: usize, asn: Asn, key: &SymKey) -> [u8; 16] {
    let mut input = p.prefix_bytes(upto);
    TransitRecord::unsigned_into(asn, &mut input);
    digest_mac(key, &hash(&input))
}

/// Step 2: a cooperating transit appends its ASN and chained MAC. It keeps
/// no state about the policy.
pub fn transit_endorse(mut p: PolicyPacket, asn: Asn, control_key: &SymKey) -> Result<PolicyPacket, PolicyError> {
    if p.is_complete() {
        return Err(PolicyError::Complete);
    }
    let source = p.source().ok_or(WireError::Policy("first record is not the source"))?;
    if !source.path.contains(&asn) {
        return Err(PolicyError::NotInPath(asn));
    }
    let mac = transit_mac(&p, p.records.len(), asn, control_key);
    p.records.push(PolicyRecord::Transit(TransitRecord { asn, mac }));
    p.check_structure()?;
    Ok(p)
}

fn source_signature_valid(p: &PolicyPacket, registry: &KeyRegistry) -> bool {
    let Some(source) = p.source() else {
        return false;
    };
    let Ok(public) = registry.public_key(source.asn) else {
        return false;
    };
    let mut signed = Vec::new();
    SourceRecord::unsigned_into(source.asn, source.time, &source.path, &mut signed);
    verify(public, &signed, &source.sig)
}

/// Step 3: the destination checks the source signature, then adds and signs
/// the expiration and token-bucket parameters.
pub fn dest_complete(
    mut p: PolicyPacket,
    registry: &KeyRegistry,
    asn: Asn,
    expiration: u64,
    cir: u64,
    cbs: u64,
) -> Result<PolicyPacket, PolicyError> {
    if p.is_complete() {
        return Err(PolicyError::Complete);
    }
    p.check_structure()?;
    if !source_signature_valid(&p, registry) {
        return Err(PolicyError::SourceSignature);
    }
    let start = p.source().map(|s| s.time).unwrap_or_default();
    if expiration <= start {
        return Err(PolicyError::Expiration { expiration, start });
    }
    let keys = registry.keypair(asn)?;
    let mut signed = p.prefix_bytes(p.records.len());
    DestRecord::unsigned_into(asn, expiration, cir, cbs, &mut signed);
    let sig = sign(keys, &signed);
    p.records.push(PolicyRecord::Dest(DestRecord {
        asn,
        expiration,
        cir,
        cbs,
        sig,
    }));
    Ok(p)
}

/// Findings of an examination of a final policy.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolicyReport {
    pub source_sig: bool,
    pub dest_sig: bool,
    /// `None` when the examiner has no record of its own in the policy or
    /// examined without keys.
    pub own_mac: Option<bool>,
    /// Transit records form an in-order subsequence of the declared path.
    pub path_consistent: bool,
    /// Declared cooperating ASes that did not endorse.
    pub missing: Vec<Asn>,
}

impl PolicyReport {
    pub fn signatures_valid(&self) -> bool {
        self.source_sig && self.dest_sig
    }
}

/// Checks both endpoint signatures and, for a transit examiner, its own
/// MAC. The MAC is tried under the control keys of the epochs around the
/// policy's start time.
pub fn verify_policy(p: &PolicyPacket, registry: &KeyRegistry, examiner: Option<(Asn, &LocalKeys)>) -> PolicyReport {
    let source_sig = source_signature_valid(p, registry);
    let dest_sig = match p.dest() {
        Some(d) => registry.public_key(d.asn).is_ok_and(|public| {
            let mut signed = p.prefix_bytes(p.records.len() - 1);
            DestRecord::unsigned_into(d.asn, d.expiration, d.cir, d.cbs, &mut signed);
            verify(public, &signed, &d.sig)
        }),
        None => false,
    };
    let own_mac = examiner.and_then(|(asn, keys)| {
        let start = p.source()?.time;
        let i = p
            .records
            .iter()
            .position(|r| matches!(r, PolicyRecord::Transit(t) if t.asn == asn))?;
        let PolicyRecord::Transit(record) = &p.records[i] else {
            unreachable!()
        };
        let ok = keys
            .candidate_epochs(start)
            .into_iter()
            .any(|e| transit_mac(p, i, asn, &keys.control_key(e)) == record.mac);
        Some(ok)
    });
    let path_consistent = p.check_structure().is_ok() && p.is_complete();
    let missing = p
        .source()
        .map(|s| {
            s.path
                .iter()
                .copied()
                .filter(|a| !p.transits().any(|t| t.asn == *a))
                .collect()
        })
        .unwrap_or_default();
    PolicyReport {
        source_sig,
        dest_sig,
        own_mac,
        path_consistent,
        missing,
    }
}

/// Channel identifier: hash of source ASN, declared path and destination ASN.
pub fn channel_id(src: Asn, path: &[Asn], dst: Asn) -> Digest {
    let mut path_bytes = Vec::with_capacity(path.len() * 4);
    for a in path {
        path_bytes.extend_from_slice(&a.0.to_be_bytes());
    }
    hash_parts([&src.0.to_be_bytes()[..], &path_bytes, &dst.0.to_be_bytes()])
}

/// One endpoint's view of an established channel.
#[derive(Clone, Debug)]
pub struct Channel {
    pub id: Digest,
    pub src: Asn,
    pub dst: Asn,
    pub path: Vec<Asn>,
    pub k_sd: SymKey,
    pub policy: PolicyPacket,
    seq_counter: u32,
}

impl Channel {
    pub fn cir(&self) -> u64 {
        self.policy.dest().map(|d| d.cir).unwrap_or(DEFAULT_CIR)
    }

    pub fn cbs(&self) -> u64 {
        self.policy.dest().map(|d| d.cbs).unwrap_or(DEFAULT_CBS)
    }

    pub fn start(&self) -> u64 {
        self.policy.source().map(|s| s.time).unwrap_or_default()
    }

    pub fn expiration(&self) -> u64 {
        self.policy.dest().map(|d| d.expiration).unwrap_or(u64::MAX)
    }

    /// Value the next packet will carry.
    pub fn seq_counter(&self) -> u32 {
        self.seq_counter
    }

    pub fn set_seq_counter(&mut self, value: u32) {
        self.seq_counter = value % SEQNO_MOD;
    }

    /// Returns the current counter and advances it modulo 2^24.
    pub fn next_seqno(&mut self) -> u32 {
        let v = self.seq_counter;
        self.seq_counter = (v + 1) % SEQNO_MOD;
        v
    }
}

/// Step 4: after checking both signatures, `local` (source or destination)
/// derives the shared key with the other endpoint.
pub fn establish_channel(registry: &KeyRegistry, local: Asn, p: PolicyPacket) -> Result<Channel, PolicyError> {
    let report = verify_policy(&p, registry, None);
    if !report.path_consistent {
        return Err(PolicyError::Incomplete);
    }
    if !report.source_sig {
        return Err(PolicyError::SourceSignature);
    }
    if !report.dest_sig {
        return Err(PolicyError::DestSignature);
    }
    let source = p.source().expect("checked");
    let dest = p.dest().expect("checked");
    let (src, dst) = (source.asn, dest.asn);
    let peer = if local == src {
        dst
    } else if local == dst {
        src
    } else {
        return Err(PolicyError::NotEndpoint(local));
    };
    let k_sd = derive_shared_key(registry.keypair(local)?, registry.public_key(peer)?);
    Ok(Channel {
        id: channel_id(src, &source.path, dst),
        src,
        dst,
        path: source.path.clone(),
        k_sd,
        policy: p,
        seq_counter: 0,
    })
}
