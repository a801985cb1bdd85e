use super::{Reader, WireError};
use crate::crypto::{Signature, SIGNATURE_LEN};
use crate::Asn;

const TAG_SOURCE: u8 = 0x00;
const TAG_TRANSIT: u8 = 0x01;
const TAG_DEST: u8 = 0x02;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SourceRecord {
    pub asn: Asn,
    pub time: u64,
    /// Cooperating transit ASes, source side first.
    pub path: Vec<Asn>,
    pub sig: Signature,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransitRecord {
    pub asn: Asn,
    pub mac: [u8; 16],
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DestRecord {
    pub asn: Asn,
    pub expiration: u64,
    /// Bytes per second.
    pub cir: u64,
    /// Bytes.
    pub cbs: u64,
    pub sig: Signature,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PolicyRecord {
    Source(SourceRecord),
    Transit(TransitRecord),
    Dest(DestRecord),
}

impl PolicyRecord {
    pub fn asn(&self) -> Asn {
        match self {
            PolicyRecord::Source(r) => r.asn,
            PolicyRecord::Transit(r) => r.asn,
            PolicyRecord::Dest(r) => r.asn,
        }
    }

    pub fn encode_into(&self, out: &mut Vec<u8>) {
        match self {
            PolicyRecord::Source(r) => {
                SourceRecord::unsigned_into(r.asn, r.time, &r.path, out);
                put_sig(&r.sig, out);
            }
            PolicyRecord::Transit(r) => {
                TransitRecord::unsigned_into(r.asn, out);
                out.extend_from_slice(&r.mac);
            }
            PolicyRecord::Dest(r) => {
                DestRecord::unsigned_into(r.asn, r.expiration, r.cir, r.cbs, out);
                put_sig(&r.sig, out);
            }
        }
    }

    fn decode(r: &mut Reader<'_>) -> Result<Self, WireError> {
        let tag = r.u8()?;
        let asn = Asn(r.u32()?);
        Ok(match tag {
            TAG_SOURCE => {
                let time = r.u64()?;
                let n = r.u16()? as usize;
                let path = (0..n).map(|_| r.u32().map(Asn)).collect::<Result<_, _>>()?;
                let sig = get_sig(r)?;
                PolicyRecord::Source(SourceRecord { asn, time, path, sig })
            }
            TAG_TRANSIT => PolicyRecord::Transit(TransitRecord { asn, mac: r.array()? }),
            TAG_DEST => {
                let expiration = r.u64()?;
                let cir = r.u64()?;
                let cbs = r.u64()?;
                let sig = get_sig(r)?;
                PolicyRecord::Dest(DestRecord {
                    asn,
                    expiration,
                    cir,
                    cbs,
                    sig,
                })
            }
            t => return Err(WireError::RecordTag(t)),
        })
    }
}

impl SourceRecord {
    /// The fields covered by the source signature.
    pub fn unsigned_into(asn: Asn, time: u64, path: &[Asn], out: &mut Vec<u8>) {
        out.push(TAG_SOURCE);
        out.extend_from_slice(&asn.0.to_be_bytes());
        out.extend_from_slice(&time.to_be_bytes());
        out.extend_from_slice(&(path.len() as u16).to_be_bytes());
        for a in path {
            out.extend_from_slice(&a.0.to_be_bytes());
        }
    }
}

impl TransitRecord {
    pub fn unsigned_into(asn: Asn, out: &mut Vec<u8>) {
        out.push(TAG_TRANSIT);
        out.extend_from_slice(&asn.0.to_be_bytes());
    }
}

impl DestRecord {
    pub fn unsigned_into(asn: Asn, expiration: u64, cir: u64, cbs: u64, out: &mut Vec<u8>) {
        out.push(TAG_DEST);
        out.extend_from_slice(&asn.0.to_be_bytes());
        out.extend_from_slice(&expiration.to_be_bytes());
        out.extend_from_slice(&cir.to_be_bytes());
        out.extend_from_slice(&cbs.to_be_bytes());
    }
}

fn put_sig(sig: &Signature, out: &mut Vec<u8>) {
    out.extend_from_slice(&(SIGNATURE_LEN as u16).to_be_bytes());
    out.extend_from_slice(sig.as_bytes());
}

fn get_sig(r: &mut Reader<'_>) -> Result<Signature, WireError> {
    let len = r.u16()? as usize;
    if len != SIGNATURE_LEN {
        return Err(WireError::SignatureLength(len));
    }
    Ok(Signature(r.array()?))
}

/// A sending policy, complete or still being built. Records are kept in
/// construction order: source, endorsing transits, destination.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolicyPacket {
    pub records: Vec<PolicyRecord>,
}

impl PolicyPacket {
    pub fn source(&self) -> Option<&SourceRecord> {
        match self.records.first() {
            Some(PolicyRecord::Source(r)) => Some(r),
            _ => None,
        }
    }

    pub fn dest(&self) -> Option<&DestRecord> {
        match self.records.last() {
            Some(PolicyRecord::Dest(r)) => Some(r),
            _ => None,
        }
    }

    pub fn transits(&self) -> impl Iterator<Item = &TransitRecord> {
        self.records.iter().filter_map(|r| match r {
            PolicyRecord::Transit(t) => Some(t),
            _ => None,
        })
    }

    pub fn is_complete(&self) -> bool {
        self.dest().is_some()
    }

    /// Canonical encoding of the first `count` records, the prefix that a
    /// later record's signature or MAC covers.
    pub fn prefix_bytes(&self, count: usize) -> Vec<u8> {
        let mut out = Vec::new();
        for r in &self.records[..count] {
            r.encode_into(&mut out);
        }
        out
    }

    /// One source record first, at most one destination record last,
    /// transit records in between appearing in declared path order.
    pub fn check_structure(&self) -> Result<(), WireError> {
        let source = self
            .source()
            .ok_or(WireError::Policy("first record is not the source"))?;
        let body_end = if self.is_complete() {
            self.records.len() - 1
        } else {
            self.records.len()
        };
        let mut path = source.path.iter();
        for r in &self.records[1..body_end] {
            let PolicyRecord::Transit(t) = r else {
                return Err(WireError::Policy("source or destination record out of place"));
            };
            if !path.any(|&a| a == t.asn) {
                return Err(WireError::Policy(
                    "transit record outside the declared path or out of order",
                ));
            }
        }
        Ok(())
    }
}

pub fn encode_policy(p: &PolicyPacket) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&(p.records.len() as u16).to_be_bytes());
    for r in &p.records {
        r.encode_into(&mut out);
    }
    out
}

pub fn decode_policy(bytes: &[u8]) -> Result<PolicyPacket, WireError> {
    let mut r = Reader::new(bytes);
    let n = r.u16()? as usize;
    let records = (0..n).map(|_| PolicyRecord::decode(&mut r)).collect::<Result<_, _>>()?;
    r.finish()?;
    let p = PolicyPacket { records };
    p.check_structure()?;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sig(b: u8) -> Signature {
        Signature([b; 64])
    }

    fn policy(transits: &[u32]) -> PolicyPacket {
        let path: Vec<Asn> = transits.iter().map(|&a| Asn(a)).collect();
        let mut records = vec![PolicyRecord::Source(SourceRecord {
            asn: Asn(100),
            time: 1_700_000_000,
            path: path.clone(),
            sig: sig(1),
        })];
        for (i, a) in path.iter().enumerate() {
            records.push(PolicyRecord::Transit(TransitRecord {
                asn: *a,
                mac: [i as u8; 16],
            }));
        }
        records.push(PolicyRecord::Dest(DestRecord {
            asn: Asn(200),
            expiration: 1_700_043_200,
            cir: 125_000_000,
            cbs: 125_000_000,
            sig: sig(2),
        }));
        PolicyPacket { records }
    }

    #[test]
    fn source_record_layout() {
        let p = PolicyPacket {
            records: policy(&[7]).records[..1].to_vec(),
        };
        let bytes = encode_policy(&p);
        let mut expected = vec![0, 1, 0x00, 0, 0, 0, 100];
        expected.extend_from_slice(&1_700_000_000u64.to_be_bytes());
        expected.extend_from_slice(&[0, 1, 0, 0, 0, 7, 0, 64]);
        expected.extend_from_slice(&[1; 64]);
        assert_eq!(bytes, expected);
    }

    #[test]
    fn three_transits_give_five_records() {
        let p = policy(&[1, 2, 3]);
        let back = decode_policy(&encode_policy(&p)).unwrap();
        assert_eq!(back.records.len(), 5);
        let order: Vec<u32> = back.records.iter().map(|r| r.asn().0).collect();
        assert_eq!(order, [100, 1, 2, 3, 200]);
    }

    #[test]
    fn reordered_records_are_rejected() {
        let mut p = policy(&[1, 2, 3]);
        p.records.swap(1, 2);
        assert!(matches!(decode_policy(&encode_policy(&p)), Err(WireError::Policy(_))));
        let mut p = policy(&[1, 2]);
        p.records.swap(0, 3);
        assert!(matches!(decode_policy(&encode_policy(&p)), Err(WireError::Policy(_))));
    }

    #[test]
    fn bad_tag_and_signature_length() {
        let mut bytes = encode_policy(&policy(&[]));
        bytes[2] = 0x09;
        assert_eq!(decode_policy(&bytes), Err(WireError::RecordTag(9)));
        let mut bytes = encode_policy(&policy(&[]));
        // source sig length field follows tag, asn, time and an empty path
        bytes[2 + 1 + 4 + 8 + 2 + 1] = 63;
        assert_eq!(decode_policy(&bytes), Err(WireError::SignatureLength(63)));
    }

    proptest! {
        #[test]
        fn encoding_is_canonical(transits in proptest::collection::btree_set(1u32..1000, 0..8), drop_some in any::<u8>()) {
            let all: Vec<u32> = transits.into_iter().collect();
            let mut p = policy(&all);
            // endorsements may be missing for some declared ASes
            let mut i = 1;
            let mut bit = 0;
            while i < p.records.len() - 1 {
                if drop_some >> (bit % 8) & 1 == 1 {
                    p.records.remove(i);
                } else {
                    i += 1;
                }
                bit += 1;
            }
            let bytes = encode_policy(&p);
            let back = decode_policy(&bytes).unwrap();
            prop_assert_eq!(&back, &p);
            prop_assert_eq!(encode_policy(&back), bytes);
        }
    }
}
