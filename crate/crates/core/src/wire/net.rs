use serde::{Deserialize, Serialize};

use super::fair::{decode_fair, encode_fair_into, FairHeader, Framing, NO_NEXT_HEADER};
use super::{Reader, WireError};
use crate::SimTime;

pub const IPV4_HEADER_LEN: usize = 20;
pub const IPV6_HEADER_LEN: usize = 40;

/// Protocol number announcing the marking header (experimental range).
pub const FAIR_PROTOCOL: u8 = 253;

const HOP_LIMIT: u8 = 64;
const V4_MAPPED: [u8; 12] = [0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0xff, 0xff];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IpVersion {
    V4,
    V6,
}

impl IpVersion {
    pub fn header_len(self) -> usize {
        match self {
            IpVersion::V4 => IPV4_HEADER_LEN,
            IpVersion::V6 => IPV6_HEADER_LEN,
        }
    }

    /// Framing of the marking header behind this network header.
    pub fn framing(self) -> Framing {
        match self {
            IpVersion::V4 => Framing::Raw,
            IpVersion::V6 => Framing::Ipv6Eh,
        }
    }
}

/// The fields of the fixed network header that matter here. IPv4 addresses
/// are stored IPv4-mapped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NetHeader {
    pub version: IpVersion,
    pub src: [u8; 16],
    pub dst: [u8; 16],
    /// Everything after the fixed header, marking header included.
    pub payload_len: u16,
    pub next_header: u8,
}

impl NetHeader {
    pub fn header_len(&self) -> usize {
        self.version.header_len()
    }

    /// On-wire size of the packet, the quantity the token buckets meter.
    pub fn wire_len(&self) -> u64 {
        self.header_len() as u64 + self.payload_len as u64
    }

    pub fn encode_into(&self, out: &mut Vec<u8>) -> Result<(), WireError> {
        match self.version {
            IpVersion::V6 => {
                out.extend_from_slice(&[0x60, 0, 0, 0]);
                out.extend_from_slice(&self.payload_len.to_be_bytes());
                out.push(self.next_header);
                out.push(HOP_LIMIT);
                out.extend_from_slice(&self.src);
                out.extend_from_slice(&self.dst);
            }
            IpVersion::V4 => {
                let total = (IPV4_HEADER_LEN as u16)
                    .checked_add(self.payload_len)
                    .ok_or(WireError::Ipv4Length(self.payload_len))?;
                let (src, dst) = (v4_part(&self.src)?, v4_part(&self.dst)?);
                out.extend_from_slice(&[0x45, 0]);
                out.extend_from_slice(&total.to_be_bytes());
                out.extend_from_slice(&[0, 0, 0, 0, HOP_LIMIT, self.next_header, 0, 0]);
                out.extend_from_slice(&src);
                out.extend_from_slice(&dst);
            }
        }
        Ok(())
    }

    pub fn encode(&self) -> Result<Vec<u8>, WireError> {
        let mut out = Vec::with_capacity(self.header_len());
        self.encode_into(&mut out)?;
        Ok(out)
    }

    /// Decodes the fixed header at the start of `bytes`.
    pub fn decode(bytes: &[u8]) -> Result<(Self, usize), WireError> {
        let first = *bytes.first().ok_or(WireError::Truncated { need: 1, have: 0 })?;
        let mut r = Reader::new(bytes);
        match first >> 4 {
            6 => {
                r.take(4)?;
                let payload_len = r.u16()?;
                let next_header = r.u8()?;
                r.u8()?;
                let src = r.array()?;
                let dst = r.array()?;
                let h = NetHeader {
                    version: IpVersion::V6,
                    src,
                    dst,
                    payload_len,
                    next_header,
                };
                Ok((h, IPV6_HEADER_LEN))
            }
            4 => {
                if first & 0x0f != 5 {
                    return Err(WireError::Policy("IPv4 options are not supported"));
                }
                r.take(2)?;
                let total = r.u16()?;
                r.take(5)?;
                let next_header = r.u8()?;
                r.take(2)?;
                let src: [u8; 4] = r.array()?;
                let dst: [u8; 4] = r.array()?;
                let payload_len = total
                    .checked_sub(IPV4_HEADER_LEN as u16)
                    .ok_or(WireError::Ipv4Length(total))?;
                let h = NetHeader {
                    version: IpVersion::V4,
                    src: v4_mapped(src),
                    dst: v4_mapped(dst),
                    payload_len,
                    next_header,
                };
                Ok((h, IPV4_HEADER_LEN))
            }
            v => Err(WireError::IpVersion(v)),
        }
    }

    /// The header a border router hands on after removing a marking header
    /// of `fair_len` bytes.
    pub fn stripped(&self, fair_len: usize, inner_next_header: u8) -> NetHeader {
        NetHeader {
            payload_len: self.payload_len.saturating_sub(fair_len as u16),
            next_header: inner_next_header,
            ..*self
        }
    }
}

pub fn v4_mapped(addr: [u8; 4]) -> [u8; 16] {
    let mut out = [0u8; 16];
    out[..12].copy_from_slice(&V4_MAPPED);
    out[12..].copy_from_slice(&addr);
    out
}

fn v4_part(addr: &[u8; 16]) -> Result<[u8; 4], WireError> {
    if addr[..12] != V4_MAPPED {
        return Err(WireError::NotIpv4Mapped);
    }
    Ok(addr[12..].try_into().expect("four bytes"))
}

/// A stored packet: headers only, stamped with the destination's arrival time.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PacketRecord {
    pub net: NetHeader,
    pub fair: FairHeader,
    pub arrival: SimTime,
}

impl PacketRecord {
    /// Network header followed by the marking header in its version's framing.
    pub fn encode_headers(&self, out: &mut Vec<u8>) -> Result<(), WireError> {
        self.net.encode_into(out)?;
        encode_fair_into(&self.fair, self.net.version.framing(), NO_NEXT_HEADER, out)
    }

    pub fn decode_headers(bytes: &[u8], arrival: SimTime) -> Result<Self, WireError> {
        let (net, used) = NetHeader::decode(bytes)?;
        let fair = decode_fair(&bytes[used..], net.version.framing())?;
        Ok(PacketRecord { net, fair, arrival })
    }
}
