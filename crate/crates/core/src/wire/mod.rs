//! Byte layouts.
//!
//! All multi-byte integers are big-endian. The marking header is emitted in
//! one of three framings: bare (`Raw`, used behind an IPv4 header), as an
//! IPv6 extension header with a next-header and a length byte (`Ipv6Eh`), or
//! as an 8-octet aligned IPv6 extension header (`Ipv6EhPadded`).

mod dump;
mod fair;
mod net;
mod policy;

use thiserror::Error;

pub use dump::{decode_dump, encode_dump, read_dump, write_dump, DUMP_MAGIC, DUMP_VERSION};
pub use fair::{
    decode_fair, decode_fair_prefix, encode_fair, encode_fair_into, encoded_len, AsSlot, FairHeader, Framing, NextAs,
    FAIR_BASE_LEN, MAX_SLOTS, NO_NEXT_HEADER,
};
pub use net::{v4_mapped, IpVersion, NetHeader, PacketRecord, FAIR_PROTOCOL, IPV4_HEADER_LEN, IPV6_HEADER_LEN};
pub use policy::{decode_policy, encode_policy, DestRecord, PolicyPacket, PolicyRecord, SourceRecord, TransitRecord};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WireError {
    #[error("buffer truncated: need {need} bytes, have {have}")]
    Truncated { need: usize, have: usize },
    #[error("{0} trailing bytes after the encoded value")]
    Trailing(usize),
    #[error("{0} slots exceed the maximum of 127")]
    TooManySlots(usize),
    #[error("next-AS index {index} exceeds slot count {slots}")]
    IndexOutOfRange { index: u8, slots: usize },
    #[error("{field} value {value} does not fit in {bits} bits")]
    FieldRange { field: &'static str, value: u32, bits: u8 },
    #[error("header length byte {declared} inconsistent with {available} available bytes")]
    HeaderLength { declared: usize, available: usize },
    #[error("malformed extension header padding")]
    Padding,
    #[error("unsupported IP version {0}")]
    IpVersion(u8),
    #[error("address is not IPv4-mapped")]
    NotIpv4Mapped,
    #[error("payload length {0} does not fit an IPv4 total length")]
    Ipv4Length(u16),
    #[error("bad dump magic")]
    Magic,
    #[error("unsupported dump version {0}")]
    DumpVersion(u8),
    #[error("unknown policy record tag {0:#04x}")]
    RecordTag(u8),
    #[error("signature length {0} is not 64")]
    SignatureLength(usize),
    #[error("malformed policy: {0}")]
    Policy(&'static str),
    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for WireError {
    fn from(err: std::io::Error) -> Self {
        WireError::Io(err.to_string())
    }
}

/// Cursor over a byte slice that reports truncation with the total length
/// needed.
struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        let end = self.pos + n;
        if end > self.buf.len() {
            return Err(WireError::Truncated {
                need: end,
                have: self.buf.len(),
            });
        }
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], WireError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, WireError> {
        Ok(u16::from_be_bytes(self.array()?))
    }

    fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_be_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64, WireError> {
        Ok(u64::from_be_bytes(self.array()?))
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn finish(&self) -> Result<(), WireError> {
        match self.remaining() {
            0 => Ok(()),
            n => Err(WireError::Trailing(n)),
        }
    }
}
