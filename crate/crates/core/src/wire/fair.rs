use super::{Reader, WireError};

/// Timestamp, sequence number, ICV and next-AS pointer.
pub const FAIR_BASE_LEN: usize = 7;

/// The 7-bit next-AS index bounds the slot count.
pub const MAX_SLOTS: usize = 127;

/// IPv6 "No Next Header", used when only headers are kept.
pub const NO_NEXT_HEADER: u8 = 59;

const SB_MASK: u8 = 0x80;
const INDEX_MASK: u8 = 0x7f;
const SEQNO_MAX: u32 = (1 << 24) - 1;

/// The next-AS byte: suspicious bit in the MSB, slot index in the low 7 bits.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct NextAs(pub u8);

impl NextAs {
    pub fn new(index: u8, suspicious: bool) -> Self {
        debug_assert!(index <= INDEX_MASK);
        NextAs((index & INDEX_MASK) | if suspicious { SB_MASK } else { 0 })
    }

    pub fn index(self) -> u8 {
        self.0 & INDEX_MASK
    }

    pub fn suspicious(self) -> bool {
        self.0 & SB_MASK != 0
    }

    pub fn set_suspicious(&mut self, on: bool) {
        if on {
            self.0 |= SB_MASK;
        } else {
            self.0 &= !SB_MASK;
        }
    }

    /// Increments the index within its 7 bits, leaving the suspicious bit alone.
    pub fn advance(&mut self) {
        self.0 = (self.0 & SB_MASK) | (self.0.wrapping_add(1) & INDEX_MASK);
    }
}

/// One transit AS's byte: nonce in the high nibble, MAC in the low nibble.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AsSlot {
    pub nonce: u8,
    pub mac: u8,
}

impl AsSlot {
    pub fn new(nonce: u8, mac: u8) -> Self {
        debug_assert!(nonce < 16 && mac < 16);
        AsSlot { nonce, mac }
    }

    pub fn to_byte(self) -> u8 {
        (self.nonce << 4) | (self.mac & 0x0f)
    }

    pub fn from_byte(b: u8) -> Self {
        AsSlot {
            nonce: b >> 4,
            mac: b & 0x0f,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct FairHeader {
    pub timestamp: u16,
    /// 24-bit counter.
    pub seqno: u32,
    pub icv: u8,
    pub next_as: NextAs,
    pub slots: Vec<AsSlot>,
}

impl FairHeader {
    pub fn validate(&self) -> Result<(), WireError> {
        if self.slots.len() > MAX_SLOTS {
            return Err(WireError::TooManySlots(self.slots.len()));
        }
        if self.seqno > SEQNO_MAX {
            return Err(WireError::FieldRange {
                field: "seqno",
                value: self.seqno,
                bits: 24,
            });
        }
        if self.next_as.index() as usize > self.slots.len() {
            return Err(WireError::IndexOutOfRange {
                index: self.next_as.index(),
                slots: self.slots.len(),
            });
        }
        for slot in &self.slots {
            if slot.nonce > 0x0f || slot.mac > 0x0f {
                return Err(WireError::FieldRange {
                    field: "slot nibble",
                    value: slot.nonce.max(slot.mac) as u32,
                    bits: 4,
                });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Framing {
    /// `7 + n` bytes, no framing.
    Raw,
    /// `9 + n` bytes: next-header, total length in bytes, then the raw header.
    Ipv6Eh,
    /// Next-header, length in 8-octet units minus one, the raw header, then
    /// zero padding whose final byte holds the pad count (1..=8).
    Ipv6EhPadded,
}

/// Encoded length of a header with `slots` slots.
pub fn encoded_len(slots: usize, framing: Framing) -> usize {
    let raw = FAIR_BASE_LEN + slots;
    match framing {
        Framing::Raw => raw,
        Framing::Ipv6Eh => raw + 2,
        Framing::Ipv6EhPadded => (raw + 3).div_ceil(8) * 8,
    }
}

/// Encodes with `NO_NEXT_HEADER` in extension-header framings.
pub fn encode_fair(h: &FairHeader, framing: Framing) -> Result<Vec<u8>, WireError> {
    let mut out = Vec::with_capacity(encoded_len(h.slots.len(), framing));
    encode_fair_into(h, framing, NO_NEXT_HEADER, &mut out)?;
    Ok(out)
}

pub fn encode_fair_into(h: &FairHeader, framing: Framing, next_header: u8, out: &mut Vec<u8>) -> Result<(), WireError> {
    h.validate()?;
    let n = h.slots.len();
    let total = encoded_len(n, framing);
    match framing {
        Framing::Raw => {}
        Framing::Ipv6Eh => out.extend_from_slice(&[next_header, total as u8]),
        Framing::Ipv6EhPadded => out.extend_from_slice(&[next_header, (total / 8 - 1) as u8]),
    }
    out.extend_from_slice(&h.timestamp.to_be_bytes());
    out.extend_from_slice(&h.seqno.to_be_bytes()[1..]);
    out.push(h.icv);
    out.push(h.next_as.0);
    out.extend(h.slots.iter().map(|s| s.to_byte()));
    if framing == Framing::Ipv6EhPadded {
        let pad = total - 2 - FAIR_BASE_LEN - n;
        out.extend(std::iter::repeat_n(0, pad - 1));
        out.push(pad as u8);
    }
    Ok(())
}

/// Decodes a buffer holding exactly one encoded header.
pub fn decode_fair(bytes: &[u8], framing: Framing) -> Result<FairHeader, WireError> {
    if framing == Framing::Raw {
        let mut r = Reader::new(bytes);
        let h = read_body(&mut r, bytes.len().saturating_sub(FAIR_BASE_LEN))?;
        return Ok(h);
    }
    let (h, _, used) = decode_fair_prefix(bytes, framing)?;
    if used != bytes.len() {
        return Err(WireError::Trailing(bytes.len() - used));
    }
    Ok(h)
}

/// Decodes an extension-header framed header at the start of `bytes`,
/// returning the header, its next-header byte and the bytes consumed.
///
/// Raw framing carries no length, so it is rejected here.
pub fn decode_fair_prefix(bytes: &[u8], framing: Framing) -> Result<(FairHeader, u8, usize), WireError> {
    let mut r = Reader::new(bytes);
    let next_header = r.u8()?;
    let len_byte = r.u8()? as usize;
    let (total, slots) = match framing {
        Framing::Raw => return Err(WireError::Policy("raw framing has no length")),
        Framing::Ipv6Eh => {
            if len_byte < FAIR_BASE_LEN + 2 {
                return Err(WireError::HeaderLength {
                    declared: len_byte,
                    available: bytes.len(),
                });
            }
            (len_byte, len_byte - FAIR_BASE_LEN - 2)
        }
        Framing::Ipv6EhPadded => {
            let total = (len_byte + 1) * 8;
            if total > bytes.len() {
                return Err(WireError::HeaderLength {
                    declared: total,
                    available: bytes.len(),
                });
            }
            let pad = bytes[total - 1] as usize;
            if !(1..=8).contains(&pad) || pad + 2 + FAIR_BASE_LEN > total {
                return Err(WireError::Padding);
            }
            if bytes[total - pad..total - 1].iter().any(|&b| b != 0) {
                return Err(WireError::Padding);
            }
            (total, total - 2 - FAIR_BASE_LEN - pad)
        }
    };
    if total > bytes.len() {
        return Err(WireError::HeaderLength {
            declared: total,
            available: bytes.len(),
        });
    }
    let h = read_body(&mut r, slots)?;
    Ok((h, next_header, total))
}

fn read_body(r: &mut Reader<'_>, slots: usize) -> Result<FairHeader, WireError> {
    let timestamp = r.u16()?;
    let seq = r.array::<3>()?;
    let seqno = u32::from_be_bytes([0, seq[0], seq[1], seq[2]]);
    let icv = r.u8()?;
    let next_as = NextAs(r.u8()?);
    if slots > MAX_SLOTS {
        return Err(WireError::TooManySlots(slots));
    }
    let slots = r.take(slots)?.iter().map(|&b| AsSlot::from_byte(b)).collect();
    let h = FairHeader {
        timestamp,
        seqno,
        icv,
        next_as,
        slots,
    };
    h.validate()?;
    Ok(h)
}
