use std::fmt;
use std::net::Ipv6Addr;

use serde::{Deserialize, Serialize};

/// Autonomous System Number.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Asn(pub u32);

impl fmt::Display for Asn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "AS{}", self.0)
    }
}

/// Switch port identifier (ingress or egress interface).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PortId(pub u8);

/// An address prefix over the 16-byte address space. IPv4 prefixes live in
/// the IPv4-mapped range (`::ffff:0:0/96`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Prefix {
    addr: [u8; 16],
    len: u8,
}

impl Prefix {
    /// Builds a prefix, clearing every bit past `len`.
    ///
    /// Panics if `len > 128`.
    pub fn new(addr: [u8; 16], len: u8) -> Self {
        assert!(len <= 128, "prefix length {len} exceeds 128");
        Prefix {
            addr: mask(addr, len),
            len,
        }
    }

    pub fn addr(&self) -> [u8; 16] {
        self.addr
    }

    pub fn len(&self) -> u8 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn contains(&self, addr: &[u8; 16]) -> bool {
        mask(*addr, self.len) == self.addr
    }
}

impl fmt::Display for Prefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", Ipv6Addr::from(self.addr), self.len)
    }
}

pub(crate) fn mask(mut addr: [u8; 16], len: u8) -> [u8; 16] {
    let len = len as usize;
    for (i, byte) in addr.iter_mut().enumerate() {
        let start = i * 8;
        if start >= len {
            *byte = 0;
        } else if start + 8 > len {
            *byte &= 0xffu8 << (8 - (len - start));
        }
    }
    addr
}
