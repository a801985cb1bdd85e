//! Cryptographic primitives.
//!
//! All data-plane MACs are one-block CBC-MACs, i.e. a single AES-128
//! encryption of a fixed-length input padded to 16 bytes, truncated to the
//! most significant bits the header has room for. Control-plane MACs run the
//! same CBC-MAC over the fixed 32-byte SHA3-256 digest of the policy prefix.

mod keys;

use aes::cipher::{BlockEncrypt, KeyInit};
use aes::Aes128;
use sha3::{Digest as _, Sha3_256};
use thiserror::Error;

use crate::Asn;

pub use keys::{derive_shared_key, sign, verify, KeyPair, KeyRegistry, LocalKeys, PublicKey, Signature, SIGNATURE_LEN};

pub const KEY_LEN: usize = 16;
pub const BLOCK_LEN: usize = 16;

pub type Block = [u8; BLOCK_LEN];
pub type Digest = [u8; 32];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CryptoError {
    #[error("MAC width {0} outside 1..=128")]
    InvalidWidth(u32),
    #[error("symmetric key must be {KEY_LEN} bytes, got {0}")]
    KeyLength(usize),
    #[error("no key registered for {0}")]
    UnknownAsn(Asn),
    #[error("no private key held for {0}")]
    NoPrivateKey(Asn),
}

/// 128-bit secret key.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct SymKey([u8; KEY_LEN]);

impl SymKey {
    pub fn from_bytes(bytes: [u8; KEY_LEN]) -> Self {
        SymKey(bytes)
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self, CryptoError> {
        let bytes: [u8; KEY_LEN] = bytes.try_into().map_err(|_| CryptoError::KeyLength(bytes.len()))?;
        Ok(SymKey(bytes))
    }

    pub fn as_bytes(&self) -> &[u8; KEY_LEN] {
        &self.0
    }

    /// Expands the key schedule once, for callers that MAC many blocks.
    pub fn cipher(&self) -> BlockMac {
        BlockMac(Aes128::new(&self.0.into()))
    }
}

impl std::fmt::Debug for SymKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        // never print key material
        write!(f, "SymKey(..)")
    }
}

/// A key with its AES schedule already expanded.
#[derive(Clone)]
pub struct BlockMac(Aes128);

impl std::fmt::Debug for BlockMac {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "BlockMac(..)")
    }
}

impl BlockMac {
    pub fn prf(&self, block: &Block) -> Block {
        let mut out = (*block).into();
        self.0.encrypt_block(&mut out);
        out.into()
    }

    pub fn mac(&self, block: &Block, width: MacWidth) -> u8 {
        width.take(&self.prf(block))
    }
}

/// One-block CBC-MAC with a zero IV: the AES-128 encryption of `block`.
pub fn prf_block(key: &SymKey, block: &Block) -> Block {
    key.cipher().prf(block)
}

/// CBC-MAC (zero IV) over a fixed number of blocks. Only safe for inputs
/// whose length is fixed by the caller's context.
pub fn cbc_mac(key: &SymKey, blocks: &[Block]) -> Block {
    let cipher = key.cipher();
    let mut state = [0u8; BLOCK_LEN];
    for block in blocks {
        for (s, b) in state.iter_mut().zip(block) {
            *s ^= b;
        }
        state = cipher.prf(&state);
    }
    state
}

/// Full-length control-plane MAC over a 32-byte digest.
pub fn digest_mac(key: &SymKey, digest: &Digest) -> Block {
    let mut blocks = [[0u8; BLOCK_LEN]; 2];
    blocks[0].copy_from_slice(&digest[..16]);
    blocks[1].copy_from_slice(&digest[16..]);
    cbc_mac(key, &blocks)
}

/// A truncated MAC value together with its bit width.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct MacTag {
    value: u128,
    width: u8,
}

impl MacTag {
    pub fn new(value: u128, width: u8) -> Result<Self, CryptoError> {
        if width == 0 || width > 128 {
            return Err(CryptoError::InvalidWidth(width as u32));
        }
        if width < 128 && value >> width != 0 {
            return Err(CryptoError::InvalidWidth(width as u32));
        }
        Ok(MacTag { value, width })
    }

    pub fn value(&self) -> u128 {
        self.value
    }

    pub fn width(&self) -> u8 {
        self.width
    }
}

/// The `width` most significant bits of a 128-bit tag.
pub fn truncate_msb(tag: &Block, width: u32) -> Result<MacTag, CryptoError> {
    if width == 0 || width > 128 {
        return Err(CryptoError::InvalidWidth(width));
    }
    let full = u128::from_be_bytes(*tag);
    let value = if width == 128 { full } else { full >> (128 - width) };
    Ok(MacTag {
        value,
        width: width as u8,
    })
}

/// Header-sized MAC widths, all of which fit in a byte.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MacWidth(u8);

impl MacWidth {
    pub const ICV: MacWidth = MacWidth(8);
    pub const SLOT: MacWidth = MacWidth(4);

    pub fn new(bits: u8) -> Result<Self, CryptoError> {
        if (1..=8).contains(&bits) {
            Ok(MacWidth(bits))
        } else {
            Err(CryptoError::InvalidWidth(bits as u32))
        }
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn take(self, tag: &Block) -> u8 {
        tag[0] >> (8 - self.0)
    }
}

/// Packs fixed-width big-endian fields into one zero-padded MAC input block.
#[derive(Clone, Copy, Debug, Default)]
pub struct BlockBuilder {
    buf: Block,
    len: usize,
}

impl BlockBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(mut self, bytes: &[u8]) -> Self {
        assert!(self.len + bytes.len() <= BLOCK_LEN, "MAC input exceeds one block");
        self.buf[self.len..self.len + bytes.len()].copy_from_slice(bytes);
        self.len += bytes.len();
        self
    }

    pub fn u8(self, v: u8) -> Self {
        self.push(&[v])
    }

    pub fn u16(self, v: u16) -> Self {
        self.push(&v.to_be_bytes())
    }

    pub fn u24(self, v: u32) -> Self {
        self.push(&v.to_be_bytes()[1..])
    }

    pub fn u32(self, v: u32) -> Self {
        self.push(&v.to_be_bytes())
    }

    pub fn finish(self) -> Block {
        self.buf
    }
}

/// SHA3-256.
pub fn hash(message: &[u8]) -> Digest {
    Sha3_256::digest(message).into()
}

/// SHA3-256 over the concatenation of several parts.
pub fn hash_parts<'a>(parts: impl IntoIterator<Item = &'a [u8]>) -> Digest {
    let mut h = Sha3_256::new();
    for part in parts {
        h.update(part);
    }
    h.finalize().into()
}
