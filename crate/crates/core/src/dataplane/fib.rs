use std::collections::HashMap;

use crate::crypto::{BlockMac, SymKey, KEY_LEN};
use crate::ids::mask;
use crate::{PortId, Prefix};

/// Logical size of an IPv6 entry: destination, key, 24-bit counter, port.
pub const FIB_ENTRY_BYTES_V6: usize = 16 + KEY_LEN + 3 + 1;

/// Forwarding entry extended with the channel key and packet counter.
#[derive(Clone)]
pub struct FibEntry {
    pub port: PortId,
    pub k_sd: Option<SymKey>,
    /// Next sequence number to stamp.
    pub seq: u32,
    cipher: Option<BlockMac>,
}

impl FibEntry {
    /// A plain route with no channel.
    pub fn route(port: PortId) -> Self {
        FibEntry {
            port,
            k_sd: None,
            seq: 0,
            cipher: None,
        }
    }

    pub fn channel(port: PortId, k_sd: SymKey, seq: u32) -> Self {
        FibEntry {
            port,
            cipher: Some(k_sd.cipher()),
            k_sd: Some(k_sd),
            seq,
        }
    }

    /// Expanded cipher for the channel key, kept beside the entry.
    pub fn cipher(&self) -> Option<&BlockMac> {
        self.cipher.as_ref()
    }
}

impl std::fmt::Debug for FibEntry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FibEntry")
            .field("port", &self.port)
            .field("has_key", &self.k_sd.is_some())
            .field("seq", &self.seq)
            .finish()
    }
}

/// Longest-prefix-match table: one exact-match map per prefix length,
/// probed from the longest length down.
#[derive(Clone, Debug, Default)]
pub struct Fib {
    by_len: Vec<(u8, HashMap<[u8; 16], usize>)>,
    entries: Vec<(Prefix, FibEntry)>,
}

impl Fib {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, prefix: Prefix, entry: FibEntry) {
        let pos = match self.by_len.binary_search_by(|(len, _)| prefix.len().cmp(len)) {
            Ok(i) => i,
            Err(i) => {
                self.by_len.insert(i, (prefix.len(), HashMap::new()));
                i
            }
        };
        let table = &mut self.by_len[pos].1;
        match table.get(&prefix.addr()) {
            Some(&idx) => self.entries[idx] = (prefix, entry),
            None => {
                table.insert(prefix.addr(), self.entries.len());
                self.entries.push((prefix, entry));
            }
        }
    }

    fn find(&self, dst: &[u8; 16]) -> Option<usize> {
        self.by_len
            .iter()
            .find_map(|(len, table)| table.get(&mask(*dst, *len)).copied())
    }

    pub fn lookup(&self, dst: &[u8; 16]) -> Option<&FibEntry> {
        self.find(dst).map(|i| &self.entries[i].1)
    }

    pub fn lookup_mut(&mut self, dst: &[u8; 16]) -> Option<&mut FibEntry> {
        self.find(dst).map(|i| &mut self.entries[i].1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Key-table footprint: channel entries times the logical entry size.
    pub fn logical_bytes(&self) -> usize {
        self.entries.len() * FIB_ENTRY_BYTES_V6
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(bytes: &[u8], len: u8) -> Prefix {
        let mut a = [0u8; 16];
        a[..bytes.len()].copy_from_slice(bytes);
        Prefix::new(a, len)
    }

    #[test]
    fn longest_prefix_wins() {
        let mut fib = Fib::new();
        fib.insert(p(&[0x20, 0x01], 16), FibEntry::route(PortId(1)));
        fib.insert(p(&[0x20, 0x01, 0x0d, 0xb8], 32), FibEntry::route(PortId(2)));
        fib.insert(p(&[], 0), FibEntry::route(PortId(9)));
        let mut dst = [0u8; 16];
        dst[..4].copy_from_slice(&[0x20, 0x01, 0x0d, 0xb8]);
        assert_eq!(fib.lookup(&dst).unwrap().port, PortId(2));
        dst[3] = 0xb9;
        assert_eq!(fib.lookup(&dst).unwrap().port, PortId(1));
        dst[0] = 0x30;
        assert_eq!(fib.lookup(&dst).unwrap().port, PortId(9));
    }

    #[test]
    fn reinsert_replaces() {
        let mut fib = Fib::new();
        fib.insert(p(&[10], 8), FibEntry::route(PortId(1)));
        fib.insert(p(&[10], 8), FibEntry::route(PortId(3)));
        assert_eq!(fib.len(), 1);
        assert_eq!(fib.lookup(&[10; 16]).unwrap().port, PortId(3));
        assert!(fib.lookup(&[11; 16]).is_none());
    }

    #[test]
    fn entry_size_and_table_footprint() {
        assert_eq!(FIB_ENTRY_BYTES_V6, 36);
        // 50,000 destinations at 16 key bytes each
        assert_eq!(50_000 * KEY_LEN, 800_000);
    }
}
