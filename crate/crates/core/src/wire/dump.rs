use std::io::{Read, Write};
use std::path::Path;

use super::net::PacketRecord;
use super::{Reader, WireError};
use crate::SimTime;

pub const DUMP_MAGIC: &[u8; 8] = b"FAIRDUMP";
pub const DUMP_VERSION: u8 = 1;

/// Serializes records as `magic, version, { arrival_ns u64, len u16, headers }*`.
pub fn encode_dump(records: &[PacketRecord]) -> Result<Vec<u8>, WireError> {
    let mut out = Vec::with_capacity(9 + records.len() * 64);
    out.extend_from_slice(DUMP_MAGIC);
    out.push(DUMP_VERSION);
    let mut headers = Vec::with_capacity(256);
    for rec in records {
        headers.clear();
        rec.encode_headers(&mut headers)?;
        out.extend_from_slice(&rec.arrival.as_nanos().to_be_bytes());
        out.extend_from_slice(&(headers.len() as u16).to_be_bytes());
        out.extend_from_slice(&headers);
    }
    Ok(out)
}

pub fn decode_dump(bytes: &[u8]) -> Result<Vec<PacketRecord>, WireError> {
    let mut r = Reader::new(bytes);
    if r.take(DUMP_MAGIC.len())? != DUMP_MAGIC {
        return Err(WireError::Magic);
    }
    let version = r.u8()?;
    if version != DUMP_VERSION {
        return Err(WireError::DumpVersion(version));
    }
    let mut records = Vec::new();
    while r.remaining() > 0 {
        let arrival = SimTime::from_nanos(r.u64()?);
        let len = r.u16()? as usize;
        records.push(PacketRecord::decode_headers(r.take(len)?, arrival)?);
    }
    Ok(records)
}

pub fn write_dump(path: &Path, records: &[PacketRecord]) -> Result<(), WireError> {
    let bytes = encode_dump(records)?;
    let mut file = std::fs::File::create(path)?;
    file.write_all(&bytes)?;
    Ok(())
}

pub fn read_dump(path: &Path) -> Result<Vec<PacketRecord>, WireError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_dump(&bytes)
}
