use std::collections::BTreeMap;
use std::path::Path;

use crate::crypto::Digest;
use crate::wire::{read_dump, write_dump, PacketRecord, WireError};
use crate::{SimTime, PROTEST_MARGIN_SECS};

/// The destination's append-only header log, per channel.
#[derive(Clone, Debug)]
pub struct HeaderStore {
    retention_secs: u64,
    channels: BTreeMap<Digest, Vec<PacketRecord>>,
}

impl Default for HeaderStore {
    fn default() -> Self {
        Self::new(PROTEST_MARGIN_SECS)
    }
}

impl HeaderStore {
    /// Retention below the protest margin is raised to it.
    pub fn new(retention_secs: u64) -> Self {
        HeaderStore {
            retention_secs: retention_secs.max(PROTEST_MARGIN_SECS),
            channels: BTreeMap::new(),
        }
    }

    pub fn retention_secs(&self) -> u64 {
        self.retention_secs
    }

    pub fn append(&mut self, channel: Digest, record: PacketRecord) {
        self.channels.entry(channel).or_default().push(record);
    }

    pub fn records(&self, channel: &Digest) -> &[PacketRecord] {
        self.channels.get(channel).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn len(&self) -> usize {
        self.channels.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drops records that arrived more than the retention period before `now`.
    pub fn prune(&mut self, now: SimTime) {
        let horizon = now.saturating_sub(SimTime::from_secs(self.retention_secs));
        for records in self.channels.values_mut() {
            records.retain(|r| r.arrival.as_nanos() >= horizon);
        }
    }

    pub fn persist(&self, channel: &Digest, path: &Path) -> Result<(), WireError> {
        write_dump(path, self.records(channel))
    }

    pub fn load(&mut self, channel: Digest, path: &Path) -> Result<usize, WireError> {
        let records = read_dump(path)?;
        let n = records.len();
        self.channels.entry(channel).or_default().extend(records);
        Ok(n)
    }
}
