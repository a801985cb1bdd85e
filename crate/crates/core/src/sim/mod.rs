//! Deterministic discrete-event simulation of one channel along an AS path.
//!
//! Each AS keeps its own clock (true time plus a fixed offset) and each link
//! a fixed latency. Events are ordered by (true time, node, insertion
//! sequence), and all randomness derives from the scenario seed.

mod config;
mod engine;
mod report;

use thiserror::Error;

use crate::wire::{v4_mapped, IpVersion};
use crate::{Asn, Prefix};

pub use config::{
    parse_scenario, Adversary, AsConfig, AsField, Behavior, ConfigError, EvidenceConfig, Field, OutputConfig,
    PolicyConfig, Role, SbConfig, ScenarioConfig, ShiftMode, SizeWeight, TrafficConfig, MAX_CLOCK_OFFSET,
    MAX_PATH_LATENCY,
};
pub use engine::{run_scenario, HopStats, ProtestResult, ScenarioResult};
pub use report::{write_outputs, HopReport, Report, ResponseReport};

/// Start of simulated time, Unix seconds.
pub const EPOCH_SECS: u64 = 1_700_000_000;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("simulation failed: {0}")]
    Runtime(String),
    #[error("i/o: {0}")]
    Io(String),
}

/// Host address inside the AS's prefix.
pub fn as_address(asn: Asn, version: IpVersion) -> [u8; 16] {
    let b = asn.0.to_be_bytes();
    match version {
        IpVersion::V4 => v4_mapped([10, b[2], b[3], 1]),
        IpVersion::V6 => {
            let mut a = [0u8; 16];
            a[..4].copy_from_slice(&[0x20, 0x01, 0x0d, 0xb8]);
            a[4..8].copy_from_slice(&b);
            a[15] = 1;
            a
        }
    }
}

/// The single prefix each simulated AS announces.
pub fn as_prefix(asn: Asn, version: IpVersion) -> Prefix {
    match version {
        IpVersion::V4 => Prefix::new(as_address(asn, version), 96 + 24),
        IpVersion::V6 => Prefix::new(as_address(asn, version), 64),
    }
}
