//! Closed-form overhead and storage estimates.

use serde::{Deserialize, Serialize};

use crate::crypto::KEY_LEN;
use crate::wire::{encoded_len, Framing, IPV4_HEADER_LEN, IPV6_HEADER_LEN};
use crate::PROTEST_MARGIN_SECS;

/// Summary statistics of a link trace.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceModel {
    pub rate_gbps: f64,
    pub mean_pkt_v4: f64,
    pub share_v4: f64,
    pub mean_pkt_v6: f64,
    pub share_v6: f64,
    pub duration_secs: f64,
    pub path_hops: usize,
}

impl TraceModel {
    /// The three backbone traces used for the published estimates, one hour
    /// each over a five-hop path.
    pub fn published() -> [TraceModel; 3] {
        let t = |rate_gbps, v4, s4, v6, s6| TraceModel {
            rate_gbps,
            mean_pkt_v4: v4,
            share_v4: s4,
            mean_pkt_v6: v6,
            share_v6: s6,
            duration_secs: 3600.0,
            path_hops: 5,
        };
        [
            t(1.63, 747.0, 0.9995, 130.0, 0.0005),
            t(3.72, 920.0, 0.9996, 342.0, 0.0004),
            t(3.57, 736.0, 0.9988, 155.0, 0.0012),
        ]
    }

    // negated comparisons also reject NaN
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), &'static str> {
        if !((self.share_v4 + self.share_v6 - 1.0).abs() < 1e-9) {
            return Err("IPv4 and IPv6 shares must sum to 1");
        }
        if self.share_v4 < 0.0 || self.share_v6 < 0.0 {
            return Err("shares must be non-negative");
        }
        if !(self.mean_pkt_v4 > 0.0 && self.mean_pkt_v6 > 0.0 && self.rate_gbps >= 0.0 && self.duration_secs >= 0.0) {
            return Err("sizes must be positive and rate, duration non-negative");
        }
        Ok(())
    }

    /// Mean packet size with shares read as packet fractions.
    pub fn mean_packet(&self) -> f64 {
        self.share_v4 * self.mean_pkt_v4 + self.share_v6 * self.mean_pkt_v6
    }

    pub fn packets(&self) -> f64 {
        self.rate_gbps * 1e9 / 8.0 * self.duration_secs / self.mean_packet()
    }
}

/// Marking-header bytes added to an IPv4 packet (shim after the header).
pub fn fair_bytes_v4(hops: usize) -> usize {
    encoded_len(hops, Framing::Raw)
}

/// Marking-header bytes added to an IPv6 packet (extension header).
pub fn fair_bytes_v6(hops: usize) -> usize {
    encoded_len(hops, Framing::Ipv6Eh)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// Shares are fractions of bytes: overheads are averaged by share.
    #[default]
    ByteShare,
    /// Shares are fractions of packets: total added bytes over total bytes.
    PacketShare,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Overhead {
    pub v4: f64,
    pub v6: f64,
    pub total: f64,
}

pub fn bandwidth_overhead(m: &TraceModel, weighting: Weighting) -> Overhead {
    let a4 = fair_bytes_v4(m.path_hops) as f64;
    let a6 = fair_bytes_v6(m.path_hops) as f64;
    let v4 = a4 / m.mean_pkt_v4;
    let v6 = a6 / m.mean_pkt_v6;
    let total = match weighting {
        Weighting::ByteShare => m.share_v4 * v4 + m.share_v6 * v6,
        Weighting::PacketShare => (m.share_v4 * a4 + m.share_v6 * a6) / m.mean_packet(),
    };
    Overhead { v4, v6, total }
}

/// Bytes the destination keeps to hold every network and marking header of
/// the trace.
pub fn header_storage_bytes(m: &TraceModel) -> f64 {
    let per4 = (IPV4_HEADER_LEN + fair_bytes_v4(m.path_hops)) as f64;
    let per6 = (IPV6_HEADER_LEN + fair_bytes_v6(m.path_hops)) as f64;
    m.packets() * (m.share_v4 * per4 + m.share_v6 * per6)
}

/// One shared key per channel.
pub fn channel_key_bytes(channels: u64) -> u64 {
    channels * KEY_LEN as u64
}

/// Published per-minute key-rotation storage for the protest margin, bytes.
pub const PUBLISHED_ROTATION_BYTES: u64 = 250_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct RotationStorage {
    pub epochs: u64,
    pub bytes: u64,
    /// Whether `bytes` disagrees with the published figure for the same
    /// parameters.
    pub differs_from_published: bool,
}

/// Keys retained by a transit to answer complaints over the protest margin.
pub fn key_rotation_storage(rotation_secs: u64, keys_per_epoch: u64) -> RotationStorage {
    let epochs = PROTEST_MARGIN_SECS.div_ceil(rotation_secs.max(1));
    let bytes = epochs * keys_per_epoch * KEY_LEN as u64;
    RotationStorage {
        epochs,
        bytes,
        differs_from_published: rotation_secs == 60 && keys_per_epoch == 2 && bytes != PUBLISHED_ROTATION_BYTES,
    }
}

/// Rate in bit/s at which `modulus` sequence numbers are used up within
/// `window_secs`, so that legitimate packets repeat a number.
pub fn replay_capacity_bps(modulus: f64, pkt_bytes: f64, window_secs: f64) -> f64 {
    modulus * pkt_bytes * 8.0 / window_secs
}

/// Lowest rate at which an evenly paced sender repeats a sequence number
/// within `window_secs`, found by simulating the counter and bisecting
/// over the rate.
pub fn simulated_collision_onset_bps(modulus: u32, pkt_bytes: f64, window_secs: f64) -> f64 {
    let collides = |pps: f64| {
        let mut last = vec![f64::NEG_INFINITY; modulus as usize];
        let horizon = window_secs + 2.0 * modulus as f64 / pps;
        let mut k: u64 = 0;
        loop {
            let t = k as f64 / pps;
            if t > horizon {
                return false;
            }
            let s = (k % modulus as u64) as usize;
            if t - last[s] <= window_secs {
                return true;
            }
            last[s] = t;
            k += 1;
        }
    };
    let (mut lo, mut hi) = (1.0, 4.0 * modulus as f64 / window_secs);
    for _ in 0..60 {
        let mid = (lo + hi) / 2.0;
        if collides(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi * pkt_bytes * 8.0
}
