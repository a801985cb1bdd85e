use std::fmt;
use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};

/// Protest time margin: complaints, keys and policies are honoured for 12 hours.
pub const PROTEST_MARGIN_SECS: u64 = 12 * 3600;

/// Maximum tolerated distance between a packet timestamp and local time.
pub const CLOCK_TOLERANCE_SECS: u16 = 3;

const NANOS_PER_SEC: u64 = 1_000_000_000;

/// Simulated instant in integer nanoseconds since the Unix epoch.
///
/// All simulator arithmetic is integral so that runs are bit-reproducible.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub fn from_secs(secs: u64) -> Self {
        SimTime(secs * NANOS_PER_SEC)
    }

    pub fn from_secs_f64(secs: f64) -> Self {
        SimTime((secs * NANOS_PER_SEC as f64).round() as u64)
    }

    pub fn from_nanos(nanos: u64) -> Self {
        SimTime(nanos)
    }

    pub fn as_nanos(self) -> u64 {
        self.0
    }

    /// Whole seconds (floor).
    pub fn secs(self) -> u64 {
        self.0 / NANOS_PER_SEC
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / NANOS_PER_SEC as f64
    }

    /// Low 16 bits of the whole-second count, the on-wire timestamp.
    pub fn timestamp16(self) -> u16 {
        self.secs() as u16
    }

    /// Shifts by a signed number of nanoseconds, saturating at zero.
    pub fn offset(self, nanos: i64) -> Self {
        SimTime(self.0.saturating_add_signed(nanos))
    }

    pub fn saturating_sub(self, other: SimTime) -> u64 {
        self.0.saturating_sub(other.0)
    }
}

impl Add<u64> for SimTime {
    type Output = SimTime;

    fn add(self, nanos: u64) -> SimTime {
        SimTime(self.0 + nanos)
    }
}

impl Sub for SimTime {
    type Output = u64;

    fn sub(self, other: SimTime) -> u64 {
        self.0 - other.0
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:09}", self.0 / NANOS_PER_SEC, self.0 % NANOS_PER_SEC)
    }
}

/// Recovers the absolute second for a 16-bit timestamp: the latest second
/// congruent to `ts` modulo 2^16 that is not later than `reference + 3`.
pub fn unwrap_timestamp(ts: u16, reference_secs: u64) -> u64 {
    let ceiling = reference_secs + CLOCK_TOLERANCE_SECS as u64;
    let back = (ceiling as u16).wrapping_sub(ts) as u64;
    ceiling.saturating_sub(back)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unwrap_recovers_recent_seconds() {
        let now = 1_700_000_000u64;
        for delta in 0..40_000u64 {
            let abs = now - delta;
            assert_eq!(unwrap_timestamp(abs as u16, now), abs);
        }
        // up to three seconds in the future is still attributed forward
        assert_eq!(unwrap_timestamp((now + 3) as u16, now), now + 3);
    }

    #[test]
    fn display_is_fixed_point() {
        assert_eq!(SimTime(1_500_000_001).to_string(), "1.500000001");
        assert_eq!(SimTime::from_secs_f64(0.25).as_nanos(), 250_000_000);
    }
}
