//! Token bucket shaper and policer.
//!
//! Token counts are kept in byte-nanoseconds-per-second (bytes × 10^9) so
//! refill over an integral number of nanoseconds is exact.

use thiserror::Error;

use crate::SimTime;

const SCALE: u128 = 1_000_000_000;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BucketError {
    #[error("time went backwards: {now} is before {last}")]
    TimeReversed { now: SimTime, last: SimTime },
    #[error("packet of {len} bytes exceeds the burst size {cbs}")]
    Oversize { len: u64, cbs: u64 },
    #[error("CIR and CBS must be positive")]
    ZeroParameter,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Decision {
    Conform,
    Violate,
}

impl Decision {
    pub fn conforms(self) -> bool {
        self == Decision::Conform
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenBucket {
    cir: u64,
    cbs: u64,
    tokens: u128,
    last: SimTime,
    quantum: Option<u64>,
}

impl TokenBucket {
    /// A full bucket. `cir` is in bytes per second, `cbs` in bytes.
    pub fn new(cir: u64, cbs: u64, start: SimTime) -> Result<Self, BucketError> {
        if cir == 0 || cbs == 0 {
            return Err(BucketError::ZeroParameter);
        }
        Ok(TokenBucket {
            cir,
            cbs,
            tokens: cbs as u128 * SCALE,
            last: start,
            quantum: None,
        })
    }

    /// Refill only at multiples of `quantum_ns`: a packet at `t` sees the
    /// tokens accumulated up to `floor(t / q) * q`.
    pub fn quantized(mut self, quantum_ns: u64) -> Self {
        assert!(quantum_ns > 0);
        self.quantum = Some(quantum_ns);
        self.last = self.effective(self.last);
        self
    }

    pub fn cir(&self) -> u64 {
        self.cir
    }

    pub fn cbs(&self) -> u64 {
        self.cbs
    }

    /// Burst interval `T_c = CBS / CIR` in seconds.
    pub fn tc_secs(&self) -> f64 {
        self.cbs as f64 / self.cir as f64
    }

    pub fn tokens(&self) -> f64 {
        self.tokens as f64 / SCALE as f64
    }

    pub fn last_update(&self) -> SimTime {
        self.last
    }

    fn effective(&self, t: SimTime) -> SimTime {
        match self.quantum {
            Some(q) => SimTime(t.0 / q * q),
            None => t,
        }
    }

    fn advance(&mut self, now: SimTime) {
        let now = self.effective(now);
        if now > self.last {
            let gained = self.cir as u128 * (now.0 - self.last.0) as u128;
            self.tokens = (self.tokens + gained).min(self.cbs as u128 * SCALE);
            self.last = now;
        }
    }

    pub fn refill(&mut self, now: SimTime) -> Result<(), BucketError> {
        if now < self.last {
            return Err(BucketError::TimeReversed { now, last: self.last });
        }
        self.advance(now);
        Ok(())
    }

    /// Meters one packet. Out-of-order arrivals are evaluated at the latest
    /// time seen so far.
    pub fn police(&mut self, len: u64, now: SimTime) -> Decision {
        self.advance(now);
        let need = len as u128 * SCALE;
        if self.tokens >= need {
            self.tokens -= need;
            Decision::Conform
        } else {
            Decision::Violate
        }
    }

    /// Earliest instant not before `now` (or the last release) at which
    /// `len` bytes of tokens are available. Does not modify the bucket.
    pub fn release_time(&self, len: u64, now: SimTime) -> Result<SimTime, BucketError> {
        if len > self.cbs {
            return Err(BucketError::Oversize { len, cbs: self.cbs });
        }
        let mut probe = self.clone();
        let now = now.max(self.last);
        probe.advance(now);
        let need = len as u128 * SCALE;
        if probe.tokens >= need {
            return Ok(now);
        }
        let wait = (need - probe.tokens).div_ceil(self.cir as u128) as u64;
        let ready = probe.last + wait;
        Ok(match self.quantum {
            Some(q) => SimTime(ready.0.div_ceil(q) * q).max(now),
            None => ready.max(now),
        })
    }

    /// Removes `len` bytes at `at`, which must satisfy `release_time`.
    pub fn debit(&mut self, len: u64, at: SimTime) {
        self.advance(at);
        let need = len as u128 * SCALE;
        debug_assert!(self.tokens >= need, "debit before release time");
        self.tokens = self.tokens.saturating_sub(need);
    }

    /// FIFO shaping: holds the packet until it conforms and debits it then.
    pub fn shape(&mut self, len: u64, now: SimTime) -> Result<SimTime, BucketError> {
        let release = self.release_time(len, now)?;
        self.debit(len, release);
        Ok(release)
    }
}

/// A source shaper that keeps traffic conforming both to a continuous bucket
/// and to a bucket refilled once per second, so that it passes policing on
/// arrival times as well as policing on one-second timestamps.
#[derive(Clone, Debug)]
pub struct DualShaper {
    fluid: TokenBucket,
    stepped: TokenBucket,
}

impl DualShaper {
    pub fn new(cir: u64, cbs: u64, start: SimTime) -> Result<Self, BucketError> {
        Ok(DualShaper {
            fluid: TokenBucket::new(cir, cbs, start)?,
            stepped: TokenBucket::new(cir, cbs, start)?.quantized(1_000_000_000),
        })
    }

    pub fn shape(&mut self, len: u64, now: SimTime) -> Result<SimTime, BucketError> {
        let mut at = now;
        loop {
            let a = self.fluid.release_time(len, at)?;
            let b = self.stepped.release_time(len, a)?;
            at = b;
            if b == a {
                break;
            }
        }
        self.fluid.debit(len, at);
        self.stepped.debit(len, at);
        Ok(at)
    }
}
