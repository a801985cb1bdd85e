//! Forwarding accountability for inter-domain traffic.
//!
//! Source ASes stamp every packet with a timestamp, a sequence number and a
//! short integrity check value; cooperating transit ASes overwrite one byte of
//! the header with a random nonce and a 4-bit MAC under a key only they know.
//! When a destination detects a violation of the signed token-bucket sending
//! policy it hands the stored headers back to the transit ASes, who can check
//! their own marks and confirm that they really forwarded the offending
//! traffic.
//!
//! The crate is organised bottom-up:
//!
//! * [`crypto`] has the block MAC, hashing, signatures, shared keys and the
//!   key registry.
//! * [`wire`] has the byte layouts of the marking header, network headers,
//!   policies and evidence dumps.
//! * [`tokenbucket`] is the shaper and policer.
//! * [`policy`] is the signed control-plane sending policy and its channels.
//! * [`dataplane`] has the per-packet source, transit and destination steps.
//! * [`protest`] builds evidence bundles, examines complaints and adjudicates.
//! * [`sbit`] is suspicious-bit forwarding.
//! * [`sim`] is a deterministic AS-path simulator with adversaries.
//! * [`calc`] and [`bench`] hold the closed-form overhead calculators and the
//!   marking microbenchmark.

pub mod bench;
pub mod calc;
pub mod crypto;
pub mod dataplane;
mod ids;
pub mod policy;
pub mod protest;
pub mod sbit;
pub mod sim;
mod time;
pub mod tokenbucket;
pub mod wire;

pub use ids::{Asn, PortId, Prefix};
pub use time::{unwrap_timestamp, SimTime, CLOCK_TOLERANCE_SECS, PROTEST_MARGIN_SECS};
