//! Suspicious-bit forwarding.
//!
//! A transit AS flags traffic from sources whose violations it has
//! acknowledged. An upstream AS that does not flag such traffic gets its
//! whole ingress port treated as suspicious until flagged packets show up
//! on that port again.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::protest::{Outcome, Verdict};
use crate::wire::{FairHeader, NetHeader};
use crate::{Asn, PortId, Prefix};

/// What to do with suspicious traffic.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SbAction {
    #[default]
    Forward,
    Drop,
    Delay,
}

/// Announced prefixes per AS.
pub type PrefixTable = BTreeMap<Asn, Vec<Prefix>>;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SbState {
    sus_sources: BTreeSet<Prefix>,
    sus_ports: BTreeSet<PortId>,
    pub action_policy: SbAction,
}

impl SbState {
    pub fn new(action_policy: SbAction) -> Self {
        SbState {
            action_policy,
            ..Self::default()
        }
    }

    pub fn sus_sources(&self) -> &BTreeSet<Prefix> {
        &self.sus_sources
    }

    pub fn sus_ports(&self) -> &BTreeSet<PortId> {
        &self.sus_ports
    }

    pub fn is_suspicious_source(&self, addr: &[u8; 16]) -> bool {
        self.sus_sources.iter().any(|p| p.contains(addr))
    }

    /// Marks `prefixes` as belonging to an acknowledged violator.
    pub fn add_sources(&mut self, prefixes: impl IntoIterator<Item = Prefix>) {
        self.sus_sources.extend(prefixes);
    }

    /// Adds the source's prefixes when the verdict convicts the source;
    /// other outcomes leave the state alone.
    pub fn ingest_verdict(&mut self, verdict: &Verdict, prefixes: &PrefixTable) {
        if verdict.outcome == Outcome::SourceGuilty {
            if let Some(list) = prefixes.get(&verdict.source) {
                self.add_sources(list.iter().copied());
            }
        }
    }

    /// One forwarding decision. May set the SB in `fair` and update the
    /// suspicious-port set.
    pub fn forward(&mut self, net: &NetHeader, fair: &mut FairHeader, port_in: PortId) -> SbAction {
        if !self.sus_ports.contains(&port_in) {
            if fair.next_as.suspicious() {
                self.action_policy
            } else if self.is_suspicious_source(&net.src) {
                self.sus_ports.insert(port_in);
                fair.next_as.set_suspicious(true);
                self.action_policy
            } else {
                SbAction::Forward
            }
        } else if fair.next_as.suspicious() {
            self.sus_ports.remove(&port_in);
            SbAction::Forward
        } else {
            fair.next_as.set_suspicious(true);
            self.action_policy
        }
    }
}

/// Functional form of [`SbState::forward`].
pub fn sb_forward(
    state: &SbState,
    net: &NetHeader,
    fair: &FairHeader,
    port_in: PortId,
) -> (SbAction, SbState, FairHeader) {
    let mut state = state.clone();
    let mut fair = fair.clone();
    let action = state.forward(net, &mut fair, port_in);
    (action, state, fair)
}
