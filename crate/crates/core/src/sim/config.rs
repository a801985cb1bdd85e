use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use toml::Spanned;

use crate::sbit::SbAction;
use crate::wire::IpVersion;
use crate::Asn;

/// Bound on any AS clock's distance from true time, seconds.
pub const MAX_CLOCK_OFFSET: f64 = 0.5;
/// Bound on the summed link latency of a path, seconds.
pub const MAX_PATH_LATENCY: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Source,
    /// Cooperating transit.
    Transit,
    /// Transit that forwards without marking.
    TransitNoncoop,
    Destination,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftMode {
    /// Shift only during the first second of activity.
    #[default]
    Once,
    /// Keep pushing overflow into the next second.
    Rolling,
}

fn one_and_half() -> f64 {
    1.5
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Behavior {
    /// Source sends unshaped at `multiplier` × CIR.
    Flood { multiplier: f64 },
    /// Transit overwrites the slots of all upstream ASes with random bytes
    /// and denies everything in the protest phase.
    CorruptUpstreamMacs,
    /// Transit forwards every packet `factor` times.
    Replay {
        factor: u32,
        #[serde(default)]
        rerandomize: bool,
    },
    /// Transit fabricates packets at `rate` × CIR.
    Inject { rate: f64 },
    /// Source sends unshaped at `multiplier` × CIR and stamps overflow with
    /// the next second.
    TimestampShift {
        #[serde(default = "one_and_half")]
        multiplier: f64,
        #[serde(default)]
        mode: ShiftMode,
    },
    /// Destination submits every stored record `factor` times.
    FrameDuplicateEvidence { factor: u32 },
}

impl Behavior {
    pub fn name(&self) -> &'static str {
        match self {
            Behavior::Flood { .. } => "flood",
            Behavior::CorruptUpstreamMacs => "corrupt_upstream_macs",
            Behavior::Replay { .. } => "replay",
            Behavior::Inject { .. } => "inject",
            Behavior::TimestampShift { .. } => "timestamp_shift",
            Behavior::FrameDuplicateEvidence { .. } => "frame_duplicate_evidence",
        }
    }

    fn compatible(&self, role: Role) -> bool {
        match self {
            Behavior::Flood { .. } | Behavior::TimestampShift { .. } => role == Role::Source,
            Behavior::CorruptUpstreamMacs | Behavior::Replay { .. } | Behavior::Inject { .. } => role == Role::Transit,
            Behavior::FrameDuplicateEvidence { .. } => role == Role::Destination,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adversary {
    #[serde(flatten)]
    pub behavior: Behavior,
    /// Activation start, seconds after the scenario epoch.
    #[serde(default)]
    pub from: f64,
    /// Activation end; open if absent.
    #[serde(default)]
    pub until: Option<f64>,
}

impl Adversary {
    pub fn new(behavior: Behavior) -> Self {
        Adversary {
            behavior,
            from: 0.0,
            until: None,
        }
    }

    pub fn active(&self, elapsed: f64) -> bool {
        elapsed >= self.from && self.until.is_none_or(|u| elapsed < u)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SbConfig {
    #[serde(default)]
    pub action: SbAction,
    /// Source ASes whose violations this AS has acknowledged.
    #[serde(default)]
    pub sus_sources: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AsConfig {
    pub asn: u32,
    pub role: Role,
    /// Local clock minus true time, seconds.
    #[serde(default)]
    pub clock_offset: f64,
    /// Latency of the link towards the next AS, seconds.
    #[serde(default)]
    pub latency: f64,
    #[serde(default)]
    pub adversary: Option<Adversary>,
    #[serde(default)]
    pub sb: Option<SbConfig>,
}

impl AsConfig {
    pub fn new(asn: u32, role: Role) -> Self {
        AsConfig {
            asn,
            role,
            clock_offset: 0.0,
            latency: 0.0,
            adversary: None,
            sb: None,
        }
    }

    pub fn asn(&self) -> Asn {
        Asn(self.asn)
    }
}

fn default_validity() -> u64 {
    3600
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    /// Bytes per second.
    pub cir: u64,
    /// Bytes; defaults to one second of CIR.
    #[serde(default)]
    pub cbs: Option<u64>,
    /// Policy lifetime, seconds.
    #[serde(default = "default_validity")]
    pub validity: u64,
}

impl PolicyConfig {
    pub fn cbs(&self) -> u64 {
        self.cbs.unwrap_or(self.cir)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SizeWeight {
    pub bytes: u16,
    pub weight: f64,
}

fn default_true() -> bool {
    true
}

fn default_version() -> IpVersion {
    IpVersion::V6
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficConfig {
    /// Offered load as a fraction of CIR.
    pub rate: f64,
    /// IP packet sizes in bytes with relative weights.
    pub sizes: Vec<SizeWeight>,
    #[serde(default = "default_version")]
    pub ip_version: IpVersion,
    /// Whether the source shapes its traffic to the policy.
    #[serde(default = "default_true")]
    pub shaped: bool,
}

impl TrafficConfig {
    pub fn fixed(rate: f64, bytes: u16) -> Self {
        TrafficConfig {
            rate,
            sizes: vec![SizeWeight { bytes, weight: 1.0 }],
            ip_version: IpVersion::V6,
            shaped: true,
        }
    }

    pub fn mean_size(&self) -> f64 {
        let total: f64 = self.sizes.iter().map(|s| s.weight).sum();
        self.sizes.iter().map(|s| s.bytes as f64 * s.weight).sum::<f64>() / total
    }
}

fn default_delay() -> f64 {
    10.0
}

fn default_theta() -> f64 {
    2.0 / 16.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvidenceConfig {
    /// Arrival window at the destination, seconds after the epoch.
    #[serde(default)]
    pub window: Option<[f64; 2]>,
    /// Time from the end of the run to the complaint, seconds.
    #[serde(default = "default_delay")]
    pub complaint_delay: f64,
    /// Extra burst allowance for the examiners' policer, bytes.
    #[serde(default)]
    pub slack: u64,
    /// MAC failure fraction above which a response indicates tampering.
    #[serde(default = "default_theta")]
    pub theta: f64,
}

impl Default for EvidenceConfig {
    fn default() -> Self {
        EvidenceConfig {
            window: None,
            complaint_delay: default_delay(),
            slack: 0,
            theta: default_theta(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub dir: Option<String>,
    #[serde(default)]
    pub json: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    /// Seconds of traffic.
    pub duration: f64,
    pub policy: PolicyConfig,
    pub traffic: TrafficConfig,
    #[serde(default)]
    pub evidence: EvidenceConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(rename = "as")]
    pub ases: Vec<AsConfig>,
}

/// Which part of a configuration a validation error concerns.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Field {
    Root,
    Duration,
    Policy,
    Traffic,
    Evidence,
    As(usize, AsField),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AsField {
    Entry,
    Asn,
    Role,
    ClockOffset,
    Latency,
    Adversary,
    Sb,
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{}{message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Invalid {
        field: Field,
        line: Option<usize>,
        message: String,
    },
}

impl ConfigError {
    fn invalid(field: Field, message: String) -> Self {
        ConfigError::Invalid {
            field,
            line: None,
            message,
        }
    }

    pub fn line(&self) -> Option<usize> {
        match self {
            ConfigError::Parse { line, .. } => Some(*line),
            ConfigError::Invalid { line, .. } => *line,
        }
    }
}

impl ScenarioConfig {
    // negated comparisons also reject NaN
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |f: Field, m: &dyn std::fmt::Display| ConfigError::invalid(f, m.to_string());
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(bad(Field::Duration, &"duration must be positive"));
        }
        if self.policy.cir == 0 || self.policy.cbs() == 0 {
            return Err(bad(Field::Policy, &"cir and cbs must be positive"));
        }
        if self.policy.validity < self.duration.ceil() as u64 {
            return Err(bad(Field::Policy, &"policy validity is shorter than the scenario"));
        }
        let t = &self.traffic;
        if !(t.rate >= 0.0 && t.rate.is_finite()) {
            return Err(bad(Field::Traffic, &"rate must be a non-negative number"));
        }
        let min_size = t.ip_version.header_len() as u16;
        if t.sizes.is_empty() || t.sizes.iter().any(|s| s.bytes < min_size || !(s.weight > 0.0)) {
            return Err(bad(
                Field::Traffic,
                &format!("sizes need positive weights and at least {min_size} bytes each"),
            ));
        }
        if t.sizes.iter().any(|s| s.bytes as u64 > self.policy.cbs()) {
            return Err(bad(Field::Traffic, &"packet sizes must not exceed the burst size"));
        }
        if let Some([a, b]) = self.evidence.window {
            if !(a <= b) {
                return Err(bad(
                    Field::Evidence,
                    &"evidence window must be [from, to] with from <= to",
                ));
            }
        }
        if !(self.evidence.complaint_delay >= 0.0) || !(self.evidence.theta >= 0.0 && self.evidence.theta <= 1.0) {
            return Err(bad(
                Field::Evidence,
                &"complaint_delay must be >= 0 and theta in [0, 1]",
            ));
        }

        let n = self.ases.len();
        if n < 2 {
            return Err(bad(Field::Root, &"a path needs at least a source and a destination"));
        }
        let mut latency = 0.0;
        let mut cooperating = 0;
        for (i, a) in self.ases.iter().enumerate() {
            let at = |f| Field::As(i, f);
            let expected_end = match i {
                0 => Some(Role::Source),
                _ if i == n - 1 => Some(Role::Destination),
                _ => None,
            };
            match expected_end {
                Some(r) if a.role != r => {
                    return Err(bad(
                        at(AsField::Role),
                        &format!("AS at position {i} must have role {r:?}"),
                    ))
                }
                None if matches!(a.role, Role::Source | Role::Destination) => {
                    return Err(bad(
                        at(AsField::Role),
                        &"exactly one source (first) and one destination (last)",
                    ))
                }
                _ => {}
            }
            if self.ases[..i].iter().any(|b| b.asn == a.asn) {
                return Err(bad(at(AsField::Asn), &format!("duplicate asn {}", a.asn)));
            }
            if !(a.clock_offset.abs() <= MAX_CLOCK_OFFSET) {
                return Err(bad(at(AsField::ClockOffset), &"clock offset must be within ±0.5 s"));
            }
            if !(a.latency >= 0.0) {
                return Err(bad(at(AsField::Latency), &"latency must be non-negative"));
            }
            if i < n - 1 {
                latency += a.latency;
            }
            if a.role == Role::Transit {
                cooperating += 1;
            }
            if let Some(adv) = &a.adversary {
                if !adv.behavior.compatible(a.role) {
                    return Err(bad(
                        at(AsField::Adversary),
                        &format!("{} cannot be attached to a {:?} AS", adv.behavior.name(), a.role),
                    ));
                }
                let ok = match adv.behavior {
                    Behavior::Flood { multiplier } | Behavior::TimestampShift { multiplier, .. } => {
                        multiplier > 0.0 && multiplier.is_finite()
                    }
                    Behavior::Replay { factor, .. } | Behavior::FrameDuplicateEvidence { factor } => factor >= 2,
                    Behavior::Inject { rate } => rate > 0.0 && rate.is_finite(),
                    Behavior::CorruptUpstreamMacs => true,
                };
                if !ok || adv.until.is_some_and(|u| u < adv.from) {
                    return Err(bad(at(AsField::Adversary), &"adversary parameters out of range"));
                }
            }
            if a.sb.is_some() && a.role != Role::Transit {
                return Err(bad(
                    at(AsField::Sb),
                    &"suspicious-bit forwarding needs a cooperating transit",
                ));
            }
        }
        if latency > MAX_PATH_LATENCY + 1e-12 {
            return Err(bad(Field::As(0, AsField::Latency), &"end-to-end latency exceeds 1 s"));
        }
        if cooperating > crate::wire::MAX_SLOTS {
            return Err(bad(Field::Root, &"too many cooperating transits"));
        }
        Ok(())
    }
}

#[derive(Deserialize)]
struct SpannedAs {
    #[serde(default)]
    asn: Option<Spanned<toml::Value>>,
    #[serde(default)]
    role: Option<Spanned<toml::Value>>,
    #[serde(default)]
    clock_offset: Option<Spanned<toml::Value>>,
    #[serde(default)]
    latency: Option<Spanned<toml::Value>>,
    #[serde(default)]
    adversary: Option<Spanned<toml::Value>>,
    #[serde(default)]
    sb: Option<Spanned<toml::Value>>,
}

/// Byte spans of the fields validation can complain about.
#[derive(Deserialize)]
struct Spans {
    #[serde(default)]
    duration: Option<Spanned<toml::Value>>,
    #[serde(default)]
    policy: Option<Spanned<toml::Value>>,
    #[serde(default)]
    traffic: Option<Spanned<toml::Value>>,
    #[serde(default)]
    evidence: Option<Spanned<toml::Value>>,
    #[serde(default, rename = "as")]
    ases: Vec<Spanned<SpannedAs>>,
}

impl Spans {
    fn of(&self, field: Field) -> Option<Range<usize>> {
        let span = |v: &Option<Spanned<toml::Value>>| v.as_ref().map(Spanned::span);
        match field {
            Field::Root => None,
            Field::Duration => span(&self.duration),
            Field::Policy => span(&self.policy),
            Field::Traffic => span(&self.traffic),
            Field::Evidence => span(&self.evidence),
            Field::As(i, f) => {
                let entry = self.ases.get(i)?;
                let a = entry.get_ref();
                let inner = match f {
                    AsField::Entry => None,
                    AsField::Asn => span(&a.asn),
                    AsField::Role => span(&a.role),
                    AsField::ClockOffset => span(&a.clock_offset),
                    AsField::Latency => span(&a.latency),
                    AsField::Adversary => span(&a.adversary),
                    AsField::Sb => span(&a.sb),
                };
                inner.or_else(|| Some(entry.span()))
            }
        }
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

/// Parses and validates a scenario file. Errors carry 1-based line numbers.
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let parse_err = |e: toml::de::Error| ConfigError::Parse {
        line: e.span().map_or(1, |s| line_of(text, s.start)),
        message: e.message().to_string(),
    };
    let cfg: ScenarioConfig = toml::from_str(text).map_err(parse_err)?;
    match cfg.validate() {
        Ok(()) => Ok(cfg),
        Err(ConfigError::Invalid { field, message, .. }) => {
            let spans: Spans = toml::from_str(text).map_err(parse_err)?;
            Err(ConfigError::Invalid {
                field,
                line: spans.of(field).map(|s| line_of(text, s.start)),
                message,
            })
        }
        Err(e) => Err(e),
    }
}
