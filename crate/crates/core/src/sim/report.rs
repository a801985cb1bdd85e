use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::engine::ScenarioResult;
use super::ScenarioError;
use crate::crypto::hash;
use crate::wire::write_dump;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HopReport {
    pub asn: String,
    pub processed: u64,
    pub clock_drops: u64,
    pub malformed: u64,
    pub replayed: u64,
    pub injected: u64,
    pub sb_flagged: u64,
    pub sb_dropped: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResponseReport {
    pub asn: String,
    pub admission: String,
    pub reason: String,
    pub mac_failures: u64,
    pub mac_checked: u64,
    pub mac_failure_fraction: String,
    pub tb_violations: u64,
}

/// Stable summary of a run. Serializes to `key: value` lines and to JSON.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    pub scenario: String,
    pub seed: u64,
    pub config_hash: String,
    pub sent: u64,
    pub received: u64,
    pub delivered: u64,
    pub clock_drops: u64,
    pub icv_failures: u64,
    pub violations: u64,
    pub flagged_arrivals: u64,
    pub hops: Vec<HopReport>,
    pub protest_triggered: bool,
    pub protest_error: Option<String>,
    pub evidence_records: usize,
    pub duplicate_groups: usize,
    pub verdict: String,
    pub admitting: Vec<String>,
    pub interval: Option<String>,
    pub responses: Vec<ResponseReport>,
    pub determinism_hash: String,
}

fn lower<T: std::fmt::Debug>(v: T) -> String {
    let s = format!("{v:?}");
    let mut out = String::new();
    for (i, c) in s.chars().enumerate() {
        if c.is_uppercase() && i > 0 {
            out.push('_');
        }
        out.push(c.to_ascii_lowercase());
    }
    out
}

impl Report {
    pub fn from_result(r: &ScenarioResult) -> Self {
        let d = r.destination;
        let protest = r.protest.as_ref();
        let mut report = Report {
            scenario: r.config.name.clone(),
            seed: r.config.seed,
            config_hash: hex::encode(r.config_hash),
            sent: r.sent,
            received: d.received,
            delivered: d.delivered,
            clock_drops: d.clock_drops + r.hops.iter().map(|h| h.clock_drops).sum::<u64>(),
            icv_failures: d.icv_failures,
            violations: d.violations,
            flagged_arrivals: r.flagged_arrivals,
            hops: r.hops[1..r.hops.len() - 1]
                .iter()
                .map(|h| HopReport {
                    asn: h.asn.to_string(),
                    processed: h.processed,
                    clock_drops: h.clock_drops,
                    malformed: h.malformed,
                    replayed: h.replayed,
                    injected: h.injected,
                    sb_flagged: h.sb_flagged,
                    sb_dropped: h.sb_dropped,
                })
                .collect(),
            protest_triggered: protest.is_some() || r.protest_error.is_some(),
            protest_error: r.protest_error.clone(),
            evidence_records: protest.map_or(0, |p| p.bundle.records.len()),
            duplicate_groups: protest.map_or(0, |p| p.verdict.duplicate_groups),
            verdict: protest.map_or("none".into(), |p| p.verdict.outcome.name().into()),
            admitting: protest.map_or(Vec::new(), |p| {
                p.verdict.admitting.iter().map(|a| a.to_string()).collect()
            }),
            interval: protest
                .and_then(|p| p.verdict.outcome.interval())
                .map(|i| format!("{}-{}", i.upstream, i.downstream)),
            responses: protest.map_or(Vec::new(), |p| {
                p.responses
                    .iter()
                    .map(|x| ResponseReport {
                        asn: x.asn.to_string(),
                        admission: lower(x.admission),
                        reason: lower(x.reason),
                        mac_failures: x.mac_failures,
                        mac_checked: x.mac_checked,
                        mac_failure_fraction: format!("{:.6}", x.failure_fraction()),
                        tb_violations: x.tb_violations,
                    })
                    .collect()
            }),
            determinism_hash: String::new(),
        };
        report.determinism_hash = hex::encode(hash(report.body().as_bytes()));
        report
    }

    /// Everything but the trailing hash line.
    fn body(&self) -> String {
        let mut s = String::new();
        let mut line = |k: &str, v: &dyn std::fmt::Display| {
            let _ = writeln!(s, "{k}: {v}");
        };
        line("scenario", &self.scenario);
        line("seed", &self.seed);
        line("config_hash", &self.config_hash);
        line("packets.sent", &self.sent);
        line("destination.received", &self.received);
        line("destination.delivered", &self.delivered);
        line("destination.clock_drops", &self.clock_drops);
        line("destination.icv_failures", &self.icv_failures);
        line("destination.violations", &self.violations);
        line("destination.flagged_arrivals", &self.flagged_arrivals);
        for h in &self.hops {
            let k = |f: &str| format!("hop.{}.{f}", h.asn);
            line(&k("processed"), &h.processed);
            line(&k("clock_drops"), &h.clock_drops);
            line(&k("malformed"), &h.malformed);
            line(&k("replayed"), &h.replayed);
            line(&k("injected"), &h.injected);
            line(&k("sb_flagged"), &h.sb_flagged);
            line(&k("sb_dropped"), &h.sb_dropped);
        }
        line("protest.triggered", &self.protest_triggered);
        if let Some(e) = &self.protest_error {
            line("protest.error", e);
        }
        line("protest.records", &self.evidence_records);
        line("protest.duplicate_groups", &self.duplicate_groups);
        line("verdict", &self.verdict);
        line("verdict.admitting", &self.admitting.join(","));
        line("verdict.interval", &self.interval.as_deref().unwrap_or("none"));
        for r in &self.responses {
            let k = |f: &str| format!("response.{}.{f}", r.asn);
            line(&k("admission"), &r.admission);
            line(&k("reason"), &r.reason);
            line(&k("mac_failures"), &r.mac_failures);
            line(&k("mac_checked"), &r.mac_checked);
            line(&k("mac_failure_fraction"), &r.mac_failure_fraction);
            line(&k("tb_violations"), &r.tb_violations);
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = self.body();
        let _ = writeln!(s, "determinism_hash: {}", self.determinism_hash);
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Writes `report.txt`, optionally `report.json`, the destination's store
/// as `store.fairdump` and the submitted bundle as `evidence.fairdump`.
/// Returns the written paths.
pub fn write_outputs(result: &ScenarioResult, dir: &Path, json: bool) -> Result<Vec<PathBuf>, ScenarioError> {
    let io = |e: std::io::Error| ScenarioError::Io(e.to_string());
    std::fs::create_dir_all(dir).map_err(io)?;
    let report = Report::from_result(result);
    let mut written = Vec::new();
    let txt = dir.join("report.txt");
    std::fs::write(&txt, report.to_text()).map_err(io)?;
    written.push(txt);
    if json {
        let p = dir.join("report.json");
        std::fs::write(&p, report.to_json()).map_err(io)?;
        written.push(p);
    }
    let wire = |e: crate::wire::WireError| ScenarioError::Io(e.to_string());
    let store = dir.join("store.fairdump");
    result
        .dest
        .store()
        .persist(&result.channel().id, &store)
        .map_err(wire)?;
    written.push(store);
    if let Some(p) = &result.protest {
        let ev = dir.join("evidence.fairdump");
        write_dump(&ev, &p.bundle.records).map_err(wire)?;
        written.push(ev);
    }
    Ok(written)
}
