use fair_core::protest::{police_evidence, Outcome};
use fair_core::sim::{
    run_scenario, Adversary, AsConfig, Behavior, EvidenceConfig, OutputConfig, PolicyConfig, Report, Role,
    ScenarioConfig, ScenarioResult, ShiftMode, TrafficConfig,
};
use fair_core::Asn;

const CIR: u64 = 100_000;

/// Source AS 100, cooperating transits 1..=n, destination AS 200.
fn line(n: u32, rate: f64, seed: u64) -> ScenarioConfig {
    let mut ases = vec![AsConfig::new(100, Role::Source)];
    ases.extend((1..=n).map(|i| AsConfig::new(i, Role::Transit)));
    ases.push(AsConfig::new(200, Role::Destination));
    for (i, a) in ases.iter_mut().enumerate() {
        a.latency = 0.02;
        a.clock_offset = [0.3, -0.4, 0.1, -0.2, 0.45, 0.0][i % 6];
    }
    ScenarioConfig {
        name: "test".into(),
        seed,
        duration: 4.0,
        policy: PolicyConfig {
            cir: CIR,
            cbs: None,
            validity: 3600,
        },
        traffic: TrafficConfig::fixed(rate, 500),
        evidence: EvidenceConfig::default(),
        output: OutputConfig::default(),
        ases,
    }
}

fn with(mut cfg: ScenarioConfig, pos: usize, b: Behavior) -> ScenarioConfig {
    cfg.ases[pos].adversary = Some(Adversary::new(b));
    cfg
}

fn verdict(r: &ScenarioResult) -> &fair_core::protest::Verdict {
    &r.protest.as_ref().expect("protest ran").verdict
}

#[test]
fn benign_run_is_quiet() {
    let r = run_scenario(&line(3, 0.9, 1)).unwrap();
    assert!(r.sent > 600);
    assert_eq!(r.destination.received, r.sent);
    assert_eq!(r.destination.delivered, r.sent);
    assert_eq!(r.destination.clock_drops, 0);
    assert_eq!(r.destination.icv_failures, 0);
    assert_eq!(r.destination.violations, 0);
    assert!(r.protest.is_none());
    assert_eq!(Report::from_result(&r).verdict, "none");
}

#[test]
fn flood_convicts_the_source() {
    let cfg = with(line(3, 0.9, 2), 0, Behavior::Flood { multiplier: 2.0 });
    let r = run_scenario(&cfg).unwrap();
    assert!(r.destination.violations > 0);
    let v = verdict(&r);
    assert_eq!(v.outcome, Outcome::SourceGuilty);
    assert_eq!(v.admitting, vec![Asn(1), Asn(2), Asn(3)]);
}

#[test]
fn collusion_points_at_the_corrupter() {
    for pos in 1..=5u32 {
        let cfg = with(
            line(5, 0.9, 10 + pos as u64),
            pos as usize,
            Behavior::CorruptUpstreamMacs,
        );
        let cfg = with(cfg, 0, Behavior::Flood { multiplier: 2.0 });
        let r = run_scenario(&cfg).unwrap();
        let v = verdict(&r);
        let expected: Vec<Asn> = (pos + 1..=5).map(Asn).collect();
        assert_eq!(v.admitting, expected, "corrupter at {pos}");
        let iv = v.outcome.interval().expect("localized");
        assert!(iv.contains(pos as usize), "corrupter at {pos}: {iv:?}");
    }
}

#[test]
fn replay_is_localized() {
    for pos in 1..=3usize {
        for rerandomize in [false, true] {
            let cfg = with(
                line(3, 0.9, 20 + pos as u64),
                pos,
                Behavior::Replay { factor: 2, rerandomize },
            );
            let r = run_scenario(&cfg).unwrap();
            let v = verdict(&r);
            assert!(v.duplicate_groups > 0);
            let Outcome::ReplayDetected { interval } = v.outcome else {
                panic!("{:?}", v.outcome)
            };
            assert!(
                interval.contains(pos),
                "pos {pos} rerandomize {rerandomize}: {interval:?}"
            );
        }
    }
}

#[test]
fn injection_is_admitted_downstream() {
    let cfg = with(line(4, 0.5, 31), 2, Behavior::Inject { rate: 1.5 });
    let r = run_scenario(&cfg).unwrap();
    let p = r.protest.as_ref().unwrap();
    for a in [Asn(2), Asn(3), Asn(4)] {
        assert!(p.verdict.admitting.contains(&a));
    }
    let iv = p.verdict.outcome.interval().unwrap();
    assert!(iv.contains(2), "{:?}", p.verdict.outcome);
    assert!(r.destination.icv_failures > 0);
}

#[test]
fn timestamp_shift_hides_only_the_first_second() {
    let cfg = with(
        line(2, 0.9, 41),
        0,
        Behavior::TimestampShift {
            multiplier: 1.5,
            mode: ShiftMode::Once,
        },
    );
    let r = run_scenario(&cfg).unwrap();
    let p = r.protest.as_ref().unwrap();
    assert_eq!(p.verdict.outcome, Outcome::SourceGuilty);
    let recs: Vec<(u64, u32, u64)> = p
        .bundle
        .records
        .iter()
        .map(|x| (p.bundle.record_secs(x), x.fair.seqno, x.net.wire_len()))
        .collect();
    let per = police_evidence(&recs, CIR, CIR, 0).per_second();
    let first = recs.iter().map(|r| r.0).min().unwrap();
    assert!(!per.contains_key(&first));
    for s in first + 1..first + 4 {
        assert!(per.get(&s).copied().unwrap_or(0) > 0, "second {s}: {per:?}");
    }
}

#[test]
fn framing_by_duplicate_evidence_is_caught() {
    let cfg = with(line(2, 0.9, 51), 3, Behavior::FrameDuplicateEvidence { factor: 2 });
    let r = run_scenario(&cfg).unwrap();
    let v = verdict(&r);
    let Outcome::ReplayDetected { interval } = v.outcome else {
        panic!("{:?}", v.outcome)
    };
    assert_eq!(interval.downstream, Asn(200));
}

#[test]
fn same_seed_same_report() {
    let cfg = with(
        line(3, 0.9, 61),
        2,
        Behavior::Replay {
            factor: 2,
            rerandomize: true,
        },
    );
    let a = Report::from_result(&run_scenario(&cfg).unwrap()).to_text();
    let b = Report::from_result(&run_scenario(&cfg).unwrap()).to_text();
    assert_eq!(a, b);
    let mut other = cfg.clone();
    other.seed += 1;
    assert_ne!(a, Report::from_result(&run_scenario(&other).unwrap()).to_text());
}

#[test]
fn noncooperating_transits_change_nothing_but_timing() {
    let base = with(line(2, 0.9, 71), 0, Behavior::Flood { multiplier: 2.0 });
    let mut padded = base.clone();
    let mut plain = AsConfig::new(50, Role::TransitNoncoop);
    plain.latency = 0.01;
    padded.ases.insert(2, plain);
    let a = run_scenario(&base).unwrap();
    let b = run_scenario(&padded).unwrap();
    assert_eq!(verdict(&a).outcome, verdict(&b).outcome);
    assert_eq!(verdict(&a).admitting, verdict(&b).admitting);
    assert_eq!(a.sent, b.sent);
}
