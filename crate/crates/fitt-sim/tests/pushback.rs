//! End-to-end pushback behaviour on the small five-router topology:
//! recursive feedback propagation, wholesale throttling of opaque faces,
//! record revert after an attack ends, link serialization, and expiry
//! accounting with no strategy deployed.

use fitt_sim::engine::{run_scenario, FittEventKind, RunOutcome};
use fitt_sim::metrics::Metric;
use fitt_sim::name::Name;
use fitt_sim::nodes::TrafficClass;
use fitt_sim::scenario::{ConsumerSpec, ProducerSpec, ScenarioConfig};
use fitt_sim::topology::{LinkSpec, RouterSpec, TopologySpec};

const PREF: &str = "/univ1/service/email";

fn producer(capacity: f64) -> ProducerSpec {
    ProducerSpec {
        id: "srv".into(),
        attach: "node:r1".into(),
        prefix: PREF.into(),
        capacity,
        static_names: 100,
        freshness: 4.0,
        fake_report_interval: 1.0,
        nack_refresh_interval: 1.0,
    }
}

fn consumer(id: &str, router: &str, rate: f64, class: TrafficClass, start: f64) -> ConsumerSpec {
    ConsumerSpec {
        id: id.into(),
        count: 1,
        attach: format!("node:{router}"),
        prefix: PREF.into(),
        rate,
        class,
        start,
        stop: None,
        compliant: !matches!(class, TrafficClass::I2 | TrafficClass::Mixed),
        universe: None,
        enabled: true,
    }
}

fn fig5(duration: f64, capacity: f64) -> ScenarioConfig {
    ScenarioConfig {
        name: Some("fig5-test".into()),
        duration,
        seed: 11,
        metric_bin: 1.0,
        pit_lifetime: 2.0,
        revert_timer: 60.0,
        rate_limit_timer: 3.0,
        cs_capacity: 0,
        link_delay_ms: 10.0,
        link_capacity_pps: None,
        fitt: true,
        clear_blacklist_on_revert: true,
        topology: TopologySpec::Fig5Toy,
        producers: vec![producer(capacity)],
        consumers: Vec::new(),
    }
}

fn sum(series: &[f64]) -> f64 {
    series.iter().sum()
}

fn handled_at(out: &RunOutcome, node: &str) -> usize {
    let id = out.node_id(node).unwrap();
    out.log
        .iter()
        .filter(|e| e.node == id && matches!(e.kind, FittEventKind::NackHandled))
        .count()
}

#[test]
fn pushback_recurses_hop_by_hop_and_splits_capacity() {
    // One attacker behind each edge so every branch is suspect at every
    // hop: capacity 30 splits into 15 toward r2 and 15 toward r3, and r3
    // splits again into 7.5 for each of r4 and r5. Clients closer to the
    // victim end up with the larger share.
    let mut cfg = fig5(20.0, 30.0);
    cfg.consumers = vec![
        consumer("c1", "r2", 40.0, TrafficClass::I3, 1.0),
        consumer("c3", "r4", 40.0, TrafficClass::I3, 1.0),
        consumer("c5", "r5", 40.0, TrafficClass::I3, 1.0),
    ];
    for c in &mut cfg.consumers {
        c.compliant = false;
    }
    let out = run_scenario(&cfg).unwrap();
    let pref = Name::parse(PREF).unwrap();

    // The report travels r1 -> {r2, r3}, then r3 -> {r4, r5}.
    for router in ["r1", "r2", "r3", "r4", "r5"] {
        assert!(handled_at(&out, router) > 0, "{router} never reacted");
    }

    let limits = out.initial_limits(&pref);
    let limit_of = |node: &str| {
        let id = out.node_id(node).unwrap();
        limits
            .iter()
            .find(|((n, _), _)| *n == id)
            .map(|(_, v)| *v)
            .unwrap()
    };
    assert_eq!(limit_of("r2"), 15.0);
    assert_eq!(limit_of("r4"), 7.5);
    assert_eq!(limit_of("r5"), 7.5);

    // Relay routers only regenerate feedback; they never throttle.
    for relay in ["r1", "r3"] {
        let id = out.node_id(relay).unwrap();
        assert!(
            !out.log.iter().any(|e| e.node == id
                && matches!(e.kind, FittEventKind::Install { .. })),
            "{relay} must not install throttles"
        );
    }

    // All three attacker faces end blacklisted within the halving bound,
    // and nothing keeps arriving at the victim.
    let blocked = out.blacklist_times(&pref);
    assert_eq!(blocked.len(), 3);
    for ((node, _), at) in &blocked {
        let l0 = limits
            .iter()
            .find(|((n, _), _)| n == node)
            .map(|(_, v)| *v)
            .unwrap();
        let bound = 1.0 + out.rate_limit_timer * (l0.log2().ceil() + 1.0);
        assert!(*at <= bound, "{node} blocked at {at}, bound {bound}");
    }
    let received = out.series("srv", PREF, Metric::Received);
    assert_eq!(received[received.len() - 2..].iter().sum::<f64>(), 0.0);
}

#[test]
fn opaque_router_is_throttled_wholesale_by_its_upstream() {
    // r4 does not speak the strategy (an untrusted gateway); r3 must
    // terminate pushback there and block the whole face, sacrificing c4's
    // legitimate traffic while c5 behind r5 stays clean.
    let mut cfg = fig5(20.0, 1000.0);
    cfg.topology = TopologySpec::Custom {
        routers: vec![
            RouterSpec { id: "r1".into(), fitt: true, edge: false },
            RouterSpec { id: "r2".into(), fitt: true, edge: true },
            RouterSpec { id: "r3".into(), fitt: true, edge: false },
            RouterSpec { id: "r4".into(), fitt: false, edge: true },
            RouterSpec { id: "r5".into(), fitt: true, edge: true },
        ],
        links: vec![
            LinkSpec { a: "r1".into(), b: "r2".into(), delay_ms: None },
            LinkSpec { a: "r1".into(), b: "r3".into(), delay_ms: None },
            LinkSpec { a: "r2".into(), b: "r3".into(), delay_ms: None },
            LinkSpec { a: "r3".into(), b: "r4".into(), delay_ms: None },
            LinkSpec { a: "r3".into(), b: "r5".into(), delay_ms: None },
        ],
        routes: vec![],
    };
    cfg.consumers = vec![
        consumer("c3", "r4", 50.0, TrafficClass::I2, 1.0),
        consumer("c4", "r4", 10.0, TrafficClass::I3, 0.0),
        consumer("c5", "r5", 5.0, TrafficClass::I3, 0.0),
    ];
    let out = run_scenario(&cfg).unwrap();

    // r4 saw feedback it could not process.
    let opaque_drops = sum(&out.series("r4", PREF, Metric::DropNackOpaque));
    assert!(opaque_drops > 0.0, "r4 should drop feedback");

    // After the reaction: no fakes reach the victim, c4's legitimate
    // traffic is collateral damage behind the blocked face, c5 is intact.
    let fake = out.series("srv", PREF, Metric::ReceivedAttackFake);
    assert!(fake[..3].iter().sum::<f64>() > 0.0, "attack should land first");
    assert_eq!(sum(&fake[4..]), 0.0, "fakes must stop");

    let legit = out.series("srv", PREF, Metric::ReceivedLegit);
    assert!(legit[1] > 12.0, "both legit clients deliver before the block");
    let tail_mean = legit[8..].iter().sum::<f64>() / (legit.len() - 8) as f64;
    assert!(
        (tail_mean - 5.0).abs() < 1.0,
        "only c5 should remain, got {tail_mean}/s"
    );

    // The block lives on r3's face toward r4, not on an edge of r4.
    let pref = Name::parse(PREF).unwrap();
    let r3 = out.node_id("r3").unwrap();
    let r4 = out.node_id("r4").unwrap();
    let installs: Vec<_> = out
        .log
        .iter()
        .filter(|e| matches!(e.kind, FittEventKind::Install { .. }) && e.pref == pref)
        .collect();
    assert!(!installs.is_empty());
    let via_r4 = out
        .faces
        .iter()
        .find(|f| f.node == r3 && f.neighbor == r4)
        .unwrap();
    assert!(
        installs
            .iter()
            .any(|e| e.node == r3 && e.face == Some(via_r4.face)),
        "r3 must throttle the opaque face"
    );
}

#[test]
fn records_revert_after_the_attack_ends_and_traffic_flows_again() {
    let mut cfg = fig5(12.0, 1000.0);
    cfg.revert_timer = 2.0;
    // One compromised device: a fake flood from second 1 to 4, while its
    // own legitimate stream under the same prefix keeps running and gets
    // blocked as collateral (same face, same prefix).
    cfg.consumers = vec![
        consumer("c1", "r2", 30.0, TrafficClass::I2, 1.0),
        consumer("c1", "r2", 3.0, TrafficClass::I3, 0.0),
    ];
    cfg.consumers[0].stop = Some(4.0);
    let out = run_scenario(&cfg).unwrap();
    let pref = Name::parse(PREF).unwrap();

    let legit = out.series("srv", PREF, Metric::ReceivedLegit);
    assert!(legit[0] > 0.0, "legit stream flows before the attack");
    assert_eq!(legit[3], 0.0, "blocked while the reaction holds");
    assert!(
        legit[7..].iter().all(|v| *v > 0.0),
        "post-revert traffic must flow: {legit:?}"
    );

    // Once the edge blocks the flood the victim stops seeing evidence, so
    // the final report carries only the in-flight stragglers and the
    // records lapse one revert period later.
    let reverts: Vec<f64> = out
        .log
        .iter()
        .filter(|e| e.pref == pref && matches!(e.kind, FittEventKind::Revert))
        .map(|e| e.at.as_secs_f64())
        .collect();
    assert!(!reverts.is_empty(), "record must revert");
    assert!(reverts.iter().all(|t| *t >= 4.0 && *t <= 6.5), "{reverts:?}");
    let first_revert = reverts.iter().cloned().fold(f64::MAX, f64::min);
    let blocked_bins = (first_revert.floor() as usize).min(legit.len());
    assert!(
        legit[2..blocked_bins.saturating_sub(1)].iter().all(|v| *v == 0.0),
        "legit must stay blocked until the revert: {legit:?}"
    );
}

#[test]
fn link_capacity_serializes_traffic() {
    let mut cfg = fig5(10.0, 1000.0);
    cfg.link_capacity_pps = Some(20.0);
    cfg.consumers = vec![consumer("c1", "r2", 100.0, TrafficClass::I3, 0.0)];
    let out = run_scenario(&cfg).unwrap();
    let received = out.series("srv", PREF, Metric::Received);
    for (bin, rate) in received.iter().enumerate().skip(2) {
        assert!(*rate <= 22.0, "bin {bin} exceeds the serialized rate: {rate}");
    }
    assert!(received[5] >= 15.0, "pipeline should still deliver");
}

#[test]
fn unsatisfied_entries_expire_along_the_whole_path() {
    // No strategy anywhere; fakes simply pend for the PIT lifetime and
    // expire at every hop they crossed (c1 -> r2 -> r1 -> srv).
    let mut cfg = fig5(8.0, 1000.0);
    cfg.fitt = false;
    cfg.consumers = vec![consumer("c1", "r2", 50.0, TrafficClass::I2, 1.0)];
    cfg.consumers[0].stop = Some(3.0);
    let out = run_scenario(&cfg).unwrap();

    let offered = sum(&out.series("c1", PREF, Metric::Sent));
    assert!(offered > 80.0, "attack volume sanity");
    for router in ["r1", "r2"] {
        let expired = sum(&out.series(router, PREF, Metric::PitExpiries));
        assert_eq!(expired, offered, "{router} must expire every fake");
    }
    assert_eq!(sum(&out.series("r3", PREF, Metric::PitExpiries)), 0.0);
}
