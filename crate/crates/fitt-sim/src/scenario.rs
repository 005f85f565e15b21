//! Declarative experiment descriptions: the TOML schema, validation with
//! field-path diagnostics, the built-in evaluation scenarios, and the
//! variant constructors the comparison checks rely on.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::name::Name;
use crate::nodes::TrafficClass;
use crate::topology::{Attach, TopologySpec};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{path}: {message}")]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError {
            path: path.into(),
            message: message.into(),
        }
    }
}

fn d_seed() -> u64 {
    0
}
fn d_metric_bin() -> f64 {
    1.0
}
fn d_pit_lifetime() -> f64 {
    2.0
}
fn d_revert_timer() -> f64 {
    5.0
}
fn d_rate_limit_timer() -> f64 {
    3.0
}
fn d_link_delay_ms() -> f64 {
    10.0
}
fn d_true() -> bool {
    true
}
fn d_one() -> usize {
    1
}
fn d_static_names() -> u32 {
    500
}
fn d_freshness() -> f64 {
    4.0
}
fn d_interval() -> f64 {
    1.0
}
fn d_spread() -> String {
    "spread".to_string()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProducerSpec {
    pub id: String,
    /// "as:<k>" (mesh gateway) or "node:<router id>".
    pub attach: String,
    pub prefix: String,
    pub capacity: f64,
    #[serde(default = "d_static_names")]
    pub static_names: u32,
    #[serde(default = "d_freshness")]
    pub freshness: f64,
    #[serde(default = "d_interval")]
    pub fake_report_interval: f64,
    #[serde(default = "d_interval")]
    pub nack_refresh_interval: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConsumerSpec {
    pub id: String,
    /// Expands to `<id>00 .. <id>NN` when greater than one.
    #[serde(default = "d_one")]
    pub count: usize,
    /// "spread", "as:<k>" or "node:<router id>".
    #[serde(default = "d_spread")]
    pub attach: String,
    pub prefix: String,
    pub rate: f64,
    pub class: TrafficClass,
    #[serde(default)]
    pub start: f64,
    #[serde(default)]
    pub stop: Option<f64>,
    #[serde(default = "d_true")]
    pub compliant: bool,
    #[serde(default)]
    pub universe: Option<u32>,
    /// Disabled groups keep their nodes (and everyone else's seeds) in
    /// place but never emit; comparison runs flip this.
    #[serde(default = "d_true")]
    pub enabled: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub duration: f64,
    #[serde(default = "d_seed")]
    pub seed: u64,
    #[serde(default = "d_metric_bin")]
    pub metric_bin: f64,
    #[serde(default = "d_pit_lifetime")]
    pub pit_lifetime: f64,
    #[serde(default = "d_revert_timer")]
    pub revert_timer: f64,
    #[serde(default = "d_rate_limit_timer")]
    pub rate_limit_timer: f64,
    #[serde(default)]
    pub cs_capacity: usize,
    #[serde(default = "d_link_delay_ms")]
    pub link_delay_ms: f64,
    #[serde(default)]
    pub link_capacity_pps: Option<f64>,
    /// Whether routers run the throttling strategy at all.
    #[serde(default = "d_true")]
    pub fitt: bool,
    #[serde(default = "d_true")]
    pub clear_blacklist_on_revert: bool,
    #[serde(default)]
    pub topology: TopologySpec,
    pub producers: Vec<ProducerSpec>,
    #[serde(default)]
    pub consumers: Vec<ConsumerSpec>,
}

impl ScenarioConfig {
    /// Structural validation; graph-level checks (prefix reachability)
    /// happen when the world is built.
    pub fn validate(&self) -> Result<(), ConfigError> {
        fn err(path: impl Into<String>, message: impl Into<String>) -> ConfigError {
            ConfigError::new(path, message)
        }
        if self.duration <= 0.0 {
            return Err(err("duration", "must be > 0"));
        }
        for (field, value) in [
            ("metric_bin", self.metric_bin),
            ("pit_lifetime", self.pit_lifetime),
            ("revert_timer", self.revert_timer),
            ("rate_limit_timer", self.rate_limit_timer),
            ("link_delay_ms", self.link_delay_ms),
        ] {
            if value <= 0.0 {
                return Err(err(field, "must be > 0"));
            }
        }
        if let Some(cap) = self.link_capacity_pps {
            if cap <= 0.0 {
                return Err(err("link_capacity_pps", "must be > 0 when set"));
            }
        }
        if self.producers.is_empty() {
            return Err(err("producers", "at least one producer is required"));
        }

        let plan = self.topology.plan(self.fitt)?;
        let router_ids: Vec<&str> = plan.routers.iter().map(|r| r.id.as_str()).collect();

        let mut prefixes = Vec::new();
        for (i, p) in self.producers.iter().enumerate() {
            let path = |f: &str| format!("producers[{i}].{f}");
            let prefix = Name::parse(&p.prefix)
                .map_err(|e| err(path("prefix"), e.to_string()))?;
            if prefix.is_empty() {
                return Err(err(path("prefix"), "the root name cannot be served"));
            }
            if prefixes.contains(&prefix) {
                return Err(err(path("prefix"), "duplicate producer prefix"));
            }
            prefixes.push(prefix);
            if p.capacity <= 0.0 {
                return Err(err(path("capacity"), "must be > 0"));
            }
            for (f, v) in [
                ("fake_report_interval", p.fake_report_interval),
                ("nack_refresh_interval", p.nack_refresh_interval),
            ] {
                if v <= 0.0 {
                    return Err(err(path(f), "must be > 0"));
                }
            }
            if p.nack_refresh_interval > self.revert_timer {
                return Err(err(
                    path("nack_refresh_interval"),
                    "must not exceed revert_timer or records lapse between refreshes",
                ));
            }
            if p.freshness < 0.0 {
                return Err(err(path("freshness"), "must be >= 0"));
            }
            match Attach::parse(&p.attach, &path("attach"))? {
                Attach::Spread => {
                    return Err(err(path("attach"), "producers need as:<k> or node:<id>"))
                }
                Attach::As(k) => {
                    if !plan.as_gateways.contains_key(&k) {
                        return Err(err(path("attach"), format!("no AS {k} in this topology")));
                    }
                }
                Attach::Node(id) => {
                    if !router_ids.contains(&id.as_str()) {
                        return Err(err(path("attach"), format!("unknown router {id:?}")));
                    }
                }
            }
        }

        let mut latest_start: f64 = 0.0;
        for (i, c) in self.consumers.iter().enumerate() {
            let path = |f: &str| format!("consumers[{i}].{f}");
            Name::parse(&c.prefix).map_err(|e| err(path("prefix"), e.to_string()))?;
            if c.rate <= 0.0 {
                return Err(err(path("rate"), "must be > 0"));
            }
            if c.count == 0 {
                return Err(err(path("count"), "must be >= 1"));
            }
            if c.start < 0.0 {
                return Err(err(path("start"), "must be >= 0"));
            }
            if let Some(stop) = c.stop {
                if stop <= c.start {
                    return Err(err(path("stop"), "must be after start"));
                }
            }
            if matches!(c.class, TrafficClass::I1) && c.universe.unwrap_or(0) == 0 {
                return Err(err(path("universe"), "i1 traffic needs a universe >= 1"));
            }
            if c.compliant && matches!(c.class, TrafficClass::I2 | TrafficClass::Mixed) {
                return Err(err(
                    path("class"),
                    "fake-sending traffic must be marked compliant = false",
                ));
            }
            match Attach::parse(&c.attach, &path("attach"))? {
                Attach::Spread => {
                    if plan.edge_order.is_empty() {
                        return Err(err(path("attach"), "no edge routers to spread across"));
                    }
                }
                Attach::As(k) => {
                    if !plan.as_gateways.contains_key(&k) {
                        return Err(err(path("attach"), format!("no AS {k} in this topology")));
                    }
                }
                Attach::Node(id) => {
                    if !router_ids.contains(&id.as_str()) {
                        return Err(err(path("attach"), format!("unknown router {id:?}")));
                    }
                }
            }
            if c.enabled {
                latest_start = latest_start.max(c.start);
            }
        }
        if self.duration <= latest_start {
            return Err(err("duration", "must exceed the latest traffic start"));
        }
        Ok(())
    }

    /// Disables every consumer group whose id starts with `id_prefix`.
    pub fn disable_group(&mut self, id_prefix: &str) {
        for c in &mut self.consumers {
            if c.id.starts_with(id_prefix) {
                c.enabled = false;
            }
        }
    }
}

pub const TARGET_PREFIX: &str = "/univ1/cs/server/email";
pub const SECOND_PREFIX: &str = "/univ2/cs/server/email";
pub const SIDE_SERVICE_PREFIX: &str = "/iotsvc/cloud/report";

pub const BUILTIN_NAMES: &[&str] = &[
    "i1_resilience_nocache",
    "i1_resilience_cache",
    "fake_attack",
    "valid_attack",
    "mixed_attack",
    "two_prefix",
    "granularity",
];

fn base(name: &str, duration: f64) -> ScenarioConfig {
    ScenarioConfig {
        name: Some(name.to_string()),
        duration,
        seed: 1,
        metric_bin: 1.0,
        pit_lifetime: 2.0,
        // Long enough that records never lapse mid-run; the victim's
        // refresh feedback goes quiet once throttling succeeds, and a
        // revert during a still-running attack would only let one burst
        // through before the next report reinstates the block.
        revert_timer: 60.0,
        rate_limit_timer: 3.0,
        cs_capacity: 0,
        link_delay_ms: 10.0,
        link_capacity_pps: None,
        fitt: true,
        clear_blacklist_on_revert: true,
        topology: TopologySpec::FourAsMesh {
            ases: 4,
            edges_per_as: 3,
        },
        producers: Vec::new(),
        consumers: Vec::new(),
    }
}

fn producer(id: &str, as_index: usize, prefix: &str, capacity: f64) -> ProducerSpec {
    ProducerSpec {
        id: id.to_string(),
        attach: format!("as:{as_index}"),
        prefix: prefix.to_string(),
        capacity,
        static_names: 500,
        freshness: 4.0,
        fake_report_interval: 1.0,
        nack_refresh_interval: 1.0,
    }
}

fn group(
    id: &str,
    count: usize,
    prefix: &str,
    rate: f64,
    class: TrafficClass,
    start: f64,
    compliant: bool,
) -> ConsumerSpec {
    ConsumerSpec {
        id: id.to_string(),
        count,
        attach: "spread".to_string(),
        prefix: prefix.to_string(),
        rate,
        class,
        start,
        stop: None,
        compliant,
        universe: None,
        enabled: true,
    }
}

/// The no-defense resilience study: sixty attackers request existing data
/// at 100/s from second 3 with no throttling strategy anywhere.
fn i1_resilience(name: &str, cs_capacity: usize) -> ScenarioConfig {
    let mut cfg = base(name, 30.0);
    cfg.fitt = false;
    cfg.cs_capacity = cs_capacity;
    // Far above any offered load so the victim never complains.
    cfg.producers = vec![producer("srv0", 0, TARGET_PREFIX, 1e6)];
    let mut attackers = group("atk", 60, TARGET_PREFIX, 100.0, TrafficClass::I1, 3.0, false);
    attackers.universe = Some(500);
    cfg.consumers = vec![attackers];
    cfg
}

/// Sixty fake-Interest attackers at 100/s against twelve legitimate
/// clients at 40/s.
fn fake_attack() -> ScenarioConfig {
    let mut cfg = base("fake_attack", 20.0);
    cfg.producers = vec![producer("srv0", 0, TARGET_PREFIX, 1500.0)];
    cfg.consumers = vec![
        group("atk", 60, TARGET_PREFIX, 100.0, TrafficClass::I2, 3.0, false),
        group("leg", 12, TARGET_PREFIX, 40.0, TrafficClass::I3, 0.0, true),
    ];
    cfg
}

/// Valid-Interest overload: capacity 1500/s and a 3 s reinforcement window.
fn valid_attack() -> ScenarioConfig {
    let mut cfg = base("valid_attack", 30.0);
    cfg.producers = vec![producer("srv0", 0, TARGET_PREFIX, 1500.0)];
    cfg.consumers = vec![
        group("atk", 60, TARGET_PREFIX, 100.0, TrafficClass::I3, 3.0, false),
        group("leg", 12, TARGET_PREFIX, 40.0, TrafficClass::I3, 0.0, true),
    ];
    cfg
}

/// Attackers send fake and valid Interests in equal halves.
fn mixed_attack() -> ScenarioConfig {
    let mut cfg = base("mixed_attack", 30.0);
    cfg.producers = vec![producer("srv0", 0, TARGET_PREFIX, 1500.0)];
    cfg.consumers = vec![
        group("atk", 60, TARGET_PREFIX, 100.0, TrafficClass::Mixed, 3.0, false),
        group("leg", 12, TARGET_PREFIX, 40.0, TrafficClass::I3, 0.0, true),
    ];
    cfg
}

/// Two victims on different gateways, attacked by half the botnet each
/// from seconds 2 and 4, both with capacity 750/s.
fn two_prefix() -> ScenarioConfig {
    let mut cfg = base("two_prefix", 30.0);
    cfg.producers = vec![
        producer("srv0", 0, TARGET_PREFIX, 750.0),
        producer("srv1", 1, SECOND_PREFIX, 750.0),
    ];
    cfg.consumers = vec![
        group("atkp", 30, TARGET_PREFIX, 100.0, TrafficClass::I3, 2.0, false),
        group("atkq", 30, SECOND_PREFIX, 100.0, TrafficClass::I3, 4.0, false),
        group("legp", 6, TARGET_PREFIX, 40.0, TrafficClass::I3, 0.0, true),
        group("legq", 6, SECOND_PREFIX, 40.0, TrafficClass::I3, 0.0, true),
    ];
    cfg
}

/// Sixty compromised clients flood one prefix while keeping their normal
/// 20/s service traffic to another provider.
fn granularity() -> ScenarioConfig {
    let mut cfg = base("granularity", 20.0);
    cfg.producers = vec![
        producer("srv0", 0, TARGET_PREFIX, 1500.0),
        producer("srv1", 1, SIDE_SERVICE_PREFIX, 1500.0),
    ];
    cfg.consumers = vec![
        group("bot", 60, TARGET_PREFIX, 100.0, TrafficClass::I2, 3.0, false),
        group(
            "bot",
            60,
            SIDE_SERVICE_PREFIX,
            20.0,
            TrafficClass::I3,
            0.0,
            true,
        ),
    ];
    cfg
}

pub fn builtin(name: &str) -> Option<ScenarioConfig> {
    let cfg = match name {
        "i1_resilience_nocache" => i1_resilience("i1_resilience_nocache", 0),
        "i1_resilience_cache" => i1_resilience("i1_resilience_cache", 200),
        "fake_attack" => fake_attack(),
        "valid_attack" => valid_attack(),
        "mixed_attack" => mixed_attack(),
        "two_prefix" => two_prefix(),
        "granularity" => granularity(),
        _ => return None,
    };
    debug_assert!(cfg.validate().is_ok(), "builtin must validate");
    Some(cfg)
}

/// The resilience scenario with a different name universe, for the
/// larger-universe comparison under identical seeds.
pub fn i1_resilience_with_universe(cs_capacity: usize, universe: u32) -> ScenarioConfig {
    let mut cfg = i1_resilience("i1_resilience_variant", cs_capacity);
    cfg.producers[0].static_names = universe;
    cfg.consumers[0].universe = Some(universe);
    cfg
}

/// The two-victim scenario with one attack group silenced; node placement
/// and seeds stay identical to the dual run.
pub fn two_prefix_control(keep_first: bool) -> ScenarioConfig {
    let mut cfg = two_prefix();
    cfg.disable_group(if keep_first { "atkq" } else { "atkp" });
    cfg
}

/// The granularity scenario with the attack streams silenced: the no-attack
/// baseline for the side service.
pub fn granularity_baseline() -> ScenarioConfig {
    let mut cfg = granularity();
    for c in &mut cfg.consumers {
        if !c.compliant {
            c.enabled = false;
        }
    }
    cfg
}

/// Resolves a built-in name or loads and validates a TOML scenario file.
pub fn load_scenario(spec: &str) -> Result<ScenarioConfig, ConfigError> {
    if let Some(cfg) = builtin(spec) {
        return Ok(cfg);
    }
    let path = Path::new(spec);
    if !path.exists() {
        return Err(ConfigError::new(
            "scenario",
            format!(
                "{spec:?} is neither a built-in ({}) nor an existing file",
                BUILTIN_NAMES.join(", ")
            ),
        ));
    }
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::new("scenario", format!("cannot read {spec:?}: {e}")))?;
    let cfg: ScenarioConfig = toml::from_str(&text)
        .map_err(|e| ConfigError::new("scenario", format!("parse error: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}
