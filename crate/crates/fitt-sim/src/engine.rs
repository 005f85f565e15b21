//! Deterministic discrete-event core: the virtual clock and event queue,
//! delayed links, world construction from a scenario, and packet dispatch
//! between forwarders and application nodes.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use crate::fitt::{validate_nack, FittConfig, FittState, Limit};
use crate::forwarder::{AcceptAll, AdmissionHook, DropReason, Forwarder, FwdEvent};
use crate::metrics::{Metric, MetricsStore, NodeId, PrefixId};
use crate::name::Name;
use crate::nodes::{
    OriginClass, ProducerConfig, ProducerReply, ProducerState, Stream, StreamConfig, TrafficClass,
};
use crate::packet::{Nack, Packet, Rsn};
use crate::scenario::{ConfigError, ScenarioConfig};
use crate::tables::FaceId;
use crate::time::SimTime;
use crate::topology::Attach;

/// A packet in flight plus simulator-side ground truth about who emitted
/// it. The attribution is metrics-only; protocol logic never reads it.
#[derive(Clone, Debug)]
pub struct SimPacket {
    pub packet: Packet,
    pub origin: NodeId,
    pub class: OriginClass,
}

#[derive(Clone, Debug)]
pub enum EventKind {
    Deliver {
        node: NodeId,
        face: FaceId,
        packet: SimPacket,
    },
    StreamEmit {
        node: NodeId,
        stream: usize,
    },
    ProducerTick {
        node: NodeId,
    },
    PitExpiry {
        node: NodeId,
        name: Name,
    },
    RateLimitTimer {
        node: NodeId,
        pref: Name,
    },
    RevertCheck {
        node: NodeId,
        pref: Name,
        rsn: Rsn,
    },
}

struct QueuedEvent {
    at: SimTime,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for QueuedEvent {
    fn eq(&self, other: &Self) -> bool {
        self.at == other.at && self.seq == other.seq
    }
}
impl Eq for QueuedEvent {}
impl PartialOrd for QueuedEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for QueuedEvent {
    // Inverted so the max-heap pops the earliest (fire_time, seq) first;
    // equal timestamps run in scheduling order.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.at, other.seq).cmp(&(self.at, self.seq))
    }
}

#[derive(Clone, Copy, Debug)]
struct FaceInfo {
    neighbor: NodeId,
    neighbor_face: FaceId,
    delay_us: u64,
    capacity_pps: Option<f64>,
    next_free: SimTime,
}

pub struct RouterState {
    pub fwd: Forwarder,
    pub fitt: Option<FittState>,
    pub is_edge: bool,
    /// Faces leading to routers that do not speak the strategy; pushback
    /// terminates there and this node throttles them wholesale.
    pub opaque_faces: BTreeSet<FaceId>,
}

pub enum NodeKind {
    Router(RouterState),
    Producer(ProducerState),
    Client(Vec<Stream>),
}

pub struct Node {
    pub name: String,
    pub kind: NodeKind,
}

#[derive(Clone, Debug, PartialEq)]
pub enum FittEventKind {
    NackEmitted,
    NackHandled,
    Install { limit: Limit },
    Halve { to: f64 },
    Blacklist,
    Release,
    Revert,
}

/// One strategy-level happening, for reports and the limit gauges.
#[derive(Clone, Debug)]
pub struct FittEvent {
    pub at: SimTime,
    pub node: NodeId,
    pub pref: Name,
    pub rsn: Rsn,
    pub face: Option<FaceId>,
    pub kind: FittEventKind,
}

#[derive(Clone, Debug)]
pub struct StreamInfo {
    pub prefix: Name,
    pub rate: f64,
    pub class: TrafficClass,
    pub compliant: bool,
    pub start: f64,
    pub enabled: bool,
}

#[derive(Clone, Debug)]
pub enum Role {
    Router { edge: bool, fitt: bool },
    Producer { prefix: Name },
    Client { streams: Vec<StreamInfo> },
}

#[derive(Clone, Copy, Debug)]
pub struct FaceRef {
    pub node: NodeId,
    pub face: FaceId,
    pub neighbor: NodeId,
}

pub struct World {
    now: SimTime,
    queue: BinaryHeap<QueuedEvent>,
    seq: u64,
    pub nodes: Vec<Node>,
    faces: Vec<Vec<FaceInfo>>,
    pub metrics: MetricsStore,
    pub log: Vec<FittEvent>,
    /// Producer prefixes, longest first, used to attribute names to a
    /// measurement prefix.
    traffic_prefixes: Vec<(Name, PrefixId)>,
    rate_limit_timer: f64,
    duration: SimTime,
    roles: Vec<Role>,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= *b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Seed for one traffic stream, stable across scenario variants: depends on
/// the run seed, the node slot, and what the stream does — not on how many
/// other streams exist.
fn stream_seed(run_seed: u64, node: NodeId, cfg: &StreamConfig) -> u64 {
    let mut role = Vec::new();
    role.extend_from_slice(cfg.prefix.to_string().as_bytes());
    role.push(match cfg.class {
        TrafficClass::I1 => 1,
        TrafficClass::I2 => 2,
        TrafficClass::I3 => 3,
        TrafficClass::Mixed => 4,
    });
    role.push(cfg.compliant as u8);
    role.extend_from_slice(&cfg.rate.to_bits().to_le_bytes());
    role.extend_from_slice(&cfg.start.to_bits().to_le_bytes());
    splitmix64(run_seed ^ splitmix64((node as u64) ^ splitmix64(fnv64(&role))))
}

impl World {
    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn schedule(&mut self, at: SimTime, kind: EventKind) {
        assert!(at >= self.now, "scheduling into the past: {at:?} < {:?}", self.now);
        self.seq += 1;
        self.queue.push(QueuedEvent {
            at,
            seq: self.seq,
            kind,
        });
    }

    /// Executes every queued event with fire time at or before `t_end`, in
    /// (fire_time, scheduling order).
    pub fn run_until(&mut self, t_end: SimTime) {
        while let Some(head) = self.queue.peek() {
            if head.at > t_end {
                break;
            }
            let ev = self.queue.pop().unwrap();
            self.now = ev.at;
            self.dispatch(ev.kind);
        }
        self.now = t_end.max(self.now);
    }

    pub fn run_to_end(&mut self) {
        self.run_until(self.duration);
    }

    fn traffic_prefix_id(&self, name: &Name) -> PrefixId {
        for (prefix, id) in &self.traffic_prefixes {
            if prefix.is_prefix_of(name) {
                return *id;
            }
        }
        0
    }

    fn send(&mut self, node: NodeId, face: FaceId, packet: SimPacket) {
        let info = &mut self.faces[node as usize][face as usize];
        let depart = match info.capacity_pps {
            Some(cap) => {
                let gap_us = (1e6 / cap).round().max(1.0) as u64;
                let depart = self.now.max(info.next_free);
                info.next_free = depart.plus_micros(gap_us);
                depart
            }
            None => self.now,
        };
        let arrive = depart.plus_micros(info.delay_us);
        let deliver = EventKind::Deliver {
            node: info.neighbor,
            face: info.neighbor_face,
            packet,
        };
        self.schedule(arrive, deliver);
    }

    fn dispatch(&mut self, kind: EventKind) {
        match kind {
            EventKind::Deliver { node, face, packet } => self.on_deliver(node, face, packet),
            EventKind::StreamEmit { node, stream } => self.on_stream_emit(node, stream),
            EventKind::ProducerTick { node } => self.on_producer_tick(node),
            EventKind::PitExpiry { node, name } => self.on_pit_expiry(node, name),
            EventKind::RateLimitTimer { node, pref } => self.on_rate_limit_timer(node, pref),
            EventKind::RevertCheck { node, pref, rsn } => self.on_revert_check(node, pref, rsn),
        }
    }

    fn on_stream_emit(&mut self, node: NodeId, stream_idx: usize) {
        let now = self.now;
        let NodeKind::Client(streams) = &mut self.nodes[node as usize].kind else {
            return;
        };
        let stream = &mut streams[stream_idx];
        if !stream.active(now) {
            return;
        }
        if let Some(later) = stream.defer_until(now) {
            if later < self.duration {
                self.schedule(
                    later,
                    EventKind::StreamEmit {
                        node,
                        stream: stream_idx,
                    },
                );
            }
            return;
        }
        let (interest, class) = stream.next_interest();
        stream.note_emit(now);
        let gap = stream.next_gap(now);
        let prefix = self.traffic_prefix_id(&interest.name);

        self.metrics.add(now, node, prefix, Metric::Sent, 1.0);
        self.send(
            node,
            0,
            SimPacket {
                packet: Packet::Interest(interest),
                origin: node,
                class,
            },
        );
        let next = now.plus_secs(gap);
        if next < self.duration {
            self.schedule(
                next,
                EventKind::StreamEmit {
                    node,
                    stream: stream_idx,
                },
            );
        }
    }

    fn on_producer_tick(&mut self, node: NodeId) {
        let now = self.now;
        let NodeKind::Producer(producer) = &mut self.nodes[node as usize].kind else {
            return;
        };
        let interval = producer
            .cfg
            .fake_report_interval
            .min(producer.cfg.nack_refresh_interval);
        let payloads = producer.tick(interval);
        let prefix = producer.cfg.prefix.clone();

        let prefix_id = self.traffic_prefix_id(&prefix);
        for payload in payloads {
            self.log.push(FittEvent {
                at: now,
                node,
                pref: payload.pref().clone(),
                rsn: payload.rsn(),
                face: None,
                kind: FittEventKind::NackEmitted,
            });
            self.metrics.add(now, node, prefix_id, Metric::NacksSent, 1.0);
            self.seq += 1;
            let hop_tag = self.seq;
            self.send(
                node,
                0,
                SimPacket {
                    packet: Packet::Nack(Nack { payload, hop_tag }),
                    origin: node,
                    class: OriginClass::Infra,
                },
            );
        }
        let next = now.plus_secs(interval);
        if next <= self.duration {
            self.schedule(next, EventKind::ProducerTick { node });
        }
    }

    fn on_pit_expiry(&mut self, node: NodeId, name: Name) {
        let now = self.now;
        let NodeKind::Router(router) = &mut self.nodes[node as usize].kind else {
            return;
        };
        let outcome = router.fwd.on_pit_expiry(&name, now);
        for event in outcome.events {
            if let FwdEvent::PitExpired {
                name,
                unsatisfied_faces,
            } = event
            {
                let prefix = self.traffic_prefix_id(&name);
                self.metrics.add(
                    now,
                    node,
                    prefix,
                    Metric::PitExpiries,
                    unsatisfied_faces as f64,
                );
            }
        }
    }

    fn notify_release(&mut self, node: NodeId, face: FaceId, pref: &Name) {
        let window = self.rate_limit_timer;
        let now = self.now;
        let info = self.faces[node as usize][face as usize];
        if let NodeKind::Client(streams) = &mut self.nodes[info.neighbor as usize].kind {
            for stream in streams {
                stream.on_release(pref, now, window);
            }
        }
    }

    fn on_rate_limit_timer(&mut self, node: NodeId, pref: Name) {
        let now = self.now;
        let rlt = self.rate_limit_timer;
        let NodeKind::Router(router) = &mut self.nodes[node as usize].kind else {
            return;
        };
        let Some(fitt) = router.fitt.as_mut() else {
            return;
        };
        let Some(outcome) = fitt.on_rate_limit_timer(&pref, now) else {
            return;
        };

        let prefix_id = self.traffic_prefix_id(&pref);
        for face in &outcome.released {
            self.log.push(FittEvent {
                at: now,
                node,
                pref: pref.clone(),
                rsn: Rsn::Valid,
                face: Some(*face),
                kind: FittEventKind::Release,
            });
            self.metrics.add(now, node, prefix_id, Metric::Releases, 1.0);
        }
        for (face, to) in &outcome.halved {
            self.log.push(FittEvent {
                at: now,
                node,
                pref: pref.clone(),
                rsn: Rsn::Valid,
                face: Some(*face),
                kind: FittEventKind::Halve { to: *to },
            });
            self.metrics.add(now, node, prefix_id, Metric::Halvings, 1.0);
        }
        for face in &outcome.blacklisted {
            self.log.push(FittEvent {
                at: now,
                node,
                pref: pref.clone(),
                rsn: Rsn::Valid,
                face: Some(*face),
                kind: FittEventKind::Blacklist,
            });
            self.metrics.add(now, node, prefix_id, Metric::Blacklists, 1.0);
        }
        for face in outcome.released.clone() {
            self.notify_release(node, face, &pref);
        }
        if outcome.reschedule {
            self.schedule(
                now.plus_secs(rlt),
                EventKind::RateLimitTimer { node, pref },
            );
        }
    }

    fn on_revert_check(&mut self, node: NodeId, pref: Name, rsn: Rsn) {
        let now = self.now;
        let NodeKind::Router(router) = &mut self.nodes[node as usize].kind else {
            return;
        };
        let Some(fitt) = router.fitt.as_mut() else {
            return;
        };
        let Some(outcome) = fitt.on_revert_check(&pref, rsn, now) else {
            return;
        };
        self.log.push(FittEvent {
            at: now,
            node,
            pref: pref.clone(),
            rsn,
            face: None,
            kind: FittEventKind::Revert,
        });
        for face in outcome.released {
            self.notify_release(node, face, &pref);
        }
    }

    fn on_deliver(&mut self, node: NodeId, face: FaceId, sp: SimPacket) {
        match &self.nodes[node as usize].kind {
            NodeKind::Router(_) => self.router_deliver(node, face, sp),
            NodeKind::Producer(_) => self.producer_deliver(node, face, sp),
            NodeKind::Client(_) => self.client_deliver(node, sp),
        }
    }

    fn router_deliver(&mut self, node: NodeId, face: FaceId, sp: SimPacket) {
        let now = self.now;
        match sp.packet {
            Packet::Interest(interest) => {
                let prefix = self.traffic_prefix_id(&interest.name);
                self.metrics.add(now, node, prefix, Metric::InterestsIn, 1.0);
                let NodeKind::Router(router) = &mut self.nodes[node as usize].kind else {
                    unreachable!()
                };
                let mut accept_all = AcceptAll;
                let hook: &mut dyn AdmissionHook = match router.fitt.as_mut() {
                    Some(fitt) => fitt,
                    None => &mut accept_all,
                };
                let outcome = router.fwd.receive_interest(face, interest, now, hook);
                self.apply_pipeline(node, outcome, sp.origin, sp.class);
            }
            Packet::Data(data) => {
                let prefix = self.traffic_prefix_id(&data.name);
                self.metrics.add(now, node, prefix, Metric::DataIn, 1.0);
                let NodeKind::Router(router) = &mut self.nodes[node as usize].kind else {
                    unreachable!()
                };
                let outcome = router.fwd.receive_data(face, data, now);
                self.apply_pipeline(node, outcome, sp.origin, sp.class);
            }
            Packet::Nack(nack) => self.router_nack(node, face, nack),
        }
    }

    fn apply_pipeline(
        &mut self,
        node: NodeId,
        outcome: crate::forwarder::PipelineOutcome,
        origin: NodeId,
        class: OriginClass,
    ) {
        let now = self.now;
        for event in &outcome.events {
            match event {
                FwdEvent::Drop { reason, name, .. } => {
                    let prefix = name
                        .as_ref()
                        .map(|n| self.traffic_prefix_id(n))
                        .unwrap_or(0);
                    let metric = match reason {
                        DropReason::Unroutable => Metric::DropUnroutable,
                        DropReason::Throttled => Metric::DropThrottled,
                        DropReason::Unsolicited => Metric::DropUnsolicited,
                        DropReason::InvalidNack => Metric::DropInvalidNack,
                        DropReason::NackOpaque => Metric::DropNackOpaque,
                        DropReason::DuplicateNonce => Metric::DropDuplicate,
                    };
                    self.metrics.add(now, node, prefix, metric, 1.0);
                }
                FwdEvent::CsHit { name, .. } => {
                    let prefix = self.traffic_prefix_id(name);
                    self.metrics.add(now, node, prefix, Metric::CsHits, 1.0);
                }
                FwdEvent::Aggregated { .. } | FwdEvent::PitExpired { .. } => {}
            }
        }
        if let Some((name, expiry)) = outcome.pit_expiry {
            self.schedule(expiry, EventKind::PitExpiry { node, name });
        }
        for emit in outcome.emits {
            match &emit.packet {
                Packet::Interest(i) => {
                    let prefix = self.traffic_prefix_id(&i.name);
                    self.metrics
                        .add(now, node, prefix, Metric::InterestsOut, 1.0);
                    self.send(
                        node,
                        emit.face,
                        SimPacket {
                            packet: emit.packet,
                            origin,
                            class,
                        },
                    );
                }
                Packet::Data(d) => {
                    let prefix = self.traffic_prefix_id(&d.name);
                    self.metrics.add(now, node, prefix, Metric::DataOut, 1.0);
                    self.send(
                        node,
                        emit.face,
                        SimPacket {
                            packet: emit.packet,
                            origin,
                            class,
                        },
                    );
                }
                Packet::Nack(_) => unreachable!("pipelines never emit feedback"),
            }
        }
    }

    fn router_nack(&mut self, node: NodeId, face: FaceId, nack: Nack) {
        let now = self.now;
        let rlt = self.rate_limit_timer;
        let prefix_id = self.traffic_prefix_id(nack.payload.pref());

        let NodeKind::Router(router) = &mut self.nodes[node as usize].kind else {
            unreachable!()
        };
        if router.fitt.is_none() {
            // A router outside the deployment forwards traffic but never
            // processes feedback.
            self.metrics
                .add(now, node, prefix_id, Metric::DropNackOpaque, 1.0);
            return;
        }
        if !validate_nack(face, &nack.payload, &router.fwd.fib) {
            self.metrics
                .add(now, node, prefix_id, Metric::DropInvalidNack, 1.0);
            return;
        }

        let is_edge = router.is_edge;
        let reaction = {
            let opaque = &router.opaque_faces;
            let fitt = router.fitt.as_mut().unwrap();
            fitt.handle_nack(&nack.payload, &router.fwd.pit, now, |f| {
                is_edge || opaque.contains(&f)
            })
        };

        let pref = nack.payload.pref().clone();
        let rsn = nack.payload.rsn();
        self.log.push(FittEvent {
            at: now,
            node,
            pref: pref.clone(),
            rsn,
            face: Some(face),
            kind: FittEventKind::NackHandled,
        });
        for install in &reaction.installs {
            self.log.push(FittEvent {
                at: now,
                node,
                pref: pref.clone(),
                rsn,
                face: Some(install.face),
                kind: FittEventKind::Install {
                    limit: install.limit,
                },
            });
        }
        for (down_face, payload) in reaction.downstream {
            self.seq += 1;
            let hop_tag = self.seq;
            self.metrics.add(now, node, prefix_id, Metric::NacksSent, 1.0);
            self.send(
                node,
                down_face,
                SimPacket {
                    packet: Packet::Nack(Nack { payload, hop_tag }),
                    origin: node,
                    class: OriginClass::Infra,
                },
            );
        }
        if reaction.start_rate_timer {
            self.schedule(
                now.plus_secs(rlt),
                EventKind::RateLimitTimer {
                    node,
                    pref: pref.clone(),
                },
            );
        }
        self.schedule(
            reaction.revert_deadline,
            EventKind::RevertCheck { node, pref, rsn },
        );
    }

    fn producer_deliver(&mut self, node: NodeId, face: FaceId, sp: SimPacket) {
        let now = self.now;
        let Packet::Interest(interest) = sp.packet else {
            // Data and feedback addressed to a producer carry no meaning.
            return;
        };
        let NodeKind::Producer(producer) = &mut self.nodes[node as usize].kind else {
            unreachable!()
        };
        let own_prefix = producer.cfg.prefix.clone();
        let reply = producer.on_interest(&interest);

        let prefix_id = self.traffic_prefix_id(&own_prefix);
        self.metrics.add(now, node, prefix_id, Metric::Received, 1.0);
        let class_metric = match sp.class {
            OriginClass::Legit => Some(Metric::ReceivedLegit),
            OriginClass::AttackFake => Some(Metric::ReceivedAttackFake),
            OriginClass::AttackValid => Some(Metric::ReceivedAttackValid),
            OriginClass::Infra => None,
        };
        if let Some(metric) = class_metric {
            self.metrics.add(now, node, prefix_id, metric, 1.0);
        }

        match reply {
            ProducerReply::Data(data) => {
                self.send(
                    node,
                    face,
                    SimPacket {
                        packet: Packet::Data(data),
                        origin: node,
                        class: OriginClass::Infra,
                    },
                );
            }
            ProducerReply::FakeDetected => {}
            ProducerReply::OutsidePrefix => {
                self.metrics
                    .add(now, node, prefix_id, Metric::DropMisrouted, 1.0);
            }
        }
    }

    fn client_deliver(&mut self, node: NodeId, sp: SimPacket) {
        if let Packet::Nack(nack) = sp.packet {
            let NodeKind::Client(streams) = &mut self.nodes[node as usize].kind else {
                unreachable!()
            };
            for stream in streams {
                stream.on_nack(&nack.payload);
            }
        }
    }
}

/// Builds a world from a validated scenario.
pub fn build_world(cfg: &ScenarioConfig) -> Result<World, ConfigError> {
    cfg.validate()?;
    let plan = cfg.topology.plan(cfg.fitt)?;
    let default_delay_us = (cfg.link_delay_ms * 1000.0).round() as u64;

    let mut nodes: Vec<Node> = Vec::new();
    let mut faces: Vec<Vec<FaceInfo>> = Vec::new();
    let mut roles: Vec<Role> = Vec::new();
    let mut ids: BTreeMap<String, NodeId> = BTreeMap::new();

    let fitt_cfg = FittConfig {
        revert_timer: cfg.revert_timer,
        rate_limit_timer: cfg.rate_limit_timer,
        compliance_epsilon: 0.05,
        blacklist_floor: 1.0,
        clear_blacklist_on_revert: cfg.clear_blacklist_on_revert,
    };

    let push_node = |nodes: &mut Vec<Node>,
                         faces: &mut Vec<Vec<FaceInfo>>,
                         roles: &mut Vec<Role>,
                         ids: &mut BTreeMap<String, NodeId>,
                         name: String,
                         kind: NodeKind,
                         role: Role|
     -> Result<NodeId, ConfigError> {
        if ids.contains_key(&name) {
            return Err(ConfigError::new(
                "nodes",
                format!("duplicate node id {name:?}"),
            ));
        }
        let id = nodes.len() as NodeId;
        ids.insert(name.clone(), id);
        nodes.push(Node { name, kind });
        faces.push(Vec::new());
        roles.push(role);
        Ok(id)
    };

    for router in &plan.routers {
        push_node(
            &mut nodes,
            &mut faces,
            &mut roles,
            &mut ids,
            router.id.clone(),
            NodeKind::Router(RouterState {
                fwd: Forwarder::new(cfg.cs_capacity, cfg.pit_lifetime),
                fitt: router.fitt.then(|| FittState::new(fitt_cfg.clone())),
                is_edge: router.edge,
                opaque_faces: BTreeSet::new(),
            }),
            Role::Router {
                edge: router.edge,
                fitt: router.fitt,
            },
        )?;
    }

    let link = |faces: &mut Vec<Vec<FaceInfo>>, a: NodeId, b: NodeId, delay_us: u64| {
        let fa = faces[a as usize].len() as FaceId;
        let fb = faces[b as usize].len() as FaceId;
        faces[a as usize].push(FaceInfo {
            neighbor: b,
            neighbor_face: fb,
            delay_us,
            capacity_pps: cfg.link_capacity_pps,
            next_free: SimTime::ZERO,
        });
        faces[b as usize].push(FaceInfo {
            neighbor: a,
            neighbor_face: fa,
            delay_us,
            capacity_pps: cfg.link_capacity_pps,
            next_free: SimTime::ZERO,
        });
    };

    for l in &plan.links {
        let a = ids[&l.a];
        let b = ids[&l.b];
        let delay = l
            .delay_ms
            .map(|ms| (ms * 1000.0).round() as u64)
            .unwrap_or(default_delay_us);
        link(&mut faces, a, b, delay);
    }

    let resolve_attach = |ids: &BTreeMap<String, NodeId>,
                          attach: &str,
                          path: &str|
     -> Result<NodeId, ConfigError> {
        match Attach::parse(attach, path)? {
            Attach::Spread => Err(ConfigError::new(path, "spread is not a single router")),
            Attach::As(k) => plan
                .as_gateways
                .get(&k)
                .map(|id| ids[id])
                .ok_or_else(|| ConfigError::new(path, format!("no AS {k}"))),
            Attach::Node(id) => ids
                .get(&id)
                .copied()
                .ok_or_else(|| ConfigError::new(path, format!("unknown router {id:?}"))),
        }
    };

    // Producers: one app node each, linked to its gateway.
    let mut producer_gateways: Vec<(NodeId, NodeId, Name)> = Vec::new();
    for (i, p) in cfg.producers.iter().enumerate() {
        let path = format!("producers[{i}].attach");
        let gateway = resolve_attach(&ids, &p.attach, &path)?;
        let prefix = Name::parse(&p.prefix).expect("validated");
        let id = push_node(
            &mut nodes,
            &mut faces,
            &mut roles,
            &mut ids,
            p.id.clone(),
            NodeKind::Producer(ProducerState::new(ProducerConfig {
                prefix: prefix.clone(),
                capacity: p.capacity,
                static_names: p.static_names,
                freshness: p.freshness,
                fake_report_interval: p.fake_report_interval,
                nack_refresh_interval: p.nack_refresh_interval,
            })),
            Role::Producer {
                prefix: prefix.clone(),
            },
        )?;
        link(&mut faces, id, gateway, default_delay_us);
        producer_gateways.push((id, gateway, prefix));
    }

    // Consumers: group expansion; a repeated id adds streams to the
    // existing node instead of creating a new one.
    let edge_ring: Vec<NodeId> = plan.edge_order.iter().map(|id| ids[id]).collect();
    let mut spread_slot = 0usize;
    for (gi, c) in cfg.consumers.iter().enumerate() {
        for k in 0..c.count {
            let name = if c.count == 1 {
                c.id.clone()
            } else {
                format!("{}{:02}", c.id, k)
            };
            let stream_cfg = StreamConfig {
                prefix: Name::parse(&c.prefix).expect("validated"),
                rate: c.rate,
                class: c.class,
                start: c.start,
                stop: c.stop.unwrap_or(f64::INFINITY),
                compliant: c.compliant,
                universe: c.universe.unwrap_or(0),
            };
            if let Some(&existing) = ids.get(&name) {
                let NodeKind::Client(streams) = &mut nodes[existing as usize].kind else {
                    return Err(ConfigError::new(
                        format!("consumers[{gi}].id"),
                        format!("{name:?} is already a non-client node"),
                    ));
                };
                let seed = stream_seed(cfg.seed, existing, &stream_cfg);
                let tag = streams.len() as u64;
                streams.push(Stream::new(stream_cfg.clone(), seed, existing as u64, tag));
                let Role::Client { streams: infos } = &mut roles[existing as usize] else {
                    unreachable!()
                };
                infos.push(StreamInfo {
                    prefix: stream_cfg.prefix,
                    rate: c.rate,
                    class: c.class,
                    compliant: c.compliant,
                    start: c.start,
                    enabled: c.enabled,
                });
                continue;
            }
            let gateway = match Attach::parse(&c.attach, "consumers.attach")? {
                Attach::Spread => {
                    let g = edge_ring[spread_slot % edge_ring.len()];
                    spread_slot += 1;
                    g
                }
                Attach::As(k) => ids[&plan.as_gateways[&k]],
                Attach::Node(id) => ids[&id],
            };
            let id = push_node(
                &mut nodes,
                &mut faces,
                &mut roles,
                &mut ids,
                name,
                NodeKind::Client(Vec::new()),
                Role::Client {
                    streams: Vec::new(),
                },
            )?;
            link(&mut faces, id, gateway, default_delay_us);
            let seed = stream_seed(cfg.seed, id, &stream_cfg);
            let NodeKind::Client(streams) = &mut nodes[id as usize].kind else {
                unreachable!()
            };
            streams.push(Stream::new(stream_cfg.clone(), seed, id as u64, 0));
            let Role::Client { streams: infos } = &mut roles[id as usize] else {
                unreachable!()
            };
            infos.push(StreamInfo {
                prefix: stream_cfg.prefix,
                rate: c.rate,
                class: c.class,
                compliant: c.compliant,
                start: c.start,
                enabled: c.enabled,
            });
        }
    }

    // FIB seeding: shortest paths over the router graph toward each
    // producer gateway, then the final hop onto the producer's own link.
    let router_count = plan.routers.len();
    for (producer, gateway, prefix) in &producer_gateways {
        let mut dist: Vec<Option<u32>> = vec![None; router_count];
        let mut via: Vec<Option<FaceId>> = vec![None; router_count];
        let mut frontier = std::collections::VecDeque::new();
        dist[*gateway as usize] = Some(0);
        frontier.push_back(*gateway);
        while let Some(at) = frontier.pop_front() {
            for (face_idx, info) in faces[at as usize].iter().enumerate() {
                let next = info.neighbor;
                if next as usize >= router_count {
                    continue;
                }
                if dist[next as usize].is_none() {
                    dist[next as usize] = dist[at as usize].map(|d| d + 1);
                    via[next as usize] = Some(
                        faces[next as usize]
                            .iter()
                            .position(|i| i.neighbor == at && i.neighbor_face == face_idx as FaceId)
                            .unwrap() as FaceId,
                    );
                    frontier.push_back(next);
                }
            }
        }
        for router in 0..router_count {
            if dist[router].is_none() {
                return Err(ConfigError::new(
                    "topology",
                    format!(
                        "producer prefix {prefix} unreachable from router {:?}",
                        nodes[router].name
                    ),
                ));
            }
        }
        for router in 0..router_count {
            let NodeKind::Router(state) = &mut nodes[router].kind else {
                unreachable!()
            };
            if router == *gateway as usize {
                let face = faces[router]
                    .iter()
                    .position(|i| i.neighbor == *producer)
                    .unwrap() as FaceId;
                state.fwd.fib.add_route(prefix.clone(), face);
            } else {
                state.fwd.fib.add_route(prefix.clone(), via[router].unwrap());
            }
        }
    }

    // Extra static routes for custom graphs.
    for (ri, route) in plan.routes.iter().enumerate() {
        let path = format!("topology.routes[{ri}]");
        let node = *ids
            .get(&route.node)
            .ok_or_else(|| ConfigError::new(&path, format!("unknown node {:?}", route.node)))?;
        let via = *ids
            .get(&route.via)
            .ok_or_else(|| ConfigError::new(&path, format!("unknown node {:?}", route.via)))?;
        let prefix = Name::parse(&route.prefix)
            .map_err(|e| ConfigError::new(&path, e.to_string()))?;
        let face = faces[node as usize]
            .iter()
            .position(|i| i.neighbor == via)
            .ok_or_else(|| ConfigError::new(&path, "via is not a neighbour"))?
            as FaceId;
        let NodeKind::Router(state) = &mut nodes[node as usize].kind else {
            return Err(ConfigError::new(&path, "routes must start at a router"));
        };
        state.fwd.fib.add_route(prefix, face);
    }

    // Opaque faces: router faces whose neighbour is a router without the
    // strategy.
    let non_fitt: BTreeSet<NodeId> = (0..router_count as NodeId)
        .filter(|&r| {
            matches!(
                &nodes[r as usize].kind,
                NodeKind::Router(state) if state.fitt.is_none()
            )
        })
        .collect();
    for router in 0..router_count {
        let opaque: BTreeSet<FaceId> = faces[router]
            .iter()
            .enumerate()
            .filter(|(_, info)| non_fitt.contains(&info.neighbor))
            .map(|(idx, _)| idx as FaceId)
            .collect();
        if let NodeKind::Router(state) = &mut nodes[router].kind {
            state.opaque_faces = opaque;
        }
    }

    let node_names: Vec<String> = nodes.iter().map(|n| n.name.clone()).collect();
    let mut metrics = MetricsStore::new(cfg.duration, cfg.metric_bin, node_names);

    let mut traffic_prefixes: Vec<(Name, PrefixId)> = Vec::new();
    for (producer, _, prefix) in &producer_gateways {
        let id = metrics.intern_prefix(&prefix.to_string());
        traffic_prefixes.push((prefix.clone(), id));
        metrics.touch(*producer, id, Metric::Received);
        metrics.touch(*producer, id, Metric::ReceivedLegit);
    }
    traffic_prefixes.sort_by_key(|(name, _)| std::cmp::Reverse(name.len()));

    let mut world = World {
        now: SimTime::ZERO,
        queue: BinaryHeap::new(),
        seq: 0,
        nodes,
        faces,
        metrics,
        log: Vec::new(),
        traffic_prefixes,
        rate_limit_timer: cfg.rate_limit_timer,
        duration: SimTime::from_secs_f64(cfg.duration),
        roles,
    };

    // Pre-register offered-traffic series and prime the event queue.
    let mut initial: Vec<(SimTime, EventKind)> = Vec::new();
    for (id, role) in world.roles.clone().iter().enumerate() {
        match role {
            Role::Client { streams } => {
                for (si, info) in streams.iter().enumerate() {
                    let pid = world.traffic_prefix_id(&info.prefix);
                    world.metrics.touch(id as NodeId, pid, Metric::Sent);
                    if info.enabled && info.start < cfg.duration {
                        initial.push((
                            SimTime::from_secs_f64(info.start),
                            EventKind::StreamEmit {
                                node: id as NodeId,
                                stream: si,
                            },
                        ));
                    }
                }
            }
            Role::Producer { .. } => {
                let NodeKind::Producer(p) = &world.nodes[id].kind else {
                    unreachable!()
                };
                let interval = p.cfg.fake_report_interval.min(p.cfg.nack_refresh_interval);
                initial.push((
                    SimTime::from_secs_f64(interval),
                    EventKind::ProducerTick { node: id as NodeId },
                ));
            }
            Role::Router { .. } => {}
        }
    }
    for (at, kind) in initial {
        world.schedule(at, kind);
    }
    Ok(world)
}

/// Completed-run view handed to checks and the exporter.
pub struct RunOutcome {
    pub names: Vec<String>,
    pub roles: Vec<Role>,
    pub faces: Vec<FaceRef>,
    pub metrics: MetricsStore,
    pub log: Vec<FittEvent>,
    pub duration: f64,
    pub bin: f64,
    pub rate_limit_timer: f64,
}

impl RunOutcome {
    pub fn node_id(&self, name: &str) -> Option<NodeId> {
        self.names.iter().position(|n| n == name).map(|i| i as NodeId)
    }

    pub fn name(&self, node: NodeId) -> &str {
        &self.names[node as usize]
    }

    pub fn series(&self, node: &str, prefix: &str, metric: Metric) -> Vec<f64> {
        self.metrics
            .series(node, prefix, metric)
            .unwrap_or_else(|| vec![0.0; self.metrics.n_bins()])
    }

    pub fn producer_of(&self, prefix: &Name) -> Option<NodeId> {
        self.roles.iter().position(|r| match r {
            Role::Producer { prefix: p } => p == prefix,
            _ => false,
        }).map(|i| i as NodeId)
    }

    fn client_attacks(&self, node: NodeId, pref: &Name) -> bool {
        match &self.roles[node as usize] {
            Role::Client { streams } => streams
                .iter()
                .any(|s| s.enabled && !s.compliant && pref.is_prefix_of(&s.prefix)),
            _ => false,
        }
    }

    fn client_legit(&self, node: NodeId, pref: &Name) -> bool {
        match &self.roles[node as usize] {
            Role::Client { streams } => streams
                .iter()
                .any(|s| s.enabled && s.compliant && pref.is_prefix_of(&s.prefix)),
            _ => false,
        }
    }

    /// Edge-router faces fronting clients that attack `pref`.
    pub fn attacker_faces(&self, pref: &Name) -> Vec<(NodeId, FaceId)> {
        self.faces
            .iter()
            .filter(|f| {
                matches!(self.roles[f.node as usize], Role::Router { edge: true, .. })
                    && self.client_attacks(f.neighbor, pref)
            })
            .map(|f| (f.node, f.face))
            .collect()
    }

    /// Client nodes with an enabled compliant stream under `pref`.
    pub fn legit_clients(&self, pref: &Name) -> Vec<NodeId> {
        (0..self.roles.len() as NodeId)
            .filter(|&n| self.client_legit(n, pref))
            .collect()
    }

    pub fn first_event(&self, pref: &Name, want: impl Fn(&FittEvent) -> bool) -> Option<f64> {
        self.log
            .iter()
            .find(|e| &e.pref == pref && want(e))
            .map(|e| e.at.as_secs_f64())
    }

    pub fn first_nack(&self, pref: &Name, rsn: Rsn) -> Option<f64> {
        self.first_event(pref, |e| {
            e.rsn == rsn && matches!(e.kind, FittEventKind::NackEmitted)
        })
    }

    /// First throttle install time anywhere for the prefix.
    pub fn first_install(&self, pref: &Name) -> Option<f64> {
        self.first_event(pref, |e| matches!(e.kind, FittEventKind::Install { .. }))
    }

    /// Earliest blacklist time per face under `pref`.
    pub fn blacklist_times(&self, pref: &Name) -> BTreeMap<(NodeId, FaceId), f64> {
        let mut times = BTreeMap::new();
        for e in &self.log {
            if &e.pref == pref && matches!(e.kind, FittEventKind::Blacklist) {
                if let Some(face) = e.face {
                    times.entry((e.node, face)).or_insert(e.at.as_secs_f64());
                }
            }
        }
        times
    }

    /// First installed finite limit per face under `pref` (the initial
    /// per-face limit of the reaction).
    pub fn initial_limits(&self, pref: &Name) -> BTreeMap<(NodeId, FaceId), f64> {
        let mut limits = BTreeMap::new();
        for e in &self.log {
            if &e.pref != pref {
                continue;
            }
            if let FittEventKind::Install {
                limit: Limit::Finite(v),
            } = e.kind
            {
                if let Some(face) = e.face {
                    limits.entry((e.node, face)).or_insert(v);
                }
            }
        }
        limits
    }

    /// Faces released (throttle removed after compliance) under `pref`.
    pub fn released_faces(&self, pref: &Name) -> BTreeSet<(NodeId, FaceId)> {
        self.log
            .iter()
            .filter(|e| &e.pref == pref && matches!(e.kind, FittEventKind::Release))
            .filter_map(|e| e.face.map(|f| (e.node, f)))
            .collect()
    }

    pub fn to_csv(&self) -> String {
        self.metrics.to_csv()
    }
}

/// Derives the per-bin limit gauges from the strategy event log and writes
/// them into the store: −1 without a throttle, the finite limit otherwise,
/// 0 while blocked.
fn finalize_limit_gauges(metrics: &mut MetricsStore, log: &[FittEvent]) {
    use std::collections::HashMap;
    let n_bins = metrics.n_bins();
    let bin = metrics.bin_secs();

    // (node, pref) -> face -> rsn -> Option<limit>
    let mut groups: BTreeMap<(NodeId, String), Vec<&FittEvent>> = BTreeMap::new();
    for e in log {
        if matches!(
            e.kind,
            FittEventKind::Install { .. }
                | FittEventKind::Halve { .. }
                | FittEventKind::Blacklist
                | FittEventKind::Release
                | FittEventKind::Revert
        ) {
            groups
                .entry((e.node, e.pref.to_string()))
                .or_default()
                .push(e);
        }
    }

    for ((node, pref), events) in groups {
        let prefix_id = metrics.intern_prefix(&pref);
        let mut state: HashMap<(FaceId, Rsn), f64> = HashMap::new();
        let mut series: BTreeMap<FaceId, Vec<f64>> = BTreeMap::new();
        let mut cursor = 0usize;
        for b in 0..n_bins {
            let end = SimTime::from_secs_f64((b + 1) as f64 * bin);
            while cursor < events.len() && events[cursor].at < end {
                let e = events[cursor];
                cursor += 1;
                match e.kind {
                    FittEventKind::Install { limit } => {
                        if let Some(face) = e.face {
                            state.insert((face, e.rsn), limit.value());
                        }
                    }
                    FittEventKind::Halve { to } => {
                        if let Some(face) = e.face {
                            state.insert((face, e.rsn), to);
                        }
                    }
                    FittEventKind::Blacklist => {
                        if let Some(face) = e.face {
                            state.insert((face, e.rsn), 0.0);
                        }
                    }
                    FittEventKind::Release => {
                        if let Some(face) = e.face {
                            state.remove(&(face, e.rsn));
                        }
                    }
                    FittEventKind::Revert => {
                        state.retain(|(_, rsn), _| *rsn != e.rsn);
                    }
                    _ => {}
                }
            }
            let mut per_face: BTreeMap<FaceId, f64> = BTreeMap::new();
            for ((face, _), limit) in &state {
                per_face
                    .entry(*face)
                    .and_modify(|v| *v = v.min(*limit))
                    .or_insert(*limit);
            }
            let known: BTreeSet<FaceId> = series.keys().copied().collect();
            for face in known {
                let value = per_face.get(&face).copied().unwrap_or(-1.0);
                series.get_mut(&face).unwrap()[b] = value;
            }
            for (face, value) in per_face {
                series.entry(face).or_insert_with(|| {
                    let mut v = vec![-1.0; n_bins];
                    v[b] = value;
                    v
                });
            }
        }
        for (face, values) in series {
            metrics.set_series(node, prefix_id, Metric::LimitFace(face), values);
        }
    }
}

/// Builds, runs to the configured duration, and packages the outcome.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunOutcome, ConfigError> {
    let mut world = build_world(cfg)?;
    world.run_to_end();

    let World {
        nodes,
        faces,
        mut metrics,
        log,
        roles,
        ..
    } = world;

    metrics.derive_legit_share();
    finalize_limit_gauges(&mut metrics, &log);

    let face_refs: Vec<FaceRef> = faces
        .iter()
        .enumerate()
        .flat_map(|(node, list)| {
            list.iter().enumerate().map(move |(idx, info)| FaceRef {
                node: node as NodeId,
                face: idx as FaceId,
                neighbor: info.neighbor,
            })
        })
        .collect();

    Ok(RunOutcome {
        names: nodes.iter().map(|n| n.name.clone()).collect(),
        roles,
        faces: face_refs,
        metrics,
        log,
        duration: cfg.duration,
        bin: cfg.metric_bin,
        rate_limit_timer: cfg.rate_limit_timer,
    })
}
