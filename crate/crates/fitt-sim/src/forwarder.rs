//! The per-node forwarding plane: admission hook, Content Store lookup,
//! Interest aggregation in the PIT, longest-prefix-match forwarding, and
//! the Data return path.

use crate::name::Name;
use crate::packet::{Data, Interest, Packet};
use crate::tables::{ContentStore, FaceId, Fib, Pit, PitEntry};
use crate::time::SimTime;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DropReason {
    Unroutable,
    Throttled,
    Unsolicited,
    InvalidNack,
    NackOpaque,
    DuplicateNonce,
}

/// Admission decision made before any table is touched. `matched` names the
/// throttle prefix that produced a drop, for accounting.
#[derive(Clone, Debug, PartialEq)]
pub struct AdmitVerdict {
    pub accept: bool,
    pub matched: Option<Name>,
}

impl AdmitVerdict {
    pub fn accept() -> Self {
        AdmitVerdict {
            accept: true,
            matched: None,
        }
    }
}

/// Strategy hook consulted as pipeline step one; the throttling strategy
/// observes and filters traffic through this without the forwarder knowing
/// anything about it.
pub trait AdmissionHook {
    fn admit(&mut self, face: FaceId, name: &Name, now: SimTime) -> AdmitVerdict;
}

/// Accept-all hook for nodes with no strategy installed.
pub struct AcceptAll;

impl AdmissionHook for AcceptAll {
    fn admit(&mut self, _face: FaceId, _name: &Name, _now: SimTime) -> AdmitVerdict {
        AdmitVerdict::accept()
    }
}

/// A packet to transmit on one local face.
#[derive(Clone, Debug, PartialEq)]
pub struct Emit {
    pub face: FaceId,
    pub packet: Packet,
}

/// Side observations produced by the pipelines, consumed by metrics.
#[derive(Clone, Debug, PartialEq)]
pub enum FwdEvent {
    Drop {
        reason: DropReason,
        face: FaceId,
        name: Option<Name>,
    },
    CsHit {
        face: FaceId,
        name: Name,
    },
    Aggregated {
        face: FaceId,
        name: Name,
    },
    PitExpired {
        name: Name,
        unsatisfied_faces: usize,
    },
}

#[derive(Debug, Default)]
pub struct PipelineOutcome {
    pub emits: Vec<Emit>,
    pub events: Vec<FwdEvent>,
    /// Set when a fresh PIT entry was created; the caller schedules the
    /// expiry callback.
    pub pit_expiry: Option<(Name, SimTime)>,
}

pub struct Forwarder {
    pub fib: Fib,
    pub pit: Pit,
    pub cs: ContentStore,
    pit_lifetime: f64,
}

impl Forwarder {
    pub fn new(cs_capacity: usize, pit_lifetime: f64) -> Self {
        Forwarder {
            fib: Fib::new(),
            pit: Pit::new(),
            cs: ContentStore::new(cs_capacity),
            pit_lifetime,
        }
    }

    /// Interest pipeline: (1) strategy admission, (2) fresh CS hit answers
    /// directly, (3) a pending entry aggregates without forwarding,
    /// (4) otherwise create the entry and forward along the longest prefix
    /// match. Unroutable names and repeated (face, nonce) pairs are dropped.
    pub fn receive_interest(
        &mut self,
        face: FaceId,
        interest: Interest,
        now: SimTime,
        hook: &mut dyn AdmissionHook,
    ) -> PipelineOutcome {
        let mut out = PipelineOutcome::default();
        let name = interest.name.clone();

        let verdict = hook.admit(face, &name, now);
        if !verdict.accept {
            out.events.push(FwdEvent::Drop {
                reason: DropReason::Throttled,
                face,
                name: Some(name),
            });
            return out;
        }

        if let Some(data) = self.cs.lookup(&name, now) {
            out.events.push(FwdEvent::CsHit {
                face,
                name: name.clone(),
            });
            out.emits.push(Emit {
                face,
                packet: Packet::Data(data),
            });
            return out;
        }

        if let Some(entry) = self.pit.get_mut(&name) {
            if !entry.in_faces.insert((face, interest.nonce)) {
                out.events.push(FwdEvent::Drop {
                    reason: DropReason::DuplicateNonce,
                    face,
                    name: Some(name),
                });
                return out;
            }
            out.events.push(FwdEvent::Aggregated { face, name });
            return out;
        }

        let hops = self.fib.lookup(&name);
        let Some(&next_hop) = hops.first() else {
            out.events.push(FwdEvent::Drop {
                reason: DropReason::Unroutable,
                face,
                name: Some(name),
            });
            return out;
        };

        let expiry = now.plus_secs(self.pit_lifetime);
        self.pit.insert(
            name.clone(),
            PitEntry {
                in_faces: [(face, interest.nonce)].into_iter().collect(),
                out_faces: [next_hop].into_iter().collect(),
                expiry,
            },
        );
        out.pit_expiry = Some((name, expiry));
        out.emits.push(Emit {
            face: next_hop,
            packet: Packet::Interest(interest),
        });
        out
    }

    /// Data pipeline: solicited Data fans out to every recorded downstream
    /// face, removes the entry, and is cached when cacheable; anything else
    /// is dropped so that unrequested Data cannot travel.
    pub fn receive_data(&mut self, face: FaceId, data: Data, now: SimTime) -> PipelineOutcome {
        let mut out = PipelineOutcome::default();
        let solicited = self
            .pit
            .get(&data.name)
            .is_some_and(|entry| entry.out_faces.contains(&face));
        if !solicited {
            out.events.push(FwdEvent::Drop {
                reason: DropReason::Unsolicited,
                face,
                name: Some(data.name.clone()),
            });
            return out;
        }
        let entry = self.pit.remove(&data.name).unwrap();
        for down_face in entry.downstream_faces() {
            out.emits.push(Emit {
                face: down_face,
                packet: Packet::Data(data.clone()),
            });
        }
        self.cs.insert(data, now);
        out
    }

    /// Lapses one pending entry, reporting how many downstream faces went
    /// unsatisfied. A satisfied (already removed) or refreshed entry is
    /// left alone.
    pub fn on_pit_expiry(&mut self, name: &Name, now: SimTime) -> PipelineOutcome {
        let mut out = PipelineOutcome::default();
        let due = self
            .pit
            .get(name)
            .is_some_and(|entry| entry.expiry <= now);
        if due {
            let entry = self.pit.remove(name).unwrap();
            out.events.push(FwdEvent::PitExpired {
                name: name.clone(),
                unsatisfied_faces: entry.downstream_faces().len(),
            });
        }
        out
    }
}
