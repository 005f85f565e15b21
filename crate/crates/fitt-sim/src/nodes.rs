//! Application endpoints: a producer that serves or fails Interests and
//! reports attacks, plus consumer traffic generators for legitimate and
//! attacking behaviour (valid static, fake, dynamic, and mixed streams).

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::name::Name;
use crate::packet::{Data, FittNackPayload, Interest, NackDetail};
use crate::time::SimTime;

const DATA_PAYLOAD_BYTES: u32 = 1024;

#[derive(Clone, Debug)]
pub struct ProducerConfig {
    pub prefix: Name,
    /// Sustainable valid-Interest rate under the prefix (Interests/s).
    pub capacity: f64,
    /// The static universe: names `prefix/i` for i in [0, static_names).
    pub static_names: u32,
    /// Freshness stamped on static replies, seconds.
    pub freshness: f64,
    /// Window over which fake names are accumulated and the receive rate
    /// is estimated, seconds.
    pub fake_report_interval: f64,
    /// Feedback repeat cadence while a condition persists, seconds.
    pub nack_refresh_interval: f64,
}

#[derive(Debug, PartialEq)]
pub enum ProducerReply {
    Data(Data),
    FakeDetected,
    OutsidePrefix,
}

/// Victim-side state: serves the static universe, computes dynamic replies,
/// accumulates fake names per report window, and estimates the valid
/// receive rate to decide when to complain.
#[derive(Clone, Debug)]
pub struct ProducerState {
    pub cfg: ProducerConfig,
    fake_window: Vec<Name>,
    valid_in_window: u64,
}

impl ProducerState {
    pub fn new(cfg: ProducerConfig) -> Self {
        ProducerState {
            cfg,
            fake_window: Vec::new(),
            valid_in_window: 0,
        }
    }

    fn static_index(&self, name: &Name) -> Option<u32> {
        if name.len() != self.cfg.prefix.len() + 1 {
            return None;
        }
        let idx: u32 = name.components().last().unwrap().parse().ok()?;
        (idx < self.cfg.static_names).then_some(idx)
    }

    /// Serves one Interest. Static-universe names get the configured
    /// freshness, dynamic requests are computed with freshness 0, and
    /// anything else under the prefix is a fake that can never fetch Data.
    pub fn on_interest(&mut self, interest: &Interest) -> ProducerReply {
        if !self.cfg.prefix.is_prefix_of(&interest.name) {
            return ProducerReply::OutsidePrefix;
        }
        if self.static_index(&interest.name).is_some() {
            self.valid_in_window += 1;
            return ProducerReply::Data(Data {
                name: interest.name.clone(),
                freshness_ms: (self.cfg.freshness * 1000.0).round() as u64,
                payload_size: DATA_PAYLOAD_BYTES,
            });
        }
        if interest.dynamic {
            self.valid_in_window += 1;
            return ProducerReply::Data(Data {
                name: interest.name.clone(),
                freshness_ms: 0,
                payload_size: DATA_PAYLOAD_BYTES,
            });
        }
        self.fake_window.push(interest.name.clone());
        ProducerReply::FakeDetected
    }

    /// Per-window report: fakes seen in the window always trigger a FAKE
    /// Nack (they are never tolerated, regardless of load), and a valid
    /// rate above capacity triggers a VALID Nack carrying the capacity.
    /// While either condition keeps recurring the Nacks repeat every tick,
    /// which is what keeps upstream revert timers alive.
    pub fn tick(&mut self, window_secs: f64) -> Vec<FittNackPayload> {
        let mut nacks = Vec::new();
        if !self.fake_window.is_empty() {
            let names = std::mem::take(&mut self.fake_window);
            nacks.push(
                FittNackPayload::fake(self.cfg.prefix.clone(), names)
                    .expect("window names extend the producer prefix"),
            );
        }
        let valid_rate = self.valid_in_window as f64 / window_secs.max(1e-9);
        self.valid_in_window = 0;
        if valid_rate > self.cfg.capacity {
            nacks.push(
                FittNackPayload::valid(self.cfg.prefix.clone(), self.cfg.capacity)
                    .expect("capacity is validated positive"),
            );
        }
        nacks
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrafficClass {
    /// Valid Interests for static data drawn uniformly from a name universe.
    I1,
    /// Fake Interests: random suffixes that can never fetch Data.
    I2,
    /// Valid Interests for dynamically generated data; unique per emission.
    I3,
    /// Alternating fake and dynamic-valid Interests, half the rate each.
    Mixed,
}

/// Which simulator-side bucket an emission is attributed to. Ground truth
/// for metrics only; protocol logic never sees it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OriginClass {
    Legit,
    AttackFake,
    AttackValid,
    Infra,
}

#[derive(Clone, Debug)]
pub struct StreamConfig {
    pub prefix: Name,
    pub rate: f64,
    pub class: TrafficClass,
    pub start: f64,
    pub stop: f64,
    /// Compliant streams obey feedback; attackers ignore it.
    pub compliant: bool,
    /// I1 draw range; unused otherwise.
    pub universe: u32,
}

#[derive(Clone, Debug)]
struct Ramp {
    from: f64,
    started: SimTime,
    window: f64,
}

/// One traffic generator living on a client node.
#[derive(Clone, Debug)]
pub struct Stream {
    pub cfg: StreamConfig,
    /// Rate currently honoured by a compliant sender; attackers never
    /// change it.
    limited_rate: f64,
    ramp: Option<Ramp>,
    last_emit: Option<SimTime>,
    seq: u64,
    mixed_fake_turn: bool,
    rng: ChaCha8Rng,
    node_tag: u64,
    stream_tag: u64,
}

impl Stream {
    pub fn new(cfg: StreamConfig, seed: u64, node_tag: u64, stream_tag: u64) -> Self {
        Stream {
            limited_rate: cfg.rate,
            cfg,
            ramp: None,
            last_emit: None,
            seq: 0,
            mixed_fake_turn: true,
            rng: ChaCha8Rng::seed_from_u64(seed),
            node_tag,
            stream_tag,
        }
    }

    pub fn active(&self, now: SimTime) -> bool {
        let t = now.as_secs_f64();
        t >= self.cfg.start && t < self.cfg.stop
    }

    /// Offered rate at `now`, accounting for an in-progress linear ramp
    /// back to the configured rate.
    pub fn rate_at(&self, now: SimTime) -> f64 {
        match &self.ramp {
            None => self.limited_rate,
            Some(ramp) => {
                let frac = (now.secs_since(ramp.started) / ramp.window).clamp(0.0, 1.0);
                ramp.from + (self.cfg.rate - ramp.from) * frac
            }
        }
    }

    /// Seconds until the next emission: the nominal gap with +/-10% jitter
    /// so that node populations do not emit in lockstep.
    pub fn next_gap(&mut self, now: SimTime) -> f64 {
        let rate = self.rate_at(now).max(1e-6);
        let jitter: f64 = self.rng.gen_range(0.9..1.1);
        jitter / rate
    }

    /// An emission scheduled before a rate cut would fire at the stale,
    /// faster cadence. A complying sender honours the new rate instead:
    /// when the elapsed gap is shorter than the current rate permits, the
    /// emission is pushed to this later instant.
    pub fn defer_until(&mut self, now: SimTime) -> Option<SimTime> {
        let last = self.last_emit?;
        let rate = self.rate_at(now).max(1e-6);
        if now.secs_since(last) + 1e-9 >= 0.9 / rate {
            return None;
        }
        Some(last.plus_secs(self.next_gap(now)))
    }

    pub fn note_emit(&mut self, now: SimTime) {
        self.last_emit = Some(now);
    }

    fn next_nonce(&mut self) -> u64 {
        self.seq += 1;
        (self.node_tag << 40) | (self.stream_tag << 32) | self.seq
    }

    /// Builds the next Interest for this stream together with its origin
    /// attribution.
    pub fn next_interest(&mut self) -> (Interest, OriginClass) {
        let nonce = self.next_nonce();
        let (name, dynamic, fake) = match self.cfg.class {
            TrafficClass::I1 => {
                let idx = self.rng.gen_range(0..self.cfg.universe.max(1));
                (self.cfg.prefix.child(idx.to_string()), false, false)
            }
            TrafficClass::I2 => (self.fake_name(), false, true),
            TrafficClass::I3 => (self.dynamic_name(), true, false),
            TrafficClass::Mixed => {
                self.mixed_fake_turn = !self.mixed_fake_turn;
                if !self.mixed_fake_turn {
                    (self.fake_name(), false, true)
                } else {
                    (self.dynamic_name(), true, false)
                }
            }
        };
        let class = if self.cfg.compliant {
            OriginClass::Legit
        } else if fake {
            OriginClass::AttackFake
        } else {
            OriginClass::AttackValid
        };
        (
            Interest {
                name,
                nonce,
                dynamic,
            },
            class,
        )
    }

    fn fake_name(&mut self) -> Name {
        // Garbled random component; collisions across a whole run are
        // vanishingly unlikely.
        let suffix: u64 = self.rng.gen();
        self.cfg.prefix.child(format!("zz{suffix:016x}"))
    }

    fn dynamic_name(&mut self) -> Name {
        self.cfg
            .prefix
            .child(format!("dyn-{}-{}-{}", self.node_tag, self.stream_tag, self.seq))
    }

    /// Compliant senders adopt the smaller of their current rate and the
    /// announced per-face capacity; fake feedback changes nothing because a
    /// legitimate sender never sent those names. Attackers ignore it all.
    pub fn on_nack(&mut self, payload: &FittNackPayload) {
        if !self.cfg.compliant || !payload.pref().is_prefix_of(&self.cfg.prefix) {
            return;
        }
        if let NackDetail::Valid { capacity } = payload.detail() {
            if *capacity < self.limited_rate {
                self.limited_rate = *capacity;
                self.ramp = None;
            }
        }
    }

    /// Called when the edge removes this sender's throttle; the sender ramps
    /// linearly back to its configured rate over one reinforcement window.
    pub fn on_release(&mut self, pref: &Name, now: SimTime, window: f64) {
        if !self.cfg.compliant || !pref.is_prefix_of(&self.cfg.prefix) {
            return;
        }
        if self.limited_rate < self.cfg.rate {
            self.ramp = Some(Ramp {
                from: self.limited_rate,
                started: now,
                window: window.max(1e-6),
            });
            self.limited_rate = self.cfg.rate;
        }
    }
}
