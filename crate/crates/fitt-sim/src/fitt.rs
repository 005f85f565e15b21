//! The throttling strategy: feedback validation, per-interface pushback
//! with capacity splitting, token-bucket admission at edges, and the
//! reinforcement / revert timer machinery.

use std::collections::{BTreeMap, BTreeSet};

use crate::forwarder::{AdmissionHook, AdmitVerdict};
use crate::name::Name;
use crate::packet::{FittNackPayload, NackDetail, Rsn};
use crate::tables::{partition_fake_list, FaceId, Fib, Pit};
use crate::time::SimTime;

/// Node-level strategy parameters; timer values come from the scenario.
#[derive(Clone, Debug)]
pub struct FittConfig {
    /// How long a record survives without a refreshing Nack (seconds).
    pub revert_timer: f64,
    /// Compliance-check cadence at throttling nodes (seconds).
    pub rate_limit_timer: f64,
    /// Slack on measured offered rate vs the installed limit; compliance is
    /// about sender behaviour, so the measurement counts pre-drop traffic.
    pub compliance_epsilon: f64,
    /// Limits that would halve below this rate collapse to a blacklist.
    pub blacklist_floor: f64,
    /// Whether blacklist flags are discarded when a record reverts.
    pub clear_blacklist_on_revert: bool,
}

impl Default for FittConfig {
    fn default() -> Self {
        FittConfig {
            revert_timer: 5.0,
            rate_limit_timer: 3.0,
            compliance_epsilon: 0.05,
            blacklist_floor: 1.0,
            clear_blacklist_on_revert: true,
        }
    }
}

/// A face's permitted rate. Faces without a throttle are unlimited; blocked
/// faces drop every matching Interest.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Limit {
    Finite(f64),
    Blocked,
}

impl Limit {
    pub fn is_blocked(self) -> bool {
        matches!(self, Limit::Blocked)
    }

    pub fn value(self) -> f64 {
        match self {
            Limit::Finite(v) => v,
            Limit::Blocked => 0.0,
        }
    }
}

/// Per-face throttle state: the limit, a token bucket realizing it, and the
/// offered-rate measurement window for reinforcement decisions.
#[derive(Clone, Debug)]
pub struct FaceThrottle {
    pub limit: Limit,
    pub initial_limit: f64,
    pub blacklisted: bool,
    tokens: f64,
    last_refill: SimTime,
    pub offered: u64,
    pub window_start: SimTime,
}

impl FaceThrottle {
    fn new_valid(limit: f64, now: SimTime) -> Self {
        FaceThrottle {
            limit: Limit::Finite(limit),
            initial_limit: limit,
            blacklisted: false,
            // The bucket starts empty so the accepted long-run rate tracks
            // the limit from the first window.
            tokens: 0.0,
            last_refill: now,
            offered: 0,
            window_start: now,
        }
    }

    fn new_blocked(now: SimTime) -> Self {
        FaceThrottle {
            limit: Limit::Blocked,
            initial_limit: 0.0,
            blacklisted: false,
            tokens: 0.0,
            last_refill: now,
            offered: 0,
            window_start: now,
        }
    }

    /// Reactions merge by keeping the smaller permitted rate.
    fn merge(&mut self, incoming: Limit) {
        match (self.limit, incoming) {
            (Limit::Blocked, _) => {}
            (_, Limit::Blocked) => {
                self.limit = Limit::Blocked;
                self.tokens = 0.0;
            }
            (Limit::Finite(old), Limit::Finite(new)) if new < old => {
                self.limit = Limit::Finite(new);
                self.tokens = self.tokens.min(new);
            }
            _ => {}
        }
    }

    fn try_take(&mut self, now: SimTime) -> bool {
        let Limit::Finite(rate) = self.limit else {
            return false;
        };
        let dt = now.secs_since(self.last_refill);
        self.last_refill = now;
        // Bucket depth is one second's worth of tokens.
        self.tokens = (self.tokens + dt * rate).min(rate);
        if self.tokens >= 1.0 {
            self.tokens -= 1.0;
            true
        } else {
            false
        }
    }
}

/// One throttling reaction at a node: the reported prefix and reason, the
/// per-face throttles it installed, and the revert deadline keeping it alive.
#[derive(Clone, Debug)]
pub struct FittRecord {
    pub pref: Name,
    pub rsn: Rsn,
    pub per_face: BTreeMap<FaceId, FaceThrottle>,
    pub revert_deadline: SimTime,
    timer_running: bool,
}

impl FittRecord {
    fn new(pref: Name, rsn: Rsn, revert_deadline: SimTime) -> Self {
        FittRecord {
            pref,
            rsn,
            per_face: BTreeMap::new(),
            revert_deadline,
            timer_running: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InstallEffect {
    pub face: FaceId,
    pub limit: Limit,
}

/// Everything a node must do after digesting one feedback packet.
#[derive(Debug, Default)]
pub struct NackReaction {
    /// Regenerated per-face Nacks for downstream neighbours.
    pub downstream: Vec<(FaceId, FittNackPayload)>,
    pub installs: Vec<InstallEffect>,
    /// Set when a reinforcement timer must be scheduled for (pref, VALID).
    pub start_rate_timer: bool,
    pub revert_deadline: SimTime,
}

#[derive(Debug, Default)]
pub struct ReinforceOutcome {
    pub released: Vec<FaceId>,
    pub halved: Vec<(FaceId, f64)>,
    pub blacklisted: Vec<FaceId>,
    pub reschedule: bool,
}

#[derive(Debug)]
pub struct RevertOutcome {
    /// Faces whose throttles disappeared with the record.
    pub released: Vec<FaceId>,
}

/// Equal share across the suspect set; the reinforcement loop later amends
/// the unfairness this can cause.
pub fn compute_weights(suspects: &BTreeSet<FaceId>) -> BTreeMap<FaceId, f64> {
    assert!(!suspects.is_empty(), "weights need at least one suspect");
    let w = 1.0 / suspects.len() as f64;
    suspects.iter().map(|&f| (f, w)).collect()
}

/// Feedback authenticity: the reported prefix must extend a prefix the FIB
/// routes toward the arrival face, otherwise the Nack is treated as spoofed.
pub fn validate_nack(arrival_face: FaceId, payload: &FittNackPayload, fib: &Fib) -> bool {
    fib.covers_via(arrival_face, payload.pref())
}

#[derive(Clone, Debug, Default)]
pub struct FittState {
    records: BTreeMap<(Name, Rsn), FittRecord>,
    pub cfg: FittConfig,
}

impl FittState {
    pub fn new(cfg: FittConfig) -> Self {
        FittState {
            records: BTreeMap::new(),
            cfg,
        }
    }

    pub fn record(&self, pref: &Name, rsn: Rsn) -> Option<&FittRecord> {
        self.records.get(&(pref.clone(), rsn))
    }

    pub fn records(&self) -> impl Iterator<Item = &FittRecord> {
        self.records.values()
    }

    pub fn is_idle(&self) -> bool {
        self.records.is_empty()
    }

    /// Digests validated feedback: refreshes (or creates) the record and
    /// extends its revert deadline, regenerates one Nack per implicated
    /// downstream face, and — on faces this node is responsible for
    /// throttling — installs limits under the minimum-merge rule.
    ///
    /// FAKE feedback is partitioned by the faces the listed names are
    /// pending on and those faces are blocked outright. VALID feedback
    /// splits the reported capacity equally across the faces with pending
    /// Interests under the prefix; an empty suspect set refreshes the
    /// record and emits nothing.
    pub fn handle_nack(
        &mut self,
        payload: &FittNackPayload,
        pit: &Pit,
        now: SimTime,
        mut throttle_face: impl FnMut(FaceId) -> bool,
    ) -> NackReaction {
        let pref = payload.pref().clone();
        let rsn = payload.rsn();
        let deadline = now.plus_secs(self.cfg.revert_timer);
        let record = self
            .records
            .entry((pref.clone(), rsn))
            .or_insert_with(|| FittRecord::new(pref.clone(), rsn, deadline));
        record.revert_deadline = deadline;

        let mut reaction = NackReaction {
            revert_deadline: deadline,
            ..NackReaction::default()
        };

        match payload.detail() {
            NackDetail::Fake { fake_list } => {
                for (face, names) in partition_fake_list(pit, fake_list) {
                    let sub = FittNackPayload::fake(pref.clone(), names)
                        .expect("partition keeps names under the prefix");
                    reaction.downstream.push((face, sub));
                    if throttle_face(face) {
                        record
                            .per_face
                            .entry(face)
                            .or_insert_with(|| FaceThrottle::new_blocked(now))
                            .merge(Limit::Blocked);
                        reaction.installs.push(InstallEffect {
                            face,
                            limit: Limit::Blocked,
                        });
                    }
                }
            }
            NackDetail::Valid { capacity } => {
                let suspects = pit.suspect_faces(&pref);
                if suspects.is_empty() {
                    return reaction;
                }
                let weights = compute_weights(&suspects);
                for face in suspects {
                    let share = weights[&face] * capacity;
                    let sub = FittNackPayload::valid(pref.clone(), share)
                        .expect("positive capacity splits stay positive");
                    reaction.downstream.push((face, sub));
                    if throttle_face(face) {
                        let throttle = record
                            .per_face
                            .entry(face)
                            .or_insert_with(|| FaceThrottle::new_valid(share, now));
                        throttle.merge(Limit::Finite(share));
                        reaction.installs.push(InstallEffect {
                            face,
                            limit: throttle.limit,
                        });
                    }
                }
                let any_finite = record
                    .per_face
                    .values()
                    .any(|t| matches!(t.limit, Limit::Finite(_)));
                if any_finite && !record.timer_running {
                    record.timer_running = true;
                    reaction.start_rate_timer = true;
                }
            }
        }
        reaction
    }

    /// Pipeline step one. The most specific recorded prefix covering the
    /// name decides admission for the face: blocked wins over any finite
    /// limit at the same depth (the minimum rule), a finite limit is
    /// enforced by its token bucket, and a name outside every recorded
    /// prefix is never dropped. Offered traffic is counted on every record
    /// scoping the name, since compliance monitoring measures what senders
    /// offer, not what survives.
    pub fn admit_interest(&mut self, face: FaceId, name: &Name, now: SimTime) -> AdmitVerdict {
        let mut best_len: Option<usize> = None;
        for ((pref, _), record) in self.records.iter() {
            if record.per_face.contains_key(&face) && pref.is_prefix_of(name) {
                best_len = Some(best_len.map_or(pref.len(), |b| b.max(pref.len())));
            }
        }
        let Some(best_len) = best_len else {
            return AdmitVerdict::accept();
        };

        let mut matched: Option<Name> = None;
        let mut blocked = false;
        let mut bucket_key: Option<(Name, Rsn)> = None;
        for ((pref, rsn), record) in self.records.iter_mut() {
            if !pref.is_prefix_of(name) {
                continue;
            }
            let Some(throttle) = record.per_face.get_mut(&face) else {
                continue;
            };
            throttle.offered += 1;
            if pref.len() == best_len {
                matched = Some(pref.clone());
                match throttle.limit {
                    Limit::Blocked => blocked = true,
                    Limit::Finite(_) => bucket_key = Some((pref.clone(), *rsn)),
                }
            }
        }

        if blocked {
            return AdmitVerdict {
                accept: false,
                matched,
            };
        }
        let Some(key) = bucket_key else {
            return AdmitVerdict::accept();
        };
        let throttle = self
            .records
            .get_mut(&key)
            .and_then(|r| r.per_face.get_mut(&face))
            .expect("bucket key located in previous pass");
        AdmitVerdict {
            accept: throttle.try_take(now),
            matched,
        }
    }

    /// Reinforcement pass over a VALID record: faces whose offered rate
    /// stayed within the limit are freed, the rest are halved until they
    /// fall below the blacklist floor and are blocked for good. Returns
    /// `None` when the record no longer exists.
    pub fn on_rate_limit_timer(&mut self, pref: &Name, now: SimTime) -> Option<ReinforceOutcome> {
        let eps = self.cfg.compliance_epsilon;
        let floor = self.cfg.blacklist_floor;
        let min_window = self.cfg.rate_limit_timer * 0.5;
        let record = self.records.get_mut(&(pref.clone(), Rsn::Valid))?;
        let mut outcome = ReinforceOutcome::default();

        let faces: Vec<FaceId> = record.per_face.keys().copied().collect();
        for face in faces {
            let throttle = record.per_face.get_mut(&face).expect("face listed above");
            let Limit::Finite(limit) = throttle.limit else {
                continue;
            };
            let window = now.secs_since(throttle.window_start);
            if window < min_window {
                // Installed too recently to judge; let the window run.
                continue;
            }
            let offered_rate = throttle.offered as f64 / window;
            if offered_rate <= limit * (1.0 + eps) {
                record.per_face.remove(&face);
                outcome.released.push(face);
            } else {
                let next = limit / 2.0;
                if next < floor {
                    throttle.limit = Limit::Blocked;
                    throttle.blacklisted = true;
                    throttle.tokens = 0.0;
                    outcome.blacklisted.push(face);
                } else {
                    throttle.limit = Limit::Finite(next);
                    throttle.tokens = throttle.tokens.min(next);
                    outcome.halved.push((face, next));
                }
                throttle.offered = 0;
                throttle.window_start = now;
            }
        }

        outcome.reschedule = record
            .per_face
            .values()
            .any(|t| matches!(t.limit, Limit::Finite(_)));
        record.timer_running = outcome.reschedule;
        Some(outcome)
    }

    /// Drops a record whose revert deadline has lapsed without a refresh.
    /// Returns `None` when the deadline was extended in the meantime (a
    /// later check is already queued) or the record is gone.
    pub fn on_revert_check(&mut self, pref: &Name, rsn: Rsn, now: SimTime) -> Option<RevertOutcome> {
        let key = (pref.clone(), rsn);
        let due = self
            .records
            .get(&key)
            .is_some_and(|r| r.revert_deadline <= now);
        if !due {
            return None;
        }
        let mut record = self.records.remove(&key).unwrap();
        let released: Vec<FaceId> = record.per_face.keys().copied().collect();
        if !self.cfg.clear_blacklist_on_revert {
            record.per_face.retain(|_, t| t.blacklisted);
            if !record.per_face.is_empty() {
                record.revert_deadline = now.plus_secs(self.cfg.revert_timer);
                let survivors: BTreeSet<FaceId> = record.per_face.keys().copied().collect();
                self.records.insert(key, record);
                return Some(RevertOutcome {
                    released: released
                        .into_iter()
                        .filter(|f| !survivors.contains(f))
                        .collect(),
                });
            }
        }
        Some(RevertOutcome { released })
    }

    /// The admission limit currently governing (face, name), if any throttle
    /// scopes it: the minimum across equally specific records.
    pub fn effective_limit(&self, face: FaceId, name: &Name) -> Option<Limit> {
        let mut best_len = None;
        for ((pref, _), record) in self.records.iter() {
            if record.per_face.contains_key(&face) && pref.is_prefix_of(name) {
                best_len = Some(best_len.map_or(pref.len(), |b: usize| b.max(pref.len())));
            }
        }
        let best_len = best_len?;
        let mut effective: Option<Limit> = None;
        for ((pref, _), record) in self.records.iter() {
            if pref.len() != best_len || !pref.is_prefix_of(name) {
                continue;
            }
            if let Some(throttle) = record.per_face.get(&face) {
                effective = Some(match (effective, throttle.limit) {
                    (None, l) => l,
                    (Some(Limit::Blocked), _) | (_, Limit::Blocked) => Limit::Blocked,
                    (Some(Limit::Finite(a)), Limit::Finite(b)) => Limit::Finite(a.min(b)),
                });
            }
        }
        effective
    }
}

impl AdmissionHook for FittState {
    fn admit(&mut self, face: FaceId, name: &Name, now: SimTime) -> AdmitVerdict {
        self.admit_interest(face, name, now)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tables::PitEntry;

    fn n(text: &str) -> Name {
        Name::parse(text).unwrap()
    }

    fn pit_with(entries: &[(&str, &[FaceId])]) -> Pit {
        let mut pit = Pit::new();
        for (name, faces) in entries {
            pit.insert(
                n(name),
                PitEntry {
                    in_faces: faces.iter().map(|f| (*f, 0)).collect(),
                    out_faces: BTreeSet::new(),
                    expiry: SimTime::from_secs_f64(100.0),
                },
            );
        }
        pit
    }

    fn state() -> FittState {
        FittState::new(FittConfig::default())
    }

    #[test]
    fn weights_split_equally_and_sum_to_one() {
        for count in [1usize, 3, 4] {
            let suspects: BTreeSet<FaceId> = (0..count as u32).collect();
            let weights = compute_weights(&suspects);
            let sum: f64 = weights.values().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            for w in weights.values() {
                assert!((w - 1.0 / count as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn nack_validation_follows_routing_prefixes() {
        let mut fib = Fib::new();
        let toward_server: FaceId = 7;
        fib.add_route(n("/univ1"), toward_server);

        let report = FittNackPayload::valid(n("/univ1/service/email"), 100.0).unwrap();
        assert!(validate_nack(toward_server, &report, &fib));

        let spoofed = FittNackPayload::valid(n("/isp0/service"), 100.0).unwrap();
        assert!(!validate_nack(toward_server, &spoofed, &fib));

        let exact = FittNackPayload::valid(n("/univ1"), 100.0).unwrap();
        assert!(validate_nack(toward_server, &exact, &fib));

        assert!(!validate_nack(3, &report, &fib));
    }

    #[test]
    fn valid_nack_splits_capacity_across_suspects() {
        let mut fitt = state();
        let pit = pit_with(&[("/p/a", &[1]), ("/p/b", &[2])]);
        let payload = FittNackPayload::valid(n("/p"), 1500.0).unwrap();
        let reaction = fitt.handle_nack(&payload, &pit, SimTime::ZERO, |_| false);
        assert_eq!(reaction.downstream.len(), 2);
        for (_, sub) in &reaction.downstream {
            assert_eq!(sub.capacity(), Some(750.0));
            assert_eq!(sub.pref(), &n("/p"));
        }
        assert!(reaction.installs.is_empty());
        assert!(!reaction.start_rate_timer);
    }

    #[test]
    fn fake_nack_partitions_names_per_face() {
        let mut fitt = state();
        let pit = pit_with(&[("/p/x", &[1]), ("/p/y", &[2]), ("/p/z", &[2])]);
        let payload =
            FittNackPayload::fake(n("/p"), vec![n("/p/x"), n("/p/y"), n("/p/z")]).unwrap();
        let reaction = fitt.handle_nack(&payload, &pit, SimTime::ZERO, |_| true);

        assert_eq!(reaction.downstream.len(), 2);
        let total: usize = reaction
            .downstream
            .iter()
            .map(|(_, sub)| sub.fake_list().unwrap().len())
            .sum();
        assert_eq!(total, 3);
        assert_eq!(reaction.installs.len(), 2);
        assert!(reaction.installs.iter().all(|i| i.limit.is_blocked()));
    }

    #[test]
    fn repeated_nack_extends_deadline_without_duplicating_state() {
        let mut fitt = state();
        let pit = pit_with(&[("/p/a", &[1])]);
        let payload = FittNackPayload::valid(n("/p"), 100.0).unwrap();

        let first = fitt.handle_nack(&payload, &pit, SimTime::ZERO, |_| true);
        assert!(first.start_rate_timer);
        let d1 = fitt.record(&n("/p"), Rsn::Valid).unwrap().revert_deadline;

        let second = fitt.handle_nack(&payload, &pit, SimTime::from_secs_f64(1.0), |_| true);
        assert!(!second.start_rate_timer, "timer already running");
        let rec = fitt.record(&n("/p"), Rsn::Valid).unwrap();
        assert!(rec.revert_deadline > d1);
        assert_eq!(rec.per_face.len(), 1);
        assert_eq!(rec.per_face[&1].limit, Limit::Finite(100.0));
    }

    #[test]
    fn empty_suspect_set_refreshes_without_emitting() {
        let mut fitt = state();
        let pit = Pit::new();
        let payload = FittNackPayload::valid(n("/p"), 100.0).unwrap();
        let reaction = fitt.handle_nack(&payload, &pit, SimTime::ZERO, |_| true);
        assert!(reaction.downstream.is_empty());
        assert!(reaction.installs.is_empty());
        assert!(fitt.record(&n("/p"), Rsn::Valid).is_some());
    }

    #[test]
    fn install_merges_to_the_minimum() {
        let mut fitt = state();
        let pit = pit_with(&[("/p/a", &[1])]);
        let t0 = SimTime::ZERO;

        let payload = FittNackPayload::valid(n("/p"), 200.0).unwrap();
        fitt.handle_nack(&payload, &pit, t0, |_| true);
        assert_eq!(
            fitt.record(&n("/p"), Rsn::Valid).unwrap().per_face[&1].limit,
            Limit::Finite(200.0)
        );

        // A later, looser reaction must not raise the effective limit.
        let looser = FittNackPayload::valid(n("/p"), 375.0).unwrap();
        fitt.handle_nack(&looser, &pit, t0.plus_secs(0.5), |_| true);
        assert_eq!(
            fitt.record(&n("/p"), Rsn::Valid).unwrap().per_face[&1].limit,
            Limit::Finite(200.0)
        );

        // And a tighter one lowers it.
        let tighter = FittNackPayload::valid(n("/p"), 80.0).unwrap();
        fitt.handle_nack(&tighter, &pit, t0.plus_secs(1.0), |_| true);
        assert_eq!(
            fitt.record(&n("/p"), Rsn::Valid).unwrap().per_face[&1].limit,
            Limit::Finite(80.0)
        );
    }

    #[test]
    fn four_suspects_yield_quarter_capacity_each() {
        let mut fitt = state();
        let pit = pit_with(&[
            ("/p/a", &[1]),
            ("/p/b", &[2]),
            ("/p/c", &[3]),
            ("/p/d", &[4]),
        ]);
        let payload = FittNackPayload::valid(n("/p"), 1500.0).unwrap();
        let reaction = fitt.handle_nack(&payload, &pit, SimTime::ZERO, |_| true);
        assert_eq!(reaction.installs.len(), 4);
        for install in reaction.installs {
            assert_eq!(install.limit, Limit::Finite(375.0));
        }
    }

    #[test]
    fn unscoped_names_are_never_dropped() {
        let mut fitt = state();
        let pit = pit_with(&[("/univ1/service/email/a", &[1])]);
        let payload = FittNackPayload::fake(
            n("/univ1/service/email"),
            vec![n("/univ1/service/email/a")],
        )
        .unwrap();
        fitt.handle_nack(&payload, &pit, SimTime::ZERO, |_| true);

        let verdict = fitt.admit_interest(1, &n("/univ1/service/video/v"), SimTime::ZERO);
        assert!(verdict.accept);
        let verdict = fitt.admit_interest(1, &n("/univ1/service/email/b"), SimTime::ZERO);
        assert!(!verdict.accept);
        // Other faces stay unlimited too.
        assert!(
            fitt.admit_interest(2, &n("/univ1/service/email/b"), SimTime::ZERO)
                .accept
        );
    }

    #[test]
    fn token_bucket_tracks_the_limit() {
        let mut fitt = state();
        let pit = pit_with(&[("/p/a", &[1])]);
        let payload = FittNackPayload::valid(n("/p"), 40.0).unwrap();
        fitt.handle_nack(&payload, &pit, SimTime::ZERO, |_| true);

        // Offer 100/s for 10 s; roughly limit × 10 should get through.
        let mut accepted = 0;
        for i in 0..1000u64 {
            let now = SimTime::from_micros(i * 10_000);
            if fitt.admit_interest(1, &n("/p/x"), now).accept {
                accepted += 1;
            }
        }
        assert!(
            (380..=420).contains(&accepted),
            "accepted {accepted}, want 400 +/- 5%"
        );
    }

    #[test]
    fn compliant_face_is_released_after_one_window() {
        let mut fitt = state();
        let pit = pit_with(&[("/p/a", &[1])]);
        let payload = FittNackPayload::valid(n("/p"), 125.0).unwrap();
        fitt.handle_nack(&payload, &pit, SimTime::ZERO, |_| true);

        // A compliant sender at 40/s against a 125/s limit.
        for i in 0..120u64 {
            let now = SimTime::from_micros(i * 25_000);
            fitt.admit_interest(1, &n("/p/x"), now);
        }
        let outcome = fitt
            .on_rate_limit_timer(&n("/p"), SimTime::from_secs_f64(3.0))
            .unwrap();
        assert_eq!(outcome.released, vec![1]);
        assert!(!outcome.reschedule);
        assert!(fitt.record(&n("/p"), Rsn::Valid).unwrap().per_face.is_empty());
    }

    #[test]
    fn zero_traffic_counts_as_compliant() {
        let mut fitt = state();
        let pit = pit_with(&[("/p/a", &[1])]);
        let payload = FittNackPayload::valid(n("/p"), 125.0).unwrap();
        fitt.handle_nack(&payload, &pit, SimTime::ZERO, |_| true);
        let outcome = fitt
            .on_rate_limit_timer(&n("/p"), SimTime::from_secs_f64(3.0))
            .unwrap();
        assert_eq!(outcome.released, vec![1]);
    }

    #[test]
    fn noncompliant_face_halves_to_blacklist() {
        let mut fitt = state();
        let pit = pit_with(&[("/p/a", &[1])]);
        let payload = FittNackPayload::valid(n("/p"), 80.0).unwrap();
        fitt.handle_nack(&payload, &pit, SimTime::ZERO, |_| true);

        // An attacker holding 100/s regardless of the limit.
        let mut expected = vec![40.0, 20.0, 10.0, 5.0, 2.5, 1.25];
        let mut window = 0u64;
        loop {
            window += 1;
            let start = SimTime::from_secs_f64(3.0 * (window - 1) as f64);
            for i in 0..300u64 {
                let now = SimTime::from_micros(start.micros() + i * 10_000);
                fitt.admit_interest(1, &n("/p/x"), now);
            }
            let now = SimTime::from_secs_f64(3.0 * window as f64);
            let outcome = fitt.on_rate_limit_timer(&n("/p"), now).unwrap();
            if let Some((face, to)) = outcome.halved.first() {
                assert_eq!(*face, 1);
                assert_eq!(*to, expected.remove(0));
            } else {
                assert_eq!(outcome.blacklisted, vec![1]);
                assert!(expected.is_empty(), "halving sequence cut short");
                assert!(!outcome.reschedule);
                break;
            }
            assert!(window < 20, "never blacklisted");
        }

        let rec = fitt.record(&n("/p"), Rsn::Valid).unwrap();
        assert!(rec.per_face[&1].blacklisted);
        assert_eq!(rec.per_face[&1].limit, Limit::Blocked);
        // ceil(log2(80)) + 1 = 8 windows at most.
        assert!(window <= 8);
        assert!(!fitt.admit_interest(1, &n("/p/x"), SimTime::from_secs_f64(100.0)).accept);
    }

    #[test]
    fn sender_already_within_the_limit_is_released() {
        // Compliance is offered rate vs the installed limit: a face offering
        // 100/s under a 125/s limit is within bounds and gets freed.
        let mut fitt = state();
        let pit = pit_with(&[("/p/a", &[1])]);
        let payload = FittNackPayload::valid(n("/p"), 125.0).unwrap();
        fitt.handle_nack(&payload, &pit, SimTime::ZERO, |_| true);
        for i in 0..300u64 {
            fitt.admit_interest(1, &n("/p/x"), SimTime::from_micros(i * 10_000));
        }
        let outcome = fitt
            .on_rate_limit_timer(&n("/p"), SimTime::from_secs_f64(3.0))
            .unwrap();
        assert_eq!(outcome.released, vec![1]);
        assert!(outcome.halved.is_empty());
    }

    #[test]
    fn revert_removes_record_and_clears_blacklist() {
        let mut fitt = state();
        let pit = pit_with(&[("/p/a", &[1])]);
        let payload = FittNackPayload::fake(n("/p"), vec![n("/p/a")]).unwrap();
        let reaction = fitt.handle_nack(&payload, &pit, SimTime::ZERO, |_| true);
        let deadline = reaction.revert_deadline;
        assert_eq!(deadline, SimTime::from_secs_f64(5.0));

        // Not due yet.
        assert!(fitt
            .on_revert_check(&n("/p"), Rsn::Fake, SimTime::from_secs_f64(4.9))
            .is_none());
        let outcome = fitt
            .on_revert_check(&n("/p"), Rsn::Fake, deadline)
            .unwrap();
        assert_eq!(outcome.released, vec![1]);
        assert!(fitt.record(&n("/p"), Rsn::Fake).is_none());
        assert!(fitt.admit_interest(1, &n("/p/a"), deadline).accept);
    }

    #[test]
    fn refresh_before_deadline_defers_revert() {
        let mut fitt = state();
        let pit = pit_with(&[("/p/a", &[1])]);
        let payload = FittNackPayload::valid(n("/p"), 100.0).unwrap();
        let first = fitt.handle_nack(&payload, &pit, SimTime::ZERO, |_| true);
        fitt.handle_nack(&payload, &pit, SimTime::from_secs_f64(2.0), |_| true);

        // The check scheduled from the first Nack finds an extended deadline.
        assert!(fitt
            .on_revert_check(&n("/p"), Rsn::Valid, first.revert_deadline)
            .is_none());
        assert!(fitt
            .on_revert_check(&n("/p"), Rsn::Valid, SimTime::from_secs_f64(7.0))
            .is_some());
    }

    #[test]
    fn blacklist_can_be_kept_across_revert() {
        let cfg = FittConfig {
            clear_blacklist_on_revert: false,
            ..FittConfig::default()
        };
        let mut fitt = FittState::new(cfg);
        let pit = pit_with(&[("/p/a", &[1]), ("/p/b", &[2])]);
        let payload = FittNackPayload::valid(n("/p"), 1.5).unwrap();
        fitt.handle_nack(&payload, &pit, SimTime::ZERO, |_| true);

        // Face 1 misbehaves straight into the blacklist (0.75 < floor).
        for i in 0..300u64 {
            fitt.admit_interest(1, &n("/p/x"), SimTime::from_micros(i * 10_000));
        }
        let outcome = fitt
            .on_rate_limit_timer(&n("/p"), SimTime::from_secs_f64(3.0))
            .unwrap();
        assert_eq!(outcome.blacklisted, vec![1]);
        assert_eq!(outcome.released, vec![2]);

        let reverted = fitt
            .on_revert_check(&n("/p"), Rsn::Valid, SimTime::from_secs_f64(5.0))
            .unwrap();
        assert!(reverted.released.is_empty());
        assert!(!fitt.admit_interest(1, &n("/p/x"), SimTime::from_secs_f64(6.0)).accept);
    }

    #[test]
    fn mixed_records_apply_the_minimum_at_equal_specificity() {
        let mut fitt = state();
        let pit = pit_with(&[("/p/a", &[1])]);
        let valid = FittNackPayload::valid(n("/p"), 100.0).unwrap();
        fitt.handle_nack(&valid, &pit, SimTime::ZERO, |_| true);
        assert!(matches!(
            fitt.effective_limit(1, &n("/p/a")),
            Some(Limit::Finite(_))
        ));

        let fake = FittNackPayload::fake(n("/p"), vec![n("/p/a")]).unwrap();
        fitt.handle_nack(&fake, &pit, SimTime::ZERO, |_| true);
        assert_eq!(fitt.effective_limit(1, &n("/p/a")), Some(Limit::Blocked));
        assert!(!fitt.admit_interest(1, &n("/p/a"), SimTime::ZERO).accept);

        // Offered traffic keeps counting on the valid record for
        // reinforcement even while the fake block eats the packets.
        let offered = fitt.record(&n("/p"), Rsn::Valid).unwrap().per_face[&1].offered;
        assert!(offered > 0);
    }

    #[test]
    fn most_specific_record_wins() {
        let mut fitt = state();
        let pit = pit_with(&[("/p/q/a", &[1]), ("/p/other", &[1])]);
        let broad = FittNackPayload::valid(n("/p"), 1000.0).unwrap();
        fitt.handle_nack(&broad, &pit, SimTime::ZERO, |_| true);
        let narrow = FittNackPayload::fake(n("/p/q"), vec![n("/p/q/a")]).unwrap();
        fitt.handle_nack(&narrow, &pit, SimTime::ZERO, |_| true);

        assert_eq!(fitt.effective_limit(1, &n("/p/q/x")), Some(Limit::Blocked));
        assert!(!fitt.admit_interest(1, &n("/p/q/x"), SimTime::ZERO).accept);
        // Outside /p/q the broad finite limit applies.
        assert!(matches!(
            fitt.effective_limit(1, &n("/p/other")),
            Some(Limit::Finite(_))
        ));
    }
}
