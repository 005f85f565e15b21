//! Per-node forwarding tables: FIB with longest-prefix match, the pending
//! Interest table, and a freshness-aware LRU content store.

use std::collections::{BTreeMap, BTreeSet};

use crate::name::Name;
use crate::packet::{Data, Nonce};
use crate::time::SimTime;

/// Opaque per-node identifier of one adjacency (link endpoint or local app).
pub type FaceId = u32;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FibEntry {
    pub prefix: Name,
    pub next_hops: Vec<FaceId>,
}

/// Name-prefix routing table. At most one entry per prefix; lookups walk
/// the query name's prefixes from longest to shortest.
#[derive(Clone, Debug, Default)]
pub struct Fib {
    entries: BTreeMap<Name, Vec<FaceId>>,
}

impl Fib {
    pub fn new() -> Self {
        Fib::default()
    }

    /// Adds `face` as a next hop for `prefix`, creating the entry if needed.
    pub fn add_route(&mut self, prefix: Name, face: FaceId) {
        let hops = self.entries.entry(prefix).or_default();
        if !hops.contains(&face) {
            hops.push(face);
        }
    }

    pub fn lookup(&self, name: &Name) -> &[FaceId] {
        for len in (0..=name.len()).rev() {
            if let Some(hops) = self.entries.get(&name.prefix(len)) {
                return hops;
            }
        }
        &[]
    }

    /// Feedback authenticity check: true iff some entry routed via
    /// `arrival_face` has a prefix covering (or equal to) `pref`.
    pub fn covers_via(&self, arrival_face: FaceId, pref: &Name) -> bool {
        self.entries
            .iter()
            .any(|(prefix, hops)| hops.contains(&arrival_face) && prefix.is_prefix_of(pref))
    }

    pub fn entries(&self) -> impl Iterator<Item = FibEntry> + '_ {
        self.entries.iter().map(|(prefix, hops)| FibEntry {
            prefix: prefix.clone(),
            next_hops: hops.clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// One pending Interest: who asked (and with which nonce), where it was
/// forwarded, and when the entry lapses.
#[derive(Clone, Debug)]
pub struct PitEntry {
    pub in_faces: BTreeSet<(FaceId, Nonce)>,
    pub out_faces: BTreeSet<FaceId>,
    pub expiry: SimTime,
}

impl PitEntry {
    pub fn downstream_faces(&self) -> BTreeSet<FaceId> {
        self.in_faces.iter().map(|(f, _)| *f).collect()
    }
}

#[derive(Clone, Debug, Default)]
pub struct Pit {
    entries: BTreeMap<Name, PitEntry>,
}

impl Pit {
    pub fn new() -> Self {
        Pit::default()
    }

    pub fn get(&self, name: &Name) -> Option<&PitEntry> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &Name) -> Option<&mut PitEntry> {
        self.entries.get_mut(name)
    }

    pub fn insert(&mut self, name: Name, entry: PitEntry) {
        self.entries.insert(name, entry);
    }

    pub fn remove(&mut self, name: &Name) -> Option<PitEntry> {
        self.entries.remove(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// All entries whose name extends `pref`. Names sharing a prefix are
    /// contiguous in component-wise lexicographic order, so this is a
    /// bounded range scan.
    pub fn entries_under<'a>(
        &'a self,
        pref: &'a Name,
    ) -> impl Iterator<Item = (&'a Name, &'a PitEntry)> + 'a {
        self.entries
            .range(pref.clone()..)
            .take_while(move |(name, _)| pref.is_prefix_of(name))
    }

    /// Downstream faces with at least one pending Interest under `pref`.
    pub fn suspect_faces(&self, pref: &Name) -> BTreeSet<FaceId> {
        let mut faces = BTreeSet::new();
        for (_, entry) in self.entries_under(pref) {
            faces.extend(entry.in_faces.iter().map(|(f, _)| *f));
        }
        faces
    }
}

/// Splits a reported fake-name list by the downstream face each name was
/// pending on. Names with no live entry are dropped; a name aggregated
/// from several faces appears in each face's slice.
pub fn partition_fake_list(pit: &Pit, fake_list: &[Name]) -> BTreeMap<FaceId, Vec<Name>> {
    let mut parts: BTreeMap<FaceId, Vec<Name>> = BTreeMap::new();
    for name in fake_list {
        if let Some(entry) = pit.get(name) {
            for face in entry.downstream_faces() {
                parts.entry(face).or_default().push(name.clone());
            }
        }
    }
    parts
}

#[derive(Clone, Debug)]
struct CsSlot {
    data: Data,
    inserted: SimTime,
    used: u64,
}

/// Bounded in-router cache with LRU eviction. Hits are served only while
/// the stored Data is still fresh; stale entries are discarded on lookup.
#[derive(Clone, Debug)]
pub struct ContentStore {
    capacity: usize,
    entries: BTreeMap<Name, CsSlot>,
    order: BTreeSet<(u64, Name)>,
    tick: u64,
}

impl ContentStore {
    pub fn new(capacity: usize) -> Self {
        ContentStore {
            capacity,
            entries: BTreeMap::new(),
            order: BTreeSet::new(),
            tick: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn fresh(slot: &CsSlot, now: SimTime) -> bool {
        now.micros().saturating_sub(slot.inserted.micros()) < slot.data.freshness_ms * 1000
    }

    pub fn lookup(&mut self, name: &Name, now: SimTime) -> Option<Data> {
        let slot = self.entries.get(name)?;
        if !Self::fresh(slot, now) {
            let slot = self.entries.remove(name).unwrap();
            self.order.remove(&(slot.used, name.clone()));
            return None;
        }
        self.tick += 1;
        let tick = self.tick;
        let slot = self.entries.get_mut(name).unwrap();
        self.order.remove(&(slot.used, name.clone()));
        slot.used = tick;
        self.order.insert((tick, name.clone()));
        Some(slot.data.clone())
    }

    /// Inserts on the Data return path. Uncacheable (freshness 0) Data and
    /// zero-capacity stores are no-ops; the least recently used entry is
    /// evicted when full.
    pub fn insert(&mut self, data: Data, now: SimTime) {
        if self.capacity == 0 || data.freshness_ms == 0 {
            return;
        }
        self.tick += 1;
        let name = data.name.clone();
        if let Some(old) = self.entries.remove(&name) {
            self.order.remove(&(old.used, name.clone()));
        } else if self.entries.len() >= self.capacity {
            if let Some(&(used, ref victim)) = self.order.iter().next() {
                let victim = victim.clone();
                self.order.remove(&(used, victim.clone()));
                self.entries.remove(&victim);
            }
        }
        self.order.insert((self.tick, name.clone()));
        self.entries.insert(
            name,
            CsSlot {
                data,
                inserted: now,
                used: self.tick,
            },
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn n(text: &str) -> Name {
        Name::parse(text).unwrap()
    }

    fn data(name: &str, freshness_ms: u64) -> Data {
        Data {
            name: n(name),
            freshness_ms,
            payload_size: 100,
        }
    }

    #[test]
    fn fib_longer_prefix_wins() {
        let mut fib = Fib::new();
        fib.add_route(n("/univ1"), 1);
        fib.add_route(n("/univ1/cs"), 2);
        assert_eq!(fib.lookup(&n("/univ1/cs/alice/x")), &[2]);
    }

    #[test]
    fn fib_no_match_is_empty() {
        let mut fib = Fib::new();
        fib.add_route(n("/univ1"), 1);
        assert!(fib.lookup(&n("/isp0/x")).is_empty());
    }

    #[test]
    fn fib_exact_match_beats_root() {
        let mut fib = Fib::new();
        fib.add_route(n("/"), 0);
        fib.add_route(n("/univ1"), 1);
        // Brute-force oracle over all entries, maximized by component count.
        let query = n("/univ1");
        let expect = fib
            .entries()
            .filter(|e| e.prefix.is_prefix_of(&query))
            .max_by_key(|e| e.prefix.len())
            .unwrap();
        assert_eq!(fib.lookup(&query), expect.next_hops.as_slice());
        assert_eq!(fib.lookup(&query), &[1]);
    }

    #[test]
    fn suspects_are_scoped_by_prefix() {
        let mut pit = Pit::new();
        let entry = |faces: &[FaceId]| PitEntry {
            in_faces: faces.iter().map(|f| (*f, 0)).collect(),
            out_faces: BTreeSet::new(),
            expiry: SimTime::ZERO,
        };
        pit.insert(n("/univ1/service/email/a"), entry(&[1]));
        pit.insert(n("/univ1/service/email/b"), entry(&[2]));
        pit.insert(n("/univ1/service/video/c"), entry(&[3]));

        let suspects = pit.suspect_faces(&n("/univ1/service/email"));
        assert_eq!(suspects.into_iter().collect::<Vec<_>>(), vec![1, 2]);
        assert!(pit.suspect_faces(&n("/univ1/service/audio")).is_empty());
    }

    #[test]
    fn aggregated_entry_contributes_all_faces() {
        let mut pit = Pit::new();
        pit.insert(
            n("/p/x"),
            PitEntry {
                in_faces: [(1, 10), (3, 11)].into_iter().collect(),
                out_faces: BTreeSet::new(),
                expiry: SimTime::ZERO,
            },
        );
        let suspects = pit.suspect_faces(&n("/p"));
        assert_eq!(suspects.into_iter().collect::<Vec<_>>(), vec![1, 3]);
    }

    #[test]
    fn partition_drops_dead_names_and_duplicates_aggregated_ones() {
        let mut pit = Pit::new();
        let entry = |faces: &[FaceId]| PitEntry {
            in_faces: faces.iter().map(|f| (*f, 0)).collect(),
            out_faces: BTreeSet::new(),
            expiry: SimTime::ZERO,
        };
        pit.insert(n("/p/x"), entry(&[1]));
        pit.insert(n("/p/y"), entry(&[2]));
        pit.insert(n("/p/both"), entry(&[1, 2]));

        let parts = partition_fake_list(
            &pit,
            &[n("/p/x"), n("/p/y"), n("/p/both"), n("/p/expired")],
        );
        assert_eq!(parts[&1], vec![n("/p/x"), n("/p/both")]);
        assert_eq!(parts[&2], vec![n("/p/y"), n("/p/both")]);
        assert_eq!(parts.len(), 2);
    }

    #[test]
    fn cs_respects_capacity_with_lru_eviction() {
        let mut cs = ContentStore::new(2);
        let t0 = SimTime::ZERO;
        cs.insert(data("/a", 4000), t0);
        cs.insert(data("/b", 4000), t0);
        // Touch /a so /b is the LRU victim.
        assert!(cs.lookup(&n("/a"), t0).is_some());
        cs.insert(data("/c", 4000), t0);
        assert_eq!(cs.len(), 2);
        assert!(cs.lookup(&n("/b"), t0).is_none());
        assert!(cs.lookup(&n("/a"), t0).is_some());
        assert!(cs.lookup(&n("/c"), t0).is_some());
    }

    #[test]
    fn cs_never_returns_stale_data() {
        let mut cs = ContentStore::new(4);
        cs.insert(data("/a", 4000), SimTime::ZERO);
        assert!(cs.lookup(&n("/a"), SimTime::from_secs_f64(3.999)).is_some());
        assert!(cs.lookup(&n("/a"), SimTime::from_secs_f64(4.0)).is_none());
        assert!(cs.is_empty());
    }

    #[test]
    fn cs_ignores_uncacheable_data_and_zero_capacity() {
        let mut cs = ContentStore::new(4);
        cs.insert(data("/a", 0), SimTime::ZERO);
        assert!(cs.is_empty());

        let mut none = ContentStore::new(0);
        none.insert(data("/a", 4000), SimTime::ZERO);
        assert!(none.is_empty());
    }
}
