//! Time-binned observation store and its byte-stable CSV export.
//!
//! Count metrics are exported as per-second rates over each bin; share and
//! limit metrics are exported as-is. Every key that appears is emitted for
//! every bin from 0 to the run duration so series are contiguous.

use std::collections::BTreeMap;
use std::fmt;

use crate::tables::FaceId;
use crate::time::SimTime;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Metric {
    InterestsIn,
    InterestsOut,
    DataIn,
    DataOut,
    CsHits,
    PitExpiries,
    DropUnroutable,
    DropThrottled,
    DropUnsolicited,
    DropInvalidNack,
    DropNackOpaque,
    DropDuplicate,
    DropMisrouted,
    Sent,
    Received,
    ReceivedLegit,
    ReceivedAttackFake,
    ReceivedAttackValid,
    NacksSent,
    Halvings,
    Blacklists,
    Releases,
    LegitShare,
    /// Gauge: the limit governing one face under the keyed prefix. −1 means
    /// no throttle installed in that bin; 0 means blocked.
    LimitFace(FaceId),
}

impl Metric {
    /// Count metrics are scaled to per-second rates on export.
    pub fn is_rate(self) -> bool {
        !matches!(self, Metric::LegitShare | Metric::LimitFace(_))
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::InterestsIn => f.write_str("interests_in"),
            Metric::InterestsOut => f.write_str("interests_out"),
            Metric::DataIn => f.write_str("data_in"),
            Metric::DataOut => f.write_str("data_out"),
            Metric::CsHits => f.write_str("cs_hits"),
            Metric::PitExpiries => f.write_str("pit_expiries"),
            Metric::DropUnroutable => f.write_str("drop_unroutable"),
            Metric::DropThrottled => f.write_str("drop_throttled"),
            Metric::DropUnsolicited => f.write_str("drop_unsolicited"),
            Metric::DropInvalidNack => f.write_str("drop_invalid_nack"),
            Metric::DropNackOpaque => f.write_str("drop_nack_opaque"),
            Metric::DropDuplicate => f.write_str("drop_duplicate"),
            Metric::DropMisrouted => f.write_str("drop_misrouted"),
            Metric::Sent => f.write_str("sent"),
            Metric::Received => f.write_str("received"),
            Metric::ReceivedLegit => f.write_str("received_legit"),
            Metric::ReceivedAttackFake => f.write_str("received_attack_fake"),
            Metric::ReceivedAttackValid => f.write_str("received_attack_valid"),
            Metric::NacksSent => f.write_str("nacks_sent"),
            Metric::Halvings => f.write_str("halvings"),
            Metric::Blacklists => f.write_str("blacklists"),
            Metric::Releases => f.write_str("releases"),
            Metric::LegitShare => f.write_str("legit_share"),
            Metric::LimitFace(face) => write!(f, "limit_face{face}"),
        }
    }
}

pub type NodeId = u32;
pub type PrefixId = u32;

#[derive(Clone, Debug)]
pub struct MetricsStore {
    bin_secs: f64,
    n_bins: usize,
    node_names: Vec<String>,
    prefixes: Vec<String>,
    prefix_ids: BTreeMap<String, PrefixId>,
    data: BTreeMap<(NodeId, PrefixId, Metric), Vec<f64>>,
}

impl MetricsStore {
    pub fn new(duration: f64, bin_secs: f64, node_names: Vec<String>) -> Self {
        let n_bins = (duration / bin_secs).ceil().max(1.0) as usize;
        let mut store = MetricsStore {
            bin_secs,
            n_bins,
            node_names,
            prefixes: Vec::new(),
            prefix_ids: BTreeMap::new(),
            data: BTreeMap::new(),
        };
        store.intern_prefix("-");
        store
    }

    pub fn bin_secs(&self) -> f64 {
        self.bin_secs
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn intern_prefix(&mut self, prefix: &str) -> PrefixId {
        if let Some(&id) = self.prefix_ids.get(prefix) {
            return id;
        }
        let id = self.prefixes.len() as PrefixId;
        self.prefixes.push(prefix.to_string());
        self.prefix_ids.insert(prefix.to_string(), id);
        id
    }

    pub fn bin_of(&self, t: SimTime) -> usize {
        ((t.as_secs_f64() / self.bin_secs) as usize).min(self.n_bins.saturating_sub(1))
    }

    pub fn add(&mut self, t: SimTime, node: NodeId, prefix: PrefixId, metric: Metric, amount: f64) {
        let bin = self.bin_of(t);
        let series = self
            .data
            .entry((node, prefix, metric))
            .or_insert_with(|| vec![0.0; self.n_bins]);
        series[bin] += amount;
    }

    /// Registers a key so its all-zero series is exported even if nothing
    /// ever increments it.
    pub fn touch(&mut self, node: NodeId, prefix: PrefixId, metric: Metric) {
        self.data
            .entry((node, prefix, metric))
            .or_insert_with(|| vec![0.0; self.n_bins]);
    }

    /// Overwrites a whole series; used for derived metrics and gauges.
    pub fn set_series(&mut self, node: NodeId, prefix: PrefixId, metric: Metric, series: Vec<f64>) {
        debug_assert_eq!(series.len(), self.n_bins);
        self.data.insert((node, prefix, metric), series);
    }

    fn node_id(&self, node: &str) -> Option<NodeId> {
        self.node_names
            .iter()
            .position(|n| n == node)
            .map(|i| i as NodeId)
    }

    /// One series in export units (rates for count metrics).
    pub fn series(&self, node: &str, prefix: &str, metric: Metric) -> Option<Vec<f64>> {
        let node = self.node_id(node)?;
        let prefix = *self.prefix_ids.get(prefix)?;
        let raw = self.data.get(&(node, prefix, metric))?;
        Some(if metric.is_rate() {
            raw.iter().map(|v| v / self.bin_secs).collect()
        } else {
            raw.clone()
        })
    }

    /// Sums the given metric's series across all (node, prefix) keys that
    /// satisfy the node filter.
    pub fn sum_series(&self, metric: Metric, mut keep_node: impl FnMut(&str) -> bool) -> Vec<f64> {
        let mut total = vec![0.0; self.n_bins];
        for ((node, _, m), raw) in &self.data {
            if *m != metric || !keep_node(&self.node_names[*node as usize]) {
                continue;
            }
            for (acc, v) in total.iter_mut().zip(raw) {
                *acc += v / self.bin_secs;
            }
        }
        total
    }

    /// Derives legit_share for every (node, prefix) holding a `received`
    /// series: legit-origin received over all received, with empty bins
    /// counting as fully legitimate.
    pub fn derive_legit_share(&mut self) {
        let keys: Vec<(NodeId, PrefixId)> = self
            .data
            .keys()
            .filter(|(_, _, m)| *m == Metric::Received)
            .map(|(n, p, _)| (*n, *p))
            .collect();
        for (node, prefix) in keys {
            let received = self.data[&(node, prefix, Metric::Received)].clone();
            let legit = self
                .data
                .get(&(node, prefix, Metric::ReceivedLegit))
                .cloned()
                .unwrap_or_else(|| vec![0.0; self.n_bins]);
            let share = received
                .iter()
                .zip(&legit)
                .map(|(r, l)| if *r > 0.0 { l / r } else { 1.0 })
                .collect();
            self.set_series(node, prefix, Metric::LegitShare, share);
        }
    }

    /// CSV with the fixed header and (time_bin, node, prefix, metric) sort
    /// order; all numbers carry six decimals so identical runs produce
    /// identical bytes.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time_bin,node,prefix,metric,value\n");
        for bin in 0..self.n_bins {
            let t = bin as f64 * self.bin_secs;
            // The BTreeMap key order is not the exported string order, so
            // gather the bin's rows and sort them lexicographically.
            let mut bin_rows: Vec<(String, String, String, f64)> = self
                .data
                .iter()
                .map(|((node, prefix, metric), raw)| {
                    let value = if metric.is_rate() {
                        raw[bin] / self.bin_secs
                    } else {
                        raw[bin]
                    };
                    (
                        self.node_names[*node as usize].clone(),
                        self.prefixes[*prefix as usize].clone(),
                        metric.to_string(),
                        value,
                    )
                })
                .collect();
            bin_rows.sort_by(|a, b| (&a.0, &a.1, &a.2).cmp(&(&b.0, &b.1, &b.2)));
            for (node, prefix, metric, value) in bin_rows {
                out.push_str(&format!("{t:.6},{node},{prefix},{metric},{value:.6}\n"));
            }
        }
        out
    }
}
