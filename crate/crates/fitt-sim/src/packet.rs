//! The three packet kinds and the throttling feedback payload.
//!
//! Packets are in-memory values with no wire codec. A Data satisfies an
//! Interest only on exact name equality; prefix matching is reserved for
//! the FIB and for feedback scoping.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::name::Name;

pub type Nonce = u64;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Interest {
    pub name: Name,
    /// Dedup / loop detection; unique per (consumer, emission).
    pub nonce: Nonce,
    /// Marks requests whose Data must be generated per request; the
    /// producer answers these with freshness 0.
    pub dynamic: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Data {
    pub name: Name,
    /// Cache lifetime in milliseconds; 0 means never cacheable.
    pub freshness_ms: u64,
    /// Bookkeeping only.
    pub payload_size: u32,
}

/// Reason code carried in feedback: the victim is either flooded with
/// unsatisfiable Interests or overloaded by valid ones.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rsn {
    Fake,
    Valid,
}

impl std::fmt::Display for Rsn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Rsn::Fake => "fake",
            Rsn::Valid => "valid",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PayloadError {
    #[error("fake feedback must carry at least one name")]
    EmptyFakeList,
    #[error("capacity must be positive, got {0}")]
    NonPositiveCapacity(f64),
    #[error("fake name {name} does not extend prefix {pref}")]
    NameOutsidePrefix { pref: Name, name: Name },
}

/// Victim feedback: a reason, the reported prefix, and either the
/// sustainable capacity (valid overload) or the offending name list
/// (fake flood). The representation makes the field presence rules
/// unrepresentable to violate.
#[derive(Clone, Debug, PartialEq)]
pub struct FittNackPayload {
    pref: Name,
    detail: NackDetail,
}

#[derive(Clone, Debug, PartialEq)]
pub enum NackDetail {
    Fake { fake_list: Vec<Name> },
    Valid { capacity: f64 },
}

impl FittNackPayload {
    pub fn fake(pref: Name, fake_list: Vec<Name>) -> Result<Self, PayloadError> {
        if fake_list.is_empty() {
            return Err(PayloadError::EmptyFakeList);
        }
        if let Some(bad) = fake_list.iter().find(|n| !pref.is_strict_prefix_of(n)) {
            return Err(PayloadError::NameOutsidePrefix {
                pref,
                name: bad.clone(),
            });
        }
        Ok(FittNackPayload {
            pref,
            detail: NackDetail::Fake { fake_list },
        })
    }

    pub fn valid(pref: Name, capacity: f64) -> Result<Self, PayloadError> {
        if capacity <= 0.0 {
            return Err(PayloadError::NonPositiveCapacity(capacity));
        }
        Ok(FittNackPayload {
            pref,
            detail: NackDetail::Valid { capacity },
        })
    }

    pub fn pref(&self) -> &Name {
        &self.pref
    }

    pub fn rsn(&self) -> Rsn {
        match self.detail {
            NackDetail::Fake { .. } => Rsn::Fake,
            NackDetail::Valid { .. } => Rsn::Valid,
        }
    }

    pub fn detail(&self) -> &NackDetail {
        &self.detail
    }

    pub fn capacity(&self) -> Option<f64> {
        match self.detail {
            NackDetail::Valid { capacity } => Some(capacity),
            NackDetail::Fake { .. } => None,
        }
    }

    pub fn fake_list(&self) -> Option<&[Name]> {
        match &self.detail {
            NackDetail::Fake { fake_list } => Some(fake_list),
            NackDetail::Valid { .. } => None,
        }
    }
}

/// Hop-by-hop feedback packet. A Nack travels exactly one hop; each router
/// regenerates fresh Nacks downstream instead of forwarding the original,
/// and `hop_tag` identifies the emitting hop for diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct Nack {
    pub payload: FittNackPayload,
    pub hop_tag: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Packet {
    Interest(Interest),
    Data(Data),
    Nack(Nack),
}

#[cfg(test)]
mod tests {
    use super::*;

    fn n(text: &str) -> Name {
        Name::parse(text).unwrap()
    }

    #[test]
    fn valid_payload_requires_positive_capacity() {
        assert!(FittNackPayload::valid(n("/p"), 1500.0).is_ok());
        assert_eq!(
            FittNackPayload::valid(n("/p"), 0.0),
            Err(PayloadError::NonPositiveCapacity(0.0))
        );
    }

    #[test]
    fn fake_payload_requires_names_under_prefix() {
        let pref = n("/univ1/service/email");
        let ok = FittNackPayload::fake(pref.clone(), vec![n("/univ1/service/email/zx9Qk")]);
        assert!(ok.is_ok());
        assert_eq!(ok.unwrap().rsn(), Rsn::Fake);

        assert_eq!(
            FittNackPayload::fake(pref.clone(), vec![]),
            Err(PayloadError::EmptyFakeList)
        );
        // The prefix itself is not a strict extension of itself.
        assert!(matches!(
            FittNackPayload::fake(pref.clone(), vec![pref.clone()]),
            Err(PayloadError::NameOutsidePrefix { .. })
        ));
        assert!(matches!(
            FittNackPayload::fake(pref, vec![n("/isp0/service/x")]),
            Err(PayloadError::NameOutsidePrefix { .. })
        ));
    }

    #[test]
    fn field_presence_follows_reason() {
        let valid = FittNackPayload::valid(n("/p"), 750.0).unwrap();
        assert_eq!(valid.capacity(), Some(750.0));
        assert_eq!(valid.fake_list(), None);

        let fake = FittNackPayload::fake(n("/p"), vec![n("/p/x")]).unwrap();
        assert_eq!(fake.capacity(), None);
        assert_eq!(fake.fake_list().unwrap().len(), 1);
    }
}
