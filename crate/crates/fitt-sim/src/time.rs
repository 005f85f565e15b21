//! Microsecond-resolution virtual clock.

use std::fmt;

/// Absolute simulation time, microseconds since run start.
#[derive(Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us)
    }

    pub const fn micros(self) -> u64 {
        self.0
    }

    pub fn from_secs_f64(secs: f64) -> Self {
        debug_assert!(secs >= 0.0, "negative sim time");
        SimTime((secs * 1e6).round() as u64)
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn plus_secs(self, secs: f64) -> Self {
        debug_assert!(secs >= 0.0, "negative offset");
        SimTime(self.0.saturating_add((secs * 1e6).round() as u64))
    }

    pub fn plus_micros(self, us: u64) -> Self {
        SimTime(self.0.saturating_add(us))
    }

    /// Elapsed seconds since `earlier`; clamps to zero if `earlier` is later.
    pub fn secs_since(self, earlier: SimTime) -> f64 {
        self.0.saturating_sub(earlier.0) as f64 / 1e6
    }
}

impl fmt::Debug for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6}s", self.as_secs_f64())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_seconds() {
        let t = SimTime::from_secs_f64(3.25);
        assert_eq!(t.micros(), 3_250_000);
        assert_eq!(t.as_secs_f64(), 3.25);
    }

    #[test]
    fn secs_since_clamps() {
        let a = SimTime::from_secs_f64(1.0);
        let b = SimTime::from_secs_f64(4.5);
        assert_eq!(b.secs_since(a), 3.5);
        assert_eq!(a.secs_since(b), 0.0);
    }
}
