//! Deterministic discrete-event simulator of a Named Data Networking
//! overlay with feedback-driven Interest traffic throttling.
//!
//! The crate models the stateful forwarding plane (FIB, PIT with Interest
//! aggregation, freshness-aware content store), victims that report fake
//! floods and valid overloads through hop-by-hop feedback, recursive
//! per-interface pushback with equal capacity splitting, and edge-router
//! token-bucket throttling with reinforcement halving and revert timers.
//! Scenarios are declarative; identical configuration and seed reproduce
//! byte-identical metric output.

pub mod checks;
pub mod cli;
pub mod engine;
pub mod fitt;
pub mod forwarder;
pub mod metrics;
pub mod name;
pub mod nodes;
pub mod packet;
pub mod scenario;
pub mod tables;
pub mod time;
pub mod topology;

pub use engine::{run_scenario, RunOutcome};
pub use name::Name;
pub use scenario::{builtin, load_scenario, ScenarioConfig};
