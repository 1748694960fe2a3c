//! Per-object runtime state: soft/hard transitions, acknowledgements,
//! downtime and host reachability.

mod reachability;
mod state;

pub use reachability::{host_reachability, Reachability};
pub use state::*;
