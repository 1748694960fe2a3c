//! Building blocks of the sentinel monitoring engine.
//!
//! * [`objconf`] parses the flat-file object definitions, resolves template
//!   inheritance and generates configuration from an asset inventory.
//! * [`checkcore`] runs active checks (plugins and built-in probes) and
//!   schedules them.
//! * [`statemachine`] turns check results into soft/hard state and events.
//! * [`notify`] filters events through notification policy and renders and
//!   dispatches messages.
//! * [`passive`] carries results from remote producers: the line protocol,
//!   the TCP gateway and the log watcher.
//! * [`statestore`] persists status and retention data as flat files.

pub mod checkcore;
pub mod notify;
pub mod objconf;
pub mod passive;
pub mod statemachine;
pub mod statestore;

mod object;
mod zone;

pub use object::ObjectRef;
pub use zone::Zone;

/// Wall-clock instant used throughout the engine.
pub type Timestamp = chrono::DateTime<chrono::Utc>;
