//! Flat-file persistence: the periodically rewritten `status.dat` and the
//! retention file that carries state across restarts.
//!
//! Both files are UTF-8 `key=value` lines grouped into blocks separated by
//! blank lines: a header block followed by one block per object.

mod format;
mod store;

pub use format::*;
pub use store::*;
