//! Passive results from remote producers: the line protocol, the TCP
//! gateway and its client, and the log watcher.

mod codec;
mod gateway;
mod logwatch;
mod rules;

pub use codec::*;
pub use gateway::*;
pub use logwatch::*;
pub use rules::*;
