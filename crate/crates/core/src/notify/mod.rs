//! Notification policy, message rendering and channel dispatch.

mod dispatch;
mod message;
mod policy;

pub use dispatch::*;
pub use message::*;
pub use policy::*;
