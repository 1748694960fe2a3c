//! Check execution: the plugin protocol, built-in probes and the scheduler.

mod cluster;
mod command;
mod plugin;
mod probe;
mod schedule;
mod status;

pub use cluster::{check_cluster, cluster_status};
pub use command::{expand_command, expand_macros, CheckExecutor, CheckJob, CheckSpec, CommandExecutor, BUILTIN_PREFIX};
pub use plugin::{execute_plugin, format_seconds, TERMINATION_GRACE};
pub use probe::*;
pub use schedule::*;
pub use status::*;
