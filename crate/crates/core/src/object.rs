use std::fmt;

use serde::{Deserialize, Serialize};

/// Identifies a monitored object: a host, or a service on a host.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ObjectRef {
    Service { host: String, service: String },
    Host { host: String },
}

impl ObjectRef {
    pub fn host(name: impl Into<String>) -> Self {
        ObjectRef::Host { host: name.into() }
    }

    pub fn service(host: impl Into<String>, service: impl Into<String>) -> Self {
        ObjectRef::Service {
            host: host.into(),
            service: service.into(),
        }
    }

    pub fn host_name(&self) -> &str {
        match self {
            ObjectRef::Host { host } | ObjectRef::Service { host, .. } => host,
        }
    }

    pub fn service_name(&self) -> Option<&str> {
        match self {
            ObjectRef::Host { .. } => None,
            ObjectRef::Service { service, .. } => Some(service),
        }
    }

    pub fn is_host(&self) -> bool {
        matches!(self, ObjectRef::Host { .. })
    }
}

impl fmt::Display for ObjectRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ObjectRef::Host { host } => f.write_str(host),
            ObjectRef::Service { host, service } => write!(f, "{host};{service}"),
        }
    }
}
