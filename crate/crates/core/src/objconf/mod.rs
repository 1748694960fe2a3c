//! Flat-file object configuration.
//!
//! Object files hold `define <kind>{ ... }` blocks with one `key value` pair
//! per line. Blocks carrying a `name` attribute act as templates which other
//! blocks pull in with `use`; blocks with `register 0` are templates only.
//!
//! The pipeline is [`parse_objects`] → [`resolve_templates`] (which runs
//! [`validate`] on its result). [`print_config`] writes a resolved
//! configuration back out in canonical form and [`generate_from_assets`]
//! builds a configuration from an asset inventory.

mod assets;
mod parse;
mod period;
mod print;
mod resolve;
mod types;
mod validate;

use std::fmt;

pub use assets::{
    generate_from_assets, read_assets_csv, AssetError, AssetRecord, HostClass, MonitoringPolicy,
    PolicyService,
};
pub use parse::parse_objects;
pub use period::{MinuteRange, TimePeriodDef, PERIOD_24X7};
pub use print::print_config;
pub use resolve::resolve_templates;
pub use types::{
    ChannelSpec, CheckCommand, CommandDef, ContactGroupDef, HostDef, HostGroupDef,
    NotificationOptions, RawObjectBlock, ResolvedConfig, ServiceDef,
};
pub use validate::validate;

/// Reads, parses and resolves object files.
pub fn load_files<P: AsRef<std::path::Path>>(
    paths: &[P],
) -> std::io::Result<(ResolvedConfig, Vec<Diagnostic>)> {
    let mut texts = Vec::new();
    for p in paths {
        let p = p.as_ref();
        let text = std::fs::read_to_string(p)
            .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", p.display())))?;
        texts.push((p.display().to_string(), text));
    }
    Ok(load_sources(texts.iter().map(|(f, t)| (f.as_str(), t.as_str()))))
}

/// Whether any diagnostic is an error.
pub fn has_errors(diagnostics: &[Diagnostic]) -> bool {
    diagnostics.iter().any(|d| d.severity == Severity::Error)
}

/// Convenience: parse and resolve a set of `(file name, text)` sources.
pub fn load_sources<'a, I>(sources: I) -> (ResolvedConfig, Vec<Diagnostic>)
where
    I: IntoIterator<Item = (&'a str, &'a str)>,
{
    let mut blocks = Vec::new();
    let mut diagnostics = Vec::new();
    for (file, text) in sources {
        let (mut b, mut d) = parse_objects(file, text);
        blocks.append(&mut b);
        diagnostics.append(&mut d);
    }
    let (config, mut d) = resolve_templates(&blocks);
    diagnostics.append(&mut d);
    (config, diagnostics)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SourceLocation {
    pub file: String,
    pub line: usize,
}

impl fmt::Display for SourceLocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.file, self.line)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Diagnostic {
    pub severity: Severity,
    pub location: Option<SourceLocation>,
    pub message: String,
}

impl Diagnostic {
    pub fn error(location: Option<SourceLocation>, message: impl Into<String>) -> Self {
        Diagnostic {
            severity: Severity::Error,
            location,
            message: message.into(),
        }
    }

    pub fn warning(location: Option<SourceLocation>, message: impl Into<String>) -> Self {
        Diagnostic {
            severity: Severity::Warning,
            location,
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let level = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        match &self.location {
            Some(loc) => write!(f, "{loc}: {level}: {}", self.message),
            None => write!(f, "{level}: {}", self.message),
        }
    }
}
