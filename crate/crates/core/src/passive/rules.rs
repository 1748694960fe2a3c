use regex::Regex;
use tracing::warn;

use super::codec::PassiveResultLine;
use crate::checkcore::CheckStatus;

/// Where a rule takes the host name from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HostSource {
    Literal(String),
    /// `$N`: capture group N of the pattern.
    Capture(usize),
}

#[derive(Debug, Clone)]
pub struct LogRule {
    pub pattern: Regex,
    pub host: HostSource,
    pub service: String,
    pub state_on_match: CheckStatus,
    /// Expanded with the match's captures (`$0`, `$1`, `${name}`). Empty
    /// means the whole log line.
    pub output_template: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("rules line {line}: {message}")]
pub struct RuleError {
    pub line: usize,
    pub message: String,
}

impl LogRule {
    pub fn new(
        pattern: &str,
        host: HostSource,
        service: impl Into<String>,
        state_on_match: CheckStatus,
        output_template: impl Into<String>,
    ) -> Result<Self, String> {
        let pattern = Regex::new(pattern).map_err(|e| format!("invalid pattern: {e}"))?;
        if let HostSource::Capture(n) = host {
            if n == 0 || n >= pattern.captures_len() {
                return Err(format!("pattern has no capture group {n}"));
            }
        }
        let service = service.into();
        if service.is_empty() || service.contains([';', '\t', '\r', '\n']) {
            return Err(format!("invalid service name '{service}'"));
        }
        Ok(LogRule {
            pattern,
            host,
            service,
            state_on_match,
            output_template: output_template.into(),
        })
    }

    fn apply(&self, line: &str, epoch: i64) -> Option<Result<PassiveResultLine, String>> {
        let caps = self.pattern.captures(line)?;
        let host = match &self.host {
            HostSource::Literal(h) => h.clone(),
            HostSource::Capture(n) => match caps.get(*n) {
                Some(m) if !m.as_str().is_empty() => m.as_str().to_string(),
                _ => return Some(Err(format!("capture {n} did not participate"))),
            },
        };
        let mut output = String::new();
        if self.output_template.is_empty() {
            output.push_str(line);
        } else {
            caps.expand(&self.output_template, &mut output);
        }
        let output: String = output
            .chars()
            .map(|c| if matches!(c, '\t' | '\r' | '\n') { ' ' } else { c })
            .collect();
        let result = PassiveResultLine::service(epoch, host, &self.service, self.state_on_match.code(), output);
        Some(result.validate().map(|_| result))
    }
}

/// Parses a rules file: one `<state>;<service>;<host-or-$N>;<pattern>` per
/// line, `#` comments and blank lines ignored. The pattern is the rest of
/// the line and may contain semicolons. Output is the whole matched line.
pub fn parse_rules(text: &str) -> Result<Vec<LogRule>, RuleError> {
    let mut rules = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| RuleError { line: i + 1, message };
        let mut parts = line.splitn(4, ';');
        let (Some(state), Some(service), Some(host), Some(pattern)) =
            (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(err("expected <state>;<service>;<host-or-$N>;<pattern>".into()));
        };
        let state: CheckStatus = state.trim().parse().map_err(err)?;
        let host = host.trim();
        let host = match host.strip_prefix('$') {
            Some(n) => HostSource::Capture(n.parse().map_err(|_| err(format!("invalid capture reference '{host}'")))?),
            None if !host.is_empty() => HostSource::Literal(host.to_string()),
            None => return Err(err("empty host".into())),
        };
        rules.push(LogRule::new(pattern, host, service.trim(), state, "").map_err(err)?);
    }
    Ok(rules)
}

/// First matching rule wins. A rule whose expansion fails is skipped and the
/// search continues with the next one.
pub fn match_line(rules: &[LogRule], line: &str, epoch: i64) -> Option<PassiveResultLine> {
    for rule in rules {
        match rule.apply(line, epoch) {
            None => continue,
            Some(Ok(r)) => return Some(r),
            Some(Err(e)) => warn!(pattern = %rule.pattern, error = %e, "log rule skipped"),
        }
    }
    None
}
