use std::time::Duration;

use chrono::Utc;
use futures::future::BoxFuture;

use super::cluster::check_cluster;
use super::plugin::execute_plugin;
use super::probe::{check_http, check_ping, check_tcp, PingCommand};
use super::status::{CheckOrigin, CheckResult, CheckStatus};
use crate::objconf::{CheckCommand, ResolvedConfig};
use crate::ObjectRef;

/// Command lines starting with this prefix run a built-in probe instead of
/// an external program, e.g. `sentinel:tcp $HOSTADDRESS$ 110 +OK`.
pub const BUILTIN_PREFIX: &str = "sentinel:";

/// A fully expanded check ready to run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckJob {
    pub target: ObjectRef,
    pub argv: Vec<String>,
    pub timeout: Duration,
}

/// What a job's argv asks for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CheckSpec {
    Plugin(Vec<String>),
    Tcp {
        address: String,
        port: u16,
        expect: Option<String>,
    },
    Http {
        url: String,
    },
    Ping {
        address: String,
    },
    Cluster {
        warn: usize,
        crit: usize,
        members: Vec<CheckStatus>,
    },
}

impl CheckSpec {
    pub fn from_argv(argv: &[String]) -> Result<Self, String> {
        let Some(first) = argv.first() else {
            return Err("empty command line".into());
        };
        let Some(probe) = first.strip_prefix(BUILTIN_PREFIX) else {
            return Ok(CheckSpec::Plugin(argv.to_vec()));
        };
        let args = &argv[1..];
        let arg = |i: usize, what: &str| {
            args.get(i)
                .cloned()
                .ok_or_else(|| format!("{first}: missing {what}"))
        };
        match probe {
            "tcp" => Ok(CheckSpec::Tcp {
                address: arg(0, "address")?,
                port: arg(1, "port")?
                    .parse()
                    .map_err(|_| format!("{first}: invalid port"))?,
                expect: args.get(2).cloned().filter(|e| !e.is_empty()),
            }),
            "http" => Ok(CheckSpec::Http { url: arg(0, "url")? }),
            "ping" => Ok(CheckSpec::Ping {
                address: arg(0, "address")?,
            }),
            "cluster" => {
                let num = |i: usize, what: &str| -> Result<usize, String> {
                    arg(i, what)?
                        .parse()
                        .map_err(|_| format!("{first}: invalid {what}"))
                };
                let members = arg(2, "member states")?
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| s.trim().parse::<CheckStatus>())
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(CheckSpec::Cluster {
                    warn: num(0, "warning threshold")?,
                    crit: num(1, "critical threshold")?,
                    members,
                })
            }
            other => Err(format!("unknown built-in probe '{other}'")),
        }
    }
}

/// Expands a `check_command` reference against the command table and the
/// target's macros. The command line is split into words before macro
/// substitution, so values containing spaces stay one argument.
pub fn expand_command(
    config: &ResolvedConfig,
    target: &ObjectRef,
    command: &CheckCommand,
) -> Result<Vec<String>, String> {
    let def = config
        .commands
        .get(&command.name)
        .ok_or_else(|| format!("unknown command '{}'", command.name))?;
    let words = shell_words::split(&def.command_line)
        .map_err(|e| format!("command '{}': {e}", command.name))?;
    let host = config.hosts.get(target.host_name());
    let mut macros: Vec<(String, String)> = vec![
        ("HOSTNAME".into(), target.host_name().to_string()),
        (
            "HOSTADDRESS".into(),
            host.map(|h| h.address.clone()).unwrap_or_default(),
        ),
        (
            "HOSTALIAS".into(),
            host.map(|h| h.alias.clone()).unwrap_or_default(),
        ),
        (
            "SERVICEDESC".into(),
            target.service_name().unwrap_or_default().to_string(),
        ),
    ];
    for (i, a) in command.args.iter().enumerate() {
        macros.push((format!("ARG{}", i + 1), a.clone()));
    }
    Ok(words
        .into_iter()
        .map(|w| expand_macros(&w, &macros))
        .collect())
}

/// Replaces `$NAME$` tokens. Unknown macros are left in place and `$$`
/// yields a literal `$`.
pub fn expand_macros(text: &str, macros: &[(String, String)]) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(start) = rest.find('$') {
        out.push_str(&rest[..start]);
        let after = &rest[start + 1..];
        match after.find('$') {
            Some(0) => {
                out.push('$');
                rest = &after[1..];
            }
            Some(end) => {
                let name = &after[..end];
                match macros.iter().find(|(k, _)| k == name) {
                    Some((_, v)) => out.push_str(v),
                    None => {
                        out.push('$');
                        out.push_str(name);
                        out.push('$');
                    }
                }
                rest = &after[end + 1..];
            }
            None => {
                out.push_str(&rest[start..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

/// Runs check jobs. The scheduler is generic over this so tests can plug in
/// instant stubs.
pub trait CheckExecutor: Send + Sync + 'static {
    fn execute(&self, job: CheckJob) -> BoxFuture<'static, CheckResult>;
}

/// Default executor: built-in probes in process, everything else as an
/// external plugin.
#[derive(Debug, Clone, Default)]
pub struct CommandExecutor {
    pub ping: PingCommand,
}

impl CommandExecutor {
    pub async fn run(job: CheckJob, ping: PingCommand) -> CheckResult {
        let spec = match CheckSpec::from_argv(&job.argv) {
            Ok(s) => s,
            Err(e) => {
                let now = Utc::now();
                return CheckResult::new(
                    CheckStatus::Unknown,
                    format!("UNKNOWN - {e}"),
                    now,
                    now,
                    CheckOrigin::Active,
                    job.argv.first().cloned().unwrap_or_default(),
                );
            }
        };
        match spec {
            CheckSpec::Plugin(argv) => execute_plugin(&argv, job.timeout).await,
            CheckSpec::Tcp {
                address,
                port,
                expect,
            } => check_tcp(&address, port, expect.as_deref(), job.timeout).await,
            CheckSpec::Http { url } => check_http(&url, job.timeout).await,
            CheckSpec::Ping { address } => check_ping(&address, job.timeout, &ping).await,
            CheckSpec::Cluster {
                warn,
                crit,
                members,
            } => check_cluster(&members, warn, crit),
        }
    }
}

impl CheckExecutor for CommandExecutor {
    fn execute(&self, job: CheckJob) -> BoxFuture<'static, CheckResult> {
        Box::pin(Self::run(job, self.ping.clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objconf::load_sources;

    #[test]
    fn macros() {
        let m = vec![("A".to_string(), "x y".to_string())];
        assert_eq!(expand_macros("-H $A$", &m), "-H x y");
        assert_eq!(expand_macros("$B$ $$ $A", &m), "$B$ $ $A");
    }

    #[test]
    fn expansion_keeps_spaced_args_whole() {
        let text = "define command{\n command_name check-tcp\n command_line sentinel:tcp $HOSTADDRESS$ $ARG1$ $ARG2$\n}\n\
                    define host{\n host_name mail1\n address 10.0.0.5\n}\n";
        let (config, diags) = load_sources([("t.cfg", text)]);
        assert!(diags.is_empty(), "{diags:?}");
        let argv = expand_command(
            &config,
            &ObjectRef::service("mail1", "IMAP"),
            &CheckCommand::parse("check-tcp!143!* OK"),
        )
        .unwrap();
        assert_eq!(argv, vec!["sentinel:tcp", "10.0.0.5", "143", "* OK"]);
        assert_eq!(
            CheckSpec::from_argv(&argv).unwrap(),
            CheckSpec::Tcp {
                address: "10.0.0.5".into(),
                port: 143,
                expect: Some("* OK".into())
            }
        );
    }

    #[test]
    fn builtin_parse_errors() {
        let v = |s: &[&str]| s.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        assert!(CheckSpec::from_argv(&v(&["sentinel:tcp", "h"])).is_err());
        assert!(CheckSpec::from_argv(&v(&["sentinel:bogus"])).is_err());
        assert_eq!(
            CheckSpec::from_argv(&v(&["sentinel:cluster", "1", "3", "0,2,CRITICAL"])).unwrap(),
            CheckSpec::Cluster {
                warn: 1,
                crit: 3,
                members: vec![CheckStatus::Ok, CheckStatus::Critical, CheckStatus::Critical]
            }
        );
        assert!(matches!(
            CheckSpec::from_argv(&v(&["/usr/lib/check_x", "-v"])).unwrap(),
            CheckSpec::Plugin(_)
        ));
    }
}
