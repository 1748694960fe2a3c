use chrono::Utc;

use super::status::{CheckOrigin, CheckResult, CheckStatus};

/// Aggregates cluster member states. A member fails iff it is not OK;
/// `crit` failures make the cluster CRITICAL, `warn` failures WARNING.
pub fn cluster_status(members: &[CheckStatus], warn: usize, crit: usize) -> (CheckStatus, String) {
    if members.is_empty() {
        return (CheckStatus::Unknown, "cluster has no members".to_string());
    }
    let failed = members.iter().filter(|s| !s.is_ok()).count();
    let status = if failed >= crit {
        CheckStatus::Critical
    } else if failed >= warn {
        CheckStatus::Warning
    } else {
        CheckStatus::Ok
    };
    (status, format!("cluster: {failed}/{} members failed", members.len()))
}

pub fn check_cluster(members: &[CheckStatus], warn: usize, crit: usize) -> CheckResult {
    let now = Utc::now();
    let (status, output) = cluster_status(members, warn, crit);
    CheckResult::new(status, output, now, now, CheckOrigin::Active, "cluster")
}
