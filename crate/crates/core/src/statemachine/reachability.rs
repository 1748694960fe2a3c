use std::collections::{BTreeMap, VecDeque};

use super::state::HostStatus;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Reachability {
    pub status: BTreeMap<String, HostStatus>,
    /// `(host, parent)` pairs naming a parent that is not a known host.
    pub unknown_parents: Vec<(String, String)>,
}

/// Classifies every host in `parents` as UP, DOWN or UNREACHABLE.
///
/// `passed` holds the latest host check verdicts; hosts missing from it are
/// taken as passing. A failing host is UNREACHABLE iff it has at least one
/// known parent and none of its parents is UP. Hosts are evaluated in
/// topological order from the parentless ones, so a parent is always
/// classified before its children.
pub fn host_reachability(
    passed: &BTreeMap<String, bool>,
    parents: &BTreeMap<String, Vec<String>>,
) -> Reachability {
    let mut unknown_parents = Vec::new();
    let mut known: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (host, ps) in parents {
        let list = known.entry(host).or_default();
        for p in ps {
            if parents.contains_key(p) {
                list.push(p);
            } else {
                unknown_parents.push((host.clone(), p.clone()));
            }
        }
    }

    let mut pending: BTreeMap<&str, usize> = known.iter().map(|(h, ps)| (*h, ps.len())).collect();
    let mut children: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (h, ps) in &known {
        for p in ps {
            children.entry(p).or_default().push(h);
        }
    }
    let mut queue: VecDeque<&str> = pending.iter().filter(|(_, n)| **n == 0).map(|(h, _)| *h).collect();
    let mut status: BTreeMap<String, HostStatus> = BTreeMap::new();

    let classify = |h: &str, status: &BTreeMap<String, HostStatus>| {
        if passed.get(h).copied().unwrap_or(true) {
            return HostStatus::Up;
        }
        let ps = &known[h];
        let any_parent_up = ps
            .iter()
            .any(|p| status.get(*p).copied().unwrap_or(HostStatus::Up) == HostStatus::Up);
        if ps.is_empty() || any_parent_up {
            HostStatus::Down
        } else {
            HostStatus::Unreachable
        }
    };

    while let Some(h) = queue.pop_front() {
        let s = classify(h, &status);
        status.insert(h.to_string(), s);
        for c in children.get(h).into_iter().flatten() {
            let n = pending.get_mut(c).expect("child is known");
            *n -= 1;
            if *n == 0 {
                queue.push_back(c);
            }
        }
    }
    // Hosts on a parent cycle never become ready; evaluate them against
    // whatever is known so every host gets a status.
    for h in known.keys() {
        if !status.contains_key(*h) {
            let s = classify(h, &status);
            status.insert(h.to_string(), s);
        }
    }

    Reachability {
        status,
        unknown_parents,
    }
}
