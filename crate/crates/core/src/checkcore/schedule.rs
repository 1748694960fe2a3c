use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use chrono::Utc;
use tokio::sync::mpsc;
use tokio::time::Instant;
use tracing::{debug, warn};

use super::command::{expand_command, CheckExecutor, CheckJob};
use super::status::{CheckResult, CheckStatus};
use crate::objconf::{HostDef, ResolvedConfig, ServiceDef, TimePeriodDef};
use crate::{ObjectRef, Timestamp, Zone};

/// Default number of checks allowed to run at once.
pub const DEFAULT_MAX_CONCURRENT: usize = 32;
/// Default plugin timeout.
pub const DEFAULT_CHECK_TIMEOUT: Duration = Duration::from_secs(10);
/// Default length of one interval unit.
pub const DEFAULT_INTERVAL_LENGTH: Duration = Duration::from_secs(60);

/// Check intervals of a host or service definition, in interval units.
pub trait CheckIntervals {
    fn normal_check_interval(&self) -> u32;
    fn retry_check_interval(&self) -> u32;
}

impl CheckIntervals for ServiceDef {
    fn normal_check_interval(&self) -> u32 {
        self.normal_check_interval
    }
    fn retry_check_interval(&self) -> u32 {
        self.retry_check_interval
    }
}

impl CheckIntervals for HostDef {
    fn normal_check_interval(&self) -> u32 {
        self.normal_check_interval
    }
    fn retry_check_interval(&self) -> u32 {
        self.retry_check_interval
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScheduleEntry {
    pub target: ObjectRef,
    pub next_due: Timestamp,
    /// Object is in a SOFT non-OK state and is being re-checked.
    pub in_retry: bool,
}

/// Delay until the next check: the retry interval while in a soft problem,
/// the normal interval otherwise.
pub fn check_delay(in_retry: bool, def: &impl CheckIntervals, interval_length: Duration) -> Duration {
    let units = if in_retry {
        def.retry_check_interval()
    } else {
        def.normal_check_interval()
    };
    interval_length * units.max(1)
}

pub fn next_check_time(
    entry: &ScheduleEntry,
    def: &impl CheckIntervals,
    last_finished: Timestamp,
    interval_length: Duration,
) -> Timestamp {
    let delay = check_delay(entry.in_retry, def, interval_length);
    last_finished + chrono::Duration::from_std(delay).unwrap_or(chrono::Duration::MAX)
}

/// One schedulable check with what the scheduler needs to pace it.
#[derive(Debug, Clone)]
pub struct PlannedCheck {
    pub job: CheckJob,
    pub normal_check_interval: u32,
    pub retry_check_interval: u32,
    pub max_check_attempts: u32,
    pub check_period: Option<TimePeriodDef>,
}

impl CheckIntervals for PlannedCheck {
    fn normal_check_interval(&self) -> u32 {
        self.normal_check_interval
    }
    fn retry_check_interval(&self) -> u32 {
        self.retry_check_interval
    }
}

/// Which objects a plan covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanScope {
    /// Objects with `active_checks_enabled`.
    Active,
    /// Every object that has a check command, regardless of the active
    /// flag. Used by remote workers that report passively.
    AllWithCommand,
}

/// Builds the check plan for a resolved configuration. Objects whose
/// command cannot be expanded are skipped and reported.
pub fn plan_checks(
    config: &ResolvedConfig,
    scope: PlanScope,
    timeout: Duration,
) -> (Vec<PlannedCheck>, Vec<String>) {
    let mut plan = Vec::new();
    let mut errors = Vec::new();
    let wanted = |active: bool| scope == PlanScope::AllWithCommand || active;

    for host in config.hosts.values() {
        let Some(cmd) = &host.check_command else { continue };
        if !wanted(host.active_checks_enabled) {
            continue;
        }
        let target = ObjectRef::host(&host.host_name);
        match expand_command(config, &target, cmd) {
            Ok(argv) => plan.push(PlannedCheck {
                job: CheckJob { target, argv, timeout },
                normal_check_interval: host.normal_check_interval,
                retry_check_interval: host.retry_check_interval,
                max_check_attempts: host.max_check_attempts,
                check_period: config.period(&host.check_period).map(|p| p.into_owned()),
            }),
            Err(e) => errors.push(format!("host '{}': {e}", host.host_name)),
        }
    }
    for svc in config.services.values() {
        if !wanted(svc.active_checks_enabled) {
            continue;
        }
        let target = ObjectRef::service(&svc.host_name, &svc.service_description);
        match expand_command(config, &target, &svc.check_command) {
            Ok(argv) => plan.push(PlannedCheck {
                job: CheckJob { target, argv, timeout },
                normal_check_interval: svc.normal_check_interval,
                retry_check_interval: svc.retry_check_interval,
                max_check_attempts: svc.max_check_attempts,
                check_period: config.period(&svc.check_period).map(|p| p.into_owned()),
            }),
            Err(e) => errors.push(format!("service '{target}': {e}")),
        }
    }
    (plan, errors)
}

#[derive(Debug, Clone)]
pub struct SchedulerOptions {
    pub interval_length: Duration,
    pub max_concurrent: usize,
    /// Spread first checks uniformly over one normal interval.
    pub stagger: bool,
    pub zone: Zone,
}

impl Default for SchedulerOptions {
    fn default() -> Self {
        SchedulerOptions {
            interval_length: DEFAULT_INTERVAL_LENGTH,
            max_concurrent: DEFAULT_MAX_CONCURRENT,
            stagger: true,
            zone: Zone::UTC,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SchedulerCommand {
    /// Run the target's check as soon as possible, once.
    ForceCheck(ObjectRef),
    Shutdown,
}

/// A finished check on its way to the state machine.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckOutcome {
    pub target: ObjectRef,
    pub result: CheckResult,
}

/// Counters exposed by a running scheduler.
#[derive(Debug, Default)]
pub struct SchedulerStats {
    pub dispatched: AtomicU64,
    pub completed: AtomicU64,
    pub in_flight: AtomicUsize,
    /// Due entries currently held back by the concurrency bound.
    pub waiting: AtomicUsize,
    pub max_waiting: AtomicUsize,
}

impl SchedulerStats {
    fn set_waiting(&self, n: usize) {
        self.waiting.store(n, Ordering::Relaxed);
        self.max_waiting.fetch_max(n, Ordering::Relaxed);
    }
}

/// Mirrors the soft/hard counting of the state machine for active results,
/// just enough to pick between normal and retry intervals.
#[derive(Debug, Default, Clone, Copy)]
struct RetryTracker {
    consecutive_problems: u32,
    hard_problem: bool,
}

impl RetryTracker {
    fn observe(&mut self, problem: bool, max_attempts: u32) -> bool {
        if !problem {
            *self = RetryTracker::default();
            return false;
        }
        if self.hard_problem {
            return false;
        }
        self.consecutive_problems += 1;
        if self.consecutive_problems >= max_attempts.max(1) {
            self.hard_problem = true;
            false
        } else {
            true
        }
    }
}

struct Slot {
    plan: PlannedCheck,
    generation: u64,
    in_flight: bool,
    force_pending: bool,
    tracker: RetryTracker,
}

/// Runs checks forever (until [`SchedulerCommand::Shutdown`] or the command
/// channel closes).
///
/// Each due entry is dispatched at most once per due time; an entry is
/// re-queued only after its check completed. Results go to `sink` in
/// completion order. When `max_concurrent` checks are running, due entries
/// stay queued and the `waiting` gauge reports them.
pub async fn run_scheduler(
    plan: Vec<PlannedCheck>,
    options: SchedulerOptions,
    executor: Arc<dyn CheckExecutor>,
    sink: mpsc::UnboundedSender<CheckOutcome>,
    mut commands: mpsc::UnboundedReceiver<SchedulerCommand>,
    stats: Arc<SchedulerStats>,
) {
    let max_concurrent = options.max_concurrent.max(1);
    let start = Instant::now();
    let count = plan.len().max(1) as u32;
    let mut heap: BinaryHeap<Reverse<(Instant, u64, usize)>> = BinaryHeap::new();
    let mut index: HashMap<ObjectRef, usize> = HashMap::new();
    let mut slots: Vec<Slot> = Vec::with_capacity(plan.len());

    for (i, p) in plan.into_iter().enumerate() {
        let offset = if options.stagger {
            check_delay(false, &p, options.interval_length) * i as u32 / count
        } else {
            Duration::ZERO
        };
        heap.push(Reverse((start + offset, 0, i)));
        index.insert(p.job.target.clone(), i);
        slots.push(Slot {
            plan: p,
            generation: 0,
            in_flight: false,
            force_pending: false,
            tracker: RetryTracker::default(),
        });
    }

    let (done_tx, mut done_rx) = mpsc::unbounded_channel::<(usize, CheckStatus)>();
    let mut in_flight = 0usize;

    loop {
        let now = Instant::now();
        while let Some(&Reverse((due, generation, idx))) = heap.peek() {
            if slots[idx].generation != generation || slots[idx].in_flight {
                heap.pop();
                continue;
            }
            if due > now || in_flight >= max_concurrent {
                break;
            }
            heap.pop();
            let slot = &mut slots[idx];

            if let Some(period) = &slot.plan.check_period {
                let local = options.zone.local(Utc::now());
                if !period.contains(&local) {
                    debug!(target = %slot.plan.job.target, "outside check period, skipping");
                    slot.generation += 1;
                    let next = now + check_delay(false, &slot.plan, options.interval_length);
                    heap.push(Reverse((next, slot.generation, idx)));
                    continue;
                }
            }

            slot.in_flight = true;
            in_flight += 1;
            stats.dispatched.fetch_add(1, Ordering::Relaxed);
            stats.in_flight.store(in_flight, Ordering::Relaxed);

            let job = slot.plan.job.clone();
            let fut = executor.execute(job.clone());
            let sink = sink.clone();
            let done = done_tx.clone();
            tokio::spawn(async move {
                let result = fut.await;
                let status = result.status;
                let _ = sink.send(CheckOutcome {
                    target: job.target,
                    result,
                });
                let _ = done.send((idx, status));
            });
        }

        let waiting = if in_flight >= max_concurrent {
            heap.iter()
                .filter(|Reverse((due, g, i))| *due <= now && slots[*i].generation == *g && !slots[*i].in_flight)
                .count()
        } else {
            0
        };
        stats.set_waiting(waiting);

        let next_wake = if in_flight < max_concurrent {
            heap.peek().map(|Reverse((due, _, _))| *due)
        } else {
            None
        };

        tokio::select! {
            biased;
            Some((idx, status)) = done_rx.recv() => {
                in_flight -= 1;
                stats.completed.fetch_add(1, Ordering::Relaxed);
                stats.in_flight.store(in_flight, Ordering::Relaxed);
                let slot = &mut slots[idx];
                slot.in_flight = false;
                let problem = if slot.plan.job.target.is_host() {
                    matches!(status, CheckStatus::Critical | CheckStatus::Unknown)
                } else {
                    !status.is_ok()
                };
                let in_retry = slot.tracker.observe(problem, slot.plan.max_check_attempts);
                slot.generation += 1;
                let due = if slot.force_pending {
                    slot.force_pending = false;
                    Instant::now()
                } else {
                    Instant::now() + check_delay(in_retry, &slot.plan, options.interval_length)
                };
                heap.push(Reverse((due, slot.generation, idx)));
            }
            cmd = commands.recv() => match cmd {
                Some(SchedulerCommand::ForceCheck(target)) => match index.get(&target) {
                    Some(&idx) => {
                        let slot = &mut slots[idx];
                        if slot.in_flight {
                            slot.force_pending = true;
                        } else {
                            slot.generation += 1;
                            heap.push(Reverse((Instant::now(), slot.generation, idx)));
                        }
                    }
                    None => warn!(%target, "force check for an object the scheduler does not run"),
                },
                Some(SchedulerCommand::Shutdown) | None => break,
            },
            _ = sleep_until(next_wake), if next_wake.is_some() => {}
        }
    }
}

async fn sleep_until(at: Option<Instant>) {
    match at {
        Some(at) => tokio::time::sleep_until(at).await,
        None => std::future::pending().await,
    }
}
