//! The platform side: container pool, init/run/await lifecycle, billing,
//! timeouts, and idle reclamation.
//!
//! The invoker talks to a container over an abstract ordered channel with
//! blocking request/response pairs — `init`, then `run(event)`, and, under
//! the decoupled model, `await`, which returns once the function has
//! processed an `end()`. The caller receives exactly one message per event:
//! the response forwarded when `run` returns (or a timeout error if `run`
//! never does). Errors during the await phase are logged against the
//! instance, never sent to the caller.
//!
//! Billing counts virtual ticks spent in the run and await phases; idle
//! time between events is never billed but does count toward reclamation.

use crate::analysis::{detect, Verdict};
use crate::engine::{DriveStop, EngineError, ExecutionTrace, ScheduleSource, Sim};
use crate::program::Program;
use crate::semantics::SemanticsVariant;
use crate::value::Value;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvokerConfig {
    /// Ticks a cold start spends creating and initializing a container.
    pub cold_start_ticks: u64,
    /// Protocol overhead of the await call, billed to the await phase.
    pub warm_await_overhead: u64,
    /// Total processing budget (run + await) per event.
    pub timeout_ticks: u64,
    /// Idle threshold after which reclaim stops an instance.
    pub idle_reclaim_ticks: u64,
    /// Maximum number of live container instances.
    pub pool_size: usize,
}

impl Default for InvokerConfig {
    fn default() -> Self {
        InvokerConfig {
            cold_start_ticks: 25,
            warm_await_overhead: 8,
            timeout_ticks: 1000,
            idle_reclaim_ticks: 100,
            pool_size: 4,
        }
    }
}

impl InvokerConfig {
    /// Reads a config file in either JSON or `key=value` lines.
    pub fn from_file(path: &std::path::Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
        Self::from_text(&text)
    }

    /// Parses config text in either JSON or `key=value` lines.
    pub fn from_text(text: &str) -> Result<Self, String> {
        let trimmed = text.trim_start();
        if trimmed.starts_with('{') {
            return serde_json::from_str(text).map_err(|e| e.to_string());
        }
        let mut cfg = InvokerConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected key=value", i + 1))?;
            let value = value.trim();
            let parse = |v: &str| v.parse::<u64>().map_err(|e| format!("line {}: {e}", i + 1));
            match key.trim() {
                "cold_start_ticks" => cfg.cold_start_ticks = parse(value)?,
                "warm_await_overhead" => cfg.warm_await_overhead = parse(value)?,
                "timeout_ticks" => cfg.timeout_ticks = parse(value)?,
                "idle_reclaim_ticks" => cfg.idle_reclaim_ticks = parse(value)?,
                "pool_size" => cfg.pool_size = parse(value)? as usize,
                other => return Err(format!("line {}: unknown key `{other}`", i + 1)),
            }
        }
        Ok(cfg)
    }
}

/// Per-event billing: idle ticks are never included.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BillingRecord {
    pub run_ticks: u64,
    pub await_ticks: u64,
    pub total: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Lifecycle {
    Uninitialized,
    Initialized,
    Running(u64),
    Awaiting(u64),
    Stopped,
}

impl fmt::Display for Lifecycle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Lifecycle::Uninitialized => write!(f, "uninitialized"),
            Lifecycle::Initialized => write!(f, "initialized"),
            Lifecycle::Running(e) => write!(f, "running(e{e})"),
            Lifecycle::Awaiting(e) => write!(f, "awaiting(e{e})"),
            Lifecycle::Stopped => write!(f, "stopped"),
        }
    }
}

/// Messages on the invoker↔container channel.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ChannelMessage {
    InitCall { instance: u64 },
    InitReturn { instance: u64 },
    RunCall { instance: u64, event: Value },
    RunReturn { instance: u64, response: Value, is_error: bool },
    AwaitCall { instance: u64 },
    AwaitReturn { instance: u64 },
}

/// A message forwarded to the event's originator. Exactly one per event.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CallerMessage {
    pub event_seq: usize,
    pub value: Value,
    pub is_error: bool,
}

pub struct ContainerInstance {
    pub id: u64,
    pub lifecycle: Lifecycle,
    pub warm: bool,
    pub last_active: u64,
    sim: Sim,
}

impl ContainerInstance {
    pub fn trace(self) -> ExecutionTrace {
        self.sim.into_trace()
    }
}

#[derive(Debug, Error)]
pub enum InvokerError {
    #[error("event timed out during the run phase after {budget} ticks")]
    RunTimeout { budget: u64 },
    #[error(transparent)]
    Engine(#[from] EngineError),
}

pub struct DispatchResult {
    pub response: CallerMessage,
    pub billing: BillingRecord,
    pub verdict: Verdict,
    pub instance: u64,
    pub cold_start: bool,
    /// Set when the await phase timed out; the caller already has its
    /// response and is never told.
    pub await_timed_out: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReclaimReport {
    pub instance: u64,
    pub idle_ticks: u64,
    pub broken_promises: Vec<String>,
}

/// A pool of container instances running one program under one model.
pub struct Pool {
    program: Program,
    variant: SemanticsVariant,
    config: InvokerConfig,
    pub clock: u64,
    next_instance: u64,
    next_event_seq: usize,
    next_seed: u64,
    instances: Vec<ContainerInstance>,
    pub channel: Vec<ChannelMessage>,
    pub caller_messages: Vec<CallerMessage>,
}

impl Pool {
    pub fn new(program: Program, variant: SemanticsVariant, config: InvokerConfig) -> Self {
        Pool {
            program,
            variant,
            config,
            clock: 0,
            next_instance: 0,
            next_event_seq: 0,
            next_seed: 0,
            instances: Vec::new(),
            channel: Vec::new(),
            caller_messages: Vec::new(),
        }
    }

    pub fn instances(&self) -> &[ContainerInstance] {
        &self.instances
    }

    pub fn into_instances(self) -> Vec<ContainerInstance> {
        self.instances
    }

    /// Lets idle time pass. Pending operations with protocol deadlines may
    /// be poisoned by the suspension; idle instances age toward reclaim.
    pub fn advance_idle(&mut self, ticks: u64) {
        self.clock += ticks;
        for inst in &mut self.instances {
            if matches!(inst.lifecycle, Lifecycle::Initialized) {
                inst.sim.suspend_resume(ticks);
            }
        }
    }

    /// Dispatches one event: picks the most recently used warm instance (or
    /// cold-starts one), then drives init/run(/await).
    pub fn dispatch(
        &mut self,
        event: Value,
        schedule: Option<ScheduleSource>,
    ) -> Result<DispatchResult, InvokerError> {
        let event_seq = self.next_event_seq;
        self.next_event_seq += 1;
        let schedule = schedule.unwrap_or_else(|| {
            let seed = self.next_seed;
            self.next_seed += 1;
            ScheduleSource::seeded(seed)
        });

        // Most recently used warm instance first; reuse surfaces
        // interference bugs fastest.
        let warm_pick = self
            .instances
            .iter()
            .enumerate()
            .filter(|(_, i)| matches!(i.lifecycle, Lifecycle::Initialized))
            .max_by_key(|(_, i)| i.last_active)
            .map(|(idx, _)| idx);

        let (idx, cold_start) = match warm_pick {
            Some(idx) => (idx, false),
            None => {
                let id = self.next_instance;
                self.next_instance += 1;
                let sim = Sim::new(&self.program, &[], self.variant, &schedule)?;
                self.instances.push(ContainerInstance {
                    id,
                    lifecycle: Lifecycle::Uninitialized,
                    warm: false,
                    last_active: self.clock,
                    sim,
                });
                if self.instances.len() > self.config.pool_size {
                    self.reclaim_oldest_idle();
                }
                (self.instances.len() - 1, true)
            }
        };

        // init is blocking and happens on every dispatch, cold or warm.
        let id = self.instances[idx].id;
        self.channel.push(ChannelMessage::InitCall { instance: id });
        if cold_start {
            self.clock += self.config.cold_start_ticks;
        }
        self.instances[idx].lifecycle = Lifecycle::Initialized;
        self.channel.push(ChannelMessage::InitReturn { instance: id });

        // run(event): blocks until the function produces a response.
        self.channel.push(ChannelMessage::RunCall { instance: id, event: event.clone() });
        let inst = &mut self.instances[idx];
        inst.sim.enqueue_event(event);
        let responses_before = inst.sim.responses().len();
        let run_start = inst.sim.clock();
        let deadline = run_start + self.config.timeout_ticks;
        let stop = inst
            .sim
            .drive_until(Some(deadline), |s| s.responses().len() > responses_before)?;
        let run_ticks = inst.sim.clock() - run_start;
        inst.lifecycle = match inst.sim.function_state().status.current_event() {
            Some(e) => Lifecycle::Running(e.0),
            None => Lifecycle::Running(0),
        };

        let (response, timed_out_in_run) = match stop {
            DriveStop::Condition => {
                let r = &inst.sim.responses()[responses_before];
                (CallerMessage { event_seq, value: r.value.clone(), is_error: r.is_error }, false)
            }
            DriveStop::Terminal => {
                // The run ended without a response (wedged event).
                let value = Value::error("function ended without responding", Default::default());
                (CallerMessage { event_seq, value, is_error: true }, false)
            }
            DriveStop::DeadlineExceeded => {
                let value = Value::error(
                    format!("timeout after {} ticks", self.config.timeout_ticks),
                    Default::default(),
                );
                (CallerMessage { event_seq, value, is_error: true }, true)
            }
        };
        self.channel.push(ChannelMessage::RunReturn {
            instance: id,
            response: response.value.clone(),
            is_error: response.is_error,
        });
        self.caller_messages.push(response.clone());
        self.clock += run_ticks;

        let mut await_ticks = 0;
        let mut await_timed_out = false;
        if timed_out_in_run {
            // Force-stop: leftover work becomes broken promises.
            self.instances[idx].lifecycle = Lifecycle::Stopped;
        } else if self.variant == SemanticsVariant::DecoupledEnd {
            // await: returns once an end() has been processed.
            let inst = &mut self.instances[idx];
            let eid = inst.sim.function_state().status.current_event().map(|e| e.0);
            inst.lifecycle = Lifecycle::Awaiting(eid.unwrap_or(0));
            self.channel.push(ChannelMessage::AwaitCall { instance: id });
            let ends_before = inst.sim.ended_events().len();
            let await_start = inst.sim.clock();
            let await_deadline = run_start + self.config.timeout_ticks;
            let stop = match eid {
                // end() already processed while run was returning: the await
                // call returns immediately.
                None => DriveStop::Condition,
                Some(_) => inst
                    .sim
                    .drive_until(Some(await_deadline), |s| s.ended_events().len() > ends_before)?,
            };
            await_ticks = inst.sim.clock() - await_start + self.config.warm_await_overhead;
            match stop {
                DriveStop::Condition | DriveStop::Terminal => {
                    self.channel.push(ChannelMessage::AwaitReturn { instance: id });
                    inst.lifecycle = Lifecycle::Initialized;
                }
                DriveStop::DeadlineExceeded => {
                    // Logged only; the caller already has its response.
                    await_timed_out = true;
                    inst.lifecycle = Lifecycle::Stopped;
                }
            }
            self.clock += await_ticks;
        } else {
            self.instances[idx].lifecycle = Lifecycle::Initialized;
        }

        let inst = &mut self.instances[idx];
        inst.warm = true;
        inst.last_active = self.clock;
        let billing = BillingRecord {
            run_ticks,
            await_ticks,
            total: run_ticks + await_ticks,
        };
        let verdict = detect(&inst.sim.clone().into_trace(), self.variant);
        Ok(DispatchResult {
            response,
            billing,
            verdict,
            instance: id,
            cold_start,
            await_timed_out,
        })
    }

    /// Stops instances that have been idle at least the reclaim threshold.
    /// Their leftover promises become broken promises.
    pub fn reclaim(&mut self) -> Vec<ReclaimReport> {
        let mut reports = Vec::new();
        for inst in &mut self.instances {
            if !matches!(inst.lifecycle, Lifecycle::Initialized) {
                continue;
            }
            let idle = self.clock.saturating_sub(inst.last_active);
            if idle < self.config.idle_reclaim_ticks {
                continue;
            }
            if inst.sim.invalidate().is_ok() {
                inst.lifecycle = Lifecycle::Stopped;
                let verdict = detect(&inst.sim.clone().into_trace(), self.variant);
                reports.push(ReclaimReport {
                    instance: inst.id,
                    idle_ticks: idle,
                    broken_promises: verdict
                        .broken_promises
                        .iter()
                        .map(|b| b.site.clone())
                        .collect(),
                });
            }
        }
        reports
    }

    fn reclaim_oldest_idle(&mut self) {
        if let Some(inst) = self
            .instances
            .iter_mut()
            .filter(|i| matches!(i.lifecycle, Lifecycle::Initialized))
            .min_by_key(|i| i.last_active)
        {
            let _ = inst.sim.invalidate();
            inst.lifecycle = Lifecycle::Stopped;
        }
    }
}
