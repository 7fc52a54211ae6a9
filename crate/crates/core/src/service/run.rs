use std::collections::VecDeque;
use std::sync::mpsc::Receiver;

use serde::{Deserialize, Serialize};

use super::config::SessionConfig;
use super::session::{Command, CommandOutcome, Envelope, Session, Snapshot};
use crate::contact::StictionStatus;
use crate::error::{Error, Result};
use crate::haptic::{run_dual_rate, LoopStats, PhysicsLoop, SchedulerOptions, StylusTrace};

/// Ordered inbound commands, drained at the start of every tick.
pub trait CommandSource {
    fn poll(&mut self, tick: u64, out: &mut Vec<Envelope>);
}

/// Commands stamped with the tick they are due at.
#[derive(Debug, Clone, Default)]
pub struct ScriptSource {
    queue: VecDeque<(u64, Envelope)>,
}

impl ScriptSource {
    /// `script` must be sorted by tick.
    pub fn new(script: impl IntoIterator<Item = (u64, Envelope)>) -> Self {
        Self {
            queue: script.into_iter().collect(),
        }
    }

    pub fn from_trace(trace: &StylusTrace, dt: f64) -> Self {
        Self::new(
            trace
                .schedule(dt)
                .into_iter()
                .enumerate()
                .map(|(i, (tick, sample))| (tick, Envelope::scripted(i as u64, Command::ApplyStylus { sample }))),
        )
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    /// The commands still pending, in order.
    pub fn into_script(self) -> Vec<(u64, Envelope)> {
        self.queue.into()
    }
}

impl CommandSource for ScriptSource {
    fn poll(&mut self, tick: u64, out: &mut Vec<Envelope>) {
        while self.queue.front().is_some_and(|(due, _)| *due <= tick) {
            out.push(self.queue.pop_front().expect("front").1);
        }
    }
}

/// Live commands from other threads. A closed channel just means no more
/// input; the session keeps running.
impl CommandSource for Receiver<Envelope> {
    fn poll(&mut self, _tick: u64, out: &mut Vec<Envelope>) {
        out.extend(self.try_iter());
    }
}

/// Observer of a running session. Every hook runs on the physics thread,
/// so implementations must return quickly.
pub trait SnapshotSink {
    /// Commands drained at the start of `tick` and what became of them.
    fn commands(&mut self, _tick: u64, _commands: &[Envelope], _outcomes: &[CommandOutcome]) -> Result<()> {
        Ok(())
    }

    /// After every tick.
    fn tick(&mut self, _session: &Session) -> Result<()> {
        Ok(())
    }

    /// At the display rate.
    fn snapshot(&mut self, _snapshot: &Snapshot) -> Result<()> {
        Ok(())
    }

    /// Once, after the last tick.
    fn finish(&mut self, _session: &Session, _report: &ExitReport) -> Result<()> {
        Ok(())
    }
}

/// Keeps every published snapshot.
#[derive(Debug, Default)]
pub struct CollectSnapshots(pub Vec<Snapshot>);

impl SnapshotSink for CollectSnapshots {
    fn snapshot(&mut self, snapshot: &Snapshot) -> Result<()> {
        self.0.push(snapshot.clone());
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitReport {
    pub ticks: u64,
    pub simulated_time: f64,
    pub commands_applied: u64,
    pub commands_rejected: u64,
    pub final_status: StictionStatus,
    pub stats: LoopStats,
}

struct SessionLoop<'a, 'b> {
    session: &'a mut Session,
    source: &'a mut dyn CommandSource,
    sinks: &'a mut [&'b mut dyn SnapshotSink],
    inbox: Vec<Envelope>,
    applied: u64,
    rejected: u64,
    include_stats: bool,
    sink_error: Option<Error>,
}

impl PhysicsLoop for SessionLoop<'_, '_> {
    fn physics_tick(&mut self, _tick: u64) -> Result<()> {
        self.inbox.clear();
        let tick = self.session.tick_count();
        self.source.poll(tick, &mut self.inbox);
        let outcomes = self.session.tick(&self.inbox)?;
        for outcome in &outcomes {
            match outcome.result {
                Ok(()) => self.applied += 1,
                Err(_) => self.rejected += 1,
            }
        }
        for sink in self.sinks.iter_mut() {
            if !self.inbox.is_empty() {
                sink.commands(tick, &self.inbox, &outcomes)?;
            }
            sink.tick(self.session)?;
        }
        Ok(())
    }

    fn display_frame(&mut self, _frame: u64, _tick: u64, stats: &LoopStats) {
        let snapshot = self.session.snapshot(self.include_stats.then_some(stats));
        for sink in self.sinks.iter_mut() {
            if let Err(e) = sink.snapshot(&snapshot) {
                self.sink_error.get_or_insert(e);
            }
        }
    }
}

/// Drives `session` for `duration` seconds: commands are applied in arrival
/// order at tick boundaries, sinks see every tick, and snapshots go out at
/// the display rate.
pub fn run_session(
    session: &mut Session,
    source: &mut dyn CommandSource,
    sinks: &mut [&mut dyn SnapshotSink],
    duration: f64,
    scheduler: &SchedulerOptions,
) -> Result<ExitReport> {
    let start_tick = session.tick_count();
    let mut driver = SessionLoop {
        session,
        source,
        sinks,
        inbox: Vec::new(),
        applied: 0,
        rejected: 0,
        include_stats: scheduler.pacing == crate::haptic::Pacing::RealTime,
        sink_error: None,
    };
    let stats = run_dual_rate(&mut driver, duration, scheduler)?;
    if let Some(e) = driver.sink_error.take() {
        return Err(e);
    }
    let report = ExitReport {
        ticks: driver.session.tick_count() - start_tick,
        simulated_time: driver.session.state().time,
        commands_applied: driver.applied,
        commands_rejected: driver.rejected,
        final_status: driver.session.status().clone(),
        stats,
    };
    for sink in driver.sinks.iter_mut() {
        sink.finish(driver.session, &report)?;
    }
    Ok(report)
}

/// Convenience wrapper: fresh session from `config`.
pub fn run_config(
    config: SessionConfig,
    source: &mut dyn CommandSource,
    sinks: &mut [&mut dyn SnapshotSink],
    duration: f64,
    scheduler: &SchedulerOptions,
) -> Result<ExitReport> {
    let mut session = Session::new(config)?;
    run_session(&mut session, source, sinks, duration, scheduler)
}
