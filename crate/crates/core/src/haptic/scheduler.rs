use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Work driven by [`run_dual_rate`].
pub trait PhysicsLoop {
    /// One fixed-step physics tick.
    fn physics_tick(&mut self, tick: u64) -> Result<()>;
    /// Publish a display frame after `tick`.
    fn display_frame(&mut self, frame: u64, tick: u64, stats: &LoopStats);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pacing {
    /// Run ticks back to back; no deadlines.
    Virtual,
    /// Hold each tick to its wall-clock slot.
    RealTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchedulerOptions {
    pub physics_rate: f64,
    pub display_rate: f64,
    pub pacing: Pacing,
    /// Ticks of lateness tolerated before the schedule is re-anchored and
    /// the run flagged degraded.
    pub backlog_limit: u32,
    /// Miss fraction above which the run is flagged degraded.
    pub degraded_miss_fraction: f64,
}

impl Default for SchedulerOptions {
    fn default() -> Self {
        Self {
            physics_rate: 1000.0,
            display_rate: 30.0,
            pacing: Pacing::RealTime,
            backlog_limit: 4,
            degraded_miss_fraction: 0.01,
        }
    }
}

impl SchedulerOptions {
    pub fn virtual_time() -> Self {
        Self {
            pacing: Pacing::Virtual,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.physics_rate > 0.0 && self.physics_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!("physics rate {}", self.physics_rate)));
        }
        if !(self.display_rate > 0.0 && self.display_rate <= self.physics_rate) {
            return Err(Error::InvalidArgument(format!(
                "display rate {} must lie in (0, {}]",
                self.display_rate, self.physics_rate
            )));
        }
        Ok(())
    }
}

/// Deadline accounting of one run. Latencies are wall-clock seconds of
/// physics compute per tick.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LoopStats {
    pub physics_period: f64,
    pub display_period: f64,
    pub physics_ticks: u64,
    pub display_frames: u64,
    pub missed_deadlines: u64,
    pub worst_tick_latency: f64,
    pub p99_tick_latency: f64,
    pub mean_tick_latency: f64,
    /// Wall-clock duration of the run (s).
    pub elapsed: f64,
    /// Display frames per wall-clock second (zero for virtual pacing).
    pub display_rate: f64,
    pub backlog_resets: u64,
    pub degraded: bool,
}

impl LoopStats {
    fn new(options: &SchedulerOptions) -> Self {
        Self {
            physics_period: 1.0 / options.physics_rate,
            display_period: 1.0 / options.display_rate,
            ..Self::default()
        }
    }

    pub fn miss_rate(&self) -> f64 {
        if self.physics_ticks == 0 {
            0.0
        } else {
            self.missed_deadlines as f64 / self.physics_ticks as f64
        }
    }
}

/// 99th percentile by nearest rank.
fn percentile_99(latencies: &mut [f64]) -> f64 {
    if latencies.is_empty() {
        return 0.0;
    }
    latencies.sort_by(f64::total_cmp);
    let rank = ((0.99 * latencies.len() as f64).ceil() as usize).clamp(1, latencies.len());
    latencies[rank - 1]
}

fn wait_until(deadline: Instant) {
    // Coarse sleep, then spin out the remainder: sleep overshoot alone
    // would eat a large share of a 1 ms slot.
    const SPIN: Duration = Duration::from_micros(150);
    let now = Instant::now();
    if deadline > now + SPIN {
        std::thread::sleep(deadline - now - SPIN);
    }
    while Instant::now() < deadline {
        std::hint::spin_loop();
    }
}

/// Runs `duration` seconds of simulation at the physics rate, publishing
/// display frames at the display rate.
///
/// Ticks are never skipped. Under real-time pacing a late tick is counted
/// as a miss and the next one starts immediately; once lateness exceeds
/// the backlog limit the schedule is re-anchored to now and the run is
/// flagged degraded. Simulation results depend only on the tick sequence.
pub fn run_dual_rate(task: &mut dyn PhysicsLoop, duration: f64, options: &SchedulerOptions) -> Result<LoopStats> {
    options.validate()?;
    if !(duration >= 0.0 && duration.is_finite()) {
        return Err(Error::InvalidArgument(format!("duration {duration} s")));
    }
    let mut stats = LoopStats::new(options);
    let ticks = (duration * options.physics_rate).round() as u64;
    let mut latencies = Vec::with_capacity(ticks.min(1 << 24) as usize);
    let period = Duration::from_secs_f64(stats.physics_period);

    let start = Instant::now();
    let mut anchor = start;
    let mut anchor_tick = 0u64;
    let mut latency_sum = 0.0;
    for tick in 0..ticks {
        let began = Instant::now();
        task.physics_tick(tick)?;
        let latency = began.elapsed().as_secs_f64();
        latencies.push(latency);
        latency_sum += latency;
        stats.physics_ticks += 1;
        stats.worst_tick_latency = stats.worst_tick_latency.max(latency);

        // exact for integral rates, so frames land on fixed ticks
        let frame = ((tick + 1) as f64 * options.display_rate / options.physics_rate).floor() as u64;
        if frame > stats.display_frames {
            stats.display_frames = frame;
            task.display_frame(frame - 1, tick, &stats);
        }

        if options.pacing == Pacing::RealTime {
            let deadline = anchor + period * (tick + 1 - anchor_tick) as u32;
            let now = Instant::now();
            if now > deadline {
                stats.missed_deadlines += 1;
                if now - deadline > period * options.backlog_limit {
                    stats.backlog_resets += 1;
                    stats.degraded = true;
                    anchor = now;
                    anchor_tick = tick + 1;
                }
            } else {
                wait_until(deadline);
            }
        }
    }

    stats.elapsed = start.elapsed().as_secs_f64();
    stats.p99_tick_latency = percentile_99(&mut latencies);
    if ticks > 0 {
        stats.mean_tick_latency = latency_sum / ticks as f64;
    }
    if options.pacing == Pacing::RealTime {
        if stats.elapsed > 0.0 {
            stats.display_rate = stats.display_frames as f64 / stats.elapsed;
        }
        if stats.miss_rate() > options.degraded_miss_fraction {
            stats.degraded = true;
        }
    }
    Ok(stats)
}
