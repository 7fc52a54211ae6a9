use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{Parameters, SessionConfig};
use super::run::{run_session, ExitReport, ScriptSource, SnapshotSink};
use super::session::{CommandOutcome, Envelope, Session};
use crate::error::{Error, Result};
use crate::haptic::SchedulerOptions;

pub const RECORDING_VERSION: u32 = 1;
const FORMAT: &str = "mems-haptics-recording";

/// One JSON object per line: a header, the commands in delivery order,
/// then an end marker carrying the tick count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Line {
    Header {
        format: String,
        version: u32,
        parameters: Parameters,
    },
    Command {
        tick: u64,
        envelope: Envelope,
    },
    End {
        ticks: u64,
    },
}

/// A session's configuration plus every command it received, with the
/// tick it was applied at.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub config: SessionConfig,
    pub commands: Vec<(u64, Envelope)>,
    pub ticks: u64,
}

impl Recording {
    pub fn to_text(&self) -> String {
        let mut out = line(&Line::Header {
            format: FORMAT.into(),
            version: RECORDING_VERSION,
            parameters: self.config.parameters(),
        });
        for (tick, envelope) in &self.commands {
            out.push_str(&line(&Line::Command {
                tick: *tick,
                envelope: envelope.clone(),
            }));
        }
        out.push_str(&line(&Line::End { ticks: self.ticks }));
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let lines: Vec<(usize, &str)> = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| (i + 1, l))
            .collect();
        let Some(&(_, first)) = lines.first() else {
            return Err(Error::Truncated("empty recording".into()));
        };
        // Check the version before the schema: other versions may differ.
        let header: serde_json::Value = serde_json::from_str(first).map_err(|e| Error::Parse {
            line: Some(1),
            message: e.to_string(),
        })?;
        if header.get("format").and_then(|f| f.as_str()) != Some(FORMAT) {
            return Err(Error::Parse {
                line: Some(1),
                message: "not a session recording".into(),
            });
        }
        let version = header.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if version != RECORDING_VERSION {
            return Err(Error::IncompatibleVersion {
                found: version,
                expected: RECORDING_VERSION,
            });
        }

        let mut config = None;
        let mut commands = Vec::new();
        let last = lines.len() - 1;
        for (k, &(number, text)) in lines.iter().enumerate() {
            let parsed: Line = match serde_json::from_str(text) {
                Ok(l) => l,
                // a half-written final line is what an interrupted writer leaves
                Err(_) if k == last && k > 0 => {
                    return Err(Error::Truncated(format!("incomplete line {number}")));
                }
                Err(e) => {
                    return Err(Error::Parse {
                        line: Some(number),
                        message: e.to_string(),
                    })
                }
            };
            match parsed {
                Line::Header { parameters, .. } if k == 0 => {
                    config = Some(SessionConfig::from_parameters(&parameters)?);
                }
                Line::Command { tick, envelope } if k > 0 => {
                    if commands.last().is_some_and(|&(t, _)| t > tick) {
                        return Err(Error::Parse {
                            line: Some(number),
                            message: format!("command tick {tick} out of order"),
                        });
                    }
                    commands.push((tick, envelope));
                }
                Line::End { ticks } if k == last => {
                    return Ok(Self {
                        config: config.expect("header parsed"),
                        commands,
                        ticks,
                    });
                }
                _ => {
                    return Err(Error::Parse {
                        line: Some(number),
                        message: "record out of place".into(),
                    })
                }
            }
        }
        Err(Error::Truncated("missing end marker".into()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

fn line(record: &Line) -> String {
    let mut s = serde_json::to_string(record).expect("records serialize");
    s.push('\n');
    s
}

/// Streams a recording as the session runs. The end marker is written on
/// finish, so an interrupted run leaves a detectably truncated file.
pub struct SessionRecorder<W: Write> {
    out: W,
}

impl<W: Write> SessionRecorder<W> {
    pub fn new(mut out: W, config: &SessionConfig) -> Result<Self> {
        out.write_all(
            line(&Line::Header {
                format: FORMAT.into(),
                version: RECORDING_VERSION,
                parameters: config.parameters(),
            })
            .as_bytes(),
        )?;
        Ok(Self { out })
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

impl<W: Write> SnapshotSink for SessionRecorder<W> {
    fn commands(&mut self, tick: u64, commands: &[Envelope], _outcomes: &[CommandOutcome]) -> Result<()> {
        for envelope in commands {
            self.out.write_all(
                line(&Line::Command {
                    tick,
                    envelope: envelope.clone(),
                })
                .as_bytes(),
            )?;
        }
        Ok(())
    }

    fn finish(&mut self, session: &Session, _report: &ExitReport) -> Result<()> {
        self.out.write_all(
            line(&Line::End {
                ticks: session.tick_count(),
            })
            .as_bytes(),
        )?;
        self.out.flush()?;
        Ok(())
    }
}

/// Re-runs a recording on a fresh session, as fast as possible.
pub fn replay_session(recording: &Recording, sinks: &mut [&mut dyn SnapshotSink]) -> Result<ExitReport> {
    let scheduler = SchedulerOptions::virtual_time();
    let mut session = Session::new(recording.config)?;
    let mut source = ScriptSource::new(recording.commands.iter().cloned());
    let duration = recording.ticks as f64 / scheduler.physics_rate;
    run_session(&mut session, &mut source, sinks, duration, &scheduler)
}
