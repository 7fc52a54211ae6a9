use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::AtomicBool;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use mems_haptics::haptic::{Pacing, SchedulerOptions, StylusTrace};
use mems_haptics::service::{
    format_table, load_config, replay_session, run_config, run_oracle_suite, CsvRecorder, ExitReport, Recording,
    ScriptSource, SessionConfig, SessionRecorder, SnapshotSink,
};
use mems_haptics_cli::Server;

/// Real-time microbeam simulator with haptic feedback.
#[derive(Parser)]
#[command(name = "mems-haptics", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Host a live session over WebSocket.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Session configuration (TOML); defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run a scripted stylus trace and write the trajectory as CSV. Run
    /// statistics go to stdout as JSON.
    Headless {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Stylus trace: `time x y z applied` per line.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Simulated seconds.
        #[arg(long)]
        duration: f64,
        #[arg(long)]
        out: PathBuf,
        /// Pace ticks against the wall clock instead of running flat out.
        #[arg(long)]
        realtime: bool,
        /// Also write a replayable recording.
        #[arg(long)]
        record: Option<PathBuf>,
    },
    /// Compare the solver against closed-form beam results.
    Verify {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Re-run a recording.
    Replay {
        #[arg(long = "in")]
        input: PathBuf,
        /// Write the replayed trajectory as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

type AnyError = Box<dyn std::error::Error>;

fn config_from(path: Option<&PathBuf>) -> Result<SessionConfig, AnyError> {
    Ok(match path {
        Some(p) => load_config(p)?,
        None => SessionConfig::default(),
    })
}

fn print_report(report: &ExitReport) -> Result<(), AnyError> {
    let mut stdout = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut stdout, report)?;
    writeln!(stdout)?;
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode, AnyError> {
    match cli.command {
        Cmd::Serve { port, host, config } => {
            let config = config_from(config.as_ref())?;
            let server = Server::bind((host.as_str(), port), config, SchedulerOptions::default())?;
            println!("listening on ws://{}", server.local_addr()?);
            std::io::stdout().flush()?;
            server.run(Arc::new(AtomicBool::new(false)))?;
        }
        Cmd::Headless {
            config,
            trace,
            duration,
            out,
            realtime,
            record,
        } => {
            let config = config_from(config.as_ref())?;
            let mut source = match &trace {
                Some(path) => ScriptSource::from_trace(&StylusTrace::load(path)?, config.solve.dt),
                None => ScriptSource::default(),
            };
            let scheduler = if realtime {
                SchedulerOptions {
                    pacing: Pacing::RealTime,
                    ..SchedulerOptions::default()
                }
            } else {
                SchedulerOptions::virtual_time()
            };
            let mut csv = CsvRecorder::new(BufWriter::new(File::create(&out)?));
            let mut recorder = match &record {
                Some(path) => Some(SessionRecorder::new(BufWriter::new(File::create(path)?), &config)?),
                None => None,
            };
            let mut sinks: Vec<&mut dyn SnapshotSink> = vec![&mut csv];
            if let Some(r) = recorder.as_mut() {
                sinks.push(r);
            }
            let report = run_config(config, &mut source, &mut sinks, duration, &scheduler)?;
            print_report(&report)?;
            if report.stats.degraded {
                eprintln!("warning: missed real-time deadlines; reduce n_elements or modal_modes");
            }
        }
        Cmd::Verify { config } => {
            let checks = run_oracle_suite(&config_from(config.as_ref())?)?;
            print!("{}", format_table(&checks));
            if !checks.iter().all(|c| c.passed()) {
                return Ok(ExitCode::FAILURE);
            }
        }
        Cmd::Replay { input, out } => {
            let recording = Recording::load(&input)?;
            let report = match &out {
                Some(path) => {
                    let mut csv = CsvRecorder::new(BufWriter::new(File::create(path)?));
                    replay_session(&recording, &mut [&mut csv])?
                }
                None => replay_session(&recording, &mut [])?,
            };
            print_report(&report)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
