//! Session hosting: configuration, the command/snapshot interface, the
//! wire protocol, recordings and the oracle suite.

mod config;
mod csv;
pub mod protocol;
mod record;
mod run;
mod session;
mod verify;

pub use config::{load_config, parse_config, Parameters, SessionConfig, Structure, MAX_ELEMENTS};
pub use csv::CsvRecorder;
pub use record::{replay_session, Recording, SessionRecorder, RECORDING_VERSION};
pub use run::{run_config, run_session, CollectSnapshots, CommandSource, ExitReport, ScriptSource, SnapshotSink};
pub use session::{Command, CommandOutcome, Envelope, ParameterName, Session, Snapshot};
pub use verify::{format_table, run_oracle_suite, OracleCheck};
