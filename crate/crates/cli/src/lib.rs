//! WebSocket host for a live session.
//!
//! One physics thread owns the session. Each client connection gets its own
//! thread that forwards commands into the session queue and pushes out the
//! newest snapshot whenever it changes. Slow clients miss frames; they never
//! hold up the physics loop.

use std::collections::{BTreeMap, HashMap};
use std::io::{self, ErrorKind};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use mems_haptics::haptic::SchedulerOptions;
use mems_haptics::service::protocol::{decode, encode, Message, PROTOCOL_VERSION};
use mems_haptics::service::{
    run_session, CommandOutcome, CommandSource, Envelope, ExitReport, Session, SessionConfig, Snapshot, SnapshotSink,
};
use tungstenite::{Error as WsError, Message as WsMessage, WebSocket};

/// How long a client thread blocks on its socket before checking for
/// outbound traffic.
const CLIENT_POLL: Duration = Duration::from_millis(4);

/// Physics runs in chunks of this many seconds; each chunk ends with a
/// stats broadcast.
const CHUNK_SECONDS: f64 = 1.0;

struct Inbound {
    envelope: Envelope,
    at_tick: Option<u64>,
}

#[derive(Default)]
struct Shared {
    /// Latest-value slot: sequence number and snapshot.
    latest: Mutex<(u64, Option<Arc<Snapshot>>)>,
    clients: Mutex<HashMap<u64, Sender<Message>>>,
}

impl Shared {
    fn send_to(&self, client: u64, message: Message) {
        if let Some(tx) = self.clients.lock().expect("client table").get(&client) {
            let _ = tx.send(message);
        }
    }

    fn broadcast(&self, message: &Message) {
        for tx in self.clients.lock().expect("client table").values() {
            let _ = tx.send(message.clone());
        }
    }
}

/// Live commands merged with deferred ones, released at their tick.
struct ServerSource {
    inbound: Receiver<Inbound>,
    deferred: BTreeMap<(u64, u64), Envelope>,
    arrivals: u64,
    shared: Arc<Shared>,
}

impl CommandSource for ServerSource {
    fn poll(&mut self, tick: u64, out: &mut Vec<Envelope>) {
        let mut immediate = Vec::new();
        for Inbound { envelope, at_tick } in self.inbound.try_iter() {
            match at_tick {
                Some(due) if due < tick => self.shared.send_to(
                    envelope.origin,
                    Message::CommandErr {
                        id: envelope.id,
                        message: format!("tick {due} has already run (session is at tick {tick})"),
                    },
                ),
                Some(due) => {
                    self.deferred.insert((due, self.arrivals), envelope);
                    self.arrivals += 1;
                }
                None => immediate.push(envelope),
            }
        }
        while let Some(entry) = self.deferred.first_entry() {
            if entry.key().0 > tick {
                break;
            }
            out.push(entry.remove());
        }
        out.extend(immediate);
    }
}

struct ServerSink {
    shared: Arc<Shared>,
}

impl SnapshotSink for ServerSink {
    fn commands(
        &mut self,
        _tick: u64,
        _commands: &[Envelope],
        outcomes: &[CommandOutcome],
    ) -> mems_haptics::Result<()> {
        for outcome in outcomes.iter().filter(|o| o.origin != 0) {
            let message = match &outcome.result {
                Ok(()) => Message::CommandAck {
                    id: outcome.id,
                    tick: outcome.tick,
                },
                Err(e) => Message::CommandErr {
                    id: outcome.id,
                    message: e.clone(),
                },
            };
            self.shared.send_to(outcome.origin, message);
        }
        Ok(())
    }

    fn snapshot(&mut self, snapshot: &Snapshot) -> mems_haptics::Result<()> {
        let mut slot = self.shared.latest.lock().expect("snapshot slot");
        slot.0 += 1;
        slot.1 = Some(Arc::new(snapshot.clone()));
        Ok(())
    }

    fn finish(&mut self, _session: &Session, report: &ExitReport) -> mems_haptics::Result<()> {
        self.shared.broadcast(&Message::Stats {
            stats: report.stats.clone(),
        });
        Ok(())
    }
}

pub struct Server {
    listener: TcpListener,
    config: SessionConfig,
    scheduler: SchedulerOptions,
}

impl Server {
    pub fn bind(addr: impl ToSocketAddrs, config: SessionConfig, scheduler: SchedulerOptions) -> io::Result<Self> {
        Ok(Self {
            listener: TcpListener::bind(addr)?,
            config,
            scheduler,
        })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Serves until `shutdown` is set. Fails only if the session cannot be
    /// built or the physics loop cannot recover from an error.
    pub fn run(self, shutdown: Arc<AtomicBool>) -> mems_haptics::Result<()> {
        let mut session = Session::new(self.config)?;
        let shared = Arc::new(Shared::default());
        let (commands, inbound) = channel();

        let physics = {
            let shared = Arc::clone(&shared);
            let shutdown = Arc::clone(&shutdown);
            let scheduler = self.scheduler;
            thread::Builder::new()
                .name("physics".into())
                .spawn(move || -> mems_haptics::Result<()> {
                    let mut source = ServerSource {
                        inbound,
                        deferred: BTreeMap::new(),
                        arrivals: 0,
                        shared: Arc::clone(&shared),
                    };
                    let mut sink = ServerSink { shared };
                    while !shutdown.load(Ordering::Relaxed) {
                        if let Err(e) =
                            run_session(&mut session, &mut source, &mut [&mut sink], CHUNK_SECONDS, &scheduler)
                        {
                            eprintln!("physics error: {e}; restoring the undeformed beam");
                            session.reset_failure()?;
                        }
                    }
                    Ok(())
                })?
        };

        self.listener.set_nonblocking(true)?;
        let next_client = AtomicU64::new(1);
        while !shutdown.load(Ordering::Relaxed) && !physics.is_finished() {
            match self.listener.accept() {
                Ok((stream, _)) => {
                    let id = next_client.fetch_add(1, Ordering::Relaxed);
                    let shared = Arc::clone(&shared);
                    let commands = commands.clone();
                    let shutdown = Arc::clone(&shutdown);
                    thread::Builder::new()
                        .name(format!("client-{id}"))
                        .spawn(move || serve_client(stream, id, &shared, &commands, &shutdown))?;
                }
                Err(e) if e.kind() == ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(10)),
                Err(e) => eprintln!("accept failed: {e}"),
            }
        }
        shutdown.store(true, Ordering::Relaxed);
        physics.join().expect("physics thread panicked")
    }
}

fn serve_client(stream: TcpStream, id: u64, shared: &Shared, commands: &Sender<Inbound>, shutdown: &AtomicBool) {
    // accept() hands over a non-blocking socket on some platforms
    if stream.set_nonblocking(false).is_err() {
        return;
    }
    let _ = stream.set_nodelay(true);
    let mut ws = match tungstenite::accept(stream) {
        Ok(ws) => ws,
        Err(e) => {
            eprintln!("client {id}: handshake failed: {e}");
            return;
        }
    };
    if ws.get_ref().set_read_timeout(Some(CLIENT_POLL)).is_err() {
        return;
    }
    let (tx, outbound) = channel();
    shared.clients.lock().expect("client table").insert(id, tx);
    let _ = client_loop(&mut ws, id, shared, commands, &outbound, shutdown);
    shared.clients.lock().expect("client table").remove(&id);
    let _ = ws.close(None);
    let _ = ws.flush();
}

// tungstenite errors are large but rare; boxing buys nothing here
#[allow(clippy::result_large_err)]
fn send(ws: &mut WebSocket<TcpStream>, message: &Message) -> Result<(), WsError> {
    ws.send(WsMessage::Text(encode(message)))
}

#[allow(clippy::result_large_err)]
fn client_loop(
    ws: &mut WebSocket<TcpStream>,
    id: u64,
    shared: &Shared,
    commands: &Sender<Inbound>,
    outbound: &Receiver<Message>,
    shutdown: &AtomicBool,
) -> Result<(), WsError> {
    send(ws, &Message::hello(concat!("mems-haptics/", env!("CARGO_PKG_VERSION"))))?;
    let mut last_seen = 0;
    while !shutdown.load(Ordering::Relaxed) {
        match ws.read() {
            Ok(WsMessage::Text(text)) => {
                if let Some(reply) = handle_text(&text, id, commands) {
                    send(ws, &reply)?;
                }
            }
            Ok(WsMessage::Binary(_)) => send(
                ws,
                &Message::CommandErr {
                    id: 0,
                    message: "binary frames are not part of the protocol".into(),
                },
            )?,
            Ok(_) => {}
            Err(WsError::Io(e)) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
            Err(e) => return Err(e),
        }
        for message in outbound.try_iter() {
            send(ws, &message)?;
        }
        let latest = {
            let slot = shared.latest.lock().expect("snapshot slot");
            (slot.0 > last_seen).then(|| (slot.0, slot.1.clone()))
        };
        if let Some((seq, Some(snapshot))) = latest {
            last_seen = seq;
            send(
                ws,
                &Message::Snapshot {
                    snapshot: Box::new((*snapshot).clone()),
                },
            )?;
        }
    }
    Ok(())
}

/// Routes one inbound text frame; returns an immediate reply if there is one.
fn handle_text(text: &str, client: u64, commands: &Sender<Inbound>) -> Option<Message> {
    match decode(text) {
        Ok(Message::Command { id, command, at_tick }) => {
            let envelope = Envelope {
                id,
                origin: client,
                command,
            };
            commands
                .send(Inbound { envelope, at_tick })
                .err()
                .map(|_| Message::CommandErr {
                    id,
                    message: "session has stopped".into(),
                })
        }
        Ok(Message::Hello { version, .. }) if version != PROTOCOL_VERSION => Some(Message::CommandErr {
            id: 0,
            message: format!("protocol version {version} is not supported (server speaks {PROTOCOL_VERSION})"),
        }),
        Ok(Message::Hello { .. }) => None,
        Ok(_) => Some(Message::CommandErr {
            id: 0,
            message: "clients may only send hello and command messages".into(),
        }),
        Err(e) => Some(Message::CommandErr {
            id: 0,
            message: e.to_string(),
        }),
    }
}
