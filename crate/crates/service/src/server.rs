//! Control loop, connection handling and the off-loop map worker.

use std::io::{BufReader, BufWriter};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{mpsc, Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use base64::Engine;
use crossbeam_queue::ArrayQueue;
use gard_core::impedance::ImpedanceParams;
use gard_core::map::{Region, PERMITTED, PROHIBITED};
use gard_core::pgm;
use gard_core::session::{Command, Fault, Session, SessionConfig, SoftMaps, StepRecord};
use gard_core::{GridGeometry, MotionRestrictionMap, Vec2};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::protocol::{
    read_frame, write_frame, ClientMessage, EditRegion, Envelope, FaultCode, ServerMessage, StateFrame,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub session: SessionConfig,
    /// A state frame is streamed every `decimation` steps.
    pub decimation: u32,
    /// Force inputs above this magnitude (N) are clamped.
    pub force_cap: f64,
    /// Held force is dropped once older than this.
    pub watchdog_ms: u64,
    /// Per-client state frames buffered before the oldest is dropped.
    pub state_buffer: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            session: SessionConfig::default(),
            decimation: 10,
            force_cap: 100.0,
            watchdog_ms: 200,
            state_buffer: 256,
        }
    }
}

/// Per-connection outbound queues, drained by the connection's writer.
struct Outbox {
    id: u64,
    states: ArrayQueue<ServerMessage>,
    replies: ArrayQueue<ServerMessage>,
    closed: AtomicBool,
}

impl Outbox {
    fn reply(&self, msg: ServerMessage) {
        self.replies.force_push(msg);
    }

    fn fault(&self, code: FaultCode, message: impl Into<String>, ack_seq: Option<u64>) {
        self.reply(ServerMessage::Fault {
            code,
            message: message.into(),
            ack_seq,
        });
    }
}

struct LoopCommand {
    reply_to: Option<(Arc<Outbox>, u64)>,
    command: LoopOp,
}

enum LoopOp {
    Session(Command),
    /// Maps rebuilt by the worker; `soft` was built with `kernel_radius`.
    Install {
        map: MotionRestrictionMap,
        soft: Option<SoftMaps>,
        kernel_radius: u32,
    },
}

enum MapJob {
    Edit(Region, u8),
    Load(MotionRestrictionMap),
    Impedance(ImpedanceParams),
}

struct Shared {
    cfg: ServiceConfig,
    geometry: GridGeometry,
    shutdown: AtomicBool,
    commands: ArrayQueue<LoopCommand>,
    force: ArrayQueue<(Vec2, Instant)>,
    joins: ArrayQueue<Arc<Outbox>>,
    jobs: Mutex<mpsc::Sender<(Option<(Arc<Outbox>, u64)>, MapJob)>>,
    /// Connection id of the operator; 0 when none.
    operator: AtomicU64,
    next_id: AtomicU64,
    streams: Mutex<Vec<TcpStream>>,
    steps: AtomicU64,
    max_lateness_us: AtomicU64,
}

impl Shared {
    fn send_loop(&self, cmd: LoopCommand) {
        if let Err(cmd) = self.commands.push(cmd) {
            if let Some((out, seq)) = cmd.reply_to {
                out.fault(FaultCode::Rejected, "command queue full", Some(seq));
            }
        }
    }

    fn send_job(&self, reply_to: Option<(Arc<Outbox>, u64)>, job: MapJob) {
        let tx = self.jobs.lock().expect("job sender poisoned");
        let _ = tx.send((reply_to, job));
    }
}

/// Running service. Dropping the handle leaves the service running; call
/// [`ServiceHandle::shutdown`] to stop it.
pub struct ServiceHandle {
    addr: SocketAddr,
    shared: Arc<Shared>,
    threads: Vec<JoinHandle<()>>,
}

impl ServiceHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Control steps executed so far.
    pub fn steps(&self) -> u64 {
        self.shared.steps.load(Ordering::Relaxed)
    }

    /// Largest observed lateness of a step against its schedule.
    pub fn max_lateness(&self) -> Duration {
        Duration::from_micros(self.shared.max_lateness_us.load(Ordering::Relaxed))
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    /// Blocks until the control loop exits.
    pub fn wait(mut self) {
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }

    fn stop(&mut self) {
        self.shared.shutdown.store(true, Ordering::SeqCst);
        for s in self.shared.streams.lock().expect("stream registry poisoned").iter() {
            let _ = s.shutdown(Shutdown::Both);
        }
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

/// Starts the service on `listener` with `map` as the initial restriction map.
pub fn serve(listener: TcpListener, cfg: ServiceConfig, map: MotionRestrictionMap) -> Result<ServiceHandle> {
    let geometry = *map.geometry();
    let soft = build_soft(&map, &cfg.session.impedance);
    let session = Session::with_soft_maps(cfg.session.clone(), map.clone(), soft)?;
    let addr = listener.local_addr()?;
    listener.set_nonblocking(true)?;

    let (tx, rx) = mpsc::channel();
    let shared = Arc::new(Shared {
        geometry,
        shutdown: AtomicBool::new(false),
        commands: ArrayQueue::new(1024),
        force: ArrayQueue::new(1),
        joins: ArrayQueue::new(64),
        jobs: Mutex::new(tx),
        operator: AtomicU64::new(0),
        next_id: AtomicU64::new(1),
        streams: Mutex::new(Vec::new()),
        steps: AtomicU64::new(0),
        max_lateness_us: AtomicU64::new(0),
        cfg,
    });

    let mut threads = Vec::new();
    let s = shared.clone();
    threads.push(thread::Builder::new().name("gard-loop".into()).spawn(move || control_loop(session, &s))?);
    let s = shared.clone();
    let impedance = shared.cfg.session.impedance;
    threads.push(
        thread::Builder::new()
            .name("gard-maps".into())
            .spawn(move || map_worker(map, impedance, rx, &s))?,
    );
    let s = shared.clone();
    threads.push(thread::Builder::new().name("gard-accept".into()).spawn(move || accept_loop(listener, &s))?);
    log::info!("serving on {addr}");
    Ok(ServiceHandle { addr, shared, threads })
}

fn build_soft(map: &MotionRestrictionMap, p: &ImpedanceParams) -> Option<SoftMaps> {
    p.validate(map.geometry().resolution()).ok()?;
    SoftMaps::build(map, p).ok()
}

fn control_loop(mut session: Session, shared: &Shared) {
    let period = Duration::from_secs_f64(session.config().timestep);
    let watchdog = Duration::from_millis(shared.cfg.watchdog_ms);
    let decimation = u64::from(shared.cfg.decimation.max(1));
    let mut subscribers: Vec<Arc<Outbox>> = Vec::new();
    let mut held: Option<(Vec2, Instant)> = None;
    let mut last_fault: Option<Fault> = None;
    let mut deadline = Instant::now();

    while !shared.shutdown.load(Ordering::Relaxed) {
        while let Some(out) = shared.joins.pop() {
            subscribers.push(out);
        }
        while let Some(cmd) = shared.commands.pop() {
            apply(&mut session, cmd);
        }
        if let Some(f) = shared.force.pop() {
            held = Some(f);
        }
        let now = Instant::now();
        let force = match held {
            Some((f, at)) if now.duration_since(at) <= watchdog => f,
            _ => Vec2::ZERO,
        };

        let rec = session.step_with_force(force);
        let k = shared.steps.fetch_add(1, Ordering::Relaxed);

        if rec.fault != last_fault {
            if let Some(f) = rec.fault {
                for out in &subscribers {
                    out.fault(FaultCode::Session, f.to_string(), None);
                }
            }
            last_fault = rec.fault;
        }
        if k % decimation == 0 {
            let frame = ServerMessage::State(state_frame(&rec));
            for out in &subscribers {
                out.states.force_push(frame.clone());
            }
        }
        subscribers.retain(|o| !o.closed.load(Ordering::Relaxed));

        deadline += period;
        let now = Instant::now();
        if deadline > now {
            thread::sleep(deadline - now);
        } else {
            let late = now - deadline;
            shared
                .max_lateness_us
                .fetch_max(late.as_micros().min(u128::from(u64::MAX)) as u64, Ordering::Relaxed);
            // Do not burst to catch up after a long stall.
            if late > period * 20 {
                deadline = now;
            }
        }
    }
}

fn apply(session: &mut Session, cmd: LoopCommand) {
    let result = match cmd.command {
        LoopOp::Session(c) => session.apply(c),
        LoopOp::Install {
            map,
            soft,
            kernel_radius,
        } => {
            let soft = soft.filter(|_| session.config().impedance.kernel_radius == kernel_radius);
            session.apply(Command::ReplaceMaps { map, soft })
        }
    };
    if let Some((out, seq)) = cmd.reply_to {
        match result {
            Ok(()) => out.reply(ServerMessage::Ack {
                ack_seq: seq,
                operator: true,
            }),
            Err(e) => out.fault(FaultCode::Rejected, e.to_string(), Some(seq)),
        }
    }
}

fn state_frame(r: &StepRecord) -> StateFrame {
    StateFrame {
        t: r.t,
        px: r.position.x,
        py: r.position.y,
        vx: r.velocity.x,
        vy: r.velocity.y,
        fx: r.force.x,
        fy: r.force.y,
        fox: r.assist.x,
        foy: r.assist.y,
        mode: r.mode,
        rev: r.revision,
    }
}

/// Owns a mirror of the restriction map so edits and spring-map rebuilds
/// happen off the control loop. Every map change reaches the loop as a
/// complete replacement.
fn map_worker(
    mut mirror: MotionRestrictionMap,
    mut impedance: ImpedanceParams,
    rx: mpsc::Receiver<(Option<(Arc<Outbox>, u64)>, MapJob)>,
    shared: &Shared,
) {
    while !shared.shutdown.load(Ordering::Relaxed) {
        let (reply_to, job) = match rx.recv_timeout(Duration::from_millis(20)) {
            Ok(j) => j,
            Err(mpsc::RecvTimeoutError::Timeout) => continue,
            Err(mpsc::RecvTimeoutError::Disconnected) => break,
        };
        let changed = match job {
            MapJob::Edit(region, value) => {
                mirror.edit_region(&region, value);
                Ok(())
            }
            MapJob::Load(map) => mirror.replace_with(&map),
            MapJob::Impedance(p) => {
                impedance = p;
                continue;
            }
        };
        match changed {
            Ok(()) => shared.send_loop(LoopCommand {
                reply_to,
                command: LoopOp::Install {
                    map: mirror.clone(),
                    soft: build_soft(&mirror, &impedance),
                    kernel_radius: impedance.kernel_radius,
                },
            }),
            Err(e) => {
                if let Some((out, seq)) = reply_to {
                    out.fault(FaultCode::Rejected, e.to_string(), Some(seq));
                }
            }
        }
    }
}

fn accept_loop(listener: TcpListener, shared: &Arc<Shared>) {
    let mut workers = Vec::new();
    while !shared.shutdown.load(Ordering::Relaxed) {
        match listener.accept() {
            Ok((stream, peer)) => {
                log::info!("client connected from {peer}");
                match spawn_connection(stream, shared) {
                    Ok(mut t) => workers.append(&mut t),
                    Err(e) => log::warn!("dropping client {peer}: {e}"),
                }
            }
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(5)),
            Err(e) => {
                log::warn!("accept failed: {e}");
                thread::sleep(Duration::from_millis(50));
            }
        }
    }
    for t in workers {
        let _ = t.join();
    }
}

fn spawn_connection(stream: TcpStream, shared: &Arc<Shared>) -> std::io::Result<Vec<JoinHandle<()>>> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true)?;
    let id = shared.next_id.fetch_add(1, Ordering::Relaxed);
    let out = Arc::new(Outbox {
        id,
        states: ArrayQueue::new(shared.cfg.state_buffer.max(1)),
        replies: ArrayQueue::new(1024),
        closed: AtomicBool::new(false),
    });
    let _ = shared.operator.compare_exchange(0, id, Ordering::SeqCst, Ordering::SeqCst);
    shared
        .streams
        .lock()
        .expect("stream registry poisoned")
        .push(stream.try_clone()?);
    if shared.joins.push(out.clone()).is_err() {
        log::warn!("too many pending subscribers; client {id} gets no state stream");
    }

    let reader_stream = stream.try_clone()?;
    let (s1, o1) = (shared.clone(), out.clone());
    let reader = thread::Builder::new()
        .name(format!("gard-read-{id}"))
        .spawn(move || reader(reader_stream, &o1, &s1))?;
    let (s2, o2) = (shared.clone(), out);
    let writer = thread::Builder::new()
        .name(format!("gard-write-{id}"))
        .spawn(move || writer(stream, &o2, &s2))?;
    Ok(vec![reader, writer])
}

fn writer(stream: TcpStream, out: &Outbox, shared: &Shared) {
    let mut w = BufWriter::new(stream);
    let mut seq = 0u64;
    while !shared.shutdown.load(Ordering::Relaxed) && !out.closed.load(Ordering::Relaxed) {
        let Some(body) = out.replies.pop().or_else(|| out.states.pop()) else {
            thread::sleep(Duration::from_millis(1));
            continue;
        };
        seq += 1;
        if write_frame(&mut w, &Envelope { seq, body }).is_err() {
            out.closed.store(true, Ordering::Relaxed);
        }
    }
}

fn reader(stream: TcpStream, out: &Arc<Outbox>, shared: &Shared) {
    let mut r = BufReader::new(stream);
    let mut last_seq: Option<u64> = None;
    loop {
        let raw = match read_frame(&mut r) {
            Ok(Some(raw)) => raw,
            Ok(None) => break,
            Err(e) => {
                if !shared.shutdown.load(Ordering::Relaxed) {
                    log::info!("client {} read error: {e}", out.id);
                }
                break;
            }
        };
        let env: Envelope<ClientMessage> = match serde_json::from_slice(&raw) {
            Ok(env) => env,
            Err(e) => {
                out.fault(FaultCode::Malformed, format!("dropped frame: {e}"), None);
                continue;
            }
        };
        if last_seq.is_some_and(|s| env.seq <= s) {
            out.fault(
                FaultCode::Malformed,
                format!("sequence number {} does not increase", env.seq),
                Some(env.seq),
            );
            continue;
        }
        last_seq = Some(env.seq);
        handle(env, out, shared);
    }
    out.closed.store(true, Ordering::Relaxed);
    if shared
        .operator
        .compare_exchange(out.id, 0, Ordering::SeqCst, Ordering::SeqCst)
        .is_ok()
    {
        log::info!("operator {} disconnected; pausing", out.id);
        shared.send_loop(LoopCommand {
            reply_to: None,
            command: LoopOp::Session(Command::SetPaused(true)),
        });
    }
}

fn handle(env: Envelope<ClientMessage>, out: &Arc<Outbox>, shared: &Shared) {
    let seq = env.seq;
    let is_operator = shared.operator.load(Ordering::SeqCst) == out.id;
    let reply_to = Some((out.clone(), seq));
    if !is_operator {
        match env.body {
            ClientMessage::Hello { .. } => out.reply(ServerMessage::Ack {
                ack_seq: seq,
                operator: false,
            }),
            _ => out.fault(FaultCode::ReadOnly, "another client is the operator", Some(seq)),
        }
        return;
    }
    let op = |c: Command| LoopCommand {
        reply_to: reply_to.clone(),
        command: LoopOp::Session(c),
    };
    match env.body {
        ClientMessage::Hello { .. } => shared.send_loop(op(Command::SetPaused(false))),
        ClientMessage::SetMode { mode } => shared.send_loop(op(Command::SetMode(mode))),
        ClientMessage::SetParams { params } => {
            if let Some(p) = params.impedance {
                shared.send_job(None, MapJob::Impedance(p));
            }
            shared.send_loop(op(Command::SetParams(params)));
        }
        ClientMessage::LoadMap { pgm } => {
            let g = shared.geometry;
            let map = base64::engine::general_purpose::STANDARD
                .decode(pgm.as_bytes())
                .map_err(|e| e.to_string())
                .and_then(|bytes| pgm::decode_map_at(&bytes, g.resolution(), g.origin()).map_err(|e| e.to_string()));
            match map {
                Ok(map) => shared.send_job(reply_to, MapJob::Load(map)),
                Err(e) => out.fault(FaultCode::Rejected, format!("load_map: {e}"), Some(seq)),
            }
        }
        ClientMessage::EditMap { region, value } => {
            if value != PERMITTED && value != PROHIBITED {
                out.fault(FaultCode::Rejected, format!("edit value must be 0 or 255, got {value}"), Some(seq));
                return;
            }
            match to_region(&region, &shared.geometry) {
                Some(r) => shared.send_job(reply_to, MapJob::Edit(r, value)),
                None => out.fault(FaultCode::Rejected, "edit region is not finite", Some(seq)),
            }
        }
        ClientMessage::ForceInput { fx, fy } => {
            let f = Vec2::new(fx, fy);
            if !f.is_finite() {
                out.fault(FaultCode::NonFiniteForce, format!("force ({fx}, {fy}) rejected"), Some(seq));
                return;
            }
            let cap = shared.cfg.force_cap;
            let f = if f.norm() > cap {
                out.fault(
                    FaultCode::ForceClamped,
                    format!("force magnitude {:.3} N clamped to {cap} N", f.norm()),
                    Some(seq),
                );
                f.clamp_norm(cap)
            } else {
                f
            };
            shared.force.force_push((f, Instant::now()));
        }
    }
}

fn to_region(region: &EditRegion, g: &GridGeometry) -> Option<Region> {
    match region {
        &EditRegion::Rect { x0, y0, x1, y1 } => {
            let (a, b) = (Vec2::new(x0, y0), Vec2::new(x1, y1));
            (a.is_finite() && b.is_finite()).then(|| Region::Rect {
                a: g.cell_of(a),
                b: g.cell_of(b),
            })
        }
        EditRegion::Stroke { points, width } => {
            let points: Vec<Vec2> = points.iter().map(|&[x, y]| Vec2::new(x, y)).collect();
            (width.is_finite() && points.iter().all(|p| p.is_finite())).then(|| Region::Stroke {
                points,
                width_cells: width / g.resolution(),
            })
        }
    }
}
