//! Live steering server.
//!
//! One simulation thread owns the [`Session`] and ticks it in real time at the
//! plant rate. Connection threads decode frames and forward commands through a
//! single queue; the simulation thread applies them between ticks and hands
//! snapshots back through per-connection queues. State frames go through a
//! small queue that drops its oldest entry when full, so a slow client never
//! stalls the loop.

use std::collections::BTreeMap;
use std::io::ErrorKind;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use crossbeam_channel::{bounded, unbounded, Receiver, Sender, TrySendError};
use handover_core::controller::{ControllerConfig, Profile};
use handover_core::gripper::{GripperCommand, Phase};
use handover_core::kinematics::{JointState, Pose};
use handover_core::scenario::{ObjectKind, Workspace};
use handover_core::session::{Session, SessionSetup, TickRecord};
use log::{debug, info, warn};
use tungstenite::{Message, WebSocket};

use crate::bundle::ConfigBundle;
use crate::wire::{
    decode, encode, Ack, Body, ErrorCode, ErrorPayload, Lifecycle, PoseMsg, Role, StateUpdate, WireMessage,
    WIRE_VERSION,
};

/// State frames buffered per connection before the oldest is dropped.
pub const STATE_QUEUE_DEPTH: usize = 2;
/// Control replies buffered per connection before it is considered dead.
const CONTROL_QUEUE_DEPTH: usize = 256;
const READ_POLL: Duration = Duration::from_millis(2);
const ACCEPT_POLL: Duration = Duration::from_millis(5);
/// Falling further behind than this resynchronizes the tick clock.
const MAX_LAG: Duration = Duration::from_millis(100);

#[derive(Debug, Clone)]
pub struct ServerOptions {
    pub object: ObjectKind,
    pub workspace: Workspace,
    pub seed: u64,
}

impl Default for ServerOptions {
    fn default() -> Self {
        Self {
            object: ObjectKind::CardboardBox,
            workspace: Workspace::default(),
            seed: 0,
        }
    }
}

type ClientId = u64;

enum Inbound {
    Connect {
        id: ClientId,
        control: Sender<Body>,
        state: Sender<Body>,
        state_drain: Receiver<Body>,
    },
    Disconnect {
        id: ClientId,
    },
    Command {
        id: ClientId,
        msg: WireMessage,
    },
}

/// A running server; dropping it without [`ServerHandle::shutdown`] leaves the
/// threads running.
pub struct ServerHandle {
    pub addr: SocketAddr,
    pub session_id: String,
    stop: Arc<AtomicBool>,
    threads: Vec<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn shutdown(mut self) {
        self.stop.store(true, Ordering::SeqCst);
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }

    /// Blocks until the server stops.
    pub fn wait(mut self) {
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

/// Builds the session and binds `addr`; the simulation starts paused.
pub fn spawn(bundle: ConfigBundle, options: ServerOptions, addr: SocketAddr) -> std::io::Result<ServerHandle> {
    let sim = LiveSession::new(&bundle, &options).map_err(|e| std::io::Error::new(ErrorKind::InvalidInput, e))?;
    let listener = TcpListener::bind(addr)?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    let session_id = uuid::Uuid::new_v4().to_string();
    let stop = Arc::new(AtomicBool::new(false));
    let (inbound_tx, inbound_rx) = unbounded();

    let stream_every = ((1.0 / bundle.stream_hz) / sim.dt()).round().max(1.0) as u64;
    let sim_thread = {
        let stop = stop.clone();
        let session_id = session_id.clone();
        std::thread::Builder::new()
            .name("handover-sim".into())
            .spawn(move || simulation_loop(sim, session_id, stream_every, inbound_rx, stop))?
    };
    let accept_thread = {
        let stop = stop.clone();
        let session_id = session_id.clone();
        std::thread::Builder::new()
            .name("handover-accept".into())
            .spawn(move || accept_loop(listener, session_id, inbound_tx, stop))?
    };
    info!("serving on ws://{addr} (session {session_id})");
    Ok(ServerHandle {
        addr,
        session_id,
        stop,
        threads: vec![sim_thread, accept_thread],
    })
}

fn accept_loop(listener: TcpListener, session_id: String, inbound: Sender<Inbound>, stop: Arc<AtomicBool>) {
    let mut next_id: ClientId = 0;
    let mut workers = Vec::new();
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                next_id += 1;
                let id = next_id;
                let inbound = inbound.clone();
                let stop = stop.clone();
                let session_id = session_id.clone();
                debug!("client {id} connected from {peer}");
                let spawned = std::thread::Builder::new()
                    .name(format!("handover-client-{id}"))
                    .spawn(move || {
                        if let Err(e) = connection(stream, id, session_id, &inbound, &stop) {
                            debug!("client {id}: {e}");
                        }
                        let _ = inbound.send(Inbound::Disconnect { id });
                    });
                match spawned {
                    Ok(h) => workers.push(h),
                    Err(e) => warn!("cannot start connection thread: {e}"),
                }
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => std::thread::sleep(ACCEPT_POLL),
            Err(e) => {
                warn!("accept failed: {e}");
                std::thread::sleep(ACCEPT_POLL);
            }
        }
    }
    for w in workers {
        let _ = w.join();
    }
}

fn would_block(e: &tungstenite::Error) -> bool {
    matches!(e, tungstenite::Error::Io(io) if matches!(io.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut))
}

struct Outgoing<'a> {
    ws: &'a mut WebSocket<TcpStream>,
    session_id: &'a str,
    seq: u64,
}

impl Outgoing<'_> {
    fn send(&mut self, body: Body) -> tungstenite::Result<()> {
        self.seq += 1;
        let msg = WireMessage {
            v: WIRE_VERSION,
            session_id: self.session_id.to_owned(),
            seq: self.seq,
            body,
        };
        self.ws.send(Message::text(encode(&msg)))
    }
}

fn connection(
    stream: TcpStream,
    id: ClientId,
    session_id: String,
    inbound: &Sender<Inbound>,
    stop: &AtomicBool,
) -> Result<(), Box<dyn std::error::Error>> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true)?;
    let mut ws = tungstenite::accept(stream)?;
    ws.get_ref().set_read_timeout(Some(READ_POLL))?;

    let (control_tx, control_rx) = bounded(CONTROL_QUEUE_DEPTH);
    let (state_tx, state_rx) = bounded(STATE_QUEUE_DEPTH);
    inbound.send(Inbound::Connect {
        id,
        control: control_tx,
        state: state_tx,
        state_drain: state_rx.clone(),
    })?;
    let mut out = Outgoing {
        ws: &mut ws,
        session_id: &session_id,
        seq: 0,
    };
    loop {
        if stop.load(Ordering::SeqCst) {
            let _ = out.ws.close(None);
            let _ = out.ws.flush();
            return Ok(());
        }
        match out.ws.read() {
            Ok(Message::Text(text)) => match decode(text.as_str()) {
                Ok(msg) => inbound.send(Inbound::Command { id, msg })?,
                Err(e) => out.send(Body::Error(ErrorPayload {
                    code: e.code,
                    message: e.message,
                    ref_seq: e.seq,
                }))?,
            },
            Ok(Message::Binary(_)) => out.send(Body::Error(ErrorPayload {
                code: ErrorCode::Malformed,
                message: "binary frames are not supported".into(),
                ref_seq: None,
            }))?,
            Ok(Message::Close(_)) => {}
            Ok(_) => {}
            Err(e) if would_block(&e) => {}
            Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => return Ok(()),
            Err(e) => return Err(e.into()),
        }
        // Replies first, so an ack never trails the state frame that reflects it.
        while let Ok(body) = control_rx.try_recv() {
            out.send(body)?;
        }
        while let Ok(body) = state_rx.try_recv() {
            out.send(body)?;
        }
        match out.ws.flush() {
            Ok(()) => {}
            Err(e) if would_block(&e) => {}
            Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => return Ok(()),
            Err(e) => return Err(e.into()),
        }
    }
}

struct Client {
    control: Sender<Body>,
    state: Sender<Body>,
    state_drain: Receiver<Body>,
    role: Role,
    last_seq: Option<u64>,
    dropped: u64,
}

/// The simulated scene behind the server.
pub struct LiveSession {
    setup: SessionSetup,
    start: JointState,
    nominal_hand: Pose,
    initial_profile: Profile,
    session: Session,
    hand: Pose,
    running: bool,
    /// True until anything changes the freshly reset scene.
    pristine: bool,
    last_record: Option<TickRecord>,
    last_command: GripperCommand,
}

impl LiveSession {
    pub fn new(bundle: &ConfigBundle, options: &ServerOptions) -> handover_core::Result<Self> {
        let spec = options.object.spec();
        let controller = handover_core::controller::apply_profile(
            &ControllerConfig::new(spec.grasp, bundle.session.controller.clone())?,
            bundle.profile,
        );
        let setup = SessionSetup::new(
            bundle.chain.clone(),
            controller,
            bundle.session.clone(),
            spec.in_hand,
            options.seed,
        )?;
        let start = JointState::at_rest(options.workspace.robot_ready.clone());
        let hand = options.workspace.hand_nominal;
        let session = Session::new(setup.clone(), start.clone(), hand)?;
        Ok(Self {
            setup,
            start,
            nominal_hand: hand,
            initial_profile: bundle.profile,
            session,
            hand,
            running: false,
            pristine: true,
            last_record: None,
            last_command: GripperCommand::None,
        })
    }

    pub fn dt(&self) -> f64 {
        self.session.dt()
    }

    pub fn running(&self) -> bool {
        self.running
    }

    pub fn profile(&self) -> Profile {
        self.session.setup.controller.params.profile
    }

    pub fn spring2_f_max(&self) -> f64 {
        self.session.setup.controller.spring2_f_max()
    }

    pub fn phase(&self) -> Phase {
        self.session.fsm.phase
    }

    /// Advances one control tick if running.
    pub fn tick(&mut self) -> handover_core::Result<()> {
        if !self.running {
            return Ok(());
        }
        let record = self.session.tick(self.hand)?;
        if record.command != GripperCommand::None {
            self.last_command = record.command;
        }
        self.last_record = Some(record);
        self.pristine = false;
        Ok(())
    }

    pub fn set_hand(&mut self, pose: Pose) {
        if pose != self.hand {
            self.hand = pose;
            self.pristine = false;
        }
    }

    /// Returns whether anything changed.
    pub fn set_profile(&mut self, profile: Profile) -> bool {
        if profile == self.profile() {
            return false;
        }
        self.session.set_profile(profile);
        self.pristine = false;
        true
    }

    pub fn set_running(&mut self, running: bool) -> bool {
        let changed = self.running != running;
        self.running = running;
        changed
    }

    /// Restores the start configuration, paused. Returns whether anything changed.
    pub fn reset(&mut self) -> handover_core::Result<bool> {
        if self.pristine && !self.running {
            return Ok(false);
        }
        self.session = Session::new(self.setup.clone(), self.start.clone(), self.nominal_hand)?;
        if self.profile() != self.initial_profile {
            self.session.set_profile(self.initial_profile);
        }
        self.hand = self.nominal_hand;
        self.running = false;
        self.pristine = true;
        self.last_record = None;
        self.last_command = GripperCommand::None;
        Ok(true)
    }

    /// Snapshot of the current state. While paused the controller is evaluated
    /// on a copy so the frame reflects commands applied since the last tick.
    pub fn snapshot(&self) -> handover_core::Result<StateUpdate> {
        let preview;
        let record = match (&self.last_record, self.running) {
            (Some(r), true) => r,
            _ => {
                preview = self.session.clone().tick(self.hand)?;
                &preview
            }
        };
        let arr = |v: &[nalgebra::Vector3<f64>; 3]| v.map(|p| [p.x, p.y, p.z]);
        Ok(StateUpdate {
            t: self.session.state.t,
            tick: self.session.ticks as u64,
            running: self.running,
            q: self.session.state.joints.q.clone(),
            qdot: self.session.state.joints.qdot.clone(),
            alpha: self.session.fsm.alpha,
            phase: self.session.fsm.phase,
            last_command: self.last_command,
            profile: self.profile(),
            spring2_f_max: self.spring2_f_max(),
            hand_pose: PoseMsg::from_pose(&self.hand),
            gripper_points: arr(&record.gripper_points),
            target_points: arr(&record.target_points),
            grasp_points: arr(&record.grasp_points),
            pair_distances: record.pair_distances(),
            region_centers: record.region_centers.iter().map(|c| [c.x, c.y, c.z]).collect(),
            region_sigmas: self.session.setup.controller.params.repulsive.iter().map(|r| r.params.sigma).collect(),
            finger_closure: self.session.state.fingers.closure,
            dropped: 0,
        })
    }
}

struct Simulation {
    sim: LiveSession,
    session_id: String,
    clients: BTreeMap<ClientId, Client>,
}

impl Simulation {
    fn ack(&self, role: Role, ref_seq: Option<u64>, command: &str, changed: bool) -> Body {
        Body::Ack(Ack {
            ref_seq,
            command: command.to_owned(),
            changed,
            role,
            running: self.sim.running(),
            profile: self.sim.profile(),
            spring2_f_max: self.sim.spring2_f_max(),
        })
    }

    fn reply(&mut self, id: ClientId, body: Body) {
        let Some(client) = self.clients.get(&id) else { return };
        if let Err(TrySendError::Full(_)) = client.control.try_send(body) {
            warn!("client {id} is not reading replies; disconnecting it");
            self.clients.remove(&id);
        }
    }

    fn error(&mut self, id: ClientId, code: ErrorCode, message: impl Into<String>, ref_seq: Option<u64>) {
        self.reply(
            id,
            Body::Error(ErrorPayload {
                code,
                message: message.into(),
                ref_seq,
            }),
        );
    }

    fn handle(&mut self, event: Inbound) {
        match event {
            Inbound::Connect {
                id,
                control,
                state,
                state_drain,
            } => {
                let has_steering = self.clients.values().any(|c| c.role == Role::Steering);
                let role = if has_steering { Role::Observer } else { Role::Steering };
                self.clients.insert(
                    id,
                    Client {
                        control,
                        state,
                        state_drain,
                        role,
                        last_seq: None,
                        dropped: 0,
                    },
                );
                info!("client {id} joined as {role:?}");
                let greeting = self.ack(role, None, "connect", false);
                self.reply(id, greeting);
            }
            Inbound::Disconnect { id } => {
                if let Some(c) = self.clients.remove(&id) {
                    info!("client {id} left");
                    if c.role == Role::Steering && self.sim.set_running(false) {
                        info!("steering client disconnected; session paused");
                    }
                }
            }
            Inbound::Command { id, msg } => self.command(id, msg),
        }
    }

    fn command(&mut self, id: ClientId, msg: WireMessage) {
        let Some(client) = self.clients.get_mut(&id) else { return };
        let seq = msg.seq;
        let kind = msg.body.kind();
        if msg.session_id != self.session_id {
            let text = format!("session `{}` does not match `{}`", msg.session_id, self.session_id);
            return self.error(id, ErrorCode::SessionMismatch, text, Some(seq));
        }
        if client.last_seq.is_some_and(|last| seq <= last) {
            return self.error(id, ErrorCode::StaleSeq, format!("seq {seq} does not increase"), Some(seq));
        }
        client.last_seq = Some(seq);
        let role = client.role;
        if !msg.body.is_command() {
            return self.error(id, ErrorCode::UnexpectedKind, format!("clients may not send `{kind}`"), Some(seq));
        }
        if role != Role::Steering {
            return self.error(id, ErrorCode::ReadOnly, "another client is steering", Some(seq));
        }
        match msg.body {
            Body::HandPoseCmd(pose) => match pose.to_pose() {
                Ok(p) => {
                    let before = self.sim.hand;
                    self.sim.set_hand(p);
                    let ack = self.ack(role, Some(seq), kind, before != p);
                    self.reply(id, ack);
                }
                Err(e) => self.error(id, ErrorCode::Malformed, e, Some(seq)),
            },
            Body::ProfileCmd(cmd) => {
                if self.sim.phase() == Phase::Grasping {
                    return self.error(id, ErrorCode::Rejected, "profile cannot change while grasping", Some(seq));
                }
                let changed = self.sim.set_profile(cmd.profile);
                let ack = self.ack(role, Some(seq), kind, changed);
                self.reply(id, ack);
            }
            Body::LifecycleCmd(cmd) => {
                let changed = match cmd.action {
                    Lifecycle::Start => Ok(self.sim.set_running(true)),
                    Lifecycle::Pause => Ok(self.sim.set_running(false)),
                    Lifecycle::Reset => self.sim.reset(),
                };
                match changed {
                    Ok(changed) => {
                        let ack = self.ack(role, Some(seq), kind, changed);
                        self.reply(id, ack);
                    }
                    Err(e) => self.error(id, ErrorCode::Internal, e.to_string(), Some(seq)),
                }
            }
            _ => unreachable!("filtered by is_command"),
        }
    }

    fn broadcast(&mut self) {
        if self.clients.is_empty() {
            return;
        }
        let update = match self.sim.snapshot() {
            Ok(u) => u,
            Err(e) => {
                warn!("snapshot failed: {e}");
                return;
            }
        };
        for client in self.clients.values_mut() {
            // Only this thread sends, so one eviction makes room.
            while client.state.is_full() {
                if client.state_drain.try_recv().is_ok() {
                    client.dropped += 1;
                }
            }
            let mut frame = update.clone();
            frame.dropped = client.dropped;
            let _ = client.state.try_send(Body::StateUpdate(Box::new(frame)));
        }
    }
}

fn simulation_loop(
    sim: LiveSession,
    session_id: String,
    stream_every: u64,
    inbound: Receiver<Inbound>,
    stop: Arc<AtomicBool>,
) {
    let period = Duration::from_secs_f64(sim.dt());
    let mut state = Simulation {
        sim,
        session_id,
        clients: BTreeMap::new(),
    };
    let mut wall_ticks: u64 = 0;
    let mut next = Instant::now();
    while !stop.load(Ordering::SeqCst) {
        while let Ok(event) = inbound.try_recv() {
            state.handle(event);
        }
        if let Err(e) = state.sim.tick() {
            warn!("simulation stopped: {e}");
            state.sim.set_running(false);
        }
        wall_ticks += 1;
        if wall_ticks % stream_every == 0 {
            state.broadcast();
        }
        next += period;
        let now = Instant::now();
        if next > now {
            std::thread::sleep(next - now);
        } else if now - next > MAX_LAG {
            next = now;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::BundleArgs;
    use crate::wire::{LifecycleCmd, ProfileCmd};

    fn simulation() -> (Simulation, Receiver<Body>) {
        let bundle = ConfigBundle::load(&BundleArgs::default()).unwrap();
        let sim = LiveSession::new(&bundle, &ServerOptions::default()).unwrap();
        let mut s = Simulation {
            sim,
            session_id: "s".into(),
            clients: BTreeMap::new(),
        };
        let (control, control_rx) = bounded(16);
        let (state, state_drain) = bounded(STATE_QUEUE_DEPTH);
        s.handle(Inbound::Connect { id: 1, control, state, state_drain });
        assert!(matches!(control_rx.try_recv().unwrap(), Body::Ack(Ack { role: Role::Steering, .. })));
        (s, control_rx)
    }

    fn msg(seq: u64, body: Body) -> WireMessage {
        WireMessage { v: WIRE_VERSION, session_id: "s".into(), seq, body }
    }

    #[test]
    fn profile_rejected_while_grasping() {
        let (mut s, rx) = simulation();
        s.command(1, msg(1, Body::LifecycleCmd(LifecycleCmd { action: Lifecycle::Start })));
        assert!(matches!(rx.try_recv().unwrap(), Body::Ack(Ack { changed: true, .. })));
        let mut ticks = 0;
        while s.sim.phase() != Phase::Grasping {
            s.sim.tick().unwrap();
            ticks += 1;
            assert!(ticks < 20_000, "no grasp with a static hand");
        }
        s.command(1, msg(2, Body::ProfileCmd(ProfileCmd { profile: Profile::Cooperative })));
        match rx.try_recv().unwrap() {
            Body::Error(e) => assert_eq!((e.code, e.ref_seq), (ErrorCode::Rejected, Some(2))),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(s.sim.profile(), Profile::Authoritative);
    }

    #[test]
    fn full_state_queue_drops_oldest() {
        let (mut s, _rx) = simulation();
        for _ in 0..5 {
            s.broadcast();
        }
        let client = &s.clients[&1];
        assert_eq!(client.dropped, 3);
        let frames: Vec<_> = client.state_drain.try_iter().collect();
        assert_eq!(frames.len(), STATE_QUEUE_DEPTH);
        match &frames[1] {
            Body::StateUpdate(u) => assert_eq!(u.dropped, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn paused_snapshot_follows_commanded_hand() {
        let (mut s, _rx) = simulation();
        let before = s.sim.snapshot().unwrap();
        let mut hand = s.sim.hand;
        hand.position.y += 0.2;
        s.sim.set_hand(hand);
        let after = s.sim.snapshot().unwrap();
        assert_eq!(after.tick, 0);
        assert_eq!(after.hand_pose, PoseMsg::from_pose(&hand));
        assert_eq!(before.q, after.q);
    }
}
