//! The long-running node: beacon sender and listener, session listener and
//! outbox spooler, all stopped by one shutdown flag.

use std::collections::HashMap;
use std::io;
use std::net::{Ipv4Addr, SocketAddr, SocketAddrV4, TcpListener, TcpStream, UdpSocket};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use log::{debug, error, info, warn};
use oppdtn_core::EndpointId;
use socket2::{Domain, Protocol, Socket, Type};
use thiserror::Error;

use crate::beacon::Beacon;
use crate::node::Node;
use crate::session::run_session;

const POLL: Duration = Duration::from_millis(100);

#[derive(Debug, Error)]
pub enum DaemonError {
    #[error("cannot listen on port {port}: {source}")]
    Listen { port: u16, source: io::Error },
    #[error("cannot bind beacon port {port}: {source}")]
    Beacon { port: u16, source: io::Error },
    #[error("outbox scan failed: {0}")]
    Spool(io::Error),
}

#[derive(Debug, Clone, Copy)]
enum PeerStatus {
    Active,
    HoldUntil(Instant),
}

struct Shared {
    node: Arc<Node>,
    shutdown: Arc<AtomicBool>,
    peers: Mutex<HashMap<EndpointId, PeerStatus>>,
}

impl Shared {
    fn running(&self) -> bool {
        !self.shutdown.load(Ordering::SeqCst)
    }

    /// Marks `peer` active unless it is busy or held off.
    fn claim(&self, peer: &EndpointId) -> bool {
        let mut peers = self.peers.lock().unwrap_or_else(|e| e.into_inner());
        match peers.get(peer) {
            Some(PeerStatus::Active) => false,
            Some(PeerStatus::HoldUntil(t)) if Instant::now() < *t => false,
            _ => {
                peers.insert(peer.clone(), PeerStatus::Active);
                true
            }
        }
    }

    fn release(&self, peer: &EndpointId, hold: bool) {
        let mut peers = self.peers.lock().unwrap_or_else(|e| e.into_inner());
        if hold {
            let until = Instant::now() + self.node.config.holdoff;
            peers.insert(peer.clone(), PeerStatus::HoldUntil(until));
        } else {
            peers.remove(peer);
        }
    }
}

fn beacon_socket(port: u16) -> io::Result<UdpSocket> {
    let s = Socket::new(Domain::IPV4, Type::DGRAM, Some(Protocol::UDP))?;
    s.set_reuse_address(true)?;
    #[cfg(unix)]
    s.set_reuse_port(true)?;
    s.set_broadcast(true)?;
    s.bind(&SocketAddr::V4(SocketAddrV4::new(Ipv4Addr::UNSPECIFIED, port)).into())?;
    let s: UdpSocket = s.into();
    s.set_read_timeout(Some(POLL))?;
    Ok(s)
}

/// Runs until `shutdown` is set, then persists the store.
pub fn run(node: Arc<Node>, shutdown: Arc<AtomicBool>) -> Result<(), DaemonError> {
    let cfg = node.config.clone();
    let listener = TcpListener::bind((Ipv4Addr::UNSPECIFIED, cfg.listen_port))
        .map_err(|source| DaemonError::Listen { port: cfg.listen_port, source })?;
    listener
        .set_nonblocking(true)
        .map_err(|source| DaemonError::Listen { port: cfg.listen_port, source })?;
    let udp = beacon_socket(cfg.beacon_port).map_err(|source| DaemonError::Beacon { port: cfg.beacon_port, source })?;
    node.tidy();
    node.scan_outbox().map_err(DaemonError::Spool)?;
    info!(
        "{} up: router {}, sessions on {}, beacons on {}",
        cfg.eid, cfg.router, cfg.listen_port, cfg.beacon_port
    );

    let shared = Arc::new(Shared {
        node: node.clone(),
        shutdown,
        peers: Mutex::new(HashMap::new()),
    });
    let mut workers = Vec::new();
    {
        let shared = shared.clone();
        let udp = udp.try_clone().expect("clone beacon socket");
        workers.push(thread::spawn(move || beacon_sender(&shared, &udp)));
    }
    {
        let shared = shared.clone();
        workers.push(thread::spawn(move || beacon_listener(&shared, &udp)));
    }
    {
        let shared = shared.clone();
        workers.push(thread::spawn(move || spooler(&shared)));
    }
    while shared.running() {
        match listener.accept() {
            Ok((stream, addr)) => {
                let shared = shared.clone();
                thread::spawn(move || respond(&shared, stream, addr));
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(POLL),
            Err(e) => {
                warn!("accept failed: {e}");
                thread::sleep(POLL);
            }
        }
    }
    for w in workers {
        let _ = w.join();
    }
    let st = node.lock();
    if let Err(e) = node.persist(&st) {
        error!("final store snapshot failed: {e}");
    }
    info!("{} stopped", cfg.eid);
    Ok(())
}

fn sleep_while_running(shared: &Shared, total: Duration) {
    let end = Instant::now() + total;
    while shared.running() && Instant::now() < end {
        thread::sleep(POLL.min(end.saturating_duration_since(Instant::now())));
    }
}

fn beacon_sender(shared: &Shared, udp: &UdpSocket) {
    let cfg = &shared.node.config;
    let bytes = Beacon {
        eid: cfg.eid.clone(),
        port: cfg.listen_port,
    }
    .encode();
    let target = SocketAddr::new(cfg.beacon_addr, cfg.beacon_port);
    while shared.running() {
        if let Err(e) = udp.send_to(&bytes, target) {
            warn!("beacon send to {target} failed: {e}");
        }
        sleep_while_running(shared, cfg.beacon_interval);
    }
}

fn beacon_listener(shared: &Arc<Shared>, udp: &UdpSocket) {
    let me = shared.node.eid().clone();
    let mut buf = [0u8; 1024];
    while shared.running() {
        let (n, from) = match udp.recv_from(&mut buf) {
            Ok(r) => r,
            Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => continue,
            Err(e) => {
                warn!("beacon receive failed: {e}");
                thread::sleep(POLL);
                continue;
            }
        };
        let Some(beacon) = Beacon::decode(&buf[..n]) else {
            continue;
        };
        // The smaller id initiates; the other side waits to be called.
        if beacon.eid == me || me > beacon.eid {
            continue;
        }
        if !shared.claim(&beacon.eid) {
            continue;
        }
        let addr = SocketAddr::new(from.ip(), beacon.port);
        debug!("discovered {} at {addr}", beacon.eid);
        let shared = shared.clone();
        thread::spawn(move || initiate(&shared, beacon.eid, addr));
    }
}

fn configure(stream: &TcpStream, timeout: Duration) -> io::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_read_timeout(Some(timeout))?;
    stream.set_write_timeout(Some(timeout))?;
    stream.set_nodelay(true)
}

fn initiate(shared: &Shared, peer: EndpointId, addr: SocketAddr) {
    let timeout = shared.node.config.session_timeout;
    let stream = match TcpStream::connect_timeout(&addr, timeout).and_then(|s| configure(&s, timeout).map(|_| s)) {
        Ok(s) => s,
        Err(e) => {
            debug!("connect to {peer} at {addr} failed: {e}");
            shared.release(&peer, false);
            return;
        }
    };
    let reader = match stream.try_clone() {
        Ok(r) => r,
        Err(e) => {
            warn!("{e}");
            shared.release(&peer, false);
            return;
        }
    };
    if let Err(e) = run_session(&shared.node, reader, stream, Some(&peer)) {
        warn!("session with {peer} aborted: {e}");
    }
    shared.release(&peer, true);
}

fn respond(shared: &Shared, stream: TcpStream, addr: SocketAddr) {
    let timeout = shared.node.config.session_timeout;
    let reader = match configure(&stream, timeout).and_then(|_| stream.try_clone()) {
        Ok(r) => r,
        Err(e) => {
            warn!("session from {addr}: {e}");
            return;
        }
    };
    match run_session(&shared.node, reader, stream, None) {
        Ok(out) => {
            if let Some(peer) = out.peer {
                shared.release(&peer, true);
            }
        }
        Err(e) => warn!("session from {addr} aborted: {e}"),
    }
}

fn spooler(shared: &Shared) {
    while shared.running() {
        if let Err(e) = shared.node.scan_outbox() {
            warn!("outbox scan failed: {e}");
        }
        sleep_while_running(shared, shared.node.config.spool_interval);
    }
}
