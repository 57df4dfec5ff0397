//! Node state shared by the daemon threads. Every store or routing-table
//! mutation goes through the one `Mutex<NodeState>`.

use std::collections::BTreeSet;
use std::fs;
use std::io;
use std::net::{IpAddr, Ipv4Addr};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use log::{debug, info, warn};
use oppdtn_core::routing::{Agent, Candidate, RouterParams};
use oppdtn_core::store::{Refusal, StoreEntry};
use oppdtn_core::{Bundle, BundleId, BundleStore, EndpointId, RouterKind};
use thiserror::Error;

use crate::persist::{write_atomic, PersistError, Snapshot};
use crate::wire::{Offer, Summary};

pub trait Clock: Send + Sync {
    /// Seconds since the Unix epoch.
    fn now_s(&self) -> f64;
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now_s(&self) -> f64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs_f64())
            .unwrap_or(0.0)
    }
}

/// A clock that only moves when told to.
#[derive(Debug, Clone, Default)]
pub struct ManualClock(Arc<AtomicU64>);

impl ManualClock {
    pub fn new(now_s: f64) -> Self {
        ManualClock(Arc::new(AtomicU64::new(now_s.to_bits())))
    }

    pub fn set(&self, now_s: f64) {
        self.0.store(now_s.to_bits(), Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now_s(&self) -> f64 {
        f64::from_bits(self.0.load(Ordering::SeqCst))
    }
}

#[derive(Debug, Clone)]
pub struct NodeConfig {
    pub eid: EndpointId,
    pub router: RouterKind,
    pub params: RouterParams,
    pub listen_port: u16,
    pub beacon_port: u16,
    /// Where beacons are sent (port is `beacon_port`).
    pub beacon_addr: IpAddr,
    pub store_dir: PathBuf,
    pub inbox_dir: PathBuf,
    pub outbox_dir: PathBuf,
    pub ttl_s: u64,
    pub capacity_bytes: u64,
    pub max_payload: u64,
    pub beacon_interval: Duration,
    pub session_timeout: Duration,
    pub holdoff: Duration,
    pub spool_interval: Duration,
}

impl NodeConfig {
    pub fn new(eid: EndpointId, router: RouterKind, store: PathBuf, inbox: PathBuf, outbox: PathBuf) -> Self {
        NodeConfig {
            eid,
            router,
            params: RouterParams::default(),
            listen_port: 4556,
            beacon_port: 4555,
            beacon_addr: IpAddr::V4(Ipv4Addr::BROADCAST),
            store_dir: store,
            inbox_dir: inbox,
            outbox_dir: outbox,
            ttl_s: 86_400,
            capacity_bytes: 10_000_000,
            max_payload: 1_000_000,
            beacon_interval: Duration::from_secs(5),
            session_timeout: Duration::from_secs(30),
            holdoff: Duration::from_secs(60),
            spool_interval: Duration::from_millis(500),
        }
    }
}

#[derive(Debug, Error)]
pub enum NodeError {
    #[error("cannot prepare {path}: {source}")]
    Dir { path: PathBuf, source: io::Error },
    #[error("cannot load store snapshot: {0}")]
    Snapshot(#[from] PersistError),
}

pub struct NodeState {
    pub store: BundleStore<Bundle>,
    pub agent: Agent<EndpointId>,
    next_seq: u32,
    /// Outbox file names already turned into bundles but not yet moved.
    spooled: BTreeSet<String>,
}

/// What happened to a bundle handed to [`Node::accept`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Accepted {
    Delivered,
    Stored,
    Refused(Refusal),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SpoolOutcome {
    Sent(BundleId),
    /// Bundle was created before a restart; only the file move was redone.
    Resumed,
    Rejected(&'static str),
}

pub struct Node {
    pub config: NodeConfig,
    clock: Arc<dyn Clock>,
    state: Mutex<NodeState>,
}

impl Node {
    /// Creates the directories and reloads the persisted store.
    pub fn open(config: NodeConfig, clock: Arc<dyn Clock>) -> Result<Node, NodeError> {
        for dir in [
            config.store_dir.clone(),
            config.inbox_dir.clone(),
            config.outbox_dir.join("sent"),
            config.outbox_dir.join("rejected"),
        ] {
            fs::create_dir_all(&dir).map_err(|source| NodeError::Dir { path: dir.clone(), source })?;
        }
        let snap = Snapshot::load(&config.store_dir)?;
        let now = clock.now_s();
        let mut store = BundleStore::new(config.capacity_bytes);
        for id in &snap.delivered {
            store.mark_delivered(id);
        }
        for b in snap.bundles {
            let id = b.id.clone();
            if let Err(r) = store.insert(StoreEntry { bundle: b, received_s: now, from: None }, now) {
                debug!("snapshot bundle {id} not restored: {r:?}");
            }
        }
        let agent = Agent::new(config.router, &config.params, config.eid.clone(), now);
        info!(
            "{} restored {} bundles, {} delivered ids",
            config.eid,
            store.len(),
            snap.delivered.len()
        );
        let node = Node {
            config,
            clock,
            state: Mutex::new(NodeState {
                store,
                agent,
                next_seq: snap.next_seq,
                spooled: snap.spooled.into_iter().collect(),
            }),
        };
        Ok(node)
    }

    /// Replaces the routing agent, e.g. to install prepared tables.
    pub fn with_agent(self, agent: Agent<EndpointId>) -> Self {
        self.lock().agent = agent;
        self
    }

    pub fn eid(&self) -> &EndpointId {
        &self.config.eid
    }

    pub fn now_s(&self) -> f64 {
        self.clock.now_s()
    }

    pub fn lock(&self) -> MutexGuard<'_, NodeState> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn snapshot(&self, st: &NodeState) -> Snapshot {
        let now = self.now_s();
        Snapshot {
            next_seq: st.next_seq,
            delivered: st.store.delivered_ids().cloned().collect(),
            spooled: st.spooled.iter().cloned().collect(),
            bundles: st.store.iter_live(now).map(|e| e.bundle.clone()).collect(),
        }
    }

    pub fn persist(&self, st: &NodeState) -> io::Result<()> {
        self.snapshot(st).save(&self.config.store_dir)
    }

    fn persist_logged(&self, st: &NodeState) {
        if let Err(e) = self.persist(st) {
            warn!("store snapshot failed: {e}");
        }
    }

    /// Live stored bundles plus delivered ids, as advertised to a peer.
    pub fn summary(&self, st: &NodeState, now_s: f64) -> Summary {
        Summary {
            offers: st
                .store
                .iter_live(now_s)
                .map(|e| Offer {
                    id: e.bundle.id.clone(),
                    dest: e.bundle.dest.clone(),
                    ttl_s: e.bundle.ttl_s,
                })
                .collect(),
            delivered: st.store.delivered_ids().cloned().collect(),
        }
    }

    /// Creates a bundle from local application data.
    pub fn submit(&self, st: &mut NodeState, dest: EndpointId, payload: Vec<u8>) -> Result<BundleId, Refusal> {
        let now = self.now_s();
        let id = BundleId {
            source: self.config.eid.clone(),
            creation_ms: (now * 1000.0) as u64,
            seq: st.next_seq,
        };
        st.next_seq = st.next_seq.wrapping_add(1);
        let bundle = Bundle::with_payload(id.clone(), dest, self.config.ttl_s, payload);
        st.store
            .insert(StoreEntry { bundle, received_s: now, from: None }, now)
            .map(|_| id)
    }

    /// Takes in a bundle received from `from`. Bundles for this node go to
    /// the inbox; the rest are stored for forwarding.
    pub fn accept(&self, st: &mut NodeState, bundle: Bundle, from: &EndpointId) -> io::Result<Accepted> {
        let now = self.now_s();
        if bundle.is_expired(now) {
            return Ok(Accepted::Refused(Refusal::Expired));
        }
        if bundle.dest == self.config.eid {
            if st.store.is_delivered(&bundle.id) {
                return Ok(Accepted::Refused(Refusal::Duplicate));
            }
            let path = self.config.inbox_dir.join(inbox_name(&bundle.id));
            write_atomic(&path, bundle.payload.as_deref().unwrap_or(&[]))?;
            st.store.mark_delivered(&bundle.id);
            info!("delivered {} from {from} to {}", bundle.id, path.display());
            self.persist(st)?;
            return Ok(Accepted::Delivered);
        }
        let id = bundle.id.clone();
        let entry = StoreEntry {
            bundle,
            received_s: now,
            from: Some(from.clone()),
        };
        match st.store.insert(entry, now) {
            Ok(_) => {
                debug!("stored {id} from {from}");
                self.persist(st)?;
                Ok(Accepted::Stored)
            }
            Err(r) => {
                debug!("refused {id} from {from}: {r:?}");
                Ok(Accepted::Refused(r))
            }
        }
    }

    /// Candidates this node would offer, for transfer planning.
    pub fn candidates(summary: &Summary) -> impl Iterator<Item = Candidate<EndpointId, BundleId>> + '_ {
        summary.offers.iter().map(|o| Candidate {
            id: o.id.clone(),
            dest: o.dest.clone(),
            creation_ms: o.id.creation_ms,
            expiry_ms: o.expiry_ms(),
        })
    }

    /// Turns every file in the outbox into a bundle, moving it to `sent/`
    /// or `rejected/`.
    pub fn scan_outbox(&self) -> io::Result<Vec<(String, SpoolOutcome)>> {
        let mut names = Vec::new();
        for entry in fs::read_dir(&self.config.outbox_dir)? {
            let entry = entry?;
            if !entry.file_type()?.is_file() {
                continue;
            }
            if let Some(name) = entry.file_name().to_str() {
                if !name.starts_with('.') {
                    names.push(name.to_string());
                }
            }
        }
        names.sort();
        let mut out = Vec::new();
        for name in names {
            let outcome = self.spool_one(&name)?;
            out.push((name, outcome));
        }
        Ok(out)
    }

    fn spool_one(&self, name: &str) -> io::Result<SpoolOutcome> {
        let dir = &self.config.outbox_dir;
        let path = dir.join(name);
        let mut st = self.lock();
        let outcome = if st.spooled.contains(name) {
            // Bundle created before a crash; only the move was lost.
            None
        } else {
            Some(match parse_spool_name(name, &self.config.eid) {
                Err(reason) => SpoolOutcome::Rejected(reason),
                Ok(dest) => {
                    let payload = fs::read(&path)?;
                    if payload.is_empty() {
                        SpoolOutcome::Rejected("empty payload")
                    } else if payload.len() as u64 > self.config.max_payload {
                        SpoolOutcome::Rejected("payload too large")
                    } else {
                        match self.submit(&mut st, dest, payload) {
                            Ok(id) => {
                                st.spooled.insert(name.to_string());
                                self.persist(&st)?;
                                SpoolOutcome::Sent(id)
                            }
                            Err(Refusal::Capacity) => SpoolOutcome::Rejected("store full"),
                            Err(_) => SpoolOutcome::Rejected("refused by store"),
                        }
                    }
                }
            })
        };
        let sub = match outcome {
            Some(SpoolOutcome::Rejected(_)) => "rejected",
            _ => "sent",
        };
        fs::rename(&path, dir.join(sub).join(name))?;
        st.spooled.remove(name);
        match &outcome {
            Some(SpoolOutcome::Sent(id)) => info!("outbox {name} -> bundle {id}"),
            Some(SpoolOutcome::Rejected(r)) => warn!("outbox {name} rejected: {r}"),
            _ => {}
        }
        Ok(outcome.unwrap_or(SpoolOutcome::Resumed))
    }

    /// Drops spool names whose file is gone and persists the store.
    pub fn tidy(&self) {
        let mut st = self.lock();
        let dir = self.config.outbox_dir.clone();
        st.spooled.retain(|n| dir.join(n).exists());
        self.persist_logged(&st);
    }
}

/// `<dest-name>.<seq>` where `seq` is decimal.
pub fn parse_spool_name(name: &str, me: &EndpointId) -> Result<EndpointId, &'static str> {
    let (dest, seq) = name.rsplit_once('.').ok_or("missing .<seq> suffix")?;
    if seq.is_empty() || !seq.bytes().all(|b| b.is_ascii_digit()) {
        return Err("sequence suffix is not a number");
    }
    let dest = EndpointId::parse(&format!("dtn://{dest}")).map_err(|_| "bad destination name")?;
    if &dest == me {
        return Err("destination is this node");
    }
    Ok(dest)
}

/// Inbox file name of a delivered bundle: `<source-name>.<creation_ms>.<seq>`.
pub fn inbox_name(id: &BundleId) -> String {
    let src: String = id
        .source
        .name()
        .chars()
        .map(|c| if c == '/' || c == '\\' { '_' } else { c })
        .collect();
    format!("{src}.{}.{}", id.creation_ms, id.seq)
}

pub fn outbox_path(outbox: &Path, dest_name: &str, seq: u64) -> PathBuf {
    outbox.join(format!("{dest_name}.{seq}"))
}
