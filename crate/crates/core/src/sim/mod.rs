//! Deterministic contact-driven simulator.
//!
//! Events are processed in time order; simultaneous events run in the order
//! SampleRoll, ContactDown, ContactUp, MessageCreate, TransferComplete, then
//! by insertion sequence. Transfer queues are built once when a contact comes
//! up: bundles that arrive or are created during the contact wait for the
//! next encounter. A transfer still in flight when the contact goes down is
//! discarded.

pub mod experiment;
pub mod log;
pub mod synth;
pub mod traffic;

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use thiserror::Error;

use crate::contact::ContactEvent;
use crate::routing::dlife::DlifeError;
use crate::routing::{plan_transfers, should_replicate, Agent, Candidate, RouterKind, RouterParams};
use crate::store::{BundleStore, StoreEntry, StoredBundle};
use crate::types::{BundleId, EndpointId};
use log::{LogEvent, LogRecord, RawRunLog};
use traffic::Message;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkModel {
    /// Bytes per second.
    pub bandwidth_bps: f64,
    pub setup_s: f64,
}

impl Default for LinkModel {
    fn default() -> Self {
        LinkModel {
            bandwidth_bps: 250_000.0,
            setup_s: 0.1,
        }
    }
}

impl LinkModel {
    pub fn transfer_s(&self, size_bytes: u64) -> f64 {
        self.setup_s + size_bytes as f64 / self.bandwidth_bps
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("contact references node {index} but the scenario has {nodes} nodes")]
    ContactNode { index: usize, nodes: usize },
    #[error("message {index} references a node outside 0..{nodes} or has source == dest")]
    MessageNode { index: usize, nodes: usize },
    #[error("routing state corrupted: {0}")]
    Routing(#[from] DlifeError),
}

/// Everything one run needs.
#[derive(Debug, Clone)]
pub struct SimSetup<'a> {
    pub nodes: usize,
    /// Normalized contacts.
    pub contacts: &'a [ContactEvent],
    pub messages: &'a [Message],
    pub router: RouterKind,
    pub params: RouterParams,
    pub capacity_bytes: u64,
    pub link: LinkModel,
    pub duration_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct SimBundle {
    rank: u32,
    size: u64,
    expiry_ms: u64,
    dest: usize,
}

impl StoredBundle for SimBundle {
    type Key = u32;
    type Peer = usize;

    fn key(&self) -> u32 {
        self.rank
    }

    fn size_bytes(&self) -> u64 {
        self.size
    }

    fn expiry_ms(&self) -> u64 {
        self.expiry_ms
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EventKind {
    SampleRoll,
    ContactDown(usize),
    ContactUp(usize),
    MessageCreate(u32),
    TransferComplete { contact: usize, dir: usize, token: u64 },
}

impl EventKind {
    fn order(&self) -> u8 {
        match self {
            EventKind::SampleRoll => 0,
            EventKind::ContactDown(_) => 1,
            EventKind::ContactUp(_) => 2,
            EventKind::MessageCreate(_) => 3,
            EventKind::TransferComplete { .. } => 4,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time_s: f64,
    seq: u64,
    kind: EventKind,
}

impl Event {
    fn key(&self) -> (f64, u8, u64) {
        (self.time_s, self.kind.order(), self.seq)
    }
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // Reversed: BinaryHeap is a max-heap and we pop the earliest event.
    fn cmp(&self, other: &Self) -> Ordering {
        let (t1, k1, s1) = self.key();
        let (t2, k2, s2) = other.key();
        t2.total_cmp(&t1).then(k2.cmp(&k1)).then(s2.cmp(&s1))
    }
}

#[derive(Debug, Default)]
struct Direction {
    queue: VecDeque<u32>,
    in_flight: Option<(u32, u64)>,
}

#[derive(Debug)]
struct OpenContact {
    a: usize,
    b: usize,
    dirs: [Direction; 2],
}

impl OpenContact {
    fn endpoints(&self, dir: usize) -> (usize, usize) {
        if dir == 0 {
            (self.a, self.b)
        } else {
            (self.b, self.a)
        }
    }
}

struct Node {
    store: BundleStore<SimBundle>,
    agent: Agent<usize>,
    /// Bitsets over ranks mirroring the store, for fast summary differences.
    stored: Vec<u64>,
    delivered: Vec<u64>,
}

impl Node {
    fn set_stored(&mut self, rank: u32, on: bool) {
        let (w, b) = (rank as usize / 64, rank % 64);
        if on {
            self.stored[w] |= 1 << b;
        } else {
            self.stored[w] &= !(1 << b);
        }
    }
}

struct Engine<'a> {
    setup: &'a SimSetup<'a>,
    /// Message index -> rank in (creation time, bundle id) order.
    rank_of: Vec<u32>,
    /// Rank -> message index.
    message_at: Vec<u32>,
    nodes: Vec<Node>,
    open: Vec<Option<OpenContact>>,
    heap: BinaryHeap<Event>,
    seq: u64,
    tokens: u64,
    records: Vec<LogRecord>,
}

/// Bundle ids of a workload, in message order. Sequence numbers count up
/// per source.
pub fn bundle_ids(messages: &[Message]) -> Vec<BundleId> {
    let mut next_seq: Vec<u32> = Vec::new();
    messages
        .iter()
        .map(|m| {
            if next_seq.len() <= m.source {
                next_seq.resize(m.source + 1, 0);
            }
            let seq = next_seq[m.source];
            next_seq[m.source] += 1;
            BundleId {
                source: EndpointId::for_node(m.source),
                creation_ms: m.creation_ms,
                seq,
            }
        })
        .collect()
}

/// Runs one simulation and returns its event log. The result depends only
/// on `setup`.
pub fn run(setup: &SimSetup<'_>) -> Result<RawRunLog, SimError> {
    for c in setup.contacts {
        if c.a >= setup.nodes || c.b >= setup.nodes {
            return Err(SimError::ContactNode {
                index: c.a.max(c.b),
                nodes: setup.nodes,
            });
        }
    }
    for (i, m) in setup.messages.iter().enumerate() {
        if m.source >= setup.nodes || m.dest >= setup.nodes || m.source == m.dest {
            return Err(SimError::MessageNode {
                index: i,
                nodes: setup.nodes,
            });
        }
    }
    let ids = bundle_ids(setup.messages);
    let mut order: Vec<u32> = (0..setup.messages.len() as u32).collect();
    order.sort_by(|&x, &y| ids[x as usize].creation_ms.cmp(&ids[y as usize].creation_ms).then_with(|| ids[x as usize].cmp(&ids[y as usize])));
    let mut rank_of = vec![0u32; order.len()];
    for (rank, &msg) in order.iter().enumerate() {
        rank_of[msg as usize] = rank as u32;
    }

    let words = setup.messages.len().div_ceil(64);
    let mut engine = Engine {
        setup,
        rank_of,
        message_at: order,
        nodes: (0..setup.nodes)
            .map(|n| Node {
                store: BundleStore::new(setup.capacity_bytes),
                agent: Agent::new(setup.router, &setup.params, n, 0.0),
                stored: vec![0; words],
                delivered: vec![0; words],
            })
            .collect(),
        open: (0..setup.contacts.len()).map(|_| None).collect(),
        heap: BinaryHeap::new(),
        seq: 0,
        tokens: 0,
        records: Vec::new(),
    };
    engine.schedule_all();
    engine.run()?;

    Ok(RawRunLog {
        meta: Vec::new(),
        node_names: (0..setup.nodes).map(EndpointId::for_node).collect(),
        bundle_names: ids.iter().map(|id| id.to_string()).collect(),
        records: engine.records,
    })
}

impl<'a> Engine<'a> {
    fn push(&mut self, time_s: f64, kind: EventKind) {
        self.seq += 1;
        self.heap.push(Event {
            time_s,
            seq: self.seq,
            kind,
        });
    }

    fn log(&mut self, time_s: f64, event: LogEvent, rank: u32, from: Option<usize>, to: Option<usize>) {
        self.records.push(LogRecord {
            time_s,
            event,
            bundle: self.message_at[rank as usize],
            from: from.map(|n| n as u32),
            to: to.map(|n| n as u32),
        });
    }

    fn message(&self, rank: u32) -> &Message {
        &self.setup.messages[self.message_at[rank as usize] as usize]
    }

    fn sim_bundle(&self, rank: u32) -> SimBundle {
        let m = self.message(rank);
        SimBundle {
            rank,
            size: m.size,
            expiry_ms: m.creation_ms + m.ttl_s * 1000,
            dest: m.dest,
        }
    }

    fn schedule_all(&mut self) {
        let duration = self.setup.duration_s;
        let len = self.setup.params.dlife.clock.sample_length_s();
        let mut k = 1u64;
        while k as f64 * len <= duration {
            self.push(k as f64 * len, EventKind::SampleRoll);
            k += 1;
        }
        for (i, c) in self.setup.contacts.iter().enumerate() {
            if c.start_s >= duration {
                continue;
            }
            self.push(c.start_s, EventKind::ContactUp(i));
            self.push(c.end_s.min(duration), EventKind::ContactDown(i));
        }
        for (i, m) in self.setup.messages.iter().enumerate() {
            let t = m.creation_ms as f64 / 1000.0;
            if t < duration {
                self.push(t, EventKind::MessageCreate(self.rank_of[i]));
            }
        }
    }

    fn run(&mut self) -> Result<(), SimError> {
        while let Some(ev) = self.heap.pop() {
            let now = ev.time_s;
            match ev.kind {
                EventKind::SampleRoll => self.sample_roll(now),
                EventKind::ContactUp(c) => self.contact_up(c, now)?,
                EventKind::ContactDown(c) => self.contact_down(c, now)?,
                EventKind::MessageCreate(rank) => self.create(rank, now),
                EventKind::TransferComplete { contact, dir, token } => {
                    self.transfer_complete(contact, dir, token, now)
                }
            }
        }
        Ok(())
    }

    fn purge(&mut self, node: usize, now: f64) {
        let expired = self.nodes[node].store.purge_expired(now);
        self.log_expired(node, expired, now);
    }

    fn log_expired(&mut self, node: usize, ranks: Vec<u32>, now: f64) {
        for rank in ranks {
            self.nodes[node].set_stored(rank, false);
            self.log(now, LogEvent::Expire, rank, Some(node), None);
        }
    }

    fn sample_roll(&mut self, now: f64) {
        for n in 0..self.nodes.len() {
            self.nodes[n].agent.advance_to(now);
            self.purge(n, now);
        }
    }

    fn create(&mut self, rank: u32, now: f64) {
        let m = self.message(rank).clone();
        self.log(now, LogEvent::Create, rank, Some(m.source), Some(m.dest));
        let entry = StoreEntry {
            bundle: self.sim_bundle(rank),
            received_s: now,
            from: None,
        };
        match self.nodes[m.source].store.insert(entry, now) {
            Ok(purged) => {
                self.log_expired(m.source, purged, now);
                self.nodes[m.source].set_stored(rank, true);
            }
            Err(_) => self.log(now, LogEvent::Refuse, rank, Some(m.source), Some(m.source)),
        }
    }

    fn contact_up(&mut self, cid: usize, now: f64) -> Result<(), SimError> {
        let c = self.setup.contacts[cid];
        let (a, b) = (c.a, c.b);
        self.purge(a, now);
        self.purge(b, now);

        let meta_a = self.nodes[a].agent.begin_encounter(&b, now)?;
        let meta_b = self.nodes[b].agent.begin_encounter(&a, now)?;
        self.nodes[a].agent.on_meta(&b, &meta_b, now);
        self.nodes[b].agent.on_meta(&a, &meta_a, now);

        let n = self.nodes.len();
        let mut queues = [VecDeque::new(), VecDeque::new()];
        for (dir, (from, to, holder, receiver)) in [(a, b, &meta_a, &meta_b), (b, a, &meta_b, &meta_a)]
            .into_iter()
            .enumerate()
        {
            let mut cache: Vec<Option<bool>> = vec![None; n];
            let (holder_node, peer_node) = (&self.nodes[from], &self.nodes[to]);
            let mut unknown = Vec::new();
            for (w, word) in holder_node.stored.iter().enumerate() {
                let mut bits = word & !(peer_node.stored[w] | peer_node.delivered[w]);
                while bits != 0 {
                    unknown.push((w * 64) as u32 + bits.trailing_zeros());
                    bits &= bits - 1;
                }
            }
            let candidates = unknown.into_iter().map(|rank| {
                debug_assert!(holder_node.store.contains(&rank) && !peer_node.store.knows(&rank));
                let m = self.message(rank);
                Candidate {
                    id: rank,
                    dest: m.dest,
                    creation_ms: 0,
                    expiry_ms: m.creation_ms + m.ttl_s * 1000,
                }
            });
            // Ranks already follow (creation time, id) order, so ordering by
            // rank alone is equivalent. The bitsets already exclude what the
            // peer knows.
            let plan = plan_transfers(
                candidates,
                &to,
                now,
                |_| false,
                |dest| *cache[*dest].get_or_insert_with(|| should_replicate(holder, receiver, dest)),
            );
            queues[dir] = plan.into();
        }
        let [q0, q1] = queues;
        self.open[cid] = Some(OpenContact {
            a,
            b,
            dirs: [
                Direction {
                    queue: q0,
                    in_flight: None,
                },
                Direction {
                    queue: q1,
                    in_flight: None,
                },
            ],
        });
        self.start_next(cid, 0, now);
        self.start_next(cid, 1, now);
        Ok(())
    }

    fn start_next(&mut self, cid: usize, dir: usize, now: f64) {
        let Some(contact) = self.open[cid].as_ref() else {
            return;
        };
        let (from, to) = contact.endpoints(dir);
        loop {
            let Some(contact) = self.open[cid].as_mut() else {
                return;
            };
            let Some(rank) = contact.dirs[dir].queue.pop_front() else {
                return;
            };
            let Some(entry) = self.nodes[from].store.get(&rank, now) else {
                continue;
            };
            if self.nodes[to].store.knows(&rank) {
                continue;
            }
            let done = now + self.setup.link.transfer_s(entry.bundle.size);
            if done * 1000.0 >= entry.bundle.expiry_ms as f64 {
                continue;
            }
            self.tokens += 1;
            let token = self.tokens;
            self.open[cid].as_mut().unwrap().dirs[dir].in_flight = Some((rank, token));
            self.push(done, EventKind::TransferComplete { contact: cid, dir, token });
            return;
        }
    }

    fn transfer_complete(&mut self, cid: usize, dir: usize, token: u64, now: f64) {
        let Some(contact) = self.open[cid].as_mut() else {
            return;
        };
        let (from, to) = contact.endpoints(dir);
        let rank = match contact.dirs[dir].in_flight {
            Some((rank, t)) if t == token => rank,
            _ => return,
        };
        contact.dirs[dir].in_flight = None;

        let bundle = self.sim_bundle(rank);
        if bundle.dest == to {
            if self.nodes[to].store.is_delivered(&rank) {
                self.log(now, LogEvent::Refuse, rank, Some(from), Some(to));
            } else {
                self.nodes[to].store.mark_delivered(&rank);
                self.nodes[to].delivered[rank as usize / 64] |= 1 << (rank % 64);
                self.log(now, LogEvent::Deliver, rank, Some(from), Some(to));
            }
        } else {
            let entry = StoreEntry {
                bundle,
                received_s: now,
                from: Some(from),
            };
            match self.nodes[to].store.insert(entry, now) {
                Ok(purged) => {
                    self.log_expired(to, purged, now);
                    self.nodes[to].set_stored(rank, true);
                    self.log(now, LogEvent::Relay, rank, Some(from), Some(to));
                }
                Err(_) => self.log(now, LogEvent::Refuse, rank, Some(from), Some(to)),
            }
        }
        self.start_next(cid, dir, now);
    }

    fn contact_down(&mut self, cid: usize, now: f64) -> Result<(), SimError> {
        let Some(contact) = self.open[cid].take() else {
            return Ok(());
        };
        for dir in 0..2 {
            if let Some((rank, _)) = contact.dirs[dir].in_flight {
                let (from, to) = contact.endpoints(dir);
                self.log(now, LogEvent::Abort, rank, Some(from), Some(to));
            }
        }
        let (a, b) = (contact.a, contact.b);
        self.nodes[a].agent.contact_end(&b, now)?;
        self.nodes[b].agent.contact_end(&a, now)?;
        Ok(())
    }
}
