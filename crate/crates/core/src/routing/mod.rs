//! Routing agents and the encounter decision shared by the simulator and
//! the live node.
//!
//! An encounter runs in three steps on both sides: a local update
//! ([`Agent::contact_start`]), an exchange of [`RoutingMeta`] values, and
//! ingestion of the peer's meta ([`Agent::on_meta`]). Forwarding decisions
//! use the two exchanged metas only, so either side can evaluate them.

pub mod dlife;
pub mod epidemic;
pub mod prophet;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use dlife::{DlifeError, DlifeParams, DlifeState};
use prophet::{PredictabilityTable, ProphetParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RouterKind {
    Dlife,
    Prophet,
    Epidemic,
}

impl RouterKind {
    pub fn name(&self) -> &'static str {
        match self {
            RouterKind::Dlife => "dlife",
            RouterKind::Prophet => "prophet",
            RouterKind::Epidemic => "epidemic",
        }
    }

    /// Tag byte used in the RoutingMeta wire encoding.
    pub fn wire_tag(&self) -> u8 {
        match self {
            RouterKind::Dlife => 0x01,
            RouterKind::Prophet => 0x02,
            RouterKind::Epidemic => 0x03,
        }
    }

    pub fn from_wire_tag(tag: u8) -> Option<Self> {
        match tag {
            0x01 => Some(RouterKind::Dlife),
            0x02 => Some(RouterKind::Prophet),
            0x03 => Some(RouterKind::Epidemic),
            _ => None,
        }
    }
}

impl fmt::Display for RouterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RouterKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dlife" => Ok(RouterKind::Dlife),
            "prophet" => Ok(RouterKind::Prophet),
            "epidemic" => Ok(RouterKind::Epidemic),
            other => Err(format!("unknown router {other:?} (dlife|prophet|epidemic)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RouterParams {
    pub dlife: DlifeParams,
    pub prophet: ProphetParams,
}

/// Routing state a node discloses at an encounter.
#[derive(Debug, Clone, PartialEq)]
pub enum RoutingMeta<K> {
    Dlife {
        importance: f64,
        weights: BTreeMap<K, f64>,
    },
    Prophet {
        predictability: BTreeMap<K, f64>,
    },
    Epidemic,
}

impl<K: Ord> RoutingMeta<K> {
    pub fn kind(&self) -> RouterKind {
        match self {
            RoutingMeta::Dlife { .. } => RouterKind::Dlife,
            RoutingMeta::Prophet { .. } => RouterKind::Prophet,
            RoutingMeta::Epidemic => RouterKind::Epidemic,
        }
    }
}

fn lookup<K: Ord>(map: &BTreeMap<K, f64>, key: &K) -> f64 {
    map.get(key).copied().unwrap_or(0.0)
}

/// Whether the holder of a bundle for `dest` should hand a copy to the
/// receiver. Nodes running different routers never replicate to each other
/// (direct delivery is handled separately).
pub fn should_replicate<K: Ord>(holder: &RoutingMeta<K>, receiver: &RoutingMeta<K>, dest: &K) -> bool {
    match (holder, receiver) {
        (
            RoutingMeta::Dlife {
                importance: my_i,
                weights: my_w,
            },
            RoutingMeta::Dlife {
                importance: peer_i,
                weights: peer_w,
            },
        ) => dlife::should_replicate(lookup(my_w, dest), lookup(peer_w, dest), *my_i, *peer_i),
        (
            RoutingMeta::Prophet { predictability: mine },
            RoutingMeta::Prophet {
                predictability: theirs,
            },
        ) => prophet::should_replicate(lookup(mine, dest), lookup(theirs, dest)),
        (RoutingMeta::Epidemic, RoutingMeta::Epidemic) => true,
        _ => false,
    }
}

/// Per-node routing state.
#[derive(Debug, Clone)]
pub enum Agent<K> {
    Dlife(DlifeState<K>),
    Prophet(PredictabilityTable<K>),
    Epidemic,
}

impl<K: Ord + Clone + fmt::Debug> Agent<K> {
    pub fn new(kind: RouterKind, params: &RouterParams, me: K, start_s: f64) -> Self {
        match kind {
            RouterKind::Dlife => Agent::Dlife(DlifeState::new(params.dlife, start_s)),
            RouterKind::Prophet => Agent::Prophet(PredictabilityTable::new(params.prophet, me, start_s)),
            RouterKind::Epidemic => Agent::Epidemic,
        }
    }

    pub fn kind(&self) -> RouterKind {
        match self {
            Agent::Dlife(_) => RouterKind::Dlife,
            Agent::Prophet(_) => RouterKind::Prophet,
            Agent::Epidemic => RouterKind::Epidemic,
        }
    }

    /// Applies time-driven updates (dLife sample rolls) up to `now_s`.
    pub fn advance_to(&mut self, now_s: f64) {
        if let Agent::Dlife(s) = self {
            s.advance_to(now_s);
        }
    }

    pub fn contact_start(&mut self, peer: &K, now_s: f64) -> Result<(), DlifeError> {
        match self {
            Agent::Dlife(s) => s.contact_start(peer, now_s),
            Agent::Prophet(t) => {
                t.age(now_s);
                t.direct(peer);
                Ok(())
            }
            Agent::Epidemic => Ok(()),
        }
    }

    pub fn contact_end(&mut self, peer: &K, now_s: f64) -> Result<(), DlifeError> {
        match self {
            Agent::Dlife(s) => s.contact_end(peer, now_s),
            _ => Ok(()),
        }
    }

    pub fn meta(&mut self, now_s: f64) -> RoutingMeta<K> {
        match self {
            Agent::Dlife(s) => RoutingMeta::Dlife {
                importance: s.importance(),
                weights: s.weights(now_s),
            },
            Agent::Prophet(t) => {
                t.age(now_s);
                RoutingMeta::Prophet {
                    predictability: t.entries().clone(),
                }
            }
            Agent::Epidemic => RoutingMeta::Epidemic,
        }
    }

    /// Local half of an encounter before the exchange: catch up on sample
    /// rolls, record the contact start, and produce the meta to disclose.
    pub fn begin_encounter(&mut self, peer: &K, now_s: f64) -> Result<RoutingMeta<K>, DlifeError> {
        self.advance_to(now_s);
        self.contact_start(peer, now_s)?;
        Ok(self.meta(now_s))
    }

    /// Folds the peer's disclosed meta into local state.
    pub fn on_meta(&mut self, peer: &K, meta: &RoutingMeta<K>, now_s: f64) {
        match (self, meta) {
            (Agent::Dlife(s), RoutingMeta::Dlife { importance, weights }) => {
                s.record_report(peer, *importance, weights.len(), now_s)
            }
            (Agent::Prophet(t), RoutingMeta::Prophet { predictability }) => {
                t.age(now_s);
                t.transitive(peer, predictability)
            }
            _ => {}
        }
    }
}

/// A stored bundle as seen by the transfer planner.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate<K, I> {
    pub id: I,
    pub dest: K,
    pub creation_ms: u64,
    pub expiry_ms: u64,
}

/// Orders the bundles a holder sends to `receiver` in one encounter:
/// bundles destined to the receiver first, then those `decide` approves,
/// each group by creation time then id. Expired bundles and bundles the
/// receiver already knows (its summary vector) are left out.
pub fn plan_transfers<K: PartialEq, I: Ord>(
    candidates: impl IntoIterator<Item = Candidate<K, I>>,
    receiver: &K,
    now_s: f64,
    receiver_knows: impl Fn(&I) -> bool,
    mut decide: impl FnMut(&K) -> bool,
) -> Vec<I> {
    let now_ms = now_s * 1000.0;
    let mut deliveries = Vec::new();
    let mut replicas = Vec::new();
    for c in candidates {
        if c.expiry_ms as f64 <= now_ms || !epidemic::should_replicate(&receiver_knows, &c.id) {
            continue;
        }
        if c.dest == *receiver {
            deliveries.push((c.creation_ms, c.id));
        } else if decide(&c.dest) {
            replicas.push((c.creation_ms, c.id));
        }
    }
    deliveries.sort();
    replicas.sort();
    deliveries
        .into_iter()
        .chain(replicas)
        .map(|(_, id)| id)
        .collect()
}

/// [`plan_transfers`] with decisions taken from the two exchanged metas.
pub fn plan_with_meta<K: Ord, I: Ord>(
    candidates: impl IntoIterator<Item = Candidate<K, I>>,
    holder: &RoutingMeta<K>,
    receiver_meta: &RoutingMeta<K>,
    receiver: &K,
    now_s: f64,
    receiver_knows: impl Fn(&I) -> bool,
) -> Vec<I> {
    plan_transfers(candidates, receiver, now_s, receiver_knows, |dest| {
        should_replicate(holder, receiver_meta, dest)
    })
}
