//! Per-node bundle buffer for store-carry-and-forward.
//!
//! Capacity policy: an incoming bundle that does not fit (after discounting
//! expired entries) is refused; stored bundles are never evicted. Only the
//! destination remembers delivered ids, so relays may re-accept a bundle
//! after their own copy expired.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Debug;

use crate::types::{Bundle, BundleId, EndpointId};

/// What the store needs to know about a bundle.
pub trait StoredBundle {
    type Key: Ord + Clone + Debug;
    /// Identity of the node a bundle was received from.
    type Peer: Clone + Debug;

    fn key(&self) -> Self::Key;
    fn size_bytes(&self) -> u64;
    fn expiry_ms(&self) -> u64;
}

impl StoredBundle for Bundle {
    type Key = BundleId;
    type Peer = EndpointId;

    fn key(&self) -> BundleId {
        self.id.clone()
    }

    fn size_bytes(&self) -> u64 {
        self.size_bytes
    }

    fn expiry_ms(&self) -> u64 {
        Bundle::expiry_ms(self)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoreEntry<B: StoredBundle> {
    pub bundle: B,
    pub received_s: f64,
    /// `None` for locally created bundles.
    pub from: Option<B::Peer>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Refusal {
    Duplicate,
    Capacity,
    Expired,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoreStats<K> {
    pub stored_count: usize,
    pub stored_bytes: u64,
    pub expired_total: u64,
    pub refused_total: u64,
    pub delivered_ids: BTreeSet<K>,
}

fn expired_at(expiry_ms: u64, now_s: f64) -> bool {
    now_s * 1000.0 >= expiry_ms as f64
}

#[derive(Debug, Clone)]
pub struct BundleStore<B: StoredBundle> {
    capacity_bytes: u64,
    entries: BTreeMap<B::Key, StoreEntry<B>>,
    by_expiry: BTreeSet<(u64, B::Key)>,
    stored_bytes: u64,
    expired_total: u64,
    refused_total: u64,
    delivered: BTreeSet<B::Key>,
}

impl<B: StoredBundle> BundleStore<B> {
    /// `capacity_bytes == 0` means unlimited.
    pub fn new(capacity_bytes: u64) -> Self {
        BundleStore {
            capacity_bytes,
            entries: BTreeMap::new(),
            by_expiry: BTreeSet::new(),
            stored_bytes: 0,
            expired_total: 0,
            refused_total: 0,
            delivered: BTreeSet::new(),
        }
    }

    pub fn capacity_bytes(&self) -> u64 {
        self.capacity_bytes
    }

    /// Inserts `entry`, returning the ids of expired entries purged to make
    /// room. A refusal leaves the store untouched apart from the refusal
    /// counter.
    pub fn insert(&mut self, entry: StoreEntry<B>, now_s: f64) -> Result<Vec<B::Key>, Refusal> {
        let key = entry.bundle.key();
        let refusal = if self.entries.contains_key(&key) || self.delivered.contains(&key) {
            Some(Refusal::Duplicate)
        } else if expired_at(entry.bundle.expiry_ms(), now_s) {
            Some(Refusal::Expired)
        } else if self.capacity_bytes > 0
            && self.live_bytes(now_s) + entry.bundle.size_bytes() > self.capacity_bytes
        {
            Some(Refusal::Capacity)
        } else {
            None
        };
        if let Some(r) = refusal {
            self.refused_total += 1;
            return Err(r);
        }
        let purged = self.purge_expired(now_s);
        self.stored_bytes += entry.bundle.size_bytes();
        self.by_expiry.insert((entry.bundle.expiry_ms(), key.clone()));
        self.entries.insert(key, entry);
        Ok(purged)
    }

    fn live_bytes(&self, now_s: f64) -> u64 {
        let dead: u64 = self
            .by_expiry
            .iter()
            .take_while(|(exp, _)| expired_at(*exp, now_s))
            .map(|(_, k)| self.entries[k].bundle.size_bytes())
            .sum();
        self.stored_bytes - dead
    }

    /// Removes every entry with `expiry <= now_s`.
    pub fn purge_expired(&mut self, now_s: f64) -> Vec<B::Key> {
        let mut out = Vec::new();
        while let Some((exp, _)) = self.by_expiry.first() {
            if !expired_at(*exp, now_s) {
                break;
            }
            let (_, key) = self.by_expiry.pop_first().unwrap();
            let entry = self.entries.remove(&key).expect("expiry index out of sync");
            self.stored_bytes -= entry.bundle.size_bytes();
            self.expired_total += 1;
            out.push(key);
        }
        out
    }

    /// Records `key` as delivered to this node; any stored copy is dropped.
    pub fn mark_delivered(&mut self, key: &B::Key) {
        if !self.delivered.insert(key.clone()) {
            return;
        }
        self.remove(key);
    }

    pub fn remove(&mut self, key: &B::Key) -> Option<StoreEntry<B>> {
        let entry = self.entries.remove(key)?;
        self.by_expiry.remove(&(entry.bundle.expiry_ms(), key.clone()));
        self.stored_bytes -= entry.bundle.size_bytes();
        Some(entry)
    }

    pub fn contains(&self, key: &B::Key) -> bool {
        self.entries.contains_key(key)
    }

    pub fn is_delivered(&self, key: &B::Key) -> bool {
        self.delivered.contains(key)
    }

    /// Stored or delivered: what a peer's summary advertises.
    pub fn knows(&self, key: &B::Key) -> bool {
        self.contains(key) || self.is_delivered(key)
    }

    /// Live (non-expired) entry.
    pub fn get(&self, key: &B::Key, now_s: f64) -> Option<&StoreEntry<B>> {
        self.entries
            .get(key)
            .filter(|e| !expired_at(e.bundle.expiry_ms(), now_s))
    }

    /// Live entries in key order.
    pub fn iter_live(&self, now_s: f64) -> impl Iterator<Item = &StoreEntry<B>> {
        self.entries
            .values()
            .filter(move |e| !expired_at(e.bundle.expiry_ms(), now_s))
    }

    pub fn delivered_ids(&self) -> impl Iterator<Item = &B::Key> {
        self.delivered.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn stored_bytes(&self) -> u64 {
        self.stored_bytes
    }

    pub fn stats(&self) -> StoreStats<B::Key> {
        StoreStats {
            stored_count: self.entries.len(),
            stored_bytes: self.stored_bytes,
            expired_total: self.expired_total,
            refused_total: self.refused_total,
            delivered_ids: self.delivered.clone(),
        }
    }
}
