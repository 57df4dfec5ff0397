//! PROPHET delivery predictabilities: direct update on encounter,
//! multiplicative aging, and max-guarded transitivity.

use std::collections::BTreeMap;

/// Largest representable value below 1.0; predictabilities are clamped to it.
pub const MAX_PREDICTABILITY: f64 = 1.0 - f64::EPSILON / 2.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProphetParams {
    pub p_init: f64,
    pub beta: f64,
    pub gamma: f64,
    pub time_unit_s: f64,
}

impl Default for ProphetParams {
    fn default() -> Self {
        ProphetParams {
            p_init: 0.75,
            beta: 0.25,
            gamma: 0.98,
            time_unit_s: 30.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PredictabilityTable<K> {
    params: ProphetParams,
    me: K,
    p: BTreeMap<K, f64>,
    last_aged_s: f64,
}

impl<K: Ord + Clone> PredictabilityTable<K> {
    pub fn new(params: ProphetParams, me: K, now_s: f64) -> Self {
        PredictabilityTable {
            params,
            me,
            p: BTreeMap::new(),
            last_aged_s: now_s,
        }
    }

    pub fn params(&self) -> &ProphetParams {
        &self.params
    }

    pub fn get(&self, dest: &K) -> f64 {
        self.p.get(dest).copied().unwrap_or(0.0)
    }

    pub fn entries(&self) -> &BTreeMap<K, f64> {
        &self.p
    }

    pub fn last_aged_s(&self) -> f64 {
        self.last_aged_s
    }

    /// `P ← P · γ^(elapsed / time_unit)`. Never moves the aging clock back.
    pub fn age(&mut self, now_s: f64) {
        if now_s <= self.last_aged_s {
            return;
        }
        let factor = self
            .params
            .gamma
            .powf((now_s - self.last_aged_s) / self.params.time_unit_s);
        for v in self.p.values_mut() {
            *v *= factor;
        }
        self.last_aged_s = now_s;
    }

    /// `P(a,b) ← P + (1 − P) · P_init`.
    pub fn direct(&mut self, peer: &K) {
        let p_init = self.params.p_init;
        let v = self.p.entry(peer.clone()).or_insert(0.0);
        *v = (*v + (1.0 - *v) * p_init).min(MAX_PREDICTABILITY);
    }

    /// `P(a,d) ← max(P(a,d), P(a,d) + (1 − P(a,d)) · P(a,b) · P(b,d) · β)`
    /// for every `d` in the peer's table other than ourselves and the peer.
    pub fn transitive(&mut self, peer: &K, peer_table: &BTreeMap<K, f64>) {
        let p_ab = self.get(peer);
        let beta = self.params.beta;
        for (d, &p_bd) in peer_table {
            if *d == self.me || d == peer {
                continue;
            }
            let old = self.get(d);
            let candidate = old + (1.0 - old) * p_ab * p_bd * beta;
            let new = old.max(candidate).min(MAX_PREDICTABILITY);
            if new > 0.0 {
                self.p.insert(d.clone(), new);
            }
        }
    }

    /// Full encounter update: age, direct, then transitivity with the peer's
    /// table (aged to the same instant).
    pub fn on_encounter(&mut self, peer: &K, peer_table: &BTreeMap<K, f64>, now_s: f64) {
        self.age(now_s);
        self.direct(peer);
        self.transitive(peer, peer_table);
    }
}

/// Replicate iff the peer's predictability for the destination is strictly
/// higher.
pub fn should_replicate(my_p: f64, peer_p: f64) -> bool {
    peer_p > my_p
}
