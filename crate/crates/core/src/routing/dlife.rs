//! dLife: social weights from per-sample average contact durations, with a
//! damped node importance as fallback when neither side knows the
//! destination.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::types::SimClock;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DlifeError {
    #[error("contact with {0} already open")]
    AlreadyOpen(String),
    #[error("no open contact with {0}")]
    NotOpen(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DlifeParams {
    pub clock: SimClock,
    pub damping: f64,
    /// Blend all daily samples weighted by distance from the current one;
    /// when off, only the current sample counts.
    pub blend: bool,
}

impl Default for DlifeParams {
    fn default() -> Self {
        DlifeParams {
            clock: SimClock::default(),
            damping: 0.8,
            blend: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeerRecord {
    /// Average contact seconds per daily sample.
    pub ad: Vec<f64>,
    /// Contact seconds accumulated in each sample of the current day.
    pub tct: Vec<f64>,
    pub open_since: Option<f64>,
    /// Importance the peer reported at the last encounter.
    pub reported_importance: f64,
    /// Number of neighbors with positive weight the peer reported.
    pub reported_degree: usize,
}

impl PeerRecord {
    fn new(samples: usize) -> Self {
        PeerRecord {
            ad: vec![0.0; samples],
            tct: vec![0.0; samples],
            open_since: None,
            reported_importance: 0.0,
            reported_degree: 0,
        }
    }
}

/// `(1 - d) + d * Σ w·I` over `(w, I)` terms.
pub fn damped_importance(damping: f64, terms: impl IntoIterator<Item = (f64, f64)>) -> f64 {
    let sum: f64 = terms
        .into_iter()
        .filter(|(w, i)| *w > 0.0 && *i > 0.0)
        .map(|(w, i)| w * i)
        .sum();
    (1.0 - damping) + damping * sum
}

/// Blended social weight seen from the current sample `current`:
/// `Σ_j ad[(current + j) mod T] · (T - j) / T`.
pub fn blended_weight(ad: &[f64], current: usize) -> f64 {
    let t = ad.len();
    (0..t)
        .map(|j| ad[(current + j) % t] * (t - j) as f64 / t as f64)
        .sum()
}

/// dLife state held by one node, keyed by peer identity `K`.
#[derive(Debug, Clone)]
pub struct DlifeState<K> {
    params: DlifeParams,
    peers: BTreeMap<K, PeerRecord>,
    days_completed: Vec<u32>,
    importance: f64,
    rolls_done: u64,
}

impl<K: Ord + Clone + std::fmt::Debug> DlifeState<K> {
    /// A fresh state whose first sample roll happens at the first boundary
    /// after `start_s`.
    pub fn new(params: DlifeParams, start_s: f64) -> Self {
        let samples = params.clock.samples_per_day;
        let len = params.clock.sample_length_s();
        DlifeState {
            params,
            peers: BTreeMap::new(),
            days_completed: vec![0; samples],
            importance: 1.0 - params.damping,
            rolls_done: (start_s / len).floor() as u64,
        }
    }

    pub fn params(&self) -> &DlifeParams {
        &self.params
    }

    pub fn importance(&self) -> f64 {
        self.importance
    }

    pub fn peer(&self, peer: &K) -> Option<&PeerRecord> {
        self.peers.get(peer)
    }

    pub fn days_completed(&self, sample: usize) -> u32 {
        self.days_completed[sample]
    }

    fn record(&mut self, peer: &K) -> &mut PeerRecord {
        let samples = self.params.clock.samples_per_day;
        self.peers
            .entry(peer.clone())
            .or_insert_with(|| PeerRecord::new(samples))
    }

    pub fn contact_start(&mut self, peer: &K, now_s: f64) -> Result<(), DlifeError> {
        let rec = self.record(peer);
        if rec.open_since.is_some() {
            return Err(DlifeError::AlreadyOpen(format!("{peer:?}")));
        }
        rec.open_since = Some(now_s);
        Ok(())
    }

    /// Closes the contact, splitting `[start, now_s)` at sample boundaries
    /// into the current day's accumulators.
    pub fn contact_end(&mut self, peer: &K, now_s: f64) -> Result<(), DlifeError> {
        let clock = self.params.clock;
        let rec = self
            .peers
            .get_mut(peer)
            .ok_or_else(|| DlifeError::NotOpen(format!("{peer:?}")))?;
        let start = rec
            .open_since
            .take()
            .ok_or_else(|| DlifeError::NotOpen(format!("{peer:?}")))?;
        accumulate(&clock, &mut rec.tct, start, now_s);
        Ok(())
    }

    /// Ends sample `sample` at time `boundary_s`: flushes open contacts up
    /// to the boundary, folds the day's total into the running average and
    /// recomputes importance.
    pub fn roll_sample(&mut self, sample: usize, boundary_s: f64) {
        let clock = self.params.clock;
        let k = self.days_completed[sample] + 1;
        for rec in self.peers.values_mut() {
            if let Some(start) = rec.open_since {
                if start < boundary_s {
                    accumulate(&clock, &mut rec.tct, start, boundary_s);
                    rec.open_since = Some(boundary_s);
                }
            }
            let kf = k as f64;
            rec.ad[sample] = ((kf - 1.0) * rec.ad[sample] + rec.tct[sample]) / kf;
            rec.tct[sample] = 0.0;
        }
        self.days_completed[sample] = k;
        self.recompute_importance(boundary_s);
    }

    /// Performs every sample roll whose boundary is `<= now_s`.
    pub fn advance_to(&mut self, now_s: f64) {
        let len = self.params.clock.sample_length_s();
        let samples = self.params.clock.samples_per_day as u64;
        loop {
            let boundary = (self.rolls_done + 1) as f64 * len;
            if boundary > now_s {
                break;
            }
            let ending = (self.rolls_done % samples) as usize;
            self.roll_sample(ending, boundary);
            self.rolls_done += 1;
        }
    }

    /// Social weight towards `dest` at `now_s`; 0 for unknown nodes.
    pub fn weight(&self, dest: &K, now_s: f64) -> f64 {
        let Some(rec) = self.peers.get(dest) else {
            return 0.0;
        };
        let current = self.params.clock.sample_index(now_s);
        if self.params.blend {
            blended_weight(&rec.ad, current)
        } else {
            rec.ad[current]
        }
    }

    /// Weights towards every peer with a positive weight.
    pub fn weights(&self, now_s: f64) -> BTreeMap<K, f64> {
        self.peers
            .keys()
            .map(|k| (k.clone(), self.weight(k, now_s)))
            .filter(|(_, w)| *w > 0.0)
            .collect()
    }

    fn max_weight(&self) -> f64 {
        let len = self.params.clock.sample_length_s();
        if self.params.blend {
            let t = self.params.clock.samples_per_day as f64;
            len * (t + 1.0) / 2.0
        } else {
            len
        }
    }

    /// Stores what `peer` reported in an encounter and recomputes importance.
    pub fn record_report(&mut self, peer: &K, importance: f64, degree: usize, now_s: f64) {
        let rec = self.record(peer);
        rec.reported_importance = importance;
        rec.reported_degree = degree;
        self.recompute_importance(now_s);
    }

    fn recompute_importance(&mut self, now_s: f64) {
        let max_w = self.max_weight();
        let terms: Vec<(f64, f64)> = self
            .peers
            .iter()
            .map(|(k, rec)| {
                let w = self.weight(k, now_s) / max_w;
                let share = rec.reported_importance / rec.reported_degree.max(1) as f64;
                (w, share)
            })
            .collect();
        self.importance = damped_importance(self.params.damping, terms);
    }
}

fn accumulate(clock: &SimClock, tct: &mut [f64], start: f64, end: f64) {
    let len = clock.sample_length_s();
    let mut t = start;
    while t < end {
        let boundary = ((t / len).floor() + 1.0) * len;
        let piece_end = boundary.min(end);
        tct[clock.sample_index(t)] += piece_end - t;
        t = piece_end;
    }
}

/// dLife forwarding rule: replicate towards the higher weight, or, when
/// both weights are zero, towards the higher importance. Ties never
/// replicate.
pub fn should_replicate(
    my_weight: f64,
    peer_weight: f64,
    my_importance: f64,
    peer_importance: f64,
) -> bool {
    peer_weight > my_weight
        || (peer_weight == 0.0 && my_weight == 0.0 && peer_importance > my_importance)
}
