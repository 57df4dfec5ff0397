//! Synthetic community-structured contact traces with a daily routine.
//!
//! Every unordered pair meets as a Poisson process whose hourly rate is
//! `lambda_in` (same community) or `lambda_out` (different communities),
//! scaled by the hour-of-day activity multiplier. Durations are exponential,
//! clipped at four times the mean.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson};
use thiserror::Error;

use crate::contact::{normalize_contacts, ContactEvent};

/// Built-in daily routine: quiet nights, busy working hours. Mean is 1.0.
pub const DEFAULT_ACTIVITY_PROFILE: [f64; 24] = [
    0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, // 00-06
    0.5, 1.5, // 07-08
    2.0, 2.0, 2.0, // 09-11
    1.5, 1.5, // 12-13
    2.0, 2.0, 2.0, // 14-16
    1.5, // 17
    1.0, 1.0, 1.0, // 18-20
    0.8, 0.5, 0.5, // 21-23
];

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticParams {
    pub nodes: usize,
    pub communities: usize,
    pub days: u32,
    pub lambda_in: f64,
    pub lambda_out: f64,
    pub mean_contact_s: f64,
    pub activity_profile: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid synthetic parameter {key} = {value}: {reason}")]
pub struct ParamError {
    pub key: &'static str,
    pub value: String,
    pub reason: &'static str,
}

impl SyntheticParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        let err = |key, value: &dyn ToString, reason| {
            Err(ParamError {
                key,
                value: value.to_string(),
                reason,
            })
        };
        if self.nodes < 2 {
            return err("nodes", &self.nodes, "need at least 2 nodes");
        }
        if self.communities == 0 || self.communities > self.nodes {
            return err("communities", &self.communities, "must be in 1..=nodes");
        }
        if self.days == 0 {
            return err("days", &self.days, "must be positive");
        }
        if !(self.lambda_in >= 0.0 && self.lambda_in.is_finite()) {
            return err("lambda_in", &self.lambda_in, "must be >= 0");
        }
        if !(self.lambda_out >= 0.0 && self.lambda_out.is_finite()) {
            return err("lambda_out", &self.lambda_out, "must be >= 0");
        }
        if !(self.mean_contact_s > 0.0 && self.mean_contact_s.is_finite()) {
            return err("mean_contact_s", &self.mean_contact_s, "must be positive");
        }
        if self.activity_profile.len() != 24 || self.activity_profile.iter().any(|m| !(*m >= 0.0)) {
            return err("activity_profile", &self.activity_profile.len(), "need 24 values >= 0");
        }
        Ok(())
    }

    /// Balanced contiguous partition of nodes into communities.
    pub fn community_of(&self, node: usize) -> usize {
        node * self.communities / self.nodes
    }

    pub fn duration_s(&self) -> f64 {
        self.days as f64 * 86_400.0
    }
}

pub fn generate_synthetic_contacts(params: &SyntheticParams, seed: u64) -> Result<Vec<ContactEvent>, ParamError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let horizon = params.duration_s();
    let hours = params.days as usize * 24;
    let duration = Exp::new(1.0 / params.mean_contact_s).expect("validated mean");
    let cap = 4.0 * params.mean_contact_s;
    let mut out = Vec::new();
    for a in 0..params.nodes {
        for b in a + 1..params.nodes {
            let base = if params.community_of(a) == params.community_of(b) {
                params.lambda_in
            } else {
                params.lambda_out
            };
            for h in 0..hours {
                let rate = base * params.activity_profile[h % 24];
                if rate <= 0.0 {
                    continue;
                }
                let count = Poisson::new(rate).expect("positive rate").sample(&mut rng) as u64;
                for _ in 0..count {
                    let start = (h as f64 + rng.random::<f64>()) * 3600.0;
                    let len = duration.sample(&mut rng).min(cap).max(1.0);
                    let end = (start + len).min(horizon);
                    if end > start {
                        out.push(ContactEvent { a, b, start_s: start, end_s: end });
                    }
                }
            }
        }
    }
    Ok(normalize_contacts(out))
}
