use std::collections::BTreeMap;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ContactError {
    #[error("contact between node {0} and itself")]
    SelfContact(usize),
    #[error("contact end {end} is not after start {start}")]
    EmptyInterval { start: f64, end: f64 },
    #[error("contact start {0} is negative or not finite")]
    BadStart(f64),
}

/// Pairwise connectivity over `[start_s, end_s)`. After normalization
/// `a < b` always holds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactEvent {
    pub a: usize,
    pub b: usize,
    pub start_s: f64,
    pub end_s: f64,
}

impl ContactEvent {
    pub fn new(a: usize, b: usize, start_s: f64, end_s: f64) -> Result<Self, ContactError> {
        if a == b {
            return Err(ContactError::SelfContact(a));
        }
        if !(start_s.is_finite() && start_s >= 0.0) {
            return Err(ContactError::BadStart(start_s));
        }
        if !(end_s.is_finite() && end_s > start_s) {
            return Err(ContactError::EmptyInterval {
                start: start_s,
                end: end_s,
            });
        }
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        Ok(ContactEvent { a, b, start_s, end_s })
    }

    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }
}

/// Canonical form of a contact list: pairs ordered `a < b`, overlapping or
/// touching intervals of the same pair merged, sorted by
/// `(start, a, b)`. Idempotent and independent of input order.
pub fn normalize_contacts(contacts: impl IntoIterator<Item = ContactEvent>) -> Vec<ContactEvent> {
    let mut by_pair: BTreeMap<(usize, usize), Vec<(f64, f64)>> = BTreeMap::new();
    for c in contacts {
        let (a, b) = if c.a < c.b { (c.a, c.b) } else { (c.b, c.a) };
        by_pair.entry((a, b)).or_default().push((c.start_s, c.end_s));
    }
    let mut out = Vec::new();
    for ((a, b), mut spans) in by_pair {
        spans.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)));
        let mut cur = spans[0];
        for &(s, e) in &spans[1..] {
            if s <= cur.1 {
                cur.1 = cur.1.max(e);
            } else {
                out.push(ContactEvent {
                    a,
                    b,
                    start_s: cur.0,
                    end_s: cur.1,
                });
                cur = (s, e);
            }
        }
        out.push(ContactEvent {
            a,
            b,
            start_s: cur.0,
            end_s: cur.1,
        });
    }
    out.sort_by(|x, y| {
        x.start_s
            .total_cmp(&y.start_s)
            .then(x.a.cmp(&y.a))
            .then(x.b.cmp(&y.b))
    });
    out
}

/// Number of nodes implied by the largest index in the list.
pub fn node_count(contacts: &[ContactEvent]) -> usize {
    contacts.iter().map(|c| c.b.max(c.a) + 1).max().unwrap_or(0)
}
