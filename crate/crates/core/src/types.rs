use std::fmt;
use std::str::FromStr;

use thiserror::Error;

const SCHEME: &str = "dtn://";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EndpointError {
    #[error("malformed endpoint {0:?}: expected dtn://<name>")]
    WrongScheme(String),
    #[error("malformed endpoint {0:?}: empty name")]
    EmptyName(String),
    #[error("malformed endpoint {0:?}: name must be ASCII without whitespace")]
    BadName(String),
}

/// A bundle endpoint of the form `dtn://<name>`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EndpointId(String);

impl EndpointId {
    pub fn parse(text: &str) -> Result<Self, EndpointError> {
        let name = text
            .strip_prefix(SCHEME)
            .ok_or_else(|| EndpointError::WrongScheme(text.to_string()))?;
        if name.is_empty() {
            return Err(EndpointError::EmptyName(text.to_string()));
        }
        if !name.bytes().all(|b| b.is_ascii_graphic()) {
            return Err(EndpointError::BadName(text.to_string()));
        }
        Ok(EndpointId(text.to_string()))
    }

    /// Endpoint assigned to a dense node index in a scenario: `dtn://nNN`.
    pub fn for_node(index: usize) -> Self {
        EndpointId(format!("{SCHEME}n{index:02}"))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn name(&self) -> &str {
        &self.0[SCHEME.len()..]
    }
}

impl fmt::Display for EndpointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for EndpointId {
    type Err = EndpointError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EndpointId::parse(s)
    }
}

/// Identity triple of a bundle. Rendered as `<source>/<creation_ms>/<seq>`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BundleId {
    pub source: EndpointId,
    pub creation_ms: u64,
    pub seq: u32,
}

impl fmt::Display for BundleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.source, self.creation_ms, self.seq)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed bundle id {0:?}")]
pub struct BundleIdError(pub String);

impl FromStr for BundleId {
    type Err = BundleIdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || BundleIdError(s.to_string());
        let mut parts = s.rsplitn(3, '/');
        let seq = parts.next().and_then(|p| p.parse().ok()).ok_or_else(err)?;
        let creation_ms = parts.next().and_then(|p| p.parse().ok()).ok_or_else(err)?;
        let source = parts
            .next()
            .and_then(|p| EndpointId::parse(p).ok())
            .ok_or_else(err)?;
        Ok(BundleId {
            source,
            creation_ms,
            seq,
        })
    }
}

/// An application message. Simulation bundles carry only a size; live
/// bundles carry the payload as well.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bundle {
    pub id: BundleId,
    pub dest: EndpointId,
    pub ttl_s: u64,
    pub size_bytes: u64,
    pub payload: Option<Vec<u8>>,
}

impl Bundle {
    pub fn with_payload(id: BundleId, dest: EndpointId, ttl_s: u64, payload: Vec<u8>) -> Self {
        Bundle {
            id,
            dest,
            ttl_s,
            size_bytes: payload.len() as u64,
            payload: Some(payload),
        }
    }

    pub fn expiry_ms(&self) -> u64 {
        self.id.creation_ms + self.ttl_s * 1000
    }

    pub fn expiry_s(&self) -> f64 {
        self.expiry_ms() as f64 / 1000.0
    }

    /// Expiry is inclusive: a bundle is dead at `now_s >= expiry`.
    pub fn is_expired(&self, now_s: f64) -> bool {
        now_s >= self.expiry_s()
    }
}

/// Decomposition of a scenario time into day and daily sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClockPosition {
    /// 1-based day index.
    pub day: u64,
    pub sample: usize,
    /// Seconds until the next sample boundary (always > 0).
    pub remaining_s: f64,
}

/// Splits the day into `samples_per_day` equal samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimClock {
    pub day_length_s: u64,
    pub samples_per_day: usize,
}

impl Default for SimClock {
    fn default() -> Self {
        SimClock {
            day_length_s: 86_400,
            samples_per_day: 24,
        }
    }
}

impl SimClock {
    pub fn new(day_length_s: u64, samples_per_day: usize) -> Self {
        assert!(day_length_s > 0 && samples_per_day > 0);
        SimClock {
            day_length_s,
            samples_per_day,
        }
    }

    pub fn sample_length_s(&self) -> f64 {
        self.day_length_s as f64 / self.samples_per_day as f64
    }

    pub fn sample_index(&self, t_s: f64) -> usize {
        self.locate(t_s).sample
    }

    pub fn locate(&self, t_s: f64) -> ClockPosition {
        debug_assert!(t_s >= 0.0);
        let day_len = self.day_length_s as f64;
        let len = self.sample_length_s();
        let day = (t_s / day_len).floor();
        let tod = t_s - day * day_len;
        let sample = ((tod / len).floor() as usize).min(self.samples_per_day - 1);
        let mut remaining_s = (sample + 1) as f64 * len - tod;
        if remaining_s <= 0.0 {
            // tod rounded up onto the boundary; the next sample has a full length.
            remaining_s = len;
        }
        ClockPosition {
            day: day as u64 + 1,
            sample,
            remaining_s,
        }
    }
}
