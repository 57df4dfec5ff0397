use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Workload description. The generated list depends on nothing else, so
/// every router in an experiment sees the same messages.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficSpec {
    pub message_count: usize,
    pub size_min: u64,
    pub size_max: u64,
    pub start_s: f64,
    pub end_s: f64,
    pub ttl_s: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub creation_ms: u64,
    pub source: usize,
    pub dest: usize,
    pub size: u64,
    pub ttl_s: u64,
}

/// Creation times evenly spaced over `[start, end)` (millisecond grid),
/// uniform sizes in `[size_min, size_max]`, uniform distinct endpoints.
/// The TTL does not influence any random draw.
pub fn generate_traffic(spec: &TrafficSpec, nodes: usize) -> Vec<Message> {
    assert!(nodes >= 2, "traffic needs at least two nodes");
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let start_ms = (spec.start_s * 1000.0).round() as u64;
    let window_ms = ((spec.end_s - spec.start_s).max(0.0) * 1000.0).round() as u128;
    let count = spec.message_count as u128;
    (0..spec.message_count)
        .map(|k| {
            let creation_ms = start_ms + (k as u128 * window_ms / count) as u64;
            let size = rng.random_range(spec.size_min..=spec.size_max);
            let source = rng.random_range(0..nodes);
            let mut dest = rng.random_range(0..nodes - 1);
            if dest >= source {
                dest += 1;
            }
            Message {
                creation_ms,
                source,
                dest,
                size,
                ttl_s: spec.ttl_s,
            }
        })
        .collect()
}
