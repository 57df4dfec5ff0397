//! Router × TTL × seed experiment matrix.
//!
//! Within one seed every router and TTL sees the same contact trace and the
//! same messages (only the TTL field differs).

use rayon::prelude::*;
use thiserror::Error;

use super::log::RawRunLog;
use super::synth::{generate_synthetic_contacts, ParamError};
use super::traffic::{generate_traffic, Message, TrafficSpec};
use super::{run, SimError, SimSetup};
use crate::config::{ExperimentConfig, Scenario};
use crate::contact::{node_count, ContactEvent};
use crate::routing::RouterKind;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("trace scenario configured but no trace was loaded")]
    MissingTrace,
    #[error("trace uses {found} nodes but [scenario] nodes = {configured}")]
    NodeCount { found: usize, configured: usize },
    #[error("trace has fewer than 2 nodes")]
    TooFewNodes,
    #[error(transparent)]
    Synthetic(#[from] ParamError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RunSpec {
    pub router: RouterKind,
    pub ttl_s: u64,
    pub seed: u64,
}

impl RunSpec {
    pub fn label(&self) -> String {
        format!("{}_ttl{}_seed{}", self.router, self.ttl_s, self.seed)
    }
}

/// A scenario instance ready to simulate.
#[derive(Debug, Clone, PartialEq)]
pub struct Realization {
    pub contacts: Vec<ContactEvent>,
    pub nodes: usize,
    pub duration_s: f64,
    /// Seconds subtracted from trace times to align day boundaries.
    pub shift_s: f64,
}

/// Shifts trace times back by whole days so the first contact falls on
/// day 1 with its time of day preserved.
pub fn align_to_day(contacts: &[ContactEvent], day_length_s: f64) -> (Vec<ContactEvent>, f64) {
    let first = contacts
        .iter()
        .map(|c| c.start_s)
        .fold(f64::INFINITY, f64::min);
    if !first.is_finite() {
        return (contacts.to_vec(), 0.0);
    }
    let shift = (first / day_length_s).floor() * day_length_s;
    let shifted = contacts
        .iter()
        .map(|c| ContactEvent {
            start_s: c.start_s - shift,
            end_s: c.end_s - shift,
            ..*c
        })
        .collect();
    (shifted, shift)
}

pub fn realize(
    config: &ExperimentConfig,
    trace: Option<&[ContactEvent]>,
    run_seed: u64,
) -> Result<Realization, ExperimentError> {
    match &config.scenario {
        Scenario::Synthetic { params, seed } => {
            let contacts = generate_synthetic_contacts(params, seed.wrapping_add(run_seed))?;
            Ok(Realization {
                contacts,
                nodes: params.nodes,
                duration_s: config.duration_s.unwrap_or_else(|| params.duration_s()),
                shift_s: 0.0,
            })
        }
        Scenario::Trace { nodes, .. } => {
            let trace = trace.ok_or(ExperimentError::MissingTrace)?;
            let found = node_count(trace);
            let nodes = match *nodes {
                Some(configured) if configured < found => {
                    return Err(ExperimentError::NodeCount { found, configured })
                }
                Some(configured) => configured,
                None => found,
            };
            if nodes < 2 {
                return Err(ExperimentError::TooFewNodes);
            }
            let day = config.router_params.dlife.clock.day_length_s as f64;
            let (contacts, shift_s) = align_to_day(trace, day);
            let end = contacts.iter().map(|c| c.end_s).fold(0.0, f64::max);
            Ok(Realization {
                contacts,
                nodes,
                duration_s: config.duration_s.unwrap_or(end),
                shift_s,
            })
        }
    }
}

/// Workload of one seed, with `ttl_s` left at 0 for the caller to fill.
pub fn workload(config: &ExperimentConfig, realization: &Realization, run_seed: u64) -> Vec<Message> {
    let spec = TrafficSpec {
        message_count: config.traffic.messages,
        size_min: config.traffic.size_min,
        size_max: config.traffic.size_max,
        start_s: config.traffic.start_s,
        end_s: config.traffic.end_s.unwrap_or(realization.duration_s),
        ttl_s: 0,
        seed: config.traffic.workload_seed.wrapping_add(run_seed),
    };
    generate_traffic(&spec, realization.nodes)
}

/// Runs every (router, TTL, seed) combination, handing each log to `each`
/// as soon as it is produced. Results come back sorted by [`RunSpec`].
pub fn run_matrix<T, F>(
    config: &ExperimentConfig,
    trace: Option<&[ContactEvent]>,
    each: F,
) -> Result<Vec<(RunSpec, T)>, ExperimentError>
where
    T: Send,
    F: Fn(RunSpec, &Realization, RawRunLog) -> T + Sync,
{
    let seeds = &config.seeds;
    let prepared: Vec<(u64, Realization, Vec<Message>)> = seeds
        .par_iter()
        .map(|&seed| {
            let r = realize(config, trace, seed)?;
            let w = workload(config, &r, seed);
            Ok((seed, r, w))
        })
        .collect::<Result<_, ExperimentError>>()?;

    let mut specs = Vec::new();
    for (i, &(seed, _, _)) in prepared.iter().enumerate() {
        for &router in &config.routers {
            for &ttl_s in &config.traffic.ttls {
                specs.push((i, RunSpec { router, ttl_s, seed }));
            }
        }
    }
    let mut results: Vec<(RunSpec, T)> = specs
        .par_iter()
        .map(|&(i, spec)| {
            let (_, realization, base) = &prepared[i];
            let messages: Vec<Message> = base
                .iter()
                .map(|m| Message {
                    ttl_s: spec.ttl_s,
                    ..m.clone()
                })
                .collect();
            let setup = SimSetup {
                nodes: realization.nodes,
                contacts: &realization.contacts,
                messages: &messages,
                router: spec.router,
                params: config.router_params,
                capacity_bytes: config.capacity_bytes,
                link: config.link,
                duration_s: realization.duration_s,
            };
            let mut log = run(&setup)?;
            log.meta = vec![
                ("router".into(), spec.router.to_string()),
                ("ttl_s".into(), spec.ttl_s.to_string()),
                ("seed".into(), spec.seed.to_string()),
            ];
            Ok((spec, each(spec, realization, log)))
        })
        .collect::<Result<_, ExperimentError>>()?;
    results.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(results)
}
