//! Contact trace files.
//!
//! Two formats are read: pairwise intervals (`<a> <b> <start_s> <end_s>`)
//! and connection events (`<time> CONN <a> <b> up|down`). `#` starts a
//! comment in both. Raw node ids are compacted to dense indices in sorted
//! order (numerically when every id is an integer).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::contact::{normalize_contacts, ContactError, ContactEvent};
use crate::types::EndpointId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceFormat {
    PairwiseIntervals,
    ConnectionEvents,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TraceError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: {source}")]
    Contact { line: usize, source: ContactError },
    #[error("line {line}: `down` for {a}-{b} without a preceding `up`")]
    DownBeforeUp { line: usize, a: String, b: String },
}

/// Dense index to original id.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct IdMap {
    pub originals: Vec<String>,
}

impl IdMap {
    pub fn identity(nodes: usize) -> IdMap {
        IdMap {
            originals: (0..nodes).map(|i| i.to_string()).collect(),
        }
    }

    fn compact<'a>(ids: impl IntoIterator<Item = &'a str>) -> (IdMap, BTreeMap<String, usize>) {
        let set: BTreeSet<&str> = ids.into_iter().collect();
        let mut sorted: Vec<&str> = set.into_iter().collect();
        if sorted.iter().all(|s| s.parse::<u64>().is_ok()) {
            sorted.sort_by_key(|s| s.parse::<u64>().unwrap());
        }
        let index = sorted.iter().enumerate().map(|(i, s)| (s.to_string(), i)).collect();
        (
            IdMap {
                originals: sorted.into_iter().map(str::to_string).collect(),
            },
            index,
        )
    }

    pub fn len(&self) -> usize {
        self.originals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.originals.is_empty()
    }

    /// `<original> <dense> dtn://n<dense>` per line.
    pub fn sidecar(&self) -> String {
        let mut out = String::new();
        for (i, orig) in self.originals.iter().enumerate() {
            let _ = writeln!(out, "{orig} {i} {}", EndpointId::for_node(i));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub contacts: Vec<ContactEvent>,
    pub ids: IdMap,
}

fn content(line: &str) -> &str {
    line.split('#').next().unwrap_or("").trim()
}

fn parse_time(tok: &str, scale: f64, line: usize) -> Result<f64, TraceError> {
    match tok.parse::<f64>() {
        Ok(t) if t.is_finite() => Ok(t * scale),
        _ => Err(TraceError::Malformed {
            line,
            reason: format!("bad time `{tok}`"),
        }),
    }
}

/// Guesses the format from the first data line.
pub fn detect_format(text: &str) -> TraceFormat {
    for line in text.lines() {
        let c = content(line);
        if c.is_empty() {
            continue;
        }
        return match c.split_whitespace().nth(1) {
            Some("CONN") => TraceFormat::ConnectionEvents,
            _ => TraceFormat::PairwiseIntervals,
        };
    }
    TraceFormat::PairwiseIntervals
}

pub fn parse_trace(text: &str, format: TraceFormat, time_scale: f64) -> Result<Trace, TraceError> {
    match format {
        TraceFormat::PairwiseIntervals => parse_pairwise_intervals_scaled(text, time_scale),
        TraceFormat::ConnectionEvents => parse_connection_events_scaled(text, time_scale),
    }
}

pub fn parse_pairwise_intervals(text: &str) -> Result<Trace, TraceError> {
    parse_pairwise_intervals_scaled(text, 1.0)
}

pub fn parse_pairwise_intervals_scaled(text: &str, time_scale: f64) -> Result<Trace, TraceError> {
    let mut raw = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let c = content(line);
        if c.is_empty() {
            continue;
        }
        let f: Vec<&str> = c.split_whitespace().collect();
        if f.len() != 4 {
            return Err(TraceError::Malformed {
                line: line_no,
                reason: format!("expected `<a> <b> <start> <end>`, got {} fields", f.len()),
            });
        }
        let start = parse_time(f[2], time_scale, line_no)?;
        let end = parse_time(f[3], time_scale, line_no)?;
        raw.push((line_no, f[0], f[1], start, end));
    }
    let (ids, index) = IdMap::compact(raw.iter().flat_map(|r| [r.1, r.2]));
    let mut contacts = Vec::with_capacity(raw.len());
    for (line, a, b, start, end) in raw {
        contacts.push(
            ContactEvent::new(index[a], index[b], start, end)
                .map_err(|source| TraceError::Contact { line, source })?,
        );
    }
    Ok(Trace {
        contacts: normalize_contacts(contacts),
        ids,
    })
}

pub fn parse_connection_events(text: &str) -> Result<Trace, TraceError> {
    parse_connection_events_scaled(text, 1.0)
}

/// Matches up/down pairs. A link still up at the end of the file closes at
/// the latest time seen. Repeated `up` on an open link is ignored, as are
/// zero-length connections.
pub fn parse_connection_events_scaled(text: &str, time_scale: f64) -> Result<Trace, TraceError> {
    let mut open: BTreeMap<(&str, &str), (usize, f64)> = BTreeMap::new();
    let mut closed = Vec::new();
    let mut last_time = f64::NEG_INFINITY;
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let c = content(line);
        if c.is_empty() {
            continue;
        }
        let f: Vec<&str> = c.split_whitespace().collect();
        if f.len() != 5 || f[1] != "CONN" {
            return Err(TraceError::Malformed {
                line: line_no,
                reason: "expected `<time> CONN <a> <b> up|down`".into(),
            });
        }
        let t = parse_time(f[0], time_scale, line_no)?;
        last_time = last_time.max(t);
        let key = if f[2] <= f[3] { (f[2], f[3]) } else { (f[3], f[2]) };
        match f[4] {
            "up" => {
                open.entry(key).or_insert((line_no, t));
            }
            "down" => match open.remove(&key) {
                Some((up_line, start)) if t >= start => {
                    if t > start {
                        closed.push((up_line, key, start, t));
                    }
                }
                _ => {
                    return Err(TraceError::DownBeforeUp {
                        line: line_no,
                        a: f[2].to_string(),
                        b: f[3].to_string(),
                    })
                }
            },
            other => {
                return Err(TraceError::Malformed {
                    line: line_no,
                    reason: format!("expected up|down, got `{other}`"),
                })
            }
        }
    }
    for (key, (line, start)) in open {
        if last_time > start {
            closed.push((line, key, start, last_time));
        }
    }
    let (ids, index) = IdMap::compact(closed.iter().flat_map(|c| [c.1 .0, c.1 .1]));
    let mut contacts = Vec::with_capacity(closed.len());
    for (line, (a, b), start, end) in closed {
        contacts.push(
            ContactEvent::new(index[a], index[b], start, end)
                .map_err(|source| TraceError::Contact { line, source })?,
        );
    }
    Ok(Trace {
        contacts: normalize_contacts(contacts),
        ids,
    })
}

/// Writes contacts using the original ids from `ids`.
pub fn write_pairwise_intervals(contacts: &[ContactEvent], ids: &IdMap) -> String {
    let mut out = String::from("# oppdtn pairwise contact intervals: <a> <b> <start_s> <end_s>\n");
    for c in contacts {
        let name = |i: usize| ids.originals.get(i).cloned().unwrap_or_else(|| i.to_string());
        let _ = writeln!(out, "{} {} {} {}", name(c.a), name(c.b), c.start_s, c.end_s);
    }
    out
}
