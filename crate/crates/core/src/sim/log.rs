//! Raw run log: one tab-separated record per line,
//! `time<TAB>event<TAB>bundle_id<TAB>from<TAB>to`, after a
//! `#oppdtn-log v1` header. Further `#key=value` lines carry run identity.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use thiserror::Error;

use crate::types::EndpointId;

pub const LOG_HEADER: &str = "#oppdtn-log v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LogEvent {
    Create,
    Relay,
    Deliver,
    Refuse,
    Expire,
    Abort,
}

impl LogEvent {
    pub fn as_str(&self) -> &'static str {
        match self {
            LogEvent::Create => "CREATE",
            LogEvent::Relay => "RELAY",
            LogEvent::Deliver => "DELIVER",
            LogEvent::Refuse => "REFUSE",
            LogEvent::Expire => "EXPIRE",
            LogEvent::Abort => "ABORT",
        }
    }
}

impl fmt::Display for LogEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LogEvent {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Ok(match s {
            "CREATE" => LogEvent::Create,
            "RELAY" => LogEvent::Relay,
            "DELIVER" => LogEvent::Deliver,
            "REFUSE" => LogEvent::Refuse,
            "EXPIRE" => LogEvent::Expire,
            "ABORT" => LogEvent::Abort,
            _ => return Err(()),
        })
    }
}

/// Record as produced by the engine: bundle and nodes are indices into the
/// log's name tables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRecord {
    pub time_s: f64,
    pub event: LogEvent,
    pub bundle: u32,
    pub from: Option<u32>,
    pub to: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RawRunLog {
    /// Run identity written as `#key=value` header lines.
    pub meta: Vec<(String, String)>,
    pub node_names: Vec<EndpointId>,
    pub bundle_names: Vec<String>,
    pub records: Vec<LogRecord>,
}

impl RawRunLog {
    fn node(&self, idx: Option<u32>) -> &str {
        idx.map(|i| self.node_names[i as usize].as_str()).unwrap_or("-")
    }

    pub fn bundle_name(&self, idx: u32) -> &str {
        &self.bundle_names[idx as usize]
    }

    /// `(time, event, bundle id)` triples, the input of metric reduction.
    pub fn events(&self) -> impl Iterator<Item = (f64, LogEvent, &str)> + '_ {
        self.records
            .iter()
            .map(|r| (r.time_s, r.event, self.bundle_name(r.bundle)))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(64 * (self.records.len() + 4));
        out.push_str(LOG_HEADER);
        out.push('\n');
        for (k, v) in &self.meta {
            let _ = writeln!(out, "#{k}={v}");
        }
        for r in &self.records {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                r.time_s,
                r.event,
                self.bundle_name(r.bundle),
                self.node(r.from),
                self.node(r.to)
            );
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LogError {
    #[error("missing `{LOG_HEADER}` header")]
    MissingHeader,
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextRecord {
    pub time_s: f64,
    pub event: LogEvent,
    pub bundle: String,
    pub from: String,
    pub to: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParsedLog {
    pub meta: BTreeMap<String, String>,
    pub records: Vec<TextRecord>,
}

impl ParsedLog {
    pub fn events(&self) -> impl Iterator<Item = (f64, LogEvent, &str)> + '_ {
        self.records
            .iter()
            .map(|r| (r.time_s, r.event, r.bundle.as_str()))
    }
}

pub fn parse_log(text: &str) -> Result<ParsedLog, LogError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim_end() == LOG_HEADER => {}
        _ => return Err(LogError::MissingHeader),
    }
    let mut out = ParsedLog::default();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((k, v)) = rest.split_once('=') {
                out.meta.insert(k.trim().to_string(), v.trim().to_string());
            }
            continue;
        }
        let bad = |reason: &str| LogError::Malformed {
            line: line_no,
            reason: reason.to_string(),
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(bad("expected 5 tab-separated fields"));
        }
        let time_s: f64 = fields[0].parse().map_err(|_| bad("bad time"))?;
        if !time_s.is_finite() {
            return Err(bad("bad time"));
        }
        let event: LogEvent = fields[1].parse().map_err(|_| bad("unknown event"))?;
        if fields[2].is_empty() {
            return Err(bad("empty bundle id"));
        }
        out.records.push(TextRecord {
            time_s,
            event,
            bundle: fields[2].to_string(),
            from: fields[3].to_string(),
            to: fields[4].to_string(),
        });
    }
    Ok(out)
}
