//! Experiment configuration: `[section]` headers followed by `key = value`
//! lines. `#` starts a comment. Every key is listed in [`KEYS`], which is
//! also the source of the generated documentation table; unknown keys are
//! rejected.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use thiserror::Error;

use crate::metrics::CostMode;
use crate::routing::dlife::DlifeParams;
use crate::routing::prophet::ProphetParams;
use crate::routing::{RouterKind, RouterParams};
use crate::sim::synth::{SyntheticParams, DEFAULT_ACTIVITY_PROFILE};
use crate::sim::LinkModel;
use crate::types::SimClock;

pub struct KeySpec {
    pub section: &'static str,
    pub key: &'static str,
    /// Default in config syntax; empty means "unset".
    pub default: &'static str,
    pub doc: &'static str,
}

const fn key(section: &'static str, key: &'static str, default: &'static str, doc: &'static str) -> KeySpec {
    KeySpec {
        section,
        key,
        default,
        doc,
    }
}

pub const KEYS: &[KeySpec] = &[
    key("scenario", "trace", "", "contact trace file (pairwise intervals or connection events); unset = synthetic generator"),
    key("scenario", "nodes", "36", "node count (synthetic); with a trace, an explicit lower bound on the node count"),
    key("scenario", "communities", "3", "synthetic: number of balanced communities"),
    key("scenario", "days", "21", "synthetic: trace length in days"),
    key("scenario", "seed", "1", "synthetic: base trace seed (run seed is added)"),
    key("scenario", "lambda_in", "0.16", "synthetic: intra-community contacts per pair per hour"),
    key("scenario", "lambda_out", "0.0026", "synthetic: inter-community contacts per pair per hour"),
    key("scenario", "mean_contact_s", "600", "synthetic: mean contact duration, seconds"),
    key("scenario", "activity_profile", "", "synthetic: 24 comma-separated hour-of-day rate multipliers (unset = built-in daily routine)"),
    key("scenario", "duration_s", "", "simulated seconds (unset = days*86400, or trace end)"),
    key("router", "types", "dlife,prophet", "comma-separated routers to compare: dlife, prophet, epidemic"),
    key("router", "dlife_samples", "24", "dLife daily samples per day"),
    key("router", "dlife_damping", "0.8", "dLife importance damping factor"),
    key("router", "dlife_blend", "on", "dLife blend all daily samples (on) or use the current one only (off)"),
    key("router", "prophet_pinit", "0.75", "PROPHET initialization constant"),
    key("router", "prophet_beta", "0.25", "PROPHET transitivity scaling"),
    key("router", "prophet_gamma", "0.98", "PROPHET aging constant"),
    key("router", "prophet_time_unit_s", "30", "PROPHET aging time unit, seconds"),
    key("traffic", "messages", "6000", "number of messages created"),
    key("traffic", "size_min", "1000", "minimum message size, bytes"),
    key("traffic", "size_max", "100000", "maximum message size, bytes"),
    key("traffic", "start_s", "0", "start of the creation window, seconds"),
    key("traffic", "end_s", "", "end of the creation window, seconds (unset = duration)"),
    key("traffic", "ttls", "86400,172800,345600,604800,1814400", "comma-separated message TTLs, seconds"),
    key("traffic", "workload_seed", "1", "workload seed (run seed is added)"),
    key("node", "capacity_bytes", "0", "per-node storage, bytes (0 = unlimited)"),
    key("link", "bandwidth_bps", "250000", "link bandwidth, bytes per second"),
    key("link", "setup_s", "0.1", "per-bundle transfer setup latency, seconds"),
    key("run", "seeds", "1,2,3,4,5", "comma-separated run seeds"),
    key("run", "out", "results", "output directory"),
    key("run", "cost_mode", "replicas", "replicas (count the delivering hop) or overhead (exclude it)"),
];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `[section]` or `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: key outside of any section")]
    NoSection { line: usize },
    #[error("line {line}: unknown section [{section}]")]
    UnknownSection { line: usize, section: String },
    #[error("line {line}: unknown key `{key}` in [{section}]")]
    UnknownKey {
        line: usize,
        section: String,
        key: String,
    },
    #[error("[{section}] {key} = {value:?}: {reason}")]
    BadValue {
        section: String,
        key: String,
        value: String,
        reason: String,
    },
}

impl ConfigError {
    fn bad(section: &str, key: &str, value: &str, reason: impl Into<String>) -> Self {
        ConfigError::BadValue {
            section: section.into(),
            key: key.into(),
            value: value.into(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Scenario {
    Trace { path: PathBuf, nodes: Option<usize> },
    Synthetic { params: SyntheticParams, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrafficConfig {
    pub messages: usize,
    pub size_min: u64,
    pub size_max: u64,
    pub start_s: f64,
    pub end_s: Option<f64>,
    pub ttls: Vec<u64>,
    pub workload_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub duration_s: Option<f64>,
    pub routers: Vec<RouterKind>,
    pub router_params: RouterParams,
    pub traffic: TrafficConfig,
    pub capacity_bytes: u64,
    pub link: LinkModel,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    pub cost_mode: CostMode,
}

struct Values {
    map: BTreeMap<(String, String), String>,
    explicit: BTreeSet<(String, String)>,
}

impl Values {
    fn raw(&self, section: &str, key: &str) -> &str {
        self.map
            .get(&(section.to_string(), key.to_string()))
            .map(String::as_str)
            .expect("key missing from KEYS")
    }

    fn is_explicit(&self, section: &str, key: &str) -> bool {
        self.explicit.contains(&(section.to_string(), key.to_string()))
    }

    fn parse<T: std::str::FromStr>(&self, section: &str, key: &str) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.raw(section, key);
        v.parse::<T>()
            .map_err(|e| ConfigError::bad(section, key, v, e.to_string()))
    }

    fn optional<T: std::str::FromStr>(&self, section: &str, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        if self.raw(section, key).is_empty() {
            Ok(None)
        } else {
            self.parse(section, key).map(Some)
        }
    }

    fn list<T: std::str::FromStr>(&self, section: &str, key: &str) -> Result<Vec<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.raw(section, key);
        v.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<T>()
                    .map_err(|e| ConfigError::bad(section, key, v, e.to_string()))
            })
            .collect()
    }

    fn switch(&self, section: &str, key: &str) -> Result<bool, ConfigError> {
        match self.raw(section, key) {
            "on" | "true" | "yes" | "1" => Ok(true),
            "off" | "false" | "no" | "0" => Ok(false),
            v => Err(ConfigError::bad(section, key, v, "expected on/off")),
        }
    }
}

fn ensure(cond: bool, section: &str, key: &str, value: impl ToString, reason: &str) -> Result<(), ConfigError> {
    if cond {
        Ok(())
    } else {
        Err(ConfigError::bad(section, key, &value.to_string(), reason))
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut values = Values {
            map: KEYS
                .iter()
                .map(|k| ((k.section.to_string(), k.key.to_string()), k.default.to_string()))
                .collect(),
            explicit: BTreeSet::new(),
        };
        let sections: BTreeSet<&str> = KEYS.iter().map(|k| k.section).collect();
        let mut section: Option<String> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or(ConfigError::Syntax { line: line_no })?
                    .trim();
                if !sections.contains(name) {
                    return Err(ConfigError::UnknownSection {
                        line: line_no,
                        section: name.to_string(),
                    });
                }
                section = Some(name.to_string());
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: line_no })?;
            let (k, v) = (k.trim(), v.trim());
            let sec = section.clone().ok_or(ConfigError::NoSection { line: line_no })?;
            let slot = (sec.clone(), k.to_string());
            if !values.map.contains_key(&slot) {
                return Err(ConfigError::UnknownKey {
                    line: line_no,
                    section: sec,
                    key: k.to_string(),
                });
            }
            values.map.insert(slot.clone(), v.to_string());
            values.explicit.insert(slot);
        }
        Self::build(&values)
    }

    fn build(v: &Values) -> Result<Self, ConfigError> {
        let nodes: usize = v.parse("scenario", "nodes")?;
        ensure(nodes >= 2, "scenario", "nodes", nodes, "need at least 2 nodes")?;
        let scenario = match v.optional::<PathBuf>("scenario", "trace")? {
            Some(path) => Scenario::Trace {
                path,
                nodes: v.is_explicit("scenario", "nodes").then_some(nodes),
            },
            None => {
                let activity_profile = match v.raw("scenario", "activity_profile") {
                    "" => DEFAULT_ACTIVITY_PROFILE.to_vec(),
                    _ => v.list::<f64>("scenario", "activity_profile")?,
                };
                let params = SyntheticParams {
                    nodes,
                    communities: v.parse("scenario", "communities")?,
                    days: v.parse("scenario", "days")?,
                    lambda_in: v.parse("scenario", "lambda_in")?,
                    lambda_out: v.parse("scenario", "lambda_out")?,
                    mean_contact_s: v.parse("scenario", "mean_contact_s")?,
                    activity_profile,
                };
                params
                    .validate()
                    .map_err(|e| ConfigError::bad("scenario", e.key, &e.value, e.reason))?;
                Scenario::Synthetic {
                    params,
                    seed: v.parse("scenario", "seed")?,
                }
            }
        };
        let duration_s: Option<f64> = v.optional("scenario", "duration_s")?;
        if let Some(d) = duration_s {
            ensure(d > 0.0, "scenario", "duration_s", d, "must be positive")?;
        }

        let routers: Vec<RouterKind> = v.list("router", "types")?;
        ensure(!routers.is_empty(), "router", "types", "", "at least one router")?;
        let samples: usize = v.parse("router", "dlife_samples")?;
        ensure(samples > 0 && 86_400 % samples == 0, "router", "dlife_samples", samples, "must divide 86400")?;
        let damping: f64 = v.parse("router", "dlife_damping")?;
        ensure((0.0..=1.0).contains(&damping), "router", "dlife_damping", damping, "must be in [0, 1]")?;
        let prophet = ProphetParams {
            p_init: v.parse("router", "prophet_pinit")?,
            beta: v.parse("router", "prophet_beta")?,
            gamma: v.parse("router", "prophet_gamma")?,
            time_unit_s: v.parse("router", "prophet_time_unit_s")?,
        };
        for (key, val) in [
            ("prophet_pinit", prophet.p_init),
            ("prophet_beta", prophet.beta),
            ("prophet_gamma", prophet.gamma),
        ] {
            ensure(val > 0.0 && val <= 1.0, "router", key, val, "must be in (0, 1]")?;
        }
        ensure(prophet.time_unit_s > 0.0, "router", "prophet_time_unit_s", prophet.time_unit_s, "must be positive")?;
        let router_params = RouterParams {
            dlife: DlifeParams {
                clock: SimClock::new(86_400, samples),
                damping,
                blend: v.switch("router", "dlife_blend")?,
            },
            prophet,
        };

        let traffic = TrafficConfig {
            messages: v.parse("traffic", "messages")?,
            size_min: v.parse("traffic", "size_min")?,
            size_max: v.parse("traffic", "size_max")?,
            start_s: v.parse("traffic", "start_s")?,
            end_s: v.optional("traffic", "end_s")?,
            ttls: v.list("traffic", "ttls")?,
            workload_seed: v.parse("traffic", "workload_seed")?,
        };
        ensure(traffic.size_min > 0, "traffic", "size_min", traffic.size_min, "must be positive")?;
        ensure(
            traffic.size_min <= traffic.size_max,
            "traffic",
            "size_max",
            traffic.size_max,
            "must be >= size_min",
        )?;
        ensure(traffic.start_s >= 0.0, "traffic", "start_s", traffic.start_s, "must be >= 0")?;
        if let Some(end) = traffic.end_s {
            ensure(end > traffic.start_s, "traffic", "end_s", end, "must be after start_s")?;
        }
        ensure(!traffic.ttls.is_empty(), "traffic", "ttls", "", "at least one TTL")?;
        ensure(traffic.ttls.iter().all(|&t| t > 0), "traffic", "ttls", v.raw("traffic", "ttls"), "TTLs must be positive")?;

        let link = LinkModel {
            bandwidth_bps: v.parse("link", "bandwidth_bps")?,
            setup_s: v.parse("link", "setup_s")?,
        };
        ensure(link.bandwidth_bps > 0.0, "link", "bandwidth_bps", link.bandwidth_bps, "must be positive")?;
        ensure(link.setup_s >= 0.0, "link", "setup_s", link.setup_s, "must be >= 0")?;

        let seeds: Vec<u64> = v.list("run", "seeds")?;
        ensure(!seeds.is_empty(), "run", "seeds", "", "at least one seed")?;
        let cost_mode: CostMode = v.parse("run", "cost_mode")?;

        Ok(ExperimentConfig {
            scenario,
            duration_s,
            routers,
            router_params,
            traffic,
            capacity_bytes: v.parse("node", "capacity_bytes")?,
            link,
            seeds,
            out: v.parse("run", "out")?,
            cost_mode,
        })
    }
}

/// Markdown table of every key with its default, generated from [`KEYS`].
pub fn key_table() -> String {
    let mut out = String::from("| key | default | meaning |\n|---|---|---|\n");
    for k in KEYS {
        let default = if k.default.is_empty() { "(unset)" } else { k.default };
        out.push_str(&format!("| `{}.{}` | `{}` | {} |\n", k.section, k.key, default, k.doc));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse() {
        let c = ExperimentConfig::parse("").unwrap();
        assert_eq!(c.routers, vec![RouterKind::Dlife, RouterKind::Prophet]);
        assert_eq!(c.traffic.ttls, vec![86_400, 172_800, 345_600, 604_800, 1_814_400]);
        assert_eq!(c.traffic.messages, 6000);
        assert_eq!(c.seeds.len(), 5);
        assert!(matches!(c.scenario, Scenario::Synthetic { params: ref p, seed: 1 } if p.nodes == 36 && p.activity_profile.len() == 24));
        assert_eq!(c.router_params.prophet, ProphetParams::default());
    }

    #[test]
    fn overrides_and_comments() {
        let text = "# experiment\n[router]\ntypes = epidemic, dlife  # two\ndlife_blend = off\n[scenario]\ntrace = t.txt\n[run]\nseeds = 7\n";
        let c = ExperimentConfig::parse(text).unwrap();
        assert_eq!(c.routers, vec![RouterKind::Epidemic, RouterKind::Dlife]);
        assert!(!c.router_params.dlife.blend);
        assert_eq!(c.seeds, vec![7]);
        assert_eq!(
            c.scenario,
            Scenario::Trace {
                path: "t.txt".into(),
                nodes: None
            }
        );
    }

    #[test]
    fn unknown_key_names_section_and_key() {
        let err = ExperimentConfig::parse("[router]\ngamma_typo = 1\n").unwrap_err();
        assert_eq!(
            err,
            ConfigError::UnknownKey {
                line: 2,
                section: "router".into(),
                key: "gamma_typo".into()
            }
        );
        assert!(err.to_string().contains("gamma_typo"));
        assert!(matches!(
            ExperimentConfig::parse("[bogus]\n"),
            Err(ConfigError::UnknownSection { .. })
        ));
        assert!(matches!(ExperimentConfig::parse("seeds = 1\n"), Err(ConfigError::NoSection { .. })));
    }

    #[test]
    fn invalid_values_are_rejected() {
        for text in [
            "[traffic]\nsize_min = 10\nsize_max = 5\n",
            "[run]\nseeds =\n",
            "[scenario]\nnodes = 1\n",
            "[router]\ntypes = flood\n",
            "[link]\nbandwidth_bps = 0\n",
            "[traffic]\nttls = 0\n",
            "[scenario]\nlambda_in = -1\n",
        ] {
            assert!(matches!(ExperimentConfig::parse(text), Err(ConfigError::BadValue { .. })), "{text}");
        }
    }

    #[test]
    fn key_table_lists_every_key() {
        let table = key_table();
        for k in KEYS {
            assert!(table.contains(&format!("`{}.{}`", k.section, k.key)));
        }
        assert_eq!(table.lines().count(), KEYS.len() + 2);
    }
}
