use std::collections::BTreeSet;
use std::fs;
use std::net::IpAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicBool;
use std::sync::Arc;
use std::time::Duration;

use clap::Args;
use log::info;
use oppdtn_core::config::{ExperimentConfig, Scenario};
use oppdtn_core::metrics::{reduce, CostMode};
use oppdtn_core::sim::experiment::{run_matrix, ExperimentError};
use oppdtn_core::sim::log::parse_log;
use oppdtn_core::sim::synth::generate_synthetic_contacts;
use oppdtn_core::trace::{detect_format, parse_trace, write_pairwise_intervals, IdMap, TraceFormat};
use oppdtn_core::{EndpointId, RouterKind};
use oppdtn_live::node::NodeError;
use oppdtn_live::{daemon, Node, NodeConfig, SystemClock};

use crate::output::{summary_table, write_atomic, write_reports, RunResult};
use crate::CliError;

fn io_err(what: &str, path: &Path) -> impl FnOnce(std::io::Error) -> CliError {
    let context = format!("{what} {}", path.display());
    move |e| CliError::Runtime(format!("{context}: {e}"))
}

fn experiment_err(e: ExperimentError) -> CliError {
    match e {
        ExperimentError::Synthetic(p) => CliError::Config(p.to_string()),
        ExperimentError::Sim(s) => CliError::Runtime(s.to_string()),
        other => CliError::Data(other.to_string()),
    }
}

fn load_trace(path: &Path, format: TraceFormat, time_scale: f64) -> Result<oppdtn_core::trace::Trace, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Data(format!("cannot read trace {}: {e}", path.display())))?;
    parse_trace(&text, format, time_scale).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn simulate(config_path: &Path, seed_offset: u64, out: Option<&Path>) -> Result<(), CliError> {
    let text = fs::read_to_string(config_path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", config_path.display())))?;
    let mut config = ExperimentConfig::parse(&text).map_err(|e| CliError::Config(e.to_string()))?;
    for s in &mut config.seeds {
        *s = s.wrapping_add(seed_offset);
    }
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| config.out.clone());

    let trace = match &config.scenario {
        Scenario::Trace { path, .. } => {
            // Relative trace paths are taken from the config file's directory.
            let path = if path.is_relative() {
                config_path.parent().unwrap_or(Path::new(".")).join(path)
            } else {
                path.clone()
            };
            let text = fs::read_to_string(&path)
                .map_err(|e| CliError::Data(format!("cannot read trace {}: {e}", path.display())))?;
            let trace = parse_trace(&text, detect_format(&text), 1.0)
                .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            write_atomic(&out.join("trace_ids.txt"), trace.ids.sidecar().as_bytes()).map_err(io_err("write", &out))?;
            Some(trace.contacts)
        }
        Scenario::Synthetic { .. } => None,
    };

    let logs = out.join("logs");
    fs::create_dir_all(&logs).map_err(io_err("create", &logs))?;
    let mode = config.cost_mode;
    let results = run_matrix(&config, trace.as_deref(), |spec, _, mut log| {
        log.meta.push(("cost_mode".into(), mode.to_string()));
        let path = logs.join(format!("{}.log", spec.label()));
        write_atomic(&path, log.to_text().as_bytes()).map_err(|e| format!("write {}: {e}", path.display()))?;
        reduce(log.events(), mode).map_err(|e| e.to_string())
    })
    .map_err(experiment_err)?;

    let mut runs = Vec::with_capacity(results.len());
    for (spec, metrics) in results {
        runs.push(RunResult {
            router: spec.router.to_string(),
            ttl_s: spec.ttl_s,
            seed: spec.seed,
            metrics: metrics.map_err(CliError::Runtime)?,
        });
    }
    let seeds: Vec<String> = config.seeds.iter().map(u64::to_string).collect();
    let notes = [
        ("config", config_path.display().to_string()),
        ("seeds", seeds.join(",")),
    ];
    let rows = write_reports(&out, &mut runs, mode, &notes).map_err(io_err("write reports in", &out))?;
    print!("{}", summary_table(&rows));
    println!("results in {}", out.display());
    Ok(())
}

#[derive(Args, Debug)]
pub struct GenTraceArgs {
    #[arg(long)]
    pub nodes: usize,
    #[arg(long)]
    pub communities: usize,
    #[arg(long)]
    pub days: u32,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Intra-community contacts per pair per hour.
    #[arg(long)]
    pub lambda_in: Option<f64>,
    /// Inter-community contacts per pair per hour.
    #[arg(long)]
    pub lambda_out: Option<f64>,
    #[arg(long)]
    pub mean_contact_s: Option<f64>,
}

pub fn gen_trace(args: &GenTraceArgs) -> Result<(), CliError> {
    // Build the params through the config parser so defaults and checks
    // are shared with experiment configs.
    let mut text = format!(
        "[scenario]\nnodes = {}\ncommunities = {}\ndays = {}\n",
        args.nodes, args.communities, args.days
    );
    for (key, v) in [
        ("lambda_in", args.lambda_in),
        ("lambda_out", args.lambda_out),
        ("mean_contact_s", args.mean_contact_s),
    ] {
        if let Some(v) = v {
            text.push_str(&format!("{key} = {v}\n"));
        }
    }
    let config = ExperimentConfig::parse(&text).map_err(|e| CliError::Config(e.to_string()))?;
    let Scenario::Synthetic { params, .. } = config.scenario else {
        unreachable!("no trace key given")
    };
    let contacts = generate_synthetic_contacts(&params, args.seed).map_err(|e| CliError::Config(e.to_string()))?;
    let body = write_pairwise_intervals(&contacts, &IdMap::identity(params.nodes));
    write_atomic(&args.out, body.as_bytes()).map_err(io_err("write", &args.out))?;
    println!("{} contacts among {} nodes written to {}", contacts.len(), params.nodes, args.out.display());
    Ok(())
}

pub fn report(logs: &Path, out: &Path, cost_mode: Option<&str>) -> Result<(), CliError> {
    let forced = cost_mode
        .map(|m| m.parse::<CostMode>().map_err(CliError::Config))
        .transpose()?;
    let entries = fs::read_dir(logs).map_err(|e| CliError::Data(format!("cannot read {}: {e}", logs.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "log"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Data(format!("no .log files in {}", logs.display())));
    }
    let mut parsed = Vec::new();
    let mut modes = BTreeSet::new();
    for path in &files {
        let text = fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let log = parse_log(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let field = |k: &str| {
            log.meta
                .get(k)
                .cloned()
                .ok_or_else(|| CliError::Data(format!("{}: missing #{k}= header", path.display())))
        };
        let router = field("router")?;
        let num = |k: &str| -> Result<u64, CliError> {
            field(k)?
                .parse()
                .map_err(|_| CliError::Data(format!("{}: bad #{k}= header", path.display())))
        };
        let (ttl_s, seed) = (num("ttl_s")?, num("seed")?);
        if let Some(m) = log.meta.get("cost_mode") {
            modes.insert(m.clone());
        }
        parsed.push((path.clone(), router, ttl_s, seed, log));
    }
    // Without --cost-mode, reuse the mode the logs were produced with.
    let mode = match forced {
        Some(m) => m,
        None if modes.len() == 1 => modes.into_iter().next().unwrap().parse().map_err(CliError::Data)?,
        None => CostMode::default(),
    };
    let mut runs = Vec::new();
    for (path, router, ttl_s, seed, log) in parsed {
        let metrics = reduce(log.events(), mode).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        runs.push(RunResult { router, ttl_s, seed, metrics });
    }
    let notes = [("logs", logs.display().to_string())];
    let rows = write_reports(out, &mut runs, mode, &notes).map_err(io_err("write reports in", out))?;
    print!("{}", summary_table(&rows));
    Ok(())
}

pub fn convert_trace(input: &Path, out: &Path, format: &str, time_scale: f64) -> Result<(), CliError> {
    if !(time_scale > 0.0 && time_scale.is_finite()) {
        return Err(CliError::Config(format!("--time-scale must be positive, got {time_scale}")));
    }
    let format = match format {
        "auto" => {
            let text = fs::read_to_string(input)
                .map_err(|e| CliError::Data(format!("cannot read trace {}: {e}", input.display())))?;
            detect_format(&text)
        }
        "pairwise" => TraceFormat::PairwiseIntervals,
        "events" => TraceFormat::ConnectionEvents,
        other => return Err(CliError::Config(format!("unknown trace format `{other}` (auto|pairwise|events)"))),
    };
    let trace = load_trace(input, format, time_scale)?;
    write_atomic(out, write_pairwise_intervals(&trace.contacts, &trace.ids).as_bytes()).map_err(io_err("write", out))?;
    let mut ids = out.as_os_str().to_owned();
    ids.push(".ids");
    let ids = PathBuf::from(ids);
    write_atomic(&ids, trace.ids.sidecar().as_bytes()).map_err(io_err("write", &ids))?;
    println!(
        "{} contacts among {} nodes written to {} (id map in {})",
        trace.contacts.len(),
        trace.ids.len(),
        out.display(),
        ids.display()
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct NodeArgs {
    /// Endpoint id of this node, e.g. dtn://n01.
    #[arg(long)]
    pub eid: String,
    /// TCP session port.
    #[arg(long, default_value_t = 4556)]
    pub listen: u16,
    /// UDP discovery port.
    #[arg(long, default_value_t = 4555)]
    pub beacon_port: u16,
    /// Beacon destination address.
    #[arg(long, default_value = "255.255.255.255")]
    pub beacon_addr: IpAddr,
    #[arg(long, default_value_t = 5000)]
    pub beacon_interval_ms: u64,
    /// dlife, prophet or epidemic.
    #[arg(long, default_value = "dlife")]
    pub router: String,
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long)]
    pub inbox: PathBuf,
    #[arg(long)]
    pub outbox: PathBuf,
    /// TTL of bundles created from the outbox, seconds.
    #[arg(long, default_value_t = 86_400)]
    pub ttl: u64,
    /// Store capacity in bytes (0 = unlimited).
    #[arg(long, default_value_t = 10_000_000)]
    pub capacity: u64,
    /// Largest accepted outbox payload, bytes.
    #[arg(long, default_value_t = 1_000_000)]
    pub max_payload: u64,
    #[arg(long, default_value_t = 60)]
    pub holdoff_s: u64,
    #[arg(long, default_value_t = 30)]
    pub session_timeout_s: u64,
}

pub fn node(args: &NodeArgs) -> Result<(), CliError> {
    let eid = EndpointId::parse(&args.eid).map_err(|e| CliError::Config(e.to_string()))?;
    let router: RouterKind = args.router.parse().map_err(|e| CliError::Config(format!("{e}")))?;
    if args.ttl == 0 {
        return Err(CliError::Config("--ttl must be positive".into()));
    }
    let mut config = NodeConfig::new(eid, router, args.store.clone(), args.inbox.clone(), args.outbox.clone());
    config.listen_port = args.listen;
    config.beacon_port = args.beacon_port;
    config.beacon_addr = args.beacon_addr;
    config.beacon_interval = Duration::from_millis(args.beacon_interval_ms.max(1));
    config.ttl_s = args.ttl;
    config.capacity_bytes = args.capacity;
    config.max_payload = args.max_payload;
    config.holdoff = Duration::from_secs(args.holdoff_s);
    config.session_timeout = Duration::from_secs(args.session_timeout_s.max(1));

    let node = Node::open(config, Arc::new(SystemClock)).map_err(|e| match e {
        NodeError::Snapshot(s) => CliError::Data(s.to_string()),
        other => CliError::Runtime(other.to_string()),
    })?;
    let shutdown = Arc::new(AtomicBool::new(false));
    for sig in [signal_hook::consts::SIGTERM, signal_hook::consts::SIGINT] {
        signal_hook::flag::register(sig, shutdown.clone()).map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    daemon::run(Arc::new(node), shutdown).map_err(|e| CliError::Runtime(e.to_string()))?;
    info!("clean shutdown");
    Ok(())
}
