//! The `run` subcommand: load a scenario file, apply flag overrides, run the
//! simulation, run the safety oracle, write reports.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser};
use netsim::{FaultEvent, NetModelCfg, SimConfig, SimTrace};

use crate::metrics::Metrics;
use crate::safety::{check_safety, OracleVerdict};

#[derive(Parser, Debug)]
#[command(name = "harness", about = "DAG consensus simulator and verification harness")]
pub enum Cli {
    /// Run one scenario: simulate, verify, report.
    Run(RunArgs),
}

#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    /// Scenario file (TOML).
    #[arg(long)]
    pub scenario: PathBuf,
    /// Override the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory for trace.jsonl and metrics.json.
    #[arg(long, default_value = "sim-out")]
    pub out: PathBuf,
    #[arg(long)]
    pub replicas: Option<usize>,
    #[arg(long)]
    pub leaders_per_round: Option<u16>,
    /// Switch the network model, keeping the scenario's characteristic delay.
    #[arg(long, value_parser = ["sync", "psync", "random"])]
    pub net: Option<String>,
    /// GST in ms (partial synchrony).
    #[arg(long)]
    pub gst: Option<f64>,
    /// Post-GST delay bound in ms (partial synchrony).
    #[arg(long)]
    pub delta: Option<f64>,
    /// Crash injection, `replica@ms`; repeatable.
    #[arg(long = "crash", value_parser = parse_fault)]
    pub crashes: Vec<FaultEvent>,
    /// Recovery injection, `replica@ms`; repeatable.
    #[arg(long = "recover", value_parser = parse_fault)]
    pub recoveries: Vec<FaultEvent>,
    /// Transactions per second, cluster-wide.
    #[arg(long)]
    pub tx_rate: Option<f64>,
    #[arg(long)]
    pub tx_size: Option<usize>,
    #[arg(long)]
    pub batch_cap: Option<usize>,
    /// Round timeout in ms.
    #[arg(long)]
    pub timeout: Option<u64>,
    /// Simulation horizon in ms.
    #[arg(long)]
    pub horizon: Option<u64>,
    /// Wait for a designated random f+1 quorum each round instead of the
    /// first arrivals.
    #[arg(long)]
    pub random_quorum: bool,
    /// Verification hook: weaken the direct-commit quorum to f. The safety
    /// oracle must catch the fallout.
    #[arg(long, hide = true)]
    pub break_support_quorum: bool,
    /// Verification hook: let anchors sit in the slot's own decision round.
    #[arg(long, hide = true)]
    pub break_anchor_bound: bool,
}

fn parse_fault(s: &str) -> Result<FaultEvent, String> {
    let (replica, at) = s.split_once('@').ok_or("expected replica@ms")?;
    Ok(FaultEvent {
        replica: replica.parse().map_err(|e| format!("bad replica: {e}"))?,
        at_ms: at.parse().map_err(|e| format!("bad time: {e}"))?,
    })
}

fn characteristic_delay_ms(net: &NetModelCfg) -> f64 {
    match net {
        NetModelCfg::Sync { delay_ms, .. } => *delay_ms,
        NetModelCfg::Psync { delta_ms, .. } => *delta_ms,
        NetModelCfg::Random { mean_delay_ms, .. } => *mean_delay_ms,
    }
}

/// Flags beat file values.
pub fn apply_overrides(cfg: &mut SimConfig, args: &RunArgs) {
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(n) = args.replicas {
        cfg.n = n;
        cfg.leaders_per_round = cfg.leaders_per_round.min(n as u16);
    }
    if let Some(k) = args.leaders_per_round {
        cfg.leaders_per_round = k;
    }
    if let Some(model) = &args.net {
        let base = characteristic_delay_ms(&cfg.net);
        cfg.net = match model.as_str() {
            "sync" => NetModelCfg::Sync { delay_ms: base, slow: vec![] },
            "random" => NetModelCfg::Random { mean_delay_ms: base, slow: vec![] },
            "psync" => NetModelCfg::Psync {
                gst_ms: args.gst.unwrap_or(1000.0),
                delta_ms: args.delta.unwrap_or(base * 2.0),
                pre_gst_mean_ms: base * 8.0,
            },
            _ => unreachable!("clap validates"),
        };
    } else if let NetModelCfg::Psync { gst_ms, delta_ms, .. } = &mut cfg.net {
        if let Some(gst) = args.gst {
            *gst_ms = gst;
        }
        if let Some(delta) = args.delta {
            *delta_ms = delta;
        }
    }
    cfg.faults.crashes.extend(args.crashes.iter().copied());
    cfg.faults.recoveries.extend(args.recoveries.iter().copied());
    if let Some(rate) = args.tx_rate {
        cfg.tx_rate = rate;
    }
    if let Some(size) = args.tx_size {
        cfg.tx_size = size;
    }
    if let Some(cap) = args.batch_cap {
        cfg.batch_cap = cap;
    }
    if let Some(t) = args.timeout {
        cfg.timeout_ms = t;
    }
    if let Some(h) = args.horizon {
        cfg.horizon_ms = h;
    }
    if args.random_quorum {
        cfg.random_quorum = true;
    }
    if args.break_support_quorum {
        cfg.break_support_quorum = true;
    }
    if args.break_anchor_bound {
        cfg.break_anchor_bound = true;
    }
}

pub struct RunOutcome {
    pub trace: SimTrace,
    pub metrics: Metrics,
    pub verdict: OracleVerdict,
    pub trace_path: PathBuf,
    pub metrics_path: PathBuf,
}

/// Load, simulate, verify, report. The process exit code is 0 on success,
/// 2 on an oracle failure (config errors surface as `Err`).
pub fn run_scenario(args: &RunArgs) -> Result<RunOutcome> {
    let text = std::fs::read_to_string(&args.scenario)
        .with_context(|| format!("reading scenario {}", args.scenario.display()))?;
    let mut cfg = SimConfig::from_toml(&text).context("parsing scenario")?;
    apply_overrides(&mut cfg, args);
    cfg.validate().context("scenario after flag overrides")?;

    let trace = netsim::run(&cfg);
    let metrics = Metrics::from_trace(&trace);
    let verdict = check_safety(&trace);
    let (trace_path, metrics_path) = write_reports(&args.out, &trace, &metrics, &verdict)?;
    Ok(RunOutcome { trace, metrics, verdict, trace_path, metrics_path })
}

/// `trace.jsonl`: one structured record per commit and metric sample.
/// `metrics.json`: the summary, with seed and config embedded.
pub fn write_reports(
    out_dir: &Path,
    trace: &SimTrace,
    metrics: &Metrics,
    verdict: &OracleVerdict,
) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    let trace_path = out_dir.join("trace.jsonl");
    std::fs::write(&trace_path, trace.to_jsonl())?;
    let metrics_path = out_dir.join("metrics.json");
    let summary = serde_json::json!({
        "config": trace.config,
        "metrics": metrics,
        "safety": verdict,
    });
    std::fs::write(&metrics_path, format!("{}\n", serde_json::to_string_pretty(&summary)?))?;
    Ok((trace_path, metrics_path))
}
