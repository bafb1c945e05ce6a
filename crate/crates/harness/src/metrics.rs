//! Metrics computed from a finished trace.

use std::collections::BTreeMap;

use netsim::SimTrace;
use serde::Serialize;

#[derive(Clone, Copy, Debug, Serialize)]
pub struct LatencyStats {
    pub p50_ms: f64,
    pub p99_ms: f64,
    pub mean_ms: f64,
    pub samples: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct Metrics {
    pub seed: u64,
    /// Committed transactions per simulated second, averaged over replicas
    /// alive at the horizon.
    pub throughput_tx_per_s: f64,
    /// End-to-end submission-to-commit latency at the home replica. Absent
    /// when no transaction committed.
    pub latency: Option<LatencyStats>,
    /// Commit depth in rounds -> number of commit records.
    pub hop_histogram: Vec<(u32, u64)>,
    pub timeout_fires_total: u64,
    pub messages_sent: u64,
    pub commit_records: u64,
    pub direct_decisions: u64,
    pub indirect_decisions: u64,
    pub accepted_txs: u64,
    pub rejected_txs: u64,
}

fn percentile(sorted: &[u64], q: f64) -> f64 {
    let idx = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[idx] as f64 / 1000.0
}

impl Metrics {
    pub fn from_trace(trace: &SimTrace) -> Self {
        let mut lat_us: Vec<u64> =
            trace.latencies.iter().map(|l| l.committed_us - l.submitted_us).collect();
        lat_us.sort_unstable();
        let latency = if lat_us.is_empty() {
            None
        } else {
            Some(LatencyStats {
                p50_ms: percentile(&lat_us, 0.50),
                p99_ms: percentile(&lat_us, 0.99),
                mean_ms: lat_us.iter().sum::<u64>() as f64 / lat_us.len() as f64 / 1000.0,
                samples: lat_us.len(),
            })
        };

        let mut hops: BTreeMap<u32, u64> = BTreeMap::new();
        for c in &trace.commits {
            *hops.entry(c.hops).or_default() += 1;
        }

        let mut direct = 0;
        let mut indirect = 0;
        for r in &trace.replicas {
            for d in &r.decided {
                if d.path == "direct" {
                    direct += 1;
                } else {
                    indirect += 1;
                }
            }
        }

        Self {
            seed: trace.config.seed,
            throughput_tx_per_s: trace.mean_alive_throughput(),
            latency,
            hop_histogram: hops.into_iter().collect(),
            timeout_fires_total: trace.replicas.iter().map(|r| r.timeout_fires).sum(),
            messages_sent: trace.messages_sent,
            commit_records: trace.commits.len() as u64,
            direct_decisions: direct,
            indirect_decisions: indirect,
            accepted_txs: trace.replicas.iter().map(|r| r.accepted_txs).sum(),
            rejected_txs: trace.replicas.iter().map(|r| r.rejected_txs).sum(),
        }
    }
}
