//! Run output: per-replica final state plus time-stamped commit records and
//! counters. Everything is plainly ordered so serialization is byte-stable
//! for identical `(seed, config)` inputs.

use dagcore::{Micros, TxId};
use serde::{Deserialize, Serialize};

use crate::config::SimConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefRecord {
    pub author: u16,
    pub round: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommittedRef {
    pub author: u16,
    pub round: u32,
    pub anchor_round: u32,
    pub anchor_rank: u16,
    pub position: usize,
}

/// One committed block at one replica, as it happened.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitRecord {
    pub time_us: Micros,
    pub replica: u16,
    pub position: usize,
    pub author: u16,
    pub round: u32,
    pub anchor_round: u32,
    pub anchor_rank: u16,
    /// Commit depth in rounds: the anchor slot's decision round plus one,
    /// minus the block's round. A skeleton block committed in its own slot
    /// measures 2, the protocol's fault-free commit latency in hops.
    pub hops: u32,
    pub tx_count: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct DecidedSlotRecord {
    pub round: u32,
    pub rank: u16,
    /// "commit" or "skip"
    pub state: &'static str,
    pub block: Option<RefRecord>,
    /// "direct" or "indirect"
    pub path: &'static str,
}

impl DecidedSlotRecord {
    pub fn is_commit(&self) -> bool {
        self.state == "commit"
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatencySample {
    pub client: u16,
    pub seq: u32,
    pub submitted_us: Micros,
    pub committed_us: Micros,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmittedTx {
    pub client: u16,
    pub seq: u32,
    pub at_us: Micros,
    pub accepted: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReplicaTrace {
    pub id: u16,
    /// Final committed sequence (at the horizon, or at crash time if down).
    pub committed: Vec<CommittedRef>,
    /// Final commit/skip classifications.
    pub decided: Vec<DecidedSlotRecord>,
    /// Transactions in committed order, flattened.
    pub committed_txs: Vec<TxId>,
    pub timeout_fires: u64,
    pub messages_sent: u64,
    pub accepted_txs: u64,
    pub rejected_txs: u64,
    pub malformed: u64,
    pub crashes_us: Vec<Micros>,
    pub recoveries_us: Vec<Micros>,
    /// Committed sequence snapshot taken at each crash instant.
    pub crash_snapshots: Vec<Vec<CommittedRef>>,
    /// Log replay refused to reproduce the pre-crash state. Never happens
    /// with sound decision rules; the safety oracle reports it.
    pub recovery_failure: Option<String>,
    /// Slots whose incrementally memoized decision disagrees with a
    /// from-scratch re-derivation over the final view. Sound rules are
    /// monotone, so this is empty unless the rules are broken.
    pub decision_audit_failures: Vec<(u32, u16)>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimTrace {
    pub config: SimConfig,
    pub replicas: Vec<ReplicaTrace>,
    pub commits: Vec<CommitRecord>,
    /// Every block any proposer emitted, with its payload.
    pub emitted: Vec<(RefRecord, Vec<TxId>)>,
    pub submitted: Vec<SubmittedTx>,
    pub latencies: Vec<LatencySample>,
    pub messages_sent: u64,
    pub messages_delivered: u64,
    pub messages_dropped_to_crashed: u64,
    pub messages_in_flight_at_horizon: u64,
}

impl SimTrace {
    /// One JSON record per line: the config, then each commit, each latency
    /// sample, and each replica summary. Byte-identical across runs with the
    /// same seed and config.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let mut push = |v: serde_json::Value| {
            out.push_str(&serde_json::to_string(&v).expect("trace serializes"));
            out.push('\n');
        };
        push(serde_json::json!({ "kind": "config", "data": self.config }));
        for c in &self.commits {
            push(serde_json::json!({ "kind": "commit", "data": c }));
        }
        for l in &self.latencies {
            push(serde_json::json!({ "kind": "latency", "data": l }));
        }
        for r in &self.replicas {
            push(serde_json::json!({ "kind": "replica", "data": r }));
        }
        push(serde_json::json!({
            "kind": "network",
            "sent": self.messages_sent,
            "delivered": self.messages_delivered,
            "dropped_to_crashed": self.messages_dropped_to_crashed,
            "in_flight_at_horizon": self.messages_in_flight_at_horizon,
        }));
        out
    }

    pub fn replica(&self, id: u16) -> &ReplicaTrace {
        &self.replicas[id as usize]
    }

    /// Committed transaction throughput of one replica over the whole run,
    /// in transactions per simulated second.
    pub fn throughput_tx_per_s(&self, id: u16) -> f64 {
        let total: usize = self.replica(id).committed_txs.len();
        total as f64 / (self.config.horizon_ms as f64 / 1000.0)
    }

    /// Mean per-replica committed-transaction throughput over replicas alive
    /// at the horizon.
    pub fn mean_alive_throughput(&self) -> f64 {
        let alive: Vec<&ReplicaTrace> = self
            .replicas
            .iter()
            .filter(|r| r.crashes_us.len() == r.recoveries_us.len())
            .collect();
        if alive.is_empty() {
            return 0.0;
        }
        alive.iter().map(|r| self.throughput_tx_per_s(r.id)).sum::<f64>() / alive.len() as f64
    }
}
