//! Scenario configuration: everything a run needs, loadable from TOML and
//! embedded verbatim into the trace for reproducibility.

use dagcore::{Committee, DecisionRules, Micros, QuorumMode, ReadinessRule, ScheduleConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to parse scenario: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

/// Per-replica delay multiplier, for degraded-link scenarios.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlowLink {
    pub replica: u16,
    pub factor: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum NetModelCfg {
    /// Fixed per-link delays: `delay_ms`, scaled by any matching slow-link
    /// factor on the sender or receiver side.
    Sync {
        delay_ms: f64,
        #[serde(default)]
        slow: Vec<SlowLink>,
    },
    /// Partial synchrony: exponential delays with mean `pre_gst_mean_ms`
    /// before GST, uniform within `delta_ms` afterwards.
    Psync {
        gst_ms: f64,
        delta_ms: f64,
        pre_gst_mean_ms: f64,
    },
    /// Random asynchrony: i.i.d. exponential delay per message, so per-round
    /// arrival order is a random permutation.
    Random {
        mean_delay_ms: f64,
        #[serde(default)]
        slow: Vec<SlowLink>,
    },
}

impl Default for NetModelCfg {
    fn default() -> Self {
        NetModelCfg::Sync { delay_ms: 50.0, slow: Vec::new() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultEvent {
    pub replica: u16,
    pub at_ms: u64,
}

/// Crash-fault injection plan. At most `f` replicas may be down at once.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FaultPlan {
    #[serde(default)]
    pub crashes: Vec<FaultEvent>,
    #[serde(default)]
    pub recoveries: Vec<FaultEvent>,
}

impl FaultPlan {
    /// Peak number of simultaneously crashed replicas.
    pub fn max_simultaneous(&self) -> usize {
        let mut timeline: Vec<(u64, i64)> = self
            .crashes
            .iter()
            .map(|c| (c.at_ms, 1i64))
            .chain(self.recoveries.iter().map(|r| (r.at_ms, -1i64)))
            .collect();
        timeline.sort();
        let mut down = 0i64;
        let mut peak = 0i64;
        for (_, delta) in timeline {
            down += delta;
            peak = peak.max(down);
        }
        peak.max(0) as usize
    }
}

fn default_true() -> bool {
    true
}

fn default_queue_cap() -> usize {
    1_000_000
}

fn default_tx_size() -> usize {
    18
}

fn default_batch_cap() -> usize {
    256
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub n: usize,
    #[serde(default = "one")]
    pub leaders_per_round: u16,
    #[serde(default)]
    pub seed: u64,
    pub horizon_ms: u64,
    #[serde(default = "default_timeout")]
    pub timeout_ms: u64,
    #[serde(default = "default_batch_cap")]
    pub batch_cap: usize,
    #[serde(default = "default_queue_cap")]
    pub queue_cap: usize,
    /// Cluster-wide submission rate, transactions per simulated second.
    #[serde(default)]
    pub tx_rate: f64,
    #[serde(default = "default_tx_size")]
    pub tx_size: usize,
    /// Stop submitting at this instant (drain phase); default: the horizon.
    #[serde(default)]
    pub workload_stop_ms: Option<u64>,
    #[serde(default)]
    pub random_quorum: bool,
    #[serde(default = "default_true")]
    pub require_skeletons: bool,
    #[serde(default)]
    pub net: NetModelCfg,
    #[serde(default)]
    pub faults: FaultPlan,
    /// Verification hooks: deliberately weaken the decision rules so the
    /// safety oracle can demonstrate detection. Never set in normal runs.
    #[serde(default)]
    pub break_support_quorum: bool,
    #[serde(default)]
    pub break_anchor_bound: bool,
}

fn one() -> u16 {
    1
}

fn default_timeout() -> u64 {
    500
}

impl SimConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: SimConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n < 3 || self.n % 2 == 0 {
            return Err(ConfigError::Invalid(format!("n must be odd and >= 3, got {}", self.n)));
        }
        let f = (self.n - 1) / 2;
        if self.leaders_per_round < 1 || self.leaders_per_round as usize > self.n {
            return Err(ConfigError::Invalid("leaders_per_round must be in [1, n]".into()));
        }
        if self.horizon_ms == 0 {
            return Err(ConfigError::Invalid("horizon_ms must be positive".into()));
        }
        if self.timeout_ms == 0 {
            return Err(ConfigError::Invalid("timeout_ms must be positive".into()));
        }
        for ev in self.faults.crashes.iter().chain(&self.faults.recoveries) {
            if ev.replica as usize >= self.n {
                return Err(ConfigError::Invalid(format!("fault on unknown replica {}", ev.replica)));
            }
        }
        if self.faults.max_simultaneous() > f {
            return Err(ConfigError::Invalid(format!(
                "fault plan crashes more than f = {f} replicas at once"
            )));
        }
        match &self.net {
            NetModelCfg::Sync { delay_ms, .. } if *delay_ms <= 0.0 => {
                return Err(ConfigError::Invalid("sync delay must be positive".into()));
            }
            NetModelCfg::Psync { delta_ms, pre_gst_mean_ms, .. }
                if *delta_ms <= 0.0 || *pre_gst_mean_ms <= 0.0 =>
            {
                return Err(ConfigError::Invalid("psync delays must be positive".into()));
            }
            NetModelCfg::Random { mean_delay_ms, .. } if *mean_delay_ms <= 0.0 => {
                return Err(ConfigError::Invalid("random mean delay must be positive".into()));
            }
            _ => {}
        }
        Ok(())
    }

    pub fn committee(&self) -> Committee {
        Committee::new(self.n)
    }

    pub fn schedule(&self) -> ScheduleConfig {
        ScheduleConfig::new(self.committee(), self.leaders_per_round)
    }

    pub fn readiness_rule(&self) -> ReadinessRule {
        let mode =
            if self.random_quorum { QuorumMode::RandomQuorum } else { QuorumMode::FirstQuorum };
        ReadinessRule::new(mode, self.require_skeletons, self.timeout_us())
    }

    pub fn decision_rules(&self) -> DecisionRules {
        let committee = self.committee();
        let mut rules = DecisionRules::standard(&committee);
        if self.break_support_quorum {
            rules.support_quorum = DecisionRules::broken_support_quorum(&committee).support_quorum;
        }
        if self.break_anchor_bound {
            rules.anchor_round_gap = DecisionRules::broken_anchor_bound(&committee).anchor_round_gap;
        }
        rules
    }

    pub fn horizon_us(&self) -> Micros {
        self.horizon_ms * 1000
    }

    pub fn timeout_us(&self) -> Micros {
        self.timeout_ms * 1000
    }

    pub fn workload_stop_us(&self) -> Micros {
        self.workload_stop_ms.map_or(self.horizon_us(), |ms| ms * 1000)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_full_scenario() {
        let text = r#"
            n = 5
            leaders_per_round = 2
            seed = 7
            horizon_ms = 10000
            timeout_ms = 500
            tx_rate = 200.0
            random_quorum = true

            [net]
            model = "psync"
            gst_ms = 2000.0
            delta_ms = 100.0
            pre_gst_mean_ms = 400.0

            [[faults.crashes]]
            replica = 2
            at_ms = 2500

            [[faults.recoveries]]
            replica = 2
            at_ms = 6000
        "#;
        let cfg = SimConfig::from_toml(text).unwrap();
        assert_eq!(cfg.n, 5);
        assert!(cfg.random_quorum);
        assert!(cfg.require_skeletons, "defaults on");
        assert_eq!(cfg.faults.max_simultaneous(), 1);
        assert!(matches!(cfg.net, NetModelCfg::Psync { .. }));
    }

    #[test]
    fn rejects_overfull_fault_plans() {
        let text = r#"
            n = 3
            horizon_ms = 1000
            [net]
            model = "sync"
            delay_ms = 50.0
            [[faults.crashes]]
            replica = 0
            at_ms = 10
            [[faults.crashes]]
            replica = 1
            at_ms = 20
        "#;
        assert!(matches!(SimConfig::from_toml(text), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn rejects_even_n_and_unknown_fields() {
        let text = "n = 4\nhorizon_ms = 100\n[net]\nmodel = \"sync\"\ndelay_ms = 1.0";
        assert!(SimConfig::from_toml(text).is_err());
        let text = "n = 3\nhorizon_ms = 100\nbogus = 1\n[net]\nmodel = \"sync\"\ndelay_ms = 1.0";
        assert!(matches!(SimConfig::from_toml(text), Err(ConfigError::Parse(_))));
    }
}
