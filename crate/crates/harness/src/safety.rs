//! The cross-replica safety oracle: checks the atomic-broadcast properties
//! over a finished run's trace.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use netsim::SimTrace;
use serde::Serialize;

#[derive(Clone, Debug, Serialize)]
pub struct Violation {
    pub property: &'static str,
    /// The minimal violating coordinates: replica(s) and position/slot.
    pub detail: String,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct OracleVerdict {
    pub violations: Vec<Violation>,
}

impl OracleVerdict {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for OracleVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.passed() {
            write!(f, "safety: ok")
        } else {
            writeln!(f, "safety: {} violation(s)", self.violations.len())?;
            for v in &self.violations {
                writeln!(f, "  [{}] {}", v.property, v.detail)?;
            }
            Ok(())
        }
    }
}

/// Check every safety property at once:
/// (a) pairwise prefix agreement of committed sequences,
/// (b) per-replica no duplication,
/// (c) no creation (committed blocks were proposed),
/// (d) commit/skip slot consistency across replicas,
/// (e) committed slots carry the same block everywhere.
pub fn check_safety(trace: &SimTrace) -> OracleVerdict {
    let mut verdict = OracleVerdict::default();

    // (a) prefix property, reported at the first diverging position.
    for a in &trace.replicas {
        for b in &trace.replicas {
            if a.id >= b.id {
                continue;
            }
            let shared = a.committed.len().min(b.committed.len());
            for pos in 0..shared {
                let (x, y) = (&a.committed[pos], &b.committed[pos]);
                if (x.author, x.round) != (y.author, y.round) {
                    verdict.violations.push(Violation {
                        property: "total-order-prefix",
                        detail: format!(
                            "replicas {} and {} diverge at position {pos}: ({},{}) vs ({},{})",
                            a.id, b.id, x.author, x.round, y.author, y.round
                        ),
                    });
                    break;
                }
            }
        }
    }

    // Recovery must reproduce pre-crash state; a replay that contradicts its
    // own commit marks is a rule-consistency failure.
    for r in &trace.replicas {
        if let Some(reason) = &r.recovery_failure {
            verdict.violations.push(Violation {
                property: "recovery-consistency",
                detail: format!("replica {} failed log replay: {reason}", r.id),
            });
        }
    }

    // Decisions are monotone: what a replica decided incrementally must
    // equal a from-scratch re-derivation over its final view. A mismatch at
    // one replica is a divergence another replica could have committed.
    for r in &trace.replicas {
        if let Some((round, rank)) = r.decision_audit_failures.first() {
            verdict.violations.push(Violation {
                property: "decision-monotonicity",
                detail: format!(
                    "replica {}: slot ({round},{rank}) flips against re-derivation ({} total)",
                    r.id,
                    r.decision_audit_failures.len()
                ),
            });
        }
    }

    // (b) no duplication within one replica's sequence.
    for r in &trace.replicas {
        let mut seen = BTreeSet::new();
        for c in &r.committed {
            if !seen.insert((c.author, c.round)) {
                verdict.violations.push(Violation {
                    property: "no-duplication",
                    detail: format!(
                        "replica {} commits ({},{}) again at position {}",
                        r.id, c.author, c.round, c.position
                    ),
                });
                break;
            }
        }
    }

    // (c) no creation: everything committed was emitted by some proposer.
    let emitted: BTreeSet<(u16, u32)> =
        trace.emitted.iter().map(|(r, _)| (r.author, r.round)).collect();
    for r in &trace.replicas {
        for c in &r.committed {
            if !emitted.contains(&(c.author, c.round)) {
                verdict.violations.push(Violation {
                    property: "no-creation",
                    detail: format!(
                        "replica {} committed never-proposed block ({},{}) at position {}",
                        r.id, c.author, c.round, c.position
                    ),
                });
                break;
            }
        }
    }

    // (d) + (e) slot decisions agree across replicas.
    let mut by_slot: BTreeMap<(u32, u16), Vec<(u16, &netsim::DecidedSlotRecord)>> = BTreeMap::new();
    for r in &trace.replicas {
        for d in &r.decided {
            by_slot.entry((d.round, d.rank)).or_default().push((r.id, d));
        }
    }
    for ((round, rank), decisions) in &by_slot {
        let commits: Vec<_> = decisions.iter().filter(|(_, d)| d.is_commit()).collect();
        let skips: Vec<_> = decisions.iter().filter(|(_, d)| !d.is_commit()).collect();
        if !commits.is_empty() && !skips.is_empty() {
            verdict.violations.push(Violation {
                property: "commit-skip-consistency",
                detail: format!(
                    "slot ({round},{rank}) committed at replica {} but skipped at replica {}",
                    commits[0].0, skips[0].0
                ),
            });
        }
        let blocks: BTreeSet<_> =
            commits.iter().filter_map(|(_, d)| d.block.map(|b| (b.author, b.round))).collect();
        if blocks.len() > 1 {
            verdict.violations.push(Violation {
                property: "same-slot-same-block",
                detail: format!("slot ({round},{rank}) committed different blocks: {blocks:?}"),
            });
        }
    }

    verdict
}
