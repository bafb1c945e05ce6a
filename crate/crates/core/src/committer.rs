//! Slot classification and commit-sequence extension.
//!
//! Skeleton slots move from `Undecided` to `Commit` or `Skip` and never
//! change afterwards. The direct rule commits a slot once `f+1` next-round
//! blocks reference its leader block. The indirect rule resolves a slot
//! through its anchor: the earliest non-skipped later slot beyond the
//! decision round. Committed leader blocks are linearized together with
//! their not-yet-output causal history into a single total order.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dag::{DagError, DagView};
use crate::schedule::{ScheduleConfig, SlotId, WAVE_LENGTH};
use crate::types::{BlockRef, Committee, Round};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SlotState {
    Commit(BlockRef),
    Skip,
    Undecided,
}

impl SlotState {
    pub fn is_undecided(&self) -> bool {
        matches!(self, SlotState::Undecided)
    }

    pub fn is_decided(&self) -> bool {
        !self.is_undecided()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotStatus {
    pub slot: SlotId,
    pub state: SlotState,
}

/// Which rule decided a slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecisionPath {
    Direct,
    Indirect,
}

/// Numeric knobs of the decision rules. The standard values are the
/// protocol; the broken variants exist so the verification harness can prove
/// its safety oracle catches rule violations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionRules {
    /// Supporters required by the direct rule.
    pub support_quorum: usize,
    /// An anchor must sit at least this many rounds above the slot.
    pub anchor_round_gap: u32,
}

impl DecisionRules {
    pub fn standard(committee: &Committee) -> Self {
        Self { support_quorum: committee.quorum(), anchor_round_gap: WAVE_LENGTH }
    }

    /// Broken on purpose: direct commits settle for `f` supporters.
    pub fn broken_support_quorum(committee: &Committee) -> Self {
        Self { support_quorum: committee.max_faulty(), ..Self::standard(committee) }
    }

    /// Broken on purpose: anchors may sit in the slot's own decision round.
    pub fn broken_anchor_bound(committee: &Committee) -> Self {
        Self { anchor_round_gap: 1, ..Self::standard(committee) }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CommitterError {
    #[error("later statuses have gaps near {0}")]
    MissingStatuses(SlotId),
    #[error(transparent)]
    Dag(#[from] DagError),
}

fn leader_block_ref(cfg: &ScheduleConfig, slot: SlotId) -> BlockRef {
    BlockRef::new(cfg.leader_of(slot), slot.round)
}

/// Direct decision rule: commit the leader block iff it is in the view and
/// at least `f+1` blocks of the next round reference it. Never skips.
pub fn try_direct_decide(view: &DagView, slot: SlotId, cfg: &ScheduleConfig) -> SlotStatus {
    direct_decide(view, slot, cfg, &DecisionRules::standard(&cfg.committee))
}

pub(crate) fn direct_decide(
    view: &DagView,
    slot: SlotId,
    cfg: &ScheduleConfig,
    rules: &DecisionRules,
) -> SlotStatus {
    let leader = leader_block_ref(cfg, slot);
    let state = if view.contains(leader) && view.count_supporters(leader) >= rules.support_quorum {
        SlotState::Commit(leader)
    } else {
        SlotState::Undecided
    };
    SlotStatus { slot, state }
}

/// Indirect decision rule. `later_statuses` must cover, in ascending order
/// and without gaps, every slot above `slot` up to the caller's horizon.
///
/// The anchor is the first non-skipped slot beyond the decision round. An
/// undecided (or absent) anchor leaves the slot undecided; a committed
/// anchor commits the slot iff its block links down to the leader block. A
/// leader block absent from the view cannot be in the anchor's causal
/// history (views are causally closed), so missing leaders skip.
pub fn try_indirect_decide(
    view: &DagView,
    slot: SlotId,
    later_statuses: &[SlotStatus],
    cfg: &ScheduleConfig,
) -> Result<SlotStatus, CommitterError> {
    let rules = DecisionRules::standard(&cfg.committee);
    validate_coverage(slot, later_statuses, cfg, &rules)?;
    indirect_decide(view, slot, later_statuses.iter(), cfg, &rules)
}

/// The anchor-eligible portion of `later_statuses` must start at the first
/// slot of round `slot.round + gap` and be consecutive.
fn validate_coverage(
    slot: SlotId,
    later_statuses: &[SlotStatus],
    cfg: &ScheduleConfig,
    rules: &DecisionRules,
) -> Result<(), CommitterError> {
    let min_round = slot.round + rules.anchor_round_gap;
    let mut expected: Option<SlotId> = None;
    for status in later_statuses {
        if status.slot.round < min_round {
            continue;
        }
        match expected {
            None => {
                if status.slot != SlotId::new(min_round, 0) {
                    return Err(CommitterError::MissingStatuses(SlotId::new(min_round, 0)));
                }
            }
            Some(want) => {
                if status.slot != want {
                    return Err(CommitterError::MissingStatuses(want));
                }
            }
        }
        expected = Some(cfg.next_slot(status.slot));
    }
    Ok(())
}

fn indirect_decide<'a>(
    view: &DagView,
    slot: SlotId,
    later_ascending: impl Iterator<Item = &'a SlotStatus>,
    cfg: &ScheduleConfig,
    rules: &DecisionRules,
) -> Result<SlotStatus, CommitterError> {
    let min_round = slot.round + rules.anchor_round_gap;
    let anchor = later_ascending
        .filter(|s| s.slot.round >= min_round)
        .find(|s| s.state != SlotState::Skip);
    let state = match anchor.map(|s| s.state) {
        None | Some(SlotState::Undecided) => SlotState::Undecided,
        Some(SlotState::Commit(anchor_block)) => {
            let leader = leader_block_ref(cfg, slot);
            if view.contains(leader) && view.is_link(anchor_block, leader)? {
                SlotState::Commit(leader)
            } else {
                SlotState::Skip
            }
        }
        Some(SlotState::Skip) => unreachable!("skips are filtered from anchor candidates"),
    };
    Ok(SlotStatus { slot, state })
}

/// Evaluate every slot from `(last_committed_round + 1, 0)` up to
/// `(highest_round, k-1)`, highest first, the direct rule then the indirect
/// rule, returning statuses in ascending slot order. Pure in `(view, args)`.
pub fn try_decide(
    view: &DagView,
    last_committed_round: Round,
    highest_round: Round,
    cfg: &ScheduleConfig,
) -> Vec<SlotStatus> {
    try_decide_with_rules(
        view,
        last_committed_round,
        highest_round,
        cfg,
        &DecisionRules::standard(&cfg.committee),
    )
}

/// `try_decide` under explicit rules, memo-free. Lets auditors re-derive a
/// replica's decisions from scratch under whatever rules that replica ran.
pub fn try_decide_with_rules(
    view: &DagView,
    last_committed_round: Round,
    highest_round: Round,
    cfg: &ScheduleConfig,
    rules: &DecisionRules,
) -> Vec<SlotStatus> {
    decide_range(view, last_committed_round + 1, highest_round, cfg, rules, None)
        .expect("a gap-free status list is built internally")
        .statuses
}

struct RangeDecision {
    /// Ascending statuses over the whole range.
    statuses: Vec<SlotStatus>,
    /// Slots decided in this pass (not served from the memo).
    fresh: Vec<(SlotId, SlotState, DecisionPath)>,
}

fn decide_range(
    view: &DagView,
    from_round: Round,
    to_round: Round,
    cfg: &ScheduleConfig,
    rules: &DecisionRules,
    memo: Option<&BTreeMap<SlotId, (SlotState, DecisionPath)>>,
) -> Result<RangeDecision, CommitterError> {
    // Built in descending slot order; `descending.iter().rev()` is ascending.
    let mut descending: Vec<SlotStatus> = Vec::new();
    let mut fresh = Vec::new();
    let mut round = to_round;
    while round >= from_round && round >= 1 {
        for rank in (0..cfg.leaders_per_round).rev() {
            let slot = SlotId::new(round, rank);
            if let Some((state, _)) = memo.and_then(|m| m.get(&slot)) {
                descending.push(SlotStatus { slot, state: *state });
                continue;
            }
            let mut status = direct_decide(view, slot, cfg, rules);
            let mut path = DecisionPath::Direct;
            if status.state.is_undecided() {
                status = indirect_decide(view, slot, descending.iter().rev(), cfg, rules)?;
                path = DecisionPath::Indirect;
            }
            if status.state.is_decided() {
                fresh.push((slot, status.state, path));
            }
            descending.push(status);
        }
        round -= 1;
    }
    descending.reverse();
    Ok(RangeDecision { statuses: descending, fresh })
}

/// An ordered, committed block handed to the application.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitEntry {
    pub block: BlockRef,
    /// The slot whose leader's causal history emitted this block.
    pub anchor_slot: SlotId,
    pub position: usize,
}

/// The committed prefix of one replica. Decided slots are memoized and never
/// re-evaluated; undecided slots are re-evaluated on every DAG growth event.
#[derive(Clone, Debug)]
pub struct CommitState {
    last_decided_slot: Option<SlotId>,
    /// Blocks already linearized, genesis pre-marked.
    output_set: BTreeSet<BlockRef>,
    committed: Vec<CommitEntry>,
    decided: BTreeMap<SlotId, (SlotState, DecisionPath)>,
}

impl CommitState {
    pub fn new(committee: &Committee) -> Self {
        let output_set = committee.ids().map(|id| BlockRef::new(id, 0)).collect();
        Self {
            last_decided_slot: None,
            output_set,
            committed: Vec::new(),
            decided: BTreeMap::new(),
        }
    }

    pub fn committed(&self) -> &[CommitEntry] {
        &self.committed
    }

    pub fn last_decided_slot(&self) -> Option<SlotId> {
        self.last_decided_slot
    }

    /// Final (commit/skip) slot classifications with the rule that produced
    /// each.
    pub fn decided(&self) -> &BTreeMap<SlotId, (SlotState, DecisionPath)> {
        &self.decided
    }

    pub fn is_output(&self, block: BlockRef) -> bool {
        self.output_set.contains(&block)
    }

    fn resume_round(&self, cfg: &ScheduleConfig) -> Round {
        match self.last_decided_slot {
            None => 1,
            Some(s) if s.rank + 1 == cfg.leaders_per_round => s.round + 1,
            Some(s) => s.round,
        }
    }

    /// Re-classify what the view now supports and extend the committed
    /// prefix up to the first undecided slot. Returns the newly committed
    /// entries; idempotent between DAG growth events.
    pub fn extend(
        &mut self,
        view: &DagView,
        cfg: &ScheduleConfig,
        rules: &DecisionRules,
    ) -> Vec<CommitEntry> {
        let from = self.resume_round(cfg);
        if view.highest_round() < from {
            return Vec::new();
        }
        let decision = decide_range(view, from, view.highest_round(), cfg, rules, Some(&self.decided))
            .expect("internally built status lists are gap-free");
        for (slot, state, path) in decision.fresh {
            // Decisions are final; cache them even above the walk frontier.
            self.decided.insert(slot, (state, path));
        }

        let mut new_entries = Vec::new();
        for status in decision.statuses {
            if self.last_decided_slot.is_some_and(|last| status.slot <= last) {
                continue;
            }
            match status.state {
                SlotState::Undecided => break,
                SlotState::Skip => self.last_decided_slot = Some(status.slot),
                SlotState::Commit(leader) => {
                    let refs = linearize_sub_dag(view, leader, &self.output_set)
                        .expect("committed leaders are in the view");
                    for block in refs {
                        self.output_set.insert(block);
                        let entry = CommitEntry {
                            block,
                            anchor_slot: status.slot,
                            position: self.committed.len(),
                        };
                        self.committed.push(entry);
                        new_entries.push(entry);
                    }
                    self.last_decided_slot = Some(status.slot);
                }
            }
        }
        new_entries
    }
}

/// The leader's causal history minus already-output blocks and genesis, in
/// ascending `(round, author)` order. The leader itself comes last: it holds
/// the highest round of its own history.
pub fn linearize_sub_dag(
    view: &DagView,
    leader: BlockRef,
    output_set: &BTreeSet<BlockRef>,
) -> Result<Vec<BlockRef>, DagError> {
    let history = view.causal_history(leader)?;
    Ok(history
        .into_iter()
        .filter(|r| r.round >= 1 && !output_set.contains(r))
        .collect())
}
