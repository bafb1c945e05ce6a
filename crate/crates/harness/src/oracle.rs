//! Independent brute-force slot classifier, used only by tests.
//!
//! This is a deliberately naive, straight-line transcription of the decision
//! procedure: no memoization, its own recursive path search, leader
//! arithmetic inlined. It shares nothing with the committer beyond the DAG
//! read API, so agreement between the two is meaningful evidence.

use std::collections::BTreeMap;

use dagcore::{BlockRef, DagView, ScheduleConfig, SlotId, SlotState};

/// Path search by plain depth-first traversal over parent lists.
fn naive_link(view: &DagView, newer: BlockRef, older: BlockRef) -> bool {
    fn go(
        view: &DagView,
        at: BlockRef,
        older: BlockRef,
        visited: &mut std::collections::BTreeSet<BlockRef>,
    ) -> bool {
        if at == older {
            return true;
        }
        if !visited.insert(at) {
            return false;
        }
        let Some(block) = view.block(at) else {
            return false;
        };
        block.parents().iter().any(|p| go(view, *p, older, visited))
    }
    go(view, newer, older, &mut std::collections::BTreeSet::new())
}

/// Classify every slot of the view from scratch, highest slot first,
/// prepending each result to the status list exactly as the round-by-round
/// procedure prescribes.
pub fn brute_force_decide(view: &DagView, cfg: &ScheduleConfig) -> BTreeMap<SlotId, SlotState> {
    let n = cfg.committee.size();
    let f = (n - 1) / 2;
    let wave_length: u32 = 2;

    // Built in evaluation (descending) order; reading it back-to-front gives
    // ascending slots.
    let mut statuses: Vec<(SlotId, SlotState)> = Vec::new();
    for r in (1..=view.highest_round()).rev() {
        for l in (0..cfg.leaders_per_round).rev() {
            let wave_offset = r % wave_length;
            let wave = (r - wave_offset) / wave_length;
            let propose_round = wave * wave_length + wave_offset;
            let decision_round = propose_round + (wave_length - 1);
            assert_eq!(propose_round, r);

            let leader = ((propose_round as usize + l as usize) % n) as u16;
            let leader_block: Option<BlockRef> = view
                .blocks_at_round(propose_round)
                .find(|b| b.author().0 == leader)
                .map(|b| b.reference());

            let direct = leader_block.and_then(|lb| {
                let votes = view
                    .blocks_at_round(decision_round)
                    .filter(|b| naive_link(view, b.reference(), lb))
                    .count();
                (votes >= f + 1).then_some(SlotState::Commit(lb))
            });

            let state = direct.unwrap_or_else(|| {
                let anchor = statuses
                    .iter()
                    .rev()
                    .filter(|(slot, _)| slot.round > decision_round)
                    .find(|(_, st)| *st != SlotState::Skip);
                match anchor {
                    None | Some((_, SlotState::Undecided)) => SlotState::Undecided,
                    Some((_, SlotState::Commit(anchor_block))) => match leader_block {
                        Some(lb) if naive_link(view, *anchor_block, lb) => SlotState::Commit(lb),
                        _ => SlotState::Skip,
                    },
                    Some((_, SlotState::Skip)) => unreachable!("filtered"),
                }
            });
            statuses.push((SlotId::new(r, l), state));
        }
    }
    statuses.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use dagcore::testing::mixed_decision_dag;
    use dagcore::{BlockRef, ReplicaId};

    #[test]
    fn fixture_statuses_match_expected_classification() {
        let (cfg, view) = mixed_decision_dag();
        let got = brute_force_decide(&view, &cfg);
        let commit = |a: u16, r: u32| SlotState::Commit(BlockRef::new(ReplicaId(a), r));
        assert_eq!(got[&SlotId::new(1, 0)], commit(1, 1));
        assert_eq!(got[&SlotId::new(1, 1)], SlotState::Skip);
        assert_eq!(got[&SlotId::new(2, 0)], commit(2, 2));
        assert_eq!(got[&SlotId::new(2, 1)], commit(0, 2));
        assert_eq!(got[&SlotId::new(3, 0)], commit(0, 3));
        assert_eq!(got[&SlotId::new(3, 1)], SlotState::Undecided);
        assert_eq!(got[&SlotId::new(4, 0)], commit(1, 4));
    }

    #[test]
    fn empty_dag_is_all_undecided() {
        let committee = dagcore::Committee::new(3);
        let cfg = ScheduleConfig::new(committee, 2);
        let view = DagView::new(committee);
        assert!(brute_force_decide(&view, &cfg).is_empty());
    }
}
