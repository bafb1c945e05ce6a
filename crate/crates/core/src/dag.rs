//! A replica's local view of the block DAG.
//!
//! The view is closed under causal history: a block is stored only once all
//! of its ancestors are stored. Blocks arriving early sit in a pending buffer
//! and are promoted in cascade as their missing ancestors land.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use thiserror::Error;

use crate::types::{Block, BlockError, BlockRef, Committee, ReplicaId, Round};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DagError {
    #[error("unknown block {0}")]
    UnknownBlock(BlockRef),
    /// A different block already occupies `(author, round)`. Equivocation
    /// cannot happen under crash faults, so this signals a bug.
    #[error("conflicting duplicate for {0}")]
    DuplicateConflict(BlockRef),
    #[error("invalid block: {0}")]
    InvalidBlock(#[from] BlockError),
}

/// Result of offering a block to the view.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InsertOutcome {
    /// The block (and possibly buffered descendants) entered the view.
    /// `added` lists newly stored references in insertion order; it is empty
    /// when the block was already known.
    Inserted { added: Vec<BlockRef> },
    /// Causal history incomplete. `missing` lists ancestor references that
    /// are neither stored nor buffered, i.e. what to fetch.
    Buffered { missing: Vec<BlockRef> },
}

#[derive(Clone, Debug)]
pub struct DagView {
    committee: Committee,
    by_round: BTreeMap<Round, BTreeMap<ReplicaId, Block>>,
    highest_round: Round,
    /// Blocks held back until their causal history completes.
    pending: BTreeMap<BlockRef, Block>,
    /// missing ancestor -> pending blocks waiting on it
    waiting_on: BTreeMap<BlockRef, BTreeSet<BlockRef>>,
}

impl DagView {
    /// A fresh view holding one genesis block per replica at round 0.
    pub fn new(committee: Committee) -> Self {
        let mut genesis = BTreeMap::new();
        for id in committee.ids() {
            genesis.insert(id, Block::genesis(id));
        }
        let mut by_round = BTreeMap::new();
        by_round.insert(0, genesis);
        Self {
            committee,
            by_round,
            highest_round: 0,
            pending: BTreeMap::new(),
            waiting_on: BTreeMap::new(),
        }
    }

    pub fn committee(&self) -> &Committee {
        self.committee_ref()
    }

    fn committee_ref(&self) -> &Committee {
        &self.committee
    }

    pub fn highest_round(&self) -> Round {
        self.highest_round
    }

    pub fn contains(&self, r: BlockRef) -> bool {
        self.block(r).is_some()
    }

    pub fn block(&self, r: BlockRef) -> Option<&Block> {
        self.by_round.get(&r.round).and_then(|m| m.get(&r.author))
    }

    pub fn has_pending(&self, r: BlockRef) -> bool {
        self.pending.contains_key(&r)
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    /// A stored or buffered copy of the block, if any. Buffered blocks may be
    /// served to peers even though they are not part of the view yet.
    pub fn stored_or_pending(&self, r: BlockRef) -> Option<&Block> {
        self.block(r).or_else(|| self.pending.get(&r))
    }

    /// Blocks stored at `round`, in author order.
    pub fn blocks_at_round(&self, round: Round) -> impl Iterator<Item = &Block> {
        self.by_round.get(&round).into_iter().flat_map(|m| m.values())
    }

    pub fn authors_at_round(&self, round: Round) -> impl Iterator<Item = ReplicaId> + '_ {
        self.by_round.get(&round).into_iter().flat_map(|m| m.keys().copied())
    }

    /// All stored references in `(round, author)` order.
    pub fn all_refs(&self) -> impl Iterator<Item = BlockRef> + '_ {
        self.by_round
            .iter()
            .flat_map(|(r, m)| m.keys().map(move |a| BlockRef::new(*a, *r)))
    }

    pub fn len(&self) -> usize {
        self.by_round.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Offer a block. Stores it if its whole causal history is present,
    /// promoting any buffered descendants that become complete; otherwise
    /// buffers it and reports which ancestors to fetch.
    pub fn insert_block(&mut self, block: Block) -> Result<InsertOutcome, DagError> {
        block.validate(&self.committee)?;
        let r = block.reference();
        if let Some(existing) = self.block(r) {
            if *existing != block {
                return Err(DagError::DuplicateConflict(r));
            }
            return Ok(InsertOutcome::Inserted { added: Vec::new() });
        }
        if let Some(buffered) = self.pending.get(&block.reference()) {
            if *buffered != block {
                return Err(DagError::DuplicateConflict(r));
            }
            return Ok(InsertOutcome::Buffered { missing: self.unknown_ancestors(&block) });
        }

        let absent: Vec<BlockRef> =
            block.parents().iter().copied().filter(|p| !self.contains(*p)).collect();
        if !absent.is_empty() {
            let missing = self.unknown_ancestors(&block);
            for parent in absent {
                self.waiting_on.entry(parent).or_default().insert(r);
            }
            self.pending.insert(r, block);
            return Ok(InsertOutcome::Buffered { missing });
        }

        let mut added = vec![r];
        self.store(block);
        // Promote buffered descendants whose histories just completed.
        let mut queue = VecDeque::from([r]);
        while let Some(resolved) = queue.pop_front() {
            let Some(waiters) = self.waiting_on.remove(&resolved) else {
                continue;
            };
            for waiter in waiters {
                let ready = self
                    .pending
                    .get(&waiter)
                    .map(|b| b.parents().iter().all(|p| self.contains(*p)))
                    .unwrap_or(false);
                if ready {
                    let block = self.pending.remove(&waiter).expect("pending entry");
                    self.store(block);
                    added.push(waiter);
                    queue.push_back(waiter);
                }
            }
        }
        Ok(InsertOutcome::Inserted { added })
    }

    fn store(&mut self, block: Block) {
        debug_assert!(block.parents().iter().all(|p| self.contains(*p)));
        let r = block.reference();
        self.by_round.entry(r.round).or_default().insert(r.author, block);
        self.highest_round = self.highest_round.max(r.round);
    }

    /// Parents of `block` we hold no bytes for (neither stored nor pending),
    /// i.e. the references worth requesting from peers. Ancestors further
    /// down were requested when their own children got buffered.
    fn unknown_ancestors(&self, block: &Block) -> Vec<BlockRef> {
        block
            .parents()
            .iter()
            .copied()
            .filter(|p| !self.contains(*p) && !self.pending.contains_key(p))
            .collect()
    }

    /// True iff a parent-reference path leads from `newer` down to `older`.
    /// Reflexive: every block links to itself.
    pub fn is_link(&self, newer: BlockRef, older: BlockRef) -> Result<bool, DagError> {
        if !self.contains(newer) {
            return Err(DagError::UnknownBlock(newer));
        }
        if !self.contains(older) {
            return Err(DagError::UnknownBlock(older));
        }
        if newer == older {
            return Ok(true);
        }
        if older.round >= newer.round {
            return Ok(false);
        }
        let mut visited = BTreeSet::from([newer]);
        let mut frontier = vec![newer];
        while let Some(at) = frontier.pop() {
            for p in self.block(at).expect("visited blocks are stored").parents() {
                if *p == older {
                    return Ok(true);
                }
                // Parents below the target round cannot reach it.
                if p.round > older.round && visited.insert(*p) {
                    frontier.push(*p);
                }
            }
        }
        Ok(false)
    }

    /// Number of distinct round-`target.round + 1` blocks referencing
    /// `target` among their parents. With two-round waves the decision round
    /// is exactly the next round, so supporters are direct parents.
    pub fn count_supporters(&self, target: BlockRef) -> usize {
        self.blocks_at_round(target.round + 1)
            .filter(|b| b.parents().contains(&target))
            .count()
    }

    /// Transitive closure of `root`'s parent references, including `root`.
    pub fn causal_history(&self, root: BlockRef) -> Result<BTreeSet<BlockRef>, DagError> {
        if !self.contains(root) {
            return Err(DagError::UnknownBlock(root));
        }
        let mut history = BTreeSet::from([root]);
        let mut frontier = vec![root];
        while let Some(at) = frontier.pop() {
            for p in self.block(at).expect("closure of stored blocks").parents() {
                if history.insert(*p) {
                    frontier.push(*p);
                }
            }
        }
        Ok(history)
    }

    /// References that buffered blocks are waiting on and for which we hold
    /// no bytes at all, i.e. what a recovered replica must re-fetch.
    pub fn pending_refs_missing(&self) -> Vec<BlockRef> {
        self.waiting_on
            .keys()
            .copied()
            .filter(|r| !self.contains(*r) && !self.pending.contains_key(r))
            .collect()
    }

    /// Every stored block's parents must be stored. Cheap enough to assert in
    /// tests after arbitrary insertion orders.
    pub fn assert_causal_closure(&self) {
        for (_, blocks) in &self.by_round {
            for block in blocks.values() {
                for p in block.parents() {
                    assert!(self.contains(*p), "{} stored without parent {}", block.reference(), p);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::blk;
    use crate::types::Transaction;

    fn view3() -> DagView {
        DagView::new(Committee::new(3))
    }

    #[test]
    fn genesis_present_at_startup() {
        let view = view3();
        assert_eq!(view.highest_round(), 0);
        assert_eq!(view.blocks_at_round(0).count(), 3);
        assert!(view.contains(BlockRef::new(ReplicaId(2), 0)));
    }

    #[test]
    fn insert_with_known_parents() {
        let mut view = view3();
        let b = blk(0, 1, &[(0, 0), (1, 0)]);
        let outcome = view.insert_block(b.clone()).unwrap();
        assert_eq!(outcome, InsertOutcome::Inserted { added: vec![b.reference()] });
        assert_eq!(view.highest_round(), 1);
        // Re-inserting the identical block is a no-op.
        assert_eq!(view.insert_block(b).unwrap(), InsertOutcome::Inserted { added: vec![] });
    }

    #[test]
    fn buffering_reports_unknown_ancestors() {
        let mut view = view3();
        view.insert_block(blk(0, 1, &[(0, 0), (1, 0)])).unwrap();
        // Round-2 block referencing a round-1 block we have not seen.
        let b = blk(0, 2, &[(0, 1), (1, 1)]);
        let outcome = view.insert_block(b).unwrap();
        assert_eq!(
            outcome,
            InsertOutcome::Buffered { missing: vec![BlockRef::new(ReplicaId(1), 1)] }
        );
        assert_eq!(view.pending_len(), 1);
    }

    #[test]
    fn cascading_promotion() {
        let mut view = view3();
        let b1 = blk(1, 1, &[(1, 0), (2, 0)]);
        let b0 = blk(0, 1, &[(0, 0), (2, 0)]);
        let b2 = blk(1, 2, &[(1, 1), (0, 1)]);
        let out = view.insert_block(b2.clone()).unwrap();
        assert_eq!(
            out,
            InsertOutcome::Buffered { missing: vec![b1.reference(), b0.reference()] }
        );
        view.insert_block(b0.clone()).unwrap();
        // The last missing ancestor lands; the buffered descendant follows.
        let InsertOutcome::Inserted { added } = view.insert_block(b1.clone()).unwrap() else {
            panic!("expected insertion");
        };
        assert_eq!(added, vec![b1.reference(), b2.reference()]);
        assert_eq!(view.pending_len(), 0);
        view.assert_causal_closure();
    }

    #[test]
    fn duplicate_conflict_is_fatal() {
        let mut view = view3();
        view.insert_block(blk(0, 1, &[(0, 0), (1, 0)])).unwrap();
        let conflicting = Block::new(
            ReplicaId(0),
            1,
            vec![BlockRef::new(ReplicaId(0), 0), BlockRef::new(ReplicaId(1), 0)],
            vec![Transaction::new(7, 7, vec![7])],
        );
        assert_eq!(
            view.insert_block(conflicting),
            Err(DagError::DuplicateConflict(BlockRef::new(ReplicaId(0), 1)))
        );
    }

    #[test]
    fn is_link_reflexive_and_unknown() {
        let mut view = view3();
        let b = blk(0, 1, &[(0, 0), (1, 0)]);
        view.insert_block(b.clone()).unwrap();
        assert!(view.is_link(b.reference(), b.reference()).unwrap());
        let ghost = BlockRef::new(ReplicaId(2), 9);
        assert_eq!(view.is_link(ghost, b.reference()), Err(DagError::UnknownBlock(ghost)));
    }

    #[test]
    fn count_supporters_empty_next_round() {
        let mut view = view3();
        let b = blk(0, 1, &[(0, 0), (1, 0)]);
        view.insert_block(b.clone()).unwrap();
        assert_eq!(view.count_supporters(b.reference()), 0);
    }

    #[test]
    fn causal_history_of_genesis_is_itself() {
        let view = view3();
        let g = BlockRef::new(ReplicaId(1), 0);
        assert_eq!(view.causal_history(g).unwrap(), BTreeSet::from([g]));
    }
}
