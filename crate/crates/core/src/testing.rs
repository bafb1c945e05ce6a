//! Test support: hand-built and seeded random DAGs shared by unit,
//! integration and acceptance tests. Not part of the protocol surface.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::dag::{DagView, InsertOutcome};
use crate::schedule::ScheduleConfig;
use crate::types::{Block, BlockRef, Committee, ReplicaId, Round, Transaction};

/// Shorthand block constructor: `(author, round)` pairs for parents, no payload.
pub fn blk(author: u16, round: Round, parents: &[(u16, u32)]) -> Block {
    blk_with_txs(author, round, parents, Vec::new())
}

pub fn blk_with_txs(
    author: u16,
    round: Round,
    parents: &[(u16, u32)],
    payload: Vec<Transaction>,
) -> Block {
    let parents = parents.iter().map(|(a, r)| BlockRef::new(ReplicaId(*a), *r)).collect();
    Block::new(ReplicaId(author), round, parents, payload)
}

/// A 3-replica DAG with two skeleton slots per round over rounds 1..=5,
/// exercising every decision outcome at once:
///
/// - slots (1,0), (2,1), (3,0), (4,0) commit via the direct rule;
/// - slot (2,0) fails the direct rule and commits via its anchor at (4,0);
/// - slot (1,1) fails the direct rule and is skipped via its anchor at (3,0);
/// - slot (3,1) stays undecided: its anchor region is still undecided.
///
/// The commit walk therefore outputs the slot leaders of (1,0), (2,0), (2,1),
/// (3,0) and stops in front of the undecided slot (3,1), leaving the decided
/// slot (4,0) above it unemitted.
pub fn mixed_decision_dag() -> (ScheduleConfig, DagView) {
    let cfg = ScheduleConfig::new(Committee::new(3), 2);
    let mut view = DagView::new(cfg.committee);
    for block in mixed_decision_blocks() {
        let outcome = view.insert_block(block).expect("fixture blocks are valid");
        assert!(matches!(outcome, InsertOutcome::Inserted { .. }));
    }
    (cfg, view)
}

/// The fixture's blocks in one topological order.
pub fn mixed_decision_blocks() -> Vec<Block> {
    vec![
        blk(0, 1, &[(0, 0), (1, 0), (2, 0)]),
        blk(1, 1, &[(1, 0), (0, 0), (2, 0)]),
        blk(2, 1, &[(2, 0), (0, 0), (1, 0)]),
        blk(2, 2, &[(2, 1), (0, 1)]),
        blk(0, 2, &[(0, 1), (1, 1)]),
        blk(1, 2, &[(1, 1), (0, 1)]),
        blk(0, 3, &[(0, 2), (1, 2)]),
        blk(1, 3, &[(1, 2), (0, 2)]),
        blk(2, 3, &[(2, 2), (1, 2)]),
        blk(1, 4, &[(1, 3), (2, 3)]),
        blk(2, 4, &[(2, 3), (0, 3)]),
        blk(0, 4, &[(0, 3), (2, 3)]),
        blk(0, 5, &[(0, 4), (1, 4)]),
        blk(1, 5, &[(1, 4), (0, 4)]),
        blk(2, 5, &[(2, 4), (0, 4)]),
    ]
}

/// Draw `count` distinct elements from `pool` without replacement.
fn choose_distinct<T: Copy>(rng: &mut ChaCha12Rng, pool: &[T], count: usize) -> Vec<T> {
    let mut pool = pool.to_vec();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let i = rng.gen_range(0..pool.len());
        out.push(pool.swap_remove(i));
    }
    out
}

/// A seeded, structurally valid run: every replica proposes in every round,
/// each block referencing its own predecessor plus a random set of peers,
/// biased toward tight `f+1` quorums so skips and undecided slots occur.
pub fn random_honest_run(seed: u64) -> (ScheduleConfig, Vec<Block>) {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let n: usize = if rng.gen_bool(0.5) { 3 } else { 5 };
    let committee = Committee::new(n);
    let f = committee.max_faulty();
    let leaders = rng.gen_range(1..=n as u16);
    let cfg = ScheduleConfig::new(committee, leaders);
    let rounds: Round = rng.gen_range(3..=8);

    let mut blocks = Vec::new();
    for round in 1..=rounds {
        for author in 0..n as u16 {
            let peers: Vec<u16> = (0..n as u16).filter(|a| *a != author).collect();
            let slack = n - 1 - f;
            let extra = if slack == 0 {
                0
            } else {
                // min of two draws biases toward minimal parent sets
                rng.gen_range(0..=slack).min(rng.gen_range(0..=slack))
            };
            let mut parents = vec![(author, round - 1)];
            parents.extend(
                choose_distinct(&mut rng, &peers, f + extra).into_iter().map(|a| (a, round - 1)),
            );
            blocks.push(blk(author, round, &parents));
        }
    }
    (cfg, blocks)
}

/// A causally closed view cut from a random honest run: the closure of a
/// random tip set, inserted in a shuffled order to exercise the pending
/// buffer.
pub fn random_closed_view(seed: u64) -> (ScheduleConfig, DagView) {
    let (cfg, blocks) = random_honest_run(seed);
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x9e3779b97f4a7c15);

    let mut tips: Vec<BlockRef> =
        blocks.iter().filter(|_| rng.gen_bool(0.75)).map(|b| b.reference()).collect();
    if tips.is_empty() {
        tips.push(blocks.last().unwrap().reference());
    }

    // Transitive closure over the run.
    let by_ref: std::collections::BTreeMap<BlockRef, &Block> =
        blocks.iter().map(|b| (b.reference(), b)).collect();
    let mut keep = std::collections::BTreeSet::new();
    let mut frontier = tips;
    while let Some(r) = frontier.pop() {
        if r.round == 0 || !keep.insert(r) {
            continue;
        }
        frontier.extend(by_ref[&r].parents().iter().copied());
    }

    let mut chosen: Vec<Block> = keep.iter().map(|r| by_ref[r].clone()).collect();
    // Shuffled insertion: the buffer must restore causal order.
    for i in (1..chosen.len()).rev() {
        chosen.swap(i, rng.gen_range(0..=i));
    }
    let mut view = DagView::new(cfg.committee);
    for block in chosen {
        view.insert_block(block).expect("run blocks are valid");
    }
    assert_eq!(view.pending_len(), 0, "closure must fully insert");
    view.assert_causal_closure();
    (cfg, view)
}
