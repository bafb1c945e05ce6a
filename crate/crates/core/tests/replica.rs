//! Replica state machine: ancestor sync, WAL durability ordering, crash
//! recovery at arbitrary log prefixes.

use dagcore::replica::{PeerMessage, Replica, ReplicaConfig, StepOutput};
use dagcore::testing::blk;
use dagcore::wal::{read_records, WalRecord};
use dagcore::{
    BlockRef, Committee, QuorumMode, ReadinessRule, ReplicaId, ScheduleConfig, SubmitOutcome,
    Transaction,
};

const TIMEOUT: u64 = 500_000;

fn config(n: usize) -> ReplicaConfig {
    let schedule = ScheduleConfig::new(Committee::new(n), 1);
    ReplicaConfig::new(schedule, ReadinessRule::new(QuorumMode::FirstQuorum, true, TIMEOUT))
}

fn bref(author: u16, round: u32) -> BlockRef {
    BlockRef::new(ReplicaId(author), round)
}

/// Drive a fault-free 3-replica cluster in lockstep, delivering every
/// outbound block to every peer immediately. Returns the replicas after
/// `rounds` of progress plus the commit log as (replica, step, entry).
fn lockstep(rounds: u32) -> (Vec<Replica>, Vec<(u16, u64, dagcore::CommitEntry)>) {
    let mut replicas: Vec<Replica> =
        (0..3).map(|i| Replica::new(ReplicaId(i), config(3), 0)).collect();
    let mut commits = Vec::new();
    let mut inboxes: Vec<Vec<(ReplicaId, PeerMessage)>> = vec![Vec::new(); 3];
    // Kick off round 1.
    for (i, r) in replicas.iter_mut().enumerate() {
        let out = r.handle_tick(0);
        for (dst, msg) in out.outbound {
            inboxes[dst.as_usize()].push((ReplicaId(i as u16), msg));
        }
    }
    for step in 0..rounds as u64 {
        let now = (step + 1) * 1000;
        let batches: Vec<Vec<(ReplicaId, PeerMessage)>> = std::mem::take(&mut inboxes);
        inboxes = vec![Vec::new(); 3];
        for (i, batch) in batches.into_iter().enumerate() {
            for (from, msg) in batch {
                let out = replicas[i].handle_message(from, msg, now);
                for (dst, m) in out.outbound {
                    inboxes[dst.as_usize()].push((ReplicaId(i as u16), m));
                }
                commits.extend(out.committed.into_iter().map(|e| (i as u16, step, e)));
            }
        }
    }
    (replicas, commits)
}

#[test]
fn buffered_block_triggers_fetch_to_author() {
    let mut replica = Replica::new(ReplicaId(0), config(3), 0);
    // A round-2 block arrives before its round-1 ancestors.
    let late = blk(1, 2, &[(1, 1), (2, 1)]);
    let out = replica.handle_message(ReplicaId(1), PeerMessage::Block(late), 10);
    let fetches: Vec<_> = out
        .outbound
        .iter()
        .filter(|(_, m)| matches!(m, PeerMessage::FetchRequest(_)))
        .collect();
    assert_eq!(fetches.len(), 1);
    let (dst, PeerMessage::FetchRequest(refs)) = &fetches[0] else {
        unreachable!()
    };
    assert_eq!(*dst, ReplicaId(1), "asks the block's author");
    assert_eq!(refs.as_slice(), &[bref(1, 1), bref(2, 1)]);
}

#[test]
fn fetch_request_answered_best_effort() {
    let mut replica = Replica::new(ReplicaId(0), config(3), 0);
    replica.handle_tick(0); // emits own round-1 block
    let own = bref(0, 1);
    let unknown = bref(2, 7);
    let out =
        replica.handle_message(ReplicaId(2), PeerMessage::FetchRequest(vec![own, unknown]), 5);
    let (dst, PeerMessage::FetchResponse(blocks)) = &out.outbound[0] else {
        panic!("expected a response")
    };
    assert_eq!(*dst, ReplicaId(2));
    assert_eq!(blocks.len(), 1, "unknown refs are omitted");
    assert_eq!(blocks[0].reference(), own);
}

#[test]
fn fetch_retry_fans_out_to_all_peers() {
    let mut replica = Replica::new(ReplicaId(0), config(3), 0);
    let late = blk(1, 2, &[(1, 1), (2, 1)]);
    replica.handle_message(ReplicaId(1), PeerMessage::Block(late), 10);
    // Ancestors still missing when the retry timer fires: re-request from
    // everyone, since the author may have crashed.
    let out = replica.handle_tick(10 + 2 * TIMEOUT);
    let dsts: Vec<ReplicaId> = out
        .outbound
        .iter()
        .filter(|(_, m)| matches!(m, PeerMessage::FetchRequest(_)))
        .map(|(d, _)| *d)
        .collect();
    assert_eq!(dsts, vec![ReplicaId(1), ReplicaId(2)]);
}

#[test]
fn completed_support_commits_on_arrival() {
    let (replicas, commits) = lockstep(6);
    assert!(!commits.is_empty(), "lockstep progress must commit");
    // Every replica's first committed block is the round-1 slot leader.
    for id in 0..3u16 {
        let first = commits.iter().find(|(r, _, _)| *r == id).expect("each replica commits");
        assert_eq!(first.2.block, bref(1, 1));
        assert_eq!(first.2.position, 0);
    }
    // And commit sequences agree pairwise as prefixes.
    let seq = |i: usize| -> Vec<BlockRef> {
        replicas[i].commit_state().committed().iter().map(|e| e.block).collect()
    };
    for a in 0..3 {
        for b in 0..3 {
            let (sa, sb) = (seq(a), seq(b));
            let n = sa.len().min(sb.len());
            assert_eq!(sa[..n], sb[..n]);
        }
    }
}

#[test]
fn own_blocks_hit_the_wal_before_the_wire() {
    let (replicas, _) = lockstep(6);
    for replica in &replicas {
        let records = read_records(replica.wal_bytes()).unwrap();
        let own_logged: Vec<BlockRef> = records
            .iter()
            .filter_map(|r| match r {
                WalRecord::OwnBlock(b) => Some(b.reference()),
                _ => None,
            })
            .collect();
        // Every round proposed so far appears exactly once in the log.
        let proposed_rounds = replica.proposer().current_round() - 1;
        assert_eq!(own_logged.len() as u32, proposed_rounds);
        for (i, r) in own_logged.iter().enumerate() {
            assert_eq!(r.round, i as u32 + 1);
        }
    }
}

#[test]
fn tx_submission_backpressure() {
    let mut cfg = config(3);
    cfg.queue_cap = 2;
    let mut replica = Replica::new(ReplicaId(0), cfg, 0);
    let tx = |seq| PeerMessage::TxSubmit(Transaction::new(1, seq, vec![0; 18]));
    assert_eq!(replica.handle_message(ReplicaId(0), tx(0), 0).submit, Some(SubmitOutcome::Accepted));
    assert_eq!(replica.handle_message(ReplicaId(0), tx(1), 0).submit, Some(SubmitOutcome::Accepted));
    assert_eq!(replica.handle_message(ReplicaId(0), tx(2), 0).submit, Some(SubmitOutcome::QueueFull));
}

#[test]
fn malformed_blocks_are_counted_and_dropped() {
    let mut replica = Replica::new(ReplicaId(0), config(3), 0);
    let thin = blk(1, 1, &[(1, 0)]); // below the f+1 parent floor
    let out = replica.handle_message(ReplicaId(1), PeerMessage::Block(thin), 0);
    assert_eq!(replica.malformed_count(), 1);
    assert!(!replica.view().contains(bref(1, 1)));
    assert!(out.outbound.iter().all(|(_, m)| !matches!(m, PeerMessage::FetchRequest(_))));
}

#[test]
fn recovery_resumes_past_logged_rounds() {
    let (replicas, _) = lockstep(10);
    let source = &replicas[0];
    let pre_crash: Vec<BlockRef> =
        source.commit_state().committed().iter().map(|e| e.block).collect();
    let next_round = source.proposer().current_round();
    assert!(next_round > 5, "lockstep made progress");

    let (recovered, replayed) =
        Replica::recover(ReplicaId(0), config(3), source.wal_bytes().to_vec(), 999)
            .expect("clean log recovers");
    let replayed_refs: Vec<BlockRef> = replayed.iter().map(|e| e.block).collect();
    assert_eq!(replayed_refs, pre_crash, "recomputed sequence matches pre-crash commits");
    assert_eq!(recovered.proposer().current_round(), next_round, "never re-proposes a round");
}

#[test]
fn recovery_from_every_log_prefix_preserves_the_prefix_property() {
    let (replicas, _) = lockstep(8);
    let source = &replicas[1];
    let full = source.wal_bytes();
    let pre_crash: Vec<BlockRef> =
        source.commit_state().committed().iter().map(|e| e.block).collect();
    // Cut the log at every byte offset: recovery must never invent commits
    // outside the pre-crash sequence, and must never re-propose a logged
    // round.
    for cut in 0..=full.len() {
        let (recovered, replayed) =
            Replica::recover(ReplicaId(1), config(3), full[..cut].to_vec(), 0)
                .expect("torn tails recover");
        let replayed_refs: Vec<BlockRef> = replayed.iter().map(|e| e.block).collect();
        assert!(
            replayed_refs.len() <= pre_crash.len()
                && replayed_refs[..] == pre_crash[..replayed_refs.len()],
            "cut {cut}: recovered commits diverge from pre-crash prefix"
        );
        let logged_own = read_records(&full[..cut])
            .unwrap()
            .iter()
            .filter_map(|r| match r {
                WalRecord::OwnBlock(b) => Some(b.round()),
                _ => None,
            })
            .max();
        assert_eq!(recovered.proposer().current_round(), logged_own.map_or(1, |r| r + 1));
    }
}

#[test]
fn empty_wal_recovers_to_fresh_state() {
    let (recovered, replayed) =
        Replica::recover(ReplicaId(2), config(3), Vec::new(), 0).unwrap();
    assert!(replayed.is_empty());
    assert_eq!(recovered.proposer().current_round(), 1);
    assert_eq!(recovered.view().highest_round(), 0);
}

#[test]
fn corrupt_mid_stream_wal_fails_recovery() {
    let (replicas, _) = lockstep(5);
    let mut bytes = replicas[0].wal_bytes().to_vec();
    assert!(bytes.len() > 40);
    bytes[10] ^= 0xFF; // inside the first record, with valid records after it
    assert!(Replica::recover(ReplicaId(0), config(3), bytes, 0).is_err());
}

#[test]
fn step_output_default_is_empty() {
    let out = StepOutput::default();
    assert!(out.outbound.is_empty() && out.committed.is_empty() && out.submit.is_none());
}
