//! One replica: DAG store + schedule + committer + proposer behind a single
//! event-driven state machine.
//!
//! A replica consumes a totally ordered stream of peer messages and timer
//! ticks. Every mutation funnels through `handle_message` / `handle_tick`;
//! the write-ahead log is appended before anything becomes visible (own
//! blocks before broadcast, received blocks before insertion), so replaying
//! the log reconstructs an equivalent state after a crash.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::committer::{CommitEntry, CommitState, DecisionRules, SlotState};
use crate::dag::{DagError, DagView, InsertOutcome};
use crate::proposer::{ProposerState, ReadinessRule, SubmitOutcome};
use crate::schedule::ScheduleConfig;
use crate::types::{
    read_u16, read_u32, read_u8, Block, BlockRef, CodecError, Micros, ReplicaId, Round,
    Transaction,
};
use crate::wal::{append_record, read_records, WalError, WalRecord};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PeerMessage {
    Block(Block),
    FetchRequest(Vec<BlockRef>),
    FetchResponse(Vec<Block>),
    TxSubmit(Transaction),
}

const TAG_BLOCK: u8 = 1;
const TAG_FETCH_REQUEST: u8 = 2;
const TAG_FETCH_RESPONSE: u8 = 3;
const TAG_TX_SUBMIT: u8 = 4;

/// Wire framing: `[len u32 BE][type u8][payload]`, the WAL framing minus the
/// checksum (the stream transport is assumed reliable).
pub fn encode_message(msg: &PeerMessage) -> Vec<u8> {
    let mut body = Vec::new();
    match msg {
        PeerMessage::Block(b) => {
            body.push(TAG_BLOCK);
            b.encode_into(&mut body);
        }
        PeerMessage::FetchRequest(refs) => {
            body.push(TAG_FETCH_REQUEST);
            body.extend_from_slice(&(refs.len() as u16).to_be_bytes());
            for r in refs {
                body.extend_from_slice(&r.author.0.to_be_bytes());
                body.extend_from_slice(&r.round.to_be_bytes());
            }
        }
        PeerMessage::FetchResponse(blocks) => {
            body.push(TAG_FETCH_RESPONSE);
            body.extend_from_slice(&(blocks.len() as u16).to_be_bytes());
            for b in blocks {
                b.encode_into(&mut body);
            }
        }
        PeerMessage::TxSubmit(tx) => {
            body.push(TAG_TX_SUBMIT);
            body.extend_from_slice(&tx.client.to_be_bytes());
            body.extend_from_slice(&tx.seq.to_be_bytes());
            body.extend_from_slice(&(tx.body.len() as u16).to_be_bytes());
            body.extend_from_slice(&tx.body);
        }
    }
    let mut out = Vec::with_capacity(4 + body.len());
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(&body);
    out
}

/// Decode one framed message from the front of `cursor`, advancing it.
pub fn decode_message(cursor: &mut &[u8]) -> Result<PeerMessage, CodecError> {
    let len = read_u32(cursor)? as usize;
    let mut body = crate::types::read_bytes(cursor, len)?;
    let tag = read_u8(&mut body)?;
    let msg = match tag {
        TAG_BLOCK => PeerMessage::Block(Block::decode_from(&mut body)?),
        TAG_FETCH_REQUEST => {
            let count = read_u16(&mut body)? as usize;
            let mut refs = Vec::with_capacity(count);
            for _ in 0..count {
                let author = ReplicaId(read_u16(&mut body)?);
                let round = read_u32(&mut body)?;
                refs.push(BlockRef::new(author, round));
            }
            PeerMessage::FetchRequest(refs)
        }
        TAG_FETCH_RESPONSE => {
            let count = read_u16(&mut body)? as usize;
            let mut blocks = Vec::with_capacity(count);
            for _ in 0..count {
                blocks.push(Block::decode_from(&mut body)?);
            }
            PeerMessage::FetchResponse(blocks)
        }
        TAG_TX_SUBMIT => {
            let client = read_u16(&mut body)?;
            let seq = read_u32(&mut body)?;
            let len = read_u16(&mut body)? as usize;
            let bytes = crate::types::read_bytes(&mut body, len)?.to_vec();
            PeerMessage::TxSubmit(Transaction::new(client, seq, bytes))
        }
        other => return Err(CodecError::UnknownTag(other)),
    };
    if !body.is_empty() {
        return Err(CodecError::TrailingBytes(body.len()));
    }
    Ok(msg)
}

#[derive(Clone, Debug)]
pub struct ReplicaConfig {
    pub schedule: ScheduleConfig,
    pub rule: ReadinessRule,
    pub rules: DecisionRules,
    pub batch_cap: usize,
    pub queue_cap: usize,
    pub quorum_seed: u64,
    /// Delay before re-requesting missing ancestors, fanning out to all
    /// peers (the original author may have crashed).
    pub fetch_retry: Micros,
}

impl ReplicaConfig {
    pub fn new(schedule: ScheduleConfig, rule: ReadinessRule) -> Self {
        Self {
            schedule,
            rule,
            rules: DecisionRules::standard(&schedule.committee),
            batch_cap: 256,
            queue_cap: 1_000_000,
            quorum_seed: 0,
            fetch_retry: rule.timeout * 2,
        }
    }
}

#[derive(Debug, Error)]
pub enum RecoverError {
    #[error(transparent)]
    Wal(#[from] WalError),
    #[error("log replay failed: {0}")]
    Replay(#[from] DagError),
    #[error("logged own block authored by {0}, expected {1}")]
    ForeignOwnBlock(ReplicaId, ReplicaId),
    #[error("commit mark at {slot:?} disagrees with recomputed decisions")]
    CommitMarkMismatch { slot: crate::schedule::SlotId },
}

#[derive(Clone, Copy, Debug)]
struct FetchState {
    due: Micros,
}

/// What one event made the replica do.
#[derive(Clone, Debug, Default)]
pub struct StepOutput {
    pub outbound: Vec<(ReplicaId, PeerMessage)>,
    pub committed: Vec<CommitEntry>,
    pub submit: Option<SubmitOutcome>,
}

pub struct Replica {
    id: ReplicaId,
    config: ReplicaConfig,
    view: DagView,
    commit: CommitState,
    proposer: ProposerState,
    wal: Vec<u8>,
    fetches: BTreeMap<BlockRef, FetchState>,
    malformed: u64,
}

impl Replica {
    pub fn new(id: ReplicaId, config: ReplicaConfig, now: Micros) -> Self {
        let committee = config.schedule.committee;
        assert!(committee.size() >= 3, "a single replica has no peers to wait on");
        assert!(committee.contains(id));
        let proposer = ProposerState::new(
            id,
            config.batch_cap,
            config.queue_cap,
            config.quorum_seed,
            now,
        );
        Self {
            id,
            config,
            view: DagView::new(committee),
            commit: CommitState::new(&committee),
            proposer,
            wal: Vec::new(),
            fetches: BTreeMap::new(),
            malformed: 0,
        }
    }

    pub fn id(&self) -> ReplicaId {
        self.id
    }

    pub fn view(&self) -> &DagView {
        &self.view
    }

    pub fn commit_state(&self) -> &CommitState {
        &self.commit
    }

    pub fn proposer(&self) -> &ProposerState {
        &self.proposer
    }

    pub fn wal_bytes(&self) -> &[u8] {
        &self.wal
    }

    pub fn malformed_count(&self) -> u64 {
        self.malformed
    }

    /// Earliest instant after `now` at which this replica wants a tick: the
    /// proposer deadline or a fetch retry, whichever is sooner.
    pub fn next_timer(&self, now: Micros) -> Option<Micros> {
        let deadline = self.proposer.deadline(&self.config.rule);
        let fetch = self.fetches.values().map(|f| f.due).min();
        [Some(deadline), fetch]
            .into_iter()
            .flatten()
            .filter(|t| *t > now)
            .min()
    }

    pub fn handle_message(&mut self, from: ReplicaId, msg: PeerMessage, now: Micros) -> StepOutput {
        let mut out = StepOutput::default();
        match msg {
            PeerMessage::Block(block) => {
                self.ingest(block, now, &mut out);
                self.run_pipeline(now, &mut out);
            }
            PeerMessage::FetchResponse(blocks) => {
                for block in blocks {
                    self.ingest(block, now, &mut out);
                }
                self.run_pipeline(now, &mut out);
            }
            PeerMessage::FetchRequest(refs) => {
                // Best effort: answer with whatever we hold, stored or
                // buffered; the requester retries on its own timer.
                let found: Vec<Block> = refs
                    .iter()
                    .filter_map(|r| self.view.stored_or_pending(*r).cloned())
                    .collect();
                out.outbound.push((from, PeerMessage::FetchResponse(found)));
            }
            PeerMessage::TxSubmit(tx) => {
                out.submit = Some(self.proposer.submit_transaction(tx));
            }
        }
        out
    }

    pub fn handle_tick(&mut self, now: Micros) -> StepOutput {
        let mut out = StepOutput::default();
        let due: Vec<BlockRef> = self
            .fetches
            .iter()
            .filter(|(_, f)| f.due <= now)
            .map(|(r, _)| *r)
            .collect();
        if !due.is_empty() {
            for r in &due {
                self.fetches.insert(*r, FetchState { due: now + self.config.fetch_retry });
            }
            for peer in self.peers() {
                out.outbound.push((peer, PeerMessage::FetchRequest(due.clone())));
            }
        }
        self.run_pipeline(now, &mut out);
        out
    }

    fn peers(&self) -> impl Iterator<Item = ReplicaId> + '_ {
        self.config.schedule.committee.ids().filter(move |id| *id != self.id)
    }

    fn ingest(&mut self, block: Block, now: Micros, out: &mut StepOutput) {
        if block.validate(&self.config.schedule.committee).is_err() {
            // The CFT network is reliable; malformation signals a bug
            // upstream, count and drop.
            self.malformed += 1;
            return;
        }
        let reference = block.reference();
        // These bytes satisfy any outstanding fetch for the block itself,
        // even if it only buffers while its own ancestors are fetched.
        self.fetches.remove(&reference);
        if !self.view.contains(reference) && !self.view.has_pending(reference) {
            self.append_wal(&WalRecord::ReceivedBlock(block.clone()));
        }
        match self.view.insert_block(block) {
            Ok(InsertOutcome::Inserted { added }) => {
                for r in added {
                    self.fetches.remove(&r);
                }
            }
            Ok(InsertOutcome::Buffered { missing }) => {
                let wanted: Vec<BlockRef> = missing
                    .into_iter()
                    .filter(|m| !self.fetches.contains_key(m))
                    .collect();
                if !wanted.is_empty() {
                    for m in &wanted {
                        self.fetches
                            .insert(*m, FetchState { due: now + self.config.fetch_retry });
                    }
                    out.outbound.push((reference.author, PeerMessage::FetchRequest(wanted)));
                }
            }
            Err(DagError::DuplicateConflict(r)) => {
                // No equivocation exists under crash faults.
                panic!("replica {}: conflicting duplicate block at {r}", self.id);
            }
            Err(_) => self.malformed += 1,
        }
    }

    /// Commit whatever the view now supports, then emit blocks while rounds
    /// are ready. Own blocks hit the WAL before they hit the wire.
    fn run_pipeline(&mut self, now: Micros, out: &mut StepOutput) {
        loop {
            let entries =
                self.commit.extend(&self.view, &self.config.schedule, &self.config.rules);
            for entry in &entries {
                let slot = entry.anchor_slot;
                let leader = BlockRef::new(self.config.schedule.leader_of(slot), slot.round);
                if entry.block == leader {
                    self.append_wal(&WalRecord::CommitMark { slot, block: entry.block });
                }
            }
            out.committed.extend(entries);

            match self.proposer.on_block_or_tick(
                &self.view,
                &self.config.schedule,
                &self.config.rule,
                now,
            ) {
                Some(block) => {
                    self.append_wal(&WalRecord::OwnBlock(block.clone()));
                    let inserted = self
                        .view
                        .insert_block(block.clone())
                        .expect("own block parents were taken from the view");
                    debug_assert!(matches!(inserted, InsertOutcome::Inserted { .. }));
                    for peer in self.config.schedule.committee.ids() {
                        if peer != self.id {
                            out.outbound.push((peer, PeerMessage::Block(block.clone())));
                        }
                    }
                }
                None => break,
            }
        }
    }

    fn append_wal(&mut self, record: &WalRecord) {
        append_record(&mut self.wal, record);
    }

    /// Rebuild a replica from its log. Blocks are replayed in append order,
    /// commits are recomputed from the rebuilt DAG (commit marks only
    /// cross-check the result), and the proposer resumes one past the
    /// highest round it ever logged. Returns the recomputed committed
    /// sequence so the application can re-consume it, deduplicating by
    /// position.
    pub fn recover(
        id: ReplicaId,
        config: ReplicaConfig,
        wal_bytes: Vec<u8>,
        now: Micros,
    ) -> Result<(Self, Vec<CommitEntry>), RecoverError> {
        let committee = config.schedule.committee;
        let records = read_records(&wal_bytes)?;
        let mut view = DagView::new(committee);
        let mut highest_own: Option<Round> = None;
        let mut marks = Vec::new();
        for record in records {
            match record {
                WalRecord::OwnBlock(block) => {
                    if block.author() != id {
                        return Err(RecoverError::ForeignOwnBlock(block.author(), id));
                    }
                    highest_own = highest_own.max(Some(block.round()));
                    view.insert_block(block)?;
                }
                WalRecord::ReceivedBlock(block) => {
                    view.insert_block(block)?;
                }
                WalRecord::CommitMark { slot, block } => marks.push((slot, block)),
            }
        }

        let mut commit = CommitState::new(&committee);
        commit.extend(&view, &config.schedule, &config.rules);
        for (slot, block) in marks {
            match commit.decided().get(&slot) {
                Some((SlotState::Commit(b), _)) if *b == block => {}
                _ => return Err(RecoverError::CommitMarkMismatch { slot }),
            }
        }

        let next_round = highest_own.map_or(1, |r| r + 1);
        let proposer = ProposerState::resuming_at(
            id,
            next_round,
            config.batch_cap,
            config.queue_cap,
            config.quorum_seed,
            now,
        );
        // Ancestors still missing for buffered blocks get re-requested on
        // the first tick, fanned out to every peer.
        let mut fetches = BTreeMap::new();
        let pending_missing: Vec<BlockRef> = view
            .pending_refs_missing()
            .into_iter()
            .collect();
        for m in pending_missing {
            fetches.insert(m, FetchState { due: now });
        }

        let committed = commit.committed().to_vec();
        let replica = Self {
            id,
            config,
            view,
            commit,
            proposer,
            wal: wal_bytes,
            fetches,
            malformed: 0,
        };
        Ok((replica, committed))
    }
}
