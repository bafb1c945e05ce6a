//! The event loop: a single-threaded, seeded discrete-event simulation of a
//! full replica cluster. Events are processed in `(time, sequence)` order;
//! two runs with the same config produce byte-identical traces.

use std::collections::BTreeMap;

use dagcore::replica::{PeerMessage, Replica, ReplicaConfig};
use dagcore::{
    Block, BlockRef, CommitEntry, Micros, ReplicaId, SlotState, Transaction, TxId,
};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::config::SimConfig;
use crate::net::NetModel;
use crate::trace::{
    CommitRecord, CommittedRef, DecidedSlotRecord, LatencySample, RefRecord, ReplicaTrace,
    SimTrace, SubmittedTx,
};

#[derive(Debug)]
enum Event {
    Tick { replica: ReplicaId },
    Deliver { from: ReplicaId, to: ReplicaId, msg: PeerMessage },
    Submit { to: ReplicaId, tx: Transaction },
    Crash { replica: ReplicaId },
    Recover { replica: ReplicaId },
}

/// Everything remembered about one replica across crashes.
struct Seat {
    id: ReplicaId,
    replica: Option<Replica>,
    saved_wal: Vec<u8>,
    tick_at: Option<Micros>,
    messages_sent: u64,
    accepted: u64,
    rejected: u64,
    crashes_us: Vec<Micros>,
    recoveries_us: Vec<Micros>,
    crash_snapshots: Vec<Vec<CommittedRef>>,
    recovery_failure: Option<String>,
    /// Full trace snapshot taken at crash time, used if still down at the
    /// horizon.
    down_state: Option<(Vec<CommittedRef>, Vec<DecidedSlotRecord>, Vec<TxId>, u64, u64)>,
}

struct Totals {
    sent: u64,
    delivered: u64,
    dropped_to_crashed: u64,
}

pub fn run(config: &SimConfig) -> SimTrace {
    config.validate().expect("caller validates scenario configs");
    let mut sim = Simulation::new(config.clone());
    sim.seed_events();
    sim.run_to_horizon();
    sim.into_trace()
}

struct Simulation {
    config: SimConfig,
    net: NetModel,
    now: Micros,
    seq: u64,
    queue: BTreeMap<(Micros, u64), Event>,
    seats: Vec<Seat>,
    delay_rng: ChaCha12Rng,
    submit_times: BTreeMap<TxId, Micros>,
    submitted: Vec<SubmittedTx>,
    commits: Vec<CommitRecord>,
    latencies: Vec<LatencySample>,
    emitted: BTreeMap<BlockRef, Vec<TxId>>,
    totals: Totals,
}

impl Simulation {
    fn new(config: SimConfig) -> Self {
        let net = NetModel::new(config.net.clone());
        let seats = config
            .committee()
            .ids()
            .map(|id| Seat {
                id,
                replica: Some(Replica::new(id, replica_config(&config), 0)),
                saved_wal: Vec::new(),
                tick_at: None,
                messages_sent: 0,
                accepted: 0,
                rejected: 0,
                crashes_us: Vec::new(),
                recoveries_us: Vec::new(),
                crash_snapshots: Vec::new(),
                recovery_failure: None,
                down_state: None,
            })
            .collect();
        let delay_rng = ChaCha12Rng::seed_from_u64(config.seed.wrapping_mul(0x9E3779B97F4A7C15));
        Self {
            config,
            net,
            now: 0,
            seq: 0,
            queue: BTreeMap::new(),
            seats,
            delay_rng,
            submit_times: BTreeMap::new(),
            submitted: Vec::new(),
            commits: Vec::new(),
            latencies: Vec::new(),
            emitted: BTreeMap::new(),
            totals: Totals { sent: 0, delivered: 0, dropped_to_crashed: 0 },
        }
    }

    fn push(&mut self, at: Micros, event: Event) {
        let key = (at, self.seq);
        self.seq += 1;
        self.queue.insert(key, event);
    }

    fn seed_events(&mut self) {
        for id in self.config.committee().ids() {
            self.push(0, Event::Tick { replica: id });
        }
        // Open-loop workload, round-robin over replicas, clients collocated.
        if self.config.tx_rate > 0.0 {
            let stop = self.config.workload_stop_us().min(self.config.horizon_us());
            let mut seqs = vec![0u32; self.config.n];
            let mut j: u64 = 0;
            loop {
                let at = (j as f64 / self.config.tx_rate * 1e6).round() as Micros;
                if at >= stop {
                    break;
                }
                let target = (j % self.config.n as u64) as u16;
                let seq = seqs[target as usize];
                seqs[target as usize] += 1;
                let tx = Transaction::new(target, seq, tx_body(self.config.tx_size, target, seq));
                self.push(at, Event::Submit { to: ReplicaId(target), tx });
                j += 1;
            }
        }
        let faults = self.config.faults.clone();
        for crash in &faults.crashes {
            self.push(crash.at_ms * 1000, Event::Crash { replica: ReplicaId(crash.replica) });
        }
        for rec in &faults.recoveries {
            self.push(rec.at_ms * 1000, Event::Recover { replica: ReplicaId(rec.replica) });
        }
    }

    fn run_to_horizon(&mut self) {
        let horizon = self.config.horizon_us();
        loop {
            let Some((&(at, _), _)) = self.queue.first_key_value() else {
                break;
            };
            if at > horizon {
                break;
            }
            let (_, event) = self.queue.pop_first().expect("peeked");
            self.now = at;
            self.process(event);
        }
    }

    fn alive(&self, id: ReplicaId) -> bool {
        self.seats[id.as_usize()].replica.is_some()
    }

    fn process(&mut self, event: Event) {
        match event {
            Event::Tick { replica } => {
                let seat = &mut self.seats[replica.as_usize()];
                if seat.tick_at == Some(self.now) {
                    seat.tick_at = None;
                }
                if let Some(rep) = seat.replica.as_mut() {
                    let out = rep.handle_tick(self.now);
                    self.absorb(replica, out.outbound, out.committed, false);
                }
            }
            Event::Deliver { from, to, msg } => {
                if !self.alive(to) {
                    self.totals.dropped_to_crashed += 1;
                    return;
                }
                self.totals.delivered += 1;
                let rep = self.seats[to.as_usize()].replica.as_mut().expect("alive");
                let out = rep.handle_message(from, msg, self.now);
                self.absorb(to, out.outbound, out.committed, false);
            }
            Event::Submit { to, tx } => {
                let id = tx.id();
                self.submit_times.insert(id, self.now);
                let accepted = if self.alive(to) {
                    let rep = self.seats[to.as_usize()].replica.as_mut().expect("alive");
                    let out = rep.handle_message(to, PeerMessage::TxSubmit(tx), self.now);
                    matches!(out.submit, Some(dagcore::SubmitOutcome::Accepted))
                } else {
                    false
                };
                let seat = &mut self.seats[to.as_usize()];
                if accepted {
                    seat.accepted += 1;
                } else {
                    seat.rejected += 1;
                }
                self.submitted.push(SubmittedTx {
                    client: id.0,
                    seq: id.1,
                    at_us: self.now,
                    accepted,
                });
            }
            Event::Crash { replica } => self.crash(replica),
            Event::Recover { replica } => self.recover(replica),
        }
    }

    fn crash(&mut self, id: ReplicaId) {
        let seat = &mut self.seats[id.as_usize()];
        let Some(rep) = seat.replica.take() else {
            return; // already down
        };
        seat.crashes_us.push(self.now);
        let committed = committed_refs(&rep);
        seat.crash_snapshots.push(committed.clone());
        seat.down_state = Some((
            committed,
            decided_records(&rep),
            committed_tx_ids(&rep),
            rep.proposer().timeout_fires(),
            rep.malformed_count(),
        ));
        seat.saved_wal = rep.wal_bytes().to_vec();
        seat.tick_at = None;
        // In-flight messages to the crashed replica are lost; messages it
        // already sent stay deliverable.
        let purged: Vec<(Micros, u64)> = self
            .queue
            .iter()
            .filter(|(_, ev)| matches!(ev, Event::Deliver { to, .. } if to == &id))
            .map(|(k, _)| *k)
            .collect();
        self.totals.dropped_to_crashed += purged.len() as u64;
        for key in purged {
            self.queue.remove(&key);
        }
    }

    fn recover(&mut self, id: ReplicaId) {
        let seat = &mut self.seats[id.as_usize()];
        if seat.replica.is_some() {
            return; // not down
        }
        let wal = seat.saved_wal.clone();
        let (replica, _replayed) =
            match Replica::recover(id, replica_config(&self.config), wal, self.now) {
                Ok(recovered) => recovered,
                Err(err) => {
                    // Stays down; the trace carries the evidence.
                    seat.recovery_failure = Some(err.to_string());
                    return;
                }
            };
        seat.saved_wal.clear();
        seat.recoveries_us.push(self.now);
        seat.down_state = None;
        seat.replica = Some(replica);
        self.schedule_tick(id);
        // Nudge the recovered replica immediately so it re-requests missing
        // ancestors without waiting for peer traffic.
        self.push(self.now, Event::Tick { replica: id });
    }

    /// Route one step's outputs: emitted messages onto the network, commits
    /// into the trace.
    fn absorb(
        &mut self,
        from: ReplicaId,
        outbound: Vec<(ReplicaId, PeerMessage)>,
        committed: Vec<CommitEntry>,
        replayed: bool,
    ) {
        for (dst, msg) in outbound {
            self.totals.sent += 1;
            self.seats[from.as_usize()].messages_sent += 1;
            if let PeerMessage::Block(b) = &msg {
                if b.author() == from {
                    self.note_emitted(from, b);
                }
            }
            let delay = self.net.sample_delay(from, dst, self.now, &mut self.delay_rng);
            self.push(self.now + delay, Event::Deliver { from, to: dst, msg });
        }
        if !replayed {
            for entry in committed {
                self.record_commit(from, entry);
            }
        }
        self.schedule_tick(from);
    }

    fn note_emitted(&mut self, from: ReplicaId, block: &Block) {
        // Write-ahead ordering: a block on the wire is always in its
        // author's log already, i.e. its round is behind the proposer.
        let rep = self.seats[from.as_usize()].replica.as_ref().expect("sender is alive");
        assert!(
            block.round() < rep.proposer().current_round(),
            "own block broadcast before its log append"
        );
        self.emitted
            .entry(block.reference())
            .or_insert_with(|| block.payload().iter().map(|t| t.id()).collect());
    }

    fn record_commit(&mut self, at: ReplicaId, entry: CommitEntry) {
        let seat = &self.seats[at.as_usize()];
        let rep = seat.replica.as_ref().expect("committing replica is alive");
        let block = rep.view().block(entry.block).expect("committed blocks are stored");
        self.commits.push(CommitRecord {
            time_us: self.now,
            replica: at.0,
            position: entry.position,
            author: entry.block.author.0,
            round: entry.block.round,
            anchor_round: entry.anchor_slot.round,
            anchor_rank: entry.anchor_slot.rank,
            hops: entry.anchor_slot.round + 2 - entry.block.round,
            tx_count: block.payload().len(),
        });
        // End-to-end latency, measured at the transaction's home replica.
        for tx in block.payload() {
            if tx.client == at.0 {
                if let Some(&submitted) = self.submit_times.get(&tx.id()) {
                    self.latencies.push(LatencySample {
                        client: tx.client,
                        seq: tx.seq,
                        submitted_us: submitted,
                        committed_us: self.now,
                    });
                }
            }
        }
    }

    fn schedule_tick(&mut self, id: ReplicaId) {
        let now = self.now;
        let seat = &mut self.seats[id.as_usize()];
        let Some(rep) = seat.replica.as_ref() else {
            return;
        };
        if let Some(t) = rep.next_timer(now) {
            let stale = seat.tick_at.is_none_or(|cur| cur <= now || t < cur);
            if stale {
                seat.tick_at = Some(t);
                self.push(t, Event::Tick { replica: id });
            }
        }
    }

    fn into_trace(mut self) -> SimTrace {
        let in_flight = self
            .queue
            .values()
            .filter(|ev| matches!(ev, Event::Deliver { .. }))
            .count() as u64;
        let schedule = self.config.schedule();
        let rules = self.config.decision_rules();
        let mut replicas = Vec::new();
        for seat in &mut self.seats {
            let (committed, decided, committed_txs, timeout_fires, malformed) =
                match (&seat.replica, &seat.down_state) {
                    (Some(rep), _) => (
                        committed_refs(rep),
                        decided_records(rep),
                        committed_tx_ids(rep),
                        rep.proposer().timeout_fires(),
                        rep.malformed_count(),
                    ),
                    (None, Some(snap)) => snap.clone(),
                    (None, None) => unreachable!("down seats always hold a snapshot"),
                };
            let decision_audit_failures = seat
                .replica
                .as_ref()
                .map(|rep| audit_decisions(rep, &schedule, &rules))
                .unwrap_or_default();
            replicas.push(ReplicaTrace {
                id: seat.id.0,
                committed,
                decided,
                committed_txs,
                timeout_fires,
                messages_sent: seat.messages_sent,
                accepted_txs: seat.accepted,
                rejected_txs: seat.rejected,
                malformed,
                crashes_us: seat.crashes_us.clone(),
                recoveries_us: seat.recoveries_us.clone(),
                crash_snapshots: seat.crash_snapshots.clone(),
                recovery_failure: seat.recovery_failure.clone(),
                decision_audit_failures,
            });
        }
        SimTrace {
            config: self.config,
            replicas,
            commits: self.commits,
            emitted: self
                .emitted
                .into_iter()
                .map(|(r, txs)| (RefRecord { author: r.author.0, round: r.round }, txs))
                .collect(),
            submitted: self.submitted,
            latencies: self.latencies,
            messages_sent: self.totals.sent,
            messages_delivered: self.totals.delivered,
            messages_dropped_to_crashed: self.totals.dropped_to_crashed,
            messages_in_flight_at_horizon: in_flight,
        }
    }
}

fn replica_config(config: &SimConfig) -> ReplicaConfig {
    let mut rc = ReplicaConfig::new(config.schedule(), config.readiness_rule());
    rc.batch_cap = config.batch_cap;
    rc.queue_cap = config.queue_cap;
    rc.quorum_seed = config.seed ^ 0xA076_1D64_78BD_642F;
    rc.rules = config.decision_rules();
    rc
}

fn tx_body(size: usize, client: u16, seq: u32) -> Vec<u8> {
    let mut body = vec![0u8; size];
    let tag: Vec<u8> =
        client.to_be_bytes().iter().chain(seq.to_be_bytes().iter()).copied().collect();
    let n = tag.len().min(body.len());
    body[..n].copy_from_slice(&tag[..n]);
    body
}

fn committed_refs(rep: &Replica) -> Vec<CommittedRef> {
    rep.commit_state()
        .committed()
        .iter()
        .map(|e| CommittedRef {
            author: e.block.author.0,
            round: e.block.round,
            anchor_round: e.anchor_slot.round,
            anchor_rank: e.anchor_slot.rank,
            position: e.position,
        })
        .collect()
}

fn committed_tx_ids(rep: &Replica) -> Vec<TxId> {
    rep.commit_state()
        .committed()
        .iter()
        .flat_map(|e| {
            rep.view()
                .block(e.block)
                .expect("committed blocks are stored")
                .payload()
                .iter()
                .map(|t| t.id())
        })
        .collect()
}

/// Compare a replica's incrementally memoized slot decisions with a
/// from-scratch re-derivation over its final view, under the same rules the
/// replica ran. Decisions of the sound protocol are monotone, so any
/// disagreement means the rules (or an implementation) are unsafe.
fn audit_decisions(
    rep: &Replica,
    schedule: &dagcore::ScheduleConfig,
    rules: &dagcore::DecisionRules,
) -> Vec<(u32, u16)> {
    let view = rep.view();
    if view.highest_round() == 0 {
        return Vec::new();
    }
    let batch =
        dagcore::try_decide_with_rules(view, 0, view.highest_round(), schedule, rules);
    let by_slot: std::collections::BTreeMap<dagcore::SlotId, SlotState> =
        batch.into_iter().map(|s| (s.slot, s.state)).collect();
    let mut failures = Vec::new();
    for (slot, (memo_state, _)) in rep.commit_state().decided() {
        let fresh = by_slot.get(slot).copied().unwrap_or(SlotState::Undecided);
        if fresh != *memo_state {
            failures.push((slot.round, slot.rank));
        }
    }
    failures
}

fn decided_records(rep: &Replica) -> Vec<DecidedSlotRecord> {
    rep.commit_state()
        .decided()
        .iter()
        .map(|(slot, (state, path))| DecidedSlotRecord {
            round: slot.round,
            rank: slot.rank,
            state: match state {
                SlotState::Commit(_) => "commit",
                SlotState::Skip => "skip",
                SlotState::Undecided => unreachable!("only decided slots are cached"),
            },
            block: match state {
                SlotState::Commit(b) => Some(RefRecord { author: b.author.0, round: b.round }),
                _ => None,
            },
            path: match path {
                dagcore::DecisionPath::Direct => "direct",
                dagcore::DecisionPath::Indirect => "indirect",
            },
        })
        .collect()
}
