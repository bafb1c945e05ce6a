//! Crash-fault-tolerant DAG consensus core.
//!
//! Replicas disseminate transactions through a round-structured block DAG
//! and derive a total order from it: pre-designated skeleton slots commit
//! once `f+1` next-round blocks reference their leader block (two network
//! hops), or are resolved indirectly through later slots. The crate provides
//! the DAG store, the slot schedule, the commit rules, the block proposer,
//! the write-ahead log, and the replica state machine binding them together.
//!
//! Everything here is deterministic and free of clocks and I/O: time enters
//! only as caller-supplied microsecond instants, which makes replicas
//! drivable both by a real transport and by a discrete-event simulator.

pub mod committer;
pub mod dag;
pub mod proposer;
pub mod replica;
pub mod schedule;
pub mod testing;
pub mod types;
pub mod wal;

pub use committer::{
    linearize_sub_dag, try_decide, try_decide_with_rules, try_direct_decide, try_indirect_decide,
    CommitEntry,
    CommitState, CommitterError, DecisionPath, DecisionRules, SlotState, SlotStatus,
};
pub use dag::{DagError, DagView, InsertOutcome};
pub use proposer::{ProposerState, QuorumMode, ReadinessRule, SubmitOutcome};
pub use replica::{PeerMessage, RecoverError, Replica, ReplicaConfig, StepOutput};
pub use schedule::{wave_coords, ScheduleConfig, SlotId, WaveCoords, WAVE_LENGTH};
pub use types::{
    Micros,
    Block, BlockError, BlockRef, CodecError, Committee, ReplicaId, Round, Transaction, TxId,
};
pub use wal::{WalError, WalRecord};
