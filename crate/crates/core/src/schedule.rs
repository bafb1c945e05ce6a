//! Skeleton-slot schedule: a deterministic, globally known total order of
//! leader slots, round-robin across replicas.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::types::{Committee, ReplicaId, Round};

/// Waves span two rounds: propose, then decide. One wave starts per round,
/// consecutive waves overlapping by one round.
pub const WAVE_LENGTH: u32 = 2;

/// A skeleton slot: a pre-designated leader position. Slots are totally
/// ordered by `(round, rank)`.
#[derive(
    Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct SlotId {
    pub round: Round,
    pub rank: u16,
}

impl SlotId {
    pub fn new(round: Round, rank: u16) -> Self {
        Self { round, rank }
    }
}

impl fmt::Display for SlotId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "S({},{})", self.round, self.rank)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub committee: Committee,
    pub leaders_per_round: u16,
}

impl ScheduleConfig {
    pub fn new(committee: Committee, leaders_per_round: u16) -> Self {
        assert!(
            leaders_per_round >= 1 && (leaders_per_round as usize) <= committee.size(),
            "leaders_per_round must be in [1, n]"
        );
        Self { committee, leaders_per_round }
    }

    /// The designated leader of a slot: `(round + rank) mod n`.
    pub fn leader_of(&self, slot: SlotId) -> ReplicaId {
        debug_assert!(slot.round >= 1);
        debug_assert!(slot.rank < self.leaders_per_round);
        ReplicaId(((slot.round as usize + slot.rank as usize) % self.committee.size()) as u16)
    }

    /// The skeleton leaders of `round`, rank order.
    pub fn leaders_of_round(&self, round: Round) -> impl Iterator<Item = ReplicaId> + '_ {
        (0..self.leaders_per_round).map(move |rank| self.leader_of(SlotId::new(round, rank)))
    }

    /// Slots of one round in rank order.
    pub fn slots_of_round(&self, round: Round) -> impl Iterator<Item = SlotId> + '_ {
        (0..self.leaders_per_round).map(move |rank| SlotId::new(round, rank))
    }

    /// All slots strictly greater than `after` with round at most
    /// `up_to_round`, ascending.
    pub fn slots_between(&self, after: SlotId, up_to_round: Round) -> Vec<SlotId> {
        let mut out = Vec::new();
        let mut slot = self.next_slot(after);
        while slot.round <= up_to_round {
            out.push(slot);
            slot = self.next_slot(slot);
        }
        out
    }

    /// The slot immediately after `slot` in the total order.
    pub fn next_slot(&self, slot: SlotId) -> SlotId {
        if slot.rank + 1 < self.leaders_per_round {
            SlotId::new(slot.round, slot.rank + 1)
        } else {
            SlotId::new(slot.round + 1, 0)
        }
    }
}

/// Wave coordinates of a slot's round.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WaveCoords {
    pub wave_offset: u32,
    pub wave_number: u32,
    pub propose_round: Round,
    pub decision_round: Round,
}

/// Maps a slot to its wave: the propose round is the slot's own round, the
/// decision round the next one.
pub fn wave_coords(slot: SlotId) -> WaveCoords {
    debug_assert!(slot.round >= 1);
    let wave_offset = slot.round % WAVE_LENGTH;
    WaveCoords {
        wave_offset,
        wave_number: (slot.round - wave_offset) / WAVE_LENGTH,
        propose_round: slot.round,
        decision_round: slot.round + WAVE_LENGTH - 1,
    }
}
