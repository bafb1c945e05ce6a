use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Round number. Round 0 is reserved for the synthetic genesis blocks.
pub type Round = u32;

/// An instant or duration in integer microseconds. Exact arithmetic keeps
/// replays reproducible; replicas never read a clock themselves.
pub type Micros = u64;

/// Index of a replica, in `[0, n)`.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct ReplicaId(pub u16);

impl ReplicaId {
    pub fn as_usize(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ReplicaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "N{}", self.0)
    }
}

/// The replica set. `n = 2f + 1`, so any two quorums of `f + 1` intersect.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Committee {
    n: usize,
}

impl Committee {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1 && n % 2 == 1, "committee size must be 2f+1, got {n}");
        Self { n }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn max_faulty(&self) -> usize {
        (self.n - 1) / 2
    }

    pub fn quorum(&self) -> usize {
        self.max_faulty() + 1
    }

    pub fn ids(&self) -> impl Iterator<Item = ReplicaId> {
        (0..self.n as u16).map(ReplicaId)
    }

    pub fn contains(&self, id: ReplicaId) -> bool {
        id.as_usize() < self.n
    }
}

/// Unique identity of a block. In the crash-only model a replica proposes at
/// most one block per round, so `(author, round)` is a key; there is no
/// digest or signature.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BlockRef {
    pub author: ReplicaId,
    pub round: Round,
}

impl BlockRef {
    pub fn new(author: ReplicaId, round: Round) -> Self {
        Self { author, round }
    }
}

// Blocks are ordered by (round, author): the causal order of the DAG first,
// author index as the deterministic tie-break. Linearization relies on this.
impl Ord for BlockRef {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.round, self.author).cmp(&(other.round, other.author))
    }
}

impl PartialOrd for BlockRef {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for BlockRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "B({},{})", self.author, self.round)
    }
}

/// A client command. `(client, seq)` is unique per run.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Transaction {
    pub client: u16,
    pub seq: u32,
    pub body: Vec<u8>,
}

/// `(client, seq)` pair identifying a transaction.
pub type TxId = (u16, u32);

impl Transaction {
    pub fn new(client: u16, seq: u32, body: Vec<u8>) -> Self {
        assert!(body.len() <= u16::MAX as usize, "transaction body too large");
        Self { client, seq, body }
    }

    pub fn id(&self) -> TxId {
        (self.client, self.seq)
    }
}

/// A DAG vertex: author, round, parent references and payload.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    reference: BlockRef,
    parents: Vec<BlockRef>,
    payload: Vec<Transaction>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BlockError {
    #[error("genesis block {0} must have no parents and no payload")]
    MalformedGenesis(BlockRef),
    #[error("block {0}: parent {1} not from an earlier round")]
    ParentNotEarlier(BlockRef, BlockRef),
    #[error("block {0}: duplicate parent {1}")]
    DuplicateParent(BlockRef, BlockRef),
    #[error("block {0}: first parent must be the author's previous block")]
    OwnParentNotFirst(BlockRef),
    #[error("block {0}: {1} previous-round parents, need at least {2}")]
    InsufficientParents(BlockRef, usize, usize),
}

impl Block {
    pub fn new(
        author: ReplicaId,
        round: Round,
        parents: Vec<BlockRef>,
        payload: Vec<Transaction>,
    ) -> Self {
        Self {
            reference: BlockRef::new(author, round),
            parents,
            payload,
        }
    }

    /// The synthetic round-0 block of `author`, present in every view at
    /// startup and never transmitted.
    pub fn genesis(author: ReplicaId) -> Self {
        Self::new(author, 0, Vec::new(), Vec::new())
    }

    pub fn reference(&self) -> BlockRef {
        self.reference
    }

    pub fn author(&self) -> ReplicaId {
        self.reference.author
    }

    pub fn round(&self) -> Round {
        self.reference.round
    }

    pub fn parents(&self) -> &[BlockRef] {
        &self.parents
    }

    pub fn payload(&self) -> &[Transaction] {
        &self.payload
    }

    /// Structural validity. Blocks from round 1 onward carry at least `f+1`
    /// distinct previous-round references, starting with the author's own
    /// block; extra references from earlier rounds are allowed.
    pub fn validate(&self, committee: &Committee) -> Result<(), BlockError> {
        let r = self.reference;
        if r.round == 0 {
            if !self.parents.is_empty() || !self.payload.is_empty() {
                return Err(BlockError::MalformedGenesis(r));
            }
            return Ok(());
        }
        let mut seen = std::collections::BTreeSet::new();
        let mut prev_round = 0usize;
        for (i, p) in self.parents.iter().enumerate() {
            if p.round >= r.round {
                return Err(BlockError::ParentNotEarlier(r, *p));
            }
            if !seen.insert(*p) {
                return Err(BlockError::DuplicateParent(r, *p));
            }
            if p.round == r.round - 1 {
                prev_round += 1;
            }
            if i == 0 && (p.author != r.author || p.round != r.round - 1) {
                return Err(BlockError::OwnParentNotFirst(r));
            }
        }
        if prev_round < committee.quorum() {
            return Err(BlockError::InsufficientParents(r, prev_round, committee.quorum()));
        }
        Ok(())
    }

    /// Deterministic byte encoding, used verbatim by the WAL and the wire:
    /// `[author u16 BE][round u32 BE][parent_count u16 BE][parents (u16,u32) BE]
    ///  [tx_count u32 BE][per tx: client u16 BE, seq u32 BE, body_len u16 BE, body]`
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.parents.len() * 6);
        self.encode_into(&mut out);
        out
    }

    pub fn encode_into(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.reference.author.0.to_be_bytes());
        out.extend_from_slice(&self.reference.round.to_be_bytes());
        out.extend_from_slice(&(self.parents.len() as u16).to_be_bytes());
        for p in &self.parents {
            out.extend_from_slice(&p.author.0.to_be_bytes());
            out.extend_from_slice(&p.round.to_be_bytes());
        }
        out.extend_from_slice(&(self.payload.len() as u32).to_be_bytes());
        for tx in &self.payload {
            out.extend_from_slice(&tx.client.to_be_bytes());
            out.extend_from_slice(&tx.seq.to_be_bytes());
            out.extend_from_slice(&(tx.body.len() as u16).to_be_bytes());
            out.extend_from_slice(&tx.body);
        }
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut cursor = bytes;
        let block = Self::decode_from(&mut cursor)?;
        if !cursor.is_empty() {
            return Err(CodecError::TrailingBytes(cursor.len()));
        }
        Ok(block)
    }

    /// Decode one block from the front of `cursor`, advancing it. The
    /// encoding is self-delimiting, so blocks can be concatenated.
    pub fn decode_from(cursor: &mut &[u8]) -> Result<Self, CodecError> {
        let author = ReplicaId(read_u16(cursor)?);
        let round = read_u32(cursor)?;
        let parent_count = read_u16(cursor)? as usize;
        let mut parents = Vec::with_capacity(parent_count);
        for _ in 0..parent_count {
            let a = ReplicaId(read_u16(cursor)?);
            let r = read_u32(cursor)?;
            parents.push(BlockRef::new(a, r));
        }
        let tx_count = read_u32(cursor)? as usize;
        let mut payload = Vec::with_capacity(tx_count.min(1024));
        for _ in 0..tx_count {
            payload.push(Transaction {
                client: read_u16(cursor)?,
                seq: read_u32(cursor)?,
                body: {
                    let len = read_u16(cursor)? as usize;
                    read_bytes(cursor, len)?.to_vec()
                },
            });
        }
        Ok(Self::new(author, round, parents, payload))
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("truncated input: needed {0} more bytes")]
    Truncated(usize),
    #[error("{0} trailing bytes after value")]
    TrailingBytes(usize),
    #[error("unknown tag {0}")]
    UnknownTag(u8),
}

pub(crate) fn read_bytes<'a>(cursor: &mut &'a [u8], len: usize) -> Result<&'a [u8], CodecError> {
    if cursor.len() < len {
        return Err(CodecError::Truncated(len - cursor.len()));
    }
    let (head, tail) = cursor.split_at(len);
    *cursor = tail;
    Ok(head)
}

pub(crate) fn read_u8(cursor: &mut &[u8]) -> Result<u8, CodecError> {
    Ok(read_bytes(cursor, 1)?[0])
}

pub(crate) fn read_u16(cursor: &mut &[u8]) -> Result<u16, CodecError> {
    Ok(u16::from_be_bytes(read_bytes(cursor, 2)?.try_into().unwrap()))
}

pub(crate) fn read_u32(cursor: &mut &[u8]) -> Result<u32, CodecError> {
    Ok(u32::from_be_bytes(read_bytes(cursor, 4)?.try_into().unwrap()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_ref_order_is_round_then_author() {
        let a = BlockRef::new(ReplicaId(2), 1);
        let b = BlockRef::new(ReplicaId(0), 2);
        let c = BlockRef::new(ReplicaId(1), 2);
        assert!(a < b && b < c);
    }

    #[test]
    fn encoding_round_trips() {
        let block = Block::new(
            ReplicaId(3),
            17,
            vec![BlockRef::new(ReplicaId(3), 16), BlockRef::new(ReplicaId(0), 16)],
            vec![Transaction::new(9, 1234, vec![0xAB; 18])],
        );
        let bytes = block.encode();
        assert_eq!(Block::decode(&bytes).unwrap(), block);
    }

    #[test]
    fn decode_rejects_truncation_and_garbage() {
        let block = Block::new(
            ReplicaId(0),
            1,
            vec![BlockRef::new(ReplicaId(0), 0), BlockRef::new(ReplicaId(1), 0)],
            vec![],
        );
        let bytes = block.encode();
        assert!(matches!(
            Block::decode(&bytes[..bytes.len() - 1]),
            Err(CodecError::Truncated(_))
        ));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(Block::decode(&extra), Err(CodecError::TrailingBytes(1))));
    }

    #[test]
    fn validate_enforces_structure() {
        let committee = Committee::new(3);
        let own = BlockRef::new(ReplicaId(1), 1);
        let peer = BlockRef::new(ReplicaId(0), 1);

        let ok = Block::new(ReplicaId(1), 2, vec![own, peer], vec![]);
        assert!(ok.validate(&committee).is_ok());

        let wrong_first = Block::new(ReplicaId(1), 2, vec![peer, own], vec![]);
        assert!(matches!(
            wrong_first.validate(&committee),
            Err(BlockError::OwnParentNotFirst(_))
        ));

        let thin = Block::new(ReplicaId(1), 2, vec![own], vec![]);
        assert!(matches!(
            thin.validate(&committee),
            Err(BlockError::InsufficientParents(_, 1, 2))
        ));

        let dup = Block::new(ReplicaId(1), 2, vec![own, peer, peer], vec![]);
        assert!(matches!(dup.validate(&committee), Err(BlockError::DuplicateParent(_, _))));

        let future = Block::new(ReplicaId(1), 2, vec![own, BlockRef::new(ReplicaId(0), 2)], vec![]);
        assert!(matches!(
            future.validate(&committee),
            Err(BlockError::ParentNotEarlier(_, _))
        ));

        let genesis = Block::genesis(ReplicaId(0));
        assert!(genesis.validate(&committee).is_ok());
        let bad_genesis = Block::new(ReplicaId(0), 0, vec![], vec![Transaction::new(0, 0, vec![])]);
        assert!(matches!(
            bad_genesis.validate(&committee),
            Err(BlockError::MalformedGenesis(_))
        ));
    }
}
