//! Write-ahead log: an append-only record stream whose replay reconstructs
//! an equivalent DAG view and commit state.
//!
//! Framing per record: `[len u32 BE][type u8][payload][crc32 u32 BE]` where
//! `len` counts the type byte plus payload and the checksum covers the same
//! bytes. An incomplete or checksum-broken final record is a torn tail and
//! is dropped silently; corruption with valid data after it is fatal.

use thiserror::Error;

use crate::types::{read_u16, read_u32, read_u8, Block, BlockRef, CodecError, ReplicaId};
use crate::schedule::SlotId;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum WalRecord {
    /// A block this replica authored, durable before it is broadcast.
    OwnBlock(Block),
    /// A block received from a peer, durable before insertion.
    ReceivedBlock(Block),
    /// Advisory mark of a committed slot; recovery recomputes commits and
    /// uses marks only as a cross-check.
    CommitMark { slot: SlotId, block: BlockRef },
}

const TAG_OWN_BLOCK: u8 = 1;
const TAG_RECEIVED_BLOCK: u8 = 2;
const TAG_COMMIT_MARK: u8 = 3;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WalError {
    #[error("corrupt record at offset {offset}: {reason}")]
    CorruptRecord { offset: usize, reason: String },
}

pub fn append_record(buf: &mut Vec<u8>, record: &WalRecord) {
    let mut body = Vec::new();
    match record {
        WalRecord::OwnBlock(b) => {
            body.push(TAG_OWN_BLOCK);
            b.encode_into(&mut body);
        }
        WalRecord::ReceivedBlock(b) => {
            body.push(TAG_RECEIVED_BLOCK);
            b.encode_into(&mut body);
        }
        WalRecord::CommitMark { slot, block } => {
            body.push(TAG_COMMIT_MARK);
            body.extend_from_slice(&slot.round.to_be_bytes());
            body.extend_from_slice(&slot.rank.to_be_bytes());
            body.extend_from_slice(&block.author.0.to_be_bytes());
            body.extend_from_slice(&block.round.to_be_bytes());
        }
    }
    buf.extend_from_slice(&(body.len() as u32).to_be_bytes());
    buf.extend_from_slice(&body);
    buf.extend_from_slice(&crc32fast::hash(&body).to_be_bytes());
}

/// Parse a record stream. A torn tail (truncated final record, or a final
/// record whose checksum fails) is tolerated; anything else mid-stream is a
/// `CorruptRecord`.
pub fn read_records(bytes: &[u8]) -> Result<Vec<WalRecord>, WalError> {
    let mut records = Vec::new();
    let mut offset = 0usize;
    while offset < bytes.len() {
        let remaining = &bytes[offset..];
        if remaining.len() < 4 {
            break; // torn length header
        }
        let len = u32::from_be_bytes(remaining[..4].try_into().unwrap()) as usize;
        let record_end = 4 + len + 4;
        if remaining.len() < record_end {
            break; // torn body or checksum
        }
        let body = &remaining[4..4 + len];
        let stored_crc = u32::from_be_bytes(remaining[4 + len..record_end].try_into().unwrap());
        if crc32fast::hash(body) != stored_crc {
            if offset + record_end == bytes.len() {
                break; // checksum-broken final record: torn tail
            }
            return Err(WalError::CorruptRecord {
                offset,
                reason: "checksum mismatch".to_string(),
            });
        }
        let record = decode_body(body).map_err(|e| WalError::CorruptRecord {
            offset,
            reason: e.to_string(),
        })?;
        records.push(record);
        offset += record_end;
    }
    Ok(records)
}

fn decode_body(body: &[u8]) -> Result<WalRecord, CodecError> {
    let mut cursor = body;
    let tag = read_u8(&mut cursor)?;
    let record = match tag {
        TAG_OWN_BLOCK => WalRecord::OwnBlock(Block::decode_from(&mut cursor)?),
        TAG_RECEIVED_BLOCK => WalRecord::ReceivedBlock(Block::decode_from(&mut cursor)?),
        TAG_COMMIT_MARK => {
            let round = read_u32(&mut cursor)?;
            let rank = read_u16(&mut cursor)?;
            let author = ReplicaId(read_u16(&mut cursor)?);
            let block_round = read_u32(&mut cursor)?;
            WalRecord::CommitMark {
                slot: SlotId::new(round, rank),
                block: BlockRef::new(author, block_round),
            }
        }
        other => return Err(CodecError::UnknownTag(other)),
    };
    if !cursor.is_empty() {
        return Err(CodecError::TrailingBytes(cursor.len()));
    }
    Ok(record)
}

/// Write a log to disk. One file per replica; the path comes from config.
pub fn write_to(path: &std::path::Path, bytes: &[u8]) -> std::io::Result<()> {
    std::fs::write(path, bytes)
}

pub fn read_from(path: &std::path::Path) -> std::io::Result<Vec<u8>> {
    std::fs::read(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::blk_with_txs;
    use crate::types::Transaction;

    fn sample_records() -> Vec<WalRecord> {
        let b1 = blk_with_txs(0, 1, &[(0, 0), (1, 0)], vec![Transaction::new(4, 2, vec![9; 18])]);
        let b2 = blk_with_txs(1, 1, &[(1, 0), (0, 0)], vec![]);
        vec![
            WalRecord::OwnBlock(b1),
            WalRecord::ReceivedBlock(b2),
            WalRecord::CommitMark {
                slot: SlotId::new(1, 0),
                block: BlockRef::new(ReplicaId(1), 1),
            },
        ]
    }

    fn encode_all(records: &[WalRecord]) -> Vec<u8> {
        let mut buf = Vec::new();
        for r in records {
            append_record(&mut buf, r);
        }
        buf
    }

    #[test]
    fn round_trip() {
        let records = sample_records();
        assert_eq!(read_records(&encode_all(&records)).unwrap(), records);
        assert_eq!(read_records(&[]).unwrap(), vec![]);
    }

    #[test]
    fn torn_tail_is_truncated() {
        let records = sample_records();
        let full = encode_all(&records);
        // Chop bytes off the end: every prefix must recover a prefix of the
        // record stream without erroring.
        for cut in 0..full.len() {
            let got = read_records(&full[..cut]).unwrap();
            assert!(got.len() <= records.len());
            assert_eq!(got[..], records[..got.len()]);
        }
    }

    #[test]
    fn tail_checksum_break_is_torn() {
        let records = sample_records();
        let mut bytes = encode_all(&records);
        let last = bytes.len() - 1;
        bytes[last] ^= 0xFF;
        let got = read_records(&bytes).unwrap();
        assert_eq!(got[..], records[..records.len() - 1]);
    }

    #[test]
    fn mid_stream_corruption_is_fatal() {
        let records = sample_records();
        let mut bytes = encode_all(&records);
        // Flip a byte inside the first record's payload.
        bytes[6] ^= 0xFF;
        assert!(matches!(read_records(&bytes), Err(WalError::CorruptRecord { offset: 0, .. })));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("replica-0.wal");
        let bytes = encode_all(&sample_records());
        write_to(&path, &bytes).unwrap();
        assert_eq!(read_from(&path).unwrap(), bytes);
    }
}
