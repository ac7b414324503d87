use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tx::Transaction;
use super::LedgerError;
use crate::digest::Digest;

/// Field order here is the on-disk order of the block file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub height: u64,
    pub prev_hash: Digest,
    pub block_hash: Digest,
    #[serde(rename = "txs")]
    pub tx_list: Vec<Transaction>,
}

impl Block {
    pub fn new(height: u64, prev_hash: Digest, tx_list: Vec<Transaction>) -> Self {
        let block_hash = Self::compute_hash(height, &prev_hash, &tx_list);
        Block {
            height,
            prev_hash,
            block_hash,
            tx_list,
        }
    }

    /// `H(height ‖ prev_hash ‖ tx ids)`.
    pub fn compute_hash(height: u64, prev_hash: &Digest, txs: &[Transaction]) -> Digest {
        let height_bytes = height.to_be_bytes();
        let mut parts: Vec<&[u8]> = vec![&height_bytes, &prev_hash.0];
        parts.extend(txs.iter().map(|tx| tx.tx_id.0.as_slice()));
        Digest::of_parts(&parts)
    }

    pub fn hash_is_consistent(&self) -> bool {
        self.block_hash == Self::compute_hash(self.height, &self.prev_hash, &self.tx_list)
    }
}

/// Writes one JSON object per line.
pub fn write_block_file(path: &Path, blocks: &[Block]) -> Result<(), LedgerError> {
    let mut out = BufWriter::new(File::create(path)?);
    for block in blocks {
        serde_json::to_writer(&mut out, block)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_block_file(path: &Path) -> Result<Vec<Block>, LedgerError> {
    let reader = BufReader::new(File::open(path)?);
    let mut blocks = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let block: Block = serde_json::from_str(&line).map_err(|e| LedgerError::Integrity {
            height: lineno as u64,
            detail: format!("line {}: {e}", lineno + 1),
        })?;
        blocks.push(block);
    }
    Ok(blocks)
}
