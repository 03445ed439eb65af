//! Chain file format.
//!
//! ```text
//! file    = field(MAGIC) nested(genesis) list(block) list(seal)
//! genesis = nested(config) field(hash[32])
//! block   = u64(height) field(prev_hash[32]) list(vote) u32(proposer) field(hash[32])
//! vote    = field(vid[32]) nested(payload) u64(accepted_at)
//! seal    = field(vid[32]) u64(unsealed_at)
//! ```
//!
//! Seal records come after all blocks, so every byte inside a block record is
//! covered by that block's hash.

use super::{Block, Chain, ElectionConfig, GenesisBlock, LedgerError, SealState, VoteEntry};
use crate::ballot::{Vid, VotePayload};
use crate::encoding::{Canonical, DecodeError, Decoder, Encoder};

const MAGIC: &[u8] = b"BALLOTCHAIN-CHAIN/1";

impl Chain {
    fn encode_with(&self, enc: &mut Encoder, with_seals: bool) {
        enc.field(MAGIC)
            .nested(|e| {
                e.nested(|c| self.genesis.config.encode(c))
                    .field(&self.genesis.hash);
            })
            .list(&self.blocks, |e, b| {
                e.u64(b.height)
                    .field(&b.prev_hash)
                    .list(&b.votes, |ve, v| v.encode_hashed(ve))
                    .u32(b.proposer)
                    .field(&b.hash);
            });
        let seals: Vec<(Vid, u64)> = if with_seals {
            self.entries()
                .filter_map(|v| v.seal.unsealed_at().map(|t| (v.vid, t)))
                .collect()
        } else {
            Vec::new()
        };
        enc.list(&seals, |e, (vid, at)| {
            e.field(&vid.0).u64(*at);
        });
    }

    /// Full chain file, including seal state.
    pub fn encode_file(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        self.encode_with(&mut enc, true);
        enc.finish()
    }

    /// Consensus-relevant bytes only: genesis and blocks, no seal state.
    pub fn ledger_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        self.encode_with(&mut enc, false);
        enc.finish()
    }

    /// Parses a chain file. Structure only: contents are not validated, so a
    /// tampered file decodes and [`Chain::verify`] reports what is wrong.
    pub fn decode_file(bytes: &[u8]) -> Result<Chain, LedgerError> {
        let mut dec = Decoder::new(bytes);
        if dec.field()? != MAGIC {
            return Err(DecodeError::Invalid("not a chain file").into());
        }
        let genesis = dec.nested(|d| {
            Ok(GenesisBlock {
                config: d.nested(ElectionConfig::decode)?,
                hash: d.fixed()?,
            })
        })?;
        let blocks = dec.list(|d| {
            Ok(Block {
                height: d.u64()?,
                prev_hash: d.fixed()?,
                votes: d.list(|v| {
                    Ok(VoteEntry::new(
                        Vid(v.fixed()?),
                        v.nested(VotePayload::decode)?,
                        v.u64()?,
                    ))
                })?,
                proposer: d.u32()?,
                hash: d.fixed()?,
            })
        })?;
        let seals = dec.list(|d| Ok((Vid(d.fixed()?), d.u64()?)))?;
        dec.finish()?;

        let mut chain = Chain::from_parts(genesis, blocks);
        for (vid, at) in seals {
            let entry = chain
                .get_mut(&vid)
                .ok_or(DecodeError::Invalid("seal record for unknown vid"))?;
            if !entry.seal.is_sealed() {
                return Err(DecodeError::Invalid("duplicate seal record").into());
            }
            entry.seal = SealState::Unsealed { at };
        }
        Ok(chain)
    }
}
