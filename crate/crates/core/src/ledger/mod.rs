//! The permissioned ledger: a genesis block holding the election rules,
//! followed by hash-linked blocks of VID-tagged votes.
//!
//! Seal state (whether a vote's choice has been revealed, and when) is
//! node-local observable state. It is stored alongside each entry but never
//! enters a block hash, so unsealing after blocks are final cannot fork the
//! chain.

mod codec;
mod verify;

use std::collections::{HashMap, HashSet};

use thiserror::Error;

use crate::ballot::{Vid, VotePayload};
use crate::crypto::{sha256, CaPublicKey, Digest32, VoterPublicKey};
use crate::encoding::{Canonical, DecodeError, Decoder, Encoder};

pub use verify::{ChainReport, Violation, ViolationKind};

/// Logical time in harness ticks.
pub type Tick = u64;
pub type NodeId = u32;

pub const MAX_VOTES_PER_BLOCK: usize = 100;

const GENESIS_DOMAIN: &[u8] = b"ballotchain/genesis/v1";
const BLOCK_DOMAIN: &[u8] = b"ballotchain/block/v1";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("invalid election config: {0}")]
    InvalidConfig(String),
    #[error("unknown vid {0}")]
    UnknownVid(Vid),
    #[error("election still open at tick {now} (voting ends at {end})")]
    ElectionStillOpen { now: Tick, end: Tick },
    #[error("malformed chain file: {0}")]
    Decode(#[from] DecodeError),
}

/// Why a vote was refused admission.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RejectReason {
    AfterDeadline,
    DuplicateVid,
    BadToken,
    DuplicateVoter,
    AlterationForbidden,
    BadSignature,
}

impl RejectReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            RejectReason::AfterDeadline => "AfterDeadline",
            RejectReason::DuplicateVid => "DuplicateVID",
            RejectReason::BadToken => "BadToken",
            RejectReason::DuplicateVoter => "DuplicateVoter",
            RejectReason::AlterationForbidden => "AlterationForbidden",
            RejectReason::BadSignature => "BadSignature",
        }
    }
}

impl std::fmt::Display for RejectReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AppendError {
    #[error("block does not extend the tip: expected height {expected_height} on parent {}", hex::encode(&expected_parent[..8]))]
    BadParent {
        expected_height: u64,
        expected_parent: Digest32,
    },
    #[error("block hash does not match its contents")]
    BadHash,
    #[error("block carries {0} votes, limit is {MAX_VOTES_PER_BLOCK}")]
    BlockTooLarge(usize),
    #[error("vote {vid} no longer valid: {reason}")]
    StaleValidation { vid: Vid, reason: RejectReason },
}

/// Election rules fixed at genesis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ElectionConfig {
    pub candidates: Vec<String>,
    pub ca_public: CaPublicKey,
    /// Votes are accepted while `now < election_end_time`.
    pub election_end_time: Tick,
    pub count_end_time: Tick,
    pub cancel_ballots: bool,
}

impl ElectionConfig {
    pub fn validate(&self) -> Result<(), LedgerError> {
        if self.candidates.is_empty() {
            return Err(LedgerError::InvalidConfig("candidate list is empty".into()));
        }
        if let Some(i) = self.candidates.iter().position(|c| c.trim().is_empty()) {
            return Err(LedgerError::InvalidConfig(format!("candidate {i} has an empty name")));
        }
        if self.election_end_time == 0 {
            return Err(LedgerError::InvalidConfig("voting phase has zero length".into()));
        }
        if self.election_end_time >= self.count_end_time {
            return Err(LedgerError::InvalidConfig(format!(
                "election end {} must precede count end {}",
                self.election_end_time, self.count_end_time
            )));
        }
        Ok(())
    }

    pub fn num_candidates(&self) -> usize {
        self.candidates.len()
    }
}

impl Canonical for ElectionConfig {
    fn encode(&self, enc: &mut Encoder) {
        enc.list(&self.candidates, |e, c| {
            e.field(c.as_bytes());
        })
        .nested(|e| self.ca_public.encode(e))
        .u64(self.election_end_time)
        .u64(self.count_end_time)
        .bool(self.cancel_ballots);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(Self {
            candidates: dec.list(|d| d.string())?,
            ca_public: dec.nested(CaPublicKey::decode)?,
            election_end_time: dec.u64()?,
            count_end_time: dec.u64()?,
            cancel_ballots: dec.bool()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenesisBlock {
    pub config: ElectionConfig,
    pub hash: Digest32,
}

impl GenesisBlock {
    pub fn compute_hash(config: &ElectionConfig) -> Digest32 {
        sha256(&[GENESIS_DOMAIN, &config.to_canonical_bytes()])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SealState {
    Sealed,
    Unsealed { at: Tick },
}

impl SealState {
    pub fn is_sealed(&self) -> bool {
        matches!(self, SealState::Sealed)
    }

    pub fn unsealed_at(&self) -> Option<Tick> {
        match self {
            SealState::Sealed => None,
            SealState::Unsealed { at } => Some(*at),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoteEntry {
    pub vid: Vid,
    pub payload: VotePayload,
    pub accepted_at: Tick,
    pub seal: SealState,
}

impl VoteEntry {
    pub fn new(vid: Vid, payload: VotePayload, accepted_at: Tick) -> Self {
        Self {
            vid,
            payload,
            accepted_at,
            seal: SealState::Sealed,
        }
    }

    /// The hashed part of the entry; seal state is excluded.
    fn encode_hashed(&self, enc: &mut Encoder) {
        enc.field(&self.vid.0)
            .nested(|e| self.payload.encode(e))
            .u64(self.accepted_at);
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub height: u64,
    pub prev_hash: Digest32,
    pub votes: Vec<VoteEntry>,
    pub proposer: NodeId,
    pub hash: Digest32,
}

impl Block {
    pub fn compute_hash(height: u64, prev_hash: &Digest32, votes: &[VoteEntry], proposer: NodeId) -> Digest32 {
        let mut enc = Encoder::new();
        enc.field(BLOCK_DOMAIN)
            .u64(height)
            .field(prev_hash)
            .list(votes, |e, v| v.encode_hashed(e))
            .u32(proposer);
        sha256(&[enc.as_bytes()])
    }

    pub fn seal(height: u64, prev_hash: Digest32, votes: Vec<VoteEntry>, proposer: NodeId) -> Self {
        let hash = Self::compute_hash(height, &prev_hash, &votes, proposer);
        Self {
            height,
            prev_hash,
            votes,
            proposer,
            hash,
        }
    }

    pub fn hash_is_consistent(&self) -> bool {
        Self::compute_hash(self.height, &self.prev_hash, &self.votes, self.proposer) == self.hash
    }
}

/// Position of a vote: (block index, entry index).
type Slot = (usize, usize);

#[derive(Debug, Clone)]
pub struct Chain {
    genesis: GenesisBlock,
    blocks: Vec<Block>,
    index: HashMap<Vid, Slot>,
    ballot_voters: HashSet<VoterPublicKey>,
}

impl PartialEq for Chain {
    fn eq(&self, other: &Self) -> bool {
        self.genesis == other.genesis && self.blocks == other.blocks
    }
}

impl Eq for Chain {}

impl Chain {
    /// Creates a chain holding only the genesis block.
    pub fn new(config: ElectionConfig) -> Result<Self, LedgerError> {
        config.validate()?;
        let hash = GenesisBlock::compute_hash(&config);
        Ok(Self {
            genesis: GenesisBlock { config, hash },
            blocks: Vec::new(),
            index: HashMap::new(),
            ballot_voters: HashSet::new(),
        })
    }

    /// Assembles a chain from parts without validating them; see [`Chain::verify`].
    pub(crate) fn from_parts(genesis: GenesisBlock, blocks: Vec<Block>) -> Self {
        let mut chain = Self {
            genesis,
            blocks: Vec::new(),
            index: HashMap::new(),
            ballot_voters: HashSet::new(),
        };
        for block in blocks {
            chain.push_unchecked(block);
        }
        chain
    }

    fn push_unchecked(&mut self, block: Block) {
        let bi = self.blocks.len();
        for (ei, entry) in block.votes.iter().enumerate() {
            self.index.entry(entry.vid).or_insert((bi, ei));
            if let VotePayload::Ballot(b) = &entry.payload {
                self.ballot_voters.insert(b.voter_pub);
            }
        }
        self.blocks.push(block);
    }

    pub fn config(&self) -> &ElectionConfig {
        &self.genesis.config
    }

    pub fn genesis(&self) -> &GenesisBlock {
        &self.genesis
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn height(&self) -> u64 {
        self.blocks.len() as u64
    }

    pub fn tip_hash(&self) -> Digest32 {
        self.blocks.last().map_or(self.genesis.hash, |b| b.hash)
    }

    pub fn get(&self, vid: &Vid) -> Option<&VoteEntry> {
        self.index.get(vid).map(|&(b, e)| &self.blocks[b].votes[e])
    }

    fn get_mut(&mut self, vid: &Vid) -> Option<&mut VoteEntry> {
        let (b, e) = *self.index.get(vid)?;
        Some(&mut self.blocks[b].votes[e])
    }

    pub fn contains(&self, vid: &Vid) -> bool {
        self.index.contains_key(vid)
    }

    /// All vote entries in chain order.
    pub fn entries(&self) -> impl Iterator<Item = &VoteEntry> {
        self.blocks.iter().flat_map(|b| b.votes.iter())
    }

    pub fn vote_count(&self) -> usize {
        self.blocks.iter().map(|b| b.votes.len()).sum()
    }

    pub fn has_ballot_from(&self, voter: &VoterPublicKey) -> bool {
        self.ballot_voters.contains(voter)
    }

    /// A validation view that also tracks votes admitted but not yet on chain.
    pub fn admission(&self) -> Admission<'_> {
        Admission {
            chain: self,
            vids: HashSet::new(),
            voters: HashSet::new(),
        }
    }

    pub fn validate_vote(&self, payload: &VotePayload, vid: &Vid, now: Tick) -> Result<(), RejectReason> {
        self.admission().check(payload, vid, now)
    }

    /// Validates `entries` in order at time `now` and seals them into a block
    /// on top of the current tip, without appending it.
    pub fn build_block(
        &self,
        entries: Vec<(Vid, VotePayload)>,
        proposer: NodeId,
        now: Tick,
    ) -> Result<Block, AppendError> {
        if entries.len() > MAX_VOTES_PER_BLOCK {
            return Err(AppendError::BlockTooLarge(entries.len()));
        }
        let mut adm = self.admission();
        let mut votes = Vec::with_capacity(entries.len());
        for (vid, payload) in entries {
            adm.admit(&payload, &vid, now)
                .map_err(|reason| AppendError::StaleValidation { vid, reason })?;
            votes.push(VoteEntry::new(vid, payload, now));
        }
        Ok(Block::seal(self.height() + 1, self.tip_hash(), votes, proposer))
    }

    /// Appends a block whose votes the caller has already admitted against
    /// this chain.
    pub(crate) fn push_validated(&mut self, block: Block) {
        debug_assert_eq!(block.prev_hash, self.tip_hash());
        self.push_unchecked(block);
    }

    pub fn append_block(
        &mut self,
        entries: Vec<(Vid, VotePayload)>,
        proposer: NodeId,
        now: Tick,
    ) -> Result<&Block, AppendError> {
        let block = self.build_block(entries, proposer, now)?;
        self.push_unchecked(block);
        Ok(self.blocks.last().unwrap())
    }

    /// Appends a block produced elsewhere after checking linkage, hash and every vote.
    pub fn import_block(&mut self, mut block: Block) -> Result<(), AppendError> {
        if block.height != self.height() + 1 || block.prev_hash != self.tip_hash() {
            return Err(AppendError::BadParent {
                expected_height: self.height() + 1,
                expected_parent: self.tip_hash(),
            });
        }
        if !block.hash_is_consistent() {
            return Err(AppendError::BadHash);
        }
        if block.votes.len() > MAX_VOTES_PER_BLOCK {
            return Err(AppendError::BlockTooLarge(block.votes.len()));
        }
        let mut adm = self.admission();
        for entry in &mut block.votes {
            adm.admit(&entry.payload, &entry.vid, entry.accepted_at)
                .map_err(|reason| AppendError::StaleValidation { vid: entry.vid, reason })?;
            entry.seal = SealState::Sealed;
        }
        self.push_unchecked(block);
        Ok(())
    }

    /// Counting-phase read of a vote. The first read unseals the vote at `now`;
    /// later reads leave the timestamp alone. Returns the payload and whether
    /// this call did the unsealing.
    pub fn retrieve_vote(&mut self, vid: &Vid, now: Tick) -> Result<(&VotePayload, bool), LedgerError> {
        let end = self.config().election_end_time;
        if now <= end {
            return Err(LedgerError::ElectionStillOpen { now, end });
        }
        let entry = self.get_mut(vid).ok_or(LedgerError::UnknownVid(*vid))?;
        let first = entry.seal.is_sealed();
        if first {
            entry.seal = SealState::Unsealed { at: now };
        }
        Ok((&entry.payload, first))
    }

    /// Records that the vote's opening became public at `at`, in any phase.
    /// Keeps the earliest time reported, so the order in which a node hears
    /// about reveals does not matter. Returns whether the state changed.
    pub fn mark_revealed(&mut self, vid: &Vid, at: Tick) -> Result<bool, LedgerError> {
        let entry = self.get_mut(vid).ok_or(LedgerError::UnknownVid(*vid))?;
        match entry.seal {
            SealState::Unsealed { at: prev } if prev <= at => Ok(false),
            _ => {
                entry.seal = SealState::Unsealed { at };
                Ok(true)
            }
        }
    }

    pub fn return_sealed(&self, vid: &Vid) -> Result<bool, LedgerError> {
        self.get(vid)
            .map(|e| e.seal.is_sealed())
            .ok_or(LedgerError::UnknownVid(*vid))
    }

    pub fn return_time_unsealed(&self, vid: &Vid) -> Result<Option<Tick>, LedgerError> {
        self.get(vid)
            .map(|e| e.seal.unsealed_at())
            .ok_or(LedgerError::UnknownVid(*vid))
    }

    /// Replaces the blocks of this chain with `other`'s, keeping this chain's
    /// seal state for votes present in both.
    pub fn adopt_blocks(&mut self, other: &Chain) {
        let seals: HashMap<Vid, SealState> = self.entries().map(|e| (e.vid, e.seal)).collect();
        let mut blocks = other.blocks.clone();
        for entry in blocks.iter_mut().flat_map(|b| b.votes.iter_mut()) {
            entry.seal = seals.get(&entry.vid).copied().unwrap_or(SealState::Sealed);
        }
        *self = Chain::from_parts(self.genesis.clone(), blocks);
    }
}

/// Incremental validator over a chain plus votes admitted in the same batch.
#[derive(Debug)]
pub struct Admission<'a> {
    chain: &'a Chain,
    vids: HashSet<Vid>,
    voters: HashSet<VoterPublicKey>,
}

impl Admission<'_> {
    /// Checks admission rules without recording the vote.
    pub fn check(&self, payload: &VotePayload, vid: &Vid, now: Tick) -> Result<(), RejectReason> {
        let config = self.chain.config();
        if now >= config.election_end_time {
            return Err(RejectReason::AfterDeadline);
        }
        if self.chain.contains(vid) || self.vids.contains(vid) {
            return Err(RejectReason::DuplicateVid);
        }
        match payload {
            VotePayload::Ballot(b) => {
                if self.chain.has_ballot_from(&b.voter_pub) || self.voters.contains(&b.voter_pub) {
                    return Err(RejectReason::DuplicateVoter);
                }
                if !b.verify_token(&config.ca_public) {
                    return Err(RejectReason::BadToken);
                }
            }
            VotePayload::Alteration(a) => {
                if !config.cancel_ballots {
                    return Err(RejectReason::AlterationForbidden);
                }
                // Ownership of the cancelled vote is settled at counting time.
                if !a.verify_signature() {
                    return Err(RejectReason::BadSignature);
                }
            }
        }
        Ok(())
    }

    /// Checks and, on success, records the vote so later checks see it.
    pub fn admit(&mut self, payload: &VotePayload, vid: &Vid, now: Tick) -> Result<(), RejectReason> {
        self.check(payload, vid, now)?;
        self.record(payload, vid);
        Ok(())
    }

    /// Like [`admit`](Self::admit) for a vote that already passed a full
    /// check: repeats the deadline, duplicate and permission rules but not
    /// the token and signature verification, which cannot change.
    pub fn readmit(&mut self, payload: &VotePayload, vid: &Vid, now: Tick) -> Result<(), RejectReason> {
        let config = self.chain.config();
        if now >= config.election_end_time {
            return Err(RejectReason::AfterDeadline);
        }
        if self.chain.contains(vid) || self.vids.contains(vid) {
            return Err(RejectReason::DuplicateVid);
        }
        match payload {
            VotePayload::Ballot(b) if self.chain.has_ballot_from(&b.voter_pub) || self.voters.contains(&b.voter_pub) => {
                return Err(RejectReason::DuplicateVoter)
            }
            VotePayload::Alteration(_) if !config.cancel_ballots => return Err(RejectReason::AlterationForbidden),
            _ => {}
        }
        self.record(payload, vid);
        Ok(())
    }

    fn record(&mut self, payload: &VotePayload, vid: &Vid) {
        self.vids.insert(*vid);
        if let VotePayload::Ballot(b) = payload {
            self.voters.insert(b.voter_pub);
        }
    }
}

#[cfg(test)]
mod tests;
