//! Full structural audit of a chain.

use std::collections::HashSet;
use std::fmt;

use super::{Chain, GenesisBlock, MAX_VOTES_PER_BLOCK};
use crate::ballot::{Vid, VotePayload};
use crate::par::{self, ExecMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ViolationKind {
    InvalidConfig,
    BadGenesisHash,
    /// Stored block hash does not match its contents, or `prev_hash` does not
    /// match the parent.
    BrokenLink,
    BadHeight,
    BlockTooLarge,
    DuplicateVid,
    BadToken,
    DuplicateVoter,
    AlterationForbidden,
    BadSignature,
    AfterDeadline,
}

impl ViolationKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ViolationKind::InvalidConfig => "InvalidConfig",
            ViolationKind::BadGenesisHash => "BadGenesisHash",
            ViolationKind::BrokenLink => "BrokenLink",
            ViolationKind::BadHeight => "BadHeight",
            ViolationKind::BlockTooLarge => "BlockTooLarge",
            ViolationKind::DuplicateVid => "DuplicateVID",
            ViolationKind::BadToken => "BadToken",
            ViolationKind::DuplicateVoter => "DuplicateVoter",
            ViolationKind::AlterationForbidden => "AlterationForbidden",
            ViolationKind::BadSignature => "BadSignature",
            ViolationKind::AfterDeadline => "AfterDeadline",
        }
    }
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Block height; 0 is the genesis block.
    pub height: u64,
    pub vid: Option<Vid>,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at height {}", self.kind, self.height)?;
        if let Some(vid) = &self.vid {
            write!(f, " vid {vid}")?;
        }
        Ok(())
    }
}

/// Every violation found, in chain order. Within a block, vote-level findings
/// precede the block's own link check.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ChainReport {
    pub violations: Vec<Violation>,
}

impl ChainReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn first(&self) -> Option<&Violation> {
        self.violations.first()
    }

    pub fn contains(&self, kind: ViolationKind) -> bool {
        self.violations.iter().any(|v| v.kind == kind)
    }
}

impl Chain {
    pub fn verify(&self) -> ChainReport {
        self.verify_with(ExecMode::default())
    }

    pub fn verify_with(&self, mode: ExecMode) -> ChainReport {
        let config = self.config();
        let mut out = Vec::new();
        let mut flag = |kind, height, vid| out.push(Violation { kind, height, vid });

        if config.validate().is_err() {
            flag(ViolationKind::InvalidConfig, 0, None);
        }
        if GenesisBlock::compute_hash(config) != self.genesis.hash {
            flag(ViolationKind::BadGenesisHash, 0, None);
        }

        // Signature checks dominate the cost and are independent per entry.
        let entries: Vec<&super::VoteEntry> = self.entries().collect();
        let sig_ok = par::map(mode, &entries, |e| match &e.payload {
            VotePayload::Ballot(b) => b.verify_token(&config.ca_public),
            VotePayload::Alteration(a) => a.verify_signature(),
        });

        let mut seen_vids = HashSet::new();
        let mut seen_voters = HashSet::new();
        let mut prev_hash = self.genesis.hash;
        let mut k = 0;
        for (i, block) in self.blocks.iter().enumerate() {
            let height = i as u64 + 1;
            if block.votes.len() > MAX_VOTES_PER_BLOCK {
                flag(ViolationKind::BlockTooLarge, height, None);
            }
            for entry in &block.votes {
                let vid = Some(entry.vid);
                if !seen_vids.insert(entry.vid) {
                    flag(ViolationKind::DuplicateVid, height, vid);
                }
                if entry.accepted_at >= config.election_end_time {
                    flag(ViolationKind::AfterDeadline, height, vid);
                }
                match &entry.payload {
                    VotePayload::Ballot(b) => {
                        if !sig_ok[k] {
                            flag(ViolationKind::BadToken, height, vid);
                        }
                        if !seen_voters.insert(b.voter_pub) {
                            flag(ViolationKind::DuplicateVoter, height, vid);
                        }
                    }
                    VotePayload::Alteration(_) => {
                        if !config.cancel_ballots {
                            flag(ViolationKind::AlterationForbidden, height, vid);
                        }
                        if !sig_ok[k] {
                            flag(ViolationKind::BadSignature, height, vid);
                        }
                    }
                }
                k += 1;
            }
            if block.height != height {
                flag(ViolationKind::BadHeight, height, None);
            }
            if block.prev_hash != prev_hash || !block.hash_is_consistent() {
                flag(ViolationKind::BrokenLink, height, None);
            }
            prev_hash = block.hash;
        }
        ChainReport { violations: out }
    }
}
