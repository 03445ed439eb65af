use std::collections::HashMap;

use super::{Excluded, ExclusionReason};
use crate::ballot::{Vid, VotePayload};
use crate::crypto::VoterPublicKey;
use crate::ledger::Chain;

/// One voter's votes, from the original ballot to the current terminal vote.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlterationChain {
    pub voter: VoterPublicKey,
    pub links: Vec<Vid>,
}

impl AlterationChain {
    pub fn terminal(&self) -> &Vid {
        self.links.last().expect("chains are never empty")
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Resolution {
    /// Alteration chains in the chain order of their root ballots.
    pub chains: Vec<AlterationChain>,
    /// Votes that can never count, in chain order.
    pub excluded: Excluded,
}

impl Resolution {
    pub fn standing(&self) -> impl Iterator<Item = &Vid> {
        self.chains.iter().map(|c| c.terminal())
    }

    pub fn reason(&self, vid: &Vid) -> Option<ExclusionReason> {
        self.excluded.iter().find(|(v, _)| v == vid).map(|(_, r)| *r)
    }
}

/// Partitions every vote into standing votes and structural exclusions.
///
/// Votes are processed in chain order. An alteration is accepted only if it
/// cancels the current terminal vote of its own chain; otherwise it is a
/// `NotOwner` (someone else's vote) or `OrphanAlteration` (unknown, later, or
/// already superseded target).
pub fn resolve_chains(chain: &Chain) -> Resolution {
    let mut out = Resolution::default();
    // vid -> index of the alteration chain it belongs to, while on a chain
    let mut member: HashMap<Vid, usize> = HashMap::new();
    let mut excluded_at: HashMap<Vid, usize> = HashMap::new();

    for entry in chain.entries() {
        match &entry.payload {
            VotePayload::Ballot(b) => {
                member.insert(entry.vid, out.chains.len());
                out.chains.push(AlterationChain {
                    voter: b.voter_pub,
                    links: vec![entry.vid],
                });
            }
            VotePayload::Alteration(a) => {
                let reason = match member.get(&a.cancelled_vid) {
                    None => Some(ExclusionReason::OrphanAlteration),
                    Some(&ci) if out.chains[ci].voter != a.voter_pub => Some(ExclusionReason::NotOwner),
                    Some(&ci) if *out.chains[ci].terminal() != a.cancelled_vid => {
                        Some(ExclusionReason::OrphanAlteration)
                    }
                    Some(&ci) => {
                        out.chains[ci].links.push(entry.vid);
                        member.insert(entry.vid, ci);
                        None
                    }
                };
                if let Some(r) = reason {
                    excluded_at.insert(entry.vid, out.excluded.len());
                    out.excluded.push((entry.vid, r));
                }
            }
        }
    }

    for c in &out.chains {
        for vid in &c.links[..c.links.len() - 1] {
            out.excluded.push((*vid, ExclusionReason::Superseded));
        }
    }
    let order: HashMap<Vid, usize> = chain.entries().enumerate().map(|(i, e)| (e.vid, i)).collect();
    out.excluded.sort_by_key(|(v, _)| order[v]);
    out
}
