//! Blind-token electronic voting over a permissioned, hash-linked ledger.
//!
//! Voters obtain a blind-signed eligibility token from a central authority,
//! cast commitment-sealed ballots onto the ledger, may replace them with
//! signed alteration ballots until voting closes, and reveal their final
//! choice during counting. Every node (and any external auditor) can recount
//! the public ledger independently.

pub mod audit;
pub mod authority;
pub mod ballot;
pub mod crypto;
pub mod encoding;
pub mod engine;
pub mod ledger;
pub mod netsim;
pub mod par;
pub mod transcript;

#[cfg(test)]
pub(crate) mod testutil;

pub use ballot::{Choice, OpeningMessage, Vid, VotePayload};
pub use engine::{ExclusionReason, TallyResult};
pub use ledger::{Chain, ElectionConfig, RejectReason, Tick};
pub use par::ExecMode;
