//! Election phases, alteration-chain resolution, counting and challenges.

mod driver;
mod resolve;
pub mod scenario;
mod tally;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::ballot::Vid;
use crate::ledger::{ElectionConfig, LedgerError, Tick};

pub use driver::{run_election, ClientError, ElectionOutcome, VoterClient};
pub use resolve::{resolve_chains, AlterationChain, Resolution};
pub use scenario::{Action, Scenario, ScenarioError, ScenarioLine};
pub use tally::{apply_reveals, challenge, count, ChallengeReport, TallyParseError, TallyResult};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error("line {line}: action at tick {tick} is outside the election (counting at {count_end})")]
    PhaseViolation { line: usize, tick: Tick, count_end: Tick },
    #[error("clock cannot move back from {now} to {to}")]
    ClockRewind { now: Tick, to: Tick },
}

/// Voting and token acquisition overlap: both run until `election_end_time`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Phase {
    Voting,
    Counting,
    Closed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhaseClock {
    now: Tick,
    election_end_time: Tick,
    count_end_time: Tick,
}

impl PhaseClock {
    pub fn new(config: &ElectionConfig, now: Tick) -> Self {
        Self {
            now,
            election_end_time: config.election_end_time,
            count_end_time: config.count_end_time,
        }
    }

    pub fn now(&self) -> Tick {
        self.now
    }

    pub fn phase(&self) -> Phase {
        if self.now < self.election_end_time {
            Phase::Voting
        } else if self.now < self.count_end_time {
            Phase::Counting
        } else {
            Phase::Closed
        }
    }

    pub fn advance_to(&mut self, to: Tick) -> Result<Phase, EngineError> {
        if to < self.now {
            return Err(EngineError::ClockRewind { now: self.now, to });
        }
        self.now = to;
        Ok(self.phase())
    }
}

/// Why a vote on the chain did not contribute to the tally.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ExclusionReason {
    NeverOpened,
    OpenedEarly,
    BadOpening,
    OrphanAlteration,
    NotOwner,
    Superseded,
}

impl ExclusionReason {
    pub const ALL: [ExclusionReason; 6] = [
        ExclusionReason::NeverOpened,
        ExclusionReason::OpenedEarly,
        ExclusionReason::BadOpening,
        ExclusionReason::OrphanAlteration,
        ExclusionReason::NotOwner,
        ExclusionReason::Superseded,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ExclusionReason::NeverOpened => "NeverOpened",
            ExclusionReason::OpenedEarly => "OpenedEarly",
            ExclusionReason::BadOpening => "BadOpening",
            ExclusionReason::OrphanAlteration => "OrphanAlteration",
            ExclusionReason::NotOwner => "NotOwner",
            ExclusionReason::Superseded => "Superseded",
        }
    }
}

impl fmt::Display for ExclusionReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExclusionReason {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| format!("unknown exclusion reason {s:?}"))
    }
}

pub(crate) type Excluded = Vec<(Vid, ExclusionReason)>;
