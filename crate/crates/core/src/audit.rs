//! Independent recount of a published ledger.
//!
//! The recount shares nothing with the counting engine beyond the data types:
//! alteration chains are walked forward from each ballot, and openings are
//! judged directly against the stored commitments.

use std::collections::{HashMap, HashSet};
use std::fmt;

use crate::ballot::{Choice, OpeningCheck, OpeningMessage, Vid, VotePayload};
use crate::crypto::VoterPublicKey;
use crate::engine::{ExclusionReason, TallyResult};
use crate::ledger::{Chain, ChainReport, Violation};
use crate::par::{self, ExecMode};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mismatch {
    /// `candidates`, `candidate.<i>`, `protest`, `standing` or `excluded.<vid>`.
    pub field: String,
    pub recounted: String,
    pub claimed: String,
}

impl fmt::Display for Mismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: recounted {} but claimed {}", self.field, self.recounted, self.claimed)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AuditFailure {
    Chain(Violation),
    TallyMismatch(Mismatch),
}

impl fmt::Display for AuditFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AuditFailure::Chain(v) => write!(f, "chain violation: {v}"),
            AuditFailure::TallyMismatch(m) => write!(f, "tally mismatch: {m}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditReport {
    pub chain: ChainReport,
    pub recount: TallyResult,
    pub mismatches: Vec<Mismatch>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.chain.is_clean() && self.mismatches.is_empty()
    }

    /// Chain violations take precedence over tally differences.
    pub fn first_failure(&self) -> Option<AuditFailure> {
        self.chain
            .first()
            .cloned()
            .map(AuditFailure::Chain)
            .or_else(|| self.mismatches.first().cloned().map(AuditFailure::TallyMismatch))
    }
}

/// Verifies the chain, recounts it and compares against `claimed`.
pub fn audit(chain: &Chain, openings: &[OpeningMessage], claimed: &TallyResult, mode: ExecMode) -> AuditReport {
    let report = chain.verify_with(mode);
    let recount = recount(chain, openings, mode);
    let mismatches = compare(&recount, claimed);
    AuditReport {
        chain: report,
        recount,
        mismatches,
    }
}

/// Tally implied by the chain's votes and seal states plus `openings`.
pub fn recount(chain: &Chain, openings: &[OpeningMessage], mode: ExecMode) -> TallyResult {
    let entries: Vec<_> = chain.entries().collect();
    let owner: HashMap<Vid, VoterPublicKey> = entries.iter().map(|e| (e.vid, *e.payload.voter_pub())).collect();
    let pos: HashMap<Vid, usize> = entries.iter().enumerate().map(|(i, e)| (e.vid, i)).collect();

    // Walk each ballot forward: the next link is the first later alteration by
    // the same key that cancels the current one.
    let mut claimed_by_chain: HashSet<Vid> = HashSet::new();
    let mut excluded: HashMap<Vid, ExclusionReason> = HashMap::new();
    let mut terminals = Vec::new();
    for (i, e) in entries.iter().enumerate() {
        if !matches!(e.payload, VotePayload::Ballot(_)) {
            continue;
        }
        let voter = e.payload.voter_pub();
        let mut current = e.vid;
        let mut from = i + 1;
        claimed_by_chain.insert(current);
        while let Some(j) = (from..entries.len()).find(|&j| {
            matches!(&entries[j].payload, VotePayload::Alteration(a)
                if a.cancelled_vid == current && &a.voter_pub == voter)
        }) {
            excluded.insert(current, ExclusionReason::Superseded);
            current = entries[j].vid;
            claimed_by_chain.insert(current);
            from = j + 1;
        }
        terminals.push(current);
    }
    for (i, e) in entries.iter().enumerate() {
        if let VotePayload::Alteration(a) = &e.payload {
            if claimed_by_chain.contains(&e.vid) {
                continue;
            }
            let foreign = pos.get(&a.cancelled_vid).is_some_and(|&p| p < i)
                && owner.get(&a.cancelled_vid).is_some_and(|o| o != &a.voter_pub);
            let reason = if foreign {
                ExclusionReason::NotOwner
            } else {
                ExclusionReason::OrphanAlteration
            };
            excluded.insert(e.vid, reason);
        }
    }

    let num_candidates = chain.config().num_candidates();
    let end = chain.config().election_end_time;
    let jobs: Vec<(Vid, &VotePayload, Vec<&OpeningMessage>)> = terminals
        .iter()
        .map(|v| {
            let payload = &entries[pos[v]].payload;
            (*v, payload, openings.iter().filter(|o| o.vid == *v).collect())
        })
        .collect();
    let verdicts = par::map(mode, &jobs, |(vid, payload, opens)| {
        let unsealed = chain.get(vid).and_then(|e| e.seal.unsealed_at());
        if unsealed.is_some_and(|t| t < end) {
            return Err(ExclusionReason::OpenedEarly);
        }
        let checks: Vec<(OpeningCheck, &Choice)> = opens.iter().map(|o| (o.check_against(payload), &o.choice)).collect();
        if let Some((_, c)) = checks
            .iter()
            .find(|(k, c)| *k == OpeningCheck::Valid && c.validate(num_candidates).is_ok())
        {
            return Ok((*c).clone());
        }
        if checks.iter().any(|(k, _)| *k != OpeningCheck::NotOwner) {
            Err(ExclusionReason::BadOpening)
        } else if checks.is_empty() {
            Err(ExclusionReason::NeverOpened)
        } else {
            Err(ExclusionReason::NotOwner)
        }
    });

    let mut tally = TallyResult::empty(num_candidates);
    tally.standing_votes = terminals.len() as u64;
    for (vid, v) in terminals.iter().zip(verdicts) {
        match v {
            Ok(Choice::Candidate(i)) => tally.per_candidate[i as usize] += 1,
            Ok(Choice::Protest(_)) => tally.protest_count += 1,
            Err(r) => {
                excluded.insert(*vid, r);
            }
        }
    }
    let mut excluded: Vec<_> = excluded.into_iter().collect();
    excluded.sort_by_key(|(v, _)| pos[v]);
    tally.excluded = excluded;
    tally
}

fn compare(recount: &TallyResult, claimed: &TallyResult) -> Vec<Mismatch> {
    let mut out = Vec::new();
    let mut diff = |field: String, a: String, b: String| {
        if a != b {
            out.push(Mismatch {
                field,
                recounted: a,
                claimed: b,
            });
        }
    };
    diff(
        "candidates".into(),
        recount.per_candidate.len().to_string(),
        claimed.per_candidate.len().to_string(),
    );
    let n = recount.per_candidate.len().max(claimed.per_candidate.len());
    let at = |t: &TallyResult, i: usize| t.per_candidate.get(i).map_or("-".into(), |v| v.to_string());
    for i in 0..n {
        diff(format!("candidate.{i}"), at(recount, i), at(claimed, i));
    }
    diff("protest".into(), recount.protest_count.to_string(), claimed.protest_count.to_string());
    diff("standing".into(), recount.standing_votes.to_string(), claimed.standing_votes.to_string());

    let reason = |t: &TallyResult, v: &Vid| t.reason(v).map_or("counted".into(), |r| r.to_string());
    let mut vids: Vec<&Vid> = recount.excluded.iter().map(|(v, _)| v).collect();
    for (v, _) in &claimed.excluded {
        if recount.reason(v).is_none() {
            vids.push(v);
        }
    }
    for v in vids {
        diff(format!("excluded.{v}"), reason(recount, v), reason(claimed, v));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{count, PhaseClock};
    use crate::testutil::{self, Fixture};

    fn vid(n: u64) -> Vid {
        Vid::from_u64(n)
    }

    /// Four voters: an altered vote, an early reveal, a never-opened vote and
    /// a foreign alteration.
    fn election() -> (Chain, Vec<OpeningMessage>) {
        let mut fx = Fixture::new(3);
        let mut chain = testutil::chain(true);
        let (mut a, pa) = fx.ballot(1, Choice::Candidate(0));
        let (b, pb) = fx.ballot(2, Choice::Candidate(1));
        let (_c, pc) = fx.ballot(3, Choice::Candidate(2));
        let (mut d, pd) = fx.ballot(4, Choice::Protest("none".into()));
        let alt = fx.alteration(&mut a, vid(1), Choice::Candidate(2));
        let foreign = fx.alteration(&mut d, vid(2), Choice::Candidate(0));
        let votes = vec![(vid(1), pa), (vid(2), pb), (vid(3), pc), (vid(4), pd), (vid(5), alt), (vid(6), foreign)];
        chain.append_block(votes, 0, 10).unwrap();
        let early = testutil::open(&b, vid(2));
        crate::engine::apply_reveals(&mut chain, &[(early.clone(), 50)]);
        let d_open = build(&d, vid(4), Choice::Protest("none".into()));
        (chain, vec![testutil::open(&a, vid(5)), early, d_open])
    }

    fn build(v: &testutil::Voter, vid: Vid, choice: Choice) -> OpeningMessage {
        crate::ballot::build_opening_message(&v.keys, vid, choice, v.opening)
    }

    #[test]
    fn recount_agrees_with_engine() {
        let (mut chain, openings) = election();
        let recounted = recount(&chain, &openings, ExecMode::Sequential);
        let clock = PhaseClock::new(chain.config(), 150);
        let engine = count(&mut chain, &openings, &clock, ExecMode::Sequential).unwrap();
        assert_eq!(recounted, engine);
        assert_eq!(engine.per_candidate, vec![0, 0, 1]);
        let report = audit(&chain, &openings, &engine, ExecMode::Parallel);
        assert!(report.passed(), "{:?}", report.first_failure());
    }

    #[test]
    fn flags_the_first_divergent_field() {
        let (chain, openings) = election();
        let mut claimed = recount(&chain, &openings, ExecMode::Sequential);
        claimed.per_candidate[2] -= 1;
        claimed.per_candidate[0] += 1;
        let report = audit(&chain, &openings, &claimed, ExecMode::Sequential);
        match report.first_failure() {
            Some(AuditFailure::TallyMismatch(m)) => assert_eq!(m.field, "candidate.0"),
            other => panic!("{other:?}"),
        }

        let mut claimed = recount(&chain, &openings, ExecMode::Sequential);
        claimed.excluded.retain(|(v, _)| *v != vid(3));
        let report = audit(&chain, &openings, &claimed, ExecMode::Sequential);
        let m = &report.mismatches[0];
        assert_eq!(m.field, format!("excluded.{}", vid(3)));
        assert_eq!((m.recounted.as_str(), m.claimed.as_str()), ("NeverOpened", "counted"));
    }

    #[test]
    fn chain_violations_come_first() {
        let (chain, openings) = election();
        let claimed = recount(&chain, &openings, ExecMode::Sequential);
        let mut genesis = chain.genesis().clone();
        genesis.config.candidates[0] = "Z".into();
        let chain = Chain::from_parts(genesis, chain.blocks().to_vec());
        let report = audit(&chain, &openings, &claimed, ExecMode::Sequential);
        assert!(matches!(report.first_failure(), Some(AuditFailure::Chain(_))));
    }
}
