use std::collections::{HashMap, HashSet};
use std::fmt;

use thiserror::Error;

use super::{resolve_chains, Excluded, ExclusionReason, PhaseClock};
use crate::ballot::{Choice, OpeningCheck, OpeningMessage, Vid, VotePayload};
use crate::ledger::{Chain, LedgerError, Tick};
use crate::par::{self, ExecMode};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TallyResult {
    pub per_candidate: Vec<u64>,
    pub protest_count: u64,
    /// Terminal votes of all alteration chains, counted or not.
    pub standing_votes: u64,
    /// Every vote that did not count, in chain order.
    pub excluded: Excluded,
}

impl TallyResult {
    pub fn empty(num_candidates: usize) -> Self {
        Self {
            per_candidate: vec![0; num_candidates],
            protest_count: 0,
            standing_votes: 0,
            excluded: Vec::new(),
        }
    }

    pub fn counted(&self) -> u64 {
        self.per_candidate.iter().sum::<u64>() + self.protest_count
    }

    pub fn reason(&self, vid: &Vid) -> Option<ExclusionReason> {
        self.excluded.iter().find(|(v, _)| v == vid).map(|(_, r)| *r)
    }

    pub fn excluded_count(&self, reason: ExclusionReason) -> usize {
        self.excluded.iter().filter(|(_, r)| *r == reason).count()
    }

    /// Machine-readable `key=value` lines.
    pub fn to_kv(&self) -> String {
        let mut out = format!("candidates={}\n", self.per_candidate.len());
        for (i, n) in self.per_candidate.iter().enumerate() {
            out.push_str(&format!("candidate.{i}={n}\n"));
        }
        out.push_str(&format!("protest={}\n", self.protest_count));
        out.push_str(&format!("standing={}\n", self.standing_votes));
        out.push_str(&format!("excluded={}\n", self.excluded.len()));
        for (vid, r) in &self.excluded {
            out.push_str(&format!("excluded.{vid}={r}\n"));
        }
        out
    }

    pub fn from_kv(text: &str) -> Result<Self, TallyParseError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let mut next = |key: &str| -> Result<(usize, String), TallyParseError> {
            let (i, line) = lines.next().ok_or(TallyParseError::Missing(key.to_string()))?;
            let (k, v) = line
                .trim()
                .split_once('=')
                .ok_or(TallyParseError::Line(i + 1))?;
            if k != key {
                return Err(TallyParseError::UnexpectedKey { line: i + 1, key: k.to_string() });
            }
            Ok((i + 1, v.to_string()))
        };
        let num = |(line, v): (usize, String)| v.parse::<u64>().map_err(|_| TallyParseError::Line(line));

        let n = num(next("candidates")?)?;
        let per_candidate = (0..n)
            .map(|i| num(next(&format!("candidate.{i}"))?))
            .collect::<Result<Vec<_>, _>>()?;
        let protest_count = num(next("protest")?)?;
        let standing_votes = num(next("standing")?)?;
        let n_excluded = num(next("excluded")?)?;
        let mut excluded = Vec::new();
        for _ in 0..n_excluded {
            let (i, line) = lines.next().ok_or(TallyParseError::Missing("excluded.<vid>".into()))?;
            let rest = line
                .trim()
                .strip_prefix("excluded.")
                .ok_or(TallyParseError::Line(i + 1))?;
            let (vid, reason) = rest.split_once('=').ok_or(TallyParseError::Line(i + 1))?;
            excluded.push((
                vid.parse().map_err(|_| TallyParseError::Line(i + 1))?,
                reason.parse().map_err(|_| TallyParseError::Line(i + 1))?,
            ));
        }
        if let Some((i, _)) = lines.next() {
            return Err(TallyParseError::Line(i + 1));
        }
        Ok(Self {
            per_candidate,
            protest_count,
            standing_votes,
            excluded,
        })
    }

    /// Human-readable summary using candidate names.
    pub fn render(&self, candidates: &[String]) -> String {
        let width = candidates.iter().map(|c| c.len()).max().unwrap_or(0).max(7);
        let mut out = String::new();
        for (name, n) in candidates.iter().zip(&self.per_candidate) {
            out.push_str(&format!("{name:<width$}  {n}\n"));
        }
        out.push_str(&format!("{:<width$}  {}\n", "protest", self.protest_count));
        out.push_str(&format!(
            "standing {}, counted {}, excluded {}\n",
            self.standing_votes,
            self.counted(),
            self.excluded.len()
        ));
        for r in ExclusionReason::ALL {
            let n = self.excluded_count(r);
            if n > 0 {
                out.push_str(&format!("  {r}: {n}\n"));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TallyParseError {
    #[error("tally: missing {0}")]
    Missing(String),
    #[error("tally: line {line}: unexpected key {key:?}")]
    UnexpectedKey { line: usize, key: String },
    #[error("tally: malformed line {0}")]
    Line(usize),
}

enum Verdict {
    Missing,
    Counted(Choice),
    Rejected(ExclusionReason),
}

fn judge(payload: &VotePayload, openings: &[&OpeningMessage], num_candidates: usize) -> Verdict {
    let mut worst = None;
    for o in openings {
        match o.check_against(payload) {
            OpeningCheck::Valid if o.choice.validate(num_candidates).is_ok() => {
                return Verdict::Counted(o.choice.clone())
            }
            OpeningCheck::Valid | OpeningCheck::BadCommitment => worst = Some(ExclusionReason::BadOpening),
            OpeningCheck::NotOwner => {
                worst.get_or_insert(ExclusionReason::NotOwner);
            }
        }
    }
    worst.map_or(Verdict::Missing, Verdict::Rejected)
}

/// Counts the standing votes. Valid openings unseal their vote through
/// [`Chain::retrieve_vote`]; a vote whose seal was broken before the end of
/// voting never counts. Openings for votes that are not standing are ignored.
pub fn count(
    chain: &mut Chain,
    openings: &[OpeningMessage],
    clock: &PhaseClock,
    mode: ExecMode,
) -> Result<TallyResult, LedgerError> {
    let now = clock.now();
    let end = chain.config().election_end_time;
    if now <= end {
        return Err(LedgerError::ElectionStillOpen { now, end });
    }
    let num_candidates = chain.config().num_candidates();
    let resolution = resolve_chains(chain);
    let standing: Vec<Vid> = resolution.standing().copied().collect();
    let standing_set: HashSet<&Vid> = standing.iter().collect();

    let mut by_vid: HashMap<Vid, Vec<&OpeningMessage>> = HashMap::new();
    for o in openings.iter().filter(|o| standing_set.contains(&o.vid)) {
        by_vid.entry(o.vid).or_default().push(o);
    }
    let jobs: Vec<(&VotePayload, &[&OpeningMessage])> = standing
        .iter()
        .map(|v| {
            let payload = &chain.get(v).expect("standing vote is on chain").payload;
            (payload, by_vid.get(v).map_or(&[][..], |o| &o[..]))
        })
        .collect();
    let verdicts = par::map(mode, &jobs, |(p, o)| judge(p, o, num_candidates));

    let mut tally = TallyResult::empty(num_candidates);
    tally.standing_votes = standing.len() as u64;
    let mut excluded = resolution.excluded;
    for (vid, verdict) in standing.iter().zip(verdicts) {
        if chain.return_time_unsealed(vid)?.is_some_and(|t| t < end) {
            excluded.push((*vid, ExclusionReason::OpenedEarly));
            continue;
        }
        match verdict {
            Verdict::Missing => excluded.push((*vid, ExclusionReason::NeverOpened)),
            Verdict::Rejected(r) => excluded.push((*vid, r)),
            Verdict::Counted(choice) => {
                chain.retrieve_vote(vid, now)?;
                match choice {
                    Choice::Candidate(i) => tally.per_candidate[i as usize] += 1,
                    Choice::Protest(_) => tally.protest_count += 1,
                }
            }
        }
    }
    let order: HashMap<Vid, usize> = chain.entries().enumerate().map(|(i, e)| (e.vid, i)).collect();
    excluded.sort_by_key(|(v, _)| order[v]);
    tally.excluded = excluded;
    Ok(tally)
}

/// Marks every vote with a valid opening as revealed at the opening's
/// first-seen time. Returns how many seal states changed.
pub fn apply_reveals(chain: &mut Chain, openings: &[(OpeningMessage, Tick)]) -> usize {
    let mut changed = 0;
    for (o, seen) in openings {
        let Some(entry) = chain.get(&o.vid) else { continue };
        if entry.seal.unsealed_at().is_some_and(|t| t <= *seen) {
            continue;
        }
        if o.check_against(&entry.payload) == OpeningCheck::Valid
            && chain.mark_revealed(&o.vid, *seen).unwrap_or(false)
        {
            changed += 1;
        }
    }
    changed
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChallengeReport {
    pub vid: Vid,
    pub sealed: bool,
    pub unsealed_at: Option<Tick>,
    /// True iff the vote is standing and, when a tally is known, was counted.
    pub standing: bool,
    pub reason: Option<ExclusionReason>,
}

impl fmt::Display for ChallengeReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |v: Option<String>| v.unwrap_or_else(|| "none".into());
        write!(
            f,
            "vid={} sealed={} unsealed_at={} standing={} reason={}",
            self.vid,
            self.sealed,
            opt(self.unsealed_at.map(|t| t.to_string())),
            self.standing,
            opt(self.reason.map(|r| r.to_string())),
        )
    }
}

/// Read-only view of one vote for its owner or an observer. Without a tally
/// only structural and early-reveal exclusions can be reported.
pub fn challenge(chain: &Chain, vid: &Vid, tally: Option<&TallyResult>) -> Result<ChallengeReport, LedgerError> {
    let sealed = chain.return_sealed(vid)?;
    let unsealed_at = chain.return_time_unsealed(vid)?;
    let end = chain.config().election_end_time;
    let reason = resolve_chains(chain)
        .reason(vid)
        .or_else(|| tally.and_then(|t| t.reason(vid)))
        .or_else(|| {
            unsealed_at
                .is_some_and(|t| t < end)
                .then_some(ExclusionReason::OpenedEarly)
        });
    Ok(ChallengeReport {
        vid: *vid,
        sealed,
        unsealed_at,
        standing: reason.is_none(),
        reason,
    })
}
