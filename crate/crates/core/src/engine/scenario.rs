//! Scripted voter actions, one per line:
//!
//! ```text
//! # t=<tick> actor=<id> action=<register|vote|alter|open> key=value...
//! t=1  actor=alice action=register credential=pw-alice choice=0
//! t=5  actor=alice action=vote vid=22
//! t=9  actor=alice action=alter choice=1 vid=29
//! t=150 actor=alice action=open
//! ```
//!
//! `vote` takes optional `vid=` and `forge=true` (corrupts the token).
//! `alter` takes `choice=`, optional `vid=` and `cancels=` (defaults to the
//! actor's latest vote). `open` takes optional `vid=` (defaults to the latest
//! vote) and `choice=` (to claim a different choice than was committed).

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::ballot::{Choice, Vid};
use crate::ledger::Tick;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("scenario line {line}: {msg}")]
pub struct ScenarioError {
    pub line: usize,
    pub msg: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    Register { credential: String, choice: Choice },
    Vote { vid: Option<Vid>, forge: bool },
    Alter { choice: Choice, vid: Option<Vid>, cancels: Option<Vid> },
    Open { vid: Option<Vid>, choice: Option<Choice> },
}

impl Action {
    pub fn name(&self) -> &'static str {
        match self {
            Action::Register { .. } => "register",
            Action::Vote { .. } => "vote",
            Action::Alter { .. } => "alter",
            Action::Open { .. } => "open",
        }
    }

    /// VIDs this action names explicitly.
    pub fn named_vids(&self) -> Vec<Vid> {
        match self {
            Action::Register { .. } => vec![],
            Action::Vote { vid, .. } | Action::Open { vid, .. } => vid.iter().copied().collect(),
            Action::Alter { vid, cancels, .. } => vid.iter().chain(cancels.iter()).copied().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioLine {
    /// 1-based line in the source text, 0 for generated lines.
    pub line: usize,
    pub tick: Tick,
    pub actor: String,
    pub action: Action,
}

fn fmt_vid(v: &Vid) -> String {
    match v.as_u64() {
        Some(n) => n.to_string(),
        None => v.to_string(),
    }
}

impl fmt::Display for ScenarioLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t={} actor={} action={}", self.tick, self.actor, self.action.name())?;
        match &self.action {
            Action::Register { credential, choice } => write!(f, " credential={credential} choice={choice}"),
            Action::Vote { vid, forge } => {
                if let Some(v) = vid {
                    write!(f, " vid={}", fmt_vid(v))?;
                }
                if *forge {
                    f.write_str(" forge=true")?;
                }
                Ok(())
            }
            Action::Alter { choice, vid, cancels } => {
                write!(f, " choice={choice}")?;
                if let Some(v) = vid {
                    write!(f, " vid={}", fmt_vid(v))?;
                }
                if let Some(c) = cancels {
                    write!(f, " cancels={}", fmt_vid(c))?;
                }
                Ok(())
            }
            Action::Open { vid, choice } => {
                if let Some(v) = vid {
                    write!(f, " vid={}", fmt_vid(v))?;
                }
                if let Some(c) = choice {
                    write!(f, " choice={c}")?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Scenario {
    pub lines: Vec<ScenarioLine>,
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let mut lines = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            lines.push(parse_line(i + 1, body)?);
        }
        Ok(Self { lines })
    }

    /// Lines in execution order: by tick, then by position.
    pub fn ordered(&self) -> Vec<&ScenarioLine> {
        let mut v: Vec<&ScenarioLine> = self.lines.iter().collect();
        v.sort_by_key(|l| l.tick);
        v
    }

    pub fn actors(&self) -> Vec<&str> {
        let mut seen = Vec::new();
        for l in self.ordered() {
            if !seen.contains(&l.actor.as_str()) {
                seen.push(l.actor.as_str());
            }
        }
        seen
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in &self.lines {
            writeln!(f, "{l}")?;
        }
        Ok(())
    }
}

impl FromStr for Scenario {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

fn parse_line(line: usize, body: &str) -> Result<ScenarioLine, ScenarioError> {
    let err = |msg: String| ScenarioError { line, msg };
    let mut kv: Vec<(&str, &str)> = Vec::new();
    for tok in body.split_whitespace() {
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| err(format!("expected key=value, got {tok:?}")))?;
        if kv.iter().any(|(seen, _)| *seen == k) {
            return Err(err(format!("repeated key {k:?}")));
        }
        kv.push((k, v));
    }
    let mut take = |key: &str| -> Option<&str> {
        let i = kv.iter().position(|(k, _)| *k == key)?;
        Some(kv.remove(i).1)
    };
    let tick = take("t")
        .ok_or_else(|| err("missing t=".into()))?
        .parse::<Tick>()
        .map_err(|e| err(format!("bad tick: {e}")))?;
    let actor = take("actor").ok_or_else(|| err("missing actor=".into()))?.to_string();
    let action_name = take("action").ok_or_else(|| err("missing action=".into()))?;

    let vid = |v: Option<&str>| v.map(|s| s.parse::<Vid>().map_err(err)).transpose();
    let choice = |v: Option<&str>| v.map(|s| s.parse::<Choice>().map_err(err)).transpose();
    let required = |v: Option<Choice>, key: &str| v.ok_or_else(|| err(format!("{action_name} needs {key}=")));

    let action = match action_name {
        "register" => {
            let credential = take("credential")
                .ok_or_else(|| err("register needs credential=".into()))?
                .to_string();
            Action::Register {
                credential,
                choice: required(choice(take("choice"))?, "choice")?,
            }
        }
        "vote" => Action::Vote {
            vid: vid(take("vid"))?,
            forge: match take("forge") {
                None | Some("false") => false,
                Some("true") => true,
                Some(other) => return Err(err(format!("forge must be true or false, got {other:?}"))),
            },
        },
        "alter" => Action::Alter {
            choice: required(choice(take("choice"))?, "choice")?,
            vid: vid(take("vid"))?,
            cancels: vid(take("cancels"))?,
        },
        "open" => Action::Open {
            vid: vid(take("vid"))?,
            choice: choice(take("choice"))?,
        },
        other => return Err(err(format!("unknown action {other:?}"))),
    };
    if let Some((k, _)) = kv.first() {
        return Err(err(format!("unexpected key {k:?} for {action_name}")));
    }
    Ok(ScenarioLine {
        line,
        tick,
        actor,
        action,
    })
}

/// Shape of a generated election.
#[derive(Debug, Clone)]
pub struct GenParams {
    pub max_voters: usize,
    pub min_candidates: usize,
    pub max_candidates: usize,
    pub max_alterations: usize,
    /// Probability that each honest action is accompanied by a faulty one.
    pub invalid_rate: f64,
    pub election_end_time: Tick,
    pub count_end_time: Tick,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            max_voters: 200,
            min_candidates: 2,
            max_candidates: 5,
            max_alterations: 3,
            invalid_rate: 0.05,
            election_end_time: 1000,
            count_end_time: 2000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GeneratedElection {
    pub scenario: Scenario,
    /// `(identity, password)` pairs for the voter registry.
    pub registry: Vec<(String, String)>,
    pub num_candidates: usize,
    pub cancel_ballots: bool,
    pub election_end_time: Tick,
    pub count_end_time: Tick,
}

/// A random election: honest voters plus injected faults (forged and repeated
/// tokens, double votes, late votes, orphan, foreign and stale alterations,
/// early, false, foreign and missing openings, reused VIDs, outsiders).
pub fn generate(seed: u64, p: &GenParams) -> GeneratedElection {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let n_voters = rng.gen_range(1..=p.max_voters);
    let k = rng.gen_range(p.min_candidates..=p.max_candidates);
    let cancel_ballots = rng.gen_bool(0.9);
    let end = p.election_end_time;
    let cend = p.count_end_time;
    // Keep everything well inside the phase windows.
    let vote_window = end * 6 / 10;
    let alter_until = end - 2;
    let open_from = end + 1;
    let open_until = cend - (cend - end) / 10;

    let mut lines = Vec::new();
    let mut next_vid = 1u64;
    let mut fresh_vid = || {
        let v = Vid::from_u64(next_vid);
        next_vid += 1;
        v
    };
    let pick_choice = |rng: &mut ChaCha20Rng| {
        if rng.gen_bool(0.05) {
            Choice::Protest(format!("protest-{}", rng.gen_range(0..100)))
        } else {
            Choice::Candidate(rng.gen_range(0..k as u32))
        }
    };
    let push = |lines: &mut Vec<ScenarioLine>, tick, actor: &str, action| {
        lines.push(ScenarioLine {
            line: 0,
            tick,
            actor: actor.to_string(),
            action,
        })
    };

    let mut registry = Vec::new();
    // (actor, own vids in chain order)
    let mut voters: Vec<(String, Vec<Vid>)> = Vec::new();
    let mut deferred_foreign = Vec::new();

    for i in 0..n_voters {
        let name = format!("voter{i:03}");
        let password = format!("pw-{seed}-{i}");
        registry.push((name.clone(), password.clone()));
        let fault = |rng: &mut ChaCha20Rng| rng.gen_bool(p.invalid_rate);

        let reg_t = rng.gen_range(0..vote_window / 2);
        let mut choice = pick_choice(&mut rng);
        if fault(&mut rng) {
            push(&mut lines, reg_t, &name, Action::Register {
                credential: "wrong".into(),
                choice: choice.clone(),
            });
        }
        push(&mut lines, reg_t, &name, Action::Register {
            credential: password.clone(),
            choice: choice.clone(),
        });
        if fault(&mut rng) {
            push(&mut lines, reg_t + 1, &name, Action::Register {
                credential: password.clone(),
                choice: pick_choice(&mut rng),
            });
        }

        let vote_t = rng.gen_range(reg_t + 1..vote_window);
        let ballot_vid = fresh_vid();
        if fault(&mut rng) {
            push(&mut lines, vote_t, &name, Action::Vote {
                vid: Some(fresh_vid()),
                forge: true,
            });
        }
        let late = fault(&mut rng);
        push(&mut lines, if late { rng.gen_range(end..open_from + 5) } else { vote_t }, &name, Action::Vote {
            vid: Some(ballot_vid),
            forge: false,
        });
        if fault(&mut rng) {
            push(&mut lines, vote_t + 1, &name, Action::Vote {
                vid: Some(fresh_vid()),
                forge: false,
            });
        }

        let mut own = vec![ballot_vid];
        let mut t = vote_t;
        let n_alt = rng.gen_range(0..=p.max_alterations);
        for _ in 0..n_alt {
            if t + 2 >= alter_until {
                break;
            }
            t = rng.gen_range(t + 1..alter_until);
            let alt_choice = pick_choice(&mut rng);
            if fault(&mut rng) {
                let target = match rng.gen_range(0..3) {
                    0 => Vid::from_u64(1_000_000 + rng.gen_range(0..1000)),
                    1 if own.len() > 1 => own[0],
                    _ => {
                        deferred_foreign.push((t, name.clone(), pick_choice(&mut rng), fresh_vid()));
                        continue;
                    }
                };
                push(&mut lines, t, &name, Action::Alter {
                    choice: pick_choice(&mut rng),
                    vid: Some(fresh_vid()),
                    cancels: Some(target),
                });
            }
            let v = fresh_vid();
            push(&mut lines, t, &name, Action::Alter {
                choice: alt_choice.clone(),
                vid: Some(v),
                cancels: Some(*own.last().unwrap()),
            });
            own.push(v);
            choice = alt_choice;
        }

        let terminal = *own.last().unwrap();
        if fault(&mut rng) && t + 1 < end {
            push(&mut lines, rng.gen_range(t + 1..end), &name, Action::Open {
                vid: Some(terminal),
                choice: None,
            });
        }
        let open_t = rng.gen_range(open_from..open_until);
        match (fault(&mut rng), rng.gen_range(0..2)) {
            (true, 0) => {}
            (true, _) => {
                let lie = match &choice {
                    Choice::Candidate(c) => Choice::Candidate((c + 1) % k as u32),
                    Choice::Protest(_) => Choice::Candidate(0),
                };
                push(&mut lines, open_t, &name, Action::Open {
                    vid: Some(terminal),
                    choice: Some(lie),
                });
            }
            (false, _) => push(&mut lines, open_t, &name, Action::Open {
                vid: Some(terminal),
                choice: None,
            }),
        }
        voters.push((name, own));
    }

    // Faults that need somebody else's vote.
    for (t, name, choice, vid) in deferred_foreign {
        let (_, other) = voters.choose(&mut rng).unwrap();
        push(&mut lines, t, &name, Action::Alter {
            choice,
            vid: Some(vid),
            cancels: Some(other[0]),
        });
    }
    for (name, _) in &voters {
        if !rng.gen_bool(p.invalid_rate) {
            continue;
        }
        let (_, other) = voters.choose(&mut rng).unwrap();
        let victim = *other.last().unwrap();
        if rng.gen_bool(0.5) {
            push(&mut lines, rng.gen_range(open_from..open_until), name, Action::Open {
                vid: Some(victim),
                choice: Some(Choice::Candidate(0)),
            });
        } else {
            push(&mut lines, rng.gen_range(1..vote_window), name, Action::Vote {
                vid: Some(other[0]),
                forge: false,
            });
        }
    }
    let outsiders = (n_voters as f64 * p.invalid_rate).ceil() as usize;
    for j in 0..outsiders {
        let name = format!("outsider{j}");
        let t = rng.gen_range(0..vote_window);
        push(&mut lines, t, &name, Action::Register {
            credential: "guess".into(),
            choice: Choice::Candidate(0),
        });
        push(&mut lines, t + 1, &name, Action::Vote {
            vid: Some(fresh_vid()),
            forge: true,
        });
    }

    lines.sort_by_key(|l| l.tick);
    GeneratedElection {
        scenario: Scenario { lines },
        registry,
        num_candidates: k,
        cancel_ballots,
        election_end_time: end,
        count_end_time: cend,
    }
}
