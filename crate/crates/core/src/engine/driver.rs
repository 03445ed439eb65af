use std::collections::{BTreeMap, HashMap, HashSet};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use super::scenario::{Action, Scenario};
use super::{EngineError, TallyResult};
use crate::authority::{CaError, CentralAuthority, CredentialCheck};
use crate::ballot::{
    build_alteration_ballot, build_ballot, build_opening_message, prepare_commitment, token_message, Ballot,
    BallotError, Choice, EligibilityToken, OpeningMessage, Vid, VotePayload,
};
use crate::crypto::{
    blind, sha256, unblind, CaSignature, Commitment, CryptoError, OpeningValue, SigningKeyPair, VoterPublicKey,
};
use crate::ledger::{Chain, LedgerError, NodeId, Tick};
use crate::netsim::{Injection, SimNetwork};
use crate::transcript::{Event, Transcript};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClientError {
    #[error(transparent)]
    Ca(#[from] CaError),
    #[error(transparent)]
    Ballot(#[from] BallotError),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error("no eligibility token")]
    NoToken,
    #[error("no vote to open")]
    NothingToOpen,
}

impl ClientError {
    pub fn kind(&self) -> &'static str {
        match self {
            ClientError::Ca(e) => e.kind(),
            ClientError::Ballot(BallotError::InvalidChoice(_)) => "InvalidChoice",
            ClientError::Ballot(BallotError::TokenMismatch) => "TokenMismatch",
            ClientError::Ballot(BallotError::TokenInvalid) => "TokenInvalid",
            ClientError::Crypto(_) => "CryptoError",
            ClientError::NoToken => "NoToken",
            ClientError::NothingToOpen => "NothingToOpen",
        }
    }
}

#[derive(Debug, Clone)]
struct Prepared {
    ballot: Ballot,
    choice: Choice,
    opening: OpeningValue,
}

/// A voter's device: keys, the token-bearing ballot, and the secrets needed
/// to open each of its votes.
#[derive(Debug, Clone)]
pub struct VoterClient {
    pub name: String,
    keys: SigningKeyPair,
    prepared: Option<Prepared>,
    secrets: HashMap<Vid, (Choice, OpeningValue)>,
    latest: Option<Vid>,
}

impl VoterClient {
    /// Keys are derived from the run seed and the voter's name.
    pub fn new(name: &str, seed: u64) -> Self {
        let key_seed = sha256(&[b"ballotchain/voter-key/v1", &seed.to_be_bytes(), name.as_bytes()]);
        Self {
            name: name.to_string(),
            keys: SigningKeyPair::from_seed(key_seed),
            prepared: None,
            secrets: HashMap::new(),
            latest: None,
        }
    }

    pub fn public(&self) -> VoterPublicKey {
        self.keys.public()
    }

    pub fn has_token(&self) -> bool {
        self.prepared.is_some()
    }

    pub fn latest(&self) -> Option<Vid> {
        self.latest
    }

    /// Commits to `choice` and obtains a blind-signed token for it.
    pub fn request_token<C: CredentialCheck>(
        &mut self,
        ca: &CentralAuthority<C>,
        credential: &str,
        choice: &Choice,
        num_candidates: usize,
        now: Tick,
        rng: &mut ChaCha20Rng,
    ) -> Result<(), ClientError> {
        let session = ca.authenticate(&self.name, credential, now)?;
        let (dc, opening) = prepare_commitment(choice, num_candidates, rng)?;
        let voter_pub = self.keys.public();
        let state = blind(&token_message(&voter_pub, &dc), ca.public_key(), rng)?;
        let blind_sig = ca.issue_token(session, state.blinded_message(), now)?;
        let sig = unblind(&blind_sig, &state, ca.public_key())?;
        let ballot = build_ballot(voter_pub, dc, EligibilityToken::new(&voter_pub, &dc, sig), ca.public_key())?;
        self.prepared = Some(Prepared {
            ballot,
            choice: choice.clone(),
            opening,
        });
        Ok(())
    }

    /// The ballot to broadcast. With `forge` the token is corrupted, or made
    /// up entirely if the client never obtained one.
    pub fn cast(&mut self, vid: Vid, forge: bool, rng: &mut ChaCha20Rng) -> Result<(VotePayload, Choice), ClientError> {
        match (&self.prepared, forge) {
            (Some(p), false) => {
                self.secrets.entry(vid).or_insert((p.choice.clone(), p.opening));
                // Only one ballot per key can ever be accepted.
                self.latest.get_or_insert(vid);
                Ok((VotePayload::Ballot(p.ballot.clone()), p.choice.clone()))
            }
            (Some(p), true) => {
                let mut ballot = p.ballot.clone();
                if let Some(b) = ballot.token.signature.0.last_mut() {
                    *b ^= 0x01;
                }
                Ok((VotePayload::Ballot(ballot), p.choice.clone()))
            }
            (None, true) => {
                let choice = Choice::Candidate(0);
                let (dc, _) = prepare_commitment(&choice, 1, rng)?;
                let voter_pub = self.keys.public();
                let fake = CaSignature(sha256(&[b"forged", &dc.0]).repeat(8));
                let token = EligibilityToken::new(&voter_pub, &dc, fake);
                Ok((VotePayload::Ballot(Ballot { voter_pub, dc, token }), choice))
            }
            (None, false) => Err(ClientError::NoToken),
        }
    }

    pub fn alter(
        &mut self,
        vid: Vid,
        cancels: Option<Vid>,
        choice: &Choice,
        num_candidates: usize,
        rng: &mut ChaCha20Rng,
    ) -> Result<(VotePayload, Vid), ClientError> {
        let cancels = cancels.or(self.latest).ok_or(ClientError::NothingToOpen)?;
        let (alt, opening) = build_alteration_ballot(&self.keys, cancels, choice, num_candidates, rng)?;
        // A reused VID is rejected by the ledger; keep the secrets of the first use.
        self.secrets.entry(vid).or_insert((choice.clone(), opening));
        self.latest = Some(vid);
        Ok((VotePayload::Alteration(alt), cancels))
    }

    /// Opens `vid` (default: the latest vote). `claim` overrides the choice
    /// revealed. Opening a vote this client did not cast yields a message
    /// signed with the wrong key.
    pub fn open(&self, vid: Option<Vid>, claim: Option<Choice>, rng: &mut ChaCha20Rng) -> Result<OpeningMessage, ClientError> {
        let vid = vid.or(self.latest).ok_or(ClientError::NothingToOpen)?;
        let (choice, opening) = match self.secrets.get(&vid) {
            Some((c, o)) => (claim.unwrap_or_else(|| c.clone()), *o),
            None => (claim.unwrap_or(Choice::Candidate(0)), OpeningValue::random(rng)),
        };
        Ok(build_opening_message(&self.keys, vid, choice, opening))
    }
}

#[derive(Debug, Clone)]
pub struct ElectionOutcome {
    pub network: SimNetwork,
    pub tally: TallyResult,
    pub transcript: Transcript,
    pub tokens_issued: usize,
}

impl ElectionOutcome {
    /// The reference replica (node 0).
    pub fn chain(&self) -> &Chain {
        self.network.nodes()[0].chain()
    }

    /// Openings node 0 received, in arrival order.
    pub fn openings(&self) -> Vec<OpeningMessage> {
        self.network.nodes()[0].openings().iter().map(|(o, _)| o.clone()).collect()
    }
}

struct VidAllocator {
    reserved: HashSet<Vid>,
    next: u64,
}

impl VidAllocator {
    fn take(&mut self) -> Vid {
        loop {
            self.next += 1;
            let v = Vid::from_u64(self.next);
            if self.reserved.insert(v) {
                return v;
            }
        }
    }
}

/// Plays `scenario` against the network, counts at `count_end_time`, and
/// returns node 0's view plus a transcript of every action and outcome.
///
/// Each actor submits through a home node, assigned round-robin in order of
/// first appearance. The transcript ends with one `commit` line per vote on
/// the final chain, attributing it to its actor and committed choice.
pub fn run_election<C: CredentialCheck>(
    scenario: &Scenario,
    ca: &CentralAuthority<C>,
    mut network: SimNetwork,
    seed: u64,
) -> Result<ElectionOutcome, EngineError> {
    let config = network.config().clone();
    let count_end = config.count_end_time;
    let num_candidates = config.num_candidates();
    for l in &scenario.lines {
        if l.tick >= count_end || l.tick < network.now() {
            return Err(EngineError::PhaseViolation {
                line: l.line,
                tick: l.tick,
                count_end,
            });
        }
    }

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let n_nodes = network.nodes().len();
    let home: HashMap<&str, NodeId> = scenario
        .actors()
        .into_iter()
        .enumerate()
        .map(|(i, a)| (a, (i % n_nodes) as NodeId))
        .collect();
    let mut clients: BTreeMap<String, VoterClient> = BTreeMap::new();
    let mut vids = VidAllocator {
        reserved: scenario.lines.iter().flat_map(|l| l.action.named_vids()).collect(),
        next: 0,
    };
    let mut owners: HashMap<Commitment, (String, Choice)> = HashMap::new();
    let mut events = Vec::new();
    let mut tokens_issued = 0;

    for line in scenario.ordered() {
        let t = line.tick;
        network.run_until(t);
        events.extend(network.take_events());
        let actor = line.actor.as_str();
        let node = home[actor];
        let client = clients
            .entry(line.actor.clone())
            .or_insert_with(|| VoterClient::new(actor, seed));
        let base = |kind: &str| Event::new(t, kind).actor(actor);
        let client_reject = |e: ClientError| base("client-reject").with("action", line.action.name()).reason(e.kind());

        match &line.action {
            Action::Register { credential, choice } => {
                match client.request_token(ca, credential, choice, num_candidates, t, &mut rng) {
                    Ok(()) => {
                        tokens_issued += 1;
                        events.push(base("token"));
                    }
                    Err(ClientError::Ca(e)) => events.push(base("ca-reject").reason(e.kind())),
                    Err(e) => events.push(client_reject(e)),
                }
            }
            Action::Vote { vid, forge } => {
                let vid = vid.unwrap_or_else(|| vids.take());
                match client.cast(vid, *forge, &mut rng) {
                    Ok((payload, choice)) => {
                        if let VotePayload::Ballot(b) = &payload {
                            if network.admit(node, b).is_ok() {
                                owners.insert(b.dc, (actor.to_string(), choice.clone()));
                            }
                        }
                        let mut e = base("submit").vid(&vid).with("kind", "ballot").with("choice", &choice);
                        if *forge {
                            e = e.with("forged", true);
                        }
                        events.push(e);
                        network
                            .inject(node, Injection::Vote { vid, payload }, t)
                            .expect("home node exists and tick is current");
                    }
                    Err(e) => events.push(client_reject(e)),
                }
            }
            Action::Alter { choice, vid, cancels } => {
                let vid = vid.unwrap_or_else(|| vids.take());
                match client.alter(vid, *cancels, choice, num_candidates, &mut rng) {
                    Ok((payload, cancels)) => {
                        owners.insert(*payload.commitment(), (actor.to_string(), choice.clone()));
                        events.push(
                            base("submit")
                                .vid(&vid)
                                .with("kind", "alteration")
                                .with("choice", choice)
                                .with("cancels", cancels),
                        );
                        network
                            .inject(node, Injection::Vote { vid, payload }, t)
                            .expect("home node exists and tick is current");
                    }
                    Err(e) => events.push(client_reject(e)),
                }
            }
            Action::Open { vid, choice } => match client.open(*vid, choice.clone(), &mut rng) {
                Ok(msg) => {
                    events.push(base("open").vid(&msg.vid).with("choice", &msg.choice));
                    network
                        .inject(node, Injection::Opening(msg), t)
                        .expect("home node exists and tick is current");
                }
                Err(e) => events.push(client_reject(e)),
            },
        }
    }

    network.run_until(count_end + 1);
    events.extend(network.take_events());

    let node0 = &network.nodes()[0];
    let tally = node0.tally().cloned().ok_or(LedgerError::ElectionStillOpen {
        now: network.now(),
        end: config.election_end_time,
    })?;
    for entry in node0.chain().entries() {
        let (actor, choice) = owners
            .get(entry.payload.commitment())
            .map(|(a, c)| (a.clone(), c.to_string()))
            .unwrap_or_else(|| ("unknown".into(), "unknown".into()));
        let mut e = Event::new(entry.accepted_at, "commit")
            .vid(&entry.vid)
            .actor(&actor)
            .with("kind", entry.payload.kind())
            .with("choice", choice);
        if let Some(c) = entry.payload.cancelled_vid() {
            e = e.with("cancels", c);
        }
        events.push(e);
    }
    events.sort_by_key(|e| e.tick);

    Ok(ElectionOutcome {
        network,
        tally,
        transcript: Transcript { events },
        tokens_issued,
    })
}
