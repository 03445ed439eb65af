//! Shared fixtures for unit tests.

use std::sync::OnceLock;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::ballot::{
    build_alteration_ballot, build_opening_message, prepare_commitment, token_message, AlterationBallot,
    Ballot, Choice, EligibilityToken, OpeningMessage, Vid, VotePayload,
};
use crate::crypto::{blind, blind_sign, generate_voter_keys, unblind, CaKeyPair, OpeningValue, SigningKeyPair};
use crate::ledger::{Chain, ElectionConfig};

pub fn ca() -> &'static CaKeyPair {
    static KEYS: OnceLock<CaKeyPair> = OnceLock::new();
    KEYS.get_or_init(|| CaKeyPair::from_seed([42; 32], 1024).unwrap())
}

pub fn config(cancel: bool) -> ElectionConfig {
    ElectionConfig {
        candidates: vec!["A".into(), "B".into(), "C".into()],
        ca_public: ca().public().clone(),
        election_end_time: 100,
        count_end_time: 200,
        cancel_ballots: cancel,
    }
}

pub struct Voter {
    pub keys: SigningKeyPair,
    pub choice: Choice,
    pub opening: OpeningValue,
}

pub struct Fixture {
    pub rng: ChaCha20Rng,
}

impl Fixture {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    /// A voter with a CA-issued ballot for `choice`.
    pub fn ballot(&mut self, seed: u8, choice: Choice) -> (Voter, VotePayload) {
        let keys = generate_voter_keys([seed; 32]);
        let (dc, opening) = prepare_commitment(&choice, 3, &mut self.rng).unwrap();
        let st = blind(&token_message(&keys.public(), &dc), ca().public(), &mut self.rng).unwrap();
        let bs = blind_sign(ca().private(), st.blinded_message()).unwrap();
        let sig = unblind(&bs, &st, ca().public()).unwrap();
        let token = EligibilityToken::new(&keys.public(), &dc, sig);
        let ballot = Ballot {
            voter_pub: keys.public(),
            dc,
            token,
        };
        (Voter { keys, choice, opening }, VotePayload::Ballot(ballot))
    }

    pub fn alteration(&mut self, voter: &mut Voter, cancels: Vid, choice: Choice) -> VotePayload {
        let (alt, opening): (AlterationBallot, _) =
            build_alteration_ballot(&voter.keys, cancels, &choice, 3, &mut self.rng).unwrap();
        voter.choice = choice;
        voter.opening = opening;
        VotePayload::Alteration(alt)
    }
}

pub fn open(voter: &Voter, vid: Vid) -> OpeningMessage {
    build_opening_message(&voter.keys, vid, voter.choice.clone(), voter.opening)
}

pub fn chain(cancel: bool) -> Chain {
    Chain::new(config(cancel)).unwrap()
}
