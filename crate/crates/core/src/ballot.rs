//! Wire messages exchanged by voters: ballots, alteration ballots, eligibility
//! tokens and ballot-opening messages.

use std::fmt;
use std::str::FromStr;

use rand::{CryptoRng, RngCore};
use thiserror::Error;

use crate::crypto::{
    self, commit, verify_ca, CaPublicKey, CaSignature, Commitment, Digest32, OpeningValue,
    SigningKeyPair, VoterPublicKey, VoterSignature,
};
use crate::encoding::{Canonical, DecodeError, Decoder, Encoder};
use crate::ledger::{Chain, LedgerError};

pub const MAX_PROTEST_LEN: usize = 256;

const TOKEN_DOMAIN: &[u8] = b"ballotchain/token/v1";
const ALTERATION_DOMAIN: &[u8] = b"ballotchain/alteration/v1";
const OPENING_DOMAIN: &[u8] = b"ballotchain/opening/v1";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BallotError {
    #[error("invalid choice: {0}")]
    InvalidChoice(String),
    #[error("eligibility token was issued for a different (public key, commitment) pair")]
    TokenMismatch,
    #[error("eligibility token signature does not verify under the CA key")]
    TokenInvalid,
}

/// What a voter selects: a candidate index, or a protest message that is
/// logged but never tallied for a candidate.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Choice {
    Candidate(u32),
    Protest(String),
}

impl Choice {
    pub fn validate(&self, num_candidates: usize) -> Result<(), BallotError> {
        match self {
            Choice::Candidate(i) if (*i as usize) < num_candidates => Ok(()),
            Choice::Candidate(i) => Err(BallotError::InvalidChoice(format!(
                "candidate {i} out of range for {num_candidates} candidates"
            ))),
            Choice::Protest(text) if text.len() <= MAX_PROTEST_LEN => Ok(()),
            Choice::Protest(text) => Err(BallotError::InvalidChoice(format!(
                "protest text of {} bytes exceeds {MAX_PROTEST_LEN}",
                text.len()
            ))),
        }
    }
}

impl Canonical for Choice {
    fn encode(&self, enc: &mut Encoder) {
        match self {
            Choice::Candidate(i) => enc.u8(0).u32(*i),
            Choice::Protest(text) => enc.u8(1).field(text.as_bytes()),
        };
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        match dec.u8()? {
            0 => Ok(Choice::Candidate(dec.u32()?)),
            1 => Ok(Choice::Protest(dec.string()?)),
            t => Err(DecodeError::BadTag(t)),
        }
    }
}

/// Text form used in scenario files: `2` or `protest:<text>`.
impl fmt::Display for Choice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Choice::Candidate(i) => write!(f, "{i}"),
            Choice::Protest(t) => write!(f, "protest:{t}"),
        }
    }
}

impl FromStr for Choice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(text) = s.strip_prefix("protest:") {
            return Ok(Choice::Protest(text.to_string()));
        }
        s.parse::<u32>()
            .map(Choice::Candidate)
            .map_err(|_| format!("bad choice {s:?}"))
    }
}

/// Vote identifier chosen by the voter's client.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Vid(pub [u8; 32]);

impl Vid {
    pub fn random<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut b = [0u8; 32];
        rng.fill_bytes(&mut b);
        Self(b)
    }

    /// Small numeric VIDs, big-endian in the low eight bytes.
    pub fn from_u64(n: u64) -> Self {
        let mut b = [0u8; 32];
        b[24..].copy_from_slice(&n.to_be_bytes());
        Self(b)
    }

    pub fn as_u64(&self) -> Option<u64> {
        self.0[..24]
            .iter()
            .all(|b| *b == 0)
            .then(|| u64::from_be_bytes(self.0[24..].try_into().unwrap()))
    }
}

impl fmt::Display for Vid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl fmt::Debug for Vid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.as_u64() {
            Some(n) => write!(f, "Vid({n})"),
            None => write!(f, "Vid({}..)", hex::encode(&self.0[..6])),
        }
    }
}

/// Accepts 64 hex digits or a decimal integer.
impl FromStr for Vid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.len() == 64 {
            let mut b = [0u8; 32];
            hex::decode_to_slice(s, &mut b).map_err(|e| format!("bad vid {s:?}: {e}"))?;
            return Ok(Vid(b));
        }
        s.parse::<u64>()
            .map(Vid::from_u64)
            .map_err(|_| format!("bad vid {s:?}"))
    }
}

/// The message a CA token signs: canonical `(voter_pub, dc)`.
pub fn token_message(voter_pub: &VoterPublicKey, dc: &Commitment) -> Vec<u8> {
    let mut enc = Encoder::new();
    enc.field(TOKEN_DOMAIN).field(&voter_pub.0).field(&dc.0);
    enc.finish()
}

/// CA signature over `(voter_pub, dc)`, plus the digest of the message it was
/// issued for. The digest only sharpens error reporting; acceptance always
/// rests on the signature.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EligibilityToken {
    pub subject: Digest32,
    pub signature: CaSignature,
}

impl EligibilityToken {
    pub fn new(voter_pub: &VoterPublicKey, dc: &Commitment, signature: CaSignature) -> Self {
        Self {
            subject: crypto::sha256(&[&token_message(voter_pub, dc)]),
            signature,
        }
    }

    pub fn verifies_over(&self, ca_public: &CaPublicKey, voter_pub: &VoterPublicKey, dc: &Commitment) -> bool {
        verify_ca(ca_public, &token_message(voter_pub, dc), &self.signature)
    }
}

impl Canonical for EligibilityToken {
    fn encode(&self, enc: &mut Encoder) {
        enc.field(&self.subject).field(&self.signature.0);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(Self {
            subject: dec.fixed()?,
            signature: CaSignature(dec.field()?.to_vec()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ballot {
    pub voter_pub: VoterPublicKey,
    pub dc: Commitment,
    pub token: EligibilityToken,
}

impl Ballot {
    pub fn verify_token(&self, ca_public: &CaPublicKey) -> bool {
        self.token.verifies_over(ca_public, &self.voter_pub, &self.dc)
    }
}

impl Canonical for Ballot {
    fn encode(&self, enc: &mut Encoder) {
        enc.field(&self.voter_pub.0)
            .field(&self.dc.0)
            .nested(|e| self.token.encode(e));
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(Self {
            voter_pub: VoterPublicKey(dec.fixed()?),
            dc: Commitment(dec.fixed()?),
            token: dec.nested(EligibilityToken::decode)?,
        })
    }
}

/// Cancels `cancelled_vid` and commits to a new choice, signed by the voter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlterationBallot {
    pub cancelled_vid: Vid,
    pub voter_pub: VoterPublicKey,
    pub dc_new: Commitment,
    pub signature: VoterSignature,
}

impl AlterationBallot {
    pub fn signed_message(cancelled_vid: &Vid, voter_pub: &VoterPublicKey, dc_new: &Commitment) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.field(ALTERATION_DOMAIN)
            .field(&cancelled_vid.0)
            .field(&voter_pub.0)
            .field(&dc_new.0);
        enc.finish()
    }

    pub fn verify_signature(&self) -> bool {
        self.verify_under(&self.voter_pub)
    }

    pub fn verify_under(&self, key: &VoterPublicKey) -> bool {
        let msg = Self::signed_message(&self.cancelled_vid, &self.voter_pub, &self.dc_new);
        crypto::verify(key, &msg, &self.signature)
    }
}

impl Canonical for AlterationBallot {
    fn encode(&self, enc: &mut Encoder) {
        enc.field(&self.cancelled_vid.0)
            .field(&self.voter_pub.0)
            .field(&self.dc_new.0)
            .field(&self.signature.0);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(Self {
            cancelled_vid: Vid(dec.fixed()?),
            voter_pub: VoterPublicKey(dec.fixed()?),
            dc_new: Commitment(dec.fixed()?),
            signature: VoterSignature(dec.fixed()?),
        })
    }
}

/// Either kind of vote a ledger entry can carry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VotePayload {
    Ballot(Ballot),
    Alteration(AlterationBallot),
}

impl VotePayload {
    pub fn voter_pub(&self) -> &VoterPublicKey {
        match self {
            VotePayload::Ballot(b) => &b.voter_pub,
            VotePayload::Alteration(a) => &a.voter_pub,
        }
    }

    pub fn commitment(&self) -> &Commitment {
        match self {
            VotePayload::Ballot(b) => &b.dc,
            VotePayload::Alteration(a) => &a.dc_new,
        }
    }

    pub fn cancelled_vid(&self) -> Option<&Vid> {
        match self {
            VotePayload::Ballot(_) => None,
            VotePayload::Alteration(a) => Some(&a.cancelled_vid),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            VotePayload::Ballot(_) => "ballot",
            VotePayload::Alteration(_) => "alteration",
        }
    }
}

impl Canonical for VotePayload {
    fn encode(&self, enc: &mut Encoder) {
        match self {
            VotePayload::Ballot(b) => enc.u8(0).nested(|e| b.encode(e)),
            VotePayload::Alteration(a) => enc.u8(1).nested(|e| a.encode(e)),
        };
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        match dec.u8()? {
            0 => Ok(VotePayload::Ballot(dec.nested(Ballot::decode)?)),
            1 => Ok(VotePayload::Alteration(dec.nested(AlterationBallot::decode)?)),
            t => Err(DecodeError::BadTag(t)),
        }
    }
}

/// Reveals the choice behind vote `vid`, signed by the vote's owner.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpeningMessage {
    pub vid: Vid,
    pub opening: OpeningValue,
    pub choice: Choice,
    pub signature: VoterSignature,
}

impl OpeningMessage {
    pub fn signed_message(vid: &Vid, opening: &OpeningValue, choice: &Choice) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.field(OPENING_DOMAIN)
            .field(&vid.0)
            .field(&opening.0)
            .nested(|e| choice.encode(e));
        enc.finish()
    }

    /// Checks the opening against the payload stored under `self.vid`.
    pub fn check_against(&self, payload: &VotePayload) -> OpeningCheck {
        let msg = Self::signed_message(&self.vid, &self.opening, &self.choice);
        if !crypto::verify(payload.voter_pub(), &msg, &self.signature) {
            OpeningCheck::NotOwner
        } else if !crypto::verify_commitment(
            payload.commitment(),
            &self.choice.to_canonical_bytes(),
            &self.opening,
        ) {
            OpeningCheck::BadCommitment
        } else {
            OpeningCheck::Valid
        }
    }
}

impl Canonical for OpeningMessage {
    fn encode(&self, enc: &mut Encoder) {
        enc.field(&self.vid.0)
            .field(&self.opening.0)
            .nested(|e| self.choice.encode(e))
            .field(&self.signature.0);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(Self {
            vid: Vid(dec.fixed()?),
            opening: OpeningValue(dec.fixed()?),
            choice: dec.nested(Choice::decode)?,
            signature: VoterSignature(dec.fixed()?),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpeningCheck {
    Valid,
    /// Signature does not verify under the vote owner's key.
    NotOwner,
    /// Signed by the owner but does not open the stored commitment.
    BadCommitment,
}

pub fn prepare_commitment<R: RngCore + CryptoRng>(
    choice: &Choice,
    num_candidates: usize,
    rng: &mut R,
) -> Result<(Commitment, OpeningValue), BallotError> {
    choice.validate(num_candidates)?;
    let opening = OpeningValue::random(rng);
    Ok((commit(&choice.to_canonical_bytes(), &opening), opening))
}

pub fn build_ballot(
    voter_pub: VoterPublicKey,
    dc: Commitment,
    token: EligibilityToken,
    ca_public: &CaPublicKey,
) -> Result<Ballot, BallotError> {
    if token.subject != crypto::sha256(&[&token_message(&voter_pub, &dc)]) {
        return Err(BallotError::TokenMismatch);
    }
    let ballot = Ballot { voter_pub, dc, token };
    if !ballot.verify_token(ca_public) {
        return Err(BallotError::TokenInvalid);
    }
    Ok(ballot)
}

pub fn build_alteration_ballot<R: RngCore + CryptoRng>(
    voter_keys: &SigningKeyPair,
    cancelled_vid: Vid,
    new_choice: &Choice,
    num_candidates: usize,
    rng: &mut R,
) -> Result<(AlterationBallot, OpeningValue), BallotError> {
    let (dc_new, opening) = prepare_commitment(new_choice, num_candidates, rng)?;
    let voter_pub = voter_keys.public();
    let signature = voter_keys.sign(&AlterationBallot::signed_message(&cancelled_vid, &voter_pub, &dc_new));
    Ok((
        AlterationBallot {
            cancelled_vid,
            voter_pub,
            dc_new,
            signature,
        },
        opening,
    ))
}

pub fn build_opening_message(
    voter_keys: &SigningKeyPair,
    vid: Vid,
    choice: Choice,
    opening: OpeningValue,
) -> OpeningMessage {
    let signature = voter_keys.sign(&OpeningMessage::signed_message(&vid, &opening, &choice));
    OpeningMessage {
        vid,
        opening,
        choice,
        signature,
    }
}

/// True iff the opening is signed by the owner of `msg.vid` and opens its commitment.
pub fn verify_opening(msg: &OpeningMessage, chain: &Chain) -> Result<bool, LedgerError> {
    let entry = chain.get(&msg.vid).ok_or(LedgerError::UnknownVid(msg.vid))?;
    Ok(msg.check_against(&entry.payload) == OpeningCheck::Valid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{blind, blind_sign, generate_voter_keys, unblind, CaKeyPair};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use std::sync::OnceLock;

    fn ca() -> &'static CaKeyPair {
        static KEYS: OnceLock<CaKeyPair> = OnceLock::new();
        KEYS.get_or_init(|| CaKeyPair::from_seed([3; 32], 1024).unwrap())
    }

    fn issue(voter_pub: &VoterPublicKey, dc: &Commitment, rng: &mut ChaCha20Rng) -> EligibilityToken {
        let st = blind(&token_message(voter_pub, dc), ca().public(), rng).unwrap();
        let bs = blind_sign(ca().private(), st.blinded_message()).unwrap();
        EligibilityToken::new(voter_pub, dc, unblind(&bs, &st, ca().public()).unwrap())
    }

    #[test]
    fn prepare_commitment_round_trips_and_checks_bounds() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let choice = Choice::Candidate(0);
        let (dc, o) = prepare_commitment(&choice, 3, &mut rng).unwrap();
        assert!(crypto::verify_commitment(&dc, &choice.to_canonical_bytes(), &o));
        let (dc2, _) = prepare_commitment(&choice, 3, &mut rng).unwrap();
        assert_ne!(dc, dc2);
        assert!(matches!(
            prepare_commitment(&Choice::Candidate(7), 3, &mut rng),
            Err(BallotError::InvalidChoice(_))
        ));
        let long = Choice::Protest("x".repeat(MAX_PROTEST_LEN + 1));
        assert!(prepare_commitment(&long, 3, &mut rng).is_err());
        assert!(prepare_commitment(&Choice::Protest("no".into()), 3, &mut rng).is_ok());
    }

    #[test]
    fn build_ballot_distinguishes_mismatch_from_invalid() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let keys = generate_voter_keys([1; 32]);
        let (dc, _) = prepare_commitment(&Choice::Candidate(1), 3, &mut rng).unwrap();
        let (dc_other, _) = prepare_commitment(&Choice::Candidate(1), 3, &mut rng).unwrap();
        let token = issue(&keys.public(), &dc, &mut rng);
        assert!(build_ballot(keys.public(), dc, token.clone(), ca().public()).is_ok());
        assert_eq!(
            build_ballot(keys.public(), dc_other, token.clone(), ca().public()),
            Err(BallotError::TokenMismatch)
        );
        let mut flipped = token;
        flipped.signature.0[5] ^= 0x01;
        assert_eq!(
            build_ballot(keys.public(), dc, flipped, ca().public()),
            Err(BallotError::TokenInvalid)
        );
    }

    #[test]
    fn alteration_verifies_only_under_owner() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let owner = generate_voter_keys([1; 32]);
        let other = generate_voter_keys([2; 32]);
        let (alt, _) =
            build_alteration_ballot(&owner, Vid::from_u64(22), &Choice::Candidate(1), 3, &mut rng).unwrap();
        assert_eq!(alt.cancelled_vid, Vid::from_u64(22));
        assert!(alt.verify_signature());
        assert!(!alt.verify_under(&other.public()));
        let mut forged = alt.clone();
        forged.cancelled_vid = Vid::from_u64(23);
        assert!(!forged.verify_signature());
        assert!(matches!(
            build_alteration_ballot(&owner, Vid::from_u64(22), &Choice::Candidate(3), 3, &mut rng),
            Err(BallotError::InvalidChoice(_))
        ));
    }

    #[test]
    fn opening_check_classifies_failures() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let owner = generate_voter_keys([1; 32]);
        let other = generate_voter_keys([2; 32]);
        let (alt, o) =
            build_alteration_ballot(&owner, Vid::from_u64(1), &Choice::Candidate(2), 3, &mut rng).unwrap();
        let payload = VotePayload::Alteration(alt);
        let vid = Vid::from_u64(9);
        let honest = build_opening_message(&owner, vid, Choice::Candidate(2), o);
        assert_eq!(honest.check_against(&payload), OpeningCheck::Valid);
        let wrong_choice = build_opening_message(&owner, vid, Choice::Candidate(1), o);
        assert_eq!(wrong_choice.check_against(&payload), OpeningCheck::BadCommitment);
        let wrong_opening = build_opening_message(&owner, vid, Choice::Candidate(2), OpeningValue([0; 32]));
        assert_eq!(wrong_opening.check_against(&payload), OpeningCheck::BadCommitment);
        let stranger = build_opening_message(&other, vid, Choice::Candidate(2), o);
        assert_eq!(stranger.check_against(&payload), OpeningCheck::NotOwner);
    }

    #[test]
    fn text_forms_parse() {
        assert_eq!("3".parse::<Choice>().unwrap(), Choice::Candidate(3));
        assert_eq!(
            "protest:none-of-them".parse::<Choice>().unwrap(),
            Choice::Protest("none-of-them".into())
        );
        assert!("x".parse::<Choice>().is_err());
        assert_eq!("45".parse::<Vid>().unwrap(), Vid::from_u64(45));
        let v = Vid([0xab; 32]);
        assert_eq!(v.to_string().parse::<Vid>().unwrap(), v);
        assert_eq!(Vid::from_u64(45).as_u64(), Some(45));
        assert_eq!(v.as_u64(), None);
    }

    #[test]
    fn payload_encoding_round_trips() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let keys = generate_voter_keys([4; 32]);
        let (dc, o) = prepare_commitment(&Choice::Protest("abc".into()), 2, &mut rng).unwrap();
        let ballot = VotePayload::Ballot(Ballot {
            voter_pub: keys.public(),
            dc,
            token: issue(&keys.public(), &dc, &mut rng),
        });
        assert_eq!(VotePayload::from_canonical_bytes(&ballot.to_canonical_bytes()).unwrap(), ballot);
        let open = build_opening_message(&keys, Vid::from_u64(1), Choice::Protest("abc".into()), o);
        assert_eq!(OpeningMessage::from_canonical_bytes(&open.to_canonical_bytes()).unwrap(), open);
    }
}
