use std::fmt;

use rand::{CryptoRng, RngCore};

use super::sha256;

/// Hash commitment `SHA-256(len(choice) || choice || opening)`, with a 4-byte
/// big-endian length.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Commitment(pub [u8; 32]);

impl fmt::Debug for Commitment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Commitment({})", hex::encode(&self.0[..8]))
    }
}

/// Secret opening value. Kept by the voter until the counting phase.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct OpeningValue(pub [u8; 32]);

impl OpeningValue {
    pub fn random<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut bytes = [0u8; 32];
        rng.fill_bytes(&mut bytes);
        Self(bytes)
    }
}

impl fmt::Debug for OpeningValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("OpeningValue(..)")
    }
}

/// `choice` is the canonical choice encoding.
pub fn commit(choice: &[u8], opening: &OpeningValue) -> Commitment {
    let len = u32::try_from(choice.len()).expect("choice encoding too long");
    Commitment(sha256(&[&len.to_be_bytes(), choice, &opening.0]))
}

pub fn verify_commitment(dc: &Commitment, choice: &[u8], opening: &OpeningValue) -> bool {
    commit(choice, opening) == *dc
}
