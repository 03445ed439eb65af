//! Cryptographic building blocks: voter signatures, CA blind signatures and
//! hash commitments.

mod blind;
mod commitment;
mod signature;

pub use blind::{
    blind, blind_sign, unblind, verify_ca, BlindSignature, BlindingState, CaKeyPair, CaPrivateKey,
    CaPublicKey, CaSignature, DEFAULT_CA_BITS, MAX_BLIND_MESSAGE_LEN,
};
pub use commitment::{commit, verify_commitment, Commitment, OpeningValue};
pub use signature::{generate_voter_keys, verify, SigningKeyPair, VoterPublicKey, VoterSignature};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CryptoError {
    #[error("message of {len} bytes exceeds the {max}-byte blinding limit")]
    MessageTooLong { len: usize, max: usize },
    #[error("blinded message is malformed for this CA key")]
    MalformedBlindedMessage,
    #[error("unblinded signature does not verify")]
    UnblindFailure,
    #[error("key generation failed: {0}")]
    KeyGeneration(String),
    #[error("malformed key material")]
    MalformedKey,
}

/// A 32-byte SHA-256 digest.
pub type Digest32 = [u8; 32];

/// SHA-256 over the concatenation of `parts`.
pub fn sha256(parts: &[&[u8]]) -> Digest32 {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    h.finalize().into()
}
