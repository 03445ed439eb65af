use std::fmt;

use ed25519_dalek::{Signer, SigningKey, VerifyingKey};
use rand::{CryptoRng, RngCore};

/// A voter's 32-byte verification key. Doubles as the voter's pseudonym on the ledger.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VoterPublicKey(pub [u8; 32]);

impl VoterPublicKey {
    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }
}

impl fmt::Debug for VoterPublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "VoterPublicKey({})", hex::encode(&self.0[..8]))
    }
}

impl fmt::Display for VoterPublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub struct VoterSignature(pub [u8; 64]);

impl fmt::Debug for VoterSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "VoterSignature({}..)", hex::encode(&self.0[..8]))
    }
}

/// Ed25519 key pair held by a voter's client.
#[derive(Clone)]
pub struct SigningKeyPair {
    signing: SigningKey,
}

impl SigningKeyPair {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        Self {
            signing: SigningKey::generate(rng),
        }
    }

    pub fn from_seed(seed: [u8; 32]) -> Self {
        Self {
            signing: SigningKey::from_bytes(&seed),
        }
    }

    pub fn public(&self) -> VoterPublicKey {
        VoterPublicKey(self.signing.verifying_key().to_bytes())
    }

    pub fn sign(&self, message: &[u8]) -> VoterSignature {
        VoterSignature(self.signing.sign(message).to_bytes())
    }
}

impl fmt::Debug for SigningKeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SigningKeyPair")
            .field("public", &self.public())
            .finish_non_exhaustive()
    }
}

/// Deterministic key generation for reproducible runs.
pub fn generate_voter_keys(seed: [u8; 32]) -> SigningKeyPair {
    SigningKeyPair::from_seed(seed)
}

pub fn verify(public: &VoterPublicKey, message: &[u8], signature: &VoterSignature) -> bool {
    let Ok(key) = VerifyingKey::from_bytes(&public.0) else {
        return false;
    };
    let sig = ed25519_dalek::Signature::from_bytes(&signature.0);
    key.verify_strict(message, &sig).is_ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_generation_is_deterministic_per_seed() {
        let a = generate_voter_keys([1; 32]);
        let b = generate_voter_keys([1; 32]);
        let c = generate_voter_keys([2; 32]);
        assert_eq!(a.public(), b.public());
        assert_ne!(a.public(), c.public());
    }

    #[test]
    fn sign_verify_round_trip_and_rejections() {
        let k1 = generate_voter_keys([1; 32]);
        let k2 = generate_voter_keys([2; 32]);
        let sig = k1.sign(b"abc");
        assert!(verify(&k1.public(), b"abc", &sig));
        assert!(!verify(&k2.public(), b"abc", &sig));
        assert!(!verify(&k1.public(), b"abd", &sig));
        let mut bad = sig;
        bad.0[10] ^= 1;
        assert!(!verify(&k1.public(), b"abc", &bad));
    }

    #[test]
    fn garbage_public_key_does_not_verify() {
        let k1 = generate_voter_keys([1; 32]);
        let sig = k1.sign(b"m");
        assert!(!verify(&VoterPublicKey([0xff; 32]), b"m", &sig));
    }
}
