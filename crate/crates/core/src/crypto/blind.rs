//! Chaum blind signatures over RSA with a full-domain hash.
//!
//! The CA signs `FDH(m)^d mod n` without seeing `m`: the client sends
//! `FDH(m) * r^e mod n`, the CA raises it to `d`, and the client multiplies
//! the result by `r^-1`. Unblinded signatures are plain deterministic RSA-FDH
//! signatures, identical to what the CA would produce over `m` directly.

use std::fmt;

use num_bigint_dig::{BigUint, ModInverse};
use rand::{CryptoRng, RngCore};
use rsa::traits::{PrivateKeyParts, PublicKeyParts};

use super::CryptoError;
use crate::encoding::{Canonical, DecodeError, Decoder, Encoder};

pub const DEFAULT_CA_BITS: usize = 2048;

/// Upper bound on the length of a message accepted by [`blind`].
pub const MAX_BLIND_MESSAGE_LEN: usize = 1024;

const FDH_DOMAIN: &[u8] = b"ballotchain/fdh/v1";

#[derive(Clone, PartialEq, Eq)]
pub struct CaPublicKey {
    n: BigUint,
    e: BigUint,
}

impl CaPublicKey {
    pub fn modulus(&self) -> &BigUint {
        &self.n
    }

    pub fn exponent(&self) -> &BigUint {
        &self.e
    }

    /// Byte length of the modulus; every blinded message and signature has this length.
    pub fn size(&self) -> usize {
        self.n.bits().div_ceil(8)
    }

    pub fn bits(&self) -> usize {
        self.n.bits()
    }

    fn to_fixed(&self, v: &BigUint) -> Vec<u8> {
        let raw = v.to_bytes_be();
        let mut out = vec![0u8; self.size() - raw.len()];
        out.extend_from_slice(&raw);
        out
    }

    /// Parses a fixed-length big-endian residue strictly below the modulus.
    fn parse_residue(&self, bytes: &[u8]) -> Option<BigUint> {
        if bytes.len() != self.size() {
            return None;
        }
        let v = BigUint::from_bytes_be(bytes);
        (v < self.n).then_some(v)
    }

    fn full_domain_hash(&self, message: &[u8]) -> BigUint {
        let k = self.size();
        let mut out = Vec::with_capacity(k + 32);
        let mut counter = 0u32;
        while out.len() < k {
            out.extend_from_slice(&super::sha256(&[
                FDH_DOMAIN,
                &counter.to_be_bytes(),
                message,
            ]));
            counter += 1;
        }
        out.truncate(k);
        BigUint::from_bytes_be(&out) % &self.n
    }
}

impl fmt::Debug for CaPublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CaPublicKey({} bits)", self.bits())
    }
}

impl Canonical for CaPublicKey {
    fn encode(&self, enc: &mut Encoder) {
        enc.field(&self.n.to_bytes_be()).field(&self.e.to_bytes_be());
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let n = BigUint::from_bytes_be(dec.field()?);
        let e = BigUint::from_bytes_be(dec.field()?);
        if n.bits() < 64 || e < BigUint::from(3u8) {
            return Err(DecodeError::Invalid("CA public key"));
        }
        Ok(Self { n, e })
    }
}

/// CA blind-signing key with CRT parameters.
#[derive(Clone)]
pub struct CaPrivateKey {
    public: CaPublicKey,
    d: BigUint,
    p: BigUint,
    q: BigUint,
    dp: BigUint,
    dq: BigUint,
    qinv: BigUint,
}

impl CaPrivateKey {
    fn from_parts(n: BigUint, e: BigUint, d: BigUint, p: BigUint, q: BigUint) -> Result<Self, CryptoError> {
        let one = BigUint::from(1u8);
        if p <= one || q <= one || &p * &q != n {
            return Err(CryptoError::MalformedKey);
        }
        let qinv = (&q)
            .mod_inverse(&p)
            .and_then(|v| v.to_biguint())
            .ok_or(CryptoError::MalformedKey)?;
        let key = Self {
            dp: &d % (&p - &one),
            dq: &d % (&q - &one),
            qinv,
            public: CaPublicKey { n, e },
            d,
            p,
            q,
        };
        // Sanity check that d inverts e.
        let probe = BigUint::from(2u8);
        if key.raw_sign(&probe).modpow(&key.public.e, &key.public.n) != probe {
            return Err(CryptoError::MalformedKey);
        }
        Ok(key)
    }

    pub fn public(&self) -> &CaPublicKey {
        &self.public
    }

    pub fn private_exponent(&self) -> &BigUint {
        &self.d
    }

    /// `c^d mod n` via the Chinese remainder theorem.
    fn raw_sign(&self, c: &BigUint) -> BigUint {
        let m1 = c.modpow(&self.dp, &self.p);
        let m2 = c.modpow(&self.dq, &self.q);
        let diff = (&m1 + &self.p - (&m2 % &self.p)) % &self.p;
        let h = (&self.qinv * diff) % &self.p;
        m2 + h * &self.q
    }
}

impl fmt::Debug for CaPrivateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CaPrivateKey")
            .field("public", &self.public)
            .finish_non_exhaustive()
    }
}

impl Canonical for CaPrivateKey {
    fn encode(&self, enc: &mut Encoder) {
        enc.field(&self.public.n.to_bytes_be())
            .field(&self.public.e.to_bytes_be())
            .field(&self.d.to_bytes_be())
            .field(&self.p.to_bytes_be())
            .field(&self.q.to_bytes_be());
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let mut next = || dec.field().map(BigUint::from_bytes_be);
        let (n, e, d, p, q) = (next()?, next()?, next()?, next()?, next()?);
        Self::from_parts(n, e, d, p, q).map_err(|_| DecodeError::Invalid("CA private key"))
    }
}

#[derive(Clone, Debug)]
pub struct CaKeyPair {
    private: CaPrivateKey,
}

impl CaKeyPair {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R, bits: usize) -> Result<Self, CryptoError> {
        let key = rsa::RsaPrivateKey::new(rng, bits)
            .map_err(|e| CryptoError::KeyGeneration(e.to_string()))?;
        let [p, q] = key.primes() else {
            return Err(CryptoError::KeyGeneration("expected two primes".into()));
        };
        let private = CaPrivateKey::from_parts(
            key.n().clone(),
            key.e().clone(),
            key.d().clone(),
            p.clone(),
            q.clone(),
        )?;
        Ok(Self { private })
    }

    /// Deterministic key generation for reproducible runs.
    pub fn from_seed(seed: [u8; 32], bits: usize) -> Result<Self, CryptoError> {
        use rand::SeedableRng;
        Self::generate(&mut rand_chacha::ChaCha20Rng::from_seed(seed), bits)
    }

    pub fn public(&self) -> &CaPublicKey {
        &self.private.public
    }

    pub fn private(&self) -> &CaPrivateKey {
        &self.private
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.private.to_canonical_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        CaPrivateKey::from_canonical_bytes(bytes)
            .map(|private| Self { private })
            .map_err(|_| CryptoError::MalformedKey)
    }
}

/// An ordinary (unblinded) CA signature: a fixed-length residue mod `n`.
#[derive(Clone, PartialEq, Eq)]
pub struct CaSignature(pub Vec<u8>);

impl fmt::Debug for CaSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let head = &self.0[..self.0.len().min(8)];
        write!(f, "CaSignature({}..)", hex::encode(head))
    }
}

/// CA output over a blinded message; meaningless until unblinded.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct BlindSignature(pub Vec<u8>);

/// Client-side state between [`blind`] and [`unblind`]. Never leaves the client.
#[derive(Clone)]
pub struct BlindingState {
    message: Vec<u8>,
    blinded_message: Vec<u8>,
    unblinding_factor: BigUint,
}

impl BlindingState {
    pub fn blinded_message(&self) -> &[u8] {
        &self.blinded_message
    }

    pub fn message(&self) -> &[u8] {
        &self.message
    }
}

impl fmt::Debug for BlindingState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BlindingState")
            .field("blinded_message", &hex::encode(&self.blinded_message[..8]))
            .finish_non_exhaustive()
    }
}

pub fn blind<R: RngCore + CryptoRng>(
    message: &[u8],
    ca_public: &CaPublicKey,
    rng: &mut R,
) -> Result<BlindingState, CryptoError> {
    if message.len() > MAX_BLIND_MESSAGE_LEN {
        return Err(CryptoError::MessageTooLong {
            len: message.len(),
            max: MAX_BLIND_MESSAGE_LEN,
        });
    }
    let n = &ca_public.n;
    let one = BigUint::from(1u8);
    let mut buf = vec![0u8; ca_public.size()];
    let (r, r_inv) = loop {
        rng.fill_bytes(&mut buf);
        let r = BigUint::from_bytes_be(&buf) % n;
        if r <= one {
            continue;
        }
        if let Some(inv) = (&r).mod_inverse(n).and_then(|v| v.to_biguint()) {
            break (r, inv);
        }
    };
    let blinded = (ca_public.full_domain_hash(message) * r.modpow(&ca_public.e, n)) % n;
    Ok(BlindingState {
        message: message.to_vec(),
        blinded_message: ca_public.to_fixed(&blinded),
        unblinding_factor: r_inv,
    })
}

pub fn blind_sign(ca_private: &CaPrivateKey, blinded_message: &[u8]) -> Result<BlindSignature, CryptoError> {
    let public = &ca_private.public;
    let c = public
        .parse_residue(blinded_message)
        .filter(|c| *c != BigUint::from(0u8))
        .ok_or(CryptoError::MalformedBlindedMessage)?;
    let s = ca_private.raw_sign(&c);
    Ok(BlindSignature(public.to_fixed(&s)))
}

pub fn unblind(
    blind_sig: &BlindSignature,
    state: &BlindingState,
    ca_public: &CaPublicKey,
) -> Result<CaSignature, CryptoError> {
    let s_blind = ca_public
        .parse_residue(&blind_sig.0)
        .ok_or(CryptoError::UnblindFailure)?;
    let s = (s_blind * &state.unblinding_factor) % &ca_public.n;
    let sig = CaSignature(ca_public.to_fixed(&s));
    if verify_ca(ca_public, &state.message, &sig) {
        Ok(sig)
    } else {
        Err(CryptoError::UnblindFailure)
    }
}

pub fn verify_ca(ca_public: &CaPublicKey, message: &[u8], signature: &CaSignature) -> bool {
    match ca_public.parse_residue(&signature.0) {
        Some(s) => s.modpow(&ca_public.e, &ca_public.n) == ca_public.full_domain_hash(message),
        None => false,
    }
}
