//! The central authority: keeps the eligible-voter list, authenticates voters
//! and blind-signs at most one eligibility token per voter.
//!
//! The CA only ever sees `(identity, blinded message)`. Its transcript records
//! exactly that pair, and nothing here maps an identity to a ledger key or
//! commitment.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Mutex;

use rand::{CryptoRng, RngCore};
use thiserror::Error;

use crate::crypto::{blind_sign, sha256, BlindSignature, CaKeyPair, CaPublicKey};
use crate::ledger::Tick;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CaError {
    #[error("{0} is not on the eligible-voter list")]
    NotEligible(String),
    #[error("credential rejected for {0}")]
    BadCredential(String),
    #[error("{0} already received an eligibility token")]
    AlreadyIssued(String),
    #[error("session for {identity} expired at tick {expires_at}")]
    SessionExpired { identity: String, expires_at: Tick },
    #[error("blinded message is malformed")]
    MalformedBlindedMessage,
    #[error("duplicate identity {0}")]
    DuplicateIdentity(String),
    #[error("invalid identity {0:?}: must be non-empty without whitespace")]
    InvalidIdentity(String),
    #[error("registry line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

impl CaError {
    pub fn kind(&self) -> &'static str {
        match self {
            CaError::NotEligible(_) => "NotEligible",
            CaError::BadCredential(_) => "BadCredential",
            CaError::AlreadyIssued(_) => "AlreadyIssued",
            CaError::SessionExpired { .. } => "SessionExpired",
            CaError::MalformedBlindedMessage => "MalformedBlindedMessage",
            CaError::DuplicateIdentity(_) => "DuplicateIdentity",
            CaError::InvalidIdentity(_) => "InvalidIdentity",
            CaError::Parse { .. } => "Parse",
        }
    }
}

/// Decides whether a presented credential matches the stored one.
pub trait CredentialCheck: Send {
    fn check(&self, presented: &str) -> bool;
}

/// Reference credential: `SHA-256(salt || password)` with a 16-byte salt.
#[derive(Clone, PartialEq, Eq)]
pub struct SaltedHash {
    salt: [u8; 16],
    digest: [u8; 32],
}

impl SaltedHash {
    pub fn new<R: RngCore + CryptoRng>(password: &str, rng: &mut R) -> Self {
        let mut salt = [0u8; 16];
        rng.fill_bytes(&mut salt);
        Self {
            digest: sha256(&[&salt, password.as_bytes()]),
            salt,
        }
    }
}

impl CredentialCheck for SaltedHash {
    fn check(&self, presented: &str) -> bool {
        sha256(&[&self.salt, presented.as_bytes()]) == self.digest
    }
}

impl fmt::Display for SaltedHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", hex::encode(self.salt), hex::encode(self.digest))
    }
}

impl fmt::Debug for SaltedHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SaltedHash(..)")
    }
}

impl std::str::FromStr for SaltedHash {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (salt, digest) = s.split_once(':').ok_or("expected salt:digest")?;
        let mut out = Self {
            salt: [0; 16],
            digest: [0; 32],
        };
        hex::decode_to_slice(salt, &mut out.salt).map_err(|e| format!("salt: {e}"))?;
        hex::decode_to_slice(digest, &mut out.digest).map_err(|e| format!("digest: {e}"))?;
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegistryEntry<C> {
    pub credential: C,
    pub token_issued: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegistryReport {
    pub eligible: usize,
    pub issued: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoterRegistry<C = SaltedHash> {
    entries: BTreeMap<String, RegistryEntry<C>>,
}

fn check_identity(identity: &str) -> Result<(), CaError> {
    if identity.is_empty() || identity.contains(char::is_whitespace) {
        return Err(CaError::InvalidIdentity(identity.to_string()));
    }
    Ok(())
}

impl<C: CredentialCheck> VoterRegistry<C> {
    pub fn load(entries: impl IntoIterator<Item = (String, C)>) -> Result<Self, CaError> {
        let mut map = BTreeMap::new();
        for (identity, credential) in entries {
            check_identity(&identity)?;
            if map.contains_key(&identity) {
                return Err(CaError::DuplicateIdentity(identity));
            }
            map.insert(
                identity,
                RegistryEntry {
                    credential,
                    token_issued: false,
                },
            );
        }
        Ok(Self { entries: map })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, identity: &str) -> Option<&RegistryEntry<C>> {
        self.entries.get(identity)
    }

    pub fn report(&self) -> RegistryReport {
        RegistryReport {
            eligible: self.entries.len(),
            issued: self.entries.values().filter(|e| e.token_issued).count(),
        }
    }
}

impl VoterRegistry<SaltedHash> {
    /// Builds a registry from plaintext `(identity, password)` pairs, salting each.
    pub fn from_passwords<R: RngCore + CryptoRng>(
        pairs: &[(String, String)],
        rng: &mut R,
    ) -> Result<Self, CaError> {
        Self::load(
            pairs
                .iter()
                .map(|(id, pw)| (id.clone(), SaltedHash::new(pw, rng)))
                .collect::<Vec<_>>(),
        )
    }

    /// One line per voter: `identity salt:digest issued` with issued as 0 or 1.
    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        for (id, e) in &self.entries {
            out.push_str(&format!("{id} {} {}\n", e.credential, e.token_issued as u8));
        }
        out
    }

    pub fn parse_file(text: &str) -> Result<Self, CaError> {
        let mut entries = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| CaError::Parse { line: line_no, msg };
            let parts: Vec<&str> = line.split_whitespace().collect();
            let [id, cred, issued] = parts[..] else {
                return Err(err("expected `identity salt:digest issued`".into()));
            };
            let credential = cred.parse().map_err(err)?;
            let token_issued = match issued {
                "0" => false,
                "1" => true,
                other => return Err(err(format!("issued flag must be 0 or 1, got {other:?}"))),
            };
            if entries
                .insert(id.to_string(), RegistryEntry { credential, token_issued })
                .is_some()
            {
                return Err(CaError::DuplicateIdentity(id.to_string()));
            }
        }
        Ok(Self { entries })
    }
}

/// Proof of a successful authentication; consumed by [`CentralAuthority::issue_token`].
#[derive(Debug, PartialEq, Eq)]
pub struct AuthSession {
    identity: String,
    expires_at: Tick,
}

impl AuthSession {
    pub fn identity(&self) -> &str {
        &self.identity
    }

    pub fn expires_at(&self) -> Tick {
        self.expires_at
    }
}

/// What the CA remembers about each issuance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IssuanceRecord {
    pub identity: String,
    pub blinded_message: Vec<u8>,
}

impl fmt::Display for IssuanceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "identity={} blinded={}",
            self.identity,
            hex::encode(&self.blinded_message)
        )
    }
}

#[derive(Debug)]
pub struct CentralAuthority<C = SaltedHash> {
    keys: CaKeyPair,
    registry: Mutex<VoterRegistry<C>>,
    transcript: Mutex<Vec<IssuanceRecord>>,
    session_window: Tick,
    session_deadline: Tick,
}

impl<C: CredentialCheck> CentralAuthority<C> {
    /// Sessions never outlive `session_deadline`, normally the end of voting.
    pub fn new(keys: CaKeyPair, registry: VoterRegistry<C>, session_deadline: Tick) -> Self {
        Self {
            keys,
            registry: Mutex::new(registry),
            transcript: Mutex::new(Vec::new()),
            session_window: Tick::MAX,
            session_deadline,
        }
    }

    /// Additionally limits each session to `ticks` after authentication.
    pub fn with_session_window(mut self, ticks: Tick) -> Self {
        self.session_window = ticks;
        self
    }

    pub fn public_key(&self) -> &CaPublicKey {
        self.keys.public()
    }

    pub fn keys(&self) -> &CaKeyPair {
        &self.keys
    }

    pub fn authenticate(&self, identity: &str, credential: &str, now: Tick) -> Result<AuthSession, CaError> {
        let registry = self.registry.lock().unwrap();
        let entry = registry
            .get(identity)
            .ok_or_else(|| CaError::NotEligible(identity.to_string()))?;
        if !entry.credential.check(credential) {
            return Err(CaError::BadCredential(identity.to_string()));
        }
        Ok(AuthSession {
            identity: identity.to_string(),
            expires_at: now.saturating_add(self.session_window).min(self.session_deadline),
        })
    }

    /// Blind-signs `blinded_message` and marks the voter as issued, as one
    /// step under the registry lock.
    pub fn issue_token(
        &self,
        session: AuthSession,
        blinded_message: &[u8],
        now: Tick,
    ) -> Result<BlindSignature, CaError> {
        if now >= session.expires_at {
            return Err(CaError::SessionExpired {
                identity: session.identity,
                expires_at: session.expires_at,
            });
        }
        let mut registry = self.registry.lock().unwrap();
        let entry = registry
            .entries
            .get_mut(&session.identity)
            .ok_or_else(|| CaError::NotEligible(session.identity.clone()))?;
        if entry.token_issued {
            return Err(CaError::AlreadyIssued(session.identity));
        }
        let sig = blind_sign(self.keys.private(), blinded_message).map_err(|_| CaError::MalformedBlindedMessage)?;
        entry.token_issued = true;
        self.transcript.lock().unwrap().push(IssuanceRecord {
            identity: session.identity,
            blinded_message: blinded_message.to_vec(),
        });
        Ok(sig)
    }

    pub fn registry_report(&self) -> RegistryReport {
        self.registry.lock().unwrap().report()
    }

    pub fn transcript(&self) -> Vec<IssuanceRecord> {
        self.transcript.lock().unwrap().clone()
    }

    pub fn into_registry(self) -> VoterRegistry<C> {
        self.registry.into_inner().unwrap()
    }
}

impl CentralAuthority<SaltedHash> {
    pub fn registry_file_string(&self) -> String {
        self.registry.lock().unwrap().to_file_string()
    }
}
