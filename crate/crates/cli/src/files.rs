//! On-disk formats the CLI reads and writes besides the chain file.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use ballotchain::crypto::{sha256, CaKeyPair, DEFAULT_CA_BITS};
use ballotchain::encoding::Canonical;
use ballotchain::{Chain, ElectionConfig, OpeningMessage};
use serde::Deserialize;

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

pub fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

pub fn read_chain(path: &Path) -> Result<Chain> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Chain::decode_file(&bytes).with_context(|| format!("parsing {}", path.display()))
}

/// Election parameters as written in a config file.
///
/// ```toml
/// candidates = ["Alice", "Bob"]
/// phase1 = 100     # voting ticks
/// phase2 = 100     # counting ticks
/// cancel = true
/// ```
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElectionFile {
    pub candidates: Vec<String>,
    pub phase1: u64,
    pub phase2: u64,
    #[serde(default)]
    pub cancel: bool,
    pub ca_bits: Option<usize>,
}

impl ElectionFile {
    pub fn load(path: &Path) -> Result<Self> {
        toml::from_str(&read_text(path)?).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn config(&self, ca: &CaKeyPair) -> ElectionConfig {
        ElectionConfig {
            candidates: self.candidates.clone(),
            ca_public: ca.public().clone(),
            election_end_time: self.phase1,
            count_end_time: self.phase1.saturating_add(self.phase2),
            cancel_ballots: self.cancel,
        }
    }
}

/// Paths are resolved against the manifest's directory.
///
/// ```toml
/// config = "election.toml"
/// registry = "registry.txt"
/// scenario = "scenario.txt"
/// seed = 7
/// out = "out"
/// topology = "topology.txt"   # optional, default one node
/// faults = "faults.txt"       # optional
/// jitter = 0                  # optional extra delivery delay
/// ca_key = "ca.key"           # optional, default derived from seed
/// ```
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub config: PathBuf,
    pub registry: PathBuf,
    pub scenario: PathBuf,
    pub seed: u64,
    pub out: PathBuf,
    pub topology: Option<PathBuf>,
    pub faults: Option<PathBuf>,
    pub jitter: u64,
    pub ca_key: Option<PathBuf>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawManifest {
    config: PathBuf,
    registry: PathBuf,
    scenario: PathBuf,
    seed: u64,
    out: PathBuf,
    topology: Option<PathBuf>,
    faults: Option<PathBuf>,
    #[serde(default)]
    jitter: u64,
    ca_key: Option<PathBuf>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let raw: RawManifest =
            toml::from_str(&read_text(path)?).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let at = |p: PathBuf| base.join(p);
        Ok(Self {
            config: at(raw.config),
            registry: at(raw.registry),
            scenario: at(raw.scenario),
            seed: raw.seed,
            out: at(raw.out),
            topology: raw.topology.map(at),
            faults: raw.faults.map(at),
            jitter: raw.jitter,
            ca_key: raw.ca_key.map(at),
        })
    }
}

pub fn read_ca_key(path: &Path) -> Result<CaKeyPair> {
    let text = read_text(path)?;
    let bytes = hex::decode(text.trim()).with_context(|| format!("{} is not hex", path.display()))?;
    CaKeyPair::from_bytes(&bytes).map_err(|e| anyhow!("{}: {e}", path.display()))
}

pub fn write_ca_key(path: &Path, key: &CaKeyPair) -> Result<()> {
    write(path, hex::encode(key.to_bytes()) + "\n")
}

/// The CA key a run uses when the manifest names none.
pub fn seeded_ca_key(seed: u64, bits: Option<usize>) -> Result<CaKeyPair> {
    let key_seed = sha256(&[b"ballotchain/ca-key/v1", &seed.to_be_bytes()]);
    CaKeyPair::from_seed(key_seed, bits.unwrap_or(DEFAULT_CA_BITS)).map_err(|e| anyhow!("{e}"))
}

/// One hex-encoded opening message per line.
pub fn render_openings(openings: &[OpeningMessage]) -> String {
    let mut out = String::new();
    for o in openings {
        out.push_str(&hex::encode(o.to_canonical_bytes()));
        out.push('\n');
    }
    out
}

pub fn parse_openings(text: &str) -> Result<Vec<OpeningMessage>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bytes = hex::decode(line).with_context(|| format!("openings line {}: not hex", i + 1))?;
        match OpeningMessage::from_canonical_bytes(&bytes) {
            Ok(o) => out.push(o),
            Err(e) => bail!("openings line {}: {e}", i + 1),
        }
    }
    Ok(out)
}

/// `identity password` pairs, one per line.
pub fn parse_passwords(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match line.split_whitespace().collect::<Vec<_>>()[..] {
            [id, pw] => out.push((id.to_string(), pw.to_string())),
            _ => bail!("passwords line {}: expected `identity password`", i + 1),
        }
    }
    Ok(out)
}
