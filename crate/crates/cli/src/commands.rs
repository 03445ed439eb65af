use std::path::Path;

use anyhow::anyhow;
use ballotchain::audit::{self, AuditFailure};
use ballotchain::authority::{CentralAuthority, VoterRegistry};
use ballotchain::engine::{self, run_election, EngineError, PhaseClock, Scenario, TallyResult};
use ballotchain::ledger::LedgerError;
use ballotchain::netsim::{FaultSchedule, SimNetwork, Topology};
use ballotchain::{Chain, ExecMode, Tick, Vid, VotePayload};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::exit::{CmdResult, Failure, OrExit, AUDIT, CONVERGENCE, FAILURE, PARSE, PHASE, UNKNOWN_VID};
use crate::files::{self, ElectionFile, RunManifest};
use crate::Format;

#[allow(clippy::too_many_arguments)]
pub fn init(
    candidates: Vec<String>,
    phase1: Tick,
    phase2: Tick,
    cancel: bool,
    ca_key: &Path,
    seed: u64,
    ca_bits: Option<usize>,
    out: &Path,
) -> CmdResult {
    let key = if ca_key.exists() {
        files::read_ca_key(ca_key).exit(PARSE)?
    } else {
        let key = files::seeded_ca_key(seed, ca_bits).exit(FAILURE)?;
        files::write_ca_key(ca_key, &key).exit(FAILURE)?;
        key
    };
    let election = ElectionFile {
        candidates,
        phase1,
        phase2,
        cancel,
        ca_bits,
    };
    let chain = Chain::new(election.config(&key)).exit(PARSE)?;
    files::write(out, chain.encode_file()).exit(FAILURE)?;
    let c = chain.config();
    println!(
        "genesis={} candidates={} election_end_time={} count_end_time={} cancel_ballots={}",
        hex::encode(chain.genesis().hash),
        c.candidates.join(","),
        c.election_end_time,
        c.count_end_time,
        c.cancel_ballots
    );
    Ok(())
}

pub fn ca_load(passwords: &Path, out: &Path, seed: u64) -> CmdResult {
    let pairs = files::read_text(passwords)
        .and_then(|t| files::parse_passwords(&t))
        .exit(PARSE)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let registry = VoterRegistry::from_passwords(&pairs, &mut rng).exit(PARSE)?;
    files::write(out, registry.to_file_string()).exit(FAILURE)?;
    println!("eligible={}", registry.len());
    Ok(())
}

fn load_ca(registry: &Path, ca_key: &Path, deadline: Tick) -> CmdResult<CentralAuthority> {
    let text = files::read_text(registry).exit(PARSE)?;
    let registry = VoterRegistry::parse_file(&text).exit(PARSE)?;
    let key = files::read_ca_key(ca_key).exit(PARSE)?;
    Ok(CentralAuthority::new(key, registry, deadline))
}

pub fn ca_auth(registry: &Path, ca_key: &Path, identity: &str, credential: &str, now: Tick, deadline: Tick) -> CmdResult {
    let ca = load_ca(registry, ca_key, deadline)?;
    let session = ca.authenticate(identity, credential, now).exit(FAILURE)?;
    let issued = ca.into_registry().get(identity).is_some_and(|e| e.token_issued);
    println!(
        "identity={} expires_at={} token_issued={issued}",
        session.identity(),
        session.expires_at()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn ca_issue(
    registry_path: &Path,
    ca_key: &Path,
    identity: &str,
    credential: &str,
    blinded: &str,
    now: Tick,
    deadline: Tick,
) -> CmdResult {
    let blinded = hex::decode(blinded.trim()).exit(PARSE)?;
    let ca = load_ca(registry_path, ca_key, deadline)?;
    let session = ca.authenticate(identity, credential, now).exit(FAILURE)?;
    let sig = ca.issue_token(session, &blinded, now).exit(FAILURE)?;
    files::write(registry_path, ca.registry_file_string()).exit(FAILURE)?;
    println!("blind_signature={}", hex::encode(sig.0));
    Ok(())
}

pub fn run(manifest_path: &Path, format: Format) -> CmdResult {
    // Everything is read and parsed before the election starts.
    let m = RunManifest::load(manifest_path).exit(PARSE)?;
    let election = ElectionFile::load(&m.config).exit(PARSE)?;
    let registry = files::read_text(&m.registry)
        .and_then(|t| VoterRegistry::parse_file(&t).map_err(Into::into))
        .exit(PARSE)?;
    let scenario = files::read_text(&m.scenario)
        .and_then(|t| Scenario::parse(&t).map_err(|e| anyhow!("{}: {e}", m.scenario.display())))
        .exit(PARSE)?;
    let topology = match &m.topology {
        Some(p) => files::read_text(p)
            .and_then(|t| Topology::parse(&t).map_err(Into::into))
            .exit(PARSE)?,
        None => Topology::single(),
    };
    let faults = match &m.faults {
        Some(p) => files::read_text(p)
            .and_then(|t| FaultSchedule::parse(&t).map_err(Into::into))
            .exit(PARSE)?,
        None => FaultSchedule::none(),
    };
    let key = match &m.ca_key {
        Some(p) => files::read_ca_key(p).exit(PARSE)?,
        None => files::seeded_ca_key(m.seed, election.ca_bits).exit(FAILURE)?,
    };
    let config = election.config(&key);
    config.validate().exit(PARSE)?;

    let ca = CentralAuthority::new(key, registry, config.election_end_time);
    let network = SimNetwork::new(config.clone(), topology, faults, m.seed)
        .exit(PARSE)?
        .with_jitter(m.jitter);
    let outcome = match run_election(&scenario, &ca, network, m.seed) {
        Ok(o) => o,
        Err(e @ EngineError::PhaseViolation { .. }) => return Err(Failure::new(PHASE, e)),
        Err(e) => return Err(Failure::new(FAILURE, e)),
    };

    let out = &m.out;
    let write = |name: &str, bytes: Vec<u8>| files::write(&out.join(name), bytes).exit(FAILURE);
    write("chain.bin", outcome.chain().encode_file())?;
    write("transcript.txt", outcome.transcript.render().into_bytes())?;
    write("tally.txt", outcome.tally.to_kv().into_bytes())?;
    write("openings.txt", files::render_openings(&outcome.openings()).into_bytes())?;
    write("registry.txt", ca.registry_file_string().into_bytes())?;
    let ca_log: String = ca.transcript().iter().map(|r| format!("{r}\n")).collect();
    write("ca-transcript.txt", ca_log.into_bytes())?;

    let converged = outcome.network.converged();
    let nodes = outcome.network.nodes().len();
    match format {
        Format::Kv => {
            println!("nodes={nodes}\nconverged={converged}\ntokens_issued={}", outcome.tokens_issued);
            println!("votes_on_chain={}", outcome.chain().vote_count());
            print!("{}", outcome.tally.to_kv());
        }
        Format::Text => {
            println!(
                "{} nodes, converged: {converged}; {} tokens issued, {} votes on chain",
                nodes,
                outcome.tokens_issued,
                outcome.chain().vote_count()
            );
            print!("{}", outcome.tally.render(&config.candidates));
            println!("artifacts written to {}", out.display());
        }
    }
    if !converged {
        let bad: Vec<String> = outcome.network.divergent_nodes().iter().map(|n| n.to_string()).collect();
        return Err(Failure::new(CONVERGENCE, format!("nodes {} diverge from node 0", bad.join(","))));
    }
    Ok(())
}

fn print_tally(t: &TallyResult, chain: &Chain, format: Format) {
    match format {
        Format::Kv => print!("{}", t.to_kv()),
        Format::Text => print!("{}", t.render(&chain.config().candidates)),
    }
}

pub fn count(chain_path: &Path, openings: &Path, now: Option<Tick>, out: Option<&Path>, format: Format) -> CmdResult {
    let mut chain = files::read_chain(chain_path).exit(PARSE)?;
    let openings = files::read_text(openings)
        .and_then(|t| files::parse_openings(&t))
        .exit(PARSE)?;
    let now = now.unwrap_or(chain.config().count_end_time);
    let clock = PhaseClock::new(chain.config(), now);
    let tally = match engine::count(&mut chain, &openings, &clock, ExecMode::default()) {
        Ok(t) => t,
        Err(e @ LedgerError::ElectionStillOpen { .. }) => return Err(Failure::new(PHASE, e)),
        Err(e) => return Err(Failure::new(FAILURE, e)),
    };
    if let Some(p) = out {
        files::write(p, tally.to_kv()).exit(FAILURE)?;
    }
    print_tally(&tally, &chain, format);
    Ok(())
}

pub fn audit(chain_path: &Path, openings: &Path, tally: Option<&Path>, format: Format) -> CmdResult {
    let chain = files::read_chain(chain_path).exit(PARSE)?;
    let openings = files::read_text(openings)
        .and_then(|t| files::parse_openings(&t))
        .exit(PARSE)?;
    let tally_path = tally.map_or_else(|| chain_path.with_file_name("tally.txt"), Path::to_path_buf);
    let tally_text = files::read_text(&tally_path).exit(PARSE)?;
    let claimed = match TallyResult::from_kv(&tally_text) {
        Ok(t) => t,
        Err(e) => {
            report_failure(format, &[("class", "MalformedTally".into()), ("detail", e.to_string())]);
            return Err(Failure::new(AUDIT, format!("published tally is malformed: {e}")));
        }
    };
    let report = audit::audit(&chain, &openings, &claimed, ExecMode::default());
    match report.first_failure() {
        None => {
            match format {
                Format::Kv => println!("status=ok"),
                Format::Text => println!("audit passed: chain verifies and the recount matches the tally"),
            }
            print_tally(&report.recount, &chain, format);
            Ok(())
        }
        Some(failure) => {
            let fields = match &failure {
                AuditFailure::Chain(v) => {
                    let mut f = vec![("class", v.kind.to_string()), ("height", v.height.to_string())];
                    if let Some(vid) = &v.vid {
                        f.push(("vid", vid.to_string()));
                    }
                    f
                }
                AuditFailure::TallyMismatch(m) => vec![
                    ("class", "TallyMismatch".into()),
                    ("field", m.field.clone()),
                    ("recounted", m.recounted.clone()),
                    ("claimed", m.claimed.clone()),
                ],
            };
            report_failure(format, &fields);
            Err(Failure::new(AUDIT, failure))
        }
    }
}

fn report_failure(format: Format, fields: &[(&str, String)]) {
    match format {
        Format::Kv => {
            println!("status=fail");
            for (k, v) in fields {
                println!("{k}={v}");
            }
        }
        Format::Text => {
            let parts: Vec<String> = fields.iter().map(|(k, v)| format!("{k} {v}")).collect();
            println!("audit failed: {}", parts.join(", "));
        }
    }
}

pub fn challenge(chain_path: &Path, vid: &Vid, tally: Option<&Path>, format: Format) -> CmdResult {
    let chain = files::read_chain(chain_path).exit(PARSE)?;
    let tally = match tally {
        Some(p) => Some(
            files::read_text(p)
                .and_then(|t| TallyResult::from_kv(&t).map_err(Into::into))
                .exit(PARSE)?,
        ),
        None => None,
    };
    let report = match engine::challenge(&chain, vid, tally.as_ref()) {
        Ok(r) => r,
        Err(e @ LedgerError::UnknownVid(_)) => return Err(Failure::new(UNKNOWN_VID, e)),
        Err(e) => return Err(Failure::new(FAILURE, e)),
    };
    match format {
        Format::Kv => println!("{report}"),
        Format::Text => {
            let unsealed = report.unsealed_at.map_or("never".into(), |t| t.to_string());
            println!("vid          {}", report.vid);
            println!("sealed       {}", report.sealed);
            println!("unsealed at  {unsealed}");
            println!("standing     {}", report.standing);
            if let Some(r) = report.reason {
                println!("reason       {r}");
            }
        }
    }
    Ok(())
}

pub fn inspect(chain_path: &Path, format: Format) -> CmdResult {
    let chain = files::read_chain(chain_path).exit(PARSE)?;
    let c = chain.config();
    let sep = if format == Format::Kv { "\n" } else { " " };
    println!(
        "genesis={}{sep}candidates={}{sep}election_end_time={}{sep}count_end_time={}{sep}cancel_ballots={}{sep}height={}",
        hex::encode(chain.genesis().hash),
        c.candidates.join(","),
        c.election_end_time,
        c.count_end_time,
        c.cancel_ballots,
        chain.height()
    );
    for b in chain.blocks() {
        if format == Format::Text {
            println!(
                "block {} hash={} prev={} proposer={} votes={}",
                b.height,
                hex::encode(b.hash),
                hex::encode(b.prev_hash),
                b.proposer,
                b.votes.len()
            );
        }
        for e in &b.votes {
            let owner = hex::encode(e.payload.voter_pub().as_bytes());
            let unsealed = e.seal.unsealed_at().map_or("none".into(), |t| t.to_string());
            let cancels = match &e.payload {
                VotePayload::Alteration(a) => format!(" cancels={}", a.cancelled_vid),
                VotePayload::Ballot(_) => String::new(),
            };
            match format {
                Format::Kv => println!(
                    "height={} vid={} owner={owner} kind={} accepted_at={} sealed={} unsealed_at={unsealed}{cancels}",
                    b.height,
                    e.vid,
                    e.payload.kind(),
                    e.accepted_at,
                    e.seal.is_sealed()
                ),
                Format::Text => println!(
                    "  vid={}, owner={owner}, kind={}, sealed={}{}",
                    e.vid,
                    e.payload.kind(),
                    e.seal.is_sealed(),
                    cancels.replace(' ', ", ")
                ),
            }
        }
    }
    Ok(())
}

pub fn verify(chain_path: &Path, format: Format) -> CmdResult {
    let chain = files::read_chain(chain_path).exit(PARSE)?;
    let report = chain.verify();
    for v in &report.violations {
        match format {
            Format::Kv => {
                let vid = v.vid.map_or("none".into(), |v| v.to_string());
                println!("violation={} height={} vid={vid}", v.kind, v.height);
            }
            Format::Text => println!("{v}"),
        }
    }
    match report.first() {
        None => {
            match format {
                Format::Kv => println!("status=ok\nheight={}\nvotes={}", chain.height(), chain.vote_count()),
                Format::Text => println!("chain ok: {} blocks, {} votes", chain.height(), chain.vote_count()),
            }
            Ok(())
        }
        Some(first) => Err(Failure::new(AUDIT, format!("chain verification failed: {first}"))),
    }
}
