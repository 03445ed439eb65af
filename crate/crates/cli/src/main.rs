mod commands;
mod exit;
mod files;

use std::path::PathBuf;
use std::process::ExitCode;

use ballotchain::{Tick, Vid};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "ballotchain", version, about = "Blind-token election ledger: run, count, audit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Default, PartialEq, Eq, ValueEnum)]
pub enum Format {
    #[default]
    Text,
    Kv,
}

#[derive(Args)]
struct FormatArg {
    #[arg(long, value_enum, default_value_t)]
    format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// Create a chain file holding only the genesis block.
    Init(InitArgs),
    /// Operate the central authority.
    #[command(subcommand)]
    Ca(CaCommand),
    /// Run a scripted election from a manifest and write its artifacts.
    Run {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        format: FormatArg,
    },
    /// Count a chain against a set of openings.
    Count {
        #[arg(long)]
        chain: PathBuf,
        #[arg(long)]
        openings: PathBuf,
        /// Counting time; defaults to the chain's count end time.
        #[arg(long)]
        now: Option<Tick>,
        /// Also write the tally here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        format: FormatArg,
    },
    /// Verify a chain and recount it against a published tally.
    Audit {
        #[arg(long)]
        chain: PathBuf,
        #[arg(long)]
        openings: PathBuf,
        /// Defaults to tally.txt beside the chain file.
        #[arg(long)]
        tally: Option<PathBuf>,
        #[command(flatten)]
        format: FormatArg,
    },
    /// Show the seal state and standing of one vote.
    Challenge {
        #[arg(long)]
        chain: PathBuf,
        #[arg(long, value_parser = parse_vid)]
        vid: Vid,
        #[arg(long)]
        tally: Option<PathBuf>,
        #[command(flatten)]
        format: FormatArg,
    },
    #[command(subcommand)]
    Chain(ChainCommand),
}

#[derive(Args)]
struct InitArgs {
    /// Comma-separated candidate names.
    #[arg(long, value_delimiter = ',', required = true)]
    candidates: Vec<String>,
    /// Length of the voting phase in ticks.
    #[arg(long)]
    phase1: Tick,
    /// Length of the counting phase in ticks.
    #[arg(long)]
    phase2: Tick,
    /// Allow alteration ballots.
    #[arg(long)]
    cancel: bool,
    /// CA key file; created from --seed if missing.
    #[arg(long)]
    ca_key: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    ca_bits: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum CaCommand {
    /// Build a salted registry from `identity password` lines.
    Load {
        #[arg(long)]
        passwords: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Check a credential and report the session it would open.
    Auth {
        #[arg(long)]
        registry: PathBuf,
        #[arg(long)]
        ca_key: PathBuf,
        #[arg(long)]
        identity: String,
        #[arg(long)]
        credential: String,
        #[arg(long, default_value_t = 0)]
        now: Tick,
        /// Sessions never outlive this tick.
        #[arg(long, default_value_t = Tick::MAX)]
        deadline: Tick,
    },
    /// Blind-sign a message for an authenticated voter and record the issuance.
    Issue {
        #[arg(long)]
        registry: PathBuf,
        #[arg(long)]
        ca_key: PathBuf,
        #[arg(long)]
        identity: String,
        #[arg(long)]
        credential: String,
        /// Hex-encoded blinded message.
        #[arg(long)]
        blinded: String,
        #[arg(long, default_value_t = 0)]
        now: Tick,
        #[arg(long, default_value_t = Tick::MAX)]
        deadline: Tick,
    },
}

#[derive(Subcommand)]
enum ChainCommand {
    /// Print the genesis parameters and every vote.
    Inspect {
        #[arg(long)]
        chain: PathBuf,
        #[command(flatten)]
        format: FormatArg,
    },
    /// Check hashes, links, tokens and signatures.
    Verify {
        #[arg(long)]
        chain: PathBuf,
        #[command(flatten)]
        format: FormatArg,
    },
}

fn parse_vid(s: &str) -> Result<Vid, String> {
    s.parse()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Init(a) => commands::init(a.candidates, a.phase1, a.phase2, a.cancel, &a.ca_key, a.seed, a.ca_bits, &a.out),
        Command::Ca(CaCommand::Load { passwords, out, seed }) => commands::ca_load(&passwords, &out, seed),
        Command::Ca(CaCommand::Auth {
            registry,
            ca_key,
            identity,
            credential,
            now,
            deadline,
        }) => commands::ca_auth(&registry, &ca_key, &identity, &credential, now, deadline),
        Command::Ca(CaCommand::Issue {
            registry,
            ca_key,
            identity,
            credential,
            blinded,
            now,
            deadline,
        }) => commands::ca_issue(&registry, &ca_key, &identity, &credential, &blinded, now, deadline),
        Command::Run { manifest, format } => commands::run(&manifest, format.format),
        Command::Count {
            chain,
            openings,
            now,
            out,
            format,
        } => commands::count(&chain, &openings, now, out.as_deref(), format.format),
        Command::Audit {
            chain,
            openings,
            tally,
            format,
        } => commands::audit(&chain, &openings, tally.as_deref(), format.format),
        Command::Challenge {
            chain,
            vid,
            tally,
            format,
        } => commands::challenge(&chain, &vid, tally.as_deref(), format.format),
        Command::Chain(ChainCommand::Inspect { chain, format }) => commands::inspect(&chain, format.format),
        Command::Chain(ChainCommand::Verify { chain, format }) => commands::verify(&chain, format.format),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
