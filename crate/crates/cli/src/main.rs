//! `authcoin` command-line tool.
//!
//! Every invocation reads and writes state only through the files named on
//! the command line. Exit status is 0 on success, 1 when the operation is
//! refused or fails, and 2 on a usage error.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use authcoin::crypto::Digest;
use authcoin::records::Day;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "authcoin", version, about = "Validate and authenticate public keys on a proof-of-work ledger")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Chain file to read and update.
    #[arg(long, global = true, value_name = "FILE")]
    pub chain: Option<PathBuf>,
    /// Keystore holding the acting key pair.
    #[arg(long, global = true, value_name = "FILE")]
    pub keystore: Option<PathBuf>,
    /// Seed for key generation, session nonces and scenarios.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Logical day of the operation; defaults to the chain tip's day.
    #[arg(long, global = true, value_name = "DAY")]
    pub now: Option<Day>,
    #[arg(long, global = true, value_name = "N")]
    pub difficulty: Option<u8>,
    #[arg(long, global = true, value_name = "N", default_value_t = authcoin::keylife::DEFAULT_MIN_BITS)]
    pub min_bits: u32,
    #[arg(long, global = true, value_name = "N")]
    pub prefix_bits: Option<u8>,
    #[arg(long, global = true, value_name = "FLOAT")]
    pub var_rate: Option<f64>,
    /// Scenario configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a key pair into --keystore and print the id it registers under.
    Keygen {
        #[arg(long, default_value_t = 2048)]
        bits: u32,
        #[arg(long, value_enum, default_value_t = Scheme::Toy)]
        scheme: Scheme,
        #[command(flatten)]
        owner: Owner,
    },
    /// Register the key in --keystore on the chain.
    Register {
        #[command(flatten)]
        owner: Owner,
    },
    /// Run a bidirectional validation session with a peer and post it.
    Validate {
        #[command(flatten)]
        session: SessionArgs,
    },
    /// Run a bidirectional authentication session with a peer and post it.
    Authenticate {
        #[command(flatten)]
        session: SessionArgs,
        /// Verdict of the --keystore side on the peer's identity evidence.
        #[arg(long, value_enum, default_value_t = VerdictArg::Accept)]
        verdict: VerdictArg,
    },
    /// Revoke a key; only the key itself may do so.
    RevokeKey {
        /// Defaults to the key in --keystore.
        #[arg(long, value_name = "HEX")]
        key_id: Option<Digest>,
    },
    /// Revoke a signature issued by the key in --keystore.
    RevokeSig {
        #[arg(long, value_name = "HEX")]
        sig_id: Digest,
    },
    /// Find keys registered within the last twelve months.
    Lookup {
        #[arg(long)]
        email: Option<String>,
        #[arg(long)]
        name: Option<String>,
        #[arg(long, value_name = "HEX")]
        key_id: Option<Digest>,
    },
    /// Print the verification history of a key.
    History {
        #[arg(long, value_name = "HEX")]
        key_id: Digest,
    },
    /// Print status and formal checks of a key.
    Status {
        #[arg(long, value_name = "HEX")]
        key_id: Digest,
    },
    /// Mine a block holding the VARs owed for the current tip.
    Mine,
    /// Create or audit a chain file.
    #[command(subcommand)]
    Chain(ChainCommand),
    /// Inspect and fulfil validation and authentication requests.
    #[command(subcommand)]
    Var(VarCommand),
    /// Run scenarios.
    #[command(subcommand)]
    Sim(SimCommand),
    /// Classify every email identifier as alive, dead or unknown.
    ReachReport,
    /// Compare certificate observations from several vantage points.
    CertMonitor {
        /// Lines of `vantage identifier key_id day`.
        #[arg(long, value_name = "FILE")]
        observations: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum ChainCommand {
    /// Write a new chain holding only the genesis block.
    Init,
    /// Audit the chain file; exits 1 and prints the first bad height if invalid.
    Verify,
}

#[derive(Debug, Subcommand)]
pub enum VarCommand {
    List {
        #[arg(long, value_enum)]
        status: Option<VarStatusArg>,
    },
    /// Claim a VAR with --keystore and run its session against the target.
    Fulfil {
        #[arg(long, value_name = "HEX")]
        var_id: Digest,
        /// Keystore of the VAR's target.
        #[arg(long, value_name = "FILE")]
        peer_keystore: PathBuf,
        #[arg(long, value_enum, default_value_t = VerdictArg::Accept)]
        verdict: VerdictArg,
    },
}

#[derive(Debug, Subcommand)]
pub enum SimCommand {
    /// Run the scenario in --config, write the chain to --chain and metrics to --metrics.
    Run {
        #[arg(long, value_name = "FILE")]
        metrics: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct Owner {
    #[arg(long)]
    pub email: String,
    #[arg(long)]
    pub name: String,
    #[arg(long, default_value_t = authcoin::records::MAX_LIFESPAN_DAYS)]
    pub lifespan_days: Day,
}

#[derive(Debug, Args)]
pub struct SessionArgs {
    /// Keystore of the responding party.
    #[arg(long, value_name = "FILE")]
    pub peer_keystore: PathBuf,
    /// Keep the exchange private; no signatures are created.
    #[arg(long)]
    pub opaque: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scheme {
    Toy,
    Standard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VerdictArg {
    Accept,
    Reject,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VarStatusArg {
    Open,
    Fulfilled,
    Failed,
    Expired,
}

/// Marks errors that are the caller's fault rather than the ledger's.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut out = String::new();
    let result = commands::dispatch(&cli, &mut out);
    print!("{out}");
    match result {
        Ok(code) => code,
        Err(e) if e.downcast_ref::<UsageError>().is_some() => {
            eprintln!("error: {e}\n\nRun with --help for usage.");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
