use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use secagg::crypto::GroupId;
use secagg::harness::{
    emit_csv, run_protocol, survivor_sum, sweep, trial_inputs, BenchOutcome, DropoutSchedule, Outcome, SweepGrid,
};
use secagg::protocol::ProtocolConfig;
use secagg::ring::RingModulus;

const EXIT_USAGE: u8 = 1;
const EXIT_ABORT: u8 = 2;

/// Secure aggregation simulator.
///
/// The key-agreement group comes from SECAGG_GROUP (test or prod, default prod).
#[derive(Debug, Parser)]
#[command(name = "secagg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sweep a parameter grid and write one CSV row per trial.
    Bench(BenchArgs),
    /// Run the protocol once and print the aggregate.
    Run(RunArgs),
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Comma-separated user counts.
    #[arg(long, value_delimiter = ',', default_values_t = [10, 20, 40])]
    users: Vec<usize>,
    /// Comma-separated vector lengths.
    #[arg(long, value_delimiter = ',', default_values_t = [100, 1000])]
    veclen: Vec<usize>,
    /// Threshold as a fraction of n, rounded up; defaults to a strict majority.
    #[arg(long)]
    threshold_frac: Option<f64>,
    /// Comma-separated fractions of users that drop before sending masked input.
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.1, 0.3])]
    dropout_frac: Vec<f64>,
    #[arg(long, default_value_t = 3)]
    trials: usize,
    /// Up to 32 hex digits.
    #[arg(long, value_parser = parse_seed, default_value = "0")]
    seed: [u8; 16],
    #[arg(long, default_value_t = 32)]
    modulus_bits: u32,
    #[arg(long)]
    out: std::path::PathBuf,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    users: usize,
    #[arg(long)]
    veclen: usize,
    /// Defaults to floor(n/2) + 1.
    #[arg(long)]
    threshold: Option<usize>,
    /// Dropout schedule such as "2:2,4:3" (user id : first silent round).
    #[arg(long, default_value = "")]
    drop: String,
    /// Up to 32 hex digits.
    #[arg(long, value_parser = parse_seed, default_value = "0")]
    seed: [u8; 16],
    #[arg(long, default_value_t = 32)]
    modulus_bits: u32,
}

fn parse_seed(s: &str) -> Result<[u8; 16], String> {
    let digits = s.strip_prefix("0x").unwrap_or(s);
    if digits.is_empty() || digits.len() > 32 {
        return Err(format!("expected 1 to 32 hex digits, got {}", digits.len()));
    }
    u128::from_str_radix(digits, 16).map(u128::to_be_bytes).map_err(|e| format!("{s:?}: {e}"))
}

fn bench(args: BenchArgs, group: GroupId) -> Result<ExitCode, String> {
    let grid = SweepGrid {
        users: args.users,
        veclens: args.veclen,
        dropout_fracs: args.dropout_frac,
        threshold_frac: args.threshold_frac,
        trials: args.trials,
        seed: args.seed,
        ring: RingModulus::new(args.modulus_bits).map_err(|e| e.to_string())?,
        group,
    };
    let records = sweep(&grid).map_err(|e| e.to_string())?;
    emit_csv(&records, &args.out).map_err(|e| e.to_string())?;
    let aborted = records.iter().filter(|r| r.outcome == BenchOutcome::Abort).count();
    println!("wrote {} records to {} ({aborted} aborted)", records.len(), args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn run(args: RunArgs, group: GroupId) -> Result<ExitCode, String> {
    let t = args.threshold.unwrap_or_else(|| ProtocolConfig::default_threshold(args.users));
    let config = ProtocolConfig::new(args.users, t, args.veclen)
        .map_err(|e| e.to_string())?
        .with_ring(RingModulus::new(args.modulus_bits).map_err(|e| e.to_string())?)
        .with_group(group)
        .with_master_seed(args.seed);
    let schedule: DropoutSchedule = args.drop.parse().map_err(|e: secagg::harness::HarnessError| e.to_string())?;
    let inputs = trial_inputs(&config);
    let transcript = run_protocol(&config, &inputs, &schedule).map_err(|e| e.to_string())?;

    println!(
        "n={} K={} t={} bits={} group={} seed={:032x}",
        config.n,
        config.len,
        config.t,
        config.ring.bits(),
        config.group,
        u128::from_be_bytes(config.master_seed)
    );
    for (i, set) in transcript.participants.iter().enumerate().skip(1) {
        println!("U{i}: {set:?}");
    }
    if !schedule.is_empty() {
        println!("dropouts: {schedule}");
    }
    let clients: Vec<u64> = transcript.user_bytes().map(|(_, c)| c.total()).collect();
    let server = transcript.server_bytes();
    println!(
        "messages: {}  server bytes: {} sent, {} received  client bytes: max {}, total {}",
        transcript.messages.len(),
        server.sent,
        server.received,
        clients.iter().max().copied().unwrap_or(0),
        clients.iter().sum::<u64>()
    );
    println!("transcript: {}", transcript.fingerprint());
    match &transcript.outcome {
        Outcome::Aggregate(z) => {
            let matches = *z == survivor_sum(&config, &inputs, transcript.survivors());
            println!("matches survivor sum: {}", if matches { "yes" } else { "NO" });
            println!("aggregate: {}", format_entries(z.entries()));
            Ok(ExitCode::SUCCESS)
        }
        Outcome::Aborted(e) => {
            println!("abort: {e}");
            Ok(ExitCode::from(EXIT_ABORT))
        }
    }
}

fn format_entries(entries: &[u64]) -> String {
    const SHOWN: usize = 16;
    let head: Vec<String> = entries.iter().take(SHOWN).map(u64::to_string).collect();
    if entries.len() > SHOWN {
        format!("[{}, ...] ({} entries)", head.join(", "), entries.len())
    } else {
        format!("[{}]", head.join(", "))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(EXIT_USAGE);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    let result = GroupId::from_env().map_err(|e| e.to_string()).and_then(|group| match cli.command {
        Command::Bench(args) => bench(args, group),
        Command::Run(args) => run(args, group),
    });
    match result {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}
