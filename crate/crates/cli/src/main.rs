mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use thiserror::Error;

use seigen::adversary::{evaluate, AttackError, AttackKind, Scenario};
use seigen::bench::{bench_run, CSV_HEADER};
use seigen::linalg::{jacobi_eigen_oracle, pad_matrix, DenseMatrix};
use seigen::paillier::{keygen, KeyPair, DEFAULT_KEY_BITS};
use seigen::protocol::{plan_codec, run_protocol, ProtocolError};
use seigen::rng::{stream_rng, Stream};
use seigen::synth::generate;
use seigen::transport::{account, Bus, Transcript};

use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("attack failed: {0}")]
    Attack(#[from] AttackError),
    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Protocol(e) => e.exit_code() as u8,
            _ => 3,
        }
    }
}

fn io_err(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
    let context = context.into();
    move |source| CliError::Io { context, source }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(format!("cannot create {}", dir.display())))?;
    }
    fs::write(path, bytes).map_err(io_err(format!("cannot write {}", path.display())))
}

#[derive(Debug, Parser)]
#[command(name = "seigen", version, about = "Multi-party principal eigenvector computation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a Paillier key pair.
    Keygen {
        #[arg(long, default_value_t = DEFAULT_KEY_BITS)]
        bits: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Generate synthetic party data with a prescribed eigenvalue gap.
    Gendata {
        #[arg(long)]
        k: usize,
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
        #[arg(long)]
        gap: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Run the protocol and print run statistics.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Report the cosine against an eigensolver on the joint data.
        #[arg(long)]
        oracle: bool,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Replay inference attacks from one party's view of a transcript.
    Attack {
        #[arg(long)]
        transcript: PathBuf,
        #[arg(long)]
        party: u16,
        /// Mode label for the report; defaults to the configured mode.
        #[arg(long)]
        mode: Option<String>,
        /// colspace, nullspace, krylov, outlier or all.
        #[arg(long, default_value = "all")]
        attack: String,
        /// Run configuration holding the data and keys used for scoring.
        #[arg(long)]
        config: PathBuf,
    },
    /// Benchmark per-round costs as CSV.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1)]
        repeats: u32,
        #[arg(long)]
        seed: Option<u64>,
    },
}

/// `SEIGEN_SEED` wins over the flag when set.
fn effective_seed(flag: Option<u64>) -> Result<Option<u64>, CliError> {
    match std::env::var("SEIGEN_SEED") {
        Ok(v) => v.trim().parse().map(Some).map_err(|e| CliError::Config(format!("SEIGEN_SEED: {e}"))),
        Err(_) => Ok(flag),
    }
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = effective_seed(seed)? {
        cfg.protocol.seed = seed;
    }
    Ok(cfg)
}

fn datasets(cfg: &RunConfig) -> Result<Vec<DenseMatrix>, CliError> {
    if cfg.data.is_empty() {
        let data = generate(cfg.k, &cfg.sizes, cfg.gap, cfg.protocol.seed)
            .map_err(|e| CliError::Config(format!("cannot synthesize data: {e}")))?;
        return Ok(data.parts);
    }
    cfg.data
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            DenseMatrix::from_text(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))
        })
        .collect()
}

fn keys(cfg: &RunConfig) -> Result<Option<KeyPair>, CliError> {
    if !cfg.protocol.encryption {
        return Ok(None);
    }
    match &cfg.key {
        Some(path) => {
            let bytes = fs::read(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            KeyPair::from_bytes(&bytes).map(Some).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
        }
        None => keygen(cfg.key_bits, &mut stream_rng(cfg.protocol.seed, Stream::KeyGen))
            .map(Some)
            .map_err(|e| CliError::Config(e.to_string())),
    }
}

fn padded(cfg: &RunConfig, data: &[DenseMatrix]) -> Result<Vec<DenseMatrix>, CliError> {
    match &cfg.protocol.padding {
        Some(pads) => data
            .iter()
            .zip(pads)
            .map(|(m, &r)| pad_matrix(m, r).map_err(|e| CliError::Config(e.to_string())))
            .collect(),
        None => Ok(data.to_vec()),
    }
}

fn cmd_keygen(bits: u64, out: &Path, seed: Option<u64>) -> Result<String, CliError> {
    if bits < 256 {
        return Err(CliError::Config(format!("key size {bits} is below 256 bits")));
    }
    let seed = effective_seed(seed)?.unwrap_or_else(rand::random);
    let pair = keygen(bits, &mut stream_rng(seed, Stream::KeyGen)).map_err(|e| CliError::Config(e.to_string()))?;
    write_file(out, &pair.to_bytes())?;
    Ok(format!("bits={}\nkey_id={}\nout={}\n", pair.public.bits(), pair.public.key_id(), out.display()))
}

fn cmd_gendata(k: usize, sizes: &[usize], gap: f64, seed: u64, out_dir: &Path) -> Result<String, CliError> {
    if !(gap > 0.0 && gap < 1.0) {
        return Err(CliError::Config(format!("gap {gap} outside (0, 1)")));
    }
    let seed = effective_seed(Some(seed))?.unwrap_or(seed);
    let data = generate(k, sizes, gap, seed).map_err(|e| CliError::Config(e.to_string()))?;
    let mut out = String::new();
    for (i, part) in data.parts.iter().enumerate() {
        let path = out_dir.join(format!("party_{}.txt", i + 1));
        write_file(&path, part.to_text().as_bytes())?;
        writeln!(out, "party_{}={}x{} {}", i + 1, part.rows(), part.cols(), path.display()).ok();
    }
    let eig = jacobi_eigen_oracle(&data.combined.gram()).map_err(|e| CliError::Other(e.to_string()))?;
    if let [first, second, ..] = &eig[..] {
        writeln!(out, "gap={:.9}", second.value / first.value).ok();
    }
    Ok(out)
}

fn cmd_run(config: &Path, oracle: bool, seed: Option<u64>) -> Result<String, CliError> {
    let cfg = load_config(config, seed)?;
    let data = datasets(&cfg)?;
    let keys = keys(&cfg)?;
    let clock = Instant::now();
    let result = run_protocol(&data, &cfg.protocol, keys.as_ref(), &Bus::new(data.len() as u16))?;
    let wall = clock.elapsed();
    let traffic = account(&result.transcript, 1..=result.rounds_total);
    let rounds = f64::from(result.rounds_total.max(1));

    let mut out = String::new();
    let mut stat = |k: &str, v: String| writeln!(out, "{k}={v}").ok();
    stat("mode", cfg.protocol.mode_label());
    stat("parties", data.len().to_string());
    stat("k", data[0].rows().to_string());
    stat("rounds_total", result.rounds_total.to_string());
    stat("rounds_valid", result.rounds_valid.to_string());
    stat("elements_per_round", format!("{}", traffic.total_elements as f64 / rounds));
    stat("bytes_per_round", format!("{}", traffic.total_bytes as f64 / rounds));
    let converged: Vec<String> = result.converged_parties.iter().map(u16::to_string).collect();
    stat("converged_parties", converged.join(","));
    if oracle {
        let joint = DenseMatrix::hconcat(&data).map_err(|e| CliError::Other(e.to_string()))?;
        let top = jacobi_eigen_oracle(&joint.gram()).map_err(|e| CliError::Other(e.to_string()))?;
        stat("cosine", format!("{:.15}", result.eigenvector.abs_cosine(&top[0].vector)));
    }
    stat("wall_ms", format!("{:.3}", wall.as_secs_f64() * 1e3));

    if let Some(path) = &cfg.transcript {
        let bytes = result.transcript.to_bytes().map_err(|e| CliError::Other(e.to_string()))?;
        write_file(path, &bytes)?;
    }
    if let Some(path) = &cfg.output {
        let text: String = result.eigenvector.iter().map(|x| format!("{x:?}\n")).collect();
        write_file(path, text.as_bytes())?;
    }
    if let Some(path) = &cfg.labels {
        let text: String = result
            .emissions
            .iter()
            .map(|e| format!("{} {}\n", e.round, if e.kind.is_valid() { "valid" } else { "decoy" }))
            .collect();
        write_file(path, text.as_bytes())?;
    }
    Ok(out)
}

fn read_labels(path: &Path) -> Result<Vec<bool>, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(format!("cannot read {}", path.display())))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| match l.split_whitespace().nth(1) {
            Some("valid") => Ok(false),
            Some("decoy") => Ok(true),
            _ => Err(CliError::Other(format!("bad label line {l:?} in {}", path.display()))),
        })
        .collect()
}

fn cmd_attack(
    transcript: &Path,
    party: u16,
    mode: Option<&str>,
    attack: &str,
    config: &Path,
) -> Result<String, CliError> {
    let cfg = load_config(config, None)?;
    let bytes = fs::read(transcript).map_err(io_err(format!("cannot read {}", transcript.display())))?;
    let transcript = Transcript::from_bytes(&bytes).map_err(|e| CliError::Other(e.to_string()))?;
    let kinds: Vec<AttackKind> = match attack {
        "all" => AttackKind::ALL.to_vec(),
        name => vec![name.parse().map_err(|_| CliError::Config(format!("unknown attack {name:?}")))?],
    };
    if party == 0 || party as usize > cfg.parties() {
        return Err(CliError::Config(format!("party {party} outside 1..={}", cfg.parties())));
    }
    let data = datasets(&cfg)?;
    let keys = keys(&cfg)?;
    let plan = plan_codec(&padded(&cfg, &data)?, &cfg.protocol, keys.as_ref().map(|k| &k.public))?;
    let labels = match &cfg.labels {
        Some(path) if path.exists() => Some(read_labels(path)?),
        _ => None,
    };
    let label = mode.map_or_else(|| cfg.protocol.mode_label(), str::to_string);
    let sc = Scenario {
        transcript: &transcript,
        party,
        keys: keys.as_ref(),
        codec: &plan.codec,
        datasets: &data,
        padding: cfg.protocol.padding.as_deref(),
        mode: &label,
        decoy_truth: labels.as_deref(),
    };
    let mut out = String::new();
    for kind in kinds {
        match evaluate(kind, &sc) {
            Ok(report) => writeln!(out, "{report}").ok(),
            Err(e) => writeln!(out, "attack={} mode={label} error=\"{e}\"", kind.as_str()).ok(),
        };
    }
    Ok(out)
}

fn cmd_bench(config: &Path, repeats: u32, seed: Option<u64>) -> Result<String, CliError> {
    let cfg = load_config(config, seed)?;
    let data = datasets(&cfg)?;
    let keys = keys(&cfg)?;
    let mut out = format!("{CSV_HEADER}\n");
    for _ in 0..repeats.max(1) {
        let row = bench_run(&data, &cfg.protocol, keys.as_ref())?;
        writeln!(out, "{row}").ok();
    }
    Ok(out)
}

fn dispatch(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Keygen { bits, out, seed } => cmd_keygen(bits, &out, seed),
        Command::Gendata { k, sizes, gap, seed, out_dir } => cmd_gendata(k, &sizes, gap, seed, &out_dir),
        Command::Run { config, oracle, seed } => cmd_run(&config, oracle, seed),
        Command::Attack { transcript, party, mode, attack, config } => {
            cmd_attack(&transcript, party, mode.as_deref(), &attack, &config)
        }
        Command::Bench { config, repeats, seed } => cmd_bench(&config, repeats, seed),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            e.print().ok();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
