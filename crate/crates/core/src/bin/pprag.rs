//! `pprag` operator CLI.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::AtomicBool;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use pprag::config::CliConfig;
use pprag::docs::{self, Document};
use pprag::embed::{Embedder, HashEmbedder, PrecomputedEmbedder};
use pprag::eval::{self, AsrConfig, FlipConfig, Pairing};
use pprag::net::{self, RemoteStore};
use pprag::payload::PayloadKey;
use pprag::pipeline::{phase3_prompt, ClientContext};
use pprag::scheme::{SchemeKey, DEFAULT_SCALE_RANGE};
use pprag::store::{RecordStore, SharedStore, VectorStore};
use pprag::Error;

#[derive(Parser)]
#[command(name = "pprag", version, about = "Encrypted vector retrieval for RAG")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a scheme key and a payload key.
    Keygen(KeygenArgs),
    /// Encrypt documents and upload them to a store.
    Ingest(IngestArgs),
    /// Serve a store file over TCP.
    Serve(ServeArgs),
    /// Run an encrypted query and print the assembled prompt.
    Query(QueryArgs),
    /// Print k' expansion rows as CSV.
    Kprime(KprimeArgs),
    /// Measure encryption throughput.
    BenchThroughput(ThroughputArgs),
    /// Vector-analysis attack success rate, CAPRISE vs ADCPE.
    BenchAsr(AsrArgs),
    /// Database-ordering flip rate.
    BenchFlip(FlipArgs),
}

#[derive(Args, Default)]
struct KeyFlags {
    #[arg(long)]
    key: Option<PathBuf>,
    #[arg(long = "payload-key")]
    payload_key: Option<PathBuf>,
}

#[derive(Args, Default)]
struct StoreFlags {
    #[arg(long)]
    store: Option<PathBuf>,
    #[arg(long)]
    addr: Option<String>,
}

#[derive(Args)]
struct KeygenArgs {
    #[command(flatten)]
    keys: KeyFlags,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, default_value_t = 128)]
    security_bits: u32,
    /// Rejected: keys must not be derived from a seed.
    #[arg(long, hide = true)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Jsonl,
    Bin,
}

#[derive(Args)]
struct IngestArgs {
    #[command(flatten)]
    keys: KeyFlags,
    #[command(flatten)]
    store: StoreFlags,
    /// Documents (JSON lines) or vectors file (binary).
    #[arg(long)]
    docs: PathBuf,
    /// Texts file paired with a binary vectors file.
    #[arg(long)]
    texts: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ServeArgs {
    #[command(flatten)]
    store: StoreFlags,
    /// Create an empty store of this dimension if the file is missing.
    #[arg(long)]
    dim: Option<usize>,
}

#[derive(Args)]
struct QueryArgs {
    #[command(flatten)]
    keys: KeyFlags,
    #[command(flatten)]
    store: StoreFlags,
    #[arg(long)]
    text: String,
    /// JSON-lines file to look the query embedding up in; otherwise the
    /// hash embedder is used.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct KprimeArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    n: Vec<usize>,
    #[arg(long, default_value_t = 100_000)]
    m: usize,
    #[arg(long, value_delimiter = ',', required = true)]
    r: Vec<f64>,
    #[arg(long, value_delimiter = ',', required = true)]
    k: Vec<usize>,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct ThroughputArgs {
    #[arg(long, value_delimiter = ',', default_value = "192,384,768,1536")]
    dims: Vec<usize>,
    #[arg(long, default_value_t = 2000)]
    batch: usize,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct AsrArgs {
    #[arg(long, value_delimiter = ',', default_value = "32,128,768")]
    dims: Vec<usize>,
    #[arg(long, default_value_t = 10_000)]
    m: usize,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PairingArg {
    DbDb,
    QueryDb,
}

#[derive(Args)]
struct FlipArgs {
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long, value_delimiter = ',', default_value = "1.01")]
    margin: Vec<f64>,
    #[arg(long, default_value_t = 100_000)]
    trials: usize,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, value_enum, default_value = "db-db")]
    pairing: PairingArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

/// Usage problems detected after parsing (missing config values).
struct Usage(String);

enum Failure {
    Usage(Usage),
    App(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::App(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::App(Error::Io(e))
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) => 3,
        Error::Format { .. } | Error::Version { .. } => 4,
        Error::Transport(_) => 5,
        Error::Auth { .. } => 6,
        Error::Param(_) | Error::Input(_) => 7,
        Error::Rejected { .. } => 8,
        Error::Remote(_) | Error::NonceExhausted => 1,
    }
}

fn require<T>(v: Option<T>, flag: &str) -> CliResult<T> {
    v.ok_or_else(|| Failure::Usage(Usage(format!("missing --{flag} (flag or config file)"))))
}

fn file_config() -> CliResult<CliConfig> {
    Ok(CliConfig::from_env()?)
}

fn load_keys(cfg: &CliConfig) -> CliResult<(SchemeKey, PayloadKey)> {
    let key = require(cfg.key.clone(), "key")?;
    let pkey = require(cfg.payload_key.clone(), "payload-key")?;
    Ok((
        SchemeKey::from_bytes(&fs::read(key)?)?,
        PayloadKey::from_file_bytes(&fs::read(pkey)?)?,
    ))
}

fn open_store(cfg: &CliConfig, create_dim: Option<usize>) -> CliResult<Box<dyn RecordStore>> {
    if let Some(addr) = &cfg.addr {
        return Ok(Box::new(RemoteStore::connect(addr.as_str())?));
    }
    let path = require(cfg.store.clone(), "store or --addr")?;
    let store = match (path.exists(), create_dim) {
        (true, _) => VectorStore::open(&path)?,
        (false, Some(dim)) => VectorStore::create(&path, dim)?,
        (false, None) => {
            return Err(Error::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("store {} not found", path.display()),
            ))
            .into())
        }
    };
    Ok(Box::new(SharedStore::new(store)))
}

fn write_manifest(path: Option<&Path>, line: &str) -> CliResult {
    match path {
        Some(p) => {
            let mut f = fs::OpenOptions::new().create(true).append(true).open(p)?;
            writeln!(f, "{line}")?;
        }
        None => eprintln!("{line}"),
    }
    Ok(())
}

fn keygen(args: KeygenArgs) -> CliResult {
    if args.seed.is_some() {
        return Err(Failure::Usage(Usage(
            "keygen does not accept --seed".into(),
        )));
    }
    let cfg = CliConfig {
        key: args.keys.key,
        payload_key: args.keys.payload_key,
        beta: args.beta,
        ..Default::default()
    }
    .or(file_config()?);
    let key_path = require(cfg.key, "key")?;
    let pkey_path = require(cfg.payload_key, "payload-key")?;
    let beta = cfg.beta.unwrap_or(0.2);
    for p in [&key_path, &pkey_path] {
        if p.exists() {
            return Err(Error::Param(format!("refusing to overwrite {}", p.display())).into());
        }
    }
    let key = SchemeKey::generate(args.security_bits, beta, DEFAULT_SCALE_RANGE)?;
    fs::write(&key_path, key.to_bytes())?;
    fs::write(&pkey_path, PayloadKey::generate().to_file_bytes())?;
    println!("wrote {} and {}", key_path.display(), pkey_path.display());
    Ok(())
}

fn ingest(args: IngestArgs) -> CliResult {
    let cfg = CliConfig {
        key: args.keys.key,
        payload_key: args.keys.payload_key,
        store: args.store.store,
        addr: args.store.addr,
        seed: args.seed,
        format: args.format.map(|f| match f {
            Format::Jsonl => "jsonl".into(),
            Format::Bin => "bin".into(),
        }),
        ..Default::default()
    }
    .or(file_config()?);
    let (scheme_key, payload_key) = load_keys(&cfg)?;
    let documents: Vec<Document> = match cfg.format.as_deref().unwrap_or("jsonl") {
        "jsonl" => docs::read_jsonl(&args.docs)?,
        "bin" => docs::read_binary(&args.docs, require(args.texts, "texts")?)?,
        other => return Err(Failure::Usage(Usage(format!("unknown format {other:?}")))),
    };
    let dim = documents.first().map(|d| d.embedding.len());
    let store = open_store(&cfg, dim)?;
    let ctx = ClientContext::new(scheme_key, payload_key, store);
    let report = ctx.phase1_upload(&documents)?;
    println!("uploaded {} records ({} bytes)", report.count, report.bytes);
    for f in &report.failures {
        eprintln!("record {}: {}", f.id, f.reason);
    }
    match report.failures.first() {
        Some(f) => Err(Error::Input(format!(
            "{} of {} documents failed (first: record {})",
            report.failures.len(),
            documents.len(),
            f.id
        ))
        .into()),
        None => Ok(()),
    }
}

fn serve(args: ServeArgs) -> CliResult {
    let cfg = CliConfig {
        store: args.store.store,
        addr: args.store.addr,
        dim: args.dim,
        ..Default::default()
    }
    .or(file_config()?);
    let path = require(cfg.store, "store")?;
    let addr = require(cfg.addr, "addr")?;
    let stop = Arc::new(AtomicBool::new(false));
    let flag = stop.clone();
    ctrlc::set_handler(move || flag.store(true, std::sync::atomic::Ordering::Relaxed))
        .map_err(|e| Error::Param(format!("installing signal handler: {e}")))?;
    net::serve(&path, addr.as_str(), cfg.dim, stop)?;
    Ok(())
}

fn query(args: QueryArgs) -> CliResult {
    let cfg = CliConfig {
        key: args.keys.key,
        payload_key: args.keys.payload_key,
        store: args.store.store,
        addr: args.store.addr,
        k: args.k,
        radius: args.radius,
        seed: args.seed,
        ..Default::default()
    }
    .or(file_config()?);
    let (scheme_key, payload_key) = load_keys(&cfg)?;
    let store = open_store(&cfg, None)?;
    let dim = store.dim()?;
    let embedder: Box<dyn Embedder> = match &args.embeddings {
        Some(p) => Box::new(PrecomputedEmbedder::from_documents(&docs::read_jsonl(p)?)?),
        None => Box::new(HashEmbedder::new(dim)?),
    };
    let mut ctx = ClientContext::new(scheme_key, payload_key, store);
    ctx.default_k = cfg.k.unwrap_or(5);
    ctx.default_radius = cfg.radius.unwrap_or(0.0);
    let result = ctx.ask(&args.text, embedder.as_ref(), cfg.seed)?;
    println!("{}", phase3_prompt(&args.text, &result.documents));
    println!("k={} k_prime={}", result.k, result.k_prime);
    for d in &result.documents {
        println!("{}\t{:.9}", d.id, d.distance);
    }
    Ok(())
}

fn kprime(args: KprimeArgs) -> CliResult {
    let rows = eval::run_kprime_table(&args.n, &args.r, &args.k, args.m)?;
    print!("{}", eval::kprime_csv(&rows));
    let params = serde_json::json!({"n": args.n, "m": args.m, "r": args.r, "k": args.k});
    write_manifest(
        args.manifest.as_deref(),
        &eval::manifest_line("kprime", None, &params),
    )
}

fn bench_throughput(args: ThroughputArgs) -> CliResult {
    let report = eval::run_throughput(&args.dims, args.batch, args.repeats, args.seed)?;
    println!("dim,enc_db_vps,enc_q_vps,dec_db_vps,enc_db_elements_per_sec");
    for r in &report.rows {
        println!(
            "{},{:.1},{:.1},{:.1},{:.0}",
            r.dim,
            r.enc_db_vectors_per_sec,
            r.enc_q_vectors_per_sec,
            r.dec_db_vectors_per_sec,
            r.enc_db_elements_per_sec
        );
    }
    let params = serde_json::json!({
        "dims": args.dims, "batch": report.batch, "repeats": report.repeats,
        "methodology": report.methodology,
    });
    write_manifest(
        args.manifest.as_deref(),
        &eval::manifest_line("bench-throughput", Some(args.seed), &params),
    )
}

fn bench_asr(args: AsrArgs) -> CliResult {
    let beta = args.beta.or(file_config()?.beta).unwrap_or(0.2);
    println!("dim,m,k,trials,beta,asr_caprise,asr_adcpe,asr_plain");
    let mut configs = Vec::new();
    for &dim in &args.dims {
        let cfg = AsrConfig {
            dim,
            m: args.m,
            k: args.k,
            trials: args.trials,
            beta,
            seed: args.seed,
        };
        let r = eval::run_asr(&cfg)?;
        println!(
            "{},{},{},{},{},{:.4},{:.4},{:.4}",
            r.dim, r.m, r.k, r.trials, r.beta, r.asr_caprise, r.asr_adcpe, r.asr_plain
        );
        configs.push(cfg);
    }
    write_manifest(
        args.manifest.as_deref(),
        &eval::manifest_line("bench-asr", Some(args.seed), &configs),
    )
}

fn bench_flip(args: FlipArgs) -> CliResult {
    let beta = args.beta.or(file_config()?.beta).unwrap_or(0.2);
    let pairing = match args.pairing {
        PairingArg::DbDb => Pairing::DbDb,
        PairingArg::QueryDb => Pairing::QueryDb,
    };
    println!("dim,margin_factor,pairing,trials,flips,rate");
    let mut configs = Vec::new();
    for &margin_factor in &args.margin {
        let cfg = FlipConfig {
            dim: args.dim,
            margin_factor,
            trials: args.trials,
            beta,
            pairing,
            seed: args.seed,
        };
        let r = eval::run_flip_rate(&cfg)?;
        let pairing_name = match pairing {
            Pairing::DbDb => "db-db",
            Pairing::QueryDb => "query-db",
        };
        println!(
            "{},{},{},{},{},{:.6}",
            cfg.dim, margin_factor, pairing_name, r.trials, r.flips, r.rate
        );
        configs.push(cfg);
    }
    write_manifest(
        args.manifest.as_deref(),
        &eval::manifest_line("bench-flip", Some(args.seed), &configs),
    )
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Keygen(a) => keygen(a),
        Command::Ingest(a) => ingest(a),
        Command::Serve(a) => serve(a),
        Command::Query(a) => query(a),
        Command::Kprime(a) => kprime(a),
        Command::BenchThroughput(a) => bench_throughput(a),
        Command::BenchAsr(a) => bench_asr(a),
        Command::BenchFlip(a) => bench_flip(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(Usage(msg))) => {
            eprintln!("error[usage]: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::App(e)) => {
            eprintln!(
                "error[{}]: {}",
                e.category(),
                e.to_string().replace('\n', " ")
            );
            ExitCode::from(exit_code(&e))
        }
    }
}
