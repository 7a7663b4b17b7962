//! `kgqa` command line. Exit codes: 0 success, 1 stage failure, 2 usage
//! error.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use kgqa_core::eval::{load_benchmark, parse_configurations, run_benchmark, EvalClock};
use kgqa_core::fixture::write_bundle;
use kgqa_core::induction::{induce_database, InductionConfig, RenameConfig, SchemaReport};
use kgqa_core::passage::write_jsonl;
use kgqa_core::rdf::{group_capsules, parse_ntriples};
use kgqa_core::retrieval::ScorerKind;
use kgqa_core::verbalize::{verbalize_all, CasingConfig};
use kgqa_core::workspace::{ingest, provider_for, IngestOptions, Workspace};
use serde_json::json;

use crate::api::{router, AppState};
use crate::store::Store;

pub const STORE_FILE: &str = "conversations.db";

#[derive(Debug, Parser)]
#[command(name = "kgqa", version, about = "Conversational question answering over a knowledge graph")]
pub struct Cli {
    /// Print one machine-readable JSON object instead of text.
    #[arg(long, global = true)]
    pub json: bool,
    /// Log progress to stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a workspace: DDL, database, passages, index, schema report.
    Ingest(IngestArgs),
    /// Serve the HTTP API over a workspace.
    Serve(ServeArgs),
    /// Replay a benchmark under several branch configurations.
    Eval(EvalArgs),
    /// Verbalize a KG into passages (JSONL).
    Verbalize(VerbalizeArgs),
    /// Induce the relational schema and database only.
    Induce(InduceArgs),
    /// Write the synthetic car catalog, documents, benchmark and script.
    GenFixture(GenFixtureArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ScorerArg {
    Lexical,
    Embedding,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// N-Triples file.
    #[arg(long)]
    pub kg: PathBuf,
    /// Workspace directory to create.
    #[arg(long)]
    pub out: PathBuf,
    /// JSON rename and comment overrides.
    #[arg(long)]
    pub renames: Option<PathBuf>,
    /// External documents: a file or a directory of .txt/.md files.
    #[arg(long)]
    pub docs: Option<PathBuf>,
    /// Profiles JSON copied into the workspace.
    #[arg(long)]
    pub profiles: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "lexical")]
    pub scorer: ScorerArg,
    /// Fixed casing for a token in passages, e.g. `bmw=BMW`. Repeatable.
    #[arg(long = "acronym", value_parser = parse_acronym)]
    pub acronyms: Vec<(String, String)>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "KGQA_WORKSPACE")]
    pub workspace: PathBuf,
    #[arg(long, env = "KGQA_HOST", default_value = "127.0.0.1")]
    pub host: String,
    /// 0 picks a free port; the bound port is printed.
    #[arg(long, env = "KGQA_PORT", default_value_t = 8080)]
    pub port: u16,
    /// Conversation store (default: <workspace>/conversations.db).
    #[arg(long, env = "KGQA_STORE")]
    pub store: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub workspace: PathBuf,
    /// Benchmark JSONL.
    #[arg(long)]
    pub benchmark: PathBuf,
    /// Comma-separated subset of sql, text, both.
    #[arg(long, default_value = "sql,text,both")]
    pub configs: String,
    /// Write the JSON report here.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Profile supplying the provider and limits (default: workspace default).
    #[arg(long)]
    pub profile: Option<String>,
    /// Advance a virtual clock 1 ms per reading instead of using wall time,
    /// making reports byte-identical across runs.
    #[arg(long)]
    pub virtual_clock: bool,
}

#[derive(Debug, Args)]
pub struct VerbalizeArgs {
    #[arg(long)]
    pub kg: PathBuf,
    /// Passages JSONL (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long = "acronym", value_parser = parse_acronym)]
    pub acronyms: Vec<(String, String)>,
}

#[derive(Debug, Args)]
pub struct InduceArgs {
    #[arg(long)]
    pub kg: PathBuf,
    /// SQLite file to create (replaced if present).
    #[arg(long)]
    pub db: PathBuf,
    #[arg(long)]
    pub renames: Option<PathBuf>,
    /// Write the DDL here instead of stdout.
    #[arg(long)]
    pub ddl: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenFixtureArgs {
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_acronym(s: &str) -> Result<(String, String), String> {
    match s.split_once('=') {
        Some((k, v)) if !k.is_empty() && !v.is_empty() => Ok((k.to_string(), v.to_string())),
        _ => Err(format!("expected TOKEN=RENDERING, got {s:?}")),
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    init_logging(cli.verbose);
    match execute(&cli) {
        Ok(()) => 0,
        Err(message) => {
            if cli.json {
                println!("{}", json!({ "ok": false, "error": message }));
            }
            eprintln!("error: {message}");
            1
        }
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(level));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .try_init();
}

fn execute(cli: &Cli) -> Result<(), String> {
    match &cli.command {
        Command::Ingest(a) => cmd_ingest(a, cli.json),
        Command::Serve(a) => cmd_serve(a, cli.json),
        Command::Eval(a) => cmd_eval(a, cli.json),
        Command::Verbalize(a) => cmd_verbalize(a, cli.json),
        Command::Induce(a) => cmd_induce(a, cli.json),
        Command::GenFixture(a) => cmd_gen_fixture(a, cli.json),
    }
}

fn casing(acronyms: &[(String, String)]) -> CasingConfig {
    CasingConfig::with_acronyms(acronyms.iter().cloned())
}

fn print_json(value: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("json"));
}

fn cmd_ingest(a: &IngestArgs, as_json: bool) -> Result<(), String> {
    let mut opts = IngestOptions::new(&a.kg, &a.out);
    opts.renames = a.renames.clone();
    opts.docs = a.docs.clone();
    opts.profiles = a.profiles.clone();
    opts.casing = casing(&a.acronyms);
    opts.scorer = match a.scorer {
        ScorerArg::Lexical => ScorerKind::Lexical,
        ScorerArg::Embedding => ScorerKind::Embedding,
    };
    let summary = ingest(&opts).map_err(|e| e.to_string())?;
    if as_json {
        print_json(&json!({ "ok": true, "summary": summary }));
    } else {
        println!(
            "workspace {}: {} triples, {} tables ({} entity), {} rows, {} passages ({} from the KG, {} from documents)",
            summary.workspace.display(),
            summary.triples,
            summary.tables,
            summary.entity_tables,
            summary.rows,
            summary.passages,
            summary.kg_passages,
            summary.external_passages
        );
    }
    Ok(())
}

fn cmd_serve(a: &ServeArgs, as_json: bool) -> Result<(), String> {
    let workspace = Workspace::open(&a.workspace).map_err(|e| e.to_string())?;
    let store_path = a.store.clone().unwrap_or_else(|| a.workspace.join(STORE_FILE));
    let store = Store::open(&store_path).map_err(|e| format!("{}: {e}", store_path.display()))?;
    let state = AppState::new(workspace, store);
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| e.to_string())?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind((a.host.as_str(), a.port))
            .await
            .map_err(|e| format!("cannot bind {}:{}: {e}", a.host, a.port))?;
        let addr: SocketAddr = listener.local_addr().map_err(|e| e.to_string())?;
        if as_json {
            println!("{}", json!({ "ok": true, "address": addr.to_string(), "port": addr.port() }));
        } else {
            println!("listening on http://{addr}");
        }
        std::io::stdout().flush().map_err(|e| e.to_string())?;
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| e.to_string())
    })
}

fn cmd_eval(a: &EvalArgs, as_json: bool) -> Result<(), String> {
    let configs = parse_configurations(&a.configs).map_err(|e| e.to_string())?;
    let workspace = Workspace::open(&a.workspace).map_err(|e| e.to_string())?;
    let items = load_benchmark(&a.benchmark).map_err(|e| format!("{}: {e}", a.benchmark.display()))?;
    let profile = match &a.profile {
        Some(id) => workspace
            .profiles
            .get(id)
            .ok_or_else(|| format!("unknown profile {id}"))?,
        None => workspace.profiles.default_profile(),
    };
    let provider = provider_for(profile, &workspace.root).map_err(|e| e.to_string())?;
    let clock = if a.virtual_clock {
        EvalClock::Virtual
    } else {
        EvalClock::Wall
    };
    let report = run_benchmark(&workspace, profile, provider.as_ref(), &items, &configs, clock);
    if let Some(path) = &a.report {
        std::fs::write(path, report.to_json()).map_err(|e| format!("{}: {e}", path.display()))?;
    }
    if as_json {
        print!("{}", report.to_json());
    } else {
        print!("{}", report.table);
    }
    Ok(())
}

fn read_capsules(kg: &Path) -> Result<Vec<kgqa_core::rdf::EntityCapsule>, String> {
    let file = File::open(kg).map_err(|e| format!("{}: {e}", kg.display()))?;
    let triples = parse_ntriples(BufReader::new(file)).map_err(|e| format!("{}: {e}", kg.display()))?;
    Ok(group_capsules(&triples))
}

fn cmd_verbalize(a: &VerbalizeArgs, as_json: bool) -> Result<(), String> {
    let capsules = read_capsules(&a.kg)?;
    let passages = verbalize_all(&capsules, InductionConfig::default().type_predicates, &casing(&a.acronyms));
    match &a.out {
        Some(path) => {
            let file = File::create(path).map_err(|e| format!("{}: {e}", path.display()))?;
            write_jsonl(&passages, BufWriter::new(file)).map_err(|e| e.to_string())?;
            if as_json {
                print_json(&json!({ "ok": true, "passages": passages.len(), "out": path }));
            } else {
                println!("{} passages written to {}", passages.len(), path.display());
            }
        }
        None => write_jsonl(&passages, std::io::stdout().lock()).map_err(|e| e.to_string())?,
    }
    Ok(())
}

fn cmd_induce(a: &InduceArgs, as_json: bool) -> Result<(), String> {
    let capsules = read_capsules(&a.kg)?;
    let overrides = match &a.renames {
        Some(path) => RenameConfig::load(path).map_err(|e| e.to_string())?,
        None => RenameConfig::default(),
    };
    let (schema, population) = induce_database(&capsules, &InductionConfig::default(), &overrides, &a.db)
        .map_err(|e| e.to_string())?;
    if let Some(path) = &a.ddl {
        std::fs::write(path, &schema.generated_ddl).map_err(|e| format!("{}: {e}", path.display()))?;
    }
    if as_json {
        print_json(&json!({ "ok": true, "report": SchemaReport::new(&schema, &population) }));
    } else if a.ddl.is_none() {
        print!("{}", schema.generated_ddl);
    } else {
        println!("{} tables, {} rows", schema.tables.len(), population.total_rows());
    }
    Ok(())
}

fn cmd_gen_fixture(a: &GenFixtureArgs, as_json: bool) -> Result<(), String> {
    let bundle = write_bundle(&a.out).map_err(|e| format!("{}: {e}", a.out.display()))?;
    if as_json {
        print_json(&json!({
            "ok": true,
            "kg": bundle.kg,
            "docs": bundle.docs,
            "script": bundle.script,
            "profiles": bundle.profiles,
            "benchmark": bundle.benchmark,
        }));
    } else {
        println!("fixture written to {}", a.out.display());
    }
    Ok(())
}
