//! The `mmore` command: one entry point for every pipeline stage.

pub mod config;

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use mmore_core::dispatch::{
    collect_files, make_tasks, run_local_job, run_worker, start_coordinator, CoordinatorConfig, ExtractExecutor,
    WorkerConfig,
};
use mmore_core::eval::{read_pairs_file, run_benchmark, BenchmarkOptions, DEFAULT_TRUNCATE_CHARS};
use mmore_core::extract::ExtractorRegistry;
use mmore_core::index::{load_index, save_index, Embedder, HashEmbedder, HybridIndex, RetrievalMode};
use mmore_core::postproc::{apply_pipeline, read_chunks, write_chunks};
use mmore_core::rag::{
    run_batch, serve, EchoGenerator, ExtractiveGenerator, Generator, PromptTemplate, RagEngine, RagRequest,
    ServiceConfig,
};
use mmore_core::sidecar::{SidecarClient, SidecarEmbedder, SidecarGenerator, SidecarModels};
use mmore_core::{deserialize_sample, ExtractionMode, MultimodalSample};
use serde_json::json;
use thiserror::Error;

pub use config::AppConfig;
use config::{EmbedderChoice, GeneratorChoice};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Runtime(_) => "runtime",
        }
    }
}

fn runtime(context: &str) -> impl Fn(io::Error) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{context}: {e}"))
}

#[derive(Debug, Parser)]
#[command(name = "mmore", version, about = "Multimodal document ingestion, indexing and retrieval-augmented answering")]
pub struct Cli {
    /// JSON config file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Print the effective config as JSON and exit.
    #[arg(long, global = true)]
    pub dump_config: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default)]
pub struct ExtractArgs {
    /// Input file, directory or glob; repeatable.
    #[arg(long = "in", value_name = "PATH")]
    pub inputs: Vec<String>,
    /// Output directory (falls back to MMORE_OUT).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<ExtractionMode>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract every input file into samples.jsonl under the output directory.
    Process {
        #[command(flatten)]
        extract: ExtractArgs,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Serve extraction tasks to remote workers until all are finished.
    Coordinator {
        #[command(flatten)]
        extract: ExtractArgs,
        /// Listen address (defaults to the configured coordinator address).
        #[arg(long)]
        bind: Option<String>,
    },
    /// Pull extraction tasks from a coordinator.
    Worker {
        #[arg(long)]
        coordinator: Option<String>,
        #[arg(long)]
        id: Option<String>,
        /// Directory that receives extracted assets.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Filter and chunk samples into chunks.jsonl.
    Postprocess {
        #[arg(long)]
        out: Option<PathBuf>,
        /// Defaults to <out>/samples.jsonl.
        #[arg(long)]
        samples: Option<PathBuf>,
        /// Defaults to <out>/chunks.jsonl.
        #[arg(long)]
        chunks: Option<PathBuf>,
    },
    /// Build a hybrid index from chunks.jsonl.
    Index {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        chunks: Option<PathBuf>,
        /// Defaults to <out>/index.
        #[arg(long)]
        index: Option<PathBuf>,
    },
    /// Run the HTTP retrieval and answering service.
    Serve {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        index: Option<PathBuf>,
        #[arg(long)]
        bind: Option<String>,
    },
    /// Answer a JSONL file of questions.
    RagBatch {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        index: Option<PathBuf>,
        /// JSONL with {"id", "input"} per line.
        #[arg(long)]
        input: PathBuf,
        /// Defaults to standard output.
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        retrieval_mode: Option<RetrievalMode>,
    },
    /// Score extracted texts against ground truth.
    Eval {
        /// Tab-separated `extracted<TAB>ground_truth` per line.
        #[arg(long)]
        pairs: PathBuf,
        /// Emit one JSON record per pair instead of a table.
        #[arg(long)]
        json: bool,
        #[arg(long, default_value_t = DEFAULT_TRUNCATE_CHARS)]
        truncate: usize,
    },
}

fn parse_mode(s: &str) -> Result<ExtractionMode, String> {
    match s {
        "default" => Ok(ExtractionMode::Default),
        "fast" => Ok(ExtractionMode::Fast),
        other => Err(format!("unknown mode `{other}` (expected default or fast)")),
    }
}

/// Parses `argv`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("{}", json!({"v": 1, "error": {"kind": e.kind(), "message": e.to_string()}}));
            e.exit_code()
        }
    }
}

/// Folds flags into the loaded config.
pub fn effective_config(cli: &Cli) -> Result<AppConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => AppConfig::load(p)?,
        None => AppConfig::default(),
    };
    let set_out = |cfg: &mut AppConfig, out: &Option<PathBuf>| {
        if let Some(o) = out {
            cfg.output_dir = Some(o.clone());
        }
    };
    let set_extract = |cfg: &mut AppConfig, a: &ExtractArgs| {
        if !a.inputs.is_empty() {
            cfg.inputs = a.inputs.clone();
        }
        if let Some(o) = &a.out {
            cfg.output_dir = Some(o.clone());
        }
        if let Some(m) = a.mode {
            cfg.mode = m;
        }
    };
    match &cli.command {
        Command::Process { extract, workers } => {
            set_extract(&mut cfg, extract);
            if let Some(w) = workers {
                cfg.dispatcher.workers = *w;
            }
        }
        Command::Coordinator { extract, bind } => {
            set_extract(&mut cfg, extract);
            if let Some(b) = bind {
                cfg.dispatcher.role = config::DispatchRole::Distributed;
                cfg.dispatcher.coordinator = Some(b.clone());
            }
        }
        Command::Worker { coordinator, out, .. } => {
            set_out(&mut cfg, out);
            if let Some(c) = coordinator {
                cfg.dispatcher.role = config::DispatchRole::Distributed;
                cfg.dispatcher.coordinator = Some(c.clone());
            }
        }
        Command::Postprocess { out, .. } => set_out(&mut cfg, out),
        Command::Index { out, index, .. } | Command::Serve { out, index, .. } | Command::RagBatch { out, index, .. } => {
            set_out(&mut cfg, out);
            if let Some(i) = index {
                cfg.index.path = Some(i.clone());
            }
            match &cli.command {
                Command::Serve { bind: Some(b), .. } => cfg.service.bind = b.clone(),
                Command::RagBatch { k, retrieval_mode, .. } => {
                    if let Some(k) = k {
                        cfg.service.k = *k;
                    }
                    if let Some(m) = retrieval_mode {
                        cfg.service.retrieval_mode = *m;
                    }
                }
                _ => {}
            }
        }
        Command::Eval { .. } => {}
    }
    Ok(cfg)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = effective_config(&cli)?;
    cfg.validate()?;
    if cli.dump_config {
        print_text(&format!("{}\n", cfg.to_json()));
        return Ok(());
    }
    match cli.command {
        Command::Process { .. } => process(&cfg),
        Command::Coordinator { .. } => coordinator(&cfg),
        Command::Worker { id, .. } => worker(&cfg, id),
        Command::Postprocess { samples, chunks, .. } => postprocess(&cfg, samples, chunks),
        Command::Index { chunks, .. } => index(&cfg, chunks),
        Command::Serve { .. } => serve_cmd(&cfg),
        Command::RagBatch { input, output, .. } => rag_batch(&cfg, &input, output.as_deref()),
        Command::Eval { pairs, json, truncate } => eval(&cfg, &pairs, json, truncate),
    }
}

// A closed stdout (e.g. piped into `head`) is not an error worth a panic.
fn print_text(s: &str) {
    let mut out = io::stdout().lock();
    let _ = out.write_all(s.as_bytes());
    let _ = out.flush();
}

fn print_json(v: &serde_json::Value) {
    print_text(&format!("{v}\n"));
}

fn input_files(cfg: &AppConfig) -> Result<Vec<PathBuf>, CliError> {
    if cfg.inputs.is_empty() {
        return Err(CliError::Config("no inputs: pass --in or set inputs".into()));
    }
    let inputs: Vec<PathBuf> = cfg.inputs.iter().map(PathBuf::from).collect();
    collect_files(&inputs).map_err(|e| CliError::Config(format!("inputs: {e}")))
}

fn sidecar_client(cfg: &AppConfig) -> Option<SidecarClient> {
    cfg.sidecar.url.as_deref().map(|u| SidecarClient::new(u, cfg.sidecar.timeout()))
}

fn registry(cfg: &AppConfig, out: &Path) -> Result<ExtractorRegistry, CliError> {
    let mut reg = ExtractorRegistry::with_defaults(out.join("assets")).with_placeholder(cfg.placeholder_config()?);
    if let Some(client) = sidecar_client(cfg) {
        match SidecarModels::connect(client) {
            Ok((models, info)) => {
                let models = Arc::new(models);
                if info.supports("ocr") {
                    reg = reg.with_ocr(models.clone());
                }
                if info.supports("transcribe") {
                    reg = reg.with_transcriber(models);
                }
            }
            Err(e) => log::warn!("sidecar unavailable, extracting without OCR or transcription: {e}"),
        }
    }
    Ok(reg)
}

fn process(cfg: &AppConfig) -> Result<(), CliError> {
    let out = cfg.output_dir()?;
    let files = input_files(cfg)?;
    let executor = Arc::new(ExtractExecutor { registry: registry(cfg, &out)? });
    let summary = run_local_job(&files, executor, &cfg.job(), &out).map_err(runtime("output log"))?;
    print_json(&serde_json::to_value(&summary).unwrap_or_default());
    Ok(())
}

fn coordinator(cfg: &AppConfig) -> Result<(), CliError> {
    let out = cfg.output_dir()?;
    let files = input_files(cfg)?;
    let bind = cfg.dispatcher.coordinator.clone().unwrap_or_else(|| "127.0.0.1:7878".into());
    let handle = start_coordinator(
        make_tasks(&files, cfg.mode),
        CoordinatorConfig { bind: bind.clone(), out_dir: out, job: cfg.job() },
    )
    .map_err(runtime(&bind))?;
    print_json(&json!({"listening": handle.addr().to_string()}));
    loop {
        if let Some(summary) = handle.wait(Duration::from_secs(3600)) {
            // Give polling workers a chance to hear JOB_DONE.
            std::thread::sleep(cfg.job().heartbeat());
            print_json(&serde_json::to_value(&summary).unwrap_or_default());
            return Ok(());
        }
    }
}

fn worker(cfg: &AppConfig, id: Option<String>) -> Result<(), CliError> {
    let addr = cfg
        .dispatcher
        .coordinator
        .clone()
        .ok_or_else(|| CliError::Config("worker needs --coordinator or dispatcher.coordinator".into()))?;
    let out = cfg.output_dir()?;
    let executor = Arc::new(ExtractExecutor { registry: registry(cfg, &out)? });
    let mut wc = WorkerConfig::new(id.unwrap_or_else(|| format!("worker-{}", std::process::id())));
    wc.heartbeat = cfg.job().heartbeat();
    wc.batch = cfg.dispatcher.batch_size;
    let report = run_worker(&addr, executor, wc).map_err(runtime(&addr))?;
    print_json(&json!({"completed": report.completed, "reconnects": report.reconnects}));
    Ok(())
}

fn read_samples(path: &Path) -> Result<Vec<MultimodalSample>, CliError> {
    let file = File::open(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut samples = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(runtime("samples"))?;
        if line.trim().is_empty() {
            continue;
        }
        samples.push(
            deserialize_sample(line.as_bytes())
                .map_err(|e| CliError::Runtime(format!("{} line {}: {e}", path.display(), n + 1)))?,
        );
    }
    Ok(samples)
}

fn postprocess(cfg: &AppConfig, samples: Option<PathBuf>, chunks: Option<PathBuf>) -> Result<(), CliError> {
    let (samples_path, chunks_path) = match (samples, chunks) {
        (Some(s), Some(c)) => (s, c),
        (s, c) => {
            let out = cfg.output_dir()?;
            (s.unwrap_or_else(|| out.join("samples.jsonl")), c.unwrap_or_else(|| out.join("chunks.jsonl")))
        }
    };
    let samples = read_samples(&samples_path)?;
    let chunks = apply_pipeline(&samples, &cfg.pipeline, &cfg.placeholder_config()?)
        .map_err(|e| CliError::Config(format!("pipeline: {e}")))?;
    if let Some(parent) = chunks_path.parent() {
        fs::create_dir_all(parent).map_err(runtime("chunks"))?;
    }
    let mut w = BufWriter::new(File::create(&chunks_path).map_err(runtime("chunks"))?);
    write_chunks(&mut w, &chunks).and_then(|()| w.flush()).map_err(runtime("chunks"))?;
    print_json(&json!({"samples": samples.len(), "chunks": chunks.len(), "path": chunks_path}));
    Ok(())
}

fn embedder(cfg: &AppConfig) -> Result<Arc<dyn Embedder>, CliError> {
    match cfg.index.embedder {
        EmbedderChoice::Hash => Ok(Arc::new(HashEmbedder::new(cfg.index.dim))),
        EmbedderChoice::Sidecar => {
            let client = sidecar_client(cfg).ok_or_else(|| CliError::Config("sidecar.url is unset".into()))?;
            SidecarEmbedder::connect(client)
                .map(|e| Arc::new(e) as Arc<dyn Embedder>)
                .map_err(|e| CliError::Runtime(e.to_string()))
        }
    }
}

fn generator(cfg: &AppConfig) -> Result<Arc<dyn Generator>, CliError> {
    match cfg.generator {
        GeneratorChoice::Extractive => Ok(Arc::new(ExtractiveGenerator)),
        GeneratorChoice::Echo => Ok(Arc::new(EchoGenerator)),
        GeneratorChoice::Sidecar => {
            let client = sidecar_client(cfg).ok_or_else(|| CliError::Config("sidecar.url is unset".into()))?;
            SidecarGenerator::connect(client, cfg.sidecar.max_tokens)
                .map(|g| Arc::new(g) as Arc<dyn Generator>)
                .map_err(|e| CliError::Runtime(e.to_string()))
        }
    }
}

fn index(cfg: &AppConfig, chunks: Option<PathBuf>) -> Result<(), CliError> {
    let chunks_path = match chunks {
        Some(c) => c,
        None => cfg.output_dir()?.join("chunks.jsonl"),
    };
    let dir = cfg.index_dir()?;
    let file = File::open(&chunks_path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", chunks_path.display())))?;
    let chunks = read_chunks(BufReader::new(file)).map_err(runtime("chunks"))?;
    let emb = embedder(cfg)?;
    let mut idx = HybridIndex::new();
    idx.add_chunks(&chunks, emb.as_ref()).map_err(|e| CliError::Runtime(e.to_string()))?;
    save_index(&idx, &dir).map_err(|e| CliError::Runtime(e.to_string()))?;
    print_json(&json!({"chunks": idx.len(), "index": dir, "embedder": emb.identity()}));
    Ok(())
}

fn serve_cmd(cfg: &AppConfig) -> Result<(), CliError> {
    let config = ServiceConfig {
        bind: cfg.service.bind.clone(),
        index_dir: Some(cfg.index_dir()?),
        template: PromptTemplate::new(cfg.template.clone()).map_err(|e| CliError::Config(e.to_string()))?,
        default_k: cfg.service.k,
        default_mode: cfg.service.retrieval_mode,
    };
    let handle = serve(config, embedder(cfg)?, generator(cfg)?, true).map_err(|e| CliError::Runtime(e.to_string()))?;
    print_json(&json!({"listening": handle.addr().to_string()}));
    handle.join();
    Ok(())
}

fn rag_batch(cfg: &AppConfig, input: &Path, output: Option<&Path>) -> Result<(), CliError> {
    let dir = cfg.index_dir()?;
    let idx = load_index(&dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
    let template = PromptTemplate::new(cfg.template.clone()).map_err(|e| CliError::Config(e.to_string()))?;
    let engine = RagEngine::new(Arc::new(idx), embedder(cfg)?, generator(cfg)?).with_default_template(template);
    let defaults = RagRequest { mode: cfg.service.retrieval_mode, ..RagRequest::new("", cfg.service.k) };
    let reader = BufReader::new(
        File::open(input).map_err(|e| CliError::Config(format!("cannot read {}: {e}", input.display())))?,
    );
    let report = match output {
        Some(p) => {
            let w = BufWriter::new(File::create(p).map_err(runtime("batch output"))?);
            run_batch(reader, w, &engine, &defaults)
        }
        None => run_batch(reader, io::stdout().lock(), &engine, &defaults),
    }
    .map_err(|e| CliError::Runtime(e.to_string()))?;
    log::info!("batch finished: {} answered, {} failed", report.ok, report.failed);
    if output.is_some() {
        print_json(&serde_json::to_value(report).unwrap_or_default());
    }
    Ok(())
}

fn eval(cfg: &AppConfig, pairs: &Path, as_json: bool, truncate: usize) -> Result<(), CliError> {
    let pairs = read_pairs_file(pairs).map_err(|e| CliError::Config(format!("{}: {e}", pairs.display())))?;
    let opts = BenchmarkOptions { truncate_chars: truncate, placeholder: cfg.placeholder_config()? };
    let report = run_benchmark(&pairs, &opts);
    if as_json {
        report.write_jsonl(io::stdout().lock()).map_err(runtime("stdout"))?;
    } else {
        print_text(&report.render_table());
    }
    Ok(())
}
