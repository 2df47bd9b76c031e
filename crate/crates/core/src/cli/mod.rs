//! Command-line front end. Exit codes: 0 success, 1 completed with failed
//! items, 2 usage, I/O or configuration error.

use std::error::Error;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::chunker::{load_corpus, ChunkingMode};
use crate::config::PipelineConfig;
use crate::embed::EmbedProvider;
use crate::eval::{
    self, compare_ablations, expand_grid, gold_chunk_ids, load_mcq_dataset, render_table, run_eval,
    synth, AblationConfig, CorpusIndexes, EvalReport, GeneratorSet,
};
use crate::generate::{
    assemble_open_prompt, generate, GenerateError, GenerationRequest, GeneratorKind, MCQItem,
};
use crate::index::VectorIndex;
use crate::pipeline::{Pipeline, QueryOptions};
use crate::rerank::ScorerKind;

type CliResult = Result<Status, Box<dyn Error + Send + Sync>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Ok,
    Degraded,
}

#[derive(Parser, Debug)]
#[command(name = "specrag", version, about = "Retrieval-augmented multiple-choice QA over document corpora")]
pub struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// JSON pipeline config; endpoint environment variables and flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every stochastic component.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Cap on concurrent evaluation workers.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true, value_enum)]
    chunking: Option<ChunkingArg>,
    #[arg(long, global = true, value_enum, conflicts_with_all = ["stub_generator", "toy_generator"])]
    generator: Option<GeneratorArg>,
    /// Use the deterministic lexical generator.
    #[arg(long, global = true, conflicts_with = "toy_generator")]
    stub_generator: bool,
    /// Use the small random-weight decoder, which enforces attention windows.
    #[arg(long, global = true)]
    toy_generator: bool,
    #[arg(long, global = true, value_enum, conflicts_with = "stub_scorer")]
    scorer: Option<ScorerArg>,
    /// Re-rank with the BM25 scorer instead of a remote cross-encoder.
    #[arg(long, global = true)]
    stub_scorer: bool,
    #[arg(long, global = true, value_enum)]
    embedder: Option<EmbedderArg>,
    #[arg(long, global = true)]
    embed_endpoint: Option<String>,
    #[arg(long, global = true)]
    rerank_endpoint: Option<String>,
    #[arg(long, global = true)]
    llm_endpoint: Option<String>,
    /// Contexts placed in the prompt.
    #[arg(long, global = true)]
    n_contexts: Option<usize>,
    #[arg(long, global = true)]
    candidates_k: Option<usize>,
    #[arg(long, global = true)]
    top_m: Option<usize>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ChunkingArg {
    Semantic,
    Fixed,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum GeneratorArg {
    Stub,
    Toy,
    Http,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ScorerArg {
    Lexical,
    Http,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum EmbedderArg {
    Deterministic,
    Http,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum SynthKind {
    Planted,
    RerankTrap,
    Straddle,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Chunk, embed and index a corpus.
    Ingest {
        /// Directory of .txt files or a JSON-lines file of {"id", "text"}.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        index_out: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Answer one question against an index.
    Query {
        #[arg(long)]
        index: Option<PathBuf>,
        #[arg(long)]
        question: String,
        /// Answer option; repeat for each. Without options the contexts are
        /// printed and, for remote generators, a free-form answer.
        #[arg(long = "option")]
        options: Vec<String>,
        #[arg(long)]
        no_context: bool,
        #[arg(long)]
        no_rerank: bool,
        #[arg(long)]
        json: bool,
    },
    /// Evaluate one configuration over a dataset.
    Eval {
        #[arg(long)]
        index: Option<PathBuf>,
        #[arg(long)]
        dataset: PathBuf,
        /// JSON-lines evidence spans, one per item, for recall figures.
        #[arg(long)]
        gold: Option<PathBuf>,
        #[arg(long)]
        no_context: bool,
        #[arg(long)]
        no_rerank: bool,
        #[arg(long)]
        selfextend: bool,
        #[command(flatten)]
        output: ReportOutput,
    },
    /// Evaluate a grid of ablation toggles over one corpus.
    Ablate {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        gold: Option<PathBuf>,
        /// Comma-separated toggles from SE, RR, SC, MC, CTX.
        #[arg(long, value_delimiter = ',', required = true)]
        grid: Vec<String>,
        #[command(flatten)]
        output: ReportOutput,
    },
    /// Print chunks as JSON lines.
    ChunkInspect {
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Only this document.
        #[arg(long)]
        doc: Option<String>,
    },
    /// Write a planted synthetic corpus, question set and gold evidence.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "planted")]
        kind: SynthKind,
        #[arg(long, default_value_t = 20)]
        docs: usize,
        #[arg(long, default_value_t = 40)]
        questions: usize,
        /// For the straddle corpus, add a table document longer than this many tokens.
        #[arg(long)]
        oversize_tokens: Option<usize>,
    },
}

#[derive(Args, Debug)]
struct ReportOutput {
    /// Write the JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print JSON instead of a table.
    #[arg(long)]
    json: bool,
    /// Include wall-clock latency in JSON output.
    #[arg(long)]
    timing: bool,
}

/// Parses the process arguments, runs the command and maps the outcome to
/// an exit code.
pub fn run() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Degraded) => ExitCode::from(1),
        // error messages already embed their causes
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> CliResult {
    let config = resolve_config(&cli.common)?;
    let jobs = cli.common.jobs;
    match cli.command {
        Command::Ingest { corpus, index_out, json } => ingest(config, corpus, index_out, json),
        Command::Query {
            index,
            question,
            options,
            no_context,
            no_rerank,
            json,
        } => query(config, index, &question, options, !no_context, !no_rerank, json),
        Command::Eval {
            index,
            dataset,
            gold,
            no_context,
            no_rerank,
            selfextend,
            output,
        } => {
            let ablation = AblationConfig {
                use_context: !no_context,
                use_semantic_chunking: config.chunking.mode == ChunkingMode::Semantic,
                use_rerank: !no_rerank,
                use_selfextend: selfextend,
                n_contexts: config.n_contexts,
            };
            evaluate(config, index, &dataset, gold, ablation, jobs, &output)
        }
        Command::Ablate {
            corpus,
            dataset,
            gold,
            grid,
            output,
        } => ablate(config, corpus, &dataset, gold, &grid, jobs, &output),
        Command::ChunkInspect { corpus, doc } => chunk_inspect(config, corpus, doc),
        Command::Synth {
            out,
            kind,
            docs,
            questions,
            oversize_tokens,
        } => write_synth(&config, cli.common.seed.unwrap_or(0), &out, kind, docs, questions, oversize_tokens),
    }
}

/// Defaults, then file, then environment, then flags.
fn resolve_config(c: &Common) -> Result<PipelineConfig, Box<dyn Error + Send + Sync>> {
    let mut config = PipelineConfig::load(c.config.as_deref())?;
    if let Some(seed) = c.seed {
        config.generator.seed = seed;
    }
    if let Some(mode) = c.chunking {
        config.chunking.mode = match mode {
            ChunkingArg::Semantic => ChunkingMode::Semantic,
            ChunkingArg::Fixed => ChunkingMode::Fixed,
        };
    }
    if c.stub_generator {
        config.generator.kind = GeneratorKind::Stub;
    }
    if c.toy_generator {
        config.generator.kind = GeneratorKind::Toy;
    }
    if let Some(g) = c.generator {
        config.generator.kind = match g {
            GeneratorArg::Stub => GeneratorKind::Stub,
            GeneratorArg::Toy => GeneratorKind::Toy,
            GeneratorArg::Http => GeneratorKind::Http,
        };
    }
    if c.stub_scorer {
        config.rerank.scorer = ScorerKind::Lexical;
    }
    if let Some(s) = c.scorer {
        config.rerank.scorer = match s {
            ScorerArg::Lexical => ScorerKind::Lexical,
            ScorerArg::Http => ScorerKind::Http,
        };
    }
    if let Some(e) = c.embedder {
        config.embedder.provider = match e {
            EmbedderArg::Deterministic => EmbedProvider::Deterministic,
            EmbedderArg::Http => EmbedProvider::Http,
        };
    }
    if let Some(v) = &c.embed_endpoint {
        config.embedder.endpoint = Some(v.clone());
    }
    if let Some(v) = &c.rerank_endpoint {
        config.rerank.endpoint = Some(v.clone());
    }
    if let Some(v) = &c.llm_endpoint {
        config.generator.endpoint = Some(v.clone());
    }
    if let Some(n) = c.n_contexts {
        config.n_contexts = n;
    }
    if let Some(k) = c.candidates_k {
        config.rerank.candidates_k = k;
    }
    if let Some(m) = c.top_m {
        config.rerank.top_m = m;
    }
    config.validate()?;
    Ok(config)
}

fn required(path: Option<PathBuf>, fallback: &Option<PathBuf>, what: &str) -> Result<PathBuf, String> {
    path.or_else(|| fallback.clone())
        .ok_or_else(|| format!("no {what} given; pass --{what} or set paths.{what} in the config"))
}

fn ingest(config: PipelineConfig, corpus: Option<PathBuf>, index_out: Option<PathBuf>, json: bool) -> CliResult {
    let corpus = required(corpus, &config.paths.corpus, "corpus")?;
    let out = index_out
        .or_else(|| config.paths.index.clone())
        .ok_or("no output path given; pass --index-out or set paths.index in the config")?;
    let docs = load_corpus(&corpus)?;
    let pipeline = Pipeline::new(config)?;
    let (index, summary) = pipeline.build_index(&docs, &pipeline.config().chunking)?;
    index.save(&out)?;
    if json {
        println!("{}", serde_json::to_string(&summary)?);
    } else {
        println!(
            "ingested {} documents, {} sentences, {} chunks in {} ms -> {}",
            summary.docs,
            summary.sentences,
            summary.chunks,
            summary.duration_ms,
            out.display()
        );
    }
    Ok(Status::Ok)
}

#[derive(Serialize)]
struct ContextRecord<'a> {
    rank: usize,
    chunk_id: &'a str,
    doc_id: &'a str,
    retrieval_rank: usize,
    similarity: f64,
    rerank_score: Option<f64>,
    text: &'a str,
}

#[derive(Serialize)]
struct QueryRecord<'a> {
    question: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    answer_index: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    answer: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    generated: Option<&'a str>,
    window_warning: bool,
    contexts: Vec<ContextRecord<'a>>,
}

fn query(
    config: PipelineConfig,
    index: Option<PathBuf>,
    question: &str,
    options: Vec<String>,
    use_context: bool,
    use_rerank: bool,
    json: bool,
) -> CliResult {
    let index_path = required(index, &config.paths.index, "index")?;
    let index = VectorIndex::load(&index_path)?;
    let generator = config.generator.build(&config.attention, false)?;
    let n_contexts = config.n_contexts;
    let pipeline = Pipeline::new(config)?;
    let opts = QueryOptions {
        use_context,
        use_rerank,
        n_contexts,
    };
    let (retrieval, contexts) = pipeline.contexts_for(&index, question, opts)?;
    let provenance: Vec<ContextRecord> = retrieval
        .iter()
        .flat_map(|r| r.ranked.iter().take(n_contexts))
        .enumerate()
        .map(|(i, s)| ContextRecord {
            rank: i + 1,
            chunk_id: &s.chunk.chunk_id,
            doc_id: &s.chunk.doc_id,
            retrieval_rank: s.retrieval_rank + 1,
            similarity: s.retrieval_similarity,
            rerank_score: s.rerank_score,
            text: &s.chunk.text,
        })
        .collect();

    let mut record = QueryRecord {
        question,
        answer_index: None,
        answer: None,
        generated: None,
        window_warning: false,
        contexts: provenance,
    };
    let mut status = Status::Ok;
    let generated_text;
    let item;
    if options.is_empty() {
        let prompt = assemble_open_prompt(&pipeline.config().generator.template, &contexts, question, n_contexts);
        let request = GenerationRequest {
            prompt: &prompt,
            item: None,
            contexts: &contexts,
        };
        match generate(generator.as_ref(), &request) {
            Ok(g) => {
                generated_text = g.text;
                record.generated = Some(&generated_text);
                record.window_warning = g.window_warning;
            }
            // offline generators only choose among options
            Err(GenerateError::InvalidItem(_)) => {}
            Err(e) => return Err(e.into()),
        }
    } else {
        item = MCQItem {
            question: question.to_string(),
            options,
            answer_index: 0,
            category: None,
        };
        item.validate()?;
        let (_, generation, predicted) =
            pipeline.generate_answer(&item, &contexts, n_contexts, generator.as_ref())?;
        generated_text = generation.text;
        record.generated = Some(&generated_text);
        record.window_warning = generation.window_warning;
        match predicted {
            Ok(i) => {
                record.answer_index = Some(i);
                record.answer = Some(&item.options[i]);
            }
            Err(_) => status = Status::Degraded,
        }
    }

    let mut out = std::io::stdout().lock();
    if json {
        writeln!(out, "{}", serde_json::to_string(&record)?)?;
    } else {
        if let (Some(i), Some(text)) = (record.answer_index, record.answer) {
            writeln!(out, "answer: option {}: {}", i + 1, text)?;
        } else if let Some(g) = record.generated {
            writeln!(out, "generated: {}", g.trim())?;
        }
        if record.window_warning {
            writeln!(out, "warning: prompt exceeds the generator's context window")?;
        }
        if record.contexts.is_empty() {
            writeln!(out, "contexts: none")?;
        } else {
            writeln!(out, "contexts:")?;
        }
        for c in &record.contexts {
            let score = c.rerank_score.map_or_else(String::new, |s| format!(" rerank={s:.4}"));
            writeln!(out, "  {}. {} sim={:.4}{}", c.rank, c.chunk_id, c.similarity, score)?;
            writeln!(out, "     {}", preview(c.text, 160))?;
        }
    }
    Ok(status)
}

fn preview(text: &str, max_chars: usize) -> String {
    let flat: String = text.split_whitespace().collect::<Vec<_>>().join(" ");
    match flat.char_indices().nth(max_chars) {
        Some((cut, _)) => format!("{}...", &flat[..cut]),
        None => flat,
    }
}

fn load_gold(path: &Option<PathBuf>, index: &VectorIndex, n_items: usize) -> Result<Option<Vec<Vec<String>>>, Box<dyn Error + Send + Sync>> {
    let Some(p) = path else { return Ok(None) };
    let evidence = synth::load_evidence(p)?;
    if evidence.len() != n_items {
        return Err(format!("{} lists {} evidence spans for {} items", p.display(), evidence.len(), n_items).into());
    }
    Ok(Some(gold_chunk_ids(index, &evidence)))
}

fn emit_reports(reports: &[EvalReport], output: &ReportOutput, single: bool) -> CliResult {
    let shown: Vec<EvalReport> = reports
        .iter()
        .cloned()
        .map(|r| if output.timing { r } else { r.without_timing() })
        .collect();
    let body = if single {
        serde_json::to_string_pretty(&shown[0])?
    } else {
        serde_json::to_string_pretty(&shown)?
    } + "\n";
    if let Some(path) = &output.out {
        write_atomic(path, body.as_bytes())?;
    }
    if output.json {
        print!("{body}");
    } else {
        print!("{}", render_table(reports));
    }
    Ok(if reports.iter().any(|r| r.failed > 0) {
        Status::Degraded
    } else {
        Status::Ok
    })
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

fn evaluate(
    config: PipelineConfig,
    index: Option<PathBuf>,
    dataset: &Path,
    gold: Option<PathBuf>,
    ablation: AblationConfig,
    jobs: Option<usize>,
    output: &ReportOutput,
) -> CliResult {
    let index_path = required(index, &config.paths.index, "index")?;
    let items = load_mcq_dataset(dataset)?;
    let index = VectorIndex::load(&index_path)?;
    let gold = load_gold(&gold, &index, items.len())?;
    let generators = GeneratorSet::build(&config.generator, &config.attention)?;
    let pipeline = Pipeline::new(config)?;
    let report = run_eval(
        &pipeline,
        &index,
        &items,
        gold.as_deref(),
        &ablation,
        generators.for_config(&ablation),
        jobs,
    )?;
    emit_reports(&[report], output, true)
}

fn ablate(
    config: PipelineConfig,
    corpus: Option<PathBuf>,
    dataset: &Path,
    gold: Option<PathBuf>,
    grid: &[String],
    jobs: Option<usize>,
    output: &ReportOutput,
) -> CliResult {
    let corpus = required(corpus, &config.paths.corpus, "corpus")?;
    let items = load_mcq_dataset(dataset)?;
    let docs = load_corpus(&corpus)?;
    let evidence = gold.as_deref().map(synth::load_evidence).transpose()?;
    if let Some(e) = &evidence {
        if e.len() != items.len() {
            return Err(format!("gold lists {} evidence spans for {} items", e.len(), items.len()).into());
        }
    }
    let base = AblationConfig {
        use_semantic_chunking: config.chunking.mode == ChunkingMode::Semantic,
        n_contexts: config.n_contexts,
        ..AblationConfig::default()
    };
    let toggles: Vec<&str> = grid.iter().map(String::as_str).collect();
    let configs = expand_grid(&base, &toggles)?;
    let generators = GeneratorSet::build(&config.generator, &config.attention)?;
    let pipeline = Pipeline::new(config)?;
    let indexes = CorpusIndexes::build(&pipeline, &docs, evidence.as_deref(), &configs)?;
    let reports = compare_ablations(&pipeline, &indexes, &items, &configs, &generators, jobs)?;
    emit_reports(&reports, output, false)
}

#[derive(Serialize)]
struct ChunkLine<'a> {
    doc_id: &'a str,
    chunk_id: &'a str,
    sentence_range: (usize, usize),
    text: &'a str,
}

fn chunk_inspect(config: PipelineConfig, corpus: Option<PathBuf>, doc: Option<String>) -> CliResult {
    let corpus = required(corpus, &config.paths.corpus, "corpus")?;
    let mut docs = load_corpus(&corpus)?;
    if let Some(id) = &doc {
        docs.retain(|d| &d.id == id);
        if docs.is_empty() {
            return Err(format!("no document {id:?} in {}", corpus.display()).into());
        }
    }
    let pipeline = Pipeline::new(config)?;
    let chunks = pipeline.chunk_corpus(&docs, &pipeline.config().chunking)?;
    let mut out = std::io::stdout().lock();
    for c in chunks.iter().flatten() {
        let line = ChunkLine {
            doc_id: &c.doc_id,
            chunk_id: &c.chunk_id,
            sentence_range: c.sentence_range,
            text: &c.text,
        };
        writeln!(out, "{}", serde_json::to_string(&line)?)?;
    }
    Ok(Status::Ok)
}

fn write_synth(
    config: &PipelineConfig,
    seed: u64,
    out: &Path,
    kind: SynthKind,
    docs: usize,
    questions: usize,
    oversize: Option<usize>,
) -> CliResult {
    if docs == 0 || questions == 0 {
        return Err("--docs and --questions must be positive".into());
    }
    let corpus = match kind {
        SynthKind::Planted => eval::synth::planted_corpus(seed, docs, questions),
        SynthKind::RerankTrap => eval::synth::rerank_trap_corpus(seed, questions),
        SynthKind::Straddle => eval::synth::straddle_corpus(seed, questions, &config.chunking, oversize),
    };
    corpus.write_to(out)?;
    println!(
        "wrote {} documents and {} questions to {}",
        corpus.documents.len(),
        corpus.items.len(),
        out.display()
    );
    Ok(Status::Ok)
}
