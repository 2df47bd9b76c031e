//! Multiple-choice evaluation: datasets, ablation arms, reports, and
//! planted synthetic corpora with known gold evidence.

mod dataset;
pub mod synth;

use std::collections::{BTreeMap, HashSet};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chunker::{ChunkingMode, Document};
use crate::generate::{GenerateError, Generator, GeneratorConfig, MCQItem};
use crate::index::VectorIndex;
use crate::neural::AttentionConfig;
use crate::pipeline::{Pipeline, PipelineError, QueryOptions};
use crate::rerank::ScoredChunk;

pub use dataset::{load_mcq_dataset, parse_mcq_dataset, write_mcq_dataset, DatasetError};
pub use synth::{gold_chunk_ids, Evidence, SynthCorpus};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("gold evidence has {got} entries for {expected} items")]
    GoldMismatch { expected: usize, got: usize },
    #[error("an ablation comparison needs at least two configs, got {0}")]
    TooFewConfigs(usize),
    #[error("no {0} index was built for this comparison")]
    MissingIndex(&'static str),
    #[error("invalid ablation config: {0}")]
    InvalidConfig(String),
    #[error("cannot start worker pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationConfig {
    pub use_context: bool,
    pub use_semantic_chunking: bool,
    pub use_rerank: bool,
    pub use_selfextend: bool,
    pub n_contexts: usize,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            use_context: true,
            use_semantic_chunking: true,
            use_rerank: true,
            use_selfextend: false,
            n_contexts: 3,
        }
    }
}

impl AblationConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.n_contexts == 0 {
            return Err(EvalError::InvalidConfig("n_contexts must be positive".into()));
        }
        Ok(())
    }

    /// Toggle acronyms in the order SE, RR, SC, MC; `no-context` when
    /// retrieval is off and `base` when no toggle is set.
    pub fn label(&self) -> String {
        if !self.use_context {
            return if self.use_selfextend { "no-context+SE".into() } else { "no-context".into() };
        }
        let mut parts = Vec::new();
        if self.use_selfextend {
            parts.push("SE");
        }
        if self.use_rerank {
            parts.push("RR");
        }
        if self.use_semantic_chunking {
            parts.push("SC");
        }
        if self.n_contexts > 1 {
            parts.push("MC");
        }
        if parts.is_empty() {
            "base".into()
        } else {
            parts.join("+")
        }
    }

    fn query_options(&self) -> QueryOptions {
        QueryOptions {
            use_context: self.use_context,
            use_rerank: self.use_rerank,
            n_contexts: self.n_contexts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryScore {
    pub total: usize,
    pub correct: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencyStats {
    pub mean_ms: f64,
    pub p95_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ItemFailure {
    pub item: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub label: String,
    pub config_echo: AblationConfig,
    pub total: usize,
    pub correct: usize,
    /// Items with no usable answer, including generator failures.
    pub unparsable: usize,
    /// The subset of `unparsable` caused by errors rather than bad replies.
    pub failed: usize,
    pub accuracy: f64,
    pub per_category: BTreeMap<String, CategoryScore>,
    /// Share of items whose gold chunk is in the first 15 contexts.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recall_at_15: Option<f64>,
    /// Share of items whose gold chunk is among the raw retrieval candidates.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recall_at_150: Option<f64>,
    pub window_warnings: usize,
    pub failures: Vec<ItemFailure>,
    /// Wall-clock figures vary run to run; drop them for reproducible output.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub latency: Option<LatencyStats>,
}

impl EvalReport {
    pub fn without_timing(mut self) -> Self {
        self.latency = None;
        self
    }
}

struct Outcome {
    correct: bool,
    unparsable: bool,
    failure: Option<String>,
    window_warning: bool,
    gold_in_top15: Option<bool>,
    gold_in_candidates: Option<bool>,
    latency_ms: f64,
}

fn ratio(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        n as f64 / d as f64
    }
}

fn evaluate_item(
    pipeline: &Pipeline,
    index: &VectorIndex,
    item: &MCQItem,
    gold: Option<&HashSet<&str>>,
    ablation: &AblationConfig,
    generator: &dyn Generator,
) -> Outcome {
    let started = Instant::now();
    let mut outcome = Outcome {
        correct: false,
        unparsable: true,
        failure: None,
        window_warning: false,
        gold_in_top15: None,
        gold_in_candidates: None,
        latency_ms: 0.0,
    };
    let generated = pipeline
        .contexts_for(index, &item.question, ablation.query_options())
        .and_then(|(retrieval, contexts)| {
            if let (Some(r), Some(g)) = (&retrieval, gold) {
                let hit = |list: &[ScoredChunk], k: usize| {
                    list.iter().take(k).any(|s| g.contains(s.chunk.chunk_id.as_str()))
                };
                outcome.gold_in_top15 = Some(hit(&r.ranked, 15));
                outcome.gold_in_candidates = Some(hit(&r.candidates, 150));
            }
            pipeline.generate_answer(item, &contexts, ablation.n_contexts, generator)
        });
    match generated {
        Ok((_, generation, predicted)) => {
            outcome.correct = predicted.as_ref().is_ok_and(|&p| p == item.answer_index);
            outcome.unparsable = predicted.is_err();
            outcome.window_warning = generation.window_warning;
        }
        Err(e) => outcome.failure = Some(e.to_string()),
    }
    outcome.latency_ms = started.elapsed().as_secs_f64() * 1e3;
    outcome
}

fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, EvalError> {
    match jobs {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| EvalError::Pool(e.to_string()))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

/// Answers every item under one ablation arm. Items run concurrently; the
/// report does not depend on scheduling. `gold` lists acceptable chunk ids
/// per item and enables the recall figures.
pub fn run_eval(
    pipeline: &Pipeline,
    index: &VectorIndex,
    dataset: &[MCQItem],
    gold: Option<&[Vec<String>]>,
    ablation: &AblationConfig,
    generator: &dyn Generator,
    jobs: Option<usize>,
) -> Result<EvalReport, EvalError> {
    ablation.validate()?;
    if dataset.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    if let Some(g) = gold {
        if g.len() != dataset.len() {
            return Err(EvalError::GoldMismatch {
                expected: dataset.len(),
                got: g.len(),
            });
        }
    }
    let gold_sets: Option<Vec<HashSet<&str>>> =
        gold.map(|g| g.iter().map(|ids| ids.iter().map(String::as_str).collect()).collect());

    let outcomes: Vec<Outcome> = with_pool(jobs, || {
        dataset
            .par_iter()
            .enumerate()
            .map(|(i, item)| {
                let g = gold_sets.as_ref().map(|s| &s[i]);
                evaluate_item(pipeline, index, item, g, ablation, generator)
            })
            .collect()
    })?;

    let total = dataset.len();
    let correct = outcomes.iter().filter(|o| o.correct).count();
    let mut per_category: BTreeMap<String, CategoryScore> = BTreeMap::new();
    for (item, o) in dataset.iter().zip(&outcomes) {
        if let Some(c) = &item.category {
            let entry = per_category.entry(c.clone()).or_insert(CategoryScore {
                total: 0,
                correct: 0,
                accuracy: 0.0,
            });
            entry.total += 1;
            entry.correct += o.correct as usize;
        }
    }
    for score in per_category.values_mut() {
        score.accuracy = ratio(score.correct, score.total);
    }
    let recall = |f: fn(&Outcome) -> Option<bool>| {
        let known: Vec<bool> = outcomes.iter().filter_map(f).collect();
        (gold.is_some() && ablation.use_context)
            .then(|| ratio(known.iter().filter(|&&b| b).count(), total))
    };
    let mut latencies: Vec<f64> = outcomes.iter().map(|o| o.latency_ms).collect();
    latencies.sort_by(f64::total_cmp);
    let p95_rank = ((0.95 * total as f64).ceil() as usize).clamp(1, total);

    Ok(EvalReport {
        label: ablation.label(),
        config_echo: *ablation,
        total,
        correct,
        unparsable: outcomes.iter().filter(|o| o.unparsable).count(),
        failed: outcomes.iter().filter(|o| o.failure.is_some()).count(),
        accuracy: ratio(correct, total),
        per_category,
        recall_at_15: recall(|o| o.gold_in_top15),
        recall_at_150: recall(|o| o.gold_in_candidates),
        window_warnings: outcomes.iter().filter(|o| o.window_warning).count(),
        failures: outcomes
            .iter()
            .enumerate()
            .filter_map(|(i, o)| o.failure.clone().map(|error| ItemFailure { item: i, error }))
            .collect(),
        latency: Some(LatencyStats {
            mean_ms: latencies.iter().sum::<f64>() / total as f64,
            p95_ms: latencies[p95_rank - 1],
        }),
    })
}

/// An index plus the gold chunk ids resolved against it, if known.
pub struct IndexedCorpus {
    pub index: VectorIndex,
    pub gold: Option<Vec<Vec<String>>>,
}

/// One shared index per chunking strategy.
#[derive(Default)]
pub struct CorpusIndexes {
    pub semantic: Option<IndexedCorpus>,
    pub fixed: Option<IndexedCorpus>,
}

impl CorpusIndexes {
    /// Builds the indexes that `configs` need from `docs`, using the
    /// pipeline's chunking settings with the mode overridden.
    pub fn build(
        pipeline: &Pipeline,
        docs: &[Document],
        evidence: Option<&[Evidence]>,
        configs: &[AblationConfig],
    ) -> Result<Self, EvalError> {
        let build = |mode: ChunkingMode| -> Result<IndexedCorpus, EvalError> {
            let chunking = crate::chunker::ChunkingConfig {
                mode,
                ..pipeline.config().chunking.clone()
            };
            let (index, _) = pipeline.build_index(docs, &chunking)?;
            let gold = evidence.map(|e| gold_chunk_ids(&index, e));
            Ok(IndexedCorpus { index, gold })
        };
        let needs = |semantic: bool| configs.iter().any(|c| c.use_semantic_chunking == semantic);
        Ok(Self {
            semantic: needs(true).then(|| build(ChunkingMode::Semantic)).transpose()?,
            fixed: needs(false).then(|| build(ChunkingMode::Fixed)).transpose()?,
        })
    }

    fn for_config(&self, config: &AblationConfig) -> Result<&IndexedCorpus, EvalError> {
        if config.use_semantic_chunking {
            self.semantic.as_ref().ok_or(EvalError::MissingIndex("semantic"))
        } else {
            self.fixed.as_ref().ok_or(EvalError::MissingIndex("fixed-size"))
        }
    }
}

/// Generators for arms with and without SelfExtend.
pub struct GeneratorSet {
    pub standard: Box<dyn Generator>,
    pub extended: Box<dyn Generator>,
}

impl GeneratorSet {
    pub fn build(config: &GeneratorConfig, attention: &AttentionConfig) -> Result<Self, GenerateError> {
        Ok(Self {
            standard: config.build(attention, false)?,
            extended: config.build(attention, true)?,
        })
    }

    pub fn for_config(&self, config: &AblationConfig) -> &dyn Generator {
        if config.use_selfextend {
            self.extended.as_ref()
        } else {
            self.standard.as_ref()
        }
    }
}

/// Runs every config over the same dataset, one report per config in order.
pub fn compare_ablations(
    pipeline: &Pipeline,
    indexes: &CorpusIndexes,
    dataset: &[MCQItem],
    configs: &[AblationConfig],
    generators: &GeneratorSet,
    jobs: Option<usize>,
) -> Result<Vec<EvalReport>, EvalError> {
    if configs.len() < 2 {
        return Err(EvalError::TooFewConfigs(configs.len()));
    }
    configs
        .iter()
        .map(|c| {
            let corpus = indexes.for_config(c)?;
            run_eval(
                pipeline,
                &corpus.index,
                dataset,
                corpus.gold.as_deref(),
                c,
                generators.for_config(c),
                jobs,
            )
        })
        .collect()
}

/// Expands the listed toggles (`SE`, `RR`, `SC`, `MC`, `CTX`) into every
/// on/off combination over `base`, all-off first; the first toggle varies
/// slowest. With `MC` off one context is used.
pub fn expand_grid(base: &AblationConfig, toggles: &[&str]) -> Result<Vec<AblationConfig>, EvalError> {
    let mut names: Vec<String> = Vec::new();
    for t in toggles {
        let t = t.trim().to_ascii_uppercase();
        if !["SE", "RR", "SC", "MC", "CTX"].contains(&t.as_str()) {
            return Err(EvalError::InvalidConfig(format!("unknown toggle {t:?}")));
        }
        if names.contains(&t) {
            return Err(EvalError::InvalidConfig(format!("toggle {t} listed twice")));
        }
        names.push(t);
    }
    if names.is_empty() {
        return Err(EvalError::InvalidConfig("the grid needs at least one toggle".into()));
    }
    let multi = base.n_contexts.max(2);
    Ok((0..1usize << names.len())
        .map(|mask| {
            let mut c = *base;
            for (bit, name) in names.iter().enumerate() {
                let on = mask >> (names.len() - 1 - bit) & 1 == 1;
                match name.as_str() {
                    "SE" => c.use_selfextend = on,
                    "RR" => c.use_rerank = on,
                    "SC" => c.use_semantic_chunking = on,
                    "MC" => c.n_contexts = if on { multi } else { 1 },
                    _ => c.use_context = on,
                }
            }
            c
        })
        .collect())
}

/// Human-readable comparison table.
pub fn render_table(reports: &[EvalReport]) -> String {
    let mut out = format!(
        "{:<18} {:>6} {:>8} {:>10} {:>9} {:>9} {:>10}\n",
        "config", "total", "correct", "accuracy", "recall15", "recall150", "mean_ms"
    );
    let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
    for r in reports {
        out.push_str(&format!(
            "{:<18} {:>6} {:>8} {:>10.4} {:>9} {:>9} {:>10}\n",
            r.label,
            r.total,
            r.correct,
            r.accuracy,
            opt(r.recall_at_15),
            opt(r.recall_at_150),
            r.latency.as_ref().map_or_else(|| "-".to_string(), |l| format!("{:.2}", l.mean_ms)),
        ));
    }
    out
}
