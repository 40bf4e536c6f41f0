//! The dataset-generation pipeline: uniform label sampling into prompt
//! instantiation into decoding, then filtering, exact deduplication, and
//! honest exhaustion accounting.
//!
//! Generation is parallelizable across sample indices. Worker `i` derives
//! its rng streams from `(master seed, i)` and results are folded in
//! ascending index order, so the output is byte-identical regardless of
//! worker count or scheduling.

mod entity;
mod io;

pub use entity::{entity_candidates, select_answer_entity};
pub use io::{read_dataset, read_examples, write_dataset, write_examples};

use std::collections::{BTreeMap, HashSet};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decoding::{decode_sequence, DecodeParams, StopReason};
use crate::error::{Error, Result};
use crate::lm::LmBackend;
use crate::prompting::{instantiate_prompt, sample_label, SlotBindings, TaskKind, TaskSpec};
use crate::{rng, text};

/// Attempts are processed in fixed-size batches; the batch size only
/// bounds speculative work and never affects the output.
const BATCH: u64 = 256;

/// The attempt budget per requested example before a shortfall is reported.
pub const MAX_ATTEMPTS_PER_EXAMPLE: u64 = 20;

/// One generated record: text, optional context, the label it was steered
/// toward (or the selected answer span for QA), and provenance.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PseudoExample {
    pub idx: u64,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<String>,
    pub label: String,
    pub template_id: String,
    pub seed: u64,
}

/// Sidecar accounting for one generation run. `achieved < requested`
/// always comes with `attempts == 20 * requested` rather than an error:
/// weak prompts that cannot produce enough distinct samples are reported,
/// not hidden.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationManifest {
    pub task: String,
    pub requested: usize,
    pub achieved: usize,
    pub attempts: u64,
    pub rejections: BTreeMap<String, u64>,
    pub config_digest: String,
    /// Pre-filter sampled-label counts (classification tasks only).
    pub label_counts: BTreeMap<String, u64>,
}

/// An ordered pseudo-dataset plus its generation manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoDataset {
    pub examples: Vec<PseudoExample>,
    pub manifest: GenerationManifest,
}

impl PseudoDataset {
    pub fn task_id(&self) -> &str {
        &self.manifest.task
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// The first `size` examples in sample-index order.
    pub fn prefix(&self, size: usize) -> PseudoDataset {
        let examples: Vec<PseudoExample> = self.examples.iter().take(size).cloned().collect();
        let mut manifest = self.manifest.clone();
        manifest.achieved = examples.len();
        manifest.requested = size;
        PseudoDataset { examples, manifest }
    }
}

/// Length and closing-quote acceptance rules.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterRules {
    pub min_tokens: usize,
    pub max_tokens: usize,
    pub require_closing_quote: bool,
}

impl Default for FilterRules {
    fn default() -> Self {
        FilterRules {
            min_tokens: 5,
            max_tokens: 128,
            require_closing_quote: false,
        }
    }
}

impl FilterRules {
    pub fn validate(&self) -> Result<()> {
        if self.min_tokens >= self.max_tokens {
            return Err(Error::InvalidFilterRules);
        }
        Ok(())
    }

    /// Rules for a task: its length bounds, with the closing-quote check
    /// auto-set from whether the generation template opens a quote.
    pub fn for_task(task: &TaskSpec) -> FilterRules {
        FilterRules {
            min_tokens: task.min_gen_tokens,
            max_tokens: task.max_gen_tokens,
            require_closing_quote: task.generation.opens_quote,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    TooShort,
    TooLong,
    NoClosingQuote,
}

impl RejectReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            RejectReason::TooShort => "too-short",
            RejectReason::TooLong => "too-long",
            RejectReason::NoClosingQuote => "no-closing-quote",
        }
    }
}

/// Check one generation against the rules; `None` means accept. The
/// closing-quote rule is satisfied exactly when the decode terminated via
/// the quote stop token, so accepted text never carries a trailing quote.
pub fn filter_example(text: &str, stop: StopReason, rules: &FilterRules) -> Option<RejectReason> {
    let count = text::split_tokens(text).len();
    if count < rules.min_tokens {
        return Some(RejectReason::TooShort);
    }
    if count > rules.max_tokens {
        return Some(RejectReason::TooLong);
    }
    if rules.require_closing_quote && stop != StopReason::Quote {
        return Some(RejectReason::NoClosingQuote);
    }
    None
}

/// Digest of everything that determines a generation run's output.
fn generation_config_digest(
    task: &TaskSpec,
    n: usize,
    params: &DecodeParams,
    rules: &FilterRules,
    seed: u64,
) -> String {
    use crate::decoding::Strategy;
    let mut canon = String::new();
    canon.push_str(&format!("task={}\n", task.id));
    canon.push_str(&format!("template={}\n", task.generation.id));
    canon.push_str(&format!("n={n}\n"));
    canon.push_str(&format!("strategy={}\n", params.strategy.name()));
    match params.strategy {
        Strategy::Greedy => {}
        Strategy::TopK { k } => canon.push_str(&format!("k={k}\n")),
        Strategy::Nucleus { p } => canon.push_str(&format!("p={p:.6}\n")),
    }
    canon.push_str(&format!("temperature={:.6}\n", params.temperature));
    canon.push_str(&format!("max_new_tokens={}\n", params.max_new_tokens));
    if let Some(debias) = &params.debias {
        canon.push_str(&format!("debias.lambda={:.6}\n", debias.lambda));
    }
    canon.push_str(&format!(
        "filter={},{},{}\n",
        rules.min_tokens, rules.max_tokens, rules.require_closing_quote
    ));
    canon.push_str(&format!("seed={seed}\n"));
    rng::sha256_hex(canon.as_bytes())
}

/// One line of the optional per-run trace debug file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub idx: u64,
    pub prompt: Vec<crate::lm::TokenId>,
    pub generated: Vec<crate::lm::TokenId>,
    pub step_probs: Vec<f64>,
    pub stop: &'static str,
}

impl TraceRecord {
    fn new(idx: u64, trace: crate::decoding::GenerationTrace) -> Self {
        TraceRecord {
            idx,
            prompt: trace.prompt,
            generated: trace.generated,
            step_probs: trace.step_probs,
            stop: trace.stop.as_str(),
        }
    }
}

/// Write decode traces as JSON-lines, one trace per line.
pub fn write_traces(traces: &[TraceRecord], path: &std::path::Path) -> Result<()> {
    let mut out = String::new();
    for record in traces {
        out.push_str(
            &serde_json::to_string(record)
                .map_err(|e| Error::Catalog(format!("serializing trace {}: {e}", record.idx)))?,
        );
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Outcome of one generation attempt, before the sequential accept fold.
struct Attempt {
    idx: u64,
    context: Option<String>,
    label: Option<String>,
    text: String,
    reject: Option<&'static str>,
    trace: Option<crate::decoding::GenerationTrace>,
}

/// Run attempts in parallel batches and fold them in index order until
/// `n` distinct examples are accepted or the attempt budget is exhausted.
fn run_attempt_loop<F>(
    task: &TaskSpec,
    n: usize,
    count_labels: bool,
    collect_traces: bool,
    digest: String,
    seed: u64,
    attempt: F,
) -> Result<(PseudoDataset, Vec<TraceRecord>)>
where
    F: Fn(u64) -> Result<Attempt> + Sync,
{
    let max_attempts = MAX_ATTEMPTS_PER_EXAMPLE * n as u64;
    let mut examples: Vec<PseudoExample> = Vec::with_capacity(n);
    let mut traces: Vec<TraceRecord> = Vec::new();
    let mut seen: HashSet<(Option<String>, String, String)> = HashSet::new();
    let mut rejections: BTreeMap<String, u64> = BTreeMap::new();
    let mut label_counts: BTreeMap<String, u64> = BTreeMap::new();
    let mut consumed = 0u64;

    let mut next = 0u64;
    'outer: while next < max_attempts && examples.len() < n {
        let end = (next + BATCH).min(max_attempts);
        let batch: Vec<Result<Attempt>> = (next..end).into_par_iter().map(&attempt).collect();
        for outcome in batch {
            let attempt = outcome?;
            consumed = attempt.idx + 1;
            if collect_traces {
                if let Some(trace) = attempt.trace {
                    traces.push(TraceRecord::new(attempt.idx, trace));
                }
            }
            if count_labels {
                if let Some(label) = &attempt.label {
                    *label_counts.entry(label.clone()).or_insert(0) += 1;
                }
            }
            if let Some(reason) = attempt.reject {
                *rejections.entry(reason.to_string()).or_insert(0) += 1;
                continue;
            }
            let label = attempt.label.expect("accepted attempt carries a label");
            let key = (attempt.context.clone(), attempt.text.clone(), label.clone());
            if !seen.insert(key) {
                *rejections.entry("duplicate".to_string()).or_insert(0) += 1;
                continue;
            }
            examples.push(PseudoExample {
                idx: attempt.idx,
                text: attempt.text,
                context: attempt.context,
                label,
                template_id: task.generation.id.clone(),
                seed,
            });
            if examples.len() == n {
                break 'outer;
            }
        }
        next = end;
    }

    let achieved = examples.len();
    let dataset = PseudoDataset {
        examples,
        manifest: GenerationManifest {
            task: task.id.clone(),
            requested: n,
            achieved,
            attempts: consumed,
            rejections,
            config_digest: digest,
            label_counts,
        },
    };
    Ok((dataset, traces))
}

/// Per-label decode parameters: when self-debiasing is on, the debiasing
/// prompts for a target label are the generation prompts of all other
/// labels (with the same context bound, for pair tasks).
fn params_for_label(
    backend: &dyn LmBackend,
    task: &TaskSpec,
    params: &DecodeParams,
    target: usize,
    context: Option<&str>,
) -> Result<DecodeParams> {
    let mut out = params.clone();
    if let Some(debias) = &mut out.debias {
        debias.prompts.clear();
        for label in &task.labels {
            if label.index == target {
                continue;
            }
            let mut bindings = SlotBindings::new().label_word(label.verbalizer_text());
            if let Some(c) = context {
                bindings = bindings.context(c);
            }
            let prompt = instantiate_prompt(&task.generation, &bindings)?;
            debias.prompts.push(backend.vocab().tokenize(&prompt));
        }
    }
    Ok(out)
}

/// Generate a single-sentence classification dataset: sample a label
/// uniformly, steer a generation with its prompt, filter, deduplicate.
pub fn generate_single_sentence_dataset(
    backend: &dyn LmBackend,
    task: &TaskSpec,
    n: usize,
    params: &DecodeParams,
    rules: &FilterRules,
    seed: u64,
) -> Result<PseudoDataset> {
    Ok(single_sentence_impl(backend, task, n, params, rules, seed, false)?.0)
}

/// As [`generate_single_sentence_dataset`], also returning the decode
/// trace of every consumed attempt for the per-run debug file.
pub fn generate_single_sentence_dataset_traced(
    backend: &dyn LmBackend,
    task: &TaskSpec,
    n: usize,
    params: &DecodeParams,
    rules: &FilterRules,
    seed: u64,
) -> Result<(PseudoDataset, Vec<TraceRecord>)> {
    single_sentence_impl(backend, task, n, params, rules, seed, true)
}

#[allow(clippy::too_many_arguments)]
fn single_sentence_impl(
    backend: &dyn LmBackend,
    task: &TaskSpec,
    n: usize,
    params: &DecodeParams,
    rules: &FilterRules,
    seed: u64,
    collect_traces: bool,
) -> Result<(PseudoDataset, Vec<TraceRecord>)> {
    if task.kind != TaskKind::SingleSentenceClassification {
        return Err(Error::TaskMismatch {
            expected: TaskKind::SingleSentenceClassification.as_str().into(),
            got: task.kind.as_str().into(),
        });
    }
    if task.labels.is_empty() {
        return Err(Error::EmptyLabelSet);
    }
    params.validate()?;
    rules.validate()?;

    let digest = generation_config_digest(task, n, params, rules, seed);
    let stop_on_quote = task.generation.opens_quote;

    // Prompts and per-label decode params are context-free here, so build
    // them once up front.
    let mut prompts = Vec::with_capacity(task.labels.len());
    let mut label_params = Vec::with_capacity(task.labels.len());
    for label in &task.labels {
        let text = instantiate_prompt(
            &task.generation,
            &SlotBindings::new().label_word(label.verbalizer_text()),
        )?;
        prompts.push(backend.vocab().tokenize(&text));
        label_params.push(params_for_label(backend, task, params, label.index, None)?);
    }

    run_attempt_loop(task, n, true, collect_traces, digest, seed, |i| {
        let mut label_rng = rng::stream(seed, rng::LABEL_SAMPLER, i);
        let label = sample_label(&task.labels, &mut label_rng)?;
        let mut decoder_rng = rng::stream(seed, rng::DECODER, i);
        let trace = decode_sequence(
            backend,
            &prompts[label.index],
            &label_params[label.index],
            stop_on_quote,
            &mut decoder_rng,
        )?;
        let text = backend.vocab().detokenize(&trace.generated);
        let reject = filter_example(&text, trace.stop, rules).map(|r| r.as_str());
        Ok(Attempt {
            idx: i,
            context: None,
            label: Some(label.name.clone()),
            text,
            reject,
            trace: Some(trace),
        })
    })
}

/// Generate a sentence-pair or question-answering dataset in two steps:
/// sample a context uniformly from the corpus, then steer the second
/// sentence with a prompt built from the context and either a sampled
/// label (classification, optionally self-debiased) or a selected answer
/// entity (QA). Contexts without any entity candidate are skipped and
/// counted in the manifest.
pub fn generate_pair_dataset(
    backend: &dyn LmBackend,
    task: &TaskSpec,
    context_corpus: &[String],
    n: usize,
    params: &DecodeParams,
    rules: &FilterRules,
    seed: u64,
) -> Result<PseudoDataset> {
    Ok(pair_impl(backend, task, context_corpus, n, params, rules, seed, false)?.0)
}

/// As [`generate_pair_dataset`], also returning the decode trace of every
/// consumed attempt for the per-run debug file.
pub fn generate_pair_dataset_traced(
    backend: &dyn LmBackend,
    task: &TaskSpec,
    context_corpus: &[String],
    n: usize,
    params: &DecodeParams,
    rules: &FilterRules,
    seed: u64,
) -> Result<(PseudoDataset, Vec<TraceRecord>)> {
    pair_impl(backend, task, context_corpus, n, params, rules, seed, true)
}

#[allow(clippy::too_many_arguments)]
fn pair_impl(
    backend: &dyn LmBackend,
    task: &TaskSpec,
    context_corpus: &[String],
    n: usize,
    params: &DecodeParams,
    rules: &FilterRules,
    seed: u64,
    collect_traces: bool,
) -> Result<(PseudoDataset, Vec<TraceRecord>)> {
    if task.kind == TaskKind::SingleSentenceClassification {
        return Err(Error::TaskMismatch {
            expected: "sentence-pair-classification or question-answering".into(),
            got: task.kind.as_str().into(),
        });
    }
    if context_corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if task.kind.is_classification() && task.labels.is_empty() {
        return Err(Error::EmptyLabelSet);
    }
    params.validate()?;
    rules.validate()?;

    let digest = generation_config_digest(task, n, params, rules, seed);
    let stop_on_quote = task.generation.opens_quote;
    let classification = task.kind.is_classification();

    run_attempt_loop(task, n, classification, collect_traces, digest, seed, |i| {
        let mut context_rng = rng::stream(seed, rng::CONTEXT_SAMPLER, i);
        let context = context_corpus[context_rng.random_range(0..context_corpus.len())].clone();

        let (label_name, label_word, decode_params) = if classification {
            let mut label_rng = rng::stream(seed, rng::LABEL_SAMPLER, i);
            let label = sample_label(&task.labels, &mut label_rng)?;
            let params = params_for_label(backend, task, params, label.index, Some(&context))?;
            (label.name.clone(), label.verbalizer_text(), params)
        } else {
            let mut entity_rng = rng::stream(seed, rng::ENTITY_SAMPLER, i);
            match select_answer_entity(&context, &mut entity_rng) {
                Ok(answer) => (answer.clone(), answer, params.clone()),
                Err(Error::NoEntityFound) => {
                    return Ok(Attempt {
                        idx: i,
                        context: Some(context),
                        label: None,
                        text: String::new(),
                        reject: Some("no-entity"),
                        trace: None,
                    });
                }
                Err(e) => return Err(e),
            }
        };

        let prompt_text = instantiate_prompt(
            &task.generation,
            &SlotBindings::new()
                .context(context.clone())
                .label_word(label_word),
        )?;
        let prompt = backend.vocab().tokenize(&prompt_text);
        let mut decoder_rng = rng::stream(seed, rng::DECODER, i);
        let trace = decode_sequence(
            backend,
            &prompt,
            &decode_params,
            stop_on_quote,
            &mut decoder_rng,
        )?;
        let text = backend.vocab().detokenize(&trace.generated);
        let reject = filter_example(&text, trace.stop, rules).map(|r| r.as_str());
        Ok(Attempt {
            idx: i,
            context: Some(context),
            label: Some(label_name),
            text,
            reject,
            trace: Some(trace),
        })
    })
}
