//! Evaluation metrics and dataset-quality analysis: accuracy, extractive-QA
//! EM/F1 with the usual answer normalization, BLEU-4/Self-BLEU diversity,
//! and validator-based correctness, rolled up into the
//! diversity-vs-correctness report.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::synthesis::PseudoDataset;
use crate::tam::{tam_predict, TamModel};
use crate::{rng, text};

/// Metric outcomes for one evaluation run.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub task: String,
    pub metrics: BTreeMap<String, f64>,
    pub examples: usize,
    pub config_digest: String,
}

/// One row of the diversity/correctness comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct QualityRow {
    pub strategy: String,
    pub self_bleu4: f64,
    pub correctness: f64,
    pub size: usize,
}

/// Per-decoding-strategy dataset quality, one row per evaluated dataset,
/// sorted by strategy label.
#[derive(Debug, Clone, PartialEq)]
pub struct QualityReport {
    pub task: String,
    pub rows: Vec<QualityRow>,
}

/// Round to the 4 decimal places used in serialized reports.
pub fn round4(v: f64) -> f64 {
    (v * 10_000.0).round() / 10_000.0
}

/// Fraction of exact label matches.
pub fn accuracy<S: AsRef<str>, T: AsRef<str>>(predictions: &[S], golds: &[T]) -> Result<f64> {
    if predictions.len() != golds.len() {
        return Err(Error::LengthMismatch {
            predictions: predictions.len(),
            golds: golds.len(),
        });
    }
    if predictions.is_empty() {
        return Err(Error::EmptyInput);
    }
    let hits = predictions
        .iter()
        .zip(golds)
        .filter(|(p, g)| p.as_ref() == g.as_ref())
        .count();
    Ok(hits as f64 / predictions.len() as f64)
}

/// Answer normalization: lowercase, strip punctuation, drop the articles
/// a/an/the, collapse whitespace.
pub fn normalize_answer(s: &str) -> String {
    let lower = s.to_lowercase();
    let stripped: String = lower
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect();
    stripped
        .split_whitespace()
        .filter(|t| !matches!(*t, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn token_counts(tokens: &[&str]) -> HashMap<String, u64> {
    let mut counts = HashMap::new();
    for t in tokens {
        *counts.entry(t.to_string()).or_insert(0) += 1;
    }
    counts
}

/// Exact match and token-multiset F1 of a prediction against any of the
/// gold answers, after normalization. Two empty normalized strings match
/// perfectly; one empty side scores zero.
pub fn em_f1<S: AsRef<str>>(prediction: &str, golds: &[S]) -> Result<(f64, f64)> {
    if golds.is_empty() {
        return Err(Error::EmptyGolds);
    }
    let pred = normalize_answer(prediction);
    let pred_tokens: Vec<&str> = pred.split_whitespace().collect();
    let pred_counts = token_counts(&pred_tokens);

    let mut em = 0.0;
    let mut best_f1 = 0.0f64;
    for gold in golds {
        let gold = normalize_answer(gold.as_ref());
        if gold == pred {
            em = 1.0;
        }
        let gold_tokens: Vec<&str> = gold.split_whitespace().collect();
        let f1 = if pred_tokens.is_empty() && gold_tokens.is_empty() {
            1.0
        } else if pred_tokens.is_empty() || gold_tokens.is_empty() {
            0.0
        } else {
            let gold_counts = token_counts(&gold_tokens);
            let overlap: u64 = pred_counts
                .iter()
                .map(|(t, &c)| c.min(gold_counts.get(t).copied().unwrap_or(0)))
                .sum();
            if overlap == 0 {
                0.0
            } else {
                let precision = overlap as f64 / pred_tokens.len() as f64;
                let recall = overlap as f64 / gold_tokens.len() as f64;
                2.0 * precision * recall / (precision + recall)
            }
        };
        best_f1 = best_f1.max(f1);
    }
    Ok((em, best_f1))
}

const MAX_NGRAM: usize = 4;

/// Closest reference length to `candidate_len`, ties toward the shorter
/// reference.
fn closest_ref_len(candidate_len: usize, ref_lens: impl Iterator<Item = usize>) -> usize {
    let mut best: Option<usize> = None;
    for len in ref_lens {
        let better = match best {
            None => true,
            Some(b) => {
                let (d, bd) = (
                    (len as i64 - candidate_len as i64).abs(),
                    (b as i64 - candidate_len as i64).abs(),
                );
                d < bd || (d == bd && len < b)
            }
        };
        if better {
            best = Some(len);
        }
    }
    best.expect("non-empty reference list")
}

fn brevity_penalty(candidate_len: usize, ref_len: usize) -> f64 {
    if candidate_len >= ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / candidate_len as f64).exp()
    }
}

/// BLEU-4: geometric mean of modified 1..4-gram precisions times the
/// brevity penalty. No smoothing: any zero precision scores 0, and
/// candidates shorter than 4 tokens score 0.
pub fn bleu4<S: AsRef<[String]>>(candidate: &[String], references: &[S]) -> Result<f64> {
    if references.is_empty() {
        return Err(Error::EmptyReferences);
    }
    let c = candidate.len();
    if c < MAX_NGRAM {
        return Ok(0.0);
    }

    let mut log_precision_sum = 0.0;
    for n in 1..=MAX_NGRAM {
        let mut cand_counts: HashMap<&[String], u64> = HashMap::new();
        for gram in candidate.windows(n) {
            *cand_counts.entry(gram).or_insert(0) += 1;
        }
        let mut ref_max: HashMap<&[String], u64> = HashMap::new();
        for reference in references {
            let mut local: HashMap<&[String], u64> = HashMap::new();
            for gram in reference.as_ref().windows(n) {
                *local.entry(gram).or_insert(0) += 1;
            }
            for (gram, count) in local {
                let entry = ref_max.entry(gram).or_insert(0);
                *entry = (*entry).max(count);
            }
        }
        let clipped: u64 = cand_counts
            .iter()
            .map(|(gram, &count)| count.min(ref_max.get(gram).copied().unwrap_or(0)))
            .sum();
        if clipped == 0 {
            return Ok(0.0);
        }
        let total = (c - n + 1) as f64;
        log_precision_sum += (clipped as f64 / total).ln();
    }

    let r = closest_ref_len(c, references.iter().map(|r| r.as_ref().len()));
    Ok(brevity_penalty(c, r) * (log_precision_sum / MAX_NGRAM as f64).exp())
}

/// Self-BLEU over a seeded sample of the corpus: each sampled text is
/// scored with [`bleu4`] against all other sampled texts as references, and
/// the mean is returned. Higher means less diverse. The corpus is put in
/// canonical order before sampling, so the score does not depend on corpus
/// order.
pub fn self_bleu(corpus: &[Vec<String>], sample_size: usize, rng: &mut impl Rng) -> Result<f64> {
    if corpus.len() < 2 {
        return Err(Error::CorpusTooSmall(corpus.len()));
    }
    let mut ordered: Vec<&Vec<String>> = corpus.iter().collect();
    ordered.sort();
    ordered.shuffle(rng);
    let m = sample_size.max(2).min(ordered.len());
    let sample = &ordered[..m];

    // Equivalent to calling bleu4(text, all 'm-1' others) per text, but the
    // per-n-gram reference maxima are shared: track the two largest counts
    // of each gram so "max over the others" falls out per candidate.
    struct Top2 {
        best: u64,
        owner: usize,
        second: u64,
    }
    let mut local_counts: Vec<Vec<HashMap<&[String], u64>>> = Vec::with_capacity(m);
    for text in sample {
        let mut per_n = Vec::with_capacity(MAX_NGRAM);
        for n in 1..=MAX_NGRAM {
            let mut counts: HashMap<&[String], u64> = HashMap::new();
            for gram in text.windows(n) {
                *counts.entry(gram).or_insert(0) += 1;
            }
            per_n.push(counts);
        }
        local_counts.push(per_n);
    }
    let mut stats: Vec<HashMap<&[String], Top2>> = (0..MAX_NGRAM).map(|_| HashMap::new()).collect();
    for (i, per_n) in local_counts.iter().enumerate() {
        for (n_idx, counts) in per_n.iter().enumerate() {
            for (&gram, &count) in counts {
                let entry = stats[n_idx].entry(gram).or_insert(Top2 {
                    best: 0,
                    owner: usize::MAX,
                    second: 0,
                });
                if count > entry.best {
                    entry.second = entry.best;
                    entry.best = count;
                    entry.owner = i;
                } else if count > entry.second {
                    entry.second = count;
                }
            }
        }
    }

    let lens: Vec<usize> = sample.iter().map(|t| t.len()).collect();
    let mut total_score = 0.0;
    for i in 0..m {
        let c = lens[i];
        if c < MAX_NGRAM {
            continue; // scores 0
        }
        let mut log_precision_sum = 0.0;
        let mut zero = false;
        for (n_idx, counts) in local_counts[i].iter().enumerate() {
            let clipped: u64 = counts
                .iter()
                .map(|(gram, &count)| {
                    let top = &stats[n_idx][gram];
                    let ref_max = if top.owner == i { top.second } else { top.best };
                    count.min(ref_max)
                })
                .sum();
            if clipped == 0 {
                zero = true;
                break;
            }
            let total = (c - n_idx) as f64;
            log_precision_sum += (clipped as f64 / total).ln();
        }
        if zero {
            continue;
        }
        let r = closest_ref_len(
            c,
            lens.iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, &l)| l),
        );
        total_score += brevity_penalty(c, r) * (log_precision_sum / MAX_NGRAM as f64).exp();
    }
    Ok(total_score / m as f64)
}

/// Fraction of examples whose validator prediction agrees with the label
/// the example was generated for.
pub fn correctness(dataset: &PseudoDataset, validator: &TamModel) -> Result<f64> {
    if validator.task != dataset.task_id() {
        return Err(Error::TaskMismatch {
            expected: validator.task.clone(),
            got: dataset.task_id().to_string(),
        });
    }
    if dataset.is_empty() {
        return Err(Error::EmptyInput);
    }
    let hits = dataset
        .examples
        .iter()
        .filter(|e| {
            let pred = tam_predict(validator, &e.text, e.context.as_deref());
            validator.label_names[pred.label_index] == e.label
        })
        .count();
    Ok(hits as f64 / dataset.len() as f64)
}

/// Compute Self-BLEU and validator correctness for each labeled dataset;
/// rows come out sorted by strategy label.
pub fn build_quality_report(
    datasets: &[(String, &PseudoDataset)],
    validator: &TamModel,
    sample_size: usize,
    seed: u64,
) -> Result<QualityReport> {
    if datasets.is_empty() {
        return Err(Error::EmptyInput);
    }
    let task = datasets[0].1.task_id().to_string();
    for (_, ds) in datasets {
        if ds.task_id() != task {
            return Err(Error::TaskMismatch {
                expected: task.clone(),
                got: ds.task_id().to_string(),
            });
        }
    }

    let mut rows = Vec::with_capacity(datasets.len());
    for (label, dataset) in datasets {
        let corpus: Vec<Vec<String>> = dataset
            .examples
            .iter()
            .map(|e| text::split_tokens(&e.text))
            .collect();
        let mut bleu_rng = rng::stream(seed, &format!("self-bleu:{label}"), 0);
        rows.push(QualityRow {
            strategy: label.clone(),
            self_bleu4: self_bleu(&corpus, sample_size, &mut bleu_rng)?,
            correctness: correctness(dataset, validator)?,
            size: dataset.len(),
        });
    }
    rows.sort_by(|a, b| a.strategy.cmp(&b.strategy));
    Ok(QualityReport { task, rows })
}

/// Render rows into an aligned plain-text table for terminal display.
pub fn format_table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in rows {
        for (i, cell) in row.iter().enumerate() {
            if i < widths.len() {
                widths[i] = widths[i].max(cell.len());
            }
        }
    }
    let render = |cells: Vec<&str>| -> String {
        cells
            .iter()
            .enumerate()
            .map(|(i, c)| format!("{c:<width$}", width = widths[i]))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let mut out = render(headers.to_vec());
    out.push('\n');
    for row in rows {
        out.push_str(&render(row.iter().map(|s| s.as_str()).collect()));
        out.push('\n');
    }
    out
}

impl EvalReport {
    /// One metric row per line, values at 4 decimal places.
    pub fn jsonl(&self) -> String {
        let mut out = String::new();
        for (metric, value) in &self.metrics {
            let row = serde_json::json!({
                "task": self.task,
                "metric": metric,
                "value": round4(*value),
                "examples": self.examples,
                "config_digest": self.config_digest,
            });
            out.push_str(&row.to_string());
            out.push('\n');
        }
        out
    }

    pub fn table(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .metrics
            .iter()
            .map(|(metric, value)| vec![metric.clone(), format!("{:.4}", value)])
            .collect();
        format_table(&["metric", "value"], &rows)
    }
}

impl QualityReport {
    pub fn jsonl(&self) -> String {
        let mut out = String::new();
        for row in &self.rows {
            let line = serde_json::json!({
                "task": self.task,
                "strategy": row.strategy,
                "self_bleu4": round4(row.self_bleu4),
                "correctness": round4(row.correctness),
                "size": row.size,
            });
            out.push_str(&line.to_string());
            out.push('\n');
        }
        out
    }

    pub fn table(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.strategy.clone(),
                    format!("{:.4}", r.self_bleu4),
                    format!("{:.4}", r.correctness),
                    r.size.to_string(),
                ]
            })
            .collect();
        format_table(&["strategy", "self-bleu4", "correctness", "size"], &rows)
    }
}
