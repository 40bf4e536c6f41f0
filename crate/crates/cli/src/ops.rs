//! The five workflow operations behind the CLI subcommands. Every
//! operation derives its randomness from the config's master seed, writes
//! its artifacts under the output directory, and finishes by writing a run
//! manifest (`run.json`) with the config digest, artifact versions,
//! per-stage wall times, and output paths.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use serde::Serialize;

use pseudogen_core::prompting::{prompting_classify, TaskKind, TaskSpec, TemplateRole};
use pseudogen_core::quality::{accuracy, build_quality_report, format_table, round4};
use pseudogen_core::synthesis::{
    generate_pair_dataset, generate_pair_dataset_traced, generate_single_sentence_dataset,
    generate_single_sentence_dataset_traced, read_dataset, read_examples, write_dataset,
    write_traces, GenerationManifest, PseudoDataset, PseudoExample, TraceRecord,
};
use pseudogen_core::tam::{tam_predict, train_tam, TamModel, TrainReport};
use pseudogen_core::{rng, EvalReport, QualityReport};

use crate::{CliError, RunConfig};

/// Ordered record of load/train/eval events, used to verify that gold
/// label bytes are never read before the evaluation stage.
#[derive(Debug, Default)]
pub struct AccessLog {
    events: Mutex<Vec<String>>,
}

impl AccessLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, event: impl Into<String>) {
        self.events.lock().unwrap().push(event.into());
    }

    pub fn events(&self) -> Vec<String> {
        self.events.lock().unwrap().clone()
    }
}

/// All gold-file reads go through here so the access log sees them.
fn read_gold(path: &Path, log: &AccessLog) -> Result<Vec<PseudoExample>, CliError> {
    log.record(format!("gold-read:{}", path.display()));
    Ok(read_examples(path)?)
}

#[derive(Debug, Clone, Serialize)]
struct StageTime {
    stage: String,
    seconds: f64,
}

#[derive(Debug, Default)]
struct StageTimer {
    stages: Vec<StageTime>,
}

impl StageTimer {
    fn time<T>(
        &mut self,
        stage: &str,
        f: impl FnOnce() -> Result<T, CliError>,
    ) -> Result<T, CliError> {
        let start = Instant::now();
        let out = f()?;
        self.stages.push(StageTime {
            stage: stage.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
        Ok(out)
    }
}

#[derive(Debug, Serialize)]
struct RunManifest {
    config_digest: String,
    versions: BTreeMap<String, String>,
    stages: Vec<StageTime>,
    outputs: Vec<String>,
    achieved: Option<usize>,
}

fn crate_versions() -> BTreeMap<String, String> {
    let mut versions = BTreeMap::new();
    versions.insert("pseudogen-core".into(), pseudogen_core::VERSION.into());
    versions.insert("pseudogen-cli".into(), env!("CARGO_PKG_VERSION").into());
    versions
}

/// Paths of the artifacts a run wrote.
#[derive(Debug, Clone, Default)]
pub struct RunPaths {
    pub dataset: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub traces: Option<PathBuf>,
    pub run: PathBuf,
}

fn finish_run(
    cfg: &RunConfig,
    timer: StageTimer,
    paths: &RunPaths,
    achieved: Option<usize>,
) -> Result<(), CliError> {
    let outputs: Vec<String> = [
        &paths.dataset,
        &paths.manifest,
        &paths.model,
        &paths.report,
        &paths.traces,
    ]
    .into_iter()
    .flatten()
    .map(|p| p.display().to_string())
    .collect();
    let manifest = RunManifest {
        config_digest: cfg.digest.clone(),
        versions: crate_versions(),
        stages: timer.stages,
        outputs,
        achieved,
    };
    let body = serde_json::to_string_pretty(&manifest)
        .map_err(|e| CliError::Internal(format!("serializing run manifest: {e}")))?;
    fs::write(&paths.run, body + "\n").map_err(|e| CliError::Data(e.into()))?;
    Ok(())
}

fn prepare_output_dir(cfg: &RunConfig) -> Result<(), CliError> {
    fs::create_dir_all(&cfg.output_dir).map_err(|e| CliError::Data(e.into()))
}

fn manifest_sibling(dataset_path: &Path) -> PathBuf {
    dataset_path
        .parent()
        .unwrap_or(Path::new("."))
        .join("manifest.json")
}

#[derive(Debug)]
pub struct GenerateOutcome {
    pub dataset: PseudoDataset,
    pub paths: RunPaths,
}

/// Synthesize a dataset: dispatches to single-sentence or two-step pair
/// generation by task kind and writes dataset, sidecar manifest, and run
/// manifest.
pub fn run_generate(cfg: &RunConfig, workers: usize) -> Result<GenerateOutcome, CliError> {
    let mut timer = StageTimer::default();
    let (backend, task, rules, context_corpus) = timer.time("load", || {
        let (_, task) = cfg.load_task()?;
        let backend = cfg.load_backend()?;
        let rules = cfg.filter_rules(&task)?;
        let context_corpus = match task.kind {
            TaskKind::SingleSentenceClassification => None,
            _ => {
                let path = cfg.context_corpus.as_ref().ok_or(CliError::Config {
                    field: "context_corpus".into(),
                    msg: "required for sentence-pair and question-answering tasks".into(),
                })?;
                Some(pseudogen_core::lm::read_corpus_lines(path)?)
            }
        };
        Ok((backend, task, rules, context_corpus))
    })?;

    let (dataset, traces) = timer.time("generate", || {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| CliError::Internal(format!("building worker pool: {e}")))?;
        pool.install(|| -> Result<(PseudoDataset, Vec<TraceRecord>), CliError> {
            match (&context_corpus, cfg.trace) {
                (None, false) => Ok((
                    generate_single_sentence_dataset(
                        &backend,
                        &task,
                        cfg.n,
                        &cfg.decode,
                        &rules,
                        cfg.seed,
                    )?,
                    Vec::new(),
                )),
                (None, true) => Ok(generate_single_sentence_dataset_traced(
                    &backend,
                    &task,
                    cfg.n,
                    &cfg.decode,
                    &rules,
                    cfg.seed,
                )?),
                (Some(corpus), false) => Ok((
                    generate_pair_dataset(
                        &backend,
                        &task,
                        corpus,
                        cfg.n,
                        &cfg.decode,
                        &rules,
                        cfg.seed,
                    )?,
                    Vec::new(),
                )),
                (Some(corpus), true) => Ok(generate_pair_dataset_traced(
                    &backend,
                    &task,
                    corpus,
                    cfg.n,
                    &cfg.decode,
                    &rules,
                    cfg.seed,
                )?),
            }
        })
    })?;

    let paths = timer.time("write", || {
        prepare_output_dir(cfg)?;
        let dataset_path = cfg.output_dir.join("dataset.jsonl");
        let manifest_path = cfg.output_dir.join("manifest.json");
        write_dataset(&dataset, &dataset_path, &manifest_path)?;
        let traces_path = if cfg.trace {
            let path = cfg.output_dir.join("traces.jsonl");
            write_traces(&traces, &path)?;
            Some(path)
        } else {
            None
        };
        Ok(RunPaths {
            dataset: Some(dataset_path),
            manifest: Some(manifest_path),
            traces: traces_path,
            run: cfg.output_dir.join("run.json"),
            ..RunPaths::default()
        })
    })?;

    let achieved = dataset.manifest.achieved;
    finish_run(cfg, timer, &paths, Some(achieved))?;
    Ok(GenerateOutcome { dataset, paths })
}

#[derive(Debug)]
pub struct TrainEvalOutcome {
    pub report: EvalReport,
    pub train_report: TrainReport,
    pub model: TamModel,
    pub paths: RunPaths,
}

/// Train the tiny task model on a pseudo-dataset (model selection on its
/// own held-out slice) and evaluate on the gold test file, which is not
/// read until training has finished.
pub fn run_train_eval(
    cfg: &RunConfig,
    dataset_path: &Path,
    gold_test_path: &Path,
    log: &AccessLog,
) -> Result<TrainEvalOutcome, CliError> {
    let mut timer = StageTimer::default();
    let (task, dataset) = timer.time("load", || {
        let (_, task) = cfg.load_task()?;
        let dataset = read_dataset(dataset_path, &manifest_sibling(dataset_path))?;
        Ok((task, dataset))
    })?;

    let (model, train_report) = timer.time("train", || {
        log.record("train-start");
        let out = train_tam(&dataset, &task, &cfg.tam)?;
        log.record("train-end");
        Ok(out)
    })?;

    let report = timer.time("eval", || {
        let gold = read_gold(gold_test_path, log)?;
        if gold.is_empty() {
            return Err(CliError::Data(pseudogen_core::Error::EmptyInput));
        }
        let predictions: Vec<&str> = gold
            .iter()
            .map(|e| {
                let pred = tam_predict(&model, &e.text, e.context.as_deref());
                model.label_names[pred.label_index].as_str()
            })
            .collect();
        let golds: Vec<&str> = gold.iter().map(|e| e.label.as_str()).collect();
        let mut metrics = BTreeMap::new();
        metrics.insert("accuracy".to_string(), accuracy(&predictions, &golds)?);
        if let Some(selected) = train_report.selected_epoch {
            metrics.insert(
                "val_acc".to_string(),
                train_report.epochs[selected - 1].val_acc,
            );
        }
        Ok(EvalReport {
            task: task.id.clone(),
            metrics,
            examples: gold.len(),
            config_digest: cfg.digest.clone(),
        })
    })?;

    let paths = timer.time("write", || {
        prepare_output_dir(cfg)?;
        let model_path = cfg.output_dir.join("model.tam");
        model.save(&model_path)?;
        let report_path = cfg.output_dir.join("report.jsonl");
        let mut body = String::new();
        for stats in &train_report.epochs {
            body.push_str(
                &serde_json::to_string(stats)
                    .map_err(|e| CliError::Internal(format!("serializing epoch stats: {e}")))?,
            );
            body.push('\n');
        }
        body.push_str(&report.jsonl());
        fs::write(&report_path, body).map_err(|e| CliError::Data(e.into()))?;
        Ok(RunPaths {
            model: Some(model_path),
            report: Some(report_path),
            run: cfg.output_dir.join("run.json"),
            ..RunPaths::default()
        })
    })?;

    finish_run(cfg, timer, &paths, None)?;
    Ok(TrainEvalOutcome {
        report,
        train_report,
        model,
        paths,
    })
}

/// Score every gold test input against every label by verbalizer
/// likelihood. The report carries the configured template's accuracy under
/// "accuracy" plus one entry per catalog prompting template, so prompts
/// are compared side by side rather than auto-selected.
pub fn run_prompting_baseline(
    cfg: &RunConfig,
    gold_test_path: &Path,
    log: &AccessLog,
) -> Result<(EvalReport, RunPaths), CliError> {
    let mut timer = StageTimer::default();
    let (catalog, task, backend) = timer.time("load", || {
        let (catalog, task) = cfg.load_task()?;
        Ok((catalog, task, cfg.load_backend()?))
    })?;

    let report = timer.time("eval", || {
        let gold = read_gold(gold_test_path, log)?;
        if gold.is_empty() {
            return Err(CliError::Data(pseudogen_core::Error::EmptyInput));
        }
        let golds: Vec<&str> = gold.iter().map(|e| e.label.as_str()).collect();
        let score_template = |spec: &TaskSpec| -> Result<f64, CliError> {
            let predictions: Vec<&str> = gold
                .iter()
                .map(|e| {
                    let outcome =
                        prompting_classify(&backend, spec, &e.text, e.context.as_deref())?;
                    Ok(spec.labels[outcome.label_index].name.as_str())
                })
                .collect::<Result<_, CliError>>()?;
            Ok(accuracy(&predictions, &golds)?)
        };

        let mut metrics = BTreeMap::new();
        metrics.insert("accuracy".to_string(), score_template(&task)?);
        let catalog_task = catalog
            .task(&task.id)
            .expect("task spec was assembled from this catalog");
        for entry in catalog_task.templates_with_role(TemplateRole::Prompting) {
            let mut variant = task.clone();
            variant.prompting = Some(entry.template.clone());
            metrics.insert(
                format!("accuracy[{}]", entry.template.id),
                score_template(&variant)?,
            );
        }
        Ok(EvalReport {
            task: task.id.clone(),
            metrics,
            examples: gold.len(),
            config_digest: cfg.digest.clone(),
        })
    })?;

    let paths = timer.time("write", || {
        prepare_output_dir(cfg)?;
        let report_path = cfg.output_dir.join("report.jsonl");
        fs::write(&report_path, report.jsonl()).map_err(|e| CliError::Data(e.into()))?;
        Ok(RunPaths {
            report: Some(report_path),
            run: cfg.output_dir.join("run.json"),
            ..RunPaths::default()
        })
    })?;

    finish_run(cfg, timer, &paths, None)?;
    Ok((report, paths))
}

/// Train the correctness validator on gold data, then report Self-BLEU
/// diversity and validator correctness for each labeled dataset.
pub fn run_quality(
    cfg: &RunConfig,
    datasets: &[(String, PathBuf)],
    gold_train_path: &Path,
    log: &AccessLog,
) -> Result<(QualityReport, RunPaths), CliError> {
    if datasets.is_empty() {
        return Err(CliError::Config {
            field: "dataset".into(),
            msg: "at least one strategy=path dataset is required".into(),
        });
    }
    let mut timer = StageTimer::default();
    let (task, loaded) = timer.time("load", || {
        let (_, task) = cfg.load_task()?;
        let loaded: Vec<(String, PseudoDataset)> = datasets
            .iter()
            .map(|(label, path)| Ok((label.clone(), read_dataset(path, &manifest_sibling(path))?)))
            .collect::<Result<_, CliError>>()?;
        Ok((task, loaded))
    })?;

    let validator = timer.time("train-validator", || {
        let gold = read_gold(gold_train_path, log)?;
        let n = gold.len();
        let gold_ds = PseudoDataset {
            examples: gold,
            manifest: GenerationManifest {
                task: task.id.clone(),
                requested: n,
                achieved: n,
                attempts: n as u64,
                rejections: BTreeMap::new(),
                config_digest: "gold-train".into(),
                label_counts: BTreeMap::new(),
            },
        };
        let (validator, _) = train_tam(&gold_ds, &task, &cfg.tam)?;
        Ok(validator)
    })?;

    let report = timer.time("evaluate", || {
        let refs: Vec<(String, &PseudoDataset)> = loaded
            .iter()
            .map(|(label, ds)| (label.clone(), ds))
            .collect();
        Ok(build_quality_report(
            &refs,
            &validator,
            cfg.quality_sample_size,
            cfg.seed,
        )?)
    })?;

    let paths = timer.time("write", || {
        prepare_output_dir(cfg)?;
        let report_path = cfg.output_dir.join("report.jsonl");
        fs::write(&report_path, report.jsonl()).map_err(|e| CliError::Data(e.into()))?;
        Ok(RunPaths {
            report: Some(report_path),
            run: cfg.output_dir.join("run.json"),
            ..RunPaths::default()
        })
    })?;

    finish_run(cfg, timer, &paths, None)?;
    Ok((report, paths))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub size: usize,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
}

/// Accuracy-versus-dataset-size series, 3 seeds per size.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub task: String,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn jsonl(&self) -> String {
        let mut out = String::new();
        for row in &self.rows {
            let line = serde_json::json!({
                "task": self.task,
                "size": row.size,
                "accuracy_mean": round4(row.accuracy_mean),
                "accuracy_std": round4(row.accuracy_std),
                "runs": SWEEP_RUNS,
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
                    r.size.to_string(),
                    format!("{:.4}", r.accuracy_mean),
                    format!("{:.4}", r.accuracy_std),
                ]
            })
            .collect();
        format_table(&["size", "accuracy_mean", "accuracy_std"], &rows)
    }
}

const SWEEP_RUNS: u64 = 3;

/// Train-and-evaluate across sample-index prefixes of one dataset,
/// averaging over three derived seeds per size. All models are trained
/// before the gold test file is opened.
pub fn run_scaling_sweep(
    cfg: &RunConfig,
    dataset_path: &Path,
    gold_test_path: &Path,
    sizes: &[usize],
    log: &AccessLog,
) -> Result<(SweepReport, RunPaths), CliError> {
    if sizes.is_empty() {
        return Err(CliError::Config {
            field: "sizes".into(),
            msg: "at least one size is required".into(),
        });
    }
    for pair in sizes.windows(2) {
        if pair[1] <= pair[0] {
            return Err(CliError::Config {
                field: "sizes".into(),
                msg: format!("sizes must be ascending, got {} then {}", pair[0], pair[1]),
            });
        }
    }
    let min_size = 10.0 / cfg.tam.validation_fraction;
    for &size in sizes {
        if (size as f64) < min_size {
            return Err(CliError::Config {
                field: "sizes".into(),
                msg: format!("size {size} is below 10 / validation_fraction = {min_size:.0}"),
            });
        }
    }

    let mut timer = StageTimer::default();
    let (task, dataset) = timer.time("load", || {
        let (_, task) = cfg.load_task()?;
        let dataset = read_dataset(dataset_path, &manifest_sibling(dataset_path))?;
        Ok((task, dataset))
    })?;
    if let Some(&largest) = sizes.last() {
        if largest > dataset.len() {
            return Err(CliError::Config {
                field: "sizes".into(),
                msg: format!(
                    "size {largest} exceeds the dataset's {} examples",
                    dataset.len()
                ),
            });
        }
    }

    let models = timer.time("train", || {
        log.record("train-start");
        let mut models: Vec<(usize, Vec<TamModel>)> = Vec::new();
        for &size in sizes {
            let subset = dataset.prefix(size);
            let mut per_seed = Vec::new();
            for run in 0..SWEEP_RUNS {
                let config = pseudogen_core::tam::TrainConfig {
                    seed: rng::derive_seed(cfg.seed, "sweep-seed", run),
                    ..cfg.tam.clone()
                };
                let (model, _) = train_tam(&subset, &task, &config)?;
                per_seed.push(model);
            }
            models.push((size, per_seed));
        }
        log.record("train-end");
        Ok(models)
    })?;

    let report = timer.time("eval", || {
        let gold = read_gold(gold_test_path, log)?;
        if gold.is_empty() {
            return Err(CliError::Data(pseudogen_core::Error::EmptyInput));
        }
        let golds: Vec<&str> = gold.iter().map(|e| e.label.as_str()).collect();
        let rows = models
            .iter()
            .map(|(size, per_seed)| {
                let accs: Vec<f64> = per_seed
                    .iter()
                    .map(|model| {
                        let predictions: Vec<&str> = gold
                            .iter()
                            .map(|e| {
                                let pred = tam_predict(model, &e.text, e.context.as_deref());
                                model.label_names[pred.label_index].as_str()
                            })
                            .collect();
                        Ok(accuracy(&predictions, &golds)?)
                    })
                    .collect::<Result<_, CliError>>()?;
                let mean = accs.iter().sum::<f64>() / accs.len() as f64;
                let var =
                    accs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / accs.len() as f64;
                Ok(SweepRow {
                    size: *size,
                    accuracy_mean: mean,
                    accuracy_std: var.sqrt(),
                })
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        Ok(SweepReport {
            task: task.id.clone(),
            rows,
        })
    })?;

    let paths = timer.time("write", || {
        prepare_output_dir(cfg)?;
        let report_path = cfg.output_dir.join("report.jsonl");
        fs::write(&report_path, report.jsonl()).map_err(|e| CliError::Data(e.into()))?;
        Ok(RunPaths {
            report: Some(report_path),
            run: cfg.output_dir.join("run.json"),
            ..RunPaths::default()
        })
    })?;

    finish_run(cfg, timer, &paths, None)?;
    Ok((report, paths))
}
