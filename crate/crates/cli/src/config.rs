//! Run configuration: a plain-text key-value file with dotted sections,
//! overridable from the command line (`--decode.p=0.9`). Relative paths
//! resolve against the config file's directory. A content digest is
//! computed at load; semantically identical configs hash identically
//! regardless of key order.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use pseudogen_core::decoding::{DebiasParams, DecodeParams, Strategy};
use pseudogen_core::prompting::{TaskCatalog, TaskSpec};
use pseudogen_core::synthesis::FilterRules;
use pseudogen_core::tam::TrainConfig;
use pseudogen_core::{rng, ToyNGramLm};

use crate::CliError;

const KNOWN_KEYS: &[&str] = &[
    "task_file",
    "catalog",
    "lm.model",
    "lm.corpus",
    "lm.order",
    "lm.delta",
    "decode.strategy",
    "decode.k",
    "decode.p",
    "decode.temperature",
    "decode.max_new_tokens",
    "decode.debias.lambda",
    "decode.trace",
    "filter.min_tokens",
    "filter.max_tokens",
    "n",
    "tam.learning_rate",
    "tam.epochs",
    "tam.l2",
    "tam.validation_fraction",
    "seed",
    "output_dir",
    "context_corpus",
    "quality.sample_size",
];

/// Keys whose values are floating point; they are canonicalized to six
/// decimal places before hashing.
const FLOAT_KEYS: &[&str] = &[
    "lm.delta",
    "decode.p",
    "decode.temperature",
    "decode.debias.lambda",
    "tam.learning_rate",
    "tam.l2",
    "tam.validation_fraction",
];

fn config_err(field: &str, msg: impl Into<String>) -> CliError {
    CliError::Config {
        field: field.to_string(),
        msg: msg.into(),
    }
}

/// Where the backend comes from: a saved model file or a train-at-load
/// spec over a sentence-per-line corpus.
#[derive(Debug, Clone, PartialEq)]
pub enum LmSource {
    Model(PathBuf),
    Train {
        corpus: PathBuf,
        order: usize,
        delta: f64,
    },
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub task_file: PathBuf,
    pub catalog: PathBuf,
    pub lm: LmSource,
    pub decode: DecodeParams,
    /// Dump decode traces to a per-run debug file (traces.jsonl).
    pub trace: bool,
    pub filter_min: Option<usize>,
    pub filter_max: Option<usize>,
    pub n: usize,
    pub tam: TrainConfig,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub context_corpus: Option<PathBuf>,
    pub quality_sample_size: usize,
    pub digest: String,
    /// Task-file selections: task id plus optional template/length overrides.
    pub task: TaskSelection,
}

#[derive(Debug, Clone, Default)]
pub struct TaskSelection {
    pub task_id: String,
    pub generation_template: Option<String>,
    pub prompting_template: Option<String>,
    pub min_gen_tokens: Option<usize>,
    pub max_gen_tokens: Option<usize>,
}

fn parse_kv_lines(content: &str, origin: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let mut values = BTreeMap::new();
    for (idx, raw) in content.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            config_err(
                &format!("{}:{}", origin.display(), idx + 1),
                format!("expected key = value, got {line:?}"),
            )
        })?;
        values.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(values)
}

/// Parse `key=value` or `--key=value` command-line overrides.
pub fn parse_overrides(args: &[String]) -> Result<Vec<(String, String)>, CliError> {
    args.iter()
        .map(|arg| {
            let trimmed = arg.trim_start_matches("--");
            trimmed
                .split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| config_err(trimmed, "override must look like key=value"))
        })
        .collect()
}

fn canonical_digest(values: &BTreeMap<String, String>) -> Result<String, CliError> {
    let mut canon = String::new();
    for (key, value) in values {
        let value = if FLOAT_KEYS.contains(&key.as_str()) {
            let f: f64 = value
                .parse()
                .map_err(|e| config_err(key, format!("expected a number, got {value:?} ({e})")))?;
            format!("{f:.6}")
        } else {
            value.clone()
        };
        canon.push_str(&format!("{key}={value}\n"));
    }
    Ok(rng::sha256_hex(canon.as_bytes()))
}

struct Fields<'a> {
    values: &'a BTreeMap<String, String>,
    base: &'a Path,
}

impl<'a> Fields<'a> {
    fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|s| s.as_str())
    }

    fn required(&self, key: &str) -> Result<&str, CliError> {
        self.raw(key)
            .ok_or_else(|| config_err(key, "missing required field"))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<T>()
                .map(Some)
                .map_err(|e| config_err(key, format!("invalid value {v:?}: {e}"))),
        }
    }

    fn parse_or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.parse(key)?.unwrap_or(default))
    }

    fn resolve(&self, value: &str) -> PathBuf {
        let path = PathBuf::from(value);
        if path.is_absolute() {
            path
        } else {
            self.base.join(path)
        }
    }

    fn existing_path(&self, key: &str) -> Result<PathBuf, CliError> {
        let path = self.resolve(self.required(key)?);
        if !path.exists() {
            return Err(config_err(
                key,
                format!("path {} does not exist", path.display()),
            ));
        }
        Ok(path)
    }

    fn optional_existing_path(&self, key: &str) -> Result<Option<PathBuf>, CliError> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => {
                let path = self.resolve(v);
                if !path.exists() {
                    return Err(config_err(
                        key,
                        format!("path {} does not exist", path.display()),
                    ));
                }
                Ok(Some(path))
            }
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<RunConfig, CliError> {
        let content = std::fs::read_to_string(path)
            .map_err(|e| config_err("config", format!("cannot read {}: {e}", path.display())))?;
        let mut values = parse_kv_lines(&content, path)?;
        for (key, value) in overrides {
            values.insert(key.clone(), value.clone());
        }
        for key in values.keys() {
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(config_err(key, "unknown configuration key"));
            }
        }
        let digest = canonical_digest(&values)?;
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        let fields = Fields {
            values: &values,
            base: &base,
        };

        let task_file = fields.existing_path("task_file")?;
        let catalog = fields.existing_path("catalog")?;

        let lm = match (fields.raw("lm.model"), fields.raw("lm.corpus")) {
            (Some(_), Some(_)) => {
                return Err(config_err(
                    "lm.model",
                    "lm.model and lm.corpus are exclusive",
                ))
            }
            (Some(_), None) => LmSource::Model(fields.existing_path("lm.model")?),
            (None, Some(_)) => LmSource::Train {
                corpus: fields.existing_path("lm.corpus")?,
                order: fields.parse_or("lm.order", 3usize)?,
                delta: fields.parse_or("lm.delta", 0.1f64)?,
            },
            (None, None) => {
                return Err(config_err(
                    "lm.model",
                    "one of lm.model or lm.corpus is required",
                ))
            }
        };

        let strategy = match fields
            .parse_or("decode.strategy", "nucleus".to_string())?
            .as_str()
        {
            "greedy" => Strategy::Greedy,
            "top-k" => Strategy::TopK {
                k: fields
                    .parse::<usize>("decode.k")?
                    .ok_or_else(|| config_err("decode.k", "required for the top-k strategy"))?,
            },
            "nucleus" => Strategy::Nucleus {
                p: fields.parse_or("decode.p", 0.9f64)?,
            },
            other => {
                return Err(config_err(
                    "decode.strategy",
                    format!("unknown strategy {other:?} (greedy, top-k, nucleus)"),
                ))
            }
        };
        let decode = DecodeParams {
            strategy,
            temperature: fields.parse_or("decode.temperature", 1.0f64)?,
            max_new_tokens: fields.parse_or("decode.max_new_tokens", 64usize)?,
            debias: fields
                .parse::<f64>("decode.debias.lambda")?
                .map(|lambda| DebiasParams {
                    lambda,
                    prompts: Vec::new(),
                }),
        };
        decode
            .validate()
            .map_err(|e| config_err("decode", e.to_string()))?;

        let seed = fields
            .parse::<u64>("seed")?
            .ok_or_else(|| config_err("seed", "missing required field"))?;
        let tam = TrainConfig {
            learning_rate: fields.parse_or("tam.learning_rate", 0.1f64)?,
            epochs: fields.parse_or("tam.epochs", 10usize)?,
            l2: fields.parse_or("tam.l2", 1e-5f64)?,
            validation_fraction: fields.parse_or("tam.validation_fraction", 0.10f64)?,
            seed,
        };

        let output_dir = fields.resolve(fields.required("output_dir")?);

        let task_content = std::fs::read_to_string(&task_file).map_err(|e| {
            config_err(
                "task_file",
                format!("cannot read {}: {e}", task_file.display()),
            )
        })?;
        let task_values = parse_kv_lines(&task_content, &task_file)?;
        for key in task_values.keys() {
            if !matches!(
                key.as_str(),
                "task"
                    | "generation_template"
                    | "prompting_template"
                    | "min_gen_tokens"
                    | "max_gen_tokens"
            ) {
                return Err(config_err(
                    &format!("task_file:{key}"),
                    "unknown task-file key",
                ));
            }
        }
        let task = TaskSelection {
            task_id: task_values
                .get("task")
                .cloned()
                .ok_or_else(|| config_err("task_file:task", "missing required field"))?,
            generation_template: task_values.get("generation_template").cloned(),
            prompting_template: task_values.get("prompting_template").cloned(),
            min_gen_tokens: match task_values.get("min_gen_tokens") {
                None => None,
                Some(v) => Some(v.parse().map_err(|e| {
                    config_err("task_file:min_gen_tokens", format!("invalid: {e}"))
                })?),
            },
            max_gen_tokens: match task_values.get("max_gen_tokens") {
                None => None,
                Some(v) => Some(v.parse().map_err(|e| {
                    config_err("task_file:max_gen_tokens", format!("invalid: {e}"))
                })?),
            },
        };

        Ok(RunConfig {
            task_file,
            catalog,
            lm,
            decode,
            trace: fields.parse_or("decode.trace", false)?,
            filter_min: fields.parse("filter.min_tokens")?,
            filter_max: fields.parse("filter.max_tokens")?,
            n: fields.parse_or("n", 0usize)?,
            tam,
            seed,
            output_dir,
            context_corpus: fields.optional_existing_path("context_corpus")?,
            quality_sample_size: fields.parse_or("quality.sample_size", 1000usize)?,
            digest,
            task,
        })
    }

    /// Load the catalog and assemble the configured task.
    pub fn load_task(&self) -> Result<(TaskCatalog, TaskSpec), CliError> {
        let catalog = TaskCatalog::load(&self.catalog).map_err(CliError::Data)?;
        let mut spec = catalog
            .task_spec(
                &self.task.task_id,
                self.task.generation_template.as_deref(),
                self.task.prompting_template.as_deref(),
            )
            .map_err(CliError::Data)?;
        if let Some(min) = self.task.min_gen_tokens {
            spec.min_gen_tokens = min;
        }
        if let Some(max) = self.task.max_gen_tokens {
            spec.max_gen_tokens = max;
        }
        Ok((catalog, spec))
    }

    /// Load or train the language model backend.
    pub fn load_backend(&self) -> Result<ToyNGramLm, CliError> {
        match &self.lm {
            LmSource::Model(path) => ToyNGramLm::load(path).map_err(CliError::Data),
            LmSource::Train {
                corpus,
                order,
                delta,
            } => {
                let lines =
                    pseudogen_core::lm::read_corpus_lines(corpus).map_err(CliError::Data)?;
                ToyNGramLm::train_from_lines(&lines, *order, *delta).map_err(CliError::Data)
            }
        }
    }

    /// Filter rules for the task, with config-file overrides applied.
    pub fn filter_rules(&self, task: &TaskSpec) -> Result<FilterRules, CliError> {
        let mut rules = FilterRules::for_task(task);
        if let Some(min) = self.filter_min {
            rules.min_tokens = min;
        }
        if let Some(max) = self.filter_max {
            rules.max_tokens = max;
        }
        rules
            .validate()
            .map_err(|e| config_err("filter.min_tokens", e.to_string()))?;
        Ok(rules)
    }
}
