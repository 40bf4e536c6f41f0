//! The tiny task model: hashed bag-of-n-grams features into a multinomial
//! logistic regression trained by seeded-order SGD, with model selection on
//! a held-out slice of the pseudo dataset (the gold validation set is never
//! available in this setting).

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prompting::TaskSpec;
use crate::synthesis::{PseudoDataset, PseudoExample};
use crate::{rng, text};

pub const HASH_BITS: u32 = 18;
pub const HASH_SPACE: u32 = 1 << HASH_BITS;
/// Fixed published hashing salt; collisions inside the 2^18 bucket space
/// are accepted as standard feature hashing.
pub const DEFAULT_SALT: u64 = 0x7a3e_5c91_d4b2_0f66;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureConfig {
    pub salt: u64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig { salt: DEFAULT_SALT }
    }
}

/// Sparse non-negative feature counts over the hashed index space.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureVector {
    counts: BTreeMap<u32, f64>,
}

impl FeatureVector {
    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.counts.iter().map(|(&i, &v)| (i, v))
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn get(&self, index: u32) -> f64 {
        self.counts.get(&index).copied().unwrap_or(0.0)
    }

    fn bump(&mut self, index: u32) {
        *self.counts.entry(index).or_insert(0.0) += 1.0;
    }
}

fn fnv1a64(salt: u64, bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64 ^ salt;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100_0000_01b3);
    }
    hash
}

fn hash_ngrams(tokens: &[String], field: &str, config: &FeatureConfig, out: &mut FeatureVector) {
    // unigrams and bigrams; the field prefix keeps text and context
    // features distinct by construction
    for order in 1..=2usize {
        if tokens.len() < order {
            continue;
        }
        for window in tokens.windows(order) {
            let gram = format!("{field}|{}", window.join(" "));
            out.bump((fnv1a64(config.salt, gram.as_bytes()) % HASH_SPACE as u64) as u32);
        }
    }
}

/// Hash unigram and bigram counts of the text (and context, under its own
/// salt prefix) into the feature space.
pub fn featurize(input_text: &str, context: Option<&str>, config: &FeatureConfig) -> FeatureVector {
    let mut out = FeatureVector::default();
    hash_ngrams(&text::split_tokens(input_text), "t", config, &mut out);
    if let Some(ctx) = context {
        hash_ngrams(&text::split_tokens(ctx), "c", config, &mut out);
    }
    out
}

/// Trained loglinear classifier: sparse per-class weights over the hashed
/// feature space plus a bias per class.
#[derive(Debug, Clone, PartialEq)]
pub struct TamModel {
    pub task: String,
    pub label_names: Vec<String>,
    pub weights: Vec<BTreeMap<u32, f64>>,
    pub bias: Vec<f64>,
    pub feature_config: FeatureConfig,
}

impl TamModel {
    pub fn zero(task: impl Into<String>, label_names: Vec<String>, config: FeatureConfig) -> Self {
        let k = label_names.len();
        TamModel {
            task: task.into(),
            label_names,
            weights: vec![BTreeMap::new(); k],
            bias: vec![0.0; k],
            feature_config: config,
        }
    }

    pub fn k(&self) -> usize {
        self.label_names.len()
    }

    pub fn scores(&self, features: &FeatureVector) -> Vec<f64> {
        (0..self.k())
            .map(|c| {
                let mut score = self.bias[c];
                for (index, value) in features.iter() {
                    if let Some(w) = self.weights[c].get(&index) {
                        score += w * value;
                    }
                }
                score
            })
            .collect()
    }

    /// Write the model as plain text: a header line, sparse
    /// `label<TAB>feature<TAB>weight` triples, then the bias line.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = format!(
            "tam v1 k={} hash_bits={} salt={:016x} task={} labels={}\n",
            self.k(),
            HASH_BITS,
            self.feature_config.salt,
            self.task,
            self.label_names.join(","),
        );
        for (c, weights) in self.weights.iter().enumerate() {
            for (index, weight) in weights {
                out.push_str(&format!("{c}\t{index}\t{weight}\n"));
            }
        }
        out.push_str("bias");
        for b in &self.bias {
            out.push_str(&format!("\t{b}"));
        }
        out.push('\n');
        fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<TamModel> {
        let content = fs::read_to_string(path)?;
        let err = |line: usize, msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let mut lines = content.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| err(1, "empty model file".into()))?;
        let mut fields = header.split_whitespace();
        if fields.next() != Some("tam") || fields.next() != Some("v1") {
            return Err(err(1, format!("unrecognized header {header:?}")));
        }
        let mut k = None;
        let mut salt = None;
        let mut task = None;
        let mut labels: Option<Vec<String>> = None;
        for field in fields {
            if let Some(v) = field.strip_prefix("k=") {
                k = v.parse::<usize>().ok();
            } else if let Some(v) = field.strip_prefix("hash_bits=") {
                if v.parse::<u32>().ok() != Some(HASH_BITS) {
                    return Err(err(1, format!("unsupported hash_bits {v}")));
                }
            } else if let Some(v) = field.strip_prefix("salt=") {
                salt = u64::from_str_radix(v, 16).ok();
            } else if let Some(v) = field.strip_prefix("task=") {
                task = Some(v.to_string());
            } else if let Some(v) = field.strip_prefix("labels=") {
                labels = Some(v.split(',').map(str::to_string).collect());
            }
        }
        let k = k.ok_or_else(|| err(1, "missing k".into()))?;
        let salt = salt.ok_or_else(|| err(1, "missing salt".into()))?;
        let task = task.ok_or_else(|| err(1, "missing task".into()))?;
        let label_names = labels.ok_or_else(|| err(1, "missing labels".into()))?;
        if label_names.len() != k {
            return Err(err(1, format!("k={k} but {} labels", label_names.len())));
        }

        let mut model = TamModel::zero(task, label_names, FeatureConfig { salt });
        let mut saw_bias = false;
        for (idx, line) in lines {
            let lineno = idx + 1;
            let mut parts = line.split('\t');
            let first = parts.next().unwrap_or("");
            if first == "bias" {
                let bias: Vec<f64> = parts
                    .map(|p| {
                        p.parse::<f64>()
                            .map_err(|e| err(lineno, format!("bad bias {p:?}: {e}")))
                    })
                    .collect::<Result<_>>()?;
                if bias.len() != k {
                    return Err(err(lineno, format!("expected {k} bias entries")));
                }
                model.bias = bias;
                saw_bias = true;
                continue;
            }
            let class: usize = first
                .parse()
                .map_err(|e| err(lineno, format!("bad label index {first:?}: {e}")))?;
            if class >= k {
                return Err(err(lineno, format!("label index {class} out of range")));
            }
            let index: u32 = parts
                .next()
                .ok_or_else(|| err(lineno, "missing feature index".into()))?
                .parse()
                .map_err(|e| err(lineno, format!("bad feature index: {e}")))?;
            if index >= HASH_SPACE {
                return Err(err(lineno, format!("feature index {index} out of range")));
            }
            let weight: f64 = parts
                .next()
                .ok_or_else(|| err(lineno, "missing weight".into()))?
                .parse()
                .map_err(|e| err(lineno, format!("bad weight: {e}")))?;
            model.weights[class].insert(index, weight);
        }
        if !saw_bias {
            return Err(err(content.lines().count(), "missing bias line".into()));
        }
        Ok(model)
    }
}

/// Training configuration; all randomness (split and visit order) flows
/// from `seed`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            epochs: 10,
            l2: 1e-5,
            validation_fraction: 0.10,
            seed: 0,
        }
    }
}

/// Per-epoch training statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    /// Epoch whose snapshot was returned (best pseudo-validation accuracy,
    /// ties to the earlier epoch); `None` when training ran zero epochs.
    pub selected_epoch: Option<usize>,
}

/// Seeded shuffle, then the last ceil(fraction * n) examples become the
/// validation part. The dataset must be large enough that the fraction
/// covers at least one full example and leaves the training part non-empty.
pub fn split_pseudo_validation(
    dataset: &PseudoDataset,
    fraction: f64,
    seed: u64,
) -> Result<(Vec<&PseudoExample>, Vec<&PseudoExample>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidFraction(fraction));
    }
    let n = dataset.len();
    let val_size = (fraction * n as f64).ceil() as usize;
    if (fraction * n as f64) < 1.0 || val_size >= n {
        return Err(Error::DatasetTooSmall(format!(
            "{n} examples cannot support a {fraction} validation fraction"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, rng::SPLIT, 0));
    let (train_idx, val_idx) = order.split_at(n - val_size);
    Ok((
        train_idx.iter().map(|&i| &dataset.examples[i]).collect(),
        val_idx.iter().map(|&i| &dataset.examples[i]).collect(),
    ))
}

/// Cross-entropy loss of one example under the model.
pub fn cross_entropy_loss(model: &TamModel, features: &FeatureVector, label: usize) -> f64 {
    let scores = model.scores(features);
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
    log_sum - scores[label]
}

/// Analytic gradient of the cross-entropy loss with respect to the weights
/// touched by `features` and to the biases. Returned per class as
/// (sparse weight gradient, bias gradient).
pub fn cross_entropy_grad(
    model: &TamModel,
    features: &FeatureVector,
    label: usize,
) -> (Vec<BTreeMap<u32, f64>>, Vec<f64>) {
    let probs = softmax(&model.scores(features));
    let mut weight_grads = vec![BTreeMap::new(); model.k()];
    let mut bias_grads = vec![0.0; model.k()];
    for (c, (grad, prob)) in weight_grads.iter_mut().zip(&probs).enumerate() {
        let err = prob - if c == label { 1.0 } else { 0.0 };
        bias_grads[c] = err;
        for (index, value) in features.iter() {
            grad.insert(index, err * value);
        }
    }
    (weight_grads, bias_grads)
}

fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|e| e / total).collect()
}

/// Train the loglinear model by SGD with cross-entropy loss and L2 decay on
/// touched weights, recording pseudo-validation accuracy after each epoch
/// and returning the best epoch snapshot.
pub fn train_tam(
    dataset: &PseudoDataset,
    task: &TaskSpec,
    config: &TrainConfig,
) -> Result<(TamModel, TrainReport)> {
    if !task.kind.is_classification() {
        return Err(Error::TaskMismatch {
            expected: "a classification task".into(),
            got: task.kind.as_str().into(),
        });
    }
    if dataset.is_empty() {
        return Err(Error::DatasetTooSmall("dataset is empty".into()));
    }
    if config.learning_rate.is_nan() || config.learning_rate <= 0.0 {
        return Err(Error::Catalog(format!(
            "learning rate must be > 0, got {}",
            config.learning_rate
        )));
    }

    let label_index: BTreeMap<&str, usize> = task
        .labels
        .iter()
        .map(|l| (l.name.as_str(), l.index))
        .collect();
    let feature_config = FeatureConfig::default();

    let encode = |examples: &[&PseudoExample]| -> Result<Vec<(FeatureVector, usize)>> {
        examples
            .iter()
            .map(|e| {
                let label =
                    *label_index
                        .get(e.label.as_str())
                        .ok_or_else(|| Error::UnknownLabel {
                            task: task.id.clone(),
                            label: e.label.clone(),
                        })?;
                Ok((
                    featurize(&e.text, e.context.as_deref(), &feature_config),
                    label,
                ))
            })
            .collect()
    };

    let (train_part, val_part) =
        split_pseudo_validation(dataset, config.validation_fraction, config.seed)?;
    let train = encode(&train_part)?;
    let val = encode(&val_part)?;

    let mut model = TamModel::zero(task.id.clone(), task.label_names(), feature_config);
    let mut report = TrainReport::default();
    let mut best: Option<(f64, usize, TamModel)> = None;

    for epoch in 1..=config.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng::stream(config.seed, rng::SGD, epoch as u64));

        let mut loss_sum = 0.0;
        for &i in &order {
            let (features, label) = &train[i];
            loss_sum += cross_entropy_loss(&model, features, *label);
            let probs = softmax(&model.scores(features));
            for (c, prob) in probs.iter().enumerate() {
                let err = prob - if c == *label { 1.0 } else { 0.0 };
                model.bias[c] -= config.learning_rate * err;
                for (index, value) in features.iter() {
                    let w = model.weights[c].entry(index).or_insert(0.0);
                    *w -= config.learning_rate * (err * value + config.l2 * *w);
                }
            }
        }
        let train_loss = loss_sum / train.len() as f64;

        let correct = val
            .iter()
            .filter(|(features, label)| argmax(&model.scores(features)) == *label)
            .count();
        let val_acc = correct as f64 / val.len() as f64;

        report.epochs.push(EpochStats {
            epoch,
            train_loss,
            val_acc,
        });
        let improved = match &best {
            None => true,
            Some((best_acc, _, _)) => val_acc > *best_acc,
        };
        if improved {
            best = Some((val_acc, epoch, model.clone()));
        }
    }

    match best {
        Some((_, epoch, snapshot)) => {
            report.selected_epoch = Some(epoch);
            Ok((snapshot, report))
        }
        None => Ok((model, report)), // zero epochs: untrained model
    }
}

fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Prediction outcome: winning label index (ties to the lowest) and the
/// full softmax distribution over classes.
#[derive(Debug, Clone, PartialEq)]
pub struct TamPrediction {
    pub label_index: usize,
    pub probs: Vec<f64>,
}

pub fn tam_predict(model: &TamModel, input_text: &str, context: Option<&str>) -> TamPrediction {
    let features = featurize(input_text, context, &model.feature_config);
    let scores = model.scores(&features);
    TamPrediction {
        label_index: argmax(&scores),
        probs: softmax(&scores),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompting::{Label, PromptTemplate, PromptType, TaskKind};
    use crate::synthesis::GenerationManifest;
    use rand::Rng;

    fn task(k: usize) -> TaskSpec {
        TaskSpec {
            id: "demo".into(),
            kind: TaskKind::SingleSentenceClassification,
            labels: (0..k)
                .map(|i| Label {
                    index: i,
                    name: format!("l{i}"),
                    verbalizer: vec![format!("l{i}")],
                })
                .collect(),
            generation: PromptTemplate {
                id: "gen".into(),
                pattern: "<Y> \"".into(),
                opens_quote: true,
                prompt_type: PromptType::NaturalLanguage,
            },
            prompting: None,
            min_gen_tokens: 1,
            max_gen_tokens: 64,
        }
    }

    fn dataset(examples: Vec<PseudoExample>) -> PseudoDataset {
        PseudoDataset {
            manifest: GenerationManifest {
                task: "demo".into(),
                requested: examples.len(),
                achieved: examples.len(),
                attempts: examples.len() as u64,
                rejections: BTreeMap::new(),
                config_digest: "test".into(),
                label_counts: BTreeMap::new(),
            },
            examples,
        }
    }

    fn example(idx: u64, text: &str, label: &str) -> PseudoExample {
        PseudoExample {
            idx,
            text: text.into(),
            context: None,
            label: label.into(),
            template_id: "gen".into(),
            seed: 0,
        }
    }

    /// Linearly separable two-class data with disjoint vocabularies.
    fn separable_dataset(n: usize) -> PseudoDataset {
        let pos = [
            "warm bright",
            "bright kind warm",
            "kind warm calm",
            "calm bright",
        ];
        let neg = ["cold dull", "dull grim cold", "grim cold torn", "torn dull"];
        let examples = (0..n)
            .map(|i| {
                if i % 2 == 0 {
                    example(i as u64, pos[(i / 2) % pos.len()], "l0")
                } else {
                    example(i as u64, neg[(i / 2) % neg.len()], "l1")
                }
            })
            .collect();
        dataset(examples)
    }

    #[test]
    fn featurize_empty_text_is_empty() {
        assert!(featurize("", None, &FeatureConfig::default()).is_empty());
    }

    #[test]
    fn featurize_counts_unigrams_and_bigrams() {
        let config = FeatureConfig::default();
        let fv = featurize("good good", None, &config);
        let uni = (fnv1a64(config.salt, b"t|good") % HASH_SPACE as u64) as u32;
        let bi = (fnv1a64(config.salt, b"t|good good") % HASH_SPACE as u64) as u32;
        assert_eq!(fv.get(uni), 2.0);
        assert_eq!(fv.get(bi), 1.0);
        assert_eq!(fv.len(), 2);
    }

    #[test]
    fn featurize_is_deterministic_and_salts_context() {
        let config = FeatureConfig::default();
        let a = featurize("good film", Some("ctx words"), &config);
        let b = featurize("good film", Some("ctx words"), &config);
        assert_eq!(a, b);
        // same string as text vs as context lands on different features
        let as_text = featurize("zork", None, &config);
        let as_ctx = featurize("", Some("zork"), &config);
        assert_ne!(as_text, as_ctx);
    }

    #[test]
    fn split_arithmetic_and_determinism() {
        let ds = separable_dataset(10);
        let (train, val) = split_pseudo_validation(&ds, 0.10, 5).unwrap();
        assert_eq!((train.len(), val.len()), (9, 1));
        let (train2, val2) = split_pseudo_validation(&ds, 0.10, 5).unwrap();
        assert_eq!(
            train.iter().map(|e| e.idx).collect::<Vec<_>>(),
            train2.iter().map(|e| e.idx).collect::<Vec<_>>()
        );
        assert_eq!(val[0].idx, val2[0].idx);
    }

    #[test]
    fn split_is_disjoint_and_exhaustive() {
        let ds = separable_dataset(1000);
        let (train, val) = split_pseudo_validation(&ds, 0.10, 9).unwrap();
        assert_eq!((train.len(), val.len()), (900, 100));
        let mut seen: std::collections::HashSet<u64> = std::collections::HashSet::new();
        for e in train.iter().chain(val.iter()) {
            assert!(seen.insert(e.idx), "example {} in both parts", e.idx);
        }
        assert_eq!(seen.len(), 1000);
    }

    #[test]
    fn split_rejects_too_small_and_bad_fraction() {
        let ds = separable_dataset(5);
        assert!(matches!(
            split_pseudo_validation(&ds, 0.10, 0),
            Err(Error::DatasetTooSmall(_))
        ));
        let ds = separable_dataset(10);
        assert!(matches!(
            split_pseudo_validation(&ds, 0.0, 0),
            Err(Error::InvalidFraction(_))
        ));
        assert!(matches!(
            split_pseudo_validation(&ds, 1.0, 0),
            Err(Error::InvalidFraction(_))
        ));
    }

    #[test]
    fn separable_data_reaches_perfect_train_accuracy() {
        let ds = separable_dataset(80);
        let t = task(2);
        let config = TrainConfig {
            seed: 1,
            ..TrainConfig::default()
        };
        let (model, report) = train_tam(&ds, &t, &config).unwrap();
        let correct = ds
            .examples
            .iter()
            .filter(|e| {
                let pred = tam_predict(&model, &e.text, None);
                model.label_names[pred.label_index] == e.label
            })
            .count();
        assert_eq!(correct, ds.len());
        assert_eq!(report.epochs.len(), 10);
        // loss decreases on separable data
        assert!(report.epochs[0].train_loss > report.epochs[9].train_loss);
    }

    #[test]
    fn zero_epochs_returns_zero_weight_uniform_model() {
        let ds = separable_dataset(40);
        let t = task(2);
        let config = TrainConfig {
            epochs: 0,
            seed: 2,
            ..TrainConfig::default()
        };
        let (model, report) = train_tam(&ds, &t, &config).unwrap();
        assert!(report.epochs.is_empty());
        assert_eq!(report.selected_epoch, None);
        let pred = tam_predict(&model, "warm bright", None);
        assert_eq!(pred.label_index, 0);
        for p in &pred.probs {
            assert!((p - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn training_is_bitwise_deterministic() {
        let ds = separable_dataset(60);
        let t = task(2);
        let config = TrainConfig {
            seed: 3,
            ..TrainConfig::default()
        };
        let (a, ra) = train_tam(&ds, &t, &config).unwrap();
        let (b, rb) = train_tam(&ds, &t, &config).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
    }

    #[test]
    fn selected_epoch_has_the_best_validation_accuracy() {
        let ds = separable_dataset(60);
        let t = task(2);
        let config = TrainConfig {
            seed: 4,
            epochs: 8,
            ..TrainConfig::default()
        };
        let (_, report) = train_tam(&ds, &t, &config).unwrap();
        let selected = report.selected_epoch.unwrap();
        let selected_acc = report.epochs[selected - 1].val_acc;
        for stats in &report.epochs {
            assert!(selected_acc >= stats.val_acc);
            if stats.val_acc == selected_acc {
                assert!(selected <= stats.epoch, "tie must pick the earlier epoch");
            }
        }
    }

    #[test]
    fn single_feature_weight_drives_prediction() {
        let t = task(2);
        let mut model = TamModel::zero("demo", t.label_names(), FeatureConfig::default());
        let fv = featurize("good", None, &model.feature_config);
        let (index, _) = fv.iter().next().unwrap();
        model.weights[0].insert(index, 2.0);
        let pred = tam_predict(&model, "good", None);
        assert_eq!(pred.label_index, 0);
        assert!(pred.probs[0] > pred.probs[1]);
    }

    #[test]
    fn probabilities_sum_to_one() {
        let ds = separable_dataset(40);
        let t = task(2);
        let (model, _) = train_tam(&ds, &t, &TrainConfig::default()).unwrap();
        for text in ["warm cold bright", "dull", "unseen words entirely"] {
            let pred = tam_predict(&model, text, None);
            let total: f64 = pred.probs.iter().sum();
            assert!((total - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn prediction_invariant_to_constant_score_shift() {
        let ds = separable_dataset(40);
        let t = task(2);
        let (mut model, _) = train_tam(&ds, &t, &TrainConfig::default()).unwrap();
        let before: Vec<usize> = ["warm bright", "cold torn", "kind calm"]
            .iter()
            .map(|s| tam_predict(&model, s, None).label_index)
            .collect();
        for b in &mut model.bias {
            *b += 13.5;
        }
        let after: Vec<usize> = ["warm bright", "cold torn", "kind calm"]
            .iter()
            .map(|s| tam_predict(&model, s, None).label_index)
            .collect();
        assert_eq!(before, after);
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let mut r = crate::rng::stream(77, "gradcheck", 0);
        for case in 0..20 {
            let k = 2 + (case % 3);
            let t = task(k);
            let mut model = TamModel::zero("demo", t.label_names(), FeatureConfig::default());
            let fv = featurize(
                &format!("w{} w{} w{} w{}", case, case + 1, case % 5, case % 7),
                if case % 2 == 0 {
                    Some("ctx words here")
                } else {
                    None
                },
                &model.feature_config,
            );
            for c in 0..k {
                for (index, _) in fv.iter() {
                    model.weights[c].insert(index, r.random_range(-1.0..1.0));
                }
                model.bias[c] = r.random_range(-0.5..0.5);
            }
            let label = case % k;
            let (wgrad, bgrad) = cross_entropy_grad(&model, &fv, label);
            let eps = 1e-4;
            let rel = |a: f64, n: f64| (a - n).abs() / f64::max(1.0, a.abs().max(n.abs()));
            for c in 0..k {
                for (index, _) in fv.iter() {
                    let orig = model.weights[c][&index];
                    model.weights[c].insert(index, orig + eps);
                    let up = cross_entropy_loss(&model, &fv, label);
                    model.weights[c].insert(index, orig - eps);
                    let down = cross_entropy_loss(&model, &fv, label);
                    model.weights[c].insert(index, orig);
                    let numeric = (up - down) / (2.0 * eps);
                    assert!(
                        rel(wgrad[c][&index], numeric) < 1e-4,
                        "weight gradient off: analytic {} numeric {numeric}",
                        wgrad[c][&index]
                    );
                }
                let orig = model.bias[c];
                model.bias[c] = orig + eps;
                let up = cross_entropy_loss(&model, &fv, label);
                model.bias[c] = orig - eps;
                let down = cross_entropy_loss(&model, &fv, label);
                model.bias[c] = orig;
                let numeric = (up - down) / (2.0 * eps);
                assert!(rel(bgrad[c], numeric) < 1e-4);
            }
        }
    }

    #[test]
    fn model_file_round_trips() {
        let ds = separable_dataset(40);
        let t = task(2);
        let (model, _) = train_tam(&ds, &t, &TrainConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.tam");
        model.save(&path).unwrap();
        let loaded = TamModel::load(&path).unwrap();
        assert_eq!(model, loaded);
    }

    #[test]
    fn qa_task_training_is_rejected() {
        let ds = separable_dataset(40);
        let mut t = task(2);
        t.kind = TaskKind::QuestionAnswering;
        assert!(matches!(
            train_tam(&ds, &t, &TrainConfig::default()),
            Err(Error::TaskMismatch { .. })
        ));
    }
}
