//! The bundled toy world: a deterministic two-class review grammar with
//! class-conditional vocabularies, a trigram LM trained on prompt-wrapped
//! samples from it, gold datasets drawn from the same grammar, and ready
//! made catalog/task/config files.
//!
//! The grammar is positional: a review is six slots, each filled from a
//! class-specific pool under a fixed decaying weight profile. Slot pools
//! are disjoint across classes and positions, so a trigram window always
//! pins down (class, position) and generation stays class-conditional all
//! the way to the closing quote.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;

use crate::error::Result;
use crate::lm::ToyNGramLm;
use crate::rng;
use crate::synthesis::{write_examples, PseudoExample};

pub const POSITIVE_SLOTS: [[&str; 10]; 6] = [
    [
        "splendid", "radiant", "stellar", "luminous", "joyful", "vibrant", "graceful", "winning",
        "glowing", "tender",
    ],
    [
        "casting",
        "imagery",
        "pacing",
        "warmth",
        "charm",
        "wit",
        "heartbeat",
        "spark",
        "polish",
        "grace",
    ],
    [
        "delights",
        "shines",
        "soars",
        "charms",
        "dazzles",
        "uplifts",
        "glows",
        "sings",
        "sparkles",
        "captivates",
    ],
    [
        "every", "keen", "bright", "sweet", "gentle", "rich", "warm", "lively", "deft", "nimble",
    ],
    [
        "scene", "frame", "moment", "montage", "sequence", "closeup", "score", "melody", "chorus",
        "finale",
    ],
    [
        "beautifully",
        "tenderly",
        "superbly",
        "gracefully",
        "joyfully",
        "brightly",
        "warmly",
        "sweetly",
        "gently",
        "richly",
    ],
];

pub const NEGATIVE_SLOTS: [[&str; 10]; 6] = [
    [
        "dreary", "dismal", "sloppy", "tedious", "hollow", "clumsy", "lifeless", "stale", "murky",
        "grating",
    ],
    [
        "dialogue", "editing", "plotting", "logic", "tone", "rhythm", "texture", "focus", "stakes",
        "payoff",
    ],
    [
        "bores", "drags", "grates", "stumbles", "fizzles", "plods", "sags", "creaks", "wobbles",
        "crumbles",
    ],
    [
        "sadly", "oddly", "badly", "dully", "flatly", "harshly", "bleakly", "poorly", "crudely",
        "weakly",
    ],
    [
        "script", "premise", "ending", "twist", "pilot", "remake", "sequel", "runtime", "budget",
        "trailer",
    ],
    [
        "throughout",
        "entirely",
        "utterly",
        "painfully",
        "woefully",
        "dreadfully",
        "tiredly",
        "blandly",
        "joylessly",
        "endlessly",
    ],
];

const QUESTION_SLOTS: [[&str; 5]; 5] = [
    ["who", "what", "which", "when", "where"],
    ["did", "was", "met", "saw", "found"],
    ["they", "someone", "that", "this", "it"],
    ["visit", "happen", "appear", "occur", "begin"],
    ["there", "then", "first", "last", "really"],
];

const TITLE_PREFIXES: [&str; 10] = [
    "Moon", "Star", "Iron", "Glass", "Ember", "Silver", "Raven", "Stone", "Cloud", "Thorn",
];
const TITLE_SUFFIXES: [&str; 6] = ["veil", "fall", "wood", "light", "gate", "song"];

const NAMES: [&str; 10] = [
    "Alice", "Bob", "Carol", "Dave", "Erin", "Frank", "Grace", "Henry", "Irene", "Jack",
];
const CITIES: [&str; 6] = ["Paris", "Rome", "Lisbon", "Oslo", "Madrid", "Dublin"];

pub const REVIEW_LINES: usize = 800;
pub const GOLD_TRAIN_SIZE: usize = 400;
pub const GOLD_TEST_SIZE: usize = 400;
const QA_CONTEXTS: usize = 40;
/// Smoothing for the toy LM; small enough that the uniform smoothing mass
/// stays outside every nucleus.
pub const TOY_DELTA: f64 = 1e-5;
pub const TOY_ORDER: usize = 3;

pub const TASK_SENTIMENT: &str = "toy-sentiment";
pub const TASK_SENTIMENT_CTX: &str = "toy-sentiment-ctx";
pub const TASK_QA: &str = "toy-qa";

const CATALOG: &str = r#"# prompt catalog for the bundled toy world
[task toy-sentiment]
kind = single-sentence-classification
label.0 = positive | positive
label.1 = negative | negative
generation_template = gen-natural
prompting_template = score-natural
min_gen_tokens = 5
max_gen_tokens = 24

[template toy-sentiment/gen-natural]
role = generation
type = natural-language
opens_quote = true
pattern = the movie review rated <Y> \"

[template toy-sentiment/score-natural]
role = prompting
type = natural-language
pattern = \" <X> \" the movie review rated

[template toy-sentiment/score-control]
role = prompting
type = control-code
pattern = review <X> rated

[task toy-sentiment-ctx]
kind = sentence-pair-classification
label.0 = positive | positive
label.1 = negative | negative
generation_template = gen-titled
prompting_template = score-titled
min_gen_tokens = 5
max_gen_tokens = 24

[template toy-sentiment-ctx/gen-titled]
role = generation
type = natural-language
opens_quote = true
pattern = the movie review of <C> rated <Y> \"

[template toy-sentiment-ctx/score-titled]
role = prompting
type = natural-language
pattern = the movie review of <C> \" <X> \" rated

[task toy-qa]
kind = question-answering
generation_template = gen-qa
min_gen_tokens = 3
max_gen_tokens = 16

[template toy-qa/gen-qa]
role = generation
type = control-code
opens_quote = true
pattern = context <C> has answer <Y> to question \"
"#;

/// Decaying slot-word profile: word j drawn with weight 1/(j+1), so the
/// argmax is unique and stable while nucleus sampling keeps most of the
/// pool in play.
fn weighted_pick<'a>(pool: &[&'a str], rng: &mut impl Rng) -> &'a str {
    let total: f64 = (0..pool.len()).map(|j| 1.0 / (j as f64 + 1.0)).sum();
    let mut u = rng.random::<f64>() * total;
    for (j, word) in pool.iter().enumerate() {
        u -= 1.0 / (j as f64 + 1.0);
        if u <= 0.0 {
            return word;
        }
    }
    pool[pool.len() - 1]
}

/// Draw one six-slot review for the class (0 = positive, 1 = negative).
pub fn sample_review(class: usize, rng: &mut impl Rng) -> String {
    let slots = if class == 0 {
        &POSITIVE_SLOTS
    } else {
        &NEGATIVE_SLOTS
    };
    slots
        .iter()
        .map(|pool| weighted_pick(pool, rng))
        .collect::<Vec<_>>()
        .join(" ")
}

fn sample_question(rng: &mut impl Rng) -> String {
    QUESTION_SLOTS
        .iter()
        .map(|pool| weighted_pick(pool, rng))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn class_name(class: usize) -> &'static str {
    if class == 0 {
        "positive"
    } else {
        "negative"
    }
}

/// Everything the toy world provides, built deterministically from a seed.
#[derive(Debug, Clone)]
pub struct ToyWorld {
    pub seed: u64,
    pub lm: ToyNGramLm,
    pub corpus_lines: Vec<String>,
    pub titles: Vec<String>,
    pub qa_contexts: Vec<String>,
    pub gold_train: Vec<PseudoExample>,
    pub gold_test: Vec<PseudoExample>,
    pub gold_ctx_train: Vec<PseudoExample>,
}

pub fn build(seed: u64) -> ToyWorld {
    let titles: Vec<String> = TITLE_PREFIXES
        .iter()
        .flat_map(|p| TITLE_SUFFIXES.iter().map(move |s| format!("{p}{s}")))
        .collect();

    let qa_contexts: Vec<String> = (0..QA_CONTEXTS)
        .map(|i| {
            let mut r = rng::stream(seed, "toyworld-qa-context", i as u64);
            let a = NAMES[r.random_range(0..NAMES.len())];
            let b = loop {
                let b = NAMES[r.random_range(0..NAMES.len())];
                if b != a {
                    break b;
                }
            };
            let city = CITIES[r.random_range(0..CITIES.len())];
            let year = 1990 + r.random_range(0..8);
            format!("{a} met {b} in {city} in {year}")
        })
        .collect();

    let mut corpus_lines = Vec::new();
    for i in 0..REVIEW_LINES {
        let class = i % 2;
        let title = &titles[(i / 2) % titles.len()];
        let mut r = rng::stream(seed, "toyworld-corpus", i as u64);
        let review = sample_review(class, &mut r);
        corpus_lines.push(format!(
            "the movie review of {title} rated {} \" {review} \"",
            class_name(class)
        ));
    }
    for (i, context) in qa_contexts.iter().enumerate() {
        for (j, entity) in crate::synthesis::entity_candidates(context)
            .iter()
            .enumerate()
        {
            let mut r = rng::stream(seed, "toyworld-qa-question", (i * 8 + j) as u64);
            let question = sample_question(&mut r);
            corpus_lines.push(format!(
                "context {context} has answer {entity} to question \" {question} \""
            ));
        }
    }

    let lm = ToyNGramLm::train_from_lines(&corpus_lines, TOY_ORDER, TOY_DELTA)
        .expect("toy corpus is non-empty");

    let gold = |stream_name: &str, n: usize, with_context: bool| -> Vec<PseudoExample> {
        (0..n)
            .map(|i| {
                let class = i % 2;
                let mut r = rng::stream(seed, stream_name, i as u64);
                PseudoExample {
                    idx: i as u64,
                    text: sample_review(class, &mut r),
                    context: with_context.then(|| titles[(i / 2) % titles.len()].clone()),
                    label: class_name(class).to_string(),
                    template_id: "gold".into(),
                    seed,
                }
            })
            .collect()
    };

    let gold_train = gold("toyworld-gold-train", GOLD_TRAIN_SIZE, false);
    let gold_test = gold("toyworld-gold-test", GOLD_TEST_SIZE, false);
    let gold_ctx_train = gold("toyworld-gold-ctx-train", GOLD_TRAIN_SIZE, true);

    ToyWorld {
        seed,
        lm,
        corpus_lines,
        titles,
        qa_contexts,
        gold_train,
        gold_test,
        gold_ctx_train,
    }
}

/// File layout produced by [`ToyWorld::write_to_dir`].
#[derive(Debug, Clone)]
pub struct ToyWorldPaths {
    pub dir: PathBuf,
    pub catalog: PathBuf,
    pub lm_model: PathBuf,
    pub corpus: PathBuf,
    pub titles: PathBuf,
    pub qa_contexts: PathBuf,
    pub gold_train: PathBuf,
    pub gold_test: PathBuf,
    pub gold_ctx_train: PathBuf,
    pub task_sentiment: PathBuf,
    pub task_sentiment_ctx: PathBuf,
    pub task_qa: PathBuf,
    pub config_sentiment: PathBuf,
    pub config_sentiment_ctx: PathBuf,
    pub config_qa: PathBuf,
}

impl ToyWorld {
    pub fn write_to_dir(&self, dir: &Path) -> Result<ToyWorldPaths> {
        fs::create_dir_all(dir)?;
        let path = |name: &str| dir.join(name);

        fs::write(path("catalog.cfg"), CATALOG)?;
        fs::write(path("corpus.txt"), self.corpus_lines.join("\n") + "\n")?;
        fs::write(path("titles.txt"), self.titles.join("\n") + "\n")?;
        fs::write(path("qa-contexts.txt"), self.qa_contexts.join("\n") + "\n")?;
        self.lm.save(&path("toy.lm"))?;
        write_examples(&self.gold_train, &path("gold-train.jsonl"))?;
        write_examples(&self.gold_test, &path("gold-test.jsonl"))?;
        write_examples(&self.gold_ctx_train, &path("gold-ctx-train.jsonl"))?;

        for (file, task) in [
            ("task-sentiment.cfg", TASK_SENTIMENT),
            ("task-sentiment-ctx.cfg", TASK_SENTIMENT_CTX),
            ("task-qa.cfg", TASK_QA),
        ] {
            fs::write(path(file), format!("task = {task}\n"))?;
        }

        let base_config = |task_file: &str, out: &str| {
            format!(
                "task_file = {task_file}\n\
                 catalog = catalog.cfg\n\
                 lm.model = toy.lm\n\
                 decode.strategy = nucleus\n\
                 decode.p = 0.9\n\
                 decode.temperature = 1.0\n\
                 decode.max_new_tokens = 24\n\
                 n = 2000\n\
                 tam.learning_rate = 0.1\n\
                 tam.epochs = 10\n\
                 tam.l2 = 0.00001\n\
                 tam.validation_fraction = 0.1\n\
                 seed = {}\n\
                 output_dir = out/{out}\n",
                self.seed
            )
        };
        fs::write(
            path("config-sentiment.cfg"),
            base_config("task-sentiment.cfg", "sentiment"),
        )?;
        fs::write(
            path("config-sentiment-ctx.cfg"),
            base_config("task-sentiment-ctx.cfg", "sentiment-ctx")
                + "context_corpus = titles.txt\n",
        )?;
        fs::write(
            path("config-qa.cfg"),
            base_config("task-qa.cfg", "qa") + "context_corpus = qa-contexts.txt\n",
        )?;

        Ok(ToyWorldPaths {
            dir: dir.to_path_buf(),
            catalog: path("catalog.cfg"),
            lm_model: path("toy.lm"),
            corpus: path("corpus.txt"),
            titles: path("titles.txt"),
            qa_contexts: path("qa-contexts.txt"),
            gold_train: path("gold-train.jsonl"),
            gold_test: path("gold-test.jsonl"),
            gold_ctx_train: path("gold-ctx-train.jsonl"),
            task_sentiment: path("task-sentiment.cfg"),
            task_sentiment_ctx: path("task-sentiment-ctx.cfg"),
            task_qa: path("task-qa.cfg"),
            config_sentiment: path("config-sentiment.cfg"),
            config_sentiment_ctx: path("config-sentiment-ctx.cfg"),
            config_qa: path("config-qa.cfg"),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompting::TaskCatalog;
    use std::collections::HashSet;

    #[test]
    fn slot_pools_are_disjoint_everywhere() {
        let mut seen = HashSet::new();
        for pool in POSITIVE_SLOTS.iter().chain(NEGATIVE_SLOTS.iter()) {
            for word in pool {
                assert!(seen.insert(*word), "duplicate slot word {word}");
            }
        }
        // none of the slot words collide with prompt/glue vocabulary
        for glue in [
            "the", "movie", "review", "of", "rated", "positive", "negative",
        ] {
            assert!(!seen.contains(glue));
        }
    }

    #[test]
    fn build_is_deterministic() {
        let a = build(99);
        let b = build(99);
        assert_eq!(a.corpus_lines, b.corpus_lines);
        assert_eq!(a.gold_test, b.gold_test);
        assert_eq!(a.lm, b.lm);
    }

    #[test]
    fn gold_sets_are_balanced_and_on_grammar() {
        let world = build(7);
        assert_eq!(world.gold_test.len(), GOLD_TEST_SIZE);
        let positives = world
            .gold_test
            .iter()
            .filter(|e| e.label == "positive")
            .count();
        assert_eq!(positives, GOLD_TEST_SIZE / 2);
        for example in &world.gold_test {
            let tokens = crate::text::split_tokens(&example.text);
            assert_eq!(tokens.len(), 6);
            let slots = if example.label == "positive" {
                &POSITIVE_SLOTS
            } else {
                &NEGATIVE_SLOTS
            };
            for (slot, token) in slots.iter().zip(&tokens) {
                assert!(slot.contains(&token.as_str()), "{token} not in its slot");
            }
        }
    }

    #[test]
    fn qa_contexts_have_four_entity_candidates() {
        let world = build(7);
        for context in &world.qa_contexts {
            assert_eq!(
                crate::synthesis::entity_candidates(context).len(),
                4,
                "context {context:?}"
            );
        }
    }

    #[test]
    fn catalog_parses_and_covers_all_tasks() {
        let catalog = TaskCatalog::parse_str(CATALOG, Path::new("toy-catalog.cfg")).unwrap();
        for task in [TASK_SENTIMENT, TASK_SENTIMENT_CTX, TASK_QA] {
            assert!(catalog.task(task).is_some(), "missing {task}");
            catalog.task_spec(task, None, None).unwrap();
        }
    }

    #[test]
    fn written_world_loads_back() {
        let world = build(5);
        let dir = tempfile::tempdir().unwrap();
        let paths = world.write_to_dir(dir.path()).unwrap();
        let lm = ToyNGramLm::load(&paths.lm_model).unwrap();
        assert_eq!(lm, world.lm);
        let gold = crate::synthesis::read_examples(&paths.gold_test).unwrap();
        assert_eq!(gold, world.gold_test);
        TaskCatalog::load(&paths.catalog).unwrap();
    }
}
