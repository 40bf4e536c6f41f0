//! Declarative task specifications, prompt templates with slot filling,
//! verbalizers, uniform label sampling, and the prompting zero-shot
//! baseline that scores verbalizer continuations directly.

mod catalog;

pub use catalog::{CatalogTask, CatalogTemplate, TaskCatalog, TemplateRole};

use rand::Rng;

use crate::error::{Error, Result};
use crate::lm::LmBackend;

pub const SLOT_INPUT: &str = "<X>";
pub const SLOT_CONTEXT: &str = "<C>";
pub const SLOT_LABEL: &str = "<Y>";

/// One class of a classification task together with its verbalizer words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Label {
    pub index: usize,
    pub name: String,
    pub verbalizer: Vec<String>,
}

impl Label {
    /// Verbalizer words joined for slot filling and continuation scoring.
    pub fn verbalizer_text(&self) -> String {
        self.verbalizer.join(" ")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PromptType {
    ControlCode,
    ControlCodeWithTaskDescription,
    NaturalLanguage,
}

impl PromptType {
    pub fn as_str(&self) -> &'static str {
        match self {
            PromptType::ControlCode => "control-code",
            PromptType::ControlCodeWithTaskDescription => "control-code-with-task-description",
            PromptType::NaturalLanguage => "natural-language",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "control-code" => Some(PromptType::ControlCode),
            "control-code-with-task-description" => {
                Some(PromptType::ControlCodeWithTaskDescription)
            }
            "natural-language" => Some(PromptType::NaturalLanguage),
            _ => None,
        }
    }
}

/// A text pattern with `<X>` (input), `<C>` (context) and `<Y>` (label word)
/// slots. Patterns that open a quotation for generation end with the quote
/// character so the decoder can stop on the closing one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub id: String,
    pub pattern: String,
    pub opens_quote: bool,
    pub prompt_type: PromptType,
}

impl PromptTemplate {
    pub fn validate(&self) -> Result<()> {
        let bytes = self.pattern.as_bytes();
        for (i, w) in bytes.windows(3).enumerate() {
            if w[0] == b'<' && w[2] == b'>' && w[1].is_ascii_uppercase() {
                let slot = &self.pattern[i..i + 3];
                if slot != SLOT_INPUT && slot != SLOT_CONTEXT && slot != SLOT_LABEL {
                    return Err(Error::UnknownSlot {
                        template: self.id.clone(),
                        slot: slot.to_string(),
                    });
                }
            }
        }
        if self.opens_quote && !self.pattern.ends_with('"') {
            return Err(Error::MissingOpeningQuote(self.id.clone()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    SingleSentenceClassification,
    SentencePairClassification,
    QuestionAnswering,
}

impl TaskKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            TaskKind::SingleSentenceClassification => "single-sentence-classification",
            TaskKind::SentencePairClassification => "sentence-pair-classification",
            TaskKind::QuestionAnswering => "question-answering",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "single-sentence-classification" => Some(TaskKind::SingleSentenceClassification),
            "sentence-pair-classification" => Some(TaskKind::SentencePairClassification),
            "question-answering" => Some(TaskKind::QuestionAnswering),
            _ => None,
        }
    }

    pub fn is_classification(&self) -> bool {
        !matches!(self, TaskKind::QuestionAnswering)
    }
}

/// A fully assembled task: label set, the generation template in use, the
/// prompting-baseline template (absent for QA), and generation length
/// bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub id: String,
    pub kind: TaskKind,
    pub labels: Vec<Label>,
    pub generation: PromptTemplate,
    pub prompting: Option<PromptTemplate>,
    pub min_gen_tokens: usize,
    pub max_gen_tokens: usize,
}

impl TaskSpec {
    pub fn label_names(&self) -> Vec<String> {
        self.labels.iter().map(|l| l.name.clone()).collect()
    }

    pub fn label_by_name(&self, name: &str) -> Option<&Label> {
        self.labels.iter().find(|l| l.name == name)
    }
}

/// Slot bindings for [`instantiate_prompt`].
#[derive(Debug, Clone, Default)]
pub struct SlotBindings {
    pub input: Option<String>,
    pub context: Option<String>,
    pub label_word: Option<String>,
}

impl SlotBindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn input(mut self, text: impl Into<String>) -> Self {
        self.input = Some(text.into());
        self
    }

    pub fn context(mut self, text: impl Into<String>) -> Self {
        self.context = Some(text.into());
        self
    }

    pub fn label_word(mut self, text: impl Into<String>) -> Self {
        self.label_word = Some(text.into());
        self
    }

    fn get(&self, slot: &str) -> Option<&str> {
        match slot {
            SLOT_INPUT => self.input.as_deref(),
            SLOT_CONTEXT => self.context.as_deref(),
            SLOT_LABEL => self.label_word.as_deref(),
            _ => None,
        }
    }
}

/// Draw one label uniformly from the set; deterministic under a fixed
/// rng stream.
pub fn sample_label<'a>(labels: &'a [Label], rng: &mut impl Rng) -> Result<&'a Label> {
    if labels.is_empty() {
        return Err(Error::EmptyLabelSet);
    }
    Ok(&labels[rng.random_range(0..labels.len())])
}

/// Fill every slot appearing in the pattern by plain textual substitution.
pub fn instantiate_prompt(template: &PromptTemplate, bindings: &SlotBindings) -> Result<String> {
    let mut out = template.pattern.clone();
    for slot in [SLOT_INPUT, SLOT_CONTEXT, SLOT_LABEL] {
        if out.contains(slot) {
            let value = bindings
                .get(slot)
                .ok_or_else(|| Error::MissingSlot(slot.to_string()))?;
            out = out.replace(slot, value);
        }
    }
    Ok(out)
}

/// Result of scoring one input against every label.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifyOutcome {
    /// Index of the winning label; ties break toward the lowest index.
    pub label_index: usize,
    /// Per-label length-normalized log-probabilities, parallel to the task's
    /// label list.
    pub scores: Vec<f64>,
}

/// Zero-shot classification by sequence scoring: the winning label maximizes
/// the mean per-token log-probability of its verbalizer continuation given
/// the instantiated baseline prompt.
pub fn prompting_classify(
    backend: &dyn LmBackend,
    task: &TaskSpec,
    input_x: &str,
    context_c: Option<&str>,
) -> Result<ClassifyOutcome> {
    if !task.kind.is_classification() {
        return Err(Error::TaskMismatch {
            expected: "a classification task".into(),
            got: task.kind.as_str().into(),
        });
    }
    let template = task.prompting.as_ref().ok_or(Error::NoPromptingTemplate {
        task: task.id.clone(),
    })?;
    if task.labels.is_empty() {
        return Err(Error::EmptyLabelSet);
    }

    let mut bindings = SlotBindings::new().input(input_x);
    if let Some(c) = context_c {
        bindings = bindings.context(c);
    }
    let prompt = instantiate_prompt(template, &bindings)?;
    let prefix = backend.vocab().tokenize(&prompt);

    let mut scores = Vec::with_capacity(task.labels.len());
    for label in &task.labels {
        let continuation = backend.vocab().tokenize(&label.verbalizer_text());
        if continuation.is_empty() || continuation.contains(&backend.vocab().unk()) {
            return Err(Error::VerbalizerUnknown(label.verbalizer_text()));
        }
        let logprob = backend.sequence_logprob(&prefix, &continuation)?;
        scores.push(logprob / continuation.len() as f64);
    }

    let mut best = 0usize;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    Ok(ClassifyOutcome {
        label_index: best,
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::ToyNGramLm;
    use crate::rng;

    fn label(index: usize, name: &str, word: &str) -> Label {
        Label {
            index,
            name: name.into(),
            verbalizer: vec![word.into()],
        }
    }

    fn template(pattern: &str, opens_quote: bool) -> PromptTemplate {
        PromptTemplate {
            id: "t".into(),
            pattern: pattern.into(),
            opens_quote,
            prompt_type: PromptType::NaturalLanguage,
        }
    }

    #[test]
    fn degenerate_uniform_always_returns_single_label() {
        let labels = vec![label(0, "only", "only")];
        let mut r = rng::stream(3, rng::LABEL_SAMPLER, 0);
        for _ in 0..20 {
            assert_eq!(sample_label(&labels, &mut r).unwrap().name, "only");
        }
    }

    #[test]
    fn sample_label_is_seed_deterministic() {
        let labels: Vec<Label> = (0..4)
            .map(|i| label(i, &format!("l{i}"), &format!("w{i}")))
            .collect();
        let draw = |seed| -> Vec<usize> {
            let mut r = rng::stream(seed, rng::LABEL_SAMPLER, 0);
            (0..64)
                .map(|_| sample_label(&labels, &mut r).unwrap().index)
                .collect()
        };
        assert_eq!(draw(5), draw(5));
        assert_ne!(draw(5), draw(6));
    }

    #[test]
    fn uniformity_over_100k_draws() {
        let labels: Vec<Label> = (0..4)
            .map(|i| label(i, &format!("l{i}"), &format!("w{i}")))
            .collect();
        let mut r = rng::stream(17, rng::LABEL_SAMPLER, 0);
        let mut counts = [0u64; 4];
        let n = 100_000;
        for _ in 0..n {
            counts[sample_label(&labels, &mut r).unwrap().index] += 1;
        }
        for c in counts {
            let emp = c as f64 / n as f64;
            assert!((emp - 0.25).abs() < 0.01, "empirical {emp}");
        }
    }

    #[test]
    fn empty_label_set_errors() {
        let mut r = rng::stream(0, rng::LABEL_SAMPLER, 0);
        assert!(matches!(
            sample_label(&[], &mut r),
            Err(Error::EmptyLabelSet)
        ));
    }

    #[test]
    fn instantiate_sentiment_pattern() {
        let t = template("The movie review in <Y> sentiment is: \"", true);
        let got = instantiate_prompt(&t, &SlotBindings::new().label_word("positive")).unwrap();
        assert_eq!(got, "The movie review in positive sentiment is: \"");
    }

    #[test]
    fn instantiate_without_slots_is_identity() {
        let t = template("no slots here", false);
        let got = instantiate_prompt(&t, &SlotBindings::new()).unwrap();
        assert_eq!(got, "no slots here");
    }

    #[test]
    fn missing_binding_names_the_slot() {
        let t = template("<C> <Y>", false);
        match instantiate_prompt(&t, &SlotBindings::new().context("ctx")) {
            Err(Error::MissingSlot(slot)) => assert_eq!(slot, "<Y>"),
            other => panic!("expected MissingSlot, got {other:?}"),
        }
    }

    #[test]
    fn instantiated_output_has_no_residual_slots() {
        let t = template("a <X> b <C> c <Y> d <X>", false);
        let got = instantiate_prompt(
            &t,
            &SlotBindings::new().input("x").context("c").label_word("y"),
        )
        .unwrap();
        for slot in [SLOT_INPUT, SLOT_CONTEXT, SLOT_LABEL] {
            assert!(!got.contains(slot));
        }
    }

    #[test]
    fn template_validation_catches_unknown_slot_and_quote() {
        let bad = template("hello <Z>", false);
        assert!(matches!(bad.validate(), Err(Error::UnknownSlot { .. })));
        let unquoted = template("opens <Y>", true);
        assert!(matches!(
            unquoted.validate(),
            Err(Error::MissingOpeningQuote(_))
        ));
        assert!(template("fine <Y> \"", true).validate().is_ok());
    }

    fn scoring_task(labels: Vec<Label>) -> TaskSpec {
        TaskSpec {
            id: "toy".into(),
            kind: TaskKind::SingleSentenceClassification,
            labels,
            generation: template("review rated <Y> \"", true),
            prompting: Some(template("<X>", false)),
            min_gen_tokens: 1,
            max_gen_tokens: 16,
        }
    }

    #[test]
    fn classify_prefers_likelier_verbalizer() {
        // "great" outnumbers "terrible" after "film", so inputs ending in
        // "film" score positive higher.
        let lm = ToyNGramLm::train_from_lines(
            &["film great", "film great", "film great", "film terrible"],
            2,
            0.1,
        )
        .unwrap();
        let task = scoring_task(vec![
            label(0, "positive", "great"),
            label(1, "negative", "terrible"),
        ]);
        let outcome = prompting_classify(&lm, &task, "film", None).unwrap();
        assert_eq!(outcome.label_index, 0);
        assert!(outcome.scores[0] > outcome.scores[1]);
    }

    #[test]
    fn classify_tie_breaks_to_lowest_index() {
        let lm = ToyNGramLm::train_from_lines(&["film great"], 2, 0.1).unwrap();
        let task = scoring_task(vec![
            label(0, "positive", "great"),
            label(1, "negative", "great"),
        ]);
        let outcome = prompting_classify(&lm, &task, "film", None).unwrap();
        assert_eq!(outcome.label_index, 0);
        assert_eq!(outcome.scores[0], outcome.scores[1]);
    }

    #[test]
    fn classify_degenerate_single_label() {
        let lm = ToyNGramLm::train_from_lines(&["film great"], 2, 0.1).unwrap();
        let task = scoring_task(vec![label(0, "only", "great")]);
        let outcome = prompting_classify(&lm, &task, "anything", None).unwrap();
        assert_eq!(outcome.label_index, 0);
    }

    #[test]
    fn classify_rejects_unknown_verbalizer() {
        let lm = ToyNGramLm::train_from_lines(&["film great"], 2, 0.1).unwrap();
        let task = scoring_task(vec![label(0, "positive", "unseenword")]);
        assert!(matches!(
            prompting_classify(&lm, &task, "film", None),
            Err(Error::VerbalizerUnknown(_))
        ));
    }

    /// Shifting every logit by a constant must not change the argmax label.
    #[test]
    fn classify_argmax_invariant_to_constant_shift() {
        use crate::lm::{LogitVector, Vocabulary};

        struct Shifted<'a> {
            inner: &'a ToyNGramLm,
            shift: f64,
        }
        impl crate::lm::LmBackend for Shifted<'_> {
            fn vocab(&self) -> &Vocabulary {
                self.inner.vocab()
            }
            fn next_token_logits(&self, prefix: &[u32]) -> crate::Result<LogitVector> {
                let logits = self.inner.next_token_logits(prefix)?;
                // renormalization inside from_log_scores absorbs the shift
                Ok(LogitVector::from_log_scores(
                    logits.values().iter().map(|v| v + self.shift).collect(),
                ))
            }
        }

        let lm = ToyNGramLm::train_from_lines(
            &["film great", "film great", "plot terrible", "plot terrible"],
            2,
            0.1,
        )
        .unwrap();
        let task = scoring_task(vec![
            label(0, "positive", "great"),
            label(1, "negative", "terrible"),
        ]);
        for input in ["film", "plot"] {
            let base = prompting_classify(&lm, &task, input, None).unwrap();
            let shifted = Shifted {
                inner: &lm,
                shift: 7.5,
            };
            let moved = prompting_classify(&shifted, &task, input, None).unwrap();
            assert_eq!(base.label_index, moved.label_index);
        }
    }
}
