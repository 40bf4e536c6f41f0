//! The prompt catalog file: a plain-text key-value format listing, per
//! task, the label/verbalizer table and a set of prompt templates. Keeping
//! prompts in data means prompt sweeps are config changes, not code changes.
//!
//! ```text
//! # example catalog
//! [task toy-sentiment]
//! kind = single-sentence-classification
//! label.0 = positive | positive
//! label.1 = negative | negative
//! generation_template = gen
//! prompting_template = score
//! min_gen_tokens = 5
//! max_gen_tokens = 24
//!
//! [template toy-sentiment/gen]
//! role = generation
//! type = natural-language
//! opens_quote = true
//! pattern = the movie review rated <Y> \"
//! ```
//!
//! Pattern values support `\n`, `\"` and `\\` escapes; everything else is
//! taken verbatim after trimming.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::prompting::{Label, PromptTemplate, PromptType, TaskKind, TaskSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TemplateRole {
    Generation,
    Prompting,
}

impl TemplateRole {
    pub fn as_str(&self) -> &'static str {
        match self {
            TemplateRole::Generation => "generation",
            TemplateRole::Prompting => "prompting",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "generation" => Some(TemplateRole::Generation),
            "prompting" => Some(TemplateRole::Prompting),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CatalogTemplate {
    pub template: PromptTemplate,
    pub role: TemplateRole,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CatalogTask {
    pub id: String,
    pub kind: TaskKind,
    pub labels: Vec<Label>,
    pub templates: BTreeMap<String, CatalogTemplate>,
    pub generation_template: String,
    pub prompting_template: Option<String>,
    pub min_gen_tokens: usize,
    pub max_gen_tokens: usize,
}

impl CatalogTask {
    /// Templates of the given role, in id order.
    pub fn templates_with_role(&self, role: TemplateRole) -> Vec<&CatalogTemplate> {
        self.templates.values().filter(|t| t.role == role).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TaskCatalog {
    tasks: BTreeMap<String, CatalogTask>,
}

fn unescape_pattern(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut chars = raw.chars();
    while let Some(ch) = chars.next() {
        if ch != '\\' {
            out.push(ch);
            continue;
        }
        match chars.next() {
            Some('n') => out.push('\n'),
            Some('"') => out.push('"'),
            Some('\\') => out.push('\\'),
            Some(other) => {
                out.push('\\');
                out.push(other);
            }
            None => out.push('\\'),
        }
    }
    out
}

fn valid_name(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

#[derive(Debug)]
enum Section {
    Task(String),
    Template { task: String, id: String },
}

#[derive(Debug, Default)]
struct TaskDraft {
    kind: Option<TaskKind>,
    labels: BTreeMap<usize, Label>,
    generation_template: Option<String>,
    prompting_template: Option<String>,
    min_gen_tokens: usize,
    max_gen_tokens: usize,
}

#[derive(Debug, Default)]
struct TemplateDraft {
    pattern: Option<String>,
    opens_quote: bool,
    prompt_type: Option<PromptType>,
    role: Option<TemplateRole>,
}

impl TaskCatalog {
    pub fn load(path: &Path) -> Result<Self> {
        let content = fs::read_to_string(path)?;
        Self::parse_str(&content, path)
    }

    pub fn parse_str(content: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };

        let mut tasks: BTreeMap<String, TaskDraft> = BTreeMap::new();
        let mut templates: BTreeMap<(String, String), (usize, TemplateDraft)> = BTreeMap::new();
        let mut section: Option<Section> = None;

        for (idx, raw) in content.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }

            if let Some(header) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let header = header.trim();
                if let Some(task_id) = header.strip_prefix("task ") {
                    let task_id = task_id.trim();
                    if !valid_name(task_id) {
                        return Err(err(lineno, format!("invalid task id {task_id:?}")));
                    }
                    tasks.entry(task_id.to_string()).or_default();
                    section = Some(Section::Task(task_id.to_string()));
                } else if let Some(spec) = header.strip_prefix("template ") {
                    let spec = spec.trim();
                    let (task_id, template_id) = spec.split_once('/').ok_or_else(|| {
                        err(lineno, format!("template header {spec:?} is not task/id"))
                    })?;
                    if !valid_name(task_id) || !valid_name(template_id) {
                        return Err(err(lineno, format!("invalid template header {spec:?}")));
                    }
                    templates
                        .entry((task_id.to_string(), template_id.to_string()))
                        .or_insert((lineno, TemplateDraft::default()));
                    section = Some(Section::Template {
                        task: task_id.to_string(),
                        id: template_id.to_string(),
                    });
                } else {
                    return Err(err(lineno, format!("unrecognized section {header:?}")));
                }
                continue;
            }

            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(lineno, format!("expected key = value, got {line:?}")))?;
            let key = key.trim();
            let value = value.trim();

            match &section {
                None => return Err(err(lineno, "key outside of any section".into())),
                Some(Section::Task(task_id)) => {
                    let draft = tasks.get_mut(task_id).unwrap();
                    if let Some(index) = key.strip_prefix("label.") {
                        let index: usize = index
                            .parse()
                            .map_err(|_| err(lineno, format!("bad label index in {key:?}")))?;
                        let (name, words) = value.split_once('|').ok_or_else(|| {
                            err(lineno, "label value must be `name | words`".into())
                        })?;
                        let name = name.trim().to_string();
                        let verbalizer: Vec<String> =
                            words.split_whitespace().map(str::to_string).collect();
                        if !valid_name(&name) || verbalizer.is_empty() {
                            return Err(err(lineno, format!("invalid label entry {value:?}")));
                        }
                        draft.labels.insert(
                            index,
                            Label {
                                index,
                                name,
                                verbalizer,
                            },
                        );
                        continue;
                    }
                    match key {
                        "kind" => {
                            draft.kind = Some(TaskKind::parse(value).ok_or_else(|| {
                                err(lineno, format!("unknown task kind {value:?}"))
                            })?)
                        }
                        "generation_template" => {
                            draft.generation_template = Some(value.to_string())
                        }
                        "prompting_template" => draft.prompting_template = Some(value.to_string()),
                        "min_gen_tokens" => {
                            draft.min_gen_tokens = value
                                .parse()
                                .map_err(|_| err(lineno, format!("bad integer {value:?}")))?
                        }
                        "max_gen_tokens" => {
                            draft.max_gen_tokens = value
                                .parse()
                                .map_err(|_| err(lineno, format!("bad integer {value:?}")))?
                        }
                        _ => return Err(err(lineno, format!("unknown task key {key:?}"))),
                    }
                }
                Some(Section::Template { task, id }) => {
                    let (_, draft) = templates.get_mut(&(task.clone(), id.clone())).unwrap();
                    match key {
                        "pattern" => draft.pattern = Some(unescape_pattern(value)),
                        "opens_quote" => {
                            draft.opens_quote = value.parse().map_err(|_| {
                                err(
                                    lineno,
                                    format!("opens_quote must be true/false, got {value:?}"),
                                )
                            })?
                        }
                        "type" => {
                            draft.prompt_type = Some(PromptType::parse(value).ok_or_else(|| {
                                err(lineno, format!("unknown prompt type {value:?}"))
                            })?)
                        }
                        "role" => {
                            draft.role = Some(TemplateRole::parse(value).ok_or_else(|| {
                                err(lineno, format!("unknown template role {value:?}"))
                            })?)
                        }
                        _ => return Err(err(lineno, format!("unknown template key {key:?}"))),
                    }
                }
            }
        }

        let mut catalog = TaskCatalog::default();
        for (task_id, draft) in tasks {
            let kind = draft
                .kind
                .ok_or_else(|| Error::Catalog(format!("task {task_id} has no kind")))?;

            let labels: Vec<Label> = draft.labels.into_values().collect();
            for (i, l) in labels.iter().enumerate() {
                if l.index != i {
                    return Err(Error::Catalog(format!(
                        "task {task_id}: label indices must be dense, missing {i}"
                    )));
                }
            }
            if labels
                .iter()
                .enumerate()
                .any(|(i, l)| labels[..i].iter().any(|m| m.name == l.name))
            {
                return Err(Error::Catalog(format!(
                    "task {task_id}: label names must be unique"
                )));
            }
            if kind.is_classification() && labels.len() < 2 {
                return Err(Error::Catalog(format!(
                    "task {task_id}: classification needs at least 2 labels"
                )));
            }
            if !kind.is_classification() && !labels.is_empty() {
                return Err(Error::Catalog(format!(
                    "task {task_id}: question answering has no predefined label set"
                )));
            }
            if draft.min_gen_tokens >= draft.max_gen_tokens {
                return Err(Error::Catalog(format!(
                    "task {task_id}: min_gen_tokens must be < max_gen_tokens"
                )));
            }

            let mut task_templates = BTreeMap::new();
            for ((tid, template_id), (lineno, tdraft)) in
                templates.iter().filter(|((t, _), _)| t == &task_id)
            {
                debug_assert_eq!(tid, &task_id);
                let pattern = tdraft.pattern.clone().ok_or_else(|| {
                    Error::Catalog(format!("template {task_id}/{template_id} has no pattern"))
                })?;
                let template = PromptTemplate {
                    id: template_id.clone(),
                    pattern,
                    opens_quote: tdraft.opens_quote,
                    prompt_type: tdraft.prompt_type.unwrap_or(PromptType::NaturalLanguage),
                };
                template.validate().map_err(|e| {
                    Error::Catalog(format!(
                        "template {task_id}/{template_id} (line {lineno}): {e}"
                    ))
                })?;
                let role = tdraft.role.ok_or_else(|| {
                    Error::Catalog(format!("template {task_id}/{template_id} has no role"))
                })?;
                task_templates.insert(template_id.clone(), CatalogTemplate { template, role });
            }

            let generation_template = draft.generation_template.ok_or_else(|| {
                Error::Catalog(format!("task {task_id} names no generation_template"))
            })?;
            if !task_templates.contains_key(&generation_template) {
                return Err(Error::Catalog(format!(
                    "task {task_id}: unknown generation_template {generation_template:?}"
                )));
            }
            if kind.is_classification() && draft.prompting_template.is_none() {
                return Err(Error::Catalog(format!(
                    "task {task_id} names no prompting_template"
                )));
            }
            if let Some(pt) = &draft.prompting_template {
                if !task_templates.contains_key(pt) {
                    return Err(Error::Catalog(format!(
                        "task {task_id}: unknown prompting_template {pt:?}"
                    )));
                }
            }

            catalog.tasks.insert(
                task_id.clone(),
                CatalogTask {
                    id: task_id,
                    kind,
                    labels,
                    templates: task_templates,
                    generation_template,
                    prompting_template: draft.prompting_template,
                    min_gen_tokens: draft.min_gen_tokens,
                    max_gen_tokens: draft.max_gen_tokens,
                },
            );
        }

        // orphan templates referencing unknown tasks
        for (task_id, template_id) in templates.keys() {
            if !catalog.tasks.contains_key(task_id) {
                return Err(Error::Catalog(format!(
                    "template {task_id}/{template_id} references unknown task {task_id}"
                )));
            }
        }

        Ok(catalog)
    }

    pub fn task(&self, id: &str) -> Option<&CatalogTask> {
        self.tasks.get(id)
    }

    pub fn task_ids(&self) -> Vec<&str> {
        self.tasks.keys().map(|s| s.as_str()).collect()
    }

    /// Assemble a [`TaskSpec`], optionally overriding the catalog's default
    /// template choices and generation length bounds.
    pub fn task_spec(
        &self,
        task_id: &str,
        generation_override: Option<&str>,
        prompting_override: Option<&str>,
    ) -> Result<TaskSpec> {
        let task = self
            .task(task_id)
            .ok_or_else(|| Error::Catalog(format!("unknown task {task_id:?}")))?;
        let pick = |id: &str| -> Result<PromptTemplate> {
            task.templates
                .get(id)
                .map(|t| t.template.clone())
                .ok_or_else(|| Error::Catalog(format!("task {task_id} has no template {id:?}")))
        };
        let generation = pick(generation_override.unwrap_or(&task.generation_template))?;
        let prompting = match (prompting_override, &task.prompting_template) {
            (Some(id), _) => Some(pick(id)?),
            (None, Some(id)) => Some(pick(id)?),
            (None, None) => None,
        };
        Ok(TaskSpec {
            id: task.id.clone(),
            kind: task.kind,
            labels: task.labels.clone(),
            generation,
            prompting,
            min_gen_tokens: task.min_gen_tokens,
            max_gen_tokens: task.max_gen_tokens,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    const SAMPLE: &str = r#"
# toy catalog
[task demo]
kind = single-sentence-classification
label.0 = positive | positive
label.1 = negative | negative
generation_template = gen
prompting_template = score
min_gen_tokens = 5
max_gen_tokens = 24

[template demo/gen]
role = generation
type = natural-language
opens_quote = true
pattern = line one\nrated <Y> \"

[template demo/score]
role = prompting
type = control-code
pattern = \" <X> \" rated
"#;

    fn parse(content: &str) -> Result<TaskCatalog> {
        TaskCatalog::parse_str(content, &PathBuf::from("test.cfg"))
    }

    #[test]
    fn parses_tasks_templates_and_escapes() {
        let catalog = parse(SAMPLE).unwrap();
        let task = catalog.task("demo").unwrap();
        assert_eq!(task.kind, TaskKind::SingleSentenceClassification);
        assert_eq!(task.labels.len(), 2);
        assert_eq!(task.labels[1].name, "negative");
        let gen = &task.templates["gen"];
        assert_eq!(gen.template.pattern, "line one\nrated <Y> \"");
        assert!(gen.template.opens_quote);
        assert_eq!(gen.role, TemplateRole::Generation);
        let spec = catalog.task_spec("demo", None, None).unwrap();
        assert_eq!(spec.generation.id, "gen");
        assert_eq!(spec.prompting.as_ref().unwrap().id, "score");
    }

    #[test]
    fn template_override_changes_selection() {
        let extra = format!(
            "{SAMPLE}\n[template demo/gen2]\nrole = generation\nopens_quote = true\npattern = other <Y> \\\"\n"
        );
        let catalog = parse(&extra).unwrap();
        let spec = catalog.task_spec("demo", Some("gen2"), None).unwrap();
        assert_eq!(spec.generation.id, "gen2");
    }

    #[test]
    fn classification_requires_two_labels() {
        let bad = SAMPLE.replace("label.1 = negative | negative\n", "");
        assert!(matches!(parse(&bad), Err(Error::Catalog(_))));
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        let content = "[task demo]\nkind single-sentence-classification\n";
        match parse(content) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn qa_task_must_not_declare_labels() {
        let content = r#"
[task qa]
kind = question-answering
label.0 = a | a
label.1 = b | b
generation_template = g
min_gen_tokens = 2
max_gen_tokens = 10

[template qa/g]
role = generation
opens_quote = true
pattern = answer <Y> question \"
"#;
        assert!(matches!(parse(content), Err(Error::Catalog(_))));
    }
}
