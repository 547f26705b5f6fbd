use serde::{Deserialize, Serialize};

use numcore::Rng;
use textprep::{AnnotationDocument, TaskName, TaskSpec};

use crate::error::{Error, Result};

pub const ROLE_PREAMBLE: &str = "You are a text classification bot.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptMode {
    Zero,
    Few,
}

impl std::str::FromStr for PromptMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "zero" | "zero-shot" => Ok(PromptMode::Zero),
            "few" | "few-shot" => Ok(PromptMode::Few),
            other => Err(Error::Template(format!("unknown prompt mode {other:?}; expected zero or few"))),
        }
    }
}

/// One labelled line of the legend, e.g. `1: Experiencer - Family`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LegendEntry {
    pub id: usize,
    pub name: String,
    /// Short tag used in the explanation line: `Label 1 (family) ...`.
    pub tag: String,
    pub explanation: String,
}

/// A text with one marked entity, as char offsets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    pub text: String,
    pub entity: (usize, usize),
    pub label: usize,
}

impl Exemplar {
    pub fn surface(&self) -> String {
        self.text.chars().skip(self.entity.0).take(self.entity.1 - self.entity.0).collect()
    }
}

/// Every mention labelled for `task`, in corpus order.
pub fn exemplars_from_corpus(docs: &[AnnotationDocument], task: &TaskSpec) -> Result<Vec<Exemplar>> {
    let mut out = Vec::new();
    for doc in docs {
        for m in &doc.mentions {
            let Some(class) = m.label(task.name) else { continue };
            let label = task
                .class_id(class)
                .ok_or_else(|| Error::Template(format!("doc {}: unknown {} class {class:?}", doc.doc_id, task.name)))?;
            out.push(Exemplar {
                text: doc.text.clone(),
                entity: (m.char_start, m.char_end),
                label,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub num_classes: usize,
    pub role_preamble: String,
    pub intro: String,
    /// Rendered in the given order.
    pub label_legend: Vec<LegendEntry>,
    pub closing: String,
    pub exemplars: Vec<Exemplar>,
    pub open: String,
    pub close: String,
    pub inquiry_slot: String,
    pub category_slot: String,
    /// Wrapped around the entity mention inside every rendered text.
    pub entity_markers: Option<(String, String)>,
}

fn entry(id: usize, name: &str, tag: &str, explanation: &str) -> LegendEntry {
    LegendEntry {
        id,
        name: name.into(),
        tag: tag.into(),
        explanation: explanation.into(),
    }
}

fn legend(task: TaskName) -> Vec<LegendEntry> {
    match task {
        TaskName::Experiencer => vec![
            entry(2, "Experiencer - Patient / default", "patient / default",
                "is the class where the context strongly indicates that the given medical entity is for the patient. The text will not explicitly contain mention that it is for the patient, you have to infer it."),
            entry(1, "Experiencer - Family", "family",
                "is the class where the context clearly indicates that the given medical entity is for the family."),
            entry(0, "Not applicable", "not applicable",
                "is when the input data does is not applicable to the category."),
        ],
        TaskName::Presence => vec![
            entry(2, "Presence - Present / default", "present / default",
                "is the class where the context indicates that the given medical entity is affirmed for the subject of the text."),
            entry(1, "Presence - Hypothetical", "hypothetical",
                "is the class where the given medical entity is only possible, planned, conditional or discussed as a risk."),
            entry(0, "Presence - Not present", "not present",
                "is the class where the context clearly negates the given medical entity."),
        ],
        TaskName::Temporality => vec![
            entry(2, "Temporality - Recent / default", "recent / default",
                "is the class where the given medical entity applies now or in the recent past."),
            entry(1, "Temporality - Future", "future",
                "is the class where the given medical entity is expected, scheduled or planned for a later time."),
            entry(0, "Temporality - Past", "past",
                "is the class where the given medical entity belongs to the distant past or the history of the subject."),
        ],
    }
}

impl PromptTemplate {
    /// Zero-shot template for a built-in task.
    pub fn for_task(task: &TaskSpec) -> Self {
        PromptTemplate {
            num_classes: task.num_classes(),
            role_preamble: ROLE_PREAMBLE.into(),
            intro: "Your task is to assess intent and categorize the input\ntext into one of the following predefined categories:".into(),
            label_legend: legend(task.name),
            closing: "You will only respond with the predefined category. Do not provide explanations or notes.".into(),
            exemplars: Vec::new(),
            open: "[INST]".into(),
            close: "[/INST]".into(),
            inquiry_slot: "Inquiry:".into(),
            category_slot: "Category:".into(),
            entity_markers: Some(("<e>".into(), "</e>".into())),
        }
    }

    pub fn with_exemplars(mut self, exemplars: Vec<Exemplar>) -> Self {
        self.exemplars = exemplars;
        self
    }

    pub fn validate(&self, mode: PromptMode) -> Result<()> {
        let k = self.num_classes;
        let mut ids: Vec<usize> = self.label_legend.iter().map(|e| e.id).collect();
        ids.sort_unstable();
        if ids != (0..k).collect::<Vec<_>>() {
            return Err(Error::Template(format!("legend ids {ids:?} are not 0..{k}")));
        }
        match mode {
            PromptMode::Zero if !self.exemplars.is_empty() => Err(Error::Template(format!(
                "zero-shot prompt must have no exemplars, found {}",
                self.exemplars.len()
            ))),
            PromptMode::Few => {
                let mut per_class = vec![0; k];
                for ex in &self.exemplars {
                    if ex.label >= k {
                        return Err(Error::Template(format!("exemplar label {} not in the legend", ex.label)));
                    }
                    per_class[ex.label] += 1;
                }
                if per_class.iter().any(|&c| c != FEW_SHOT_PER_CLASS) {
                    return Err(Error::Template(format!(
                        "few-shot prompt needs {FEW_SHOT_PER_CLASS} exemplars per class, found {per_class:?}"
                    )));
                }
                Ok(())
            }
            PromptMode::Zero => Ok(()),
        }
    }

    /// `text` with the entity span wrapped in the markers.
    pub fn mark(&self, text: &str, entity: (usize, usize)) -> Result<String> {
        let chars: Vec<char> = text.chars().collect();
        let (s, e) = entity;
        if s >= e || e > chars.len() {
            return Err(Error::Template(format!("entity span [{s}, {e}) invalid for {} chars", chars.len())));
        }
        let Some((l, r)) = &self.entity_markers else {
            return Ok(text.to_string());
        };
        let mut out: String = chars[..s].iter().collect();
        out.push_str(l);
        out.extend(&chars[s..e]);
        out.push_str(r);
        out.extend(&chars[e..]);
        Ok(out)
    }
}

pub const FEW_SHOT_PER_CLASS: usize = 3;

/// Picks `per_class` exemplars of each class by seeded shuffle, then
/// interleaves them class by class: c0, c1, c2, c0, ...
pub fn select_exemplars(pool: &[Exemplar], k: usize, per_class: usize, seed: u64) -> Result<Vec<Exemplar>> {
    let rng = Rng::new(seed);
    let mut chosen: Vec<Vec<&Exemplar>> = Vec::with_capacity(k);
    for y in 0..k {
        let mut of_class: Vec<&Exemplar> = pool.iter().filter(|e| e.label == y).collect();
        if of_class.len() < per_class {
            return Err(Error::Template(format!(
                "class {y} has {} exemplars in the pool, {per_class} needed",
                of_class.len()
            )));
        }
        rng.fork(y as u64).shuffle(&mut of_class);
        of_class.truncate(per_class);
        chosen.push(of_class);
    }
    Ok((0..per_class)
        .flat_map(|i| chosen.iter().map(move |c| c[i].clone()))
        .collect())
}

/// Renders the instruction prompt for one sample.
pub fn build_classification_prompt(
    template: &PromptTemplate,
    mode: PromptMode,
    text: &str,
    entity: (usize, usize),
) -> Result<String> {
    template.validate(mode)?;
    let t = template;
    let mut out = String::new();
    out.push_str(&t.open);
    out.push_str(&t.role_preamble);
    out.push('\n');
    out.push_str(&t.intro);
    out.push('\n');
    let lines: Vec<String> = t.label_legend.iter().map(|e| format!("{}: {}", e.id, e.name)).collect();
    out.push_str(&lines.join(",\n"));
    out.push_str("\nExplanation of labels:\n");
    for e in &t.label_legend {
        out.push_str(&format!("Label {} ({}) {}\n", e.id, e.tag, e.explanation));
    }
    out.push('\n');
    out.push_str(&t.closing);
    out.push('\n');
    if mode == PromptMode::Few {
        for ex in &t.exemplars {
            out.push_str(&format!(
                "{} {}\n{} {}\n\n",
                t.inquiry_slot,
                t.mark(&ex.text, ex.entity)?,
                t.category_slot,
                ex.label
            ));
        }
    }
    out.push_str(&format!("{} {}\n{} {}", t.inquiry_slot, t.mark(text, entity)?, t.category_slot, t.close));
    Ok(out)
}

/// Reads a class id out of a model reply: a bare integer, `Category: n`,
/// or a single class name mentioned in the text.
pub fn parse_label(raw: &str, task: &TaskSpec) -> Result<usize> {
    let k = task.num_classes();
    let fail = || Error::Parse { raw: raw.to_string() };
    let mut s = raw.trim();
    for w in ["[/INST]", "[INST]"] {
        s = s.trim_start_matches(w).trim_end_matches(w).trim();
    }
    if let Some(pos) = s.to_ascii_lowercase().rfind("category:") {
        s = s[pos + "category:".len()..].trim();
    }
    let s = s.trim_end_matches(['.', ',', ';']).trim();
    if let Ok(n) = s.parse::<usize>() {
        return if n < k { Ok(n) } else { Err(fail()) };
    }
    let lowered = s.to_lowercase();
    let words: Vec<&str> = lowered
        .split(|c: char| !c.is_alphanumeric() && c != '/')
        .filter(|w| !w.is_empty())
        .collect();
    // A reply that contains digits but no exact integer is ambiguous.
    if words.iter().any(|w| w.chars().all(|c| c.is_ascii_digit())) {
        return Err(fail());
    }
    let mut names: Vec<(Vec<&str>, usize)> = Vec::new();
    let lowered_names: Vec<(String, usize)> = task
        .classes
        .iter()
        .enumerate()
        .map(|(i, c)| (c.to_lowercase(), i))
        .chain(task.aliases.iter().filter_map(|(a, c)| task.class_id(c).map(|i| (a.to_lowercase(), i))))
        .collect();
    for (name, i) in &lowered_names {
        names.push((name.split(|c: char| !c.is_alphanumeric() && c != '/').filter(|w| !w.is_empty()).collect(), *i));
    }
    // Longer names claim their words first, so "not present" is not also read as "present".
    names.sort_by_key(|(parts, _)| std::cmp::Reverse(parts.len()));
    let mut used = vec![false; words.len()];
    let mut hits = std::collections::BTreeSet::new();
    for (parts, id) in &names {
        if parts.is_empty() || parts.len() > words.len() {
            continue;
        }
        for start in 0..=words.len() - parts.len() {
            let span = start..start + parts.len();
            if words[span.clone()] == parts[..] && !used[span.clone()].iter().any(|&u| u) {
                used[span].iter_mut().for_each(|u| *u = true);
                hits.insert(*id);
            }
        }
    }
    match hits.len() {
        1 => Ok(*hits.iter().next().expect("one hit")),
        _ => Err(fail()),
    }
}
