//! Synthetic benchmark corpus with planted lexical cues.
//!
//! Every document is one sentence built as
//! `<subject> <presence cue> <entity> <time cue>.`, optionally wrapped in
//! short neutral sentences. The subject decides Experiencer, the phrase
//! before the entity decides Presence, the trailing phrase decides
//! Temporality. With probability `cue_noise` a labelled task's cue is either
//! replaced by a neutral phrase or swapped for another class's cue, while the
//! label stays put.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use numcore::Rng;
use textprep::{AnnotationDocument, EntityMention, TaskName, TaskSpec};

use crate::error::{CliError, Result};

/// Phrases per class, in the task's class order, plus a neutral stand-in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskCues {
    pub classes: Vec<Vec<String>>,
    pub neutral: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CueVocabulary {
    pub presence: TaskCues,
    pub experiencer: TaskCues,
    pub temporality: TaskCues,
    pub entities: Vec<String>,
    /// Neutral sentences placed before or after the main one.
    pub fillers: Vec<String>,
}

fn cues(classes: &[&[&str]], neutral: &[&str]) -> TaskCues {
    let own = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    TaskCues {
        classes: classes.iter().map(|c| own(c)).collect(),
        neutral: own(neutral),
    }
}

impl Default for CueVocabulary {
    fn default() -> Self {
        CueVocabulary {
            // Not present, Hypothetical, Present.
            presence: cues(
                &[
                    &["has no evidence of", "denies any history of", "tested negative for", "shows no signs of"],
                    &["may develop", "is at risk of", "should be screened for", "might need assessment for"],
                    &["was diagnosed with", "presents with", "suffers from", "is being treated for"],
                ],
                &["has a note about", "is mentioned with"],
            ),
            // Other, Family, Patient.
            experiencer: cues(
                &[
                    &["the leaflet says a person", "a neighbour", "a colleague", "the support group member"],
                    &["his mother", "her father", "her sister", "his brother"],
                    &["the patient", "he", "she"],
                ],
                &["someone"],
            ),
            // Past, Future, Recent.
            temporality: cues(
                &[
                    &["several years ago", "in the past", "during childhood", "a decade ago"],
                    &["next month", "at the upcoming review", "in the coming weeks", "after the planned appointment"],
                    &["today", "this week", "currently", "since yesterday"],
                ],
                &["", "as noted"],
            ),
            entities: [
                "asthma", "diabetes", "hypertension", "pneumonia", "osteoporosis", "breast cancer", "colon cancer",
                "heart failure", "epilepsy", "migraine", "psoriasis", "multiple sclerosis", "kidney damage",
                "atrial fibrillation", "depression", "anaemia", "gout", "lung cancer", "stroke", "arthritis",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
            fillers: ["Notes reviewed.", "Seen in clinic.", "Letter from the ward.", "Chart checked by the team."]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }
}

impl CueVocabulary {
    pub fn for_task(&self, task: TaskName) -> &TaskCues {
        match task {
            TaskName::Presence => &self.presence,
            TaskName::Experiencer => &self.experiencer,
            TaskName::Temporality => &self.temporality,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for task in TaskName::ALL {
            let c = self.for_task(task);
            if c.classes.len() != 3 || c.classes.iter().any(|p| p.is_empty()) || c.neutral.is_empty() {
                return Err(CliError::Input(format!(
                    "{task} cues need phrases for 3 classes and at least one neutral phrase"
                )));
            }
        }
        if self.entities.is_empty() {
            return Err(CliError::Input("cue vocabulary has no entities".into()));
        }
        Ok(())
    }

    /// Every phrase, for vocabulary coverage checks.
    pub fn all_phrases(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for task in TaskName::ALL {
            let c = self.for_task(task);
            out.extend(c.classes.iter().flatten().map(String::as_str));
            out.extend(c.neutral.iter().map(String::as_str));
        }
        out.extend(self.entities.iter().map(String::as_str));
        out.extend(self.fillers.iter().map(String::as_str));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkRecipe {
    /// Exact class counts per labelled task; tasks left out get no labels.
    pub counts: BTreeMap<TaskName, Vec<usize>>,
    pub cue_noise: f64,
    /// Probability of a neutral sentence before, and separately after, the main one.
    pub filler_rate: f64,
    pub seed: u64,
    pub cues: CueVocabulary,
}

/// Dataset class counts per task.
pub fn table_counts(task: TaskName) -> Vec<usize> {
    match task {
        TaskName::Presence => vec![578, 978, 7430],
        TaskName::Experiencer => vec![1002, 75, 7908],
        TaskName::Temporality => vec![733, 484, 7771],
    }
}

impl Default for BenchmarkRecipe {
    fn default() -> Self {
        BenchmarkRecipe {
            counts: TaskName::ALL.iter().map(|&t| (t, table_counts(t))).collect(),
            cue_noise: 0.0,
            filler_rate: 0.3,
            seed: 0,
            cues: CueVocabulary::default(),
        }
    }
}

impl BenchmarkRecipe {
    /// A recipe labelling only `task`.
    pub fn single(task: TaskName, counts: Vec<usize>, cue_noise: f64, seed: u64) -> Self {
        BenchmarkRecipe {
            counts: BTreeMap::from([(task, counts)]),
            cue_noise,
            seed,
            ..BenchmarkRecipe::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.cue_noise) {
            return Err(CliError::Input(format!("cue_noise {} outside [0, 1)", self.cue_noise)));
        }
        if !(0.0..=1.0).contains(&self.filler_rate) {
            return Err(CliError::Input(format!("filler_rate {} outside [0, 1]", self.filler_rate)));
        }
        if self.counts.is_empty() {
            return Err(CliError::Input("recipe labels no task".into()));
        }
        for (task, c) in &self.counts {
            if c.len() != 3 || c.contains(&0) {
                return Err(CliError::Input(format!("{task} counts {c:?} must be 3 positive numbers")));
            }
        }
        self.cues.validate()
    }
}

/// Builds text while tracking char offsets of the entity.
struct Sentence {
    text: String,
    chars: usize,
}

impl Sentence {
    fn push(&mut self, s: &str) {
        if s.is_empty() {
            return;
        }
        if !self.text.is_empty() {
            self.text.push(' ');
            self.chars += 1;
        }
        self.text.push_str(s);
        self.chars += s.chars().count();
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// The phrase used for `task`: the class cue, or noise, or a random class
/// when the task is unlabelled.
fn pick_cue<'a>(cues: &'a TaskCues, label: Option<usize>, noise: f64, rng: &mut Rng) -> &'a str {
    let Some(y) = label else {
        let class = rng.choose(&cues.classes);
        return rng.choose(class);
    };
    if noise > 0.0 && rng.bernoulli(noise) {
        if rng.bernoulli(0.5) {
            return rng.choose(&cues.neutral);
        }
        let other = (y + 1 + rng.below(cues.classes.len() - 1)) % cues.classes.len();
        return rng.choose(&cues.classes[other]);
    }
    rng.choose(&cues.classes[y])
}

/// Text, entity char span and entity index for one document.
fn compose(
    cues: &CueVocabulary,
    labels: &BTreeMap<TaskName, usize>,
    noise: f64,
    filler_rate: f64,
    rng: &mut Rng,
) -> (String, (usize, usize), usize) {
    let mut s = Sentence { text: String::new(), chars: 0 };
    if filler_rate > 0.0 && rng.bernoulli(filler_rate) {
        s.push(rng.choose(&cues.fillers));
    }
    let subject = pick_cue(&cues.experiencer, labels.get(&TaskName::Experiencer).copied(), noise, rng);
    let presence = pick_cue(&cues.presence, labels.get(&TaskName::Presence).copied(), noise, rng);
    let time = pick_cue(&cues.temporality, labels.get(&TaskName::Temporality).copied(), noise, rng);
    let e = rng.below(cues.entities.len());
    let entity = &cues.entities[e];
    s.push(&capitalize(subject));
    s.push(presence);
    let start = s.chars + usize::from(!s.text.is_empty());
    s.push(entity);
    let span = (start, start + entity.chars().count());
    s.push(time);
    s.text.push('.');
    s.chars += 1;
    if filler_rate > 0.0 && rng.bernoulli(filler_rate) {
        s.push(rng.choose(&cues.fillers));
    }
    (s.text, span, e)
}

/// Exactly `counts[t][k]` mentions of class k for every task t in the recipe.
pub fn generate(recipe: &BenchmarkRecipe) -> Result<Vec<AnnotationDocument>> {
    recipe.validate()?;
    let root = Rng::new(recipe.seed);
    let n_docs = recipe.counts.values().map(|c| c.iter().sum::<usize>()).max().unwrap_or(0);
    // Per task, a shuffled label sequence assigned to the first sum(counts) docs.
    let mut plan: BTreeMap<TaskName, Vec<usize>> = BTreeMap::new();
    for (&task, counts) in &recipe.counts {
        let mut seq: Vec<usize> = counts.iter().enumerate().flat_map(|(k, &c)| std::iter::repeat_n(k, c)).collect();
        root.named("labels").fork(task as u64).shuffle(&mut seq);
        plan.insert(task, seq);
    }
    let mut rng = root.named("text");
    let mut docs = Vec::with_capacity(n_docs);
    for i in 0..n_docs {
        let labels: BTreeMap<TaskName, usize> =
            plan.iter().filter_map(|(&t, seq)| seq.get(i).map(|&y| (t, y))).collect();
        let (text, (start, end), e) = compose(&recipe.cues, &labels, recipe.cue_noise, recipe.filler_rate, &mut rng);
        let names = labels
            .iter()
            .map(|(&t, &y)| (t.as_str().to_string(), TaskSpec::builtin(t).classes[y].clone()))
            .collect();
        docs.push(AnnotationDocument {
            doc_id: format!("bench-{i:05}"),
            text,
            mentions: vec![EntityMention {
                char_start: start,
                char_end: end,
                concept_id: format!("BM{e:04}"),
                labels: names,
            }],
        });
    }
    Ok(docs)
}

/// Noise-free lines in the generator output grammar, cycling over the
/// minority classes of `task`, as a stand-in reply from a generator model.
pub fn generated_lines(cues: &CueVocabulary, task: TaskName, n: usize, seed: u64) -> String {
    let spec = TaskSpec::builtin(task);
    let minority = spec.num_classes() - 1;
    let mut rng = Rng::new(seed);
    let mut out = String::new();
    for i in 0..n {
        let y = i % minority;
        let labels = BTreeMap::from([(task, y)]);
        let (text, (s, e), _) = compose(cues, &labels, 0.0, 0.0, &mut rng);
        let entity: String = text.chars().skip(s).take(e - s).collect();
        out.push_str(&llmgate::render_generated_line(&text, &entity, &spec.classes[y]));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use textprep::{class_counts, tokenize, Vocabulary};

    #[test]
    fn exact_counts_and_spans() {
        let r = BenchmarkRecipe::single(TaskName::Experiencer, vec![10, 10, 10], 0.0, 1);
        let docs = generate(&r).unwrap();
        assert_eq!(docs.len(), 30);
        assert_eq!(class_counts(&docs, &TaskSpec::experiencer()).unwrap(), [10, 10, 10]);
        for d in &docs {
            d.validate().unwrap();
            let surface = d.surface(&d.mentions[0]);
            assert!(r.cues.entities.contains(&surface), "{surface:?} in {:?}", d.text);
        }
    }

    #[test]
    fn default_recipe_matches_dataset_counts() {
        let docs = generate(&BenchmarkRecipe::default()).unwrap();
        assert_eq!(docs.len(), 8988);
        for t in TaskName::ALL {
            assert_eq!(class_counts(&docs, &TaskSpec::builtin(t)).unwrap(), table_counts(t));
        }
    }

    #[test]
    fn every_cue_is_in_the_bundled_vocabulary() {
        let v = Vocabulary::bundled();
        for phrase in CueVocabulary::default().all_phrases() {
            let tok = tokenize(phrase, &v);
            assert!(!tok.ids.contains(&v.unk), "{phrase:?} has unknown words");
        }
    }

    #[test]
    fn noiseless_cues_determine_labels() {
        let r = BenchmarkRecipe::single(TaskName::Presence, vec![20, 20, 20], 0.0, 3);
        let cues = &r.cues.presence;
        for d in generate(&r).unwrap() {
            let y = TaskSpec::presence().class_id(d.mentions[0].label(TaskName::Presence).unwrap()).unwrap();
            assert!(cues.classes[y].iter().any(|c| d.text.contains(&format!(" {c} "))), "{}", d.text);
        }
    }

    #[test]
    fn generator_lines_parse_back() {
        let cues = CueVocabulary::default();
        let raw = generated_lines(&cues, TaskName::Temporality, 6, 2);
        let prov = llmgate::GeneratorProvenance { model: "m".into(), prompt_sha256: String::new() };
        let batch = llmgate::parse_generated(&raw, &TaskSpec::temporality(), &prov).unwrap();
        assert_eq!(batch.candidates.len(), 6);
        assert_eq!(batch.skipped, 0);
        let labels: Vec<usize> = batch.candidates.iter().map(|c| c.label).collect();
        assert_eq!(labels, [0, 1, 0, 1, 0, 1]);
    }
}
