use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use numcore::Rng;
use textprep::{AnnotationDocument, EntityMention, TaskName, TaskSpec, Validation};

use crate::error::{Error, Result};
use crate::prompt::Exemplar;

pub fn sha256_hex(s: &str) -> String {
    Sha256::digest(s.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorProvenance {
    pub model: String,
    pub prompt_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticCandidate {
    /// Content hash of task, label, text and entity.
    pub candidate_id: String,
    pub text: String,
    pub entity_surface: String,
    pub char_start: usize,
    pub char_end: usize,
    pub task: TaskName,
    pub label: usize,
    pub class_name: String,
    pub validation: Validation,
    pub provenance: GeneratorProvenance,
}

impl SyntheticCandidate {
    /// A one-mention document carrying this candidate's label.
    pub fn to_document(&self) -> AnnotationDocument {
        AnnotationDocument {
            doc_id: format!("syn-{}", self.candidate_id),
            text: self.text.clone(),
            mentions: vec![EntityMention {
                char_start: self.char_start,
                char_end: self.char_end,
                concept_id: String::new(),
                labels: [(self.task.as_str().to_string(), self.class_name.clone())].into(),
            }],
        }
    }
}

/// Minority exemplars per minority class, and majority exemplars, in a
/// generation prompt.
pub const GEN_MINORITY_PER_CLASS: usize = 4;
pub const GEN_MAJORITY: usize = 2;

/// The line grammar the generator is asked to follow.
pub fn render_generated_line(text: &str, entity: &str, class: &str) -> String {
    format!("{text}; '{entity}' - {class}")
}

/// Prompt asking for new labelled samples, showing 4 + 4 minority and 2
/// majority exemplars from `pool`. The last class of `task` is the majority.
pub fn build_generation_prompt(task: &TaskSpec, pool: &[Exemplar], count: usize, seed: u64) -> Result<String> {
    let k = task.num_classes();
    let majority = k - 1;
    let rng = Rng::new(seed);
    let mut picked: Vec<&Exemplar> = Vec::new();
    for y in 0..k {
        let want = if y == majority { GEN_MAJORITY } else { GEN_MINORITY_PER_CLASS };
        let mut of_class: Vec<&Exemplar> = pool.iter().filter(|e| e.label == y).collect();
        if of_class.len() < want {
            return Err(Error::Template(format!(
                "generation pool has {} {} exemplars, {want} needed",
                of_class.len(),
                task.classes[y]
            )));
        }
        rng.fork(y as u64).shuffle(&mut of_class);
        picked.extend(of_class.into_iter().take(want));
    }
    let minority: Vec<&str> = task.classes[..majority].iter().map(String::as_str).collect();
    let mut out = format!(
        "You write realistic sentences from clinical notes for a {} classification dataset.\n\
         Each sentence mentions one medical entity. The label says {} for that entity.\n\
         Classes: {}.\n\n\
         Examples:\n",
        task.name,
        match task.name {
            TaskName::Presence => "whether the entity is affirmed, hypothetical or negated",
            TaskName::Experiencer => "who experiences the entity",
            TaskName::Temporality => "when the entity applies",
        },
        task.classes.join(", ")
    );
    for ex in &picked {
        out.push_str(&render_generated_line(&ex.text, &ex.surface(), &task.classes[ex.label]));
        out.push('\n');
    }
    out.push_str(&format!(
        "\nWrite {count} new, varied examples, mostly of the classes {}. \
         Output one example per line in exactly this format and nothing else:\n\
         <text>; '<entity>' - <class>\n",
        minority.join(" and ")
    ));
    Ok(out)
}

/// Lines that parsed, plus how many were skipped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedBatch {
    pub candidates: Vec<SyntheticCandidate>,
    pub skipped: usize,
}

fn strip_list_marker(line: &str) -> &str {
    let l = line.trim();
    let l = l.trim_start_matches(['-', '*', '•']).trim_start();
    let digits = l.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits > 0 {
        let rest = &l[digits..];
        if let Some(r) = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')')) {
            return r.trim_start();
        }
    }
    l
}

fn parse_line(line: &str, task: &TaskSpec) -> Option<(String, String, usize, usize, usize)> {
    let line = strip_list_marker(line);
    let dash = line.rfind(" - ")?;
    let class = line[dash + 3..].trim().trim_end_matches('.').trim();
    let label = task.class_id(class)?;
    let head = line[..dash].trim_end();
    let head = head.strip_suffix('\'')?;
    let open = head.rfind("; '")?;
    let text = head[..open].trim();
    let entity = &head[open + 3..];
    if text.is_empty() || entity.trim().is_empty() {
        return None;
    }
    let byte = text.find(entity)?;
    let start = text[..byte].chars().count();
    let end = start + entity.chars().count();
    Some((text.to_string(), entity.to_string(), start, end, label))
}

/// Parses `<text>; '<entity>' - <Class>` lines for `task`. Lines with another
/// grammar, an unknown class, or an entity absent from the text are skipped.
pub fn parse_generated(raw: &str, task: &TaskSpec, provenance: &GeneratorProvenance) -> Result<ParsedBatch> {
    let mut candidates = Vec::new();
    let mut skipped = 0;
    for line in raw.lines().filter(|l| !l.trim().is_empty()) {
        match parse_line(line, task) {
            Some((text, entity, start, end, label)) => {
                let class_name = task.classes[label].clone();
                let id = sha256_hex(&format!("{}\u{1f}{class_name}\u{1f}{text}\u{1f}{start}:{end}", task.name));
                candidates.push(SyntheticCandidate {
                    candidate_id: id[..16].to_string(),
                    text,
                    entity_surface: entity,
                    char_start: start,
                    char_end: end,
                    task: task.name,
                    label,
                    class_name,
                    validation: Validation::Pending,
                    provenance: provenance.clone(),
                });
            }
            None => {
                log::debug!("skipping generated line {line:?}");
                skipped += 1;
            }
        }
    }
    if candidates.is_empty() {
        return Err(Error::Generation(format!(
            "no parseable lines in response ({skipped} skipped)"
        )));
    }
    Ok(ParsedBatch { candidates, skipped })
}

/// Drops candidates whose text equals a corpus text or an earlier candidate.
/// Returns the number removed.
pub fn dedup_candidates(candidates: &mut Vec<SyntheticCandidate>, corpus_texts: &HashSet<String>) -> usize {
    let before = candidates.len();
    let mut seen: HashSet<String> = HashSet::new();
    candidates.retain(|c| !corpus_texts.contains(&c.text) && seen.insert(c.text.clone()));
    before - candidates.len()
}

pub fn write_candidates(path: impl AsRef<Path>, candidates: &[SyntheticCandidate]) -> Result<()> {
    let mut out = String::new();
    for c in candidates {
        out.push_str(&serde_json::to_string(c)?);
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_candidates(path: impl AsRef<Path>) -> Result<Vec<SyntheticCandidate>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::Review(format!("candidates line {}: {e}", i + 1))))
        .collect()
}
