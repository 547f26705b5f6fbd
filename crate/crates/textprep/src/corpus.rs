use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::task::{TaskName, TaskSpec};

/// An annotated span. Offsets are character offsets, end exclusive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityMention {
    #[serde(rename = "start")]
    pub char_start: usize,
    #[serde(rename = "end")]
    pub char_end: usize,
    pub concept_id: String,
    /// Task name → class name.
    #[serde(default)]
    pub labels: BTreeMap<String, String>,
}

impl EntityMention {
    pub fn label(&self, task: TaskName) -> Option<&str> {
        self.labels
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(task.as_str()))
            .map(|(_, v)| v.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationDocument {
    pub doc_id: String,
    pub text: String,
    #[serde(default)]
    pub mentions: Vec<EntityMention>,
}

impl AnnotationDocument {
    /// Mention surface text, sliced by character offsets.
    pub fn surface(&self, mention: &EntityMention) -> String {
        self.text
            .chars()
            .skip(mention.char_start)
            .take(mention.char_end.saturating_sub(mention.char_start))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let len = self.text.chars().count();
        for (i, m) in self.mentions.iter().enumerate() {
            if m.char_start >= m.char_end || m.char_end > len {
                return Err(Error::Validation(format!(
                    "doc {}: mention {i} span [{}, {}) invalid for text of {len} chars",
                    self.doc_id, m.char_start, m.char_end
                )));
            }
            for (task, class) in &m.labels {
                let spec = TaskSpec::builtin(task.parse()?);
                if spec.class_id(class).is_none() {
                    return Err(Error::Validation(format!(
                        "doc {}: mention {i} has unknown {task} class {class:?}",
                        self.doc_id
                    )));
                }
            }
            for other in &self.mentions[..i] {
                if other.char_start != m.char_start || other.char_end != m.char_end {
                    continue;
                }
                for (task, class) in &m.labels {
                    if other.labels.get(task).is_some_and(|c| c != class) {
                        return Err(Error::Validation(format!(
                            "doc {}: span [{}, {}) has conflicting {task} labels",
                            self.doc_id, m.char_start, m.char_end
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

pub fn parse_jsonl(text: &str) -> Result<Vec<AnnotationDocument>> {
    let mut docs = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let doc: AnnotationDocument = serde_json::from_str(line).map_err(|e| Error::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        doc.validate().map_err(|e| Error::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        if !seen.insert(doc.doc_id.clone()) {
            return Err(Error::Malformed {
                line: line_no,
                message: format!("duplicate doc_id {:?}", doc.doc_id),
            });
        }
        docs.push(doc);
    }
    Ok(docs)
}

pub fn ingest_jsonl(path: impl AsRef<Path>) -> Result<Vec<AnnotationDocument>> {
    let docs = parse_jsonl(&fs::read_to_string(path)?)?;
    log::info!("ingested {} documents", docs.len());
    Ok(docs)
}

pub fn write_jsonl(path: impl AsRef<Path>, docs: &[AnnotationDocument]) -> Result<()> {
    let mut out = String::new();
    for d in docs {
        out.push_str(&serde_json::to_string(d).expect("documents serialize"));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Per-class mention counts for `task`; mentions without a label for it are ignored.
pub fn class_counts(docs: &[AnnotationDocument], task: &TaskSpec) -> Result<Vec<usize>> {
    let mut counts = vec![0; task.num_classes()];
    for d in docs {
        for m in &d.mentions {
            let Some(class) = m.label(task.name) else { continue };
            let id = task.class_id(class).ok_or_else(|| {
                Error::Validation(format!("doc {}: unknown {} class {class:?}", d.doc_id, task.name))
            })?;
            counts[id] += 1;
        }
    }
    Ok(counts)
}

/// Per-task class counts in the layout of a dataset description table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub documents: usize,
    pub mentions: usize,
    pub counts: BTreeMap<TaskName, Vec<usize>>,
}

impl IngestReport {
    pub fn new(docs: &[AnnotationDocument]) -> Result<Self> {
        let mut counts = BTreeMap::new();
        for task in TaskName::ALL {
            counts.insert(task, class_counts(docs, &TaskSpec::builtin(task))?);
        }
        Ok(IngestReport {
            documents: docs.len(),
            mentions: docs.iter().map(|d| d.mentions.len()).sum(),
            counts,
        })
    }

    pub fn render(&self) -> String {
        let mut out = format!("documents: {}\nmentions: {}\n", self.documents, self.mentions);
        for (task, counts) in &self.counts {
            let spec = TaskSpec::builtin(*task);
            out.push_str(&format!("{task}\n"));
            for (class, n) in spec.classes.iter().zip(counts) {
                out.push_str(&format!("  {class:<14}{n:>8}\n"));
            }
            out.push_str(&format!("  {:<14}{:>8}\n", "Total", counts.iter().sum::<usize>()));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"doc_id":"d1","text":"No evidence of asthma.","mentions":[{"start":15,"end":21,"concept_id":"195967001","labels":{"Presence":"Not present"}}]}"#;

    #[test]
    fn minimal_record() {
        let docs = parse_jsonl(MINIMAL).unwrap();
        assert_eq!(docs.len(), 1);
        assert_eq!(docs[0].mentions.len(), 1);
        assert_eq!(docs[0].surface(&docs[0].mentions[0]), "asthma");
        assert_eq!(class_counts(&docs, &TaskSpec::presence()).unwrap(), [1, 0, 0]);
    }

    #[test]
    fn missing_text_names_line_and_field() {
        let err = parse_jsonl(r#"{"doc_id":"d1","mentions":[]}"#).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::Malformed { line: 1, .. }));
        assert!(msg.contains("line 1") && msg.contains("text"), "{msg}");
    }

    #[test]
    fn conflicting_identical_spans_rejected() {
        let line = r#"{"doc_id":"d","text":"pain","mentions":[
            {"start":0,"end":4,"concept_id":"1","labels":{"Presence":"Present"}},
            {"start":0,"end":4,"concept_id":"1","labels":{"Presence":"Not present"}}]}"#
            .replace('\n', " ");
        assert!(parse_jsonl(&format!("{MINIMAL}\n{line}")).unwrap_err().to_string().contains("line 2"));
    }

    #[test]
    fn bad_spans_and_classes_rejected() {
        for bad in [
            r#"{"doc_id":"d","text":"pain","mentions":[{"start":2,"end":9,"concept_id":"1"}]}"#,
            r#"{"doc_id":"d","text":"pain","mentions":[{"start":2,"end":2,"concept_id":"1"}]}"#,
            r#"{"doc_id":"d","text":"pain","mentions":[{"start":0,"end":4,"concept_id":"1","labels":{"Presence":"Maybe"}}]}"#,
            r#"{"doc_id":"d","text":"pain","mentions":[{"start":0,"end":4,"concept_id":"1","labels":{"Severity":"High"}}]}"#,
        ] {
            assert!(parse_jsonl(bad).is_err(), "{bad}");
        }
        assert!(parse_jsonl(&format!("{MINIMAL}\n{MINIMAL}")).is_err());
    }
}
