use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The three contextual meta-annotation tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskName {
    Presence,
    Experiencer,
    Temporality,
}

impl TaskName {
    pub const ALL: [TaskName; 3] = [TaskName::Presence, TaskName::Experiencer, TaskName::Temporality];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskName::Presence => "Presence",
            TaskName::Experiencer => "Experiencer",
            TaskName::Temporality => "Temporality",
        }
    }
}

impl fmt::Display for TaskName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TaskName::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::UnknownTask(s.to_string()))
    }
}

/// A task and its ordered class set. Class ids are positions in `classes`.
///
/// The built-in tasks list their two minority classes first and the majority
/// class last.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: TaskName,
    pub classes: Vec<String>,
    /// Alternative spellings accepted when parsing labels: (alias, canonical).
    #[serde(default)]
    pub aliases: Vec<(String, String)>,
}

impl TaskSpec {
    pub fn new(name: TaskName, classes: Vec<String>, aliases: Vec<(String, String)>) -> Result<Self> {
        if classes.len() != 3 {
            return Err(Error::Validation(format!(
                "task {name} needs exactly 3 classes, got {}",
                classes.len()
            )));
        }
        for (i, c) in classes.iter().enumerate() {
            if classes[..i].iter().any(|o| o.eq_ignore_ascii_case(c)) {
                return Err(Error::Validation(format!("task {name} repeats class {c:?}")));
            }
        }
        for (_, canonical) in &aliases {
            if !classes.contains(canonical) {
                return Err(Error::Validation(format!("alias target {canonical:?} is not a class of {name}")));
            }
        }
        Ok(TaskSpec { name, classes, aliases })
    }

    pub fn builtin(name: TaskName) -> TaskSpec {
        let owned = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let pairs = |v: &[(&str, &str)]| v.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
        match name {
            TaskName::Presence => TaskSpec {
                name,
                classes: owned(&["Not present", "Hypothetical", "Present"]),
                aliases: pairs(&[("False", "Not present"), ("N/A", "Hypothetical"), ("True", "Present")]),
            },
            TaskName::Experiencer => TaskSpec {
                name,
                classes: owned(&["Other", "Family", "Patient"]),
                aliases: pairs(&[("Not applicable", "Other")]),
            },
            TaskName::Temporality => TaskSpec {
                name,
                classes: owned(&["Past", "Future", "Recent"]),
                aliases: Vec::new(),
            },
        }
    }

    pub fn presence() -> TaskSpec {
        TaskSpec::builtin(TaskName::Presence)
    }

    pub fn experiencer() -> TaskSpec {
        TaskSpec::builtin(TaskName::Experiencer)
    }

    pub fn temporality() -> TaskSpec {
        TaskSpec::builtin(TaskName::Temporality)
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    /// Class id for a name or alias, ignoring ASCII case and surrounding space.
    pub fn class_id(&self, label: &str) -> Option<usize> {
        let label = label.trim();
        if let Some(i) = self.classes.iter().position(|c| c.eq_ignore_ascii_case(label)) {
            return Some(i);
        }
        let (_, canonical) = self.aliases.iter().find(|(a, _)| a.eq_ignore_ascii_case(label))?;
        self.classes.iter().position(|c| c == canonical)
    }

    pub fn class_name(&self, id: usize) -> Option<&str> {
        self.classes.get(id).map(String::as_str)
    }

    /// Id of the class with the largest count; the earliest wins ties.
    pub fn majority_class(&self, counts: &[usize]) -> usize {
        let mut best = 0;
        for (i, &c) in counts.iter().enumerate() {
            if c > counts[best] {
                best = i;
            }
        }
        best
    }
}
