use serde::{Deserialize, Serialize};

use textprep::TaskSpec;

use crate::endpoint::ChatClient;
use crate::error::{Error, Result};
use crate::prompt::parse_label;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Classified {
    pub label: usize,
    pub raw: String,
    pub attempts: u32,
}

/// Sends every prompt and parses each reply. One failure never aborts the batch.
pub fn classify_remote(client: &ChatClient, prompts: &[String], task: &TaskSpec) -> Vec<Result<Classified>> {
    client
        .complete_all(prompts)
        .into_iter()
        .map(|r| {
            let c = r?;
            let label = parse_label(&c.text, task)?;
            Ok(Classified {
                label,
                raw: c.text,
                attempts: c.attempts,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedLabels {
    pub labels: Vec<usize>,
    pub parse_failures: usize,
    pub transport_failures: usize,
    pub max_attempts: u32,
}

impl ResolvedLabels {
    pub fn parse_failure_rate(&self) -> f64 {
        self.parse_failures as f64 / self.labels.len().max(1) as f64
    }
}

/// Turns per-item outcomes into labels, scoring every failure as `fallback`
/// (normally the majority class) and counting failures by kind.
pub fn resolve_labels(results: &[Result<Classified>], fallback: usize) -> ResolvedLabels {
    let mut out = ResolvedLabels {
        labels: Vec::with_capacity(results.len()),
        parse_failures: 0,
        transport_failures: 0,
        max_attempts: 0,
    };
    for r in results {
        match r {
            Ok(c) => {
                out.labels.push(c.label);
                out.max_attempts = out.max_attempts.max(c.attempts);
            }
            Err(e) => {
                out.labels.push(fallback);
                if let Some(a) = e.attempts() {
                    out.max_attempts = out.max_attempts.max(a);
                }
                match e {
                    Error::Parse { .. } => out.parse_failures += 1,
                    _ => out.transport_failures += 1,
                }
            }
        }
    }
    out
}
