use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use models::{BiLstmConfig, EncoderConfig, LoraConfig, ModelConfig};
use textprep::{EncodeConfig, TaskName};
use trainkit::{SplitPlan, TrainConfig, DEFAULT_CAP_FRACTION, DEFAULT_LAMBDA};

use crate::error::{io_err, CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelFamily {
    Transformer,
    Bilstm,
}

/// Imbalance mitigation arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Arm {
    #[serde(rename = "none")]
    None,
    #[serde(rename = "cw")]
    ClassWeights,
    #[serde(rename = "sd")]
    Synthetic,
    #[serde(rename = "2pl")]
    TwoPhase,
    #[serde(rename = "2pl+sd")]
    TwoPhaseSynthetic,
}

impl Arm {
    pub fn as_str(self) -> &'static str {
        match self {
            Arm::None => "none",
            Arm::ClassWeights => "cw",
            Arm::Synthetic => "sd",
            Arm::TwoPhase => "2pl",
            Arm::TwoPhaseSynthetic => "2pl+sd",
        }
    }

    pub fn uses_synthetic(self) -> bool {
        matches!(self, Arm::Synthetic | Arm::TwoPhaseSynthetic)
    }

    pub fn is_two_phase(self) -> bool {
        matches!(self, Arm::TwoPhase | Arm::TwoPhaseSynthetic)
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Arm {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(Arm::None),
            "cw" => Ok(Arm::ClassWeights),
            "sd" => Ok(Arm::Synthetic),
            "2pl" => Ok(Arm::TwoPhase),
            "2pl+sd" => Ok(Arm::TwoPhaseSynthetic),
            other => Err(CliError::Usage(format!("unknown arm {other:?}; expected none, cw, sd, 2pl or 2pl+sd"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TwoPhaseSettings {
    /// Per-class cap for phase 1; the smallest class count when unset.
    pub n: Option<usize>,
    pub lambda: f64,
    pub epochs1: usize,
    pub epochs2: usize,
}

impl Default for TwoPhaseSettings {
    fn default() -> Self {
        TwoPhaseSettings {
            n: None,
            lambda: DEFAULT_LAMBDA,
            epochs1: 20,
            epochs2: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub task: TaskName,
    pub model: ModelFamily,
    pub arm: Arm,
    pub seed: u64,
    pub corpus: Option<PathBuf>,
    /// Bundled vocabulary when unset.
    pub vocab: Option<PathBuf>,
    /// Output directory for checkpoint and reports.
    pub out: Option<PathBuf>,
    /// Synthetic candidate file, required by the sd arms.
    pub augmentation: Option<PathBuf>,
    /// Review decisions for the candidates; without it nothing is merged.
    pub review: Option<PathBuf>,
    pub cap_fraction: f64,
    /// Sequence length including CLS and SEP; overrides the backbone's own.
    pub max_len: usize,
    pub encoder: EncoderConfig,
    pub bilstm: BiLstmConfig,
    pub lora: Option<LoraConfig>,
    pub head_hidden_dim: Option<usize>,
    pub split: SplitPlan,
    pub two_phase: TwoPhaseSettings,
    pub batch_size: usize,
    pub epochs: usize,
    pub peak_lr: f64,
    pub warmup_fraction: f64,
    pub weight_decay: f64,
    pub chunk_size: usize,
    pub target_train_accuracy: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        RunConfig {
            task: TaskName::Experiencer,
            model: ModelFamily::Transformer,
            arm: Arm::None,
            seed: 0,
            corpus: None,
            vocab: None,
            out: None,
            augmentation: None,
            review: None,
            cap_fraction: DEFAULT_CAP_FRACTION,
            max_len: 64,
            encoder: EncoderConfig::default(),
            bilstm: BiLstmConfig::default(),
            lora: None,
            head_hidden_dim: None,
            split: SplitPlan::default(),
            two_phase: TwoPhaseSettings::default(),
            batch_size: train.batch_size,
            epochs: train.epochs,
            peak_lr: train.peak_lr,
            warmup_fraction: train.warmup_fraction,
            weight_decay: train.weight_decay,
            chunk_size: train.chunk_size,
            target_train_accuracy: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(CliError::Input("batch_size must be at least 1".into()));
        }
        if self.arm.uses_synthetic() && self.augmentation.is_none() {
            return Err(CliError::Usage(format!("arm {} needs an augmentation file", self.arm)));
        }
        if self.max_len < 3 {
            return Err(CliError::Input(format!("max_len {} leaves no room for text", self.max_len)));
        }
        Ok(())
    }

    pub fn corpus_path(&self) -> Result<&Path> {
        self.corpus.as_deref().ok_or_else(|| CliError::Usage("no corpus given (--corpus)".into()))
    }

    pub fn out_dir(&self) -> Result<&Path> {
        self.out.as_deref().ok_or_else(|| CliError::Usage("no output directory given (--out)".into()))
    }

    pub fn encode_config(&self) -> EncodeConfig {
        EncodeConfig::with_max_len(self.max_len)
    }

    pub fn model_config(&self, vocab_size: usize, num_classes: usize) -> ModelConfig {
        let mut cfg = match self.model {
            ModelFamily::Transformer => ModelConfig::transformer(
                vocab_size,
                num_classes,
                EncoderConfig {
                    max_len: self.max_len,
                    ..self.encoder.clone()
                },
            ),
            ModelFamily::Bilstm => ModelConfig::bilstm(
                vocab_size,
                num_classes,
                BiLstmConfig {
                    max_len: self.max_len,
                    ..self.bilstm.clone()
                },
            ),
        };
        cfg.head.hidden_dim = self.head_hidden_dim;
        cfg.lora = self.lora.clone();
        cfg
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            peak_lr: self.peak_lr,
            warmup_fraction: self.warmup_fraction,
            weight_decay: self.weight_decay,
            chunk_size: self.chunk_size,
            seed: self.seed,
            target_train_accuracy: self.target_train_accuracy,
        }
    }
}

/// A TOML document with `key = value` overrides applied; dotted keys reach
/// into tables. Values are parsed as TOML and fall back to plain strings.
pub fn apply_overrides(mut table: toml::Table, overrides: &[(String, String)]) -> Result<toml::Table> {
    for (key, raw) in overrides {
        let value = parse_value(raw);
        let parts: Vec<&str> = key.split('.').collect();
        let (last, path) = parts.split_last().expect("split yields one part");
        let mut cur = &mut table;
        for p in path {
            let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
            cur = entry
                .as_table_mut()
                .ok_or_else(|| CliError::Usage(format!("override {key}: {p} is not a table")))?;
        }
        cur.insert(last.to_string(), value);
    }
    Ok(table)
}

fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

pub fn read_toml(path: Option<&Path>) -> Result<toml::Table> {
    match path {
        None => Ok(toml::Table::new()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| io_err(p, e))?;
            text.parse::<toml::Table>()
                .map_err(|e| CliError::Input(format!("{}: {e}", p.display())))
        }
    }
}

/// Canonical spelling for the task name so `task = "presence"` works.
fn normalize_task(table: &mut toml::Table) -> Result<()> {
    if let Some(toml::Value::String(s)) = table.get("task") {
        let t: TaskName = s.parse().map_err(|e: textprep::Error| CliError::Usage(e.to_string()))?;
        table.insert("task".into(), toml::Value::String(t.as_str().into()));
    }
    Ok(())
}

pub fn load_run_config(path: Option<&Path>, overrides: &[(String, String)]) -> Result<RunConfig> {
    let mut table = apply_overrides(read_toml(path)?, overrides)?;
    normalize_task(&mut table)?;
    let cfg: RunConfig = table
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Input(format!("run config: {e}")))?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_values() {
        let file: toml::Table = "seed = 3\narm = \"cw\"\n[encoder]\nd_model = 32\nheads = 4\n".parse().unwrap();
        let t = apply_overrides(
            file,
            &[
                ("seed".into(), "9".into()),
                ("encoder.layers".into(), "1".into()),
                ("task".into(), "temporality".into()),
                ("corpus".into(), "data/x.jsonl".into()),
            ],
        )
        .unwrap();
        let mut t = t;
        normalize_task(&mut t).unwrap();
        let cfg: RunConfig = t.try_into().unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.arm, Arm::ClassWeights);
        assert_eq!((cfg.encoder.d_model, cfg.encoder.layers), (32, 1));
        assert_eq!(cfg.task, TaskName::Temporality);
        assert_eq!(cfg.corpus.as_deref(), Some(Path::new("data/x.jsonl")));
    }

    #[test]
    fn unknown_fields_and_arms_rejected() {
        assert!(load_run_config(None, &[("sed".into(), "1".into())]).is_err());
        assert!("3pl".parse::<Arm>().is_err());
        let sd = RunConfig { arm: Arm::Synthetic, ..RunConfig::default() };
        assert!(matches!(sd.validate(), Err(CliError::Usage(_))));
        for a in ["none", "cw", "sd", "2pl", "2pl+sd"] {
            assert_eq!(a.parse::<Arm>().unwrap().as_str(), a);
        }
    }
}
