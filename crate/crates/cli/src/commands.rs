use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use llmgate::{
    apply_review, build_classification_prompt, build_generation_prompt, classify_remote, dedup_candidates,
    exemplars_from_corpus, parse_generated, read_candidates, read_review_file, resolve_labels, review_stub,
    select_exemplars, sha256_hex, write_candidates, ChatClient, Exemplar, GeneratorProvenance, LlmEndpoint,
    PromptMode, PromptTemplate, SyntheticCandidate, FEW_SHOT_PER_CLASS,
};
use models::EntityClassifier;
use numcore::Checkpoint;
use textprep::{
    encode, encode_corpus, ingest_jsonl, write_jsonl, AnnotationDocument, EncodedExample, IngestReport, Provenance,
    TaskSpec, Vocabulary,
};
use trainkit::{
    compute_class_weights, evaluate, label_counts, merge_synthetic, render_csv, render_table, stratified_split,
    train, two_phase_train, ClassWeights, EvalReport, SplitPlan, TrainSummary, TwoPhasePlan,
};

use crate::benchmark::{generate, BenchmarkRecipe};
use crate::config::{Arm, ModelFamily, RunConfig};
use crate::error::{io_err, CliError, Result};

/// Checkpoint metadata key holding the run configuration.
pub const RUN_CONFIG_KEY: &str = "run_config";

pub fn load_corpus(path: &Path) -> Result<Vec<AnnotationDocument>> {
    if !path.exists() {
        return Err(CliError::Input(format!("{}: no such file", path.display())));
    }
    Ok(ingest_jsonl(path)?)
}

fn load_vocab(cfg: &RunConfig) -> Result<Vocabulary> {
    match &cfg.vocab {
        Some(p) => Ok(Vocabulary::from_file(p)?),
        None => Ok(Vocabulary::bundled()),
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Train and test indices into a list of labels, stratified per class.
pub fn split_indices(labels: &[usize], k: usize, plan: SplitPlan) -> Result<(Vec<usize>, Vec<usize>)> {
    let idx: Vec<usize> = (0..labels.len()).collect();
    Ok(stratified_split(&idx, |&i| labels[i], k, plan)?)
}

fn pick<T: Clone>(items: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| items[i].clone()).collect()
}

pub fn cmd_ingest(corpus: &Path) -> Result<IngestReport> {
    let docs = load_corpus(corpus)?;
    Ok(IngestReport::new(&docs)?)
}

pub fn cmd_make_benchmark(recipe: &BenchmarkRecipe, out: &Path) -> Result<Vec<AnnotationDocument>> {
    let docs = generate(recipe)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    write_jsonl(out, &docs)?;
    Ok(docs)
}

/// Labelled mentions of the configured task, encoded in corpus order, with
/// the stratified split applied.
pub struct PreparedData {
    pub task: TaskSpec,
    pub vocab: Vocabulary,
    pub docs: Vec<AnnotationDocument>,
    pub train: Vec<EncodedExample>,
    pub test: Vec<EncodedExample>,
}

pub fn prepare(cfg: &RunConfig) -> Result<PreparedData> {
    let task = TaskSpec::builtin(cfg.task);
    let vocab = load_vocab(cfg)?;
    let docs = load_corpus(cfg.corpus_path()?)?;
    let (examples, _) = encode_corpus(&docs, &task, &vocab, cfg.encode_config())?;
    let labels: Vec<usize> = examples.iter().map(|e| e.label).collect();
    let (tr, te) = split_indices(&labels, task.num_classes(), cfg.split)?;
    Ok(PreparedData {
        train: pick(&examples, &tr),
        test: pick(&examples, &te),
        task,
        vocab,
        docs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub task: String,
    pub plan: SplitPlan,
    pub train_counts: Vec<usize>,
    pub test_counts: Vec<usize>,
    /// `doc_id#mention` references.
    pub train: Vec<String>,
    pub test: Vec<String>,
}

fn mention_ref(ex: &EncodedExample) -> String {
    match &ex.provenance {
        Provenance::Corpus { doc_id, mention } => format!("{doc_id}#{mention}"),
        Provenance::Synthetic { candidate_id, .. } => format!("synthetic:{candidate_id}"),
    }
}

pub fn cmd_split(cfg: &RunConfig) -> Result<SplitManifest> {
    let data = prepare(cfg)?;
    let k = data.task.num_classes();
    let manifest = SplitManifest {
        task: data.task.name.to_string(),
        plan: cfg.split,
        train_counts: label_counts(&data.train, k),
        test_counts: label_counts(&data.test, k),
        train: data.train.iter().map(mention_ref).collect(),
        test: data.test.iter().map(mention_ref).collect(),
    };
    if let Some(out) = &cfg.out {
        write_file(out, &serde_json::to_string_pretty(&manifest)?)?;
    }
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseLog {
    pub name: String,
    pub examples: usize,
    pub class_weights: Vec<f64>,
    pub train: TrainSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub label: String,
    pub task: String,
    pub model: ModelFamily,
    pub arm: String,
    pub seed: u64,
    pub train_examples: usize,
    pub test_examples: usize,
    pub synthetic_merged: usize,
    pub synthetic_not_accepted: usize,
    pub phases: Vec<PhaseLog>,
    pub train_accuracy: f64,
    /// Scores on the held-out split.
    pub eval: EvalReport,
}

/// Candidates of the configured task with review decisions applied, encoded.
fn synthetic_examples(cfg: &RunConfig, task: &TaskSpec, vocab: &Vocabulary) -> Result<Vec<EncodedExample>> {
    let path = cfg
        .augmentation
        .as_deref()
        .ok_or_else(|| CliError::Usage(format!("arm {} needs an augmentation file", cfg.arm)))?;
    let candidates = read_candidates(path)?;
    if let Some(c) = candidates.iter().find(|c| c.task != task.name) {
        return Err(CliError::Input(format!(
            "candidate {} is for {}, not {}",
            c.candidate_id, c.task, task.name
        )));
    }
    let reviewed: Vec<SyntheticCandidate> = match &cfg.review {
        Some(p) => {
            let out = apply_review(&candidates, &read_review_file(p)?)?;
            out.accepted.into_iter().chain(out.rejected).chain(out.pending).collect()
        }
        None => {
            log::warn!("no review file; all {} candidates stay pending and will not be merged", candidates.len());
            candidates
        }
    };
    let mut out = Vec::with_capacity(reviewed.len());
    for c in &reviewed {
        let doc = c.to_document();
        let mut ex = encode(&doc, 0, task, vocab, cfg.encode_config())?;
        ex.provenance = Provenance::Synthetic {
            candidate_id: c.candidate_id.clone(),
            validation: c.validation,
        };
        out.push(ex);
    }
    Ok(out)
}

/// Runs the configured arm without writing anything.
pub fn run_training(cfg: &RunConfig) -> Result<(RunReport, EntityClassifier)> {
    cfg.validate()?;
    let data = prepare(cfg)?;
    let task = &data.task;
    let k = task.num_classes();
    let (train_set, merged, not_accepted) = if cfg.arm.uses_synthetic() {
        let syn = synthetic_examples(cfg, task, &data.vocab)?;
        let m = merge_synthetic(data.train.clone(), &syn, cfg.cap_fraction)?;
        (m.dataset, m.merged, m.not_accepted)
    } else {
        (data.train.clone(), 0, 0)
    };
    let counts = label_counts(&train_set, k);
    let mut model = EntityClassifier::new(cfg.model_config(data.vocab.len(), k), cfg.seed)?;
    let tc = cfg.train_config();
    let mut phases = Vec::new();
    let eval = if cfg.arm.is_two_phase() {
        let tp = &cfg.two_phase;
        let plan = TwoPhasePlan::from_counts(&counts, tp.n, tp.lambda, tp.epochs1, tp.epochs2)?;
        let out = two_phase_train(&mut model, task, &train_set, Some(&data.test), &plan, &tc)?;
        for (name, p) in [("phase1", &out.phase1), ("phase2", &out.phase2)] {
            phases.push(PhaseLog {
                name: name.into(),
                examples: p.examples,
                class_weights: p.weights.clone(),
                train: p.train.clone(),
            });
        }
        out.phase2.report
    } else {
        let weights = match cfg.arm {
            Arm::None => ClassWeights::uniform(k),
            _ => compute_class_weights(&counts)?,
        };
        let summary = train(&mut model, &train_set, weights.as_slice(), &tc)?;
        phases.push(PhaseLog {
            name: "single".into(),
            examples: train_set.len(),
            class_weights: weights.0,
            train: summary,
        });
        evaluate(&model, task, &data.test)?
    };
    let train_accuracy = trainkit::accuracy(&model, &train_set)?;
    let model_name = match cfg.model {
        ModelFamily::Transformer => "transformer",
        ModelFamily::Bilstm => "bilstm",
    };
    let report = RunReport {
        label: format!("{model_name}/{}/seed{}", cfg.arm, cfg.seed),
        task: task.name.to_string(),
        model: cfg.model,
        arm: cfg.arm.to_string(),
        seed: cfg.seed,
        train_examples: train_set.len(),
        test_examples: data.test.len(),
        synthetic_merged: merged,
        synthetic_not_accepted: not_accepted,
        phases,
        train_accuracy,
        eval,
    };
    Ok((report, model))
}

pub struct TrainArtifacts {
    pub report: RunReport,
    pub checkpoint: PathBuf,
    pub report_json: PathBuf,
    pub table: String,
}

/// Trains and writes `model.ckpt.json`, `report.json`, `report.txt` and
/// `report.csv` into the output directory.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainArtifacts> {
    let out = cfg.out_dir()?.to_path_buf();
    let (report, model) = run_training(cfg)?;
    fs::create_dir_all(&out).map_err(|e| io_err(&out, e))?;
    let mut ckpt = model.to_checkpoint();
    // Where the artifacts went is not part of the model.
    let stored = RunConfig { out: None, ..cfg.clone() };
    ckpt.metadata.insert(RUN_CONFIG_KEY.into(), serde_json::to_string(&stored)?);
    let checkpoint = out.join("model.ckpt.json");
    ckpt.save(&checkpoint).map_err(|e| CliError::Internal(e.to_string()))?;
    let report_json = out.join("report.json");
    write_file(&report_json, &serde_json::to_string_pretty(&report)?)?;
    let rows = [(report.label.clone(), &report.eval)];
    let table = render_table(&rows);
    write_file(&out.join("report.txt"), &table)?;
    write_file(&out.join("report.csv"), &render_csv(&rows))?;
    Ok(TrainArtifacts {
        report,
        checkpoint,
        report_json,
        table,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitSide {
    Train,
    Test,
}

impl std::str::FromStr for SplitSide {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitSide::Train),
            "test" => Ok(SplitSide::Test),
            other => Err(CliError::Usage(format!("unknown split {other:?}; expected train or test"))),
        }
    }
}

/// Scores a saved model on one side of the split it was trained with.
pub fn cmd_eval(checkpoint: &Path, corpus: Option<&Path>, side: SplitSide) -> Result<EvalReport> {
    let ckpt = Checkpoint::load(checkpoint).map_err(|e| CliError::Input(format!("{}: {e}", checkpoint.display())))?;
    let text = ckpt
        .metadata
        .get(RUN_CONFIG_KEY)
        .ok_or_else(|| CliError::Input(format!("{} has no run configuration", checkpoint.display())))?;
    let mut cfg: RunConfig = serde_json::from_str(text)
        .map_err(|e| CliError::Input(format!("{}: run configuration version mismatch: {e}", checkpoint.display())))?;
    if let Some(c) = corpus {
        cfg.corpus = Some(c.to_path_buf());
    }
    let model = EntityClassifier::from_checkpoint(&ckpt)?;
    let data = prepare(&cfg)?;
    if model.config.vocab_size != data.vocab.len() || model.config.num_classes != data.task.num_classes() {
        return Err(CliError::Input(format!(
            "checkpoint expects vocabulary {} and {} classes, data has {} and {}",
            model.config.vocab_size,
            model.config.num_classes,
            data.vocab.len(),
            data.task.num_classes()
        )));
    }
    let set = match side {
        SplitSide::Train => &data.train,
        SplitSide::Test => &data.test,
    };
    Ok(evaluate(&model, &data.task, set)?)
}

/// Exemplars of the configured task split as the encoded data would be.
fn exemplar_split(cfg: &RunConfig, task: &TaskSpec) -> Result<(Vec<AnnotationDocument>, Vec<Exemplar>, Vec<Exemplar>)> {
    let docs = load_corpus(cfg.corpus_path()?)?;
    let all = exemplars_from_corpus(&docs, task)?;
    let labels: Vec<usize> = all.iter().map(|e| e.label).collect();
    let (tr, te) = split_indices(&labels, task.num_classes(), cfg.split)?;
    Ok((docs, pick(&all, &tr), pick(&all, &te)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentOutcome {
    pub candidates: usize,
    pub skipped_lines: usize,
    pub duplicates: usize,
    pub failed_prompts: usize,
    pub candidates_path: PathBuf,
    pub review_path: PathBuf,
}

/// Asks the generator for new minority examples and writes them as pending
/// candidates next to a review stub.
pub fn cmd_augment(
    cfg: &RunConfig,
    endpoint: &LlmEndpoint,
    per_prompt: usize,
    prompts: usize,
    out: &Path,
) -> Result<AugmentOutcome> {
    let task = TaskSpec::builtin(cfg.task);
    let (docs, pool, _) = exemplar_split(cfg, &task)?;
    let texts: Vec<String> = (0..prompts)
        .map(|i| build_generation_prompt(&task, &pool, per_prompt, cfg.seed.wrapping_add(i as u64)))
        .collect::<llmgate::Result<_>>()?;
    let client = ChatClient::new(endpoint.clone())?;
    let mut candidates = Vec::new();
    let mut skipped = 0;
    let mut failed = 0;
    let mut first_err = None;
    for (prompt, reply) in texts.iter().zip(client.complete_all(&texts)) {
        let prov = GeneratorProvenance {
            model: endpoint.model_name.clone(),
            prompt_sha256: sha256_hex(prompt),
        };
        match reply.map_err(CliError::from).and_then(|c| Ok(parse_generated(&c.text, &task, &prov)?)) {
            Ok(batch) => {
                skipped += batch.skipped;
                candidates.extend(batch.candidates);
            }
            Err(e) => {
                log::warn!("generation prompt failed: {e}");
                failed += 1;
                first_err.get_or_insert(e);
            }
        }
    }
    if candidates.is_empty() {
        return Err(first_err.unwrap_or_else(|| CliError::Internal("generator returned nothing".into())));
    }
    let corpus_texts: HashSet<String> = docs.iter().map(|d| d.text.clone()).collect();
    let duplicates = dedup_candidates(&mut candidates, &corpus_texts);
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    write_candidates(out, &candidates)?;
    let review_path = out.with_extension("review.jsonl");
    write_file(&review_path, &review_stub(&candidates))?;
    Ok(AugmentOutcome {
        candidates: candidates.len(),
        skipped_lines: skipped,
        duplicates,
        failed_prompts: failed,
        candidates_path: out.to_path_buf(),
        review_path,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmReport {
    pub label: String,
    pub task: String,
    pub arm: String,
    pub model_name: String,
    pub mode: PromptMode,
    pub items: usize,
    pub parse_failures: usize,
    pub transport_failures: usize,
    pub parse_failure_rate: f64,
    pub max_attempts: u32,
    pub eval: EvalReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_prompt: Option<String>,
}

/// Classifies the held-out split through the endpoint. Failed items count
/// as the training majority class.
pub fn cmd_llm_classify(cfg: &RunConfig, endpoint: &LlmEndpoint, mode: PromptMode, audit: bool) -> Result<LlmReport> {
    let task = TaskSpec::builtin(cfg.task);
    let (_, pool, test) = exemplar_split(cfg, &task)?;
    let k = task.num_classes();
    let mut template = PromptTemplate::for_task(&task);
    if mode == PromptMode::Few {
        template = template.with_exemplars(select_exemplars(&pool, k, FEW_SHOT_PER_CLASS, cfg.seed)?);
    }
    let prompts: Vec<String> = test
        .iter()
        .map(|e| build_classification_prompt(&template, mode, &e.text, e.entity))
        .collect::<llmgate::Result<_>>()?;
    let client = ChatClient::new(endpoint.clone())?;
    let results = classify_remote(&client, &prompts, &task);
    let mut train_counts = vec![0; k];
    for e in &pool {
        train_counts[e.label] += 1;
    }
    let resolved = resolve_labels(&results, task.majority_class(&train_counts));
    let gold: Vec<usize> = test.iter().map(|e| e.label).collect();
    let eval = EvalReport::from_predictions(&task, &gold, &resolved.labels)?;
    let mode_name = match mode {
        PromptMode::Zero => "zero-shot",
        PromptMode::Few => "few-shot",
    };
    Ok(LlmReport {
        label: format!("{}/{mode_name}", endpoint.model_name),
        task: task.name.to_string(),
        arm: mode_name.into(),
        model_name: endpoint.model_name.clone(),
        mode,
        items: prompts.len(),
        parse_failures: resolved.parse_failures,
        transport_failures: resolved.transport_failures,
        parse_failure_rate: resolved.parse_failure_rate(),
        max_attempts: resolved.max_attempts,
        eval,
        first_prompt: if audit { prompts.first().cloned() } else { None },
    })
}

/// The fields shared by every run report.
#[derive(Debug, Clone, Deserialize)]
struct ReportHead {
    label: String,
    task: String,
    arm: String,
    eval: EvalReport,
}

fn arm_rank(arm: &str) -> usize {
    ["none", "cw", "sd", "2pl", "2pl+sd", "zero-shot", "few-shot"]
        .iter()
        .position(|a| *a == arm)
        .unwrap_or(usize::MAX)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub task: String,
    pub rows: Vec<(String, EvalReport)>,
}

impl Comparison {
    pub fn table(&self) -> String {
        let rows: Vec<(String, &EvalReport)> = self.rows.iter().map(|(l, r)| (l.clone(), r)).collect();
        render_table(&rows)
    }

    pub fn csv(&self) -> String {
        let rows: Vec<(String, &EvalReport)> = self.rows.iter().map(|(l, r)| (l.clone(), r)).collect();
        render_csv(&rows)
    }
}

/// Merges report files of one task into a table ordered by arm.
pub fn cmd_report(paths: &[PathBuf]) -> Result<Comparison> {
    if paths.is_empty() {
        return Err(CliError::Usage("no report files given".into()));
    }
    let mut heads = Vec::new();
    for p in paths {
        let text = fs::read_to_string(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
        let head: ReportHead =
            serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: not a run report: {e}", p.display())))?;
        heads.push(head);
    }
    let tasks: BTreeMap<&str, usize> = heads.iter().fold(BTreeMap::new(), |mut m, h| {
        *m.entry(h.task.as_str()).or_insert(0) += 1;
        m
    });
    if tasks.len() > 1 {
        return Err(CliError::Usage(format!(
            "reports mix tasks {:?}; compare one task per table",
            tasks.keys().collect::<Vec<_>>()
        )));
    }
    heads.sort_by(|a, b| arm_rank(&a.arm).cmp(&arm_rank(&b.arm)).then_with(|| a.label.cmp(&b.label)));
    Ok(Comparison {
        task: heads[0].task.clone(),
        rows: heads.into_iter().map(|h| (h.label, h.eval)).collect(),
    })
}
