//! Acceptance suite: one PASS/FAIL line per criterion. Pass criterion
//! numbers as arguments to run a subset.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use ctxclf::*;
use llmgate::mock::{MockOptions, MockServer};
use llmgate::{
    build_classification_prompt, classify_remote, exemplars_from_corpus, read_candidates, select_exemplars,
    ChatClient, Decision, LlmEndpoint, PromptMode, PromptTemplate, ReviewRecord, RetryPolicy, FEW_SHOT_PER_CLASS,
};
use models::{EncoderConfig, EntityClassifier, LoraConfig, ModelConfig, ModelInput, BiLstmConfig};
use numcore::gradcheck::{check_params, FD_STEP};
use numcore::{AdamW, AdamWConfig, Graph, ParamStore, Rng};
use textprep::{EncodedExample, Provenance, TaskName, TaskSpec, Validation};
use trainkit::{
    compute_class_weights, downsample, max_synthetic, merge_synthetic, stratified_split, EvalReport,
    SplitPlan,
};

type Outcome = std::result::Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

// ---------------------------------------------------------------------------
// 1-2: gradients

const GC_VOCAB: usize = 30;

fn random_ids(rng: &mut Rng, n: usize) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..n).map(|_| 4 + rng.below(GC_VOCAB - 4)).collect();
    ids[0] = 2;
    ids[n - 1] = 3;
    ids
}

fn example_loss(model: &EntityClassifier, store: &ParamStore, input: ModelInput<'_>, label: usize, training: bool) -> numcore::Result<f64> {
    let mut g = Graph::with_params(store);
    let logits = model.forward(&mut g, input, training, &mut Rng::new(99)).map_err(|e| numcore::Error::Contract(e.to_string()))?;
    let logits = g.reshape(logits, vec![1, model.config.num_classes])?;
    let loss = g.cross_entropy(logits, &[label])?;
    Ok(g.value(loss).data()[0])
}

/// Compares every parameter gradient with central differences.
fn gradcheck(model: &EntityClassifier, input: ModelInput<'_>, label: usize, training: bool) -> Outcome {
    let grads = {
        let mut g = Graph::with_params(&model.params);
        let logits = model.forward(&mut g, input, training, &mut Rng::new(99)).map_err(err)?;
        let logits = g.reshape(logits, vec![1, model.config.num_classes]).map_err(err)?;
        let loss = g.cross_entropy(logits, &[label]).map_err(err)?;
        g.backward(loss).map_err(err)?.into_param_grads(&model.params)
    };
    let mut store = model.params.clone();
    let report = check_params(&mut store, &grads, FD_STEP, |s| example_loss(model, s, input, label, training)).map_err(err)?;
    ensure(report.passes(1e-4), || format!("{report:?}"))?;
    Ok(format!("{} entries, max rel err {:.2e}", report.checked, report.max_rel_error))
}

fn criterion_1() -> Outcome {
    let enc = EncoderConfig { layers: 2, heads: 4, d_model: 16, d_ff: 32, max_len: 12, dropout_p: 0.2 };
    let model = EntityClassifier::new(ModelConfig::transformer(GC_VOCAB, 3, enc), 1).map_err(err)?;
    let ids = random_ids(&mut Rng::new(5), 12);
    let input = ModelInput { ids: &ids, entity_span: (3, 6), attention_len: 10 };
    let eval = gradcheck(&model, input, 1, false)?;
    let train = gradcheck(&model, input, 2, true)?;
    Ok(format!("eval mode {eval}; dropout mode {train}"))
}

fn criterion_2() -> Outcome {
    let lstm = BiLstmConfig { embed_dim: 4, hidden_size: 8, layers: 1, max_len: 6, dropout_p: 0.2 };
    let model = EntityClassifier::new(ModelConfig::bilstm(GC_VOCAB, 3, lstm), 2).map_err(err)?;
    let ids = random_ids(&mut Rng::new(6), 6);
    let input = ModelInput { ids: &ids, entity_span: (2, 4), attention_len: 6 };
    let eval = gradcheck(&model, input, 0, false)?;
    let train = gradcheck(&model, input, 1, true)?;
    Ok(format!("eval mode {eval}; dropout mode {train}"))
}

// ---------------------------------------------------------------------------
// 3: LoRA

fn criterion_3() -> Outcome {
    let enc = EncoderConfig { layers: 2, heads: 4, d_model: 16, d_ff: 32, max_len: 16, dropout_p: 0.1 };
    let base = EntityClassifier::new(ModelConfig::transformer(GC_VOCAB, 3, enc), 21).map_err(err)?;
    let mut wrapped = base.clone();
    wrapped.lora_wrap(&LoraConfig { rank: 4, ..LoraConfig::default() }, &Rng::new(5)).map_err(err)?;
    let mut rng = Rng::new(9);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let t = 4 + rng.below(13);
        let ids = random_ids(&mut rng, t);
        let start = 1 + rng.below(t - 2);
        let end = start + 1 + rng.below(t - 1 - start);
        let input = ModelInput { ids: &ids, entity_span: (start, end), attention_len: t };
        let (a, b) = (base.logits(input).map_err(err)?, wrapped.logits(input).map_err(err)?);
        for (x, y) in a.iter().zip(&b) {
            worst = worst.max((x - y).abs());
        }
    }
    ensure(worst <= 1e-12, || format!("wrapped logits differ by {worst:e}"))?;

    let ids = random_ids(&mut rng, 10);
    let input = ModelInput { ids: &ids, entity_span: (2, 5), attention_len: 10 };
    let mut g = Graph::with_params(&wrapped.params);
    let logits = wrapped.forward(&mut g, input, true, &mut Rng::new(1)).map_err(err)?;
    let logits = g.reshape(logits, vec![1, 3]).map_err(err)?;
    let loss = g.cross_entropy(logits, &[0]).map_err(err)?;
    let grads = g.backward(loss).map_err(err)?.into_param_grads(&wrapped.params);
    let before = wrapped.params.clone();
    let mut opt = AdamW::new(AdamWConfig::default(), &wrapped.params).map_err(err)?;
    opt.step(&mut wrapped.params, &grads).map_err(err)?;
    let mut moved = 0;
    for (id, p) in before.iter() {
        let changed = p.value != *wrapped.params.value(id);
        let allowed = p.name.contains(".lora_") || p.name.starts_with("head.");
        ensure(!changed || allowed, || format!("{} moved", p.name))?;
        ensure(allowed == p.trainable, || format!("{} trainable flag is {}", p.name, p.trainable))?;
        moved += changed as usize;
    }
    ensure(moved > 0, || "nothing moved".into())?;
    Ok(format!("max |Δlogit| {worst:e} over 100 inputs; {moved} adapter/head tensors moved"))
}

// ---------------------------------------------------------------------------
// 4: metrics against direct counting

fn criterion_4() -> Outcome {
    let task = TaskSpec::presence();
    let mut rng = Rng::new(2024);
    let mut zero_support = 0;
    for trial in 0..1000 {
        let mut conf = vec![vec![0usize; 3]; 3];
        let mut pairs = Vec::new();
        for (g, row) in conf.iter_mut().enumerate() {
            // Roughly a fifth of rows are empty.
            let empty = rng.below(5) == 0;
            for (p, cell) in row.iter_mut().enumerate() {
                *cell = if empty { 0 } else { rng.below(12) };
                pairs.extend(std::iter::repeat((g, p)).take(*cell));
            }
        }
        if pairs.is_empty() {
            conf[0][0] = 1;
            pairs.push((0, 0));
        }
        zero_support += conf.iter().any(|r| r.iter().sum::<usize>() == 0) as usize;
        let r = EvalReport::from_confusion(&task, conf.clone()).map_err(err)?;
        let n = pairs.len() as f64;
        let acc = pairs.iter().filter(|(g, p)| g == p).count() as f64 / n;
        let mut f1_sum = 0.0;
        for c in 0..3 {
            let tp = pairs.iter().filter(|&&(g, p)| g == c && p == c).count() as f64;
            let fp = pairs.iter().filter(|&&(g, p)| g != c && p == c).count() as f64;
            let fn_ = pairs.iter().filter(|&&(g, p)| g == c && p != c).count() as f64;
            let recall = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
            ensure((r.recall[c] - recall).abs() <= 1e-9, || format!("trial {trial} class {c} recall {conf:?}"))?;
            f1_sum += if tp > 0.0 { 2.0 * tp / (2.0 * tp + fp + fn_) } else { 0.0 };
        }
        ensure((r.accuracy - acc).abs() <= 1e-9, || format!("trial {trial} accuracy {conf:?}"))?;
        ensure((r.macro_f1 - f1_sum / 3.0).abs() <= 1e-9, || format!("trial {trial} macro-F1 {conf:?}"))?;
    }
    ensure(zero_support > 100, || format!("only {zero_support} zero-support matrices"))?;
    Ok(format!("1000 matrices, {zero_support} with an empty class"))
}

// ---------------------------------------------------------------------------
// 5: split, downsample, weights

fn labels(counts: &[usize]) -> Vec<usize> {
    counts.iter().enumerate().flat_map(|(y, &c)| std::iter::repeat(y).take(c)).collect()
}

fn criterion_5() -> Outcome {
    let exp = labels(&[1002, 75, 7908]);
    let (_, test) = stratified_split(&exp, |&y| y, 3, SplitPlan { test_fraction: 0.2, seed: 7 }).map_err(err)?;
    let tc = label_counts_of(&test, 3);
    ensure(tc == [200, 15, 1582], || format!("test counts {tc:?}"))?;
    let pres = labels(&[578, 978, 7430]);
    let down = downsample(&pres, |&y| y, 3, 578, 1);
    let dc = label_counts_of(&down, 3);
    ensure(dc == [578, 578, 578], || format!("downsampled {dc:?}"))?;
    let w = compute_class_weights(&[1002, 75, 7908]).map_err(err)?.0;
    ensure(w[1] > w[0] && w[0] > w[2], || format!("weights {w:?}"))?;
    Ok(format!("test {tc:?}, downsample {dc:?}, weights [{:.4}, {:.4}, {:.4}]", w[0], w[1], w[2]))
}

fn label_counts_of(ys: &[usize], k: usize) -> Vec<usize> {
    let mut c = vec![0; k];
    for &y in ys {
        c[y] += 1;
    }
    c
}

// ---------------------------------------------------------------------------
// shared pipeline settings

fn small_run(corpus: &Path) -> RunConfig {
    let mut cfg = RunConfig {
        task: TaskName::Experiencer,
        corpus: Some(corpus.to_path_buf()),
        max_len: 40,
        batch_size: 32,
        peak_lr: 2e-3,
        ..RunConfig::default()
    };
    cfg.encoder = EncoderConfig { layers: 1, heads: 2, d_model: 32, d_ff: 64, max_len: 40, dropout_p: 0.1 };
    cfg
}

fn benchmark(dir: &Path, name: &str, counts: Vec<usize>, noise: f64, seed: u64) -> std::result::Result<std::path::PathBuf, String> {
    let path = dir.join(name);
    cmd_make_benchmark(&BenchmarkRecipe::single(TaskName::Experiencer, counts, noise, seed), &path).map_err(err)?;
    Ok(path)
}

fn fast_endpoint(server: &MockServer, model: &str) -> LlmEndpoint {
    LlmEndpoint {
        max_parallel: 4,
        timeout_secs: 10.0,
        retry: RetryPolicy { max_retries: 3, base_delay_ms: 5, max_delay_ms: 40 },
        ..LlmEndpoint::new(server.base_url(), model)
    }
}

// ---------------------------------------------------------------------------
// 6: learnability

fn criterion_6() -> Outcome {
    let dir = tempfile::tempdir().map_err(err)?;
    let corpus = benchmark(dir.path(), "clean.jsonl", vec![200, 50, 750], 0.0, 3)?;
    let mut cfg = small_run(&corpus);
    cfg.epochs = 200;
    cfg.target_train_accuracy = Some(0.95);
    cfg.out = Some(dir.path().join("a"));
    let a = cmd_train(&cfg).map_err(err)?;
    cfg.out = Some(dir.path().join("b"));
    let b = cmd_train(&cfg).map_err(err)?;
    let epochs = a.report.phases[0].train.epochs_run;
    ensure(a.report.train_accuracy >= 0.95, || format!("train accuracy {}", a.report.train_accuracy))?;
    ensure(epochs <= 200, || format!("{epochs} epochs"))?;
    ensure(
        fs::read(&a.report_json).map_err(err)? == fs::read(&b.report_json).map_err(err)?,
        || "reruns differ".into(),
    )?;
    Ok(format!("train accuracy {:.4} after {epochs} epochs; rerun identical", a.report.train_accuracy))
}

// ---------------------------------------------------------------------------
// 7: mitigation direction

fn seed_of(prompt: &str) -> u64 {
    u64::from_str_radix(&llmgate::sha256_hex(prompt)[..16], 16).unwrap_or(0)
}

fn minority_recall(r: &EvalReport) -> f64 {
    let k = r.recall.len();
    r.recall[..k - 1].iter().sum::<f64>() / (k - 1) as f64
}

fn criterion_7() -> Outcome {
    let dir = tempfile::tempdir().map_err(err)?;
    let corpus = benchmark(dir.path(), "noisy.jsonl", vec![1002, 75, 7908], 0.15, 11)?;
    let mut cfg = small_run(&corpus);
    cfg.epochs = 10;
    cfg.two_phase = TwoPhaseSettings { epochs1: 10, epochs2: 10, ..TwoPhaseSettings::default() };

    // Synthetic minority examples from a mock generator, reviewed up to the cap.
    let cues = CueVocabulary::default();
    let server = MockServer::start(
        Arc::new(move |p: &str| generated_lines(&cues, TaskName::Experiencer, 40, seed_of(p))),
        MockOptions::default(),
    )
    .map_err(err)?;
    let candidates = dir.path().join("candidates.jsonl");
    let aug = cmd_augment(&cfg, &fast_endpoint(&server, "generator"), 40, 12, &candidates).map_err(err)?;
    let cands = read_candidates(&candidates).map_err(err)?;
    let train_len = prepare(&cfg).map_err(err)?.train.len();
    let quota = max_synthetic(train_len, cfg.cap_fraction);
    ensure(cands.len() > quota, || format!("only {} candidates for a quota of {quota}", cands.len()))?;
    let review: String = cands
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let decision = if i < quota { Decision::Accept } else { Decision::Reject };
            let rec = ReviewRecord { candidate_id: c.candidate_id.clone(), decision, note: String::new() };
            serde_json::to_string(&rec).unwrap() + "\n"
        })
        .collect();
    let review_path = dir.path().join("review.jsonl");
    fs::write(&review_path, review).map_err(err)?;
    cfg.augmentation = Some(candidates);
    cfg.review = Some(review_path);

    let arms = [Arm::None, Arm::TwoPhase, Arm::TwoPhaseSynthetic];
    let mut means = [0.0f64; 3];
    let mut merged = 0;
    for seed in 0..5 {
        for (i, arm) in arms.iter().enumerate() {
            let run = RunConfig { arm: *arm, seed, ..cfg.clone() };
            let (r, _) = run_training(&run).map_err(err)?;
            if *arm == Arm::TwoPhaseSynthetic {
                merged = r.synthetic_merged;
            }
            means[i] += minority_recall(&r.eval) / 5.0;
        }
    }
    let detail = format!(
        "mean minority recall: none {:.4}, 2pl {:.4}, 2pl+sd {:.4} ({merged} synthetic merged of {})",
        means[0], means[1], means[2], aug.candidates
    );
    ensure(merged == quota, || format!("merged {merged}, quota {quota}"))?;
    ensure(means[1] >= means[0] && means[2] >= means[1], || detail.clone())?;
    Ok(detail)
}

// ---------------------------------------------------------------------------
// 8: synthetic cap

fn tiny_example(label: usize, provenance: Provenance) -> EncodedExample {
    EncodedExample {
        ids: vec![2, 10, 3],
        entity_span: (1, 2),
        attention_len: 3,
        task: TaskName::Experiencer,
        label,
        provenance,
        window: (0, 1),
    }
}

fn syn(n: usize, validation: Validation) -> Vec<EncodedExample> {
    (0..n)
        .map(|i| tiny_example(i % 2, Provenance::Synthetic { candidate_id: format!("c{i}"), validation }))
        .collect()
}

fn criterion_8() -> Outcome {
    let base: Vec<EncodedExample> = (0..9500)
        .map(|i| tiny_example(i % 3, Provenance::Corpus { doc_id: format!("d{i}"), mention: 0 }))
        .collect();
    ensure(merge_synthetic(base.clone(), &syn(501, Validation::Accepted), 0.05).is_err(), || "501 merged".into())?;
    let ok = merge_synthetic(base.clone(), &syn(499, Validation::Accepted), 0.05).map_err(err)?;
    ensure(ok.merged == 499 && ok.dataset.len() == 9999, || format!("merged {}", ok.merged))?;
    let mut mixed = syn(300, Validation::Pending);
    mixed.extend(syn(300, Validation::Rejected));
    mixed.extend(syn(7, Validation::Accepted));
    let m = merge_synthetic(base, &mixed, 0.05).map_err(err)?;
    let leaked = m
        .dataset
        .iter()
        .filter(|e| matches!(e.provenance, Provenance::Synthetic { validation, .. } if validation != Validation::Accepted))
        .count();
    ensure(m.merged == 7 && m.not_accepted == 600 && leaked == 0, || format!("merged {} leaked {leaked}", m.merged))?;
    Ok("501 rejected, 499 merged, 600 unreviewed/rejected kept out".into())
}

// ---------------------------------------------------------------------------
// 9: prompt conformance

const EXPERIENCER_LABEL_LINES: [&str; 3] = [
    "2: Experiencer - Patient / default,",
    "1: Experiencer - Family,",
    "0: Not applicable",
];

fn criterion_9() -> Outcome {
    let docs = generate(&BenchmarkRecipe::single(TaskName::Experiencer, vec![12, 12, 12], 0.0, 4)).map_err(err)?;
    let task = TaskSpec::experiencer();
    let build = || -> std::result::Result<String, String> {
        let pool = exemplars_from_corpus(&docs, &task).map_err(err)?;
        let ex = select_exemplars(&pool, 3, FEW_SHOT_PER_CLASS, 8).map_err(err)?;
        let t = PromptTemplate::for_task(&task).with_exemplars(ex);
        build_classification_prompt(&t, PromptMode::Few, "Her mother had breast cancer.", (15, 28)).map_err(err)
    };
    let p = build()?;
    let exemplars = p.matches("\nCategory: ").count() - 1;
    ensure(exemplars == 9, || format!("{exemplars} exemplars"))?;
    for id in 0..3 {
        let n = p.matches(&format!("Category: {id}\n")).count();
        ensure(n == 3, || format!("class {id} has {n} exemplars"))?;
    }
    let lines: Vec<&str> = p.lines().collect();
    let preamble = "You are a text classification bot.";
    ensure(lines.iter().any(|l| l.trim_start_matches("[INST]") == preamble), || "preamble line missing".into())?;
    for want in EXPERIENCER_LABEL_LINES {
        ensure(lines.contains(&want), || format!("label line {want:?} missing"))?;
    }
    ensure(build()?.as_bytes() == p.as_bytes(), || "prompt changed between builds".into())?;
    Ok(format!("{} bytes, 9 exemplars, stable", p.len()))
}

// ---------------------------------------------------------------------------
// 10: gateway robustness

fn criterion_10() -> Outcome {
    let docs = generate(&BenchmarkRecipe::single(TaskName::Experiencer, vec![40, 20, 140], 0.0, 5)).map_err(err)?;
    let task = TaskSpec::experiencer();
    let pool = exemplars_from_corpus(&docs, &task).map_err(err)?;
    let template = PromptTemplate::for_task(&task);
    let prompts: Vec<String> = pool
        .iter()
        .map(|e| build_classification_prompt(&template, PromptMode::Zero, &e.text, e.entity))
        .collect::<llmgate::Result<_>>()
        .map_err(err)?;
    let gold: HashMap<String, usize> = prompts.iter().cloned().zip(pool.iter().map(|e| e.label)).collect();
    let server = MockServer::start(
        Arc::new(move |p: &str| gold.get(p).map(|y| y.to_string()).unwrap_or_default()),
        MockOptions { failure_percent: 10, seed: 17 },
    )
    .map_err(err)?;
    let client = ChatClient::new(fast_endpoint(&server, "echo")).map_err(err)?;
    let out = classify_remote(&client, &prompts, &task);
    for (i, (r, e)) in out.iter().zip(&pool).enumerate() {
        let c = r.as_ref().map_err(|e| format!("item {i}: {e}"))?;
        ensure(c.label == e.label, || format!("item {i} out of order"))?;
        ensure(c.attempts <= 4, || format!("item {i} took {} attempts", c.attempts))?;
    }
    ensure(out.len() == prompts.len() && server.injected_failures() > 0, || "no failures injected".into())?;
    ensure(server.max_attempts_per_prompt() <= 4, || "more than 3 retries".into())?;
    let first = format!(
        "{} items in order, {} injected 500s, at most {} retries",
        out.len(),
        server.injected_failures(),
        server.max_attempts_per_prompt() - 1
    );

    let dir = tempfile::tempdir().map_err(err)?;
    let corpus = dir.path().join("c.jsonl");
    textprep::write_jsonl(&corpus, &docs).map_err(err)?;
    let majority = MockServer::constant("2", MockOptions { failure_percent: 10, seed: 3 }).map_err(err)?;
    let cfg = small_run(&corpus);
    let report = cmd_llm_classify(&cfg, &fast_endpoint(&majority, "majority"), PromptMode::Few, true).map_err(err)?;
    let r = &report.eval.recall;
    ensure(r[2] == 1.0 && r[0] == 0.0 && r[1] == 0.0, || format!("recall {r:?}"))?;
    ensure(
        report.first_prompt.as_deref().is_some_and(|p| p.contains("You are a text classification bot.")),
        || "audit prompt missing".into(),
    )?;
    Ok(format!("{first}; always-majority recall {r:?}"))
}

// ---------------------------------------------------------------------------
// 11: determinism

fn criterion_11() -> Outcome {
    let dir = tempfile::tempdir().map_err(err)?;
    let corpus = benchmark(dir.path(), "d.jsonl", vec![100, 40, 360], 0.15, 6)?;
    let mut cfg = small_run(&corpus);
    cfg.arm = Arm::TwoPhase;
    cfg.seed = 42;
    cfg.two_phase = TwoPhaseSettings { epochs1: 3, epochs2: 3, ..TwoPhaseSettings::default() };
    let mut outputs = Vec::new();
    let mut times = Vec::new();
    for name in ["first", "second"] {
        cfg.out = Some(dir.path().join(name));
        let t = Instant::now();
        let art = cmd_train(&cfg).map_err(err)?;
        times.push(t.elapsed());
        let files: Vec<Vec<u8>> = ["report.json", "report.txt", "report.csv", "model.ckpt.json"]
            .iter()
            .map(|f| fs::read(dir.path().join(name).join(f)))
            .collect::<std::io::Result<_>>()
            .map_err(err)?;
        outputs.push((art.report, files));
    }
    for (i, f) in ["report.json", "report.txt", "report.csv", "model.ckpt.json"].iter().enumerate() {
        ensure(outputs[0].1[i] == outputs[1].1[i], || format!("{f} differs between runs"))?;
    }
    ensure(times[1] <= times[0] * 2, || format!("second run took {:?}", times[1]))?;
    Ok(format!("report, tables and checkpoint identical ({} bytes of JSON)", outputs[0].1[0].len()))
}

// ---------------------------------------------------------------------------

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn main() {
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let secs = Duration::from_secs;
    let criteria = [
        Criterion { id: 1, name: "transformer gradient check", budget: secs(120), run: criterion_1 },
        Criterion { id: 2, name: "Bi-LSTM gradient check", budget: secs(60), run: criterion_2 },
        Criterion { id: 3, name: "LoRA identity and freeze", budget: secs(10), run: criterion_3 },
        Criterion { id: 4, name: "metric oracle", budget: secs(10), run: criterion_4 },
        Criterion { id: 5, name: "imbalance mechanics", budget: secs(5), run: criterion_5 },
        Criterion { id: 6, name: "learnability", budget: secs(600), run: criterion_6 },
        Criterion { id: 7, name: "mitigation direction", budget: secs(3600), run: criterion_7 },
        Criterion { id: 8, name: "synthetic cap", budget: secs(1), run: criterion_8 },
        Criterion { id: 9, name: "prompt conformance", budget: secs(1), run: criterion_9 },
        Criterion { id: 10, name: "gateway robustness", budget: secs(30), run: criterion_10 },
        Criterion { id: 11, name: "determinism", budget: secs(3600), run: criterion_11 },
    ];
    let mut failed = 0;
    for c in criteria.iter().filter(|c| only.is_empty() || only.contains(&c.id)) {
        let t = Instant::now();
        let result = (c.run)();
        let elapsed = t.elapsed();
        let result = match result {
            Ok(d) if elapsed > c.budget => Err(format!("{d}; over the {:?} budget", c.budget)),
            r => r,
        };
        match result {
            Ok(detail) => println!("PASS {:>2} {} ({:.1}s): {detail}", c.id, c.name, elapsed.as_secs_f64()),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {} ({:.1}s): {detail}", c.id, c.name, elapsed.as_secs_f64());
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
