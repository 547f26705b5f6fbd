use models::{BiLstmConfig, EncoderConfig, EntityClassifier, ModelConfig};
use textprep::{EncodedExample, Provenance, TaskName, TaskSpec};
use trainkit::*;

const VOCAB: usize = 40;

// Label is carried by a cue token two positions right of the entity;
// everything else is noise drawn from a disjoint range.
fn toy_data(n: usize, seed: u64) -> Vec<EncodedExample> {
    let mut rng = numcore::Rng::new(seed);
    (0..n)
        .map(|i| {
            let label = [0, 1, 2, 2, 2][i % 5];
            let len = 6 + rng.below(3);
            let mut ids = vec![2];
            for _ in 1..len - 1 {
                ids.push(20 + rng.below(20));
            }
            ids.push(3);
            ids[2] = 10 + label;
            EncodedExample {
                attention_len: ids.len(),
                ids,
                entity_span: (1, 2),
                task: TaskName::Temporality,
                label,
                provenance: Provenance::Corpus { doc_id: format!("t{i}"), mention: 0 },
                window: (0, len - 2),
            }
        })
        .collect()
}

fn small_transformer(seed: u64) -> EntityClassifier {
    let enc = EncoderConfig { layers: 1, heads: 2, d_model: 16, d_ff: 32, max_len: 16, dropout_p: 0.1 };
    EntityClassifier::new(ModelConfig::transformer(VOCAB, 3, enc), seed).unwrap()
}

fn values(m: &EntityClassifier) -> Vec<f64> {
    m.params.iter().flat_map(|(_, p)| p.value.data().to_vec()).collect()
}

fn config(epochs: usize) -> TrainConfig {
    TrainConfig { epochs, batch_size: 16, peak_lr: 5e-3, chunk_size: 8, seed: 3, ..TrainConfig::default() }
}

#[test]
fn transformer_learns_the_cue_and_is_deterministic() {
    let data = toy_data(60, 1);
    let mut a = small_transformer(0);
    let sa = train(&mut a, &data, &[1.0; 3], &config(15)).unwrap();
    assert!(sa.epoch_loss.last().unwrap() < &sa.epoch_loss[0]);
    assert!(accuracy(&a, &data).unwrap() >= 0.9, "{:?}", sa.epoch_loss);

    let mut b = small_transformer(0);
    let sb = train(&mut b, &data, &[1.0; 3], &config(15)).unwrap();
    assert_eq!(sa, sb);
    assert_eq!(values(&a), values(&b));

    let mut c = small_transformer(0);
    train(&mut c, &data, &[1.0; 3], &TrainConfig { seed: 4, ..config(15) }).unwrap();
    assert_ne!(values(&a), values(&c));
}

#[test]
fn bilstm_learns_the_cue() {
    let data = toy_data(60, 2);
    let cfg = BiLstmConfig { embed_dim: 12, hidden_size: 8, layers: 1, max_len: 16, dropout_p: 0.0 };
    let mut m = EntityClassifier::new(ModelConfig::bilstm(VOCAB, 3, cfg), 5).unwrap();
    let s = train(&mut m, &data, &[1.0; 3], &TrainConfig { peak_lr: 2e-2, target_train_accuracy: Some(0.9), ..config(60) }).unwrap();
    assert!(accuracy(&m, &data).unwrap() >= 0.9, "{:?}", s.train_accuracy);
}

#[test]
fn early_stop_and_validation() {
    let data = toy_data(40, 3);
    let mut m = small_transformer(1);
    let s = train(&mut m, &data, &[1.0; 3], &TrainConfig { target_train_accuracy: Some(0.0), ..config(10) }).unwrap();
    assert_eq!(s.epochs_run, 1);
    assert_eq!(s.train_accuracy.len(), 1);
    assert_eq!(s.steps, 3);

    assert!(matches!(train(&mut m, &data, &[1.0; 2], &config(1)), Err(Error::Config(_))));
    assert!(train(&mut m, &[], &[1.0; 3], &config(1)).is_err());
    assert!(train(&mut m, &data, &[1.0; 3], &TrainConfig { epochs: 0, ..config(1) }).is_err());
}

#[test]
fn chunk_size_does_not_change_the_gradient() {
    // Without dropout, chunking only regroups a sum.
    let data = toy_data(32, 4);
    let enc = EncoderConfig { layers: 1, heads: 2, d_model: 8, d_ff: 16, max_len: 16, dropout_p: 0.0 };
    let mk = || EntityClassifier::new(ModelConfig::transformer(VOCAB, 3, enc.clone()), 2).unwrap();
    let (mut a, mut b) = (mk(), mk());
    train(&mut a, &data, &[1.0, 2.0, 0.5], &TrainConfig { chunk_size: 32, ..config(2) }).unwrap();
    train(&mut b, &data, &[1.0, 2.0, 0.5], &TrainConfig { chunk_size: 5, ..config(2) }).unwrap();
    for ((_, pa), (_, pb)) in a.params.iter().zip(b.params.iter()) {
        for (x, y) in pa.value.data().iter().zip(pb.value.data()) {
            assert!((x - y).abs() < 1e-9, "{}: {x} vs {y}", pa.name);
        }
    }
}

#[test]
fn two_phase_runs_both_phases() {
    let data = toy_data(50, 5);
    let task = TaskSpec::temporality();
    let counts = label_counts(&data, 3);
    assert_eq!(counts, [10, 10, 30]);
    let plan = TwoPhasePlan::from_counts(&counts, None, DEFAULT_LAMBDA, 4, 4).unwrap();
    let mut m = small_transformer(2);
    let out = two_phase_train(&mut m, &task, &data, None, &plan, &config(99)).unwrap();
    assert_eq!(out.phase1.examples, 30);
    assert_eq!(out.phase2.examples, 50);
    assert_eq!(out.phase1.train.epochs_run, 4);
    assert_eq!(out.phase2.train.steps, 16);
    assert_eq!(out.phase2.weights, plan.phase2_weights.0);
    assert_eq!(out.phase2.report.total, 50);

    let mut again = small_transformer(2);
    let out2 = two_phase_train(&mut again, &task, &data, None, &plan, &config(99)).unwrap();
    assert_eq!(out, out2);
}
