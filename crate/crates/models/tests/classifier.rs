use approx::assert_abs_diff_eq;
use models::*;
use numcore::gradcheck::{check_params, FD_STEP};
use numcore::{AdamW, AdamWConfig, Graph, ParamStore, Rng, Tensor};
use proptest::prelude::*;

const VOCAB: usize = 30;

fn encoder_cfg(layers: usize, d: usize, heads: usize, max_len: usize) -> EncoderConfig {
    EncoderConfig {
        layers,
        heads,
        d_model: d,
        d_ff: 2 * d,
        max_len,
        dropout_p: 0.2,
    }
}

fn small_transformer(seed: u64) -> EntityClassifier {
    EntityClassifier::new(ModelConfig::transformer(VOCAB, 3, encoder_cfg(2, 16, 4, 16)), seed).unwrap()
}

fn lstm_cfg(h: usize) -> BiLstmConfig {
    BiLstmConfig {
        embed_dim: 4,
        hidden_size: h,
        layers: 1,
        max_len: 16,
        dropout_p: 0.2,
    }
}

fn random_ids(rng: &mut Rng, n: usize) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..n).map(|_| 4 + rng.below(VOCAB - 4)).collect();
    ids[0] = 2;
    ids[n - 1] = 3;
    ids
}

/// Cross-entropy of one example; dropout masks come from a fixed seed so
/// every evaluation sees the same network.
fn loss_of(model: &EntityClassifier, store: &ParamStore, input: ModelInput<'_>, label: usize, training: bool) -> f64 {
    let mut g = Graph::with_params(store);
    let logits = model.forward(&mut g, input, training, &mut Rng::new(99)).unwrap();
    let logits = g.reshape(logits, vec![1, model.config.num_classes]).unwrap();
    let loss = g.cross_entropy(logits, &[label]).unwrap();
    g.value(loss).data()[0]
}

fn full_gradcheck(mut model: EntityClassifier, input: ModelInput<'_>, label: usize, training: bool) {
    let grads = {
        let mut g = Graph::with_params(&model.params);
        let logits = model.forward(&mut g, input, training, &mut Rng::new(99)).unwrap();
        let logits = g.reshape(logits, vec![1, model.config.num_classes]).unwrap();
        let loss = g.cross_entropy(logits, &[label]).unwrap();
        g.backward(loss).unwrap().into_param_grads(&model.params)
    };
    let frozen = model.clone();
    let report = check_params(&mut model.params, &grads, FD_STEP, |store| {
        Ok(loss_of(&frozen, store, input, label, training))
    })
    .unwrap();
    assert!(report.passes(1e-4), "{report:?}");
    assert!(report.checked > 1000);
}

#[test]
fn transformer_gradcheck_2_layers_d16_t12() {
    let model = small_transformer(1);
    let ids = random_ids(&mut Rng::new(5), 12);
    let input = ModelInput {
        ids: &ids,
        entity_span: (3, 6),
        attention_len: 10,
    };
    full_gradcheck(model.clone(), input, 1, false);
    // Same check with fixed dropout masks.
    full_gradcheck(model, input, 2, true);
}

#[test]
fn bilstm_gradcheck_h8_t6() {
    let model = EntityClassifier::new(ModelConfig::bilstm(VOCAB, 3, lstm_cfg(8)), 2).unwrap();
    let ids = random_ids(&mut Rng::new(6), 6);
    let input = ModelInput {
        ids: &ids,
        entity_span: (2, 4),
        attention_len: 6,
    };
    full_gradcheck(model.clone(), input, 0, false);
    full_gradcheck(model, input, 1, true);
}

#[test]
fn mean_pooled_sequence_gradcheck() {
    let mut cfg = ModelConfig::transformer(VOCAB, 3, encoder_cfg(1, 8, 2, 16));
    cfg.head.sequence_repr = SequenceRepr::MeanReal;
    let model = EntityClassifier::new(cfg, 3).unwrap();
    let ids = random_ids(&mut Rng::new(7), 8);
    let input = ModelInput {
        ids: &ids,
        entity_span: (1, 3),
        attention_len: 8,
    };
    full_gradcheck(model, input, 2, false);
}

#[test]
fn single_token_zero_attention_is_feed_forward_only() {
    let mut model = EntityClassifier::new(ModelConfig::transformer(VOCAB, 3, encoder_cfg(1, 8, 2, 4)), 4).unwrap();
    let Backbone::Transformer(enc) = model.backbone.clone() else { unreachable!() };
    let layer = &enc.layers[0];
    for id in [layer.o.w, layer.o.b] {
        let shape = model.params.value(id).shape().to_vec();
        *model.params.value_mut(id) = Tensor::zeros(&shape);
    }
    let mut g = Graph::with_params(&model.params);
    let h = model
        .hidden(&mut g, ModelInput { ids: &[7], entity_span: (0, 1), attention_len: 1 }, false, &mut Rng::new(0))
        .unwrap();
    let got = g.value(h).clone();

    // Oracle: x = tok[7] + pos[0]; H = ln_f(x + ff2(gelu(ff1(ln2(x))))).
    let p = &model.params;
    let d = 8;
    let x: Vec<f64> = (0..d)
        .map(|j| p.value(enc.tok_emb).get2(7, j) + p.value(enc.pos_emb).get2(0, j))
        .collect();
    let ln = |v: &[f64], gamma: &[f64], beta: &[f64]| -> Vec<f64> {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
        v.iter()
            .zip(gamma.iter().zip(beta))
            .map(|(a, (g, b))| (a - mean) / (var + 1e-5).sqrt() * g + b)
            .collect()
    };
    let dense = |v: &[f64], lin: &Linear| -> Vec<f64> {
        let w = p.value(lin.w);
        let b = p.value(lin.b);
        (0..lin.d_out)
            .map(|j| b.data()[j] + (0..lin.d_in).map(|i| v[i] * w.get2(i, j)).sum::<f64>())
            .collect()
    };
    let gelu = |v: f64| 0.5 * v * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (v + 0.044715 * v.powi(3))).tanh());
    let b = ln(&x, p.value(layer.ln2.gamma).data(), p.value(layer.ln2.beta).data());
    let f: Vec<f64> = dense(&b, &layer.ff1).into_iter().map(gelu).collect();
    let f = dense(&f, &layer.ff2);
    let r: Vec<f64> = x.iter().zip(&f).map(|(a, b)| a + b).collect();
    let want = ln(&r, p.value(enc.ln_f.gamma).data(), p.value(enc.ln_f.beta).data());
    assert_eq!(got.shape(), &[1, d]);
    for (a, b) in got.data().iter().zip(&want) {
        assert_abs_diff_eq!(a, b, epsilon = 1e-12);
    }
}

fn hidden_rows(model: &EntityClassifier, ids: &[usize], len: usize) -> Tensor {
    let mut g = Graph::with_params(&model.params);
    let input = ModelInput {
        ids,
        entity_span: (1, 2),
        attention_len: len,
    };
    let h = model.hidden(&mut g, input, false, &mut Rng::new(0)).unwrap();
    g.value(h).clone()
}

#[test]
fn pad_values_never_reach_real_positions() {
    let lstm = EntityClassifier::new(ModelConfig::bilstm(VOCAB, 3, lstm_cfg(5)), 8).unwrap();
    for model in [small_transformer(8), lstm] {
        let mut rng = Rng::new(11);
        let len = 7;
        let mut ids = random_ids(&mut rng, len);
        ids.resize(16, 0);
        let base = hidden_rows(&model, &ids, len);
        let input = ModelInput {
            ids: &ids,
            entity_span: (2, 4),
            attention_len: len,
        };
        let base_logits = model.logits(input).unwrap();
        for _ in 0..5 {
            let mut perturbed = ids.clone();
            for id in &mut perturbed[len..] {
                *id = rng.below(VOCAB);
            }
            let h = hidden_rows(&model, &perturbed, len);
            assert_eq!(&h.data()[..len * h.cols()], &base.data()[..len * base.cols()]);
            let input = ModelInput {
                ids: &perturbed,
                entity_span: (2, 4),
                attention_len: len,
            };
            assert_eq!(model.logits(input).unwrap(), base_logits);
        }
        // Dropping the padding entirely gives the same logits.
        let trimmed = ModelInput {
            ids: &ids[..len],
            entity_span: (2, 4),
            attention_len: len,
        };
        for (a, b) in model.logits(trimmed).unwrap().iter().zip(&base_logits) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }
}

fn set(store: &mut ParamStore, name: &str, data: Vec<f64>) {
    let id = store.id(name).unwrap();
    let shape = store.value(id).shape().to_vec();
    *store.value_mut(id) = Tensor::new(shape, data).unwrap();
}

fn lstm_h1() -> EntityClassifier {
    let mut cfg = lstm_cfg(1);
    cfg.embed_dim = 2;
    EntityClassifier::new(ModelConfig::bilstm(VOCAB, 3, cfg), 0).unwrap()
}

#[test]
fn lstm_zero_weights_closed_form() {
    let mut model = lstm_h1();
    for dir in ["fwd", "bwd"] {
        set(&mut model.params, &format!("lstm.0.{dir}.w_ih"), vec![0.0; 8]);
        set(&mut model.params, &format!("lstm.0.{dir}.w_hh"), vec![0.0; 4]);
        set(&mut model.params, &format!("lstm.0.{dir}.b"), vec![0.0; 4]);
    }
    let h = hidden_rows(&model, &[2, 9, 3], 3);
    assert!(h.data().iter().all(|&v| v == 0.0));

    // Gates i = f = o = 0.5 and candidate g = tanh(1):
    // c1 = t/2, c2 = c1/2 + t/2 = 3t/4, c3 = c2/2 + t/2 = 7t/8; h = tanh(c)/2.
    for dir in ["fwd", "bwd"] {
        set(&mut model.params, &format!("lstm.0.{dir}.b"), vec![0.0, 0.0, 1.0, 0.0]);
    }
    let t = 1f64.tanh();
    let hs = [0.5 * (0.5 * t).tanh(), 0.5 * (0.75 * t).tanh(), 0.5 * (0.875 * t).tanh()];
    let h = hidden_rows(&model, &[2, 9, 3], 3);
    assert_eq!(h.shape(), &[3, 2]);
    for r in 0..3 {
        assert_abs_diff_eq!(h.get2(r, 0), hs[r], epsilon = 1e-15);
        assert_abs_diff_eq!(h.get2(r, 1), hs[2 - r], epsilon = 1e-15);
    }
}

#[test]
fn lstm_reversal_swaps_directions() {
    let mut model = EntityClassifier::new(ModelConfig::bilstm(VOCAB, 3, lstm_cfg(4)), 12).unwrap();
    for part in ["w_ih", "w_hh", "b"] {
        let src = model.params.value(model.params.id(&format!("lstm.0.fwd.{part}")).unwrap()).data().to_vec();
        set(&mut model.params, &format!("lstm.0.bwd.{part}"), src);
    }
    let ids = random_ids(&mut Rng::new(3), 9);
    let rev: Vec<usize> = ids.iter().rev().copied().collect();
    let a = hidden_rows(&model, &ids, 9);
    let b = hidden_rows(&model, &rev, 9);
    for t in 0..9 {
        for j in 0..4 {
            assert_abs_diff_eq!(a.get2(t, j), b.get2(8 - t, 4 + j), epsilon = 1e-14);
            assert_abs_diff_eq!(a.get2(t, 4 + j), b.get2(8 - t, j), epsilon = 1e-14);
        }
    }
}

#[test]
fn lora_hand_example() {
    let mut store = ParamStore::new();
    let w = store.add("w", Tensor::matrix(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap()).unwrap();
    let b = store.add("b", Tensor::zeros(&[2])).unwrap();
    let a_id = store.add("a", Tensor::matrix(&[vec![1.0, 1.0]]).unwrap()).unwrap();
    let b_id = store.add("bb", Tensor::matrix(&[vec![1.0], vec![0.0]]).unwrap()).unwrap();
    let lin = Linear {
        w,
        b,
        d_in: 2,
        d_out: 2,
        lora: Some(LoraParams { a: a_id, b: b_id, scaling: 1.0 }),
    };
    let mut g = Graph::with_params(&store);
    let x = g.constant(Tensor::matrix(&[vec![1.0, 2.0]]).unwrap());
    let y = lin.forward(&mut g, x).unwrap();
    assert_eq!(g.value(y).data(), &[4.0, 2.0]);
}

#[test]
fn lora_wrap_is_identity_at_init_and_freezes_base() {
    let base = small_transformer(21);
    let mut wrapped = base.clone();
    let cfg = LoraConfig {
        rank: 4,
        ..LoraConfig::default()
    };
    wrapped.lora_wrap(&cfg, &Rng::new(5)).unwrap();
    let ids = random_ids(&mut Rng::new(9), 10);
    let input = ModelInput {
        ids: &ids,
        entity_span: (2, 5),
        attention_len: 10,
    };
    let (l0, l1) = (base.logits(input).unwrap(), wrapped.logits(input).unwrap());
    for (a, b) in l0.iter().zip(&l1) {
        assert_abs_diff_eq!(a, b, epsilon = 1e-12);
    }

    let mut g = Graph::with_params(&wrapped.params);
    let logits = wrapped.forward(&mut g, input, true, &mut Rng::new(1)).unwrap();
    let logits = g.reshape(logits, vec![1, 3]).unwrap();
    let loss = g.cross_entropy(logits, &[0]).unwrap();
    let grads = g.backward(loss).unwrap().into_param_grads(&wrapped.params);
    for (id, grad) in grads.iter() {
        let name = &wrapped.params.get(id).name;
        let adapter = name.contains(".lora_");
        let expected = adapter || name.starts_with("head.");
        assert_eq!(grad.is_some(), expected, "{name}");
        assert!(!adapter || name.contains(".q.") || name.contains(".v."), "{name}");
    }
    // B starts at zero, so only B moves on the first step among the adapters.
    assert!(grads.iter().any(|(id, g)| wrapped.params.get(id).name.ends_with("lora_b")
        && g.is_some_and(|g| g.data().iter().any(|v| *v != 0.0))));

    let before = wrapped.params.clone();
    let mut opt = AdamW::new(AdamWConfig::default(), &wrapped.params).unwrap();
    opt.step(&mut wrapped.params, &grads).unwrap();
    let mut changed = 0;
    for (id, p) in before.iter() {
        let same = p.value == *wrapped.params.value(id);
        if !p.trainable {
            assert!(same, "frozen {} moved", p.name);
        } else if !same {
            changed += 1;
        }
    }
    assert!(changed > 0);

    // Trainable parameter count shrinks to adapters + head.
    assert!(wrapped.num_trainable() < base.num_trainable() / 4);
}

#[test]
fn lora_rank_too_large_is_config_error() {
    let mut model = small_transformer(1);
    let cfg = LoraConfig {
        rank: 17,
        ..LoraConfig::default()
    };
    assert!(matches!(model.lora_wrap(&cfg, &Rng::new(0)), Err(Error::Config(_))));
    let mut lstm = EntityClassifier::new(ModelConfig::bilstm(VOCAB, 3, lstm_cfg(4)), 0).unwrap();
    assert!(lstm.lora_wrap(&LoraConfig::default(), &Rng::new(0)).is_err());
}

#[test]
fn head_reads_only_cls_and_entity_rows() {
    let model = small_transformer(4);
    let mut rng = Rng::new(13);
    let h0: Vec<f64> = (0..12 * 16).map(|_| rng.normal()).collect();
    let logits_for = |h: &[f64], span: (usize, usize)| {
        let mut g = Graph::with_params(&model.params);
        let hv = g.constant(Tensor::new(vec![12, 16], h.to_vec()).unwrap());
        let out = model.head.forward(&mut g, hv, span, 12, false, &mut Rng::new(0)).unwrap();
        g.value(out).data().to_vec()
    };
    let base = logits_for(&h0, (4, 7));
    assert_eq!(base.len(), 3);
    let mut h1 = h0.clone();
    for r in [1, 2, 3, 7, 8, 11] {
        for j in 0..16 {
            h1[r * 16 + j] = rng.normal() * 10.0;
        }
    }
    assert_eq!(logits_for(&h1, (4, 7)), base);
    h1[5 * 16] += 1.0;
    assert_ne!(logits_for(&h1, (4, 7)), base);

    // Identical entity rows pool to that row.
    let mut h2 = h0.clone();
    for r in 5..7 {
        let (src, dst) = h2.split_at_mut(r * 16);
        dst[..16].copy_from_slice(&src[4 * 16..5 * 16]);
    }
    assert_eq!(logits_for(&h2, (4, 7)), logits_for(&h2, (4, 5)));

    let mut g = Graph::with_params(&model.params);
    let hv = g.constant(Tensor::new(vec![12, 16], h0).unwrap());
    assert!(model.head.forward(&mut g, hv, (0, 2), 12, false, &mut Rng::new(0)).is_err());
    assert!(model.head.forward(&mut g, hv, (3, 13), 12, false, &mut Rng::new(0)).is_err());
}

#[test]
fn too_long_sequence_is_length_error() {
    let model = small_transformer(0);
    let ids = vec![5; 17];
    let input = ModelInput {
        ids: &ids,
        entity_span: (1, 2),
        attention_len: 17,
    };
    assert!(matches!(model.logits(input), Err(Error::Length { len: 17, max: 16 })));
}

#[test]
fn same_seed_same_model() {
    let (a, b) = (small_transformer(77), small_transformer(77));
    for (id, p) in a.params.iter() {
        assert_eq!(p.value, *b.params.value(id));
    }
    assert_ne!(small_transformer(78).params.value(a.params.id("tok_emb").unwrap()), a.params.value(a.params.id("tok_emb").unwrap()));
    let ids = random_ids(&mut Rng::new(1), 9);
    let input = ModelInput {
        ids: &ids,
        entity_span: (1, 3),
        attention_len: 9,
    };
    let run = |m: &EntityClassifier| {
        let mut g = Graph::with_params(&m.params);
        let out = m.forward(&mut g, input, true, &mut Rng::new(3)).unwrap();
        g.value(out).data().to_vec()
    };
    assert_eq!(run(&a), run(&b));
    assert_eq!(a.logits(input).unwrap(), b.logits(input).unwrap());
}

#[test]
fn checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ModelConfig::transformer(VOCAB, 3, encoder_cfg(1, 8, 2, 16));
    cfg.lora = Some(LoraConfig {
        rank: 2,
        ..LoraConfig::default()
    });
    let lstm = EntityClassifier::new(ModelConfig::bilstm(VOCAB, 3, lstm_cfg(3)), 5).unwrap();
    for mut model in [EntityClassifier::new(cfg, 5).unwrap(), lstm] {
        // Move every parameter off its initial value.
        let ids: Vec<_> = model.params.ids().collect();
        for id in ids {
            for v in model.params.value_mut(id).data_mut() {
                *v += 0.01;
            }
        }
        let path = dir.path().join("m.ckpt");
        model.save(&path).unwrap();
        let loaded = EntityClassifier::load(&path).unwrap();
        assert_eq!(loaded.config, model.config);
        let toks = random_ids(&mut Rng::new(2), 6);
        let input = ModelInput {
            ids: &toks,
            entity_span: (1, 3),
            attention_len: 6,
        };
        assert_eq!(loaded.logits(input).unwrap(), model.logits(input).unwrap());
        for (id, p) in model.params.iter() {
            assert_eq!(p.trainable, loaded.params.is_trainable(id));
        }
    }
}

#[test]
fn predict_examples() {
    assert_eq!(predict(&[0.1, 0.9, 0.2]), 1);
    assert_eq!(predict(&[0.5, 0.5, 0.1]), 0);
    assert_eq!(predict(&[1.0, 2.0, 2.0]), 1);
}

#[test]
fn config_validation() {
    assert!(EntityClassifier::new(ModelConfig::transformer(VOCAB, 3, encoder_cfg(1, 10, 3, 8)), 0).is_err());
    let mut bad = encoder_cfg(1, 8, 2, 8);
    bad.dropout_p = 1.0;
    assert!(EntityClassifier::new(ModelConfig::transformer(VOCAB, 3, bad), 0).is_err());
    assert!(EncoderConfig::default().validate().is_ok());
    assert_eq!(EncoderConfig::default().d_model, 64);
}

proptest! {
    #[test]
    fn predict_is_shift_invariant(logits in prop::collection::vec(-5.0f64..5.0, 3), c in -100.0f64..100.0) {
        let shifted: Vec<f64> = logits.iter().map(|v| v + c).collect();
        // Shifting can round two close logits onto the same value; only check when the
        // ordering survives.
        let best = predict(&logits);
        prop_assume!(shifted.iter().enumerate().all(|(i, v)| i == best || *v < shifted[best]) );
        prop_assert_eq!(predict(&shifted), best);
    }
}
