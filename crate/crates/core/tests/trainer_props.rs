mod common;

use std::sync::Arc;

use common::{active_params, micro_config, small_config};
use r3mem::hierpair::tokenizer::{training_sequence, VOCAB_SIZE};
use r3mem::hierpair::{ContextQueryPair, Level};
use r3mem::numcore::{Tape, Tensor};
use r3mem::revformer::*;
use r3mem::trainer::*;
use r3mem::Error;

fn encoded(c: &str, q: &str) -> EncodedPair {
    EncodedPair::new(&ContextQueryPair {
        id: "t".into(),
        level: Level::P2s,
        context: c.into(),
        query: q.into(),
    })
}

/// NLL of `targets` at rows `rows` of a logits table, computed in plain f64.
fn hand_nll(logits: &Tensor<f64>, rows: std::ops::Range<usize>, targets: &[usize]) -> f64 {
    let mut total = 0.0;
    for (r, &t) in rows.zip(targets) {
        let row = logits.row(r);
        let mx = row.iter().cloned().fold(f64::MIN, f64::max);
        let z: f64 = row.iter().map(|v| (v - mx).exp()).sum();
        total += z.ln() + mx - row[t];
    }
    total / targets.len() as f64
}

fn with_net<R>(p: &RevformerParams<f64>, f: impl FnOnce(&mut Tape<f64>, &Net) -> R) -> R {
    let mut tape = Tape::new();
    let w = p.bind(&mut tape, false, false);
    let net = Net::new(&p.config, &w);
    f(&mut tape, &net)
}

#[test]
fn uniform_model_scores_log_vocab_both_ways() {
    let mut p = RevformerParams::<f64>::random(micro_config(), 1).unwrap();
    p.base.tok_emb = Arc::new(Tensor::zeros(p.base.tok_emb.shape().to_vec()));
    let pair = encoded("some context", "ctx");
    let ln_v = (VOCAB_SIZE as f64).ln();
    with_net(&p, |t, net| {
        let f = forward_loss(t, net, &pair, None).unwrap();
        let b = backward_loss(t, net, &pair).unwrap();
        assert!((t.value(f).item() - ln_v).abs() < 1e-12);
        assert!((t.value(b).item() - ln_v).abs() < 1e-12);
    });
    assert!((ln_v - 5.572).abs() < 1e-3);
}

#[test]
fn forward_loss_is_mean_token_nll_over_query_and_eos() {
    let p = active_params(micro_config(), 2, 0.3);
    let pair = encoded("abc", "xy");
    let (seq, sep) = training_sequence(Level::P2s, &pair.context, &pair.query);
    let logits = forward_segmented(&p, &seq).unwrap().logits;
    // query "xy" plus EOS: three scored positions
    let expected = hand_nll(&logits, sep..seq.len() - 1, &seq[sep + 1..]);
    assert_eq!(seq.len() - 1 - sep, 3);
    let got = with_net(&p, |t, net| {
        let l = forward_loss(t, net, &pair, None).unwrap();
        t.value(l).item()
    });
    assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
}

#[test]
fn backward_loss_scores_the_context_under_the_flipped_model() {
    let p = active_params(micro_config(), 3, 0.3);
    let pair = encoded("abcd", "bd");
    let (seq, sep) = training_sequence(Level::P2s, &pair.query, &pair.context);
    let logits = flipped_forward(&p, &seq).unwrap();
    let expected = hand_nll(&logits, sep..seq.len() - 1, &seq[sep + 1..]);
    let got = with_net(&p, |t, net| {
        let l = backward_loss(t, net, &pair).unwrap();
        t.value(l).item()
    });
    assert!((got - expected).abs() < 1e-12);
}

#[test]
fn empty_query_is_a_usage_error() {
    let p = RevformerParams::<f64>::random(micro_config(), 1).unwrap();
    let pair = EncodedPair {
        level: Level::S2e,
        context: vec![65],
        query: vec![],
    };
    with_net(&p, |t, net| {
        assert!(matches!(forward_loss(t, net, &pair, None), Err(Error::Usage(_))));
    });
}

#[test]
fn cycle_loss_is_backward_loss_on_the_decoded_query() {
    let p = active_params(micro_config(), 4, 0.3);
    let pair = encoded("abcde", "bcd");
    let (cycle, decoded) = with_net(&p, |t, net| {
        let c = cycle_loss(t, net, &p, pair.level, &pair.context, pair.cycle_budget()).unwrap();
        (t.value(c.loss).item(), c.decoded)
    });
    let expected_decode = generate(&p, Direction::Forward, &r3mem::hierpair::tokenizer::prompt(pair.level, &pair.context), 4).unwrap();
    assert_eq!(decoded, expected_decode);
    let synthetic = EncodedPair {
        query: if decoded.is_empty() { vec![r3mem::hierpair::tokenizer::EOS] } else { decoded },
        ..pair.clone()
    };
    let direct = with_net(&p, |t, net| {
        let l = backward_loss(t, net, &synthetic).unwrap();
        t.value(l).item()
    });
    assert_eq!(cycle, direct);
}

#[test]
fn zero_lambda_drops_the_cycle_term_exactly() {
    let p = active_params(micro_config(), 5, 0.3);
    let pair = encoded("hello there", "there");
    let weights = LossWeights {
        lambda_cycle: 0.0,
        ..Default::default()
    };
    with_net(&p, |t, net| {
        let (total, parts) = total_loss(t, net, &p, &pair, &weights, None).unwrap();
        let f = forward_loss(t, net, &pair, None).unwrap();
        let b = backward_loss(t, net, &pair).unwrap();
        assert_eq!(t.value(total).item(), t.value(f).item() + t.value(b).item());
        assert_eq!(parts.cycle, 0.0);
    });
}

#[test]
fn base_gradients_vanish_and_adapter_gradients_do_not() {
    let p = active_params(micro_config(), 6, 0.3);
    let pair = encoded("grad check", "check");
    let mut tape = Tape::new();
    let w = p.bind(&mut tape, false, true);
    let net = Net::new(&p.config, &w);
    let (loss, _) = total_loss(&mut tape, &net, &p, &pair, &LossWeights::default(), None).unwrap();
    let g = tape.grad(loss).unwrap();
    for (_, v) in w.base() {
        assert!(g.get(v).is_none());
    }
    for (name, v) in w.trainable() {
        if name == "memory" {
            continue;
        }
        assert!(g.get(v).unwrap().data().iter().any(|&x| x != 0.0), "{name}");
    }
}

fn toy_pairs() -> Vec<ContextQueryPair> {
    [("the red fox ran", "red fox"), ("a blue sky", "blue")]
        .iter()
        .enumerate()
        .map(|(i, (c, q))| ContextQueryPair {
            id: format!("toy/{i}"),
            level: Level::P2s,
            context: c.to_string(),
            query: q.to_string(),
        })
        .collect()
}

#[test]
fn overfitting_one_batch_lowers_the_loss_and_keeps_the_base() {
    let mut p = RevformerParams::<f32>::random(small_config(), 7).unwrap();
    let before = p.base.fingerprint();
    let tc = TrainConfig {
        max_steps: Some(200),
        batch_size: 2,
        max_lr: 5e-3,
        seed: 3,
        ..Default::default()
    };
    let report = train(&mut p, &toy_pairs(), &tc).unwrap();
    let first = report.steps.first().unwrap().loss_total;
    let last = report.steps.last().unwrap().loss_total;
    assert!(last < first, "{first} -> {last}");
    assert_eq!(p.base.fingerprint(), before);
    assert_eq!(report.base_fingerprint, before);
}

#[test]
fn training_is_bit_reproducible() {
    let run = || {
        let mut p = RevformerParams::<f32>::random(small_config(), 7).unwrap();
        let tc = TrainConfig {
            max_steps: Some(6),
            seed: 11,
            ..Default::default()
        };
        let r = train(&mut p, &toy_pairs(), &tc).unwrap();
        (checkpoint::encode(&p), r.steps)
    };
    assert_eq!(run(), run());
}

#[test]
fn loss_log_has_the_documented_header() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("log.csv");
    let step = StepLog {
        step: 1,
        lr: 1e-3,
        loss_fwd: 1.0,
        loss_bwd: 2.0,
        loss_cycle: 4.0,
        loss_total: 5.0,
    };
    write_loss_log(&path, &[step]).unwrap();
    let text = std::fs::read_to_string(path).unwrap();
    assert_eq!(text.lines().next(), Some("step,lr,loss_fwd,loss_bwd,loss_cycle,loss_total"));
    assert_eq!(text.lines().count(), 2);
}

#[test]
fn pretraining_learns_and_is_deterministic() {
    let text = std::fs::read_to_string(common::fixture("heldout/corpus.txt")).unwrap();
    let (train_text, held) = text.split_at(12_000);
    let docs = vec![train_text.to_string()];
    let held = vec![held.to_string()];
    let cfg = small_config();
    let pc = PretrainConfig {
        steps: 150,
        batch_size: 2,
        seq_len: 32,
        seed: 5,
        ..Default::default()
    };
    let init = RevformerParams::<f32>::attach(
        cfg.clone(),
        BaseWeights::init(&cfg, &mut <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(5)),
        5,
    )
    .unwrap();
    let (p, _) = pretrain_base::<f32>(&cfg, &docs, &pc).unwrap();
    let before = heldout_nll(&init, &held, 32).unwrap();
    let after = heldout_nll(&p, &held, 32).unwrap();
    assert!(after < before, "{before} -> {after}");
    assert!(after < (VOCAB_SIZE as f64).ln());
    let (q, _) = pretrain_base::<f32>(&cfg, &docs, &pc).unwrap();
    assert_eq!(checkpoint::encode(&p), checkpoint::encode(&q));
}

#[test]
fn memory_tokens_get_no_gradient_across_the_truncated_boundary() {
    // two forward segments: the write states reach segment 2 without gradient
    let p = active_params(micro_config(), 9, 0.3);
    let pair = encoded("Anne saw Rome.", "Rome");
    assert!(pair.flipped_len() > micro_config().segment_len());
    let mut tape = Tape::new();
    let w = p.bind(&mut tape, false, true);
    let net = Net::new(&p.config, &w);
    let loss = forward_loss(&mut tape, &net, &pair, None).unwrap();
    let g = tape.grad(loss).unwrap();
    let gm = g.get(w.memory).map_or(0.0, |t| t.data().iter().map(|v| v.abs()).sum());
    assert_eq!(gm, 0.0);
    // the carried states still change the second segment's predictions
    let mut q = p.clone();
    q.memory = Arc::new(Tensor::randn(p.memory.shape().to_vec(), 1.0, &mut <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(1)));
    let (seq, _) = training_sequence(Level::P2s, &pair.context, &pair.query);
    let a = forward_segmented(&p, &seq).unwrap().logits;
    let b = forward_segmented(&q, &seq).unwrap().logits;
    let seg = micro_config().segment_len();
    assert_eq!(a.row(seg - 1), b.row(seg - 1));
    assert_ne!(a.row(seg), b.row(seg));
}
