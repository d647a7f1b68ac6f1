#![allow(dead_code)]

pub mod gradcheck;

use std::path::PathBuf;

use r3mem::hierpair::{FilterThresholds, Level, PairDataset};
use r3mem::numcore::{Tape, Tensor, Var};
use r3mem::revformer::{ModelConfig, RevformerParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(rel)
}

pub fn micro_config() -> ModelConfig {
    ModelConfig {
        d_model: 8,
        n_heads: 2,
        n_layers: 2,
        ffn_dim: 12,
        window: 24,
        mem_tokens: 2,
        adapter_rank: 2,
        adapter_scale: 4.0,
        dropout: 0.0,
        ..Default::default()
    }
}

pub fn small_config() -> ModelConfig {
    ModelConfig {
        d_model: 16,
        n_heads: 2,
        n_layers: 2,
        ffn_dim: 32,
        window: 48,
        mem_tokens: 4,
        ..Default::default()
    }
}

/// Random parameters with non-zero up-projections, so adapters are active.
pub fn active_params(cfg: ModelConfig, seed: u64, std: f64) -> RevformerParams<f64> {
    let mut p = RevformerParams::<f64>::random(cfg, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    for a in p.adapters.iter_mut() {
        for up in [&mut a.f_up, &mut a.g_up] {
            *up = std::sync::Arc::new(Tensor::randn(up.shape().to_vec(), std, &mut rng));
        }
    }
    p
}

pub struct GradCheck {
    pub worst_rel: f64,
    pub checked: usize,
}

/// Compares tape gradients with central differences (h = 1e-5) for every
/// coordinate of every input. `build` records the scalar loss from leaves.
pub fn finite_difference<F>(inputs: &[Tensor<f64>], build: F) -> GradCheck
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Var,
{
    let eval = |vals: &[Tensor<f64>]| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = vals.iter().map(|t| tape.leaf(t.clone(), true)).collect();
        let loss = build(&mut tape, &vars);
        (tape, vars, loss)
    };
    let (tape, vars, loss) = eval(inputs);
    let grads = tape.grad(loss).unwrap();
    let h = 1e-5;
    let mut worst_rel = 0.0f64;
    let mut checked = 0;
    for (i, v) in vars.iter().enumerate() {
        let analytic = grads.get(*v).unwrap().data().to_vec();
        for j in 0..inputs[i].len() {
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[j] += h;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[j] -= h;
            let f = |vals: &[Tensor<f64>]| {
                let (t, _, l) = eval(vals);
                t.value(l).item()
            };
            let numeric = (f(&plus) - f(&minus)) / (2.0 * h);
            let a = analytic[j];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            worst_rel = worst_rel.max(rel);
            checked += 1;
        }
    }
    GradCheck { worst_rel, checked }
}

/// Small model used for command-line pipeline runs; its window covers the
/// longest pair built from `memorize/docs`.
pub const PIPELINE_CONFIG: &str = "d_model=16\nn_heads=2\nn_layers=2\nffn_dim=32\nwindow=320\nmem_tokens=4\nadapter_rank=4\nadapter_scale=16\n";

pub fn cli(args: &[&str]) -> i32 {
    r3mem::cli::run(std::iter::once("r3mem").chain(args.iter().copied()))
}

/// build-pairs, pretrain, train, eval-ppl and eval-recon into `dir`; returns
/// every produced file with its bytes, in a fixed order.
pub fn run_pipeline(dir: &std::path::Path, seed: u64) -> Vec<(String, Vec<u8>)> {
    let p = |name: &str| dir.join(name).to_str().unwrap().to_string();
    let seed = seed.to_string();
    std::fs::write(p("model.cfg"), PIPELINE_CONFIG).unwrap();
    let docs = fixture("memorize/docs");
    let corpus = fixture("heldout/corpus.txt");
    let steps: [Vec<String>; 5] = [
        vec!["build-pairs".into(), "--input".into(), docs.to_str().unwrap().into(), "--output".into(), p("pairs.jsonl")],
        ["pretrain", "--corpus", corpus.to_str().unwrap(), "--config", &p("model.cfg"), "--steps", "20", "--seq-len", "64", "--seed", &seed, "--out", &p("base.r3m")]
            .map(String::from)
            .to_vec(),
        ["train", "--pairs", &p("pairs.jsonl"), "--base", &p("base.r3m"), "--max-steps", "3", "--lambda", "0.5", "--seed", &seed, "--out", &p("tuned.r3m"), "--log", &p("train.csv")]
            .map(String::from)
            .to_vec(),
        ["eval-ppl", "--model", &p("tuned.r3m"), "--corpus", corpus.to_str().unwrap(), "--segment-len", "128", "--out", &p("ppl.csv")]
            .map(String::from)
            .to_vec(),
        ["eval-recon", "--model", &p("tuned.r3m"), "--pairs", &p("pairs.jsonl"), "--out", &p("recon.csv")]
            .map(String::from)
            .to_vec(),
    ];
    for args in &steps {
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        assert_eq!(cli(&refs), 0, "{args:?}");
    }
    ["pairs.jsonl", "base.r3m", "tuned.r3m", "train.csv", "ppl.csv", "recon.csv"]
        .iter()
        .map(|n| (n.to_string(), std::fs::read(p(n)).unwrap()))
        .collect()
}

/// Recomputes every filter decision from scratch for each emitted pair.
pub fn filter_violations(docs: &[(String, String)], ds: &PairDataset, th: FilterThresholds) -> Vec<String> {
    let mut out = Vec::new();
    for p in &ds.pairs {
        let doc_id = p.id.split('/').next().unwrap();
        let doc = &docs.iter().find(|(id, _)| id == doc_id).unwrap().1;
        let doc_len = doc.trim().len();
        let (unit, frac) = match p.level {
            Level::D2p => (&p.query, th.min_para_frac),
            Level::P2s => (&p.query, th.min_sent_frac),
            Level::S2e => (&p.context, th.min_sent_frac),
        };
        if (unit.len() as f64) < frac * doc_len as f64 - 1e-9 {
            out.push(p.id.clone());
        }
    }
    out
}
