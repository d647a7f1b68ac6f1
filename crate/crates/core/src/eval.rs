//! Perplexity, reconstruction metrics, the invertibility audit and the
//! metrics CSV.

use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::hierpair::tokenizer::{prompt, tokenize, BOS};
use crate::hierpair::ContextQueryPair;
use crate::numcore::{Scalar, Tape, Tensor};
use crate::revformer::{generate, Direction, ModelConfig, Net, RevformerParams, StreamPair};
use crate::trainer::{nll_sum, EncodedPair};

pub const METRICS_HEADER: &str = "task,metric,value,n_samples,config";

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub task: String,
    pub metric: String,
    pub value: f64,
    pub n_samples: usize,
    /// Short fingerprint of the model configuration.
    pub config: String,
}

impl MetricsRow {
    pub fn new(task: &str, metric: &str, value: f64, n_samples: usize, cfg: &ModelConfig) -> Self {
        Self {
            task: task.into(),
            metric: metric.into(),
            value,
            n_samples,
            config: config_fingerprint(cfg),
        }
    }
}

/// First 12 hex digits of the SHA-256 of the config's key=value block.
pub fn config_fingerprint(cfg: &ModelConfig) -> String {
    let digest = Sha256::digest(cfg.to_kv().as_bytes());
    hex::encode(&digest[..6])
}

pub fn write_metrics(path: impl AsRef<Path>, rows: &[MetricsRow]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "{METRICS_HEADER}")?;
    for r in rows {
        if !r.value.is_finite() {
            return Err(Error::NonFinite("metrics row"));
        }
        writeln!(w, "{},{},{:.8},{},{}", r.task, r.metric, r.value, r.n_samples, r.config)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Perplexity {
    pub ppl: f64,
    pub mean_nll: f64,
    pub n_tokens: usize,
    pub n_docs: usize,
}

/// Perplexity of the segmented forward model over documents, each scored
/// as `BOS ⊕ text` with every text token predicted. `segment_len` content
/// tokens go into each segment.
pub fn eval_perplexity<T: Scalar>(
    params: &RevformerParams<T>,
    docs: &[String],
    segment_len: usize,
) -> Result<Perplexity> {
    let cfg = &params.config;
    if segment_len == 0 || segment_len > cfg.segment_len() {
        return Err(Error::usage(format!(
            "segment length {segment_len} must lie in [1, {}]",
            cfg.segment_len()
        )));
    }
    let cfg = cfg.with_window(segment_len + 2 * cfg.mem_tokens);
    let (mut total, mut n_tokens, mut n_docs) = (0.0f64, 0usize, 0usize);
    for doc in docs {
        let text = tokenize(doc);
        if text.is_empty() {
            continue;
        }
        let mut seq = Vec::with_capacity(text.len() + 1);
        seq.push(BOS);
        seq.extend_from_slice(&text);
        let mut tape = Tape::new();
        let w = params.bind(&mut tape, false, false);
        let net = Net::new(&cfg, &w);
        let out = net.forward_hidden(&mut tape, &seq[..seq.len() - 1], None)?;
        let logits = net.readout(&mut tape, out.hidden)?;
        let loss = tape.cross_entropy(logits, &seq[1..])?;
        total += tape.value(loss).item().as_f64() * text.len() as f64;
        n_tokens += text.len();
        n_docs += 1;
    }
    if n_tokens == 0 {
        return Err(Error::usage("perplexity corpus is empty"));
    }
    let mean_nll = total / n_tokens as f64;
    Ok(Perplexity {
        ppl: mean_nll.exp(),
        mean_nll,
        n_tokens,
        n_docs,
    })
}

/// `exp` of the mean NLL of `q ⊕ EOS` over the pairs (forward), or of
/// `c ⊕ EOS` (backward).
pub fn pair_perplexity<T: Scalar>(
    params: &RevformerParams<T>,
    pairs: &[ContextQueryPair],
    direction: Direction,
) -> Result<Perplexity> {
    if pairs.is_empty() {
        return Err(Error::usage("no pairs to score"));
    }
    let (mut total, mut n) = (0.0, 0);
    for p in pairs {
        let (s, k) = nll_sum(params, &EncodedPair::new(p), direction)?;
        total += s;
        n += k;
    }
    let mean_nll = total / n as f64;
    Ok(Perplexity {
        ppl: mean_nll.exp(),
        mean_nll,
        n_tokens: n,
        n_docs: pairs.len(),
    })
}

/// Harmonic mean of multiset precision and recall over tokens. Two empty
/// sequences score 1.
pub fn token_f1(pred: &[usize], gold: &[usize]) -> f64 {
    if pred.is_empty() && gold.is_empty() {
        return 1.0;
    }
    if pred.is_empty() || gold.is_empty() {
        return 0.0;
    }
    let mut counts: HashMap<usize, usize> = HashMap::new();
    for &g in gold {
        *counts.entry(g).or_default() += 1;
    }
    let mut overlap = 0usize;
    for &p in pred {
        if let Some(c) = counts.get_mut(&p) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / pred.len() as f64;
    let recall = overlap as f64 / gold.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Reconstruction {
    pub mean_f1: f64,
    pub exact_match: f64,
    pub per_pair_f1: Vec<f64>,
    pub outputs: Vec<String>,
}

impl Reconstruction {
    /// Fraction of pairs whose F1 reaches `threshold`.
    pub fn fraction_at_least(&self, threshold: f64) -> f64 {
        let hits = self.per_pair_f1.iter().filter(|&&f| f >= threshold).count();
        hits as f64 / self.per_pair_f1.len().max(1) as f64
    }
}

/// Backward-generates each context from its query (greedy, budget
/// `⌈1.25·|c|⌉`) and scores it against the reference.
pub fn eval_reconstruction<T: Scalar>(params: &RevformerParams<T>, pairs: &[ContextQueryPair]) -> Result<Reconstruction> {
    let mut per_pair_f1 = Vec::with_capacity(pairs.len());
    let mut outputs = Vec::with_capacity(pairs.len());
    let mut exact = 0usize;
    for p in pairs {
        let c = tokenize(&p.context);
        let q = tokenize(&p.query);
        let budget = (c.len() * 5).div_ceil(4);
        let pred = generate(params, Direction::Backward, &prompt(p.level, &q), budget)?;
        per_pair_f1.push(token_f1(&pred, &c));
        exact += usize::from(pred == c);
        outputs.push(crate::hierpair::tokenizer::detokenize(&pred));
    }
    let n = pairs.len().max(1) as f64;
    Ok(Reconstruction {
        mean_f1: per_pair_f1.iter().sum::<f64>() / n,
        exact_match: exact as f64 / n,
        per_pair_f1,
        outputs,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuditReport {
    pub trials: usize,
    /// Worst single-block roundtrip error, per block.
    pub per_block: Vec<f64>,
    pub whole_stack: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Rows per random stream pair in the audit.
const AUDIT_ROWS: usize = 12;

/// Sends random stream pairs through each coupling block and the whole
/// stack, inverts them and records the largest reconstruction error.
/// Runs in the precision `T` of `params`; dropout is off throughout.
pub fn check_invert<T: Scalar>(params: &RevformerParams<T>, trials: usize, tol: f64, seed: u64) -> Result<AuditReport> {
    if trials == 0 {
        return Err(Error::usage("at least one trial is required"));
    }
    let cfg = &params.config;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut per_block = vec![0.0f64; cfg.n_layers];
    let mut whole_stack = 0.0f64;
    for _ in 0..trials {
        let x1 = Tensor::<T>::randn([AUDIT_ROWS, cfg.d_model], 1.0, &mut rng);
        let x2 = Tensor::<T>::randn([AUDIT_ROWS, cfg.d_model], 1.0, &mut rng);
        let mut tape = Tape::new();
        let w = params.bind(&mut tape, false, false);
        let net = Net::new(cfg, &w);
        let input = StreamPair {
            first: tape.constant(x1),
            second: tape.constant(x2),
        };
        let err = |tape: &Tape<T>, a: StreamPair, b: StreamPair| {
            tape.value(a.first)
                .max_abs_diff(tape.value(b.first))
                .max(tape.value(a.second).max_abs_diff(tape.value(b.second)))
        };
        for (block, worst) in per_block.iter_mut().enumerate() {
            let y = net.coupling_forward_eval(&mut tape, input, block)?;
            let back = net.coupling_inverse(&mut tape, y, block)?;
            *worst = worst.max(err(&tape, input, back));
        }
        let mut y = input;
        for block in 0..cfg.n_layers {
            y = net.coupling_forward_eval(&mut tape, y, block)?;
        }
        for block in (0..cfg.n_layers).rev() {
            y = net.coupling_inverse(&mut tape, y, block)?;
        }
        whole_stack = whole_stack.max(err(&tape, input, y));
    }
    let pass = whole_stack <= tol && per_block.iter().all(|&e| e <= tol);
    Ok(AuditReport {
        trials,
        per_block,
        whole_stack,
        tolerance: tol,
        pass,
    })
}
