use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::optim::{clip_global_norm, AdamW, LrSchedule};
use crate::error::{Error, Result};
use crate::hierpair::tokenizer::{tokenize, BOS};
use crate::numcore::{Scalar, Tape, Tensor};
use crate::revformer::{BaseWeights, ModelConfig, Net, RevformerParams};

/// Hyperparameters for training the plain decoder on raw text.
#[derive(Clone, Debug, PartialEq)]
pub struct PretrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    /// Tokens per training window, BOS included.
    pub seq_len: usize,
    pub max_lr: f64,
    pub warmup_frac: f64,
    pub weight_decay: f64,
    pub grad_clip: Option<f64>,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            batch_size: 4,
            seq_len: 128,
            max_lr: 3e-3,
            warmup_frac: 0.06,
            weight_decay: 0.01,
            grad_clip: Some(1.0),
            seed: 0,
        }
    }
}

/// Mean next-token loss per step.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PretrainReport {
    pub losses: Vec<f64>,
}

/// Concatenated token stream of all documents, separated by blank lines.
fn token_stream(docs: &[String]) -> Vec<usize> {
    let mut out = Vec::new();
    for d in docs.iter().map(|d| d.trim()).filter(|d| !d.is_empty()) {
        if !out.is_empty() {
            out.extend(tokenize("\n\n"));
        }
        out.extend(tokenize(d));
    }
    out
}

/// `BOS ⊕ text[start..]`, `seq_len` tokens at most.
fn window(stream: &[usize], start: usize, seq_len: usize) -> Vec<usize> {
    let end = (start + seq_len - 1).min(stream.len());
    let mut seq = Vec::with_capacity(seq_len);
    seq.push(BOS);
    seq.extend_from_slice(&stream[start..end]);
    seq
}

/// Mean next-token NLL of the plain decoder over `seq`.
pub fn lm_loss<T: Scalar>(tape: &mut Tape<T>, net: &Net, seq: &[usize]) -> Result<crate::numcore::Var> {
    if seq.len() < 2 {
        return Err(Error::usage("language-model loss needs at least two tokens"));
    }
    let h = net.base_hidden(tape, &seq[..seq.len() - 1])?;
    let logits = net.readout(tape, h)?;
    tape.cross_entropy(logits, &seq[1..])
}

/// Mean NLL of the plain decoder on held-out text, over consecutive windows.
pub fn heldout_nll<T: Scalar>(params: &RevformerParams<T>, docs: &[String], seq_len: usize) -> Result<f64> {
    let stream = token_stream(docs);
    if stream.is_empty() {
        return Err(Error::usage("empty held-out text"));
    }
    let (mut sum, mut n) = (0.0, 0usize);
    for start in (0..stream.len()).step_by(seq_len - 1) {
        let seq = window(&stream, start, seq_len);
        if seq.len() < 2 {
            continue;
        }
        let mut tape = Tape::new();
        let w = params.bind(&mut tape, false, false);
        let net = Net::new(&params.config, &w);
        let loss = lm_loss(&mut tape, &net, &seq)?;
        sum += tape.value(loss).item().as_f64() * (seq.len() - 1) as f64;
        n += seq.len() - 1;
    }
    Ok(sum / n as f64)
}

/// Trains every base weight of a freshly initialized decoder on `docs`.
/// Memory tokens and adapters are attached afterwards, untouched.
pub fn pretrain_base<T: Scalar>(
    cfg: &ModelConfig,
    docs: &[String],
    pc: &PretrainConfig,
) -> Result<(RevformerParams<T>, PretrainReport)> {
    cfg.validate()?;
    let stream = token_stream(docs);
    if stream.is_empty() {
        return Err(Error::usage("pretraining corpus is empty"));
    }
    if pc.seq_len < 2 || pc.seq_len > cfg.window || pc.batch_size == 0 {
        return Err(Error::usage(format!(
            "sequence length {} must lie in [2, window {}] and batch size be positive",
            pc.seq_len, cfg.window
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(pc.seed);
    let base = BaseWeights::<T>::init(cfg, &mut rng);
    let mut params = RevformerParams::attach(cfg.clone(), base, pc.seed)?;
    let mut shapes_named: Vec<(String, Vec<usize>)> = params
        .base
        .named()
        .into_iter()
        .map(|(n, t)| (n, t.shape().to_vec()))
        .collect();
    shapes_named.sort_by(|a, b| a.0.cmp(&b.0));
    let shapes: Vec<Vec<usize>> = shapes_named.into_iter().map(|(_, s)| s).collect();
    let mut opt = AdamW::<T>::new(&shapes, 0.9, 0.99, pc.weight_decay);
    let schedule = LrSchedule::new(pc.max_lr, pc.warmup_frac, pc.steps);
    let mut report = PretrainReport::default();
    let span = stream.len().saturating_sub(pc.seq_len - 1).max(1);

    for step in 0..pc.steps {
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape, true, false);
        let net = Net::new(&params.config, &bound);
        let mut sum = None;
        for _ in 0..pc.batch_size {
            let seq = window(&stream, rng.gen_range(0..span), pc.seq_len);
            let loss = lm_loss(&mut tape, &net, &seq)?;
            sum = Some(match sum {
                None => loss,
                Some(s) => tape.add(s, loss)?,
            });
        }
        let mean = tape.scale(sum.expect("batch"), 1.0 / pc.batch_size as f64)?;
        report.losses.push(tape.value(mean).item().as_f64());
        let grads = tape.grad(mean)?;
        let mut named = bound.base();
        named.sort_by(|a, b| a.0.cmp(&b.0));
        let mut g: Vec<Tensor<T>> = named
            .iter()
            .map(|(_, v)| grads.get(*v).cloned().expect("base leaf has a gradient"))
            .collect();
        drop(net);
        if let Some(max) = pc.grad_clip {
            clip_global_norm(&mut g, max);
        }
        let refs: Vec<&Tensor<T>> = g.iter().collect();
        let mut targets: Vec<_> = params.base.named_mut().into_iter().collect();
        targets.sort_by(|a, b| a.0.cmp(&b.0));
        let mut targets: Vec<_> = targets.into_iter().map(|(_, t)| t).collect();
        opt.update(&mut targets, &refs, schedule.lr(step + 1));
    }
    Ok((params, report))
}
