use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::losses::{total_loss, EncodedPair, LossWeights};
use super::optim::{clip_global_norm, AdamW, LrSchedule};
use crate::error::{Error, Result};
use crate::hierpair::ContextQueryPair;
use crate::numcore::{Scalar, Tape, Tensor};
use crate::revformer::{Net, RevformerParams};

pub const LOSS_LOG_HEADER: &str = "step,lr,loss_fwd,loss_bwd,loss_cycle,loss_total";

/// Fine-tuning hyperparameters for memory tokens and adapters.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Overrides `epochs` when set.
    pub max_steps: Option<usize>,
    pub batch_size: usize,
    pub max_lr: f64,
    pub warmup_frac: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
    pub grad_clip: Option<f64>,
    pub weights: LossWeights,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            max_steps: None,
            batch_size: 2,
            max_lr: 2e-3,
            warmup_frac: 0.06,
            beta1: 0.9,
            beta2: 0.99,
            weight_decay: 0.0,
            grad_clip: Some(1.0),
            weights: LossWeights::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if self.batch_size == 0 {
            return Err(Error::usage("batch size must be at least 1"));
        }
        if !(self.max_lr > 0.0) || !(0.0..=1.0).contains(&self.warmup_frac) {
            return Err(Error::usage("learning rate must be positive and warmup in [0, 1]"));
        }
        Ok(())
    }

    pub fn total_steps(&self, n_pairs: usize) -> usize {
        self.max_steps
            .unwrap_or_else(|| self.epochs * n_pairs.div_ceil(self.batch_size))
    }
}

/// One row of the loss log; losses are batch means.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepLog {
    pub step: usize,
    pub lr: f64,
    pub loss_fwd: f64,
    pub loss_bwd: f64,
    pub loss_cycle: f64,
    pub loss_total: f64,
}

#[derive(Clone, Debug, Default)]
pub struct TrainReport {
    pub steps: Vec<StepLog>,
    /// Cycle decodes that produced nothing and were replaced by a lone EOS.
    pub empty_decodes: usize,
    pub base_fingerprint: String,
}

/// Yields index batches, reshuffling at every epoch boundary.
struct Batcher {
    order: Vec<usize>,
    pos: usize,
    rng: ChaCha8Rng,
}

impl Batcher {
    fn new(n: usize, seed: u64) -> Self {
        let mut b = Self {
            order: (0..n).collect(),
            pos: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        b.order.shuffle(&mut b.rng);
        b
    }

    fn next(&mut self, size: usize) -> Vec<usize> {
        if self.pos >= self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
        }
        let end = (self.pos + size).min(self.order.len());
        let batch = self.order[self.pos..end].to_vec();
        self.pos = end;
        batch
    }
}

/// Fine-tunes memory tokens and adapters on `pairs`; the base stays frozen.
pub fn train<T: Scalar>(
    params: &mut RevformerParams<T>,
    pairs: &[ContextQueryPair],
    tc: &TrainConfig,
) -> Result<TrainReport> {
    tc.validate()?;
    params.config.validate()?;
    if pairs.is_empty() {
        return Err(Error::usage("no training pairs"));
    }
    let encoded: Vec<EncodedPair> = pairs.iter().map(EncodedPair::new).collect();
    let flipped_need = |e: &EncodedPair| {
        let mut need = 0;
        if tc.weights.backward_weight > 0.0 {
            need = e.flipped_len();
        }
        if tc.weights.lambda_cycle > 0.0 {
            need = need.max(e.context.len() + e.cycle_budget().max(1) + 4);
        }
        need
    };
    for (p, e) in pairs.iter().zip(&encoded) {
        if flipped_need(e) > params.config.window {
            return Err(Error::usage(format!(
                "pair {} needs {} tokens in the backward direction, the window holds {}",
                p.id,
                flipped_need(e),
                params.config.window
            )));
        }
    }
    let total = tc.total_steps(pairs.len());
    let schedule = LrSchedule::new(tc.max_lr, tc.warmup_frac, total);
    let shapes: Vec<Vec<usize>> = params
        .trainable_mut()
        .iter()
        .map(|(_, t)| t.shape().to_vec())
        .collect();
    let mut opt = AdamW::<T>::new(&shapes, tc.beta1, tc.beta2, tc.weight_decay);
    let mut batches = Batcher::new(pairs.len(), tc.seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(tc.seed.wrapping_add(1));
    let mut report = TrainReport {
        base_fingerprint: params.base.fingerprint(),
        ..Default::default()
    };

    for step in 0..total {
        let lr = schedule.lr(step + 1);
        let batch = batches.next(tc.batch_size);
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape, false, true);
        let net = Net::new(&params.config, &bound);
        let mut sum = None;
        let mut log = StepLog {
            step: step + 1,
            lr,
            loss_fwd: 0.0,
            loss_bwd: 0.0,
            loss_cycle: 0.0,
            loss_total: 0.0,
        };
        for &i in &batch {
            let (loss, parts) = total_loss(&mut tape, &net, params, &encoded[i], &tc.weights, Some(&mut dropout_rng))?;
            sum = Some(match sum {
                None => loss,
                Some(s) => tape.add(s, loss)?,
            });
            log.loss_fwd += parts.forward;
            log.loss_bwd += parts.backward;
            log.loss_cycle += parts.cycle;
            report.empty_decodes += usize::from(parts.empty_decode);
        }
        let n = batch.len() as f64;
        let mean = tape.scale(sum.expect("non-empty batch"), 1.0 / n)?;
        log.loss_fwd /= n;
        log.loss_bwd /= n;
        log.loss_cycle /= n;
        log.loss_total = tape.value(mean).item().as_f64();

        let grads = tape.grad(mean)?;
        let mut g: Vec<Tensor<T>> = bound
            .trainable()
            .iter()
            .map(|(_, v)| grads.get(*v).cloned().expect("trainable leaf has a gradient"))
            .collect();
        drop(net);
        if let Some(max) = tc.grad_clip {
            clip_global_norm(&mut g, max);
        }
        let grad_refs: Vec<&Tensor<T>> = g.iter().collect();
        let mut targets: Vec<_> = params.trainable_mut().into_iter().map(|(_, t)| t).collect();
        opt.update(&mut targets, &grad_refs, lr);
        report.steps.push(log);
    }
    debug_assert_eq!(report.base_fingerprint, params.base.fingerprint());
    Ok(report)
}

/// Writes the per-step loss log as CSV.
pub fn write_loss_log(path: impl AsRef<Path>, steps: &[StepLog]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "{LOSS_LOG_HEADER}")?;
    for s in steps {
        writeln!(
            w,
            "{},{:e},{:.6},{:.6},{:.6},{:.6}",
            s.step, s.lr, s.loss_fwd, s.loss_bwd, s.loss_cycle, s.loss_total
        )?;
    }
    w.flush()?;
    Ok(())
}
