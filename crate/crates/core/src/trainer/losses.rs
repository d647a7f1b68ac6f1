use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::hierpair::tokenizer::{prompt, tokenize, training_sequence, EOS};
use crate::hierpair::{ContextQueryPair, Level};
use crate::numcore::{Scalar, Tape, Var};
use crate::revformer::{generate, Direction, Net, RevformerParams};

/// Longest greedy decode used for the cycle term.
pub const CYCLE_DECODE_CAP: usize = 64;

/// Coefficients of the three-term objective.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub lambda_cycle: f64,
    /// 1 for the full objective; 0 drops the backward term (ablation).
    pub backward_weight: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_cycle: 0.5,
            backward_weight: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_cycle < 0.0 || self.backward_weight < 0.0 {
            return Err(Error::usage("loss weights must be non-negative"));
        }
        Ok(())
    }

    pub fn combine(&self, forward: f64, backward: f64, cycle: f64) -> f64 {
        forward + self.backward_weight * backward + self.lambda_cycle * cycle
    }
}

/// A pair already turned into token ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedPair {
    pub level: Level,
    pub context: Vec<usize>,
    pub query: Vec<usize>,
}

impl EncodedPair {
    pub fn new(pair: &ContextQueryPair) -> Self {
        Self {
            level: pair.level,
            context: tokenize(&pair.context),
            query: tokenize(&pair.query),
        }
    }

    /// `⌈1.25 · |q|⌉`, capped.
    pub fn cycle_budget(&self) -> usize {
        (self.query.len() * 5).div_ceil(4).min(CYCLE_DECODE_CAP)
    }

    /// Tokens the flipped model sees for this pair; it has to fit one window.
    pub fn flipped_len(&self) -> usize {
        self.query.len() + self.context.len() + 4
    }
}

/// Mean NLL of `second ⊕ EOS` given `BOS ⊕ tag ⊕ first ⊕ SEP`, under either
/// the segmented forward model or the flipped model.
fn conditional_nll<T: Scalar>(
    tape: &mut Tape<T>,
    net: &Net,
    direction: Direction,
    level: Level,
    first: &[usize],
    second: &[usize],
    dropout: Option<&mut ChaCha8Rng>,
) -> Result<Var> {
    if second.is_empty() {
        return Err(Error::usage("no target tokens to score"));
    }
    let (seq, sep) = training_sequence(level, first, second);
    let hidden = match direction {
        Direction::Forward => net.forward_hidden(tape, &seq, dropout)?.hidden,
        Direction::Backward => net.flipped_hidden(tape, &seq)?,
    };
    let rows = tape.slice_rows(hidden, sep, seq.len() - 1 - sep)?;
    let logits = net.readout(tape, rows)?;
    tape.cross_entropy(logits, &seq[sep + 1..])
}

/// Mean NLL of the query tokens (and EOS) given the context.
pub fn forward_loss<T: Scalar>(
    tape: &mut Tape<T>,
    net: &Net,
    pair: &EncodedPair,
    dropout: Option<&mut ChaCha8Rng>,
) -> Result<Var> {
    conditional_nll(tape, net, Direction::Forward, pair.level, &pair.context, &pair.query, dropout)
}

/// Mean NLL of the context tokens (and EOS) given the query, flipped model.
pub fn backward_loss<T: Scalar>(tape: &mut Tape<T>, net: &Net, pair: &EncodedPair) -> Result<Var> {
    conditional_nll(tape, net, Direction::Backward, pair.level, &pair.query, &pair.context, None)
}

/// Result of the cycle term: the loss and the decoded compression it used.
pub struct CycleTerm {
    pub loss: Var,
    pub decoded: Vec<usize>,
    /// The forward decode stopped immediately; a lone EOS stood in for it.
    pub empty_decode: bool,
}

/// Decodes `f(c)` greedily with the current parameters (no gradient), then
/// scores reconstructing `c` from it with the flipped model.
pub fn cycle_loss<T: Scalar>(
    tape: &mut Tape<T>,
    net: &Net,
    params: &RevformerParams<T>,
    level: Level,
    context: &[usize],
    decode_budget: usize,
) -> Result<CycleTerm> {
    if context.is_empty() {
        return Err(Error::usage("cycle loss needs a non-empty context"));
    }
    let decoded = generate(params, Direction::Forward, &prompt(level, context), decode_budget)?;
    let empty_decode = decoded.is_empty();
    let synthetic = EncodedPair {
        level,
        context: context.to_vec(),
        query: if empty_decode { vec![EOS] } else { decoded.clone() },
    };
    let loss = backward_loss(tape, net, &synthetic)?;
    Ok(CycleTerm {
        loss,
        decoded,
        empty_decode,
    })
}

/// Per-term values of one pair's objective.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossParts {
    pub forward: f64,
    pub backward: f64,
    pub cycle: f64,
    pub total: f64,
    pub empty_decode: bool,
}

/// `L_fwd + w_bwd·L_bwd + λ·L_cycle` on the tape. Terms with zero weight
/// are skipped and reported as 0.
pub fn total_loss<T: Scalar>(
    tape: &mut Tape<T>,
    net: &Net,
    params: &RevformerParams<T>,
    pair: &EncodedPair,
    weights: &LossWeights,
    dropout: Option<&mut ChaCha8Rng>,
) -> Result<(Var, LossParts)> {
    let fwd = forward_loss(tape, net, pair, dropout)?;
    let mut parts = LossParts {
        forward: tape.value(fwd).item().as_f64(),
        ..Default::default()
    };
    let mut total = fwd;
    if weights.backward_weight > 0.0 {
        let bwd = backward_loss(tape, net, pair)?;
        parts.backward = tape.value(bwd).item().as_f64();
        let scaled = tape.scale(bwd, weights.backward_weight)?;
        total = tape.add(total, scaled)?;
    }
    if weights.lambda_cycle > 0.0 {
        let cyc = cycle_loss(tape, net, params, pair.level, &pair.context, pair.cycle_budget())?;
        parts.cycle = tape.value(cyc.loss).item().as_f64();
        parts.empty_decode = cyc.empty_decode;
        let scaled = tape.scale(cyc.loss, weights.lambda_cycle)?;
        total = tape.add(total, scaled)?;
    }
    parts.total = tape.value(total).item().as_f64();
    Ok((total, parts))
}

/// Evaluation-mode NLL sums: `(Σ nll, token count)` for one direction.
pub fn nll_sum<T: Scalar>(params: &RevformerParams<T>, pair: &EncodedPair, direction: Direction) -> Result<(f64, usize)> {
    let mut tape = Tape::new();
    let w = params.bind(&mut tape, false, false);
    let net = Net::new(&params.config, &w);
    let (first, second) = match direction {
        Direction::Forward => (&pair.context, &pair.query),
        Direction::Backward => (&pair.query, &pair.context),
    };
    let loss = conditional_nll(&mut tape, &net, direction, pair.level, first, second, None)?;
    let n = second.len() + 1;
    Ok((tape.value(loss).item().as_f64() * n as f64, n))
}
