use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use super::coupling::{couple, uncouple, StreamPair};
use super::decode::LayerKv;
use super::params::{Bound, BoundLayer, RevformerParams};
use crate::error::{Error, Result};
use crate::hierpair::tokenizer::EOS;
use crate::numcore::{Scalar, Tape, Tensor, Var};

/// Which of the two coupling functions an adapter belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    /// Frozen sublayer plus low-rank delta.
    F,
    /// Adapter-only bottleneck.
    G,
}

/// Generation direction: context → query, or query → context through the
/// inverted stack.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

impl std::str::FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fwd" | "forward" => Ok(Direction::Forward),
            "bwd" | "backward" => Ok(Direction::Backward),
            other => Err(Error::usage(format!("direction must be fwd or bwd, got {other:?}"))),
        }
    }
}

/// Per-segment memory activity recorded by a segmented pass.
#[derive(Clone, Debug, Default)]
pub struct SegmentTrace<T> {
    /// Read-slot inputs per segment; `None` for the first segment.
    pub read_inputs: Vec<Option<Arc<Tensor<T>>>>,
    /// Final-layer write-slot states per segment.
    pub write_outputs: Vec<Arc<Tensor<T>>>,
    /// Content length of each segment.
    pub lengths: Vec<usize>,
}

/// Content hidden states of a segmented pass, one row per input token.
pub struct SegmentedHidden<T> {
    pub hidden: Var,
    pub write_states: Arc<Tensor<T>>,
    pub trace: SegmentTrace<T>,
}

/// The reversible decoder bound to one tape.
pub struct Net<'a> {
    pub cfg: &'a ModelConfig,
    pub w: &'a Bound,
}

impl<'a> Net<'a> {
    pub fn new(cfg: &'a ModelConfig, w: &'a Bound) -> Self {
        Self { cfg, w }
    }

    /// Multi-head causal self-attention of one frozen layer. With a cache,
    /// the rows of `h` are appended after the cached keys and values.
    fn attention<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        l: &BoundLayer,
        h: Var,
        cache: Option<&mut LayerKv<T>>,
    ) -> Result<Var> {
        let q = tape.matmul(h, l.wq)?;
        let mut k = tape.matmul(h, l.wk)?;
        let mut v = tape.matmul(h, l.wv)?;
        if let Some(c) = cache {
            if let (Some(ck), Some(cv)) = (&c.keys, &c.values) {
                let ck = tape.leaf_shared(Arc::clone(ck), false);
                let cv = tape.leaf_shared(Arc::clone(cv), false);
                k = tape.concat_rows(&[ck, k])?;
                v = tape.concat_rows(&[cv, v])?;
            }
            c.keys = Some(tape.shared(k));
            c.values = Some(tape.shared(v));
        }
        let dh = self.cfg.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let mut heads = Vec::with_capacity(self.cfg.n_heads);
        for i in 0..self.cfg.n_heads {
            let qh = tape.slice_cols(q, i * dh, dh)?;
            let kh = tape.slice_cols(k, i * dh, dh)?;
            let vh = tape.slice_cols(v, i * dh, dh)?;
            let s = tape.matmul_nt(qh, kh)?;
            let s = tape.scale(s, scale)?;
            let p = tape.causal_softmax(s)?;
            heads.push(tape.matmul(p, vh)?);
        }
        let o = if heads.len() == 1 { heads[0] } else { tape.concat_cols(&heads)? };
        tape.matmul(o, l.wo)
    }

    /// Residual update of frozen layer `block`: attention then FFN, both pre-normed.
    pub fn sublayer<T: Scalar>(&self, tape: &mut Tape<T>, block: usize, x: Var) -> Result<Var> {
        self.sublayer_cached(tape, block, x, None)
    }

    fn sublayer_cached<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        block: usize,
        x: Var,
        cache: Option<&mut LayerKv<T>>,
    ) -> Result<Var> {
        let l = &self.w.layers[block];
        let h = tape.rms_norm(x, l.attn_norm)?;
        let a = self.attention(tape, l, h, cache)?;
        let mid = tape.add(x, a)?;
        let h2 = tape.rms_norm(mid, l.ffn_norm)?;
        let u = tape.matmul(h2, l.w1)?;
        let u = tape.add_row(u, l.b1)?;
        let u = tape.silu(u)?;
        let m = tape.matmul(u, l.w2)?;
        let m = tape.add_row(m, l.b2)?;
        tape.add(a, m)
    }

    /// `(α/r) · (x·A)·B`, with SiLU between the projections on the G stream
    /// and dropout on the bottleneck when an rng is supplied.
    pub fn adapter_delta<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        block: usize,
        stream: Stream,
        x: Var,
        dropout: Option<&mut ChaCha8Rng>,
    ) -> Result<Var> {
        let a = &self.w.adapters[block];
        let (down, up) = match stream {
            Stream::F => (a.f_down, a.f_up),
            Stream::G => (a.g_down, a.g_up),
        };
        let mut h = tape.matmul(x, down)?;
        if stream == Stream::G {
            h = tape.silu(h)?;
        }
        if let Some(rng) = dropout {
            if self.cfg.dropout > 0.0 {
                let mask = dropout_mask::<T>(tape.value(h).shape(), self.cfg.dropout, rng);
                let mask = tape.constant(mask);
                h = tape.mul(h, mask)?;
            }
        }
        let out = tape.matmul(h, up)?;
        tape.scale(out, self.cfg.adapter_scaling())
    }

    pub fn f_stream<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        block: usize,
        x: Var,
        dropout: Option<&mut ChaCha8Rng>,
    ) -> Result<Var> {
        self.f_stream_cached(tape, block, x, dropout, None)
    }

    pub(super) fn f_stream_cached<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        block: usize,
        x: Var,
        dropout: Option<&mut ChaCha8Rng>,
        cache: Option<&mut LayerKv<T>>,
    ) -> Result<Var> {
        let base = self.sublayer_cached(tape, block, x, cache)?;
        let delta = self.adapter_delta(tape, block, Stream::F, x, dropout)?;
        tape.add(base, delta)
    }

    pub fn g_stream<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        block: usize,
        x: Var,
        dropout: Option<&mut ChaCha8Rng>,
    ) -> Result<Var> {
        self.adapter_delta(tape, block, Stream::G, x, dropout)
    }

    fn check_pair<T: Scalar>(&self, tape: &Tape<T>, pair: StreamPair, block: usize) -> Result<()> {
        if block >= self.cfg.n_layers {
            return Err(Error::Index(format!("block {block} of {}", self.cfg.n_layers)));
        }
        let (a, b) = (tape.value(pair.first).shape(), tape.value(pair.second).shape());
        if a != b || a.len() != 2 || a[1] != self.cfg.d_model {
            return Err(Error::shape("coupling", format!("streams {a:?} and {b:?}")));
        }
        Ok(())
    }

    pub fn coupling_forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        pair: StreamPair,
        block: usize,
        mut dropout: Option<&mut ChaCha8Rng>,
    ) -> Result<StreamPair> {
        self.check_pair(tape, pair, block)?;
        let fx = self.f_stream(tape, block, pair.second, dropout.as_deref_mut())?;
        let y1 = tape.add(pair.first, fx)?;
        let gy = self.g_stream(tape, block, y1, dropout.as_deref_mut())?;
        let y2 = tape.add(pair.second, gy)?;
        Ok(StreamPair { first: y1, second: y2 })
    }

    /// Inverse of [`Net::coupling_forward`]; dropout is never applied here.
    pub fn coupling_inverse<T: Scalar>(&self, tape: &mut Tape<T>, pair: StreamPair, block: usize) -> Result<StreamPair> {
        self.check_pair(tape, pair, block)?;
        uncouple(
            tape,
            pair,
            |t, v| self.f_stream(t, block, v, None),
            |t, v| self.g_stream(t, block, v, None),
        )
    }

    /// Same as [`Net::coupling_forward`] without dropout, via the generic coupling.
    pub fn coupling_forward_eval<T: Scalar>(&self, tape: &mut Tape<T>, pair: StreamPair, block: usize) -> Result<StreamPair> {
        self.check_pair(tape, pair, block)?;
        couple(
            tape,
            pair,
            |t, v| self.f_stream(t, block, v, None),
            |t, v| self.g_stream(t, block, v, None),
        )
    }

    /// Token plus position embeddings, positions starting at `pos_start`.
    pub fn embed<T: Scalar>(&self, tape: &mut Tape<T>, ids: &[usize], pos_start: usize) -> Result<Var> {
        let max_pos = tape.value(self.w.pos_emb).rows();
        if pos_start + ids.len() > max_pos {
            return Err(Error::usage(format!(
                "{} positions from {pos_start} exceed the position table of {max_pos}",
                ids.len()
            )));
        }
        let tok = tape.gather_rows(self.w.tok_emb, ids)?;
        let positions: Vec<usize> = (pos_start..pos_start + ids.len()).collect();
        let pos = tape.gather_rows(self.w.pos_emb, &positions)?;
        tape.add(tok, pos)
    }

    /// Final norm and tied unembedding.
    pub fn readout<T: Scalar>(&self, tape: &mut Tape<T>, hidden: Var) -> Result<Var> {
        let h = tape.rms_norm(hidden, self.w.final_norm)?;
        tape.matmul_nt(h, self.w.tok_emb)
    }

    /// The plain decoder: no adapters, no memory slots. Equivalent to the
    /// coupling stack with every adapter output at zero.
    pub fn base_hidden<T: Scalar>(&self, tape: &mut Tape<T>, ids: &[usize]) -> Result<Var> {
        if ids.is_empty() {
            return Err(Error::usage("empty token sequence"));
        }
        let e = self.embed(tape, ids, 0)?;
        let mut first = e;
        for block in 0..self.cfg.n_layers {
            let f = self.sublayer(tape, block, e)?;
            first = tape.add(first, f)?;
        }
        StreamPair { first, second: e }.merge(tape)
    }

    /// Segmented forward pass with memory propagation. Returns hidden rows
    /// for content positions only, in input order.
    pub fn forward_hidden<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        ids: &[usize],
        mut dropout: Option<&mut ChaCha8Rng>,
    ) -> Result<SegmentedHidden<T>> {
        if ids.is_empty() {
            return Err(Error::usage("empty token sequence"));
        }
        let m = self.cfg.mem_tokens;
        let mut trace = SegmentTrace {
            read_inputs: Vec::new(),
            write_outputs: Vec::new(),
            lengths: Vec::new(),
        };
        let mut read: Option<Arc<Tensor<T>>> = None;
        let mut content = Vec::new();
        for chunk in ids.chunks(self.cfg.segment_len()) {
            let mut parts = Vec::with_capacity(3);
            let offset = match &read {
                Some(state) => {
                    parts.push(tape.leaf_shared(Arc::clone(state), false));
                    m
                }
                None => 0,
            };
            parts.push(self.embed(tape, chunk, offset)?);
            parts.push(self.w.memory);
            let e = tape.concat_rows(&parts)?;
            let mut pair = StreamPair::duplicated(e);
            for block in 0..self.cfg.n_layers {
                pair = self.coupling_forward(tape, pair, block, dropout.as_deref_mut())?;
            }
            let h = pair.merge(tape)?;
            content.push(tape.slice_rows(h, offset, chunk.len())?);
            let write = tape.slice_rows(h, offset + chunk.len(), m)?;
            let state = tape.shared(write);
            trace.read_inputs.push(read.take());
            trace.write_outputs.push(Arc::clone(&state));
            trace.lengths.push(chunk.len());
            read = Some(state);
        }
        let hidden = if content.len() == 1 { content[0] } else { tape.concat_rows(&content)? };
        Ok(SegmentedHidden {
            hidden,
            write_states: read.expect("at least one segment"),
            trace,
        })
    }

    /// Inverse execution: blocks in reverse order, each applying the
    /// inversion map, on a single window without memory slots.
    pub fn flipped_hidden<T: Scalar>(&self, tape: &mut Tape<T>, ids: &[usize]) -> Result<Var> {
        if ids.is_empty() {
            return Err(Error::usage("empty token sequence"));
        }
        if ids.len() > self.cfg.window {
            return Err(Error::usage(format!(
                "backward pass of {} tokens exceeds the window of {}",
                ids.len(),
                self.cfg.window
            )));
        }
        let e = self.embed(tape, ids, 0)?;
        let mut pair = StreamPair::duplicated(e);
        for block in (0..self.cfg.n_layers).rev() {
            pair = self.coupling_inverse(tape, pair, block)?;
        }
        pair.merge(tape)
    }
}

fn dropout_mask<T: Scalar>(shape: &[usize], p: f64, rng: &mut ChaCha8Rng) -> Tensor<T> {
    let keep = T::of(1.0 / (1.0 - p));
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| if rng.gen::<f64>() < p { T::zero() } else { keep })
        .collect();
    Tensor::new(shape.to_vec(), data).expect("mask shape")
}

/// Logits of a segmented forward pass, plus the final write states.
pub struct SegmentedOutput<T> {
    pub logits: Tensor<T>,
    pub write_states: Tensor<T>,
    pub trace: SegmentTrace<T>,
}

fn eval_config<T: Scalar>(params: &RevformerParams<T>, cfg: &ModelConfig) -> Result<()> {
    cfg.validate()?;
    if cfg.window > params.max_positions() {
        return Err(Error::usage(format!(
            "window {} exceeds the {} trained positions",
            cfg.window,
            params.max_positions()
        )));
    }
    Ok(())
}

/// Forward pass in evaluation mode with an explicit (possibly narrower) window.
pub fn forward_segmented_with<T: Scalar>(
    params: &RevformerParams<T>,
    cfg: &ModelConfig,
    tokens: &[usize],
) -> Result<SegmentedOutput<T>> {
    eval_config(params, cfg)?;
    let mut tape = Tape::new();
    let w = params.bind(&mut tape, false, false);
    let net = Net::new(cfg, &w);
    let out = net.forward_hidden(&mut tape, tokens, None)?;
    let logits = net.readout(&mut tape, out.hidden)?;
    Ok(SegmentedOutput {
        logits: tape.value(logits).clone(),
        write_states: (*out.write_states).clone(),
        trace: out.trace,
    })
}

pub fn forward_segmented<T: Scalar>(params: &RevformerParams<T>, tokens: &[usize]) -> Result<SegmentedOutput<T>> {
    forward_segmented_with(params, &params.config, tokens)
}

/// Logits of the inverted stack.
pub fn flipped_forward<T: Scalar>(params: &RevformerParams<T>, tokens: &[usize]) -> Result<Tensor<T>> {
    let mut tape = Tape::new();
    let w = params.bind(&mut tape, false, false);
    let net = Net::new(&params.config, &w);
    let h = net.flipped_hidden(&mut tape, tokens)?;
    let logits = net.readout(&mut tape, h)?;
    Ok(tape.value(logits).clone())
}

/// Logits of the frozen plain decoder.
pub fn base_logits<T: Scalar>(params: &RevformerParams<T>, tokens: &[usize]) -> Result<Tensor<T>> {
    let mut tape = Tape::new();
    let w = params.bind(&mut tape, false, false);
    let net = Net::new(&params.config, &w);
    let h = net.base_hidden(&mut tape, tokens)?;
    let logits = net.readout(&mut tape, h)?;
    Ok(tape.value(logits).clone())
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn last_logits<T: Scalar>(params: &RevformerParams<T>, direction: Direction, seq: &[usize]) -> Result<Vec<T>> {
    let mut tape = Tape::new();
    let w = params.bind(&mut tape, false, false);
    let net = Net::new(&params.config, &w);
    let h = match direction {
        Direction::Forward => net.forward_hidden(&mut tape, seq, None)?.hidden,
        Direction::Backward => net.flipped_hidden(&mut tape, seq)?,
    };
    let last = tape.slice_rows(h, seq.len() - 1, 1)?;
    let logits = net.readout(&mut tape, last)?;
    Ok(tape.value(logits).data().to_vec())
}

/// Greedy decoding that recomputes the whole sequence for every token.
/// Slow; kept as the reference the cached decoder is checked against.
pub fn generate_uncached<T: Scalar>(
    params: &RevformerParams<T>,
    direction: Direction,
    prompt: &[usize],
    max_len: usize,
) -> Result<Vec<usize>> {
    if prompt.is_empty() {
        return Err(Error::usage("generation needs a non-empty prompt"));
    }
    let mut seq = prompt.to_vec();
    let mut out = Vec::new();
    while out.len() < max_len {
        if direction == Direction::Backward && seq.len() >= params.config.window {
            break;
        }
        let next = argmax(&last_logits(params, direction, &seq)?);
        if next == EOS {
            break;
        }
        out.push(next);
        seq.push(next);
    }
    Ok(out)
}
