//! Greedy decoding that keeps each block's attention keys and values, so a
//! new token costs one row per block instead of a full pass.

use std::sync::Arc;

use super::coupling::StreamPair;
use super::model::{argmax, Direction, Net};
use super::params::RevformerParams;
use crate::error::{Error, Result};
use crate::hierpair::tokenizer::EOS;
use crate::numcore::{Scalar, Tape, Tensor};

/// Cached keys and values of one block's attention, all heads side by side.
#[derive(Clone, Debug)]
pub(super) struct LayerKv<T> {
    pub keys: Option<Arc<Tensor<T>>>,
    pub values: Option<Arc<Tensor<T>>>,
}

impl<T> Default for LayerKv<T> {
    fn default() -> Self {
        Self { keys: None, values: None }
    }
}

enum Rows<'a, T> {
    Tokens(&'a [usize], usize),
    Read(Arc<Tensor<T>>),
    Memory,
}

/// Feeds tokens one or more at a time and returns next-token logits.
/// Forward decoding crosses segment boundaries the same way the segmented
/// pass does; backward decoding is confined to one window.
pub struct IncrementalDecoder<'p, T> {
    params: &'p RevformerParams<T>,
    direction: Direction,
    cache: Vec<LayerKv<T>>,
    read_rows: usize,
    content: usize,
    last_merged: Option<Arc<Tensor<T>>>,
}

impl<'p, T: Scalar> IncrementalDecoder<'p, T> {
    pub fn new(params: &'p RevformerParams<T>, direction: Direction) -> Self {
        Self {
            params,
            direction,
            cache: vec![LayerKv::default(); params.config.n_layers],
            read_rows: 0,
            content: 0,
            last_merged: None,
        }
    }

    /// Tokens fed so far in the current window.
    pub fn window_fill(&self) -> usize {
        self.read_rows + self.content
    }

    /// Appends `ids` and returns the logits after the last of them.
    pub fn push(&mut self, ids: &[usize]) -> Result<Vec<T>> {
        if ids.is_empty() {
            return Err(Error::usage("nothing to decode from"));
        }
        let cfg = &self.params.config;
        if self.direction == Direction::Backward {
            if self.content + ids.len() > cfg.window {
                return Err(Error::usage(format!(
                    "backward pass of {} tokens exceeds the window of {}",
                    self.content + ids.len(),
                    cfg.window
                )));
            }
            let pos = self.content;
            self.content += ids.len();
            return Ok(self.run(Rows::Tokens(ids, pos), true)?.expect("logits"));
        }
        let seg = cfg.segment_len();
        let mut rest = ids;
        let mut logits = None;
        while !rest.is_empty() {
            if self.content == seg {
                let write = self.run(Rows::Memory, false)?;
                debug_assert!(write.is_none());
                let state = self.last_merged.take().expect("write states");
                self.cache.iter_mut().for_each(|c| *c = LayerKv::default());
                self.content = 0;
                self.read_rows = cfg.mem_tokens;
                self.run(Rows::Read(state), false)?;
            }
            let k = rest.len().min(seg - self.content);
            let pos = self.read_rows + self.content;
            self.content += k;
            logits = self.run(Rows::Tokens(&rest[..k], pos), k == rest.len())?;
            rest = &rest[k..];
        }
        Ok(logits.expect("logits"))
    }

    fn run(&mut self, rows: Rows<T>, want_logits: bool) -> Result<Option<Vec<T>>> {
        let params = self.params;
        let mut tape = Tape::for_decoding();
        let w = params.bind(&mut tape, false, false);
        let net = Net::new(&params.config, &w);
        let x = match rows {
            Rows::Tokens(ids, pos) => net.embed(&mut tape, ids, pos)?,
            Rows::Read(state) => tape.leaf_shared(state, false),
            Rows::Memory => w.memory,
        };
        let mut pair = StreamPair::duplicated(x);
        let n = params.config.n_layers;
        match self.direction {
            Direction::Forward => {
                for block in 0..n {
                    let fx = net.f_stream_cached(&mut tape, block, pair.second, None, Some(&mut self.cache[block]))?;
                    let y1 = tape.add(pair.first, fx)?;
                    let gy = net.g_stream(&mut tape, block, y1, None)?;
                    let y2 = tape.add(pair.second, gy)?;
                    pair = StreamPair { first: y1, second: y2 };
                }
            }
            Direction::Backward => {
                for block in (0..n).rev() {
                    let gy = net.g_stream(&mut tape, block, pair.first, None)?;
                    let x2 = tape.sub(pair.second, gy)?;
                    let fx = net.f_stream_cached(&mut tape, block, x2, None, Some(&mut self.cache[block]))?;
                    let x1 = tape.sub(pair.first, fx)?;
                    pair = StreamPair { first: x1, second: x2 };
                }
            }
        }
        let h = pair.merge(&mut tape)?;
        if !want_logits {
            self.last_merged = Some(tape.shared(h));
            return Ok(None);
        }
        let rows = tape.value(h).rows();
        let last = tape.slice_rows(h, rows - 1, 1)?;
        let logits = net.readout(&mut tape, last)?;
        Ok(Some(tape.value(logits).data().to_vec()))
    }
}

/// Greedy decoding. Returns the continuation without the prompt and
/// without the terminating EOS. Backward decoding also stops when the
/// window is full.
pub fn generate<T: Scalar>(
    params: &RevformerParams<T>,
    direction: Direction,
    prompt: &[usize],
    max_len: usize,
) -> Result<Vec<usize>> {
    if prompt.is_empty() {
        return Err(Error::usage("generation needs a non-empty prompt"));
    }
    let full = |len: usize| direction == Direction::Backward && len >= params.config.window;
    let mut out = Vec::new();
    if max_len == 0 || full(prompt.len()) {
        return Ok(out);
    }
    let mut dec = IncrementalDecoder::new(params, direction);
    let mut logits = dec.push(prompt)?;
    loop {
        let next = argmax(&logits);
        if next == EOS {
            break;
        }
        out.push(next);
        if out.len() >= max_len || full(prompt.len() + out.len()) {
            break;
        }
        logits = dec.push(&[next])?;
    }
    Ok(out)
}
