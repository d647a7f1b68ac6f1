//! Additive two-stream coupling.
//!
//! `y1 = x1 + F(x2)`, `y2 = x2 + G(y1)`. The inverse recovers `x2` first,
//! because `G` only needs the known `y1`, then `x1 = y1 − F(x2)`.

use crate::error::Result;
use crate::numcore::{Scalar, Tape, Var};

/// The pair of activation streams flowing through the coupling stack.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StreamPair {
    pub first: Var,
    pub second: Var,
}

impl StreamPair {
    /// Both streams start from the same embedding.
    pub fn duplicated(x: Var) -> Self {
        Self { first: x, second: x }
    }

    /// `(first + second) / 2`, the readout of the two streams.
    pub fn merge<T: Scalar>(self, tape: &mut Tape<T>) -> Result<Var> {
        let s = tape.add(self.first, self.second)?;
        tape.scale(s, 0.5)
    }
}

pub fn couple<T, F, G>(tape: &mut Tape<T>, x: StreamPair, mut f: F, mut g: G) -> Result<StreamPair>
where
    T: Scalar,
    F: FnMut(&mut Tape<T>, Var) -> Result<Var>,
    G: FnMut(&mut Tape<T>, Var) -> Result<Var>,
{
    let fx = f(tape, x.second)?;
    let y1 = tape.add(x.first, fx)?;
    let gy = g(tape, y1)?;
    let y2 = tape.add(x.second, gy)?;
    Ok(StreamPair { first: y1, second: y2 })
}

pub fn uncouple<T, F, G>(tape: &mut Tape<T>, y: StreamPair, mut f: F, mut g: G) -> Result<StreamPair>
where
    T: Scalar,
    F: FnMut(&mut Tape<T>, Var) -> Result<Var>,
    G: FnMut(&mut Tape<T>, Var) -> Result<Var>,
{
    let gy = g(tape, y.first)?;
    let x2 = tape.sub(y.second, gy)?;
    let fx = f(tape, x2)?;
    let x1 = tape.sub(y.first, fx)?;
    Ok(StreamPair { first: x1, second: x2 })
}
