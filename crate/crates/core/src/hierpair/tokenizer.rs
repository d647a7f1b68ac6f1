//! Byte-level tokenizer with a handful of control ids above the byte range.

use super::Level;

pub const PAD: usize = 256;
pub const BOS: usize = 257;
pub const EOS: usize = 258;
pub const SEP: usize = 259;
pub const D2P: usize = 260;
pub const P2S: usize = 261;
pub const S2E: usize = 262;
pub const VOCAB_SIZE: usize = 263;

pub fn tokenize(text: &str) -> Vec<usize> {
    text.bytes().map(usize::from).collect()
}

/// Decodes byte ids; control ids are dropped and invalid UTF-8 becomes U+FFFD.
pub fn detokenize(ids: &[usize]) -> String {
    let bytes: Vec<u8> = ids.iter().filter(|&&id| id < 256).map(|&id| id as u8).collect();
    String::from_utf8_lossy(&bytes).into_owned()
}

pub fn level_tag(level: Level) -> usize {
    match level {
        Level::D2p => D2P,
        Level::P2s => P2S,
        Level::S2e => S2E,
    }
}

/// `BOS ⊕ tag ⊕ first ⊕ SEP`.
pub fn prompt(level: Level, first: &[usize]) -> Vec<usize> {
    let mut seq = Vec::with_capacity(first.len() + 3);
    seq.push(BOS);
    seq.push(level_tag(level));
    seq.extend_from_slice(first);
    seq.push(SEP);
    seq
}

/// `BOS ⊕ tag ⊕ first ⊕ SEP ⊕ second ⊕ EOS`, plus the index of SEP.
pub fn training_sequence(level: Level, first: &[usize], second: &[usize]) -> (Vec<usize>, usize) {
    let mut seq = prompt(level, first);
    let sep = seq.len() - 1;
    seq.extend_from_slice(second);
    seq.push(EOS);
    (seq, sep)
}
