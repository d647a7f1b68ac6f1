//! Hierarchical context–query pairs: decomposition, length filtering,
//! tokenization and JSONL storage.

pub mod decompose;
mod pairs;
pub mod tokenizer;

use std::fmt;
use std::str::FromStr;

pub use decompose::{decompose, Decomposition, Paragraph, Sentence};
pub use pairs::{
    build_dataset, build_pairs, load_documents, read_pairs, write_pairs, BuildMeta, ContextQueryPair, FilterThresholds,
    PairDataset,
};

use crate::error::{Error, Result};

/// Granularity of a pair: which unit is the context and which the query.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Level {
    /// Document → paragraph.
    D2p,
    /// Paragraph → sentence.
    P2s,
    /// Sentence → entities.
    S2e,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::D2p, Level::P2s, Level::S2e];

    pub fn as_str(self) -> &'static str {
        match self {
            Level::D2p => "d2p",
            Level::P2s => "p2s",
            Level::S2e => "s2e",
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "d2p" => Ok(Level::D2p),
            "p2s" => Ok(Level::P2s),
            "s2e" => Ok(Level::S2e),
            other => Err(Error::usage(format!("unknown level {other:?}"))),
        }
    }
}
