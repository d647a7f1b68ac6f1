use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::decompose::decompose;
use super::tokenizer::tokenize;
use super::Level;
use crate::error::{Error, Result};

/// One ⟨context, query⟩ training unit.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContextQueryPair {
    pub id: String,
    pub level: Level,
    pub context: String,
    pub query: String,
}

/// Minimum unit lengths, as fractions of the document's token length.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FilterThresholds {
    pub min_para_frac: f64,
    pub min_sent_frac: f64,
}

impl Default for FilterThresholds {
    fn default() -> Self {
        Self {
            min_para_frac: 0.20,
            min_sent_frac: 0.04,
        }
    }
}

impl FilterThresholds {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("min_para_frac", self.min_para_frac), ("min_sent_frac", self.min_sent_frac)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::usage(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }

    /// Inclusive: a unit exactly at the threshold is kept.
    pub fn keeps(frac: f64, unit_len: usize, doc_len: usize) -> bool {
        unit_len as f64 + 1e-9 >= frac * doc_len as f64
    }
}

/// Provenance of a built dataset. Not stored in the pair file.
#[derive(Clone, Debug, PartialEq)]
pub struct BuildMeta {
    /// SHA-256 over document ids and texts.
    pub corpus_fingerprint: String,
    pub thresholds: FilterThresholds,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PairDataset {
    pub pairs: Vec<ContextQueryPair>,
    pub meta: Option<BuildMeta>,
}

impl PairDataset {
    pub fn count(&self, level: Level) -> usize {
        self.pairs.iter().filter(|p| p.level == level).count()
    }

    /// `(N, M, K)`: document–paragraph, paragraph–sentence, sentence–entity counts.
    pub fn counts(&self) -> (usize, usize, usize) {
        (self.count(Level::D2p), self.count(Level::P2s), self.count(Level::S2e))
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Pairs for one document: ⟨d,p⟩ per retained paragraph, ⟨p,s⟩ per retained
/// sentence, ⟨s,e⟩ per retained sentence that has entities.
pub fn build_pairs(doc_id: &str, doc: &str, th: FilterThresholds) -> Vec<ContextQueryPair> {
    let doc = doc.trim();
    let d = decompose(doc);
    let doc_len = tokenize(doc).len();
    let mut d2p = Vec::new();
    let mut p2s = Vec::new();
    let mut s2e = Vec::new();
    let pair = |level: Level, k: usize, context: &str, query: String| ContextQueryPair {
        id: format!("{doc_id}/{level}/{k:03}"),
        level,
        context: context.to_string(),
        query,
    };
    for p in &d.paragraphs {
        if FilterThresholds::keeps(th.min_para_frac, tokenize(&p.text).len(), doc_len) {
            d2p.push(pair(Level::D2p, d2p.len(), doc, p.text.clone()));
        }
        for s in &p.sentences {
            if !FilterThresholds::keeps(th.min_sent_frac, tokenize(&s.text).len(), doc_len) {
                continue;
            }
            p2s.push(pair(Level::P2s, p2s.len(), &p.text, s.text.clone()));
            if !s.entities.is_empty() {
                s2e.push(pair(Level::S2e, s2e.len(), &s.text, s.entities.join(", ")));
            }
        }
    }
    d2p.into_iter().chain(p2s).chain(s2e).collect()
}

/// Builds all documents and groups the pairs by level.
pub fn build_dataset(docs: &[(String, String)], th: FilterThresholds) -> Result<PairDataset> {
    th.validate()?;
    let mut all: Vec<ContextQueryPair> = docs.iter().flat_map(|(id, text)| build_pairs(id, text, th)).collect();
    all.sort_by_key(|p| p.level);
    let mut h = Sha256::new();
    for (id, text) in docs {
        h.update((id.len() as u64).to_le_bytes());
        h.update(id.as_bytes());
        h.update((text.len() as u64).to_le_bytes());
        h.update(text.as_bytes());
    }
    Ok(PairDataset {
        pairs: all,
        meta: Some(BuildMeta {
            corpus_fingerprint: hex::encode(h.finalize()),
            thresholds: th,
        }),
    })
}

/// A file is one document; a directory contributes every `.txt` file in
/// name order, keyed by file stem.
pub fn load_documents(path: impl AsRef<Path>) -> Result<Vec<(String, String)>> {
    let path = path.as_ref();
    let stem = |p: &Path| p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    if path.is_file() {
        return Ok(vec![(stem(path), fs::read_to_string(path)?)]);
    }
    let mut files: Vec<_> = fs::read_dir(path)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "txt"))
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| Ok((stem(&p), fs::read_to_string(&p)?)))
        .collect()
}

#[derive(Serialize, Deserialize)]
struct PairRecord<'a> {
    id: std::borrow::Cow<'a, str>,
    level: std::borrow::Cow<'a, str>,
    context: std::borrow::Cow<'a, str>,
    query: std::borrow::Cow<'a, str>,
}

/// One JSON object per line: `{"id","level","context","query"}`.
pub fn write_pairs(path: impl AsRef<Path>, ds: &PairDataset) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for p in &ds.pairs {
        let rec = PairRecord {
            id: p.id.as_str().into(),
            level: p.level.as_str().into(),
            context: p.context.as_str().into(),
            query: p.query.as_str().into(),
        };
        let line = serde_json::to_string(&rec).map_err(|e| Error::Format(e.to_string()))?;
        w.write_all(line.as_bytes())?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_pairs(path: impl AsRef<Path>) -> Result<PairDataset> {
    let r = BufReader::new(fs::File::open(path)?);
    let mut pairs = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PairRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: n,
            msg: e.to_string(),
        })?;
        let level: Level = rec.level.parse().map_err(|_| Error::Parse {
            line: n,
            msg: format!("invalid level {:?}", rec.level),
        })?;
        for (field, v) in [("id", &rec.id), ("context", &rec.context), ("query", &rec.query)] {
            if v.is_empty() {
                return Err(Error::Parse {
                    line: n,
                    msg: format!("empty {field}"),
                });
            }
        }
        pairs.push(ContextQueryPair {
            id: rec.id.into_owned(),
            level,
            context: rec.context.into_owned(),
            query: rec.query.into_owned(),
        });
    }
    Ok(PairDataset { pairs, meta: None })
}
