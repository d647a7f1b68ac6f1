//! Binary checkpoint format.
//!
//! ```text
//! "R3M1" | version u32 LE | config_len u32 LE | config (UTF-8 key=value lines)
//! repeated until EOF, sorted by name:
//!   name_len u32 | name | rank u32 | dims u32 × rank | values f32 LE
//! ```

use std::fs;
use std::path::Path;

use super::config::ModelConfig;
use super::params::RevformerParams;
use crate::error::{Error, Result};
use crate::numcore::{Scalar, Tensor};

pub const MAGIC: &[u8; 4] = b"R3M1";
pub const VERSION: u32 = 1;

pub fn encode<T: Scalar>(params: &RevformerParams<T>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let cfg = params.config.to_kv();
    out.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
    out.extend_from_slice(cfg.as_bytes());
    for (name, t) in params.named() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format(format!("truncated checkpoint while reading {what}")))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

pub fn decode<T: Scalar>(bytes: &[u8]) -> Result<RevformerParams<T>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic").ok() != Some(MAGIC.as_slice()) {
        return Err(Error::Format("bad checkpoint magic, expected R3M1".into()));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let cfg_len = r.u32("config length")? as usize;
    let cfg_text = std::str::from_utf8(r.take(cfg_len, "config")?)
        .map_err(|e| Error::Format(format!("config block is not UTF-8: {e}")))?;
    let config = ModelConfig::from_kv(cfg_text)?;
    let mut arrays = Vec::new();
    while !r.done() {
        let name_len = r.u32("name length")? as usize;
        let name = std::str::from_utf8(r.take(name_len, "name")?)
            .map_err(|e| Error::Format(format!("array name is not UTF-8: {e}")))?
            .to_string();
        let rank = r.u32("rank")? as usize;
        let dims = (0..rank)
            .map(|_| r.u32("dims").map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n: usize = dims.iter().product();
        let raw = r.take(n * 4, &name)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| T::of(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
            .collect();
        arrays.push((name, Tensor::new(dims, data)?));
    }
    RevformerParams::from_named(config, arrays)
}

pub fn save<T: Scalar>(params: &RevformerParams<T>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode(params))?;
    Ok(())
}

pub fn load<T: Scalar>(path: impl AsRef<Path>) -> Result<RevformerParams<T>> {
    decode(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> RevformerParams<f32> {
        let cfg = ModelConfig {
            d_model: 8,
            n_heads: 2,
            n_layers: 1,
            ffn_dim: 16,
            window: 24,
            mem_tokens: 2,
            ..Default::default()
        };
        RevformerParams::random(cfg, 9).unwrap()
    }

    #[test]
    fn roundtrip_is_exact_for_f32() {
        let p = tiny();
        let bytes = encode(&p);
        assert_eq!(&bytes[..4], b"R3M1");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        let q: RevformerParams<f32> = decode(&bytes).unwrap();
        assert_eq!(p, q);
        assert_eq!(encode(&q), bytes);
    }

    #[test]
    fn corrupt_magic_is_a_format_error() {
        let mut bytes = encode(&tiny());
        bytes[0] = b'X';
        assert!(matches!(decode::<f32>(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn truncation_is_a_format_error() {
        let bytes = encode(&tiny());
        let cut = &bytes[..bytes.len() - 3];
        assert!(matches!(decode::<f32>(cut), Err(Error::Format(_))));
    }

    #[test]
    fn first_array_header_is_laid_out_as_documented() {
        let p = tiny();
        let bytes = encode(&p);
        let cfg_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let cfg = std::str::from_utf8(&bytes[12..12 + cfg_len]).unwrap();
        assert!(cfg.contains("d_model=8\n"));
        let at = 12 + cfg_len;
        let name_len = u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
        let name = std::str::from_utf8(&bytes[at + 4..at + 4 + name_len]).unwrap();
        assert_eq!(name, p.named()[0].0);
    }
}
