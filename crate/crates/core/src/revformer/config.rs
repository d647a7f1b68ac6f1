use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::hierpair::tokenizer::VOCAB_SIZE;

/// Numeric precision a model runs in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Precision {
    #[default]
    F32,
    F64,
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Precision::F32 => f.write_str("32"),
            Precision::F64 => f.write_str("64"),
        }
    }
}

impl FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "32" | "f32" => Ok(Precision::F32),
            "64" | "f64" => Ok(Precision::F64),
            other => Err(Error::usage(format!("precision must be 32 or 64, got {other:?}"))),
        }
    }
}

/// Architecture hyperparameters of the reversible decoder.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_heads: usize,
    /// Number of coupling blocks.
    pub n_layers: usize,
    pub ffn_dim: usize,
    /// Maximum tokens per segment, memory slots included.
    pub window: usize,
    /// Memory tokens per read/write group.
    pub mem_tokens: usize,
    pub adapter_rank: usize,
    pub adapter_scale: f64,
    pub dropout: f64,
    pub precision: Precision,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            vocab_size: VOCAB_SIZE,
            d_model: 128,
            n_heads: 4,
            n_layers: 4,
            ffn_dim: 512,
            window: 256,
            mem_tokens: 8,
            adapter_rank: 8,
            adapter_scale: 32.0,
            dropout: 0.1,
            precision: Precision::F32,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::usage(format!("invalid model config: {msg}")));
        if self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return fail(format!("d_model {} not divisible by n_heads {}", self.d_model, self.n_heads));
        }
        if self.mem_tokens == 0 {
            return fail("mem_tokens must be at least 1".into());
        }
        if self.window <= 2 * self.mem_tokens + 2 {
            return fail(format!("window {} must exceed 2·mem_tokens + 2", self.window));
        }
        if self.adapter_rank == 0 {
            return fail("adapter_rank must be at least 1".into());
        }
        if self.vocab_size == 0 || self.n_layers == 0 || self.ffn_dim == 0 {
            return fail("vocab_size, n_layers and ffn_dim must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    /// Content tokens that fit in one segment next to the read and write slots.
    pub fn segment_len(&self) -> usize {
        self.window - 2 * self.mem_tokens
    }

    /// Multiplier applied to the low-rank bottleneck output (α / r).
    pub fn adapter_scaling(&self) -> f64 {
        self.adapter_scale / self.adapter_rank as f64
    }

    /// Same model with a different segment window; the position table must
    /// still cover it.
    pub fn with_window(&self, window: usize) -> Self {
        Self {
            window,
            ..self.clone()
        }
    }

    /// `key=value` lines, one per field, in a fixed order.
    pub fn to_kv(&self) -> String {
        format!(
            "vocab_size={}\nd_model={}\nn_heads={}\nn_layers={}\nffn_dim={}\nwindow={}\nmem_tokens={}\nadapter_rank={}\nadapter_scale={}\ndropout={}\nprecision={}\n",
            self.vocab_size,
            self.d_model,
            self.n_heads,
            self.n_layers,
            self.ffn_dim,
            self.window,
            self.mem_tokens,
            self.adapter_rank,
            self.adapter_scale,
            self.dropout,
            self.precision,
        )
    }

    /// Parses `key=value` lines; missing keys keep their defaults, blank
    /// lines and `#` comments are skipped.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |msg: String| Error::Parse { line: i + 1, msg };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_err(format!("expected key=value, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            let int = || value.parse::<usize>().map_err(|e| parse_err(format!("{key}: {e}")));
            let real = || value.parse::<f64>().map_err(|e| parse_err(format!("{key}: {e}")));
            match key {
                "vocab_size" => cfg.vocab_size = int()?,
                "d_model" => cfg.d_model = int()?,
                "n_heads" => cfg.n_heads = int()?,
                "n_layers" => cfg.n_layers = int()?,
                "ffn_dim" => cfg.ffn_dim = int()?,
                "window" => cfg.window = int()?,
                "mem_tokens" => cfg.mem_tokens = int()?,
                "adapter_rank" => cfg.adapter_rank = int()?,
                "adapter_scale" => cfg.adapter_scale = real()?,
                "dropout" => cfg.dropout = real()?,
                "precision" => cfg.precision = value.parse().map_err(|e: Error| parse_err(e.to_string()))?,
                other => return Err(parse_err(format!("unknown key {other:?}"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
