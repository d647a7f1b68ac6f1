use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::numcore::{Scalar, Tape, Tensor, Var};

/// Standard deviation for memory-token initialization.
pub const MEMORY_INIT_STD: f64 = 0.02;
const BASE_INIT_STD: f64 = 0.02;

type Shared<T> = Arc<Tensor<T>>;

/// Frozen weights of one transformer sublayer stack.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerWeights<T> {
    pub attn_norm: Shared<T>,
    pub wq: Shared<T>,
    pub wk: Shared<T>,
    pub wv: Shared<T>,
    pub wo: Shared<T>,
    pub ffn_norm: Shared<T>,
    pub w1: Shared<T>,
    pub b1: Shared<T>,
    pub w2: Shared<T>,
    pub b2: Shared<T>,
}

/// The pretrained decoder. Token embeddings double as the output head.
#[derive(Clone, Debug, PartialEq)]
pub struct BaseWeights<T> {
    pub tok_emb: Shared<T>,
    pub pos_emb: Shared<T>,
    pub layers: Vec<LayerWeights<T>>,
    pub final_norm: Shared<T>,
}

/// Low-rank adapters of one coupling block: the F-stream delta added to
/// the frozen sublayer and the G-stream bottleneck.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockAdapter<T> {
    pub f_down: Shared<T>,
    pub f_up: Shared<T>,
    pub g_down: Shared<T>,
    pub g_up: Shared<T>,
}

/// Everything a reversible model needs: frozen base, memory tokens and adapters.
#[derive(Clone, Debug, PartialEq)]
pub struct RevformerParams<T> {
    pub config: ModelConfig,
    pub base: BaseWeights<T>,
    /// Write-slot embeddings, `[mem_tokens × d_model]`.
    pub memory: Shared<T>,
    pub adapters: Vec<BlockAdapter<T>>,
}

fn shared<T: Scalar>(t: Tensor<T>) -> Shared<T> {
    Arc::new(t)
}

impl<T: Scalar> BaseWeights<T> {
    /// Random initialization for pretraining.
    pub fn init(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        let d = cfg.d_model;
        let out_std = BASE_INIT_STD / ((2 * cfg.n_layers) as f64).sqrt();
        let layers = (0..cfg.n_layers)
            .map(|_| LayerWeights {
                attn_norm: shared(Tensor::full([d], T::one())),
                wq: shared(Tensor::randn([d, d], BASE_INIT_STD, rng)),
                wk: shared(Tensor::randn([d, d], BASE_INIT_STD, rng)),
                wv: shared(Tensor::randn([d, d], BASE_INIT_STD, rng)),
                wo: shared(Tensor::randn([d, d], out_std, rng)),
                ffn_norm: shared(Tensor::full([d], T::one())),
                w1: shared(Tensor::randn([d, cfg.ffn_dim], BASE_INIT_STD, rng)),
                b1: shared(Tensor::zeros([cfg.ffn_dim])),
                w2: shared(Tensor::randn([cfg.ffn_dim, d], out_std, rng)),
                b2: shared(Tensor::zeros([d])),
            })
            .collect();
        Self {
            tok_emb: shared(Tensor::randn([cfg.vocab_size, d], BASE_INIT_STD, rng)),
            pos_emb: shared(Tensor::randn([cfg.window, d], BASE_INIT_STD / 2.0, rng)),
            layers,
            final_norm: shared(Tensor::full([d], T::one())),
        }
    }

    pub fn named(&self) -> Vec<(String, &Shared<T>)> {
        let mut out = vec![
            ("base.final_norm".to_string(), &self.final_norm),
            ("base.pos_emb".to_string(), &self.pos_emb),
            ("base.tok_emb".to_string(), &self.tok_emb),
        ];
        for (i, l) in self.layers.iter().enumerate() {
            for (name, t) in [
                ("attn_norm", &l.attn_norm),
                ("b1", &l.b1),
                ("b2", &l.b2),
                ("ffn_norm", &l.ffn_norm),
                ("w1", &l.w1),
                ("w2", &l.w2),
                ("wk", &l.wk),
                ("wo", &l.wo),
                ("wq", &l.wq),
                ("wv", &l.wv),
            ] {
                out.push((format!("base.layer{i:02}.{name}"), t));
            }
        }
        out
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut Shared<T>)> {
        let mut out = vec![
            ("base.final_norm".to_string(), &mut self.final_norm),
            ("base.pos_emb".to_string(), &mut self.pos_emb),
            ("base.tok_emb".to_string(), &mut self.tok_emb),
        ];
        for (i, l) in self.layers.iter_mut().enumerate() {
            for (name, t) in [
                ("attn_norm", &mut l.attn_norm),
                ("b1", &mut l.b1),
                ("b2", &mut l.b2),
                ("ffn_norm", &mut l.ffn_norm),
                ("w1", &mut l.w1),
                ("w2", &mut l.w2),
                ("wk", &mut l.wk),
                ("wo", &mut l.wo),
                ("wq", &mut l.wq),
                ("wv", &mut l.wv),
            ] {
                out.push((format!("base.layer{i:02}.{name}"), t));
            }
        }
        out
    }

    /// SHA-256 over names, shapes and little-endian values.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        let mut named = self.named();
        named.sort_by(|a, b| a.0.cmp(&b.0));
        for (name, t) in named {
            h.update(name.as_bytes());
            for &d in t.shape() {
                h.update((d as u64).to_le_bytes());
            }
            for v in t.data() {
                h.update(v.as_f64().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

impl<T: Scalar> BlockAdapter<T> {
    /// Down-projections random, up-projections zero, so the delta starts at zero.
    pub fn init(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        let (d, r) = (cfg.d_model, cfg.adapter_rank);
        let std = 1.0 / (d as f64).sqrt();
        Self {
            f_down: shared(Tensor::randn([d, r], std, rng)),
            f_up: shared(Tensor::zeros([r, d])),
            g_down: shared(Tensor::randn([d, r], std, rng)),
            g_up: shared(Tensor::zeros([r, d])),
        }
    }
}

impl<T: Scalar> RevformerParams<T> {
    /// Attaches fresh memory tokens and zero-initialized adapters to a base.
    pub fn attach(config: ModelConfig, base: BaseWeights<T>, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_ada7);
        let memory = shared(Tensor::randn([config.mem_tokens, config.d_model], MEMORY_INIT_STD, &mut rng));
        let adapters = (0..config.n_layers).map(|_| BlockAdapter::init(&config, &mut rng)).collect();
        let p = Self {
            config,
            base,
            memory,
            adapters,
        };
        p.check_shapes()?;
        Ok(p)
    }

    /// Random base plus fresh adapters; used by tests and as a pretraining start.
    pub fn random(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = BaseWeights::init(&config, &mut rng);
        Self::attach(config, base, seed)
    }

    /// All arrays with their checkpoint names, sorted by name.
    pub fn named(&self) -> Vec<(String, &Shared<T>)> {
        let mut out = self.base.named();
        out.push(("memory".to_string(), &self.memory));
        for (i, a) in self.adapters.iter().enumerate() {
            out.push((format!("adapter.{i:02}.f_down"), &a.f_down));
            out.push((format!("adapter.{i:02}.f_up"), &a.f_up));
            out.push((format!("adapter.{i:02}.g_down"), &a.g_down));
            out.push((format!("adapter.{i:02}.g_up"), &a.g_up));
        }
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }

    /// Memory tokens and adapter weights, sorted by name.
    pub fn trainable_mut(&mut self) -> Vec<(String, &mut Shared<T>)> {
        let mut out = vec![("memory".to_string(), &mut self.memory)];
        for (i, a) in self.adapters.iter_mut().enumerate() {
            out.push((format!("adapter.{i:02}.f_down"), &mut a.f_down));
            out.push((format!("adapter.{i:02}.f_up"), &mut a.f_up));
            out.push((format!("adapter.{i:02}.g_down"), &mut a.g_down));
            out.push((format!("adapter.{i:02}.g_up"), &mut a.g_up));
        }
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }

    pub fn is_trainable(name: &str) -> bool {
        name == "memory" || name.starts_with("adapter.")
    }

    /// Rebuilds parameters from named arrays (checkpoint loading).
    pub fn from_named(config: ModelConfig, mut arrays: Vec<(String, Tensor<T>)>) -> Result<Self> {
        config.validate()?;
        let mut take = |name: &str| -> Result<Shared<T>> {
            let i = arrays
                .iter()
                .position(|(n, _)| n == name)
                .ok_or_else(|| Error::Format(format!("missing array {name}")))?;
            Ok(shared(arrays.swap_remove(i).1))
        };
        let mut layers = Vec::with_capacity(config.n_layers);
        for i in 0..config.n_layers {
            let p = |n: &str| format!("base.layer{i:02}.{n}");
            layers.push(LayerWeights {
                attn_norm: take(&p("attn_norm"))?,
                wq: take(&p("wq"))?,
                wk: take(&p("wk"))?,
                wv: take(&p("wv"))?,
                wo: take(&p("wo"))?,
                ffn_norm: take(&p("ffn_norm"))?,
                w1: take(&p("w1"))?,
                b1: take(&p("b1"))?,
                w2: take(&p("w2"))?,
                b2: take(&p("b2"))?,
            });
        }
        let base = BaseWeights {
            tok_emb: take("base.tok_emb")?,
            pos_emb: take("base.pos_emb")?,
            layers,
            final_norm: take("base.final_norm")?,
        };
        let memory = take("memory")?;
        let mut adapters = Vec::with_capacity(config.n_layers);
        for i in 0..config.n_layers {
            adapters.push(BlockAdapter {
                f_down: take(&format!("adapter.{i:02}.f_down"))?,
                f_up: take(&format!("adapter.{i:02}.f_up"))?,
                g_down: take(&format!("adapter.{i:02}.g_down"))?,
                g_up: take(&format!("adapter.{i:02}.g_up"))?,
            });
        }
        if let Some((name, _)) = arrays.first() {
            return Err(Error::Format(format!("unexpected array {name}")));
        }
        let p = Self {
            config,
            base,
            memory,
            adapters,
        };
        p.check_shapes()?;
        Ok(p)
    }

    fn check_shapes(&self) -> Result<()> {
        let c = &self.config;
        let (d, r, f) = (c.d_model, c.adapter_rank, c.ffn_dim);
        let mut expect: Vec<(String, Vec<usize>)> = vec![
            ("base.tok_emb".into(), vec![c.vocab_size, d]),
            ("base.final_norm".into(), vec![d]),
            ("memory".into(), vec![c.mem_tokens, d]),
        ];
        for i in 0..c.n_layers {
            let p = |n: &str| format!("base.layer{i:02}.{n}");
            expect.extend([
                (p("attn_norm"), vec![d]),
                (p("wq"), vec![d, d]),
                (p("wk"), vec![d, d]),
                (p("wv"), vec![d, d]),
                (p("wo"), vec![d, d]),
                (p("ffn_norm"), vec![d]),
                (p("w1"), vec![d, f]),
                (p("b1"), vec![f]),
                (p("w2"), vec![f, d]),
                (p("b2"), vec![d]),
                (format!("adapter.{i:02}.f_down"), vec![d, r]),
                (format!("adapter.{i:02}.f_up"), vec![r, d]),
                (format!("adapter.{i:02}.g_down"), vec![d, r]),
                (format!("adapter.{i:02}.g_up"), vec![r, d]),
            ]);
        }
        let named = self.named();
        for (name, shape) in expect {
            let found = named.iter().find(|(n, _)| *n == name).map(|(_, t)| t.shape().to_vec());
            if found.as_deref() != Some(shape.as_slice()) {
                return Err(Error::Format(format!("{name}: expected shape {shape:?}, found {found:?}")));
            }
        }
        let pos = self.base.pos_emb.shape();
        if pos.len() != 2 || pos[1] != d || pos[0] < c.window {
            return Err(Error::Format(format!(
                "position table {pos:?} does not cover window {}",
                c.window
            )));
        }
        Ok(())
    }

    /// Number of positions the base was trained with.
    pub fn max_positions(&self) -> usize {
        self.base.pos_emb.shape()[0]
    }

    /// Converts every array to another precision.
    pub fn cast<U: Scalar>(&self) -> RevformerParams<U> {
        let c = |t: &Shared<T>| Arc::new(t.cast::<U>());
        RevformerParams {
            config: self.config.clone(),
            base: BaseWeights {
                tok_emb: c(&self.base.tok_emb),
                pos_emb: c(&self.base.pos_emb),
                final_norm: c(&self.base.final_norm),
                layers: self
                    .base
                    .layers
                    .iter()
                    .map(|l| LayerWeights {
                        attn_norm: c(&l.attn_norm),
                        wq: c(&l.wq),
                        wk: c(&l.wk),
                        wv: c(&l.wv),
                        wo: c(&l.wo),
                        ffn_norm: c(&l.ffn_norm),
                        w1: c(&l.w1),
                        b1: c(&l.b1),
                        w2: c(&l.w2),
                        b2: c(&l.b2),
                    })
                    .collect(),
            },
            memory: c(&self.memory),
            adapters: self
                .adapters
                .iter()
                .map(|a| BlockAdapter {
                    f_down: c(&a.f_down),
                    f_up: c(&a.f_up),
                    g_down: c(&a.g_down),
                    g_up: c(&a.g_up),
                })
                .collect(),
        }
    }

    /// Records every array on `tape`. Base weights become grad leaves only
    /// when `train_base` is set; memory and adapters when `train_adapters` is.
    pub fn bind(&self, tape: &mut Tape<T>, train_base: bool, train_adapters: bool) -> Bound {
        let mut leaf = |t: &Shared<T>, rg: bool| tape.leaf_shared(Arc::clone(t), rg);
        let layers = self
            .base
            .layers
            .iter()
            .map(|l| BoundLayer {
                attn_norm: leaf(&l.attn_norm, train_base),
                wq: leaf(&l.wq, train_base),
                wk: leaf(&l.wk, train_base),
                wv: leaf(&l.wv, train_base),
                wo: leaf(&l.wo, train_base),
                ffn_norm: leaf(&l.ffn_norm, train_base),
                w1: leaf(&l.w1, train_base),
                b1: leaf(&l.b1, train_base),
                w2: leaf(&l.w2, train_base),
                b2: leaf(&l.b2, train_base),
            })
            .collect();
        let tok_emb = leaf(&self.base.tok_emb, train_base);
        let pos_emb = leaf(&self.base.pos_emb, train_base);
        let final_norm = leaf(&self.base.final_norm, train_base);
        let memory = leaf(&self.memory, train_adapters);
        let adapters = self
            .adapters
            .iter()
            .map(|a| BoundAdapter {
                f_down: leaf(&a.f_down, train_adapters),
                f_up: leaf(&a.f_up, train_adapters),
                g_down: leaf(&a.g_down, train_adapters),
                g_up: leaf(&a.g_up, train_adapters),
            })
            .collect();
        Bound {
            tok_emb,
            pos_emb,
            final_norm,
            layers,
            memory,
            adapters,
        }
    }
}

/// Tape handles for one transformer layer.
#[derive(Clone, Debug)]
pub struct BoundLayer {
    pub attn_norm: Var,
    pub wq: Var,
    pub wk: Var,
    pub wv: Var,
    pub wo: Var,
    pub ffn_norm: Var,
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

#[derive(Clone, Debug)]
pub struct BoundAdapter {
    pub f_down: Var,
    pub f_up: Var,
    pub g_down: Var,
    pub g_up: Var,
}

/// Tape handles for a whole [`RevformerParams`].
#[derive(Clone, Debug)]
pub struct Bound {
    pub tok_emb: Var,
    pub pos_emb: Var,
    pub final_norm: Var,
    pub layers: Vec<BoundLayer>,
    pub memory: Var,
    pub adapters: Vec<BoundAdapter>,
}

impl Bound {
    /// Handles of the trainable arrays, named as in checkpoints.
    pub fn trainable(&self) -> Vec<(String, Var)> {
        let mut out = vec![("memory".to_string(), self.memory)];
        for (i, a) in self.adapters.iter().enumerate() {
            out.push((format!("adapter.{i:02}.f_down"), a.f_down));
            out.push((format!("adapter.{i:02}.f_up"), a.f_up));
            out.push((format!("adapter.{i:02}.g_down"), a.g_down));
            out.push((format!("adapter.{i:02}.g_up"), a.g_up));
        }
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }

    /// Handles of the base arrays, named as in checkpoints.
    pub fn base(&self) -> Vec<(String, Var)> {
        let mut out = vec![
            ("base.final_norm".to_string(), self.final_norm),
            ("base.pos_emb".to_string(), self.pos_emb),
            ("base.tok_emb".to_string(), self.tok_emb),
        ];
        for (i, l) in self.layers.iter().enumerate() {
            for (name, v) in [
                ("attn_norm", l.attn_norm),
                ("b1", l.b1),
                ("b2", l.b2),
                ("ffn_norm", l.ffn_norm),
                ("w1", l.w1),
                ("w2", l.w2),
                ("wk", l.wk),
                ("wo", l.wo),
                ("wq", l.wq),
                ("wv", l.wv),
            ] {
                out.push((format!("base.layer{i:02}.{name}"), v));
            }
        }
        out
    }
}
