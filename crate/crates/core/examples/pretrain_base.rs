//! Trains the plain byte-level decoder that later stays frozen, then
//! saves it. Pass a step count to shorten the run (default 2000, about
//! three minutes on one core).
//!
//! ```bash
//! cargo run --release --example pretrain_base -- 300
//! ```

use std::time::Instant;

use r3mem::hierpair::load_documents;
use r3mem::revformer::{checkpoint, ModelConfig};
use r3mem::trainer::{heldout_nll, pretrain_base, PretrainConfig};

fn main() -> r3mem::Result<()> {
    let steps = std::env::args().nth(1).map_or(2000, |s| s.parse().expect("step count"));
    let fixtures = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures");
    let texts = |rel: &str| -> r3mem::Result<Vec<String>> {
        Ok(load_documents(format!("{fixtures}/{rel}"))?.into_iter().map(|(_, t)| t).collect())
    };
    let corpus = texts("pretrain/corpus.txt")?;
    let heldout = texts("heldout/corpus.txt")?;
    println!("{} bytes of training text", corpus.iter().map(String::len).sum::<usize>());

    let cfg = ModelConfig::default();
    let pc = PretrainConfig { steps, seed: 1, ..Default::default() };
    let start = Instant::now();
    let (params, report) = pretrain_base::<f32>(&cfg, &corpus, &pc)?;
    for (i, chunk) in report.losses.chunks(steps.div_ceil(10).max(1)).enumerate() {
        let mean = chunk.iter().sum::<f64>() / chunk.len() as f64;
        println!("steps {:>5}..: loss {mean:.3}", i * steps.div_ceil(10).max(1));
    }
    let nll = heldout_nll(&params, &heldout, 128)?;
    println!("held-out NLL {nll:.3} nats/byte ({:.1?})", start.elapsed());

    let out = std::env::temp_dir().join("r3mem_base.r3m");
    checkpoint::save(&params, &out)?;
    println!("saved {}", out.display());
    Ok(())
}
