//! Fine-tunes adapters and memory slots on top of a saved base so that the
//! model can rebuild 32 paragraphs from their short summaries, then scores
//! it. Run `pretrain_base` first.
//!
//! ```bash
//! cargo run --release --example pretrain_base
//! cargo run --release --example memorize -- 2000 0.5
//! ```
//!
//! The second argument is the cycle weight; pass 0 to see the ablation.
//! The tuned checkpoint lands next to the base for the `generate` example.

use std::time::Instant;

use r3mem::eval::{eval_reconstruction, pair_perplexity};
use r3mem::hierpair::read_pairs;
use r3mem::revformer::{checkpoint, Direction, ModelConfig, RevformerParams};
use r3mem::trainer::{train, LossWeights, TrainConfig};

fn main() -> r3mem::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps = args.next().map_or(2000, |s| s.parse().expect("step count"));
    let lambda_cycle = args.next().map_or(0.5, |s| s.parse().expect("cycle weight"));

    let dir = std::env::temp_dir();
    let base: RevformerParams<f32> = checkpoint::load(dir.join("r3mem_base.r3m"))?;
    let pairs = read_pairs(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/memorize/pairs.jsonl"))?.pairs;

    // A wide low-rank delta; rank 8 cannot hold 32 paragraphs verbatim.
    let cfg = ModelConfig {
        adapter_rank: 256,
        adapter_scale: 1024.0,
        dropout: 0.0,
        ..base.config.clone()
    };
    let mut params = RevformerParams::attach(cfg, base.base.clone(), 1)?;
    let tc = TrainConfig {
        max_steps: Some(steps),
        max_lr: 1e-3,
        weights: LossWeights { lambda_cycle, ..Default::default() },
        seed: 1,
        ..Default::default()
    };

    let start = Instant::now();
    train(&mut params, &pairs, &tc)?;
    println!("{} pairs, {steps} steps in {:.1?}", pairs.len(), start.elapsed());

    let fwd = pair_perplexity(&params, &pairs, Direction::Forward)?;
    let bwd = pair_perplexity(&params, &pairs, Direction::Backward)?;
    let recon = eval_reconstruction(&params, &pairs)?;
    println!("forward PPL {:.3}, backward NLL {:.3}", fwd.ppl, bwd.mean_nll);
    println!(
        "reconstruction F1 {:.3}, {:.0}% of pairs at F1 >= 0.9, exact {:.0}%",
        recon.mean_f1,
        100.0 * recon.fraction_at_least(0.9),
        100.0 * recon.exact_match
    );
    println!("\nquery: {}\nrebuilt: {}", pairs[0].query, recon.outputs[0]);

    checkpoint::save(&params, dir.join("r3mem_tuned.r3m"))?;
    Ok(())
}
