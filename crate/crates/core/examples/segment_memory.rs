//! Long inputs are cut into segments. Each segment ends with write slots
//! whose final states become the next segment's read slots.
//!
//! ```bash
//! cargo run --release --example segment_memory
//! ```

use r3mem::hierpair::tokenizer::{tokenize, BOS};
use r3mem::revformer::{forward_segmented, forward_segmented_with, ModelConfig, RevformerParams};

fn main() -> r3mem::Result<()> {
    let cfg = ModelConfig {
        d_model: 32,
        n_heads: 4,
        n_layers: 2,
        ffn_dim: 64,
        window: 48,
        mem_tokens: 4,
        ..Default::default()
    };
    let params = RevformerParams::<f64>::random(cfg.clone(), 3)?;
    let mut ids = vec![BOS];
    ids.extend(tokenize("Memory slots carry a summary of one segment into the next, and so on to the end."));

    let out = forward_segmented(&params, &ids)?;
    println!("{} tokens, {} content tokens per segment", ids.len(), cfg.segment_len());
    for (i, len) in out.trace.lengths.iter().enumerate() {
        let read = match &out.trace.read_inputs[i] {
            None => "none".to_string(),
            Some(r) => {
                let same = r.data() == out.trace.write_outputs[i - 1].data();
                format!("{} rows, identical to segment {}'s writes: {same}", r.rows(), i - 1)
            }
        };
        println!("segment {i}: {len} tokens, read slots: {read}");
    }

    // a sequence that fits in one segment scores the same whatever the window
    let short = &ids[..20];
    let reference = forward_segmented(&params, short)?.logits;
    for window in [32, 40, 48] {
        let logits = forward_segmented_with(&params, &cfg.with_window(window), short)?.logits;
        println!("window {window}: max logit difference {:.1e}", logits.max_abs_diff(&reference));
    }
    Ok(())
}
