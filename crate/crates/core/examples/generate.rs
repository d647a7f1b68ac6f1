//! Greedy decoding in both directions from a saved checkpoint. The forward
//! model compresses a context into a query; the flipped model expands a
//! query back into context.
//!
//! ```bash
//! cargo run --release --example generate -- /tmp/r3mem_tuned.r3m "Our economy is strong."
//! ```

use r3mem::hierpair::tokenizer::{detokenize, prompt, tokenize};
use r3mem::hierpair::Level;
use r3mem::revformer::{checkpoint, generate, Direction, RevformerParams};

fn main() -> r3mem::Result<()> {
    let mut args = std::env::args().skip(1);
    let default_path = std::env::temp_dir().join("r3mem_tuned.r3m");
    let path = args.next().map_or(default_path, Into::into);
    let text = args.next().unwrap_or_else(|| "We will build a stronger nation.".to_string());
    let params: RevformerParams<f32> = checkpoint::load(&path)?;

    for level in [Level::P2s, Level::S2e] {
        let fwd = generate(&params, Direction::Forward, &prompt(level, &tokenize(&text)), 64)?;
        println!("[{level}] forward  {text:?} -> {:?}", detokenize(&fwd));
        let bwd = generate(&params, Direction::Backward, &prompt(level, &fwd), 128)?;
        println!("[{level}] backward {:?} -> {:?}", detokenize(&fwd), detokenize(&bwd));
    }
    Ok(())
}
