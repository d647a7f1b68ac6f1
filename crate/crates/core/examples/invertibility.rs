//! Runs activations through the coupling stack and back, first by hand for
//! one block, then with the audit used by `r3mem check-invert`.
//!
//! ```bash
//! cargo run --release --example invertibility
//! ```

use std::sync::Arc;

use r3mem::eval::check_invert;
use r3mem::numcore::{Tape, Tensor};
use r3mem::revformer::{ModelConfig, Net, RevformerParams, StreamPair};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> r3mem::Result<()> {
    let cfg = ModelConfig {
        d_model: 32,
        n_heads: 4,
        n_layers: 3,
        ffn_dim: 64,
        window: 64,
        mem_tokens: 4,
        ..Default::default()
    };
    let mut params = RevformerParams::<f64>::random(cfg.clone(), 7)?;
    // fresh adapters are zero; give them some weight so the stack is not trivial
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for a in params.adapters.iter_mut() {
        a.f_up = Arc::new(Tensor::randn(a.f_up.shape().to_vec(), 0.05, &mut rng));
        a.g_up = Arc::new(Tensor::randn(a.g_up.shape().to_vec(), 0.05, &mut rng));
    }

    let mut tape = Tape::new();
    let w = params.bind(&mut tape, false, false);
    let net = Net::new(&cfg, &w);
    let x = StreamPair {
        first: tape.constant(Tensor::randn([5, 32], 1.0, &mut rng)),
        second: tape.constant(Tensor::randn([5, 32], 1.0, &mut rng)),
    };
    let y = net.coupling_forward_eval(&mut tape, x, 0)?;
    let back = net.coupling_inverse(&mut tape, y, 0)?;
    println!(
        "block 0: output moved by {:.3}, reconstruction error {:.2e}",
        tape.value(y.first).max_abs_diff(tape.value(x.first)),
        tape.value(back.first).max_abs_diff(tape.value(x.first)),
    );

    for (label, tol, report) in [
        ("64-bit", 1e-9, check_invert(&params, 100, 1e-9, 0)?),
        ("32-bit", 1e-4, check_invert(&params.cast::<f32>(), 100, 1e-4, 0)?),
    ] {
        println!(
            "{label}: per block {:?}, whole stack {:.2e} (tol {tol:.0e}) {}",
            report.per_block.iter().map(|e| format!("{e:.1e}")).collect::<Vec<_>>(),
            report.whole_stack,
            if report.pass { "ok" } else { "FAILED" }
        );
    }
    Ok(())
}
