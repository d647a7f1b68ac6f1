//! The tape records operations and replays them backwards. This compares
//! its gradients with central differences on a tiny two-layer network.
//!
//! ```bash
//! cargo run --release --example autodiff
//! ```

use r3mem::numcore::{Tape, Tensor};

fn loss(tape: &mut Tape<f64>, x: &Tensor<f64>, w1: &Tensor<f64>, w2: &Tensor<f64>, track: bool) -> (f64, Option<Vec<Tensor<f64>>>) {
    let xv = tape.constant(x.clone());
    let a = tape.leaf(w1.clone(), track);
    let b = tape.leaf(w2.clone(), track);
    let h = tape.matmul(xv, a).unwrap();
    let gain = tape.constant(Tensor::full([1, 2], 1.0));
    let h = tape.rms_norm(h, gain).unwrap();
    let h = tape.silu(h).unwrap();
    let logits = tape.matmul(h, b).unwrap();
    let l = tape.cross_entropy(logits, &[2, 0]).unwrap();
    let value = tape.value(l).item();
    if !track {
        return (value, None);
    }
    let g = tape.grad(l).unwrap();
    (value, Some(vec![g.get(a).unwrap().clone(), g.get(b).unwrap().clone()]))
}

fn main() {
    let x = Tensor::from_rows(&[&[0.5, -1.0, 2.0], &[1.5, 0.25, -0.75]]).unwrap();
    let w1 = Tensor::from_rows(&[&[0.1, 0.4], &[-0.3, 0.2], &[0.7, -0.5]]).unwrap();
    let w2 = Tensor::from_rows(&[&[0.3, -0.2, 0.6], &[-0.4, 0.9, 0.1]]).unwrap();

    let (value, grads) = loss(&mut Tape::new(), &x, &w1, &w2, true);
    let grads = grads.unwrap();
    println!("loss {value:.6}");

    let h = 1e-5;
    for (name, (w, g)) in ["w1", "w2"].iter().zip([&w1, &w2].into_iter().zip(&grads)) {
        let mut worst = 0.0f64;
        for j in 0..w.len() {
            let mut plus = w.clone();
            plus.data_mut()[j] += h;
            let mut minus = w.clone();
            minus.data_mut()[j] -= h;
            let (lp, lm) = if *name == "w1" {
                (loss(&mut Tape::new(), &x, &plus, &w2, false).0, loss(&mut Tape::new(), &x, &minus, &w2, false).0)
            } else {
                (loss(&mut Tape::new(), &x, &w1, &plus, false).0, loss(&mut Tape::new(), &x, &w1, &minus, false).0)
            };
            let numeric = (lp - lm) / (2.0 * h);
            let analytic = g.data()[j];
            worst = worst.max((analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6));
        }
        println!("{name}: gradient {:?}", g.data().iter().map(|v| format!("{v:+.5}")).collect::<Vec<_>>());
        println!("{name}: worst relative error vs central differences {worst:.2e}");
    }
}
