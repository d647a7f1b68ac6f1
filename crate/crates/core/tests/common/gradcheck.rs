//! The gradient audit shared by the unit-level gradient tests and the
//! acceptance run: every differentiable op, then the composed objective.

use std::sync::Arc;

use r3mem::hierpair::Level;
use r3mem::numcore::{Tape, Tensor, Var};
use r3mem::revformer::Net;
use r3mem::trainer::{total_loss, EncodedPair, LossWeights};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{active_params, finite_difference, micro_config, GradCheck};

pub fn rand(shape: &[usize], seed: u64) -> Tensor<f64> {
    Tensor::randn(shape.to_vec(), 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Reduces any tensor to a scalar with fixed random weights, so every
/// output element gets a distinct adjoint.
fn weighted_sum(tape: &mut Tape<f64>, x: Var, seed: u64) -> Var {
    let shape = tape.value(x).shape().to_vec();
    let w = tape.constant(rand(&shape, seed));
    let p = tape.mul(x, w).unwrap();
    tape.sum(p).unwrap()
}

type Case = (&'static str, Vec<Tensor<f64>>, Box<dyn Fn(&mut Tape<f64>, &[Var]) -> Var>);

fn unary(name: &'static str, x: Tensor<f64>, f: impl Fn(&mut Tape<f64>, Var) -> Var + 'static) -> Case {
    (name, vec![x], Box::new(move |t, v| {
        let y = f(t, v[0]);
        weighted_sum(t, y, 1)
    }))
}

fn binary(name: &'static str, a: Tensor<f64>, b: Tensor<f64>, f: impl Fn(&mut Tape<f64>, Var, Var) -> Var + 'static) -> Case {
    (name, vec![a, b], Box::new(move |t, v| {
        let y = f(t, v[0], v[1]);
        weighted_sum(t, y, 2)
    }))
}

/// One finite-difference check per differentiable tape op.
pub fn op_audit() -> Vec<(&'static str, GradCheck)> {
    let (a, b) = (rand(&[2, 3], 4), rand(&[2, 3], 5));
    let cases: Vec<Case> = vec![
        binary("matmul", rand(&[3, 4], 1), rand(&[4, 2], 2), |t, x, y| t.matmul(x, y).unwrap()),
        binary("matmul_nt", rand(&[3, 4], 1), rand(&[5, 4], 3), |t, x, y| t.matmul_nt(x, y).unwrap()),
        binary("add", a.clone(), b.clone(), |t, x, y| t.add(x, y).unwrap()),
        binary("sub", a.clone(), b.clone(), |t, x, y| t.sub(x, y).unwrap()),
        binary("mul", a.clone(), b, |t, x, y| t.mul(x, y).unwrap()),
        binary("add_row", a.clone(), rand(&[3], 6), |t, x, y| t.add_row(x, y).unwrap()),
        unary("scale", a.clone(), |t, x| t.scale(x, -1.75).unwrap()),
        unary("silu", a.clone(), |t, x| t.silu(x).unwrap()),
        binary("rms_norm", rand(&[3, 5], 7), rand(&[5], 8), |t, x, g| t.rms_norm(x, g).unwrap()),
        unary("softmax_rows", rand(&[3, 5], 7), |t, x| t.softmax_rows(x).unwrap()),
        unary("causal_softmax", rand(&[3, 5], 9), |t, x| t.causal_softmax(x).unwrap()),
        ("cross_entropy", vec![rand(&[3, 5], 7)], Box::new(|t, v| t.cross_entropy(v[0], &[4, 0, 2]).unwrap())),
        unary("gather_rows", rand(&[6, 3], 10), |t, x| t.gather_rows(x, &[5, 1, 1, 0]).unwrap()),
        binary("concat_rows", a.clone(), rand(&[4, 3], 12), |t, x, y| t.concat_rows(&[x, y]).unwrap()),
        unary("slice_rows", rand(&[5, 3], 13), |t, x| t.slice_rows(x, 1, 3).unwrap()),
        binary("concat_cols", a, rand(&[2, 2], 14), |t, x, y| t.concat_cols(&[x, y]).unwrap()),
        unary("slice_cols", rand(&[2, 6], 15), |t, x| t.slice_cols(x, 2, 3).unwrap()),
        ("sum", vec![rand(&[2, 2], 16)], Box::new(|t, v| t.sum(v[0]).unwrap())),
    ];
    cases
        .into_iter()
        .map(|(name, inputs, f)| (name, finite_difference(&inputs, f)))
        .collect()
}

fn bytes(s: &str) -> Vec<usize> {
    s.bytes().map(usize::from).collect()
}

/// `total_loss` on the 2-layer micro model, differentiated with respect to
/// the memory tokens and every adapter matrix. Both pairs fit one segment:
/// across a boundary the write states are carried without gradient, so
/// finite differences would see a path the tape deliberately cuts.
pub fn total_loss_audit() -> GradCheck {
    let params = active_params(micro_config(), 5, 0.3);
    let pairs = [
        EncodedPair { level: Level::P2s, context: bytes("ab cd"), query: bytes("cd") },
        EncodedPair { level: Level::S2e, context: bytes("Bo saw Rome"), query: bytes("Rome") },
    ];
    assert!(pairs.iter().all(|p| p.flipped_len() <= micro_config().segment_len()));
    let mut inputs = vec![(*params.memory).clone()];
    for a in &params.adapters {
        for t in [&a.f_down, &a.f_up, &a.g_down, &a.g_up] {
            inputs.push((**t).clone());
        }
    }
    let weights = LossWeights::default();
    finite_difference(&inputs, move |t, v| {
        let mut p = params.clone();
        // rebuild the params around the perturbed leaves; the cycle decode reads them
        p.memory = Arc::new(t.value(v[0]).clone());
        for (i, a) in p.adapters.iter_mut().enumerate() {
            a.f_down = Arc::new(t.value(v[1 + 4 * i]).clone());
            a.f_up = Arc::new(t.value(v[2 + 4 * i]).clone());
            a.g_down = Arc::new(t.value(v[3 + 4 * i]).clone());
            a.g_up = Arc::new(t.value(v[4 + 4 * i]).clone());
        }
        let mut w = p.bind(t, false, false);
        w.memory = v[0];
        for (i, a) in w.adapters.iter_mut().enumerate() {
            a.f_down = v[1 + 4 * i];
            a.f_up = v[2 + 4 * i];
            a.g_down = v[3 + 4 * i];
            a.g_up = v[4 + 4 * i];
        }
        let net = Net::new(&p.config, &w);
        let (l0, _) = total_loss(t, &net, &p, &pairs[0], &weights, None).unwrap();
        let (l1, _) = total_loss(t, &net, &p, &pairs[1], &weights, None).unwrap();
        t.add(l0, l1).unwrap()
    })
}
