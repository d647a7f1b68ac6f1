use std::sync::Arc;

use super::tensor::{check_finite, gemm, row_gemm, Scalar, Tensor, SMALL_M};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

const RMS_EPS: f64 = 1e-5;

enum Op<T> {
    Leaf,
    /// `op(a) · op(b)`; a transposed operand keeps its stored layout.
    MatMul {
        a: Var,
        b: Var,
        b_t: bool,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    AddRow(Var, Var),
    RmsNorm {
        x: Var,
        gain: Var,
        inv_rms: Vec<T>,
    },
    Softmax(Var),
    Silu(Var),
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        probs: Vec<T>,
    },
    Gather {
        table: Var,
        ids: Vec<usize>,
    },
    ConcatRows(Vec<Var>),
    SliceRows {
        x: Var,
        start: usize,
    },
    ConcatCols(Vec<Var>),
    SliceCols {
        x: Var,
        start: usize,
    },
    Sum(Var),
}

struct Node<T> {
    value: Arc<Tensor<T>>,
    requires_grad: bool,
    op: Op<T>,
}

/// Append-only record of a forward computation. Replaying it in reverse
/// yields gradients for every leaf created with `requires_grad = true`.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    row_kernel: bool,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            row_kernel: false,
        }
    }

    /// A tape for one-token decoding steps: products with a handful of rows
    /// skip the blocked kernel. Rounding then differs from a full pass in
    /// the last bits, so use it only where that is acceptable.
    pub fn for_decoding() -> Self {
        Self {
            nodes: Vec::new(),
            row_kernel: true,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.leaf_shared(Arc::new(value), requires_grad)
    }

    /// Records a leaf without copying its storage.
    pub fn leaf_shared(&mut self, value: Arc<Tensor<T>>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shared(&self, v: Var) -> Arc<Tensor<T>> {
        Arc::clone(&self.nodes[v.0].value)
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Copies `v` into a fresh constant leaf; gradients stop here.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.shared(v);
        self.leaf_shared(value, false)
    }

    fn push(&mut self, name: &'static str, value: Tensor<T>, inputs: &[Var], op: Op<T>) -> Result<Var> {
        check_finite(name, value.data())?;
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        let op = if requires_grad { op } else { Op::Leaf };
        self.nodes.push(Node {
            value: Arc::new(value),
            requires_grad,
            op,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn dims2(&self, v: Var, op: &'static str) -> Result<(usize, usize)> {
        let t = self.value(v);
        if t.shape().len() != 2 {
            return Err(Error::shape(op, format!("expected a matrix, got {:?}", t.shape())));
        }
        Ok((t.shape()[0], t.shape()[1]))
    }

    fn same_shape(&self, a: Var, b: Var, op: &'static str) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::shape(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn forward_gemm(&self, m: usize, k: usize, n: usize, a: Var, b: Var, b_t: bool, out: &mut Tensor<T>) {
        let (a, b) = (self.value(a).data(), self.value(b).data());
        if self.row_kernel && m <= SMALL_M {
            row_gemm(m, k, n, a, b, b_t, out.data_mut());
        } else {
            gemm(m, k, n, a, false, b, b_t, out.data_mut(), false);
        }
    }

    /// `a[m×k] · b[k×n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims2(a, "matmul")?;
        let (k2, n) = self.dims2(b, "matmul")?;
        if k != k2 {
            return Err(Error::shape("matmul", format!("[{m}x{k}] · [{k2}x{n}]")));
        }
        let mut out = Tensor::zeros([m, n]);
        self.forward_gemm(m, k, n, a, b, false, &mut out);
        self.push("matmul", out, &[a, b], Op::MatMul { a, b, b_t: false })
    }

    /// `a[m×k] · b[n×k]ᵀ`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims2(a, "matmul_nt")?;
        let (n, k2) = self.dims2(b, "matmul_nt")?;
        if k != k2 {
            return Err(Error::shape("matmul_nt", format!("[{m}x{k}] · [{n}x{k2}]ᵀ")));
        }
        let mut out = Tensor::zeros([m, n]);
        self.forward_gemm(m, k, n, a, b, true, &mut out);
        self.push("matmul_nt", out, &[a, b], Op::MatMul { a, b, b_t: true })
    }

    fn zip_with(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        self.same_shape(a, b, name)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_with(a, b, "add", |x, y| x + y)?;
        self.push("add", out, &[a, b], Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_with(a, b, "sub", |x, y| x - y)?;
        self.push("sub", out, &[a, b], Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_with(a, b, "mul", |x, y| x * y)?;
        self.push("mul", out, &[a, b], Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let c = T::of(c);
        let t = self.value(a);
        let out = Tensor::new(t.shape().to_vec(), t.data().iter().map(|&x| x * c).collect())?;
        self.push("scale", out, &[a], Op::Scale(a, c))
    }

    /// Adds the vector `bias[n]` to every row of `a[.. × n]`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(bias));
        let n = ta.cols();
        if tb.len() != n {
            return Err(Error::shape("add_row", format!("{:?} + {:?}", ta.shape(), tb.shape())));
        }
        let data = ta
            .data()
            .chunks(n)
            .flat_map(|row| row.iter().zip(tb.data()).map(|(&x, &b)| x + b))
            .collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        self.push("add_row", out, &[a, bias], Op::AddRow(a, bias))
    }

    /// `gain ⊙ x / sqrt(mean(x²) + 1e-5)` per row.
    pub fn rms_norm(&mut self, x: Var, gain: Var) -> Result<Var> {
        let (tx, tg) = (self.value(x), self.value(gain));
        let d = tx.cols();
        if d == 0 || tg.len() != d {
            return Err(Error::shape("rms_norm", format!("{:?} with gain {:?}", tx.shape(), tg.shape())));
        }
        let eps = T::of(RMS_EPS);
        let dn = T::of(d as f64);
        let mut inv_rms = Vec::with_capacity(tx.rows());
        let mut data = Vec::with_capacity(tx.len());
        for row in tx.data().chunks(d) {
            let ms = row.iter().map(|&v| v * v).sum::<T>() / dn;
            let r = T::one() / (ms + eps).sqrt();
            inv_rms.push(r);
            data.extend(row.iter().zip(tg.data()).map(|(&v, &g)| g * v * r));
        }
        let out = Tensor::new(tx.shape().to_vec(), data)?;
        self.push("rms_norm", out, &[x, gain], Op::RmsNorm { x, gain, inv_rms })
    }

    /// Row-wise softmax over the last dimension, with max subtraction.
    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        self.softmax_impl(x, false)
    }

    /// Row-wise softmax where row `i` of an `r×c` input only sees columns
    /// `j ≤ i + (c − r)`; masked entries are exactly zero.
    pub fn causal_softmax(&mut self, x: Var) -> Result<Var> {
        self.softmax_impl(x, true)
    }

    fn softmax_impl(&mut self, x: Var, causal: bool) -> Result<Var> {
        let tx = self.value(x);
        let (rows, cols) = (tx.rows(), tx.cols());
        if cols == 0 || (causal && cols < rows) {
            return Err(Error::shape("softmax", format!("{:?}", tx.shape())));
        }
        let offset = cols - rows.min(cols);
        let mut data = vec![T::zero(); tx.len()];
        for (i, (row, out)) in tx.data().chunks(cols).zip(data.chunks_mut(cols)).enumerate() {
            let visible = if causal { (i + offset + 1).min(cols) } else { cols };
            let mx = row[..visible].iter().copied().fold(T::neg_infinity(), T::max);
            let mut total = T::zero();
            for (o, &v) in out[..visible].iter_mut().zip(&row[..visible]) {
                *o = (v - mx).exp();
                total = total + *o;
            }
            out[..visible].iter_mut().for_each(|o| *o = *o / total);
        }
        let out = Tensor::new(tx.shape().to_vec(), data)?;
        self.push("softmax", out, &[x], Op::Softmax(x))
    }

    /// `x · sigmoid(x)`.
    pub fn silu(&mut self, x: Var) -> Result<Var> {
        let tx = self.value(x);
        let data = tx.data().iter().map(|&v| v / (T::one() + (-v).exp())).collect();
        let out = Tensor::new(tx.shape().to_vec(), data)?;
        self.push("silu", out, &[x], Op::Silu(x))
    }

    /// Mean over rows of `−log softmax(logits)[target]`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let tl = self.value(logits);
        let (n, v) = (tl.rows(), tl.cols());
        if targets.len() != n || n == 0 {
            return Err(Error::shape(
                "cross_entropy",
                format!("{} targets for {:?} logits", targets.len(), tl.shape()),
            ));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= v) {
            return Err(Error::Index(format!("target id {bad} outside vocabulary of {v}")));
        }
        let mut probs = vec![T::zero(); n * v];
        let mut total = 0.0f64;
        for ((row, p), &t) in tl.data().chunks(v).zip(probs.chunks_mut(v)).zip(targets) {
            let mx = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut z = T::zero();
            for (pi, &l) in p.iter_mut().zip(row) {
                *pi = (l - mx).exp();
                z = z + *pi;
            }
            p.iter_mut().for_each(|pi| *pi = *pi / z);
            let nll = z.ln() + mx - row[t];
            total += nll.as_f64();
        }
        let out = Tensor::scalar(T::of(total / n as f64));
        self.push(
            "cross_entropy",
            out,
            &[logits],
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
        )
    }

    /// Selects rows of `table` by id.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let tt = self.value(table);
        let (rows, d) = (tt.rows(), tt.cols());
        let mut data = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= rows {
                return Err(Error::Index(format!("row {id} outside table of {rows}")));
            }
            data.extend_from_slice(tt.row(id));
        }
        let out = Tensor::new([ids.len(), d], data)?;
        self.push(
            "gather_rows",
            out,
            &[table],
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
        )
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = parts.first().map(|&p| self.value(p).cols()).unwrap_or(0);
        let mut data = Vec::with_capacity(parts.iter().map(|&p| self.value(p).len()).sum());
        let mut rows = 0;
        for &p in parts {
            let t = self.value(p);
            if t.cols() != cols {
                return Err(Error::shape("concat_rows", "column counts differ"));
            }
            rows += t.rows();
            data.extend_from_slice(t.data());
        }
        let out = Tensor::new([rows, cols], data)?;
        self.push("concat_rows", out, parts, Op::ConcatRows(parts.to_vec()))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(x);
        let c = t.cols();
        if start + len > t.rows() {
            return Err(Error::shape("slice_rows", format!("{start}+{len} > {}", t.rows())));
        }
        let out = Tensor::new([len, c], t.data()[start * c..(start + len) * c].to_vec())?;
        self.push("slice_rows", out, &[x], Op::SliceRows { x, start })
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = parts.first().map(|&p| self.value(p).rows()).unwrap_or(0);
        let widths: Vec<usize> = parts.iter().map(|&p| self.value(p).cols()).collect();
        if parts.iter().any(|&p| self.value(p).rows() != rows) {
            return Err(Error::shape("concat_cols", "row counts differ"));
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(i));
            }
        }
        let out = Tensor::new([rows, total], data)?;
        self.push("concat_cols", out, parts, Op::ConcatCols(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, width: usize) -> Result<Var> {
        let t = self.value(x);
        if start + width > t.cols() {
            return Err(Error::shape("slice_cols", format!("{start}+{width} > {}", t.cols())));
        }
        let mut data = Vec::with_capacity(t.rows() * width);
        for i in 0..t.rows() {
            data.extend_from_slice(&t.row(i)[start..start + width]);
        }
        let out = Tensor::new([t.rows(), width], data)?;
        self.push("slice_cols", out, &[x], Op::SliceCols { x, start })
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let total = self.value(x).data().iter().copied().sum::<T>();
        self.push("sum", Tensor::scalar(total), &[x], Op::Sum(x))
    }

    /// Gradients of the scalar `loss` with respect to every leaf recorded
    /// with `requires_grad`. Leaves the loss does not reach get zeros.
    pub fn grad(&self, loss: Var) -> Result<Grads<T>> {
        let node = &self.nodes[loss.0];
        if node.value.len() != 1 {
            return Err(Error::usage(format!(
                "gradient needs a scalar loss, got shape {:?}",
                node.value.shape()
            )));
        }
        if !node.requires_grad {
            return Err(Error::usage("loss does not depend on any trainable leaf"));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop(node, &g, &mut grads);
        }
        let mut out = Vec::new();
        for (i, node) in self.nodes.iter().enumerate() {
            if node.requires_grad && matches!(node.op, Op::Leaf) {
                let data = grads[i].take().unwrap_or_else(|| vec![T::zero(); node.value.len()]);
                out.push((Var(i), Tensor::new(node.value.shape().to_vec(), data)?));
            }
        }
        Ok(Grads { entries: out })
    }

    fn backprop(&self, node: &Node<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let rg = |v: Var| self.nodes[v.0].requires_grad;
        let val = |v: Var| -> &Tensor<T> { &self.nodes[v.0].value };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul { a, b, b_t } => {
                let (ta, tb) = (val(*a), val(*b));
                let (m, k) = (ta.rows(), ta.cols());
                let n = node.value.cols();
                if rg(*a) {
                    let da = slot(grads, *a, m * k);
                    if *b_t {
                        gemm(m, n, k, g, false, tb.data(), false, da, true);
                    } else {
                        gemm(m, n, k, g, false, tb.data(), true, da, true);
                    }
                }
                if rg(*b) {
                    let db = slot(grads, *b, k * n);
                    if *b_t {
                        gemm(n, m, k, g, true, ta.data(), false, db, true);
                    } else {
                        gemm(k, m, n, ta.data(), true, g, false, db, true);
                    }
                }
            }
            Op::Add(a, b) => {
                for (v, sign) in [(*a, T::one()), (*b, T::one())] {
                    if rg(v) {
                        axpy(slot(grads, v, g.len()), sign, g);
                    }
                }
            }
            Op::Sub(a, b) => {
                for (v, sign) in [(*a, T::one()), (*b, -T::one())] {
                    if rg(v) {
                        axpy(slot(grads, v, g.len()), sign, g);
                    }
                }
            }
            Op::Mul(a, b) => {
                for (v, other) in [(*a, *b), (*b, *a)] {
                    if rg(v) {
                        let o = val(other).data();
                        let d = slot(grads, v, g.len());
                        d.iter_mut().zip(g).zip(o).for_each(|((d, &g), &o)| *d = *d + g * o);
                    }
                }
            }
            Op::Scale(a, c) => {
                if rg(*a) {
                    axpy(slot(grads, *a, g.len()), *c, g);
                }
            }
            Op::AddRow(a, bias) => {
                if rg(*a) {
                    axpy(slot(grads, *a, g.len()), T::one(), g);
                }
                if rg(*bias) {
                    let n = val(*bias).len();
                    let db = slot(grads, *bias, n);
                    for row in g.chunks(n) {
                        db.iter_mut().zip(row).for_each(|(d, &v)| *d = *d + v);
                    }
                }
            }
            Op::RmsNorm { x, gain, inv_rms } => {
                let (tx, tg) = (val(*x), val(*gain));
                let d = tx.cols();
                let dn = T::of(d as f64);
                if rg(*x) {
                    let dx = slot(grads, *x, tx.len());
                    for (((xr, gr), dxr), &r) in tx.data().chunks(d).zip(g.chunks(d)).zip(dx.chunks_mut(d)).zip(inv_rms) {
                        let dot = xr
                            .iter()
                            .zip(gr)
                            .zip(tg.data())
                            .map(|((&xv, &gv), &w)| w * gv * xv)
                            .sum::<T>();
                        let coef = r * r * r * dot / dn;
                        for (((o, &xv), &gv), &w) in dxr.iter_mut().zip(xr).zip(gr).zip(tg.data()) {
                            *o = *o + r * w * gv - coef * xv;
                        }
                    }
                }
                if rg(*gain) {
                    let dg = slot(grads, *gain, d);
                    for ((xr, gr), &r) in tx.data().chunks(d).zip(g.chunks(d)).zip(inv_rms) {
                        for ((o, &xv), &gv) in dg.iter_mut().zip(xr).zip(gr) {
                            *o = *o + gv * xv * r;
                        }
                    }
                }
            }
            Op::Softmax(x) => {
                if rg(*x) {
                    let y = node.value.data();
                    let c = node.value.cols();
                    let dx = slot(grads, *x, y.len());
                    for ((yr, gr), dr) in y.chunks(c).zip(g.chunks(c)).zip(dx.chunks_mut(c)) {
                        let dot = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum::<T>();
                        for ((o, &yv), &gv) in dr.iter_mut().zip(yr).zip(gr) {
                            *o = *o + yv * (gv - dot);
                        }
                    }
                }
            }
            Op::Silu(x) => {
                if rg(*x) {
                    let xv = val(*x).data();
                    let dx = slot(grads, *x, xv.len());
                    for ((o, &v), &gv) in dx.iter_mut().zip(xv).zip(g) {
                        let s = T::one() / (T::one() + (-v).exp());
                        *o = *o + gv * s * (T::one() + v * (T::one() - s));
                    }
                }
            }
            Op::CrossEntropy { logits, targets, probs } => {
                if rg(*logits) {
                    let v = val(*logits).cols();
                    let scale = g[0] / T::of(targets.len() as f64);
                    let dl = slot(grads, *logits, probs.len());
                    for ((dr, pr), &t) in dl.chunks_mut(v).zip(probs.chunks(v)).zip(targets) {
                        for (o, &p) in dr.iter_mut().zip(pr) {
                            *o = *o + scale * p;
                        }
                        dr[t] = dr[t] - scale;
                    }
                }
            }
            Op::Gather { table, ids } => {
                if rg(*table) {
                    let tt = val(*table);
                    let d = tt.cols();
                    let dt = slot(grads, *table, tt.len());
                    for (&id, gr) in ids.iter().zip(g.chunks(d)) {
                        dt[id * d..(id + 1) * d].iter_mut().zip(gr).for_each(|(o, &v)| *o = *o + v);
                    }
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = val(p).len();
                    if rg(p) {
                        axpy(slot(grads, p, n), T::one(), &g[offset..offset + n]);
                    }
                    offset += n;
                }
            }
            Op::SliceRows { x, start } => {
                if rg(*x) {
                    let tx = val(*x);
                    let c = tx.cols();
                    let dx = slot(grads, *x, tx.len());
                    axpy(&mut dx[start * c..start * c + g.len()], T::one(), g);
                }
            }
            Op::ConcatCols(parts) => {
                let total = node.value.cols();
                let mut offset = 0;
                for &p in parts {
                    let tp = val(p);
                    let w = tp.cols();
                    if rg(p) {
                        let dp = slot(grads, p, tp.len());
                        for (dr, gr) in dp.chunks_mut(w.max(1)).zip(g.chunks(total)) {
                            axpy(dr, T::one(), &gr[offset..offset + w]);
                        }
                    }
                    offset += w;
                }
            }
            Op::SliceCols { x, start } => {
                if rg(*x) {
                    let tx = val(*x);
                    let c = tx.cols();
                    let w = node.value.cols();
                    let dx = slot(grads, *x, tx.len());
                    for (dr, gr) in dx.chunks_mut(c).zip(g.chunks(w.max(1))) {
                        axpy(&mut dr[*start..*start + w], T::one(), gr);
                    }
                }
            }
            Op::Sum(x) => {
                if rg(*x) {
                    let n = val(*x).len();
                    slot(grads, *x, n).iter_mut().for_each(|o| *o = *o + g[0]);
                }
            }
        }
    }
}

fn slot<T: Scalar>(grads: &mut [Option<Vec<T>>], v: Var, len: usize) -> &mut [T] {
    grads[v.0].get_or_insert_with(|| vec![T::zero(); len])
}

fn axpy<T: Scalar>(dst: &mut [T], alpha: T, src: &[T]) {
    dst.iter_mut().zip(src).for_each(|(d, &s)| *d = *d + alpha * s);
}

/// Leaf gradients returned by [`Tape::grad`].
pub struct Grads<T> {
    entries: Vec<(Var, Tensor<T>)>,
}

impl<T: Scalar> Grads<T> {
    /// Gradient for a trainable leaf; `None` for non-leaves or frozen leaves.
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.entries
            .binary_search_by_key(&v, |(k, _)| *k)
            .ok()
            .map(|i| &self.entries[i].1)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Var, &Tensor<T>)> {
        self.entries.iter().map(|(v, t)| (*v, t))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
