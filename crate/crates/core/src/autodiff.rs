//! Minimal reverse-mode differentiation over dense row-major matrices.
//!
//! A [`Tape`] records every operation as a node; [`Tape::backward`] walks the
//! nodes in reverse and accumulates gradients. Only the operations the
//! transformer needs are provided.

use std::fmt;

#[derive(Clone, PartialEq)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor({}x{})", self.rows, self.cols)
    }
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "tensor shape/data mismatch");
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::from_vec(rows.len(), cols, data)
    }

    pub fn scalar(v: f64) -> Self {
        Self::from_vec(1, 1, vec![v])
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn transpose(&self) -> Tensor {
        let mut out = Tensor::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// `self * other`.
    pub fn matmul(&self, other: &Tensor) -> Tensor {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Tensor::zeros(self.rows, other.cols);
        let n = other.cols;
        for i in 0..self.rows {
            let out_row = &mut out.data[i * n..(i + 1) * n];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self * other^T`.
    pub fn matmul_bt(&self, other: &Tensor) -> Tensor {
        assert_eq!(self.cols, other.cols, "matmul_bt shape mismatch");
        let mut out = Tensor::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let a = self.row(i);
            for j in 0..other.rows {
                out.data[i * other.rows + j] = a.iter().zip(other.row(j)).map(|(x, y)| x * y).sum();
            }
        }
        out
    }

    /// `self^T * other`.
    pub fn matmul_at(&self, other: &Tensor) -> Tensor {
        assert_eq!(self.rows, other.rows, "matmul_at shape mismatch");
        let mut out = Tensor::zeros(self.cols, other.cols);
        let n = other.cols;
        for k in 0..self.rows {
            let b = other.row(k);
            for (i, &a) in self.row(k).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &bv) in out.data[i * n..(i + 1) * n].iter_mut().zip(b) {
                    *o += a * bv;
                }
            }
        }
        out
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "shape mismatch");
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    fn add_assign(&mut self, other: &Tensor) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    fn col_sums(&self) -> Tensor {
        let mut out = Tensor::zeros(1, self.cols);
        for r in 0..self.rows {
            for (o, x) in out.data.iter_mut().zip(self.row(r)) {
                *o += x;
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulBt(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    AddConst(Var),
    MulConst(Var, Tensor),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    LogSigmoid(Var),
    Sin(Var),
    Cos(Var),
    SoftmaxRows(Var),
    LayerNormRows(Var, Vec<f64>),
    L2NormRows(Var, Vec<f64>),
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    Gather(Var, Vec<usize>),
    CrossEntropySum(Var, Vec<usize>, Tensor),
    MaxEps(Var, f64),
    RowSum(Var),
    DivByCol(Var, Var),
    ShiftDown(Var),
    Decay(Var),
}

struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients indexed by [`Var`].
pub struct Grads(Vec<Option<Tensor>>);

impl Grads {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.0.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.0.get_mut(v.0).and_then(Option::take)
    }
}

const LAYER_NORM_EPS: f64 = 1e-5;
const L2_EPS: f64 = crate::attention::NORM_EPS;

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    /// `a * b^T`.
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul_bt(self.value(b));
        self.push(v, Op::MatMulBt(a, b))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        self.push(v, Op::Transpose(a))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.push(v, Op::Add(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.push(v, Op::Mul(a, b))
    }

    /// Adds a `1 x cols` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let r = self.value(row);
        assert_eq!(r.rows, 1);
        let mut v = self.value(a).clone();
        assert_eq!(v.cols, r.cols, "add_row shape mismatch");
        for i in 0..v.rows {
            for (x, y) in v.row_mut(i).iter_mut().zip(&r.data) {
                *x += y;
            }
        }
        self.push(v, Op::AddRow(a, row))
    }

    /// Multiplies every row of `a` elementwise by a `1 x cols` row.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Var {
        let r = self.value(row);
        assert_eq!(r.rows, 1);
        let mut v = self.value(a).clone();
        assert_eq!(v.cols, r.cols, "mul_row shape mismatch");
        for i in 0..v.rows {
            for (x, y) in v.row_mut(i).iter_mut().zip(&r.data) {
                *x *= y;
            }
        }
        self.push(v, Op::MulRow(a, row))
    }

    pub fn add_const(&mut self, a: Var, c: &Tensor) -> Var {
        let v = self.value(a).zip_map(c, |x, y| x + y);
        self.push(v, Op::AddConst(a))
    }

    pub fn mul_const(&mut self, a: Var, c: Tensor) -> Var {
        let v = self.value(a).zip_map(&c, |x, y| x * y);
        self.push(v, Op::MulConst(a, c))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).map(|x| x * s);
        self.push(v, Op::Scale(a, s))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(crate::attention::sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    /// `log(sigmoid(a))`, computed without overflow.
    pub fn log_sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(log_sigmoid);
        self.push(v, Op::LogSigmoid(a))
    }

    pub fn sin(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::sin);
        self.push(v, Op::Sin(a))
    }

    pub fn cos(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::cos);
        self.push(v, Op::Cos(a))
    }

    /// Row-wise softmax. Entries where `mask` is false get zero weight; every
    /// row must keep at least one entry.
    pub fn softmax_rows(&mut self, a: Var, mask: Option<&dyn Fn(usize, usize) -> bool>) -> Var {
        let x = self.value(a);
        let mut v = Tensor::zeros(x.rows, x.cols);
        for r in 0..x.rows {
            let keep = |c: usize| mask.is_none_or(|m| m(r, c));
            let row = x.row(r);
            let max = (0..x.cols)
                .filter(|&c| keep(c))
                .map(|c| row[c])
                .fold(f64::NEG_INFINITY, f64::max);
            let out = v.row_mut(r);
            let mut total = 0.0;
            for c in 0..row.len() {
                if keep(c) {
                    out[c] = (row[c] - max).exp();
                    total += out[c];
                }
            }
            out.iter_mut().for_each(|o| *o /= total);
        }
        self.push(v, Op::SoftmaxRows(a))
    }

    /// Row-wise standardization (no affine part).
    pub fn layer_norm_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut v = Tensor::zeros(x.rows, x.cols);
        let mut inv_std = Vec::with_capacity(x.rows);
        for r in 0..x.rows {
            let istd = layer_norm_into(x.row(r), v.row_mut(r));
            inv_std.push(istd);
        }
        self.push(v, Op::LayerNormRows(a, inv_std))
    }

    pub fn l2_normalize_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut v = x.clone();
        let mut norms = Vec::with_capacity(x.rows);
        for r in 0..x.rows {
            let n = x.row(r).iter().map(|e| e * e).sum::<f64>().sqrt().max(L2_EPS);
            v.row_mut(r).iter_mut().for_each(|e| *e /= n);
            norms.push(n);
        }
        self.push(v, Op::L2NormRows(a, norms))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let x = self.value(a);
        assert!(start + len <= x.cols);
        let mut v = Tensor::zeros(x.rows, len);
        for r in 0..x.rows {
            v.row_mut(r).copy_from_slice(&x.row(r)[start..start + len]);
        }
        self.push(v, Op::SliceCols(a, start))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|&p| self.value(p).cols).sum();
        let mut v = Tensor::zeros(rows, cols);
        let mut off = 0;
        for &p in parts {
            let x = self.value(p);
            assert_eq!(x.rows, rows, "concat_cols row mismatch");
            for r in 0..rows {
                v.row_mut(r)[off..off + x.cols].copy_from_slice(x.row(r));
            }
            off += x.cols;
        }
        self.push(v, Op::ConcatCols(parts.to_vec()))
    }

    /// Selects rows of `table` by index.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Var {
        let t = self.value(table);
        let mut v = Tensor::zeros(ids.len(), t.cols);
        for (r, &id) in ids.iter().enumerate() {
            v.row_mut(r).copy_from_slice(t.row(id));
        }
        self.push(v, Op::Gather(table, ids.to_vec()))
    }

    /// Summed token cross-entropy of `logits` (one row per position).
    pub fn cross_entropy_sum(&mut self, logits: Var, targets: &[usize]) -> Var {
        let x = self.value(logits);
        assert_eq!(x.rows, targets.len());
        let mut probs = Tensor::zeros(x.rows, x.cols);
        let mut total = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            let row = x.row(r);
            let lse = log_sum_exp(row);
            total += lse - row[t];
            for (p, &l) in probs.row_mut(r).iter_mut().zip(row) {
                *p = (l - lse).exp();
            }
        }
        self.push(
            Tensor::scalar(total),
            Op::CrossEntropySum(logits, targets.to_vec(), probs),
        )
    }

    pub fn max_eps(&mut self, a: Var, eps: f64) -> Var {
        let v = self.value(a).map(|x| x.max(eps));
        self.push(v, Op::MaxEps(a, eps))
    }

    pub fn row_sum(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let data = (0..x.rows).map(|r| x.row(r).iter().sum()).collect();
        self.push(Tensor::from_vec(x.rows, 1, data), Op::RowSum(a))
    }

    /// Divides row `i` of `num` by `den[i, 0]`.
    pub fn div_by_col(&mut self, num: Var, den: Var) -> Var {
        let d = self.value(den);
        let mut v = self.value(num).clone();
        assert_eq!((d.rows, d.cols), (v.rows, 1), "div_by_col shape mismatch");
        for r in 0..v.rows {
            let dv = d.data[r];
            v.row_mut(r).iter_mut().for_each(|x| *x /= dv);
        }
        self.push(v, Op::DivByCol(num, den))
    }

    /// Row `t` of the result is row `t - 1` of `a`; row 0 is zero.
    pub fn shift_down(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut v = Tensor::zeros(x.rows, x.cols);
        if x.rows > 1 {
            v.data[x.cols..].copy_from_slice(&x.data[..(x.rows - 1) * x.cols]);
        }
        self.push(v, Op::ShiftDown(a))
    }

    /// Lower-triangular decay matrix from per-position log forget gates
    /// (`n x 1`): `M[t, i] = exp(sum_{i < j <= t} log_f[j])` for `i <= t`.
    pub fn decay(&mut self, log_f: Var) -> Var {
        let lf = self.value(log_f);
        assert_eq!(lf.cols, 1);
        let n = lf.rows;
        let mut v = Tensor::zeros(n, n);
        for t in 0..n {
            let mut acc = 0.0;
            let row = v.row_mut(t);
            row[t] = 1.0;
            for i in (0..t).rev() {
                acc += lf.data[i + 1];
                row[i] = acc.exp();
            }
        }
        self.push(v, Op::Decay(log_f))
    }

    /// Reverse pass from a scalar node.
    pub fn backward(&self, root: Var) -> Grads {
        assert_eq!(self.value(root).len(), 1, "backward root must be scalar");
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let y = &node.value;
            let mut acc = |v: Var, t: Tensor| match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&t),
                slot @ None => *slot = Some(t),
            };
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    acc(*a, g.matmul_bt(self.value(*b)));
                    acc(*b, self.value(*a).matmul_at(&g));
                }
                Op::MatMulBt(a, b) => {
                    acc(*a, g.matmul(self.value(*b)));
                    acc(*b, g.matmul_at(self.value(*a)));
                }
                Op::Transpose(a) => acc(*a, g.transpose()),
                Op::Add(a, b) => {
                    acc(*a, g.clone());
                    acc(*b, g);
                }
                Op::Mul(a, b) => {
                    acc(*a, g.zip_map(self.value(*b), |x, y| x * y));
                    acc(*b, g.zip_map(self.value(*a), |x, y| x * y));
                }
                Op::AddRow(a, row) => {
                    acc(*row, g.col_sums());
                    acc(*a, g);
                }
                Op::MulRow(a, row) => {
                    let r = self.value(*row);
                    let x = self.value(*a);
                    let mut ga = g.clone();
                    let mut gr = Tensor::zeros(1, r.cols);
                    for i in 0..g.rows {
                        for c in 0..g.cols {
                            ga.data[i * g.cols + c] *= r.data[c];
                            gr.data[c] += g.get(i, c) * x.get(i, c);
                        }
                    }
                    acc(*a, ga);
                    acc(*row, gr);
                }
                Op::AddConst(a) => acc(*a, g),
                Op::MulConst(a, c) => acc(*a, g.zip_map(c, |x, y| x * y)),
                Op::Scale(a, s) => acc(*a, g.map(|x| x * s)),
                Op::Relu(a) => acc(*a, g.zip_map(self.value(*a), |gx, x| if x > 0.0 { gx } else { 0.0 })),
                Op::Sigmoid(a) => acc(*a, g.zip_map(y, |gx, s| gx * s * (1.0 - s))),
                Op::LogSigmoid(a) => acc(
                    *a,
                    g.zip_map(self.value(*a), |gx, x| gx * crate::attention::sigmoid(-x)),
                ),
                Op::Sin(a) => acc(*a, g.zip_map(self.value(*a), |gx, x| gx * x.cos())),
                Op::Cos(a) => acc(*a, g.zip_map(self.value(*a), |gx, x| -gx * x.sin())),
                Op::SoftmaxRows(a) => {
                    let mut gx = Tensor::zeros(g.rows, g.cols);
                    for r in 0..g.rows {
                        let yr = y.row(r);
                        let gr = g.row(r);
                        let inner: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for (o, (&yy, &gg)) in gx.row_mut(r).iter_mut().zip(yr.iter().zip(gr)) {
                            *o = yy * (gg - inner);
                        }
                    }
                    acc(*a, gx);
                }
                Op::LayerNormRows(a, inv_std) => {
                    let mut gx = Tensor::zeros(g.rows, g.cols);
                    let n = g.cols as f64;
                    for (r, &is) in inv_std.iter().enumerate().take(g.rows) {
                        let yr = y.row(r);
                        let gr = g.row(r);
                        let mean_g = gr.iter().sum::<f64>() / n;
                        let mean_gy = gr.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>() / n;
                        for (o, (&gg, &yy)) in gx.row_mut(r).iter_mut().zip(gr.iter().zip(yr)) {
                            *o = is * (gg - mean_g - yy * mean_gy);
                        }
                    }
                    acc(*a, gx);
                }
                Op::L2NormRows(a, norms) => {
                    let mut gx = Tensor::zeros(g.rows, g.cols);
                    for (r, &n) in norms.iter().enumerate().take(g.rows) {
                        let yr = y.row(r);
                        let gr = g.row(r);
                        let clamped = n <= L2_EPS;
                        let inner: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for (o, (&gg, &yy)) in gx.row_mut(r).iter_mut().zip(gr.iter().zip(yr)) {
                            *o = if clamped { gg / n } else { (gg - yy * inner) / n };
                        }
                    }
                    acc(*a, gx);
                }
                Op::SliceCols(a, start) => {
                    let x = self.value(*a);
                    let mut gx = Tensor::zeros(x.rows, x.cols);
                    for r in 0..g.rows {
                        gx.row_mut(r)[*start..*start + g.cols].copy_from_slice(g.row(r));
                    }
                    acc(*a, gx);
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let cols = self.value(p).cols;
                        let mut gp = Tensor::zeros(g.rows, cols);
                        for r in 0..g.rows {
                            gp.row_mut(r).copy_from_slice(&g.row(r)[off..off + cols]);
                        }
                        off += cols;
                        acc(p, gp);
                    }
                }
                Op::Gather(table, ids) => {
                    let t = self.value(*table);
                    let mut gt = Tensor::zeros(t.rows, t.cols);
                    for (r, &id) in ids.iter().enumerate() {
                        for (o, x) in gt.row_mut(id).iter_mut().zip(g.row(r)) {
                            *o += x;
                        }
                    }
                    acc(*table, gt);
                }
                Op::CrossEntropySum(logits, targets, probs) => {
                    let s = g.item();
                    let mut gl = probs.map(|p| p * s);
                    for (r, &t) in targets.iter().enumerate() {
                        gl.data[r * gl.cols + t] -= s;
                    }
                    acc(*logits, gl);
                }
                Op::MaxEps(a, eps) => {
                    let e = *eps;
                    acc(*a, g.zip_map(self.value(*a), |gx, x| if x > e { gx } else { 0.0 }));
                }
                Op::RowSum(a) => {
                    let x = self.value(*a);
                    let mut gx = Tensor::zeros(x.rows, x.cols);
                    for r in 0..x.rows {
                        let gr = g.data[r];
                        gx.row_mut(r).iter_mut().for_each(|o| *o = gr);
                    }
                    acc(*a, gx);
                }
                Op::DivByCol(num, den) => {
                    let d = self.value(*den);
                    let mut gn = g.clone();
                    let mut gd = Tensor::zeros(d.rows, 1);
                    for r in 0..g.rows {
                        let dv = d.data[r];
                        let mut s = 0.0;
                        for (gg, yy) in gn.row_mut(r).iter_mut().zip(y.row(r)) {
                            s += *gg * yy;
                            *gg /= dv;
                        }
                        gd.data[r] = -s / dv;
                    }
                    acc(*num, gn);
                    acc(*den, gd);
                }
                Op::ShiftDown(a) => {
                    let mut gx = Tensor::zeros(g.rows, g.cols);
                    if g.rows > 1 {
                        let c = g.cols;
                        gx.data[..(g.rows - 1) * c].copy_from_slice(&g.data[c..]);
                    }
                    acc(*a, gx);
                }
                Op::Decay(log_f) => {
                    // d M[t,i] / d log_f[j] = M[t,i] for i < j <= t.
                    let n = y.rows;
                    let mut gl = Tensor::zeros(n, 1);
                    for t in 0..n {
                        let mut prefix = 0.0;
                        for j in 1..=t {
                            prefix += g.get(t, j - 1) * y.get(t, j - 1);
                            gl.data[j] += prefix;
                        }
                    }
                    acc(*log_f, gl);
                }
            }
        }
        Grads(grads)
    }
}

pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Writes the standardized `x` into `out`, returns `1 / std`.
pub(crate) fn layer_norm_into(x: &[f64], out: &mut [f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let inv_std = 1.0 / (var + LAYER_NORM_EPS).sqrt();
    for (o, v) in out.iter_mut().zip(x) {
        *o = (v - mean) * inv_std;
    }
    inv_std
}
