//! Dense row-major `f64` matrices and a reverse-mode tape over them.
//!
//! Every operation appends a node holding its value; [`Tape::backward`]
//! walks the nodes in reverse and accumulates adjoints. Parameter leaves
//! remember their slot in the owning store so gradients can be gathered
//! per parameter afterwards.

#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Self { rows, cols, data }
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

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    fn add_assign(&mut self, other: &Mat) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// `self * other`.
    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "matmul inner dimension");
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let o = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in o.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self * other^T`.
    pub fn matmul_bt(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.cols, "matmul_bt inner dimension");
        let mut out = Mat::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let a = self.row(i);
            for j in 0..other.rows {
                out.data[i * other.rows + j] = a.iter().zip(other.row(j)).map(|(x, y)| x * y).sum();
            }
        }
        out
    }

    /// `self^T * other`.
    pub fn matmul_at(&self, other: &Mat) -> Mat {
        assert_eq!(self.rows, other.rows, "matmul_at inner dimension");
        let mut out = Mat::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let b = other.row(k);
            for (i, &a) in self.row(k).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let o = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, &b) in o.iter_mut().zip(b) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

pub const LAYERNORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulBt(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddRow(Var, Var),
    MulRow(Var, Var),
    LayerNorm(Var, Vec<f64>),
    Softmax(Var),
    Silu(Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    ConcatRows(Vec<Var>),
    SliceRows(Var, usize),
    GatherRows(Var, Vec<usize>),
    Mse(Var, Var),
    Blend3 {
        base: Var,
        a: Var,
        b: Var,
        wa: Vec<f64>,
        wb: Vec<f64>,
    },
}

#[derive(Debug, Clone)]
struct Node {
    value: Mat,
    op: Op,
    param: Option<usize>,
}

/// Records a computation for reverse-mode differentiation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    param_vars: Vec<(usize, Var)>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Mat, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            op,
            param: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Constant input.
    pub fn input(&mut self, value: Mat) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Leaf bound to parameter slot `index`; repeated calls reuse the node.
    pub fn param(&mut self, index: usize, value: &Mat) -> Var {
        if let Some(&(_, v)) = self.param_vars.iter().find(|(i, _)| *i == index) {
            return v;
        }
        let v = self.push(value.clone(), Op::Leaf);
        self.nodes[v.0].param = Some(index);
        self.param_vars.push((index, v));
        v
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

    fn zip_with(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Mat {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.shape(), y.shape(), "elementwise shape");
        Mat::from_vec(
            x.rows,
            x.cols,
            x.data.iter().zip(&y.data).map(|(p, q)| f(*p, *q)).collect(),
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip_with(a, b, |p, q| p + q);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip_with(a, b, |p, q| p - q);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip_with(a, b, |p, q| p * q);
        self.push(v, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let x = self.value(a);
        let v = Mat::from_vec(x.rows, x.cols, x.data.iter().map(|p| p * s).collect());
        self.push(v, Op::Scale(a, s))
    }

    fn broadcast_row(&self, a: Var, row: Var, f: impl Fn(f64, f64) -> f64) -> Mat {
        let (x, r) = (self.value(a), self.value(row));
        assert!(r.rows == 1 && r.cols == x.cols, "row broadcast shape");
        let mut out = x.clone();
        for i in 0..x.rows {
            for (o, &b) in out.row_mut(i).iter_mut().zip(&r.data) {
                *o = f(*o, b);
            }
        }
        out
    }

    /// Adds a `1 x n` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let v = self.broadcast_row(a, row, |p, q| p + q);
        self.push(v, Op::AddRow(a, row))
    }

    /// Multiplies every row of `a` elementwise by a `1 x n` row.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Var {
        let v = self.broadcast_row(a, row, |p, q| p * q);
        self.push(v, Op::MulRow(a, row))
    }

    /// Per-row standardisation without affine terms.
    pub fn layernorm(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut out = x.clone();
        let mut inv = Vec::with_capacity(x.rows);
        for i in 0..x.rows {
            let r = out.row_mut(i);
            let n = r.len() as f64;
            let mean = r.iter().sum::<f64>() / n;
            let var = r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let s = 1.0 / (var + LAYERNORM_EPS).sqrt();
            r.iter_mut().for_each(|v| *v = (*v - mean) * s);
            inv.push(s);
        }
        self.push(out, Op::LayerNorm(a, inv))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        for i in 0..out.rows {
            let r = out.row_mut(i);
            let m = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in r.iter_mut() {
                *v = (*v - m).exp();
                sum += *v;
            }
            r.iter_mut().for_each(|v| *v /= sum);
        }
        self.push(out, Op::Softmax(a))
    }

    pub fn silu(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let v = Mat::from_vec(
            x.rows,
            x.cols,
            x.data.iter().map(|&p| p / (1.0 + (-p).exp())).collect(),
        );
        self.push(v, Op::Silu(a))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|p| self.value(*p).cols).sum();
        let mut out = Mat::zeros(rows, cols);
        for i in 0..rows {
            let mut off = 0;
            for p in parts {
                let m = self.value(*p);
                assert_eq!(m.rows, rows, "concat_cols rows");
                out.row_mut(i)[off..off + m.cols].copy_from_slice(m.row(i));
                off += m.cols;
            }
        }
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let x = self.value(a);
        assert!(start + len <= x.cols, "slice_cols range");
        let mut out = Mat::zeros(x.rows, len);
        for i in 0..x.rows {
            out.row_mut(i).copy_from_slice(&x.row(i)[start..start + len]);
        }
        self.push(out, Op::SliceCols(a, start))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.value(parts[0]).cols;
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            let m = self.value(*p);
            assert_eq!(m.cols, cols, "concat_rows cols");
            data.extend_from_slice(&m.data);
            rows += m.rows;
        }
        self.push(Mat::from_vec(rows, cols, data), Op::ConcatRows(parts.to_vec()))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let x = self.value(a);
        assert!(start + len <= x.rows, "slice_rows range");
        let out = Mat::from_vec(len, x.cols, x.data[start * x.cols..(start + len) * x.cols].to_vec());
        self.push(out, Op::SliceRows(a, start))
    }

    /// Rows `ids` of `table`, in order.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Var {
        let t = self.value(table);
        let mut data = Vec::with_capacity(ids.len() * t.cols);
        for &i in ids {
            data.extend_from_slice(t.row(i));
        }
        let out = Mat::from_vec(ids.len(), t.cols, data);
        self.push(out, Op::GatherRows(table, ids.to_vec()))
    }

    /// Mean squared difference as a `1 x 1` node.
    pub fn mse(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.shape(), y.shape(), "mse shape");
        let s = x.data.iter().zip(&y.data).map(|(p, q)| (p - q).powi(2)).sum::<f64>();
        let v = Mat::scalar(s / x.len() as f64);
        self.push(v, Op::Mse(a, b))
    }

    /// Row-weighted mix `(1 - wa_i - wb_i) * base + wa_i * a + wb_i * b`,
    /// with one constant weight pair per row. Zero-weight terms are left out
    /// of the sum rather than added as `0 * v`.
    pub fn blend3(&mut self, base: Var, a: Var, b: Var, wa: Vec<f64>, wb: Vec<f64>) -> Var {
        let (x, p, q) = (self.value(base), self.value(a), self.value(b));
        assert!(x.shape() == p.shape() && x.shape() == q.shape(), "blend3 shape");
        assert!(wa.len() == x.rows && wb.len() == x.rows, "blend3 weights");
        let mut out = Mat::zeros(x.rows, x.cols);
        for i in 0..x.rows {
            let wbase = 1.0 - wa[i] - wb[i];
            for j in 0..x.cols {
                let k = i * x.cols + j;
                out.data[k] = [(wbase, x.data[k]), (wa[i], p.data[k]), (wb[i], q.data[k])]
                    .into_iter()
                    .filter(|(w, _)| *w != 0.0)
                    .map(|(w, v)| w * v)
                    .reduce(|s, t| s + t)
                    .unwrap_or(0.0);
            }
        }
        self.push(out, Op::Blend3 { base, a, b, wa, wb })
    }

    /// Adjoints of every node, seeded with `1` at the scalar `loss`.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.value(loss).shape(), (1, 1), "loss must be scalar");
        let mut grads: Vec<Option<Mat>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Mat::scalar(1.0));
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Gradients { grads }
    }

    fn propagate(&self, idx: usize, g: &Mat, grads: &mut [Option<Mat>]) {
        let mut acc = |v: Var, d: Mat| match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&d),
            slot => *slot = Some(d),
        };
        let node = &self.nodes[idx];
        let y = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                acc(*a, g.matmul_bt(self.value(*b)));
                acc(*b, self.value(*a).matmul_at(g));
            }
            Op::MatMulBt(a, b) => {
                acc(*a, g.matmul(self.value(*b)));
                acc(*b, g.matmul_at(self.value(*a)));
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, map(g, |v| -v));
            }
            Op::Mul(a, b) => {
                acc(*a, zip(g, self.value(*b), |p, q| p * q));
                acc(*b, zip(g, self.value(*a), |p, q| p * q));
            }
            Op::Scale(a, s) => acc(*a, map(g, |v| v * s)),
            Op::AddRow(a, row) => {
                acc(*a, g.clone());
                acc(*row, col_sums(g));
            }
            Op::MulRow(a, row) => {
                let r = self.value(*row);
                let mut da = g.clone();
                for i in 0..da.rows {
                    for (d, &w) in da.row_mut(i).iter_mut().zip(&r.data) {
                        *d *= w;
                    }
                }
                acc(*a, da);
                acc(*row, col_sums(&zip(g, self.value(*a), |p, q| p * q)));
            }
            Op::LayerNorm(a, inv) => {
                let mut dx = Mat::zeros(y.rows, y.cols);
                let n = y.cols as f64;
                for i in 0..y.rows {
                    let (yr, gr) = (y.row(i), g.row(i));
                    let mg = gr.iter().sum::<f64>() / n;
                    let mgy = gr.iter().zip(yr).map(|(p, q)| p * q).sum::<f64>() / n;
                    for (j, d) in dx.row_mut(i).iter_mut().enumerate() {
                        *d = inv[i] * (gr[j] - mg - yr[j] * mgy);
                    }
                }
                acc(*a, dx);
            }
            Op::Softmax(a) => {
                let mut dx = Mat::zeros(y.rows, y.cols);
                for i in 0..y.rows {
                    let (yr, gr) = (y.row(i), g.row(i));
                    let dot = gr.iter().zip(yr).map(|(p, q)| p * q).sum::<f64>();
                    for (j, d) in dx.row_mut(i).iter_mut().enumerate() {
                        *d = yr[j] * (gr[j] - dot);
                    }
                }
                acc(*a, dx);
            }
            Op::Silu(a) => {
                let x = self.value(*a);
                acc(
                    *a,
                    zip(g, x, |gv, xv| {
                        let s = 1.0 / (1.0 + (-xv).exp());
                        gv * s * (1.0 + xv * (1.0 - s))
                    }),
                );
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for p in parts {
                    let cols = self.value(*p).cols;
                    let mut d = Mat::zeros(g.rows, cols);
                    for i in 0..g.rows {
                        d.row_mut(i).copy_from_slice(&g.row(i)[off..off + cols]);
                    }
                    acc(*p, d);
                    off += cols;
                }
            }
            Op::SliceCols(a, start) => {
                let x = self.value(*a);
                let mut d = Mat::zeros(x.rows, x.cols);
                for i in 0..x.rows {
                    d.row_mut(i)[*start..*start + g.cols].copy_from_slice(g.row(i));
                }
                acc(*a, d);
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for p in parts {
                    let rows = self.value(*p).rows;
                    let d = Mat::from_vec(rows, g.cols, g.data[off * g.cols..(off + rows) * g.cols].to_vec());
                    acc(*p, d);
                    off += rows;
                }
            }
            Op::SliceRows(a, start) => {
                let x = self.value(*a);
                let mut d = Mat::zeros(x.rows, x.cols);
                d.data[start * x.cols..(start + g.rows) * x.cols].copy_from_slice(&g.data);
                acc(*a, d);
            }
            Op::GatherRows(table, ids) => {
                let t = self.value(*table);
                let mut d = Mat::zeros(t.rows, t.cols);
                for (k, &i) in ids.iter().enumerate() {
                    for (o, &v) in d.row_mut(i).iter_mut().zip(g.row(k)) {
                        *o += v;
                    }
                }
                acc(*table, d);
            }
            Op::Mse(a, b) => {
                let (x, t) = (self.value(*a), self.value(*b));
                let s = 2.0 * g.data[0] / x.len() as f64;
                let d = zip(x, t, |p, q| s * (p - q));
                acc(*b, map(&d, |v| -v));
                acc(*a, d);
            }
            Op::Blend3 { base, a, b, wa, wb } => {
                let scaled = |w: &dyn Fn(usize) -> f64| {
                    let mut d = g.clone();
                    for i in 0..d.rows {
                        let s = w(i);
                        d.row_mut(i).iter_mut().for_each(|v| *v *= s);
                    }
                    d
                };
                acc(*base, scaled(&|i| 1.0 - wa[i] - wb[i]));
                acc(*a, scaled(&|i| wa[i]));
                acc(*b, scaled(&|i| wb[i]));
            }
        }
    }
}

fn map(m: &Mat, f: impl Fn(f64) -> f64) -> Mat {
    Mat::from_vec(m.rows, m.cols, m.data.iter().map(|v| f(*v)).collect())
}

fn zip(a: &Mat, b: &Mat, f: impl Fn(f64, f64) -> f64) -> Mat {
    Mat::from_vec(a.rows, a.cols, a.data.iter().zip(&b.data).map(|(p, q)| f(*p, *q)).collect())
}

fn col_sums(g: &Mat) -> Mat {
    let mut out = Mat::zeros(1, g.cols);
    for i in 0..g.rows {
        for (o, v) in out.data.iter_mut().zip(g.row(i)) {
            *o += v;
        }
    }
    out
}

/// Adjoints produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Mat>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Mat> {
        self.grads[v.0].as_ref()
    }

    /// Gradient per parameter slot; `None` where the loss does not depend
    /// on the parameter.
    pub fn for_params(&self, tape: &Tape, count: usize) -> Vec<Option<Mat>> {
        let mut out = vec![None; count];
        for &(index, v) in &tape.param_vars {
            if index < count {
                out[index] = self.grads[v.0].clone();
            }
        }
        out
    }
}
