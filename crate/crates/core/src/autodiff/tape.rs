use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    ScaleRows(Var, Var),
    Scale(Var, f64),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    SoftmaxRows(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Matrix,
        rstd: Vec<f64>,
    },
    Relu(Var),
    Gelu(Var),
    Dropout(Var, Vec<f64>),
    Sum(Var),
    CrossEntropy {
        logits: Var,
        rows: Vec<(usize, usize)>,
        probs: Matrix,
    },
}

#[derive(Debug)]
struct Node {
    value: Arc<Matrix>,
    op: Op,
    requires_grad: bool,
}

/// Linear record of a forward pass. Nodes are appended in evaluation order, so
/// walking the list backwards is a reverse topological order.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    kink_signature: u64,
}

/// Gradients of one backward pass, indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Matrix> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(x: &Matrix) -> Matrix {
    let mut out = x.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    out
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Hash of every ReLU on/off pattern seen so far. Two evaluations with equal
    /// signatures took the same linear piece of every ReLU.
    pub fn kink_signature(&self) -> u64 {
        self.kink_signature
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.as_slice()[0]
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool, name: &str) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite(name.to_string()));
        }
        self.nodes.push(Node {
            value: Arc::new(value),
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Matrix) -> Result<Var> {
        self.push(value, Op::Leaf, true, "param")
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Matrix) -> Result<Var> {
        self.push(value, Op::Leaf, false, "constant")
    }

    /// Constant leaf sharing storage with the caller.
    pub fn constant_shared(&mut self, value: Arc<Matrix>) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite("constant".into()));
        }
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: false,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(&[a, b]);
        self.push(v, Op::MatMul(a, b), rg, "matmul")
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).transpose();
        let rg = self.rg(&[a]);
        self.push(v, Op::Transpose(a), rg, "transpose")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).add(self.value(b))?;
        let rg = self.rg(&[a, b]);
        self.push(v, Op::Add(a, b), rg, "add")
    }

    /// `x + 1·bᵀ` for a `1 x c` row `b`.
    pub fn add_row(&mut self, x: Var, b: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(b));
        if bv.rows() != 1 || bv.cols() != xv.cols() {
            return Err(Error::shape(
                "add_row",
                format!("{}x{} + row {}x{}", xv.rows(), xv.cols(), bv.rows(), bv.cols()),
            ));
        }
        let mut v = xv.clone();
        for i in 0..v.rows() {
            for (o, bb) in v.row_mut(i).iter_mut().zip(bv.as_slice()) {
                *o += bb;
            }
        }
        let rg = self.rg(&[x, b]);
        self.push(v, Op::AddRow(x, b), rg, "add_row")
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).hadamard(self.value(b))?;
        let rg = self.rg(&[a, b]);
        self.push(v, Op::Mul(a, b), rg, "mul")
    }

    /// `diag(s)·x` for an `r x 1` column `s`.
    pub fn scale_rows(&mut self, x: Var, s: Var) -> Result<Var> {
        let (xv, sv) = (self.value(x), self.value(s));
        if sv.cols() != 1 || sv.rows() != xv.rows() {
            return Err(Error::shape(
                "scale_rows",
                format!("diag({}x{}) · {}x{}", sv.rows(), sv.cols(), xv.rows(), xv.cols()),
            ));
        }
        let mut v = xv.clone();
        for i in 0..v.rows() {
            let f = sv.as_slice()[i];
            v.row_mut(i).iter_mut().for_each(|o| *o *= f);
        }
        let rg = self.rg(&[x, s]);
        self.push(v, Op::ScaleRows(x, s), rg, "scale_rows")
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Result<Var> {
        let v = self.value(x).scale(s);
        let rg = self.rg(&[x]);
        self.push(v, Op::Scale(x, s), rg, "scale")
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(first) = parts.first() else {
            return Err(Error::shape("concat_cols", "no inputs"));
        };
        let rows = self.value(*first).rows();
        let mut width = 0;
        for &p in parts {
            if self.value(p).rows() != rows {
                return Err(Error::shape("concat_cols", "row counts differ"));
            }
            width += self.value(p).cols();
        }
        let mut v = Matrix::zeros(rows, width);
        for i in 0..rows {
            let mut off = 0;
            for &p in parts {
                let src = self.value(p).row(i);
                v.row_mut(i)[off..off + src.len()].copy_from_slice(src);
                off += src.len();
            }
        }
        let rg = self.rg(parts);
        self.push(v, Op::ConcatCols(parts.to_vec()), rg, "concat_cols")
    }

    /// Columns `start..end`.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let v = self.value(x).columns(start, end)?;
        let rg = self.rg(&[x]);
        self.push(v, Op::SliceCols(x, start), rg, "slice_cols")
    }

    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        if self.value(x).cols() == 0 {
            return Err(Error::shape("softmax_rows", "empty rows"));
        }
        let v = softmax_rows(self.value(x));
        let rg = self.rg(&[x]);
        self.push(v, Op::SoftmaxRows(x), rg, "softmax_rows")
    }

    /// Per-row normalization to zero mean and unit variance, then `gain ⊙ · + bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let xv = self.value(x);
        let c = xv.cols();
        for (name, p) in [("gain", gain), ("bias", bias)] {
            let pv = self.value(p);
            if pv.rows() != 1 || pv.cols() != c {
                return Err(Error::shape(
                    "layer_norm",
                    format!("{name} is {}x{}, expected 1x{c}", pv.rows(), pv.cols()),
                ));
            }
        }
        let mut xhat = Matrix::zeros(xv.rows(), c);
        let mut rstd = Vec::with_capacity(xv.rows());
        for i in 0..xv.rows() {
            let row = xv.row(i);
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let r = 1.0 / (var + eps).sqrt();
            for (o, v) in xhat.row_mut(i).iter_mut().zip(row) {
                *o = (v - mean) * r;
            }
            rstd.push(r);
        }
        let (g, b) = (self.value(gain).as_slice(), self.value(bias).as_slice());
        let mut out = xhat.clone();
        for i in 0..out.rows() {
            for ((o, gg), bb) in out.row_mut(i).iter_mut().zip(g).zip(b) {
                *o = *o * gg + bb;
            }
        }
        let rg = self.rg(&[x, gain, bias]);
        self.push(
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            },
            rg,
            "layer_norm",
        )
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let xv = Arc::clone(&self.nodes[x.0].value);
        // FNV-1a over the on/off pattern.
        let mut h = self.kink_signature ^ 0xcbf2_9ce4_8422_2325;
        for &v in xv.as_slice() {
            h ^= (v > 0.0) as u64 + 1;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        self.kink_signature = h;
        let v = xv.map(|v| v.max(0.0));
        let rg = self.rg(&[x]);
        self.push(v, Op::Relu(x), rg, "relu")
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x).map(gelu);
        let rg = self.rg(&[x]);
        self.push(v, Op::Gelu(x), rg, "gelu")
    }

    /// Inverted dropout. Outside training, or with `p == 0`, returns `x` itself.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, p: f64, training: bool, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!("dropout rate {p} outside [0, 1)")));
        }
        if !training || p == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 - p;
        let xv = self.value(x);
        let mask: Vec<f64> = (0..xv.len())
            .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let mut v = xv.clone();
        for (o, m) in v.as_mut_slice().iter_mut().zip(&mask) {
            *o *= m;
        }
        let rg = self.rg(&[x]);
        self.push(v, Op::Dropout(x, mask), rg, "dropout")
    }

    /// Sum of all entries as a `1 x 1` value.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).sum();
        let rg = self.rg(&[x]);
        self.push(Matrix::filled(1, 1, s), Op::Sum(x), rg, "sum")
    }

    /// Mean over `mask` of `-log softmax(logits[i])[labels[i]]`, via log-sum-exp.
    pub fn masked_cross_entropy(&mut self, logits: Var, labels: &[usize], mask: &[usize]) -> Result<Var> {
        if mask.is_empty() {
            return Err(Error::InvalidArgument("cross-entropy over an empty mask".into()));
        }
        let lv = self.value(logits);
        if labels.len() != lv.rows() {
            return Err(Error::shape(
                "masked_cross_entropy",
                format!("{} labels for {} rows", labels.len(), lv.rows()),
            ));
        }
        let mut rows = Vec::with_capacity(mask.len());
        let mut probs = Matrix::zeros(mask.len(), lv.cols());
        let mut total = 0.0;
        for (r, &i) in mask.iter().enumerate() {
            if i >= lv.rows() || labels[i] >= lv.cols() {
                return Err(Error::shape(
                    "masked_cross_entropy",
                    format!("row {i} / label {} out of range", labels.get(i).copied().unwrap_or(0)),
                ));
            }
            let row = lv.row(i);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            total += lse - row[labels[i]];
            for (p, v) in probs.row_mut(r).iter_mut().zip(row) {
                *p = (v - lse).exp();
            }
            rows.push((i, labels[i]));
        }
        let loss = total / mask.len() as f64;
        let rg = self.rg(&[logits]);
        self.push(
            Matrix::filled(1, 1, loss),
            Op::CrossEntropy { logits, rows, probs },
            rg,
            "masked_cross_entropy",
        )
    }

    /// Reverse pass from a scalar. Gradients accumulate over fan-out.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(Error::shape(
                "backward",
                format!("loss must be 1x1, got {}x{}", lv.rows(), lv.cols()),
            ));
        }
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::filled(1, 1, 1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.backward_node(node, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Matrix>], v: Var, g: Matrix) -> Result<()> {
        if !self.nodes[v.0].requires_grad {
            return Ok(());
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => {
                *slot = Some(g);
                Ok(())
            }
        }
    }

    fn backward_node(&self, node: &Node, g: &Matrix, grads: &mut [Option<Matrix>]) -> Result<()> {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.requires_grad(*a) {
                    let ga = g.matmul_nt(self.value(*b))?;
                    self.accumulate(grads, *a, ga)?;
                }
                if self.requires_grad(*b) {
                    let gb = self.value(*a).matmul_tn(g)?;
                    self.accumulate(grads, *b, gb)?;
                }
            }
            Op::Transpose(a) => self.accumulate(grads, *a, g.transpose())?,
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone())?;
                self.accumulate(grads, *b, g.clone())?;
            }
            Op::AddRow(x, b) => {
                self.accumulate(grads, *x, g.clone())?;
                if self.requires_grad(*b) {
                    let mut gb = Matrix::zeros(1, g.cols());
                    for i in 0..g.rows() {
                        for (o, v) in gb.as_mut_slice().iter_mut().zip(g.row(i)) {
                            *o += v;
                        }
                    }
                    self.accumulate(grads, *b, gb)?;
                }
            }
            Op::Mul(a, b) => {
                if self.requires_grad(*a) {
                    self.accumulate(grads, *a, g.hadamard(self.value(*b))?)?;
                }
                if self.requires_grad(*b) {
                    self.accumulate(grads, *b, g.hadamard(self.value(*a))?)?;
                }
            }
            Op::ScaleRows(x, s) => {
                let sv = self.value(*s);
                if self.requires_grad(*x) {
                    let mut gx = g.clone();
                    for i in 0..gx.rows() {
                        let f = sv.as_slice()[i];
                        gx.row_mut(i).iter_mut().for_each(|o| *o *= f);
                    }
                    self.accumulate(grads, *x, gx)?;
                }
                if self.requires_grad(*s) {
                    let xv = self.value(*x);
                    let gs = Matrix::from_fn(sv.rows(), 1, |i, _| {
                        g.row(i).iter().zip(xv.row(i)).map(|(a, b)| a * b).sum()
                    });
                    self.accumulate(grads, *s, gs)?;
                }
            }
            Op::Scale(x, s) => self.accumulate(grads, *x, g.scale(*s))?,
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    if self.requires_grad(p) {
                        self.accumulate(grads, p, g.columns(off, off + w)?)?;
                    }
                    off += w;
                }
            }
            Op::SliceCols(x, start) => {
                if self.requires_grad(*x) {
                    let xv = self.value(*x);
                    let mut gx = Matrix::zeros(xv.rows(), xv.cols());
                    for i in 0..g.rows() {
                        gx.row_mut(i)[*start..*start + g.cols()].copy_from_slice(g.row(i));
                    }
                    self.accumulate(grads, *x, gx)?;
                }
            }
            Op::SoftmaxRows(x) => {
                let y = &node.value;
                let mut gx = Matrix::zeros(y.rows(), y.cols());
                for i in 0..y.rows() {
                    let (yr, gr) = (y.row(i), g.row(i));
                    let inner: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for ((o, yv), gv) in gx.row_mut(i).iter_mut().zip(yr).zip(gr) {
                        *o = yv * (gv - inner);
                    }
                }
                self.accumulate(grads, *x, gx)?;
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            } => {
                let c = xhat.cols();
                let gv = self.value(*gain).as_slice();
                if self.requires_grad(*gain) || self.requires_grad(*bias) {
                    let mut gg = Matrix::zeros(1, c);
                    let mut gb = Matrix::zeros(1, c);
                    for i in 0..g.rows() {
                        for j in 0..c {
                            gg.as_mut_slice()[j] += g[(i, j)] * xhat[(i, j)];
                            gb.as_mut_slice()[j] += g[(i, j)];
                        }
                    }
                    self.accumulate(grads, *gain, gg)?;
                    self.accumulate(grads, *bias, gb)?;
                }
                if self.requires_grad(*x) {
                    let mut gx = Matrix::zeros(g.rows(), c);
                    for i in 0..g.rows() {
                        let dxhat: Vec<f64> = g.row(i).iter().zip(gv).map(|(a, b)| a * b).collect();
                        let sum_d: f64 = dxhat.iter().sum();
                        let sum_dx: f64 = dxhat.iter().zip(xhat.row(i)).map(|(a, b)| a * b).sum();
                        let scale = rstd[i] / c as f64;
                        for ((o, d), xh) in gx.row_mut(i).iter_mut().zip(&dxhat).zip(xhat.row(i)) {
                            *o = scale * (c as f64 * d - sum_d - xh * sum_dx);
                        }
                    }
                    self.accumulate(grads, *x, gx)?;
                }
            }
            Op::Relu(x) => {
                let xv = self.value(*x);
                let gx = g.zip_with(xv, "relu_backward", |gv, v| if v > 0.0 { gv } else { 0.0 })?;
                self.accumulate(grads, *x, gx)?;
            }
            Op::Gelu(x) => {
                let xv = self.value(*x);
                let gx = g.zip_with(xv, "gelu_backward", |gv, v| gv * gelu_grad(v))?;
                self.accumulate(grads, *x, gx)?;
            }
            Op::Dropout(x, mask) => {
                let mut gx = g.clone();
                for (o, m) in gx.as_mut_slice().iter_mut().zip(mask) {
                    *o *= m;
                }
                self.accumulate(grads, *x, gx)?;
            }
            Op::Sum(x) => {
                let xv = self.value(*x);
                let s = g.as_slice()[0];
                self.accumulate(grads, *x, Matrix::filled(xv.rows(), xv.cols(), s))?;
            }
            Op::CrossEntropy { logits, rows, probs } => {
                let lv = self.value(*logits);
                let scale = g.as_slice()[0] / rows.len() as f64;
                let mut gl = Matrix::zeros(lv.rows(), lv.cols());
                for (r, &(i, label)) in rows.iter().enumerate() {
                    for (j, (o, p)) in gl.row_mut(i).iter_mut().zip(probs.row(r)).enumerate() {
                        let target = if j == label { 1.0 } else { 0.0 };
                        *o += scale * (p - target);
                    }
                }
                self.accumulate(grads, *logits, gl)?;
            }
        }
        Ok(())
    }
}
