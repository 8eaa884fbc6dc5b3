//! Reverse-mode automatic differentiation over row-major 2-D arrays.
//!
//! A [`Tape`] records every operation of one forward pass. [`Tape::backward`]
//! walks the record in reverse and fills the gradient slot of each node.

use crate::activations::{sital_derivative, sital_param_gradient, ActivationSpec};

/// Value and gradient of one tape node. Vectors are `1 × n` arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffArray {
    pub rows: usize,
    pub cols: usize,
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
}

impl DiffArray {
    fn new(rows: usize, cols: usize, value: Vec<f64>) -> Self {
        debug_assert_eq!(value.len(), rows * cols);
        DiffArray {
            rows,
            cols,
            grad: vec![0.0; value.len()],
            value,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.value[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.value[r * self.cols..(r + 1) * self.cols]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    MulRow(Var, Var),
    OneMinus(Var),
    Scale(Var, f64),
    MatMul(Var, Var),
    Transpose(Var),
    Tanh(Var),
    Sigmoid(Var),
    Act {
        x: Var,
        spec: ActivationSpec,
        gamma: Option<Var>,
        eta: Option<Var>,
    },
    SliceCols(Var, usize),
    Row(Var, usize),
    StackRows(Vec<Var>),
    ConcatCols(Var, Var),
    BroadcastRows(Var),
    Conv1d {
        x: Var,
        w: Var,
        b: Var,
        pad_left: usize,
        width: usize,
    },
    /// Flat source index for every output element.
    Gather(Var, Vec<usize>),
    SoftmaxRows(Var),
    SoftmaxCrossEntropy {
        logits: Var,
        probs: Vec<f64>,
        targets: Vec<usize>,
    },
    SumAll(Var),
    MeanAll(Var),
}

#[derive(Debug, Clone)]
struct Node {
    data: DiffArray,
    op: Op,
}

#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
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

    pub fn get(&self, v: Var) -> &DiffArray {
        &self.nodes[v.0].data
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].data.value
    }

    pub fn grad(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].data.grad
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].data.shape()
    }

    fn push(&mut self, rows: usize, cols: usize, value: Vec<f64>, op: Op) -> Var {
        self.nodes.push(Node {
            data: DiffArray::new(rows, cols, value),
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, rows: usize, cols: usize, value: Vec<f64>) -> Var {
        assert_eq!(
            value.len(),
            rows * cols,
            "leaf data does not match {rows}x{cols}"
        );
        self.push(rows, cols, value, Op::Leaf)
    }

    pub fn zeros(&mut self, rows: usize, cols: usize) -> Var {
        self.leaf(rows, cols, vec![0.0; rows * cols])
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let (r, c) = self.shape(a);
        let v = self.value(a).iter().map(|&x| f(x)).collect();
        self.push(r, c, v, op)
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) {
        assert_eq!(self.shape(a), self.shape(b), "{what}: shape mismatch");
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.same_shape(a, b, "add");
        let v = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x + y)
            .collect();
        let (r, c) = self.shape(a);
        self.push(r, c, v, Op::Add(a, b))
    }

    /// `a + row` with `row` (1 × c) broadcast over the rows of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (r, c) = self.shape(a);
        assert_eq!(self.shape(row), (1, c), "add_row: shape mismatch");
        let rv = self.value(row);
        let v = self
            .value(a)
            .iter()
            .enumerate()
            .map(|(i, x)| x + rv[i % c])
            .collect();
        self.push(r, c, v, Op::AddRow(a, row))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.same_shape(a, b, "mul");
        let v = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x * y)
            .collect();
        let (r, c) = self.shape(a);
        self.push(r, c, v, Op::Mul(a, b))
    }

    /// `a ⊙ row` with `row` (1 × c) broadcast over the rows of `a`.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Var {
        let (r, c) = self.shape(a);
        assert_eq!(self.shape(row), (1, c), "mul_row: shape mismatch");
        let rv = self.value(row);
        let v = self
            .value(a)
            .iter()
            .enumerate()
            .map(|(i, x)| x * rv[i % c])
            .collect();
        self.push(r, c, v, Op::MulRow(a, row))
    }

    pub fn one_minus(&mut self, a: Var) -> Var {
        self.unary(a, |x| 1.0 - x, Op::OneMinus(a))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        self.unary(a, |x| k * x, Op::Scale(a, k))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        assert_eq!(k, k2, "matmul: inner dimensions {k} and {k2}");
        let (av, bv) = (self.value(a), self.value(b));
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let orow = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let x = av[i * k + p];
                if x != 0.0 {
                    for (o, w) in orow.iter_mut().zip(&bv[p * n..(p + 1) * n]) {
                        *o += x * w;
                    }
                }
            }
        }
        self.push(m, n, out, Op::MatMul(a, b))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let av = self.value(a);
        let v = (0..c * r).map(|i| av[(i % r) * c + i / r]).collect();
        self.push(c, r, v, Op::Transpose(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, crate::activations::sigmoid, Op::Sigmoid(a))
    }

    /// Elementwise activation. For Sital, `gamma` and `eta` may be `1 × 1`
    /// nodes that receive gradients; they override the values in `spec`.
    pub fn act(
        &mut self,
        x: Var,
        spec: ActivationSpec,
        gamma: Option<Var>,
        eta: Option<Var>,
    ) -> Var {
        let spec = self.resolved_spec(spec, gamma, eta);
        self.unary(
            x,
            |v| spec.apply(v),
            Op::Act {
                x,
                spec,
                gamma,
                eta,
            },
        )
    }

    fn resolved_spec(
        &self,
        spec: ActivationSpec,
        gamma: Option<Var>,
        eta: Option<Var>,
    ) -> ActivationSpec {
        match spec {
            ActivationSpec::Sital { gamma: g0, eta: e0 } => ActivationSpec::Sital {
                gamma: gamma.map_or(g0, |g| self.value(g)[0]),
                eta: eta.map_or(e0, |e| self.value(e)[0]),
            },
            other => other,
        }
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let (r, c) = self.shape(a);
        assert!(start + len <= c, "slice_cols out of range");
        let av = self.value(a);
        let v = (0..r)
            .flat_map(|i| av[i * c + start..i * c + start + len].iter().copied())
            .collect();
        self.push(r, len, v, Op::SliceCols(a, start))
    }

    pub fn row(&mut self, a: Var, i: usize) -> Var {
        let (r, c) = self.shape(a);
        assert!(i < r, "row {i} out of {r}");
        let v = self.value(a)[i * c..(i + 1) * c].to_vec();
        self.push(1, c, v, Op::Row(a, i))
    }

    pub fn stack_rows(&mut self, rows: &[Var]) -> Var {
        assert!(!rows.is_empty(), "stack_rows of nothing");
        let c = self.shape(rows[0]).1;
        let mut v = Vec::with_capacity(rows.len() * c);
        for &r in rows {
            assert_eq!(self.shape(r), (1, c), "stack_rows: shape mismatch");
            v.extend_from_slice(self.value(r));
        }
        self.push(rows.len(), c, v, Op::StackRows(rows.to_vec()))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let (r, ca) = self.shape(a);
        let (rb, cb) = self.shape(b);
        assert_eq!(r, rb, "concat_cols: row counts {r} and {rb}");
        let (av, bv) = (self.value(a), self.value(b));
        let mut v = Vec::with_capacity(r * (ca + cb));
        for i in 0..r {
            v.extend_from_slice(&av[i * ca..(i + 1) * ca]);
            v.extend_from_slice(&bv[i * cb..(i + 1) * cb]);
        }
        self.push(r, ca + cb, v, Op::ConcatCols(a, b))
    }

    pub fn broadcast_rows(&mut self, a: Var, n: usize) -> Var {
        let (r, c) = self.shape(a);
        assert_eq!(r, 1, "broadcast_rows needs a row vector");
        let v = self.value(a).repeat(n);
        self.push(n, c, v, Op::BroadcastRows(a))
    }

    /// 1-D convolution over rows. `x` is `n × c`, `w` is `(width·c) × f` with
    /// row `j·c + ch` holding tap `j` of input channel `ch`, `b` is `1 × f`.
    /// Out-of-range rows read as zero.
    pub fn conv1d(
        &mut self,
        x: Var,
        w: Var,
        b: Var,
        width: usize,
        pad_left: usize,
        pad_right: usize,
    ) -> Var {
        let (n, c) = self.shape(x);
        let (wr, f) = self.shape(w);
        assert_eq!(
            wr,
            width * c,
            "conv1d: kernel rows {wr} for width {width} x {c} channels"
        );
        assert_eq!(self.shape(b), (1, f), "conv1d: bias shape");
        assert!(
            n + pad_left + pad_right >= width,
            "conv1d: input shorter than kernel"
        );
        let m = n + pad_left + pad_right + 1 - width;
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        let mut out = Vec::with_capacity(m * f);
        for _ in 0..m {
            out.extend_from_slice(bv);
        }
        for t in 0..m {
            let orow = &mut out[t * f..(t + 1) * f];
            for j in 0..width {
                let src = t + j;
                if src < pad_left || src - pad_left >= n {
                    continue;
                }
                let xrow = &xv[(src - pad_left) * c..(src - pad_left + 1) * c];
                for (ch, &xval) in xrow.iter().enumerate() {
                    let wrow = &wv[(j * c + ch) * f..(j * c + ch + 1) * f];
                    for (o, wt) in orow.iter_mut().zip(wrow) {
                        *o += xval * wt;
                    }
                }
            }
        }
        self.push(
            m,
            f,
            out,
            Op::Conv1d {
                x,
                w,
                b,
                pad_left,
                width,
            },
        )
    }

    fn gather(&mut self, a: Var, rows: usize, cols: usize, index: Vec<usize>) -> Var {
        let av = self.value(a);
        let v = index.iter().map(|&i| av[i]).collect();
        self.push(rows, cols, v, Op::Gather(a, index))
    }

    /// Max over windows of `size` rows taken every `stride` rows. With
    /// `keep_len`, windows start at every row and are truncated at the end,
    /// so the output has as many rows as the input.
    pub fn max_pool(&mut self, a: Var, size: usize, stride: usize, keep_len: bool) -> Var {
        let (n, c) = self.shape(a);
        assert!(size >= 1 && stride >= 1);
        let starts: Vec<usize> = if keep_len {
            (0..n).step_by(stride).collect()
        } else {
            assert!(n >= size, "max_pool: {n} rows for window {size}");
            (0..=(n - size)).step_by(stride).collect()
        };
        let av = self.value(a);
        let mut index = Vec::with_capacity(starts.len() * c);
        for &s in &starts {
            let end = (s + size).min(n);
            for ch in 0..c {
                let best = (s..end).fold(s, |b, r| {
                    if av[r * c + ch] > av[b * c + ch] {
                        r
                    } else {
                        b
                    }
                });
                index.push(best * c + ch);
            }
        }
        self.gather(a, starts.len(), c, index)
    }

    pub fn crop_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let (n, c) = self.shape(a);
        assert!(start + len <= n, "crop_rows out of range");
        self.gather(a, len, c, (start * c..(start + len) * c).collect())
    }

    /// Column-wise max over all rows, as a `1 × c` row.
    pub fn max_rows(&mut self, a: Var) -> Var {
        let n = self.shape(a).0;
        self.max_pool(a, n, n.max(1), false)
    }

    /// Softmax along each row.
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let v = softmax_rows(self.value(a), r, c);
        self.push(r, c, v, Op::SoftmaxRows(a))
    }

    /// Mean over rows of `−ln softmax(logits_r)[target_r]`, as `1 × 1`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Var {
        let (r, c) = self.shape(logits);
        assert_eq!(targets.len(), r, "one target per row");
        assert!(targets.iter().all(|&t| t < c), "target out of range");
        let probs = softmax_rows(self.value(logits), r, c);
        let loss = targets
            .iter()
            .enumerate()
            .map(|(i, &t)| -probs[i * c + t].max(f64::MIN_POSITIVE).ln())
            .sum::<f64>()
            / r as f64;
        self.push(
            1,
            1,
            vec![loss],
            Op::SoftmaxCrossEntropy {
                logits,
                probs,
                targets: targets.to_vec(),
            },
        )
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().sum();
        self.push(1, 1, vec![s], Op::SumAll(a))
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let m = v.iter().sum::<f64>() / v.len() as f64;
        self.push(1, 1, vec![m], Op::MeanAll(a))
    }

    /// Seed `d out / d out = 1` and propagate. Gradients of earlier passes are
    /// cleared first.
    pub fn backward(&mut self, out: Var) {
        assert_eq!(self.shape(out), (1, 1), "backward needs a scalar");
        for n in &mut self.nodes {
            n.data.grad.iter_mut().for_each(|g| *g = 0.0);
        }
        self.nodes[out.0].data.grad[0] = 1.0;
        for i in (0..=out.0).rev() {
            let g = std::mem::take(&mut self.nodes[i].data.grad);
            if g.iter().any(|&x| x != 0.0) {
                let op = std::mem::replace(&mut self.nodes[i].op, Op::Leaf);
                self.propagate(i, &op, &g);
                self.nodes[i].op = op;
            }
            self.nodes[i].data.grad = g;
        }
    }

    fn acc(&mut self, v: Var) -> &mut Vec<f64> {
        &mut self.nodes[v.0].data.grad
    }

    fn propagate(&mut self, i: usize, op: &Op, g: &[f64]) {
        match op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                add_into(self.acc(*a), g);
                add_into(self.acc(*b), g);
            }
            Op::AddRow(a, row) => {
                add_into(self.acc(*a), g);
                let c = self.shape(*row).1;
                let gr = self.acc(*row);
                for (k, x) in g.iter().enumerate() {
                    gr[k % c] += x;
                }
            }
            Op::Mul(a, b) => {
                let bv = self.value(*b).to_vec();
                let av = self.value(*a).to_vec();
                self.acc(*a)
                    .iter_mut()
                    .zip(g.iter().zip(&bv))
                    .for_each(|(d, (x, y))| *d += x * y);
                self.acc(*b)
                    .iter_mut()
                    .zip(g.iter().zip(&av))
                    .for_each(|(d, (x, y))| *d += x * y);
            }
            Op::MulRow(a, row) => {
                let c = self.shape(*row).1;
                let rv = self.value(*row).to_vec();
                let av = self.value(*a).to_vec();
                self.acc(*a)
                    .iter_mut()
                    .enumerate()
                    .for_each(|(k, d)| *d += g[k] * rv[k % c]);
                let gr = self.acc(*row);
                for (k, x) in g.iter().enumerate() {
                    gr[k % c] += x * av[k];
                }
            }
            Op::OneMinus(a) => self.acc(*a).iter_mut().zip(g).for_each(|(d, x)| *d -= x),
            Op::Scale(a, k) => self
                .acc(*a)
                .iter_mut()
                .zip(g)
                .for_each(|(d, x)| *d += k * x),
            Op::MatMul(a, b) => {
                let (m, k) = self.shape(*a);
                let n = self.shape(*b).1;
                let av = self.value(*a).to_vec();
                let bv = self.value(*b).to_vec();
                // dA = G·Bᵀ
                let ga = self.acc(*a);
                for r in 0..m {
                    let grow = &g[r * n..(r + 1) * n];
                    for p in 0..k {
                        let brow = &bv[p * n..(p + 1) * n];
                        ga[r * k + p] += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                    }
                }
                // dB = Aᵀ·G
                let gb = self.acc(*b);
                for r in 0..m {
                    let grow = &g[r * n..(r + 1) * n];
                    for p in 0..k {
                        let x = av[r * k + p];
                        if x != 0.0 {
                            for (d, y) in gb[p * n..(p + 1) * n].iter_mut().zip(grow) {
                                *d += x * y;
                            }
                        }
                    }
                }
            }
            Op::Transpose(a) => {
                let (r, c) = self.shape(*a);
                let ga = self.acc(*a);
                for p in 0..r {
                    for q in 0..c {
                        ga[p * c + q] += g[q * r + p];
                    }
                }
            }
            Op::Tanh(a) => {
                let out = self.nodes[i].data.value.clone();
                self.acc(*a)
                    .iter_mut()
                    .zip(g.iter().zip(&out))
                    .for_each(|(d, (x, y))| *d += x * (1.0 - y * y));
            }
            Op::Sigmoid(a) => {
                let out = self.nodes[i].data.value.clone();
                self.acc(*a)
                    .iter_mut()
                    .zip(g.iter().zip(&out))
                    .for_each(|(d, (x, y))| *d += x * y * (1.0 - y));
            }
            Op::Act {
                x,
                spec,
                gamma,
                eta,
            } => {
                let xv = self.value(*x).to_vec();
                let gx = self.acc(*x);
                match *spec {
                    ActivationSpec::Sital { gamma: gm, eta: et } => {
                        for ((d, gg), &v) in gx.iter_mut().zip(g).zip(&xv) {
                            *d += gg * sital_derivative(v, gm, et);
                        }
                        let (mut dg, mut de) = (0.0, 0.0);
                        for (gg, &v) in g.iter().zip(&xv) {
                            let (pg, pe) = sital_param_gradient(v, et);
                            dg += gg * pg;
                            de += gg * pe;
                        }
                        if let Some(gv) = gamma {
                            self.acc(*gv)[0] += dg;
                        }
                        if let Some(ev) = eta {
                            self.acc(*ev)[0] += de;
                        }
                    }
                    other => {
                        for ((d, gg), &v) in gx.iter_mut().zip(g).zip(&xv) {
                            *d += gg * other.derivative(v).value;
                        }
                    }
                }
            }
            Op::SliceCols(a, start) => {
                let c = self.shape(*a).1;
                let len = self.nodes[i].data.cols;
                let ga = self.acc(*a);
                for (r, grow) in g.chunks(len).enumerate() {
                    add_into(&mut ga[r * c + start..r * c + start + len], grow);
                }
            }
            Op::Row(a, r) => {
                let c = g.len();
                add_into(&mut self.acc(*a)[r * c..(r + 1) * c], g);
            }
            Op::StackRows(rows) => {
                let c = self.nodes[i].data.cols;
                for (k, r) in rows.iter().enumerate() {
                    add_into(self.acc(*r), &g[k * c..(k + 1) * c]);
                }
            }
            Op::ConcatCols(a, b) => {
                let ca = self.shape(*a).1;
                let cb = self.shape(*b).1;
                let ga = self.acc(*a);
                for (r, grow) in g.chunks(ca + cb).enumerate() {
                    add_into(&mut ga[r * ca..(r + 1) * ca], &grow[..ca]);
                }
                let gb = self.acc(*b);
                for (r, grow) in g.chunks(ca + cb).enumerate() {
                    add_into(&mut gb[r * cb..(r + 1) * cb], &grow[ca..]);
                }
            }
            Op::BroadcastRows(a) => {
                let c = self.shape(*a).1;
                let ga = self.acc(*a);
                for grow in g.chunks(c) {
                    add_into(ga, grow);
                }
            }
            Op::Conv1d {
                x,
                w,
                b,
                pad_left,
                width,
            } => {
                let (n, c) = self.shape(*x);
                let f = self.shape(*w).1;
                let m = g.len() / f;
                let xv = self.value(*x).to_vec();
                let wv = self.value(*w).to_vec();
                let gb = self.acc(*b);
                for grow in g.chunks(f) {
                    add_into(gb, grow);
                }
                let mut gx = vec![0.0; n * c];
                let gw = self.acc(*w);
                for t in 0..m {
                    let grow = &g[t * f..(t + 1) * f];
                    for j in 0..*width {
                        let src = t + j;
                        if src < *pad_left || src - pad_left >= n {
                            continue;
                        }
                        let xr = src - pad_left;
                        for ch in 0..c {
                            let wrow = (j * c + ch) * f;
                            let xval = xv[xr * c + ch];
                            let mut dx = 0.0;
                            for o in 0..f {
                                dx += grow[o] * wv[wrow + o];
                                gw[wrow + o] += grow[o] * xval;
                            }
                            gx[xr * c + ch] += dx;
                        }
                    }
                }
                add_into(self.acc(*x), &gx);
            }
            Op::Gather(a, index) => {
                let ga = self.acc(*a);
                for (&src, x) in index.iter().zip(g) {
                    ga[src] += x;
                }
            }
            Op::SoftmaxRows(a) => {
                let c = self.nodes[i].data.cols;
                let out = self.nodes[i].data.value.clone();
                let ga = self.acc(*a);
                for (r, (grow, prow)) in g.chunks(c).zip(out.chunks(c)).enumerate() {
                    let dot: f64 = grow.iter().zip(prow).map(|(x, p)| x * p).sum();
                    for k in 0..c {
                        ga[r * c + k] += prow[k] * (grow[k] - dot);
                    }
                }
            }
            Op::SoftmaxCrossEntropy {
                logits,
                probs,
                targets,
            } => {
                let c = self.shape(*logits).1;
                let scale = g[0] / targets.len() as f64;
                let gl = self.acc(*logits);
                for (r, &t) in targets.iter().enumerate() {
                    for k in 0..c {
                        let y = if k == t { 1.0 } else { 0.0 };
                        gl[r * c + k] += scale * (probs[r * c + k] - y);
                    }
                }
            }
            Op::SumAll(a) => self.acc(*a).iter_mut().for_each(|d| *d += g[0]),
            Op::MeanAll(a) => {
                let n = self.shape(*a);
                let k = g[0] / (n.0 * n.1) as f64;
                self.acc(*a).iter_mut().for_each(|d| *d += k);
            }
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

pub(crate) fn softmax_rows(v: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows * cols);
    for r in v.chunks(cols).take(rows) {
        let peak = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = r.iter().map(|x| (x - peak).exp()).collect();
        let z: f64 = e.iter().sum();
        out.extend(e.iter().map(|x| x / z));
    }
    out
}
