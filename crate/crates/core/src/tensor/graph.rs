use crate::error::{Error, Result};
use crate::tensor::spectral::channel_summed_correlation;
use crate::tensor::Tensor;

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    MulScalar(Var, Var),
    MatMul(Var, Var),
    Transpose(Var),
    Concat { parts: Vec<Var>, axis: usize },
    Slice { src: Var, axis: usize, start: usize },
    Reshape(Var),
    Softmax(Var),
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Vec<f64>, inv_std: Vec<f64> },
    Relu(Var),
    Sum(Var),
    Mean(Var),
    MeanRows(Var),
    MseLoss(Var, Var),
    MaxPoolRows { src: Var, argmax: Vec<usize> },
    RollRows { src: Var, shift: usize },
    SelectRows { full: Var, fallback: Var, selected: Vec<bool> },
    LagCorrelation(Var, Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    requires_grad: bool,
    op: Op,
}

/// Dynamic computation graph. Nodes are appended in evaluation order, so
/// the node list is already a topological order.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

const LN_EPS: f64 = 1e-12;

/// Zero-initialized gradient buffer for `v`, or None if `v` is frozen.
fn slot<'a>(nodes: &[Node], local: &'a mut [Option<Vec<f64>>], v: Var) -> Option<&'a mut Vec<f64>> {
    if !nodes[v.0].requires_grad {
        return None;
    }
    let n = nodes[v.0].value.numel();
    Some(local[v.0].get_or_insert_with(|| vec![0.0; n]))
}

fn is_matrix(t: &Tensor) -> bool {
    t.shape().len() == 2
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Accumulated gradient, if `backward` reached this node.
    pub fn grad(&self, v: Var) -> Option<Tensor> {
        self.grads[v.0].as_ref().map(|g| Tensor {
            shape: self.nodes[v.0].value.shape().to_vec(),
            data: g.clone(),
        })
    }

    pub fn zero_grad(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = None);
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::shape(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    fn matrix(&self, op: &'static str, a: Var) -> Result<(usize, usize)> {
        let t = self.value(a);
        if !is_matrix(t) {
            return Err(Error::shape(op, format!("expected a matrix, got {:?}", t.shape())));
        }
        Ok((t.shape()[0], t.shape()[1]))
    }

    fn zip_map(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (ta, tb) = (self.value(a), self.value(b));
        Tensor {
            shape: ta.shape().to_vec(),
            data: ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect(),
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = self.zip_map(a, b, |x, y| x + y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let out = self.zip_map(a, b, |x, y| x - y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Sub(a, b), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = self.zip_map(a, b, |x, y| x * y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    /// `a[n, m] + row[m]` with the row broadcast over `a`'s rows.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (n, m) = self.matrix("add_row", a)?;
        let r = self.value(row);
        if r.numel() != m {
            return Err(Error::shape(
                "add_row",
                format!("row of {:?} does not match [{n}, {m}]", r.shape()),
            ));
        }
        let mut out = self.value(a).clone();
        let rd = r.data().to_vec();
        for i in 0..n {
            for (o, b) in out.data[i * m..(i + 1) * m].iter_mut().zip(&rd) {
                *o += b;
            }
        }
        let rg = self.rg(a) || self.rg(row);
        Ok(self.push(out, Op::AddRow(a, row), rg))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let t = self.value(a);
        let out = Tensor {
            shape: t.shape().to_vec(),
            data: t.data().iter().map(|x| x * k).collect(),
        };
        let rg = self.rg(a);
        self.push(out, Op::Scale(a, k), rg)
    }

    /// `a · s` where `s` holds a single element.
    pub fn mul_scalar(&mut self, a: Var, s: Var) -> Result<Var> {
        if self.value(s).numel() != 1 {
            return Err(Error::shape(
                "mul_scalar",
                format!("scalar operand has shape {:?}", self.shape(s)),
            ));
        }
        let k = self.value(s).item();
        let t = self.value(a);
        let out = Tensor {
            shape: t.shape().to_vec(),
            data: t.data().iter().map(|x| x * k).collect(),
        };
        let rg = self.rg(a) || self.rg(s);
        Ok(self.push(out, Op::MulScalar(a, s), rg))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, k) = self.matrix("matmul", a)?;
        let (k2, m) = self.matrix("matmul", b)?;
        if k != k2 {
            return Err(Error::shape("matmul", format!("[{n}, {k}] x [{k2}, {m}]")));
        }
        let (ad, bd) = (self.value(a).data(), self.value(b).data());
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let orow = &mut out[i * m..(i + 1) * m];
            for p in 0..k {
                let x = ad[i * k + p];
                if x == 0.0 {
                    continue;
                }
                for (o, y) in orow.iter_mut().zip(&bd[p * m..(p + 1) * m]) {
                    *o += x * y;
                }
            }
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(
            Tensor {
                shape: vec![n, m],
                data: out,
            },
            Op::MatMul(a, b),
            rg,
        ))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (n, m) = self.matrix("transpose", a)?;
        let d = self.value(a).data();
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..m {
                out[j * n + i] = d[i * m + j];
            }
        }
        let rg = self.rg(a);
        Ok(self.push(
            Tensor {
                shape: vec![m, n],
                data: out,
            },
            Op::Transpose(a),
            rg,
        ))
    }

    /// Concatenate matrices along axis 0 (rows) or 1 (columns).
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        if parts.is_empty() || axis > 1 {
            return Err(Error::shape("concat", format!("{} parts on axis {axis}", parts.len())));
        }
        let dims: Vec<(usize, usize)> = parts
            .iter()
            .map(|&p| self.matrix("concat", p))
            .collect::<Result<_>>()?;
        let (n0, m0) = dims[0];
        let data = if axis == 0 {
            if dims.iter().any(|&(_, m)| m != m0) {
                return Err(Error::shape("concat", format!("column mismatch {dims:?}")));
            }
            parts.iter().flat_map(|&p| self.value(p).data().iter().copied()).collect::<Vec<_>>()
        } else {
            if dims.iter().any(|&(n, _)| n != n0) {
                return Err(Error::shape("concat", format!("row mismatch {dims:?}")));
            }
            let mut out = Vec::with_capacity(n0 * dims.iter().map(|d| d.1).sum::<usize>());
            for i in 0..n0 {
                for &p in parts {
                    out.extend_from_slice(self.value(p).row(i));
                }
            }
            out
        };
        let shape = if axis == 0 {
            vec![dims.iter().map(|d| d.0).sum(), m0]
        } else {
            vec![n0, dims.iter().map(|d| d.1).sum()]
        };
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(
            Tensor { shape, data },
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            rg,
        ))
    }

    /// Contiguous range `start..start + len` of a matrix along `axis`.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let (n, m) = self.matrix("slice", a)?;
        let extent = if axis == 0 { n } else { m };
        if axis > 1 || len == 0 || start + len > extent {
            return Err(Error::shape(
                "slice",
                format!("range {start}..{} on axis {axis} of [{n}, {m}]", start + len),
            ));
        }
        let t = self.value(a);
        let (shape, data) = if axis == 0 {
            (vec![len, m], t.data()[start * m..(start + len) * m].to_vec())
        } else {
            let mut out = Vec::with_capacity(n * len);
            for i in 0..n {
                out.extend_from_slice(&t.row(i)[start..start + len]);
            }
            (vec![n, len], out)
        };
        let rg = self.rg(a);
        Ok(self.push(Tensor { shape, data }, Op::Slice { src: a, axis, start }, rg))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let data = self.value(a).data().to_vec();
        let out = Tensor::new(shape.to_vec(), data)
            .map_err(|_| Error::shape("reshape", format!("{:?} -> {shape:?}", self.shape(a))))?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::Reshape(a), rg))
    }

    /// Softmax over the last axis. `-inf` entries get zero weight.
    pub fn softmax(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let (rows, cols) = (t.rows(), t.cols());
        let mut out = t.data().to_vec();
        for r in 0..rows {
            let row = &mut out[r * cols..(r + 1) * cols];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for x in row.iter_mut() {
                *x = (*x - max).exp();
                z += *x;
            }
            row.iter_mut().for_each(|x| *x /= z);
        }
        let out = Tensor {
            shape: t.shape().to_vec(),
            data: out,
        };
        let rg = self.rg(a);
        self.push(out, Op::Softmax(a), rg)
    }

    /// Normalize each row to zero mean / unit variance, then apply
    /// `gain` and `bias` (both with one entry per column).
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let t = self.value(x);
        let (rows, cols) = (t.rows(), t.cols());
        for p in [gain, bias] {
            if self.value(p).numel() != cols {
                return Err(Error::shape(
                    "layer_norm",
                    format!("affine {:?} vs {cols} columns", self.shape(p)),
                ));
            }
        }
        let (g, b) = (self.value(gain).data(), self.value(bias).data());
        let mut xhat = vec![0.0; rows * cols];
        let mut inv_std = vec![0.0; rows];
        let mut out = vec![0.0; rows * cols];
        for r in 0..rows {
            let row = t.row(r);
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / cols as f64;
            let is = 1.0 / (var + LN_EPS).sqrt();
            inv_std[r] = is;
            for c in 0..cols {
                let h = (row[c] - mean) * is;
                xhat[r * cols + c] = h;
                out[r * cols + c] = h * g[c] + b[c];
            }
        }
        let out = Tensor {
            shape: t.shape().to_vec(),
            data: out,
        };
        let rg = self.rg(x) || self.rg(gain) || self.rg(bias);
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
            rg,
        ))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let out = Tensor {
            shape: t.shape().to_vec(),
            data: t.data().iter().map(|&x| x.max(0.0)).collect(),
        };
        let rg = self.rg(a);
        self.push(out, Op::Relu(a), rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let m = t.data().iter().sum::<f64>() / t.numel() as f64;
        let rg = self.rg(a);
        self.push(Tensor::scalar(m), Op::Mean(a), rg)
    }

    /// Column means of a matrix, as `[1, m]`.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let (n, m) = self.matrix("mean_rows", a)?;
        let t = self.value(a);
        let mut out = vec![0.0; m];
        for i in 0..n {
            for (o, x) in out.iter_mut().zip(t.row(i)) {
                *o += x;
            }
        }
        out.iter_mut().for_each(|o| *o /= n as f64);
        let rg = self.rg(a);
        Ok(self.push(
            Tensor {
                shape: vec![1, m],
                data: out,
            },
            Op::MeanRows(a),
            rg,
        ))
    }

    pub fn mse_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        self.same_shape("mse_loss", pred, target)?;
        let (p, t) = (self.value(pred), self.value(target));
        let n = p.numel() as f64;
        let l = p.data().iter().zip(t.data()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n;
        let rg = self.rg(pred) || self.rg(target);
        Ok(self.push(Tensor::scalar(l), Op::MseLoss(pred, target), rg))
    }

    /// Max-pool over rows with window 3, stride 2 and one row of padding
    /// on each side; output has `ceil(L / 2)` rows.
    pub fn max_pool_rows(&mut self, a: Var) -> Result<Var> {
        let (n, m) = self.matrix("max_pool_rows", a)?;
        if n < 2 {
            return Err(Error::shape("max_pool_rows", format!("sequence length {n} < 2")));
        }
        let out_rows = n.div_ceil(2);
        let t = self.value(a);
        let mut out = vec![0.0; out_rows * m];
        let mut argmax = vec![0; out_rows * m];
        for o in 0..out_rows {
            let centre = 2 * o;
            let lo = centre.saturating_sub(1);
            let hi = (centre + 1).min(n - 1);
            for c in 0..m {
                let mut best = lo;
                for r in lo + 1..=hi {
                    if t.at(r, c) > t.at(best, c) {
                        best = r;
                    }
                }
                out[o * m + c] = t.at(best, c);
                argmax[o * m + c] = best;
            }
        }
        let rg = self.rg(a);
        Ok(self.push(
            Tensor {
                shape: vec![out_rows, m],
                data: out,
            },
            Op::MaxPoolRows { src: a, argmax },
            rg,
        ))
    }

    /// Circular shift of rows: `out[t] = a[(t - shift) mod L]`.
    pub fn roll_rows(&mut self, a: Var, shift: usize) -> Result<Var> {
        let (n, m) = self.matrix("roll_rows", a)?;
        let shift = shift % n;
        let t = self.value(a);
        let mut out = vec![0.0; n * m];
        for r in 0..n {
            let src = (r + n - shift) % n;
            out[r * m..(r + 1) * m].copy_from_slice(t.row(src));
        }
        let rg = self.rg(a);
        Ok(self.push(
            Tensor {
                shape: vec![n, m],
                data: out,
            },
            Op::RollRows { src: a, shift },
            rg,
        ))
    }

    /// Row `i` of the output is `full[i]` when `selected[i]`, else the
    /// single row of `fallback`.
    pub fn select_rows(&mut self, full: Var, fallback: Var, selected: &[bool]) -> Result<Var> {
        let (n, m) = self.matrix("select_rows", full)?;
        let fb = self.value(fallback);
        if fb.numel() != m || selected.len() != n {
            return Err(Error::shape(
                "select_rows",
                format!("[{n}, {m}] with fallback {:?} and {} flags", fb.shape(), selected.len()),
            ));
        }
        let fb = fb.data().to_vec();
        let f = self.value(full);
        let mut out = Vec::with_capacity(n * m);
        for (i, &keep) in selected.iter().enumerate() {
            out.extend_from_slice(if keep { f.row(i) } else { &fb });
        }
        let rg = self.rg(full) || self.rg(fallback);
        Ok(self.push(
            Tensor {
                shape: vec![n, m],
                data: out,
            },
            Op::SelectRows {
                full,
                fallback,
                selected: selected.to_vec(),
            },
            rg,
        ))
    }

    /// Lag scores `out[0, τ] = (1 / (L·d)) Σ_t Σ_c q[t, c] · k[(t − τ) mod L, c]`
    /// for `τ` in `0..L`, computed with the FFT.
    pub fn lag_correlation(&mut self, q: Var, k: Var) -> Result<Var> {
        let (n, m) = self.matrix("lag_correlation", q)?;
        self.same_shape("lag_correlation", q, k)?;
        let norm = (n * m) as f64;
        let scores: Vec<f64> = channel_summed_correlation(self.value(q).data(), self.value(k).data(), n, m)
            .into_iter()
            .map(|v| v / norm)
            .collect();
        let rg = self.rg(q) || self.rg(k);
        Ok(self.push(
            Tensor {
                shape: vec![1, n],
                data: scores,
            },
            Op::LagCorrelation(q, k),
            rg,
        ))
    }

    /// Reverse-mode sweep from a single-element `loss`. Gradients add onto
    /// whatever earlier calls left behind.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let lt = self.value(loss);
        if lt.numel() != 1 {
            return Err(Error::shape(
                "backward",
                format!("loss must be scalar, got {:?}", lt.shape()),
            ));
        }
        let mut local: Vec<Option<Vec<f64>>> = (0..=loss.0).map(|_| None).collect();
        local[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(g) = local[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            self.propagate(i, &g, &mut local);
            match &mut self.grads[i] {
                Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, d)| *a += d),
                slot @ None => *slot = Some(g),
            }
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[f64], local: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let val = |v: Var| &nodes[v.0].value;

        match &nodes[i].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if let Some(ga) = slot(nodes, local, *a) {
                    ga.iter_mut().zip(g).for_each(|(x, d)| *x += d);
                }
                if let Some(gb) = slot(nodes, local, *b) {
                    gb.iter_mut().zip(g).for_each(|(x, d)| *x += d);
                }
            }
            Op::Sub(a, b) => {
                if let Some(ga) = slot(nodes, local, *a) {
                    ga.iter_mut().zip(g).for_each(|(x, d)| *x += d);
                }
                if let Some(gb) = slot(nodes, local, *b) {
                    gb.iter_mut().zip(g).for_each(|(x, d)| *x -= d);
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (val(*a).data(), val(*b).data());
                if let Some(ga) = slot(nodes, local, *a) {
                    for ((x, d), y) in ga.iter_mut().zip(g).zip(vb) {
                        *x += d * y;
                    }
                }
                if let Some(gb) = slot(nodes, local, *b) {
                    for ((x, d), y) in gb.iter_mut().zip(g).zip(va) {
                        *x += d * y;
                    }
                }
            }
            Op::AddRow(a, row) => {
                if let Some(ga) = slot(nodes, local, *a) {
                    ga.iter_mut().zip(g).for_each(|(x, d)| *x += d);
                }
                let m = val(*row).numel();
                if let Some(gr) = slot(nodes, local, *row) {
                    for chunk in g.chunks(m) {
                        gr.iter_mut().zip(chunk).for_each(|(x, d)| *x += d);
                    }
                }
            }
            Op::Scale(a, k) => {
                if let Some(ga) = slot(nodes, local, *a) {
                    ga.iter_mut().zip(g).for_each(|(x, d)| *x += d * k);
                }
            }
            Op::MulScalar(a, s) => {
                let k = val(*s).item();
                let dot: f64 = val(*a).data().iter().zip(g).map(|(x, d)| x * d).sum();
                if let Some(ga) = slot(nodes, local, *a) {
                    ga.iter_mut().zip(g).for_each(|(x, d)| *x += d * k);
                }
                if let Some(gs) = slot(nodes, local, *s) {
                    gs[0] += dot;
                }
            }
            Op::MatMul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let (n, k) = (ta.shape()[0], ta.shape()[1]);
                let m = tb.shape()[1];
                let (ad, bd) = (ta.data(), tb.data());
                // dA = G · Bᵀ
                if let Some(ga) = slot(nodes, local, *a) {
                    for r in 0..n {
                        let grow = &g[r * m..(r + 1) * m];
                        for p in 0..k {
                            let brow = &bd[p * m..(p + 1) * m];
                            ga[r * k + p] += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                        }
                    }
                }
                // dB = Aᵀ · G
                if let Some(gb) = slot(nodes, local, *b) {
                    for r in 0..n {
                        let grow = &g[r * m..(r + 1) * m];
                        for p in 0..k {
                            let x = ad[r * k + p];
                            if x == 0.0 {
                                continue;
                            }
                            for (o, d) in gb[p * m..(p + 1) * m].iter_mut().zip(grow) {
                                *o += x * d;
                            }
                        }
                    }
                }
            }
            Op::Transpose(a) => {
                let (n, m) = (val(*a).shape()[0], val(*a).shape()[1]);
                if let Some(ga) = slot(nodes, local, *a) {
                    for r in 0..n {
                        for c in 0..m {
                            ga[r * m + c] += g[c * n + r];
                        }
                    }
                }
            }
            Op::Concat { parts, axis } => {
                let out_cols = nodes[i].value.cols();
                let mut offset = 0;
                for &p in parts {
                    let (pn, pm) = (val(p).shape()[0], val(p).shape()[1]);
                    if let Some(gp) = slot(nodes, local, p) {
                        if *axis == 0 {
                            gp.iter_mut()
                                .zip(&g[offset * pm..(offset + pn) * pm])
                                .for_each(|(x, d)| *x += d);
                        } else {
                            for r in 0..pn {
                                let src = &g[r * out_cols + offset..r * out_cols + offset + pm];
                                gp[r * pm..(r + 1) * pm]
                                    .iter_mut()
                                    .zip(src)
                                    .for_each(|(x, d)| *x += d);
                            }
                        }
                    }
                    offset += if *axis == 0 { pn } else { pm };
                }
            }
            Op::Slice { src, axis, start } => {
                let m = val(*src).shape()[1];
                let (on, om) = (nodes[i].value.shape()[0], nodes[i].value.shape()[1]);
                if let Some(gs) = slot(nodes, local, *src) {
                    if *axis == 0 {
                        gs[start * m..(start + on) * m]
                            .iter_mut()
                            .zip(g)
                            .for_each(|(x, d)| *x += d);
                    } else {
                        for r in 0..on {
                            gs[r * m + start..r * m + start + om]
                                .iter_mut()
                                .zip(&g[r * om..(r + 1) * om])
                                .for_each(|(x, d)| *x += d);
                        }
                    }
                }
            }
            Op::Reshape(a) => {
                if let Some(ga) = slot(nodes, local, *a) {
                    ga.iter_mut().zip(g).for_each(|(x, d)| *x += d);
                }
            }
            Op::Softmax(a) => {
                let y = &nodes[i].value;
                let cols = y.cols();
                if let Some(ga) = slot(nodes, local, *a) {
                    for r in 0..y.rows() {
                        let yr = y.row(r);
                        let gr = &g[r * cols..(r + 1) * cols];
                        let dot: f64 = yr.iter().zip(gr).map(|(p, d)| p * d).sum();
                        for c in 0..cols {
                            ga[r * cols + c] += yr[c] * (gr[c] - dot);
                        }
                    }
                }
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            } => {
                let cols = val(*x).cols();
                let rows = val(*x).rows();
                let gv = val(*gain).data();
                if let Some(gx) = slot(nodes, local, *x) {
                    let mut dxhat = vec![0.0; cols];
                    for r in 0..rows {
                        let off = r * cols;
                        for c in 0..cols {
                            dxhat[c] = g[off + c] * gv[c];
                        }
                        let s1: f64 = dxhat.iter().sum();
                        let s2: f64 = dxhat.iter().zip(&xhat[off..off + cols]).map(|(a, b)| a * b).sum();
                        let k = inv_std[r] / cols as f64;
                        for c in 0..cols {
                            gx[off + c] += k * (cols as f64 * dxhat[c] - s1 - xhat[off + c] * s2);
                        }
                    }
                }
                if let Some(gg) = slot(nodes, local, *gain) {
                    for r in 0..rows {
                        for c in 0..cols {
                            gg[c] += g[r * cols + c] * xhat[r * cols + c];
                        }
                    }
                }
                if let Some(gb) = slot(nodes, local, *bias) {
                    for r in 0..rows {
                        for c in 0..cols {
                            gb[c] += g[r * cols + c];
                        }
                    }
                }
            }
            Op::Relu(a) => {
                let xa = val(*a).data();
                if let Some(ga) = slot(nodes, local, *a) {
                    for ((o, d), x) in ga.iter_mut().zip(g).zip(xa) {
                        if *x > 0.0 {
                            *o += d;
                        }
                    }
                }
            }
            Op::Sum(a) => {
                if let Some(ga) = slot(nodes, local, *a) {
                    ga.iter_mut().for_each(|x| *x += g[0]);
                }
            }
            Op::Mean(a) => {
                let n = val(*a).numel() as f64;
                if let Some(ga) = slot(nodes, local, *a) {
                    ga.iter_mut().for_each(|x| *x += g[0] / n);
                }
            }
            Op::MeanRows(a) => {
                let (n, m) = (val(*a).shape()[0], val(*a).shape()[1]);
                if let Some(ga) = slot(nodes, local, *a) {
                    for r in 0..n {
                        for c in 0..m {
                            ga[r * m + c] += g[c] / n as f64;
                        }
                    }
                }
            }
            Op::MseLoss(p, t) => {
                let (pv, tv) = (val(*p).data(), val(*t).data());
                let k = 2.0 * g[0] / pv.len() as f64;
                if let Some(gp) = slot(nodes, local, *p) {
                    for ((o, a), b) in gp.iter_mut().zip(pv).zip(tv) {
                        *o += k * (a - b);
                    }
                }
                if let Some(gt) = slot(nodes, local, *t) {
                    for ((o, a), b) in gt.iter_mut().zip(pv).zip(tv) {
                        *o -= k * (a - b);
                    }
                }
            }
            Op::MaxPoolRows { src, argmax } => {
                let m = val(*src).shape()[1];
                if let Some(gs) = slot(nodes, local, *src) {
                    for (idx, &r) in argmax.iter().enumerate() {
                        gs[r * m + idx % m] += g[idx];
                    }
                }
            }
            Op::RollRows { src, shift } => {
                let (n, m) = (val(*src).shape()[0], val(*src).shape()[1]);
                if let Some(gs) = slot(nodes, local, *src) {
                    for r in 0..n {
                        let s = (r + n - shift) % n;
                        for c in 0..m {
                            gs[s * m + c] += g[r * m + c];
                        }
                    }
                }
            }
            Op::SelectRows {
                full,
                fallback,
                selected,
            } => {
                let m = val(*full).shape()[1];
                if let Some(gf) = slot(nodes, local, *full) {
                    for (r, &keep) in selected.iter().enumerate() {
                        if keep {
                            for c in 0..m {
                                gf[r * m + c] += g[r * m + c];
                            }
                        }
                    }
                }
                if let Some(gb) = slot(nodes, local, *fallback) {
                    for (r, &keep) in selected.iter().enumerate() {
                        if !keep {
                            for c in 0..m {
                                gb[c] += g[r * m + c];
                            }
                        }
                    }
                }
            }
            Op::LagCorrelation(q, k) => {
                let (n, m) = (val(*q).shape()[0], val(*q).shape()[1]);
                let norm = (n * m) as f64;
                let (qd, kd) = (val(*q).data(), val(*k).data());
                let active: Vec<(usize, f64)> = g
                    .iter()
                    .enumerate()
                    .filter(|(_, d)| **d != 0.0)
                    .map(|(tau, d)| (tau, d / norm))
                    .collect();
                if let Some(gq) = slot(nodes, local, *q) {
                    for &(tau, w) in &active {
                        for t in 0..n {
                            let s = (t + n - tau) % n;
                            for c in 0..m {
                                gq[t * m + c] += w * kd[s * m + c];
                            }
                        }
                    }
                }
                if let Some(gk) = slot(nodes, local, *k) {
                    for &(tau, w) in &active {
                        for s in 0..n {
                            let t = (s + tau) % n;
                            for c in 0..m {
                                gk[s * m + c] += w * qd[t * m + c];
                            }
                        }
                    }
                }
            }
        }
    }
}
