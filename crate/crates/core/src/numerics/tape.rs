use super::tensor::{Gradients, ParamId, ParamStore, Tensor};
use super::{log_sum_exp, sigmoid};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

type CustomBackward = Box<dyn Fn(&[f64], &[&[f64]]) -> Vec<Option<Vec<f64>>>>;

enum Op {
    Input,
    Param(ParamId),
    Row { table: Var, row: usize },
    Affine { w: Var, x: Var, b: Option<Var> },
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Mask(Var, Vec<f64>),
    Tanh(Var),
    Sigmoid(Var),
    Softmax(Var),
    LogSumExp(Var),
    Sum(Var),
    Concat(Vec<Var>),
    Slice { src: Var, start: usize },
    Stack(Vec<Var>),
    Bilinear { y1: Var, u: Var, y2: Var },
    CrossEntropy { logits: Var, target: usize },
    Custom { inputs: Vec<Var>, backward: CustomBackward },
}

struct Node {
    shape: Vec<usize>,
    // Empty for parameter nodes; their values live in the store.
    value: Vec<f64>,
    op: Op,
    requires_grad: bool,
}

/// Records a forward computation so that [`Tape::backward`] can replay it in
/// reverse. Parameters are read from the borrowed [`ParamStore`]; their
/// gradients are accumulated into a caller-owned [`Gradients`].
pub struct Tape<'a> {
    store: &'a ParamStore,
    nodes: Vec<Node>,
    param_nodes: Vec<Option<Var>>,
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<'a> Tape<'a> {
    pub fn new(store: &'a ParamStore) -> Self {
        Tape {
            store,
            nodes: Vec::new(),
            param_nodes: vec![None; store.len()],
        }
    }

    pub fn store(&self) -> &'a ParamStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op, requires_grad: bool) -> Var {
        debug_assert!(matches!(op, Op::Param(_)) || numel(&shape) == value.len());
        self.nodes.push(Node {
            shape,
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &[f64] {
        let node = &self.nodes[v.0];
        match node.op {
            Op::Param(id) => self.store.get(id).values(),
            _ => &node.value,
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    /// Value of a one-element node.
    pub fn scalar(&self, v: Var) -> f64 {
        let value = self.value(v);
        assert_eq!(value.len(), 1, "scalar: node has shape {:?}", self.shape(v));
        value[0]
    }

    /// Constant input; gradients do not flow into it.
    pub fn input(&mut self, t: Tensor) -> Var {
        let shape = t.shape().to_vec();
        let value = t.values().to_vec();
        self.push(shape, value, Op::Input, false)
    }

    pub fn input_vec(&mut self, values: Vec<f64>) -> Var {
        let shape = vec![values.len()];
        self.push(shape, values, Op::Input, false)
    }

    /// Trainable parameter. Repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_nodes[id.0] {
            return v;
        }
        let shape = self.store.get(id).shape().to_vec();
        let v = self.push(shape, Vec::new(), Op::Param(id), true);
        self.param_nodes[id.0] = Some(v);
        v
    }

    /// Row `row` of a matrix node, as a vector.
    pub fn row(&mut self, table: Var, row: usize) -> Var {
        let shape = self.shape(table).to_vec();
        assert!(
            shape.len() == 2 && row < shape[0],
            "row: cannot take row {row} of shape {shape:?}"
        );
        let width = shape[1];
        let value = self.value(table)[row * width..(row + 1) * width].to_vec();
        let rg = self.rg(table);
        self.push(vec![width], value, Op::Row { table, row }, rg)
    }

    /// `w x + b` for a matrix `w` of shape `(r, c)`.
    pub fn affine(&mut self, w: Var, x: Var, b: Option<Var>) -> Var {
        let ws = self.shape(w).to_vec();
        let xs = self.shape(x).to_vec();
        assert!(
            ws.len() == 2 && xs.len() == 1 && ws[1] == xs[0],
            "affine: matrix shape {ws:?} does not conform with vector shape {xs:?}"
        );
        let (rows, cols) = (ws[0], ws[1]);
        if let Some(b) = b {
            let bs = self.shape(b);
            assert!(
                bs == [rows],
                "affine: bias shape {bs:?} does not conform with matrix shape {ws:?}"
            );
        }
        let wv = self.value(w);
        let xv = self.value(x);
        let mut out = match b {
            Some(b) => self.value(b).to_vec(),
            None => vec![0.0; rows],
        };
        for (r, o) in out.iter_mut().enumerate() {
            let row = &wv[r * cols..(r + 1) * cols];
            *o += dot(row, xv);
        }
        let rg = self.rg(w) || self.rg(x) || b.is_some_and(|b| self.rg(b));
        self.push(vec![rows], out, Op::Affine { w, x, b }, rg)
    }

    pub fn matvec(&mut self, w: Var, x: Var) -> Var {
        self.affine(w, x, None)
    }

    fn check_same(&self, name: &str, a: Var, b: Var) {
        let (sa, sb) = (self.shape(a), self.shape(b));
        assert!(sa == sb, "{name}: shape mismatch {sa:?} vs {sb:?}");
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.check_same("add", a, b);
        let value = zip_map(self.value(a), self.value(b), |x, y| x + y);
        let rg = self.rg(a) || self.rg(b);
        self.push(self.shape(a).to_vec(), value, Op::Add(a, b), rg)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.check_same("mul", a, b);
        let value = zip_map(self.value(a), self.value(b), |x, y| x * y);
        let rg = self.rg(a) || self.rg(b);
        self.push(self.shape(a).to_vec(), value, Op::Mul(a, b), rg)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let value = self.value(a).iter().map(|x| x * factor).collect();
        let rg = self.rg(a);
        self.push(self.shape(a).to_vec(), value, Op::Scale(a, factor), rg)
    }

    /// Elementwise product with a constant tensor (a dropout mask).
    pub fn mask(&mut self, a: Var, mask: &Tensor) -> Var {
        assert!(
            self.shape(a) == mask.shape(),
            "mask: shape mismatch {:?} vs {:?}",
            self.shape(a),
            mask.shape()
        );
        let value = zip_map(self.value(a), mask.values(), |x, m| x * m);
        let rg = self.rg(a);
        let op = Op::Mask(a, mask.values().to_vec());
        self.push(self.shape(a).to_vec(), value, op, rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).iter().map(|x| x.tanh()).collect();
        let rg = self.rg(a);
        self.push(self.shape(a).to_vec(), value, Op::Tanh(a), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).iter().map(|&x| sigmoid(x)).collect();
        let rg = self.rg(a);
        self.push(self.shape(a).to_vec(), value, Op::Sigmoid(a), rg)
    }

    /// Softmax over a vector.
    pub fn softmax(&mut self, a: Var) -> Var {
        let shape = self.shape(a).to_vec();
        assert!(shape.len() == 1, "softmax: expected a vector, got shape {shape:?}");
        let value = super::softmax(self.value(a));
        let rg = self.rg(a);
        self.push(shape, value, Op::Softmax(a), rg)
    }

    pub fn log_sum_exp(&mut self, a: Var) -> Var {
        let value = vec![log_sum_exp(self.value(a))];
        let rg = self.rg(a);
        self.push(vec![1], value, Op::LogSumExp(a), rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = vec![self.value(a).iter().sum()];
        let rg = self.rg(a);
        self.push(vec![1], value, Op::Sum(a), rg)
    }

    /// Concatenation of vectors.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat: no operands");
        let mut value = Vec::new();
        for &p in parts {
            let s = self.shape(p);
            assert!(s.len() == 1, "concat: expected vectors, got shape {s:?}");
            value.extend_from_slice(self.value(p));
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push(vec![value.len()], value, Op::Concat(parts.to_vec()), rg)
    }

    pub fn slice(&mut self, src: Var, start: usize, len: usize) -> Var {
        let s = self.shape(src);
        assert!(
            s.len() == 1 && start + len <= s[0] && len > 0,
            "slice: range {start}..{} out of shape {s:?}",
            start + len
        );
        let value = self.value(src)[start..start + len].to_vec();
        let rg = self.rg(src);
        self.push(vec![len], value, Op::Slice { src, start }, rg)
    }

    /// Stacks equal-length vectors into the rows of a matrix.
    pub fn stack(&mut self, rows: &[Var]) -> Var {
        assert!(!rows.is_empty(), "stack: no operands");
        let width = self.shape(rows[0]).to_vec();
        let mut value = Vec::new();
        for &r in rows {
            let s = self.shape(r);
            assert!(
                s == width.as_slice() && s.len() == 1,
                "stack: shape mismatch {width:?} vs {s:?}"
            );
            value.extend_from_slice(self.value(r));
        }
        let rg = rows.iter().any(|&r| self.rg(r));
        self.push(
            vec![rows.len(), width[0]],
            value,
            Op::Stack(rows.to_vec()),
            rg,
        )
    }

    /// `y1ᵀ U y2` for `U` of shape `(m1, l, m2)`: one score per middle slice.
    pub fn bilinear(&mut self, y1: Var, u: Var, y2: Var) -> Var {
        let us = self.shape(u).to_vec();
        let (s1, s2) = (self.shape(y1).to_vec(), self.shape(y2).to_vec());
        assert!(
            us.len() == 3 && s1 == [us[0]] && s2 == [us[2]],
            "bilinear: tensor shape {us:?} does not conform with {s1:?} and {s2:?}"
        );
        let (m1, l, m2) = (us[0], us[1], us[2]);
        let (a, uv, b) = (self.value(y1), self.value(u), self.value(y2));
        let mut out = vec![0.0; l];
        for (i, &ai) in a.iter().enumerate() {
            if ai == 0.0 {
                continue;
            }
            for (c, o) in out.iter_mut().enumerate() {
                let base = (i * l + c) * m2;
                *o += ai * dot(&uv[base..base + m2], b);
            }
        }
        debug_assert_eq!(m1, a.len());
        let rg = self.rg(y1) || self.rg(u) || self.rg(y2);
        self.push(vec![l], out, Op::Bilinear { y1, u, y2 }, rg)
    }

    /// `-log softmax(logits)[target]`.
    pub fn cross_entropy(&mut self, logits: Var, target: usize) -> Var {
        let s = self.shape(logits);
        assert!(
            s.len() == 1 && target < s[0],
            "cross_entropy: target {target} out of range for shape {s:?}"
        );
        let v = self.value(logits);
        let value = vec![log_sum_exp(v) - v[target]];
        let rg = self.rg(logits);
        self.push(vec![1], value, Op::CrossEntropy { logits, target }, rg)
    }

    /// Records an operation whose value was computed by the caller. `backward`
    /// receives the upstream gradient and the input values, and returns one
    /// optional gradient contribution per input.
    pub fn custom(
        &mut self,
        inputs: &[Var],
        shape: Vec<usize>,
        value: Vec<f64>,
        backward: impl Fn(&[f64], &[&[f64]]) -> Vec<Option<Vec<f64>>> + 'static,
    ) -> Var {
        let rg = inputs.iter().any(|&v| self.rg(v));
        let op = Op::Custom {
            inputs: inputs.to_vec(),
            backward: Box::new(backward),
        };
        self.push(shape, value, op, rg)
    }

    /// Accumulates `d loss / d param` into `grads` for every parameter reachable
    /// from `loss`. Accumulation is additive across calls.
    pub fn backward(&self, loss: Var, grads: &mut Gradients) {
        let s = self.shape(loss);
        assert!(
            numel(s) == 1,
            "backward: loss must be a scalar, got shape {s:?}"
        );
        if !self.rg(loss) {
            return;
        }
        let mut local: Vec<Vec<f64>> = (0..=loss.0).map(|_| Vec::new()).collect();
        local[loss.0] = vec![1.0];
        // Outer products `g xᵀ` into weight matrices, applied row by row at
        // the end so that each gradient row is visited once.
        let mut outer: Vec<(ParamId, Vec<f64>, Var)> = Vec::new();
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad || local[idx].is_empty() {
                continue;
            }
            let g = std::mem::take(&mut local[idx]);
            let mut sink = Sink {
                tape: self,
                local: &mut local,
                grads: &mut *grads,
            };
            match &node.op {
                Op::Input => {}
                Op::Param(id) => {
                    for (acc, d) in sink.grads.get_mut(*id).iter_mut().zip(&g) {
                        *acc += d;
                    }
                }
                Op::Row { table, row } => {
                    let width = g.len();
                    if let Some(slot) = sink.slot(*table) {
                        add_into(&mut slot[row * width..(row + 1) * width], &g);
                    }
                }
                Op::Affine { w, x, b } => {
                    let cols = self.shape(*x)[0];
                    if self.rg(*x) {
                        let wv = self.value(*w);
                        let mut dx = vec![0.0; cols];
                        for (r, &gr) in g.iter().enumerate() {
                            if gr != 0.0 {
                                axpy(gr, &wv[r * cols..(r + 1) * cols], &mut dx);
                            }
                        }
                        sink.add(*x, &dx);
                    }
                    if let Some(b) = b {
                        sink.add(*b, &g);
                    }
                    match self.nodes[w.0].op {
                        Op::Param(id) => outer.push((id, g, *x)),
                        _ => {
                            let xv = self.value(*x);
                            if let Some(slot) = sink.slot(*w) {
                                for (r, &gr) in g.iter().enumerate() {
                                    if gr != 0.0 {
                                        axpy(gr, xv, &mut slot[r * cols..(r + 1) * cols]);
                                    }
                                }
                            }
                        }
                    }
                }
                Op::Add(a, b) => {
                    sink.add(*a, &g);
                    sink.add(*b, &g);
                }
                Op::Mul(a, b) => {
                    let da = zip_map(&g, self.value(*b), |g, y| g * y);
                    let db = zip_map(&g, self.value(*a), |g, x| g * x);
                    sink.add(*a, &da);
                    sink.add(*b, &db);
                }
                Op::Scale(a, f) => {
                    let da: Vec<f64> = g.iter().map(|g| g * f).collect();
                    sink.add(*a, &da);
                }
                Op::Mask(a, m) => {
                    sink.add(*a, &zip_map(&g, m, |g, m| g * m));
                }
                Op::Tanh(a) => {
                    let da = zip_map(&g, &node.value, |g, y| g * (1.0 - y * y));
                    sink.add(*a, &da);
                }
                Op::Sigmoid(a) => {
                    let da = zip_map(&g, &node.value, |g, y| g * y * (1.0 - y));
                    sink.add(*a, &da);
                }
                Op::Softmax(a) => {
                    let p = &node.value;
                    let gp = dot(&g, p);
                    let da = zip_map(&g, p, |g, p| p * (g - gp));
                    sink.add(*a, &da);
                }
                Op::LogSumExp(a) => {
                    let p = super::softmax(self.value(*a));
                    let da: Vec<f64> = p.iter().map(|p| p * g[0]).collect();
                    sink.add(*a, &da);
                }
                Op::Sum(a) => {
                    let da = vec![g[0]; numel(self.shape(*a))];
                    sink.add(*a, &da);
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let n = self.shape(p)[0];
                        sink.add(p, &g[offset..offset + n]);
                        offset += n;
                    }
                }
                Op::Slice { src, start } => {
                    if let Some(slot) = sink.slot(*src) {
                        add_into(&mut slot[*start..*start + g.len()], &g);
                    }
                }
                Op::Stack(rows) => {
                    let width = node.shape[1];
                    for (i, &r) in rows.iter().enumerate() {
                        sink.add(r, &g[i * width..(i + 1) * width]);
                    }
                }
                Op::Bilinear { y1, u, y2 } => {
                    let us = self.shape(*u);
                    let (m1, l, m2) = (us[0], us[1], us[2]);
                    let (a, uv, b) = (self.value(*y1), self.value(*u), self.value(*y2));
                    if self.rg(*y1) {
                        let mut da = vec![0.0; m1];
                        for (i, d) in da.iter_mut().enumerate() {
                            for (c, &gc) in g.iter().enumerate() {
                                let base = (i * l + c) * m2;
                                *d += gc * dot(&uv[base..base + m2], b);
                            }
                        }
                        sink.add(*y1, &da);
                    }
                    if self.rg(*y2) {
                        let mut db = vec![0.0; m2];
                        for (i, &ai) in a.iter().enumerate() {
                            for (c, &gc) in g.iter().enumerate() {
                                let base = (i * l + c) * m2;
                                axpy(gc * ai, &uv[base..base + m2], &mut db);
                            }
                        }
                        sink.add(*y2, &db);
                    }
                    if let Some(slot) = sink.slot(*u) {
                        for (i, &ai) in a.iter().enumerate() {
                            for (c, &gc) in g.iter().enumerate() {
                                let base = (i * l + c) * m2;
                                axpy(gc * ai, b, &mut slot[base..base + m2]);
                            }
                        }
                    }
                }
                Op::CrossEntropy { logits, target } => {
                    let mut p = super::softmax(self.value(*logits));
                    p[*target] -= 1.0;
                    p.iter_mut().for_each(|x| *x *= g[0]);
                    sink.add(*logits, &p);
                }
                Op::Custom { inputs, backward } => {
                    let values: Vec<&[f64]> = inputs.iter().map(|&v| self.value(v)).collect();
                    let contribs = backward(&g, &values);
                    assert_eq!(contribs.len(), inputs.len());
                    for (&v, c) in inputs.iter().zip(contribs) {
                        if let Some(c) = c {
                            sink.add(v, &c);
                        }
                    }
                }
            }
        }
        outer.sort_by_key(|(id, _, _)| id.index());
        for group in outer.chunk_by(|a, b| a.0 == b.0) {
            let id = group[0].0;
            let cols = self.store.get(id).shape()[1];
            let dw = grads.get_mut(id);
            for (r, row) in dw.chunks_exact_mut(cols).enumerate() {
                for (_, g, x) in group {
                    if g[r] != 0.0 {
                        axpy(g[r], self.value(*x), row);
                    }
                }
            }
        }
    }
}

struct Sink<'s, 't> {
    tape: &'s Tape<'t>,
    local: &'s mut Vec<Vec<f64>>,
    grads: &'s mut Gradients,
}

impl Sink<'_, '_> {
    /// Gradient buffer for `v`, or `None` when `v` does not require one.
    fn slot(&mut self, v: Var) -> Option<&mut [f64]> {
        let node = &self.tape.nodes[v.0];
        if !node.requires_grad {
            return None;
        }
        if let Op::Param(id) = node.op {
            return Some(self.grads.get_mut(id));
        }
        let buf = &mut self.local[v.0];
        if buf.is_empty() {
            *buf = vec![0.0; node.value.len()];
        }
        Some(buf)
    }

    fn add(&mut self, v: Var, contrib: &[f64]) {
        if let Some(slot) = self.slot(v) {
            add_into(slot, contrib);
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    // eight fixed-width partial sums vectorize without reassociating
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 8];
    let (ac, bc) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f64 = ac.remainder().iter().zip(bc.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ac.zip(bc) {
        let x: &[f64; 8] = x.try_into().expect("chunk of eight");
        let y: &[f64; 8] = y.try_into().expect("chunk of eight");
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let half = [acc[0] + acc[4], acc[1] + acc[5], acc[2] + acc[6], acc[3] + acc[7]];
    (half[0] + half[2]) + (half[1] + half[3]) + tail
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn zip_map(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}
