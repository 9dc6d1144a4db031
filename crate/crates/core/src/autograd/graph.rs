use super::{Scalar, TensorError};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Tensor(usize);

impl Tensor {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Conv2d {
        input: Tensor,
        weight: Tensor,
        bias: Tensor,
        stride: usize,
        padding: usize,
        /// im2col of the input, kept only when the weight needs a gradient.
        cols: Vec<T>,
    },
    Relu(Tensor),
    MaxPool2d {
        input: Tensor,
        argmax: Vec<u32>,
    },
    GlobalMaxPool {
        input: Tensor,
        argmax: Vec<u32>,
    },
    Dense {
        input: Tensor,
        weight: Tensor,
        bias: Tensor,
    },
    ElementwiseMax {
        inputs: Vec<Tensor>,
        winner: Vec<u32>,
    },
    L2Normalize {
        input: Tensor,
        /// `1 / max(‖x‖, eps)`.
        inv_norm: T,
        clamped: bool,
    },
    CosineDistance {
        u: Tensor,
        v: Tensor,
    },
    ContrastiveLoss {
        d: Tensor,
        same: bool,
        margin: T,
    },
    Add(Tensor, Tensor),
    Sum(Tensor),
    Mean(Vec<Tensor>),
}

#[derive(Debug)]
struct Node<T> {
    shape: Vec<usize>,
    value: Vec<T>,
    grad: Option<Vec<T>>,
    requires_grad: bool,
    op: Op<T>,
}

/// Reverse-mode differentiation tape.
///
/// Nodes are appended in evaluation order, so the node list is already a
/// topological order and the backward pass simply walks it in reverse. A
/// graph is single-owner; build one per forward/backward pass.
#[derive(Debug, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

fn mismatch(op: &'static str, detail: impl Into<String>) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        detail: detail.into(),
    }
}

/// Accumulates `delta` into a node's gradient buffer.
fn accumulate<T: Scalar>(node: &mut Node<T>, delta: impl IntoIterator<Item = T>) {
    if !node.requires_grad {
        return;
    }
    let n = node.value.len();
    let grad = node.grad.get_or_insert_with(|| vec![T::zero(); n]);
    for (g, d) in grad.iter_mut().zip(delta) {
        *g = *g + d;
    }
}

fn grad_slot<T: Scalar>(node: &mut Node<T>) -> Option<&mut Vec<T>> {
    if !node.requires_grad {
        return None;
    }
    let n = node.value.len();
    Some(node.grad.get_or_insert_with(|| vec![T::zero(); n]))
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<T>, requires_grad: bool, op: Op<T>) -> Tensor {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node {
            shape,
            value,
            grad: None,
            requires_grad,
            op,
        });
        Tensor(self.nodes.len() - 1)
    }

    /// Adds an input tensor. Leaves with `requires_grad` receive gradients.
    pub fn leaf(&mut self, shape: &[usize], data: Vec<T>, requires_grad: bool) -> Result<Tensor, TensorError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(TensorError::DataLength {
                shape: shape.to_vec(),
                len: data.len(),
            });
        }
        Ok(self.push(shape.to_vec(), data, requires_grad, Op::Leaf))
    }

    pub fn scalar(&mut self, v: T, requires_grad: bool) -> Tensor {
        self.push(vec![], vec![v], requires_grad, Op::Leaf)
    }

    pub fn value(&self, t: Tensor) -> &[T] {
        &self.nodes[t.0].value
    }

    pub fn shape(&self, t: Tensor) -> &[usize] {
        &self.nodes[t.0].shape
    }

    pub fn requires_grad(&self, t: Tensor) -> bool {
        self.nodes[t.0].requires_grad
    }

    /// Gradient populated by the last [`backward`](Self::backward), if the
    /// tensor was reached.
    pub fn grad(&self, t: Tensor) -> Option<&[T]> {
        self.nodes[t.0].grad.as_deref()
    }

    pub fn grad_or_zeros(&self, t: Tensor) -> Vec<T> {
        match &self.nodes[t.0].grad {
            Some(g) => g.clone(),
            None => vec![T::zero(); self.nodes[t.0].value.len()],
        }
    }

    fn node(&self, t: Tensor) -> &Node<T> {
        &self.nodes[t.0]
    }

    /// 2-D cross-correlation of a `[C, H, W]` input with `[O, C, k, k]`
    /// filters plus per-channel bias.
    pub fn conv2d(
        &mut self,
        input: Tensor,
        weight: Tensor,
        bias: Tensor,
        stride: usize,
        padding: usize,
    ) -> Result<Tensor, TensorError> {
        let (ishape, wshape, bshape) = (self.node(input).shape.clone(), self.node(weight).shape.clone(), self.node(bias).shape.clone());
        let [c, h, w] = ishape[..] else {
            return Err(mismatch("conv2d", format!("input must be [C,H,W], got {ishape:?}")));
        };
        let [o, wc, kh, kw] = wshape[..] else {
            return Err(mismatch("conv2d", format!("weight must be [O,C,k,k], got {wshape:?}")));
        };
        if wc != c || kh != kw || kh % 2 == 0 {
            return Err(mismatch("conv2d", format!("weight {wshape:?} incompatible with input {ishape:?} (odd square kernel required)")));
        }
        if bshape != [o] {
            return Err(mismatch("conv2d", format!("bias must be [{o}], got {bshape:?}")));
        }
        let k = kh;
        if stride == 0 || h + 2 * padding < k || w + 2 * padding < k {
            return Err(mismatch("conv2d", "kernel larger than padded input or zero stride"));
        }
        if (h + 2 * padding - k) % stride != 0 || (w + 2 * padding - k) % stride != 0 {
            return Err(mismatch("conv2d", "output size is not integral for this stride"));
        }
        let ho = (h + 2 * padding - k) / stride + 1;
        let wo = (w + 2 * padding - k) / stride + 1;
        let cols = im2col(&self.node(input).value, c, h, w, k, stride, padding, ho, wo);
        let ckk = c * k * k;
        let mut out = vec![T::zero(); o * ho * wo];
        for (oc, row) in out.chunks_exact_mut(ho * wo).enumerate() {
            row.fill(self.node(bias).value[oc]);
        }
        T::gemm(o, ckk, ho * wo, &self.node(weight).value, false, &cols, false, &mut out, true);
        let keep_cols = self.node(weight).requires_grad;
        let rg = self.node(input).requires_grad || keep_cols || self.node(bias).requires_grad;
        let op = Op::Conv2d {
            input,
            weight,
            bias,
            stride,
            padding,
            cols: if keep_cols { cols } else { Vec::new() },
        };
        Ok(self.push(vec![o, ho, wo], out, rg, op))
    }

    pub fn relu(&mut self, x: Tensor) -> Tensor {
        let n = self.node(x);
        let value = n.value.iter().map(|&v| if v > T::zero() { v } else { T::zero() }).collect();
        let (shape, rg) = (n.shape.clone(), n.requires_grad);
        self.push(shape, value, rg, Op::Relu(x))
    }

    /// 2×2 max pooling with stride 2 over `[C, H, W]`; odd trailing rows and
    /// columns are dropped.
    pub fn maxpool2d(&mut self, x: Tensor) -> Result<Tensor, TensorError> {
        let n = self.node(x);
        let [c, h, w] = n.shape[..] else {
            return Err(mismatch("maxpool2d", format!("input must be [C,H,W], got {:?}", n.shape)));
        };
        let (ho, wo) = (h / 2, w / 2);
        if ho == 0 || wo == 0 {
            return Err(mismatch("maxpool2d", format!("input {h}x{w} too small for a 2x2 window")));
        }
        let mut value = Vec::with_capacity(c * ho * wo);
        let mut argmax = Vec::with_capacity(c * ho * wo);
        for ch in 0..c {
            let plane = &n.value[ch * h * w..(ch + 1) * h * w];
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best = (2 * oy) * w + 2 * ox;
                    for idx in [(2 * oy) * w + 2 * ox + 1, (2 * oy + 1) * w + 2 * ox, (2 * oy + 1) * w + 2 * ox + 1] {
                        if plane[idx] > plane[best] {
                            best = idx;
                        }
                    }
                    value.push(plane[best]);
                    argmax.push((ch * h * w + best) as u32);
                }
            }
        }
        let rg = n.requires_grad;
        Ok(self.push(vec![c, ho, wo], value, rg, Op::MaxPool2d { input: x, argmax }))
    }

    /// Per-channel maximum of `[C, H, W]`, giving `[C]`.
    pub fn global_maxpool(&mut self, x: Tensor) -> Result<Tensor, TensorError> {
        let n = self.node(x);
        let [c, h, w] = n.shape[..] else {
            return Err(mismatch("global_maxpool", format!("input must be [C,H,W], got {:?}", n.shape)));
        };
        if h * w == 0 {
            return Err(mismatch("global_maxpool", "empty spatial extent"));
        }
        let mut value = Vec::with_capacity(c);
        let mut argmax = Vec::with_capacity(c);
        for (ch, plane) in n.value.chunks_exact(h * w).enumerate() {
            let mut best = 0;
            for (i, &v) in plane.iter().enumerate().skip(1) {
                if v > plane[best] {
                    best = i;
                }
            }
            value.push(plane[best]);
            argmax.push((ch * h * w + best) as u32);
        }
        let rg = n.requires_grad;
        Ok(self.push(vec![c], value, rg, Op::GlobalMaxPool { input: x, argmax }))
    }

    /// `W x + b` for `x: [N]`, `W: [M, N]`, `b: [M]`.
    pub fn dense(&mut self, x: Tensor, weight: Tensor, bias: Tensor) -> Result<Tensor, TensorError> {
        let (xs, ws, bs) = (&self.node(x).shape, &self.node(weight).shape, &self.node(bias).shape);
        let [n] = xs[..] else {
            return Err(mismatch("dense", format!("input must be rank 1, got {xs:?}")));
        };
        let [m, wn] = ws[..] else {
            return Err(mismatch("dense", format!("weight must be [M,N], got {ws:?}")));
        };
        if wn != n || bs[..] != [m] {
            return Err(mismatch("dense", format!("x {xs:?}, W {ws:?}, b {bs:?}")));
        }
        let mut out = self.node(bias).value.clone();
        T::gemm(m, n, 1, &self.node(weight).value, false, &self.node(x).value, false, &mut out, true);
        let rg = [x, weight, bias].iter().any(|&t| self.node(t).requires_grad);
        Ok(self.push(vec![m], out, rg, Op::Dense { input: x, weight, bias }))
    }

    /// Element-wise maximum across same-shape tensors. Ties go to the earliest
    /// input.
    pub fn elementwise_max(&mut self, inputs: &[Tensor]) -> Result<Tensor, TensorError> {
        let first = *inputs.first().ok_or(TensorError::EmptyInput("elementwise_max"))?;
        let shape = self.node(first).shape.clone();
        for &t in inputs {
            if self.node(t).shape != shape {
                return Err(mismatch("elementwise_max", format!("{:?} vs {:?}", self.node(t).shape, shape)));
            }
        }
        let mut value = self.node(first).value.clone();
        let mut winner = vec![0u32; value.len()];
        for (k, &t) in inputs.iter().enumerate().skip(1) {
            for (i, &v) in self.node(t).value.iter().enumerate() {
                if v > value[i] {
                    value[i] = v;
                    winner[i] = k as u32;
                }
            }
        }
        let rg = inputs.iter().any(|&t| self.node(t).requires_grad);
        Ok(self.push(shape, value, rg, Op::ElementwiseMax { inputs: inputs.to_vec(), winner }))
    }

    /// `x / max(‖x‖₂, eps)`.
    pub fn l2_normalize(&mut self, x: Tensor, eps: T) -> Tensor {
        let n = self.node(x);
        let norm = n.value.iter().map(|&v| v * v).sum::<T>().sqrt();
        let clamped = !(norm > eps);
        let inv_norm = T::one() / if clamped { eps } else { norm };
        let value = n.value.iter().map(|&v| v * inv_norm).collect();
        let (shape, rg) = (n.shape.clone(), n.requires_grad);
        self.push(shape, value, rg, Op::L2Normalize { input: x, inv_norm, clamped })
    }

    /// `1 - u·v`; in `[0, 2]` for unit inputs.
    pub fn cosine_distance(&mut self, u: Tensor, v: Tensor) -> Result<Tensor, TensorError> {
        if self.node(u).shape != self.node(v).shape || self.node(u).shape.len() != 1 {
            return Err(mismatch("cosine_distance", format!("{:?} vs {:?}", self.node(u).shape, self.node(v).shape)));
        }
        let dot: T = self.node(u).value.iter().zip(&self.node(v).value).map(|(&a, &b)| a * b).sum();
        let rg = self.node(u).requires_grad || self.node(v).requires_grad;
        Ok(self.push(vec![], vec![T::one() - dot], rg, Op::CosineDistance { u, v }))
    }

    /// `d²` for matching pairs, `max(0, margin - d)²` otherwise.
    pub fn contrastive_loss(&mut self, d: Tensor, same: bool, margin: T) -> Result<Tensor, TensorError> {
        let n = self.node(d);
        if n.value.len() != 1 {
            return Err(mismatch("contrastive_loss", format!("distance must be scalar, got {:?}", n.shape)));
        }
        let dv = n.value[0];
        let loss = if same {
            dv * dv
        } else {
            let gap = (margin - dv).max(T::zero());
            gap * gap
        };
        let rg = n.requires_grad;
        Ok(self.push(vec![], vec![loss], rg, Op::ContrastiveLoss { d, same, margin }))
    }

    pub fn add(&mut self, a: Tensor, b: Tensor) -> Result<Tensor, TensorError> {
        if self.node(a).shape != self.node(b).shape {
            return Err(mismatch("add", format!("{:?} vs {:?}", self.node(a).shape, self.node(b).shape)));
        }
        let value = self.node(a).value.iter().zip(&self.node(b).value).map(|(&x, &y)| x + y).collect();
        let rg = self.node(a).requires_grad || self.node(b).requires_grad;
        let shape = self.node(a).shape.clone();
        Ok(self.push(shape, value, rg, Op::Add(a, b)))
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&mut self, x: Tensor) -> Tensor {
        let n = self.node(x);
        let s = n.value.iter().copied().sum();
        let rg = n.requires_grad;
        self.push(vec![], vec![s], rg, Op::Sum(x))
    }

    /// Mean of scalar tensors.
    pub fn mean(&mut self, xs: &[Tensor]) -> Result<Tensor, TensorError> {
        if xs.is_empty() {
            return Err(TensorError::EmptyInput("mean"));
        }
        let mut total = T::zero();
        for &t in xs {
            let n = self.node(t);
            if n.value.len() != 1 {
                return Err(mismatch("mean", format!("expected scalars, got {:?}", n.shape)));
            }
            total = total + n.value[0];
        }
        let rg = xs.iter().any(|&t| self.node(t).requires_grad);
        let m = total / T::from_usize(xs.len()).expect("count fits");
        Ok(self.push(vec![], vec![m], rg, Op::Mean(xs.to_vec())))
    }

    /// Back-propagates from a scalar loss. Previous gradients are cleared.
    pub fn backward(&mut self, loss: Tensor) -> Result<(), TensorError> {
        if self.node(loss).value.len() != 1 {
            return Err(TensorError::NonScalarBackward(self.node(loss).shape.clone()));
        }
        self.backward_with(loss, vec![T::one()])
    }

    /// Back-propagates an explicit upstream gradient from any tensor.
    pub fn backward_with(&mut self, from: Tensor, seed: Vec<T>) -> Result<(), TensorError> {
        if seed.len() != self.node(from).value.len() {
            return Err(TensorError::DataLength {
                shape: self.node(from).shape.clone(),
                len: seed.len(),
            });
        }
        for node in &mut self.nodes {
            node.grad = None;
        }
        if !self.nodes[from.0].requires_grad {
            return Ok(());
        }
        self.nodes[from.0].grad = Some(seed);
        for i in (0..=from.0).rev() {
            let Some(grad) = self.nodes[i].grad.take() else {
                continue;
            };
            let op = std::mem::replace(&mut self.nodes[i].op, Op::Leaf);
            self.propagate(&op, &grad, i);
            self.nodes[i].op = op;
            self.nodes[i].grad = Some(grad);
        }
        Ok(())
    }

    fn propagate(&mut self, op: &Op<T>, g: &[T], at: usize) {
        match op {
            Op::Leaf => {}
            Op::Conv2d { input, weight, bias, stride, padding, cols } => {
                let [c, h, w] = self.nodes[input.0].shape[..] else { unreachable!() };
                let [o, _, k, _] = self.nodes[weight.0].shape[..] else { unreachable!() };
                let [_, ho, wo] = self.nodes[at].shape[..] else { unreachable!() };
                let hw = ho * wo;
                let ckk = c * k * k;
                if let Some(db) = grad_slot(&mut self.nodes[bias.0]) {
                    for (oc, row) in g.chunks_exact(hw).enumerate() {
                        db[oc] = db[oc] + row.iter().copied().sum::<T>();
                    }
                }
                if self.nodes[weight.0].requires_grad {
                    let dw = grad_slot(&mut self.nodes[weight.0]).expect("requires grad");
                    T::gemm(o, hw, ckk, g, false, cols, true, dw, true);
                }
                if self.nodes[input.0].requires_grad {
                    let mut dcols = vec![T::zero(); ckk * hw];
                    T::gemm(ckk, o, hw, &self.nodes[weight.0].value, true, g, false, &mut dcols, false);
                    let dx = grad_slot(&mut self.nodes[input.0]).expect("requires grad");
                    col2im_add(&dcols, dx, c, h, w, k, *stride, *padding, ho, wo);
                }
            }
            Op::Relu(x) => {
                let xv = &self.nodes[x.0].value;
                let delta: Vec<T> = xv.iter().zip(g).map(|(&v, &gi)| if v > T::zero() { gi } else { T::zero() }).collect();
                accumulate(&mut self.nodes[x.0], delta);
            }
            Op::MaxPool2d { input, argmax } | Op::GlobalMaxPool { input, argmax } => {
                if let Some(dx) = grad_slot(&mut self.nodes[input.0]) {
                    for (&idx, &gi) in argmax.iter().zip(g) {
                        dx[idx as usize] = dx[idx as usize] + gi;
                    }
                }
            }
            Op::Dense { input, weight, bias } => {
                let [m, n] = self.nodes[weight.0].shape[..] else { unreachable!() };
                accumulate(&mut self.nodes[bias.0], g.iter().copied());
                if self.nodes[weight.0].requires_grad {
                    let xv = self.nodes[input.0].value.clone();
                    let dw = grad_slot(&mut self.nodes[weight.0]).expect("requires grad");
                    T::gemm(m, 1, n, g, false, &xv, false, dw, true);
                }
                if self.nodes[input.0].requires_grad {
                    let mut dx = vec![T::zero(); n];
                    T::gemm(n, m, 1, &self.nodes[weight.0].value, true, g, false, &mut dx, false);
                    accumulate(&mut self.nodes[input.0], dx);
                }
            }
            Op::ElementwiseMax { inputs, winner } => {
                for (k, &t) in inputs.iter().enumerate() {
                    if let Some(dx) = grad_slot(&mut self.nodes[t.0]) {
                        for (i, (&wk, &gi)) in winner.iter().zip(g).enumerate() {
                            if wk as usize == k {
                                dx[i] = dx[i] + gi;
                            }
                        }
                    }
                }
            }
            Op::L2Normalize { input, inv_norm, clamped } => {
                let y = &self.nodes[at].value;
                let delta: Vec<T> = if *clamped {
                    g.iter().map(|&gi| gi * *inv_norm).collect()
                } else {
                    let yg: T = y.iter().zip(g).map(|(&a, &b)| a * b).sum();
                    y.iter().zip(g).map(|(&yi, &gi)| (gi - yi * yg) * *inv_norm).collect()
                };
                accumulate(&mut self.nodes[input.0], delta);
            }
            Op::CosineDistance { u, v } => {
                let g0 = g[0];
                let uv = self.nodes[u.0].value.clone();
                let vv = self.nodes[v.0].value.clone();
                accumulate(&mut self.nodes[u.0], vv.iter().map(|&x| -g0 * x));
                accumulate(&mut self.nodes[v.0], uv.iter().map(|&x| -g0 * x));
            }
            Op::ContrastiveLoss { d, same, margin } => {
                let dv = self.nodes[d.0].value[0];
                let two = T::one() + T::one();
                let dl = if *same {
                    two * dv
                } else if *margin - dv > T::zero() {
                    -two * (*margin - dv)
                } else {
                    T::zero()
                };
                accumulate(&mut self.nodes[d.0], [g[0] * dl]);
            }
            Op::Add(a, b) => {
                accumulate(&mut self.nodes[a.0], g.iter().copied());
                accumulate(&mut self.nodes[b.0], g.iter().copied());
            }
            Op::Sum(x) => {
                let n = self.nodes[x.0].value.len();
                accumulate(&mut self.nodes[x.0], std::iter::repeat_n(g[0], n));
            }
            Op::Mean(xs) => {
                let share = g[0] / T::from_usize(xs.len()).expect("count fits");
                for &x in xs {
                    accumulate(&mut self.nodes[x.0], [share]);
                }
            }
        }
    }
}

/// Unfolds `[C, H, W]` into `[C·k·k, Ho·Wo]` patch columns (zero padding).
#[allow(clippy::too_many_arguments)]
fn im2col<T: Scalar>(
    x: &[T],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    padding: usize,
    ho: usize,
    wo: usize,
) -> Vec<T> {
    let mut cols = vec![T::zero(); c * k * k * ho * wo];
    let mut row = 0;
    for ch in 0..c {
        let plane = &x[ch * h * w..(ch + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let dst = &mut cols[row * ho * wo..(row + 1) * ho * wo];
                for oy in 0..ho {
                    let iy = (oy * stride + ky) as isize - padding as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src_row = &plane[iy as usize * w..(iy as usize + 1) * w];
                    let out_row = &mut dst[oy * wo..(oy + 1) * wo];
                    for (ox, o) in out_row.iter_mut().enumerate() {
                        let ix = (ox * stride + kx) as isize - padding as isize;
                        if ix >= 0 && ix < w as isize {
                            *o = src_row[ix as usize];
                        }
                    }
                }
                row += 1;
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters patch-column gradients back onto `[C, H, W]`.
#[allow(clippy::too_many_arguments)]
fn col2im_add<T: Scalar>(
    cols: &[T],
    dx: &mut [T],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    padding: usize,
    ho: usize,
    wo: usize,
) {
    let mut row = 0;
    for ch in 0..c {
        let plane = &mut dx[ch * h * w..(ch + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let src = &cols[row * ho * wo..(row + 1) * ho * wo];
                for oy in 0..ho {
                    let iy = (oy * stride + ky) as isize - padding as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst_row = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, &v) in src[oy * wo..(oy + 1) * wo].iter().enumerate() {
                        let ix = (ox * stride + kx) as isize - padding as isize;
                        if ix >= 0 && ix < w as isize {
                            dst_row[ix as usize] = dst_row[ix as usize] + v;
                        }
                    }
                }
                row += 1;
            }
        }
    }
}
