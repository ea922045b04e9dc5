//! A small reverse-mode automatic differentiation tape over [`Mat`].
//!
//! The training graph is rebuilt every step: constants and parameters are
//! pushed as leaves, operations push one node each (eager evaluation), and
//! [`Graph::backward`] walks the tape once in reverse. Only nodes that
//! transitively depend on a parameter participate in the backward pass.
//!
//! Domain-specific operations (spectral filtering, overlap-add synthesis,
//! the mel transform) implement [`GradOp`] in their own modules and attach
//! themselves with [`Graph::push`].

use crate::mat::Mat;

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Backward rule for one operation.
///
/// `grad` is the cotangent of the node's output, `out` its forward value and
/// `parents` the forward values of its inputs. The returned vector is
/// aligned with the parents; `None` skips a parent (used when it is known
/// not to require gradient).
pub trait GradOp {
    fn backward(&self, grad: &Mat, out: &Mat, parents: &[&Mat]) -> Vec<Option<Mat>>;
}

struct Node {
    value: Mat,
    requires: bool,
    parents: Vec<Var>,
    op: Option<Box<dyn GradOp>>,
}

/// Gradients keyed by [`Var`], produced by [`Graph::backward`].
pub struct Gradients {
    grads: Vec<Option<Mat>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Mat> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Mat> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Leaf that never receives gradient.
    pub fn constant(&mut self, value: Mat) -> Var {
        self.leaf(value, false)
    }

    /// Leaf that accumulates gradient (a trainable parameter or an input
    /// under gradient check).
    pub fn param(&mut self, value: Mat) -> Var {
        self.leaf(value, true)
    }

    fn leaf(&mut self, value: Mat, requires: bool) -> Var {
        self.nodes.push(Node {
            value,
            requires,
            parents: Vec::new(),
            op: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// Attach a custom operation node. `value` must already be the forward
    /// result of applying `op` to `parents`.
    pub fn push(&mut self, value: Mat, parents: Vec<Var>, op: Box<dyn GradOp>) -> Var {
        let requires = parents.iter().any(|p| self.nodes[p.0].requires);
        self.nodes.push(Node {
            value,
            requires,
            parents,
            op: if requires { Some(op) } else { None },
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    pub fn requires(&self, v: Var) -> bool {
        self.nodes[v.0].requires
    }

    /// Reverse sweep from `root`, which must be a scalar node.
    pub fn backward(&self, root: Var) -> Gradients {
        assert_eq!(
            self.nodes[root.0].value.len(),
            1,
            "backward root must be scalar"
        );
        let mut grads: Vec<Option<Mat>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Mat::scalar(1.0));

        for i in (0..=root.0).rev() {
            let node = &self.nodes[i];
            if !node.requires || node.op.is_none() {
                continue;
            }
            let Some(grad) = grads[i].take() else {
                continue;
            };
            let parent_vals: Vec<&Mat> =
                node.parents.iter().map(|p| &self.nodes[p.0].value).collect();
            let contribs = node
                .op
                .as_ref()
                .unwrap()
                .backward(&grad, &node.value, &parent_vals);
            debug_assert_eq!(contribs.len(), node.parents.len());
            for (p, c) in node.parents.iter().zip(contribs) {
                if !self.nodes[p.0].requires {
                    continue;
                }
                if let Some(c) = c {
                    debug_assert_eq!(c.shape(), self.nodes[p.0].value.shape());
                    match &mut grads[p.0] {
                        Some(acc) => acc.add_assign(&c),
                        slot => *slot = Some(c),
                    }
                }
            }
        }
        Gradients { grads }
    }

    // ---- elementwise binary ----

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.push(v, vec![a, b], Box::new(AddOp))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.push(v, vec![a, b], Box::new(SubOp))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.push(v, vec![a, b], Box::new(MulOp))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x / y);
        self.push(v, vec![a, b], Box::new(DivOp))
    }

    // ---- scalar-broadcast ----

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).map(|x| x + c);
        self.push(v, vec![a], Box::new(IdentityGrad))
    }

    pub fn mul_scalar(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).map(|x| x * c);
        self.push(v, vec![a], Box::new(ScaleOp(c)))
    }

    // ---- unary ----

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        self.push(v, vec![a], Box::new(TanhOp))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| 1.0 / (1.0 + (-x).exp()));
        self.push(v, vec![a], Box::new(SigmoidOp))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(v, vec![a], Box::new(ReluOp))
    }

    pub fn silu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x / (1.0 + (-x).exp()));
        self.push(v, vec![a], Box::new(SiluOp))
    }

    /// `ln(1 + e^x) + floor`, computed stably.
    pub fn softplus(&mut self, a: Var, floor: f64) -> Var {
        let v = self.value(a).map(|x| softplus_stable(x) + floor);
        self.push(v, vec![a], Box::new(SoftplusOp))
    }

    // ---- reductions ----

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Mat::scalar(self.value(a).sum());
        self.push(v, vec![a], Box::new(SumOp))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = Mat::scalar(self.value(a).mean());
        self.push(v, vec![a], Box::new(MeanOp))
    }

    // ---- shape ----

    pub fn slice_cols(&mut self, a: Var, lo: usize, hi: usize) -> Var {
        let v = self.value(a).slice_cols(lo, hi);
        self.push(v, vec![a], Box::new(SliceColsOp { lo, hi }))
    }

    pub fn slice_rows(&mut self, a: Var, lo: usize, hi: usize) -> Var {
        let v = self.value(a).slice_rows(lo, hi);
        self.push(v, vec![a], Box::new(SliceRowsOp { lo }))
    }

    // ---- linear algebra ----

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        self.push(v, vec![a, b], Box::new(MatMulOp))
    }

    /// Add a `1 x C` row to every row of a `T x C` matrix.
    pub fn broadcast_row_add(&mut self, a: Var, row: Var) -> Var {
        let (av, rv) = (self.value(a), self.value(row));
        assert_eq!(rv.rows(), 1);
        assert_eq!(av.cols(), rv.cols());
        let mut v = av.clone();
        for t in 0..v.rows() {
            for (o, r) in v.row_mut(t).iter_mut().zip(rv.row(0)) {
                *o += r;
            }
        }
        self.push(v, vec![a, row], Box::new(BroadcastRowAddOp))
    }

    /// Multiply every row of a `T x C` matrix by the matching entry of a
    /// `T x 1` column.
    pub fn broadcast_col_mul(&mut self, a: Var, col: Var) -> Var {
        let (av, cv) = (self.value(a), self.value(col));
        assert_eq!(cv.cols(), 1);
        assert_eq!(av.rows(), cv.rows());
        let mut v = av.clone();
        for t in 0..v.rows() {
            let s = cv.at(t, 0);
            for o in v.row_mut(t) {
                *o *= s;
            }
        }
        self.push(v, vec![a, col], Box::new(BroadcastColMulOp))
    }

    /// Same-padded 1-D convolution over time. `x` is `[T x Cin]`, `w` is
    /// `[Cout x (K * Cin)]` laid out kernel-tap-major, `b` is `[1 x Cout]`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, kernel: usize, dilation: usize) -> Var {
        let v = conv1d_forward(self.value(x), self.value(w), self.value(b), kernel, dilation);
        self.push(v, vec![x, w, b], Box::new(Conv1dOp { kernel, dilation }))
    }
}

fn softplus_stable(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        (1.0 + x.exp()).ln()
    }
}

// ---- op implementations ----

struct AddOp;
impl GradOp for AddOp {
    fn backward(&self, grad: &Mat, _out: &Mat, _p: &[&Mat]) -> Vec<Option<Mat>> {
        vec![Some(grad.clone()), Some(grad.clone())]
    }
}

struct SubOp;
impl GradOp for SubOp {
    fn backward(&self, grad: &Mat, _out: &Mat, _p: &[&Mat]) -> Vec<Option<Mat>> {
        vec![Some(grad.clone()), Some(grad.map(|g| -g))]
    }
}

struct MulOp;
impl GradOp for MulOp {
    fn backward(&self, grad: &Mat, _out: &Mat, p: &[&Mat]) -> Vec<Option<Mat>> {
        vec![
            Some(grad.zip_map(p[1], |g, b| g * b)),
            Some(grad.zip_map(p[0], |g, a| g * a)),
        ]
    }
}

struct DivOp;
impl GradOp for DivOp {
    fn backward(&self, grad: &Mat, out: &Mat, p: &[&Mat]) -> Vec<Option<Mat>> {
        // d(a/b)/da = 1/b ; d(a/b)/db = -a/b^2 = -out/b
        let da = grad.zip_map(p[1], |g, b| g / b);
        let db = grad
            .zip_map(out, |g, o| -g * o)
            .zip_map(p[1], |v, b| v / b);
        vec![Some(da), Some(db)]
    }
}

struct IdentityGrad;
impl GradOp for IdentityGrad {
    fn backward(&self, grad: &Mat, _out: &Mat, _p: &[&Mat]) -> Vec<Option<Mat>> {
        vec![Some(grad.clone())]
    }
}

struct ScaleOp(f64);
impl GradOp for ScaleOp {
    fn backward(&self, grad: &Mat, _out: &Mat, _p: &[&Mat]) -> Vec<Option<Mat>> {
        vec![Some(grad.map(|g| g * self.0))]
    }
}

struct TanhOp;
impl GradOp for TanhOp {
    fn backward(&self, grad: &Mat, out: &Mat, _p: &[&Mat]) -> Vec<Option<Mat>> {
        vec![Some(grad.zip_map(out, |g, y| g * (1.0 - y * y)))]
    }
}

struct SigmoidOp;
impl GradOp for SigmoidOp {
    fn backward(&self, grad: &Mat, out: &Mat, _p: &[&Mat]) -> Vec<Option<Mat>> {
        vec![Some(grad.zip_map(out, |g, y| g * y * (1.0 - y)))]
    }
}

struct ReluOp;
impl GradOp for ReluOp {
    fn backward(&self, grad: &Mat, _out: &Mat, p: &[&Mat]) -> Vec<Option<Mat>> {
        vec![Some(grad.zip_map(p[0], |g, x| if x > 0.0 { g } else { 0.0 }))]
    }
}

struct SiluOp;
impl GradOp for SiluOp {
    fn backward(&self, grad: &Mat, _out: &Mat, p: &[&Mat]) -> Vec<Option<Mat>> {
        vec![Some(grad.zip_map(p[0], |g, x| {
            let s = 1.0 / (1.0 + (-x).exp());
            g * (s + x * s * (1.0 - s))
        }))]
    }
}

struct SoftplusOp;
impl GradOp for SoftplusOp {
    fn backward(&self, grad: &Mat, _out: &Mat, p: &[&Mat]) -> Vec<Option<Mat>> {
        vec![Some(grad.zip_map(p[0], |g, x| g / (1.0 + (-x).exp())))]
    }
}

struct SumOp;
impl GradOp for SumOp {
    fn backward(&self, grad: &Mat, _out: &Mat, p: &[&Mat]) -> Vec<Option<Mat>> {
        let g = grad.item();
        let (r, c) = p[0].shape();
        vec![Some(Mat::filled(r, c, g))]
    }
}

struct MeanOp;
impl GradOp for MeanOp {
    fn backward(&self, grad: &Mat, _out: &Mat, p: &[&Mat]) -> Vec<Option<Mat>> {
        let g = grad.item() / p[0].len() as f64;
        let (r, c) = p[0].shape();
        vec![Some(Mat::filled(r, c, g))]
    }
}

struct SliceColsOp {
    lo: usize,
    hi: usize,
}
impl GradOp for SliceColsOp {
    fn backward(&self, grad: &Mat, _out: &Mat, p: &[&Mat]) -> Vec<Option<Mat>> {
        let mut g = Mat::zeros(p[0].rows(), p[0].cols());
        for t in 0..grad.rows() {
            g.row_mut(t)[self.lo..self.hi].copy_from_slice(grad.row(t));
        }
        vec![Some(g)]
    }
}

struct SliceRowsOp {
    lo: usize,
}
impl GradOp for SliceRowsOp {
    fn backward(&self, grad: &Mat, _out: &Mat, p: &[&Mat]) -> Vec<Option<Mat>> {
        let mut g = Mat::zeros(p[0].rows(), p[0].cols());
        for t in 0..grad.rows() {
            g.row_mut(self.lo + t).copy_from_slice(grad.row(t));
        }
        vec![Some(g)]
    }
}

struct MatMulOp;
impl GradOp for MatMulOp {
    fn backward(&self, grad: &Mat, _out: &Mat, p: &[&Mat]) -> Vec<Option<Mat>> {
        let da = grad.matmul(&p[1].transpose());
        let db = p[0].transpose().matmul(grad);
        vec![Some(da), Some(db)]
    }
}

struct BroadcastRowAddOp;
impl GradOp for BroadcastRowAddOp {
    fn backward(&self, grad: &Mat, _out: &Mat, p: &[&Mat]) -> Vec<Option<Mat>> {
        let mut row = Mat::zeros(1, p[1].cols());
        for t in 0..grad.rows() {
            for (o, g) in row.row_mut(0).iter_mut().zip(grad.row(t)) {
                *o += g;
            }
        }
        vec![Some(grad.clone()), Some(row)]
    }
}

struct BroadcastColMulOp;
impl GradOp for BroadcastColMulOp {
    fn backward(&self, grad: &Mat, _out: &Mat, p: &[&Mat]) -> Vec<Option<Mat>> {
        let mut da = grad.clone();
        for t in 0..da.rows() {
            let s = p[1].at(t, 0);
            for v in da.row_mut(t) {
                *v *= s;
            }
        }
        let mut dcol = Mat::zeros(p[0].rows(), 1);
        for t in 0..grad.rows() {
            dcol.set(t, 0, crate::mat::dot(grad.row(t), p[0].row(t)));
        }
        vec![Some(da), Some(dcol)]
    }
}

pub(crate) fn conv1d_forward(x: &Mat, w: &Mat, b: &Mat, kernel: usize, dilation: usize) -> Mat {
    let (t_len, c_in) = x.shape();
    let c_out = w.rows();
    assert_eq!(w.cols(), kernel * c_in, "conv1d weight layout mismatch");
    assert_eq!(b.cols(), c_out);
    let half = (kernel / 2) as isize;
    let mut out = Mat::zeros(t_len, c_out);
    for t in 0..t_len {
        let o_row = out.row_mut(t);
        o_row.copy_from_slice(b.row(0));
        for k in 0..kernel {
            let src = t as isize + dilation as isize * (k as isize - half);
            if src < 0 || src as usize >= t_len {
                continue;
            }
            let x_row = x.row(src as usize);
            for (oc, o) in o_row.iter_mut().enumerate() {
                *o += crate::mat::dot(&w.row(oc)[k * c_in..(k + 1) * c_in], x_row);
            }
        }
    }
    out
}

struct Conv1dOp {
    kernel: usize,
    dilation: usize,
}
impl GradOp for Conv1dOp {
    fn backward(&self, grad: &Mat, _out: &Mat, p: &[&Mat]) -> Vec<Option<Mat>> {
        let (x, w, _b) = (p[0], p[1], p[2]);
        let (t_len, c_in) = x.shape();
        let c_out = w.rows();
        let half = (self.kernel / 2) as isize;

        let mut dx = Mat::zeros(t_len, c_in);
        let mut dw = Mat::zeros(w.rows(), w.cols());
        let mut db = Mat::zeros(1, c_out);

        for t in 0..t_len {
            let g_row = grad.row(t);
            for (oc, g) in g_row.iter().enumerate() {
                db.row_mut(0)[oc] += g;
            }
            for k in 0..self.kernel {
                let src = t as isize + self.dilation as isize * (k as isize - half);
                if src < 0 || src as usize >= t_len {
                    continue;
                }
                let src = src as usize;
                let x_row = x.row(src);
                for (oc, &g) in g_row.iter().enumerate() {
                    if g == 0.0 {
                        continue;
                    }
                    let w_seg = &w.row(oc)[k * c_in..(k + 1) * c_in];
                    let dw_seg = &mut dw.row_mut(oc)[k * c_in..(k + 1) * c_in];
                    for (dv, &xv) in dw_seg.iter_mut().zip(x_row) {
                        *dv += g * xv;
                    }
                    let dx_row = dx.row_mut(src);
                    for (d, wv) in dx_row.iter_mut().zip(w_seg) {
                        *d += g * wv;
                    }
                }
            }
        }
        vec![Some(dx), Some(dw), Some(db)]
    }
}

/// Finite-difference gradient checking, shared by unit tests and the
/// acceptance suite. `f` rebuilds the graph from the given input values and
/// returns the scalar output; the analytic gradient of each input is
/// compared against central differences with step `h`.
pub fn finite_diff_check(
    inputs: &[Mat],
    h: f64,
    tol: f64,
    f: impl Fn(&mut Graph, &[Var]) -> Var,
) -> f64 {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|m| g.param(m.clone())).collect();
    let root = f(&mut g, &vars);
    let grads = g.backward(root);

    let eval = |mats: &[Mat]| -> f64 {
        let mut g = Graph::new();
        let vars: Vec<Var> = mats.iter().map(|m| g.constant(m.clone())).collect();
        let root = f(&mut g, &vars);
        g.value(root).item()
    };

    let mut worst = 0.0f64;
    for (i, input) in inputs.iter().enumerate() {
        let analytic = grads
            .get(vars[i])
            .cloned()
            .unwrap_or_else(|| Mat::zeros(input.rows(), input.cols()));
        let mut fd = Mat::zeros(input.rows(), input.cols());
        let mut work: Vec<Mat> = inputs.to_vec();
        for j in 0..input.len() {
            let orig = input.data()[j];
            work[i].data_mut()[j] = orig + h;
            let up = eval(&work);
            work[i].data_mut()[j] = orig - h;
            let down = eval(&work);
            work[i].data_mut()[j] = orig;
            fd.data_mut()[j] = (up - down) / (2.0 * h);
        }
        let diff = analytic.zip_map(&fd, |a, b| a - b).norm();
        let rel = diff / fd.norm().max(1e-8);
        assert!(
            rel < tol,
            "input {i}: gradient mismatch, relative error {rel}"
        );
        worst = worst.max(rel);
    }
    worst
}
