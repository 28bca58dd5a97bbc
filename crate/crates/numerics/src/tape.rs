//! Dynamic-tape reverse-mode automatic differentiation over dense matrices.
//!
//! Every value is a 2-D `f64` matrix (scalars are `1×1`, row vectors `1×n`).
//! Operations on [`Var`] handles append nodes to a [`Tape`]; [`Tape::backward`]
//! walks the tape in reverse and returns [`Gradients`] for every node that
//! depends on a leaf.
//!
//! Operations outside the built-in set are added through [`CustomOp`]: the
//! caller computes the forward value and supplies a vector-Jacobian product.

use std::cell::RefCell;
use std::fmt;
use std::ops;
use std::rc::Rc;

use ndarray::{concatenate, s, Array2, Axis, Zip};

use crate::NumericsError;

/// Vector-Jacobian product for an operation defined outside this module.
pub trait CustomOp {
    /// Given the upstream gradient `grad` (same shape as `output`), return one
    /// gradient per input (`None` for inputs that receive no gradient).
    fn backward(
        &self,
        inputs: &[&Array2<f64>],
        output: &Array2<f64>,
        grad: &Array2<f64>,
    ) -> Vec<Option<Array2<f64>>>;

    fn name(&self) -> &'static str {
        "custom"
    }
}

#[derive(Clone, Copy, Debug)]
enum Unary {
    Exp,
    Log,
    Sigmoid,
    Softplus,
    Tanh,
    Square,
    LeakyRelu(f64),
}

enum Op {
    Leaf,
    Const,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddRow(usize, usize),
    MulRow(usize, usize),
    MulCol(usize, usize),
    MulScalar(usize, usize),
    Scale(usize, f64),
    Offset(usize),
    Unary(usize, Unary),
    Sum(usize),
    SumRows(usize),
    SumCols(usize),
    LayerNorm(usize, Rc<Array2<f64>>, Rc<Vec<f64>>),
    LogSoftmax(usize),
    Softmax(usize),
    ConcatCols(Vec<usize>),
    SliceCols(usize, usize),
    GatherRows(usize, Rc<Vec<usize>>),
    PickRowwise(usize, Rc<Vec<usize>>),
    Reshape(usize),
    Transpose(usize),
    TileRows(usize, usize),
    StraightThrough(usize),
    Custom(Vec<usize>, Box<dyn CustomOp>),
}

struct Node {
    value: Rc<Array2<f64>>,
    op: Op,
    needs_grad: bool,
}

/// Recording tape. Single owner; not shareable across threads while recording.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = self.value();
        write!(f, "Var#{}{:?}", self.id, v.dim())
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Array2<f64>, op: Op, needs_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            op,
            needs_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn needs(&self, ids: &[usize]) -> bool {
        let nodes = self.nodes.borrow();
        ids.iter().any(|&i| nodes[i].needs_grad)
    }

    fn value_of(&self, id: usize) -> Rc<Array2<f64>> {
        self.nodes.borrow()[id].value.clone()
    }

    /// Differentiable input.
    pub fn leaf(&self, value: Array2<f64>) -> Var<'_> {
        self.push(value, Op::Leaf, true)
    }

    /// Constant input; receives no gradient.
    pub fn constant(&self, value: Array2<f64>) -> Var<'_> {
        self.push(value, Op::Const, false)
    }

    pub fn scalar(&self, value: f64) -> Var<'_> {
        self.constant(Array2::from_elem((1, 1), value))
    }

    pub fn zeros(&self, rows: usize, cols: usize) -> Var<'_> {
        self.constant(Array2::zeros((rows, cols)))
    }

    /// Records an operation whose forward value was computed by the caller.
    pub fn custom<'t>(
        &'t self,
        inputs: &[Var<'t>],
        value: Array2<f64>,
        op: Box<dyn CustomOp>,
    ) -> Var<'t> {
        let ids: Vec<usize> = inputs.iter().map(|v| v.id).collect();
        let needs = self.needs(&ids);
        self.push(value, Op::Custom(ids, op), needs)
    }

    /// Column-wise concatenation of equally tall matrices.
    pub fn concat_cols<'t>(&'t self, parts: &[Var<'t>]) -> Var<'t> {
        assert!(!parts.is_empty(), "concat of zero parts");
        let vals: Vec<Rc<Array2<f64>>> = parts.iter().map(|p| p.value()).collect();
        let views: Vec<_> = vals.iter().map(|v| v.view()).collect();
        let value = concatenate(Axis(1), &views).expect("concat_cols: row count mismatch");
        let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
        let needs = self.needs(&ids);
        self.push(value, Op::ConcatCols(ids), needs)
    }

    /// Reverse sweep from a scalar root.
    pub fn backward(&self, root: Var<'_>) -> Result<Gradients, NumericsError> {
        let nodes = self.nodes.borrow();
        let rdim = nodes[root.id].value.dim();
        if rdim != (1, 1) {
            return Err(NumericsError::NonScalarRoot(rdim.0, rdim.1));
        }
        let mut grads: Vec<Option<Array2<f64>>> = (0..nodes.len()).map(|_| None).collect();
        grads[root.id] = Some(Array2::ones((1, 1)));

        for id in (0..=root.id).rev() {
            let node = &nodes[id];
            if !node.needs_grad || matches!(node.op, Op::Leaf | Op::Const) {
                continue;
            }
            let g = match grads[id].take() {
                Some(g) => g,
                None => continue,
            };
            let val = |i: usize| -> &Array2<f64> { &nodes[i].value };
            let mut push = |i: usize, gi: Array2<f64>| {
                if !nodes[i].needs_grad {
                    return;
                }
                match &mut grads[i] {
                    Some(acc) => *acc += &gi,
                    slot @ None => *slot = Some(gi),
                }
            };
            match &node.op {
                Op::Leaf | Op::Const => {}
                Op::MatMul(a, b) => {
                    push(*a, g.dot(&val(*b).t()));
                    push(*b, val(*a).t().dot(&g));
                }
                Op::Add(a, b) => {
                    push(*a, g.clone());
                    push(*b, g);
                }
                Op::Sub(a, b) => {
                    push(*b, -&g);
                    push(*a, g);
                }
                Op::Mul(a, b) => {
                    push(*a, &g * val(*b));
                    push(*b, &g * val(*a));
                }
                Op::AddRow(a, r) => {
                    push(*r, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    push(*a, g);
                }
                Op::MulRow(a, r) => {
                    let rv = val(*r);
                    push(*r, (&g * val(*a)).sum_axis(Axis(0)).insert_axis(Axis(0)));
                    push(*a, &g * rv);
                }
                Op::MulCol(a, c) => {
                    let cv = val(*c);
                    push(*c, (&g * val(*a)).sum_axis(Axis(1)).insert_axis(Axis(1)));
                    push(*a, &g * cv);
                }
                Op::MulScalar(a, s) => {
                    let sv = val(*s)[[0, 0]];
                    let gs = (&g * val(*a)).sum();
                    push(*s, Array2::from_elem((1, 1), gs));
                    push(*a, g * sv);
                }
                Op::Scale(a, c) => push(*a, g * *c),
                Op::Offset(a) => push(*a, g),
                Op::Unary(a, kind) => {
                    let x = val(*a);
                    let y = &node.value;
                    let mut ga = g;
                    match kind {
                        Unary::Exp => ga *= &**y,
                        Unary::Log => Zip::from(&mut ga).and(x).for_each(|g, &x| *g /= x),
                        Unary::Sigmoid => {
                            Zip::from(&mut ga).and(&**y).for_each(|g, &s| *g *= s * (1.0 - s))
                        }
                        Unary::Softplus => {
                            Zip::from(&mut ga).and(x).for_each(|g, &x| *g *= sigmoid(x))
                        }
                        Unary::Tanh => {
                            Zip::from(&mut ga).and(&**y).for_each(|g, &t| *g *= 1.0 - t * t)
                        }
                        Unary::Square => Zip::from(&mut ga).and(x).for_each(|g, &x| *g *= 2.0 * x),
                        Unary::LeakyRelu(slope) => Zip::from(&mut ga)
                            .and(x)
                            .for_each(|g, &x| {
                                if x <= 0.0 {
                                    *g *= slope
                                }
                            }),
                    }
                    push(*a, ga);
                }
                Op::Sum(a) => {
                    let gv = g[[0, 0]];
                    push(*a, Array2::from_elem(val(*a).dim(), gv));
                }
                Op::SumRows(a) => {
                    let (m, n) = val(*a).dim();
                    push(*a, g.broadcast((m, n)).unwrap().to_owned());
                }
                Op::SumCols(a) => {
                    let (m, n) = val(*a).dim();
                    push(*a, g.broadcast((m, n)).unwrap().to_owned());
                }
                Op::LayerNorm(a, xhat, inv_std) => {
                    let n = xhat.ncols() as f64;
                    let mut ga = Array2::zeros(g.dim());
                    for (r, ((mut out, gr), xr)) in ga
                        .rows_mut()
                        .into_iter()
                        .zip(g.rows())
                        .zip(xhat.rows())
                        .enumerate()
                    {
                        let mean_g = gr.sum() / n;
                        let mean_gx = gr.dot(&xr) / n;
                        let is = inv_std[r];
                        Zip::from(&mut out)
                            .and(&gr)
                            .and(&xr)
                            .for_each(|o, &gi, &xi| *o = is * (gi - mean_g - xi * mean_gx));
                    }
                    push(*a, ga);
                }
                Op::LogSoftmax(a) => {
                    // y = x - lse(x); dx = g - softmax * sum(g)
                    let mut ga = g.clone();
                    for (mut out, (gr, yr)) in ga.rows_mut().into_iter().zip(g.rows().into_iter().zip(node.value.rows())) {
                        let sg = gr.sum();
                        Zip::from(&mut out).and(&yr).for_each(|o, &y| *o -= y.exp() * sg);
                    }
                    push(*a, ga);
                }
                Op::Softmax(a) => {
                    let mut ga = Array2::zeros(g.dim());
                    for (mut out, (gr, yr)) in ga.rows_mut().into_iter().zip(g.rows().into_iter().zip(node.value.rows())) {
                        let dotp = gr.dot(&yr);
                        Zip::from(&mut out).and(&gr).and(&yr).for_each(|o, &gi, &y| *o = y * (gi - dotp));
                    }
                    push(*a, ga);
                }
                Op::ConcatCols(ids) => {
                    let mut off = 0;
                    for &i in ids {
                        let w = val(i).ncols();
                        push(i, g.slice(s![.., off..off + w]).to_owned());
                        off += w;
                    }
                }
                Op::SliceCols(a, start) => {
                    let mut ga = Array2::zeros(val(*a).dim());
                    let w = g.ncols();
                    ga.slice_mut(s![.., *start..*start + w]).assign(&g);
                    push(*a, ga);
                }
                Op::GatherRows(a, idx) => {
                    let mut ga = Array2::zeros(val(*a).dim());
                    for (r, &src) in idx.iter().enumerate() {
                        let mut row = ga.row_mut(src);
                        row += &g.row(r);
                    }
                    push(*a, ga);
                }
                Op::PickRowwise(a, idx) => {
                    let mut ga = Array2::zeros(val(*a).dim());
                    for (r, &c) in idx.iter().enumerate() {
                        ga[[r, c]] += g[[r, 0]];
                    }
                    push(*a, ga);
                }
                Op::Reshape(a) => {
                    let dim = val(*a).dim();
                    let flat: Vec<f64> = g.iter().copied().collect();
                    push(*a, Array2::from_shape_vec(dim, flat).unwrap());
                }
                Op::Transpose(a) => push(*a, g.t().to_owned()),
                Op::TileRows(a, times) => {
                    let (m, n) = val(*a).dim();
                    let mut ga = Array2::zeros((m, n));
                    for t in 0..*times {
                        ga += &g.slice(s![t * m..(t + 1) * m, ..]);
                    }
                    push(*a, ga);
                }
                Op::StraightThrough(soft) => push(*soft, g),
                Op::Custom(ids, op) => {
                    let inputs: Vec<&Array2<f64>> = ids.iter().map(|&i| val(i)).collect();
                    let gs = op.backward(&inputs, &node.value, &g);
                    debug_assert_eq!(gs.len(), ids.len(), "{} returned wrong arity", op.name());
                    for (&i, gi) in ids.iter().zip(gs) {
                        if let Some(gi) = gi {
                            debug_assert_eq!(gi.dim(), val(i).dim(), "{} gradient shape", op.name());
                            push(i, gi);
                        }
                    }
                }
            }
        }
        Ok(Gradients { grads })
    }
}

/// Gradients produced by [`Tape::backward`], indexed by node.
pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
}

impl Gradients {
    /// Gradient of the root w.r.t. `v`, or `None` when `v` does not influence it.
    pub fn get(&self, v: Var<'_>) -> Option<&Array2<f64>> {
        self.grads.get(v.id).and_then(|g| g.as_ref())
    }

    /// Gradient w.r.t. `v`, zero-filled when absent.
    pub fn wrt(&self, v: Var<'_>) -> Array2<f64> {
        match self.get(v) {
            Some(g) => g.clone(),
            None => Array2::zeros(v.shape()),
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Rc<Array2<f64>> {
        self.tape.value_of(self.id)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.value().dim()
    }

    /// Value of a `1×1` variable.
    pub fn item(&self) -> f64 {
        let v = self.value();
        assert_eq!(v.dim(), (1, 1), "item() on non-scalar");
        v[[0, 0]]
    }

    fn unary_op(self, kind: Unary, f: impl Fn(f64) -> f64) -> Var<'t> {
        let value = self.value().mapv(f);
        let needs = self.tape.needs(&[self.id]);
        self.tape.push(value, Op::Unary(self.id, kind), needs)
    }

    fn binary(self, other: Var<'t>, value: Array2<f64>, op: Op) -> Var<'t> {
        let needs = self.tape.needs(&[self.id, other.id]);
        self.tape.push(value, op, needs)
    }

    pub fn matmul(self, other: Var<'t>) -> Var<'t> {
        let value = self.value().dot(&*other.value());
        self.binary(other, value, Op::MatMul(self.id, other.id))
    }

    /// Adds a `1×n` row to every row.
    pub fn add_row(self, row: Var<'t>) -> Var<'t> {
        let r = row.value();
        assert_eq!(r.nrows(), 1, "add_row expects a 1×n row");
        let value = &*self.value() + &*r;
        self.binary(row, value, Op::AddRow(self.id, row.id))
    }

    /// Multiplies every row elementwise by a `1×n` row.
    pub fn mul_row(self, row: Var<'t>) -> Var<'t> {
        let r = row.value();
        assert_eq!(r.nrows(), 1, "mul_row expects a 1×n row");
        let value = &*self.value() * &*r;
        self.binary(row, value, Op::MulRow(self.id, row.id))
    }

    /// Multiplies every column elementwise by an `m×1` column.
    pub fn mul_col(self, col: Var<'t>) -> Var<'t> {
        let c = col.value();
        assert_eq!(c.ncols(), 1, "mul_col expects an m×1 column");
        let value = &*self.value() * &*c;
        self.binary(col, value, Op::MulCol(self.id, col.id))
    }

    /// Multiplies by a `1×1` variable.
    pub fn mul_scalar(self, s: Var<'t>) -> Var<'t> {
        let sv = s.item();
        let value = &*self.value() * sv;
        self.binary(s, value, Op::MulScalar(self.id, s.id))
    }

    pub fn scale(self, c: f64) -> Var<'t> {
        let value = &*self.value() * c;
        let needs = self.tape.needs(&[self.id]);
        self.tape.push(value, Op::Scale(self.id, c), needs)
    }

    pub fn offset(self, c: f64) -> Var<'t> {
        let value = &*self.value() + c;
        let needs = self.tape.needs(&[self.id]);
        self.tape.push(value, Op::Offset(self.id), needs)
    }

    pub fn exp(self) -> Var<'t> {
        self.unary_op(Unary::Exp, f64::exp)
    }

    pub fn ln(self) -> Var<'t> {
        self.unary_op(Unary::Log, f64::ln)
    }

    pub fn sigmoid(self) -> Var<'t> {
        self.unary_op(Unary::Sigmoid, sigmoid)
    }

    pub fn softplus(self) -> Var<'t> {
        self.unary_op(Unary::Softplus, softplus)
    }

    pub fn tanh(self) -> Var<'t> {
        self.unary_op(Unary::Tanh, f64::tanh)
    }

    pub fn square(self) -> Var<'t> {
        self.unary_op(Unary::Square, |x| x * x)
    }

    pub fn leaky_relu(self, slope: f64) -> Var<'t> {
        self.unary_op(Unary::LeakyRelu(slope), move |x| if x > 0.0 { x } else { slope * x })
    }

    /// Sum of all entries, as `1×1`.
    pub fn sum(self) -> Var<'t> {
        let value = Array2::from_elem((1, 1), self.value().sum());
        let needs = self.tape.needs(&[self.id]);
        self.tape.push(value, Op::Sum(self.id), needs)
    }

    pub fn mean(self) -> Var<'t> {
        let n = self.value().len() as f64;
        self.sum().scale(1.0 / n)
    }

    /// Column sums, as `1×n`.
    pub fn sum_rows(self) -> Var<'t> {
        let value = self.value().sum_axis(Axis(0)).insert_axis(Axis(0));
        let needs = self.tape.needs(&[self.id]);
        self.tape.push(value, Op::SumRows(self.id), needs)
    }

    /// Row sums, as `m×1`.
    pub fn sum_cols(self) -> Var<'t> {
        let value = self.value().sum_axis(Axis(1)).insert_axis(Axis(1));
        let needs = self.tape.needs(&[self.id]);
        self.tape.push(value, Op::SumCols(self.id), needs)
    }

    /// Row-wise normalization to zero mean and unit variance (no affine).
    pub fn layer_norm(self, eps: f64) -> Var<'t> {
        let x = self.value();
        let n = x.ncols() as f64;
        let mut xhat = Array2::zeros(x.dim());
        let mut inv = Vec::with_capacity(x.nrows());
        for (mut out, row) in xhat.rows_mut().into_iter().zip(x.rows()) {
            let mean = row.sum() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let is = 1.0 / (var + eps).sqrt();
            Zip::from(&mut out).and(&row).for_each(|o, &v| *o = (v - mean) * is);
            inv.push(is);
        }
        let xhat = Rc::new(xhat);
        let needs = self.tape.needs(&[self.id]);
        self.tape.push(
            (*xhat).clone(),
            Op::LayerNorm(self.id, xhat, Rc::new(inv)),
            needs,
        )
    }

    pub fn log_softmax(self) -> Var<'t> {
        let mut value = (*self.value()).clone();
        for mut row in value.rows_mut() {
            let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            row -= lse;
        }
        let needs = self.tape.needs(&[self.id]);
        self.tape.push(value, Op::LogSoftmax(self.id), needs)
    }

    pub fn softmax(self) -> Var<'t> {
        let mut value = (*self.value()).clone();
        for mut row in value.rows_mut() {
            let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            row.mapv_inplace(|v| (v - m).exp());
            let s = row.sum();
            row /= s;
        }
        let needs = self.tape.needs(&[self.id]);
        self.tape.push(value, Op::Softmax(self.id), needs)
    }

    pub fn slice_cols(self, start: usize, len: usize) -> Var<'t> {
        let value = self.value().slice(s![.., start..start + len]).to_owned();
        let needs = self.tape.needs(&[self.id]);
        self.tape.push(value, Op::SliceCols(self.id, start), needs)
    }

    pub fn col(self, j: usize) -> Var<'t> {
        self.slice_cols(j, 1)
    }

    /// Rows `idx[0], idx[1], ...` stacked (indices may repeat).
    pub fn gather_rows(self, idx: Vec<usize>) -> Var<'t> {
        let x = self.value();
        let value = x.select(Axis(0), &idx);
        let needs = self.tape.needs(&[self.id]);
        self.tape.push(value, Op::GatherRows(self.id, Rc::new(idx)), needs)
    }

    /// Picks entry `(r, idx[r])` of every row, as `m×1`.
    pub fn pick_rowwise(self, idx: Vec<usize>) -> Var<'t> {
        let x = self.value();
        assert_eq!(idx.len(), x.nrows());
        let value = Array2::from_shape_fn((x.nrows(), 1), |(r, _)| x[[r, idx[r]]]);
        let needs = self.tape.needs(&[self.id]);
        self.tape.push(value, Op::PickRowwise(self.id, Rc::new(idx)), needs)
    }

    /// Row-major reshape.
    pub fn reshape(self, rows: usize, cols: usize) -> Var<'t> {
        let x = self.value();
        assert_eq!(rows * cols, x.len(), "reshape changes element count");
        let flat: Vec<f64> = x.iter().copied().collect();
        let value = Array2::from_shape_vec((rows, cols), flat).unwrap();
        let needs = self.tape.needs(&[self.id]);
        self.tape.push(value, Op::Reshape(self.id), needs)
    }

    pub fn t(self) -> Var<'t> {
        let value = self.value().t().to_owned();
        let needs = self.tape.needs(&[self.id]);
        self.tape.push(value, Op::Transpose(self.id), needs)
    }

    /// Stacks `times` copies of this matrix vertically.
    pub fn tile_rows(self, times: usize) -> Var<'t> {
        let x = self.value();
        let views: Vec<_> = (0..times).map(|_| x.view()).collect();
        let value = concatenate(Axis(0), &views).unwrap();
        let needs = self.tape.needs(&[self.id]);
        self.tape.push(value, Op::TileRows(self.id, times), needs)
    }

    /// Same value, no gradient flow.
    pub fn detach(self) -> Var<'t> {
        let value = (*self.value()).clone();
        self.tape.constant(value)
    }

    /// Forward value `hard`, backward pass-through to `self`.
    pub fn straight_through(self, hard: Array2<f64>) -> Var<'t> {
        assert_eq!(hard.dim(), self.shape());
        let needs = self.tape.needs(&[self.id]);
        self.tape.push(hard, Op::StraightThrough(self.id), needs)
    }
}

impl<'t> ops::Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        let value = &*self.value() + &*rhs.value();
        self.binary(rhs, value, Op::Add(self.id, rhs.id))
    }
}

impl<'t> ops::Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        let value = &*self.value() - &*rhs.value();
        self.binary(rhs, value, Op::Sub(self.id, rhs.id))
    }
}

impl<'t> ops::Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        let value = &*self.value() * &*rhs.value();
        self.binary(rhs, value, Op::Mul(self.id, rhs.id))
    }
}

impl<'t> ops::Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.scale(-1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::check_gradient;
    use crate::RngStream;
    use ndarray::array;

    fn rand_mat(rng: &mut RngStream, m: usize, n: usize) -> Array2<f64> {
        Array2::from_shape_fn((m, n), |_| rng.normal())
    }

    #[test]
    fn square_derivative() {
        let tape = Tape::new();
        let x = tape.leaf(array![[3.0]]);
        let y = x * x;
        let g = tape.backward(y).unwrap();
        assert_eq!(g.wrt(x)[[0, 0]], 6.0);
    }

    #[test]
    fn constant_has_zero_gradient() {
        let tape = Tape::new();
        let x = tape.leaf(array![[3.0]]);
        let c = tape.scalar(5.0);
        let y = c.sum();
        let g = tape.backward(y).unwrap();
        assert!(g.get(x).is_none());
        assert_eq!(g.wrt(x)[[0, 0]], 0.0);
    }

    #[test]
    fn reused_value_accumulates() {
        let tape = Tape::new();
        let x = tape.leaf(array![[2.0]]);
        let y = x * x + x.scale(3.0) + x.exp();
        let g = tape.backward(y).unwrap();
        assert!((g.wrt(x)[[0, 0]] - (4.0 + 3.0 + 2f64.exp())).abs() < 1e-12);
    }

    #[test]
    fn non_scalar_root_rejected() {
        let tape = Tape::new();
        let x = tape.leaf(array![[1.0, 2.0]]);
        assert!(matches!(
            tape.backward(x),
            Err(NumericsError::NonScalarRoot(1, 2))
        ));
    }

    #[test]
    fn elementwise_ops_match_finite_differences() {
        let mut rng = RngStream::new(11);
        for _ in 0..20 {
            let a = rand_mat(&mut rng, 3, 4);
            let b = rand_mat(&mut rng, 3, 4);
            let w = rand_mat(&mut rng, 4, 2);
            let row = rand_mat(&mut rng, 1, 4);
            let err = check_gradient(&[a, b, w, row], |tape, v| {
                let (a, b, w, row) = (v[0], v[1], v[2], v[3]);
                let h = (a * b).add_row(row).tanh() + a.sigmoid().mul_row(row) - b.softplus();
                let z = h.matmul(w).leaky_relu(0.1);
                let s = z.square().sum() + a.exp().mean() + (b.square().offset(1.0)).ln().sum();
                let _ = tape;
                s
            });
            assert!(err < 1e-4, "relative error {err}");
        }
    }

    #[test]
    fn structural_ops_match_finite_differences() {
        let mut rng = RngStream::new(12);
        for _ in 0..20 {
            let a = rand_mat(&mut rng, 4, 3);
            let c = rand_mat(&mut rng, 4, 1);
            let e = rand_mat(&mut rng, 2, 3);
            let err = check_gradient(&[a, c, e], |tape, v| {
                let (a, c, e) = (v[0], v[1], v[2]);
                let ln = a.layer_norm(1e-5);
                let sm = a.softmax();
                let lsm = a.log_softmax().pick_rowwise(vec![0, 2, 1, 1]);
                let cat = tape.concat_cols(&[ln, c, sm.slice_cols(1, 2)]);
                let g = cat.gather_rows(vec![3, 0, 0, 2]).reshape(12, 2).t();
                let tiled = e.tile_rows(2).mul_col(c);
                let scal = c.sum();
                g.square().sum() + lsm.sum() + tiled.sum_rows().square().sum()
                    + a.mul_scalar(scal).sum_cols().tanh().sum()
            });
            assert!(err < 1e-4, "relative error {err}");
        }
    }
}
