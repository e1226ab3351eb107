//! Define-by-run reverse-mode differentiation over dense 2-D arrays.
//!
//! Every operation evaluates eagerly and appends a node to the tape, so the
//! node list is always in topological order. [`Tape::backward`] walks it once
//! in reverse and returns the gradient of a scalar node with respect to every
//! parameter leaf.
//!
//! Binary element-wise operations broadcast a `1 x c`, `r x 1` or `1 x 1`
//! operand against the other one; the backward pass sums the adjoint back to
//! the operand's shape.

use std::cell::{Cell, Ref, RefCell};

use ndarray::{Array2, Axis, Zip};

use super::params::{ParamId, ParamStore};
use super::DiffError;

/// Index of a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Param(ParamId),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MatMul(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    Tanh(Var),
    Exp(Var),
    Log(Var),
    Square(Var),
    PosPart(Var),
    Clamp(Var, f64, f64),
    Sum(Var),
    Mean(Var),
    SumRows(Var),
    SumCols(Var),
    LogSoftmax(Var),
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Array2<f64>,
}

/// Recording of one forward evaluation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    first_non_finite: Cell<Option<usize>>,
}

/// Parameter gradients produced by [`Tape::backward`], indexed by [`ParamId`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
}

impl Gradients {
    pub fn zeros(store: &ParamStore) -> Self {
        Self {
            grads: vec![None; store.len()],
        }
    }

    /// Gradient of the tensor, or `None` if the output did not depend on it.
    pub fn get(&self, id: ParamId) -> Option<&Array2<f64>> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    /// Flat gradient in [`ParamStore::to_flat`] layout; unused tensors are zero.
    pub fn to_flat(&self, store: &ParamStore) -> Vec<f64> {
        let mut out = Vec::with_capacity(store.total_dim());
        for id in store.ids() {
            match self.get(id) {
                Some(g) => out.extend(g.iter().copied()),
                None => out.extend(std::iter::repeat_n(0.0, store.get(id).len())),
            }
        }
        out
    }

    /// Adds `g` into the gradient slot of `id`.
    pub fn insert(&mut self, id: ParamId, g: Array2<f64>) {
        self.accumulate(id, g)
    }

    fn accumulate(&mut self, id: ParamId, g: Array2<f64>) {
        if id.0 >= self.grads.len() {
            self.grads.resize(id.0 + 1, None);
        }
        match &mut self.grads[id.0] {
            Some(acc) => *acc += &g,
            slot @ None => *slot = Some(g),
        }
    }
}

fn broadcast_shape(op: &'static str, a: (usize, usize), b: (usize, usize)) -> (usize, usize) {
    let dim = |x: usize, y: usize| {
        if x == y || y == 1 {
            Some(x)
        } else if x == 1 {
            Some(y)
        } else {
            None
        }
    };
    match (dim(a.0, b.0), dim(a.1, b.1)) {
        (Some(r), Some(c)) => (r, c),
        _ => panic!("{op}: incompatible shapes {a:?} and {b:?}"),
    }
}

/// Sums a broadcast adjoint back down to `shape`.
fn reduce_to(mut g: Array2<f64>, shape: (usize, usize)) -> Array2<f64> {
    if g.nrows() != shape.0 {
        g = g.sum_axis(Axis(0)).insert_axis(Axis(0));
    }
    if g.ncols() != shape.1 {
        g = g.sum_axis(Axis(1)).insert_axis(Axis(1));
    }
    g
}

fn shape_of(a: &Array2<f64>) -> (usize, usize) {
    (a.nrows(), a.ncols())
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    fn push(&self, op: Op, value: Array2<f64>) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        let idx = nodes.len();
        if self.first_non_finite.get().is_none() && value.iter().any(|v| !v.is_finite()) {
            self.first_non_finite.set(Some(idx));
        }
        nodes.push(Node { op, value });
        Var(idx)
    }

    fn val(&self, v: Var) -> Ref<'_, Array2<f64>> {
        Ref::map(self.nodes.borrow(), |n| &n[v.0].value)
    }

    /// Borrow a node's value. The borrow must end before the next operation.
    pub fn value(&self, v: Var) -> Ref<'_, Array2<f64>> {
        self.val(v)
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        shape_of(&self.val(v))
    }

    /// Value of a `1 x 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        let val = self.val(v);
        assert_eq!(shape_of(&val), (1, 1), "scalar() on non-scalar node");
        val[[0, 0]]
    }

    /// Index of the first node whose value contained a NaN or infinity.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.first_non_finite.get()
    }

    /// Scalar value of `v`, failing if any recorded intermediate is non-finite.
    pub fn checked_scalar(&self, v: Var) -> Result<f64, DiffError> {
        if let Some(node) = self.first_non_finite.get() {
            return Err(DiffError::NonFinite { node });
        }
        let shape = self.shape(v);
        if shape != (1, 1) {
            return Err(DiffError::NotScalar { shape });
        }
        Ok(self.scalar(v))
    }

    pub fn constant(&self, value: Array2<f64>) -> Var {
        self.push(Op::Constant, value)
    }

    pub fn scalar_constant(&self, value: f64) -> Var {
        self.constant(Array2::from_elem((1, 1), value))
    }

    /// Records a parameter leaf holding a copy of the stored tensor.
    pub fn param(&self, store: &ParamStore, id: ParamId) -> Var {
        self.push(Op::Param(id), store.get(id).clone())
    }

    pub fn add(&self, a: Var, b: Var) -> Var {
        let value = {
            let (x, y) = (self.val(a), self.val(b));
            broadcast_shape("add", shape_of(&x), shape_of(&y));
            &*x + &*y
        };
        self.push(Op::Add(a, b), value)
    }

    pub fn sub(&self, a: Var, b: Var) -> Var {
        let value = {
            let (x, y) = (self.val(a), self.val(b));
            broadcast_shape("sub", shape_of(&x), shape_of(&y));
            &*x - &*y
        };
        self.push(Op::Sub(a, b), value)
    }

    /// Element-wise product.
    pub fn mul(&self, a: Var, b: Var) -> Var {
        let value = {
            let (x, y) = (self.val(a), self.val(b));
            broadcast_shape("mul", shape_of(&x), shape_of(&y));
            &*x * &*y
        };
        self.push(Op::Mul(a, b), value)
    }

    pub fn matmul(&self, a: Var, b: Var) -> Var {
        let value = {
            let (x, y) = (self.val(a), self.val(b));
            assert_eq!(
                x.ncols(),
                y.nrows(),
                "matmul: incompatible shapes {:?} and {:?}",
                shape_of(&x),
                shape_of(&y)
            );
            x.dot(&*y)
        };
        self.push(Op::MatMul(a, b), value)
    }

    /// `a * c` for a constant `c`.
    pub fn scale(&self, a: Var, c: f64) -> Var {
        let value = &*self.val(a) * c;
        self.push(Op::Scale(a, c), value)
    }

    /// `a + c` for a constant `c`.
    pub fn offset(&self, a: Var, c: f64) -> Var {
        let value = &*self.val(a) + c;
        self.push(Op::Offset(a), value)
    }

    pub fn neg(&self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn tanh(&self, a: Var) -> Var {
        let value = self.val(a).mapv(f64::tanh);
        self.push(Op::Tanh(a), value)
    }

    pub fn exp(&self, a: Var) -> Var {
        let value = self.val(a).mapv(f64::exp);
        self.push(Op::Exp(a), value)
    }

    pub fn log(&self, a: Var) -> Var {
        let value = self.val(a).mapv(f64::ln);
        self.push(Op::Log(a), value)
    }

    pub fn square(&self, a: Var) -> Var {
        let value = self.val(a).mapv(|v| v * v);
        self.push(Op::Square(a), value)
    }

    /// Hinge `[a]_+`; the subgradient at zero is zero.
    pub fn pos_part(&self, a: Var) -> Var {
        let value = self.val(a).mapv(|v| v.max(0.0));
        self.push(Op::PosPart(a), value)
    }

    pub fn clamp(&self, a: Var, lo: f64, hi: f64) -> Var {
        assert!(lo <= hi, "clamp: lo > hi");
        let value = self.val(a).mapv(|v| v.clamp(lo, hi));
        self.push(Op::Clamp(a, lo, hi), value)
    }

    /// Sum of all entries, as a `1 x 1` node.
    pub fn sum(&self, a: Var) -> Var {
        let value = Array2::from_elem((1, 1), self.val(a).sum());
        self.push(Op::Sum(a), value)
    }

    pub fn mean(&self, a: Var) -> Var {
        let value = {
            let x = self.val(a);
            Array2::from_elem((1, 1), x.sum() / x.len() as f64)
        };
        self.push(Op::Mean(a), value)
    }

    /// Column sums (`r x c -> 1 x c`).
    pub fn sum_rows(&self, a: Var) -> Var {
        let value = self.val(a).sum_axis(Axis(0)).insert_axis(Axis(0));
        self.push(Op::SumRows(a), value)
    }

    /// Row sums (`r x c -> r x 1`).
    pub fn sum_cols(&self, a: Var) -> Var {
        let value = self.val(a).sum_axis(Axis(1)).insert_axis(Axis(1));
        self.push(Op::SumCols(a), value)
    }

    /// Row-wise log-softmax.
    pub fn log_softmax(&self, a: Var) -> Var {
        let value = {
            let mut x = self.val(a).to_owned();
            for mut row in x.rows_mut() {
                let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                row.mapv_inplace(|v| v - lse);
            }
            x
        };
        self.push(Op::LogSoftmax(a), value)
    }

    /// Reverse sweep from the scalar node `output`.
    pub fn backward(&self, output: Var) -> Result<Gradients, DiffError> {
        let nodes = self.nodes.borrow();
        if nodes.is_empty() || output.0 >= nodes.len() {
            return Err(DiffError::NoForward);
        }
        if let Some(node) = self.first_non_finite.get() {
            if node <= output.0 {
                return Err(DiffError::NonFinite { node });
            }
        }
        let out_shape = shape_of(&nodes[output.0].value);
        if out_shape != (1, 1) {
            return Err(DiffError::NotScalar { shape: out_shape });
        }

        let mut adj: Vec<Option<Array2<f64>>> = vec![None; output.0 + 1];
        adj[output.0] = Some(Array2::ones((1, 1)));
        let mut grads = Gradients { grads: Vec::new() };

        fn acc(adj: &mut [Option<Array2<f64>>], v: Var, g: Array2<f64>) {
            match &mut adj[v.0] {
                Some(a) => *a += &g,
                slot @ None => *slot = Some(g),
            }
        }

        for i in (0..=output.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &nodes[i];
            let v = |x: Var| &nodes[x.0].value;
            match node.op {
                Op::Constant => {}
                Op::Param(id) => grads.accumulate(id, g),
                Op::Add(a, b) => {
                    let gb = reduce_to(g.clone(), shape_of(v(b)));
                    acc(&mut adj, a, reduce_to(g, shape_of(v(a))));
                    acc(&mut adj, b, gb);
                }
                Op::Sub(a, b) => {
                    let gb = reduce_to(-&g, shape_of(v(b)));
                    acc(&mut adj, a, reduce_to(g, shape_of(v(a))));
                    acc(&mut adj, b, gb);
                }
                Op::Mul(a, b) => {
                    let ga = reduce_to(&g * v(b), shape_of(v(a)));
                    let gb = reduce_to(&g * v(a), shape_of(v(b)));
                    acc(&mut adj, a, ga);
                    acc(&mut adj, b, gb);
                }
                Op::MatMul(a, b) => {
                    let ga = g.dot(&v(b).t());
                    let gb = v(a).t().dot(&g);
                    acc(&mut adj, a, ga);
                    acc(&mut adj, b, gb);
                }
                Op::Scale(a, c) => acc(&mut adj, a, g * c),
                Op::Offset(a) => acc(&mut adj, a, g),
                Op::Tanh(a) => {
                    let mut g = g;
                    Zip::from(&mut g).and(&node.value).for_each(|g, &y| *g *= 1.0 - y * y);
                    acc(&mut adj, a, g);
                }
                Op::Exp(a) => acc(&mut adj, a, g * &node.value),
                Op::Log(a) => acc(&mut adj, a, g / v(a)),
                Op::Square(a) => {
                    let mut g = g;
                    Zip::from(&mut g).and(v(a)).for_each(|g, &x| *g *= 2.0 * x);
                    acc(&mut adj, a, g);
                }
                Op::PosPart(a) => {
                    let mut g = g;
                    Zip::from(&mut g).and(v(a)).for_each(|g, &x| {
                        if x <= 0.0 {
                            *g = 0.0;
                        }
                    });
                    acc(&mut adj, a, g);
                }
                Op::Clamp(a, lo, hi) => {
                    let mut g = g;
                    Zip::from(&mut g).and(v(a)).for_each(|g, &x| {
                        if x < lo || x > hi {
                            *g = 0.0;
                        }
                    });
                    acc(&mut adj, a, g);
                }
                Op::Sum(a) => {
                    let s = g[[0, 0]];
                    acc(&mut adj, a, Array2::from_elem(shape_of(v(a)), s));
                }
                Op::Mean(a) => {
                    let x = v(a);
                    let s = g[[0, 0]] / x.len() as f64;
                    acc(&mut adj, a, Array2::from_elem(shape_of(x), s));
                }
                Op::SumRows(a) | Op::SumCols(a) => {
                    let full = Array2::<f64>::zeros(shape_of(v(a))) + &g;
                    acc(&mut adj, a, full);
                }
                Op::LogSoftmax(a) => {
                    let mut dx = g.clone();
                    for (mut row, (grow, yrow)) in dx
                        .rows_mut()
                        .into_iter()
                        .zip(g.rows().into_iter().zip(node.value.rows()))
                    {
                        let gsum = grow.sum();
                        Zip::from(&mut row).and(&yrow).for_each(|d, &y| *d -= y.exp() * gsum);
                    }
                    acc(&mut adj, a, dx);
                }
            }
        }
        Ok(grads)
    }
}
