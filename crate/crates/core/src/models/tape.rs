//! Minimal reverse-mode differentiation over dense 2-D arrays.
//!
//! Every operation appends a node to the tape; `backward` walks the nodes in
//! reverse and accumulates gradients into those that require them.

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Reshape(Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    Sum(Var),
    Mean(Var),
    Abs(Var),
}

#[derive(Debug)]
struct Node {
    value: Array2<f64>,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients indexed by [`Var`]; `None` where no gradient flows.
#[derive(Debug)]
pub struct Gradients(Vec<Option<Array2<f64>>>);

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Array2<f64>> {
        self.0[v.0].as_ref()
    }

    pub fn take(&mut self, v: Var) -> Option<Array2<f64>> {
        self.0[v.0].take()
    }
}

fn reshaped(a: &Array2<f64>, rows: usize, cols: usize) -> Array2<f64> {
    a.as_standard_layout()
        .to_owned()
        .into_shape_with_order((rows, cols))
        .expect("element count checked by caller")
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
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

    fn push(&mut self, value: Array2<f64>, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn leaf(&mut self, value: Array2<f64>, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dim()
    }

    /// Panics on inner-dimension mismatch; layer code validates shapes first.
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (ra, ca) = self.shape(a);
        let (rb, cb) = self.shape(b);
        assert_eq!(ca, rb, "matmul {ra}x{ca} by {rb}x{cb}");
        let v = self.value(a).dot(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        self.push(v, Op::MatMul(a, b), rg)
    }

    /// Row-major reshape.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let (r, c) = self.shape(a);
        assert_eq!(r * c, rows * cols, "reshape {r}x{c} to {rows}x{cols}");
        let v = reshaped(self.value(a), rows, cols);
        let rg = self.rg(a);
        self.push(v, Op::Reshape(a), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "add shape mismatch");
        let v = self.value(a) + self.value(b);
        let rg = self.rg(a) || self.rg(b);
        self.push(v, Op::Add(a, b), rg)
    }

    /// Adds a 1 x c row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (_, c) = self.shape(a);
        assert_eq!(self.shape(row), (1, c), "bias shape mismatch");
        let v = self.value(a) + self.value(row);
        let rg = self.rg(a) || self.rg(row);
        self.push(v, Op::AddRow(a, row), rg)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "sub shape mismatch");
        let v = self.value(a) - self.value(b);
        let rg = self.rg(a) || self.rg(b);
        self.push(v, Op::Sub(a, b), rg)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "mul shape mismatch");
        let v = self.value(a) * self.value(b);
        let rg = self.rg(a) || self.rg(b);
        self.push(v, Op::Mul(a, b), rg)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a) * k;
        let rg = self.rg(a);
        self.push(v, Op::Scale(a, k), rg)
    }

    pub fn add_scalar(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a) + k;
        let rg = self.rg(a);
        self.push(v, Op::AddScalar(a), rg)
    }

    /// `1 - a`
    pub fn one_minus(&mut self, a: Var) -> Var {
        let neg = self.scale(a, -1.0);
        self.add_scalar(neg, 1.0)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(sigmoid);
        let rg = self.rg(a);
        self.push(v, Op::Sigmoid(a), rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::tanh);
        let rg = self.rg(a);
        self.push(v, Op::Tanh(a), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x.max(0.0));
        let rg = self.rg(a);
        self.push(v, Op::Relu(a), rg)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat of nothing");
        let views: Vec<ArrayView2<f64>> = parts.iter().map(|p| self.value(*p).view()).collect();
        let v = concatenate(Axis(1), &views).expect("concat rows must agree");
        let rg = parts.iter().any(|p| self.rg(*p));
        self.push(v, Op::ConcatCols(parts.to_vec()), rg)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, width: usize) -> Var {
        let v = self.value(a).slice(s![.., start..start + width]).to_owned();
        let rg = self.rg(a);
        self.push(v, Op::SliceCols(a, start), rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Array2::from_elem((1, 1), self.value(a).sum());
        let rg = self.rg(a);
        self.push(v, Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let v = Array2::from_elem((1, 1), x.sum() / x.len() as f64);
        let rg = self.rg(a);
        self.push(v, Op::Mean(a), rg)
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::abs);
        let rg = self.rg(a);
        self.push(v, Op::Abs(a), rg)
    }

    /// Gradients of the 1 x 1 node `loss` with respect to every node that
    /// requires one.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.shape(loss), (1, 1), "backward from a non-scalar");
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Array2::ones((1, 1)));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                grads[i] = None;
                continue;
            }
            let g = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            let acc = |v: Var, delta: Array2<f64>, grads: &mut Vec<Option<Array2<f64>>>| {
                if !self.rg(v) {
                    return;
                }
                match &mut grads[v.0] {
                    Some(existing) => *existing += &delta,
                    slot @ None => *slot = Some(delta),
                }
            };
            match &node.op {
                Op::Leaf => {
                    grads[i] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    if self.rg(*a) {
                        acc(*a, g.dot(&self.value(*b).t()), &mut grads);
                    }
                    if self.rg(*b) {
                        acc(*b, self.value(*a).t().dot(&g), &mut grads);
                    }
                }
                Op::Reshape(a) => {
                    let (r, c) = self.shape(*a);
                    acc(*a, reshaped(&g, r, c), &mut grads);
                }
                Op::Add(a, b) => {
                    acc(*a, g.clone(), &mut grads);
                    acc(*b, g, &mut grads);
                }
                Op::AddRow(a, row) => {
                    acc(*row, g.sum_axis(Axis(0)).insert_axis(Axis(0)), &mut grads);
                    acc(*a, g, &mut grads);
                }
                Op::Sub(a, b) => {
                    acc(*b, -&g, &mut grads);
                    acc(*a, g, &mut grads);
                }
                Op::Mul(a, b) => {
                    if self.rg(*a) {
                        acc(*a, &g * self.value(*b), &mut grads);
                    }
                    if self.rg(*b) {
                        acc(*b, &g * self.value(*a), &mut grads);
                    }
                }
                Op::Scale(a, k) => acc(*a, g * *k, &mut grads),
                Op::AddScalar(a) => acc(*a, g, &mut grads),
                Op::Sigmoid(a) => {
                    let y = &node.value;
                    acc(*a, &g * &y.mapv(|s| s * (1.0 - s)), &mut grads);
                }
                Op::Tanh(a) => {
                    let y = &node.value;
                    acc(*a, &g * &y.mapv(|t| 1.0 - t * t), &mut grads);
                }
                Op::Relu(a) => {
                    let x = self.value(*a);
                    acc(*a, &g * &x.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 }), &mut grads);
                }
                Op::ConcatCols(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let w = self.shape(*p).1;
                        if self.rg(*p) {
                            acc(*p, g.slice(s![.., start..start + w]).to_owned(), &mut grads);
                        }
                        start += w;
                    }
                }
                Op::SliceCols(a, start) => {
                    let (r, c) = self.shape(*a);
                    let w = node.value.ncols();
                    let mut full = Array2::zeros((r, c));
                    full.slice_mut(s![.., *start..*start + w]).assign(&g);
                    acc(*a, full, &mut grads);
                }
                Op::Sum(a) => {
                    let shape = self.shape(*a);
                    acc(*a, Array2::from_elem(shape, g[[0, 0]]), &mut grads);
                }
                Op::Mean(a) => {
                    let shape = self.shape(*a);
                    let n = (shape.0 * shape.1) as f64;
                    acc(*a, Array2::from_elem(shape, g[[0, 0]] / n), &mut grads);
                }
                Op::Abs(a) => {
                    let x = self.value(*a);
                    acc(*a, &g * &x.mapv(|v| if v > 0.0 { 1.0 } else if v < 0.0 { -1.0 } else { 0.0 }), &mut grads);
                }
            }
        }
        Gradients(grads)
    }
}

/// Central-difference gradient check used by the layer tests: perturbs each
/// entry of each input, evaluates the scalar `f`, and returns the worst
/// relative error against the supplied analytic gradients.
#[cfg(test)]
pub(crate) fn max_relative_error(
    inputs: &[Array2<f64>],
    analytic: &[Array2<f64>],
    f: impl Fn(&[Array2<f64>]) -> f64,
) -> f64 {
    let eps = 1e-5;
    let mut worst: f64 = 0.0;
    let mut work: Vec<Array2<f64>> = inputs.to_vec();
    for (k, a) in analytic.iter().enumerate() {
        for idx in 0..a.len() {
            let (r, c) = (idx / a.ncols(), idx % a.ncols());
            let orig = work[k][[r, c]];
            work[k][[r, c]] = orig + eps;
            let up = f(&work);
            work[k][[r, c]] = orig - eps;
            let down = f(&work);
            work[k][[r, c]] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let analytic = a[[r, c]];
            let err = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-3);
            worst = worst.max(err);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Array2<f64> {
        Array2::from_shape_fn((r, c), |_| rng.random_range(-1.0..1.0))
    }

    // Builds a scalar from every op so one check covers the whole tape.
    fn composite(tape: &mut Tape, x: Var, w: Var, b: Var) -> Var {
        let h = tape.matmul(x, w);
        let h = tape.add_row(h, b);
        let s = tape.sigmoid(h);
        let t = tape.tanh(h);
        let r = tape.relu(h);
        let m = tape.mul(s, t);
        let d = tape.sub(m, r);
        let d = tape.scale(d, 1.7);
        let d = tape.add_scalar(d, 0.3);
        let c = tape.concat_cols(&[d, s]);
        let sl = tape.slice_cols(c, 1, 3);
        let re = tape.reshape(sl, 3, 4);
        let a = tape.abs(re);
        let a2 = tape.add(a, re);
        let om = tape.one_minus(a2);
        let sum = tape.sum(om);
        let mean = tape.mean(re);
        tape.add(sum, mean)
    }

    #[test]
    fn every_op_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let inputs = vec![random(&mut rng, 4, 3), random(&mut rng, 3, 3), random(&mut rng, 1, 3)];
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|a| tape.leaf(a.clone(), true)).collect();
        let loss = composite(&mut tape, vars[0], vars[1], vars[2]);
        let grads = tape.backward(loss);
        let analytic: Vec<Array2<f64>> = vars.iter().map(|v| grads.get(*v).unwrap().clone()).collect();
        let err = max_relative_error(&inputs, &analytic, |xs| {
            let mut t = Tape::new();
            let v: Vec<Var> = xs.iter().map(|a| t.leaf(a.clone(), true)).collect();
            let l = composite(&mut t, v[0], v[1], v[2]);
            t.value(l)[[0, 0]]
        });
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut tape = Tape::new();
        let a = tape.constant(array![[1.0, 2.0]]);
        let b = tape.leaf(array![[3.0], [4.0]], true);
        let y = tape.matmul(a, b);
        let g = tape.backward(y);
        assert!(g.get(a).is_none());
        assert_eq!(g.get(b).unwrap(), &array![[1.0], [2.0]]);
    }

    #[test]
    fn reused_node_accumulates() {
        let mut tape = Tape::new();
        let x = tape.leaf(array![[3.0]], true);
        let y = tape.mul(x, x);
        let z = tape.add(y, x);
        let g = tape.backward(z);
        assert_eq!(g.get(x).unwrap()[[0, 0]], 7.0);
    }

    #[test]
    fn reshape_is_row_major() {
        let mut tape = Tape::new();
        let x = tape.leaf(array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]], false);
        let y = tape.reshape(x, 2, 3);
        assert_eq!(tape.value(y), &array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]);
    }
}
