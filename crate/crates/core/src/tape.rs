//! Reverse-mode differentiation over jet-valued scalars.
//!
//! Every node on the [`Tape`] holds a full [`Jet2`]; the reverse sweep keeps an
//! adjoint for each of the three jet components, so a scalar loss that mixes
//! `u`, `∂u` and `∂²u` can be differentiated exactly with respect to all
//! network parameters in one pass.
//!
//! Network code is written once against [`JetScope`] and runs either on the
//! tape (recording, for gradients) or on plain jets via [`JetEval`].

use crate::error::{Error, Result};
use crate::jet::{Activation, Jet2};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(u32);

impl Var {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Leaf,
    Add(u32, u32),
    Sub(u32, u32),
    Mul(u32, u32),
    Scale(u32, f64),
    Activate(u32, Activation),
    /// `Σₖ param[weights+k] · args[args+k] + param[bias]`
    Affine {
        weights: u32,
        bias: u32,
        args: u32,
        len: u32,
    },
}

/// Operations shared by the recording tape and plain jet evaluation.
pub trait JetScope {
    type Value: Copy;

    fn constant(&mut self, j: Jet2) -> Self::Value;
    fn add(&mut self, a: Self::Value, b: Self::Value) -> Self::Value;
    fn sub(&mut self, a: Self::Value, b: Self::Value) -> Self::Value;
    fn mul(&mut self, a: Self::Value, b: Self::Value) -> Self::Value;
    fn activate(&mut self, act: Activation, a: Self::Value) -> Self::Value;
    /// `Σₖ θ[weights + k] · inputs[k] + θ[bias]`, with θ the parameter block of
    /// this scope. Parameters are constant in space.
    fn affine(&mut self, weights: usize, bias: usize, inputs: &[Self::Value]) -> Self::Value;
}

/// Plain forward evaluation with parameters read from a slice.
#[derive(Debug, Clone, Copy)]
pub struct JetEval<'a> {
    pub theta: &'a [f64],
}

impl<'a> JetEval<'a> {
    pub fn new(theta: &'a [f64]) -> Self {
        JetEval { theta }
    }
}

impl JetScope for JetEval<'_> {
    type Value = Jet2;

    #[inline]
    fn constant(&mut self, j: Jet2) -> Jet2 {
        j
    }
    #[inline]
    fn add(&mut self, a: Jet2, b: Jet2) -> Jet2 {
        a + b
    }
    #[inline]
    fn sub(&mut self, a: Jet2, b: Jet2) -> Jet2 {
        a - b
    }
    #[inline]
    fn mul(&mut self, a: Jet2, b: Jet2) -> Jet2 {
        a * b
    }
    #[inline]
    fn activate(&mut self, act: Activation, a: Jet2) -> Jet2 {
        act.apply(a)
    }
    #[inline]
    fn affine(&mut self, weights: usize, bias: usize, inputs: &[Jet2]) -> Jet2 {
        let w = &self.theta[weights..weights + inputs.len()];
        let mut acc = Jet2::constant(self.theta[bias]);
        for (wk, x) in w.iter().zip(inputs) {
            acc.val += wk * x.val;
            acc.d1 += wk * x.d1;
            acc.d2 += wk * x.d2;
        }
        acc
    }
}

/// Append-only record of jet operations.
///
/// The first `n_params` nodes are parameter leaves (value `θₚ`, zero spatial
/// derivatives); [`JetScope::affine`] indexes into that block.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    ops: Vec<Op>,
    vals: Vec<Jet2>,
    args: Vec<u32>,
    adj: Vec<[f64; 3]>,
    n_params: usize,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Clear the tape and register `theta` as the parameter leaves.
    /// Allocations are kept for reuse.
    pub fn reset(&mut self, theta: &[f64]) {
        self.ops.clear();
        self.vals.clear();
        self.args.clear();
        self.n_params = theta.len();
        for &t in theta {
            self.ops.push(Op::Leaf);
            self.vals.push(Jet2::constant(t));
        }
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn param(&self, p: usize) -> Var {
        assert!(p < self.n_params, "parameter {p} out of range");
        Var(p as u32)
    }

    pub fn params(&self) -> Vec<Var> {
        (0..self.n_params as u32).map(Var).collect()
    }

    pub fn value(&self, v: Var) -> Jet2 {
        self.vals[v.index()]
    }

    /// Record an independent leaf that is not a parameter.
    pub fn leaf(&mut self, j: Jet2) -> Var {
        self.push(Op::Leaf, j)
    }

    #[inline]
    fn push(&mut self, op: Op, val: Jet2) -> Var {
        let id = self.ops.len();
        self.ops.push(op);
        self.vals.push(val);
        Var(id as u32)
    }

    /// Recompute every node from the recorded leaf values.
    pub fn replay(&self) -> Vec<Jet2> {
        let mut out: Vec<Jet2> = Vec::with_capacity(self.vals.len());
        for (i, op) in self.ops.iter().enumerate() {
            let v = match *op {
                Op::Leaf => self.vals[i],
                Op::Add(a, b) => out[a as usize] + out[b as usize],
                Op::Sub(a, b) => out[a as usize] - out[b as usize],
                Op::Mul(a, b) => out[a as usize] * out[b as usize],
                Op::Scale(a, c) => out[a as usize].scale(c),
                Op::Activate(a, act) => act.apply(out[a as usize]),
                Op::Affine {
                    weights,
                    bias,
                    args,
                    len,
                } => {
                    let mut acc = Jet2::constant(out[bias as usize].val);
                    for k in 0..len as usize {
                        let w = out[weights as usize + k].val;
                        let x = out[self.args[args as usize + k] as usize];
                        acc.val += w * x.val;
                        acc.d1 += w * x.d1;
                        acc.d2 += w * x.d2;
                    }
                    acc
                }
            };
            out.push(v);
        }
        out
    }

    /// Reverse sweep seeded with jet adjoints on one or more output nodes.
    ///
    /// A seed `(v, g)` means the scalar objective has partial derivatives
    /// `(g.val, g.d1, g.d2)` with respect to the three components of `v`.
    /// Returns the adjoint of every node; parameter gradients are the `val`
    /// components of the first `n_params` entries.
    pub fn backward(&mut self, seeds: &[(Var, Jet2)]) -> &[[f64; 3]] {
        let n = self.ops.len();
        self.adj.clear();
        self.adj.resize(n, [0.0; 3]);
        let mut top = 0;
        for &(v, g) in seeds {
            let a = &mut self.adj[v.index()];
            a[0] += g.val;
            a[1] += g.d1;
            a[2] += g.d2;
            top = top.max(v.index() + 1);
        }
        let adj = &mut self.adj;
        let vals = &self.vals;
        for i in (0..top).rev() {
            let g = adj[i];
            if g == [0.0; 3] {
                continue;
            }
            match self.ops[i] {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    add3(&mut adj[a as usize], g, 1.0);
                    add3(&mut adj[b as usize], g, 1.0);
                }
                Op::Sub(a, b) => {
                    add3(&mut adj[a as usize], g, 1.0);
                    add3(&mut adj[b as usize], g, -1.0);
                }
                Op::Mul(a, b) => {
                    let (x, y) = (vals[a as usize], vals[b as usize]);
                    let ga = mul_partner_adjoint(g, y);
                    let gb = mul_partner_adjoint(g, x);
                    add3(&mut adj[a as usize], ga, 1.0);
                    add3(&mut adj[b as usize], gb, 1.0);
                }
                Op::Scale(a, c) => add3(&mut adj[a as usize], g, c),
                Op::Activate(a, act) => {
                    let z = vals[a as usize];
                    let [_, f1, f2, f3] = act.derivatives(z.val);
                    let ga = [
                        g[0] * f1 + g[1] * f2 * z.d1 + g[2] * (f3 * z.d1 * z.d1 + f2 * z.d2),
                        g[1] * f1 + g[2] * 2.0 * f2 * z.d1,
                        g[2] * f1,
                    ];
                    add3(&mut adj[a as usize], ga, 1.0);
                }
                Op::Affine {
                    weights,
                    bias,
                    args,
                    len,
                } => {
                    adj[bias as usize][0] += g[0];
                    for k in 0..len as usize {
                        let wi = weights as usize + k;
                        let xi = self.args[args as usize + k] as usize;
                        let x = vals[xi];
                        adj[wi][0] += g[0] * x.val + g[1] * x.d1 + g[2] * x.d2;
                        add3(&mut adj[xi], g, vals[wi].val);
                    }
                }
            }
        }
        &self.adj
    }

    /// Accumulate `weight · ∂objective/∂θ` into `grad` for the given seeds.
    pub fn accumulate_param_gradient(&mut self, seeds: &[(Var, Jet2)], weight: f64, grad: &mut [f64]) {
        let n = self.n_params;
        assert_eq!(grad.len(), n, "gradient buffer length mismatch");
        let adj = self.backward(seeds);
        for (g, a) in grad.iter_mut().zip(&adj[..n]) {
            *g += weight * a[0];
        }
    }
}

#[inline]
fn add3(dst: &mut [f64; 3], g: [f64; 3], c: f64) {
    dst[0] += c * g[0];
    dst[1] += c * g[1];
    dst[2] += c * g[2];
}

/// Adjoint flowing into one factor of `h = x · y`, given the partner `y`.
#[inline]
fn mul_partner_adjoint(g: [f64; 3], y: Jet2) -> [f64; 3] {
    [
        g[0] * y.val + g[1] * y.d1 + g[2] * y.d2,
        g[1] * y.val + 2.0 * g[2] * y.d1,
        g[2] * y.val,
    ]
}

impl JetScope for Tape {
    type Value = Var;

    fn constant(&mut self, j: Jet2) -> Var {
        self.push(Op::Leaf, j)
    }

    fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.vals[a.index()] + self.vals[b.index()];
        self.push(Op::Add(a.0, b.0), v)
    }

    fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.vals[a.index()] - self.vals[b.index()];
        self.push(Op::Sub(a.0, b.0), v)
    }

    fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.vals[a.index()] * self.vals[b.index()];
        self.push(Op::Mul(a.0, b.0), v)
    }

    fn activate(&mut self, act: Activation, a: Var) -> Var {
        let v = act.apply(self.vals[a.index()]);
        self.push(Op::Activate(a.0, act), v)
    }

    fn affine(&mut self, weights: usize, bias: usize, inputs: &[Var]) -> Var {
        debug_assert!(weights + inputs.len() <= self.n_params && bias < self.n_params);
        let start = self.args.len() as u32;
        let mut acc = Jet2::constant(self.vals[bias].val);
        for (k, x) in inputs.iter().enumerate() {
            let w = self.vals[weights + k].val;
            let xv = self.vals[x.index()];
            acc.val += w * xv.val;
            acc.d1 += w * xv.d1;
            acc.d2 += w * xv.d2;
            self.args.push(x.0);
        }
        self.push(
            Op::Affine {
                weights: weights as u32,
                bias: bias as u32,
                args: start,
                len: inputs.len() as u32,
            },
            acc,
        )
    }
}

impl Tape {
    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.vals[a.index()].scale(c);
        self.push(Op::Scale(a.0, c), v)
    }
}

/// Loss value and its gradient with respect to every parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct GradResult {
    pub loss: f64,
    pub grad: Vec<f64>,
}

/// Differentiate a scalar objective recorded on a fresh tape.
///
/// `loss_fn` receives the tape with `theta` registered as parameter leaves
/// and returns the node holding the objective (its `val` component).
pub fn grad_wrt_params<F>(theta: &[f64], loss_fn: F) -> Result<GradResult>
where
    F: FnOnce(&mut Tape, &[Var]) -> Var,
{
    let mut tape = Tape::new();
    tape.reset(theta);
    let params = tape.params();
    let out = loss_fn(&mut tape, &params);
    if tape.is_empty() {
        return Err(Error::Usage("cannot differentiate an empty tape".into()));
    }
    if out.index() >= tape.len() {
        return Err(Error::Usage(format!(
            "output node {} was not recorded on this tape",
            out.index()
        )));
    }
    let loss = tape.value(out).val;
    let mut grad = vec![0.0; theta.len()];
    tape.accumulate_param_gradient(&[(out, Jet2::constant(1.0))], 1.0, &mut grad);
    Ok(GradResult { loss, grad })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_squared_norm_gradient_is_identity() {
        let theta = [0.5, -1.25, 3.0, 0.0];
        let r = grad_wrt_params(&theta, |t, p| {
            let mut acc = t.constant(Jet2::ZERO);
            for &v in p {
                let sq = t.mul(v, v);
                acc = t.add(acc, sq);
            }
            t.scale(acc, 0.5)
        })
        .unwrap();
        assert_eq!(r.grad, theta.to_vec());
        assert!((r.loss - 0.5 * (0.25 + 1.5625 + 9.0)).abs() < 1e-15);
    }

    #[test]
    fn empty_tape_is_a_usage_error() {
        let r = grad_wrt_params(&[], |_, _| Var(0));
        assert!(matches!(r, Err(Error::Usage(_))));
    }

    #[test]
    fn replay_is_bit_exact() {
        let mut t = Tape::new();
        t.reset(&[0.3, -0.7, 1.1]);
        let x = t.constant(Jet2::variable(0.42));
        let a = t.affine(0, 2, &[x]);
        let b = t.activate(Activation::Swish, a);
        let c = t.mul(b, x);
        let p1 = t.param(1);
        let d = t.affine(1, 0, &[c]);
        let e = t.sub(d, p1);
        let _ = t.scale(e, 2.5);
        let replayed = t.replay();
        assert_eq!(replayed, t.vals);
    }

    /// Reverse sweep through all jet components against finite differences of
    /// an objective built from `d1` and `d2` of a small spatial function.
    #[test]
    fn jet_adjoints_match_finite_differences() {
        let theta = [0.7, -0.4, 0.9, 0.3];
        let x0 = 0.35;
        // u(x) = x * swish(θ0 x + θ1) * sigmoid(θ2 x + θ3)
        let build = |t: &mut Tape| {
            let x = t.constant(Jet2::variable(x0));
            let a = t.affine(0, 1, &[x]);
            let sa = t.activate(Activation::Swish, a);
            let b = t.affine(2, 3, &[x]);
            let sb = t.activate(Activation::Sigmoid, b);
            let p = t.mul(sa, sb);
            t.mul(p, x)
        };
        // J = 0.3 u + 1.7 u' + 0.9 u''
        let seed = Jet2::new(0.3, 1.7, 0.9);
        let objective = |th: &[f64]| {
            let mut t = Tape::new();
            t.reset(th);
            let u = build(&mut t);
            let j = t.value(u);
            seed.val * j.val + seed.d1 * j.d1 + seed.d2 * j.d2
        };
        let mut t = Tape::new();
        t.reset(&theta);
        let u = build(&mut t);
        let mut g = vec![0.0; 4];
        t.accumulate_param_gradient(&[(u, seed)], 1.0, &mut g);
        for p in 0..4 {
            let h = 1e-6;
            let mut tp = theta;
            tp[p] += h;
            let mut tm = theta;
            tm[p] -= h;
            let fd = (objective(&tp) - objective(&tm)) / (2.0 * h);
            assert!((fd - g[p]).abs() < 1e-7 * (1.0 + fd.abs()), "param {p}: {fd} vs {}", g[p]);
        }
    }
}
