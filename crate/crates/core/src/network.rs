//! Trial-function families: ResNet, fully-connected net, and the two-parameter
//! linear toy, plus the boundary-enforcing ansatz wrappers.
//!
//! Parameters live in one flat vector. Every layer stores its filters one
//! after the other, and each filter is the weight row followed by the bias
//! of one output neuron, so a filter is always a contiguous index range.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::{Activation, Jet2};
use crate::rng::Stream;
use crate::tape::{JetEval, JetScope};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetworkKind {
    ResNet,
    FcNet,
    /// `NN(x) = θ₁x + θ₀` on a 1D input.
    #[serde(rename = "linear1d_toy")]
    Linear1DToy,
}

impl std::str::FromStr for NetworkKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "resnet" => Ok(NetworkKind::ResNet),
            "fcnet" => Ok(NetworkKind::FcNet),
            "linear1d_toy" | "toy" => Ok(NetworkKind::Linear1DToy),
            other => Err(Error::Config(format!("unknown network kind `{other}`"))),
        }
    }
}

/// Architecture descriptor.
///
/// `blocks` is the residual block count for ResNet; for FCNet the same value
/// gives `2·blocks` hidden layers (`2·blocks + 2` layers in total), so both
/// share the parameter count `2Nw² + (d + 2N + 2)w + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub kind: NetworkKind,
    pub d: usize,
    pub w: usize,
    #[serde(rename = "N")]
    pub blocks: usize,
    #[serde(default)]
    pub activation: Activation,
}

impl NetworkSpec {
    pub fn resnet(d: usize, w: usize, blocks: usize) -> Self {
        NetworkSpec {
            kind: NetworkKind::ResNet,
            d,
            w,
            blocks,
            activation: Activation::Swish,
        }
    }

    pub fn fcnet(d: usize, w: usize, blocks: usize) -> Self {
        NetworkSpec {
            kind: NetworkKind::FcNet,
            ..Self::resnet(d, w, blocks)
        }
    }

    pub fn linear_toy() -> Self {
        NetworkSpec {
            kind: NetworkKind::Linear1DToy,
            d: 1,
            w: 1,
            blocks: 0,
            activation: Activation::Swish,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            NetworkKind::Linear1DToy if self.d != 1 => Err(Error::Config(format!(
                "linear toy network takes a 1D input, got d = {}",
                self.d
            ))),
            NetworkKind::Linear1DToy => Ok(()),
            _ if self.d == 0 || self.w == 0 => Err(Error::Config(format!(
                "network needs d >= 1 and w >= 1 (got d = {}, w = {})",
                self.d, self.w
            ))),
            _ => Ok(()),
        }
    }

    pub fn param_count(&self) -> usize {
        param_count(self)
    }

    /// Layer shapes `(fan_in, fan_out)` in storage order.
    fn layer_shapes(&self) -> Vec<(usize, usize)> {
        match self.kind {
            NetworkKind::Linear1DToy => vec![(1, 1)],
            _ => {
                let (d, w) = (self.d, self.w);
                let mut shapes = vec![(d, w)];
                shapes.extend(std::iter::repeat_n((w, w), 2 * self.blocks));
                shapes.push((w, 1));
                shapes
            }
        }
    }
}

/// `2Nw² + (d + 2N + 2)w + 1` for ResNet and FCNet; 2 for the linear toy.
pub fn param_count(spec: &NetworkSpec) -> usize {
    match spec.kind {
        NetworkKind::Linear1DToy => 2,
        _ => {
            let (d, w, n) = (spec.d, spec.w, spec.blocks);
            2 * n * w * w + (d + 2 * n + 2) * w + 1
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Filter {
    pub layer: usize,
    pub filter: usize,
    pub range: Range<usize>,
}

/// Per-layer, per-neuron parameter groups; partitions `0..len`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilterLayout {
    filters: Vec<Filter>,
    len: usize,
}

impl FilterLayout {
    pub fn for_spec(spec: &NetworkSpec) -> Self {
        if spec.kind == NetworkKind::Linear1DToy {
            return FilterLayout {
                filters: vec![Filter {
                    layer: 0,
                    filter: 0,
                    range: 0..2,
                }],
                len: 2,
            };
        }
        let mut filters = Vec::new();
        let mut off = 0;
        for (layer, (fan_in, fan_out)) in spec.layer_shapes().into_iter().enumerate() {
            for filter in 0..fan_out {
                filters.push(Filter {
                    layer,
                    filter,
                    range: off..off + fan_in + 1,
                });
                off += fan_in + 1;
            }
        }
        FilterLayout { filters, len: off }
    }

    /// The whole vector as one group.
    pub fn single(len: usize) -> Self {
        FilterLayout {
            filters: vec![Filter {
                layer: 0,
                filter: 0,
                range: 0..len,
            }],
            len,
        }
    }

    /// One group per coordinate.
    pub fn per_coordinate(len: usize) -> Self {
        FilterLayout {
            filters: (0..len)
                .map(|i| Filter {
                    layer: 0,
                    filter: i,
                    range: i..i + 1,
                })
                .collect(),
            len,
        }
    }

    pub fn filters(&self) -> &[Filter] {
        &self.filters
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    pub values: Vec<f64>,
    pub layout: FilterLayout,
}

impl ParamVector {
    pub fn new(values: Vec<f64>, layout: FilterLayout) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(Error::Config(format!(
                "parameter vector has {} entries but the layout covers {}",
                values.len(),
                layout.len()
            )));
        }
        Ok(ParamVector { values, layout })
    }

    pub fn for_spec(spec: &NetworkSpec, values: Vec<f64>) -> Result<Self> {
        ParamVector::new(values, FilterLayout::for_spec(spec))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub(crate) fn check_len(spec: &NetworkSpec, theta: &[f64]) -> Result<()> {
    let n = param_count(spec);
    if theta.len() != n {
        return Err(Error::Config(format!(
            "parameter vector has {} entries but {:?} d={} w={} N={} needs {n}",
            theta.len(),
            spec.kind,
            spec.d,
            spec.w,
            spec.blocks
        )));
    }
    Ok(())
}

/// Raw network output `NN(x; θ)` (no boundary factor).
///
/// Input layer `L⁰ = W⁰x + b⁰` and the output layer are affine; hidden
/// layers apply the activation. The caller guarantees `θ` has
/// `param_count(spec)` entries.
pub fn forward<S: JetScope>(spec: &NetworkSpec, scope: &mut S, x: &[S::Value]) -> S::Value {
    if spec.kind == NetworkKind::Linear1DToy {
        return scope.affine(1, 0, &x[..1]);
    }
    let (d, w, act) = (spec.d, spec.w, spec.activation);
    let mut off = 0;
    let dense = |scope: &mut S, input: &[S::Value], activate: bool, off: &mut usize| {
        let n_in = input.len();
        let out: Vec<S::Value> = (0..w)
            .map(|j| {
                let base = *off + j * (n_in + 1);
                let z = scope.affine(base, base + n_in, input);
                if activate {
                    scope.activate(act, z)
                } else {
                    z
                }
            })
            .collect();
        *off += w * (n_in + 1);
        out
    };

    let mut layer = dense(scope, &x[..d], false, &mut off);
    match spec.kind {
        NetworkKind::ResNet => {
            for _ in 0..spec.blocks {
                let h = dense(scope, &layer, true, &mut off);
                let h = dense(scope, &h, true, &mut off);
                for (l, hj) in layer.iter_mut().zip(h) {
                    *l = scope.add(*l, hj);
                }
            }
        }
        NetworkKind::FcNet => {
            for _ in 0..2 * spec.blocks {
                layer = dense(scope, &layer, true, &mut off);
            }
        }
        NetworkKind::Linear1DToy => unreachable!(),
    }
    scope.affine(off, off + w, &layer)
}

/// Boundary factor multiplying the network output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ansatz {
    /// `∏ᵢ (xᵢ − 1)xᵢ` on the unit box.
    Box,
    /// `|x| − 1` on the unit ball.
    Sphere,
}

impl Ansatz {
    /// Boundary factor at `x` as a jet along coordinate `active`
    /// (`None`: value only).
    pub fn factor(self, x: &[f64], active: Option<usize>) -> Jet2 {
        match self {
            Ansatz::Box => {
                let mut rest = 1.0;
                for (j, &xj) in x.iter().enumerate() {
                    if Some(j) != active {
                        rest *= (xj - 1.0) * xj;
                    }
                }
                match active {
                    None => Jet2::constant(rest),
                    Some(i) => {
                        let xi = x[i];
                        Jet2::new(rest * (xi - 1.0) * xi, rest * (2.0 * xi - 1.0), 2.0 * rest)
                    }
                }
            }
            Ansatz::Sphere => {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                let r = r2.sqrt();
                match active {
                    None => Jet2::constant(r - 1.0),
                    Some(i) => {
                        let xi = x[i];
                        Jet2::new(r - 1.0, xi / r, (r2 - xi * xi) / (r2 * r))
                    }
                }
            }
        }
    }
}

/// `u(x; θ) = factor(x) · NN(x; θ)` with coordinate `active` carried as a jet.
pub fn trial_sweep<S: JetScope>(
    spec: &NetworkSpec,
    ansatz: Ansatz,
    scope: &mut S,
    x: &[f64],
    active: Option<usize>,
) -> S::Value {
    let inputs: Vec<S::Value> = x
        .iter()
        .enumerate()
        .map(|(j, &xj)| {
            scope.constant(if Some(j) == active {
                Jet2::variable(xj)
            } else {
                Jet2::constant(xj)
            })
        })
        .collect();
    let nn = forward(spec, scope, &inputs);
    let g = scope.constant(ansatz.factor(x, active));
    scope.mul(g, nn)
}

/// Trial function value at `x`.
pub fn ansatz_apply(spec: &NetworkSpec, ansatz: Ansatz, theta: &[f64], x: &[f64]) -> Result<f64> {
    check_len(spec, theta)?;
    check_point(spec, x)?;
    Ok(trial_sweep(spec, ansatz, &mut JetEval::new(theta), x, None).val)
}

/// Trial value, spatial gradient and Laplacian at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialEval {
    pub u: f64,
    pub grad: Vec<f64>,
    pub laplacian: f64,
}

fn check_point(spec: &NetworkSpec, x: &[f64]) -> Result<()> {
    if x.len() != spec.d {
        return Err(Error::Config(format!(
            "point has dimension {} but the network expects {}",
            x.len(),
            spec.d
        )));
    }
    Ok(())
}

/// One jet sweep per coordinate; `Δu = Σᵢ ∂ᵢ²u`.
pub fn eval_with_spatial_derivs(
    spec: &NetworkSpec,
    ansatz: Ansatz,
    theta: &[f64],
    x: &[f64],
) -> Result<SpatialEval> {
    check_len(spec, theta)?;
    check_point(spec, x)?;
    let mut scope = JetEval::new(theta);
    let mut grad = Vec::with_capacity(spec.d);
    let mut laplacian = 0.0;
    let mut u = 0.0;
    for i in 0..spec.d {
        let j = trial_sweep(spec, ansatz, &mut scope, x, Some(i));
        u = j.val;
        grad.push(j.d1);
        laplacian += j.d2;
    }
    Ok(SpatialEval { u, grad, laplacian })
}

/// Xavier-uniform weights `U(±√(6/(fan_in + fan_out)))`, zero biases.
pub fn init_xavier(spec: &NetworkSpec, seed: u64) -> Result<ParamVector> {
    spec.validate()?;
    let mut rng = Stream::new(seed);
    let layout = FilterLayout::for_spec(spec);
    let mut values = vec![0.0; layout.len()];
    if spec.kind == NetworkKind::Linear1DToy {
        let b = (6.0f64 / 2.0).sqrt();
        values[1] = rng.uniform_in(-b, b);
    } else {
        let shapes = spec.layer_shapes();
        for f in layout.filters() {
            let (fan_in, fan_out) = shapes[f.layer];
            let b = (6.0 / (fan_in + fan_out) as f64).sqrt();
            // last entry of the filter is the bias
            for v in &mut values[f.range.start..f.range.end - 1] {
                *v = rng.uniform_in(-b, b);
            }
        }
    }
    ParamVector::new(values, layout)
}

/// Layer fan-in/fan-out for each filter group, in storage order.
pub fn layer_fans(spec: &NetworkSpec) -> Vec<(usize, usize)> {
    spec.layer_shapes()
}
