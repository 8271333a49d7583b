//! Poisson problems `−Δu = f` with homogeneous Dirichlet data, quadrature
//! sets, the least-squares residual (DGM) and variational (DRM) losses, and
//! the relative L² error.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::Jet2;
use crate::network::{check_len, trial_sweep, Ansatz, NetworkSpec, SpatialEval};
use crate::rng::Stream;
use crate::tape::{GradResult, JetEval, Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProblemKind {
    /// `u = x(x−1)(2x+1)`, `f = −12x + 2` on (0, 1).
    Box1DCubic,
    /// `u = sin(πx)` on (0, 1).
    Box1DSine,
    /// `u = ∏ sin(πxᵢ)` on (0, 1)^d.
    BoxNDProductSine(usize),
    /// `u = sin(π/2 (1 − |x|))` on the unit ball in ℝ³; not differentiable at 0.
    Sphere3DLowReg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    UnitBox(usize),
    UnitBall(usize),
}

impl Domain {
    pub fn dim(&self) -> usize {
        match *self {
            Domain::UnitBox(d) | Domain::UnitBall(d) => d,
        }
    }

    pub fn volume(&self) -> f64 {
        match *self {
            Domain::UnitBox(_) => 1.0,
            Domain::UnitBall(d) => ball_volume(d),
        }
    }
}

fn ball_volume(d: usize) -> f64 {
    match d {
        0 => 1.0,
        1 => 2.0,
        _ => 2.0 * PI / d as f64 * ball_volume(d - 2),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Problem {
    pub kind: ProblemKind,
}

impl Problem {
    pub fn new(kind: ProblemKind) -> Result<Self> {
        if let ProblemKind::BoxNDProductSine(0) = kind {
            return Err(Error::Config("product-sine problem needs d >= 1".into()));
        }
        Ok(Problem { kind })
    }

    /// Parse `box1d_cubic | box1d_sine | boxnd_sine[:d] | sphere3d`.
    /// `dim` supplies `d` for `boxnd_sine` when it is not given inline.
    pub fn parse(s: &str, dim: usize) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let kind = match name {
            "box1d_cubic" => ProblemKind::Box1DCubic,
            "box1d_sine" => ProblemKind::Box1DSine,
            "boxnd_sine" => {
                let d = match arg {
                    Some(a) => a
                        .parse()
                        .map_err(|_| Error::Config(format!("bad dimension in problem `{s}`")))?,
                    None => dim,
                };
                ProblemKind::BoxNDProductSine(d)
            }
            "sphere3d" => ProblemKind::Sphere3DLowReg,
            _ => {
                return Err(Error::Config(format!(
                    "unknown problem `{s}` (expected box1d_cubic, box1d_sine, boxnd_sine, sphere3d)"
                )))
            }
        };
        Problem::new(kind)
    }

    pub fn name(&self) -> String {
        match self.kind {
            ProblemKind::Box1DCubic => "box1d_cubic".into(),
            ProblemKind::Box1DSine => "box1d_sine".into(),
            ProblemKind::BoxNDProductSine(d) => format!("boxnd_sine:{d}"),
            ProblemKind::Sphere3DLowReg => "sphere3d".into(),
        }
    }

    pub fn dim(&self) -> usize {
        self.domain().dim()
    }

    pub fn domain(&self) -> Domain {
        match self.kind {
            ProblemKind::Box1DCubic | ProblemKind::Box1DSine => Domain::UnitBox(1),
            ProblemKind::BoxNDProductSine(d) => Domain::UnitBox(d),
            ProblemKind::Sphere3DLowReg => Domain::UnitBall(3),
        }
    }

    pub fn ansatz(&self) -> Ansatz {
        match self.domain() {
            Domain::UnitBox(_) => Ansatz::Box,
            Domain::UnitBall(_) => Ansatz::Sphere,
        }
    }

    pub fn exact_u(&self, x: &[f64]) -> f64 {
        match self.kind {
            ProblemKind::Box1DCubic => {
                let t = x[0];
                t * (t - 1.0) * (2.0 * t + 1.0)
            }
            ProblemKind::Box1DSine => (PI * x[0]).sin(),
            ProblemKind::BoxNDProductSine(_) => x.iter().map(|t| (PI * t).sin()).product(),
            ProblemKind::Sphere3DLowReg => (0.5 * PI * (1.0 - norm(x))).sin(),
        }
    }

    pub fn forcing(&self, x: &[f64]) -> f64 {
        match self.kind {
            ProblemKind::Box1DCubic => -12.0 * x[0] + 2.0,
            ProblemKind::Box1DSine => PI * PI * (PI * x[0]).sin(),
            ProblemKind::BoxNDProductSine(d) => d as f64 * PI * PI * self.exact_u(x),
            ProblemKind::Sphere3DLowReg => {
                let r = norm(x);
                let a = 0.5 * PI * (1.0 - r);
                0.25 * PI * PI * a.sin() + PI / r * a.cos()
            }
        }
    }

    /// Exact solution with analytic gradient and Laplacian.
    pub fn exact_eval(&self, x: &[f64]) -> SpatialEval {
        match self.kind {
            ProblemKind::Box1DCubic => {
                let t = x[0];
                SpatialEval {
                    u: 2.0 * t * t * t - t * t - t,
                    grad: vec![6.0 * t * t - 2.0 * t - 1.0],
                    laplacian: 12.0 * t - 2.0,
                }
            }
            ProblemKind::Box1DSine => {
                let (s, c) = (PI * x[0]).sin_cos();
                SpatialEval {
                    u: s,
                    grad: vec![PI * c],
                    laplacian: -PI * PI * s,
                }
            }
            ProblemKind::BoxNDProductSine(d) => {
                let sc: Vec<(f64, f64)> = x.iter().map(|t| (PI * t).sin_cos()).collect();
                let u: f64 = sc.iter().map(|p| p.0).product();
                let grad = (0..d)
                    .map(|i| {
                        PI * sc[i].1
                            * sc.iter()
                                .enumerate()
                                .filter(|&(j, _)| j != i)
                                .map(|(_, p)| p.0)
                                .product::<f64>()
                    })
                    .collect();
                SpatialEval {
                    u,
                    grad,
                    laplacian: -(d as f64) * PI * PI * u,
                }
            }
            ProblemKind::Sphere3DLowReg => {
                let r = norm(x);
                let a = 0.5 * PI * (1.0 - r);
                let (s, c) = a.sin_cos();
                let du_dr = -0.5 * PI * c;
                SpatialEval {
                    u: s,
                    grad: x.iter().map(|t| du_dr * t / r).collect(),
                    laplacian: -0.25 * PI * PI * s - PI / r * c,
                }
            }
        }
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|t| t * t).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    SimpsonComposite(usize),
    MonteCarlo { n: usize, seed: u64 },
}

/// Quadrature specification as written in configs: `simpson:N` or `mc:N:seed`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadSpec {
    Simpson(usize),
    MonteCarlo { n: usize, seed: u64 },
}

impl std::str::FromStr for QuadSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::Config(format!("bad quadrature `{s}` (expected simpson:N or mc:N:seed)"));
        match parts.as_slice() {
            ["simpson", n] => Ok(QuadSpec::Simpson(n.parse().map_err(|_| bad())?)),
            ["mc", n, seed] => Ok(QuadSpec::MonteCarlo {
                n: n.parse().map_err(|_| bad())?,
                seed: seed.parse().map_err(|_| bad())?,
            }),
            _ => Err(bad()),
        }
    }
}

impl std::fmt::Display for QuadSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            QuadSpec::Simpson(n) => write!(f, "simpson:{n}"),
            QuadSpec::MonteCarlo { n, seed } => write!(f, "mc:{n}:{seed}"),
        }
    }
}

impl QuadSpec {
    pub fn build(&self, domain: Domain) -> Result<QuadratureSet> {
        match *self {
            QuadSpec::Simpson(n) => {
                if domain != Domain::UnitBox(1) {
                    return Err(Error::Config(
                        "Simpson quadrature is only available on the unit interval".into(),
                    ));
                }
                simpson_1d(n)
            }
            QuadSpec::MonteCarlo { n, seed } => monte_carlo(domain, n, seed),
        }
    }
}

/// Frozen evaluation points and weights.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureSet {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
    scheme: Scheme,
}

impl QuadratureSet {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.points[k * self.dim..(k + 1) * self.dim]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.points.chunks_exact(self.dim).zip(self.weights.iter().copied())
    }

    /// `Σₖ wₖ g(xₖ)`
    pub fn integrate(&self, mut g: impl FnMut(&[f64]) -> f64) -> f64 {
        self.iter().map(|(x, w)| w * g(x)).sum()
    }
}

/// Composite Simpson rule on [0, 1]. An even `n` is bumped to `n + 1` nodes.
pub fn simpson_1d(n: usize) -> Result<QuadratureSet> {
    if n < 3 {
        return Err(Error::Config(format!("Simpson rule needs at least 3 nodes, got {n}")));
    }
    let nodes = if n % 2 == 0 { n + 1 } else { n };
    let intervals = nodes - 1;
    let h = 1.0 / intervals as f64;
    let points = (0..nodes).map(|k| k as f64 * h).collect();
    let weights = (0..nodes)
        .map(|k| {
            let c = if k == 0 || k == intervals {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            c * h / 3.0
        })
        .collect();
    Ok(QuadratureSet {
        dim: 1,
        points,
        weights,
        scheme: Scheme::SimpsonComposite(nodes),
    })
}

/// Points closer than this to the origin are redrawn on the ball, where the
/// low-regularity forcing is singular.
const ORIGIN_EXCLUSION: f64 = 1e-12;

/// `n` iid uniform points with equal weights `volume / n`.
pub fn monte_carlo(domain: Domain, n: usize, seed: u64) -> Result<QuadratureSet> {
    if n == 0 {
        return Err(Error::Config("Monte Carlo quadrature needs at least one point".into()));
    }
    let d = domain.dim();
    let mut rng = Stream::new(seed);
    let mut points = Vec::with_capacity(n * d);
    let mut p = vec![0.0; d];
    for _ in 0..n {
        match domain {
            Domain::UnitBox(_) => {
                for v in &mut p {
                    *v = rng.uniform();
                }
            }
            Domain::UnitBall(_) => loop {
                for v in &mut p {
                    *v = rng.uniform_in(-1.0, 1.0);
                }
                let r = norm(&p);
                if r < 1.0 && r >= ORIGIN_EXCLUSION {
                    break;
                }
            },
        }
        points.extend_from_slice(&p);
    }
    Ok(QuadratureSet {
        dim: d,
        points,
        weights: vec![domain.volume() / n as f64; n],
        scheme: Scheme::MonteCarlo { n, seed },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    /// `∫ (−Δu − f)²`
    Dgm,
    /// `∫ ½|∇u|² − f u`
    Drm,
}

impl std::str::FromStr for LossKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dgm" => Ok(LossKind::Dgm),
            "drm" => Ok(LossKind::Drm),
            other => Err(Error::Config(format!("unknown loss `{other}` (expected dgm or drm)"))),
        }
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LossKind::Dgm => "dgm",
            LossKind::Drm => "drm",
        })
    }
}

impl LossKind {
    fn integrand(self, e: &SpatialEval, f: f64) -> f64 {
        match self {
            LossKind::Dgm => {
                let r = -e.laplacian - f;
                r * r
            }
            LossKind::Drm => 0.5 * e.grad.iter().map(|g| g * g).sum::<f64>() - f * e.u,
        }
    }
}

fn finite(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numerical(format!("{what} is not finite ({v})")))
    }
}

/// Loss functional of an arbitrary trial function given pointwise
/// `(u, ∇u, Δu)`.
pub fn loss_of_trial(
    kind: LossKind,
    problem: &Problem,
    quad: &QuadratureSet,
    mut trial: impl FnMut(&[f64]) -> SpatialEval,
) -> Result<f64> {
    let v = quad.integrate(|x| kind.integrand(&trial(x), problem.forcing(x)));
    finite(v, &format!("{kind} loss"))
}

/// Relative L² error of a trial function against the exact solution.
pub fn relative_l2_of_trial(
    problem: &Problem,
    quad: &QuadratureSet,
    mut trial: impl FnMut(&[f64]) -> f64,
) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, w) in quad.iter() {
        let ue = problem.exact_u(x);
        let d = trial(x) - ue;
        num += w * d * d;
        den += w * ue * ue;
    }
    if den == 0.0 {
        return Err(Error::Usage("exact solution has zero norm on this quadrature".into()));
    }
    finite((num / den).sqrt(), "relative L2 error")
}

/// Points per work unit; fixed so that reductions do not depend on the
/// thread count.
const CHUNK: usize = 32;

/// A PDE loss bound to a problem, architecture and frozen quadrature.
#[derive(Debug, Clone, Copy)]
pub struct PdeLoss<'a> {
    pub problem: &'a Problem,
    pub spec: &'a NetworkSpec,
    pub kind: LossKind,
    pub quad: &'a QuadratureSet,
}

impl<'a> PdeLoss<'a> {
    pub fn new(
        problem: &'a Problem,
        spec: &'a NetworkSpec,
        kind: LossKind,
        quad: &'a QuadratureSet,
    ) -> Result<Self> {
        spec.validate()?;
        if spec.d != problem.dim() || quad.dim() != problem.dim() {
            return Err(Error::Config(format!(
                "dimension mismatch: problem {} has d = {}, network d = {}, quadrature d = {}",
                problem.name(),
                problem.dim(),
                spec.d,
                quad.dim()
            )));
        }
        Ok(PdeLoss {
            problem,
            spec,
            kind,
            quad,
        })
    }

    fn point_loss(&self, scope: &mut JetEval<'_>, x: &[f64]) -> f64 {
        let ansatz = self.problem.ansatz();
        let f = self.problem.forcing(x);
        match self.kind {
            LossKind::Dgm => {
                let lap: f64 = (0..self.spec.d)
                    .map(|i| trial_sweep(self.spec, ansatz, scope, x, Some(i)).d2)
                    .sum();
                let r = -lap - f;
                r * r
            }
            LossKind::Drm => {
                let mut u = 0.0;
                let mut g2 = 0.0;
                for i in 0..self.spec.d {
                    let j = trial_sweep(self.spec, ansatz, scope, x, Some(i));
                    u = j.val;
                    g2 += j.d1 * j.d1;
                }
                0.5 * g2 - f * u
            }
        }
    }

    /// Loss value at `theta`.
    pub fn value(&self, theta: &[f64]) -> Result<f64> {
        check_len(self.spec, theta)?;
        let n = self.quad.len();
        let partial: Vec<f64> = (0..n.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| {
                let mut scope = JetEval::new(theta);
                let mut s = 0.0;
                for k in c * CHUNK..((c + 1) * CHUNK).min(n) {
                    s += self.quad.weights[k] * self.point_loss(&mut scope, self.quad.point(k));
                }
                s
            })
            .collect();
        finite(partial.iter().sum(), &format!("{} loss", self.kind))
    }

    /// Record one point on `tape` and return the per-point loss with the
    /// seeds of its reverse sweep.
    fn record_point(&self, tape: &mut Tape, x: &[f64], seeds: &mut Vec<(Var, Jet2)>) -> f64 {
        let ansatz = self.problem.ansatz();
        let f = self.problem.forcing(x);
        seeds.clear();
        let outs: Vec<Var> = (0..self.spec.d)
            .map(|i| trial_sweep(self.spec, ansatz, tape, x, Some(i)))
            .collect();
        match self.kind {
            LossKind::Dgm => {
                let lap: f64 = outs.iter().map(|&v| tape.value(v).d2).sum();
                let r = -lap - f;
                // ℓ = r², ∂ℓ/∂(∂ᵢ²u) = −2r
                seeds.extend(outs.iter().map(|&v| (v, Jet2::new(0.0, 0.0, -2.0 * r))));
                r * r
            }
            LossKind::Drm => {
                let u = tape.value(outs[0]).val;
                let mut g2 = 0.0;
                for (i, &v) in outs.iter().enumerate() {
                    let d1 = tape.value(v).d1;
                    g2 += d1 * d1;
                    // the value is shared by all sweeps; seed it once
                    let dval = if i == 0 { -f } else { 0.0 };
                    seeds.push((v, Jet2::new(dval, d1, 0.0)));
                }
                0.5 * g2 - f * u
            }
        }
    }

    /// Loss value and exact parameter gradient by reverse sweeps, one tape per
    /// quadrature point.
    pub fn value_and_grad(&self, theta: &[f64]) -> Result<GradResult> {
        check_len(self.spec, theta)?;
        let n = self.quad.len();
        let p = theta.len();
        let partial: Vec<(f64, Vec<f64>)> = (0..n.div_ceil(CHUNK))
            .into_par_iter()
            .map_init(
                || (Tape::new(), Vec::new()),
                |(tape, seeds), c| {
                    let mut loss = 0.0;
                    let mut grad = vec![0.0; p];
                    for k in c * CHUNK..((c + 1) * CHUNK).min(n) {
                        let w = self.quad.weights[k];
                        tape.reset(theta);
                        loss += w * self.record_point(tape, self.quad.point(k), seeds);
                        tape.accumulate_param_gradient(seeds, w, &mut grad);
                    }
                    (loss, grad)
                },
            )
            .collect();
        let mut loss = 0.0;
        let mut grad = vec![0.0; p];
        for (l, g) in &partial {
            loss += l;
            for (a, b) in grad.iter_mut().zip(g) {
                *a += b;
            }
        }
        finite(loss, &format!("{} loss", self.kind))?;
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::Numerical(format!("gradient component {i} is not finite")));
        }
        Ok(GradResult { loss, grad })
    }

    pub fn grad(&self, theta: &[f64]) -> Result<Vec<f64>> {
        Ok(self.value_and_grad(theta)?.grad)
    }
}

pub fn dgm_loss(problem: &Problem, spec: &NetworkSpec, theta: &[f64], quad: &QuadratureSet) -> Result<f64> {
    PdeLoss::new(problem, spec, LossKind::Dgm, quad)?.value(theta)
}

pub fn drm_loss(problem: &Problem, spec: &NetworkSpec, theta: &[f64], quad: &QuadratureSet) -> Result<f64> {
    PdeLoss::new(problem, spec, LossKind::Drm, quad)?.value(theta)
}

/// `‖u(·;θ) − u‖ / ‖u‖` on `eval_quad`.
pub fn relative_l2_error(
    problem: &Problem,
    spec: &NetworkSpec,
    theta: &[f64],
    eval_quad: &QuadratureSet,
) -> Result<f64> {
    check_len(spec, theta)?;
    let ansatz = problem.ansatz();
    let mut scope = JetEval::new(theta);
    relative_l2_of_trial(problem, eval_quad, |x| {
        trial_sweep(spec, ansatz, &mut scope, x, None).val
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::eval_with_spatial_derivs;

    #[test]
    fn simpson_exactness() {
        let q = simpson_1d(11).unwrap();
        assert!((q.integrate(|x| x[0] * x[0]) - 1.0 / 3.0).abs() < 1e-15);
        assert!((q.integrate(|x| -12.0 * x[0] + 2.0) + 4.0).abs() < 1e-14);
        assert!((q.integrate(|x| x[0].powi(3)) - 0.25).abs() < 1e-15);
        let q = simpson_1d(201).unwrap();
        assert!((q.integrate(|x| (PI * x[0]).sin()) - 2.0 / PI).abs() < 1e-8);
        assert!((q.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn simpson_node_count() {
        assert_eq!(simpson_1d(200).unwrap().len(), 201);
        assert_eq!(simpson_1d(201).unwrap().len(), 201);
        assert!(matches!(simpson_1d(2), Err(Error::Config(_))));
    }

    #[test]
    fn monte_carlo_weights_and_determinism() {
        let d = Domain::UnitBall(3);
        let a = monte_carlo(d, 500, 9).unwrap();
        let b = monte_carlo(d, 500, 9).unwrap();
        assert_eq!(a, b);
        let vol: f64 = a.weights().iter().sum();
        assert!((vol - 4.0 * PI / 3.0).abs() < 1e-12);
        assert!(a.iter().all(|(x, _)| {
            let r = norm(x);
            r < 1.0 && r >= ORIGIN_EXCLUSION
        }));
        let c = monte_carlo(Domain::UnitBox(2), 100, 1).unwrap();
        assert!((c.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn monte_carlo_second_moment_of_ball() {
        // ∫_{|x|<1} |x|² dx = 4π/5
        let n = 20_000;
        let q = monte_carlo(Domain::UnitBall(3), n, 2024).unwrap();
        let vol = 4.0 * PI / 3.0;
        let vals: Vec<f64> = q.iter().map(|(x, _)| x.iter().map(|t| t * t).sum()).collect();
        let mean = vals.iter().sum::<f64>() / n as f64;
        let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        let est = q.integrate(|x| x.iter().map(|t| t * t).sum());
        assert!((est - 4.0 * PI / 5.0).abs() < 3.0 * vol * sd / (n as f64).sqrt());
    }

    #[test]
    fn quad_spec_parsing() {
        assert_eq!("simpson:200".parse::<QuadSpec>().unwrap(), QuadSpec::Simpson(200));
        assert_eq!(
            "mc:1000:7".parse::<QuadSpec>().unwrap(),
            QuadSpec::MonteCarlo { n: 1000, seed: 7 }
        );
        assert!("mc:10".parse::<QuadSpec>().is_err());
        assert!(QuadSpec::Simpson(10).build(Domain::UnitBall(3)).is_err());
    }

    #[test]
    fn exact_solutions_satisfy_the_pde() {
        let mut rng = Stream::new(5);
        for kind in [
            ProblemKind::Box1DCubic,
            ProblemKind::Box1DSine,
            ProblemKind::BoxNDProductSine(4),
            ProblemKind::Sphere3DLowReg,
        ] {
            let p = Problem::new(kind).unwrap();
            let q = monte_carlo(p.domain(), 1000, rng.next_u64()).unwrap();
            for (x, _) in q.iter() {
                let e = p.exact_eval(x);
                assert!((-e.laplacian - p.forcing(x)).abs() < 1e-10 * (1.0 + p.forcing(x).abs()));
                assert!((e.u - p.exact_u(x)).abs() < 1e-15);
            }
            // analytic Laplacian against second differences of exact_u
            let (x, _) = q.iter().nth(3).unwrap();
            let h = 1e-4;
            let mut fd = 0.0;
            for i in 0..x.len() {
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                xp[i] += h;
                xm[i] -= h;
                fd += (p.exact_u(&xp) - 2.0 * p.exact_u(x) + p.exact_u(&xm)) / (h * h);
            }
            assert!((fd - p.exact_eval(x).laplacian).abs() < 1e-5 * (1.0 + fd.abs()), "{kind:?}");
        }
    }

    fn toy_dgm_closed_form(t0: f64, t1: f64) -> f64 {
        4.0 * ((t1 - 2.0).powi(2) + (t1 - 2.0) * (t0 - 1.0) + (t0 - 1.0).powi(2))
    }

    #[test]
    fn toy_losses_at_known_points() {
        let p = Problem::new(ProblemKind::Box1DCubic).unwrap();
        let spec = NetworkSpec::linear_toy();
        let q = simpson_1d(201).unwrap();
        assert!(dgm_loss(&p, &spec, &[1.0, 2.0], &q).unwrap().abs() < 1e-12);
        assert!((dgm_loss(&p, &spec, &[1.0, 3.0], &q).unwrap() - 4.0).abs() < 1e-12);
        let r = drm_loss(&p, &spec, &[1.0, 2.0], &q).unwrap();
        // Simpson is exact only to cubics; the quartic error is O(h⁴).
        assert!((r + 23.0 / 30.0).abs() < 1e-8, "{r}");
        let fine = drm_loss(&p, &spec, &[1.0, 2.0], &simpson_1d(2001).unwrap()).unwrap();
        assert!((fine + 23.0 / 30.0).abs() < 1e-12, "{fine}");
        assert_eq!(drm_loss(&p, &spec, &[0.0, 0.0], &q).unwrap(), 0.0);
        assert_eq!(toy_dgm_closed_form(1.0, 3.0), 4.0);
    }

    #[test]
    fn drm_exact_solution_is_minimal_on_grid() {
        let p = Problem::new(ProblemKind::Box1DCubic).unwrap();
        let spec = NetworkSpec::linear_toy();
        let q = simpson_1d(51).unwrap();
        let at_min = drm_loss(&p, &spec, &[1.0, 2.0], &q).unwrap();
        for i in 0..=40 {
            for j in 0..=40 {
                let t0 = -1.0 + 4.0 * i as f64 / 40.0;
                let t1 = 4.0 * j as f64 / 40.0;
                let v = drm_loss(&p, &spec, &[t0, t1], &q).unwrap();
                assert!(v >= at_min - 1e-12);
                assert!(dgm_loss(&p, &spec, &[t0, t1], &q).unwrap() >= 0.0);
            }
        }
    }

    #[test]
    fn exact_trial_losses() {
        let p = Problem::new(ProblemKind::Box1DSine).unwrap();
        let q = simpson_1d(201).unwrap();
        let g = loss_of_trial(LossKind::Dgm, &p, &q, |x| p.exact_eval(x)).unwrap();
        let r = loss_of_trial(LossKind::Drm, &p, &q, |x| p.exact_eval(x)).unwrap();
        assert!(g.abs() < 1e-10);
        assert!((r + PI * PI / 4.0).abs() < 1e-6);
    }

    #[test]
    fn relative_error_of_scaled_exact() {
        let p = Problem::new(ProblemKind::Box1DSine).unwrap();
        let q = simpson_1d(101).unwrap();
        assert_eq!(relative_l2_of_trial(&p, &q, |x| p.exact_u(x)).unwrap(), 0.0);
        let e = relative_l2_of_trial(&p, &q, |x| 2.0 * p.exact_u(x)).unwrap();
        assert!((e - 1.0).abs() < 1e-14);
        let toy = Problem::new(ProblemKind::Box1DCubic).unwrap();
        let spec = NetworkSpec::linear_toy();
        assert!(relative_l2_error(&toy, &spec, &[1.0, 2.0], &q).unwrap() < 1e-15);
        // zero-norm reference: a single node at the boundary
        let zero = QuadratureSet {
            dim: 1,
            points: vec![0.0],
            weights: vec![1.0],
            scheme: Scheme::SimpsonComposite(1),
        };
        assert!(matches!(relative_l2_of_trial(&p, &zero, |_| 1.0), Err(Error::Usage(_))));
    }

    #[test]
    fn network_losses_agree_with_pointwise_evaluation() {
        let p = Problem::new(ProblemKind::BoxNDProductSine(2)).unwrap();
        let spec = NetworkSpec::resnet(2, 3, 1);
        let theta = crate::network::init_xavier(&spec, 3).unwrap().values;
        let q = monte_carlo(p.domain(), 64, 1).unwrap();
        for kind in [LossKind::Dgm, LossKind::Drm] {
            let direct = PdeLoss::new(&p, &spec, kind, &q).unwrap().value(&theta).unwrap();
            let pointwise = loss_of_trial(kind, &p, &q, |x| {
                eval_with_spatial_derivs(&spec, p.ansatz(), &theta, x).unwrap()
            })
            .unwrap();
            assert!((direct - pointwise).abs() < 1e-12 * (1.0 + direct.abs()));
            let g = PdeLoss::new(&p, &spec, kind, &q).unwrap().value_and_grad(&theta).unwrap();
            assert!((g.loss - direct).abs() < 1e-12 * (1.0 + direct.abs()));
        }
    }

    #[test]
    fn monte_carlo_loss_approaches_simpson() {
        let p = Problem::new(ProblemKind::Box1DSine).unwrap();
        let spec = NetworkSpec::resnet(1, 4, 1);
        let theta = crate::network::init_xavier(&spec, 8).unwrap().values;
        let exact = PdeLoss::new(&p, &spec, LossKind::Drm, &simpson_1d(401).unwrap())
            .unwrap()
            .value(&theta)
            .unwrap();
        let n = 4000;
        let q = monte_carlo(p.domain(), n, 77).unwrap();
        let l = PdeLoss::new(&p, &spec, LossKind::Drm, &q).unwrap();
        let mut scope = JetEval::new(&theta);
        let vals: Vec<f64> = q.iter().map(|(x, _)| l.point_loss(&mut scope, x)).collect();
        let mean = vals.iter().sum::<f64>() / n as f64;
        let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!((l.value(&theta).unwrap() - exact).abs() <= 3.0 * sd / (n as f64).sqrt());
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let p = Problem::new(ProblemKind::Sphere3DLowReg).unwrap();
        let q = monte_carlo(p.domain(), 10, 1).unwrap();
        let spec = NetworkSpec::resnet(1, 4, 1);
        assert!(matches!(PdeLoss::new(&p, &spec, LossKind::Dgm, &q), Err(Error::Config(_))));
    }

    #[test]
    fn problem_parsing() {
        assert_eq!(Problem::parse("boxnd_sine", 10).unwrap().dim(), 10);
        assert_eq!(Problem::parse("boxnd_sine:3", 10).unwrap().dim(), 3);
        assert_eq!(Problem::parse("sphere3d", 0).unwrap().ansatz(), Ansatz::Sphere);
        assert!(Problem::parse("torus", 1).is_err());
    }
}
