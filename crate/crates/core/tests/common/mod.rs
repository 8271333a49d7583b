//! Finite-difference oracles shared by the integration tests.
#![allow(dead_code)]

use lprobe::network::{ansatz_apply, eval_with_spatial_derivs, init_xavier};
use lprobe::pde::monte_carlo;
use lprobe::rng::Stream;
use lprobe::{Activation, LossKind, NetworkKind, NetworkSpec, PdeLoss, Problem, ProblemKind, Result};

/// Central difference with one Richardson step: error O(h⁴).
pub fn fd_derivative(mut f: impl FnMut(f64) -> f64, x: f64, h: f64) -> f64 {
    let d = |f: &mut dyn FnMut(f64) -> f64, h: f64| (f(x + h) - f(x - h)) / (2.0 * h);
    let coarse = d(&mut f, h);
    let fine = d(&mut f, h / 2.0);
    (4.0 * fine - coarse) / 3.0
}

/// Second difference with one Richardson step: error O(h⁴).
pub fn fd_second(mut f: impl FnMut(f64) -> f64, x: f64, h: f64) -> f64 {
    let f0 = f(x);
    let mut d = |h: f64| (f(x + h) - 2.0 * f0 + f(x - h)) / (h * h);
    let coarse = d(h);
    let fine = d(h / 2.0);
    (4.0 * fine - coarse) / 3.0
}

pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, theta: &[f64], h: f64) -> Vec<f64> {
    let mut p = theta.to_vec();
    (0..theta.len())
        .map(|j| {
            let g = fd_derivative(
                |t| {
                    p[j] = t;
                    let v = f(&p);
                    p[j] = theta[j];
                    v
                },
                theta[j],
                h,
            );
            g
        })
        .collect()
}

pub fn max_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |a, b| a.max(b.abs()))
}

/// `max |a − b| / max |a|`
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    max_abs(a.iter().zip(b).map(|(x, y)| x - y)) / max_abs(a.iter().copied()).max(f64::MIN_POSITIVE)
}

#[derive(Debug)]
pub struct FdCheck {
    pub spec: NetworkSpec,
    pub problem: Problem,
    pub loss: LossKind,
    pub grad_err: f64,
    pub lap_err: f64,
}

/// Random architecture with `w ≤ 8`, parameters and points; compares the
/// tape gradient of the loss and the jet Laplacian of the trial function
/// with finite differences.
pub fn random_fd_check(case: u64) -> Result<FdCheck> {
    let mut rng = Stream::derived(0xFD, case);
    let pick = |rng: &mut Stream, n: usize| (rng.next_u64() % n as u64) as usize;
    let kind = [NetworkKind::ResNet, NetworkKind::FcNet][pick(&mut rng, 2)];
    let problem = Problem::new(match pick(&mut rng, 4) {
        0 => ProblemKind::Box1DSine,
        1 => ProblemKind::BoxNDProductSine(2),
        2 => ProblemKind::Sphere3DLowReg,
        _ => ProblemKind::Box1DCubic,
    })?;
    let spec = NetworkSpec {
        kind,
        d: problem.dim(),
        w: 1 + pick(&mut rng, 8),
        blocks: pick(&mut rng, 3),
        activation: if pick(&mut rng, 4) == 0 { Activation::Sigmoid } else { Activation::Swish },
    };
    let loss = [LossKind::Dgm, LossKind::Drm][pick(&mut rng, 2)];
    let mut theta = init_xavier(&spec, rng.next_u64())?.values;
    for t in &mut theta {
        *t += 0.2 * rng.normal();
    }
    let quad = monte_carlo(problem.domain(), 8, rng.next_u64())?;
    let pde = PdeLoss::new(&problem, &spec, loss, &quad)?;

    let ad = pde.value_and_grad(&theta)?;
    let fd = fd_gradient(|t| pde.value(t).unwrap(), &theta, 1e-3);
    let grad_err = rel_err(&ad.grad, &fd);

    let ansatz = problem.ansatz();
    let mut lap_ad = Vec::new();
    let mut lap_fd = Vec::new();
    let mut grad_ad = Vec::new();
    let mut grad_fd = Vec::new();
    for (x, _) in quad.iter() {
        let e = eval_with_spatial_derivs(&spec, ansatz, &theta, x)?;
        lap_ad.push(e.laplacian);
        grad_ad.extend_from_slice(&e.grad);
        let mut lap = 0.0;
        for i in 0..x.len() {
            let mut p = x.to_vec();
            let mut along = |s: f64| {
                p[i] = s;
                ansatz_apply(&spec, ansatz, &theta, &p).unwrap()
            };
            lap += fd_second(&mut along, x[i], 1e-2);
            grad_fd.push(fd_derivative(&mut along, x[i], 1e-3));
        }
        lap_fd.push(lap);
    }
    let lap_err = rel_err(&lap_ad, &lap_fd).max(rel_err(&grad_ad, &grad_fd));
    Ok(FdCheck {
        spec,
        problem,
        loss,
        grad_err,
        lap_err,
    })
}
