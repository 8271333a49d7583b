//! Adam and the full-batch training loop.
//!
//! One epoch is one Adam step over the whole batch: the Simpson nodes in 1D,
//! or a fresh Monte Carlo sample whose seed is derived from `(run seed, epoch)`.

use crate::error::{Error, Result};
use crate::network::{check_len, NetworkSpec};
use crate::pde::{monte_carlo, relative_l2_error, LossKind, PdeLoss, Problem, QuadratureSet};
use crate::rng::mix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize, config: AdamConfig) -> Self {
        AdamState {
            config,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    /// One bias-corrected Adam update of `theta` in place.
    pub fn step(&mut self, theta: &mut [f64], grad: &[f64]) -> Result<()> {
        if theta.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(Error::Usage(format!(
                "Adam state has {} entries, theta {}, gradient {}",
                self.m.len(),
                theta.len(),
                grad.len()
            )));
        }
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite gradient component {i} ({}) at Adam step {}",
                grad[i],
                self.t + 1
            )));
        }
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        self.t += 1;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for i in 0..theta.len() {
            let g = grad[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            theta[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

/// Where the training batch comes from.
#[derive(Debug, Clone)]
pub enum QuadPolicy {
    /// The same frozen set every epoch (Simpson in 1D).
    Fixed(QuadratureSet),
    /// A fresh uniform sample of `n` points per epoch.
    MonteCarloPerEpoch { n: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum SnapshotSchedule {
    /// Epoch 0, powers of two, every 500th epoch, and the last epoch.
    #[default]
    GeometricPlus500,
    Every(usize),
    Epochs(Vec<usize>),
}

impl SnapshotSchedule {
    pub fn contains(&self, epoch: usize, last: usize) -> bool {
        if epoch == 0 || epoch == last {
            return true;
        }
        match self {
            SnapshotSchedule::GeometricPlus500 => epoch.is_power_of_two() || epoch % 500 == 0,
            SnapshotSchedule::Every(k) => *k > 0 && epoch % k == 0,
            SnapshotSchedule::Epochs(list) => list.contains(&epoch),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub epoch: usize,
    pub theta: Vec<f64>,
    pub loss: f64,
    pub rel_l2_error: f64,
}

/// Snapshots in strictly increasing epoch order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub snapshots: Vec<Snapshot>,
}

impl Trajectory {
    fn push(&mut self, s: Snapshot) {
        debug_assert!(self.snapshots.last().is_none_or(|l| l.epoch < s.epoch));
        self.snapshots.push(s);
    }

    pub fn last(&self) -> Option<&Snapshot> {
        self.snapshots.last()
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub problem: Problem,
    pub spec: NetworkSpec,
    pub loss: LossKind,
    pub epochs: usize,
    pub quad: QuadPolicy,
    /// Independent set for the relative L² error.
    pub eval_quad: QuadratureSet,
    pub snapshots: SnapshotSchedule,
    pub adam: AdamConfig,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub theta: Vec<f64>,
    pub trajectory: Trajectory,
    /// Full-batch gradient norm at the last evaluated point.
    pub last_grad_norm: f64,
    /// Number of Adam steps actually taken.
    pub steps: usize,
}

/// Training stopped early; everything recorded so far is kept.
#[derive(Debug)]
pub struct TrainFailure {
    pub error: Error,
    pub epoch: usize,
    pub theta: Vec<f64>,
    pub trajectory: Trajectory,
}

impl std::fmt::Display for TrainFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "training aborted at epoch {}: {}", self.epoch, self.error)
    }
}

impl std::error::Error for TrainFailure {}

impl TrainConfig {
    fn batch(&self, epoch: usize) -> Result<std::borrow::Cow<'_, QuadratureSet>> {
        Ok(match &self.quad {
            QuadPolicy::Fixed(q) => std::borrow::Cow::Borrowed(q),
            QuadPolicy::MonteCarloPerEpoch { n, seed } => std::borrow::Cow::Owned(monte_carlo(
                self.problem.domain(),
                *n,
                mix(*seed, epoch as u64),
            )?),
        })
    }

    /// Frozen set used to report snapshot losses.
    pub fn monitor_quad(&self) -> Result<QuadratureSet> {
        match &self.quad {
            QuadPolicy::Fixed(q) => Ok(q.clone()),
            QuadPolicy::MonteCarloPerEpoch { n, seed } => {
                monte_carlo(self.problem.domain(), *n, mix(*seed, u64::MAX))
            }
        }
    }

    fn snapshot(&self, monitor: &QuadratureSet, epoch: usize, theta: &[f64]) -> Result<Snapshot> {
        let loss = PdeLoss::new(&self.problem, &self.spec, self.loss, monitor)?.value(theta)?;
        let rel = relative_l2_error(&self.problem, &self.spec, theta, &self.eval_quad)?;
        Ok(Snapshot {
            epoch,
            theta: theta.to_vec(),
            loss,
            rel_l2_error: rel,
        })
    }
}

/// Optional early stop on the full-batch gradient norm.
#[derive(Debug, Clone, Copy)]
struct StopRule {
    grad_tol: Option<f64>,
}

fn run(cfg: &TrainConfig, theta0: &[f64], stop: StopRule) -> std::result::Result<TrainOutcome, TrainFailure> {
    let mut theta = theta0.to_vec();
    let mut trajectory = Trajectory::default();
    let fail = |error: Error, epoch: usize, theta: &[f64], trajectory: Trajectory| TrainFailure {
        error,
        epoch,
        theta: theta.to_vec(),
        trajectory,
    };
    if let Err(e) = check_len(&cfg.spec, &theta).and_then(|_| cfg.spec.validate()) {
        return Err(fail(e, 0, &theta, trajectory));
    }
    let monitor = match cfg.monitor_quad() {
        Ok(m) => m,
        Err(e) => return Err(fail(e, 0, &theta, trajectory)),
    };
    match cfg.snapshot(&monitor, 0, &theta) {
        Ok(s) => trajectory.push(s),
        Err(e) => return Err(fail(e, 0, &theta, trajectory)),
    }
    let mut adam = AdamState::new(theta.len(), cfg.adam);
    let mut last_grad_norm = f64::NAN;
    let mut steps = 0;
    for epoch in 1..=cfg.epochs {
        let step = (|| -> Result<bool> {
            let batch = cfg.batch(epoch)?;
            let g = PdeLoss::new(&cfg.problem, &cfg.spec, cfg.loss, &batch)?.value_and_grad(&theta)?;
            last_grad_norm = g.grad.iter().map(|v| v * v).sum::<f64>().sqrt();
            if stop.grad_tol.is_some_and(|tol| last_grad_norm < tol) {
                return Ok(false);
            }
            adam.step(&mut theta, &g.grad)?;
            Ok(true)
        })();
        match step {
            Ok(true) => steps += 1,
            Ok(false) => {
                // converged before taking this step
                let done = epoch - 1;
                if trajectory.last().is_none_or(|s| s.epoch < done) {
                    match cfg.snapshot(&monitor, done, &theta) {
                        Ok(s) => trajectory.push(s),
                        Err(e) => return Err(fail(e, done, &theta, trajectory)),
                    }
                }
                return Ok(TrainOutcome {
                    theta,
                    trajectory,
                    last_grad_norm,
                    steps,
                });
            }
            Err(e) => return Err(fail(e, epoch, &theta, trajectory)),
        }
        if cfg.snapshots.contains(epoch, cfg.epochs) {
            match cfg.snapshot(&monitor, epoch, &theta) {
                Ok(s) => trajectory.push(s),
                Err(e) => return Err(fail(e, epoch, &theta, trajectory)),
            }
        }
    }
    Ok(TrainOutcome {
        theta,
        trajectory,
        last_grad_norm,
        steps,
    })
}

/// Fixed-budget Adam training from `theta0`.
pub fn train(cfg: &TrainConfig, theta0: &[f64]) -> std::result::Result<TrainOutcome, TrainFailure> {
    if cfg.epochs == 0 {
        return Err(TrainFailure {
            error: Error::Config("training needs at least one epoch".into()),
            epoch: 0,
            theta: theta0.to_vec(),
            trajectory: Trajectory::default(),
        });
    }
    run(cfg, theta0, StopRule { grad_tol: None })
}

/// Result of the second-minimizer search.
#[derive(Debug, Clone)]
pub struct RetrainOutcome {
    pub theta: Vec<f64>,
    pub trajectory: Trajectory,
    pub grad_norm: f64,
    /// `grad_norm < tolerance` was reached within the budget.
    pub converged: bool,
    pub steps: usize,
}

pub const RETRAIN_GRAD_TOL: f64 = 1e-4;

/// Minimize `cfg.loss` starting from a point obtained under another loss
/// (e.g. a DGM run started from the DRM minimizer), stopping as soon as the
/// full-batch gradient norm drops below `grad_tol` or after `cfg.epochs`.
pub fn retrain_from(
    cfg: &TrainConfig,
    theta_other: &[f64],
    grad_tol: f64,
) -> std::result::Result<RetrainOutcome, TrainFailure> {
    let out = run(
        cfg,
        theta_other,
        StopRule {
            grad_tol: Some(grad_tol),
        },
    )?;
    Ok(RetrainOutcome {
        converged: out.last_grad_norm < grad_tol,
        grad_norm: out.last_grad_norm,
        theta: out.theta,
        trajectory: out.trajectory,
        steps: out.steps,
    })
}
