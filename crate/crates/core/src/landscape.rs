//! Random-projection probes of a loss landscape.
//!
//! A probe draws `M` Gaussian directions, rescales them filter by filter to
//! the norms of the parameter point, samples the loss on `m + 1` evenly
//! spaced points of `[-l, l]` along each one, and summarizes every 1D profile
//! by its normalized total variation
//!
//! ```text
//! T = (1 / 2l) · Σⱼ |f(sⱼ₊₁) − f(sⱼ)| / (max f − min f).
//! ```
//!
//! The roughness index is the coefficient of variation `σ/μ` of the `T`
//! values (population standard deviation). A quadratic has `T = 1/l` along
//! every direction through its minimizer and therefore index zero.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::FilterLayout;
use crate::rng::Stream;

/// How sampled directions are rescaled before probing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    /// Each filter block gets the Frobenius norm of the matching block of θ.
    #[default]
    FilterWise,
    /// Raw Gaussian directions.
    None,
}

impl std::str::FromStr for Normalization {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "filter" | "filterwise" => Ok(Normalization::FilterWise),
            "none" | "raw" => Ok(Normalization::None),
            other => Err(Error::Config(format!("unknown normalization `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Direction {
    pub values: Vec<f64>,
    pub normalized: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    /// Number of directions.
    #[serde(rename = "M")]
    pub directions: usize,
    /// Half-length of the sampling interval.
    pub l: f64,
    /// Grid subdivisions; `m + 1` samples per direction.
    pub m: usize,
    pub seed: u64,
    #[serde(default)]
    pub normalization: Normalization,
}

impl ProbeConfig {
    pub fn new(directions: usize, l: f64, m: usize, seed: u64) -> Self {
        ProbeConfig {
            directions,
            l,
            m,
            seed,
            normalization: Normalization::FilterWise,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.directions < 2 {
            return Err(Error::Config(format!("M must be at least 2, got {}", self.directions)));
        }
        check_grid(self.l, self.m)
    }
}

fn check_grid(l: f64, m: usize) -> Result<()> {
    if !(l > 0.0 && l.is_finite()) {
        return Err(Error::Config(format!("l must be positive and finite, got {l}")));
    }
    if m < 2 {
        return Err(Error::Config(format!("m must be at least 2, got {m}")));
    }
    Ok(())
}

/// Grid point `j` of `[-l, l]` split into `m` intervals; exactly 0 at `2j = m`.
pub fn grid_point(l: f64, m: usize, j: usize) -> f64 {
    l * (2.0 * j as f64 - m as f64) / m as f64
}

/// `count` standard-normal directions. Direction `i` depends only on
/// `(seed, i)`, so larger probes extend smaller ones.
pub fn sample_directions(n_params: usize, count: usize, seed: u64) -> Vec<Direction> {
    (0..count)
        .map(|i| {
            let mut rng = Stream::derived(seed, i as u64);
            Direction {
                values: (0..n_params).map(|_| rng.normal()).collect(),
                normalized: false,
            }
        })
        .collect()
}

/// Filter-wise normalization `d̄ᵢⱼ = dᵢⱼ / ‖dᵢⱼ‖ · ‖θᵢⱼ‖`.
///
/// A block stays zero when either norm is zero.
pub fn filter_normalize(d: &Direction, theta: &[f64], layout: &FilterLayout) -> Result<Direction> {
    if d.values.len() != theta.len() || layout.len() != theta.len() {
        return Err(Error::Usage(format!(
            "direction has {} entries, theta {}, layout {}",
            d.values.len(),
            theta.len(),
            layout.len()
        )));
    }
    let mut out = vec![0.0; theta.len()];
    for f in layout.filters() {
        let r = f.range.clone();
        let dn = norm(&d.values[r.clone()]);
        let tn = norm(&theta[r.clone()]);
        if dn > 0.0 && tn > 0.0 {
            let c = tn / dn;
            for i in r {
                out[i] = d.values[i] * c;
            }
        }
    }
    Ok(Direction {
        values: out,
        normalized: true,
    })
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn prepare(d: &Direction, theta: &[f64], layout: &FilterLayout, mode: Normalization) -> Result<Direction> {
    match mode {
        Normalization::FilterWise => filter_normalize(d, theta, layout),
        Normalization::None => Ok(d.clone()),
    }
}

/// `f(sⱼ) = J(θ + sⱼ d)` for `j = 0..=m`.
pub fn project_1d<F>(loss: &F, theta: &[f64], d: &Direction, l: f64, m: usize) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64> + ?Sized,
{
    check_grid(l, m)?;
    if d.values.len() != theta.len() {
        return Err(Error::Usage("direction length differs from theta".into()));
    }
    let mut point = vec![0.0; theta.len()];
    (0..=m)
        .map(|j| {
            let s = grid_point(l, m, j);
            for ((p, t), v) in point.iter_mut().zip(theta).zip(&d.values) {
                *p = t + s * v;
            }
            let f = loss(&point)?;
            if !f.is_finite() {
                return Err(Error::Numerical(format!("loss is {f} at grid point {j} (s = {s})")));
            }
            Ok(f)
        })
        .collect()
}

/// Normalized total variation of samples on `[-l, l]`.
pub fn normalized_tv(samples: &[f64], l: f64) -> Result<f64> {
    if samples.len() < 3 {
        return Err(Error::Usage(format!("need at least 3 samples, got {}", samples.len())));
    }
    if !(l > 0.0) {
        return Err(Error::Usage(format!("l must be positive, got {l}")));
    }
    let (lo, hi) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let range = hi - lo;
    if !range.is_finite() {
        return Err(Error::Numerical("non-finite samples".into()));
    }
    if range == 0.0 {
        return Err(Error::FlatProjection);
    }
    let tv: f64 = samples.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    Ok(tv / range / (2.0 * l))
}

/// Mean, population standard deviation and their ratio.
pub fn coefficient_of_variation(ts: &[f64]) -> (f64, f64, f64) {
    let n = ts.len() as f64;
    let mu = ts.iter().sum::<f64>() / n;
    let var = ts.iter().map(|t| (t - mu) * (t - mu)).sum::<f64>() / n;
    let sigma = var.sqrt();
    (mu, sigma, sigma / mu)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoughnessReport {
    /// One entry per direction; `None` for a flat projection.
    pub ts: Vec<Option<f64>>,
    pub mu: f64,
    pub sigma: f64,
    pub index: f64,
    pub excluded: usize,
    pub config: ProbeConfig,
}

/// Roughness index of `loss` around `theta`.
pub fn roughness_index<F>(loss: &F, theta: &[f64], layout: &FilterLayout, cfg: &ProbeConfig) -> Result<RoughnessReport>
where
    F: Fn(&[f64]) -> Result<f64> + Sync + ?Sized,
{
    cfg.validate()?;
    let dirs = sample_directions(theta.len(), cfg.directions, cfg.seed);
    let ts: Vec<Option<f64>> = dirs
        .par_iter()
        .enumerate()
        .map(|(i, d)| {
            let d = prepare(d, theta, layout, cfg.normalization)?;
            let f = project_1d(loss, theta, &d, cfg.l, cfg.m)
                .map_err(|e| Error::Numerical(format!("direction {i}: {e}")))?;
            match normalized_tv(&f, cfg.l) {
                Ok(t) => Ok(Some(t)),
                Err(Error::FlatProjection) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let kept: Vec<f64> = ts.iter().flatten().copied().collect();
    let excluded = ts.len() - kept.len();
    if kept.is_empty() {
        return Err(Error::AllDirectionsFlat(ts.len()));
    }
    let (mu, sigma, index) = coefficient_of_variation(&kept);
    Ok(RoughnessReport {
        ts,
        mu,
        sigma,
        index,
        excluded,
        config: *cfg,
    })
}

/// `V(k) = Σᵢ≤ₖ log₁₀ λᵢ` over descending eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigIndex {
    pub value: f64,
    /// Terms actually summed; smaller than requested when a non-positive
    /// eigenvalue is reached first.
    pub k: usize,
    pub truncated: bool,
}

pub fn eig_index(eigenvalues: &[f64], k: usize) -> Result<EigIndex> {
    if eigenvalues.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::Usage("eigenvalues must be sorted in descending order".into()));
    }
    let want = k.min(eigenvalues.len());
    let used = eigenvalues[..want].iter().take_while(|&&l| l > 0.0).count();
    Ok(EigIndex {
        value: eigenvalues[..used].iter().map(|l| l.log10()).sum(),
        k: used,
        truncated: used < k,
    })
}

/// `(k, V(k))` for every leading positive eigenvalue.
pub fn eig_curve(eigenvalues: &[f64]) -> Vec<(usize, f64)> {
    let mut acc = 0.0;
    eigenvalues
        .iter()
        .take_while(|&&l| l > 0.0)
        .enumerate()
        .map(|(i, l)| {
            acc += l.log10();
            (i + 1, acc)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Slice1D {
    pub s: Vec<f64>,
    pub values: Vec<f64>,
    pub direction: Direction,
}

pub fn slice_1d<F>(
    loss: &F,
    theta: &[f64],
    layout: &FilterLayout,
    seed: u64,
    l: f64,
    m: usize,
    normalization: Normalization,
) -> Result<Slice1D>
where
    F: Fn(&[f64]) -> Result<f64> + ?Sized,
{
    let d = prepare(&sample_directions(theta.len(), 1, seed)[0], theta, layout, normalization)?;
    let values = project_1d(loss, theta, &d, l, m)?;
    Ok(Slice1D {
        s: (0..=m).map(|j| grid_point(l, m, j)).collect(),
        values,
        direction: d,
    })
}

/// `J(θ + αδ + βη)` on an `(n+1) × (n+1)` grid over `[-l, l]²`.
#[derive(Debug, Clone, PartialEq)]
pub struct Slice2D {
    pub coords: Vec<f64>,
    /// `values[i][j]` is at `(α, β) = (coords[i], coords[j])`.
    pub values: Vec<Vec<f64>>,
    pub delta: Direction,
    pub eta: Direction,
}

impl Slice2D {
    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .flatten()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)))
    }
}

pub fn slice_2d<F>(
    loss: &F,
    theta: &[f64],
    layout: &FilterLayout,
    seed: u64,
    l: f64,
    n: usize,
    normalization: Normalization,
) -> Result<Slice2D>
where
    F: Fn(&[f64]) -> Result<f64> + Sync + ?Sized,
{
    check_grid(l, n)?;
    let dirs = sample_directions(theta.len(), 2, seed);
    let delta = prepare(&dirs[0], theta, layout, normalization)?;
    let eta = prepare(&dirs[1], theta, layout, normalization)?;
    let coords: Vec<f64> = (0..=n).map(|j| grid_point(l, n, j)).collect();
    let values = coords
        .par_iter()
        .enumerate()
        .map(|(i, &a)| {
            let mut point = vec![0.0; theta.len()];
            coords
                .iter()
                .enumerate()
                .map(|(j, &b)| {
                    for k in 0..point.len() {
                        point[k] = theta[k] + a * delta.values[k] + b * eta.values[k];
                    }
                    let f = loss(&point)?;
                    if !f.is_finite() {
                        return Err(Error::Numerical(format!("loss is {f} at grid point ({i}, {j})")));
                    }
                    Ok(f)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Slice2D {
        coords,
        values,
        delta,
        eta,
    })
}

/// `count` equally spaced levels strictly between `lo` and `hi`.
pub fn isoline_levels(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let step = (hi - lo) / (count + 1) as f64;
    (1..=count).map(|k| lo + k as f64 * step).collect()
}

/// Number of times grid rows and columns cross any of `levels`.
pub fn count_level_crossings(values: &[Vec<f64>], levels: &[f64]) -> usize {
    let crossings = |a: f64, b: f64| levels.iter().filter(|&&c| (a - c) * (b - c) < 0.0 || (a != b && a == c)).count();
    let mut total = 0;
    for row in values {
        total += row.windows(2).map(|w| crossings(w[0], w[1])).sum::<usize>();
    }
    let cols = values.first().map_or(0, Vec::len);
    for j in 0..cols {
        total += values.windows(2).map(|w| crossings(w[0][j], w[1][j])).sum::<usize>();
    }
    total
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPoint {
    pub epoch: usize,
    /// NaN when the probe failed.
    pub index: f64,
    pub error: Option<String>,
}

/// Roughness index at every snapshot with the same directions seed.
pub fn trajectory_roughness<F>(
    loss: &F,
    snapshots: &[(usize, Vec<f64>)],
    layout: &FilterLayout,
    cfg: &ProbeConfig,
) -> Result<Vec<TrajectoryPoint>>
where
    F: Fn(&[f64]) -> Result<f64> + Sync + ?Sized,
{
    if snapshots.is_empty() {
        return Err(Error::Usage("trajectory has no snapshots".into()));
    }
    cfg.validate()?;
    Ok(snapshots
        .iter()
        .map(|(epoch, theta)| match roughness_index(loss, theta, layout, cfg) {
            Ok(r) => TrajectoryPoint {
                epoch: *epoch,
                index: r.index,
                error: None,
            },
            Err(e) => TrajectoryPoint {
                epoch: *epoch,
                index: f64::NAN,
                error: Some(e.to_string()),
            },
        })
        .collect())
}
