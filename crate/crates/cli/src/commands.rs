use std::path::{Path, PathBuf};

use lprobe::contour::slice_svg;
use lprobe::io::{csv, fmt_f64, write_atomic};
use lprobe::landscape::{self, eig_curve, eig_index, RoughnessReport};
use lprobe::linalg::{hessian_fd, sym_eigenvalues};
use lprobe::network::init_xavier;
use lprobe::optimize::{self, Trajectory};
use lprobe::{
    Checkpoint, Error, FilterLayout, LossKind, NetworkSpec, Normalization, PdeLoss, Problem, ProbeConfig,
    QuadSpec, QuadratureSet, Result,
};
use serde::Serialize;

use crate::config::{Init, RunConfig};
use crate::{Probe, Target};

/// Largest parameter count accepted by `eig`.
const EIG_MAX_PARAMS: usize = 1000;

enum Landscape {
    Pde {
        problem: Problem,
        spec: NetworkSpec,
        loss: LossKind,
        quad: QuadratureSet,
    },
    Quadratic(Vec<f64>),
}

struct Resolved {
    landscape: Landscape,
    theta: Vec<f64>,
    layout: FilterLayout,
}

impl Resolved {
    fn value(&self, theta: &[f64]) -> Result<f64> {
        match &self.landscape {
            Landscape::Pde {
                problem,
                spec,
                loss,
                quad,
            } => PdeLoss::new(problem, spec, *loss, quad)?.value(theta),
            Landscape::Quadratic(diag) => Ok(0.5 * diag.iter().zip(theta).map(|(h, t)| h * t * t).sum::<f64>()),
        }
    }

    fn grad(&self, theta: &[f64]) -> Result<Vec<f64>> {
        match &self.landscape {
            Landscape::Pde {
                problem,
                spec,
                loss,
                quad,
            } => PdeLoss::new(problem, spec, *loss, quad)?.grad(theta),
            Landscape::Quadratic(diag) => Ok(diag.iter().zip(theta).map(|(h, t)| h * t).collect()),
        }
    }

    /// The built-in quadratic sits at the origin, where filter-wise
    /// normalization would zero every direction.
    fn normalization(&self, requested: &str) -> Result<Normalization> {
        match self.landscape {
            Landscape::Quadratic(_) => Ok(Normalization::None),
            Landscape::Pde { .. } => requested.parse(),
        }
    }
}

fn resolve(target: &Target) -> Result<Resolved> {
    if let Some(b) = &target.builtin {
        if b != "quadratic" {
            return Err(Error::Usage(format!("unknown builtin `{b}` (expected quadratic)")));
        }
        if target.diag.is_empty() || target.diag.iter().any(|&h| !(h > 0.0)) {
            return Err(Error::Usage("--diag entries must be positive".into()));
        }
        let n = target.diag.len();
        return Ok(Resolved {
            landscape: Landscape::Quadratic(target.diag.clone()),
            theta: vec![0.0; n],
            layout: FilterLayout::single(n),
        });
    }
    let path = target
        .checkpoint
        .as_ref()
        .ok_or_else(|| Error::Usage("pass --checkpoint or --builtin".into()))?;
    let ckpt = Checkpoint::read(path)?;
    let config_path = target
        .config
        .clone()
        .unwrap_or_else(|| path.parent().unwrap_or(Path::new(".")).join("config.toml"));
    let config = if config_path.exists() {
        Some(RunConfig::load(&config_path)?)
    } else {
        None
    };
    let need = |flag: &Option<String>, key: &str, from_cfg: Option<String>| -> Result<String> {
        flag.clone().or(from_cfg).ok_or_else(|| {
            Error::Usage(format!(
                "no `{key}` given: pass --{key} or place config.toml next to the checkpoint"
            ))
        })
    };
    let problem = Problem::parse(
        &need(&target.problem, "problem", config.as_ref().map(|c| c.problem.clone()))?,
        ckpt.spec.d,
    )?;
    let loss: LossKind = need(&target.loss, "loss", config.as_ref().map(|c| c.loss.to_string()))?.parse()?;
    let quad: QuadSpec = need(&target.quad, "quad", config.as_ref().map(|c| c.quad.clone()))?.parse()?;
    if problem.dim() != ckpt.spec.d {
        return Err(Error::Config(format!(
            "checkpoint network takes d = {} inputs but problem {} is {}-dimensional",
            ckpt.spec.d,
            problem.name(),
            problem.dim()
        )));
    }
    if let Some(c) = &config {
        if c.spec()? != ckpt.spec {
            return Err(Error::Config(format!(
                "checkpoint spec {:?} does not match config {}",
                ckpt.spec,
                config_path.display()
            )));
        }
    }
    Ok(Resolved {
        layout: FilterLayout::for_spec(&ckpt.spec),
        theta: ckpt.theta,
        landscape: Landscape::Pde {
            quad: quad.build(problem.domain())?,
            problem,
            spec: ckpt.spec,
            loss,
        },
    })
}

fn write(out: &Path, name: &str, text: &str) -> Result<PathBuf> {
    let p = out.join(name);
    write_atomic(&p, text.as_bytes())?;
    Ok(p)
}

fn trajectory_csv(t: &Trajectory) -> String {
    csv(
        &["epoch", "loss", "rel_l2_error"],
        t.snapshots
            .iter()
            .map(|s| vec![s.epoch.to_string(), fmt_f64(s.loss), fmt_f64(s.rel_l2_error)]),
    )
}

fn write_trajectory(dir: &Path, spec: NetworkSpec, seed: u64, t: &Trajectory) -> Result<()> {
    for s in &t.snapshots {
        Checkpoint {
            spec,
            seed,
            epoch: s.epoch,
            theta: s.theta.clone(),
        }
        .write(dir.join(format!("epoch_{}.json", s.epoch)))?;
    }
    write(dir, "trajectory.csv", &trajectory_csv(t))?;
    Ok(())
}

fn report_last(t: &Trajectory) {
    if let Some(s) = t.last() {
        println!(
            "epoch {} loss {} rel_l2_error {}",
            s.epoch,
            fmt_f64(s.loss),
            fmt_f64(s.rel_l2_error)
        );
    }
}

pub fn train(config_path: &Path) -> Result<()> {
    let cfg = RunConfig::load(config_path)?;
    let tc = cfg.train_config()?;
    let theta0 = match cfg.init {
        Init::Xavier => init_xavier(&tc.spec, cfg.init_seed)?.values,
        Init::Zeros => vec![0.0; tc.spec.param_count()],
    };
    let dir = cfg.run_dir();
    write(&dir, "config.toml", &cfg.to_toml())?;
    eprintln!(
        "training {} ({} parameters, {} epochs) into {}",
        cfg.name,
        theta0.len(),
        cfg.epochs,
        dir.display()
    );
    match optimize::train(&tc, &theta0) {
        Ok(out) => {
            write_trajectory(&dir, tc.spec, cfg.init_seed, &out.trajectory)?;
            report_last(&out.trajectory);
            Ok(())
        }
        Err(fail) => {
            write_trajectory(&dir, tc.spec, cfg.init_seed, &fail.trajectory)?;
            Err(Error::Numerical(fail.to_string()))
        }
    }
}

#[derive(Serialize)]
struct RetrainSummary {
    converged: bool,
    grad_norm: f64,
    steps: usize,
    tolerance: f64,
}

pub fn retrain_from(config_path: &Path, checkpoint: &Path, tol: f64) -> Result<()> {
    let cfg = RunConfig::load(config_path)?;
    let tc = cfg.train_config()?;
    let start = Checkpoint::read(checkpoint)?;
    if start.spec != tc.spec {
        return Err(Error::Config(format!(
            "checkpoint spec {:?} differs from config spec {:?}",
            start.spec, tc.spec
        )));
    }
    let dir = cfg.run_dir();
    write(&dir, "config.toml", &cfg.to_toml())?;
    match optimize::retrain_from(&tc, &start.theta, tol) {
        Ok(out) => {
            write_trajectory(&dir, tc.spec, start.seed, &out.trajectory)?;
            let summary = RetrainSummary {
                converged: out.converged,
                grad_norm: out.grad_norm,
                steps: out.steps,
                tolerance: tol,
            };
            write(&dir, "retrain.json", &(serde_json::to_string_pretty(&summary).expect("serializes") + "\n"))?;
            report_last(&out.trajectory);
            println!(
                "converged {} grad_norm {} steps {}",
                out.converged,
                fmt_f64(out.grad_norm),
                out.steps
            );
            Ok(())
        }
        Err(fail) => {
            write_trajectory(&dir, tc.spec, start.seed, &fail.trajectory)?;
            Err(Error::Numerical(fail.to_string()))
        }
    }
}

#[derive(Serialize)]
struct RoughnessSummary {
    #[serde(rename = "M")]
    directions: usize,
    l: f64,
    m: usize,
    seed: u64,
    mu: f64,
    sigma: f64,
    index: f64,
    excluded: usize,
}

impl From<&RoughnessReport> for RoughnessSummary {
    fn from(r: &RoughnessReport) -> Self {
        RoughnessSummary {
            directions: r.config.directions,
            l: r.config.l,
            m: r.config.m,
            seed: r.config.seed,
            mu: r.mu,
            sigma: r.sigma,
            index: r.index,
            excluded: r.excluded,
        }
    }
}

fn probe_config(probe: &Probe, l: f64, normalization: Normalization) -> ProbeConfig {
    ProbeConfig {
        directions: probe.directions,
        l,
        m: probe.m,
        seed: probe.seed,
        normalization,
    }
}

fn ts_csv(r: &RoughnessReport) -> String {
    csv(
        &["direction", "T"],
        r.ts.iter()
            .enumerate()
            .map(|(i, t)| vec![i.to_string(), t.map_or("NaN".into(), fmt_f64)]),
    )
}

pub fn roughness(target: &Target, probe: &Probe, out: &Path) -> Result<()> {
    let r = resolve(target)?;
    let norm = r.normalization(&probe.normalization)?;
    let f = |t: &[f64]| r.value(t);
    let mut reports = Vec::new();
    for &l in &probe.l {
        let rep = landscape::roughness_index(&f, &r.theta, &r.layout, &probe_config(probe, l, norm))?;
        if rep.excluded > 0 {
            eprintln!("l = {l}: {} flat directions excluded", rep.excluded);
        }
        println!(
            "l {} index {} mu {} sigma {}",
            fmt_f64(l),
            fmt_f64(rep.index),
            fmt_f64(rep.mu),
            fmt_f64(rep.sigma)
        );
        reports.push(rep);
    }
    let summaries: Vec<RoughnessSummary> = reports.iter().map(Into::into).collect();
    write(
        out,
        "roughness_summary.csv",
        &csv(
            &["l", "M", "m", "seed", "mu", "sigma", "index", "excluded"],
            summaries.iter().map(|s| {
                vec![
                    fmt_f64(s.l),
                    s.directions.to_string(),
                    s.m.to_string(),
                    s.seed.to_string(),
                    fmt_f64(s.mu),
                    fmt_f64(s.sigma),
                    fmt_f64(s.index),
                    s.excluded.to_string(),
                ]
            }),
        ),
    )?;
    let json = if summaries.len() == 1 {
        serde_json::to_string_pretty(&summaries[0])
    } else {
        serde_json::to_string_pretty(&summaries)
    }
    .expect("summary serializes");
    write(out, "roughness_summary.json", &(json + "\n"))?;
    if reports.len() == 1 {
        write(out, "roughness_T.csv", &ts_csv(&reports[0]))?;
    } else {
        for (k, rep) in reports.iter().enumerate() {
            write(out, &format!("roughness_T_{k}.csv"), &ts_csv(rep))?;
        }
    }
    Ok(())
}

pub fn eig(target: &Target, k: Option<usize>, h: f64, out: &Path) -> Result<()> {
    let r = resolve(target)?;
    let n = r.theta.len();
    if n > EIG_MAX_PARAMS {
        return Err(Error::Usage(format!(
            "eig uses a dense Hessian and is limited to {EIG_MAX_PARAMS} parameters; this network has {n}"
        )));
    }
    let hess = hessian_fd(|t| r.grad(t), &r.theta, h)?;
    let lambda = sym_eigenvalues(&hess)?;
    write(
        out,
        "eigenvalues.csv",
        &csv(
            &["i", "lambda"],
            lambda.iter().enumerate().map(|(i, l)| vec![(i + 1).to_string(), fmt_f64(*l)]),
        ),
    )?;
    write(
        out,
        "vcurve.csv",
        &csv(
            &["k", "V"],
            eig_curve(&lambda).into_iter().map(|(k, v)| vec![k.to_string(), fmt_f64(v)]),
        ),
    )?;
    let v = eig_index(&lambda, k.unwrap_or(n))?;
    if v.truncated {
        eprintln!("V truncated to k = {}: later eigenvalues are not positive", v.k);
    }
    println!("V({}) {}", v.k, fmt_f64(v.value));
    Ok(())
}

pub fn slice2d(
    target: &Target,
    l: f64,
    grid: usize,
    seed: u64,
    normalization: &str,
    svg: bool,
    out: &Path,
) -> Result<()> {
    let r = resolve(target)?;
    let norm = r.normalization(normalization)?;
    let s = landscape::slice_2d(&|t: &[f64]| r.value(t), &r.theta, &r.layout, seed, l, grid, norm)?;
    let rows = s.coords.iter().enumerate().flat_map(|(i, a)| {
        s.coords
            .iter()
            .enumerate()
            .map(move |(j, b)| (i, j, *a, *b))
    });
    let text = csv(
        &["alpha", "beta", "loss"],
        rows.map(|(i, j, a, b)| vec![fmt_f64(a), fmt_f64(b), fmt_f64(s.values[i][j])]),
    );
    write(out, "slice2d.csv", &text)?;
    if svg {
        write(out, "slice2d.svg", &slice_svg(&s, 8))?;
    }
    let (lo, hi) = s.min_max();
    let levels = landscape::isoline_levels(lo, hi, 8);
    println!(
        "min {} max {} level_crossings {}",
        fmt_f64(lo),
        fmt_f64(hi),
        landscape::count_level_crossings(&s.values, &levels)
    );
    Ok(())
}

pub fn slice1d(target: &Target, l: f64, m: usize, seed: u64, normalization: &str, out: &Path) -> Result<()> {
    let r = resolve(target)?;
    let norm = r.normalization(normalization)?;
    let s = landscape::slice_1d(&|t: &[f64]| r.value(t), &r.theta, &r.layout, seed, l, m, norm)?;
    let text = csv(
        &["s", "loss"],
        s.s.iter().zip(&s.values).map(|(a, v)| vec![fmt_f64(*a), fmt_f64(*v)]),
    );
    write(out, "slice1d.csv", &text)?;
    println!("T {}", landscape::normalized_tv(&s.values, l).map_or("NaN".into(), fmt_f64));
    Ok(())
}

/// `epoch_<k>.json` files of a run directory, by increasing epoch.
fn run_checkpoints(run: &Path) -> Result<Vec<(usize, PathBuf)>> {
    let entries = std::fs::read_dir(run).map_err(|e| Error::Config(format!("cannot read {}: {e}", run.display())))?;
    let mut found = Vec::new();
    for e in entries.flatten() {
        let name = e.file_name().to_string_lossy().into_owned();
        if let Some(k) = name
            .strip_prefix("epoch_")
            .and_then(|s| s.strip_suffix(".json"))
            .and_then(|s| s.parse::<usize>().ok())
        {
            found.push((k, e.path()));
        }
    }
    found.sort();
    if found.is_empty() {
        return Err(Error::Config(format!("no epoch_<k>.json checkpoints in {}", run.display())));
    }
    Ok(found)
}

pub fn traj_roughness(run: &Path, probe: &Probe, out: &Path) -> Result<()> {
    let [l] = probe.l[..] else {
        return Err(Error::Usage("traj-roughness takes a single --l value".into()));
    };
    let files = run_checkpoints(run)?;
    let target = |ckpt: &Path| Target {
        checkpoint: Some(ckpt.to_path_buf()),
        config: Some(run.join("config.toml")),
        problem: None,
        loss: None,
        quad: None,
        builtin: None,
        diag: Vec::new(),
    };
    let first = resolve(&target(&files[0].1))?;
    let cfg = probe_config(probe, l, first.normalization(&probe.normalization)?);
    let mut rows = Vec::new();
    for (epoch, path) in &files {
        let index = match resolve(&target(path)).and_then(|r| {
            landscape::roughness_index(&|t: &[f64]| r.value(t), &r.theta, &r.layout, &cfg)
        }) {
            Ok(rep) => rep.index,
            Err(e) => {
                eprintln!("epoch {epoch}: {e}");
                f64::NAN
            }
        };
        println!("epoch {epoch} index {}", fmt_f64(index));
        rows.push(vec![epoch.to_string(), fmt_f64(index)]);
    }
    write(out, "traj_roughness.csv", &csv(&["epoch", "index"], rows))?;
    Ok(())
}
