use std::path::{Path, PathBuf};

use lprobe::pde::{simpson_1d, Domain};
use lprobe::{Activation, Error, LossKind, NetworkKind, NetworkSpec, Problem, QuadPolicy, QuadSpec, Result};
use serde::{Deserialize, Serialize};

use lprobe::optimize::{AdamConfig, SnapshotSchedule, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Init {
    #[default]
    Xavier,
    Zeros,
}

/// One run, stored as a flat TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    /// `box1d_cubic | box1d_sine | boxnd_sine:D | sphere3d`
    pub problem: String,
    pub network: NetworkKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w: Option<usize>,
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub blocks: Option<usize>,
    #[serde(default)]
    pub activation: Activation,
    pub loss: LossKind,
    /// Training quadrature, `simpson:N` or `mc:N:seed`.
    pub quad: String,
    /// Independent quadrature for the relative L² error.
    pub eval_quad: String,
    pub epochs: usize,
    pub init_seed: u64,
    #[serde(default)]
    pub init: Init,
    pub direction_seed: u64,
    #[serde(default = "default_lr")]
    pub lr: f64,
    /// Snapshot every k epochs instead of the geometric-plus-500 schedule.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot_every: Option<usize>,
    #[serde(rename = "probe_M", default = "default_probe_m_dirs")]
    pub probe_directions: usize,
    #[serde(default = "default_probe_l")]
    pub probe_l: f64,
    #[serde(default = "default_probe_m")]
    pub probe_m: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_lr() -> f64 {
    AdamConfig::default().lr
}
fn default_probe_m_dirs() -> usize {
    100
}
fn default_probe_l() -> f64 {
    0.01
}
fn default_probe_m() -> usize {
    100
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.problem()?;
        cfg.spec()?;
        cfg.quad_spec()?;
        cfg.eval_quad_spec()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn problem(&self) -> Result<Problem> {
        Problem::parse(&self.problem, 0)
    }

    pub fn spec(&self) -> Result<NetworkSpec> {
        let d = self.problem()?.dim();
        let spec = match self.network {
            NetworkKind::Linear1DToy => NetworkSpec::linear_toy(),
            kind => {
                let w = self.w.ok_or_else(|| Error::Config("missing key `w`".into()))?;
                let blocks = self.blocks.ok_or_else(|| Error::Config("missing key `N`".into()))?;
                NetworkSpec {
                    kind,
                    d,
                    w,
                    blocks,
                    activation: self.activation,
                }
            }
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn quad_spec(&self) -> Result<QuadSpec> {
        self.quad.parse()
    }

    pub fn eval_quad_spec(&self) -> Result<QuadSpec> {
        self.eval_quad.parse()
    }

    pub fn run_dir(&self) -> PathBuf {
        self.output_dir.join(&self.name)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let problem = self.problem()?;
        let quad = match self.quad_spec()? {
            QuadSpec::Simpson(n) => {
                if problem.domain() != Domain::UnitBox(1) {
                    return Err(Error::Config("simpson quadrature needs a 1D problem".into()));
                }
                QuadPolicy::Fixed(simpson_1d(n)?)
            }
            QuadSpec::MonteCarlo { n, seed } => QuadPolicy::MonteCarloPerEpoch { n, seed },
        };
        Ok(TrainConfig {
            problem,
            spec: self.spec()?,
            loss: self.loss,
            epochs: self.epochs,
            quad,
            eval_quad: self.eval_quad_spec()?.build(problem.domain())?,
            snapshots: match self.snapshot_every {
                Some(k) => SnapshotSchedule::Every(k),
                None => SnapshotSchedule::GeometricPlus500,
            },
            adam: AdamConfig {
                lr: self.lr,
                ..AdamConfig::default()
            },
        })
    }
}
