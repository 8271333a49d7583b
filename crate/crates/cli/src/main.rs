mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "lprobe", version, about = "Train PDE networks and probe their loss landscapes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Where the loss being probed comes from.
#[derive(Args, Debug, Clone)]
pub struct Target {
    /// Parameter checkpoint (`epoch_<k>.json`).
    #[arg(long, conflicts_with = "builtin")]
    pub checkpoint: Option<PathBuf>,
    /// Run config; defaults to `config.toml` next to the checkpoint.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub problem: Option<String>,
    #[arg(long)]
    pub loss: Option<String>,
    /// Frozen probe quadrature, `simpson:N` or `mc:N:seed`.
    #[arg(long)]
    pub quad: Option<String>,
    /// Built-in test landscape instead of a checkpoint: `quadratic`.
    #[arg(long)]
    pub builtin: Option<String>,
    /// Diagonal Hessian of the built-in quadratic.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
    pub diag: Vec<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct Probe {
    #[arg(long = "M", default_value_t = 100)]
    pub directions: usize,
    /// Half-interval length; a comma-separated list runs a sweep.
    #[arg(long, value_delimiter = ',', default_value = "0.01")]
    pub l: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    pub m: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// `filter` or `none`; the built-in quadratic always uses `none`.
    #[arg(long, default_value = "filter")]
    pub normalization: String,
}

#[derive(Subcommand)]
enum Command {
    /// Train a network from a run config.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Roughness index of the landscape around a checkpoint.
    Roughness {
        #[command(flatten)]
        target: Target,
        #[command(flatten)]
        probe: Probe,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Finite-difference Hessian spectrum and V(k) curve.
    Eig {
        #[command(flatten)]
        target: Target,
        /// Number of leading eigenvalues in V(k).
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value_t = 1e-4)]
        h: f64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Loss on a 2D plane of two filter-normalized directions.
    Slice2d {
        #[command(flatten)]
        target: Target,
        #[arg(long, default_value_t = 1.0)]
        l: f64,
        #[arg(long, default_value_t = 50)]
        grid: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "filter")]
        normalization: String,
        /// Also write an SVG with 8 isolines.
        #[arg(long)]
        svg: bool,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Loss along one filter-normalized direction.
    Slice1d {
        #[command(flatten)]
        target: Target,
        #[arg(long, default_value_t = 1.0)]
        l: f64,
        #[arg(long, default_value_t = 100)]
        m: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "filter")]
        normalization: String,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Roughness index at every checkpoint of a run.
    TrajRoughness {
        #[arg(long)]
        run: PathBuf,
        #[command(flatten)]
        probe: Probe,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Minimize the configured loss starting from another run's parameters.
    RetrainFrom {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = lprobe::optimize::RETRAIN_GRAD_TOL)]
        tol: f64,
    },
}

fn init_threads() -> Result<(), String> {
    if let Ok(v) = std::env::var("LPROBE_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| format!("LPROBE_THREADS must be a positive integer, got `{v}`"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let result = match cli.command {
        Command::Train { config } => commands::train(&config),
        Command::Roughness { target, probe, out } => commands::roughness(&target, &probe, &out),
        Command::Eig { target, k, h, out } => commands::eig(&target, k, h, &out),
        Command::Slice2d {
            target,
            l,
            grid,
            seed,
            normalization,
            svg,
            out,
        } => commands::slice2d(&target, l, grid, seed, &normalization, svg, &out),
        Command::Slice1d {
            target,
            l,
            m,
            seed,
            normalization,
            out,
        } => commands::slice1d(&target, l, m, seed, &normalization, &out),
        Command::TrajRoughness { run, probe, out } => commands::traj_roughness(&run, &probe, &out),
        Command::RetrainFrom { config, checkpoint, tol } => commands::retrain_from(&config, &checkpoint, tol),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
