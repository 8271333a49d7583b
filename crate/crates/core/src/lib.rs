//! Loss-landscape analysis for neural-network Poisson solvers.
//!
//! Networks are trained under the least-squares residual loss (DGM) or the
//! variational loss (DRM); the landscape around any parameter point is then
//! characterized by a roughness index built from normalized total variations
//! of random filter-normalized 1D projections, by Hessian eigenvalues, and by
//! 1D/2D slices.

pub mod contour;
pub mod error;
pub mod io;
pub mod jet;
pub mod landscape;
pub mod linalg;
pub mod network;
pub mod optimize;
pub mod pde;
pub mod rng;
pub mod tape;

pub use error::{Error, Result};
pub use io::Checkpoint;
pub use jet::{Activation, Jet2};
pub use landscape::{Normalization, ProbeConfig, RoughnessReport};
pub use network::{Ansatz, FilterLayout, NetworkKind, NetworkSpec, ParamVector};
pub use optimize::{AdamConfig, AdamState, QuadPolicy, SnapshotSchedule, TrainConfig, Trajectory};
pub use pde::{LossKind, PdeLoss, Problem, ProblemKind, QuadSpec, QuadratureSet};
pub use tape::{GradResult, JetEval, JetScope, Tape, Var};
