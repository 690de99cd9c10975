//! Pore-network simulation of microbial decomposition in soil.
//!
//! The pore space is a graph of balls. Dissolved organic matter diffuses
//! along ball contacts with an explicit or implicit Euler scheme while a
//! five-pool biology model transforms carbon inside every water-filled ball.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod biology;
pub mod calibration;
pub mod drainage;
pub mod error;
pub mod explicit;
pub mod implicit;
pub mod linalg;
pub mod network;
pub mod scenario;
pub mod scheduler;
pub mod synthetic;

pub use biology::{transform_all, transform_node, BioParams, BioState, Species, SECONDS_PER_DAY};
pub use calibration::{cosine_similarity, fit_alpha, plane_profile, FitConfig, FitResult, MassProfile};
pub use drainage::{drain_to_saturation, DrainageResult};
pub use error::{Error, Result, StepPhase};
pub use explicit::{
    diffusion_step_explicit, fick_flow, negativity, reallocate_negatives, run_with_backtracking, step_asynchronous,
    step_synchronous, Coupling, ExplicitConfig, SplitOrder,
};
pub use implicit::{assemble, diffusion_step_implicit, ImplicitConfig, ImplicitDiffusion, ImplicitSystem};
pub use linalg::{matvec, pcg_solve, Preconditioner, SolverConfig, SparseSymmetricMatrix};
pub use network::{
    compute_contact_area, connected_components, load_network, save_network, AdjacencyArc, BallNode, PoreNetwork,
};
pub use scenario::{run_scenario, Scenario, TrajectoryRecord};
pub use scheduler::{Scheme, Simulation, Trajectory};
pub use synthetic::{generate_synthetic_network, SyntheticKind};
