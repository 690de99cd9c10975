//! Implicit Euler diffusion: one symmetric positive-definite solve per
//! connected water component and time step.
//!
//! With `theta_ij = D_c * s_ij / d_ij * dt`, the new concentrations `u` solve
//! `A u = m`, where `m` holds the current masses and
//! `A[i][i] = v_i + sum_j theta_ij`, `A[i][j] = -theta_ij`. Every row of `A`
//! sums to `v_i`, so `sum_i v_i u_i = sum_i m_i`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::biology::SECONDS_PER_DAY;
use crate::error::{Error, Result};
use crate::linalg::{pcg_solve_from, SolverConfig, SparseSymmetricMatrix};
use crate::network::{connected_components, PoreNetwork};

/// Relative drift above which the solved masses are rescaled to the input total.
pub const CONSERVATION_RESCALE_THRESHOLD: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImplicitConfig {
    /// Diffusion time step, seconds.
    pub dt_diffusion: f64,
    /// Transformation time step, seconds.
    pub dt_transform: f64,
    /// Negativity tolerance for the explicit biology step.
    pub p_neg: f64,
    pub max_backtracks: usize,
    pub cg_tol: f64,
    pub cg_max_iter: Option<usize>,
    /// Double the time steps again after this many clean steps. Off when `None`.
    pub redouble_after: Option<usize>,
}

impl Default for ImplicitConfig {
    fn default() -> Self {
        Self {
            dt_diffusion: 10.0,
            dt_transform: 10.0,
            p_neg: 0.01,
            max_backtracks: 20,
            cg_tol: 1e-10,
            cg_max_iter: None,
            redouble_after: None,
        }
    }
}

impl ImplicitConfig {
    pub fn dt_diffusion_days(&self) -> f64 {
        self.dt_diffusion / SECONDS_PER_DAY
    }

    pub fn dt_transform_days(&self) -> f64 {
        self.dt_transform / SECONDS_PER_DAY
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            tol: self.cg_tol,
            max_iter: self.cg_max_iter,
            ..SolverConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt_diffusion > 0.0 && self.dt_transform > 0.0) {
            return Err(Error::Config("time steps must be positive".into()));
        }
        if !(self.cg_tol > 0.0) {
            return Err(Error::Config(format!("cg tolerance must be positive, got {}", self.cg_tol)));
        }
        if !(self.p_neg > 0.0 && self.p_neg < 1.0) {
            return Err(Error::Config(format!("p_neg must lie in (0, 1), got {}", self.p_neg)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ImplicitSystem {
    pub matrix: SparseSymmetricMatrix,
    /// Ball volumes in component order.
    pub volumes: Vec<f64>,
    /// Global node id of each component-local index.
    pub node_order: Vec<usize>,
    /// `(local i, local j, theta_ij)` for each arc inside the component.
    pub theta: Vec<(usize, usize, f64)>,
}

impl ImplicitSystem {
    pub fn dim(&self) -> usize {
        self.node_order.len()
    }
}

/// Assembles the implicit system of one connected water component.
pub fn assemble(
    net: &PoreNetwork,
    water: &[bool],
    component: &[usize],
    d_c: f64,
    dt: f64,
) -> Result<ImplicitSystem> {
    let mut local = vec![usize::MAX; net.node_count()];
    for (k, &g) in component.iter().enumerate() {
        local[g] = k;
    }
    assemble_indexed(net, water, component, &local, d_c, dt)
}

fn assemble_indexed(
    net: &PoreNetwork,
    water: &[bool],
    component: &[usize],
    local: &[usize],
    d_c: f64,
    dt: f64,
) -> Result<ImplicitSystem> {
    if !(dt >= 0.0) || !(d_c >= 0.0) {
        return Err(Error::Domain(format!(
            "assembly needs dt >= 0 and d_c >= 0, got dt = {dt}, d_c = {d_c}"
        )));
    }
    let n = component.len();
    let volumes: Vec<f64> = component.iter().map(|&g| net.node(g).volume).collect();
    let mut theta = Vec::new();
    let mut row_offsets = Vec::with_capacity(n + 1);
    let mut col_indices = Vec::new();
    let mut values = Vec::new();
    row_offsets.push(0);

    for (li, &g) in component.iter().enumerate() {
        let mut row: Vec<(usize, f64)> = Vec::new();
        let mut theta_sum = 0.0;
        for &k in net.incident_arcs(g) {
            let arc = &net.arcs()[k];
            let other = arc.other(g);
            if !water[g] || !water[other] {
                continue;
            }
            let lj = local[other];
            if lj == usize::MAX || component[lj] != other {
                continue;
            }
            let t = d_c * (arc.contact_area / arc.distance) * dt;
            theta_sum += t;
            row.push((lj, -t));
            if li < lj {
                theta.push((li, lj, t));
            }
        }
        row.push((li, volumes[li] + theta_sum));
        row.sort_by_key(|&(j, _)| j);
        for (j, v) in row {
            col_indices.push(j);
            values.push(v);
        }
        row_offsets.push(col_indices.len());
    }

    let matrix = SparseSymmetricMatrix::from_csr(n, row_offsets, col_indices, values)?;
    debug_assert!((0..n).all(|i| {
        let (_, vals) = matrix.row(i);
        let s: f64 = vals.iter().sum();
        (s - volumes[i]).abs() <= 1e-12 * matrix.diagonal()[i]
    }));
    Ok(ImplicitSystem {
        matrix,
        volumes,
        node_order: component.to_vec(),
        theta,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImplicitStep {
    pub masses: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    /// Relative mass drift of the raw solve, before rescaling.
    pub drift: f64,
}

/// One implicit diffusion step on a single component. `dom` holds the
/// component's masses in `system.node_order`.
pub fn diffusion_step_implicit(
    dom: &[f64],
    system: &ImplicitSystem,
    solver: &SolverConfig,
) -> Result<ImplicitStep> {
    let n = system.dim();
    if dom.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: dom.len(),
        });
    }
    let guess: Vec<f64> = dom.iter().zip(&system.volumes).map(|(m, v)| m / v).collect();
    let sol = pcg_solve_from(
        &system.matrix,
        dom,
        Some(&guess),
        solver.tol,
        solver.max_iter_for(n),
        solver.preconditioner,
    )?;

    let old_total: f64 = dom.iter().sum();
    let mut masses: Vec<f64> = sol
        .x
        .iter()
        .zip(&system.volumes)
        .map(|(u, v)| u * v)
        .collect();
    let raw_total: f64 = masses.iter().sum();
    let drift = if old_total != 0.0 {
        (raw_total - old_total) / old_total.abs()
    } else {
        raw_total
    };
    let mut clamped = false;
    for m in &mut masses {
        if *m < 0.0 {
            *m = 0.0;
            clamped = true;
        }
    }
    if clamped || drift.abs() > CONSERVATION_RESCALE_THRESHOLD {
        let total: f64 = masses.iter().sum();
        if total > 0.0 && old_total > 0.0 {
            let scale = old_total / total;
            for m in &mut masses {
                *m *= scale;
            }
        }
        log::trace!("implicit step drift {drift:e} rescaled (clamped: {clamped})");
    }
    Ok(ImplicitStep {
        masses,
        iterations: sol.iterations,
        residual: sol.residual,
        drift,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SolveStats {
    pub solves: usize,
    pub total_iterations: usize,
    pub max_iterations: usize,
    pub max_drift: f64,
}

impl SolveStats {
    pub fn merge(&mut self, other: &SolveStats) {
        self.solves += other.solves;
        self.total_iterations += other.total_iterations;
        self.max_iterations = self.max_iterations.max(other.max_iterations);
        self.max_drift = self.max_drift.max(other.max_drift);
    }
}

/// Implicit systems for every multi-node water component at a fixed `dt`.
/// Geometry is static, so one instance serves every step of that length.
#[derive(Debug, Clone)]
pub struct ImplicitDiffusion {
    systems: Vec<ImplicitSystem>,
    dt: f64,
}

impl ImplicitDiffusion {
    pub fn new(net: &PoreNetwork, water: &[bool], d_c: f64, dt: f64) -> Result<Self> {
        let mut local = vec![usize::MAX; net.node_count()];
        let mut systems = Vec::new();
        for comp in connected_components(net, water) {
            if comp.len() < 2 {
                continue;
            }
            for (k, &g) in comp.iter().enumerate() {
                local[g] = k;
            }
            systems.push(assemble_indexed(net, water, &comp, &local, d_c, dt)?);
        }
        Ok(Self { systems, dt })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn systems(&self) -> &[ImplicitSystem] {
        &self.systems
    }

    /// Advances the global DOM vector by one step; isolated balls keep their mass.
    pub fn step(&self, dom: &mut [f64], solver: &SolverConfig) -> Result<SolveStats> {
        let results: Vec<Result<ImplicitStep>> = self
            .systems
            .par_iter()
            .map(|sys| {
                let local: Vec<f64> = sys.node_order.iter().map(|&g| dom[g]).collect();
                diffusion_step_implicit(&local, sys, solver)
            })
            .collect();
        let mut stats = SolveStats::default();
        for (sys, res) in self.systems.iter().zip(results) {
            let step = res?;
            for (&g, m) in sys.node_order.iter().zip(step.masses) {
                dom[g] = m;
            }
            stats.solves += 1;
            stats.total_iterations += step.iterations;
            stats.max_iterations = stats.max_iterations.max(step.iterations);
            stats.max_drift = stats.max_drift.max(step.drift.abs());
        }
        Ok(stats)
    }
}
