//! Time stepping that couples the biology with either diffusion scheme.
//!
//! A macro step covers one transformation step. In asynchronous modes it is
//! made of diffusion sub-steps plus one biology step; in the synchronous mode
//! both operators share a single step. A rejected step is retried from its
//! starting state with the offending time step halved, and the halved step is
//! kept for the rest of the run.

use std::collections::HashMap;

use crate::biology::{totals, transform_all, BioParams, BioState, Species};
use crate::error::{Error, Result, StepPhase};
use crate::explicit::{
    coupled_step, police, reallocate_species, sub_step_count, Coupling, DiffusionOperator, ExplicitConfig, SplitOrder,
};
use crate::implicit::{ImplicitConfig, ImplicitDiffusion, SolveStats};
use crate::linalg::SolverConfig;
use crate::network::PoreNetwork;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scheme {
    Explicit(ExplicitConfig),
    Implicit(ImplicitConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    ExplicitSync,
    ExplicitAsync,
    ImplicitAsync,
}

/// Snapshot of global pool totals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub time_days: f64,
    pub totals: BioState,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub final_states: Vec<BioState>,
    pub stats: RunStats,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunStats {
    /// Committed macro steps.
    pub steps: usize,
    pub backtracks: usize,
    /// Steps whose small negatives were repaired by reallocation.
    pub reallocations: usize,
    pub solver: SolveStats,
    /// Largest relative change of the total mass over one committed step.
    pub max_step_drift: f64,
}

pub struct Simulation<'a> {
    net: &'a PoreNetwork,
    water: Vec<bool>,
    volumes: Vec<f64>,
    params: BioParams,
    mode: Mode,
    order: SplitOrder,
    p_neg: f64,
    max_backtracks: usize,
    redouble_after: Option<usize>,
    base_dt_diff: f64,
    base_dt_bio: f64,
    dt_diff: f64,
    dt_bio: f64,
    explicit_op: Option<DiffusionOperator>,
    implicit: HashMap<u64, ImplicitDiffusion>,
    solver: SolverConfig,
    states: Vec<BioState>,
    time: f64,
    clean_steps: usize,
    /// Halvings not yet undone by re-doubling.
    depth: usize,
    stats: RunStats,
}

struct Rejection {
    phase: StepPhase,
    error: Error,
}

fn on_phase<T>(phase: StepPhase, r: Result<T>) -> std::result::Result<T, Rejection> {
    r.map_err(|error| Rejection { phase, error })
}

/// Negativity check and repair restricted to the DOM pool.
fn police_dom(dom: &mut [f64], volumes: &[f64], p_neg: f64) -> Result<bool> {
    let mut h = 0.0;
    let mut m = 0.0;
    for &v in dom.iter() {
        m += v;
        if v < 0.0 {
            h -= v;
        }
    }
    if h == 0.0 {
        return Ok(false);
    }
    if h >= p_neg * m {
        return Err(Error::BacktrackRequired {
            phase: StepPhase::Diffusion,
            species: Species::Dom,
            negativity: h,
            total: m,
        });
    }
    reallocate_species(dom, volumes, h, Species::Dom)?;
    Ok(true)
}

impl<'a> Simulation<'a> {
    /// `states` must have one entry per node; air-filled balls are zeroed.
    pub fn new(
        net: &'a PoreNetwork,
        water: Vec<bool>,
        mut states: Vec<BioState>,
        params: BioParams,
        scheme: Scheme,
    ) -> Result<Self> {
        if water.len() != net.node_count() {
            return Err(Error::DimensionMismatch {
                expected: net.node_count(),
                got: water.len(),
            });
        }
        if states.len() != net.node_count() {
            return Err(Error::DimensionMismatch {
                expected: net.node_count(),
                got: states.len(),
            });
        }
        params.validate()?;
        for (k, x) in states.iter_mut().enumerate() {
            if !x.is_nonnegative() || !x.total().is_finite() {
                return Err(Error::Domain(format!("initial state of node {k} is negative or not finite")));
            }
            if !water[k] {
                *x = BioState::ZERO;
            }
        }

        let (mode, order, p_neg, max_backtracks, redouble_after, dt_diff, dt_bio, solver) = match scheme {
            Scheme::Explicit(c) => {
                c.validate()?;
                c.warn_unusual();
                let mode = match c.coupling {
                    Coupling::Synchronous => Mode::ExplicitSync,
                    Coupling::Asynchronous => Mode::ExplicitAsync,
                };
                let dt_bio = if mode == Mode::ExplicitSync {
                    c.dt_diffusion_days()
                } else {
                    c.dt_transform_days()
                };
                (
                    mode,
                    c.order,
                    c.p_neg,
                    c.max_backtracks,
                    c.redouble_after,
                    c.dt_diffusion_days(),
                    dt_bio,
                    SolverConfig::default(),
                )
            }
            Scheme::Implicit(c) => {
                c.validate()?;
                (
                    Mode::ImplicitAsync,
                    SplitOrder::DiffusionFirst,
                    c.p_neg,
                    c.max_backtracks,
                    c.redouble_after,
                    c.dt_diffusion_days().min(c.dt_transform_days()),
                    c.dt_transform_days(),
                    c.solver(),
                )
            }
        };

        let explicit_op = match mode {
            Mode::ImplicitAsync => None,
            _ => Some(DiffusionOperator::new(net, &water)),
        };

        Ok(Self {
            net,
            volumes: net.volumes(),
            water,
            params,
            mode,
            order,
            p_neg,
            max_backtracks,
            redouble_after,
            base_dt_diff: dt_diff,
            base_dt_bio: dt_bio,
            dt_diff,
            dt_bio,
            explicit_op,
            implicit: HashMap::new(),
            solver,
            states,
            time: 0.0,
            clean_steps: 0,
            depth: 0,
            stats: RunStats::default(),
        })
    }

    pub fn time_days(&self) -> f64 {
        self.time
    }

    pub fn states(&self) -> &[BioState] {
        &self.states
    }

    pub fn into_states(self) -> Vec<BioState> {
        self.states
    }

    pub fn water(&self) -> &[bool] {
        &self.water
    }

    pub fn totals(&self) -> BioState {
        totals(&self.states)
    }

    pub fn stats(&self) -> &RunStats {
        &self.stats
    }

    /// Current diffusion step, days.
    pub fn dt_diffusion(&self) -> f64 {
        self.dt_diff
    }

    /// Current transformation (macro) step, days.
    pub fn dt_transform(&self) -> f64 {
        self.dt_bio
    }

    /// Commits one macro step of the current nominal length and returns its length.
    pub fn step(&mut self) -> Result<f64> {
        self.step_capped(f64::INFINITY)
    }

    /// Advances to exactly `t_end` days, shortening the final step if needed.
    pub fn advance_to(&mut self, t_end: f64) -> Result<()> {
        while self.time < t_end {
            let remaining = t_end - self.time;
            if remaining <= 1e-12 * t_end.abs().max(1.0) {
                self.time = t_end;
                break;
            }
            let len = self.step_capped(remaining)?;
            if len >= remaining {
                self.time = t_end;
            }
        }
        Ok(())
    }

    /// Runs to `t_end` days, sampling global totals every `sample_every` days
    /// (plus the start and end points).
    pub fn run(&mut self, t_end: f64, sample_every: f64) -> Result<Trajectory> {
        let mut samples = Vec::new();
        self.run_with(t_end, sample_every, |s| {
            samples.push(*s);
            Ok(())
        })?;
        Ok(Trajectory {
            samples,
            final_states: self.states.clone(),
            stats: self.stats,
        })
    }

    /// Like [`Simulation::run`] but hands each sample to `sink` as it is taken.
    pub fn run_with<F>(&mut self, t_end: f64, sample_every: f64, mut sink: F) -> Result<()>
    where
        F: FnMut(&Sample) -> Result<()>,
    {
        if !(sample_every > 0.0) {
            return Err(Error::Config(format!("sampling interval must be positive, got {sample_every}")));
        }
        let start = self.time;
        sink(&Sample {
            time_days: self.time,
            totals: self.totals(),
        })?;
        let mut k = 1usize;
        loop {
            let target = (start + k as f64 * sample_every).min(t_end);
            self.advance_to(target)?;
            sink(&Sample {
                time_days: self.time,
                totals: self.totals(),
            })?;
            if target >= t_end {
                break;
            }
            k += 1;
        }
        Ok(())
    }

    fn step_capped(&mut self, cap: f64) -> Result<f64> {
        loop {
            let len = self.dt_bio.min(cap);
            match self.try_step(len) {
                Ok((next, repaired)) => {
                    let before = totals(&self.states).total();
                    let after = totals(&next).total();
                    if before != 0.0 {
                        let drift = ((after - before) / before).abs();
                        self.stats.max_step_drift = self.stats.max_step_drift.max(drift);
                    }
                    self.states = next;
                    self.time += len;
                    self.stats.steps += 1;
                    if repaired {
                        self.stats.reallocations += 1;
                    }
                    self.maybe_redouble();
                    return Ok(len);
                }
                Err(Rejection { phase, error }) if error.needs_smaller_step() => {
                    if self.depth >= self.max_backtracks {
                        return Err(Error::StepCollapse {
                            backtracks: self.stats.backtracks,
                            time_days: self.time,
                        });
                    }
                    self.stats.backtracks += 1;
                    self.depth += 1;
                    self.clean_steps = 0;
                    self.halve(phase);
                    log::debug!(
                        "backtrack at t = {} days during {phase:?}: {error}; dt_diff = {:e}, dt_bio = {:e}",
                        self.time,
                        self.dt_diff,
                        self.dt_bio
                    );
                }
                Err(Rejection { error, .. }) => return Err(error),
            }
        }
    }

    fn halve(&mut self, phase: StepPhase) {
        match (self.mode, phase) {
            (Mode::ExplicitSync, _) | (_, StepPhase::Coupled) => {
                self.dt_diff /= 2.0;
                self.dt_bio = self.dt_diff;
            }
            (_, StepPhase::Diffusion) => self.dt_diff /= 2.0,
            (_, StepPhase::Transformation) => {
                self.dt_bio /= 2.0;
                self.dt_diff = self.dt_diff.min(self.dt_bio);
            }
        }
    }

    fn maybe_redouble(&mut self) {
        self.clean_steps += 1;
        let Some(after) = self.redouble_after else {
            return;
        };
        if self.clean_steps >= after && (self.dt_diff < self.base_dt_diff || self.dt_bio < self.base_dt_bio) {
            self.dt_diff = (self.dt_diff * 2.0).min(self.base_dt_diff);
            self.dt_bio = (self.dt_bio * 2.0).min(self.base_dt_bio);
            if self.mode == Mode::ExplicitSync {
                self.dt_bio = self.dt_diff;
            }
            self.clean_steps = 0;
            self.depth = self.depth.saturating_sub(1);
        }
    }

    fn try_step(&mut self, len: f64) -> std::result::Result<(Vec<BioState>, bool), Rejection> {
        let mut repaired = false;
        let net = self.net;
        match self.mode {
            Mode::ExplicitSync => {
                let op = self.explicit_op.as_ref().expect("explicit operator");
                let mut y = coupled_step(op, &self.states, net, &self.water, &self.params, len);
                repaired |= on_phase(StepPhase::Coupled, police(&mut y, &self.volumes, self.p_neg, StepPhase::Coupled))?;
                Ok((y, repaired))
            }
            Mode::ExplicitAsync | Mode::ImplicitAsync => {
                let mut y = self.states.clone();
                if self.order == SplitOrder::TransformFirst {
                    repaired |= self.transform(&mut y, len)?;
                }
                let n = sub_step_count(len, self.dt_diff);
                let sub = len / n as f64;
                let mut dom: Vec<f64> = y.iter().map(|x| x.dom).collect();
                if self.mode == Mode::ImplicitAsync {
                    let key = sub.to_bits();
                    if !self.implicit.contains_key(&key) {
                        let sys = on_phase(
                            StepPhase::Diffusion,
                            ImplicitDiffusion::new(net, &self.water, self.params.d_c, sub),
                        )?;
                        self.implicit.insert(key, sys);
                    }
                    let sys = &self.implicit[&key];
                    for _ in 0..n {
                        let s = on_phase(StepPhase::Diffusion, sys.step(&mut dom, &self.solver))?;
                        self.stats.solver.merge(&s);
                    }
                    for (x, &m) in y.iter_mut().zip(&dom) {
                        x.dom = m;
                    }
                    repaired |= on_phase(
                        StepPhase::Diffusion,
                        police(&mut y, &self.volumes, self.p_neg, StepPhase::Diffusion),
                    )?;
                } else {
                    let op = self.explicit_op.as_ref().expect("explicit operator");
                    let mut scratch = Vec::with_capacity(dom.len());
                    for _ in 0..n {
                        op.apply_buffered(&mut dom, self.params.d_c, sub, &mut scratch);
                        // only DOM moved, the other pools are still clean
                        repaired |= on_phase(StepPhase::Diffusion, police_dom(&mut dom, &self.volumes, self.p_neg))?;
                    }
                    for (x, &m) in y.iter_mut().zip(&dom) {
                        x.dom = m;
                    }
                }
                if self.order == SplitOrder::DiffusionFirst {
                    repaired |= self.transform(&mut y, len)?;
                }
                Ok((y, repaired))
            }
        }
    }

    fn transform(&self, y: &mut Vec<BioState>, dt: f64) -> std::result::Result<bool, Rejection> {
        *y = transform_all(y, self.net, &self.water, &self.params, dt);
        on_phase(
            StepPhase::Transformation,
            police(y, &self.volumes, self.p_neg, StepPhase::Transformation),
        )
    }
}
