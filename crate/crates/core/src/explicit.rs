//! Explicit Euler DOM diffusion over ball arcs, coupled with the biology step,
//! plus negativity detection and mass reallocation.

use serde::{Deserialize, Serialize};

use crate::biology::{transform_all, transform_delta, BioParams, BioState, Species, SECONDS_PER_DAY};
use crate::error::{Error, Result, StepPhase};
use crate::network::PoreNetwork;
use crate::scheduler::{Scheme, Simulation, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coupling {
    /// Biology and diffusion increments computed from the same state.
    Synchronous,
    /// Diffusion sub-steps and the transformation step applied in sequence.
    #[default]
    Asynchronous,
}

/// Order of the two operators inside an asynchronous step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitOrder {
    #[default]
    DiffusionFirst,
    TransformFirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplicitConfig {
    /// Diffusion time step, seconds.
    pub dt_diffusion: f64,
    /// Transformation time step, seconds; a multiple of `dt_diffusion` when asynchronous.
    pub dt_transform: f64,
    /// Largest tolerated negativity as a fraction of the species total.
    pub p_neg: f64,
    pub max_backtracks: usize,
    pub coupling: Coupling,
    pub order: SplitOrder,
    /// Double the time steps again after this many clean steps. Off when `None`.
    pub redouble_after: Option<usize>,
}

impl Default for ExplicitConfig {
    fn default() -> Self {
        Self {
            dt_diffusion: 0.3,
            dt_transform: 10.0,
            p_neg: 0.01,
            max_backtracks: 20,
            coupling: Coupling::Asynchronous,
            order: SplitOrder::DiffusionFirst,
            redouble_after: None,
        }
    }
}

impl ExplicitConfig {
    pub fn dt_diffusion_days(&self) -> f64 {
        self.dt_diffusion / SECONDS_PER_DAY
    }

    pub fn dt_transform_days(&self) -> f64 {
        self.dt_transform / SECONDS_PER_DAY
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt_diffusion > 0.0 && self.dt_transform > 0.0) {
            return Err(Error::Config("time steps must be positive".into()));
        }
        if !(self.p_neg > 0.0 && self.p_neg < 1.0) {
            return Err(Error::Config(format!("p_neg must lie in (0, 1), got {}", self.p_neg)));
        }
        Ok(())
    }

    /// Logs settings that are legal but unusual.
    pub fn warn_unusual(&self) {
        if !(0.01..=0.05).contains(&self.p_neg) {
            log::warn!("p_neg = {} is outside the usual [0.01, 0.05] range", self.p_neg);
        }
        if self.coupling == Coupling::Asynchronous && !is_multiple(self.dt_transform, self.dt_diffusion) {
            log::warn!(
                "transformation step {} s is not a multiple of diffusion step {} s; using {} sub-steps of {} s",
                self.dt_transform,
                self.dt_diffusion,
                sub_step_count(self.dt_transform, self.dt_diffusion),
                self.dt_transform / sub_step_count(self.dt_transform, self.dt_diffusion) as f64
            );
        }
    }
}

fn is_multiple(len: f64, dt: f64) -> bool {
    let ratio = len / dt;
    (ratio - ratio.round()).abs() <= 1e-9 * ratio.max(1.0)
}

/// Number of equal sub-steps, none longer than `dt`, covering `len`.
pub(crate) fn sub_step_count(len: f64, dt: f64) -> usize {
    let ratio = len / dt;
    let n = if is_multiple(len, dt) { ratio.round() } else { ratio.ceil() };
    (n as usize).max(1)
}

/// Mass gained by node `i` from node `j` over `dt` under Fick's first law.
pub fn fick_flow(c_i: f64, c_j: f64, s_ij: f64, d_ij: f64, d_c: f64, dt: f64) -> f64 {
    -d_c * s_ij * (c_i - c_j) / d_ij * dt
}

/// Water-to-water arcs of a network, ready for repeated explicit steps.
#[derive(Debug, Clone)]
pub struct DiffusionOperator {
    links: Vec<Link>,
    volumes: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Link {
    i: usize,
    j: usize,
    area: f64,
    distance: f64,
}

impl DiffusionOperator {
    pub fn new(net: &PoreNetwork, water: &[bool]) -> Self {
        let links = net
            .arcs()
            .iter()
            .filter(|a| water[a.i] && water[a.j])
            .map(|a| Link {
                i: a.i,
                j: a.j,
                area: a.contact_area,
                distance: a.distance,
            })
            .collect();
        Self {
            links,
            volumes: net.volumes(),
        }
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    /// Per-node mass increments `delta m_i`; they sum to zero up to rounding.
    pub fn delta(&self, dom: &[f64], d_c: f64, dt: f64) -> Vec<f64> {
        let mut delta = Vec::new();
        self.delta_into(dom, d_c, dt, &mut delta);
        delta
    }

    fn delta_into(&self, dom: &[f64], d_c: f64, dt: f64, delta: &mut Vec<f64>) {
        delta.clear();
        delta.resize(dom.len(), 0.0);
        for l in &self.links {
            let c_i = dom[l.i] / self.volumes[l.i];
            let c_j = dom[l.j] / self.volumes[l.j];
            let f = fick_flow(c_i, c_j, l.area, l.distance, d_c, dt);
            delta[l.i] += f;
            delta[l.j] -= f;
        }
    }

    pub fn apply(&self, dom: &mut [f64], d_c: f64, dt: f64) {
        let mut scratch = Vec::new();
        self.apply_buffered(dom, d_c, dt, &mut scratch);
    }

    /// Same as [`DiffusionOperator::apply`], reusing `scratch` for the increments.
    pub fn apply_buffered(&self, dom: &mut [f64], d_c: f64, dt: f64, scratch: &mut Vec<f64>) {
        self.delta_into(dom, d_c, dt, scratch);
        for (m, d) in dom.iter_mut().zip(scratch.iter()) {
            *m += d;
        }
    }
}

/// One explicit diffusion step over water-water arcs. Output may contain
/// negative masses when `dt` is too large.
pub fn diffusion_step_explicit(
    dom: &[f64],
    net: &PoreNetwork,
    water: &[bool],
    d_c: f64,
    dt: f64,
) -> Vec<f64> {
    let mut out = dom.to_vec();
    DiffusionOperator::new(net, water).apply(&mut out, d_c, dt);
    out
}

/// Per-species negativity `H` (sum of clamped negatives, as a positive
/// number) and signed total `M`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Negativity {
    pub h: BioState,
    pub m: BioState,
}

impl Negativity {
    /// First species whose negativity reaches `p_neg` times its total.
    pub fn exceeded(&self, p_neg: f64) -> Option<Species> {
        Species::ALL.into_iter().find(|&s| {
            let h = self.h.get(s);
            h > 0.0 && h >= p_neg * self.m.get(s)
        })
    }

    pub fn is_zero(&self) -> bool {
        Species::ALL.iter().all(|&s| self.h.get(s) == 0.0)
    }
}

pub fn negativity(states: &[BioState]) -> Negativity {
    let mut out = Negativity::default();
    for x in states {
        for s in Species::ALL {
            let v = x.get(s);
            *out.m.get_mut(s) += v;
            if v < 0.0 {
                *out.h.get_mut(s) -= v;
            }
        }
    }
    out
}

/// Zeroes the negative entries of one species and debits `h` from the
/// strictly positive entries in proportion to their concentration.
///
/// Leaves `values` untouched on error.
pub fn reallocate_species(
    values: &mut [f64],
    volumes: &[f64],
    h: f64,
    species: Species,
) -> Result<()> {
    if h <= 0.0 {
        return Ok(());
    }
    let conc_sum: f64 = values
        .iter()
        .zip(volumes)
        .filter(|(&y, _)| y > 0.0)
        .map(|(&y, &v)| y / v)
        .sum();
    if conc_sum <= 0.0 {
        let node = values.iter().position(|&y| y < 0.0).unwrap_or(0);
        return Err(Error::RepairOverdraw { species, node });
    }
    let mut debits = vec![0.0; values.len()];
    for (k, (&y, &v)) in values.iter().zip(volumes).enumerate() {
        if y > 0.0 {
            let d = (y / v) / conc_sum * h;
            if d > y {
                return Err(Error::RepairOverdraw { species, node: k });
            }
            debits[k] = d;
        }
    }
    for (y, d) in values.iter_mut().zip(debits) {
        if *y < 0.0 {
            *y = 0.0;
        } else {
            *y = (*y - d).max(0.0);
        }
    }
    Ok(())
}

/// Applies [`reallocate_species`] to every species with nonzero negativity.
pub fn reallocate_negatives(
    states: &[BioState],
    volumes: &[f64],
    neg: &Negativity,
) -> Result<Vec<BioState>> {
    let mut out = states.to_vec();
    for s in Species::ALL {
        let h = neg.h.get(s);
        if h > 0.0 {
            let mut col: Vec<f64> = out.iter().map(|x| x.get(s)).collect();
            reallocate_species(&mut col, volumes, h, s)?;
            for (x, v) in out.iter_mut().zip(col) {
                *x.get_mut(s) = v;
            }
        }
    }
    Ok(out)
}

/// Checks a freshly computed state: rejects it when a species' negativity
/// reaches `p_neg` of its total, otherwise repairs small negatives in place.
/// Returns whether a repair happened.
pub(crate) fn police(
    states: &mut Vec<BioState>,
    volumes: &[f64],
    p_neg: f64,
    phase: StepPhase,
) -> Result<bool> {
    let neg = negativity(states);
    if let Some(species) = neg.exceeded(p_neg) {
        return Err(Error::BacktrackRequired {
            phase,
            species,
            negativity: neg.h.get(species),
            total: neg.m.get(species),
        });
    }
    if neg.is_zero() {
        return Ok(false);
    }
    *states = reallocate_negatives(states, volumes, &neg)?;
    Ok(true)
}

pub(crate) fn coupled_step(
    op: &DiffusionOperator,
    states: &[BioState],
    net: &PoreNetwork,
    water: &[bool],
    params: &BioParams,
    dt: f64,
) -> Vec<BioState> {
    let dom: Vec<f64> = states.iter().map(|x| x.dom).collect();
    let dm = op.delta(&dom, params.d_c, dt);
    states
        .iter()
        .zip(net.nodes())
        .zip(water)
        .zip(dm)
        .map(|(((x, n), &w), dm)| {
            if !w {
                return *x;
            }
            let db = transform_delta(x, n.volume, params, dt);
            let mut y = x.add(&db);
            y.dom += dm;
            y
        })
        .collect()
}

/// One synchronous step of length `dt` days: biology and diffusion increments
/// both evaluated on `states`, summed, then policed.
pub fn step_synchronous(
    states: &[BioState],
    net: &PoreNetwork,
    water: &[bool],
    params: &BioParams,
    cfg: &ExplicitConfig,
    dt: f64,
) -> Result<Vec<BioState>> {
    let op = DiffusionOperator::new(net, water);
    let mut y = coupled_step(&op, states, net, water, params, dt);
    police(&mut y, &net.volumes(), cfg.p_neg, StepPhase::Coupled)?;
    Ok(y)
}

/// One asynchronous step of `cfg.dt_transform`: diffusion sub-steps of
/// `cfg.dt_diffusion` and one transformation step, in `cfg.order`, each
/// followed by negativity policing.
pub fn step_asynchronous(
    states: &[BioState],
    net: &PoreNetwork,
    water: &[bool],
    params: &BioParams,
    cfg: &ExplicitConfig,
) -> Result<Vec<BioState>> {
    let n = sub_step_count(cfg.dt_transform, cfg.dt_diffusion);
    let op = DiffusionOperator::new(net, water);
    let volumes = net.volumes();
    let dt_bio = cfg.dt_transform_days();
    let dt_diff = dt_bio / n as f64;

    let mut y = states.to_vec();
    if cfg.order == SplitOrder::TransformFirst {
        y = transform_all(&y, net, water, params, dt_bio);
        police(&mut y, &volumes, cfg.p_neg, StepPhase::Transformation)?;
    }
    let mut dom: Vec<f64> = y.iter().map(|x| x.dom).collect();
    for _ in 0..n {
        op.apply(&mut dom, params.d_c, dt_diff);
        for (x, &m) in y.iter_mut().zip(&dom) {
            x.dom = m;
        }
        police(&mut y, &volumes, cfg.p_neg, StepPhase::Diffusion)?;
        for (m, x) in dom.iter_mut().zip(&y) {
            *m = x.dom;
        }
    }
    if cfg.order == SplitOrder::DiffusionFirst {
        y = transform_all(&y, net, water, params, dt_bio);
        police(&mut y, &volumes, cfg.p_neg, StepPhase::Transformation)?;
    }
    Ok(y)
}

/// Advances `states` to `t_end` days with the explicit scheme, halving the
/// time step whenever a step is rejected for negativity.
pub fn run_with_backtracking(
    states: Vec<BioState>,
    net: &PoreNetwork,
    water: &[bool],
    params: &BioParams,
    cfg: &ExplicitConfig,
    t_end: f64,
    sample_every: f64,
) -> Result<Trajectory> {
    if !(t_end > 0.0) {
        return Err(Error::Config(format!("end time must be positive, got {t_end}")));
    }
    let mut sim = Simulation::new(net, water.to_vec(), states, *params, Scheme::Explicit(*cfg))?;
    sim.run(t_end, sample_every)
}
