//! Scenario files, initial placements, and the end-to-end run with CSV output.
//!
//! A scenario is a JSON document. Every field has a default; the `paper-2021`
//! preset fills the published incubation setup and only needs a network.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::biology::{BioParams, BioState};
use crate::calibration::{plane_profile_with, slab_placement, MassProfile, ProfileBinning};
use crate::drainage::drain_to_saturation;
use crate::error::{Error, Result};
use crate::explicit::{Coupling, ExplicitConfig, SplitOrder};
use crate::implicit::ImplicitConfig;
use crate::network::{load_network_with, LoadOptions, NetworkFormat, PoreNetwork};
use crate::scheduler::{RunStats, Sample, Scheme, Simulation};
use crate::synthetic::{generate_synthetic_network, SyntheticKind};

/// Dry mass of one bacterium, grams.
pub const BACTERIUM_MASS_G: f64 = 2e-12;

/// Voxel edge of the 24 um CT grid the preset rates were fitted on.
pub const PRESET_VOXEL_EDGE_UM: f64 = 24.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeKind {
    ExplicitSync,
    ExplicitAsync,
    #[default]
    ImplicitAsync,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MassUnit {
    G,
    #[default]
    Mg,
    Ug,
}

impl MassUnit {
    pub fn per_gram(self) -> f64 {
        match self {
            MassUnit::G => 1.0,
            MassUnit::Mg => 1e3,
            MassUnit::Ug => 1e6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BallChoice {
    Id(i64),
    /// The string `"random"`.
    Random(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DomPlacement {
    /// Same concentration in every water-filled ball.
    UniformConcentration { total: f64 },
    SingleBall { ball: BallChoice, total: f64 },
    /// Balls meeting `[z_min, z_max)`, proportional to volume.
    PlaneSlab { total: f64, z_min: f64, z_max: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MbPlacement {
    None,
    /// `count` random water balls sharing `total` equally.
    Spots { count: usize, total: f64 },
    /// Like `Spots`, with the total given as a bacteria count.
    Bacteria {
        spots: usize,
        bacteria: f64,
        #[serde(default = "default_bacterium_mass")]
        bacterium_mass_g: f64,
    },
    /// `(ball id, mass)` pairs.
    ExplicitList { entries: Vec<(i64, f64)> },
}

fn default_bacterium_mass() -> f64 {
    BACTERIUM_MASS_G
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub size: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputConfig {
    pub csv: Option<PathBuf>,
    /// Final DOM plane profile, one value per line.
    pub profile: Option<PathBuf>,
    pub profile_planes: usize,
    pub profile_binning: ProfileBinning,
    pub sample_every_hours: f64,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            csv: None,
            profile: None,
            profile_planes: 300,
            profile_binning: ProfileBinning::Center,
            sample_every_hours: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    /// Network file in the text ball format.
    pub network: Option<PathBuf>,
    /// Generated network, used when `network` is absent.
    pub synthetic: Option<SyntheticSpec>,
    /// Contact factor applied to arcs without an explicit area.
    pub contact_factor: f64,
    pub saturation: f64,
    pub scheme: SchemeKind,
    pub params: BioParams,
    /// Seconds.
    pub dt_diffusion: f64,
    /// Seconds.
    pub dt_transform: f64,
    pub p_neg: f64,
    pub max_backtracks: usize,
    /// Restore a halved step after this many clean steps. Off by default.
    pub redouble_after: Option<usize>,
    pub split_order: SplitOrder,
    pub cg_tol: f64,
    pub cg_max_iter: Option<usize>,
    pub t_end_hours: Option<f64>,
    pub t_end_days: Option<f64>,
    pub mass_unit: MassUnit,
    /// Voxel edge length in micrometres. When set, `params.kappa_b` is read
    /// as grams of carbon per gram of water and converted to mass per voxel^3
    /// assuming water density 1 g/cm^3. When absent it is used as given.
    pub voxel_edge_um: Option<f64>,
    pub dom_placement: DomPlacement,
    pub mb_placement: MbPlacement,
    pub output: OutputConfig,
    pub seed: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            network: None,
            synthetic: None,
            contact_factor: 0.6,
            saturation: 1.0,
            scheme: SchemeKind::ImplicitAsync,
            params: BioParams::default(),
            dt_diffusion: 10.0,
            dt_transform: 10.0,
            p_neg: 0.01,
            max_backtracks: 20,
            redouble_after: None,
            split_order: SplitOrder::DiffusionFirst,
            cg_tol: 1e-10,
            cg_max_iter: None,
            t_end_hours: None,
            t_end_days: None,
            mass_unit: MassUnit::Mg,
            voxel_edge_um: None,
            dom_placement: DomPlacement::UniformConcentration { total: 0.0 },
            mb_placement: MbPlacement::None,
            output: OutputConfig::default(),
            seed: 0,
        }
    }
}

impl Scenario {
    /// Five-day incubation: 0.2895 mg DOM at uniform concentration and
    /// 5.2e7 bacteria over 1000 spots, implicit diffusion at 10 s.
    pub fn paper_2021() -> Self {
        Self {
            t_end_days: Some(5.0),
            voxel_edge_um: Some(PRESET_VOXEL_EDGE_UM),
            dom_placement: DomPlacement::UniformConcentration { total: 0.2895 },
            mb_placement: MbPlacement::Bacteria {
                spots: 1000,
                bacteria: 5.2e7,
                bacterium_mass_g: BACTERIUM_MASS_G,
            },
            ..Self::default()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "paper-2021" => Ok(Self::paper_2021()),
            _ => Err(Error::Config(format!("unknown preset {name:?}"))),
        }
    }

    /// Parses a scenario file; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut scn = Scenario::from_json(&fs::read_to_string(path)?)?;
        if let Some(dir) = path.parent() {
            let fix = |p: &mut Option<PathBuf>| {
                if let Some(q) = p {
                    if q.is_relative() {
                        *q = dir.join(&*q);
                    }
                }
            };
            fix(&mut scn.network);
            fix(&mut scn.output.csv);
            fix(&mut scn.output.profile);
        }
        Ok(scn)
    }

    /// Parses a scenario from JSON text. Paths are kept as written.
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Rates handed to the engine, with `kappa_b` in mass per voxel^3.
    pub fn effective_params(&self) -> BioParams {
        let mut p = self.params;
        if let Some(edge_um) = self.voxel_edge_um {
            let edge_cm = edge_um * 1e-4;
            let water_g = edge_cm * edge_cm * edge_cm;
            p.kappa_b *= water_g * self.mass_unit.per_gram();
        }
        p
    }

    /// Simulated duration in days.
    pub fn t_end(&self) -> Result<f64> {
        match (self.t_end_hours, self.t_end_days) {
            (Some(h), None) => Ok(h / 24.0),
            (None, Some(d)) => Ok(d),
            (None, None) => Err(Error::Config("scenario needs t_end_hours or t_end_days".into())),
            (Some(_), Some(_)) => Err(Error::Config("give only one of t_end_hours and t_end_days".into())),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.t_end()?;
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::Config(format!("end time must be positive, got {t} days")));
        }
        if !(self.saturation > 0.0 && self.saturation <= 1.0) {
            return Err(Error::Config(format!("saturation must lie in (0, 1], got {}", self.saturation)));
        }
        if !(self.contact_factor > 0.0 && self.contact_factor <= 1.0) {
            return Err(Error::Config(format!(
                "contact factor must lie in (0, 1], got {}",
                self.contact_factor
            )));
        }
        if !(self.output.sample_every_hours > 0.0) {
            return Err(Error::Config("sampling interval must be positive".into()));
        }
        if self.network.is_none() && self.synthetic.is_none() {
            return Err(Error::Config("scenario needs a network file or a synthetic network".into()));
        }
        let dom_total = match &self.dom_placement {
            DomPlacement::UniformConcentration { total }
            | DomPlacement::SingleBall { total, .. }
            | DomPlacement::PlaneSlab { total, .. } => *total,
        };
        if let DomPlacement::SingleBall {
            ball: BallChoice::Random(s),
            ..
        } = &self.dom_placement
        {
            if s != "random" {
                return Err(Error::Config(format!("ball must be an id or \"random\", got {s:?}")));
            }
        }
        check_mass("DOM total", dom_total)?;
        match &self.mb_placement {
            MbPlacement::None => {}
            MbPlacement::Spots { count, total } => {
                check_spots(*count)?;
                check_mass("MB total", *total)?;
            }
            MbPlacement::Bacteria {
                spots,
                bacteria,
                bacterium_mass_g,
            } => {
                check_spots(*spots)?;
                check_mass("bacteria count", *bacteria)?;
                check_mass("bacterium mass", *bacterium_mass_g)?;
            }
            MbPlacement::ExplicitList { entries } => {
                for &(_, m) in entries {
                    check_mass("MB entry", m)?;
                }
            }
        }
        self.params.validate()?;
        if self.redouble_after == Some(0) {
            return Err(Error::Config("redouble_after must be at least 1".into()));
        }
        if let Some(e) = self.voxel_edge_um {
            if !(e > 0.0) || !e.is_finite() {
                return Err(Error::Config(format!("voxel_edge_um must be positive, got {e}")));
            }
        }
        self.scheme()?;
        Ok(())
    }

    pub fn scheme(&self) -> Result<Scheme> {
        let scheme = match self.scheme {
            SchemeKind::ExplicitSync | SchemeKind::ExplicitAsync => {
                let c = ExplicitConfig {
                    dt_diffusion: self.dt_diffusion,
                    dt_transform: self.dt_transform,
                    p_neg: self.p_neg,
                    max_backtracks: self.max_backtracks,
                    coupling: if self.scheme == SchemeKind::ExplicitSync {
                        Coupling::Synchronous
                    } else {
                        Coupling::Asynchronous
                    },
                    order: self.split_order,
                    redouble_after: self.redouble_after,
                };
                c.validate()?;
                Scheme::Explicit(c)
            }
            SchemeKind::ImplicitAsync => {
                let c = ImplicitConfig {
                    dt_diffusion: self.dt_diffusion,
                    dt_transform: self.dt_transform,
                    p_neg: self.p_neg,
                    max_backtracks: self.max_backtracks,
                    cg_tol: self.cg_tol,
                    cg_max_iter: self.cg_max_iter,
                    redouble_after: self.redouble_after,
                };
                c.validate()?;
                Scheme::Implicit(c)
            }
        };
        Ok(scheme)
    }

    pub fn build_network(&self) -> Result<PoreNetwork> {
        if let Some(path) = &self.network {
            let options = LoadOptions {
                contact_factor: self.contact_factor,
            };
            return load_network_with(path, NetworkFormat::Text, options);
        }
        let spec = self
            .synthetic
            .ok_or_else(|| Error::Config("scenario needs a network file or a synthetic network".into()))?;
        generate_synthetic_network(spec.kind, spec.size, spec.seed)?.with_contact_factor(self.contact_factor)
    }
}

fn check_mass(what: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} must be finite and non-negative, got {v}")))
    }
}

fn check_spots(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Config("spot count must be at least 1".into()));
    }
    Ok(())
}

fn water_ids(water: &[bool]) -> Vec<usize> {
    (0..water.len()).filter(|&k| water[k]).collect()
}

/// Splits `total` over water-filled balls in proportion to volume, so every
/// one of them ends up at the same concentration.
pub fn place_dom_uniform(net: &PoreNetwork, water: &[bool], total: f64) -> Result<Vec<f64>> {
    check_mass("DOM total", total).map_err(|e| Error::Domain(e.to_string()))?;
    let vol: f64 = net.nodes().iter().zip(water).filter(|(_, &w)| w).map(|(n, _)| n.volume).sum();
    if vol == 0.0 {
        return Err(Error::NoWater);
    }
    let mut out: Vec<f64> = net
        .nodes()
        .iter()
        .zip(water)
        .map(|(n, &w)| if w { total * n.volume / vol } else { 0.0 })
        .collect();
    // push the rounding residue onto the largest share so the sum is exact
    let sum: f64 = out.iter().sum();
    if let Some(k) = (0..out.len()).filter(|&k| water[k]).max_by(|&a, &b| out[a].total_cmp(&out[b])) {
        out[k] += total - sum;
    }
    Ok(out)
}

/// Puts `total / n_spots` in each of `n_spots` distinct water balls drawn
/// uniformly with the given seed.
pub fn place_mb_spots(net: &PoreNetwork, water: &[bool], n_spots: usize, total: f64, seed: u64) -> Result<Vec<f64>> {
    let ids = water_ids(water);
    if ids.is_empty() {
        return Err(Error::NoWater);
    }
    if n_spots == 0 {
        return Err(Error::Domain("spot count must be at least 1".into()));
    }
    if n_spots > ids.len() {
        return Err(Error::TooManySpots {
            requested: n_spots,
            available: ids.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![0.0; net.node_count()];
    let share = total / n_spots as f64;
    let mut picked: Vec<usize> = sample(&mut rng, ids.len(), n_spots).into_iter().collect();
    picked.sort_unstable();
    for k in picked {
        out[ids[k]] = share;
    }
    Ok(out)
}

fn node_by_external_id(net: &PoreNetwork) -> HashMap<i64, usize> {
    net.external_ids().iter().enumerate().map(|(k, &e)| (e, k)).collect()
}

/// Initial per-node states for `scn` on `net` with the given water mask.
pub fn initial_states(scn: &Scenario, net: &PoreNetwork, water: &[bool]) -> Result<Vec<BioState>> {
    let ids = water_ids(water);
    if ids.is_empty() {
        return Err(Error::NoWater);
    }
    let dom = match &scn.dom_placement {
        DomPlacement::UniformConcentration { total } => place_dom_uniform(net, water, *total)?,
        DomPlacement::PlaneSlab { total, z_min, z_max } => slab_placement(net, water, *total, *z_min, *z_max)?,
        DomPlacement::SingleBall { ball, total } => {
            let k = match ball {
                BallChoice::Random(_) => {
                    let mut rng = ChaCha8Rng::seed_from_u64(scn.seed ^ 0xD0D0_D0D0);
                    ids[rng.random_range(0..ids.len())]
                }
                BallChoice::Id(e) => {
                    let k = *node_by_external_id(net)
                        .get(e)
                        .ok_or_else(|| Error::Config(format!("no ball with id {e}")))?;
                    if !water[k] {
                        return Err(Error::Config(format!("ball {e} is air-filled")));
                    }
                    k
                }
            };
            let mut d = vec![0.0; net.node_count()];
            d[k] = *total;
            d
        }
    };
    let mb = match &scn.mb_placement {
        MbPlacement::None => vec![0.0; net.node_count()],
        MbPlacement::Spots { count, total } => place_mb_spots(net, water, *count, *total, scn.seed)?,
        MbPlacement::Bacteria {
            spots,
            bacteria,
            bacterium_mass_g,
        } => {
            let total = bacteria * bacterium_mass_g * scn.mass_unit.per_gram();
            place_mb_spots(net, water, *spots, total, scn.seed)?
        }
        MbPlacement::ExplicitList { entries } => {
            let index = node_by_external_id(net);
            let mut mb = vec![0.0; net.node_count()];
            for &(e, m) in entries {
                let k = *index.get(&e).ok_or_else(|| Error::Config(format!("no ball with id {e}")))?;
                if !water[k] {
                    return Err(Error::Config(format!("ball {e} is air-filled")));
                }
                mb[k] += m;
            }
            mb
        }
    };
    Ok(dom
        .into_iter()
        .zip(mb)
        .map(|(d, m)| BioState {
            mb: m,
            dom: d,
            ..BioState::ZERO
        })
        .collect())
}

/// Global pool totals at one sampling time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRecord {
    pub time_h: f64,
    pub totals: BioState,
    /// Totals as a percentage of the initial total carbon mass.
    pub percent: BioState,
}

impl TrajectoryRecord {
    fn from_sample(s: &Sample, initial_total: f64) -> Self {
        let pct = |v: f64| if initial_total > 0.0 { 100.0 * v / initial_total } else { 0.0 };
        let t = s.totals;
        Self {
            time_h: s.time_days * 24.0,
            totals: t,
            percent: BioState::new(pct(t.mb), pct(t.dom), pct(t.som), pct(t.fom), pct(t.co2)),
        }
    }
}

pub const CSV_HEADER: &str = "time_h,mb,dom,som,fom,co2,mb_pct,dom_pct,som_pct,fom_pct,co2_pct";

pub fn csv_line(r: &TrajectoryRecord) -> String {
    let mut fields = vec![r.time_h];
    fields.extend(r.totals.to_array());
    fields.extend(r.percent.to_array());
    fields.iter().map(|v| format!("{v:.16e}")).collect::<Vec<_>>().join(",")
}

#[derive(Debug, Clone)]
pub struct ScenarioOutput {
    pub records: Vec<TrajectoryRecord>,
    pub final_states: Vec<BioState>,
    pub water_mask: Vec<bool>,
    pub profile: Option<MassProfile>,
    pub stats: RunStats,
}

/// Builds the network, drains it, places the initial masses and runs the
/// selected scheme, handing each record to `sink` as soon as it exists.
pub fn run_scenario_with<F>(scn: &Scenario, mut sink: F) -> Result<ScenarioOutput>
where
    F: FnMut(&TrajectoryRecord) -> Result<()>,
{
    scn.validate()?;
    let net = scn.build_network()?;
    run_scenario_on(scn, &net, &mut sink)
}

/// Same as [`run_scenario_with`] on an already built network.
pub fn run_scenario_on<F>(scn: &Scenario, net: &PoreNetwork, mut sink: F) -> Result<ScenarioOutput>
where
    F: FnMut(&TrajectoryRecord) -> Result<()>,
{
    scn.validate()?;
    let drained = drain_to_saturation(net, scn.saturation)?;
    log::info!(
        "drained at radius {}: {} of {} balls hold water, saturation {:.4}",
        drained.threshold,
        drained.water_count(),
        net.node_count(),
        drained.achieved_saturation
    );
    let states = initial_states(scn, net, &drained.water_mask)?;
    let initial_total: f64 = states.iter().map(|x| x.total()).sum();
    let mut sim = Simulation::new(net, drained.water_mask.clone(), states, scn.effective_params(), scn.scheme()?)?;
    let mut records = Vec::new();
    sim.run_with(scn.t_end()?, scn.output.sample_every_hours / 24.0, |s| {
        let r = TrajectoryRecord::from_sample(s, initial_total);
        sink(&r)?;
        records.push(r);
        Ok(())
    })?;
    let stats = *sim.stats();
    log::info!(
        "{} steps, {} backtracks, {} repairs, {} solves averaging {:.1} CG iterations",
        stats.steps,
        stats.backtracks,
        stats.reallocations,
        stats.solver.solves,
        stats.solver.total_iterations as f64 / stats.solver.solves.max(1) as f64
    );
    let final_states = sim.into_states();
    let profile = scn.output.profile.as_ref().map(|_| {
        let dom: Vec<f64> = final_states.iter().map(|x| x.dom).collect();
        plane_profile_with(net, &dom, scn.output.profile_planes, scn.output.profile_binning)
    });
    Ok(ScenarioOutput {
        records,
        final_states,
        water_mask: drained.water_mask,
        profile,
        stats,
    })
}

pub fn run_scenario(scn: &Scenario) -> Result<ScenarioOutput> {
    run_scenario_with(scn, |_| Ok(()))
}

/// Runs `scn`, streaming records to `w` as CSV. On failure the records
/// written so far stay in place, followed by a `# error:` marker line.
pub fn run_scenario_csv<W: Write>(scn: &Scenario, w: &mut W) -> Result<ScenarioOutput> {
    writeln!(w, "{CSV_HEADER}")?;
    let result = run_scenario_with(scn, |r| {
        writeln!(w, "{}", csv_line(r))?;
        Ok(())
    });
    if let Err(e) = &result {
        writeln!(w, "# error: {e}")?;
    }
    w.flush()?;
    result
}

/// Runs `scn` and writes whatever outputs it names.
pub fn run_scenario_to_files(scn: &Scenario) -> Result<ScenarioOutput> {
    let out = match &scn.output.csv {
        Some(path) => {
            let mut w = std::io::BufWriter::new(fs::File::create(path)?);
            run_scenario_csv(scn, &mut w)?
        }
        None => run_scenario(scn)?,
    };
    if let (Some(path), Some(profile)) = (&scn.output.profile, &out.profile) {
        crate::calibration::write_profile(profile, path)?;
    }
    Ok(out)
}
