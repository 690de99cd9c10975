//! Python bindings for `poresim`.
//!
//! Masses are plain lists of floats and a node state is a 5-tuple
//! `(mb, dom, som, fom, co2)`. Times are in days unless a name says otherwise.

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use poresim::biology::{self, BioParams, BioState};
use poresim::calibration::{self, FitConfig, MassProfile, ProfileBinning};
use poresim::drainage;
use poresim::explicit::{self, Coupling, ExplicitConfig};
use poresim::implicit::{ImplicitConfig, ImplicitDiffusion};
use poresim::linalg::SolverConfig;
use poresim::network::{self, connected_components, BallNode, LoadOptions, NetworkFormat, PoreNetwork};
use poresim::scenario::{self, Scenario};
use poresim::scheduler::{Scheme, Simulation};
use poresim::synthetic::{self, SyntheticKind};

create_exception!(pyporesim, PoresimError, PyException, "Invalid input or configuration.");
create_exception!(pyporesim, NumericalError, PoresimError, "The numerical scheme failed to make progress.");

fn to_py(e: poresim::Error) -> PyErr {
    if e.is_numeric() {
        NumericalError::new_err(e.to_string())
    } else {
        PoresimError::new_err(e.to_string())
    }
}

type State = (f64, f64, f64, f64, f64);

/// Best factor, its cosine, and every `(alpha, cosine)` tried.
type FitOutput = (f64, f64, Vec<(f64, f64)>);

fn state_in(s: State) -> BioState {
    BioState::new(s.0, s.1, s.2, s.3, s.4)
}

fn state_out(x: &BioState) -> State {
    (x.mb, x.dom, x.som, x.fom, x.co2)
}

fn water_mask(net: &PoreNetwork, water: Option<Vec<bool>>) -> PyResult<Vec<bool>> {
    match water {
        None => Ok(vec![true; net.node_count()]),
        Some(w) if w.len() == net.node_count() => Ok(w),
        Some(w) => Err(PoresimError::new_err(format!(
            "water mask has {} entries for {} balls",
            w.len(),
            net.node_count()
        ))),
    }
}

fn check_len(what: &str, got: usize, n: usize) -> PyResult<()> {
    if got != n {
        return Err(PoresimError::new_err(format!("{what} has {got} entries for {n} balls")));
    }
    Ok(())
}

fn binning(name: &str) -> PyResult<ProfileBinning> {
    match name {
        "center" => Ok(ProfileBinning::Center),
        "volume_overlap" | "volume-overlap" => Ok(ProfileBinning::VolumeOverlap),
        _ => Err(PoresimError::new_err(format!("unknown binning {name:?}"))),
    }
}

/// Ball network: nodes are balls, arcs are contacts between them.
#[pyclass(name = "Network", module = "pyporesim", frozen)]
struct PyNetwork {
    inner: PoreNetwork,
}

#[pymethods]
impl PyNetwork {
    /// Reads the text ball format. Arcs without an area get
    /// `contact_factor * pi * min(r)^2`.
    #[staticmethod]
    #[pyo3(signature = (path, contact_factor = 0.6))]
    fn load(path: std::path::PathBuf, contact_factor: f64) -> PyResult<Self> {
        let inner = network::load_network_with(path, NetworkFormat::Text, LoadOptions { contact_factor })
            .map_err(to_py)?;
        Ok(Self { inner })
    }

    /// Synthetic network: kind is "chain", "grid3d" or "random_tangent".
    #[staticmethod]
    #[pyo3(signature = (kind, size, seed = 0))]
    fn generate(kind: &str, size: usize, seed: u64) -> PyResult<Self> {
        let kind: SyntheticKind = kind.parse().map_err(to_py)?;
        let inner = synthetic::generate_synthetic_network(kind, size, seed).map_err(to_py)?;
        Ok(Self { inner })
    }

    /// Network from `(x, y, z, r)` balls, connecting every tangent or
    /// overlapping pair.
    #[staticmethod]
    #[pyo3(signature = (balls, contact_factor = 1.0))]
    fn from_balls(balls: Vec<(f64, f64, f64, f64)>, contact_factor: f64) -> PyResult<Self> {
        let nodes = balls
            .iter()
            .enumerate()
            .map(|(k, &(x, y, z, r))| BallNode::new(k, [x, y, z], r))
            .collect();
        let inner = PoreNetwork::from_balls_by_tangency(nodes, contact_factor).map_err(to_py)?;
        Ok(Self { inner })
    }

    fn save(&self, path: std::path::PathBuf) -> PyResult<()> {
        network::save_network(&self.inner, path).map_err(to_py)
    }

    /// Copy with every contact area recomputed for a new factor.
    fn with_contact_factor(&self, alpha: f64) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.with_contact_factor(alpha).map_err(to_py)?,
        })
    }

    #[getter]
    fn node_count(&self) -> usize {
        self.inner.node_count()
    }

    #[getter]
    fn arc_count(&self) -> usize {
        self.inner.arc_count()
    }

    #[getter]
    fn total_volume(&self) -> f64 {
        self.inner.total_volume()
    }

    fn __len__(&self) -> usize {
        self.inner.node_count()
    }

    fn volumes(&self) -> Vec<f64> {
        self.inner.volumes()
    }

    fn radii(&self) -> Vec<f64> {
        self.inner.nodes().iter().map(|n| n.radius).collect()
    }

    fn centers(&self) -> Vec<(f64, f64, f64)> {
        self.inner.nodes().iter().map(|n| (n.center[0], n.center[1], n.center[2])).collect()
    }

    /// Ball ids as written in the source file.
    fn external_ids(&self) -> Vec<i64> {
        self.inner.external_ids().to_vec()
    }

    /// `(i, j, distance, contact_area)` per arc.
    fn arcs(&self) -> Vec<(usize, usize, f64, f64)> {
        self.inner
            .arcs()
            .iter()
            .map(|a| (a.i, a.j, a.distance, a.contact_area))
            .collect()
    }

    #[pyo3(signature = (water = None))]
    fn components(&self, water: Option<Vec<bool>>) -> PyResult<Vec<Vec<usize>>> {
        let water = water_mask(&self.inner, water)?;
        Ok(connected_components(&self.inner, &water))
    }

    fn __repr__(&self) -> String {
        format!("Network(balls={}, arcs={})", self.inner.node_count(), self.inner.arc_count())
    }
}

/// Transformation rates (per day) and the DOM diffusion coefficient
/// (voxel^2 per day).
#[pyclass(name = "Params", module = "pyporesim", get_all, set_all, from_py_object)]
#[derive(Clone, Copy)]
struct PyParams {
    rho: f64,
    mu: f64,
    rho_m: f64,
    v_fom: f64,
    v_som: f64,
    v_dom: f64,
    kappa_b: f64,
    d_c: f64,
}

impl From<BioParams> for PyParams {
    fn from(p: BioParams) -> Self {
        Self {
            rho: p.rho,
            mu: p.mu,
            rho_m: p.rho_m,
            v_fom: p.v_fom,
            v_som: p.v_som,
            v_dom: p.v_dom,
            kappa_b: p.kappa_b,
            d_c: p.d_c,
        }
    }
}

impl PyParams {
    fn core(&self) -> BioParams {
        BioParams {
            rho: self.rho,
            mu: self.mu,
            rho_m: self.rho_m,
            v_fom: self.v_fom,
            v_som: self.v_som,
            v_dom: self.v_dom,
            kappa_b: self.kappa_b,
            d_c: self.d_c,
        }
    }
}

#[pymethods]
impl PyParams {
    /// Defaults to the Arthrobacter sp. 9R rates; keyword arguments override.
    #[new]
    #[pyo3(signature = (**kwargs))]
    fn new(kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let mut p = PyParams::from(BioParams::paper_2021());
        if let Some(kw) = kwargs {
            for (k, v) in kw.iter() {
                let key: String = k.extract()?;
                let v: f64 = v.extract()?;
                let slot = match key.as_str() {
                    "rho" => &mut p.rho,
                    "mu" => &mut p.mu,
                    "rho_m" => &mut p.rho_m,
                    "v_fom" => &mut p.v_fom,
                    "v_som" => &mut p.v_som,
                    "v_dom" => &mut p.v_dom,
                    "kappa_b" => &mut p.kappa_b,
                    "d_c" => &mut p.d_c,
                    _ => return Err(PoresimError::new_err(format!("unknown parameter {key:?}"))),
                };
                *slot = v;
            }
        }
        p.core().validate().map_err(to_py)?;
        Ok(p)
    }

    #[staticmethod]
    fn diffusion_only(d_c: f64) -> Self {
        BioParams::diffusion_only(d_c).into()
    }

    fn validate(&self) -> PyResult<()> {
        self.core().validate().map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!(
            "Params(rho={}, mu={}, rho_m={}, v_fom={}, v_som={}, v_dom={}, kappa_b={}, d_c={})",
            self.rho, self.mu, self.rho_m, self.v_fom, self.v_som, self.v_dom, self.kappa_b, self.d_c
        )
    }
}

/// `alpha * pi * min(r_i, r_j)^2`.
#[pyfunction]
fn contact_area(r_i: f64, r_j: f64, alpha: f64) -> PyResult<f64> {
    network::compute_contact_area(r_i, r_j, alpha).map_err(to_py)
}

/// One explicit transformation step on a single ball.
#[pyfunction]
fn transform_node(state: State, volume: f64, params: &PyParams, dt: f64) -> State {
    state_out(&biology::transform_node(&state_in(state), volume, &params.core(), dt))
}

/// Mass gained by ball i from ball j over `dt`.
#[pyfunction]
fn fick_flow(c_i: f64, c_j: f64, area: f64, distance: f64, d_c: f64, dt: f64) -> f64 {
    explicit::fick_flow(c_i, c_j, area, distance, d_c, dt)
}

/// One explicit diffusion step. May return negative masses when `dt` is too large.
#[pyfunction]
#[pyo3(signature = (network, dom, d_c, dt, water = None))]
fn explicit_diffusion_step(
    network: &PyNetwork,
    dom: Vec<f64>,
    d_c: f64,
    dt: f64,
    water: Option<Vec<bool>>,
) -> PyResult<Vec<f64>> {
    let net = &network.inner;
    check_len("dom", dom.len(), net.node_count())?;
    let water = water_mask(net, water)?;
    Ok(explicit::diffusion_step_explicit(&dom, net, &water, d_c, dt))
}

/// One implicit diffusion step over every water component.
#[pyfunction]
#[pyo3(signature = (network, dom, d_c, dt, water = None, tol = 1e-10))]
fn implicit_diffusion_step(
    py: Python<'_>,
    network: &PyNetwork,
    mut dom: Vec<f64>,
    d_c: f64,
    dt: f64,
    water: Option<Vec<bool>>,
    tol: f64,
) -> PyResult<Vec<f64>> {
    let net = &network.inner;
    check_len("dom", dom.len(), net.node_count())?;
    let water = water_mask(net, water)?;
    let solver = SolverConfig {
        tol,
        ..SolverConfig::default()
    };
    py.detach(|| {
        let op = ImplicitDiffusion::new(net, &water, d_c, dt)?;
        op.step(&mut dom, &solver)?;
        Ok(dom)
    })
    .map_err(to_py)
}

/// Fills the largest balls until the water volume fraction reaches `saturation`.
#[pyfunction]
fn drain<'py>(py: Python<'py>, network: &PyNetwork, saturation: f64) -> PyResult<Bound<'py, PyDict>> {
    let r = drainage::drain_to_saturation(&network.inner, saturation).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("threshold", r.threshold)?;
    d.set_item("saturation", r.achieved_saturation)?;
    d.set_item("water", r.water_mask)?;
    Ok(d)
}

/// Total DOM mass per unit-thickness z-plane.
#[pyfunction]
#[pyo3(signature = (network, dom, planes, binning = "center"))]
fn plane_profile(network: &PyNetwork, dom: Vec<f64>, planes: usize, binning: &str) -> PyResult<Vec<f64>> {
    check_len("dom", dom.len(), network.inner.node_count())?;
    Ok(calibration::plane_profile_with(&network.inner, &dom, planes, self::binning(binning)?).values)
}

#[pyfunction]
fn cosine_similarity(l: Vec<f64>, m: Vec<f64>) -> PyResult<f64> {
    calibration::cosine(&l, &m).map_err(to_py)
}

/// Mass placed in the balls that meet the slab `[z_min, z_max)`, in
/// proportion to their volumes.
#[pyfunction]
#[pyo3(signature = (network, total, z_min, z_max, water = None))]
fn slab_placement(
    network: &PyNetwork,
    total: f64,
    z_min: f64,
    z_max: f64,
    water: Option<Vec<bool>>,
) -> PyResult<Vec<f64>> {
    let water = water_mask(&network.inner, water)?;
    calibration::slab_placement(&network.inner, &water, total, z_min, z_max).map_err(to_py)
}

/// Grid search for the contact factor whose diffused profile best matches
/// `reference`. Returns `(alpha, cosine, [(alpha, cosine), ...])`.
#[pyfunction]
#[pyo3(signature = (
    network, dom, reference, alphas = None, d_c = 40_000.0, hours = 1.783,
    dt_diffusion = 10.0, binning = "center", water = None,
))]
#[allow(clippy::too_many_arguments)]
fn fit_alpha(
    py: Python<'_>,
    network: &PyNetwork,
    dom: Vec<f64>,
    reference: Vec<f64>,
    alphas: Option<Vec<f64>>,
    d_c: f64,
    hours: f64,
    dt_diffusion: f64,
    binning: &str,
    water: Option<Vec<bool>>,
) -> PyResult<FitOutput> {
    let net = &network.inner;
    check_len("dom", dom.len(), net.node_count())?;
    let water = water_mask(net, water)?;
    let cfg = FitConfig {
        d_c,
        t_end: hours / 24.0,
        dt_diffusion,
        alphas: alphas.unwrap_or_else(calibration::default_alpha_grid),
        binning: self::binning(binning)?,
        ..FitConfig::default()
    };
    let reference = MassProfile::new(reference);
    let fit = py
        .detach(|| calibration::fit_alpha(net, &water, &dom, &reference, &cfg))
        .map_err(to_py)?;
    Ok((fit.alpha, fit.cosine, fit.scores))
}

/// Runs coupled biology and diffusion from `states` to `t_end` days.
///
/// `scheme` is "implicit", "explicit" (asynchronous) or "explicit-sync";
/// step lengths are in seconds. Returns a dict with sample `times` (days),
/// pool `totals`, `final_states` and step statistics.
#[pyfunction]
#[pyo3(signature = (
    network, states, params, t_end, sample_every, scheme = "implicit",
    dt_diffusion = None, dt_transform = 10.0, p_neg = 0.01, water = None,
))]
#[allow(clippy::too_many_arguments)]
fn simulate<'py>(
    py: Python<'py>,
    network: &PyNetwork,
    states: Vec<State>,
    params: &PyParams,
    t_end: f64,
    sample_every: f64,
    scheme: &str,
    dt_diffusion: Option<f64>,
    dt_transform: f64,
    p_neg: f64,
    water: Option<Vec<bool>>,
) -> PyResult<Bound<'py, PyDict>> {
    let net = &network.inner;
    check_len("states", states.len(), net.node_count())?;
    let water = water_mask(net, water)?;
    let scheme = match scheme {
        "implicit" => Scheme::Implicit(ImplicitConfig {
            dt_diffusion: dt_diffusion.unwrap_or(10.0),
            dt_transform,
            p_neg,
            ..ImplicitConfig::default()
        }),
        "explicit" | "explicit-sync" => Scheme::Explicit(ExplicitConfig {
            dt_diffusion: dt_diffusion.unwrap_or(0.3),
            dt_transform,
            p_neg,
            coupling: if scheme == "explicit" {
                Coupling::Asynchronous
            } else {
                Coupling::Synchronous
            },
            ..ExplicitConfig::default()
        }),
        other => return Err(PoresimError::new_err(format!("unknown scheme {other:?}"))),
    };
    let states: Vec<BioState> = states.into_iter().map(state_in).collect();
    let p = params.core();
    let traj = py
        .detach(|| Simulation::new(net, water, states, p, scheme)?.run(t_end, sample_every))
        .map_err(to_py)?;

    let d = PyDict::new(py);
    d.set_item("times", traj.samples.iter().map(|s| s.time_days).collect::<Vec<_>>())?;
    d.set_item("totals", traj.samples.iter().map(|s| state_out(&s.totals)).collect::<Vec<_>>())?;
    d.set_item("final_states", traj.final_states.iter().map(state_out).collect::<Vec<_>>())?;
    d.set_item("steps", traj.stats.steps)?;
    d.set_item("backtracks", traj.stats.backtracks)?;
    d.set_item("reallocations", traj.stats.reallocations)?;
    d.set_item("max_step_drift", traj.stats.max_step_drift)?;
    Ok(d)
}

/// Runs a scenario given as JSON text (same schema as the CLI config).
/// Returns `records` as `(time_h, totals, percent)` rows plus the final
/// states, water mask and optional DOM profile.
#[pyfunction]
fn run_scenario<'py>(py: Python<'py>, config: &str) -> PyResult<Bound<'py, PyDict>> {
    let scn = Scenario::from_json(config).map_err(to_py)?;
    let out = py.detach(|| scenario::run_scenario(&scn)).map_err(to_py)?;
    let d = PyDict::new(py);
    let records: Vec<(f64, State, State)> = out
        .records
        .iter()
        .map(|r| (r.time_h, state_out(&r.totals), state_out(&r.percent)))
        .collect();
    d.set_item("records", records)?;
    d.set_item("final_states", out.final_states.iter().map(state_out).collect::<Vec<_>>())?;
    d.set_item("water", out.water_mask)?;
    d.set_item("profile", out.profile.map(|p| p.values))?;
    d.set_item("steps", out.stats.steps)?;
    d.set_item("backtracks", out.stats.backtracks)?;
    Ok(d)
}

/// The built-in "paper-2021" scenario as JSON, a starting point for edits.
#[pyfunction]
fn preset(name: &str) -> PyResult<String> {
    Scenario::preset(name).and_then(|s| s.to_json()).map_err(to_py)
}

#[pymodule]
fn pyporesim(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("PoresimError", py.get_type::<PoresimError>())?;
    m.add("NumericalError", py.get_type::<NumericalError>())?;
    m.add("SECONDS_PER_DAY", biology::SECONDS_PER_DAY)?;
    m.add_class::<PyNetwork>()?;
    m.add_class::<PyParams>()?;
    m.add_function(wrap_pyfunction!(contact_area, m)?)?;
    m.add_function(wrap_pyfunction!(transform_node, m)?)?;
    m.add_function(wrap_pyfunction!(fick_flow, m)?)?;
    m.add_function(wrap_pyfunction!(explicit_diffusion_step, m)?)?;
    m.add_function(wrap_pyfunction!(implicit_diffusion_step, m)?)?;
    m.add_function(wrap_pyfunction!(drain, m)?)?;
    m.add_function(wrap_pyfunction!(plane_profile, m)?)?;
    m.add_function(wrap_pyfunction!(cosine_similarity, m)?)?;
    m.add_function(wrap_pyfunction!(slab_placement, m)?)?;
    m.add_function(wrap_pyfunction!(fit_alpha, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(preset, m)?)?;
    Ok(())
}
