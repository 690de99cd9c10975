//! Five-pool microbial decomposition model applied node by node.
//!
//! Pools: microbial biomass (MB), dissolved (DOM), soil (SOM) and fresh (FOM)
//! organic matter, and respired CO2. One explicit Euler step moves mass
//! between pools without creating or destroying any:
//!
//! ```text
//! MB  <- MB  - resp - mort + uptake
//! DOM <- DOM + rho_m*mort - uptake + v_som*SOM*dt + v_fom*FOM*dt
//! SOM <- SOM + (1-rho_m)*mort - v_som*SOM*dt
//! FOM <- FOM - v_fom*FOM*dt
//! CO2 <- CO2 + resp
//! ```
//! with `resp = rho*MB*dt`, `mort = mu*MB*dt` and the Monod uptake
//! `uptake = v_dom * c/(kappa_b + c) * MB*dt`, `c = DOM/volume`.

use serde::{Deserialize, Serialize};

use crate::network::PoreNetwork;

/// Time unit used throughout the engine.
pub const SECONDS_PER_DAY: f64 = 86_400.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Species {
    Mb,
    Dom,
    Som,
    Fom,
    Co2,
}

impl Species {
    pub const ALL: [Species; 5] = [
        Species::Mb,
        Species::Dom,
        Species::Som,
        Species::Fom,
        Species::Co2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Species::Mb => "mb",
            Species::Dom => "dom",
            Species::Som => "som",
            Species::Fom => "fom",
            Species::Co2 => "co2",
        }
    }
}

/// Masses of the five carbon pools held by one ball.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BioState {
    pub mb: f64,
    pub dom: f64,
    pub som: f64,
    pub fom: f64,
    pub co2: f64,
}

impl BioState {
    pub const ZERO: BioState = BioState {
        mb: 0.0,
        dom: 0.0,
        som: 0.0,
        fom: 0.0,
        co2: 0.0,
    };

    pub fn new(mb: f64, dom: f64, som: f64, fom: f64, co2: f64) -> Self {
        Self {
            mb,
            dom,
            som,
            fom,
            co2,
        }
    }

    pub fn get(&self, s: Species) -> f64 {
        match s {
            Species::Mb => self.mb,
            Species::Dom => self.dom,
            Species::Som => self.som,
            Species::Fom => self.fom,
            Species::Co2 => self.co2,
        }
    }

    pub fn get_mut(&mut self, s: Species) -> &mut f64 {
        match s {
            Species::Mb => &mut self.mb,
            Species::Dom => &mut self.dom,
            Species::Som => &mut self.som,
            Species::Fom => &mut self.fom,
            Species::Co2 => &mut self.co2,
        }
    }

    pub fn to_array(&self) -> [f64; 5] {
        [self.mb, self.dom, self.som, self.fom, self.co2]
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        Self::new(a[0], a[1], a[2], a[3], a[4])
    }

    pub fn total(&self) -> f64 {
        self.mb + self.dom + self.som + self.fom + self.co2
    }

    pub fn add(&self, other: &BioState) -> BioState {
        BioState::new(
            self.mb + other.mb,
            self.dom + other.dom,
            self.som + other.som,
            self.fom + other.fom,
            self.co2 + other.co2,
        )
    }

    pub fn is_nonnegative(&self) -> bool {
        self.to_array().iter().all(|&x| x >= 0.0)
    }
}

/// Per-species totals over a set of nodes, summed in node order.
pub fn totals(states: &[BioState]) -> BioState {
    states.iter().fold(BioState::ZERO, |acc, s| acc.add(s))
}

/// Total mass over all species and nodes.
pub fn total_mass(states: &[BioState]) -> f64 {
    totals(states).total()
}

/// Biological rate constants (per day) plus the DOM diffusion coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BioParams {
    /// Respiration rate.
    pub rho: f64,
    /// Mortality rate.
    pub mu: f64,
    /// Fraction of dead biomass returning to DOM (the rest goes to SOM).
    pub rho_m: f64,
    pub v_fom: f64,
    pub v_som: f64,
    /// Maximum growth rate on DOM.
    pub v_dom: f64,
    /// Half-saturation constant, in the same concentration units as DOM/volume.
    pub kappa_b: f64,
    /// Diffusion coefficient, voxel^2 per day.
    pub d_c: f64,
}

impl Default for BioParams {
    fn default() -> Self {
        Self::paper_2021()
    }
}

impl BioParams {
    /// Arthrobacter sp. 9R rates with the calibrated 40000 voxel^2/day coefficient.
    pub fn paper_2021() -> Self {
        Self {
            rho: 0.2,
            mu: 0.5,
            rho_m: 0.55,
            v_fom: 0.3,
            v_som: 0.01,
            v_dom: 9.6,
            kappa_b: 0.001,
            d_c: diffusion_presets::CALIBRATED,
        }
    }

    /// All transformation rates zero: the biology step is the identity.
    pub fn diffusion_only(d_c: f64) -> Self {
        Self {
            rho: 0.0,
            mu: 0.0,
            rho_m: 0.0,
            v_fom: 0.0,
            v_som: 0.0,
            v_dom: 0.0,
            kappa_b: 1.0,
            d_c,
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        let rates = [
            ("rho", self.rho),
            ("mu", self.mu),
            ("v_fom", self.v_fom),
            ("v_som", self.v_som),
            ("v_dom", self.v_dom),
            ("d_c", self.d_c),
        ];
        for (name, v) in rates {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(crate::Error::Domain(format!("{name} must be a finite non-negative rate, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.rho_m) {
            return Err(crate::Error::Domain(format!("rho_m must lie in [0, 1], got {}", self.rho_m)));
        }
        if !(self.kappa_b > 0.0) {
            return Err(crate::Error::Domain(format!("kappa_b must be positive, got {}", self.kappa_b)));
        }
        Ok(())
    }
}

/// Named diffusion coefficients, voxel^2 per day.
pub mod diffusion_presets {
    /// Value fitted against the voxel reference profiles.
    pub const CALIBRATED: f64 = 40_000.0;
    /// Molecular DOM diffusivity in water converted to the 24 um voxel grid.
    pub const MOLECULAR: f64 = 100_000.0;
    /// Molecular DOM diffusivity in water, cm^2 per second.
    pub const MOLECULAR_CM2_PER_S: f64 = 6.73e-6;
}

struct Fluxes {
    resp: f64,
    mort: f64,
    mort_dom: f64,
    mort_som: f64,
    uptake: f64,
    som_out: f64,
    fom_out: f64,
}

fn fluxes(x: &BioState, volume: f64, p: &BioParams, dt: f64) -> Fluxes {
    let resp = p.rho * x.mb * dt;
    let mort = p.mu * x.mb * dt;
    let mort_dom = p.rho_m * mort;
    let uptake = if x.dom > 0.0 {
        let c = x.dom / volume;
        p.v_dom * c / (p.kappa_b + c) * x.mb * dt
    } else {
        // transient negative DOM never feeds growth
        0.0
    };
    Fluxes {
        resp,
        mort,
        mort_dom,
        mort_som: mort - mort_dom,
        uptake,
        som_out: p.v_som * x.som * dt,
        fom_out: p.v_fom * x.fom * dt,
    }
}

/// Mass increments of one transformation step; they sum to zero.
pub fn transform_delta(x: &BioState, volume: f64, p: &BioParams, dt: f64) -> BioState {
    let f = fluxes(x, volume, p, dt);
    BioState {
        mb: f.uptake - f.resp - f.mort,
        dom: f.mort_dom - f.uptake + f.som_out + f.fom_out,
        som: f.mort_som - f.som_out,
        fom: -f.fom_out,
        co2: f.resp,
    }
}

/// One explicit Euler transformation step for a single ball.
pub fn transform_node(x: &BioState, volume: f64, p: &BioParams, dt: f64) -> BioState {
    let f = fluxes(x, volume, p, dt);
    BioState {
        mb: x.mb - f.resp - f.mort + f.uptake,
        dom: x.dom + f.mort_dom - f.uptake + f.som_out + f.fom_out,
        som: x.som + f.mort_som - f.som_out,
        fom: x.fom - f.fom_out,
        co2: x.co2 + f.resp,
    }
}

/// Applies [`transform_node`] to every water-filled ball; air-filled balls
/// are copied unchanged.
pub fn transform_all(
    states: &[BioState],
    net: &PoreNetwork,
    water: &[bool],
    params: &BioParams,
    dt: f64,
) -> Vec<BioState> {
    debug_assert_eq!(states.len(), net.node_count());
    states
        .iter()
        .zip(net.nodes())
        .zip(water)
        .map(|((s, n), &w)| {
            if w {
                transform_node(s, n.volume, params, dt)
            } else {
                *s
            }
        })
        .collect()
}
