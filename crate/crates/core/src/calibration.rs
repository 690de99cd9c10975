//! Plane-wise DOM mass profiles and contact-factor fitting against a
//! reference profile.

use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::biology::SECONDS_PER_DAY;
use crate::error::{Error, Result};
use crate::implicit::ImplicitDiffusion;
use crate::linalg::SolverConfig;
use crate::network::PoreNetwork;

/// Total DOM mass per z-plane.
#[derive(Debug, Clone, PartialEq)]
pub struct MassProfile {
    pub values: Vec<f64>,
    pub plane_thickness: f64,
    /// Mass that fell outside planes `0..values.len()`.
    pub dropped: f64,
}

impl MassProfile {
    pub fn new(values: Vec<f64>) -> Self {
        Self {
            values,
            plane_thickness: 1.0,
            dropped: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// How a ball's mass is split between planes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileBinning {
    /// Whole mass goes to the plane holding the ball center.
    #[default]
    Center,
    /// Mass split by the fraction of ball volume inside each plane.
    VolumeOverlap,
}

/// Center-binned profile over planes of unit thickness: plane `k` holds the
/// balls with `floor(z) == k`.
pub fn plane_profile(net: &PoreNetwork, dom: &[f64], planes: usize) -> MassProfile {
    plane_profile_with(net, dom, planes, ProfileBinning::Center)
}

pub fn plane_profile_with(net: &PoreNetwork, dom: &[f64], planes: usize, binning: ProfileBinning) -> MassProfile {
    assert_eq!(dom.len(), net.node_count(), "one mass per node");
    let mut values = vec![0.0; planes];
    let mut dropped = 0.0;
    for (n, &m) in net.nodes().iter().zip(dom) {
        if m == 0.0 {
            continue;
        }
        match binning {
            ProfileBinning::Center => {
                let z = n.center[2].floor();
                if z >= 0.0 && z < planes as f64 {
                    values[z as usize] += m;
                } else {
                    dropped += m;
                }
            }
            ProfileBinning::VolumeOverlap => {
                let (z, r) = (n.center[2], n.radius);
                let full = 4.0 / 3.0 * r * r * r;
                let lo = (z - r).floor() as i64;
                let hi = (z + r).floor() as i64;
                let mut kept = 0.0;
                for k in lo..=hi {
                    if k < 0 || k >= planes as i64 {
                        continue;
                    }
                    let a = (k as f64 - z).max(-r);
                    let b = (k as f64 + 1.0 - z).min(r);
                    if b <= a {
                        continue;
                    }
                    // sphere slice volume over pi
                    let slice = r * r * (b - a) - (b * b * b - a * a * a) / 3.0;
                    let part = m * slice / full;
                    values[k as usize] += part;
                    kept += part;
                }
                dropped += m - kept;
            }
        }
    }
    MassProfile {
        values,
        plane_thickness: 1.0,
        dropped,
    }
}

/// Normalized inner product of two profiles. Equals 1 iff they are positive
/// multiples of each other.
pub fn cosine_similarity(l: &MassProfile, m: &MassProfile) -> Result<f64> {
    cosine(&l.values, &m.values)
}

pub fn cosine(l: &[f64], m: &[f64]) -> Result<f64> {
    if l.len() != m.len() {
        return Err(Error::DimensionMismatch {
            expected: l.len(),
            got: m.len(),
        });
    }
    let ll: f64 = l.iter().map(|x| x * x).sum();
    let mm: f64 = m.iter().map(|x| x * x).sum();
    if ll == 0.0 || mm == 0.0 {
        return Err(Error::ZeroProfile);
    }
    let lm: f64 = l.iter().zip(m).map(|(a, b)| a * b).sum();
    // sqrt of the product keeps cos(L, L) == 1 exactly
    Ok((lm / (ll * mm).sqrt()).min(1.0))
}

/// Spreads `total` over the water-filled balls whose z-extent meets
/// `[z_lo, z_hi)`, in proportion to ball volume.
pub fn slab_placement(net: &PoreNetwork, water: &[bool], total: f64, z_lo: f64, z_hi: f64) -> Result<Vec<f64>> {
    if !(total >= 0.0) {
        return Err(Error::Domain(format!("mass must be non-negative, got {total}")));
    }
    let hit: Vec<bool> = net
        .nodes()
        .iter()
        .zip(water)
        .map(|(n, &w)| w && n.center[2] - n.radius < z_hi && n.center[2] + n.radius >= z_lo)
        .collect();
    let vol: f64 = net.nodes().iter().zip(&hit).filter(|(_, &h)| h).map(|(n, _)| n.volume).sum();
    if vol == 0.0 {
        return Err(Error::NoWater);
    }
    Ok(net
        .nodes()
        .iter()
        .zip(&hit)
        .map(|(n, &h)| if h { total * n.volume / vol } else { 0.0 })
        .collect())
}

/// Candidates `min, min + step, ...` up to `max` inclusive.
pub fn alpha_grid(min: f64, max: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(min > 0.0) || !(max <= 1.0) || min > max {
        return Err(Error::Config(format!(
            "invalid contact factor grid: min {min}, max {max}, step {step}"
        )));
    }
    let count = ((max - min) / step + 1e-9).floor() as usize + 1;
    Ok((0..count)
        .map(|k| ((min + k as f64 * step) * 1e12).round() / 1e12)
        .collect())
}

pub fn default_alpha_grid() -> Vec<f64> {
    alpha_grid(0.55, 1.0, 0.05).expect("valid default grid")
}

/// Pure-diffusion run shared by every contact-factor candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    /// Diffusion coefficient, voxel^2 per day.
    pub d_c: f64,
    /// Simulated time, days.
    pub t_end: f64,
    /// Implicit diffusion step, seconds.
    pub dt_diffusion: f64,
    pub alphas: Vec<f64>,
    pub binning: ProfileBinning,
    pub solver: SolverConfig,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            d_c: crate::biology::diffusion_presets::CALIBRATED,
            t_end: 1.783 / 24.0,
            dt_diffusion: 10.0,
            alphas: default_alpha_grid(),
            binning: ProfileBinning::Center,
            solver: SolverConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub alpha: f64,
    pub cosine: f64,
    /// `(alpha, cosine)` for every candidate, in grid order.
    pub scores: Vec<(f64, f64)>,
}

/// Runs pure implicit diffusion from `dom0` for `t_end` days and bins the
/// final DOM into `planes` planes.
pub fn simulate_profile(
    net: &PoreNetwork,
    water: &[bool],
    dom0: &[f64],
    planes: usize,
    cfg: &FitConfig,
) -> Result<MassProfile> {
    if !(cfg.t_end > 0.0) || !(cfg.dt_diffusion > 0.0) {
        return Err(Error::Config("calibration run needs positive end time and step".into()));
    }
    let dt = cfg.dt_diffusion / SECONDS_PER_DAY;
    let steps = ((cfg.t_end / dt) - 1e-9).ceil().max(1.0) as usize;
    let sys = ImplicitDiffusion::new(net, water, cfg.d_c, cfg.t_end / steps as f64)?;
    let mut dom = dom0.to_vec();
    for _ in 0..steps {
        sys.step(&mut dom, &cfg.solver)?;
    }
    Ok(plane_profile_with(net, &dom, planes, cfg.binning))
}

/// Grid search for the contact factor maximizing the cosine against
/// `reference`. Ties within 1e-12 go to the larger factor.
pub fn fit_alpha(
    net: &PoreNetwork,
    water: &[bool],
    dom0: &[f64],
    reference: &MassProfile,
    cfg: &FitConfig,
) -> Result<FitResult> {
    if cfg.alphas.is_empty() {
        return Err(Error::Config("empty contact factor grid".into()));
    }
    let scores: Vec<(f64, f64)> = cfg
        .alphas
        .par_iter()
        .map(|&alpha| {
            let scaled = net.with_contact_factor(alpha)?;
            let profile = simulate_profile(&scaled, water, dom0, reference.len(), cfg)?;
            Ok((alpha, cosine_similarity(reference, &profile)?))
        })
        .collect::<Result<_>>()?;
    let mut best = scores[0];
    for &(a, c) in &scores[1..] {
        let better = c > best.1 + 1e-12;
        let tie_larger = (c - best.1).abs() <= 1e-12 && a > best.0;
        if better || tie_larger {
            best = (a, c);
        }
    }
    Ok(FitResult {
        alpha: best.0,
        cosine: best.1,
        scores,
    })
}

/// Reads a profile stored as one value per line; blank and `#` lines are skipped.
pub fn read_profile(path: impl AsRef<Path>) -> Result<MassProfile> {
    let text = fs::read_to_string(path)?;
    let mut values = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let v: f64 = t.parse().map_err(|_| Error::Parse {
            line: k + 1,
            message: format!("expected a number, got {t:?}"),
        })?;
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::Parse {
                line: k + 1,
                message: format!("profile values must be finite and non-negative, got {v}"),
            });
        }
        values.push(v);
    }
    Ok(MassProfile::new(values))
}

pub fn write_profile(profile: &MassProfile, path: impl AsRef<Path>) -> Result<()> {
    let mut w = std::io::BufWriter::new(fs::File::create(path)?);
    for v in &profile.values {
        writeln!(w, "{v:.16e}")?;
    }
    w.flush()?;
    Ok(())
}
