use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use poresim::biology::{BioParams, BioState};
use poresim::calibration::{
    alpha_grid, fit_alpha, read_profile, simulate_profile, slab_placement, write_profile, FitConfig, ProfileBinning,
};
use poresim::drainage::drain_to_saturation;
use poresim::error::{Error, Result};
use poresim::implicit::{assemble, ImplicitConfig};
use poresim::network::{connected_components, load_network_with, read_network, write_network, LoadOptions, NetworkFormat, PoreNetwork};
use poresim::scenario::{run_scenario_csv, Scenario, SchemeKind};
use poresim::scheduler::{Scheme, Simulation};
use poresim::synthetic::{generate_synthetic_network, SyntheticKind};
use poresim::{calibration, ExplicitConfig};

/// Transformation-diffusion simulator on ball networks of soil pore space.
#[derive(Parser)]
#[command(name = "poresim", version)]
struct Cli {
    /// Worker threads for parallel sections.
    #[arg(long, global = true, env = "PORESIM_THREADS")]
    threads: Option<usize>,
    /// Log filter, e.g. `info` or `poresim=debug`.
    #[arg(long, global = true, env = "PORESIM_LOG", default_value = "warn")]
    log: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write the pool totals as CSV.
    Simulate(SimulateArgs),
    /// Drain a network to a target saturation and list the water-filled balls.
    Drain(DrainArgs),
    /// Fit the contact factor against a reference plane profile.
    Calibrate(CalibrateArgs),
    /// Plane profile of DOM after pure diffusion from a slab.
    Profile(ProfileArgs),
    /// Write a synthetic network.
    GenNet(GenNetArgs),
    /// Check the structural and numerical invariants on a network file.
    Validate(ValidateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Explicit,
    Implicit,
}

#[derive(Clone, Copy, ValueEnum)]
enum CouplingArg {
    Sync,
    Async,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Chain,
    Grid3d,
    #[value(alias = "random_tangent")]
    RandomTangent,
}

impl From<KindArg> for SyntheticKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Chain => SyntheticKind::Chain,
            KindArg::Grid3d => SyntheticKind::Grid3d,
            KindArg::RandomTangent => SyntheticKind::RandomTangent,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BinningArg {
    Center,
    VolumeOverlap,
}

impl From<BinningArg> for ProfileBinning {
    fn from(b: BinningArg) -> Self {
        match b {
            BinningArg::Center => ProfileBinning::Center,
            BinningArg::VolumeOverlap => ProfileBinning::VolumeOverlap,
        }
    }
}

#[derive(Args)]
struct NetworkArgs {
    /// Network file in the text ball format.
    #[arg(long)]
    network: PathBuf,
    /// Recompute every contact area as this factor times the min-radius
    /// disk. Without it, areas in the file are kept and missing ones use 0.6.
    #[arg(long)]
    contact_factor: Option<f64>,
}

impl NetworkArgs {
    fn load(&self) -> Result<PoreNetwork> {
        let options = LoadOptions { contact_factor: 0.6 };
        let net = load_network_with(&self.network, NetworkFormat::Text, options)?;
        match self.contact_factor {
            Some(alpha) => net.with_contact_factor(alpha),
            None => Ok(net),
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario JSON file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start from a named preset instead of a file.
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    #[arg(long)]
    network: Option<PathBuf>,
    #[arg(long)]
    saturation: Option<f64>,
    #[arg(long, value_enum)]
    scheme: Option<SchemeArg>,
    #[arg(long, value_enum)]
    coupling: Option<CouplingArg>,
    /// Diffusion time step, seconds.
    #[arg(long)]
    dt_diff: Option<f64>,
    /// Transformation time step, seconds.
    #[arg(long)]
    dt_bio: Option<f64>,
    #[arg(long)]
    p_neg: Option<f64>,
    #[arg(long)]
    cg_tol: Option<f64>,
    #[arg(long)]
    cg_max_iter: Option<usize>,
    /// Restore a halved step after this many clean steps.
    #[arg(long)]
    redouble_after: Option<usize>,
    /// Simulated time, hours.
    #[arg(long)]
    hours: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// CSV destination; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the final DOM plane profile here.
    #[arg(long)]
    profile: Option<PathBuf>,
    /// Print the resolved scenario as JSON and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Args)]
struct DrainArgs {
    #[command(flatten)]
    net: NetworkArgs,
    #[arg(long)]
    saturation: f64,
    /// Write water-filled ball ids here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SlabRunArgs {
    /// Diffusion coefficient, voxel^2 per day.
    #[arg(long, default_value_t = 40_000.0)]
    dc: f64,
    /// Diffusion time, hours.
    #[arg(long, default_value_t = 1.783)]
    hours: f64,
    /// Mass placed in the slab.
    #[arg(long, default_value_t = 592.7593)]
    mass: f64,
    #[arg(long, default_value_t = 0.0)]
    z_min: f64,
    #[arg(long, default_value_t = 2.0)]
    z_max: f64,
    /// Implicit diffusion step, seconds.
    #[arg(long, default_value_t = 10.0)]
    dt_diff: f64,
    #[arg(long, default_value_t = 1.0)]
    saturation: f64,
    #[arg(long, value_enum, default_value = "center")]
    binning: BinningArg,
}

impl SlabRunArgs {
    fn fit_config(&self, alphas: Vec<f64>) -> FitConfig {
        FitConfig {
            d_c: self.dc,
            t_end: self.hours / 24.0,
            dt_diffusion: self.dt_diff,
            alphas,
            binning: self.binning.into(),
            ..FitConfig::default()
        }
    }
}

#[derive(Args)]
struct CalibrateArgs {
    /// Network file; arc areas are rebuilt from radii for every candidate.
    #[arg(long)]
    network: PathBuf,
    /// Reference profile, one value per line.
    #[arg(long)]
    reference: PathBuf,
    #[arg(long, default_value_t = 0.55)]
    alpha_min: f64,
    #[arg(long, default_value_t = 1.0)]
    alpha_max: f64,
    #[arg(long, default_value_t = 0.05)]
    alpha_step: f64,
    #[command(flatten)]
    run: SlabRunArgs,
}

#[derive(Args)]
struct ProfileArgs {
    #[command(flatten)]
    net: NetworkArgs,
    #[arg(long, default_value_t = 300)]
    planes: usize,
    #[command(flatten)]
    run: SlabRunArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenNetArgs {
    #[arg(long, value_enum)]
    kind: KindArg,
    #[arg(long)]
    size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    net: NetworkArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().parse_filters(&cli.log).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Drain(a) => drain(a),
        Command::Calibrate(a) => calibrate(a),
        Command::Profile(a) => profile(a),
        Command::GenNet(a) => gen_net(a),
        Command::Validate(a) => validate(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numeric() {
                ExitCode::from(3)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(fs::File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn simulate(a: SimulateArgs) -> Result<ExitCode> {
    let mut scn = match (&a.config, &a.preset) {
        (Some(path), _) => Scenario::load(path)?,
        (None, Some(name)) => Scenario::preset(name)?,
        (None, None) => Scenario::default(),
    };
    if let Some(n) = a.network {
        scn.network = Some(n);
    }
    if let Some(s) = a.saturation {
        scn.saturation = s;
    }
    match (a.scheme, a.coupling) {
        (Some(SchemeArg::Implicit), Some(CouplingArg::Sync)) => {
            return Err(Error::Config("the implicit scheme only runs asynchronously".into()));
        }
        (Some(SchemeArg::Implicit), _) => scn.scheme = SchemeKind::ImplicitAsync,
        (Some(SchemeArg::Explicit), Some(CouplingArg::Sync)) => scn.scheme = SchemeKind::ExplicitSync,
        (Some(SchemeArg::Explicit), _) => scn.scheme = SchemeKind::ExplicitAsync,
        (None, Some(c)) => {
            if scn.scheme == SchemeKind::ImplicitAsync {
                return Err(Error::Config("--coupling needs --scheme explicit".into()));
            }
            scn.scheme = match c {
                CouplingArg::Sync => SchemeKind::ExplicitSync,
                CouplingArg::Async => SchemeKind::ExplicitAsync,
            };
        }
        (None, None) => {}
    }
    if let Some(v) = a.dt_diff {
        scn.dt_diffusion = v;
    }
    if let Some(v) = a.dt_bio {
        scn.dt_transform = v;
    }
    if let Some(v) = a.p_neg {
        scn.p_neg = v;
    }
    if let Some(v) = a.cg_tol {
        scn.cg_tol = v;
    }
    if a.cg_max_iter.is_some() {
        scn.cg_max_iter = a.cg_max_iter;
    }
    if a.redouble_after.is_some() {
        scn.redouble_after = a.redouble_after;
    }
    if let Some(h) = a.hours {
        scn.t_end_hours = Some(h);
        scn.t_end_days = None;
    }
    if let Some(s) = a.seed {
        scn.seed = s;
    }
    if a.out.is_some() {
        scn.output.csv = a.out;
    }
    if a.profile.is_some() {
        scn.output.profile = a.profile;
    }
    if a.print_config {
        println!("{}", scn.to_json()?);
        return Ok(ExitCode::SUCCESS);
    }
    let mut w = output(&scn.output.csv)?;
    let out = run_scenario_csv(&scn, &mut w)?;
    if let (Some(path), Some(p)) = (&scn.output.profile, &out.profile) {
        write_profile(p, path)?;
    }
    eprintln!(
        "{} steps, {} backtracks, {} repairs",
        out.stats.steps, out.stats.backtracks, out.stats.reallocations
    );
    Ok(ExitCode::SUCCESS)
}

fn drain(a: DrainArgs) -> Result<ExitCode> {
    let net = a.net.load()?;
    let d = drain_to_saturation(&net, a.saturation)?;
    let mut w = output(&a.out)?;
    for k in d.water_ids() {
        writeln!(w, "{}", net.external_ids()[k])?;
    }
    w.flush()?;
    eprintln!(
        "threshold {} achieved saturation {:.6} water-filled {} of {}",
        d.threshold,
        d.achieved_saturation,
        d.water_count(),
        net.node_count()
    );
    Ok(ExitCode::SUCCESS)
}

fn slab_setup(net: &PoreNetwork, run: &SlabRunArgs) -> Result<(Vec<bool>, Vec<f64>)> {
    let water = drain_to_saturation(net, run.saturation)?.water_mask;
    let dom0 = slab_placement(net, &water, run.mass, run.z_min, run.z_max)?;
    Ok((water, dom0))
}

fn calibrate(a: CalibrateArgs) -> Result<ExitCode> {
    let net = load_network_with(&a.network, NetworkFormat::Text, LoadOptions::default())?;
    let reference = read_profile(&a.reference)?;
    if reference.is_empty() {
        return Err(Error::Config("reference profile is empty".into()));
    }
    let (water, dom0) = slab_setup(&net, &a.run)?;
    let cfg = a.run.fit_config(alpha_grid(a.alpha_min, a.alpha_max, a.alpha_step)?);
    let fit = fit_alpha(&net, &water, &dom0, &reference, &cfg)?;
    println!("alpha,cosine");
    for (alpha, c) in &fit.scores {
        println!("{alpha},{c:.12}");
    }
    eprintln!("best alpha {} cosine {:.6}", fit.alpha, fit.cosine);
    Ok(ExitCode::SUCCESS)
}

fn profile(a: ProfileArgs) -> Result<ExitCode> {
    let net = a.net.load()?;
    let (water, dom0) = slab_setup(&net, &a.run)?;
    let p = simulate_profile(&net, &water, &dom0, a.planes, &a.run.fit_config(vec![]))?;
    match &a.out {
        Some(path) => calibration::write_profile(&p, path)?,
        None => {
            let mut w = output(&None)?;
            for v in &p.values {
                writeln!(w, "{v:.16e}")?;
            }
            w.flush()?;
        }
    }
    eprintln!("profile total {:.6e}, dropped {:.6e}", p.total(), p.dropped);
    Ok(ExitCode::SUCCESS)
}

fn gen_net(a: GenNetArgs) -> Result<ExitCode> {
    let net = generate_synthetic_network(a.kind.into(), a.size, a.seed)?;
    let w = output(&a.out)?;
    write_network(&net, w)?;
    eprintln!("{} balls, {} arcs", net.node_count(), net.arc_count());
    Ok(ExitCode::SUCCESS)
}

/// Named checks; every failure is reported, the exit code is 3 if any failed.
fn validate(a: ValidateArgs) -> Result<ExitCode> {
    let net = a.net.load()?;
    let n = net.node_count();
    let mut checks: Vec<(&str, bool, String)> = Vec::new();

    let consistent = net.arcs().iter().enumerate().all(|(k, arc)| {
        arc.i < arc.j && net.incident_arcs(arc.i).contains(&k) && net.incident_arcs(arc.j).contains(&k)
    });
    checks.push(("adjacency index matches arcs", consistent, format!("{} arcs", net.arc_count())));

    let all = vec![true; n];
    let comps = connected_components(&net, &all);
    let covered: usize = comps.iter().map(|c| c.len()).sum();
    checks.push(("components partition the balls", covered == n, format!("{} components", comps.len())));

    let mut buf = Vec::new();
    write_network(&net, &mut buf)?;
    let again = read_network(&buf[..], LoadOptions::default())?;
    let mut buf2 = Vec::new();
    write_network(&again, &mut buf2)?;
    checks.push(("text round trip is bit exact", buf == buf2, format!("{} bytes", buf.len())));

    let mut worst_row = 0.0f64;
    for comp in comps.iter().filter(|c| c.len() > 1) {
        let sys = assemble(&net, &all, comp, BioParams::default().d_c, 10.0 / 86_400.0)?;
        let ones = vec![1.0; sys.dim()];
        let rows = poresim::matvec(&sys.matrix, &ones)?;
        for (r, v) in rows.iter().zip(&sys.volumes) {
            worst_row = worst_row.max((r - v).abs() / v);
        }
    }
    checks.push(("implicit rows sum to volumes", worst_row <= 1e-12, format!("max relative gap {worst_row:.2e}")));

    // one hour of uniform biology plus a DOM gradient under both schemes
    let mut states: Vec<BioState> = vec![BioState::ZERO; n];
    for (k, (x, node)) in states.iter_mut().zip(net.nodes()).enumerate() {
        x.dom = if k % 2 == 0 { node.volume * 1e-3 } else { 0.0 };
        x.mb = if k % 7 == 0 { 1e-4 } else { 0.0 };
        x.fom = 1e-4;
    }
    let initial: f64 = states.iter().map(|x| x.total()).sum();
    let schemes = [
        ("implicit run conserves mass", Scheme::Implicit(ImplicitConfig::default())),
        (
            "explicit run conserves mass",
            Scheme::Explicit(ExplicitConfig {
                dt_diffusion: 1.0,
                dt_transform: 10.0,
                ..ExplicitConfig::default()
            }),
        ),
    ];
    for (name, scheme) in schemes {
        let mut sim = Simulation::new(&net, all.clone(), states.clone(), BioParams::default(), scheme)?;
        match sim.advance_to(1.0 / 24.0) {
            Ok(()) => {
                let total: f64 = sim.states().iter().map(|x| x.total()).sum();
                let drift = ((total - initial) / initial).abs();
                let nonneg = sim.states().iter().all(|x| x.is_nonnegative());
                checks.push((name, drift <= 1e-9 && nonneg, format!("relative drift {drift:.2e}")));
            }
            Err(e) => checks.push((name, false, e.to_string())),
        }
    }

    let mut failed = 0;
    for (name, ok, detail) in &checks {
        println!("{} {name}: {detail}", if *ok { "PASS" } else { "FAIL" });
        failed += usize::from(!ok);
    }
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(3) })
}
