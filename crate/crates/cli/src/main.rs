mod config;

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use kwi::integrate::integrate;
use kwi::lins::{
    find_het_s_to_o, find_point_b, gap_along_curve, solve_homoclinic_in_e, solve_variational_gap, trace_homoclinic_curve,
    BvpOptions, Endpoints, FreeParameter, HetOptions, HomoclinicGuess, PointBOptions,
};
use kwi::model::{eigen_split, equilibrium, vector_field, EquilibriumId, EquilibriumKind, Params, State};
use kwi::orbits::{
    detect_multiplier_crossing, floquet_multipliers, orbit_from_transient, CrossingOptions, CrossingTarget, OrbitOptions,
    PeriodicOrbit,
};
use kwi::sweep::{render_colormap, render_scalar, run_sweep, Axis, PayloadKind, SweepGrid, SweepSettings};
use num_complex::Complex64;

use config::{read_config, FlagValues, RunConfig};

/// Global bifurcation analysis of three identical Kuramoto oscillators with
/// inertia, in phase-difference coordinates (eta1, psi1, eta2, psi2).
///
/// Every run echoes its resolved settings to standard error. Exit status is
/// 0 on success, 1 when a solver fails and 2 on a usage error.
#[derive(Parser, Debug)]
#[command(name = "kwi", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// Settings shared by all subcommands. A value given as a flag wins over the
/// config file, which wins over the default.
#[derive(Args, Debug)]
struct Common {
    /// Config file of `key = value` lines (`#` comments). Keys: epsilon,
    /// t_final, transient, tol, bvp_t, q, m, delta, threads.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Damping [default: 0.1].
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    /// Integration time for `integrate` and `sweep` [default: 4000].
    #[arg(long = "t-final", global = true, value_name = "T")]
    t_final: Option<f64>,
    /// Discarded start of the averaged observable [default: t_final / 4].
    #[arg(long, global = true)]
    transient: Option<f64>,
    /// Integrator tolerance for `integrate` and `sweep` [default: 1e-10].
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Truncation half-length of connecting orbits [default: 150].
    #[arg(long = "bvp-t", global = true, value_name = "T")]
    bvp_t: Option<f64>,
    /// Geometric weight of successive phase slips [default: 0.5].
    #[arg(long, global = true)]
    q: Option<f64>,
    /// Number of phase slips counted [default: 20].
    #[arg(long, global = true)]
    m: Option<usize>,
    /// Offset of the sweep seed from S31 [default: 1e-4].
    #[arg(long, global = true)]
    delta: Option<f64>,
    /// Worker threads for `sweep` [default: KWI_THREADS, else all cores].
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// List O and the cluster states with their eigenvalues.
    Equilibria(EquilibriaArgs),
    /// Integrate one trajectory and write it as CSV.
    Integrate(IntegrateArgs),
    /// Homoclinic orbit inside E31 with one free parameter.
    Homoclinic(HomoclinicArgs),
    /// Curve mu_Gamma(alpha) of O -> O homoclinics.
    Curve(CurveArgs),
    /// Gap function along the homoclinic curve.
    Gap(GapArgs),
    /// Locate the homoclinic tangency B.
    PointB(PointBArgs),
    /// Locate the S31 -> O heteroclinic C.
    PointC(PointCArgs),
    /// Periodic orbit seeded from a transient.
    Orbit(OrbitArgs),
    /// Floquet multipliers of a periodic orbit.
    Floquet(OrbitArgs),
    /// Multiplier crossing of +1 (pitchfork of cycles) or -1 (period doubling) in alpha.
    Detect(DetectArgs),
    /// Grid of averaged observable or phase-slip codes.
    Sweep(SweepArgs),
    /// Render a grid CSV as a PPM image.
    Render(RenderArgs),
}

#[derive(Args, Debug)]
struct EquilibriaArgs {
    /// Phase lag.
    #[arg(long, allow_negative_numbers = true)]
    alpha: f64,
    /// Coupling strength.
    #[arg(long, allow_negative_numbers = true)]
    mu: f64,
    /// Lattice lift (p, q) applied to every equilibrium.
    #[arg(long, num_args = 2, value_names = ["P", "Q"], allow_negative_numbers = true, default_values_t = [0i64, 0])]
    lift: Vec<i64>,
}

#[derive(Args, Debug)]
struct IntegrateArgs {
    /// Phase lag.
    #[arg(long, allow_negative_numbers = true)]
    alpha: f64,
    /// Coupling strength.
    #[arg(long, allow_negative_numbers = true)]
    mu: f64,
    /// Initial state.
    #[arg(long, num_args = 4, value_names = ["ETA1", "PSI1", "ETA2", "PSI2"], allow_negative_numbers = true)]
    state: Vec<f64>,
    /// Start time.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    t0: f64,
    /// End time [default: t0 + t_final].
    #[arg(long, allow_negative_numbers = true)]
    t1: Option<f64>,
    /// CSV destination; standard output if absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum EndpointsArg {
    /// O^(0,0) -> O^(-1,0)
    OToO,
    /// S31^(0,0) -> S31^(-1,0)
    SToS,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FreeArg {
    /// Solve for alpha at fixed mu.
    Alpha,
    /// Solve for mu at fixed alpha.
    Mu,
}

#[derive(Args, Debug)]
struct HomoclinicArgs {
    /// Which equilibria the orbit connects.
    #[arg(long, value_enum, default_value = "o-to-o")]
    endpoints: EndpointsArg,
    /// Parameter solved for.
    #[arg(long, value_enum, default_value = "alpha")]
    free: FreeArg,
    /// Fixed value, or the guess when free.
    #[arg(long, allow_negative_numbers = true)]
    alpha: f64,
    /// Fixed value, or the guess when free.
    #[arg(long, allow_negative_numbers = true)]
    mu: f64,
    /// Orbit CSV destination.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Scalar sidecar destination; standard output if absent.
    #[arg(long)]
    sidecar: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CurveArgs {
    /// Alpha range of the curve.
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true)]
    alpha: Vec<f64>,
    /// Number of equally spaced alpha values.
    #[arg(long, default_value_t = 21)]
    n: usize,
    /// Guess for mu at the first alpha.
    #[arg(long = "mu-seed", default_value_t = 0.035)]
    mu_seed: f64,
    /// CSV destination (`alpha,mu`); standard output if absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GapArgs {
    /// Single alpha; prints the gaps and optionally writes V.
    #[arg(long, allow_negative_numbers = true, conflicts_with = "scan")]
    alpha: Option<f64>,
    /// Scan `LO HI N`; writes `alpha,mu,xi1,xi2,transverse_angle`.
    #[arg(long, num_args = 3, value_names = ["LO", "HI", "N"], allow_negative_numbers = true)]
    scan: Option<Vec<f64>>,
    /// Guess for mu_Gamma at the first alpha.
    #[arg(long = "mu-seed", default_value_t = 0.035)]
    mu_seed: f64,
    /// CSV destination: V on [-T, T] for one alpha, the scan otherwise.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PointBArgs {
    /// Alpha bracket containing one zero of the gap.
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], default_values_t = [1.65, 1.75])]
    bracket: Vec<f64>,
    /// Guess for mu_Gamma at the bracket ends.
    #[arg(long = "mu-seed", default_value_t = 0.035)]
    mu_seed: f64,
    /// Stop once |Delta| is below this.
    #[arg(long = "gap-tol", default_value_t = 1e-8)]
    gap_tol: f64,
    /// Homoclinic CSV destination.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PointCArgs {
    /// Starting point of the Newton iteration.
    #[arg(long, num_args = 2, value_names = ["ALPHA", "MU"], default_values_t = [1.73, 0.037])]
    guess: Vec<f64>,
    /// Lift of the target O.
    #[arg(long, num_args = 2, value_names = ["P", "Q"], allow_negative_numbers = true, default_values_t = [1i64, 1])]
    lift: Vec<i64>,
    /// Side of S31 to shoot from (+1 or -1); the closer pass if absent.
    #[arg(long, allow_negative_numbers = true)]
    branch: Option<i8>,
    /// Newton tolerance on the unstable projections.
    #[arg(long = "newton-tol", default_value_t = 1e-10)]
    newton_tol: f64,
    /// Stopping radii around the target, largest first.
    #[arg(long, num_args = 1.., default_values_t = [0.1, 1e-2, 1e-3, 1e-4])]
    radii: Vec<f64>,
    /// Orbit CSV destination.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct OrbitArgs {
    /// Phase lag.
    #[arg(long, allow_negative_numbers = true)]
    alpha: f64,
    /// Coupling strength.
    #[arg(long, allow_negative_numbers = true)]
    mu: f64,
    /// Lattice shift per period.
    #[arg(long, num_args = 2, value_names = ["K1", "K2"], allow_negative_numbers = true, default_values_t = [-1i64, 0])]
    winding: Vec<i64>,
    /// Start of the transient; a state in E31 yields an orbit in E31.
    #[arg(long, num_args = 4, value_names = ["ETA1", "PSI1", "ETA2", "PSI2"], allow_negative_numbers = true, default_values_t = [0.0, -1.0, 0.0, 0.0])]
    state: Vec<f64>,
    /// Settling time before the orbit is converged.
    #[arg(long = "settle", default_value_t = 2000.0)]
    settle: f64,
    /// One period as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Scalar sidecar destination; standard output if absent.
    #[arg(long)]
    sidecar: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TargetArg {
    /// Transverse multiplier of an orbit in E31 through +1.
    PlusOne,
    /// Real multiplier through -1.
    MinusOne,
}

#[derive(Args, Debug)]
struct DetectArgs {
    /// Coupling strength, fixed during continuation.
    #[arg(long)]
    mu: f64,
    /// Start of the alpha range.
    #[arg(long, allow_negative_numbers = true)]
    from: f64,
    /// End of the alpha range.
    #[arg(long, allow_negative_numbers = true)]
    to: f64,
    /// Multiplier crossing to look for.
    #[arg(long, value_enum)]
    target: TargetArg,
    /// Lattice shift per period.
    #[arg(long, num_args = 2, value_names = ["K1", "K2"], allow_negative_numbers = true, default_values_t = [-1i64, 0])]
    winding: Vec<i64>,
    /// Start of the transient at `from` [default: 0 -1 0 0 for plus-one,
    /// 0 -1 0.05 0 for minus-one].
    #[arg(long, num_args = 4, value_names = ["ETA1", "PSI1", "ETA2", "PSI2"], allow_negative_numbers = true)]
    state: Option<Vec<f64>>,
    /// Settling time before the orbit at `from` is converged.
    #[arg(long = "settle", default_value_t = 3000.0)]
    settle: f64,
    /// Continuation step in alpha.
    #[arg(long, default_value_t = 5e-3)]
    step: f64,
    /// Width of the final alpha bracket.
    #[arg(long = "alpha-tol", default_value_t = 1e-6)]
    alpha_tol: f64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum KindArg {
    /// Time average of D over [transient, t_final].
    MeanD,
    /// Weighted phase-slip counts K12, K23, K31.
    Slips,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Payload of each cell.
    #[arg(long, value_enum)]
    kind: KindArg,
    /// Alpha axis: first value, last value, number of points.
    #[arg(long, num_args = 3, value_names = ["MIN", "MAX", "N"], allow_negative_numbers = true)]
    alpha: Vec<f64>,
    /// Mu axis: first value, last value, number of points.
    #[arg(long, num_args = 3, value_names = ["MIN", "MAX", "N"])]
    mu: Vec<f64>,
    /// Grid CSV destination; standard output if absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// PPM destination.
    #[arg(long)]
    img: Option<PathBuf>,
    /// Append finished cells here and skip cells already present.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RenderArgs {
    /// Grid CSV written by `sweep`.
    #[arg(long)]
    input: PathBuf,
    /// PPM destination.
    #[arg(long)]
    img: PathBuf,
}

/// A failed run: exit status and message.
struct Failure {
    code: u8,
    message: String,
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: 2, message: message.into() }
}

impl From<kwi::Error> for Failure {
    fn from(e: kwi::Error) -> Self {
        let code = if matches!(e, kwi::Error::InvalidInput(_)) { 2 } else { 1 };
        Failure { code, message: e.to_string() }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure { code: 1, message: format!("i/o error: {e}") }
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code().clamp(0, 255) as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> Outcome {
    let c = &cli.common;
    let file = match &c.config {
        Some(p) => read_config(p).map_err(usage)?,
        None => Default::default(),
    };
    let flags = FlagValues {
        epsilon: c.epsilon,
        t_final: c.t_final,
        transient: c.transient,
        tol: c.tol,
        bvp_t: c.bvp_t,
        q: c.q,
        m: c.m,
        delta: c.delta,
        threads: c.threads,
    };
    let env = std::env::var("KWI_THREADS").ok();
    let cfg = RunConfig::resolve(&flags, &file, env.as_deref()).map_err(usage)?;
    eprint!("# kwi {}\n{}# {:?}\n", env!("CARGO_PKG_VERSION"), cfg.echo(), cli.command);
    match &cli.command {
        Command::Equilibria(a) => equilibria(a, &cfg),
        Command::Integrate(a) => integrate_cmd(a, &cfg),
        Command::Homoclinic(a) => homoclinic(a, &cfg),
        Command::Curve(a) => curve(a, &cfg),
        Command::Gap(a) => gap(a, &cfg),
        Command::PointB(a) => point_b(a, &cfg),
        Command::PointC(a) => point_c(a, &cfg),
        Command::Orbit(a) => orbit(a, &cfg, false),
        Command::Floquet(a) => orbit(a, &cfg, true),
        Command::Detect(a) => detect(a, &cfg),
        Command::Sweep(a) => sweep(a, &cfg),
        Command::Render(a) => render(a),
    }
}

fn params(alpha: f64, mu: f64, cfg: &RunConfig) -> Result<Params, Failure> {
    let p = Params::new(alpha, mu).with_epsilon(cfg.epsilon);
    p.validate()?;
    Ok(p)
}

fn state_of(v: &[f64]) -> State {
    State::new(v[0], v[1], v[2], v[3])
}

fn bvp(cfg: &RunConfig) -> BvpOptions {
    BvpOptions { half_length: cfg.bvp_t, ..BvpOptions::default() }
}

/// Writer for `path`, or standard output.
fn sink(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn say(text: &str) -> Outcome {
    let mut out = io::stdout().lock();
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(())
}

fn complex(z: &Complex64) -> String {
    if z.im == 0.0 {
        format!("{}", z.re)
    } else {
        format!("{}{:+}i", z.re, z.im)
    }
}

fn equilibria(a: &EquilibriaArgs, cfg: &RunConfig) -> Outcome {
    let p = params(a.alpha, a.mu, cfg)?;
    let mut text = String::new();
    for kind in [EquilibriumKind::O, EquilibriumKind::S12, EquilibriumKind::S23, EquilibriumKind::S31] {
        let id = EquilibriumId::new(kind, a.lift[0], a.lift[1]);
        match equilibrium(id, &p).and_then(|s| Ok((s, eigen_split(id, &p)?))) {
            Ok((s, split)) => {
                let residual = vector_field(&s, &p).max_abs();
                text += &format!(
                    "{id} state = ({}, {}, {}, {}) residual = {residual:e} parallel = [{}, {}] transverse = [{}, {}]\n",
                    s.eta1(),
                    s.psi1(),
                    s.eta2(),
                    s.psi2(),
                    complex(&split.parallel[0]),
                    complex(&split.parallel[1]),
                    complex(&split.transverse[0]),
                    complex(&split.transverse[1]),
                );
            }
            Err(e) => text += &format!("{id} unavailable: {e}\n"),
        }
    }
    say(&text)
}

fn integrate_cmd(a: &IntegrateArgs, cfg: &RunConfig) -> Outcome {
    let p = params(a.alpha, a.mu, cfg)?;
    let t1 = a.t1.unwrap_or(a.t0 + cfg.t_final);
    let tr = integrate(&state_of(&a.state), &p, (a.t0, t1), cfg.tol)?;
    let mut w = sink(a.out.as_deref())?;
    tr.write_csv(&mut w)?;
    w.flush()?;
    let st = tr.stats();
    eprintln!("# steps = {} rejected = {} final = {}", st.accepted, st.rejected, tr.final_state());
    Ok(())
}

fn homoclinic(a: &HomoclinicArgs, cfg: &RunConfig) -> Outcome {
    let p = params(a.alpha, a.mu, cfg)?;
    let (free, value) = match a.free {
        FreeArg::Alpha => (FreeParameter::Alpha, a.alpha),
        FreeArg::Mu => (FreeParameter::Mu, a.mu),
    };
    let ends = match a.endpoints {
        EndpointsArg::OToO => Endpoints::OToO,
        EndpointsArg::SToS => Endpoints::SToS,
    };
    let orbit = solve_homoclinic_in_e(&p, free, ends, &HomoclinicGuess::auto(value), &bvp(cfg))?;
    if let Some(path) = &a.out {
        let mut w = sink(Some(path))?;
        orbit.write_csv(&mut w)?;
        w.flush()?;
    }
    let mut w = sink(a.sidecar.as_deref())?;
    orbit.write_sidecar(&mut w)?;
    w.flush()?;
    if a.sidecar.is_some() {
        say(&format!("alpha={} mu={}\n", orbit.params.alpha, orbit.params.mu))?;
    }
    Ok(())
}

fn curve(a: &CurveArgs, cfg: &RunConfig) -> Outcome {
    let r = trace_homoclinic_curve((a.alpha[0], a.alpha[1]), a.n, a.mu_seed, cfg.epsilon, &bvp(cfg));
    let (orbits, err) = match r {
        Ok(o) => (o, None),
        Err(e) => (e.computed.clone(), Some(e)),
    };
    let mut w = sink(a.out.as_deref())?;
    writeln!(w, "alpha,mu")?;
    for o in &orbits {
        writeln!(w, "{},{}", o.params.alpha, o.params.mu)?;
    }
    w.flush()?;
    match err {
        Some(e) => Err(Failure { code: if matches!(e.error, kwi::Error::InvalidInput(_)) { 2 } else { 1 }, message: e.to_string() }),
        None => Ok(()),
    }
}

fn gap_options(mu_seed: f64, cfg: &RunConfig) -> PointBOptions {
    PointBOptions { bvp: bvp(cfg), mu_seed, epsilon: cfg.epsilon, ..PointBOptions::default() }
}

fn gap(a: &GapArgs, cfg: &RunConfig) -> Outcome {
    let opts = gap_options(a.mu_seed, cfg);
    if let Some(scan) = &a.scan {
        let n = scan[2];
        if !(n >= 2.0 && n.fract() == 0.0) {
            return Err(usage(format!("scan count must be an integer >= 2, got {n}")));
        }
        let n = n as usize;
        let alphas: Vec<f64> = (0..n).map(|k| scan[0] + (scan[1] - scan[0]) * k as f64 / (n - 1) as f64).collect();
        let rows = gap_along_curve(&alphas, &opts)?;
        let mut w = sink(a.out.as_deref())?;
        writeln!(w, "alpha,mu,xi1,xi2,transverse_angle")?;
        for (al, mu, g) in rows {
            writeln!(w, "{al},{mu},{},{},{}", g.xi1, g.xi2, g.transverse_angle)?;
        }
        w.flush()?;
        return Ok(());
    }
    let alpha = a.alpha.ok_or_else(|| usage("give --alpha or --scan"))?;
    let p = params(alpha, a.mu_seed, cfg)?;
    let orbit = solve_homoclinic_in_e(&p, FreeParameter::Mu, Endpoints::OToO, &HomoclinicGuess::auto(a.mu_seed), &opts.bvp)?;
    let g = solve_variational_gap(&orbit, &opts.bvp)?;
    if let Some(path) = &a.out {
        let mut w = sink(Some(path))?;
        writeln!(w, "t,v1,v2,v3,v4")?;
        for (t, v) in &g.mesh {
            writeln!(w, "{t},{},{},{},{}", v.0[0], v.0[1], v.0[2], v.0[3])?;
        }
        w.flush()?;
    }
    say(&format!(
        "alpha={} mu={} xi1={} xi2={} transverse_angle={} condition={}\n",
        alpha, orbit.params.mu, g.xi1, g.xi2, g.transverse_angle, g.condition
    ))
}

fn point_b(a: &PointBArgs, cfg: &RunConfig) -> Outcome {
    let opts = PointBOptions { tol: a.gap_tol, ..gap_options(a.mu_seed, cfg) };
    let b = find_point_b((a.bracket[0], a.bracket[1]), &opts)?;
    if let Some(path) = &a.out {
        let mut w = sink(Some(path))?;
        b.orbit.write_csv(&mut w)?;
        w.flush()?;
    }
    say(&format!("alpha={} mu={} xi1={} xi2={} evaluations={}\n", b.alpha, b.mu, b.gap.xi1, b.gap.xi2, b.evaluations))
}

fn point_c(a: &PointCArgs, cfg: &RunConfig) -> Outcome {
    if let Some(b) = a.branch {
        if b != 1 && b != -1 {
            return Err(usage(format!("--branch must be 1 or -1, got {b}")));
        }
    }
    let opts = HetOptions {
        newton_tol: a.newton_tol,
        radii: a.radii.clone(),
        branch: a.branch,
        epsilon: cfg.epsilon,
        ..HetOptions::default()
    };
    let c = find_het_s_to_o((a.guess[0], a.guess[1]), (a.lift[0], a.lift[1]), &opts)?;
    if let Some(path) = &a.out {
        let mut w = sink(Some(path))?;
        c.orbit.write_csv(&mut w)?;
        w.flush()?;
    }
    say(&format!(
        "alpha={} mu={} branch={} residual_1={:e} residual_2={:e}\n",
        c.alpha, c.mu, c.branch, c.residuals[0], c.residuals[1]
    ))
}

fn converge_orbit(alpha: f64, mu: f64, winding: &[i64], state: &[f64], settle: f64, cfg: &RunConfig) -> Result<PeriodicOrbit, Failure> {
    let p = params(alpha, mu, cfg)?;
    if !(settle >= 0.0) {
        return Err(usage(format!("--settle must be nonnegative, got {settle}")));
    }
    Ok(orbit_from_transient(&p, &state_of(state), (winding[0], winding[1]), settle, &OrbitOptions::default())?)
}

fn orbit(a: &OrbitArgs, cfg: &RunConfig, with_floquet: bool) -> Outcome {
    let o = converge_orbit(a.alpha, a.mu, &a.winding, &a.state, a.settle, cfg)?;
    let f = if with_floquet { Some(floquet_multipliers(&o, 1e-11)?) } else { None };
    if let Some(path) = &a.out {
        let mut w = sink(Some(path))?;
        o.write_csv(&mut w, 1e-11)?;
        w.flush()?;
    }
    let mut w = sink(a.sidecar.as_deref())?;
    o.write_sidecar(&mut w, f.as_ref())?;
    w.flush()?;
    if let Some(f) = &f {
        let mut text = format!("trivial = multiplier_{}\n", f.trivial);
        text += &format!("determinant = {}\nexp(-2 epsilon period) = {}\n", f.determinant(), (-2.0 * cfg.epsilon * o.period).exp());
        if let Some(t) = f.transverse {
            text += &format!("transverse = {} {}\n", complex(&t[0]), complex(&t[1]));
        }
        say(&text)?;
    }
    Ok(())
}

fn detect(a: &DetectArgs, cfg: &RunConfig) -> Outcome {
    let (target, default_state) = match a.target {
        TargetArg::PlusOne => (CrossingTarget::PlusOneTransverse, [0.0, -1.0, 0.0, 0.0]),
        TargetArg::MinusOne => (CrossingTarget::MinusOne, [0.0, -1.0, 0.05, 0.0]),
    };
    let state = a.state.clone().unwrap_or_else(|| default_state.to_vec());
    let start = converge_orbit(a.from, a.mu, &a.winding, &state, a.settle, cfg)?;
    let opts = CrossingOptions { step: a.step, tol: a.alpha_tol, ..CrossingOptions::default() };
    let c = detect_multiplier_crossing(&start, a.to, target, &opts)?;
    let mults: Vec<String> = c.floquet.multipliers.iter().map(complex).collect();
    say(&format!(
        "alpha={} mu={} distance={:e} period={} multipliers=[{}]\n",
        c.alpha,
        a.mu,
        c.distance,
        c.orbit.period,
        mults.join(", ")
    ))
}

fn axis(v: &[f64], name: &str) -> Result<Axis, Failure> {
    if !(v[2] >= 2.0 && v[2].fract() == 0.0) {
        return Err(usage(format!("--{name} count must be an integer >= 2, got {}", v[2])));
    }
    Axis::new(v[0], v[1], v[2] as usize).map_err(|e| usage(e.to_string()))
}

fn write_image(path: &Path, grid: &SweepGrid) -> Outcome {
    let bytes = match grid.kind {
        PayloadKind::Slips => render_colormap(grid)?,
        PayloadKind::MeanD => render_scalar(grid)?,
    };
    std::fs::write(path, bytes)?;
    Ok(())
}

fn sweep(a: &SweepArgs, cfg: &RunConfig) -> Outcome {
    let alpha = axis(&a.alpha, "alpha")?;
    let mu = axis(&a.mu, "mu")?;
    let kind = match a.kind {
        KindArg::MeanD => PayloadKind::MeanD,
        KindArg::Slips => PayloadKind::Slips,
    };
    let settings = SweepSettings {
        epsilon: cfg.epsilon,
        t_final: cfg.t_final,
        transient: cfg.transient,
        delta: cfg.delta,
        q: cfg.q,
        m: cfg.m,
        tol: cfg.tol,
    };
    let grid = run_sweep(alpha, mu, kind, &settings, cfg.threads, a.checkpoint.as_deref())?;
    let mut w = sink(a.out.as_deref())?;
    grid.write_csv(&mut w)?;
    w.flush()?;
    if let Some(img) = &a.img {
        write_image(img, &grid)?;
    }
    eprintln!("# cells = {} failed = {}", grid.cells.len(), grid.failed());
    Ok(())
}

fn render(a: &RenderArgs) -> Outcome {
    let f = File::open(&a.input).map_err(|e| usage(format!("cannot open {}: {e}", a.input.display())))?;
    let grid = SweepGrid::read_csv(BufReader::new(f))?;
    write_image(&a.img, &grid)
}
