use std::f64::consts::{PI, TAU};
use std::fmt;

use super::basis::projection_basis;
use super::ConnectingOrbit;
use crate::error::{Error, Result};
use crate::integrate::{first_crossing, flow_to, Direction, SolverOptions};
use crate::model::{coupling_gradient, equilibrium, EquilibriumId, EquilibriumKind, Params, State};
use crate::newton::{newton, NewtonOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FreeParameter {
    Alpha,
    Mu,
}

impl FreeParameter {
    pub(crate) fn get(self, p: &Params) -> f64 {
        match self {
            FreeParameter::Alpha => p.alpha,
            FreeParameter::Mu => p.mu,
        }
    }

    pub(crate) fn set(self, p: &Params, v: f64) -> Params {
        match self {
            FreeParameter::Alpha => p.with_alpha(v),
            FreeParameter::Mu => p.with_mu(v),
        }
    }

    /// Scan step used when bracketing the automatic seed.
    fn scan_step(self) -> f64 {
        match self {
            FreeParameter::Alpha => 0.01,
            FreeParameter::Mu => 0.002,
        }
    }
}

/// Which equilibria of `E31` the orbit connects: lift `(0, 0)` to `(-1, 0)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endpoints {
    OToO,
    SToS,
}

impl Endpoints {
    pub fn ids(self) -> (EquilibriumId, EquilibriumId) {
        let kind = match self {
            Endpoints::OToO => EquilibriumKind::O,
            Endpoints::SToS => EquilibriumKind::S31,
        };
        (EquilibriumId::new(kind, 0, 0), EquilibriumId::new(kind, -1, 0))
    }
}

#[derive(Debug, Clone)]
pub struct BvpOptions {
    /// Truncation half-length `T`.
    pub half_length: f64,
    /// Integrator relative tolerance.
    pub tol: f64,
    /// Integrator absolute tolerance. Endpoint offsets shrink like
    /// `exp(-|lambda| T)`, so this must sit far below `tol`.
    pub atol: f64,
    /// Newton stops when every boundary residual is below this.
    pub newton_tol: f64,
    pub max_iterations: usize,
    /// Offset along the eigendirections for the automatic seed.
    pub delta: f64,
    /// Longest shot used while seeding.
    pub seed_horizon: f64,
    /// Scan steps tried on each side of the guess while seeding.
    pub seed_scan: usize,
}

impl BvpOptions {
    pub(crate) fn solver(&self) -> SolverOptions {
        SolverOptions::new(self.tol).with_atol(self.atol)
    }
}

impl Default for BvpOptions {
    fn default() -> Self {
        BvpOptions {
            half_length: 150.0,
            tol: 1e-12,
            atol: 1e-24,
            newton_tol: 5e-9,
            max_iterations: 40,
            delta: 1e-6,
            seed_horizon: 4000.0,
            seed_scan: 40,
        }
    }
}

/// Starting point for [`solve_homoclinic_in_e`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomoclinicGuess {
    /// Approximate value of the free parameter.
    pub value: f64,
    /// Endpoint offsets of a nearby solution; `None` seeds automatically by
    /// shooting from both equilibria along their in-plane eigendirections.
    pub amplitudes: Option<(f64, f64)>,
}

impl HomoclinicGuess {
    pub fn auto(value: f64) -> Self {
        HomoclinicGuess { value, amplitudes: None }
    }

    pub fn from_orbit(orbit: &ConnectingOrbit, free: FreeParameter) -> Self {
        HomoclinicGuess { value: free.get(&orbit.params), amplitudes: Some(orbit.amplitudes) }
    }
}

/// Saddle structure of an equilibrium inside `E31`, where the linearization
/// restricted to the plane is `[[0, 1], [mu d1 f1, -eps]]`.
pub(super) struct PlaneSaddle {
    pub(super) point: State,
    pub(super) lam_u: f64,
    pub(super) lam_s: f64,
    /// Unit eigenvectors in `(eta1, psi1)`.
    pub(super) r_u: [f64; 2],
    pub(super) r_s: [f64; 2],
    /// Left eigenvectors: `l_s` annihilates `r_u` and vice versa.
    pub(super) l_s: [f64; 2],
    pub(super) l_u: [f64; 2],
}

fn unit(v: [f64; 2]) -> [f64; 2] {
    let n = v[0].hypot(v[1]);
    [v[0] / n, v[1] / n]
}

pub(super) fn plane_saddle(id: EquilibriumId, p: &Params) -> Result<PlaneSaddle> {
    let point = equilibrium(id, p)?;
    let k = p.mu * coupling_gradient(point.eta1(), point.eta2(), p.alpha)[0][0];
    let disc = p.epsilon * p.epsilon + 4.0 * k;
    if k <= 0.0 {
        let re = -0.5 * p.epsilon;
        let real_parts = if disc >= 0.0 {
            vec![re + 0.5 * disc.sqrt(), re - 0.5 * disc.sqrt()]
        } else {
            vec![re, re]
        };
        return Err(Error::SpectralSplitFailure { real_parts });
    }
    let lam_u = 0.5 * (-p.epsilon + disc.sqrt());
    let lam_s = 0.5 * (-p.epsilon - disc.sqrt());
    Ok(PlaneSaddle {
        point,
        lam_u,
        lam_s,
        r_u: unit([1.0, lam_u]),
        r_s: unit([1.0, lam_s]),
        l_s: unit([lam_u, -1.0]),
        l_u: unit([lam_s, -1.0]),
    })
}

/// Shift from lift `(0, 0)` to `lift` in the covering space.
pub(super) fn lattice_shift(lift: (i64, i64)) -> State {
    State::new(TAU * lift.0 as f64, 0.0, TAU * lift.1 as f64, 0.0)
}

/// Everything needed to evaluate the shooting residual at one parameter value.
///
/// Both shots start next to lift `(0, 0)` of their equilibrium so that tiny
/// offsets are represented exactly; the target shot is moved to its lift
/// afterwards, which is exact because the flow commutes with lattice shifts.
pub(super) struct Problem {
    pub(super) p: Params,
    pub(super) source: PlaneSaddle,
    pub(super) target: PlaneSaddle,
    pub(super) target_shift: State,
    pub(super) level: f64,
}

impl Problem {
    pub(super) fn new(p: Params, endpoints: Endpoints) -> Result<Self> {
        let (src, tgt) = endpoints.ids();
        let source = plane_saddle(src, &p)?;
        let target = plane_saddle(EquilibriumId::new(tgt.kind, 0, 0), &p)?;
        let level = source.point.eta1() - PI;
        Ok(Problem { p, source, target, target_shift: lattice_shift(tgt.lift), level })
    }

    /// `Z(-T)` minus the source: the orbit leaves toward decreasing `eta1`.
    pub(super) fn start_offset(&self, a: f64) -> State {
        State::new(-a * self.source.r_u[0], -a * self.source.r_u[1], 0.0, 0.0)
    }

    /// `Z(T)` minus the target: the orbit arrives from larger `eta1`.
    pub(super) fn end_offset(&self, b: f64) -> State {
        State::new(b * self.target.r_s[0], b * self.target.r_s[1], 0.0, 0.0)
    }

    pub(super) fn start(&self, a: f64) -> State {
        self.source.point + self.start_offset(a)
    }

    pub(super) fn end(&self, b: f64) -> State {
        self.target.point + self.end_offset(b) + self.target_shift
    }

    /// `Z(0-)` from the forward shot, optionally sampled.
    pub(super) fn forward(&self, a: f64, opts: &BvpOptions, nodes: Option<&mut Vec<(f64, State)>>) -> Result<State> {
        let base = self.source.point;
        Ok(base + flow_to(&base, &self.start_offset(a), &self.p, opts.half_length, &opts.solver(), false, nodes)?)
    }

    /// `Z(0+)` from the backward shot; sampled offsets are relative to the
    /// target at lift `(0, 0)`.
    pub(super) fn backward(&self, b: f64, opts: &BvpOptions, nodes: Option<&mut Vec<(f64, State)>>) -> Result<State> {
        let base = self.target.point;
        let d = flow_to(&base, &self.end_offset(b), &self.p, opts.half_length, &opts.solver(), true, nodes)?;
        Ok(base + d + self.target_shift)
    }
}

/// Residual of the truncated problem for log-amplitudes `(la, lb)`:
/// section condition plus continuity of `(eta1, psi1)` at `t = 0`.
fn shoot(pr: &Problem, la: f64, lb: f64, opts: &BvpOptions) -> Result<([f64; 3], State, State)> {
    let zm = pr.forward(la.exp(), opts, None)?;
    let zp = pr.backward(lb.exp(), opts, None)?;
    let r = [zm.eta1() - pr.level, zm.eta1() - zp.eta1(), zm.psi1() - zp.psi1()];
    if r.iter().all(|v| v.is_finite()) {
        Ok((r, zm, zp))
    } else {
        Err(Error::NewtonDivergence { iterations: 0, residual: f64::INFINITY })
    }
}

/// Mismatch in `psi1` on the section between the two eigendirection shots,
/// plus the travel times. `None` if either shot misses the section.
fn seed_mismatch(pr: &Problem, opts: &BvpOptions) -> Result<Option<(f64, f64, f64)>> {
    let d = opts.delta;
    let f = [1.0, 0.0, 0.0, 0.0];
    // Offsets here are `delta`, far above the absolute floor.
    let so = SolverOptions::new(opts.tol.max(1e-10));
    let u = first_crossing(&pr.start(d), &pr.p, f, pr.level, Direction::Decreasing, opts.seed_horizon, &so, false)?;
    let Some((tu, zu)) = u else { return Ok(None) };
    // Backward in time eta1 increases toward the section.
    let local_level = pr.level - pr.target_shift.eta1();
    let s = first_crossing(&(pr.target.point + pr.end_offset(d)), &pr.p, f, local_level, Direction::Increasing, opts.seed_horizon, &so, true)?;
    let Some((ts, zs)) = s else { return Ok(None) };
    Ok(Some((zu.psi1() - zs.psi1(), tu, ts)))
}

fn mismatch_at(p: &Params, free: FreeParameter, v: f64, endpoints: Endpoints, opts: &BvpOptions) -> Option<(f64, f64, f64)> {
    let pr = Problem::new(free.set(p, v), endpoints).ok()?;
    seed_mismatch(&pr, opts).ok().flatten()
}

/// Brackets a zero of the seed mismatch near `guess` and bisects it. Returns
/// the parameter value and the initial log-amplitudes.
fn auto_seed(p: &Params, free: FreeParameter, endpoints: Endpoints, guess: f64, opts: &BvpOptions) -> Result<(f64, f64, f64)> {
    let h = free.scan_step();
    let g0 = mismatch_at(p, free, guess, endpoints, opts);
    let mut bracket = None;
    'scan: for dir in [1.0, -1.0] {
        let mut prev = g0.map(|g| (guess, g.0));
        for k in 1..=opts.seed_scan {
            let v = guess + dir * h * k as f64;
            let Some(g) = mismatch_at(p, free, v, endpoints, opts) else {
                prev = None;
                continue;
            };
            if let Some((vp, gp)) = prev {
                if (gp < 0.0) != (g.0 < 0.0) {
                    bracket = Some(if vp < v { (vp, gp, v, g.0) } else { (v, g.0, vp, gp) });
                    break 'scan;
                }
            }
            prev = Some((v, g.0));
        }
    }
    let Some((mut lo, mut glo, mut hi, _)) = bracket else {
        let lo = guess - h * opts.seed_scan as f64;
        let hi = guess + h * opts.seed_scan as f64;
        return Err(Error::NoSignChange { lo, hi, f_lo: f64::NAN, f_hi: f64::NAN });
    };
    for _ in 0..60 {
        if hi - lo < 1e-12 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        match mismatch_at(p, free, mid, endpoints, opts) {
            Some((g, ..)) if (g < 0.0) == (glo < 0.0) => {
                lo = mid;
                glo = g;
            }
            Some(_) => hi = mid,
            None => break,
        }
    }
    let v = 0.5 * (lo + hi);
    let pr = Problem::new(free.set(p, v), endpoints)?;
    let Some((_, tu, ts)) = seed_mismatch(&pr, opts)? else {
        return Err(Error::NewtonDivergence { iterations: 0, residual: f64::INFINITY });
    };
    // Slide the eigendirection offsets to where the truncated orbit starts.
    let la = opts.delta.ln() + pr.source.lam_u * (tu - opts.half_length);
    let lb = opts.delta.ln() + pr.target.lam_s * (opts.half_length - ts);
    Ok((v, la, lb))
}

/// Homoclinic orbit inside `E31` between lifts `(0, 0)` and `(-1, 0)` of `O`
/// or `S31`, with `eta1(0)` pinned half a turn below the source.
///
/// The unknowns are the two endpoint offsets and the free parameter; `p`
/// supplies the fixed one.
pub fn solve_homoclinic_in_e(
    p: &Params,
    free: FreeParameter,
    endpoints: Endpoints,
    guess: &HomoclinicGuess,
    opts: &BvpOptions,
) -> Result<ConnectingOrbit> {
    p.validate()?;
    if !(opts.half_length > 0.0) {
        return Err(Error::InvalidInput(format!("half-length must be positive, got {}", opts.half_length)));
    }
    let (v0, la0, lb0) = match guess.amplitudes {
        Some((a, b)) if a > 0.0 && b > 0.0 => (guess.value, a.ln(), b.ln()),
        _ => auto_seed(p, free, endpoints, guess.value, opts)?,
    };
    let max_param_change = 10.0 * free.scan_step();
    let nopts = NewtonOptions {
        tol: opts.newton_tol,
        max_iterations: opts.max_iterations,
        fd_steps: vec![1e-6, 1e-6, 1e-7],
        max_change: vec![2.0, 2.0, max_param_change],
    };
    let residual = |x: &[f64]| -> Result<Vec<f64>> {
        let pr = Problem::new(free.set(p, x[2]), endpoints)?;
        Ok(shoot(&pr, x[0], x[1], opts)?.0.to_vec())
    };
    let sol = newton(residual, &[la0, lb0, v0], &nopts)?;
    let (a, b) = (sol.x[0].exp(), sol.x[1].exp());
    let pv = free.set(p, sol.x[2]);
    let pr = Problem::new(pv, endpoints)?;

    let expected = -TAU;
    if !(a < 0.5 && b < 0.5) {
        let drop = pr.end(b).eta1() - pr.start(a).eta1();
        return Err(Error::WrongWindingNumber { drop, expected });
    }
    let orbit = assemble(&pr, endpoints, a, b, opts)?;
    let drop = orbit.end().eta1() - orbit.start().eta1();
    let crossings = orbit.mesh.windows(2).filter(|w| (w[0].1.eta1() - pr.level) * (w[1].1.eta1() - pr.level) < 0.0).count();
    if (drop - expected).abs() > 0.5 || crossings > 1 {
        return Err(Error::WrongWindingNumber { drop, expected });
    }
    Ok(orbit)
}

/// Samples both halves and evaluates every boundary residual.
fn assemble(pr: &Problem, endpoints: Endpoints, a: f64, b: f64, opts: &BvpOptions) -> Result<ConnectingOrbit> {
    let t = opts.half_length;
    let zm0 = pr.start(a);
    let mut fwd = vec![(0.0, pr.start_offset(a))];
    let zm = pr.forward(a, opts, Some(&mut fwd))?;
    let fwd: Vec<(f64, State)> = fwd.into_iter().map(|(s, d)| (s, pr.source.point + d)).collect();
    let mut bwd = vec![(0.0, pr.end_offset(b))];
    let zp = pr.backward(b, opts, Some(&mut bwd))?;
    let back = pr.target.point + pr.target_shift;
    let bwd: Vec<(f64, State)> = bwd.into_iter().map(|(s, d)| (s, back + d)).collect();
    let mut mesh: Vec<(f64, State)> = fwd.into_iter().map(|(s, z)| (s - t, z)).collect();
    if let Some(last) = mesh.last_mut() {
        last.0 = 0.0;
    }
    // Backward nodes in increasing orbit time, skipping the duplicate at 0.
    mesh.extend(bwd.into_iter().rev().skip(1).map(|(s, z)| (t - s, z)));

    let (src, tgt) = endpoints.ids();
    let mut residuals = vec![
        ("section".to_string(), (zm.eta1() - pr.level).abs()),
        ("continuity".to_string(), (zm - zp).max_abs()),
    ];
    // Full projection conditions where the spectrum splits 2/2, otherwise
    // their in-plane counterparts.
    let tgt_local = EquilibriumId::new(tgt.kind, 0, 0);
    match (projection_basis(src, &pr.p), projection_basis(tgt_local, &pr.p)) {
        (Ok(bs), Ok(bt)) => {
            let [s1, s2] = bs.stable_coordinates(&zm0);
            let [u1, u2] = bt.unstable_coordinates(&(pr.target.point + pr.end_offset(b)));
            residuals.push(("proj_minus_1".into(), s1.abs()));
            residuals.push(("proj_minus_2".into(), s2.abs()));
            residuals.push(("proj_plus_1".into(), u1.abs()));
            residuals.push(("proj_plus_2".into(), u2.abs()));
        }
        _ => {
            let dm = pr.start_offset(a);
            let dp = pr.end_offset(b);
            let ls = pr.source.l_s;
            let lu = pr.target.l_u;
            residuals.push(("proj_minus_1".into(), (ls[0] * dm.eta1() + ls[1] * dm.psi1()).abs()));
            residuals.push(("proj_plus_1".into(), (lu[0] * dp.eta1() + lu[1] * dp.psi1()).abs()));
        }
    }
    let off_plane = mesh.iter().fold(0.0f64, |m, (_, z)| m.max(z.eta2().abs()).max(z.psi2().abs()));
    residuals.push(("confinement".into(), off_plane));
    Ok(ConnectingOrbit { half_length: t, mesh, source: src, target: tgt, params: pr.p, residuals, amplitudes: (a, b) })
}

/// A curve trace that stopped early.
#[derive(Debug, Clone)]
pub struct CurveError {
    pub error: Error,
    /// `(alpha, mu)` of the last converged point.
    pub last_good: Option<(f64, f64)>,
    pub computed: Vec<ConnectingOrbit>,
}

impl fmt::Display for CurveError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.last_good {
            Some((a, m)) => write!(f, "{} (last good point alpha = {a}, mu = {m})", self.error),
            None => write!(f, "{} (no point converged)", self.error),
        }
    }
}

impl std::error::Error for CurveError {}

impl From<CurveError> for Error {
    fn from(e: CurveError) -> Self {
        e.error
    }
}

/// `mu_Gamma(alpha)` on `n_points` equally spaced values of `alpha`, by
/// natural-parameter continuation from an automatic seed near `mu_seed`.
pub fn trace_homoclinic_curve(
    alpha_range: (f64, f64),
    n_points: usize,
    mu_seed: f64,
    epsilon: f64,
    opts: &BvpOptions,
) -> std::result::Result<Vec<ConnectingOrbit>, CurveError> {
    let fail = |error, computed: Vec<ConnectingOrbit>| {
        let last_good = computed.last().map(|o| (o.params.alpha, o.params.mu));
        CurveError { error, last_good, computed }
    };
    if n_points < 2 || !(alpha_range.1 > alpha_range.0) {
        return Err(fail(Error::InvalidInput("need n_points >= 2 and an increasing range".into()), Vec::new()));
    }
    let mut out: Vec<ConnectingOrbit> = Vec::with_capacity(n_points);
    for i in 0..n_points {
        let alpha = alpha_range.0 + (alpha_range.1 - alpha_range.0) * i as f64 / (n_points - 1) as f64;
        let guess = match out.last() {
            Some(o) => HomoclinicGuess::from_orbit(o, FreeParameter::Mu),
            None => HomoclinicGuess::auto(mu_seed),
        };
        let p = Params::new(alpha, guess.value).with_epsilon(epsilon);
        match solve_homoclinic_in_e(&p, FreeParameter::Mu, Endpoints::OToO, &guess, opts) {
            Ok(o) => out.push(o),
            Err(e) => return Err(fail(e, out)),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plane_saddle_vectors() {
        let p = Params::new(1.7, 0.03);
        let s = plane_saddle(EquilibriumId::origin(), &p).unwrap();
        let dot = |a: [f64; 2], b: [f64; 2]| a[0] * b[0] + a[1] * b[1];
        assert!(dot(s.l_s, s.r_u).abs() < 1e-15);
        assert!(dot(s.l_u, s.r_s).abs() < 1e-15);
        assert!((s.lam_u + s.lam_s + 0.1).abs() < 1e-15);
    }

    #[test]
    fn bifocus_is_not_a_plane_saddle() {
        assert!(plane_saddle(EquilibriumId::origin(), &Params::new(1.0, 0.06)).is_err());
    }
}
