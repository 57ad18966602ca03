use nalgebra::{Matrix4, Vector4};

use super::homoclinic::{plane_saddle, lattice_shift, solve_homoclinic_in_e, BvpOptions, Endpoints, FreeParameter, HomoclinicGuess};
use super::ConnectingOrbit;
use crate::error::{Error, Result};
use crate::integrate::{flow_variational, integrate_variational};
use crate::model::{eigen_split, EquilibriumId, Params, State};

/// Matching systems with a larger condition number count as singular.
const MAX_CONDITION: f64 = 1e12;
const MESH_POINTS: usize = 200;

/// Solution of the variational problem along a homoclinic orbit in `E31`
/// with jumps allowed in components 1 and 3 at `t = 0`.
#[derive(Debug, Clone)]
pub struct GapResult {
    /// Jump `V(0+) - V(0-)` in `eta1`.
    pub xi1: f64,
    /// Jump in `eta2`; this is the gap function `Delta`.
    pub xi2: f64,
    pub v_minus: State,
    pub v_plus: State,
    /// Condition number of the column-normalized 4×4 matching system.
    pub condition: f64,
    /// Sine of the angle between the transverse parts `(V3, V4)` of the
    /// backward- and forward-bounded solutions at `t = 0`. It vanishes
    /// exactly where `Delta` does but, unlike `Delta`, has no poles.
    pub transverse_angle: f64,
    /// Largest mismatch in components 2 and 4 at `t = 0`.
    pub continuity: f64,
    /// `V` on `[-T, 0]` followed by `V` on `[0, T]`; `t = 0` appears twice.
    pub mesh: Vec<(f64, State)>,
}

impl GapResult {
    pub fn delta(&self) -> f64 {
        self.xi2
    }
}

/// Real eigenvector of the transverse pair with the requested stability,
/// signed so that its `eta2` component is positive.
fn transverse_direction(id: EquilibriumId, p: &Params, unstable: bool) -> Result<State> {
    let split = eigen_split(id, p)?;
    let k = (0..2)
        .find(|&k| (split.transverse[k].re > 0.0) == unstable)
        .filter(|&k| split.transverse[k].im.abs() < 1e-12)
        .ok_or_else(|| Error::SpectralSplitFailure { real_parts: split.all().iter().map(|z| z.re).collect() })?;
    let v = split.transverse_vectors[k].map(|z| z.re);
    let v = if v[2] < 0.0 { -v } else { v };
    Ok(State::from_vector(&(v / v.norm())))
}

fn normalized(v: &State) -> State {
    (1.0 / v.norm()) * *v
}

/// Solves the linear matching problem along `orbit` (a converged `O -> O`
/// homoclinic in `E31`). Backward-bounded solutions start in the unstable
/// subspace of the source, forward-bounded ones in the stable subspace of
/// the target; both are normalized through `V1(0-) = 0`, `V3(0-) = 1`.
pub fn solve_variational_gap(orbit: &ConnectingOrbit, opts: &BvpOptions) -> Result<GapResult> {
    let p = orbit.params;
    let t = orbit.half_length;
    let src = plane_saddle(orbit.source, &p)?;
    // Target side worked at lift (0, 0); see the homoclinic solver.
    let tgt = plane_saddle(EquilibriumId::new(orbit.target.kind, 0, 0), &p)?;
    let shift = lattice_shift(orbit.target.lift) - lattice_shift(orbit.source.lift);
    let (a, b) = orbit.amplitudes;
    let start_offset = State::new(-a * src.r_u[0], -a * src.r_u[1], 0.0, 0.0);
    let end_offset = State::new(b * tgt.r_s[0], b * tgt.r_s[1], 0.0, 0.0);
    let start = src.point + start_offset;
    let so = opts.solver();
    // Same orientation as the orbit's endpoint offsets.
    let u_e = State::new(-src.r_u[0], -src.r_u[1], 0.0, 0.0);
    let s_e = State::new(tgt.r_s[0], tgt.r_s[1], 0.0, 0.0);
    let u_t = transverse_direction(orbit.source, &p, true)?;
    let s_t = transverse_direction(orbit.target, &p, false)?;

    let (_, u) = flow_variational(&src.point, &start_offset, &[u_e, u_t], &p, t, &so, false)?;
    let (z_plus, s) = flow_variational(&tgt.point, &end_offset, &[s_e, s_t], &p, t, &so, true)?;
    let z_plus = tgt.point + z_plus + shift;
    let u_norm = [u[0].norm(), u[1].norm()];
    let u: Vec<State> = u.iter().map(normalized).collect();
    let s: Vec<State> = s.iter().map(normalized).collect();

    let m = Matrix4::new(
        u[0].0[0], u[1].0[0], 0.0, 0.0,
        u[0].0[2], u[1].0[2], 0.0, 0.0,
        u[0].0[1], u[1].0[1], -s[0].0[1], -s[1].0[1],
        u[0].0[3], u[1].0[3], -s[0].0[3], -s[1].0[3],
    );
    let sv = m.singular_values();
    let condition = sv.max() / sv.min();
    if !(condition < MAX_CONDITION) {
        return Err(Error::SingularLinearSystem { condition });
    }
    let c = m
        .lu()
        .solve(&Vector4::new(0.0, 1.0, 0.0, 0.0))
        .ok_or(Error::SingularLinearSystem { condition })?;
    let v_minus = c[0] * u[0] + c[1] * u[1];
    let v_plus = c[2] * s[0] + c[3] * s[1];

    let (a, a1, b, b1) = (u[1].0[2], u[1].0[3], s[1].0[2], s[1].0[3]);
    let transverse_angle = (a * b1 - a1 * b) / (a.hypot(a1) * b.hypot(b1));

    // Rebuild V on both halves from its values at the ends of the shots.
    let mut mesh = Vec::with_capacity(2 * MESH_POINTS + 2);
    let v0 = (c[0] / u_norm[0]) * u_e + (c[1] / u_norm[1]) * u_t;
    let left = integrate_variational(&start, &[v0], &p, (-t, 0.0), opts.tol)?;
    // Forward from the matching point; V decays there, so errors stay small.
    let right = integrate_variational(&z_plus, &[v_plus], &p, (0.0, t), opts.tol)?;
    for k in 0..=MESH_POINTS {
        let tk = -t + t * k as f64 / MESH_POINTS as f64;
        mesh.push((tk, left.tangents_at(tk)[0]));
    }
    for k in 0..=MESH_POINTS {
        let tk = t * k as f64 / MESH_POINTS as f64;
        mesh.push((tk, right.tangents_at(tk)[0]));
    }

    Ok(GapResult {
        xi1: v_plus.eta1() - v_minus.eta1(),
        xi2: v_plus.eta2() - v_minus.eta2(),
        v_minus,
        v_plus,
        condition,
        transverse_angle,
        continuity: (v_plus.psi1() - v_minus.psi1()).abs().max((v_plus.psi2() - v_minus.psi2()).abs()),
        mesh,
    })
}

#[derive(Debug, Clone)]
pub struct PointBOptions {
    pub bvp: BvpOptions,
    /// Stop once `|Delta|` is below this.
    pub tol: f64,
    /// Guess for `mu_Gamma` at the bracket ends.
    pub mu_seed: f64,
    pub epsilon: f64,
    pub max_evaluations: usize,
}

impl Default for PointBOptions {
    fn default() -> Self {
        PointBOptions {
            bvp: BvpOptions::default(),
            tol: 1e-8,
            mu_seed: 0.035,
            epsilon: crate::model::DEFAULT_EPSILON,
            max_evaluations: 80,
        }
    }
}

/// The homoclinic tangency: where the gap function vanishes along the curve
/// of homoclinic orbits.
#[derive(Debug, Clone)]
pub struct PointB {
    pub alpha: f64,
    pub mu: f64,
    pub orbit: ConnectingOrbit,
    pub gap: GapResult,
    pub evaluations: usize,
}

fn homoclinic_and_gap(alpha: f64, guess: &HomoclinicGuess, opts: &PointBOptions) -> Result<(ConnectingOrbit, GapResult)> {
    let p = Params::new(alpha, guess.value).with_epsilon(opts.epsilon);
    let orbit = solve_homoclinic_in_e(&p, FreeParameter::Mu, Endpoints::OToO, guess, &opts.bvp)?;
    let gap = solve_variational_gap(&orbit, &opts.bvp)?;
    Ok((orbit, gap))
}

/// Locates the zero of `Delta(alpha) = xi2(alpha, mu_Gamma(alpha))` inside
/// `bracket`.
///
/// The search runs on the pole-free [`GapResult::transverse_angle`], whose
/// zeros are those of `Delta`; `Delta` itself changes sign across poles
/// where the normalization `V3(0-) = 1` cannot be met.
pub fn find_point_b(bracket: (f64, f64), opts: &PointBOptions) -> Result<PointB> {
    let (mut lo, mut hi) = bracket;
    if !(hi > lo) {
        return Err(Error::InvalidInput(format!("empty bracket [{lo}, {hi}]")));
    }
    let (mut olo, glo) = homoclinic_and_gap(lo, &HomoclinicGuess::auto(opts.mu_seed), opts)?;
    let (mut ohi, ghi) = homoclinic_and_gap(hi, &HomoclinicGuess::auto(opts.mu_seed), opts)?;
    let mut evaluations = 2;
    if (glo.transverse_angle < 0.0) == (ghi.transverse_angle < 0.0) {
        return Err(Error::NoSignChange { lo, hi, f_lo: glo.xi2, f_hi: ghi.xi2 });
    }
    let (mut flo, mut fhi) = (glo.transverse_angle, ghi.transverse_angle);
    let mut side = 0i8;
    loop {
        let mut c = (lo * fhi - hi * flo) / (fhi - flo);
        if !(c > lo && c < hi) {
            c = 0.5 * (lo + hi);
        }
        let near = if c - lo < hi - c { &olo } else { &ohi };
        let guess = HomoclinicGuess::from_orbit(near, FreeParameter::Mu);
        let (oc, gc) = homoclinic_and_gap(c, &guess, opts)?;
        evaluations += 1;
        if gc.xi2.abs() < opts.tol || hi - lo < 1e-13 || evaluations >= opts.max_evaluations {
            if gc.xi2.abs() >= opts.tol {
                return Err(Error::NewtonDivergence { iterations: evaluations, residual: gc.xi2.abs() });
            }
            return Ok(PointB { alpha: c, mu: oc.params.mu, orbit: oc, gap: gc, evaluations });
        }
        let fc = gc.transverse_angle;
        if (fc < 0.0) == (fhi < 0.0) {
            hi = c;
            fhi = fc;
            ohi = oc;
            if side == -1 {
                flo *= 0.5;
            }
            side = -1;
        } else {
            lo = c;
            flo = fc;
            olo = oc;
            if side == 1 {
                fhi *= 0.5;
            }
            side = 1;
        }
    }
}

/// `(alpha, mu_Gamma, gap)` at each `alpha`, continuing the homoclinic from
/// one value to the next. Stops at the first failure.
pub fn gap_along_curve(alphas: &[f64], opts: &PointBOptions) -> Result<Vec<(f64, f64, GapResult)>> {
    let mut out = Vec::with_capacity(alphas.len());
    let mut prev: Option<ConnectingOrbit> = None;
    for &alpha in alphas {
        let guess = match &prev {
            Some(o) => HomoclinicGuess::from_orbit(o, FreeParameter::Mu),
            None => HomoclinicGuess::auto(opts.mu_seed),
        };
        let (orbit, gap) = homoclinic_and_gap(alpha, &guess, opts)?;
        out.push((alpha, orbit.params.mu, gap));
        prev = Some(orbit);
    }
    Ok(out)
}
