//! Winding periodic orbits as fixed points of the lattice-shifted return map
//! to `Σ = {eta1 = -π}`, their Floquet multipliers, and detection of the
//! multiplier crossings behind the pitchfork and period-doubling of cycles.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{Matrix2, Matrix4};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::integrate::{first_crossing, integrate, integrate_variational, Direction, SolverOptions, Trajectory};
use crate::lins::write_sidecar_header;
use crate::model::{eig2, Params, State};
use crate::newton::{newton, NewtonOptions};

/// Level of the section in the covering space.
pub const SECTION_LEVEL: f64 = -PI;

/// Smallest `|psi1|` on the section that still counts as a transversal crossing.
const MIN_CROSSING_SPEED: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct OrbitOptions {
    /// Integrator tolerance, absolute and relative.
    pub tol: f64,
    /// Newton tolerance on the closure mismatch.
    pub newton_tol: f64,
    pub max_iterations: usize,
    /// A return is searched for up to this many guessed periods.
    pub return_factor: f64,
}

impl Default for OrbitOptions {
    fn default() -> Self {
        OrbitOptions { tol: 1e-12, newton_tol: 1e-10, max_iterations: 30, return_factor: 3.0 }
    }
}

/// A periodic orbit in the covering space: `Z(period) = Z(0) + (2πk1, 0, 2πk2, 0)`.
#[derive(Debug, Clone)]
pub struct PeriodicOrbit {
    /// Representative on `Σ`.
    pub state: State,
    pub period: f64,
    pub winding: (i64, i64),
    /// Lies in `E31 = {eta2 = psi2 = 0}`.
    pub in_e: bool,
    pub params: Params,
    /// `|Z(period) - Z(0) - shift|` after convergence.
    pub closure: f64,
}

impl PeriodicOrbit {
    pub fn shift(&self) -> State {
        winding_shift(self.winding)
    }

    /// One period sampled at every accepted step.
    pub fn trajectory(&self, tol: f64) -> Result<Trajectory> {
        integrate(&self.state, &self.params, (0.0, self.period), tol)
    }

    /// `t,eta1,psi1,eta2,psi2` rows over one period.
    pub fn write_csv<W: Write>(&self, w: W, tol: f64) -> Result<()> {
        self.trajectory(tol)?.write_csv(w)
    }

    /// `key = value` scalars; multipliers are written when given.
    pub fn write_sidecar<W: Write>(&self, mut w: W, floquet: Option<&FloquetSet>) -> Result<()> {
        write_sidecar_header(&mut w, &self.params)?;
        writeln!(w, "period = {}", self.period)?;
        writeln!(w, "winding_k1 = {}", self.winding.0)?;
        writeln!(w, "winding_k2 = {}", self.winding.1)?;
        writeln!(w, "in_e = {}", self.in_e)?;
        writeln!(w, "residual_closure = {:e}", self.closure)?;
        if let Some(f) = floquet {
            for (k, m) in f.multipliers.iter().enumerate() {
                writeln!(w, "multiplier_{k} = {} {}", m.re, m.im)?;
            }
        }
        Ok(())
    }
}

fn winding_shift(k: (i64, i64)) -> State {
    State::new(2.0 * PI * k.0 as f64, 0.0, 2.0 * PI * k.1 as f64, 0.0)
}

fn direction(k1: i64) -> Direction {
    if k1 < 0 {
        Direction::Decreasing
    } else {
        Direction::Increasing
    }
}

/// Time and state of the return to `Σ` shifted by `k1` lattice periods.
fn return_map(z: &State, p: &Params, winding: (i64, i64), t_max: f64, opts: &OrbitOptions) -> Result<(f64, State)> {
    if z.psi1().abs() < MIN_CROSSING_SPEED {
        return Err(Error::DegenerateSection);
    }
    let level = SECTION_LEVEL + 2.0 * PI * winding.0 as f64;
    let so = SolverOptions::new(opts.tol);
    first_crossing(z, p, [1.0, 0.0, 0.0, 0.0], level, direction(winding.0), t_max, &so, false)?
        .ok_or(Error::DegenerateSection)
}

/// Moves `s0` forward to its first crossing of a lift of `Σ` in the winding
/// direction and translates it back onto `Σ` with `eta2` in `[-π, π)`.
fn onto_section(s0: &State, p: &Params, k1: i64, t_max: f64, opts: &OrbitOptions) -> Result<State> {
    let m = ((s0.eta1() - SECTION_LEVEL) / (2.0 * PI)).floor();
    let on = s0.eta1() == SECTION_LEVEL + 2.0 * PI * m;
    let z = if on {
        *s0
    } else {
        let level = SECTION_LEVEL + 2.0 * PI * if k1 < 0 { m } else { m + 1.0 };
        let so = SolverOptions::new(opts.tol);
        first_crossing(s0, p, [1.0, 0.0, 0.0, 0.0], level, direction(k1), t_max, &so, false)?
            .ok_or(Error::DegenerateSection)?
            .1
    };
    let q = ((z.eta2() + PI) / (2.0 * PI)).floor();
    Ok(State::new(SECTION_LEVEL, z.psi1(), z.eta2() - 2.0 * PI * q, z.psi2()))
}

/// Converges a periodic orbit with the given winding from a nearby state and
/// period. Orbits seeded exactly in `E31` with `k2 = 0` are solved inside
/// `E31` (one unknown, `psi1` on `Σ`); all others with three unknowns
/// `(psi1, eta2, psi2)`. `k1` must be nonzero.
pub fn find_periodic_orbit(
    p: &Params,
    winding: (i64, i64),
    guess: &State,
    period_guess: f64,
    opts: &OrbitOptions,
) -> Result<PeriodicOrbit> {
    p.validate()?;
    if winding.0 == 0 {
        return Err(Error::InvalidInput("winding k1 must be nonzero; orbits are sectioned by eta1".into()));
    }
    if !(period_guess > 0.0) || !guess.is_finite() {
        return Err(Error::InvalidInput(format!("bad orbit guess (period {period_guess})")));
    }
    let t_max = opts.return_factor * period_guess;
    let z0 = onto_section(guess, p, winding.0, t_max, opts)?;
    let in_e = z0.eta2() == 0.0 && z0.psi2() == 0.0 && winding.1 == 0;
    let shift = winding_shift(winding);
    let assemble = |x: &[f64]| {
        if in_e {
            State::new(SECTION_LEVEL, x[0], 0.0, 0.0)
        } else {
            State::new(SECTION_LEVEL, x[0], x[1], x[2])
        }
    };
    let residual = |x: &[f64]| -> Result<Vec<f64>> {
        let z = assemble(x);
        let (_, end) = return_map(&z, p, winding, t_max, opts)?;
        let d = end - z - shift;
        Ok(if in_e { vec![d.psi1()] } else { vec![d.psi1(), d.eta2(), d.psi2()] })
    };
    let x0: Vec<f64> = if in_e { vec![z0.psi1()] } else { vec![z0.psi1(), z0.eta2(), z0.psi2()] };
    let n = x0.len();
    let nopts = NewtonOptions {
        tol: opts.newton_tol,
        max_iterations: opts.max_iterations,
        fd_steps: vec![1e-7; n],
        max_change: vec![0.5; n],
    };
    let sol = newton(residual, &x0, &nopts)?;
    let state = assemble(&sol.x);
    let (period, end) = return_map(&state, p, winding, t_max, opts)?;
    let closure = (end - state - shift).norm();
    Ok(PeriodicOrbit { state, period, winding, in_e, params: *p, closure })
}

/// Integrates `s0` for `transient` time units and converges the periodic
/// orbit it settles on. The period guess is the time to the next return.
pub fn orbit_from_transient(
    p: &Params,
    s0: &State,
    winding: (i64, i64),
    transient: f64,
    opts: &OrbitOptions,
) -> Result<PeriodicOrbit> {
    p.validate()?;
    if winding.0 == 0 {
        return Err(Error::InvalidInput("winding k1 must be nonzero; orbits are sectioned by eta1".into()));
    }
    let settled = if transient > 0.0 { integrate(s0, p, (0.0, transient), opts.tol)?.final_state() } else { *s0 };
    // Generous search window: slow rotations near a homoclinic take long.
    let window = transient.max(1000.0);
    let z = onto_section(&settled, p, winding.0, window, opts)?;
    let (period, _) = return_map(&z, p, winding, window, opts)?;
    find_periodic_orbit(p, winding, &z, period, opts)
}

/// Monodromy eigenvalues of a periodic orbit.
#[derive(Debug, Clone)]
pub struct FloquetSet {
    /// Ordered by decreasing modulus.
    pub multipliers: [Complex64; 4],
    /// Index of the multiplier closest to 1.
    pub trivial: usize,
    /// For orbits in `E31`: the pair of the block acting on `(eta2, psi2)`,
    /// larger real part first.
    pub transverse: Option<[Complex64; 2]>,
    pub monodromy: Matrix4<f64>,
}

impl FloquetSet {
    pub fn nontrivial(&self) -> Vec<Complex64> {
        (0..4).filter(|&k| k != self.trivial).map(|k| self.multipliers[k]).collect()
    }

    pub fn product(&self) -> Complex64 {
        self.multipliers.iter().product()
    }

    pub fn determinant(&self) -> f64 {
        self.monodromy.determinant()
    }
}

/// Multipliers from the variational equation integrated over one period.
pub fn floquet_multipliers(orbit: &PeriodicOrbit, tol: f64) -> Result<FloquetSet> {
    let cols: Vec<State> = (0..4)
        .map(|k| {
            let mut e = State::ZERO;
            e.0[k] = 1.0;
            e
        })
        .collect();
    let tb = integrate_variational(&orbit.state, &cols, &orbit.params, (0.0, orbit.period), tol)?;
    let v = tb.final_tangents();
    let m = Matrix4::from_fn(|i, j| v[j].0[i]);
    let mut mult: Vec<Complex64> = m.complex_eigenvalues().iter().copied().collect();
    mult.sort_by(|a, b| b.norm().total_cmp(&a.norm()).then(b.re.total_cmp(&a.re)).then(b.im.total_cmp(&a.im)));
    let trivial = (0..4)
        .min_by(|&a, &b| (mult[a] - 1.0).norm().total_cmp(&(mult[b] - 1.0).norm()))
        .unwrap_or(0);
    let transverse = orbit.in_e.then(|| eig2(&Matrix2::new(m[(2, 2)], m[(2, 3)], m[(3, 2)], m[(3, 3)])).0);
    Ok(FloquetSet { multipliers: [mult[0], mult[1], mult[2], mult[3]], trivial, transverse, monodromy: m })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrossingTarget {
    /// A multiplier of the `(eta2, psi2)` block of an orbit in `E31` through
    /// `+1`: symmetry-breaking pitchfork of cycles.
    PlusOneTransverse,
    /// A real multiplier through `-1`: period doubling.
    MinusOne,
}

/// Signed distance of the tracked multiplier from the target; its zeros
/// are the crossings.
pub fn crossing_distance(f: &FloquetSet, target: CrossingTarget) -> Result<f64> {
    match target {
        CrossingTarget::PlusOneTransverse => {
            let t = f
                .transverse
                .ok_or_else(|| Error::InvalidInput("transverse crossings need an orbit in E31".into()))?;
            // A complex pair contributes its common real part, which keeps the
            // distance continuous where the pair turns real.
            Ok(t[0].re.max(t[1].re) - 1.0)
        }
        CrossingTarget::MinusOne => {
            let lowest = f
                .nontrivial()
                .iter()
                .filter(|z| z.im.abs() <= 1e-9 * z.norm().max(1.0))
                .map(|z| z.re)
                .fold(f64::INFINITY, f64::min);
            if lowest.is_finite() {
                Ok(1.0 + lowest)
            } else {
                Ok(1.0)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct CrossingOptions {
    pub orbit: OrbitOptions,
    /// Continuation step in `alpha`.
    pub step: f64,
    /// Step halvings allowed after a failed solve.
    pub retries: usize,
    /// Width of the final `alpha` bracket.
    pub tol: f64,
    /// Tolerance of the variational solves.
    pub floquet_tol: f64,
}

impl Default for CrossingOptions {
    fn default() -> Self {
        CrossingOptions { orbit: OrbitOptions::default(), step: 5e-3, retries: 2, tol: 1e-6, floquet_tol: 1e-11 }
    }
}

#[derive(Debug, Clone)]
pub struct MultiplierCrossing {
    pub alpha: f64,
    pub orbit: PeriodicOrbit,
    pub floquet: FloquetSet,
    /// Signed distance at `alpha`.
    pub distance: f64,
    /// `(alpha, distance)` at every continuation point, in order.
    pub samples: Vec<(f64, f64)>,
}

fn solve_at(alpha: f64, from: &PeriodicOrbit, target: CrossingTarget, opts: &CrossingOptions) -> Result<(PeriodicOrbit, FloquetSet, f64)> {
    let p = from.params.with_alpha(alpha);
    let mut orbit = find_periodic_orbit(&p, from.winding, &from.state, from.period, &opts.orbit)?;
    // A symmetric solve must stay symmetric so the transverse block exists.
    if from.in_e && !orbit.in_e {
        return Err(Error::LostOrbit { alpha });
    }
    orbit.in_e = from.in_e && orbit.in_e;
    let f = floquet_multipliers(&orbit, opts.floquet_tol)?;
    let d = crossing_distance(&f, target)?;
    Ok((orbit, f, d))
}

/// Continues `start` in `alpha` (at fixed `mu`) from `start.params.alpha`
/// toward `end` and returns the first zero of the signed multiplier distance.
pub fn detect_multiplier_crossing(
    start: &PeriodicOrbit,
    end: f64,
    target: CrossingTarget,
    opts: &CrossingOptions,
) -> Result<MultiplierCrossing> {
    if !(opts.step > 0.0) || !(opts.tol > 0.0) {
        return Err(Error::InvalidInput("step and tolerance must be positive".into()));
    }
    let a0 = start.params.alpha;
    let dir = if end >= a0 { 1.0 } else { -1.0 };
    let (mut prev, mut fprev, mut dprev) = solve_at(a0, start, target, opts)?;
    let mut samples = vec![(a0, dprev)];
    let mut a = a0;
    while (end - a) * dir > 0.0 {
        let mut h = opts.step;
        let mut next = None;
        for attempt in 0..=opts.retries {
            let an = if (end - a) * dir < h { end } else { a + dir * h };
            match solve_at(an, &prev, target, opts) {
                Ok(r) => {
                    next = Some((an, r));
                    break;
                }
                Err(_) if attempt == opts.retries => return Err(Error::LostOrbit { alpha: an }),
                Err(_) => h *= 0.5,
            }
        }
        let (an, (orbit, f, d)) = next.expect("loop returns or sets a value");
        samples.push((an, d));
        if d == 0.0 {
            return Ok(MultiplierCrossing { alpha: an, orbit, floquet: f, distance: d, samples });
        }
        if (d < 0.0) != (dprev < 0.0) {
            let (lo, hi) = ((a, prev, fprev, dprev), (an, orbit, f, d));
            return refine_crossing(lo, hi, target, opts, samples);
        }
        a = an;
        prev = orbit;
        fprev = f;
        dprev = d;
    }
    let (lo, hi) = if dir > 0.0 { (a0, end) } else { (end, a0) };
    Err(Error::NoCrossing { lo, hi })
}

type Bracket = (f64, PeriodicOrbit, FloquetSet, f64);

/// Illinois iteration on a bracketed sign change of the distance.
fn refine_crossing(
    mut lo: Bracket,
    mut hi: Bracket,
    target: CrossingTarget,
    opts: &CrossingOptions,
    samples: Vec<(f64, f64)>,
) -> Result<MultiplierCrossing> {
    // Secant weights, halved on repeated sides.
    let (mut wlo, mut whi) = (lo.3, hi.3);
    let mut side = 0i8;
    for _ in 0..200 {
        if (hi.0 - lo.0).abs() <= opts.tol {
            break;
        }
        let mut c = (lo.0 * whi - hi.0 * wlo) / (whi - wlo);
        let (a, b) = if lo.0 < hi.0 { (lo.0, hi.0) } else { (hi.0, lo.0) };
        if !(c > a && c < b) {
            c = 0.5 * (lo.0 + hi.0);
        }
        let near = if (c - lo.0).abs() < (hi.0 - c).abs() { &lo.1 } else { &hi.1 };
        let (orbit, f, d) = solve_at(c, near, target, opts).map_err(|_| Error::LostOrbit { alpha: c })?;
        if d == 0.0 {
            return Ok(MultiplierCrossing { alpha: c, orbit, floquet: f, distance: d, samples });
        }
        if (d < 0.0) == (hi.3 < 0.0) {
            hi = (c, orbit, f, d);
            whi = d;
            if side == -1 {
                wlo *= 0.5;
            }
            side = -1;
        } else {
            lo = (c, orbit, f, d);
            wlo = d;
            if side == 1 {
                whi *= 0.5;
            }
            side = 1;
        }
    }
    let best = if lo.3.abs() <= hi.3.abs() { lo } else { hi };
    Ok(MultiplierCrossing { alpha: best.0, orbit: best.1, floquet: best.2, distance: best.3, samples })
}
