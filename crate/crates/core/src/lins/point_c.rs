use std::ops::ControlFlow;

use super::basis::{projection_basis, ProjectionBasis};
use super::ConnectingOrbit;
use crate::error::{Error, Result};
use crate::integrate::{integrate_with, DenseStep};
use crate::model::{eigen_split, equilibrium, EquilibriumId, EquilibriumKind, Params, State};
use crate::newton::{newton, NewtonOptions};

const SAMPLES_PER_STEP: usize = 8;

#[derive(Debug, Clone)]
pub struct HetOptions {
    /// Offset from `S31` along its unstable direction.
    pub delta: f64,
    /// Integrator tolerance.
    pub tol: f64,
    /// Newton tolerance on the unstable projections.
    pub newton_tol: f64,
    /// Stopping radii around the target, used in order; each solve seeds the next.
    pub radii: Vec<f64>,
    /// Longest shot.
    pub horizon: f64,
    /// A shot whose closest approach to the target exceeds this escaped.
    pub escape_radius: f64,
    /// Sign of the offset; `None` picks the side that passes closer.
    pub branch: Option<i8>,
    pub epsilon: f64,
}

impl Default for HetOptions {
    fn default() -> Self {
        HetOptions {
            delta: 1e-6,
            tol: 1e-12,
            newton_tol: 1e-10,
            radii: vec![0.1, 1e-2, 1e-3, 1e-4],
            horizon: 3000.0,
            escape_radius: 1.0,
            branch: None,
            epsilon: crate::model::DEFAULT_EPSILON,
        }
    }
}

/// The codimension-two connection from `S31` to a lift of `O`.
#[derive(Debug, Clone)]
pub struct PointC {
    pub alpha: f64,
    pub mu: f64,
    pub branch: i8,
    /// Unstable projections at the final stopping radius.
    pub residuals: [f64; 2],
    pub orbit: ConnectingOrbit,
}

struct Shot {
    /// State where the shot stops: first entry into the ball, otherwise the
    /// closest sampled approach.
    stop: State,
    t_stop: f64,
    entered: bool,
    closest: f64,
}

/// Unstable direction of `S31` transverse to `E31`, signed with `eta2 > 0`.
fn unstable_direction(p: &Params) -> Result<State> {
    let split = eigen_split(EquilibriumId::new(EquilibriumKind::S31, 0, 0), p)?;
    let (lam, v) = split.leading();
    if !(lam.re > 0.0) || lam.im.abs() > 1e-12 {
        return Err(Error::SpectralSplitFailure { real_parts: split.all().iter().map(|z| z.re).collect() });
    }
    let v = v.map(|z| z.re);
    let v = if v[2] < 0.0 { -v } else { v };
    Ok(State::from_vector(&(v / v.norm())))
}

fn shoot(p: &Params, branch: i8, target: &State, radius: f64, opts: &HetOptions, nodes: Option<&mut Vec<(f64, State)>>) -> Result<Shot> {
    let s = equilibrium(EquilibriumId::new(EquilibriumKind::S31, 0, 0), p)?;
    let v = unstable_direction(p)?;
    let z0 = s + (branch as f64 * opts.delta) * v;
    let dist = |y: &[f64; 4]| (State(*y) - *target).norm();
    let mut best = (f64::INFINITY, 0.0, z0);
    let mut entered = None;
    let mut nodes = nodes;
    if let Some(n) = nodes.as_deref_mut() {
        n.push((0.0, z0));
    }
    integrate_with(&z0, p, (0.0, opts.horizon), opts.tol, |step: &DenseStep<4>| {
        let mut prev = (step.t0, dist(&step.eval(step.t0)));
        for k in 1..=SAMPLES_PER_STEP {
            let t = if k == SAMPLES_PER_STEP { step.t1() } else { step.t0 + step.h * k as f64 / SAMPLES_PER_STEP as f64 };
            let y = if k == SAMPLES_PER_STEP { step.end() } else { step.eval(t) };
            let d = dist(&y);
            if d < best.0 {
                best = (d, t, State(y));
            }
            if d < radius && prev.1 >= radius {
                // Bisect the entry time inside this sample interval.
                let (mut a, mut b) = (prev.0, t);
                for _ in 0..60 {
                    let m = 0.5 * (a + b);
                    if dist(&step.eval(m)) < radius {
                        b = m;
                    } else {
                        a = m;
                    }
                }
                entered = Some((b, State(step.eval(b))));
                if let Some(n) = nodes.as_deref_mut() {
                    n.push((b, State(step.eval(b))));
                }
                return ControlFlow::Break(());
            }
            prev = (t, d);
        }
        if let Some(n) = nodes.as_deref_mut() {
            n.push((step.t1(), State(step.end())));
        }
        ControlFlow::Continue(())
    })?;
    Ok(match entered {
        Some((t, z)) => Shot { stop: z, t_stop: t, entered: true, closest: best.0.min(radius) },
        None => Shot { stop: best.2, t_stop: best.1, entered: false, closest: best.0 },
    })
}

fn target_basis(p: &Params, lift: (i64, i64)) -> Result<ProjectionBasis> {
    projection_basis(EquilibriumId::new(EquilibriumKind::O, lift.0, lift.1), p)
}

fn residual(alpha: f64, mu: f64, branch: i8, lift: (i64, i64), radius: f64, opts: &HetOptions) -> Result<Vec<f64>> {
    let p = Params::new(alpha, mu).with_epsilon(opts.epsilon);
    p.validate()?;
    let basis = target_basis(&p, lift)?;
    let shot = shoot(&p, branch, &basis.point, radius, opts, None)?;
    if shot.closest > opts.escape_radius {
        return Err(Error::EscapedBasin { distance: shot.closest });
    }
    Ok(basis.unstable_coordinates(&shot.stop).to_vec())
}

/// Heteroclinic connection `S31 -> O^(target_lift)` by Newton in
/// `(alpha, mu)` on the unstable projections of a shot from `S31`, refined
/// over a decreasing sequence of stopping radii.
pub fn find_het_s_to_o(guess: (f64, f64), target_lift: (i64, i64), opts: &HetOptions) -> Result<PointC> {
    if opts.radii.is_empty() || opts.radii.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::InvalidInput("stopping radii must be positive".into()));
    }
    let p0 = Params::new(guess.0, guess.1).with_epsilon(opts.epsilon);
    p0.validate()?;
    let branch = match opts.branch {
        Some(b) if b == 1 || b == -1 => b,
        Some(b) => return Err(Error::InvalidInput(format!("branch must be +1 or -1, got {b}"))),
        None => {
            let target = target_basis(&p0, target_lift)?.point;
            let r0 = opts.radii[0];
            let up = shoot(&p0, 1, &target, r0, opts, None)?.closest;
            let down = shoot(&p0, -1, &target, r0, opts, None)?.closest;
            if up <= down { 1 } else { -1 }
        }
    };
    let nopts = NewtonOptions {
        tol: opts.newton_tol,
        max_iterations: 40,
        fd_steps: vec![1e-8, 1e-8],
        max_change: vec![0.01, 0.005],
    };
    let mut x = vec![guess.0, guess.1];
    let mut last = Vec::new();
    for &radius in &opts.radii {
        let sol = newton(|x| residual(x[0], x[1], branch, target_lift, radius, opts), &x, &nopts)?;
        x = sol.x;
        last = sol.residual;
    }
    let radius = *opts.radii.last().unwrap();
    let p = Params::new(x[0], x[1]).with_epsilon(opts.epsilon);
    let basis = target_basis(&p, target_lift)?;
    let mut nodes = Vec::new();
    let shot = shoot(&p, branch, &basis.point, radius, opts, Some(&mut nodes))?;
    if !shot.entered {
        return Err(Error::EscapedBasin { distance: shot.closest });
    }
    let half = 0.5 * shot.t_stop;
    let mesh = nodes.into_iter().map(|(t, z)| (t - half, z)).collect();
    let orbit = ConnectingOrbit {
        half_length: half,
        mesh,
        source: EquilibriumId::new(EquilibriumKind::S31, 0, 0),
        target: basis.equilibrium,
        params: p,
        residuals: vec![
            ("unstable_1".into(), last[0].abs()),
            ("unstable_2".into(), last[1].abs()),
            ("stop_radius".into(), radius),
        ],
        amplitudes: (opts.delta, radius),
    };
    Ok(PointC { alpha: x[0], mu: x[1], branch, residuals: [last[0], last[1]], orbit })
}
