//! Adaptive integration of the reduced system, its variational equation and
//! event location on dense output.

mod dopri;
mod events;

use std::io::Write;
use std::ops::ControlFlow;

pub use dopri::{solve, DenseStep, OdeSystem, Outcome, SolverOptions, Stats, MIN_STEP};
pub use events::{detect_events, Direction, Event, EventSpec, ExtremumKind, Observable};
pub(crate) use events::first_crossing;

use crate::error::{Error, Result};
use crate::model::{coupling_gradient, coupling_increment, vector_field, Params, State};

/// Accepted steps of one solve together with their interpolants.
#[derive(Debug, Clone)]
pub struct DenseSolution<const N: usize> {
    steps: Vec<DenseStep<N>>,
    stats: Stats,
}

impl<const N: usize> DenseSolution<N> {
    pub fn steps(&self) -> &[DenseStep<N>] {
        &self.steps
    }

    pub fn stats(&self) -> Stats {
        self.stats
    }

    pub fn t_start(&self) -> f64 {
        self.steps[0].t0
    }

    pub fn t_end(&self) -> f64 {
        self.steps.last().map(|s| s.t1()).unwrap_or(f64::NAN)
    }

    /// Index of the step containing `t`, clamped to the ends.
    fn locate(&self, t: f64) -> usize {
        let idx = self.steps.partition_point(|s| s.t1() < t);
        idx.min(self.steps.len() - 1)
    }

    pub fn eval(&self, t: f64) -> [f64; N] {
        let s = &self.steps[self.locate(t)];
        if t == s.t1() {
            s.end()
        } else {
            s.eval(t)
        }
    }

    pub fn deriv(&self, t: f64) -> [f64; N] {
        self.steps[self.locate(t)].deriv(t)
    }

    pub fn final_value(&self) -> [f64; N] {
        self.steps.last().map(|s| s.end()).unwrap_or([f64::NAN; N])
    }

    pub fn initial_value(&self) -> [f64; N] {
        self.steps[0].start()
    }
}

fn collect<const N: usize, S: OdeSystem<N> + ?Sized>(
    sys: &S,
    t0: f64,
    y0: [f64; N],
    t1: f64,
    opts: &SolverOptions,
) -> Result<DenseSolution<N>> {
    let mut steps = Vec::new();
    let (_, stats) = solve(sys, t0, y0, t1, opts, |s| {
        steps.push(*s);
        ControlFlow::Continue(())
    })?;
    Ok(DenseSolution { steps, stats })
}

/// The reduced system as an ODE right-hand side. `sign = -1` reverses time.
///
/// With a nonzero `base` (an equilibrium) the unknown is the offset from
/// `base`, and the coupling is evaluated as an increment so that offsets far
/// below the spacing of floating-point numbers near `base` stay resolved.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Flow {
    pub params: Params,
    pub sign: f64,
    pub base: State,
}

impl Flow {
    pub(crate) fn new(params: Params, sign: f64) -> Self {
        Flow { params, sign, base: State::ZERO }
    }
}

#[inline]
fn local_field(y: &State, base: &State, p: &Params) -> State {
    if *base == State::ZERO {
        return vector_field(y, p);
    }
    let (f1, f2) = coupling_increment((base.eta1(), base.eta2()), (y.eta1(), y.eta2()), p.alpha);
    let (psi1, psi2) = (y.psi1() + base.psi1(), y.psi2() + base.psi2());
    State([psi1, -p.epsilon * psi1 + p.mu * f1, psi2, -p.epsilon * psi2 + p.mu * f2])
}

impl OdeSystem<4> for Flow {
    #[inline]
    fn rhs(&self, _t: f64, y: &[f64; 4], dy: &mut [f64; 4]) {
        let f = local_field(&State(*y), &self.base, &self.params);
        for i in 0..4 {
            dy[i] = self.sign * f.0[i];
        }
    }
}

/// State plus four tangent columns, `Z' = F(Z)`, `V' = dF(Z) V`.
/// Same `base` convention as [`Flow`] for the state part.
#[derive(Debug, Clone, Copy)]
pub(crate) struct VariationalFlow {
    pub params: Params,
    pub sign: f64,
    pub base: State,
}

impl VariationalFlow {
    pub(crate) fn new(params: Params, sign: f64) -> Self {
        VariationalFlow { params, sign, base: State::ZERO }
    }
}

impl OdeSystem<20> for VariationalFlow {
    #[inline]
    fn rhs(&self, _t: f64, y: &[f64; 20], dy: &mut [f64; 20]) {
        let p = &self.params;
        let z = State([y[0], y[1], y[2], y[3]]);
        let f = local_field(&z, &self.base, p);
        let g = coupling_gradient(z.eta1() + self.base.eta1(), z.eta2() + self.base.eta2(), p.alpha);
        let (a, b, c, d) = (p.mu * g[0][0], p.mu * g[0][1], p.mu * g[1][0], p.mu * g[1][1]);
        for i in 0..4 {
            dy[i] = self.sign * f.0[i];
        }
        for col in 0..4 {
            let o = 4 + 4 * col;
            let (v0, v1, v2, v3) = (y[o], y[o + 1], y[o + 2], y[o + 3]);
            dy[o] = self.sign * v1;
            dy[o + 1] = self.sign * (a * v0 - p.epsilon * v1 + b * v2);
            dy[o + 2] = self.sign * v3;
            dy[o + 3] = self.sign * (c * v0 + d * v2 - p.epsilon * v3);
        }
    }
}

/// Dense solution of the reduced system.
#[derive(Debug, Clone)]
pub struct Trajectory {
    inner: DenseSolution<4>,
    params: Params,
}

impl Trajectory {
    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn stats(&self) -> Stats {
        self.inner.stats()
    }

    pub fn steps(&self) -> &[DenseStep<4>] {
        self.inner.steps()
    }

    pub fn t_start(&self) -> f64 {
        self.inner.t_start()
    }

    pub fn t_end(&self) -> f64 {
        self.inner.t_end()
    }

    pub fn state_at(&self, t: f64) -> State {
        State(self.inner.eval(t))
    }

    /// Derivative of the interpolant at `t`.
    pub fn derivative_at(&self, t: f64) -> State {
        State(self.inner.deriv(t))
    }

    pub fn initial_state(&self) -> State {
        State(self.inner.initial_value())
    }

    pub fn final_state(&self) -> State {
        State(self.inner.final_value())
    }

    /// Step nodes: the start of every accepted step plus the final point.
    pub fn nodes(&self) -> Vec<(f64, State)> {
        let mut out: Vec<(f64, State)> = self.steps().iter().map(|s| (s.t0, State(s.start()))).collect();
        out.push((self.t_end(), self.final_state()));
        out
    }

    /// CSV dump, one row per node, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,eta1,psi1,eta2,psi2")?;
        for (t, s) in self.nodes() {
            write_csv_row(&mut w, t, &s)?;
        }
        Ok(())
    }
}

pub(crate) fn write_csv_row<W: Write>(w: &mut W, t: f64, s: &State) -> Result<()> {
    writeln!(w, "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}", t, s.0[0], s.0[1], s.0[2], s.0[3])?;
    Ok(())
}

fn check_span(span: (f64, f64), tol: f64) -> Result<()> {
    if !(span.1 > span.0) {
        return Err(Error::InvalidInput(format!("need t1 > t0, got [{}, {}]", span.0, span.1)));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance must be positive, got {tol}")));
    }
    Ok(())
}

/// Integrates the reduced system over `span` with `atol = rtol = tol`.
pub fn integrate(s0: &State, p: &Params, span: (f64, f64), tol: f64) -> Result<Trajectory> {
    check_span(span, tol)?;
    p.validate()?;
    let inner = collect(&Flow::new(*p, 1.0), span.0, s0.0, span.1, &SolverOptions::new(tol))?;
    Ok(Trajectory { inner, params: *p })
}

/// Integrates without storing the solution; `observer` sees each step.
pub fn integrate_with<O>(
    s0: &State,
    p: &Params,
    span: (f64, f64),
    tol: f64,
    observer: O,
) -> Result<(Outcome, Stats)>
where
    O: FnMut(&DenseStep<4>) -> ControlFlow<()>,
{
    check_span(span, tol)?;
    p.validate()?;
    solve(&Flow::new(*p, 1.0), span.0, s0.0, span.1, &SolverOptions::new(tol), observer)
}

/// End state after `duration` time units, forward or backward; optionally
/// records `(elapsed, state)` at every step end. States are offsets from
/// the equilibrium `base` (see [`Flow`]).
pub(crate) fn flow_to(
    base: &State,
    s0: &State,
    p: &Params,
    duration: f64,
    opts: &SolverOptions,
    reversed: bool,
    mut nodes: Option<&mut Vec<(f64, State)>>,
) -> Result<State> {
    check_span((0.0, duration), opts.tol)?;
    let mut last = *s0;
    let sign = if reversed { -1.0 } else { 1.0 };
    solve(&Flow { params: *p, sign, base: *base }, 0.0, s0.0, duration, opts, |step| {
        last = State(step.end());
        if let Some(n) = nodes.as_deref_mut() {
            n.push((step.t1(), last));
        }
        ControlFlow::Continue(())
    })?;
    Ok(last)
}

/// Base trajectory plus `k` solutions of the variational equation.
#[derive(Debug, Clone)]
pub struct TangentBundle {
    inner: DenseSolution<20>,
    columns: usize,
    params: Params,
}

impl TangentBundle {
    pub fn columns(&self) -> usize {
        self.columns
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn stats(&self) -> Stats {
        self.inner.stats()
    }

    pub fn t_start(&self) -> f64 {
        self.inner.t_start()
    }

    pub fn t_end(&self) -> f64 {
        self.inner.t_end()
    }

    pub fn state_at(&self, t: f64) -> State {
        let y = self.inner.eval(t);
        State([y[0], y[1], y[2], y[3]])
    }

    /// Tangent columns at `t`.
    pub fn tangents_at(&self, t: f64) -> Vec<State> {
        let y = self.inner.eval(t);
        unpack_columns(&y, self.columns)
    }

    pub fn final_state(&self) -> State {
        let y = self.inner.final_value();
        State([y[0], y[1], y[2], y[3]])
    }

    pub fn final_tangents(&self) -> Vec<State> {
        unpack_columns(&self.inner.final_value(), self.columns)
    }
}

fn unpack_columns(y: &[f64; 20], k: usize) -> Vec<State> {
    (0..k).map(|c| State([y[4 + 4 * c], y[5 + 4 * c], y[6 + 4 * c], y[7 + 4 * c]])).collect()
}

pub(crate) fn pack_variational(s0: &State, v0: &[State]) -> Result<[f64; 20]> {
    if v0.is_empty() || v0.len() > 4 {
        return Err(Error::InvalidInput(format!("need 1 to 4 tangent columns, got {}", v0.len())));
    }
    let mut y = [0.0; 20];
    y[..4].copy_from_slice(&s0.0);
    for (c, v) in v0.iter().enumerate() {
        y[4 + 4 * c..8 + 4 * c].copy_from_slice(&v.0);
    }
    Ok(y)
}

/// Integrates the state together with tangent columns `v0` (at most four)
/// as one augmented system; the error norm covers every component.
pub fn integrate_variational(
    s0: &State,
    v0: &[State],
    p: &Params,
    span: (f64, f64),
    tol: f64,
) -> Result<TangentBundle> {
    check_span(span, tol)?;
    p.validate()?;
    let y0 = pack_variational(s0, v0)?;
    let inner = collect(&VariationalFlow::new(*p, 1.0), span.0, y0, span.1, &SolverOptions::new(tol))?;
    Ok(TangentBundle { inner, columns: v0.len(), params: *p })
}

/// Final state and tangents of a variational solve, without storage; time is
/// reversed when `reversed` is set. The state is an offset from `base`.
pub(crate) fn flow_variational(
    base: &State,
    s0: &State,
    v0: &[State],
    p: &Params,
    duration: f64,
    opts: &SolverOptions,
    reversed: bool,
) -> Result<(State, Vec<State>)> {
    check_span((0.0, duration), opts.tol)?;
    let y0 = pack_variational(s0, v0)?;
    let mut last = y0;
    let sign = if reversed { -1.0 } else { 1.0 };
    solve(&VariationalFlow { params: *p, sign, base: *base }, 0.0, y0, duration, opts, |s| {
        last = s.end();
        ControlFlow::Continue(())
    })?;
    Ok((State([last[0], last[1], last[2], last[3]]), unpack_columns(&last, v0.len())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{equilibrium, jacobian, EquilibriumId, EquilibriumKind};

    #[test]
    fn equilibrium_stays_put() {
        let p = Params::new(1.7, 0.05);
        let tr = integrate(&State::ZERO, &p, (0.0, 50.0), 1e-10).unwrap();
        assert!(tr.nodes().iter().all(|(_, s)| *s == State::ZERO));
        let s = equilibrium(EquilibriumId::new(EquilibriumKind::S31, 0, 0), &p).unwrap();
        let tr = integrate(&s, &p, (0.0, 50.0), 1e-10).unwrap();
        assert!((tr.final_state() - s).max_abs() < 1e-12);
    }

    #[test]
    fn invariant_subspace_is_preserved() {
        let p = Params::new(1.6, 0.06);
        let tr = integrate(&State::new(0.3, 0.2, 0.0, 0.0), &p, (0.0, 300.0), 1e-10).unwrap();
        for (_, s) in tr.nodes() {
            assert!(s.eta2().abs() < 1e-10 && s.psi2().abs() < 1e-10);
        }
    }

    /// Fixed-step classical RK4 reference with a tiny step.
    fn rk4_reference(s0: State, p: &Params, t: f64, n: usize) -> State {
        let h = t / n as f64;
        let mut y = s0;
        for _ in 0..n {
            let k1 = vector_field(&y, p);
            let k2 = vector_field(&(y + (0.5 * h) * k1), p);
            let k3 = vector_field(&(y + (0.5 * h) * k2), p);
            let k4 = vector_field(&(y + h * k3), p);
            y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        y
    }

    #[test]
    fn fifth_order_convergence() {
        let p = Params::new(1.5, 0.06);
        let s0 = State::new(0.5, 0.1, -0.4, 0.05);
        let t = 20.0;
        let reference = rk4_reference(s0, &p, t, 200_000);
        let fixed = |h: f64| {
            // Force a fixed step by making the tolerance irrelevant.
            let n = (t / h).round() as usize;
            let mut y = s0.0;
            let mut opts = SolverOptions::new(1e3);
            opts.h_max = h;
            let sys = Flow::new(p, 1.0);
            solve(&sys, 0.0, y, t, &opts, |s| {
                y = s.end();
                ControlFlow::Continue(())
            })
            .unwrap();
            let _ = n;
            (State(y) - reference).max_abs()
        };
        let e1 = fixed(0.4);
        let e2 = fixed(0.2);
        let ratio = e1 / e2;
        assert!(ratio > 20.0 && ratio < 45.0, "ratio {ratio}");
    }

    #[test]
    fn time_translation_tangent() {
        let p = Params::new(1.7, 0.04);
        let s0 = State::new(0.7, -0.1, 0.3, 0.2);
        let v0 = vector_field(&s0, &p);
        let tb = integrate_variational(&s0, &[v0, State::ZERO], &p, (0.0, 40.0), 1e-11).unwrap();
        for k in 0..=20 {
            let t = 2.0 * k as f64;
            let cols = tb.tangents_at(t);
            let f = vector_field(&tb.state_at(t), &p);
            assert!((cols[0] - f).max_abs() < 1e-8);
            assert_eq!(cols[1], State::ZERO);
        }
    }

    #[test]
    fn fundamental_matrix_matches_finite_differences() {
        let p = Params::new(1.7, 0.04);
        let s0 = State::new(0.7, -0.1, 0.3, 0.2);
        let t1 = 15.0;
        let e: Vec<State> = (0..4).map(|i| {
            let mut v = State::ZERO;
            v[i] = 1.0;
            v
        }).collect();
        let tb = integrate_variational(&s0, &e, &p, (0.0, t1), 1e-12).unwrap();
        let phi = tb.final_tangents();
        let h = 1e-7;
        for c in 0..4 {
            let mut sp = s0;
            let mut sm = s0;
            sp[c] += h;
            sm[c] -= h;
            let a = integrate(&sp, &p, (0.0, t1), 1e-12).unwrap().final_state();
            let b = integrate(&sm, &p, (0.0, t1), 1e-12).unwrap().final_state();
            let fd = (1.0 / (2.0 * h)) * (a - b);
            assert!((fd - phi[c]).max_abs() < 1e-5, "column {c}");
        }
        // Liouville: det = exp(-2 eps t).
        let m = nalgebra::Matrix4::from_fn(|r, c| phi[c][r]);
        assert!((m.determinant() - (-0.2 * t1).exp()).abs() < 1e-8);
        let _ = jacobian(&s0, &p);
    }

    #[test]
    fn csv_dump_has_header_and_roundtrips() {
        let p = Params::new(1.6, 0.06);
        let tr = integrate(&State::new(0.3, 0.2, 0.1, 0.0), &p, (0.0, 5.0), 1e-8).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,eta1,psi1,eta2,psi2"));
        let nodes = tr.nodes();
        for ((t, s), line) in nodes.iter().zip(lines) {
            let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
            assert_eq!(v[0], *t);
            assert_eq!(&v[1..], &s.0);
        }
    }
}
