//! Section crossings and local extrema located on dense output.

use std::ops::ControlFlow;

use super::{solve, DenseStep, Flow, Outcome, SolverOptions, Trajectory};
use crate::error::{Error, Result};
use crate::model::{Params, State};

/// Sub-samples per step used to bracket sign changes.
const SAMPLES_PER_STEP: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Any,
    /// The functional increases through the level.
    Increasing,
    Decreasing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtremumKind {
    Maximum,
    Minimum,
}

/// Scalar functions of the state whose extrema can be located.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observable {
    /// One state component (0..4).
    Component(usize),
    /// `psi1²` (argument 1) or `psi2²` (argument 2).
    PsiSquared(u8),
    /// `max(psi1², psi2²)`.
    SlipSpeed,
}

impl Observable {
    pub fn value(&self, s: &State) -> f64 {
        match *self {
            Observable::Component(i) => s.0[i],
            Observable::PsiSquared(k) => {
                let v = if k == 1 { s.psi1() } else { s.psi2() };
                v * v
            }
            Observable::SlipSpeed => (s.psi1() * s.psi1()).max(s.psi2() * s.psi2()),
        }
    }

    /// Smooth branches whose maxima/minima, where active, are those of the observable.
    fn branches(&self) -> Vec<Observable> {
        match *self {
            Observable::SlipSpeed => vec![Observable::PsiSquared(1), Observable::PsiSquared(2)],
            o => vec![o],
        }
    }

    /// Time derivative along a solution with state `s` and velocity `ds`.
    fn rate(&self, s: &State, ds: &State) -> f64 {
        match *self {
            Observable::Component(i) => ds.0[i],
            Observable::PsiSquared(k) => {
                if k == 1 {
                    2.0 * s.psi1() * ds.psi1()
                } else {
                    2.0 * s.psi2() * ds.psi2()
                }
            }
            Observable::SlipSpeed => unreachable!("composite observable has no single rate"),
        }
    }
}

/// What to look for along a trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventSpec {
    /// `functional · state = level`, filtered by crossing direction.
    SectionCrossing { functional: [f64; 4], level: f64, direction: Direction },
    LocalExtremum { observable: Observable, kind: ExtremumKind },
}

impl EventSpec {
    pub fn section(functional: [f64; 4], level: f64, direction: Direction) -> Result<Self> {
        if functional.iter().all(|c| *c == 0.0) || functional.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("section functional must be nonzero and finite".into()));
        }
        Ok(EventSpec::SectionCrossing { functional, level, direction })
    }

    /// The section `eta1 = level`.
    pub fn eta1_section(level: f64, direction: Direction) -> Self {
        EventSpec::SectionCrossing { functional: [1.0, 0.0, 0.0, 0.0], level, direction }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub t: f64,
    pub state: State,
}

/// Finds all events along `tr`, ordered in time. Each event time is polished
/// to roughly machine precision. A functional that sits exactly on its level
/// over an interval produces no event there.
pub fn detect_events(tr: &Trajectory, ev: &EventSpec) -> Vec<Event> {
    let mut out = Vec::new();
    match *ev {
        EventSpec::SectionCrossing { functional, level, direction } => {
            let g = |s: &State| s.0.iter().zip(functional.iter()).map(|(a, b)| a * b).sum::<f64>() - level;
            let mut scan = SignScan::default();
            for step in tr.steps() {
                for t in sample_times(step) {
                    let y = if t == step.t1() { step.end() } else { step.eval(t) };
                    if let Some((ta, ga, tb, gb)) = scan.push(t, g(&State(y))) {
                        let rising = gb > ga;
                        let wanted = match direction {
                            Direction::Any => true,
                            Direction::Increasing => rising,
                            Direction::Decreasing => !rising,
                        };
                        if wanted {
                            let t = refine_root(|t| g(&tr.state_at(t)), ta, ga, tb, gb);
                            out.push(Event { t, state: tr.state_at(t) });
                        }
                    }
                }
            }
        }
        EventSpec::LocalExtremum { observable, kind } => {
            for branch in observable.branches() {
                let rate = |t: f64| branch.rate(&tr.state_at(t), &tr.derivative_at(t));
                let mut scan = SignScan::default();
                for step in tr.steps() {
                    for t in sample_times(step) {
                        if let Some((ta, ra, tb, rb)) = scan.push(t, step_rate(step, &branch, t)) {
                            let is_max = ra > 0.0 && rb < 0.0;
                            if is_max != (kind == ExtremumKind::Maximum) {
                                continue;
                            }
                            let t = refine_root(rate, ta, ra, tb, rb);
                            let s = tr.state_at(t);
                            // Keep only extrema of the active branch.
                            if observable.value(&s) <= branch.value(&s) {
                                out.push(Event { t, state: s });
                            }
                        }
                    }
                }
            }
            out.sort_by(|a, b| a.t.total_cmp(&b.t));
        }
    }
    out
}

/// First crossing of `functional · state = level` in `direction` along the
/// flow from `s0` within `t_max` time units. With `reversed` the search runs
/// backward in time and `direction` refers to decreasing `t`; the returned
/// time is then the elapsed backward duration.
pub(crate) fn first_crossing(
    s0: &State,
    p: &Params,
    functional: [f64; 4],
    level: f64,
    direction: Direction,
    t_max: f64,
    opts: &SolverOptions,
    reversed: bool,
) -> Result<Option<(f64, State)>> {
    p.validate()?;
    let g = |y: &[f64; 4]| y.iter().zip(functional.iter()).map(|(a, b)| a * b).sum::<f64>() - level;
    let mut scan = SignScan::default();
    let mut hit = None;
    let observer = |step: &DenseStep<4>| {
        for t in sample_times(step) {
            let y = if t == step.t1() { step.end() } else { step.eval(t) };
            if let Some((ta, ga, tb, gb)) = scan.push(t, g(&y)) {
                let wanted = match direction {
                    Direction::Any => true,
                    Direction::Increasing => gb > ga,
                    Direction::Decreasing => gb < ga,
                };
                if wanted {
                    let at = |t: f64| if t >= step.t1() { step.end() } else { step.eval(t) };
                    let tc = refine_root(|t| g(&at(t)), ta.max(step.t0), ga, tb, gb);
                    hit = Some((tc, State(at(tc))));
                    return ControlFlow::Break(());
                }
            }
        }
        ControlFlow::Continue(())
    };
    let sign = if reversed { -1.0 } else { 1.0 };
    let (outcome, _) = solve(&Flow::new(*p, sign), 0.0, s0.0, t_max, opts, observer)?;
    Ok(match outcome {
        Outcome::Stopped { .. } => hit,
        Outcome::Completed => None,
    })
}

fn step_rate(step: &DenseStep<4>, obs: &Observable, t: f64) -> f64 {
    let s = if t == step.t1() { State(step.end()) } else { State(step.eval(t)) };
    obs.rate(&s, &State(step.deriv(t)))
}

fn sample_times(step: &DenseStep<4>) -> impl Iterator<Item = f64> + '_ {
    (0..=SAMPLES_PER_STEP).map(move |k| {
        if k == SAMPLES_PER_STEP {
            step.t1()
        } else {
            step.t0 + step.h * k as f64 / SAMPLES_PER_STEP as f64
        }
    })
}

/// Tracks the last strictly nonzero sample and reports opposite-sign pairs.
#[derive(Default)]
struct SignScan {
    last: Option<(f64, f64)>,
}

impl SignScan {
    fn push(&mut self, t: f64, v: f64) -> Option<(f64, f64, f64, f64)> {
        if v == 0.0 || !v.is_finite() {
            return None;
        }
        let hit = match self.last {
            Some((ta, va)) if ta < t && (va < 0.0) != (v < 0.0) => Some((ta, va, t, v)),
            _ => None,
        };
        if self.last.map_or(true, |(ta, _)| t > ta) || hit.is_some() {
            self.last = Some((t, v));
        }
        hit
    }
}

/// Illinois-modified regula falsi on a bracket with `fa`, `fb` of opposite sign.
fn refine_root<F: Fn(f64) -> f64>(f: F, mut a: f64, mut fa: f64, mut b: f64, mut fb: f64) -> f64 {
    let mut side = 0i8;
    for _ in 0..100 {
        if (b - a).abs() <= 1e-14 * (1.0 + a.abs().max(b.abs())) {
            break;
        }
        let mut c = (a * fb - b * fa) / (fb - fa);
        if !(c > a.min(b) && c < a.max(b)) {
            c = 0.5 * (a + b);
        }
        let fc = f(c);
        if fc == 0.0 {
            return c;
        }
        if (fc < 0.0) == (fb < 0.0) {
            b = c;
            fb = fc;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = c;
            fa = fc;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
    }
    if fa.abs() < fb.abs() {
        a
    } else {
        b
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrate::integrate;
    use crate::model::Params;
    use std::f64::consts::PI;

    #[test]
    fn root_refinement() {
        let r = refine_root(|t| t * t - 2.0, 0.0, -2.0, 2.0, 2.0);
        assert!((r - 2f64.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn single_crossing_of_a_rotation() {
        // Start in E31 with strong negative velocity: eta1 passes -pi once early on.
        let p = Params::new(1.6, 0.06);
        let tr = integrate(&State::new(-3.0, -0.5, 0.0, 0.0), &p, (0.0, 1.0), 1e-10).unwrap();
        let ev = detect_events(&tr, &EventSpec::eta1_section(-PI, Direction::Any));
        assert_eq!(ev.len(), 1);
        assert!((ev[0].state.eta1() + PI).abs() < 1e-12);
        let inc = detect_events(&tr, &EventSpec::eta1_section(-PI, Direction::Increasing));
        assert!(inc.is_empty());
    }

    #[test]
    fn degenerate_section_reports_nothing() {
        // At zero phase lag the cluster state sits at eta1 = pi; its (-1, 0) lift
        // keeps eta1 = -pi for all time.
        let p = Params::new(0.0, 0.06);
        let tr = integrate(&State::new(-PI, 0.0, 0.0, 0.0), &p, (0.0, 10.0), 1e-10).unwrap();
        assert!(tr.nodes().iter().all(|(_, s)| (s.eta1() + PI).abs() < 1e-14));
        assert!(detect_events(&tr, &EventSpec::eta1_section(-PI, Direction::Any)).is_empty());
    }

    #[test]
    fn bad_functional_rejected() {
        assert!(EventSpec::section([0.0; 4], 1.0, Direction::Any).is_err());
    }
}
