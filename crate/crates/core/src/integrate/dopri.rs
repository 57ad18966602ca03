//! Dormand-Prince 5(4) stepper with PI step-size control and the standard
//! fourth-order continuous extension.

use std::ops::ControlFlow;

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Smallest admissible step.
pub const MIN_STEP: f64 = 1e-14;

/// A right-hand side `y' = f(t, y)` on `N` components.
pub trait OdeSystem<const N: usize> {
    fn rhs(&self, t: f64, y: &[f64; N], dy: &mut [f64; N]);
}

impl<const N: usize, F> OdeSystem<N> for F
where
    F: Fn(f64, &[f64; N], &mut [f64; N]),
{
    fn rhs(&self, t: f64, y: &[f64; N], dy: &mut [f64; N]) {
        self(t, y, dy)
    }
}

/// Tolerances and limits for one solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Relative tolerance; also the absolute one unless `atol` says otherwise.
    pub tol: f64,
    pub atol: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl SolverOptions {
    pub fn new(tol: f64) -> Self {
        SolverOptions { tol, atol: tol, h_max: 1.0, max_steps: 50_000_000 }
    }

    /// Separate absolute tolerance, for solutions that start very close to
    /// an equilibrium and must resolve offsets far below `tol`.
    pub fn with_atol(self, atol: f64) -> Self {
        SolverOptions { atol, ..self }
    }
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions::new(1e-10)
    }
}

/// One accepted step with its interpolation polynomial.
#[derive(Debug, Clone, Copy)]
pub struct DenseStep<const N: usize> {
    pub t0: f64,
    pub h: f64,
    pub coeffs: [[f64; N]; 5],
}

impl<const N: usize> DenseStep<N> {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    pub fn start(&self) -> [f64; N] {
        self.coeffs[0]
    }

    pub fn end(&self) -> [f64; N] {
        std::array::from_fn(|i| self.coeffs[0][i] + self.coeffs[1][i])
    }

    /// Interpolated state at `t` (meaningful for `t` within the step).
    pub fn eval(&self, t: f64) -> [f64; N] {
        let th = (t - self.t0) / self.h;
        let th1 = 1.0 - th;
        let r = &self.coeffs;
        std::array::from_fn(|i| r[0][i] + th * (r[1][i] + th1 * (r[2][i] + th * (r[3][i] + th1 * r[4][i]))))
    }

    /// Time derivative of the interpolant.
    pub fn deriv(&self, t: f64) -> [f64; N] {
        let th = (t - self.t0) / self.h;
        let r = &self.coeffs;
        // y = r0 + r1 th + r2 (th - th^2) + r3 (th^2 - th^3) + r4 (th^2 - 2 th^3 + th^4)
        let d2 = 1.0 - 2.0 * th;
        let d3 = 2.0 * th - 3.0 * th * th;
        let d4 = 2.0 * th - 6.0 * th * th + 4.0 * th * th * th;
        std::array::from_fn(|i| (r[1][i] + d2 * r[2][i] + d3 * r[3][i] + d4 * r[4][i]) / self.h)
    }
}

/// Integration counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

/// How a solve ended.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outcome {
    /// Reached the requested final time.
    Completed,
    /// The observer stopped the solve at the end of the step finishing at `t`.
    Stopped { t: f64 },
}

#[inline]
fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    std::array::from_fn(|i| {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        y[i] + h * acc
    })
}

/// Integrates forward from `t0` to `t1`, handing every accepted step to
/// `observer`. The observer may stop the solve early by returning `Break`.
pub fn solve<const N: usize, S, O>(
    sys: &S,
    t0: f64,
    y0: [f64; N],
    t1: f64,
    opts: &SolverOptions,
    mut observer: O,
) -> Result<(Outcome, Stats)>
where
    S: OdeSystem<N> + ?Sized,
    O: FnMut(&DenseStep<N>) -> ControlFlow<()>,
{
    if !(t1 > t0) || !t0.is_finite() || !t1.is_finite() {
        return Err(Error::InvalidInput(format!("invalid span [{t0}, {t1}]")));
    }
    if !(opts.tol > 0.0) || !(opts.atol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerances must be positive, got {} and {}", opts.tol, opts.atol)));
    }
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite initial state".into()));
    }

    const SAFE: f64 = 0.9;
    const FAC_MIN: f64 = 0.2;
    const FAC_MAX: f64 = 10.0;
    const BETA: f64 = 0.04;
    let expo = 0.2 - BETA * 0.75;

    let (tol, atol) = (opts.tol, opts.atol);
    let mut stats = Stats::default();
    let mut t = t0;
    let mut y = y0;
    let mut k1 = [0.0; N];
    sys.rhs(t, &y, &mut k1);
    stats.evaluations += 1;

    let span = t1 - t0;
    let h_max = opts.h_max.min(span);
    let mut h = initial_step(sys, t, &y, &k1, tol, atol, h_max, &mut stats);
    let mut fac_old: f64 = 1e-4;
    let mut last_rejected = false;

    let (mut k2, mut k3, mut k4, mut k5, mut k6, mut k7) =
        ([0.0; N], [0.0; N], [0.0; N], [0.0; N], [0.0; N], [0.0; N]);

    loop {
        if stats.accepted >= opts.max_steps {
            return Err(Error::TooManySteps { t, max_steps: opts.max_steps });
        }
        let last = t + 1.01 * h >= t1;
        if last {
            h = t1 - t;
        }
        if h.abs() < MIN_STEP {
            return Err(Error::StepSizeUnderflow { t, h });
        }

        sys.rhs(t + C2 * h, &axpy(&y, h, &[(A21, &k1)]), &mut k2);
        sys.rhs(t + C3 * h, &axpy(&y, h, &[(A31, &k1), (A32, &k2)]), &mut k3);
        sys.rhs(t + C4 * h, &axpy(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]), &mut k4);
        sys.rhs(t + C5 * h, &axpy(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]), &mut k5);
        sys.rhs(
            t + h,
            &axpy(&y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
            &mut k6,
        );
        let y_new = axpy(&y, h, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
        sys.rhs(t + h, &y_new, &mut k7);
        stats.evaluations += 6;

        let mut err: f64 = 0.0;
        for i in 0..N {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sk = atol + tol * y[i].abs().max(y_new[i].abs());
            err = err.max((e / sk).abs());
        }
        if !err.is_finite() || y_new.iter().any(|v| !v.is_finite()) {
            stats.rejected += 1;
            h *= 0.1;
            last_rejected = true;
            continue;
        }

        let fac11 = err.powf(expo);
        let mut fac = fac11 / fac_old.powf(BETA);
        fac = (fac / SAFE).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
        let h_new = h / fac;

        if err <= 1.0 {
            fac_old = err.max(1e-4);
            stats.accepted += 1;

            let step = DenseStep {
                t0: t,
                h,
                coeffs: {
                    let mut r = [[0.0; N]; 5];
                    for i in 0..N {
                        let ydiff = y_new[i] - y[i];
                        let bspl = h * k1[i] - ydiff;
                        r[0][i] = y[i];
                        r[1][i] = ydiff;
                        r[2][i] = bspl;
                        r[3][i] = ydiff - h * k7[i] - bspl;
                        r[4][i] = h
                            * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
                    }
                    r
                },
            };

            k1 = k7;
            y = y_new;
            t = if last { t1 } else { t + h };

            if observer(&step).is_break() {
                return Ok((Outcome::Stopped { t }, stats));
            }
            if last {
                return Ok((Outcome::Completed, stats));
            }

            let mut h_next = h_new.abs().min(h_max);
            if last_rejected {
                h_next = h_next.min(h.abs());
            }
            h = h_next;
            last_rejected = false;
        } else {
            h /= (fac11 / SAFE).min(1.0 / FAC_MIN);
            stats.rejected += 1;
            last_rejected = true;
        }
    }
}

fn initial_step<const N: usize, S: OdeSystem<N> + ?Sized>(
    sys: &S,
    t: f64,
    y: &[f64; N],
    f0: &[f64; N],
    tol: f64,
    atol: f64,
    h_max: f64,
    stats: &mut Stats,
) -> f64 {
    let sk: [f64; N] = std::array::from_fn(|i| atol + tol * y[i].abs());
    let rms = |v: &[f64; N]| (v.iter().zip(sk.iter()).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / N as f64).sqrt();
    let dnf = rms(f0);
    let dny = rms(y);
    let mut h = if dnf <= 1e-10 || dny <= 1e-10 { 1e-6 } else { 0.01 * dny / dnf };
    h = h.min(h_max);
    let y1: [f64; N] = std::array::from_fn(|i| y[i] + h * f0[i]);
    let mut f1 = [0.0; N];
    sys.rhs(t + h, &y1, &mut f1);
    stats.evaluations += 1;
    let diff: [f64; N] = std::array::from_fn(|i| f1[i] - f0[i]);
    let der2 = rms(&diff) / h;
    let der12 = der2.max(dnf);
    let h1 = if der12 <= 1e-15 { (h * 1e-3).max(1e-6) } else { (0.01 / der12).powf(0.2) };
    (100.0 * h).min(h1).min(h_max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let sys = |_t: f64, y: &[f64; 1], dy: &mut [f64; 1]| dy[0] = -y[0];
        let mut last = [0.0];
        let (out, stats) = solve(&sys, 0.0, [1.0], 5.0, &SolverOptions::new(1e-12), |s| {
            last = s.end();
            ControlFlow::Continue(())
        })
        .unwrap();
        assert_eq!(out, Outcome::Completed);
        assert!((last[0] - (-5.0f64).exp()).abs() < 1e-11);
        assert!(stats.accepted > 10);
    }

    #[test]
    fn dense_output_is_accurate_inside_steps() {
        let sys = |_t: f64, y: &[f64; 2], dy: &mut [f64; 2]| {
            dy[0] = y[1];
            dy[1] = -y[0];
        };
        let mut worst: f64 = 0.0;
        let mut worst_d: f64 = 0.0;
        solve(&sys, 0.0, [0.0, 1.0], 10.0, &SolverOptions::new(1e-10), |s| {
            for k in 1..4 {
                let t = s.t0 + s.h * k as f64 / 4.0;
                worst = worst.max((s.eval(t)[0] - t.sin()).abs());
                worst_d = worst_d.max((s.deriv(t)[0] - t.cos()).abs());
            }
            ControlFlow::Continue(())
        })
        .unwrap();
        assert!(worst < 1e-8, "{worst}");
        assert!(worst_d < 1e-7, "{worst_d}");
    }

    #[test]
    fn rejects_bad_span() {
        let sys = |_t: f64, _y: &[f64; 1], dy: &mut [f64; 1]| dy[0] = 0.0;
        assert!(solve(&sys, 1.0, [0.0], 1.0, &SolverOptions::default(), |_| ControlFlow::Continue(())).is_err());
    }

    #[test]
    fn blowup_is_reported() {
        let sys = |_t: f64, y: &[f64; 1], dy: &mut [f64; 1]| dy[0] = y[0] * y[0];
        let r = solve(&sys, 0.0, [1.0], 2.0, &SolverOptions::new(1e-8), |_| ControlFlow::Continue(()));
        assert!(matches!(r, Err(Error::StepSizeUnderflow { .. })), "{r:?}");
    }
}
