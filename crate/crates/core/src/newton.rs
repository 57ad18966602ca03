//! Damped Newton iteration with a forward-difference Jacobian, shared by the
//! shooting solvers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub(crate) struct NewtonOptions {
    /// Converged when the max-norm of the residual drops below this.
    pub tol: f64,
    pub max_iterations: usize,
    /// Difference step per unknown.
    pub fd_steps: Vec<f64>,
    /// Largest allowed change per unknown in one iteration.
    pub max_change: Vec<f64>,
}

pub(crate) struct NewtonSolution {
    pub x: Vec<f64>,
    pub residual: Vec<f64>,
}

fn max_norm(r: &[f64]) -> f64 {
    r.iter().fold(0.0, |m, v| if v.is_nan() { f64::INFINITY } else { m.max(v.abs()) })
}

/// Solves `f(x) = 0` for square systems. A failed evaluation inside the line
/// search counts as an infinitely bad residual; at the initial point it is
/// returned as is.
pub(crate) fn newton<F>(mut f: F, x0: &[f64], opts: &NewtonOptions) -> Result<NewtonSolution>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut r = f(&x)?;
    let mut norm = max_norm(&r);
    for it in 0..opts.max_iterations {
        if norm < opts.tol {
            return Ok(NewtonSolution { x, residual: r });
        }
        let mut jac = DMatrix::zeros(r.len(), n);
        for k in 0..n {
            let mut xp = x.clone();
            xp[k] += opts.fd_steps[k];
            let rp = f(&xp)?;
            for i in 0..r.len() {
                jac[(i, k)] = (rp[i] - r[i]) / opts.fd_steps[k];
            }
        }
        let Some(step) = jac.lu().solve(&DVector::from_column_slice(&r)) else {
            return Err(Error::NewtonDivergence { iterations: it, residual: norm });
        };
        // Uniform scaling keeps the direction while respecting the caps.
        let mut scale: f64 = 1.0;
        for k in 0..n {
            if step[k].abs() * scale > opts.max_change[k] {
                scale = opts.max_change[k] / step[k].abs();
            }
        }
        if !step.iter().all(|v| v.is_finite()) {
            return Err(Error::NewtonDivergence { iterations: it, residual: norm });
        }
        let mut accepted = false;
        for _ in 0..12 {
            let trial: Vec<f64> = (0..n).map(|k| x[k] - scale * step[k]).collect();
            if let Ok(rt) = f(&trial) {
                let nt = max_norm(&rt);
                if nt < norm || nt < opts.tol {
                    x = trial;
                    r = rt;
                    norm = nt;
                    accepted = true;
                    break;
                }
            }
            scale *= 0.5;
        }
        if !accepted {
            return Err(Error::NewtonDivergence { iterations: it + 1, residual: norm });
        }
    }
    if norm < opts.tol {
        return Ok(NewtonSolution { x, residual: r });
    }
    Err(Error::NewtonDivergence { iterations: opts.max_iterations, residual: norm })
}
