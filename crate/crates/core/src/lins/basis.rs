use nalgebra::{Matrix4, Vector4};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{equilibrium, jacobian, EquilibriumId, Params, State};

/// Eigenvalues closer than this to the imaginary axis block the split.
const SPLIT_MARGIN: f64 = 1e-8;

/// Orthonormal bases of the stable and unstable invariant subspaces at an
/// equilibrium, on both sides.
///
/// `w_s` spans the left stable subspace, which annihilates every unstable
/// right eigenvector; `w_u` is the mirror image. Only the spans matter, so
/// doubled eigenvalues are harmless.
#[derive(Debug, Clone)]
pub struct ProjectionBasis {
    pub equilibrium: EquilibriumId,
    pub point: State,
    pub w_s: [Vector4<f64>; 2],
    pub w_u: [Vector4<f64>; 2],
    /// Right stable subspace.
    pub v_s: [Vector4<f64>; 2],
    /// Right unstable subspace.
    pub v_u: [Vector4<f64>; 2],
    pub stable: [Complex64; 2],
    pub unstable: [Complex64; 2],
}

impl ProjectionBasis {
    /// `(⟨w_s1, d⟩, ⟨w_s2, d⟩)` for `d = x - point`: zero iff `x` is in the
    /// affine unstable subspace.
    pub fn stable_coordinates(&self, x: &State) -> [f64; 2] {
        let d = (*x - self.point).to_vector();
        [self.w_s[0].dot(&d), self.w_s[1].dot(&d)]
    }

    pub fn unstable_coordinates(&self, x: &State) -> [f64; 2] {
        let d = (*x - self.point).to_vector();
        [self.w_u[0].dot(&d), self.w_u[1].dot(&d)]
    }
}

pub fn projection_basis(id: EquilibriumId, p: &Params) -> Result<ProjectionBasis> {
    p.validate()?;
    let x = equilibrium(id, p)?;
    let j = jacobian(&x, p);
    let mut eig: Vec<Complex64> = j.complex_eigenvalues().iter().copied().collect();
    eig.sort_by(|a, b| a.re.total_cmp(&b.re));
    let split_ok = eig[1].re < -SPLIT_MARGIN && eig[2].re > SPLIT_MARGIN;
    if !split_ok {
        return Err(Error::SpectralSplitFailure { real_parts: eig.iter().map(|z| z.re).collect() });
    }
    let stable = [eig[0], eig[1]];
    let unstable = [eig[2], eig[3]];
    let jt = j.transpose();
    Ok(ProjectionBasis {
        equilibrium: id,
        point: x,
        // The range of prod (J - l) over one half of the spectrum is the
        // invariant subspace of the other half.
        v_u: range_basis(&spectral_product(&j, &stable)),
        v_s: range_basis(&spectral_product(&j, &unstable)),
        w_s: range_basis(&spectral_product(&jt, &unstable)),
        w_u: range_basis(&spectral_product(&jt, &stable)),
        stable,
        unstable,
    })
}

/// `(M - l1)(M - l2)` for a real or complex-conjugate pair, in real arithmetic.
fn spectral_product(m: &Matrix4<f64>, pair: &[Complex64; 2]) -> Matrix4<f64> {
    let sum = (pair[0] + pair[1]).re;
    let prod = (pair[0] * pair[1]).re;
    m * m - m * sum + Matrix4::identity() * prod
}

/// Orthonormal basis of the dominant two-dimensional range of a rank-2 matrix.
///
/// Singular vectors carry an arbitrary rotation that can jump between nearby
/// parameters, so the basis is rebuilt from the projector onto the range
/// applied to the coordinate axes in a fixed order. This keeps coordinates
/// in the basis continuous, which the shooting Newton solves rely on.
fn range_basis(m: &Matrix4<f64>) -> [Vector4<f64>; 2] {
    let svd = m.svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let mut idx = [0usize, 1, 2, 3];
    idx.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let (u0, u1) = (u.column(idx[0]).into_owned(), u.column(idx[1]).into_owned());
    let project = |v: Vector4<f64>| u0 * u0.dot(&v) + u1 * u1.dot(&v);
    let mut out: Vec<Vector4<f64>> = Vec::with_capacity(2);
    for k in 0..4 {
        let mut v = project(Vector4::ith(k, 1.0));
        for w in &out {
            v -= w * w.dot(&v);
        }
        // A tenth of the unit length keeps the axis well inside the range.
        if v.norm() > 0.1 {
            out.push(v.normalize());
            if out.len() == 2 {
                return [out[0], out[1]];
            }
        }
    }
    [u0, u1]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn annihilation_at_doubled_spectrum() {
        let p = Params::new(1.70111, 0.03317);
        let b = projection_basis(EquilibriumId::origin(), &p).unwrap();
        let j = jacobian(&State::ZERO, &p);
        // Independent oracle: right eigenvectors from the closed 2×2 blocks.
        let disc = (0.01 - 4.0 * p.mu * p.alpha.cos()).sqrt();
        let lp = (-0.1 + disc) / 2.0;
        let lm = (-0.1 - disc) / 2.0;
        for (lam, wset) in [(lp, &b.w_s), (lm, &b.w_u)] {
            for v in [Vector4::new(1.0, lam, 0.0, 0.0), Vector4::new(0.0, 0.0, 1.0, lam)] {
                assert!(((j * v) - v * lam).norm() < 1e-14);
                for w in wset {
                    assert!(w.dot(&v).abs() < 1e-8 * v.norm());
                }
            }
        }
        for w in b.w_s.iter().chain(b.w_u.iter()) {
            assert!((w.norm() - 1.0).abs() < 1e-12);
        }
        assert!((b.unstable[0].re - 0.0325).abs() < 1e-3);
    }

    #[test]
    fn bifocus_has_no_split() {
        let r = projection_basis(EquilibriumId::origin(), &Params::new(1.0, 0.06));
        assert!(matches!(r, Err(Error::SpectralSplitFailure { .. })));
    }
}
