//! Reduced phase-difference dynamics of three identical Kuramoto oscillators
//! with inertia.
//!
//! With phase differences `eta1 = theta1 - theta2`, `eta2 = theta1 - theta3`
//! and velocities `psi_k = d eta_k / dt`, the unit-inertia, zero-frequency
//! system reads
//!
//! ```text
//! eta1' = psi1
//! psi1' = -eps psi1 + mu f1(eta1, eta2)
//! eta2' = psi2
//! psi2' = -eps psi2 + mu f2(eta1, eta2)
//!
//! f1 = -(2 cos(a) sin(eta1) + sin(eta2 + a) + sin(eta1 - eta2 - a)) / 3
//! f2 = -(2 cos(a) sin(eta2) + sin(eta1 + a) + sin(eta2 - eta1 - a)) / 3
//! ```
//!
//! Angles live in the covering space: nothing in this module wraps them.
//! Every state is ordered `(eta1, psi1, eta2, psi2)`.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use nalgebra::{Matrix2, Matrix4, Vector4};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Damping used throughout unless overridden.
pub const DEFAULT_EPSILON: f64 = 0.1;

/// Model parameters. Inertia is fixed to one and the natural frequency to zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Params {
    /// Phase lag in radians, not reduced modulo 2π.
    pub alpha: f64,
    /// Coupling strength.
    pub mu: f64,
    /// Damping.
    pub epsilon: f64,
}

impl Params {
    pub fn new(alpha: f64, mu: f64) -> Self {
        Params { alpha, mu, epsilon: DEFAULT_EPSILON }
    }

    pub fn with_epsilon(self, epsilon: f64) -> Self {
        Params { epsilon, ..self }
    }

    pub fn with_alpha(self, alpha: f64) -> Self {
        Params { alpha, ..self }
    }

    pub fn with_mu(self, mu: f64) -> Self {
        Params { mu, ..self }
    }

    /// Checks `mu > 0`, `epsilon > 0` and finiteness.
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.mu.is_finite() && self.epsilon.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite parameters {self:?}")));
        }
        if self.mu <= 0.0 {
            return Err(Error::InvalidInput(format!("mu must be positive, got {}", self.mu)));
        }
        if self.epsilon <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// A point `(eta1, psi1, eta2, psi2)` of the reduced phase space, lifted to ℝ⁴.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct State(pub [f64; 4]);

impl State {
    pub const ZERO: State = State([0.0; 4]);

    pub fn new(eta1: f64, psi1: f64, eta2: f64, psi2: f64) -> Self {
        State([eta1, psi1, eta2, psi2])
    }

    pub fn eta1(&self) -> f64 {
        self.0[0]
    }
    pub fn psi1(&self) -> f64 {
        self.0[1]
    }
    pub fn eta2(&self) -> f64 {
        self.0[2]
    }
    pub fn psi2(&self) -> f64 {
        self.0[3]
    }

    pub fn dot(&self, other: &State) -> f64 {
        self.0.iter().zip(other.0.iter()).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Shift by a lattice vector `(2πp, 0, 2πq, 0)`.
    pub fn lifted(&self, p: i64, q: i64) -> State {
        State([self.0[0] + TAU * p as f64, self.0[1], self.0[2] + TAU * q as f64, self.0[3]])
    }

    pub fn to_vector(&self) -> Vector4<f64> {
        Vector4::from(self.0)
    }

    pub fn from_vector(v: &Vector4<f64>) -> State {
        State([v[0], v[1], v[2], v[3]])
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:?}, {:?}, {:?}, {:?})", self.0[0], self.0[1], self.0[2], self.0[3])
    }
}

impl Index<usize> for State {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for State {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

impl Add for State {
    type Output = State;
    fn add(self, rhs: State) -> State {
        State(std::array::from_fn(|i| self.0[i] + rhs.0[i]))
    }
}

impl Sub for State {
    type Output = State;
    fn sub(self, rhs: State) -> State {
        State(std::array::from_fn(|i| self.0[i] - rhs.0[i]))
    }
}

impl Mul<State> for f64 {
    type Output = State;
    fn mul(self, rhs: State) -> State {
        State(rhs.0.map(|v| self * v))
    }
}

impl Neg for State {
    type Output = State;
    fn neg(self) -> State {
        State(self.0.map(|v| -v))
    }
}

/// Coupling terms `(f1, f2)`.
#[inline]
pub fn coupling(eta1: f64, eta2: f64, alpha: f64) -> (f64, f64) {
    let (sa, ca) = alpha.sin_cos();
    let d = eta1 - eta2;
    // sin(eta2 + a), sin(eta1 + a), sin(d - a), sin(-d - a)
    let (s1, c1) = eta1.sin_cos();
    let (s2, c2) = eta2.sin_cos();
    let (sd, cd) = d.sin_cos();
    let sin_e2_pa = s2 * ca + c2 * sa;
    let sin_e1_pa = s1 * ca + c1 * sa;
    let sin_d_ma = sd * ca - cd * sa;
    let sin_md_ma = -sd * ca - cd * sa;
    let f1 = -(2.0 * ca * s1 + sin_e2_pa + sin_d_ma) / 3.0;
    let f2 = -(2.0 * ca * s2 + sin_e1_pa + sin_md_ma) / 3.0;
    (f1, f2)
}

/// `coupling(b + d) - coupling(b)` without cancellation for small `d`, via
/// `sin(x + h) - sin(x) = cos(x) sin(h) - 2 sin(x) sin²(h/2)`.
pub fn coupling_increment(base: (f64, f64), d: (f64, f64), alpha: f64) -> (f64, f64) {
    let inc = |x: f64, h: f64| {
        let s = (0.5 * h).sin();
        x.cos() * h.sin() - 2.0 * x.sin() * s * s
    };
    let ca = alpha.cos();
    let (b1, b2) = base;
    let (d1, d2) = d;
    let f1 = -(2.0 * ca * inc(b1, d1) + inc(b2 + alpha, d2) + inc(b1 - b2 - alpha, d1 - d2)) / 3.0;
    let f2 = -(2.0 * ca * inc(b2, d2) + inc(b1 + alpha, d1) + inc(b2 - b1 - alpha, d2 - d1)) / 3.0;
    (f1, f2)
}

/// Right-hand side of the reduced system.
#[inline]
pub fn vector_field(s: &State, p: &Params) -> State {
    let [eta1, psi1, eta2, psi2] = s.0;
    let (f1, f2) = coupling(eta1, eta2, p.alpha);
    State([psi1, -p.epsilon * psi1 + p.mu * f1, psi2, -p.epsilon * psi2 + p.mu * f2])
}

/// Partial derivatives `[[d1 f1, d2 f1], [d1 f2, d2 f2]]` of the coupling.
#[inline]
pub fn coupling_gradient(eta1: f64, eta2: f64, alpha: f64) -> [[f64; 2]; 2] {
    let ca = alpha.cos();
    let d = eta1 - eta2;
    let c_d_ma = (d - alpha).cos();
    let c_md_ma = (-d - alpha).cos();
    [
        [
            -(2.0 * ca * eta1.cos() + c_d_ma) / 3.0,
            -((eta2 + alpha).cos() - c_d_ma) / 3.0,
        ],
        [
            -((eta1 + alpha).cos() - c_md_ma) / 3.0,
            -(2.0 * ca * eta2.cos() + c_md_ma) / 3.0,
        ],
    ]
}

/// Linearization of [`vector_field`]; its trace is `-2 epsilon` identically.
pub fn jacobian(s: &State, p: &Params) -> Matrix4<f64> {
    let g = coupling_gradient(s.eta1(), s.eta2(), p.alpha);
    let (mu, e) = (p.mu, p.epsilon);
    Matrix4::new(
        0.0, 1.0, 0.0, 0.0, //
        mu * g[0][0], -e, mu * g[0][1], 0.0, //
        0.0, 0.0, 0.0, 1.0, //
        mu * g[1][0], 0.0, mu * g[1][1], -e,
    )
}

/// Which equilibrium, up to lattice translation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EquilibriumKind {
    /// In-phase state, the origin.
    O,
    /// Cluster state in `E12 = {eta1 = psi1 = 0}`.
    S12,
    /// Cluster state in `E23 = {eta1 = eta2, psi1 = psi2}`.
    S23,
    /// Cluster state in `E31 = {eta2 = psi2 = 0}`.
    S31,
}

impl EquilibriumKind {
    /// Invariant subspace used to split eigenvalues into parallel and
    /// transverse parts. The in-phase state lies in all three; `E31` is used.
    pub fn subspace(self) -> Subspace {
        match self {
            EquilibriumKind::O | EquilibriumKind::S31 => Subspace::E31,
            EquilibriumKind::S12 => Subspace::E12,
            EquilibriumKind::S23 => Subspace::E23,
        }
    }
}

impl fmt::Display for EquilibriumKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EquilibriumKind::O => "O",
            EquilibriumKind::S12 => "S12",
            EquilibriumKind::S23 => "S23",
            EquilibriumKind::S31 => "S31",
        };
        f.write_str(s)
    }
}

/// An equilibrium together with its lattice lift `(p, q)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EquilibriumId {
    pub kind: EquilibriumKind,
    pub lift: (i64, i64),
}

impl EquilibriumId {
    pub fn new(kind: EquilibriumKind, p: i64, q: i64) -> Self {
        EquilibriumId { kind, lift: (p, q) }
    }

    pub fn origin() -> Self {
        Self::new(EquilibriumKind::O, 0, 0)
    }
}

impl fmt::Display for EquilibriumId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}^({},{})", self.kind, self.lift.0, self.lift.1)
    }
}

/// The two-dimensional invariant subspaces where two oscillators coincide.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subspace {
    E12,
    E23,
    E31,
}

impl Subspace {
    /// Orthonormal basis of the subspace (columns).
    pub fn basis(self) -> [Vector4<f64>; 2] {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        match self {
            Subspace::E31 => [Vector4::new(1.0, 0.0, 0.0, 0.0), Vector4::new(0.0, 1.0, 0.0, 0.0)],
            Subspace::E12 => [Vector4::new(0.0, 0.0, 1.0, 0.0), Vector4::new(0.0, 0.0, 0.0, 1.0)],
            Subspace::E23 => [Vector4::new(r, 0.0, r, 0.0), Vector4::new(0.0, r, 0.0, r)],
        }
    }

    /// Orthonormal basis of the orthogonal complement.
    pub fn complement(self) -> [Vector4<f64>; 2] {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        match self {
            Subspace::E31 => [Vector4::new(0.0, 0.0, 1.0, 0.0), Vector4::new(0.0, 0.0, 0.0, 1.0)],
            Subspace::E12 => [Vector4::new(1.0, 0.0, 0.0, 0.0), Vector4::new(0.0, 1.0, 0.0, 0.0)],
            Subspace::E23 => [Vector4::new(r, 0.0, -r, 0.0), Vector4::new(0.0, r, 0.0, -r)],
        }
    }

    /// Distance-like defect measuring how far `s` is from the subspace
    /// (no lattice reduction).
    pub fn defect(self, s: &State) -> f64 {
        match self {
            Subspace::E31 => s.eta2().abs().max(s.psi2().abs()),
            Subspace::E12 => s.eta1().abs().max(s.psi1().abs()),
            Subspace::E23 => (s.eta1() - s.eta2()).abs().max((s.psi1() - s.psi2()).abs()),
        }
    }
}

/// Position `s(alpha)` of the cluster state along its subspace.
///
/// Uses `atan2(-6 sin a cos a, sin² a - 9 cos² a)`, which is the tangent
/// formula with both arguments scaled by `cos² a > 0` and therefore free of
/// the singularity at `a = π/2`. If the residual of the resulting state is not
/// below `1e-12`, the root of `2 cos(a) sin(x) + sin(a) + sin(x - a)` is found
/// by bisection instead.
pub fn cluster_position(alpha: f64) -> f64 {
    let (sa, ca) = alpha.sin_cos();
    // `+ 0.0` turns a negative zero into a positive one so that a = 0 gives π.
    let s = (-6.0 * sa * ca + 0.0).atan2(sa * sa - 9.0 * ca * ca);
    if cluster_residual(s, alpha).abs() < 1e-12 {
        return s;
    }
    cluster_position_bisection(alpha).unwrap_or(s)
}

fn cluster_residual(x: f64, alpha: f64) -> f64 {
    2.0 * alpha.cos() * x.sin() + alpha.sin() + (x - alpha).sin()
}

/// Fallback root search for the cluster position: scans `(-π, π]` for a
/// nonzero sign change and bisects it.
fn cluster_position_bisection(alpha: f64) -> Option<f64> {
    let n = 720;
    let g = |x: f64| cluster_residual(x, alpha);
    let mut best: Option<f64> = None;
    for i in 0..n {
        let a = -PI + TAU * i as f64 / n as f64;
        let b = -PI + TAU * (i + 1) as f64 / n as f64;
        let (fa, fb) = (g(a), g(b));
        if fa == 0.0 && a.abs() > 1e-9 {
            best = Some(a);
            break;
        }
        if fa * fb < 0.0 {
            let (mut lo, mut hi, mut flo) = (a, b, fa);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                let fm = g(mid);
                if fm == 0.0 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if (fm < 0.0) == (flo < 0.0) {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
            }
            let root = 0.5 * (lo + hi);
            // x = 0 is always a root at the in-phase state; skip it.
            if root.abs() > 1e-9 {
                best = Some(root);
                break;
            }
        }
    }
    best
}

fn is_transcritical(alpha: f64) -> bool {
    alpha.cos().abs() < 1e-15
}

/// Location of an equilibrium in canonical order, shifted by its lift.
pub fn equilibrium(id: EquilibriumId, p: &Params) -> Result<State> {
    let (lp, lq) = id.lift;
    let base = match id.kind {
        EquilibriumKind::O => State::ZERO,
        kind => {
            if is_transcritical(p.alpha) {
                return Err(Error::DegenerateEquilibrium { alpha: p.alpha });
            }
            let s = cluster_position(p.alpha);
            match kind {
                EquilibriumKind::S12 => State::new(0.0, 0.0, s, 0.0),
                EquilibriumKind::S23 => State::new(-s, 0.0, -s, 0.0),
                EquilibriumKind::S31 => State::new(s, 0.0, 0.0, 0.0),
                EquilibriumKind::O => unreachable!(),
            }
        }
    };
    Ok(base.lifted(lp, lq))
}

/// Eigenvalues at an equilibrium split into the pair tangent to the containing
/// invariant subspace and the pair transverse to it.
#[derive(Debug, Clone)]
pub struct EigenSplit {
    pub parallel: [Complex64; 2],
    pub transverse: [Complex64; 2],
    pub parallel_vectors: [Vector4<Complex64>; 2],
    pub transverse_vectors: [Vector4<Complex64>; 2],
}

impl EigenSplit {
    pub fn all(&self) -> [Complex64; 4] {
        [self.parallel[0], self.parallel[1], self.transverse[0], self.transverse[1]]
    }

    /// Eigenvalue with the largest real part and its eigenvector.
    pub fn leading(&self) -> (Complex64, Vector4<Complex64>) {
        let mut best = (self.parallel[0], self.parallel_vectors[0]);
        let candidates = [
            (self.parallel[1], self.parallel_vectors[1]),
            (self.transverse[0], self.transverse_vectors[0]),
            (self.transverse[1], self.transverse_vectors[1]),
        ];
        for c in candidates {
            if c.0.re > best.0.re {
                best = c;
            }
        }
        best
    }
}

/// Eigenvalues of a real 2×2 matrix, larger real part first, with eigenvectors.
pub(crate) fn eig2(m: &Matrix2<f64>) -> ([Complex64; 2], [nalgebra::Vector2<Complex64>; 2]) {
    let (a, b, c, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
    let half_tr = 0.5 * (a + d);
    let disc = Complex64::new(0.25 * (a - d) * (a - d) + b * c, 0.0).sqrt();
    let lams = [Complex64::new(half_tr, 0.0) + disc, Complex64::new(half_tr, 0.0) - disc];
    let vecs = lams.map(|l| {
        // Two candidate null vectors of (m - l); keep the better-scaled one.
        let v1 = nalgebra::Vector2::new(Complex64::new(b, 0.0), l - a);
        let v2 = nalgebra::Vector2::new(l - d, Complex64::new(c, 0.0));
        let v = if v1.norm() >= v2.norm() { v1 } else { v2 };
        let n = v.norm();
        if n > 0.0 {
            v / Complex64::new(n, 0.0)
        } else if (a - l.re).abs() <= (d - l.re).abs() {
            // m is a multiple of the identity on this eigenvalue.
            nalgebra::Vector2::new(Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0))
        } else {
            nalgebra::Vector2::new(Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0))
        }
    });
    (lams, vecs)
}

/// Splits the spectrum of the Jacobian at `id` into parallel and transverse
/// pairs relative to the subspace containing the equilibrium.
pub fn eigen_split(id: EquilibriumId, p: &Params) -> Result<EigenSplit> {
    let x = equilibrium(id, p)?;
    let j = jacobian(&x, p);
    Ok(split_on_subspace(&j, id.kind.subspace()))
}

/// In the orthonormal basis `[P Q]` adapted to an invariant subspace the
/// Jacobian is block upper triangular: `[[A, B], [0, C]]`. `A` carries the
/// parallel spectrum and `C` the transverse one.
pub(crate) fn split_on_subspace(j: &Matrix4<f64>, sub: Subspace) -> EigenSplit {
    let p = sub.basis();
    let q = sub.complement();
    let proj = |u: &Vector4<f64>, v: &Vector4<f64>| u.dot(&(j * v));
    let a = Matrix2::new(proj(&p[0], &p[0]), proj(&p[0], &p[1]), proj(&p[1], &p[0]), proj(&p[1], &p[1]));
    let b = Matrix2::new(proj(&p[0], &q[0]), proj(&p[0], &q[1]), proj(&p[1], &q[0]), proj(&p[1], &q[1]));
    let c = Matrix2::new(proj(&q[0], &q[0]), proj(&q[0], &q[1]), proj(&q[1], &q[0]), proj(&q[1], &q[1]));

    let pc = p.map(|v| v.map(|x| Complex64::new(x, 0.0)));
    let qc = q.map(|v| v.map(|x| Complex64::new(x, 0.0)));

    let (par, par_v) = eig2(&a);
    let parallel_vectors = par_v.map(|v| pc[0] * v[0] + pc[1] * v[1]);

    let (tr, tr_v) = eig2(&c);
    let ac = a.map(|x| Complex64::new(x, 0.0));
    let bc = b.map(|x| Complex64::new(x, 0.0));
    let mut transverse_vectors = [Vector4::zeros(); 2];
    for (k, (lam, w)) in tr.iter().zip(tr_v.iter()).enumerate() {
        // Solve (A - lam) u = -B w for the parallel part of the eigenvector.
        let lhs = ac - nalgebra::Matrix2::identity() * *lam;
        let rhs = -(bc * w);
        let u = lhs.try_inverse().map(|inv| inv * rhs).unwrap_or_else(nalgebra::Vector2::zeros);
        let u = if u.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            u
        } else {
            nalgebra::Vector2::zeros()
        };
        let v = pc[0] * u[0] + pc[1] * u[1] + qc[0] * w[0] + qc[1] * w[1];
        let n = v.norm();
        transverse_vectors[k] = v / Complex64::new(n, 0.0);
    }
    EigenSplit { parallel: par, transverse: tr, parallel_vectors, transverse_vectors }
}

/// Elements of the permutation group acting on the three oscillators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SymmetryOp {
    Identity,
    /// Cyclic permutation `theta -> (theta3, theta1, theta2)`.
    Rho,
    RhoSquared,
    /// Transposition (23), swaps `eta1` and `eta2`.
    Kappa,
    /// Transposition (13), fixes `E31` pointwise.
    KappaPrime,
    /// Transposition (12), fixes `E12` pointwise.
    KappaDoublePrime,
}

impl SymmetryOp {
    pub const ALL: [SymmetryOp; 6] = [
        SymmetryOp::Identity,
        SymmetryOp::Rho,
        SymmetryOp::RhoSquared,
        SymmetryOp::Kappa,
        SymmetryOp::KappaPrime,
        SymmetryOp::KappaDoublePrime,
    ];

    /// Action on `(eta1, eta2)`, as an integer matrix; velocities transform identically.
    pub fn angle_matrix(self) -> [[i8; 2]; 2] {
        match self {
            SymmetryOp::Identity => [[1, 0], [0, 1]],
            SymmetryOp::Rho => [[0, -1], [1, -1]],
            SymmetryOp::RhoSquared => [[-1, 1], [-1, 0]],
            SymmetryOp::Kappa => [[0, 1], [1, 0]],
            SymmetryOp::KappaPrime => [[1, -1], [0, -1]],
            SymmetryOp::KappaDoublePrime => [[-1, 0], [-1, 1]],
        }
    }

    /// 4×4 representation on canonical states.
    pub fn matrix(self) -> Matrix4<f64> {
        let a = self.angle_matrix();
        let mut m = Matrix4::zeros();
        for r in 0..2 {
            for c in 0..2 {
                let v = a[r][c] as f64;
                m[(2 * r, 2 * c)] = v;
                m[(2 * r + 1, 2 * c + 1)] = v;
            }
        }
        m
    }

    /// Action on lattice indices of an equilibrium lift.
    pub fn act_on_lift(self, lift: (i64, i64)) -> (i64, i64) {
        let a = self.angle_matrix();
        (
            a[0][0] as i64 * lift.0 + a[0][1] as i64 * lift.1,
            a[1][0] as i64 * lift.0 + a[1][1] as i64 * lift.1,
        )
    }
}

/// Applies a group element to a state.
pub fn apply_symmetry(g: SymmetryOp, s: &State) -> State {
    let a = g.angle_matrix();
    let [e1, p1, e2, p2] = s.0;
    let (a00, a01, a10, a11) = (a[0][0] as f64, a[0][1] as f64, a[1][0] as f64, a[1][1] as f64);
    State([
        a00 * e1 + a01 * e2,
        a00 * p1 + a01 * p2,
        a10 * e1 + a11 * e2,
        a10 * p1 + a11 * p2,
    ])
}

/// Third root of unity `exp(2πi/3)`.
pub fn cube_root_of_unity() -> Complex64 {
    Complex64::from_polar(1.0, TAU / 3.0)
}

/// Symmetric complex coordinates `(phi, phi_dot)` in which the cyclic
/// permutation acts by multiplication with `exp(2πi/3)`.
pub fn to_symmetric(s: &State) -> (Complex64, Complex64) {
    let w2 = cube_root_of_unity().powi(2);
    let phi = -w2 * s.eta1() - s.eta2();
    let phi_dot = -w2 * s.psi1() - s.psi2();
    (phi, phi_dot)
}

/// Observable vanishing exactly on the union of the invariant subspaces
/// (modulo the 2π lattice).
pub fn observable_d(s: &State) -> f64 {
    let [e1, p1, e2, p2] = s.0;
    let h = |x: f64| {
        let v = (0.5 * x).sin();
        v * v
    };
    (h(e1) + p1 * p1) * (h(e2) + p2 * p2) * (h(e1 - e2) + (p1 - p2) * (p1 - p2))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*seed >> 11) as f64) / ((1u64 << 53) as f64)
    }

    fn random_state(seed: &mut u64) -> State {
        State(std::array::from_fn(|i| {
            let u = 2.0 * lcg(seed) - 1.0;
            if i % 2 == 0 { 4.0 * u } else { 0.6 * u }
        }))
    }

    /// Root of the cluster equation by plain bisection on [0.1, 1.5].
    fn cluster_root_oracle(alpha: f64) -> f64 {
        let g = |x: f64| 2.0 * alpha.cos() * x.sin() + alpha.sin() + (x - alpha).sin();
        let (mut lo, mut hi) = (0.1, 1.5);
        assert!(g(lo) * g(hi) < 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(lo) * g(mid) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn origin_is_fixed() {
        let p = Params::new(1.3, 0.07);
        assert_eq!(vector_field(&State::ZERO, &p), State::ZERO);
    }

    #[test]
    fn cluster_state_matches_bisection_root() {
        let alpha = 1.7;
        let oracle = cluster_root_oracle(alpha);
        assert!((oracle - 0.744).abs() < 1e-3);
        let s = cluster_position(alpha);
        assert!((s - oracle).abs() < 1e-12);
        let x = State::new(oracle, 0.0, 0.0, 0.0);
        assert!(vector_field(&x, &Params::new(alpha, 0.05)).max_abs() < 1e-14);
    }

    #[test]
    fn cluster_at_zero_lag_is_antiphase() {
        let x = equilibrium(EquilibriumId::new(EquilibriumKind::S31, 0, 0), &Params::new(0.0, 0.06)).unwrap();
        assert!((x.eta1() - PI).abs() < 1e-15);
        assert_eq!(&x.0[1..], &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn lattice_lift_of_origin() {
        let x = equilibrium(EquilibriumId::new(EquilibriumKind::O, -1, 0), &Params::new(1.0, 0.06)).unwrap();
        assert_eq!(x, State::new(-TAU, 0.0, 0.0, 0.0));
    }

    #[test]
    fn all_equilibria_have_small_residual() {
        for &alpha in &[0.0, 0.4, 1.25, 1.5, 1.6, 1.70111, 1.9, 2.5, 3.0, -0.7] {
            let p = Params::new(alpha, 0.04);
            for kind in [EquilibriumKind::O, EquilibriumKind::S12, EquilibriumKind::S23, EquilibriumKind::S31] {
                for lift in [(0, 0), (-1, 0), (2, -3)] {
                    let x = equilibrium(EquilibriumId::new(kind, lift.0, lift.1), &p).unwrap();
                    assert!(vector_field(&x, &p).max_abs() < 1e-12, "{kind} {alpha}");
                }
            }
        }
    }

    #[test]
    fn cluster_merges_with_origin_at_transcritical() {
        let err = equilibrium(
            EquilibriumId::new(EquilibriumKind::S31, 0, 0),
            &Params::new(std::f64::consts::FRAC_PI_2, 0.06),
        );
        assert!(matches!(err, Err(Error::DegenerateEquilibrium { .. })));
        for sign in [-1.0, 1.0] {
            let s = cluster_position(std::f64::consts::FRAC_PI_2 + sign * 1e-6);
            assert!(s.abs() < 1e-5, "{s}");
        }
    }

    #[test]
    fn symmetry_equivariance() {
        let p = Params::new(1.7, 0.05);
        let mut seed = 7;
        for _ in 0..100 {
            let s = random_state(&mut seed);
            for g in SymmetryOp::ALL {
                let lhs = vector_field(&apply_symmetry(g, &s), &p);
                let rhs = apply_symmetry(g, &vector_field(&s, &p));
                assert!((lhs - rhs).max_abs() < 1e-14, "{g:?}");
            }
        }
    }

    #[test]
    fn group_laws() {
        let mut seed = 3;
        for _ in 0..100 {
            let s = random_state(&mut seed);
            let r3 = apply_symmetry(SymmetryOp::Rho, &apply_symmetry(SymmetryOp::Rho, &apply_symmetry(SymmetryOp::Rho, &s)));
            assert!((r3 - s).max_abs() < 1e-14);
            let r2 = apply_symmetry(SymmetryOp::Rho, &apply_symmetry(SymmetryOp::Rho, &s));
            assert!((r2 - apply_symmetry(SymmetryOp::RhoSquared, &s)).max_abs() < 1e-14);
            for t in [SymmetryOp::Kappa, SymmetryOp::KappaPrime, SymmetryOp::KappaDoublePrime] {
                assert!((apply_symmetry(t, &apply_symmetry(t, &s)) - s).max_abs() < 1e-14);
            }
        }
    }

    #[test]
    fn kappa_prime_fixes_e31() {
        let s = State::new(-2.3, 0.41, 0.0, 0.0);
        assert_eq!(apply_symmetry(SymmetryOp::KappaPrime, &s), s);
        let s = State::new(0.0, 0.0, 1.1, -0.2);
        assert_eq!(apply_symmetry(SymmetryOp::KappaDoublePrime, &s), s);
    }

    #[test]
    fn symmetric_coordinates() {
        let w = cube_root_of_unity();
        let (phi, _) = to_symmetric(&State::new(0.0, 0.0, 0.8, 0.1));
        assert!((phi - Complex64::new(-0.8, 0.0)).norm() < 1e-15);
        let (phi, _) = to_symmetric(&State::new(0.6, 0.0, 0.6, 0.0));
        assert!((phi - w * 0.6).norm() < 1e-15);
        let mut seed = 11;
        for _ in 0..20 {
            let s = random_state(&mut seed);
            let (a, ad) = to_symmetric(&apply_symmetry(SymmetryOp::Rho, &s));
            let (b, bd) = to_symmetric(&s);
            assert!((a - w * b).norm() < 1e-13);
            assert!((ad - w * bd).norm() < 1e-13);
        }
    }

    #[test]
    fn observable_vanishes_on_subspaces() {
        assert_eq!(observable_d(&State::new(0.0, 0.0, 1.3, 0.4)), 0.0);
        assert!(observable_d(&State::new(TAU, 0.0, 0.0, 0.0)) < 1e-30);
        let s = State::new(PI, 0.1, 2.0, -0.3);
        let f1 = 1.0 + 0.01;
        let f2 = 1.0_f64.sin().powi(2) + 0.09;
        let f3 = ((PI - 2.0) / 2.0).sin().powi(2) + 0.16;
        assert!((observable_d(&s) - f1 * f2 * f3).abs() < 1e-15);
        assert!(observable_d(&s) > 0.0);
    }

    #[test]
    fn jacobian_trace_and_finite_differences() {
        let p = Params::new(1.7, 0.05);
        let mut seed = 5;
        for _ in 0..20 {
            let s = random_state(&mut seed);
            let j = jacobian(&s, &p);
            assert!((j.trace() + 0.2).abs() < 1e-15);
            let h = 1e-6;
            for c in 0..4 {
                let mut sp = s;
                let mut sm = s;
                sp[c] += h;
                sm[c] -= h;
                let fd = (1.0 / (2.0 * h)) * (vector_field(&sp, &p) - vector_field(&sm, &p));
                for r in 0..4 {
                    assert!((j[(r, c)] - fd[r]).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn origin_spectrum_near_point_b() {
        let p = Params::new(1.70111, 0.03317);
        let j = jacobian(&State::ZERO, &p);
        // Oracle: generic eigensolver on the full matrix.
        let mut ev: Vec<f64> = j.complex_eigenvalues().iter().map(|z| z.re).collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let disc = (0.01 - 4.0 * p.mu * p.alpha.cos()).sqrt();
        let (lp, lm) = ((-0.1 + disc) / 2.0, (-0.1 - disc) / 2.0);
        assert!((ev[3] - lp).abs() < 1e-10 && (ev[2] - lp).abs() < 1e-10);
        assert!((ev[0] - lm).abs() < 1e-10 && (ev[1] - lm).abs() < 1e-10);
        assert!((lp - 0.0325).abs() < 1e-3 && (lm + 0.1325).abs() < 1e-3);
        let split = eigen_split(EquilibriumId::origin(), &p).unwrap();
        for pair in [split.parallel, split.transverse] {
            assert!((pair[0].re - lp).abs() < 1e-12 && pair[0].im == 0.0);
            assert!((pair[1].re - lm).abs() < 1e-12);
        }
    }

    #[test]
    fn origin_is_bifocus_below_transcritical() {
        let split = eigen_split(EquilibriumId::origin(), &Params::new(1.0, 0.06)).unwrap();
        for z in split.all() {
            assert!(z.im.abs() > 0.0);
            assert!((z.re + 0.05).abs() < 1e-14);
        }
    }

    #[test]
    fn split_pairs_sum_to_minus_epsilon() {
        for &alpha in &[0.3, 1.2, 1.7, 2.2] {
            let p = Params::new(alpha, 0.05);
            for kind in [EquilibriumKind::S12, EquilibriumKind::S23, EquilibriumKind::S31] {
                let id = EquilibriumId::new(kind, 1, -2);
                let sp = eigen_split(id, &p).unwrap();
                let x = equilibrium(id, &p).unwrap();
                let j = jacobian(&x, &p).map(|v| Complex64::new(v, 0.0));
                assert!((sp.parallel[0] + sp.parallel[1] + 0.1).norm() < 1e-10);
                assert!((sp.transverse[0] + sp.transverse[1] + 0.1).norm() < 1e-10);
                let pairs = sp.parallel.iter().zip(&sp.parallel_vectors).chain(sp.transverse.iter().zip(&sp.transverse_vectors));
                for (lam, v) in pairs {
                    assert!((j * v - v * *lam).norm() < 1e-10, "{kind} {alpha}");
                }
                for v in sp.parallel_vectors {
                    let re = v.map(|z| z.re);
                    assert!(kind.subspace().defect(&State::from_vector(&re)) < 1e-12);
                }
            }
        }
    }
}
