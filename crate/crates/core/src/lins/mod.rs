//! Connecting orbits by two-sided shooting, the variational gap problem used
//! to locate the homoclinic tangency, and the codimension-two heteroclinic
//! from the cluster state to the in-phase state.

mod basis;
mod gap;
mod homoclinic;
mod point_c;

use std::io::Write;

pub use basis::{projection_basis, ProjectionBasis};
pub use gap::{find_point_b, gap_along_curve, solve_variational_gap, GapResult, PointB, PointBOptions};
pub use homoclinic::{
    solve_homoclinic_in_e, trace_homoclinic_curve, BvpOptions, CurveError, Endpoints, FreeParameter,
    HomoclinicGuess,
};
pub use point_c::{find_het_s_to_o, HetOptions, PointC};

use crate::error::Result;
use crate::integrate::write_csv_row;
use crate::model::{EquilibriumId, Params, State};

/// A truncated connecting orbit `Z` on `[-T, T]` in the covering space.
#[derive(Debug, Clone)]
pub struct ConnectingOrbit {
    /// Truncation half-length `T`.
    pub half_length: f64,
    /// Time-ordered samples of `Z`.
    pub mesh: Vec<(f64, State)>,
    pub source: EquilibriumId,
    pub target: EquilibriumId,
    pub params: Params,
    /// Named boundary-condition residuals, all absolute values.
    pub residuals: Vec<(String, f64)>,
    /// Offsets along the source unstable and target stable directions.
    pub(crate) amplitudes: (f64, f64),
}

impl ConnectingOrbit {
    pub fn start(&self) -> State {
        self.mesh[0].1
    }

    pub fn end(&self) -> State {
        self.mesh[self.mesh.len() - 1].1
    }

    /// Largest residual.
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().fold(0.0, |m, (_, v)| m.max(*v))
    }

    pub fn residual(&self, name: &str) -> Option<f64> {
        self.residuals.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    /// `t,eta1,psi1,eta2,psi2` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,eta1,psi1,eta2,psi2")?;
        for (t, s) in &self.mesh {
            write_csv_row(&mut w, *t, s)?;
        }
        Ok(())
    }

    /// `key = value` lines with the scalars describing the orbit.
    pub fn write_sidecar<W: Write>(&self, mut w: W) -> Result<()> {
        write_sidecar_header(&mut w, &self.params)?;
        writeln!(w, "T = {}", self.half_length)?;
        writeln!(w, "source = {}", self.source)?;
        writeln!(w, "target = {}", self.target)?;
        for (name, v) in &self.residuals {
            writeln!(w, "residual_{name} = {v:e}")?;
        }
        Ok(())
    }
}

pub(crate) fn write_sidecar_header<W: Write>(w: &mut W, p: &Params) -> Result<()> {
    writeln!(w, "alpha = {}", p.alpha)?;
    writeln!(w, "mu = {}", p.mu)?;
    writeln!(w, "epsilon = {}", p.epsilon)?;
    Ok(())
}
