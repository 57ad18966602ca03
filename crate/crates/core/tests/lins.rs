use approx::assert_abs_diff_eq;
use kwi::lins::{
    find_het_s_to_o, find_point_b, solve_homoclinic_in_e, solve_variational_gap, trace_homoclinic_curve, BvpOptions,
    Endpoints, FreeParameter, HetOptions, HomoclinicGuess, PointBOptions,
};
use kwi::model::{equilibrium, EquilibriumId, EquilibriumKind, Params, SymmetryOp};

#[test]
fn point_c_from_the_published_guess() {
    let c = find_het_s_to_o((1.73, 0.037), (1, 1), &HetOptions::default()).unwrap();
    assert_abs_diff_eq!(c.alpha, 1.735209263, epsilon = 1e-5);
    assert_abs_diff_eq!(c.mu, 0.037605895, epsilon = 1e-5);
    assert_eq!(c.branch, 1);
    assert!(c.residuals.iter().all(|r| r.abs() < 1e-10));
    // The stored orbit runs from next to S31 into the final ball around the target.
    let s31 = equilibrium(EquilibriumId::new(EquilibriumKind::S31, 0, 0), &c.orbit.params).unwrap();
    let target = equilibrium(EquilibriumId::new(EquilibriumKind::O, 1, 1), &c.orbit.params).unwrap();
    assert!((c.orbit.start() - s31).norm() < 1e-5);
    assert!((c.orbit.end() - target).norm() <= 1e-4 * (1.0 + 1e-9));
}

#[test]
fn point_c_symmetric_copy() {
    // kappa' fixes S31 and reverses the transverse unstable direction, so
    // shooting from the other side reaches the kappa' image of the target.
    let lift = SymmetryOp::KappaPrime.act_on_lift((1, 1));
    assert_eq!(lift, (0, -1));
    let opts = HetOptions { branch: Some(-1), ..HetOptions::default() };
    let c = find_het_s_to_o((1.73, 0.037), lift, &opts).unwrap();
    let d = find_het_s_to_o((1.73, 0.037), (1, 1), &HetOptions::default()).unwrap();
    assert_abs_diff_eq!(c.alpha, d.alpha, epsilon = 1e-8);
    assert_abs_diff_eq!(c.mu, d.mu, epsilon = 1e-8);
}

#[test]
fn point_c_rejects_bad_options() {
    let opts = HetOptions { radii: vec![], ..HetOptions::default() };
    assert!(find_het_s_to_o((1.73, 0.037), (1, 1), &opts).is_err());
    let opts = HetOptions { branch: Some(2), ..HetOptions::default() };
    assert!(find_het_s_to_o((1.73, 0.037), (1, 1), &opts).is_err());
}

#[test]
fn homoclinic_is_confined_to_e31() {
    let p = Params::new(1.7, 0.033);
    let o = solve_homoclinic_in_e(&p, FreeParameter::Mu, Endpoints::OToO, &HomoclinicGuess::auto(0.033), &BvpOptions::default())
        .unwrap();
    let off = o.mesh.iter().fold(0.0f64, |m, (_, z)| m.max(z.eta2().abs()).max(z.psi2().abs()));
    assert!(off < 1e-12);
    // One full slip of eta1: O^(0,0) to O^(-1,0), ends on the truncated manifolds nearby.
    assert_eq!((o.source, o.target), (EquilibriumId::origin(), EquilibriumId::new(EquilibriumKind::O, -1, 0)));
    let src = equilibrium(o.source, &o.params).unwrap();
    let tgt = equilibrium(o.target, &o.params).unwrap();
    assert!((o.start() - src).norm() < 0.05 && (o.end() - tgt).norm() < 0.05);
    assert!(o.max_residual() < 1e-6, "{:?}", o.residuals);
}

#[test]
fn curve_is_monotone_in_alpha() {
    let orbits = trace_homoclinic_curve((1.62, 1.78), 9, 0.035, 0.1, &BvpOptions::default()).unwrap();
    assert_eq!(orbits.len(), 9);
    let mus: Vec<f64> = orbits.iter().map(|o| o.params.mu).collect();
    assert!(mus.windows(2).all(|w| w[1] > w[0]), "{mus:?}");
}

#[test]
fn gap_vanishes_at_point_b_with_symmetric_jumps() {
    let b = find_point_b((1.65, 1.75), &PointBOptions::default()).unwrap();
    assert!(b.gap.xi2.abs() < 1e-8);
    assert!(b.gap.xi1.abs() < 1e-5);
    // Away from B the two jumps keep the ratio 1:2 that the symmetry imposes.
    let p = Params::new(1.72, 0.035);
    let o = solve_homoclinic_in_e(&p, FreeParameter::Mu, Endpoints::OToO, &HomoclinicGuess::auto(0.035), &BvpOptions::default())
        .unwrap();
    let g = solve_variational_gap(&o, &BvpOptions::default()).unwrap();
    assert_abs_diff_eq!(g.xi2, 2.0 * g.xi1, epsilon = 1e-6 * g.xi2.abs().max(1.0));
    assert!(g.xi2 < 0.0 && g.transverse_angle < 0.0);
}

#[test]
fn empty_bracket_is_rejected() {
    assert!(find_point_b((1.75, 1.65), &PointBOptions::default()).is_err());
}
