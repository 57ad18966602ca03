use std::f64::consts::{PI, TAU};

use approx::assert_relative_eq;
use kwi::integrate::{detect_events, Direction, EventSpec};
use kwi::model::{apply_symmetry, Params, State, SymmetryOp};
use kwi::orbits::{
    crossing_distance, detect_multiplier_crossing, find_periodic_orbit, floquet_multipliers, orbit_from_transient,
    CrossingOptions, CrossingTarget, OrbitOptions, PeriodicOrbit,
};
use kwi::Error;

fn in_e_orbit(alpha: f64) -> PeriodicOrbit {
    let p = Params::new(alpha, 0.06);
    orbit_from_transient(&p, &State::new(0.0, -1.0, 0.0, 0.0), (-1, 0), 2000.0, &OrbitOptions::default()).unwrap()
}

fn wrap(x: f64) -> f64 {
    (x + PI).rem_euclid(TAU) - PI
}

#[test]
fn in_e_orbit_closes_and_stays_in_e() {
    let o = in_e_orbit(1.7);
    assert!(o.in_e);
    assert!(o.closure < 1e-9, "closure {}", o.closure);
    assert_eq!(o.state.eta1(), -PI);
    let tr = o.trajectory(1e-11).unwrap();
    let end = tr.final_state();
    let expected = o.state + o.shift();
    assert!((end - expected).max_abs() < 1e-8);
    for (_, z) in tr.nodes() {
        assert_eq!((z.eta2(), z.psi2()), (0.0, 0.0));
        // E31 is fixed pointwise by kappa', so the orbit maps to itself.
        assert_eq!(apply_symmetry(SymmetryOp::KappaPrime, &z), z);
    }
}

#[test]
fn monodromy_determinant_follows_liouville() {
    for alpha in [1.65, 1.76] {
        let o = in_e_orbit(alpha);
        let f = floquet_multipliers(&o, 1e-11).unwrap();
        let liouville = (-2.0 * o.params.epsilon * o.period).exp();
        assert_relative_eq!(f.determinant(), liouville, epsilon = 1e-6);
        assert_relative_eq!(f.product().re, liouville, epsilon = 1e-6);
        let near_one = f.multipliers.iter().filter(|z| (**z - 1.0).norm() < 1e-4).count();
        assert_eq!(near_one, 1, "{:?}", f.multipliers);
        assert!((f.multipliers[f.trivial] - 1.0).norm() < 1e-6);
    }
}

#[test]
fn transverse_block_matches_full_spectrum() {
    let o = in_e_orbit(1.76);
    let f = floquet_multipliers(&o, 1e-11).unwrap();
    let t = f.transverse.unwrap();
    for z in t {
        assert!(f.multipliers.iter().any(|m| (m - z).norm() < 1e-8), "{z} not in {:?}", f.multipliers);
    }
    // Unstable off E31 beyond the pitchfork of cycles.
    assert!(t[0].re > 1.0);
    assert!(crossing_distance(&f, CrossingTarget::PlusOneTransverse).unwrap() > 0.0);
}

#[test]
fn period_grows_toward_the_homoclinic() {
    let a = in_e_orbit(1.8);
    let b = in_e_orbit(1.89);
    assert!(b.period > a.period, "{} vs {}", b.period, a.period);
}

#[test]
fn no_pitchfork_below_its_onset() {
    let o = in_e_orbit(1.5);
    match detect_multiplier_crossing(&o, 1.6, CrossingTarget::PlusOneTransverse, &CrossingOptions::default()) {
        Err(Error::NoCrossing { lo, hi }) => assert_eq!((lo, hi), (1.5, 1.6)),
        other => panic!("expected NoCrossing, got {other:?}"),
    }
}

#[test]
fn crossing_is_bracketed_tightly() {
    let o = in_e_orbit(1.70);
    let c = detect_multiplier_crossing(&o, 1.80, CrossingTarget::PlusOneTransverse, &CrossingOptions::default()).unwrap();
    assert!((c.alpha - 1.74).abs() < 0.02);
    assert!(c.distance.abs() < 1e-4);
    let d: Vec<f64> = c.samples.iter().map(|s| s.1).collect();
    assert!(d.first().unwrap() < &0.0);
}

#[test]
fn winding_must_cross_the_section() {
    let p = Params::new(1.7, 0.06);
    let r = find_periodic_orbit(&p, (0, 1), &State::new(-PI, -1.0, 0.0, 0.0), 40.0, &OrbitOptions::default());
    assert!(matches!(r, Err(Error::InvalidInput(_))));
}

/// After the pitchfork the two orbits leaving E31 are images of each other under kappa'.
#[test]
fn pitchfork_branches_are_kappa_prime_images() {
    let p = Params::new(1.745, 0.06);
    let opts = OrbitOptions::default();
    let seed = State::new(0.0, -1.0, 0.05, 0.0);
    let a = orbit_from_transient(&p, &seed, (-1, 0), 3000.0, &opts).unwrap();
    let b = orbit_from_transient(&p, &apply_symmetry(SymmetryOp::KappaPrime, &seed), (-1, 0), 3000.0, &opts).unwrap();
    assert!(!a.in_e && !b.in_e);
    assert!(a.state.eta2() * b.state.eta2() < 0.0, "same branch twice: {} {}", a.state, b.state);
    assert_relative_eq!(a.period, b.period, epsilon = 1e-8);

    // Follow kappa'(a) until it meets an eta1 section and compare with b there.
    let image = apply_symmetry(SymmetryOp::KappaPrime, &a.state);
    let tr = kwi::integrate::integrate(&image, &p, (0.0, 2.0 * a.period), 1e-12).unwrap();
    let hit = (-3..=1)
        .flat_map(|k| detect_events(&tr, &EventSpec::eta1_section(-PI + TAU * k as f64, Direction::Decreasing)))
        .filter(|ev| ev.t > 1e-9)
        .min_by(|x, y| x.t.total_cmp(&y.t))
        .unwrap();
    let z = hit.state;
    let diff = [wrap(z.eta1() - b.state.eta1()), z.psi1() - b.state.psi1(), wrap(z.eta2() - b.state.eta2()), z.psi2() - b.state.psi2()];
    assert!(diff.iter().all(|d| d.abs() < 1e-8), "{diff:?}");
}
