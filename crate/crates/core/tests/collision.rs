mod common;

use common::*;
use second_species::collision::*;
use second_species::plane::PlanePoint;

const PAIRS: [(RotationPair, [f64; 2], [f64; 2]); 4] = [
    ((-1, 1), [1.0, 0.0], [-0.3, 1.1]),
    ((1, 2), [0.8, 0.4], [-1.0, -0.2]),
    ((-2, 1), [1.2, -0.3], [0.2, 0.9]),
    ((1, -1), [0.7, 0.7], [-0.6, 0.5]),
];

fn masses() -> MassParams {
    MassParams::new(0.3, 0.0).unwrap()
}

/// A flight time well inside the common branch.
fn mid_time(k: RotationPair, a: PlanePoint, b: PlanePoint) -> f64 {
    let (lo, hi) = segment_time_range(k, a, b).unwrap();
    if hi.is_finite() {
        0.5 * (lo + hi)
    } else {
        1.5 * lo
    }
}

fn segments() -> Vec<CollisionSegment> {
    PAIRS
        .iter()
        .map(|&(k, a, b)| {
            let (a, b) = (PlanePoint::from(a), PlanePoint::from(b));
            segment_action(k, mid_time(k, a, b), a, b, masses()).unwrap()
        })
        .collect()
}

#[test]
fn action_is_the_mass_weighted_sum_of_quadrature_actions() {
    for seg in segments() {
        let mut s = 0.0;
        for (arc, w) in seg.arcs.iter().zip([seg.masses.alpha1, seg.masses.alpha2]) {
            let (j, t) = ellipse_action_and_time(arc.n, arc.energy, seg.x_minus, seg.x_plus, arc.second_focus);
            assert!(rel_err(t, seg.tof) < 1e-9, "arc time {t} vs {}", seg.tof);
            s += w * (j - arc.energy * seg.tof);
        }
        assert!(rel_err(seg.action_s, s) < 1e-9, "k = {:?}: {} vs {s}", seg.k, seg.action_s);
    }
}

#[test]
fn gradient_matches_finite_differences() {
    let h = 1e-5;
    for seg in segments() {
        let g = segment_gradient(&seg);
        let s = |tau: f64, a: PlanePoint, b: PlanePoint| segment_action(seg.k, tau, a, b, seg.masses).unwrap().action_s;
        let (tau, a, b) = (seg.tof, seg.x_minus, seg.x_plus);
        let ex = PlanePoint::new(1.0, 0.0);
        let ey = PlanePoint::new(0.0, 1.0);
        let dplus = PlanePoint::new(central(|t| s(tau, a, b + ex * t), 0.0, h), central(|t| s(tau, a, b + ey * t), 0.0, h));
        let dminus = PlanePoint::new(central(|t| s(tau, a + ex * t, b), 0.0, h), central(|t| s(tau, a + ey * t, b), 0.0, h));
        let dtau = central(|t| s(t, a, b), tau, h);
        assert!((g.y_plus - dplus).norm() < 1e-7, "k = {:?}", seg.k);
        assert!((g.y_minus + dminus).norm() < 1e-7, "k = {:?}", seg.k);
        assert!((g.energy + dtau).abs() < 1e-7);

        let slope = segment_energy_slope(&seg).unwrap();
        let fd = central(|t| segment_action(seg.k, t, a, b, seg.masses).unwrap().energy, tau, h);
        assert!(rel_err(slope, fd) < 1e-6);
    }
}

#[test]
fn energy_fixed_action_obeys_the_envelope_identity() {
    let h = 1e-6;
    for seg in segments() {
        // An energy the segment attains by construction.
        let (k, a, b, energy) = (seg.k, seg.x_minus, seg.x_plus, seg.energy);
        let l = energy_fixed_action_l(k, energy, a, b, masses()).unwrap();
        assert!(rel_err(l.segment.tof, seg.tof) < 1e-9);
        assert!((l.segment.energy - energy).abs() < 1e-12);
        // L = Σ αᵢJᵢ: quadrature of the two Maupertuis actions.
        let mut j = 0.0;
        for (arc, w) in l.segment.arcs.iter().zip([masses().alpha1, masses().alpha2]) {
            j += w * ellipse_action_and_time(arc.n, arc.energy, a, b, arc.second_focus).0;
        }
        assert!(rel_err(l.value, j) < 1e-9, "k = {k:?}: {} vs {j}", l.value);
        // The maximizer does not move L to first order: ∂L/∂x± = ±y±.
        let lv = |a: PlanePoint, b: PlanePoint| energy_fixed_action_l(k, energy, a, b, masses()).unwrap().value;
        let ex = PlanePoint::new(1.0, 0.0);
        let ey = PlanePoint::new(0.0, 1.0);
        let dplus = PlanePoint::new(central(|t| lv(a, b + ex * t), 0.0, h), central(|t| lv(a, b + ey * t), 0.0, h));
        let dminus = PlanePoint::new(central(|t| lv(a + ex * t, b), 0.0, h), central(|t| lv(a + ey * t, b), 0.0, h));
        assert!((dplus - l.y_plus).norm() < 1e-6, "k = {k:?}");
        assert!((dminus + l.y_minus).norm() < 1e-6, "k = {k:?}");
        // And it is a maximum in τ.
        let at = |tau: f64| segment_action(k, tau, a, b, masses()).unwrap().action_s + tau * energy;
        let tau = l.segment.tof;
        assert!(at(tau * 1.01) < l.value && at(tau * 0.99) < l.value);
    }
}

#[test]
fn kepler_scaling_homogeneity() {
    // x → λx, τ → λ^{3/2}τ scales actions by λ^{1/2} and energies by 1/λ.
    let lambda: f64 = 1.7;
    for seg in segments() {
        let scaled = segment_action(seg.k, seg.tof * lambda.powf(1.5), seg.x_minus * lambda, seg.x_plus * lambda, seg.masses).unwrap();
        assert!(rel_err(scaled.action_s, seg.action_s * lambda.sqrt()) < 1e-11);
        assert!(rel_err(scaled.energy, seg.energy / lambda) < 1e-11);
    }
}

#[test]
fn twist_determinant_is_step_stable_and_rotation_invariant() {
    for seg in segments() {
        let d = twist_determinant(&seg).unwrap();
        let h = 1e-4;
        let (d1, d2) = (twist_determinant_with_step(&seg, h).unwrap(), twist_determinant_with_step(&seg, 0.5 * h).unwrap());
        assert!((d1 - d2).abs() < 1e-6 * d.abs().max(1.0), "k = {:?}: {d1} vs {d2}", seg.k);
        assert!((d - d2).abs() < 1e-6 * d.abs().max(1.0));
        let rot = segment_action(seg.k, seg.tof, seg.x_minus.rotate(1.1), seg.x_plus.rotate(1.1), seg.masses).unwrap();
        assert!(rel_err(twist_determinant(&rot).unwrap(), d) < 1e-6);
        assert!((rot.action_s - seg.action_s).abs() < 1e-12);
    }
}

#[test]
fn equal_rotation_numbers_are_trivial() {
    let (a, b) = (PlanePoint::new(1.0, 0.0), PlanePoint::new(-0.4, 0.8));
    let tau = mid_time((0, 0), a, b);
    let seg = segment_action((0, 0), tau, a, b, masses()).unwrap();
    // Both bodies share one arc: S is that arc's action, the relative velocity vanishes.
    assert!((seg.action_s - seg.arcs[0].action_f).abs() < 1e-13);
    assert!(seg.relative_velocity_start().norm() < 1e-14 && seg.relative_velocity_end().norm() < 1e-14);
    assert!(early_collision_distance(&seg).unwrap() < 1e-12);
}

#[test]
fn jump_data_requires_a_shared_collision() {
    let segs = segments();
    assert!(relative_velocity_jump_data(&segs[0], &segs[1]).is_err());
    let next = segment_action((-1, 1), 20.0, segs[0].x_plus, PlanePoint::new(1.0, 0.0), masses()).unwrap();
    let (vin, vout) = relative_velocity_jump_data(&segs[0], &next).unwrap();
    assert_eq!(vin, segs[0].relative_velocity_end());
    assert_eq!(vout, next.relative_velocity_start());
}
