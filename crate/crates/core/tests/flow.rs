mod common;

use common::*;
use rand::Rng;
use second_species::collision::MassParams;
use second_species::flow::*;
use second_species::ode::Tolerances;
use second_species::plane::PlanePoint;

fn pt<R: Rng>(r: &mut R, scale: f64) -> PlanePoint {
    PlanePoint::new(r.random_range(-scale..scale), r.random_range(-scale..scale))
}

fn random_phase<R: Rng>(r: &mut R) -> PhaseState {
    loop {
        let s = PhaseState { q1: pt(r, 1.5), q2: pt(r, 1.5), p1: pt(r, 0.5), p2: pt(r, 0.5), time: 0.0 };
        if s.q1.norm() > 0.2 && s.q2.norm() > 0.2 && s.separation() > 0.05 {
            return s;
        }
    }
}

fn masses(mu: f64) -> MassParams {
    MassParams::new(0.3, mu).unwrap()
}

/// Two bodies a distance 0.05 apart closing at relative speed ~0.5 with the
/// given lateral relative velocity, which sets the miss distance.
fn near_collision(m: &MassParams, lateral: f64) -> PhaseState {
    let j = JacobiState {
        x: PlanePoint::new(1.0, 0.0),
        y: PlanePoint::new(0.0, 1.0),
        u: PlanePoint::new(0.05, 0.0),
        v: PlanePoint::new(-0.5, lateral) * m.alpha,
        time: 0.0,
    };
    from_jacobi(&j, m)
}

fn tol() -> Tolerances {
    Tolerances::new(1e-13, 1e-15)
}

#[test]
fn hamiltonian_and_momentum_agree_across_charts() {
    let m = masses(1e-3);
    let mut r = rng(21);
    for _ in 0..500 {
        let s = random_phase(&mut r);
        let j = to_jacobi(&s, &m);
        let reg = lift_to_regularized(&j, 1.0).unwrap();
        let h = s.hamiltonian_h(&m).unwrap();
        assert!((h - j.hamiltonian_h(&m).unwrap()).abs() <= 1e-13 * h.abs().max(1.0));
        assert!((h - reg.hamiltonian_h(&m).unwrap()).abs() <= 1e-13 * h.abs().max(1.0));
        let g = s.angular_momentum(&m);
        assert!((g - j.angular_momentum(&m)).abs() < 1e-14);
        assert!((g - reg.angular_momentum(&m)).abs() < 1e-14);
    }
}

#[test]
fn jacobi_round_trip_and_symplecticity() {
    let m = masses(1e-3);
    let mut r = rng(22);
    for _ in 0..100 {
        let s = random_phase(&mut r);
        let back = from_jacobi(&to_jacobi(&s, &m), &m);
        for (a, b) in s.to_array().iter().zip(back.to_array()) {
            assert!((a - b).abs() < 1e-15);
        }
    }
    // Heliocentric (q₁, q₂, p₁, p₂) is already in (q, p) order; Jacobi as (x, u, y, v).
    let map = |z: &[f64; 8]| {
        let j = to_jacobi(&PhaseState::from_array(z, 0.0), &m);
        [j.x.x, j.x.y, j.u.x, j.u.y, j.y.x, j.y.y, j.v.x, j.v.y]
    };
    let s = random_phase(&mut r);
    assert!(symplectic_defect(&fd_jacobian(map, &s.to_array(), 1e-3)) < 1e-10);
}

#[test]
fn levi_civita_map_examples_and_symplecticity() {
    let m = masses(1e-3);
    let r = RegularizedState {
        x: PlanePoint::new(1.0, 0.0),
        y: PlanePoint::new(0.0, 1.0),
        xi: PlanePoint::new(1.0, 0.0),
        eta: PlanePoint::new(0.0, 2.0),
        fictitious_time: 0.0,
        physical_time: 0.0,
    };
    let j = levi_civita_map(&r, &m).unwrap();
    assert!((j.u - PlanePoint::new(1.0, 0.0)).norm() < 1e-15);
    assert!((j.v - PlanePoint::new(0.0, 1.0)).norm() < 1e-15);

    // Double cover: (−ξ, −η) has the same image.
    let neg = RegularizedState { xi: -r.xi, eta: -r.eta, ..r };
    let jn = levi_civita_map(&neg, &m).unwrap();
    assert!((jn.u - j.u).norm() < 1e-15 && (jn.v - j.v).norm() < 1e-15);
    assert!(levi_civita_map(&RegularizedState { xi: PlanePoint::new(0.0, 0.0), ..r }, &m).is_err());

    // Lifting with either sign and mapping back is the identity.
    let mut rg = rng(23);
    for _ in 0..100 {
        let j = JacobiState { x: pt(&mut rg, 1.0), y: pt(&mut rg, 1.0), u: pt(&mut rg, 0.1), v: pt(&mut rg, 0.1), time: 0.0 };
        for sign in [1.0, -1.0] {
            let back = levi_civita_map(&lift_to_regularized(&j, sign).unwrap(), &m).unwrap();
            assert!((back.u - j.u).norm() < 1e-15 && (back.v - j.v).norm() < 1e-14);
        }
    }

    // (ξ, η) ↦ (u, v) preserves dξ∧dη; the Jacobi pair rides along unchanged.
    let map = |z: &[f64; 8]| {
        let j = levi_civita_map(&RegularizedState::from_array(z, 0.0, 0.0), &m).unwrap();
        [j.x.x, j.x.y, j.u.x, j.u.y, j.y.x, j.y.y, j.v.x, j.v.y]
    };
    for _ in 0..20 {
        let z = RegularizedState { x: pt(&mut rg, 1.0), y: pt(&mut rg, 1.0), xi: pt(&mut rg, 0.5), eta: pt(&mut rg, 0.5), fictitious_time: 0.0, physical_time: 0.0 };
        if z.xi.norm() < 0.1 {
            continue;
        }
        // Reorder (x, y, ξ, η) to (x, ξ, y, η) so that positions come first.
        let a = z.to_array();
        let canon = [a[0], a[1], a[4], a[5], a[2], a[3], a[6], a[7]];
        let mapped = |c: &[f64; 8]| map(&[c[0], c[1], c[4], c[5], c[2], c[3], c[6], c[7]]);
        assert!(symplectic_defect(&fd_jacobian(mapped, &canon, 1e-3)) < 1e-10);
    }
}

#[test]
fn regularized_hamiltonian_is_the_time_changed_energy() {
    let m = masses(1e-3);
    let mut r = rng(24);
    for _ in 0..200 {
        let s = random_phase(&mut r);
        let reg = lift_to_regularized(&to_jacobi(&s, &m), 1.0).unwrap();
        let e = r.random_range(-1.0..-0.1);
        let expected = reg.xi.norm_sqr() * (s.hamiltonian_h(&m).unwrap() - e) + m.mu * m.alpha;
        let got = regularized_hamiltonian(&reg, &m, e).unwrap();
        assert!((got - expected).abs() < 1e-13 * expected.abs().max(1.0), "{got} vs {expected}");
    }
    // Smooth through the collision: 𝓗 = 0 at ξ = η = 0.
    let at_collision = RegularizedState {
        x: PlanePoint::new(1.0, 0.0),
        y: PlanePoint::new(0.0, 1.0),
        xi: PlanePoint::new(0.0, 0.0),
        eta: PlanePoint::new(0.0, 0.0),
        fictitious_time: 0.0,
        physical_time: 0.0,
    };
    assert_eq!(regularized_hamiltonian(&at_collision, &m, -0.5).unwrap(), 0.0);
}

#[test]
fn uncoupled_bodies_keep_their_own_energies_and_momenta() {
    let m = masses(0.0);
    let s = PhaseState {
        q1: PlanePoint::new(1.0, 0.0),
        q2: PlanePoint::new(0.0, 1.3),
        p1: PlanePoint::new(0.0, 1.0) * m.alpha1,
        p2: PlanePoint::new(-0.8, 0.1) * m.alpha2,
        time: 0.0,
    };
    let body = |s: &PhaseState| {
        let e1 = s.p1.norm_sqr() / (2.0 * m.alpha1) - m.alpha1 / s.q1.norm();
        let e2 = s.p2.norm_sqr() / (2.0 * m.alpha2) - m.alpha2 / s.q2.norm();
        [e1, e2, s.q1.cross(s.p1), s.q2.cross(s.p2)]
    };
    let b0 = body(&s);
    // Body 2 has the longer period, 2π a^{3/2} with a = −α₂/(2E₂).
    let a2 = -m.alpha2 / (2.0 * b0[1]);
    let t_end = 10.0 * std::f64::consts::TAU * a2.powf(1.5);
    let traj = integrate(&s, t_end, &m, &FlowOptions { policy: ChartPolicy::Cartesian, ..FlowOptions::default() }).unwrap();
    for sample in &traj.samples {
        let b = body(&sample.state);
        for i in 0..4 {
            assert!((b[i] - b0[i]).abs() < 1e-10, "invariant {i} drifted to {:e} at t = {}", (b[i] - b0[i]).abs(), sample.t);
        }
    }
    // Body 1 on its circle is back where it started after an integer number of laps.
    let one = flow_cartesian(&s, std::f64::consts::TAU * 3.0, &m, tol()).unwrap();
    assert!((one.q1 - s.q1).norm() < 1e-10);
}

#[test]
fn regularized_flow_is_conjugate_to_the_direct_flow() {
    let m = masses(1e-4);
    let s = near_collision(&m, 2e-3);
    let e = s.hamiltonian_h(&m).unwrap();
    let reg = lift_to_regularized(&to_jacobi(&s, &m), 1.0).unwrap();
    let mut worst: f64 = 0.0;
    let mut min_sep = f64::INFINITY;
    for k in 1..=12 {
        let t = 0.025 * k as f64;
        let direct = flow_cartesian(&s, t, &m, tol()).unwrap();
        let lifted = flow_regularized_to_time(&reg, t, &m, e, tol()).unwrap();
        let mapped = from_jacobi(&levi_civita_map(&lifted, &m).unwrap(), &m);
        for (a, b) in direct.to_array().iter().zip(mapped.to_array()) {
            worst = worst.max((a - b).abs());
        }
        min_sep = min_sep.min(direct.separation());
        assert!((regularized_hamiltonian(&lifted, &m, e).unwrap() - m.mu * m.alpha).abs() < 1e-10);
        assert!((mapped.hamiltonian_h(&m).unwrap() - e).abs() < 1e-9);
    }
    // The window straddles the close approach.
    assert!(min_sep < 0.01);
    assert!(worst < 1e-8, "conjugacy defect {worst:e}");
}

#[test]
fn chart_switching_beats_the_cartesian_chart_head_on() {
    let m = masses(1e-4);
    let s = near_collision(&m, 1e-9);
    let cartesian = integrate(&s, 0.3, &m, &FlowOptions { policy: ChartPolicy::Cartesian, energy_tol: f64::INFINITY, ..FlowOptions::default() });
    let auto = integrate(&s, 0.3, &m, &FlowOptions { energy_tol: f64::INFINITY, ..FlowOptions::default() }).unwrap();
    assert!(!auto.switches.is_empty());
    assert!(auto.max_energy_residual < 1e-9, "auto chart energy error {:e}", auto.max_energy_residual);
    assert!(auto.max_level_residual < 1e-10, "level drift {:e}", auto.max_level_residual);
    assert!(auto.max_angular_momentum_drift < 1e-10);
    let cart_error = cartesian.map(|t| t.max_energy_residual).unwrap_or(f64::INFINITY);
    assert!(cart_error > 100.0 * auto.max_energy_residual, "cartesian {cart_error:e} vs auto {:e}", auto.max_energy_residual);
}

#[test]
fn angular_momentum_is_conserved_through_close_approaches() {
    let m = masses(1e-3);
    let s = near_collision(&m, 1e-4);
    let traj = integrate(&s, 2.0, &m, &FlowOptions::default()).unwrap();
    assert!(traj.max_angular_momentum_drift < 1e-10, "{:e}", traj.max_angular_momentum_drift);
    assert!(traj.max_energy_residual < 1e-9, "{:e}", traj.max_energy_residual);
}

#[test]
fn flows_commute_with_rotations() {
    let m = masses(1e-3);
    let theta = 0.7;
    // A close approach amplifies roundoff in the Cartesian chart, so keep this one gentle.
    let wide = near_collision(&m, 5e-2);
    let a = flow_cartesian(&wide.rotated(theta), 0.4, &m, tol()).unwrap();
    let b = flow_cartesian(&wide, 0.4, &m, tol()).unwrap().rotated(theta);
    for (x, y) in a.to_array().iter().zip(b.to_array()) {
        assert!((x - y).abs() < 1e-10, "{:e}", (x - y).abs());
    }

    let s = near_collision(&m, 1e-3);
    let e = s.hamiltonian_h(&m).unwrap();
    let reg = lift_to_regularized(&to_jacobi(&s, &m), 1.0).unwrap();
    let a = flow_regularized(&reg.rotated(theta), 0.5, &m, e, tol()).unwrap();
    let b = flow_regularized(&reg, 0.5, &m, e, tol()).unwrap().rotated(theta);
    for (x, y) in a.to_array().iter().zip(b.to_array()) {
        assert!((x - y).abs() < 1e-10);
    }
    assert!((a.physical_time - b.physical_time).abs() < 1e-12);
}

#[test]
fn both_lifts_project_to_the_same_motion() {
    let m = masses(1e-3);
    let s = near_collision(&m, 1e-3);
    let e = s.hamiltonian_h(&m).unwrap();
    let j = to_jacobi(&s, &m);
    let plus = flow_regularized(&lift_to_regularized(&j, 1.0).unwrap(), 0.8, &m, e, tol()).unwrap();
    let minus = flow_regularized(&lift_to_regularized(&j, -1.0).unwrap(), 0.8, &m, e, tol()).unwrap();
    assert!((plus.xi + minus.xi).norm() < 1e-12 && (plus.eta + minus.eta).norm() < 1e-12);
    let (a, b) = (levi_civita_map(&plus, &m).unwrap(), levi_civita_map(&minus, &m).unwrap());
    assert!((a.u - b.u).norm() < 1e-13 && (a.v - b.v).norm() < 1e-12);
    assert!((plus.physical_time - minus.physical_time).abs() < 1e-13);
}
