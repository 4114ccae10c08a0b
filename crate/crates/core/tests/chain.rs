mod common;

use std::sync::OnceLock;

use common::*;
use second_species::chain::*;
use second_species::error::Error;
use second_species::plane::PlanePoint;

fn solved() -> &'static (CollisionChain, ChainCertificate) {
    static CHAIN: OnceLock<(CollisionChain, ChainCertificate)> = OnceLock::new();
    CHAIN.get_or_init(|| seed_and_solve(-0.5, 0.95, 5, 4, &[-1], 1e-2, &SolverOptions::default()).unwrap())
}

fn seed() -> CollisionChain {
    seed_from_restricted_limit(-0.5, 0.95, 5, 4, &[-1], 1e-2).unwrap()
}

#[test]
fn gradients_match_finite_differences() {
    let chain = seed();
    for variant in [Variant::FixedEnergyMomentum, Variant::FixedTime { period: chain.period() + 0.1 }] {
        let eval = evaluate(&chain, variant).unwrap();
        let z0 = pack(&chain, variant);
        for i in 0..z0.len() {
            let f = |t: f64| {
                let mut z = z0.clone();
                z[i] += t;
                evaluate(&unpack(&z, &chain, variant), variant).unwrap().value
            };
            let fd = central(f, 0.0, 1e-6);
            assert!((fd - eval.gradient[i]).abs() < 1e-7 * (1.0 + fd.abs()), "{variant:?}, coordinate {i}: {fd} vs {}", eval.gradient[i]);
        }
    }
}

#[test]
fn actions_are_rotation_invariant() {
    let chain = seed();
    let rot = chain.rotated(0.9);
    let a = discrete_action_a(&chain).unwrap().total;
    assert!((discrete_action_a(&rot).unwrap().total - a).abs() < 1e-11 * a.abs());
    let j = jacobi_routh_jeg(&chain.x, chain.phi, &chain.k, chain.energy, 0.95, chain.masses).unwrap();
    let jr = jacobi_routh_jeg(&rot.x, rot.phi, &rot.k, rot.energy, 0.95, rot.masses).unwrap();
    assert!((j - jr).abs() < 1e-10 * j.abs());
    assert!(chain.distance_mod_rotation(&rot) < 1e-12);
}

#[test]
fn json_round_trip_is_exact() {
    let (chain, _) = solved();
    let back = CollisionChain::from_json(&chain.to_json()).unwrap();
    assert_eq!(&back, chain);
    assert!(CollisionChain::from_json(r#"{"k": [], "s": [], "x": [], "phi": 0, "E": -0.5, "G": null, "alpha1": 0.1, "mu": 0}"#).is_err());
}

#[test]
fn jacobi_action_is_the_maupertuis_action_at_eliminated_durations() {
    let (chain, _) = solved();
    let (je, s) = jacobi_action_je_with_phase(&chain.x, chain.phi, &chain.k, chain.energy, chain.masses).unwrap();
    // The solved durations already satisfy the segment energy equations.
    for (a, b) in s.iter().zip(&chain.s) {
        assert!(rel_err(*a, *b) < 1e-8, "{a} vs {b}");
    }
    let at_star = CollisionChain { s, ..chain.clone() };
    let a = discrete_action_a(&at_star).unwrap().total + chain.energy * at_star.period();
    assert!(rel_err(je, a) < 1e-12, "{je} vs {a}");
    let g = chain.angular_momentum.unwrap();
    let jeg = jacobi_routh_jeg(&chain.x, chain.phi, &chain.k, chain.energy, g, chain.masses).unwrap();
    assert!((jeg - (je - g * chain.phi)).abs() < 1e-12 * je.abs());
}

#[test]
fn solved_chain_is_critical_for_the_reduced_functional() {
    // J^{EG}(x, Φ) has the durations eliminated; its gradient must vanish too.
    let (chain, _) = solved();
    let g = chain.angular_momentum.unwrap();
    let f = |x: &[PlanePoint], phi: f64| jacobi_routh_jeg(x, phi, &chain.k, chain.energy, g, chain.masses).unwrap();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for j in 0..chain.len() {
        for d in [PlanePoint::new(1.0, 0.0), PlanePoint::new(0.0, 1.0)] {
            let shifted = |t: f64| {
                let mut x = chain.x.clone();
                x[j] += d * t;
                f(&x, chain.phi)
            };
            worst = worst.max(central(shifted, 0.0, h).abs());
        }
    }
    worst = worst.max(central(|p| f(&chain.x, p), chain.phi, h).abs());
    assert!(worst < 1e-7, "reduced gradient {worst:e}");

    // The fixed-time functional at the chain's own period is stationary as well.
    let fixed_t = evaluate(chain, Variant::FixedTime { period: chain.period() }).unwrap();
    assert!(fixed_t.gradient.rows(0, 3 * chain.len()).norm() < 1e-9);
}

#[test]
fn restricted_ellipse_with_eccentricity_one_fifth() {
    // E = −1/2, G² = 0.96: a = 1, e = √(1 − 0.96) = 0.2.
    let ell = RestrictedEllipse::new(-0.5, 0.96f64.sqrt()).unwrap();
    assert!((ell.semimajor_axis - 1.0).abs() < 1e-15);
    assert!((ell.eccentricity - 0.2).abs() < 1e-15);
    assert!((ell.period - std::f64::consts::TAU).abs() < 1e-14);
    let peri = ell.state(0.0).unwrap();
    let apo = ell.state(std::f64::consts::PI).unwrap();
    assert!((peri.position - PlanePoint::new(0.8, 0.0)).norm() < 1e-14);
    assert!((apo.position - PlanePoint::new(-1.2, 0.0)).norm() < 1e-12);
    assert!((apo.energy() + 0.5).abs() < 1e-13 && (apo.angular_momentum() - 0.96f64.sqrt()).abs() < 1e-13);
    assert!((ell.maupertuis_action() - std::f64::consts::TAU).abs() < 1e-14);
}

#[test]
fn seeded_chain_is_certified() {
    let (chain, cert) = solved();
    assert!(cert.valid, "{cert:?}");
    assert_eq!(cert.hessian_nullity, 1);
    assert!(cert.gradient_norm <= 1e-10);
    assert!(cert.null_vector_angle < 1e-3);
    assert!(cert.direction_change_margins.iter().all(|&m| m > 0.0));
    assert!(cert.no_return_margins.iter().all(|&m| m > 0.0));
    assert!(cert.early_collision_min_distance > 0.0);
    // Every segment has the prescribed energy and the chain closes up to rotation.
    for s in segments(chain).unwrap() {
        assert!((s.energy - chain.energy).abs() < 1e-10);
    }
    assert_eq!(chain.len(), 4);
}

#[test]
fn perturbed_chain_returns_to_the_same_critical_point() {
    let (chain, _) = solved();
    let variant = Variant::FixedEnergyMomentum;
    let mut z = pack(chain, variant);
    let mut r = rng(31);
    for v in z.iter_mut() {
        *v += 1e-4 * rand::Rng::random_range(&mut r, -1.0..1.0);
    }
    let again = solve_critical_chain(&unpack(&z, chain, variant), variant, &SolverOptions::default()).unwrap();
    // Near the restricted limit some Hessian directions are only O(α₁) stiff.
    assert!(chain.distance_mod_rotation(&again) < 1e-6, "{:e}", chain.distance_mod_rotation(&again));
}

#[test]
fn invalid_inputs_are_rejected() {
    assert!(matches!(RestrictedEllipse::new(-0.5, 1.2), Err(Error::InvalidInput(_))));
    let mut chain = seed();
    chain.x[1] = PlanePoint::new(0.0, 0.0);
    assert!(segments(&chain).is_err());
    let chain = CollisionChain { phi: 0.1, ..seed() };
    assert!(evaluate(&chain, Variant::FixedEnergy).is_err());
    let mut no_g = chain.clone();
    no_g.angular_momentum = None;
    assert!(evaluate(&no_g, Variant::FixedEnergyMomentum).is_err());
    assert!(jacobi_action_je(&chain.x[..2], &chain.k, chain.energy, chain.masses).is_err());
}
