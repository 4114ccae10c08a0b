use std::sync::OnceLock;

use nalgebra::DVector;
use second_species::chain::*;
use second_species::error::Error;
use second_species::flow::*;
use second_species::shadow::*;

fn chain() -> &'static (CollisionChain, ChainCertificate) {
    static CHAIN: OnceLock<(CollisionChain, ChainCertificate)> = OnceLock::new();
    CHAIN.get_or_init(|| seed_and_solve(-0.5, 0.95, 5, 4, &[-1], 1e-2, &SolverOptions::default()).unwrap())
}

fn orbit_at(mu: f64, rho: f64) -> ShadowOrbit {
    let (c, cert) = chain();
    let opts = ShootingOptions::default();
    let guess = build_initial_guess(c, cert, mu, rho, &opts).unwrap();
    solve_periodic_orbit(&guess, ShadowVariant::FixedEG, &opts).unwrap()
}

#[test]
fn initial_guess_sits_on_the_level_and_on_the_sections() {
    let (c, cert) = chain();
    let (mu, rho) = (1e-4, 0.02);
    let p = build_initial_guess(c, cert, mu, rho, &ShootingOptions::default()).unwrap();
    assert_eq!(p.nodes.len(), c.len());
    assert_eq!(p.sections.len(), c.len());
    for node in &p.nodes {
        let level = regularized_hamiltonian(node, &p.masses, c.energy).unwrap();
        assert!((level - mu * p.masses.alpha).abs() < 1e-14, "off the level by {:e}", level - mu * p.masses.alpha);
        // Closest approach: u ⟂ v.
        let j = levi_civita_map(node, &p.masses).unwrap();
        assert!(j.u.dot(j.v).abs() < 1e-12 * j.u.norm() * j.v.norm());
    }
    for sc in &p.sections {
        assert!((sc.entry.u.norm() - rho).abs() < 1e-10 && (sc.exit.u.norm() - rho).abs() < 1e-10);
        assert!(sc.t_entry < 0.0 && sc.t_exit > 0.0);
        assert!(sc.separation > 0.0);
        assert!(sc.xi_minus.dot(sc.xi_plus) >= 0.0);
    }
}

#[test]
fn uncertified_chain_is_refused() {
    let (c, cert) = chain();
    let bad = ChainCertificate { valid: false, ..cert.clone() };
    assert!(matches!(build_initial_guess(c, &bad, 1e-4, 0.02, &ShootingOptions::default()), Err(Error::InvalidInput(_))));
    assert!(build_initial_guess(c, cert, 0.0, 0.02, &ShootingOptions::default()).is_err());
    // A direction-change margin that no section can meet.
    let strict = ShootingOptions { epsilon: 2.0, ..ShootingOptions::default() };
    assert!(matches!(build_initial_guess(c, cert, 1e-4, 0.02, &strict), Err(Error::Degenerate(_))));
}

#[test]
fn shooting_jacobian_matches_finite_differences() {
    let (c, cert) = chain();
    let opts = ShootingOptions { rtol: 1e-13, atol: 1e-18, ..ShootingOptions::default() };
    let p = build_initial_guess(c, cert, 1e-3, 0.02, &opts).unwrap();
    let sys = ShootingSystem::new(&p, ShadowVariant::FixedEG, &opts);
    let w0 = sys.initial_unknowns();
    let (_, jac) = sys.evaluate(&w0, true).unwrap();
    let jac = jac.unwrap();
    assert_eq!(jac.shape(), (sys.equations(), sys.unknowns()));
    let mut worst: f64 = 0.0;
    for i in 0..sys.unknowns() {
        // Integration noise dominates below this step.
        let h = 1e-5 * w0[i].abs().max(1e-2);
        let at = |t: f64| -> DVector<f64> {
            let mut w = w0.clone();
            w[i] += t;
            sys.evaluate(&w, false).unwrap().0
        };
        let fd = (at(h) - at(-h)) / (2.0 * h);
        let col = jac.column(i);
        worst = worst.max((&fd - col).norm() / col.norm().max(1.0));
    }
    assert!(worst < 1e-5, "worst column mismatch {worst:e}");
}

#[test]
fn orbit_conserves_the_integrals_and_closes() {
    let orbit = orbit_at(1e-4, 0.02);
    let (c, _) = chain();
    assert!(orbit.closure_residual <= ShootingOptions::default().tol);
    assert!(orbit.max_energy_drift < 1e-9, "{:e}", orbit.max_energy_drift);
    assert!(orbit.max_angular_momentum_drift < 1e-9, "{:e}", orbit.max_angular_momentum_drift);
    assert!((orbit.energy - c.energy).abs() < 1e-12);
    assert!((orbit.angular_momentum - c.angular_momentum.unwrap()).abs() < 1e-12);
    for s in &orbit.samples {
        assert!((s.energy - c.energy).abs() < 1e-9);
    }
    // The bodies never meet, and pass within O(μ) of each other at every collision.
    assert!(orbit.min_delta_distance > 0.0);
    assert_eq!(orbit.collision_distances.len(), c.len());
    assert!(orbit.collision_distances.iter().all(|&d| d > 0.0 && d < 100.0 * orbit.mu));
    assert!((orbit.period - c.period()).abs() < 1e3 * orbit.mu);
}

#[test]
fn orbit_does_not_depend_on_the_section_radius() {
    let a = orbit_at(1e-4, 0.02);
    let b = orbit_at(1e-4, 0.01);
    assert!((a.period - b.period).abs() < 1e-8, "{:e}", (a.period - b.period).abs());
    assert!((a.phase - b.phase).abs() < 1e-8);
    assert!((a.min_delta_distance - b.min_delta_distance).abs() < 1e-8);
}

#[test]
fn fixed_energy_variant_drops_the_phase_and_its_equation() {
    let (c, cert) = chain();
    let opts = ShootingOptions { max_iterations: 10, ..ShootingOptions::default() };
    let guess = build_initial_guess(c, cert, 1e-4, 0.02, &opts).unwrap();
    let sys_g = ShootingSystem::new(&guess, ShadowVariant::FixedEG, &opts);
    let sys_e = ShootingSystem::new(&guess, ShadowVariant::FixedE, &opts);
    assert_eq!(sys_g.unknowns(), sys_e.unknowns() + 1);
    assert_eq!(sys_g.equations(), sys_e.equations() + 1);
}
