use log::debug;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::functional::{evaluate, pack, unpack, Variant};
use super::CollisionChain;
use crate::collision::{early_collision_distance, MassParams};
use crate::error::{Error, Result};

/// Newton and certification settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub max_iterations: usize,
    pub tol_grad: f64,
    /// Relative finite-difference step for the Hessian.
    pub hessian_step: f64,
    /// Singular values below `tol_null · σ_max` count as null.
    pub tol_null: f64,
    /// Largest admissible angle between the null vector and the rotation generator.
    pub max_null_angle: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        // Near the restricted limit the collision-time directions have
        // eigenvalues O(α₁), so the null threshold sits well below them.
        Self { max_iterations: 100, tol_grad: 1e-10, hessian_step: 1e-6, tol_null: 1e-8, max_null_angle: 1e-3 }
    }
}

/// Evidence that a chain is a nondegenerate (modulo rotation) critical point
/// satisfying the direction-change and no-return conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainCertificate {
    pub variant: Variant,
    pub gradient_norm: f64,
    pub hessian_nullity: usize,
    pub smallest_nonnull_singular_value: f64,
    pub largest_singular_value: f64,
    /// Angle (rad) between the numerical null vector and the rotation generator.
    pub null_vector_angle: f64,
    /// `|∂B_{k₁}/∂x_j|`: jump of the first body's velocity at each collision.
    pub direction_change_margins: Vec<f64>,
    /// `|v_j⁺ + v_j⁻|`.
    pub no_return_margins: Vec<f64>,
    /// `max_j ||v_j⁺| − |v_j⁻||`.
    pub relative_speed_mismatch: f64,
    /// Smallest interior separation of the bodies (sampling heuristic).
    pub early_collision_min_distance: f64,
    pub valid: bool,
}

/// Rotation generator `(0, i x_j, 0)` in packed coordinates.
pub fn rotation_generator(chain: &CollisionChain, variant: Variant) -> DVector<f64> {
    let n = chain.len();
    let mut r = DVector::zeros(variant.dimension(n));
    for j in 0..n {
        let p = chain.x[j].perp();
        r[n + 2 * j] = p.x;
        r[n + 2 * j + 1] = p.y;
    }
    r
}

fn step_scale(z: &DVector<f64>, j: usize, n: usize, h: f64) -> f64 {
    // Durations and the extra unknown scale with themselves; points with their size.
    let v = if j >= n && j < 3 * n { (z[n + 2 * ((j - n) / 2)].hypot(z[n + 2 * ((j - n) / 2) + 1])).max(1.0) } else { z[j].abs().max(1.0) };
    h * v
}

/// Symmetrized central-difference Hessian of the analytic gradient.
pub fn hessian(chain: &CollisionChain, variant: Variant, rel_step: f64) -> Result<DMatrix<f64>> {
    let n = chain.len();
    let z0 = pack(chain, variant);
    let dim = z0.len();
    let mut h = DMatrix::zeros(dim, dim);
    for j in 0..dim {
        let step = step_scale(&z0, j, n, rel_step);
        let mut zp = z0.clone();
        zp[j] += step;
        let mut zm = z0.clone();
        zm[j] -= step;
        let gp = evaluate(&unpack(&zp, chain, variant), variant)?.gradient;
        let gm = evaluate(&unpack(&zm, chain, variant), variant)?.gradient;
        h.set_column(j, &((gp - gm) / (2.0 * step)));
    }
    Ok((&h + h.transpose()) * 0.5)
}

/// Damped Newton on the gradient of the selected functional, with the
/// rotation gauge `(i x₀*)·x₀ = 0` fixed at the initial `x₀*`.
pub fn find_critical_chain(initial: &CollisionChain, variant: Variant, opts: &SolverOptions) -> Result<(CollisionChain, ChainCertificate)> {
    let chain = solve_critical_chain(initial, variant, opts)?;
    let cert = certify_chain(&chain, variant, opts)?;
    Ok((chain, cert))
}

/// Newton iteration only (no certificate).
pub fn solve_critical_chain(initial: &CollisionChain, variant: Variant, opts: &SolverOptions) -> Result<CollisionChain> {
    initial.validate()?;
    if variant == Variant::FixedEnergyMomentum && initial.angular_momentum.is_none() {
        return Err(Error::InvalidInput("fixed-E,G solve needs an angular momentum".into()));
    }
    let n = initial.len();
    let mut chain = initial.clone();
    if variant == Variant::FixedEnergy {
        chain.phi = 0.0;
    }
    let x_ref = initial.x[0];
    let gauge = |c: &CollisionChain| x_ref.cross(c.x[0]);
    let mut eval = evaluate(&chain, variant)?;
    let mut history = Vec::new();
    let merit = |g: &DVector<f64>, gauge: f64| g.norm_squared() + gauge * gauge;
    for it in 0..opts.max_iterations {
        let gnorm = eval.gradient.norm();
        history.push(gnorm);
        debug!("chain newton {it}: |grad| = {gnorm:e}");
        if gnorm <= opts.tol_grad && gauge(&chain).abs() <= opts.tol_grad {
            return Ok(chain);
        }
        let h = hessian(&chain, variant, opts.hessian_step)?;
        let dim = h.nrows();
        let mut b = DMatrix::zeros(dim + 1, dim + 1);
        b.view_mut((0, 0), (dim, dim)).copy_from(&h);
        let mut gvec = DVector::zeros(dim);
        gvec[n] = x_ref.perp().x;
        gvec[n + 1] = x_ref.perp().y;
        // Row: d(gauge) = (i x_ref)·dx₀.
        for i in 0..dim {
            b[(dim, i)] = gvec[i];
            b[(i, dim)] = gvec[i];
        }
        let mut rhs = DVector::zeros(dim + 1);
        rhs.rows_mut(0, dim).copy_from(&(-&eval.gradient));
        rhs[dim] = -gauge(&chain);
        let sol = b
            .clone()
            .lu()
            .solve(&rhs)
            .or_else(|| b.svd(true, true).solve(&rhs, 1e-14).ok())
            .ok_or_else(|| Error::Degenerate("singular bordered Newton system".into()))?;
        let dz = sol.rows(0, dim).into_owned();
        let z = pack(&chain, variant);
        let m0 = merit(&eval.gradient, gauge(&chain));
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let cand = unpack(&(&z + &dz * t), &chain, variant);
            if let Ok(e) = evaluate(&cand, variant) {
                let m1 = merit(&e.gradient, gauge(&cand));
                if m1 <= (1.0 - 1e-4 * t) * m0 || m1 <= 1e-30 {
                    accepted = Some((cand, e));
                    break;
                }
            }
            t *= 0.5;
        }
        match accepted {
            Some((c, e)) => {
                chain = c;
                eval = e;
            }
            None => {
                // No decrease: either converged to rounding level or stuck.
                if gnorm <= 10.0 * opts.tol_grad {
                    return Ok(chain);
                }
                return Err(Error::NonConvergence { iterations: it + 1, residual: gnorm, history });
            }
        }
    }
    let gnorm = eval.gradient.norm();
    if gnorm <= opts.tol_grad {
        return Ok(chain);
    }
    history.push(gnorm);
    Err(Error::NonConvergence { iterations: opts.max_iterations, residual: gnorm, history })
}

/// Certificate for a (near-)critical chain.
pub fn certify_chain(chain: &CollisionChain, variant: Variant, opts: &SolverOptions) -> Result<ChainCertificate> {
    let n = chain.len();
    let eval = evaluate(chain, variant)?;
    let h = hessian(chain, variant, opts.hessian_step)?;
    let svd = h.clone().svd(true, true);
    let sv = &svd.singular_values;
    let smax = sv.max();
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[a].partial_cmp(&sv[b]).unwrap());
    let nullity = sv.iter().filter(|&&s| s < opts.tol_null * smax).count();
    let smallest_nonnull = order.iter().map(|&i| sv[i]).find(|&s| s >= opts.tol_null * smax).unwrap_or(0.0);
    let v_t = svd.v_t.as_ref().expect("requested V");
    let null = v_t.row(order[0]).transpose();
    let r = rotation_generator(chain, variant).normalize();
    let null_vector_angle = null.dot(&r).abs().min(1.0).acos();

    let segs = &eval.segments;
    let mut change = Vec::with_capacity(n);
    let mut no_return = Vec::with_capacity(n);
    let mut mismatch: f64 = 0.0;
    for j in 0..n {
        let prev = &segs[(j + n - 1) % n];
        let next = &segs[j];
        let unrotate = if j == 0 { -chain.phi } else { 0.0 };
        // Body 1 velocity jump = −∂B_{k₁}/∂x_j.
        let jump = next.arcs[0].y_minus - prev.arcs[0].y_plus.rotate(unrotate);
        change.push(jump.norm());
        let v_minus = prev.relative_velocity_end().rotate(unrotate);
        let v_plus = next.relative_velocity_start();
        no_return.push((v_plus + v_minus).norm());
        mismatch = mismatch.max((v_plus.norm() - v_minus.norm()).abs());
    }
    let mut early = f64::INFINITY;
    for s in segs {
        early = early.min(early_collision_distance(s)?);
    }
    let gradient_norm = eval.gradient.norm();
    let valid = gradient_norm <= opts.tol_grad
        && nullity == 1
        && null_vector_angle <= opts.max_null_angle
        && change.iter().all(|&m| m > 0.0)
        && no_return.iter().all(|&m| m > 0.0)
        && early > 0.0;
    Ok(ChainCertificate {
        variant,
        gradient_norm,
        hessian_nullity: nullity,
        smallest_nonnull_singular_value: smallest_nonnull,
        largest_singular_value: smax,
        null_vector_angle,
        direction_change_margins: change,
        no_return_margins: no_return,
        relative_speed_mismatch: mismatch,
        early_collision_min_distance: early,
        valid,
    })
}

/// Follow a critical chain in `α₁` from `start.masses.alpha1` to `target`,
/// in geometric steps that shrink on failure.
pub fn continue_in_alpha1(start: &CollisionChain, target: f64, variant: Variant, opts: &SolverOptions) -> Result<CollisionChain> {
    let mut chain = solve_critical_chain(start, variant, opts)?;
    let mut a = chain.masses.alpha1;
    let mut ratio: f64 = 2.0;
    while (a - target).abs() > 1e-15 * target {
        let next = if target > a { (a * ratio).min(target) } else { (a / ratio).max(target) };
        let mut trial = chain.clone();
        trial.masses = MassParams::new(next, chain.masses.mu)?;
        match solve_critical_chain(&trial, variant, opts) {
            Ok(c) => {
                debug!("alpha1 continuation: reached {next:e}");
                chain = c;
                a = next;
                ratio = (ratio * ratio).min(4.0);
            }
            Err(e) => {
                ratio = ratio.sqrt();
                if ratio < 1.01 {
                    return Err(e);
                }
            }
        }
    }
    Ok(chain)
}

/// Seed from the restricted elliptic limit and solve the fixed-`E,G` problem.
/// If Newton fails from the seed at the requested `α₁`, seed at smaller `α₁`
/// (where the restricted limit is a better guess) and continue upward.
pub fn seed_and_solve(
    energy: f64,
    g: f64,
    m: u32,
    n: usize,
    k1_pattern: &[i32],
    alpha1: f64,
    opts: &SolverOptions,
) -> Result<(CollisionChain, ChainCertificate)> {
    let variant = Variant::FixedEnergyMomentum;
    let seed = super::seed_from_restricted_limit(energy, g, m, n, k1_pattern, alpha1)?;
    let chain = match solve_critical_chain(&seed, variant, opts) {
        Ok(c) => c,
        Err(direct) => {
            debug!("direct solve failed ({direct}); trying continuation in alpha1");
            let mut found = None;
            for start in [alpha1 / 10.0, 1e-3, 1e-4] {
                if start >= alpha1 {
                    continue;
                }
                let attempt = super::seed_from_restricted_limit(energy, g, m, n, k1_pattern, start)
                    .and_then(|small| continue_in_alpha1(&small, alpha1, variant, opts));
                if let Ok(c) = attempt {
                    found = Some(c);
                    break;
                }
            }
            found.ok_or(direct)?
        }
    };
    let cert = certify_chain(&chain, variant, opts)?;
    Ok((chain, cert))
}
