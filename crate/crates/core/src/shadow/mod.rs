//! Multiple shooting for periodic (modulo rotation) orbits of the perturbed
//! problem that pass `O(μ)`-close to the collisions of a certified chain.

mod analysis;
mod shooting;
mod sweep;

pub use analysis::*;
pub use shooting::*;
pub use sweep::*;

use log::debug;
use serde::{Deserialize, Serialize};

use crate::chain::{segments, ChainCertificate, CollisionChain};
use crate::collision::{CollisionSegment, MassParams};
use crate::error::{Error, Result};
use crate::flow::{lift_to_regularized, regularized_hamiltonian, JacobiState, RegularizedState};
use crate::kepler::{propagate_kepler, KeplerState};
use crate::plane::PlanePoint;

/// Entry and exit of the unperturbed chain through the section `|u| = ρ`
/// around one collision, with the Levi-Civita lifts `ξ±` (`ξ₊·ξ₋ ≥ 0`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionCrossing {
    pub collision: usize,
    /// Time from the collision (negative).
    pub t_entry: f64,
    pub t_exit: f64,
    pub entry: JacobiState,
    pub exit: JacobiState,
    pub xi_minus: PlanePoint,
    pub xi_plus: PlanePoint,
    /// `ξ₋·ξ₊ / r²` with `r² = ρ`; must stay above `ε²`.
    pub separation: f64,
}

/// Data of the multiple-shooting problem for one chain and one `μ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShootingProblem {
    pub chain_energy: f64,
    pub chain_angular_momentum: f64,
    pub chain_phi: f64,
    /// Starting value of the phase for the fixed-`E,G` solve.
    pub phase_guess: f64,
    pub chain_period: f64,
    pub masses: MassParams,
    pub mu: f64,
    pub rho: f64,
    pub sections: Vec<SectionCrossing>,
    /// Closest-approach states, one per collision.
    pub nodes: Vec<RegularizedState>,
    /// Fictitious durations: forward from node `j` and backward from node `j+1`.
    pub legs: Vec<(f64, f64)>,
    /// Sign of the double cover in the closure `ẑ_n = (e^{iΦ}x, e^{iΦ}y, ±e^{iΦ/2}ξ, ±e^{iΦ/2}η)`.
    pub cover_sign: f64,
    /// Angle anchor: the orbit's first node keeps `x₀` on the ray of this point.
    pub anchor: PlanePoint,
}

/// Unperturbed positions of both bodies `t` after collision `j` (either sign of `t`).
fn bodies_near_collision(segs: &[CollisionSegment], chain: &CollisionChain, j: usize, t: f64) -> Result<(PlanePoint, PlanePoint, PlanePoint, PlanePoint)> {
    let n = segs.len();
    let state = |seg: &CollisionSegment, at_end: bool, i: usize, dt: f64, rot: f64| -> Result<KeplerState> {
        let arc = &seg.arcs[i];
        let (x, v) = if at_end { (seg.x_plus, arc.y_plus) } else { (seg.x_minus, arc.y_minus) };
        let s = propagate_kepler(KeplerState::new(x.rotate(rot), v.rotate(rot)), dt)?;
        Ok(s)
    };
    let (a, b) = if t >= 0.0 {
        (state(&segs[j], false, 0, t, 0.0)?, state(&segs[j], false, 1, t, 0.0)?)
    } else {
        let prev = &segs[(j + n - 1) % n];
        let rot = if j == 0 { -chain.phi } else { 0.0 };
        (state(prev, true, 0, t, rot)?, state(prev, true, 1, t, rot)?)
    };
    Ok((a.position, b.position, a.velocity, b.velocity))
}

fn jacobi_of(q1: PlanePoint, q2: PlanePoint, w1: PlanePoint, w2: PlanePoint, m: &MassParams, time: f64) -> JacobiState {
    JacobiState {
        x: q1 * m.alpha1 + q2 * m.alpha2,
        y: w1 * m.alpha1 + w2 * m.alpha2,
        u: q2 - q1,
        v: (w2 - w1) * m.alpha,
        time,
    }
}

/// Entry/exit of the unperturbed chain through `|u| = ρ` at collision `j`.
pub fn section_crossing(chain: &CollisionChain, j: usize, rho: f64) -> Result<SectionCrossing> {
    let segs = segments(chain)?;
    let m = chain.masses;
    let n = segs.len();
    let sep = |t: f64| -> Result<f64> {
        let (q1, q2, _, _) = bodies_near_collision(&segs, chain, j, t)?;
        Ok((q2 - q1).norm() - rho)
    };
    // |u| grows linearly away from the collision; bracket within the adjacent segments.
    let find = |sign: f64, limit: f64| -> Result<f64> {
        let mut hi = (rho / 10.0).min(0.25 * limit);
        while sep(sign * hi)? < 0.0 {
            hi *= 1.5;
            if hi > 0.5 * limit {
                return Err(Error::InvalidInput(format!("ρ = {rho} is too large for collision {j}: the tube is not left within half a segment")));
            }
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if sep(sign * mid)? < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-15 * hi.max(1.0) {
                break;
            }
        }
        Ok(sign * 0.5 * (lo + hi))
    };
    let t_entry = find(-1.0, segs[(j + n - 1) % n].tof)?;
    let t_exit = find(1.0, segs[j].tof)?;
    let (a1, a2, w1, w2) = bodies_near_collision(&segs, chain, j, t_entry)?;
    let entry = jacobi_of(a1, a2, w1, w2, &m, t_entry);
    let (b1, b2, v1, v2) = bodies_near_collision(&segs, chain, j, t_exit)?;
    let exit = jacobi_of(b1, b2, v1, v2, &m, t_exit);
    let xi_minus = lift_to_regularized(&entry, 1.0)?.xi;
    let mut xi_plus = lift_to_regularized(&exit, 1.0)?.xi;
    if xi_plus.dot(xi_minus) < 0.0 {
        xi_plus = -xi_plus;
    }
    let separation = xi_minus.dot(xi_plus) / rho;
    Ok(SectionCrossing { collision: j, t_entry, t_exit, entry, exit, xi_minus, xi_plus, separation })
}

/// Closest approach of the relative Kepler hyperbola with `GM = μ` whose
/// asymptotic velocities are the chain's incoming and outgoing relative
/// velocities `w∓ = v∓/α` at collision `j`.
fn hyperbolic_closest_approach(v_minus: PlanePoint, v_plus: PlanePoint, m: &MassParams) -> Result<(PlanePoint, PlanePoint)> {
    let (wm, wp) = (v_minus / m.alpha, v_plus / m.alpha);
    let w = 0.5 * (wm.norm() + wp.norm());
    let cos_d = (wm.dot(wp) / (wm.norm() * wp.norm())).clamp(-1.0, 1.0);
    let deflection = cos_d.acos();
    if deflection <= 0.0 || deflection >= std::f64::consts::PI {
        return Err(Error::Degenerate("no direction change (or full reversal) at a collision".into()));
    }
    let e = 1.0 / (0.5 * deflection).sin();
    let rp = m.mu * (e - 1.0) / (w * w);
    let speed = (w * w + 2.0 * m.mu / rp).sqrt();
    let u = (wm.normalized() - wp.normalized()).normalized() * rp;
    let v = (wm.normalized() + wp.normalized()).normalized() * (speed * m.alpha);
    Ok((u, v))
}

/// Initial guess for the shooting problem from a certified chain.
pub fn build_initial_guess(chain: &CollisionChain, cert: &ChainCertificate, mu: f64, rho: f64, opts: &ShootingOptions) -> Result<ShootingProblem> {
    if !cert.valid {
        return Err(Error::InvalidInput("the chain certificate is not valid".into()));
    }
    if !(mu > 0.0 && rho > 0.0) {
        return Err(Error::InvalidInput("need μ > 0 and ρ > 0".into()));
    }
    let g0 = chain.angular_momentum.ok_or_else(|| Error::InvalidInput("the chain carries no angular momentum".into()))?;
    let m = chain.masses.with_mu(mu);
    let segs = segments(chain)?;
    let n = segs.len();
    let mut sections = Vec::with_capacity(n);
    let mut nodes = Vec::with_capacity(n);
    for j in 0..n {
        let sc = section_crossing(chain, j, rho)?;
        if sc.separation < opts.epsilon * opts.epsilon {
            return Err(Error::Degenerate(format!(
                "collision {j}: lifted section points ξ₋·ξ₊/ρ = {:.3e} below ε² = {:.3e}",
                sc.separation,
                opts.epsilon * opts.epsilon
            )));
        }
        sections.push(sc);
        let prev = &segs[(j + n - 1) % n];
        let rot = if j == 0 { -chain.phi } else { 0.0 };
        let v_minus = prev.relative_velocity_end().rotate(rot);
        let v_plus = segs[j].relative_velocity_start();
        let (u, v) = hyperbolic_closest_approach(v_minus, v_plus, &m)?;
        let y = segs[j].arcs[0].y_minus * m.alpha1 + segs[j].arcs[1].y_minus * m.alpha2;
        let jac = JacobiState { x: chain.x[j], y, u, v, time: 0.0 };
        let mut node = lift_to_regularized(&jac, 1.0)?;
        // Off the level 𝓗 = μα the regularized flow is the physical flow with a
        // different coupling constant. Put the node on the level by rescaling
        // the total momentum (the relative speed carries weight α ≈ α₁ and
        // must keep the hyperbola's value).
        let ysq = node.y.norm_sqr();
        let kinetic = node.xi.norm_sqr() * (1.0 + m.mu) * ysq / 2.0;
        let excess = regularized_hamiltonian(&node, &m, chain.energy)? - m.mu * m.alpha;
        let scale2 = 1.0 - excess / kinetic;
        if !(scale2 > 0.0) {
            return Err(Error::Degenerate(format!("collision {j}: closest-approach guess cannot be put on the energy level")));
        }
        node.y = node.y * scale2.sqrt();
        nodes.push(node);
    }
    // Half legs: forward from node j to mid-segment, backward from node j+1.
    let energy = chain.energy;
    let mut legs = Vec::with_capacity(n);
    let mut cover_sign = 1.0;
    for j in 0..n {
        let half = 0.5 * segs[j].tof;
        let fwd = time_to_reach(&nodes[j], half, &m, energy, opts)?;
        let next = if j + 1 < n { nodes[j + 1] } else { closure_image(&nodes[0], chain.phi, 1.0) };
        let bwd = time_to_reach(&next, -half, &m, energy, opts)?;
        // Pick the sheet of the double cover on which the two half legs meet.
        let a = run_leg(&nodes[j], fwd.0, &m, energy, opts, false)?;
        let b = run_leg(&next, -bwd.0, &m, energy, opts, false)?;
        let same = a.end[4] * b.end[4] + a.end[5] * b.end[5] >= 0.0;
        if !same {
            if j + 1 < n {
                let nd = &mut nodes[j + 1];
                nd.xi = -nd.xi;
                nd.eta = -nd.eta;
            } else {
                cover_sign = -1.0;
            }
        }
        legs.push((fwd.0, bwd.0));
        debug!("guess leg {j}: σ₊ = {:.6}, σ₋ = {:.6}", fwd.0, bwd.0);
    }
    Ok(ShootingProblem {
        chain_energy: energy,
        chain_angular_momentum: g0,
        chain_phi: chain.phi,
        phase_guess: chain.phi,
        chain_period: chain.period(),
        masses: m,
        mu,
        rho,
        sections,
        nodes,
        legs,
        cover_sign,
        anchor: chain.x[0],
    })
}

/// Guess at a new `μ` from an orbit converged at another one: the orbit's
/// correction to its own hyperbolic guess is carried over, scaled by the
/// ratio of the two `μ` (by its square root for `ξ`, `η`, which scale like `√μ`).
pub fn predict_from_orbit(guess_new: &ShootingProblem, guess_old: &ShootingProblem, orbit: &ShadowOrbit) -> Result<ShootingProblem> {
    if guess_new.nodes.len() != orbit.nodes.len() || guess_old.nodes.len() != orbit.nodes.len() || guess_new.cover_sign != orbit.cover_sign {
        return Err(Error::InvalidInput("orbit and guesses describe different chains".into()));
    }
    let ratio = guess_new.mu / guess_old.mu;
    let root = ratio.sqrt();
    let mut out = guess_new.clone();
    for (j, node) in out.nodes.iter_mut().enumerate() {
        let (a, b) = (orbit.nodes[j], guess_old.nodes[j]);
        node.x = node.x + (a.x - b.x) * ratio;
        node.y = node.y + (a.y - b.y) * ratio;
        node.xi = node.xi + (a.xi - b.xi) * root;
        node.eta = node.eta + (a.eta - b.eta) * root;
        let (lo, lg) = (orbit.legs[j], guess_old.legs[j]);
        out.legs[j].0 += lo.0 - lg.0;
        out.legs[j].1 += lo.1 - lg.1;
    }
    out.phase_guess = guess_new.chain_phi + (orbit.phase - guess_old.chain_phi) * ratio;
    Ok(out)
}

/// Closure map `(e^{iΦ}x, e^{iΦ}y, s·e^{iΦ/2}ξ, s·e^{iΦ/2}η)`.
pub fn closure_image(r: &RegularizedState, phi: f64, sign: f64) -> RegularizedState {
    let mut out = r.rotated(phi);
    out.xi = out.xi * sign;
    out.eta = out.eta * sign;
    out
}
