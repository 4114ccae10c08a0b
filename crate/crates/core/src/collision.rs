//! Actions of collision segments: two Kepler arcs (one per body) sharing
//! endpoints and duration, glued at collisions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kepler::{self, KeplerState, LambertArc};
use crate::plane::PlanePoint;

/// Mass parameters: `α₁ + α₂ = 1`, `α = α₁α₂`, perturbation size `μ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassParams {
    pub mu: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha: f64,
}

impl MassParams {
    pub fn new(alpha1: f64, mu: f64) -> Result<Self> {
        if !(alpha1 > 0.0 && alpha1 < 1.0) {
            return Err(Error::InvalidInput(format!("alpha1 must lie in (0, 1), got {alpha1}")));
        }
        if !(mu >= 0.0 && mu.is_finite()) {
            return Err(Error::InvalidInput(format!("mu must be non-negative, got {mu}")));
        }
        let alpha2 = 1.0 - alpha1;
        Ok(Self { mu, alpha1, alpha2, alpha: alpha1 * alpha2 })
    }

    pub fn with_mu(self, mu: f64) -> Self {
        Self { mu, ..self }
    }
}

/// Rotation numbers of the two bodies on one segment.
pub type RotationPair = (i32, i32);

/// A collision orbit of the unperturbed problem between two collisions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionSegment {
    pub k: RotationPair,
    pub tof: f64,
    pub x_minus: PlanePoint,
    pub x_plus: PlanePoint,
    /// Arcs of body 1 and body 2.
    pub arcs: [LambertArc; 2],
    pub action_s: f64,
    /// `α₁E₁ + α₂E₂`.
    pub energy: f64,
    pub masses: MassParams,
}

/// Total momenta at the segment ends and the segment energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentGradient {
    pub y_minus: PlanePoint,
    pub y_plus: PlanePoint,
    pub energy: f64,
}

/// `S_k(τ, x₋, x₊) = α₁F_{k₁} + α₂F_{k₂}`.
pub fn segment_action(k: RotationPair, tau: f64, x_minus: PlanePoint, x_plus: PlanePoint, masses: MassParams) -> Result<CollisionSegment> {
    let a1 = kepler::solve_fixed_time(k.0, tau, x_minus, x_plus)?;
    let a2 = kepler::solve_fixed_time(k.1, tau, x_minus, x_plus)?;
    Ok(CollisionSegment {
        k,
        tof: tau,
        x_minus,
        x_plus,
        action_s: masses.alpha1 * a1.action_f + masses.alpha2 * a2.action_f,
        energy: masses.alpha1 * a1.energy + masses.alpha2 * a2.energy,
        arcs: [a1, a2],
        masses,
    })
}

/// `y₊ = ∂S/∂x₊`, `y₋ = −∂S/∂x₋`, `E = −∂S/∂τ`.
pub fn segment_gradient(seg: &CollisionSegment) -> SegmentGradient {
    let (a1, a2) = (seg.masses.alpha1, seg.masses.alpha2);
    SegmentGradient {
        y_minus: seg.arcs[0].y_minus * a1 + seg.arcs[1].y_minus * a2,
        y_plus: seg.arcs[0].y_plus * a1 + seg.arcs[1].y_plus * a2,
        energy: seg.energy,
    }
}

/// `∂E/∂τ` of the segment (so `∂²S/∂τ² = −∂E/∂τ`).
pub fn segment_energy_slope(seg: &CollisionSegment) -> Result<f64> {
    let mut slope = 0.0;
    for (arc, w) in seg.arcs.iter().zip([seg.masses.alpha1, seg.masses.alpha2]) {
        let d = kepler::tof_energy_slope(arc.n, arc.energy, arc.x_minus, arc.x_plus)?;
        slope += w / d;
    }
    Ok(slope)
}

impl CollisionSegment {
    /// Scaled relative velocity `v = α(q̇₂ − q̇₁)` at the start of the segment.
    pub fn relative_velocity_start(&self) -> PlanePoint {
        (self.arcs[1].y_minus - self.arcs[0].y_minus) * self.masses.alpha
    }

    /// Same, at the end of the segment.
    pub fn relative_velocity_end(&self) -> PlanePoint {
        (self.arcs[1].y_plus - self.arcs[0].y_plus) * self.masses.alpha
    }
}

/// Incoming and outgoing scaled relative velocities at the collision shared by
/// `seg_in` (ending there) and `seg_out` (starting there).
pub fn relative_velocity_jump_data(seg_in: &CollisionSegment, seg_out: &CollisionSegment) -> Result<(PlanePoint, PlanePoint)> {
    let gap = (seg_in.x_plus - seg_out.x_minus).norm();
    if gap > 1e-12 * (1.0 + seg_in.x_plus.norm()) {
        return Err(Error::InvalidInput(format!("segments do not share a collision point (gap {gap:e})")));
    }
    Ok((seg_in.relative_velocity_end(), seg_out.relative_velocity_start()))
}

/// Energy-fixed action `L_k^E = max_τ (S_k + τE)` and its maximizer.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyFixedAction {
    pub value: f64,
    pub segment: CollisionSegment,
    pub y_minus: PlanePoint,
    pub y_plus: PlanePoint,
}

/// Attainable flight times of a segment: intersection of both bodies' branches.
pub fn segment_time_range(k: RotationPair, x_minus: PlanePoint, x_plus: PlanePoint) -> Result<(f64, f64)> {
    let b1 = kepler::time_branch(k.0, x_minus, x_plus)?;
    let b2 = kepler::time_branch(k.1, x_minus, x_plus)?;
    let lo = b1.tof_lo.max(b2.tof_lo);
    let hi = b1.tof_hi.min(b2.tof_hi);
    if !(lo < hi) {
        return Err(Error::NoSolution { reason: format!("no common flight time for k = {k:?}"), lo, hi });
    }
    Ok((lo, hi))
}

/// Solve `−∂S_k/∂τ = E` in τ and return `L_k^E` with its gradients.
pub fn energy_fixed_action_l(k: RotationPair, energy: f64, x_minus: PlanePoint, x_plus: PlanePoint, masses: MassParams) -> Result<EnergyFixedAction> {
    let (lo, hi) = segment_time_range(k, x_minus, x_plus)?;
    let eval = |tau: f64| segment_action(k, tau, x_minus, x_plus, masses).ok().map(|s| s.energy - energy);
    // Scan for a sign change: clustered at both ends of a bounded range,
    // log-spaced in the distance to `lo` for an unbounded one.
    let m = 240;
    let grid: Vec<f64> = if hi.is_finite() {
        (1..m)
            .map(|i| {
                let u = i as f64 / m as f64;
                lo + (hi - lo) * (0.5 - 0.5 * (std::f64::consts::PI * u).cos())
            })
            .collect()
    } else {
        let scale = lo.max(1.0);
        (0..=m).map(|i| lo + scale * 10f64.powf(-10.0 + 14.0 * i as f64 / m as f64)).collect()
    };
    let mut prev: Option<(f64, f64)> = None;
    let mut bracket = None;
    for &t in &grid {
        if let Some(r) = eval(t) {
            if let Some((tp, rp)) = prev {
                if rp.signum() != r.signum() {
                    bracket = Some((tp, rp, t));
                    break;
                }
            }
            prev = Some((t, r));
        }
    }
    let Some((mut a, ra, mut b)) = bracket else {
        return Err(Error::NoSolution {
            reason: format!("segment energy never reaches {energy} for k = {k:?}"),
            lo,
            hi,
        });
    };
    let sa = ra.signum();
    let mut tau = 0.5 * (a + b);
    for _ in 0..200 {
        let seg = segment_action(k, tau, x_minus, x_plus, masses)?;
        let r = seg.energy - energy;
        if r.abs() <= 1e-15 * (1.0 + energy.abs()) {
            break;
        }
        if r.signum() == sa {
            a = tau;
        } else {
            b = tau;
        }
        let d = segment_energy_slope(&seg)?;
        let mut next = tau - r / d;
        if !(next > a.min(b) && next < a.max(b)) || !next.is_finite() {
            next = 0.5 * (a + b);
        }
        if (next - tau).abs() <= 4.0 * f64::EPSILON * tau {
            tau = next;
            break;
        }
        tau = next;
    }
    let segment = segment_action(k, tau, x_minus, x_plus, masses)?;
    let g = segment_gradient(&segment);
    Ok(EnergyFixedAction { value: segment.action_s + tau * energy, y_minus: g.y_minus, y_plus: g.y_plus, segment })
}

/// `det ∂²S/∂x₋∂x₊ = det ∂y₊/∂x₋` by central differences with step `h`.
pub fn twist_determinant_with_step(seg: &CollisionSegment, h: f64) -> Result<f64> {
    let yp = |x: PlanePoint| -> Result<PlanePoint> {
        Ok(segment_gradient(&segment_action(seg.k, seg.tof, x, seg.x_plus, seg.masses)?).y_plus)
    };
    let ex = PlanePoint::new(h, 0.0);
    let ey = PlanePoint::new(0.0, h);
    let c0 = (yp(seg.x_minus + ex)? - yp(seg.x_minus - ex)?) / (2.0 * h);
    let c1 = (yp(seg.x_minus + ey)? - yp(seg.x_minus - ey)?) / (2.0 * h);
    Ok(c0.x * c1.y - c1.x * c0.y)
}

pub fn twist_determinant(seg: &CollisionSegment) -> Result<f64> {
    twist_determinant_with_step(seg, 1e-5 * (1.0 + seg.x_minus.norm()))
}

/// Smallest distance between the bodies at interior local minima of their
/// separation on a segment, by dense sampling plus golden-section refinement.
/// `f64::INFINITY` when the separation has no interior local minimum.
///
/// This is a screening heuristic, not a proof that no collision occurs.
pub fn early_collision_distance(seg: &CollisionSegment) -> Result<f64> {
    let samples = 256 * (1 + seg.k.0.unsigned_abs() as usize + seg.k.1.unsigned_abs() as usize);
    let s1 = KeplerState::new(seg.x_minus, seg.arcs[0].y_minus);
    let s2 = KeplerState::new(seg.x_minus, seg.arcs[1].y_minus);
    let dist = |t: f64| -> Result<f64> {
        let a = kepler::propagate_kepler(s1, t)?;
        let b = kepler::propagate_kepler(s2, t)?;
        Ok((a.position - b.position).norm())
    };
    let dt = seg.tof / samples as f64;
    let d: Vec<f64> = (0..=samples).map(|i| dist(i as f64 * dt)).collect::<Result<_>>()?;
    let mut best = f64::INFINITY;
    for i in 1..samples {
        if d[i] <= d[i - 1] && d[i] <= d[i + 1] {
            let (mut a, mut b) = ((i - 1) as f64 * dt, (i + 1) as f64 * dt);
            let g = 0.5 * (5f64.sqrt() - 1.0);
            let mut c = b - g * (b - a);
            let mut e = a + g * (b - a);
            let (mut fc, mut fe) = (dist(c)?, dist(e)?);
            for _ in 0..80 {
                if fc < fe {
                    b = e;
                    e = c;
                    fe = fc;
                    c = b - g * (b - a);
                    fc = dist(c)?;
                } else {
                    a = c;
                    c = e;
                    fc = fe;
                    e = a + g * (b - a);
                    fe = dist(e)?;
                }
            }
            best = best.min(fc.min(fe)).min(d[i]);
        }
    }
    Ok(best)
}
