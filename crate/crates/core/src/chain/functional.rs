use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::CollisionChain;
use crate::collision::{energy_fixed_action_l, segment_action, segment_gradient, CollisionSegment, MassParams, RotationPair};
use crate::error::{Error, Result};
use crate::plane::PlanePoint;

/// Which functional is made stationary, and over which unknowns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Variant {
    /// Unknowns `(s, x, E)`: `A + E(Σs − T)`; `E` is the multiplier of the period constraint.
    FixedTime { period: f64 },
    /// Unknowns `(s, x)`: `A^E = A + ET`, closure `x_n = x_0`.
    FixedEnergy,
    /// Unknowns `(s, x, Φ)`: `A^{EG} = A + ET − GΦ`, closure `x_n = e^{iΦ}x_0`.
    FixedEnergyMomentum,
}

impl Variant {
    pub fn dimension(&self, n: usize) -> usize {
        match self {
            Variant::FixedEnergy => 3 * n,
            _ => 3 * n + 1,
        }
    }
}

/// Coordinates of a chain in the variant's unknown space.
pub fn pack(chain: &CollisionChain, variant: Variant) -> DVector<f64> {
    let n = chain.len();
    let mut z = DVector::zeros(variant.dimension(n));
    for j in 0..n {
        z[j] = chain.s[j];
        z[n + 2 * j] = chain.x[j].x;
        z[n + 2 * j + 1] = chain.x[j].y;
    }
    match variant {
        Variant::FixedTime { .. } => z[3 * n] = chain.energy,
        Variant::FixedEnergyMomentum => z[3 * n] = chain.phi,
        Variant::FixedEnergy => {}
    }
    z
}

/// Inverse of [`pack`], taking the remaining data from `template`.
pub fn unpack(z: &DVector<f64>, template: &CollisionChain, variant: Variant) -> CollisionChain {
    let n = template.len();
    let mut c = template.clone();
    for j in 0..n {
        c.s[j] = z[j];
        c.x[j] = PlanePoint::new(z[n + 2 * j], z[n + 2 * j + 1]);
    }
    match variant {
        Variant::FixedTime { .. } => c.energy = z[3 * n],
        Variant::FixedEnergyMomentum => c.phi = z[3 * n],
        Variant::FixedEnergy => c.phi = 0.0,
    }
    c
}

/// Discrete Hamilton action and its Kepler parts `B_{k₁} = ΣF_{k₁}`, `B_{k₂} = ΣF_{k₂}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionParts {
    pub total: f64,
    pub b1: f64,
    pub b2: f64,
    pub segments: Vec<CollisionSegment>,
}

pub fn segments(chain: &CollisionChain) -> Result<Vec<CollisionSegment>> {
    chain.validate()?;
    (0..chain.len())
        .map(|j| segment_action(chain.k[j], chain.s[j], chain.x[j], chain.x_next(j), chain.masses))
        .collect()
}

/// `A_k(s, x) = Σ S_{k^j}(s_j, x_j, x_{j+1})`.
pub fn discrete_action_a(chain: &CollisionChain) -> Result<ActionParts> {
    let segs = segments(chain)?;
    let total = segs.iter().map(|s| s.action_s).sum();
    let b1 = segs.iter().map(|s| s.arcs[0].action_f).sum();
    let b2 = segs.iter().map(|s| s.arcs[1].action_f).sum();
    Ok(ActionParts { total, b1, b2, segments: segs })
}

/// Value, gradient (in [`pack`] coordinates) and segments of a variant's functional.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub segments: Vec<CollisionSegment>,
}

fn assemble(chain: &CollisionChain, segs: &[CollisionSegment], energy: f64, phi: f64) -> (DVector<f64>, f64) {
    let n = chain.len();
    let mut g = DVector::zeros(3 * n + 1);
    let grads: Vec<_> = segs.iter().map(segment_gradient).collect();
    for j in 0..n {
        g[j] = energy - grads[j].energy;
        let prev = if j == 0 { grads[n - 1].y_plus.rotate(-phi) } else { grads[j - 1].y_plus };
        let d = prev - grads[j].y_minus;
        g[n + 2 * j] = d.x;
        g[n + 2 * j + 1] = d.y;
    }
    // ∂/∂Φ of S_{n−1}(…, e^{iΦ}x_0).
    let d_phi = grads[n - 1].y_plus.dot(chain.x[0].rotate(phi).perp());
    (g, d_phi)
}

/// Evaluate the functional selected by `variant` at `chain`.
pub fn evaluate(chain: &CollisionChain, variant: Variant) -> Result<Evaluation> {
    let n = chain.len();
    let parts = discrete_action_a(chain)?;
    let t = chain.period();
    let (mut g, d_phi) = assemble(chain, &parts.segments, chain.energy, chain.phi);
    let value = match variant {
        Variant::FixedTime { period } => {
            g[3 * n] = t - period;
            parts.total + chain.energy * (t - period)
        }
        Variant::FixedEnergy => {
            if chain.phi != 0.0 {
                return Err(Error::InvalidInput("fixed-energy chains close without a phase".into()));
            }
            g = g.rows(0, 3 * n).into_owned();
            parts.total + chain.energy * t
        }
        Variant::FixedEnergyMomentum => {
            let big_g = chain
                .angular_momentum
                .ok_or_else(|| Error::InvalidInput("fixed-E,G functional needs an angular momentum".into()))?;
            g[3 * n] = d_phi - big_g;
            parts.total + chain.energy * t - big_g * chain.phi
        }
    };
    Ok(Evaluation { value, gradient: g, segments: parts.segments })
}

/// `A^E = A + ET`.
pub fn maupertuis_action_ae(chain: &CollisionChain) -> Result<Evaluation> {
    evaluate(chain, Variant::FixedEnergy)
}

/// `A^{EG} = A + ET − GΦ`.
pub fn maupertuis_routh_action_aeg(chain: &CollisionChain) -> Result<Evaluation> {
    evaluate(chain, Variant::FixedEnergyMomentum)
}

/// Jacobi action `J_k^E(x) = Σ L^E_{k^j}(x_j, x_{j+1})` with `x_n = e^{iΦ}x_0`.
/// Also returns the eliminated durations.
pub fn jacobi_action_je_with_phase(
    x: &[PlanePoint],
    phi: f64,
    k: &[RotationPair],
    energy: f64,
    masses: MassParams,
) -> Result<(f64, Vec<f64>)> {
    if x.len() != k.len() || x.is_empty() {
        return Err(Error::InvalidInput("points and rotation pairs must have equal, non-zero length".into()));
    }
    let n = x.len();
    let mut total = 0.0;
    let mut s = Vec::with_capacity(n);
    for j in 0..n {
        let next = if j + 1 < n { x[j + 1] } else { x[0].rotate(phi) };
        let l = energy_fixed_action_l(k[j], energy, x[j], next, masses)?;
        total += l.value;
        s.push(l.segment.tof);
    }
    Ok((total, s))
}

pub fn jacobi_action_je(x: &[PlanePoint], k: &[RotationPair], energy: f64, masses: MassParams) -> Result<f64> {
    Ok(jacobi_action_je_with_phase(x, 0.0, k, energy, masses)?.0)
}

/// Jacobi–Routh action `J_k^{EG}(x, Φ) = J_k^E − GΦ`.
pub fn jacobi_routh_jeg(x: &[PlanePoint], phi: f64, k: &[RotationPair], energy: f64, g: f64, masses: MassParams) -> Result<f64> {
    Ok(jacobi_action_je_with_phase(x, phi, k, energy, masses)?.0 - g * phi)
}
