use nalgebra::{SMatrix, SVector};
use num_dual::{jacobian, DualNum, DualSVec64};

use crate::collision::MassParams;

/// Right-hand side of `H_μ` in heliocentric coordinates, state `[q₁, q₂, p₁, p₂]`.
pub fn cartesian_field(z: &[f64], m: &MassParams, out: &mut [f64]) {
    let (q1x, q1y, q2x, q2y) = (z[0], z[1], z[2], z[3]);
    let (p1x, p1y, p2x, p2y) = (z[4], z[5], z[6], z[7]);
    let sx = m.mu * (p1x + p2x);
    let sy = m.mu * (p1y + p2y);
    out[0] = p1x / m.alpha1 + sx;
    out[1] = p1y / m.alpha1 + sy;
    out[2] = p2x / m.alpha2 + sx;
    out[3] = p2y / m.alpha2 + sy;
    let r1 = q1x.hypot(q1y);
    let r2 = q2x.hypot(q2y);
    let c1 = m.alpha1 / (r1 * r1 * r1);
    let c2 = m.alpha2 / (r2 * r2 * r2);
    let (dx, dy) = (q1x - q2x, q1y - q2y);
    let c12 = if m.mu > 0.0 {
        let d = dx.hypot(dy);
        m.mu * m.alpha / (d * d * d)
    } else {
        0.0
    };
    out[4] = -c1 * q1x - c12 * dx;
    out[5] = -c1 * q1y - c12 * dy;
    out[6] = -c2 * q2x + c12 * dx;
    out[7] = -c2 * q2y + c12 * dy;
}

/// Hamilton's equations of `𝓗_μ^E` for `[x, y, ξ, η]`, generic so that the
/// same code yields the variational matrix through dual numbers.
pub fn regularized_field_generic<D: DualNum<Primitive = f64>>(z: &[D; 8], m: &MassParams, energy: f64) -> [D; 8] {
    let [x1, x2, y1, y2, a, b, e1, e2] = z.clone();
    let r = a.clone() * a.clone() + b.clone() * b.clone();
    let u1 = a.clone() * a.clone() - b.clone() * b.clone();
    let u2 = a.clone() * b.clone() * 2.0;
    // d₁ = α₂u − x (body 1 seen from m₃ is −d₁), d₂ = α₁u + x.
    let d1x = u1.clone() * m.alpha2 - x1.clone();
    let d1y = u2.clone() * m.alpha2 - x2.clone();
    let d2x = u1 * m.alpha1 + x1;
    let d2y = u2 * m.alpha1 + x2;
    let n1 = (d1x.clone() * d1x.clone() + d1y.clone() * d1y.clone()).sqrt();
    let n2 = (d2x.clone() * d2x.clone() + d2y.clone() * d2y.clone()).sqrt();
    let k1 = (n1.clone() * n1.clone() * n1.clone()).recip() * m.alpha1;
    let k2 = (n2.clone() * n2.clone() * n2.clone()).recip() * m.alpha2;
    let ysq = y1.clone() * y1.clone() + y2.clone() * y2.clone();
    let w = n1.recip() * m.alpha1 + n2.recip() * m.alpha2 - ysq * (0.5 * (1.0 + m.mu)) + energy;
    // ∇ₓW and ∇ᵤW.
    let gx1 = k1.clone() * d1x.clone() - k2.clone() * d2x.clone();
    let gx2 = k1.clone() * d1y.clone() - k2.clone() * d2y.clone();
    let gu1 = -(k1.clone() * d1x * m.alpha2 + k2.clone() * d2x * m.alpha1);
    let gu2 = -(k1 * d1y * m.alpha2 + k2 * d2y * m.alpha1);
    // ∇_ξ W = 2 ξ̄ ∇ᵤW (complex product).
    let gxi1 = (a.clone() * gu1.clone() + b.clone() * gu2.clone()) * 2.0;
    let gxi2 = (a.clone() * gu2 - b.clone() * gu1) * 2.0;
    let inv4a = 0.25 / m.alpha;
    [
        r.clone() * y1 * (1.0 + m.mu),
        r.clone() * y2 * (1.0 + m.mu),
        r.clone() * gx1,
        r.clone() * gx2,
        e1 * inv4a,
        e2 * inv4a,
        a * w.clone() * 2.0 + r.clone() * gxi1,
        b * w * 2.0 + r * gxi2,
    ]
}

/// Regularized field on `[x, y, ξ, η, t]`; the last component is `dt/dτ = |ξ|²`.
pub fn regularized_field(z: &[f64], m: &MassParams, energy: f64, out: &mut [f64]) {
    let s: [f64; 8] = std::array::from_fn(|i| z[i]);
    let f = regularized_field_generic(&s, m, energy);
    out[..8].copy_from_slice(&f);
    if out.len() > 8 {
        out[8] = z[4] * z[4] + z[5] * z[5];
    }
}

/// Field value and its Jacobian with respect to `[x, y, ξ, η]`.
pub fn regularized_jacobian(z: &[f64], m: &MassParams, energy: f64) -> (SVector<f64, 8>, SMatrix<f64, 8, 8>) {
    let x = SVector::<f64, 8>::from_fn(|i, _| z[i]);
    jacobian(
        |v: SVector<DualSVec64<8>, 8>| {
            let s: [DualSVec64<8>; 8] = std::array::from_fn(|i| v[i].clone());
            SVector::from(regularized_field_generic(&s, m, energy))
        },
        &x,
    )
}

/// Field of the state together with its 8×8 variational matrix, laid out as
/// `[x, y, ξ, η, t, Φ (row-major 64)]`.
pub fn regularized_variational_field(z: &[f64], m: &MassParams, energy: f64, out: &mut [f64]) {
    let (f, jac) = regularized_jacobian(&z[..8], m, energy);
    for i in 0..8 {
        out[i] = f[i];
    }
    out[8] = z[4] * z[4] + z[5] * z[5];
    let phi = &z[9..73];
    for i in 0..8 {
        for j in 0..8 {
            let mut acc = 0.0;
            for k in 0..8 {
                acc += jac[(i, k)] * phi[8 * k + j];
            }
            out[9 + 8 * i + j] = acc;
        }
    }
}
