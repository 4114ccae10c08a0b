//! Flows of the perturbed Hamiltonian in heliocentric, Jacobi and
//! Levi-Civita regularized coordinates.

mod field;
mod integrate;

pub use field::*;
pub use integrate::*;

use serde::{Deserialize, Serialize};

use crate::collision::MassParams;
use crate::error::{Error, Result};
use crate::plane::PlanePoint;

/// Heliocentric positions and scaled momenta of the two small bodies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseState {
    pub q1: PlanePoint,
    pub q2: PlanePoint,
    pub p1: PlanePoint,
    pub p2: PlanePoint,
    pub time: f64,
}

/// Center of mass `x`, total momentum `y`, relative position `u` and scaled
/// relative velocity `v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JacobiState {
    pub x: PlanePoint,
    pub y: PlanePoint,
    pub u: PlanePoint,
    pub v: PlanePoint,
    pub time: f64,
}

/// Jacobi pair `(x, y)` with the relative pair lifted by `u = ξ²`, `v = η/2ξ̄`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularizedState {
    pub x: PlanePoint,
    pub y: PlanePoint,
    pub xi: PlanePoint,
    pub eta: PlanePoint,
    pub fictitious_time: f64,
    pub physical_time: f64,
}

impl PhaseState {
    pub fn to_array(&self) -> [f64; 8] {
        [self.q1.x, self.q1.y, self.q2.x, self.q2.y, self.p1.x, self.p1.y, self.p2.x, self.p2.y]
    }

    pub fn from_array(a: &[f64], time: f64) -> Self {
        Self {
            q1: PlanePoint::new(a[0], a[1]),
            q2: PlanePoint::new(a[2], a[3]),
            p1: PlanePoint::new(a[4], a[5]),
            p2: PlanePoint::new(a[6], a[7]),
            time,
        }
    }

    /// Rotate positions and momenta by `theta`.
    pub fn rotated(&self, theta: f64) -> Self {
        Self {
            q1: self.q1.rotate(theta),
            q2: self.q2.rotate(theta),
            p1: self.p1.rotate(theta),
            p2: self.p2.rotate(theta),
            time: self.time,
        }
    }

    /// Distance between the two small bodies.
    pub fn separation(&self) -> f64 {
        (self.q2 - self.q1).norm()
    }
}

impl RegularizedState {
    /// `[x, y, ξ, η]` as eight reals.
    pub fn to_array(&self) -> [f64; 8] {
        [self.x.x, self.x.y, self.y.x, self.y.y, self.xi.x, self.xi.y, self.eta.x, self.eta.y]
    }

    pub fn from_array(a: &[f64], fictitious_time: f64, physical_time: f64) -> Self {
        Self {
            x: PlanePoint::new(a[0], a[1]),
            y: PlanePoint::new(a[2], a[3]),
            xi: PlanePoint::new(a[4], a[5]),
            eta: PlanePoint::new(a[6], a[7]),
            fictitious_time,
            physical_time,
        }
    }

    /// Relative position `u = ξ²`.
    pub fn u(&self) -> PlanePoint {
        let z = self.xi.to_complex();
        PlanePoint::from_complex(z * z)
    }

    /// The rotation `(e^{iθ}x, e^{iθ}y, e^{iθ/2}ξ, e^{iθ/2}η)`.
    pub fn rotated(&self, theta: f64) -> Self {
        Self {
            x: self.x.rotate(theta),
            y: self.y.rotate(theta),
            xi: self.xi.rotate(0.5 * theta),
            eta: self.eta.rotate(0.5 * theta),
            ..*self
        }
    }
}

pub fn to_jacobi(s: &PhaseState, m: &MassParams) -> JacobiState {
    JacobiState {
        x: s.q1 * m.alpha1 + s.q2 * m.alpha2,
        y: s.p1 + s.p2,
        u: s.q2 - s.q1,
        v: s.p2 * m.alpha1 - s.p1 * m.alpha2,
        time: s.time,
    }
}

pub fn from_jacobi(j: &JacobiState, m: &MassParams) -> PhaseState {
    PhaseState {
        q1: j.x - j.u * m.alpha2,
        q2: j.x + j.u * m.alpha1,
        p1: j.y * m.alpha1 - j.v,
        p2: j.y * m.alpha2 + j.v,
        time: j.time,
    }
}

/// The Levi-Civita map `g`, as far as the Jacobi chart. Undefined at `ξ = 0`.
pub fn levi_civita_map(r: &RegularizedState, _m: &MassParams) -> Result<JacobiState> {
    if r.xi.norm_sqr() == 0.0 {
        return Err(Error::Domain("the Levi-Civita map is undefined at ξ = 0".into()));
    }
    let xi = r.xi.to_complex();
    let v = r.eta.to_complex() / (2.0 * xi.conj());
    Ok(JacobiState { x: r.x, y: r.y, u: PlanePoint::from_complex(xi * xi), v: PlanePoint::from_complex(v), time: r.physical_time })
}

/// A preimage of `j` under [`levi_civita_map`]: `ξ = ±√u` (principal root times
/// `sign`), `η = 2ξ̄v`.
pub fn lift_to_regularized(j: &JacobiState, sign: f64) -> Result<RegularizedState> {
    if j.u.norm_sqr() == 0.0 {
        return Err(Error::Domain("cannot lift a collision state".into()));
    }
    let xi = j.u.to_complex().sqrt() * sign.signum();
    let eta = 2.0 * xi.conj() * j.v.to_complex();
    Ok(RegularizedState {
        x: j.x,
        y: j.y,
        xi: PlanePoint::from_complex(xi),
        eta: PlanePoint::from_complex(eta),
        fictitious_time: 0.0,
        physical_time: j.time,
    })
}

/// States on which `H_μ` and the angular momentum can be evaluated.
pub trait ChartState {
    fn hamiltonian_h(&self, m: &MassParams) -> Result<f64>;
    fn angular_momentum(&self, m: &MassParams) -> f64;
}

impl ChartState for PhaseState {
    fn hamiltonian_h(&self, m: &MassParams) -> Result<f64> {
        let (r1, r2, r12) = (self.q1.norm(), self.q2.norm(), self.separation());
        if r1 == 0.0 || r2 == 0.0 {
            return Err(Error::Domain("collision with the central body".into()));
        }
        if m.mu > 0.0 && r12 == 0.0 {
            return Err(Error::Collision("the small bodies coincide".into()));
        }
        let h0 = self.p1.norm_sqr() / (2.0 * m.alpha1) + self.p2.norm_sqr() / (2.0 * m.alpha2) - m.alpha1 / r1 - m.alpha2 / r2;
        let pert = if m.mu > 0.0 { m.mu * ((self.p1 + self.p2).norm_sqr() / 2.0 - m.alpha / r12) } else { 0.0 };
        Ok(h0 + pert)
    }

    fn angular_momentum(&self, _m: &MassParams) -> f64 {
        self.q1.cross(self.p1) + self.q2.cross(self.p2)
    }
}

impl ChartState for JacobiState {
    fn hamiltonian_h(&self, m: &MassParams) -> Result<f64> {
        let d1 = (self.u * m.alpha2 - self.x).norm();
        let d2 = (self.u * m.alpha1 + self.x).norm();
        let r = self.u.norm();
        if d1 == 0.0 || d2 == 0.0 {
            return Err(Error::Domain("collision with the central body".into()));
        }
        if m.mu > 0.0 && r == 0.0 {
            return Err(Error::Collision("the small bodies coincide".into()));
        }
        let coupling = if m.mu > 0.0 { m.mu * m.alpha / r } else { 0.0 };
        Ok((1.0 + m.mu) * self.y.norm_sqr() / 2.0 + self.v.norm_sqr() / (2.0 * m.alpha) - m.alpha1 / d1 - m.alpha2 / d2 - coupling)
    }

    fn angular_momentum(&self, _m: &MassParams) -> f64 {
        self.x.cross(self.y) + self.u.cross(self.v)
    }
}

impl ChartState for RegularizedState {
    fn hamiltonian_h(&self, m: &MassParams) -> Result<f64> {
        levi_civita_map(self, m)?.hamiltonian_h(m)
    }

    /// `G = ix·y + iξ·η/2`, smooth through `ξ = 0`.
    fn angular_momentum(&self, _m: &MassParams) -> f64 {
        self.x.cross(self.y) + 0.5 * self.xi.cross(self.eta)
    }
}

pub fn hamiltonian_h<S: ChartState>(s: &S, m: &MassParams) -> Result<f64> {
    s.hamiltonian_h(m)
}

pub fn angular_momentum<S: ChartState>(s: &S, m: &MassParams) -> f64 {
    s.angular_momentum(m)
}

/// `𝓗_μ^E = |η|²/8α − |ξ|²(E + α₁/|α₂ξ² − x| + α₂/|α₁ξ² + x| − (1+μ)|y|²/2)`.
pub fn regularized_hamiltonian(r: &RegularizedState, m: &MassParams, energy: f64) -> Result<f64> {
    let u = r.u();
    let d1 = (u * m.alpha2 - r.x).norm();
    let d2 = (u * m.alpha1 + r.x).norm();
    if d1 == 0.0 || d2 == 0.0 {
        return Err(Error::Domain("state outside the regularized domain (collision with the central body)".into()));
    }
    let w = energy + m.alpha1 / d1 + m.alpha2 / d2 - (1.0 + m.mu) * r.y.norm_sqr() / 2.0;
    Ok(r.eta.norm_sqr() / (8.0 * m.alpha) - r.xi.norm_sqr() * w)
}
