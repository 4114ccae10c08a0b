use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::ode::{self, Tolerances};
use crate::plane::PlanePoint;

/// State of the unit Kepler problem `H = |v|²/2 − 1/|x|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeplerState {
    pub position: PlanePoint,
    pub velocity: PlanePoint,
}

impl KeplerState {
    pub fn new(position: PlanePoint, velocity: PlanePoint) -> Self {
        Self { position, velocity }
    }

    pub fn energy(&self) -> f64 {
        0.5 * self.velocity.norm_sqr() - 1.0 / self.position.norm()
    }

    pub fn angular_momentum(&self) -> f64 {
        self.position.cross(self.velocity)
    }
}

/// Advance `state` by time `t` (either sign).
///
/// Bound orbits use Kepler's equation in the eccentric-anomaly increment; unbound
/// ones fall back to numerical integration.
pub fn propagate_kepler(state: KeplerState, t: f64) -> Result<KeplerState> {
    let r0 = state.position.norm();
    if !(r0 > 0.0) || !state.velocity.is_finite() || !t.is_finite() {
        return Err(domain("propagation needs a finite state away from the origin"));
    }
    if t == 0.0 {
        return Ok(state);
    }
    let energy = state.energy();
    let v0 = state.velocity.norm();
    let rectilinear = state.angular_momentum().abs() <= 1e-14 * r0 * v0.max(1e-300);
    if energy >= 0.0 {
        if rectilinear && state.position.dot(state.velocity) * t < 0.0 {
            return Err(Error::Collision("rectilinear orbit falls into the origin".into()));
        }
        return propagate_numerically(state, t);
    }
    let a = -0.5 / energy;
    let sqrt_a = a.sqrt();
    let mean_motion = 1.0 / (a * sqrt_a);
    let sigma0 = state.position.dot(state.velocity);
    let ecos = 1.0 - r0 / a;
    let esin = sigma0 / sqrt_a;

    // Mean-anomaly increment, reduced to one period.
    let period = TAU / mean_motion;
    let t_red = t - period * (t / period).round();
    let dm = mean_motion * t_red;

    if rectilinear {
        // e = 1: collision whenever the eccentric anomaly passes a multiple of 2π.
        let e0 = esin.atan2(ecos);
        let full = (t / period).trunc();
        if full != 0.0 || crosses_zero(e0, dm, ecos, esin) {
            return Err(Error::Collision("rectilinear orbit reaches the origin".into()));
        }
    }

    // dm = dE − ecos·sin dE + esin·(1 − cos dE)
    let kepler = |de: f64| de - ecos * de.sin() + esin * (1.0 - de.cos()) - dm;
    let mut de = dm;
    let (mut lo, mut hi) = (dm - 2.0, dm + 2.0);
    for _ in 0..100 {
        let f = kepler(de);
        if f < 0.0 {
            lo = de;
        } else {
            hi = de;
        }
        let fp = 1.0 - ecos * de.cos() + esin * de.sin();
        let mut next = de - f / fp;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - de).abs() <= 1e-16 * (1.0 + de.abs()) {
            de = next;
            break;
        }
        de = next;
    }
    let (s, c) = de.sin_cos();
    let f = 1.0 - a / r0 * (1.0 - c);
    let g = (dm - (de - s)) / mean_motion;
    let position = state.position * f + state.velocity * g;
    let r = a + (r0 - a) * c + sigma0 * sqrt_a * s;
    let fdot = -sqrt_a / (r * r0) * s;
    let gdot = 1.0 - a / r * (1.0 - c);
    let velocity = state.position * fdot + state.velocity * gdot;
    Ok(KeplerState { position, velocity })
}

// Does E0 + [0, dE] cross 0 mod 2π, where dE solves the rectilinear Kepler equation?
fn crosses_zero(e0: f64, dm: f64, _ecos: f64, _esin: f64) -> bool {
    let m0 = e0 - e0.sin();
    let m1 = m0 + dm;
    // Mean anomaly of the collision is a multiple of 2π.
    let k0 = (m0 / TAU).floor();
    let k1 = (m1 / TAU).floor();
    k0 != k1 || m0.rem_euclid(TAU) == 0.0
}

fn propagate_numerically(state: KeplerState, t: f64) -> Result<KeplerState> {
    let y0 = [state.position.x, state.position.y, state.velocity.x, state.velocity.y];
    let rhs = |_t: f64, y: &[f64], dy: &mut [f64]| {
        let r2 = y[0] * y[0] + y[1] * y[1];
        let k = -1.0 / (r2 * r2.sqrt());
        dy[0] = y[2];
        dy[1] = y[3];
        dy[2] = k * y[0];
        dy[3] = k * y[1];
    };
    let y = ode::integrate(rhs, 0.0, &y0, t, Tolerances::new(1e-13, 1e-15))?;
    Ok(KeplerState::new(PlanePoint::new(y[0], y[1]), PlanePoint::new(y[2], y[3])))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circular_period_is_identity() {
        let s = KeplerState::new(PlanePoint::new(1.0, 0.0), PlanePoint::new(0.0, 1.0));
        let out = propagate_kepler(s, TAU).unwrap();
        assert!((out.position - s.position).norm() < 1e-13);
        assert!((out.velocity - s.velocity).norm() < 1e-13);
        assert_eq!(propagate_kepler(s, 0.0).unwrap(), s);
    }

    #[test]
    fn quarter_turn() {
        let s = KeplerState::new(PlanePoint::new(1.0, 0.0), PlanePoint::new(0.0, 1.0));
        let out = propagate_kepler(s, TAU / 4.0).unwrap();
        assert!((out.position - PlanePoint::new(0.0, 1.0)).norm() < 1e-14);
    }

    #[test]
    fn agrees_with_integration_on_eccentric_orbit() {
        let s = KeplerState::new(PlanePoint::new(0.7, 0.2), PlanePoint::new(-0.3, 1.25));
        for &t in &[0.3, -1.7, 5.0] {
            let a = propagate_kepler(s, t).unwrap();
            let b = propagate_numerically(s, t).unwrap();
            assert!((a.position - b.position).norm() < 1e-10, "t={t}");
            assert!((a.velocity - b.velocity).norm() < 1e-10, "t={t}");
        }
    }

    #[test]
    fn radial_infall_is_a_collision() {
        let s = KeplerState::new(PlanePoint::new(1.0, 0.0), PlanePoint::new(-0.1, 0.0));
        assert!(matches!(propagate_kepler(s, 10.0), Err(Error::Collision(_))));
    }
}
