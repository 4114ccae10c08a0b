//! Closed-form Lambert arcs of the unit Kepler problem `H = |y|²/2 − 1/|x|`.
//!
//! Everything is computed at semimajor axis one (energy −1/2) and rescaled:
//! with `λ = −2E`, the arc between `x₋, x₊` at energy `E` is the image of the
//! unit arc between `λx₋, λx₊`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::plane::PlanePoint;

/// A multi-revolution Kepler arc with its actions and endpoint momenta.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambertArc {
    pub n: i32,
    pub energy: f64,
    pub tof: f64,
    pub x_minus: PlanePoint,
    pub x_plus: PlanePoint,
    pub second_focus: PlanePoint,
    /// Maupertuis action `J_n`.
    pub action_j: f64,
    /// Hamilton action `F_n = J_n − τE`.
    pub action_f: f64,
    pub y_minus: PlanePoint,
    pub y_plus: PlanePoint,
}

impl LambertArc {
    pub fn semimajor_axis(&self) -> f64 {
        -0.5 / self.energy
    }

    /// `|F' |/(2a)`.
    pub fn eccentricity(&self) -> f64 {
        self.second_focus.norm() / (2.0 * self.semimajor_axis())
    }

    pub fn angular_momentum(&self) -> f64 {
        self.x_minus.cross(self.y_minus)
    }

    /// `F_n + τE − J_n`; zero up to rounding.
    pub fn legendre_defect(&self) -> f64 {
        self.action_f + self.tof * self.energy - self.action_j
    }
}

fn sgn(n: i32) -> f64 {
    if n < 0 {
        -1.0
    } else {
        1.0
    }
}

/// `W(s) = ½√((4−s)s) + 2 arctan √(s/(4−s))` for `0 ≤ s ≤ 4`.
pub fn lambert_w(s: f64) -> Result<f64> {
    if !(0.0..=4.0).contains(&s) {
        return Err(domain(format!("lambert_w: s = {s} outside [0, 4]")));
    }
    let c = (4.0 - s).max(0.0);
    Ok(0.5 * (s * c).sqrt() + 2.0 * s.sqrt().atan2(c.sqrt()))
}

// α − sin α with α = 2 arctan √(s/(4−s)); series near zero.
fn lagrange_t(s: f64) -> f64 {
    let c = (4.0 - s).max(0.0);
    let a = 2.0 * s.max(0.0).sqrt().atan2(c.sqrt());
    if a < 0.4 {
        let a2 = a * a;
        let mut term = a * a2 / 6.0;
        let mut sum = term;
        for k in 1..12 {
            let d = ((2 * k + 2) * (2 * k + 3)) as f64;
            term *= -a2 / d;
            sum += term;
        }
        sum
    } else {
        a - a.sin()
    }
}

// s · d/dx[α − sin α](λ s) = s √(λs) / (2 √(4 − λs)).
fn lagrange_t_slope(s: f64, lambda: f64) -> f64 {
    let x = lambda * s;
    s * x.max(0.0).sqrt() / (2.0 * (4.0 - x).max(0.0).sqrt())
}

/// Shape data of an endpoint pair, invariant under the energy scaling.
#[derive(Debug, Clone, Copy)]
struct Chord {
    s_plus: f64,
    s_minus: f64,
    /// `−1` for arc angle in `(0, π]`, `+1` in `(π, 2π)`.
    pm: f64,
}

impl Chord {
    fn new(x_minus: PlanePoint, x_plus: PlanePoint) -> Result<Self> {
        if !(x_minus.is_finite() && x_plus.is_finite()) {
            return Err(domain("non-finite endpoint"));
        }
        let r1 = x_minus.norm();
        let r2 = x_plus.norm();
        let d = (x_plus - x_minus).norm();
        let dot = x_minus.dot(x_plus);
        let cross = x_minus.cross(x_plus);
        if r1 == 0.0 || r2 == 0.0 {
            return Err(domain("endpoint at the origin"));
        }
        if !((r2 - r1).abs() < d) {
            return Err(domain("endpoints collinear with the origin on the same side"));
        }
        // r1 r2 + dot, stable when the points are nearly opposite.
        let p = if dot >= 0.0 { r1 * r2 + dot } else { cross * cross / (r1 * r2 - dot) };
        let s_minus = 2.0 * p / (r1 + r2 + d);
        Ok(Self { s_plus: r1 + r2 + d, s_minus, pm: if cross >= 0.0 { -1.0 } else { 1.0 } })
    }

    /// Largest admissible `λ = −2E`.
    fn lambda_max(&self) -> f64 {
        4.0 / self.s_plus
    }

    fn check(&self, lambda: f64) -> Result<()> {
        if !(lambda > 0.0) {
            return Err(domain(format!("energy must be negative (−2E = {lambda})")));
        }
        if !(lambda * self.s_plus < 4.0) {
            return Err(domain(format!(
                "endpoints outside the admissible domain at −2E = {lambda} (limit {})",
                self.lambda_max()
            )));
        }
        Ok(())
    }

    // f(λx₋, λx₊)
    fn f(&self, lambda: f64) -> f64 {
        let wp = lambert_w(lambda * self.s_plus).unwrap_or(PI);
        let wm = lambert_w((lambda * self.s_minus).min(4.0)).unwrap_or(0.0);
        wp + self.pm * wm
    }

    fn action_j(&self, n: i32, lambda: f64) -> f64 {
        (2.0 * PI * n.unsigned_abs() as f64 + sgn(n) * self.f(lambda)) / lambda.sqrt()
    }

    fn tof(&self, n: i32, lambda: f64) -> f64 {
        let psi = lagrange_t(lambda * self.s_plus) + self.pm * lagrange_t(lambda * self.s_minus);
        (2.0 * PI * n.unsigned_abs() as f64 + sgn(n) * psi) / (lambda * lambda.sqrt())
    }

    fn dtof_dlambda(&self, n: i32, lambda: f64) -> f64 {
        let psi = lagrange_t(lambda * self.s_plus) + self.pm * lagrange_t(lambda * self.s_minus);
        let dpsi = lagrange_t_slope(self.s_plus, lambda) + self.pm * lagrange_t_slope(self.s_minus, lambda);
        let c = 2.0 * PI * n.unsigned_abs() as f64;
        -1.5 * (c + sgn(n) * psi) / (lambda * lambda * lambda.sqrt()) + sgn(n) * dpsi / (lambda * lambda.sqrt())
    }

    /// Parabolic (Euler) limit of the `n = 0` time.
    fn parabolic_tof(&self) -> f64 {
        (self.s_plus.powf(1.5) + self.pm * self.s_minus.powf(1.5)) / 6.0
    }
}

/// Second focus of the unit-semimajor-axis ellipse through `x₋, x₊` with a
/// focus at the origin: the circle intersection to the left of `x₋ → x₊`.
pub fn second_focus(x_minus: PlanePoint, x_plus: PlanePoint) -> Result<PlanePoint> {
    Chord::new(x_minus, x_plus)?.check(1.0)?;
    let d = x_plus - x_minus;
    let dist = d.norm();
    let r1 = 2.0 - x_minus.norm();
    let r2 = 2.0 - x_plus.norm();
    let along = (r1 * r1 - r2 * r2 + dist * dist) / (2.0 * dist);
    let h2 = r1 * r1 - along * along;
    if !(h2 > 0.0) {
        return Err(domain("focal circles do not intersect"));
    }
    let u = d / dist;
    Ok(x_minus + u * along + u.perp() * h2.sqrt())
}

/// Maupertuis action `f(x₋, x₊) = W(s₊) ∓ W(s₋)` of the unit-semimajor arc.
pub fn lambert_f(x_minus: PlanePoint, x_plus: PlanePoint) -> Result<f64> {
    let c = Chord::new(x_minus, x_plus)?;
    c.check(1.0)?;
    Ok(c.f(1.0))
}

/// `J_n(E, x₋, x₊)`.
pub fn action_j(n: i32, energy: f64, x_minus: PlanePoint, x_plus: PlanePoint) -> Result<f64> {
    let c = Chord::new(x_minus, x_plus)?;
    let lambda = -2.0 * energy;
    c.check(lambda)?;
    Ok(c.action_j(n, lambda))
}

/// Time of flight `τ_n = ∂J_n/∂E`, via Lagrange's form of the time equation.
pub fn time_of_flight(n: i32, energy: f64, x_minus: PlanePoint, x_plus: PlanePoint) -> Result<f64> {
    let c = Chord::new(x_minus, x_plus)?;
    let lambda = -2.0 * energy;
    c.check(lambda)?;
    Ok(c.tof(n, lambda))
}

/// `∂τ_n/∂E = ∂²J_n/∂E²`.
pub fn tof_energy_slope(n: i32, energy: f64, x_minus: PlanePoint, x_plus: PlanePoint) -> Result<f64> {
    let c = Chord::new(x_minus, x_plus)?;
    let lambda = -2.0 * energy;
    c.check(lambda)?;
    Ok(-2.0 * c.dtof_dlambda(n, lambda))
}

/// Largest admissible energy bound: arcs exist for `E` in `(−2/s₊, 0)`.
pub fn energy_floor(x_minus: PlanePoint, x_plus: PlanePoint) -> Result<f64> {
    Ok(-0.5 * Chord::new(x_minus, x_plus)?.lambda_max())
}

/// Endpoint momenta of the arc at energy `E` (unit mass, so momenta are velocities).
fn momenta(n: i32, energy: f64, x_minus: PlanePoint, x_plus: PlanePoint, focus: PlanePoint) -> (PlanePoint, PlanePoint) {
    let at = |x: PlanePoint| {
        let speed = (2.0 * (energy + 1.0 / x.norm())).max(0.0).sqrt();
        let normal = (x.normalized() + (x - focus).normalized()).normalized();
        let t = if n >= 0 { normal.perp() } else { -normal.perp() };
        t * speed
    };
    (at(x_minus), at(x_plus))
}

/// Full arc at prescribed energy.
pub fn arc_at_energy(n: i32, energy: f64, x_minus: PlanePoint, x_plus: PlanePoint) -> Result<LambertArc> {
    let c = Chord::new(x_minus, x_plus)?;
    let lambda = -2.0 * energy;
    c.check(lambda)?;
    let focus = second_focus(x_minus * lambda, x_plus * lambda)? / lambda;
    let action_j = c.action_j(n, lambda);
    let tof = c.tof(n, lambda);
    let (y_minus, y_plus) = momenta(n, energy, x_minus, x_plus, focus);
    Ok(LambertArc {
        n,
        energy,
        tof,
        x_minus,
        x_plus,
        second_focus: focus,
        action_j,
        action_f: action_j - tof * energy,
        y_minus,
        y_plus,
    })
}

/// Energy interval of the branch used by [`solve_fixed_time`], and the
/// matching range of flight times.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeBranch {
    pub energy_lo: f64,
    pub energy_hi: f64,
    pub tof_lo: f64,
    pub tof_hi: f64,
    /// `true` if τ decreases with `−2E` along the branch (τ increasing in E).
    pub tof_increasing_in_energy: bool,
}

// First zero of dτ/dλ on (0, λmax), if any.
fn fold(c: &Chord, n: i32) -> Option<f64> {
    let lmax = c.lambda_max();
    // Geometric from the parabolic end, then clustered at the domain edge.
    let mut grid: Vec<f64> = (0..=300).map(|i| lmax * 0.99 * 1e-6f64.powf(1.0 - i as f64 / 300.0)).collect();
    grid.extend((9..=52).map(|k| lmax * (1.0 - 10f64.powf(-(k as f64) / 4.0))));
    let mut prev = (grid[0], c.dtof_dlambda(n, grid[0]));
    for &l in &grid[1..] {
        let d = c.dtof_dlambda(n, l);
        if d.signum() != prev.1.signum() && d.is_finite() && prev.1.is_finite() {
            let (mut a, mut b) = (prev.0, l);
            let sa = prev.1.signum();
            for _ in 0..200 {
                let mid = 0.5 * (a + b);
                if c.dtof_dlambda(n, mid).signum() == sa {
                    a = mid;
                } else {
                    b = mid;
                }
                if b - a <= 4.0 * f64::EPSILON * b {
                    break;
                }
            }
            return Some(0.5 * (a + b));
        }
        prev = (l, d);
    }
    None
}

fn branch_of(c: &Chord, n: i32) -> (f64, TimeBranch) {
    let lmax = c.lambda_max();
    let l_hi = fold(c, n).unwrap_or(lmax);
    let tau_end = c.tof(n, l_hi);
    let increasing_in_e = c.dtof_dlambda(n, 0.5 * l_hi) < 0.0;
    let tau_zero = if n == 0 { c.parabolic_tof() } else { f64::INFINITY };
    let (tof_lo, tof_hi) = if tau_zero <= tau_end { (tau_zero, tau_end) } else { (tau_end, tau_zero) };
    (
        l_hi,
        TimeBranch {
            energy_lo: -0.5 * l_hi,
            energy_hi: 0.0,
            tof_lo,
            tof_hi,
            tof_increasing_in_energy: increasing_in_e,
        },
    )
}

/// Branch on which fixed-time arcs are sought: energies from the parabolic
/// limit `E → 0⁻` down to the first fold of `τ_n(E)` (or the domain edge).
pub fn time_branch(n: i32, x_minus: PlanePoint, x_plus: PlanePoint) -> Result<TimeBranch> {
    Ok(branch_of(&Chord::new(x_minus, x_plus)?, n).1)
}

/// Arc with prescribed flight time `τ`, on the branch described by [`time_branch`].
pub fn solve_fixed_time(n: i32, tau: f64, x_minus: PlanePoint, x_plus: PlanePoint) -> Result<LambertArc> {
    let c = Chord::new(x_minus, x_plus)?;
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidInput(format!("time of flight must be positive, got {tau}")));
    }
    let (l_hi, br) = branch_of(&c, n);
    if !(tau > br.tof_lo && tau < br.tof_hi) {
        return Err(Error::NoSolution {
            reason: format!("time of flight {tau} not attainable with {n} revolutions"),
            lo: br.tof_lo,
            hi: br.tof_hi,
        });
    }
    // Monotone in λ on (0, l_hi): bracket, then safeguarded Newton.
    let sign = if br.tof_increasing_in_energy { -1.0 } else { 1.0 }; // sign of dτ/dλ
    let resid = |l: f64| sign * (c.tof(n, l) - tau);
    let mut hi = l_hi;
    let mut lo = l_hi;
    let mut r_lo = resid(lo);
    let mut shrink = 0;
    while r_lo > 0.0 {
        hi = lo;
        lo *= 0.5;
        r_lo = resid(lo);
        shrink += 1;
        if shrink > 2000 {
            return Err(Error::NoSolution { reason: "failed to bracket flight time".into(), lo: br.tof_lo, hi: br.tof_hi });
        }
    }
    let mut l = 0.5 * (lo + hi);
    for _ in 0..200 {
        let r = resid(l);
        if r.abs() <= 1e-14 * tau {
            break;
        }
        if r < 0.0 {
            lo = l;
        } else {
            hi = l;
        }
        let d = sign * c.dtof_dlambda(n, l);
        let mut next = l - r / d;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - l).abs() <= 2.0 * f64::EPSILON * l {
            l = next;
            break;
        }
        l = next;
    }
    let arc = arc_at_energy(n, -0.5 * l, x_minus, x_plus)?;
    let rel = (arc.tof - tau).abs() / tau;
    if rel > 1e-11 {
        return Err(Error::NonConvergence { iterations: 200, residual: rel, history: vec![] });
    }
    Ok(LambertArc { tof: tau, action_f: arc.action_j - tau * arc.energy, ..arc })
}

/// `(y₋, y₊)` with `y₊ = ∂F_n/∂x₊`, `y₋ = −∂F_n/∂x₋`.
pub fn endpoint_momenta(arc: &LambertArc) -> (PlanePoint, PlanePoint) {
    (arc.y_minus, arc.y_plus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    const P: PlanePoint = PlanePoint::new(1.0, 0.0);
    const Q: PlanePoint = PlanePoint::new(0.0, 1.0);

    #[test]
    fn w_special_values() {
        assert_eq!(lambert_w(0.0).unwrap(), 0.0);
        assert!((lambert_w(4.0).unwrap() - PI).abs() < 1e-15);
        assert!((lambert_w(2.0).unwrap() - (1.0 + FRAC_PI_2)).abs() < 1e-15);
        assert!(lambert_w(4.0 + 1e-9).is_err());
        assert!(lambert_w(-1e-12).is_err());
    }

    #[test]
    fn quarter_circle() {
        assert!((lambert_f(P, Q).unwrap() - FRAC_PI_2).abs() < 1e-14);
        assert!(second_focus(P, Q).unwrap().norm() < 1e-14);
        assert!((time_of_flight(0, -0.5, P, Q).unwrap() - FRAC_PI_2).abs() < 1e-14);
        assert!((time_of_flight(1, -0.5, P, Q).unwrap() - 2.5 * PI).abs() < 1e-13);
        assert!((action_j(-1, -0.5, P, Q).unwrap() - 1.5 * PI).abs() < 1e-14);
        let arc = arc_at_energy(0, -0.5, P, Q).unwrap();
        assert!((arc.y_minus - Q).norm() < 1e-14 && (arc.y_plus + P).norm() < 1e-14);
    }

    #[test]
    fn lagrange_series_matches_direct() {
        for &s in &[1e-3f64, 0.01, 0.03, 0.039] {
            let a = 2.0 * (s.sqrt()).atan2((4.0 - s).sqrt());
            assert!((lagrange_t(s) - (a - a.sin())).abs() < 1e-15);
        }
    }

    #[test]
    fn parabolic_limit() {
        let c = Chord::new(P, PlanePoint::new(-0.3, 1.2)).unwrap();
        let tp = c.parabolic_tof();
        assert!((c.tof(0, 1e-9) - tp).abs() < 1e-8 * tp);
    }

    #[test]
    fn fixed_time_roundtrip() {
        let a = solve_fixed_time(0, FRAC_PI_2, P, Q).unwrap();
        assert!((a.energy + 0.5).abs() < 1e-13);
        assert!((a.action_f - 0.75 * PI).abs() < 1e-12);
        let b = solve_fixed_time(1, 2.5 * PI, P, Q).unwrap();
        assert!((b.energy + 0.5).abs() < 1e-12);
        let e = solve_fixed_time(-1, 1.5 * PI, P, Q).unwrap();
        assert!((e.energy + 0.5).abs() < 1e-12);
    }

    #[test]
    fn unattainable_time_reports_range() {
        match solve_fixed_time(0, 100.0, P, Q) {
            Err(Error::NoSolution { lo, hi, .. }) => assert!(lo < hi && hi < 100.0),
            other => panic!("{other:?}"),
        }
    }
}
