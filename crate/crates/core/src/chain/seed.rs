use std::f64::consts::{PI, TAU};

use log::debug;
use nalgebra::{DMatrix, DVector};

use super::CollisionChain;
use crate::collision::MassParams;
use crate::error::{Error, Result};
use crate::kepler::{propagate_kepler, solve_fixed_time, KeplerState};
use crate::plane::PlanePoint;

/// The counterclockwise Kepler ellipse of energy `E` and angular momentum `G`,
/// pericenter on the positive real axis at `t = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RestrictedEllipse {
    pub energy: f64,
    pub angular_momentum: f64,
    pub semimajor_axis: f64,
    pub eccentricity: f64,
    pub period: f64,
    pericenter: KeplerState,
}

impl RestrictedEllipse {
    pub fn new(energy: f64, angular_momentum: f64) -> Result<Self> {
        let lg2 = -2.0 * energy * angular_momentum * angular_momentum;
        if !(energy < 0.0 && angular_momentum > 0.0 && lg2 < 1.0) {
            return Err(Error::InvalidInput(format!(
                "need E < 0, G > 0 and (−2E)G² < 1; got E = {energy}, G = {angular_momentum}"
            )));
        }
        let a = -0.5 / energy;
        // Kepler: G² = a(1 − e²).
        let e = (1.0 + 2.0 * energy * angular_momentum * angular_momentum).sqrt();
        let rp = a * (1.0 - e);
        let vp = angular_momentum / rp;
        Ok(Self {
            energy,
            angular_momentum,
            semimajor_axis: a,
            eccentricity: e,
            period: TAU * a.powf(1.5),
            pericenter: KeplerState::new(PlanePoint::new(rp, 0.0), PlanePoint::new(0.0, vp)),
        })
    }

    pub fn state(&self, t: f64) -> Result<KeplerState> {
        propagate_kepler(self.pericenter, t)
    }

    /// Maupertuis action over one revolution, `2π(−2E)^{-1/2}`.
    pub fn maupertuis_action(&self) -> f64 {
        TAU / (-2.0 * self.energy).sqrt()
    }

    /// Counterclockwise angle swept between times `t0 < t1`, reduced mod 2π,
    /// and the number of full revolutions.
    fn sweep(&self, t0: f64, t1: f64) -> Result<(i32, f64)> {
        let dt = t1 - t0;
        let laps = (dt / self.period).floor();
        let a = self.state(t0)?.position;
        let b = self.state(t1)?.position;
        let ang = a.cross(b).atan2(a.dot(b)).rem_euclid(TAU);
        Ok((laps as i32, ang))
    }
}

/// Restricted-limit residuals `g_j` for collision times `t_0..t_{n−1}` (with
/// `t_n = t_0 + mτ`): stationarity of `Σ F_{k₁}(t_{j+1}−t_j, Γ(t_j), Γ(t_{j+1}))`.
pub fn restricted_residual(ell: &RestrictedEllipse, total: f64, k1: &[i32], t: &[f64]) -> Result<Vec<f64>> {
    let n = t.len();
    let times: Vec<f64> = (0..=n).map(|j| if j < n { t[j] } else { t[0] + total }).collect();
    let states: Vec<KeplerState> = times.iter().map(|&s| ell.state(s)).collect::<Result<_>>()?;
    let mut arcs = Vec::with_capacity(n);
    for j in 0..n {
        let dt = times[j + 1] - times[j];
        if !(dt > 0.0) {
            return Err(Error::Domain("collision times out of order".into()));
        }
        arcs.push(solve_fixed_time(k1[j], dt, states[j].position, states[j + 1].position)?);
    }
    Ok((0..n)
        .map(|j| {
            let prev = &arcs[(j + n - 1) % n];
            let cur = &arcs[j];
            (cur.energy - prev.energy) - (cur.y_minus - prev.y_plus).dot(states[j].velocity)
        })
        .collect())
}

fn residual_jacobian(ell: &RestrictedEllipse, total: f64, k1: &[i32], t: &[f64]) -> Result<DMatrix<f64>> {
    let n = t.len();
    let h = 1e-6 * ell.period;
    let mut jac = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut tp = t.to_vec();
        tp[i] += h;
        let mut tm = t.to_vec();
        tm[i] -= h;
        let rp = restricted_residual(ell, total, k1, &tp)?;
        let rm = restricted_residual(ell, total, k1, &tm)?;
        for row in 0..n {
            jac[(row, i)] = (rp[row] - rm[row]) / (2.0 * h);
        }
    }
    Ok(jac)
}

/// Collision times of a critical point of the restricted-limit functional,
/// found by Levenberg–Marquardt from the given times. The landscape is very
/// flat near equal spacing, where plain Newton tends to wander off.
pub fn restricted_collision_times(ell: &RestrictedEllipse, m: u32, k1: &[i32], start: &[f64]) -> Result<Vec<f64>> {
    let n = k1.len();
    if start.len() != n {
        return Err(Error::InvalidInput("one start time per collision".into()));
    }
    let total = m as f64 * ell.period;
    let mut t = start.to_vec();
    let mut r = DVector::from_vec(restricted_residual(ell, total, k1, &t)?);
    let mut lambda = 1e-3;
    let mut history = Vec::new();
    for it in 0..200 {
        let norm = r.norm();
        history.push(norm);
        debug!("restricted LM {it}: |g| = {norm:e}");
        if norm < 1e-13 {
            return Ok(t);
        }
        let jac = residual_jacobian(ell, total, k1, &t)?;
        let jt = jac.transpose();
        let normal = &jt * &jac;
        let grad = &jt * &r;
        let scale = normal.diagonal().max().max(f64::MIN_POSITIVE);
        let mut improved = false;
        for _ in 0..25 {
            let damped = &normal + DMatrix::identity(n, n) * (lambda * scale);
            if let Some(dt) = damped.lu().solve(&(-&grad)) {
                let cand: Vec<f64> = t.iter().zip(dt.iter()).map(|(a, b)| a + b).collect();
                if let Ok(rc) = restricted_residual(ell, total, k1, &cand) {
                    let rc = DVector::from_vec(rc);
                    if rc.norm() < norm {
                        t = cand;
                        r = rc;
                        lambda = (lambda * 0.3).max(1e-12);
                        improved = true;
                        break;
                    }
                }
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    let residual = r.norm();
    if residual < 1e-11 {
        return Ok(t);
    }
    Err(Error::NonConvergence { iterations: history.len(), residual, history })
}

/// Deterministic starting guesses: a few phases of the first collision and
/// perturbations of equal spacing.
fn start_guesses(period: f64, total: f64, n: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    let phases = 6;
    for shift in [0.0, 1.0, -1.0, 2.0, -2.0] {
        for p in 0..phases {
            let t0 = period * p as f64 / phases as f64;
            out.push(
                (0..n)
                    .map(|j| t0 + j as f64 * total / n as f64 + if j % 2 == 1 { shift * 0.1 * period } else { 0.0 })
                    .collect(),
            );
        }
    }
    out
}

/// Initial chain for the fixed-`E,G` functional from a collision chain of the
/// restricted elliptic limit: body 2 follows the ellipse Γ, body 1 the given
/// rotation pattern, with `n` collisions in total time `mτ`.
pub fn seed_from_restricted_limit(energy: f64, g: f64, m: u32, n: usize, k1_pattern: &[i32], alpha1: f64) -> Result<CollisionChain> {
    if n == 0 || m == 0 {
        return Err(Error::InvalidInput("need at least one collision and one revolution".into()));
    }
    if k1_pattern.is_empty() {
        return Err(Error::InvalidInput("empty rotation pattern".into()));
    }
    let masses = MassParams::new(alpha1, 0.0)?;
    let ell = RestrictedEllipse::new(energy, g)?;
    let k1: Vec<i32> = (0..n).map(|j| k1_pattern[j % k1_pattern.len()]).collect();
    let total = m as f64 * ell.period;
    let mut last_err = Error::NonConvergence { iterations: 0, residual: f64::INFINITY, history: vec![] };
    for start in start_guesses(ell.period, total, n) {
        let attempt = restricted_collision_times(&ell, m, &k1, &start)
            .and_then(|t| chain_from_times(&ell, m, &k1, &t, energy, g, masses));
        match attempt {
            Ok(chain) => return Ok(chain),
            Err(e) => {
                debug!("restricted seed start rejected: {e}");
                last_err = e;
            }
        }
    }
    Err(last_err)
}

fn chain_from_times(
    ell: &RestrictedEllipse,
    m: u32,
    k1: &[i32],
    t: &[f64],
    energy: f64,
    g: f64,
    masses: MassParams,
) -> Result<CollisionChain> {
    let n = t.len();
    let total = m as f64 * ell.period;
    let mut k = Vec::with_capacity(n);
    let mut s = Vec::with_capacity(n);
    let mut x = Vec::with_capacity(n);
    for j in 0..n {
        let t0 = t[j];
        let t1 = if j + 1 < n { t[j + 1] } else { t[0] + total };
        let (laps, ang) = ell.sweep(t0, t1)?;
        if ang >= PI {
            return Err(Error::Domain(format!(
                "segment {j} sweeps {ang:.3} rad of the ellipse beyond its full turns; only arcs whose second focus lies left of the chord are representable"
            )));
        }
        let p0 = ell.state(t0)?.position;
        let p1 = ell.state(t1)?.position;
        let body2 = solve_fixed_time(laps, t1 - t0, p0, p1)?;
        if (body2.energy - energy).abs() > 1e-8 * energy.abs() {
            return Err(Error::Domain(format!(
                "segment {j}: the fixed-time arc with {laps} revolutions is not the ellipse (energy {} vs {energy})",
                body2.energy
            )));
        }
        k.push((k1[j], laps));
        s.push(t1 - t0);
        x.push(p0);
    }
    let chain = CollisionChain { k, s, x, phi: 0.0, energy, angular_momentum: Some(g), masses };
    chain.validate()?;
    Ok(chain)
}
