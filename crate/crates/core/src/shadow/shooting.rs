use log::{debug, warn};
use nalgebra::{DMatrix, DVector, SMatrix};
use serde::{Deserialize, Serialize};

use super::{closure_image, compute_multipliers, ShootingProblem};
use crate::collision::MassParams;
use crate::error::{Error, Result};
use crate::flow::{
    from_jacobi, levi_civita_map, regularized_field, regularized_hamiltonian, regularized_variational_field, ChartState, PhaseState,
    RegularizedState,
};
use crate::ode::{Crossing, Dop853, Tolerances};
use crate::plane::PlanePoint;

pub type Mat8 = SMatrix<f64, 8, 8>;

/// Fixed energy only (phase `Φ` taken from the chain), or fixed energy and
/// angular momentum with `Φ` solved for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShadowVariant {
    FixedE,
    FixedEG,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShootingOptions {
    pub max_iterations: usize,
    /// Newton stops once every (scaled) residual is below this.
    pub tol: f64,
    pub rtol: f64,
    pub atol: f64,
    /// Direction-change margin: lifted section points need `ξ₋·ξ₊ ≥ ε²ρ`.
    pub epsilon: f64,
    /// Dense-output points recorded per accepted step of the final trajectory.
    pub samples_per_step: usize,
}

impl Default for ShootingOptions {
    fn default() -> Self {
        Self { max_iterations: 80, tol: 1e-10, rtol: 1e-12, atol: 1e-16, epsilon: 0.1, samples_per_step: 4 }
    }
}

impl ShootingOptions {
    fn tolerances(&self) -> Tolerances {
        Tolerances::new(self.rtol, self.atol)
    }
}

/// Point of the found orbit, in heliocentric coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitSample {
    pub t: f64,
    pub state: PhaseState,
    pub energy: f64,
    pub angular_momentum: f64,
    pub dist_delta: f64,
}

/// Periodic (modulo rotation) orbit of `H_μ` near a collision chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShadowOrbit {
    pub mu: f64,
    pub variant: ShadowVariant,
    pub masses: MassParams,
    pub period: f64,
    pub phase: f64,
    pub energy: f64,
    pub angular_momentum: f64,
    /// Closest-approach states, `physical_time` measured from the first one.
    pub nodes: Vec<RegularizedState>,
    pub legs: Vec<(f64, f64)>,
    pub cover_sign: f64,
    pub samples: Vec<OrbitSample>,
    pub min_delta_distance: f64,
    /// Closest approach at each collision.
    pub collision_distances: Vec<f64>,
    pub sup_shadow_distance: f64,
    pub multipliers: Vec<[f64; 2]>,
    pub closure_residual: f64,
    pub max_energy_drift: f64,
    pub max_angular_momentum_drift: f64,
    pub newton_history: Vec<f64>,
}

/// One integrated leg in the regularized chart.
#[derive(Debug, Clone)]
pub struct LegRun {
    pub end: [f64; 8],
    /// Physical time elapsed (signed).
    pub dt: f64,
    pub stm: Option<Mat8>,
    /// `(physical time from the start, state)` along the leg.
    pub samples: Vec<(f64, [f64; 8])>,
}

/// Flow `start` for fictitious time `tau` (either sign), optionally with the
/// state-transition matrix.
pub fn run_leg(start: &RegularizedState, tau: f64, m: &MassParams, energy: f64, opts: &ShootingOptions, with_stm: bool) -> Result<LegRun> {
    leg_impl(start, tau, m, energy, opts, with_stm, 0)
}

fn leg_impl(start: &RegularizedState, tau: f64, m: &MassParams, energy: f64, opts: &ShootingOptions, with_stm: bool, record: usize) -> Result<LegRun> {
    let dim = if with_stm { 73 } else { 9 };
    let mut y0 = vec![0.0; dim];
    y0[..8].copy_from_slice(&start.to_array());
    if with_stm {
        for i in 0..8 {
            y0[9 + 9 * i] = 1.0;
        }
    }
    let dir = if tau >= 0.0 { 1.0 } else { -1.0 };
    let mut samples = Vec::new();
    if record > 0 {
        samples.push((0.0, start.to_array()));
    }
    if tau != 0.0 {
        let mut st = Dop853::new(
            |_, z: &[f64], out: &mut [f64]| {
                if with_stm {
                    regularized_variational_field(z, m, energy, out)
                } else {
                    regularized_field(z, m, energy, out)
                }
            },
            0.0,
            &y0,
            dir,
            opts.tolerances(),
        )?;
        let mut buf = vec![0.0; dim];
        while (st.t() - tau) * dir < 0.0 {
            st.step(tau)?;
            if record > 0 {
                if let Some((a, b)) = st.last_interval() {
                    for k in 1..=record {
                        let s = a + (b - a) * k as f64 / record as f64;
                        st.dense_eval(s, &mut buf)?;
                        samples.push((buf[8], std::array::from_fn(|i| buf[i])));
                    }
                }
            }
        }
        y0.copy_from_slice(st.y());
    }
    let stm = with_stm.then(|| Mat8::from_fn(|i, j| y0[9 + 8 * i + j]));
    Ok(LegRun { end: std::array::from_fn(|i| y0[i]), dt: y0[8], stm, samples })
}

/// Fictitious time needed for the physical time to change by `dt`.
pub fn time_to_reach(start: &RegularizedState, dt: f64, m: &MassParams, energy: f64, opts: &ShootingOptions) -> Result<(f64, RegularizedState)> {
    let mut y0 = [0.0; 9];
    y0[..8].copy_from_slice(&start.to_array());
    let dir = dt.signum();
    let mut st = Dop853::new(|_, z: &[f64], out: &mut [f64]| regularized_field(z, m, energy, out), 0.0, &y0, dir, opts.tolerances())?;
    let ev = st
        .integrate_until(dir * f64::INFINITY, |_, z| z[8] - dt, Crossing::Either, 1e-14)?
        .ok_or_else(|| Error::Integration("physical time target never reached".into()))?;
    Ok((ev.t.abs(), RegularizedState::from_array(&ev.y, ev.t, start.physical_time + dt)))
}

/// `∇𝓗` from the Hamiltonian field: `f = (∂_y, −∂_x, ∂_η, −∂_ξ)𝓗`.
fn level_gradient(z: &[f64; 8], m: &MassParams, energy: f64) -> [f64; 8] {
    let mut f = [0.0; 9];
    regularized_field(z, m, energy, &mut f);
    [-f[2], -f[3], f[0], f[1], -f[6], -f[7], f[4], f[5]]
}

/// Derivative of the closure map with respect to the state, and to `Φ`.
fn closure_derivatives(z: &RegularizedState, phi: f64, sign: f64) -> (Mat8, [f64; 8]) {
    let mut r = Mat8::zeros();
    let block = |r: &mut Mat8, at: usize, th: f64, s: f64| {
        let (sn, c) = th.sin_cos();
        r[(at, at)] = s * c;
        r[(at, at + 1)] = -s * sn;
        r[(at + 1, at)] = s * sn;
        r[(at + 1, at + 1)] = s * c;
    };
    block(&mut r, 0, phi, 1.0);
    block(&mut r, 2, phi, 1.0);
    block(&mut r, 4, 0.5 * phi, sign);
    block(&mut r, 6, 0.5 * phi, sign);
    let img = closure_image(z, phi, sign);
    let p = |v: PlanePoint, w: f64| v.perp() * w;
    let (dx, dy, dxi, deta) = (p(img.x, 1.0), p(img.y, 1.0), p(img.xi, 0.5), p(img.eta, 0.5));
    (r, [dx.x, dx.y, dy.x, dy.y, dxi.x, dxi.y, deta.x, deta.y])
}

/// The shooting equations: unknowns are the node states, the segment
/// half-durations and (fixed `E,G`) the phase.
pub struct ShootingSystem<'a> {
    p: &'a ShootingProblem,
    variant: ShadowVariant,
    energy: f64,
    g0: f64,
    /// Fixed split of each segment: forward = σ + d, backward = σ − d.
    split: Vec<f64>,
    ca_scale: Vec<f64>,
    level_scale: Vec<f64>,
    opts: ShootingOptions,
}

impl<'a> ShootingSystem<'a> {
    pub fn new(problem: &'a ShootingProblem, variant: ShadowVariant, opts: &ShootingOptions) -> Self {
        Self {
            p: problem,
            variant,
            energy: problem.chain_energy,
            g0: problem.chain_angular_momentum,
            split: problem.legs.iter().map(|(f, b)| 0.5 * (f - b)).collect(),
            ca_scale: problem.nodes.iter().map(|z| 1.0 / (z.xi.norm() * z.eta.norm())).collect(),
            level_scale: problem.nodes.iter().map(|z| 1.0 / z.xi.norm_sqr()).collect(),
            opts: *opts,
        }
    }

    /// Unknowns of the initial guess.
    pub fn initial_unknowns(&self) -> DVector<f64> {
        let sigma: Vec<f64> = self.p.legs.iter().map(|(f, b)| 0.5 * (f + b)).collect();
        self.pack(&self.p.nodes, &sigma, self.p.phase_guess)
    }

    fn n(&self) -> usize {
        self.p.nodes.len()
    }

    pub fn unknowns(&self) -> usize {
        9 * self.n() + usize::from(self.variant == ShadowVariant::FixedEG)
    }

    pub fn equations(&self) -> usize {
        10 * self.n() + 1 + usize::from(self.variant == ShadowVariant::FixedEG)
    }

    fn node(&self, w: &DVector<f64>, j: usize) -> RegularizedState {
        RegularizedState::from_array(&w.as_slice()[8 * j..8 * j + 8], 0.0, 0.0)
    }

    fn phi(&self, w: &DVector<f64>) -> f64 {
        match self.variant {
            ShadowVariant::FixedE => self.p.chain_phi,
            ShadowVariant::FixedEG => w[9 * self.n()],
        }
    }

    fn pack(&self, nodes: &[RegularizedState], sigma: &[f64], phi: f64) -> DVector<f64> {
        let n = self.n();
        let mut w = DVector::zeros(self.unknowns());
        for (j, z) in nodes.iter().enumerate() {
            w.as_mut_slice()[8 * j..8 * j + 8].copy_from_slice(&z.to_array());
        }
        for j in 0..n {
            w[8 * n + j] = sigma[j];
        }
        if self.variant == ShadowVariant::FixedEG {
            w[9 * n] = phi;
        }
        w
    }

    /// Column scales: `ξ`, `η` entries are tiny near collisions.
    fn column_scales(&self, w: &DVector<f64>) -> DVector<f64> {
        let n = self.n();
        let mut d = DVector::from_element(self.unknowns(), 1.0);
        for j in 0..n {
            let z = self.node(w, j);
            for (k, s) in [(4, z.xi.norm()), (6, z.eta.norm())] {
                d[8 * j + k] = s.max(1e-300);
                d[8 * j + k + 1] = s.max(1e-300);
            }
        }
        d
    }

    pub fn evaluate(&self, w: &DVector<f64>, with_jac: bool) -> Result<(DVector<f64>, Option<DMatrix<f64>>)> {
        let n = self.n();
        let m = &self.p.masses;
        let e = self.energy;
        let phi = self.phi(w);
        let sign = self.p.cover_sign;
        let mut r = DVector::zeros(self.equations());
        let mut jac = with_jac.then(|| DMatrix::zeros(self.equations(), self.unknowns()));
        for j in 0..n {
            let zj = self.node(w, j);
            let sigma = w[8 * n + j];
            let (fwd, bwd) = (sigma + self.split[j], sigma - self.split[j]);
            if fwd <= 0.0 || bwd <= 0.0 {
                return Err(Error::NonConvergence { iterations: 0, residual: f64::INFINITY, history: vec![] });
            }
            let target = if j + 1 < n { self.node(w, j + 1) } else { closure_image(&self.node(w, 0), phi, sign) };
            let a = run_leg(&zj, fwd, m, e, &self.opts, with_jac)?;
            let b = run_leg(&target, -bwd, m, e, &self.opts, with_jac)?;
            for i in 0..8 {
                r[8 * j + i] = a.end[i] - b.end[i];
            }
            if let Some(jm) = jac.as_mut() {
                let (sa, sb) = (a.stm.unwrap(), b.stm.unwrap());
                let mut fa = [0.0; 9];
                let mut fb = [0.0; 9];
                regularized_field(&a.end, m, e, &mut fa);
                regularized_field(&b.end, m, e, &mut fb);
                for i in 0..8 {
                    for k in 0..8 {
                        jm[(8 * j + i, 8 * j + k)] += sa[(i, k)];
                    }
                    jm[(8 * j + i, 8 * n + j)] = fa[i] + fb[i];
                }
                if j + 1 < n {
                    for i in 0..8 {
                        for k in 0..8 {
                            jm[(8 * j + i, 8 * (j + 1) + k)] -= sb[(i, k)];
                        }
                    }
                } else {
                    let (rz, rphi) = closure_derivatives(&self.node(w, 0), phi, sign);
                    let sr = sb * rz;
                    for i in 0..8 {
                        for k in 0..8 {
                            jm[(8 * j + i, k)] -= sr[(i, k)];
                        }
                    }
                    if self.variant == ShadowVariant::FixedEG {
                        for i in 0..8 {
                            let d: f64 = (0..8).map(|k| sb[(i, k)] * rphi[k]).sum();
                            jm[(8 * j + i, 9 * n)] = -d;
                        }
                    }
                }
            }
        }
        for j in 0..n {
            let z = self.node(w, j);
            let row = 8 * n + j;
            r[row] = self.ca_scale[j] * z.xi.dot(z.eta);
            if let Some(jm) = jac.as_mut() {
                for k in 0..2 {
                    jm[(row, 8 * j + 4 + k)] = self.ca_scale[j] * z.eta.as_array()[k];
                    jm[(row, 8 * j + 6 + k)] = self.ca_scale[j] * z.xi.as_array()[k];
                }
            }
        }
        // The level is imposed at every node, weighted by 1/|ξ|² so that each
        // row is the energy error H − E there; the flow's small 𝓗 drift then
        // shows up in the matching rows instead of as energy error near Δ.
        for j in 0..n {
            let z = self.node(w, j);
            let row = 9 * n + j;
            let scale = self.level_scale[j];
            r[row] = scale * (regularized_hamiltonian(&z, m, e)? - m.mu * m.alpha);
            if let Some(jm) = jac.as_mut() {
                let g = level_gradient(&z.to_array(), m, e);
                for k in 0..8 {
                    jm[(row, 8 * j + k)] = scale * g[k];
                }
            }
        }
        let z0 = self.node(w, 0);
        let anchor = self.p.anchor;
        let row = 10 * n;
        r[row] = anchor.cross(z0.x);
        if let Some(jm) = jac.as_mut() {
            jm[(row, 0)] = -anchor.y;
            jm[(row, 1)] = anchor.x;
        }
        if self.variant == ShadowVariant::FixedEG {
            let row = 10 * n + 1;
            r[row] = z0.angular_momentum(m) - self.g0;
            if let Some(jm) = jac.as_mut() {
                let a = z0.to_array();
                // G = x×y + ξ×η/2.
                let grad = [a[3], -a[2], -a[1], a[0], 0.5 * a[7], -0.5 * a[6], -0.5 * a[5], 0.5 * a[4]];
                for k in 0..8 {
                    jm[(row, k)] = grad[k];
                }
            }
        }
        Ok((r, jac))
    }
}

/// Least-squares Newton step with column scaling and SVD truncation.
/// Scaled singular value decomposition of the shooting Jacobian, from
/// which Levenberg–Marquardt steps for any damping are cheap.
struct ScaledSvd {
    u_r: DVector<f64>,
    sigma: DVector<f64>,
    v: DMatrix<f64>,
    scales: DVector<f64>,
}

impl ScaledSvd {
    fn new(jac: &DMatrix<f64>, r: &DVector<f64>, scales: &DVector<f64>) -> Result<Self> {
        let mut js = jac.clone();
        for (c, s) in scales.iter().enumerate() {
            js.column_mut(c).scale_mut(*s);
        }
        let svd = js.svd(true, true);
        let u = svd.u.ok_or_else(|| Error::Degenerate("shooting Jacobian SVD failed".into()))?;
        let vt = svd.v_t.ok_or_else(|| Error::Degenerate("shooting Jacobian SVD failed".into()))?;
        Ok(Self { u_r: u.transpose() * r, sigma: svd.singular_values, v: vt.transpose(), scales: scales.clone() })
    }

    /// `argmin ‖J δ + r‖² + λ‖D⁻¹δ‖²`.
    fn step(&self, lambda: f64, cut: f64) -> DVector<f64> {
        let smax = self.sigma.max();
        let mut c = DVector::zeros(self.sigma.len());
        for i in 0..self.sigma.len() {
            let s = self.sigma[i];
            if s > cut * smax {
                c[i] = -s * self.u_r[i] / (s * s + lambda);
            }
        }
        (&self.v * c).component_mul(&self.scales)
    }
}

/// Newton on the multiple-shooting closure map.
pub fn solve_periodic_orbit(problem: &ShootingProblem, variant: ShadowVariant, opts: &ShootingOptions) -> Result<ShadowOrbit> {
    let n = problem.nodes.len();
    let sys = ShootingSystem::new(problem, variant, opts);
    let mut w = sys.initial_unknowns();
    let mut history = Vec::new();
    let (mut r, _) = sys.evaluate(&w, false)?;
    let mut norm = r.amax();
    history.push(norm);
    let mut converged = norm <= opts.tol;
    let mut iterations = 0;
    let mut damping = 0.0;
    while !converged && iterations < opts.max_iterations {
        iterations += 1;
        let (_, jac) = sys.evaluate(&w, true)?;
        let svd = ScaledSvd::new(&jac.unwrap(), &r, &sys.column_scales(&w))?;
        // Levenberg–Marquardt: the near-null directions of the scaled Jacobian
        // (large sensitivity of the near-collision passages) need damped steps.
        let floor = 1e-24 * svd.sigma.max().powi(2);
        let mut accepted = false;
        // Full Gauss–Newton step with backtracking first; the damped steps
        // only when that makes no progress.
        let full = svd.step(0.0, 1e-13);
        let mut frac = 1.0;
        while frac > 1e-4 {
            let trial = &w + &full * frac;
            if let Ok((rt, _)) = sys.evaluate(&trial, false) {
                if rt.norm() < r.norm() {
                    norm = rt.amax();
                    (w, r, accepted) = (trial, rt, true);
                    damping = 0.0;
                    break;
                }
            }
            frac *= 0.5;
        }
        for _ in 0..if accepted { 0 } else { 24 } {
            let trial = &w + svd.step(damping, 1e-15);
            if let Ok((rt, _)) = sys.evaluate(&trial, false) {
                if rt.norm().is_finite() && rt.norm() < r.norm() {
                    norm = rt.amax();
                    (w, r, accepted) = (trial, rt, true);
                    damping = if damping > 10.0 * floor { 0.1 * damping } else { 0.0 };
                    break;
                }
            }
            damping = if damping == 0.0 { floor } else { 10.0 * damping };
        }
        history.push(norm);
        debug!("shooting μ = {:.1e}: iteration {iterations}, residual {norm:.3e}", problem.mu);
        if !accepted {
            break;
        }
        converged = norm <= opts.tol;
    }
    if !converged {
        return Err(Error::NonConvergence { iterations, residual: norm, history });
    }
    let nodes: Vec<RegularizedState> = (0..n).map(|j| sys.node(&w, j)).collect();
    let legs: Vec<(f64, f64)> = (0..n).map(|j| (w[8 * n + j] + sys.split[j], w[8 * n + j] - sys.split[j])).collect();
    let phase = sys.phi(&w);
    let closure_residual = r.rows(0, 8 * n).amax();
    let mut orbit = assemble_orbit(problem, variant, nodes, legs, phase, opts)?;
    orbit.closure_residual = closure_residual;
    orbit.newton_history = history;
    orbit.multipliers = compute_multipliers(&orbit, opts)?.into_iter().map(|c| [c.re, c.im]).collect();
    Ok(orbit)
}

/// Re-integrate the converged legs, recording the trajectory and diagnostics.
fn assemble_orbit(
    problem: &ShootingProblem,
    variant: ShadowVariant,
    mut nodes: Vec<RegularizedState>,
    legs: Vec<(f64, f64)>,
    phase: f64,
    opts: &ShootingOptions,
) -> Result<ShadowOrbit> {
    let m = problem.masses;
    let e = problem.chain_energy;
    let n = nodes.len();
    let g0 = match variant {
        ShadowVariant::FixedEG => problem.chain_angular_momentum,
        ShadowVariant::FixedE => nodes[0].angular_momentum(&m),
    };
    let per = opts.samples_per_step.max(1);
    let mut samples: Vec<OrbitSample> = Vec::new();
    let mut t = 0.0;
    let push = |out: &mut Vec<OrbitSample>, t: f64, a: &[f64; 8]| -> Result<()> {
        let r = RegularizedState::from_array(a, 0.0, t);
        let jac = levi_civita_map(&r, &m)?;
        let state = from_jacobi(&jac, &m);
        out.push(OrbitSample {
            t,
            energy: state.hamiltonian_h(&m)?,
            angular_momentum: r.angular_momentum(&m),
            dist_delta: state.separation(),
            state,
        });
        Ok(())
    };
    for j in 0..n {
        nodes[j].physical_time = t;
        let target = if j + 1 < n { nodes[j + 1] } else { closure_image(&nodes[0], phase, problem.cover_sign) };
        let a = leg_impl(&nodes[j], legs[j].0, &m, e, opts, false, per)?;
        let b = leg_impl(&target, -legs[j].1, &m, e, opts, false, per)?;
        for (dt, z) in &a.samples {
            push(&mut samples, t + dt, z)?;
        }
        let t_next = t + a.dt - b.dt;
        // The backward leg runs from the next node; store it in time order,
        // without repeating the matching point.
        for (dt, z) in b.samples.iter().rev().skip(1) {
            push(&mut samples, t_next + dt, z)?;
        }
        t = t_next;
    }
    let period = t;
    let max_energy_drift = samples.iter().map(|s| (s.energy - e).abs()).fold(0.0, f64::max);
    let max_angular_momentum_drift = samples.iter().map(|s| (s.angular_momentum - g0).abs()).fold(0.0, f64::max);
    let collision_distances: Vec<f64> = nodes.iter().map(|z| z.xi.norm_sqr()).collect();
    let min_delta_distance = samples.iter().map(|s| s.dist_delta).chain(collision_distances.iter().copied()).fold(f64::INFINITY, f64::min);
    if max_energy_drift > 1e-9 || max_angular_momentum_drift > 1e-9 {
        warn!("orbit at μ = {:.1e}: energy drift {max_energy_drift:.2e}, angular momentum drift {max_angular_momentum_drift:.2e}", problem.mu);
    }
    Ok(ShadowOrbit {
        mu: problem.mu,
        variant,
        masses: m,
        period,
        phase,
        energy: e,
        angular_momentum: g0,
        nodes,
        legs,
        cover_sign: problem.cover_sign,
        samples,
        min_delta_distance,
        collision_distances,
        sup_shadow_distance: f64::NAN,
        multipliers: Vec::new(),
        closure_residual: f64::NAN,
        max_energy_drift,
        max_angular_momentum_drift,
        newton_history: Vec::new(),
    })
}

/// Monodromy of the return map `z₀ ↦ R_Φ⁻¹ φ(z₀)` in the regularized chart,
/// assembled from the leg transition matrices.
pub fn monodromy(orbit: &ShadowOrbit, opts: &ShootingOptions) -> Result<Mat8> {
    let m = orbit.masses;
    let n = orbit.nodes.len();
    let mut acc = Mat8::identity();
    for j in 0..n {
        let target = if j + 1 < n { orbit.nodes[j + 1] } else { closure_image(&orbit.nodes[0], orbit.phase, orbit.cover_sign) };
        let a = run_leg(&orbit.nodes[j], orbit.legs[j].0, &m, orbit.energy, opts, true)?;
        let b = run_leg(&target, -orbit.legs[j].1, &m, orbit.energy, opts, true)?;
        let binv = b.stm.unwrap().try_inverse().ok_or_else(|| Error::Degenerate("singular leg transition matrix".into()))?;
        acc = binv * a.stm.unwrap() * acc;
    }
    let (rz, _) = closure_derivatives(&orbit.nodes[0], orbit.phase, orbit.cover_sign);
    let rinv = rz.transpose();
    Ok(rinv * acc)
}

/// Factors of the monodromy arranged as a block-cyclic matrix of size `16n`:
/// forward leg, inverse backward leg, per segment, each rescaled so that `ξ`
/// and `η` are measured relative to their size at the ends of the factor.
/// Its eigenvalues are the `2n`-th roots of the multipliers, which avoids
/// forming the badly scaled product.
pub fn cyclic_monodromy(orbit: &ShadowOrbit, opts: &ShootingOptions) -> Result<DMatrix<f64>> {
    let m = orbit.masses;
    let n = orbit.nodes.len();
    let scale = |z: &[f64]| -> [f64; 8] {
        let a = z[4].hypot(z[5]).max(1e-300);
        let b = z[6].hypot(z[7]).max(1e-300);
        [1.0, 1.0, 1.0, 1.0, a, a, b, b]
    };
    let k = 2 * n;
    let mut z = DMatrix::zeros(8 * k, 8 * k);
    let mut put = |block: usize, f: &Mat8, s_in: &[f64; 8], s_out: &[f64; 8]| {
        let (row, col) = (8 * ((block + 1) % k), 8 * block);
        for i in 0..8 {
            for j in 0..8 {
                z[(row + i, col + j)] = f[(i, j)] * s_in[j] / s_out[i];
            }
        }
    };
    let (rz, _) = closure_derivatives(&orbit.nodes[0], orbit.phase, orbit.cover_sign);
    for j in 0..n {
        let target = if j + 1 < n { orbit.nodes[j + 1] } else { closure_image(&orbit.nodes[0], orbit.phase, orbit.cover_sign) };
        let a = run_leg(&orbit.nodes[j], orbit.legs[j].0, &m, orbit.energy, opts, true)?;
        let b = run_leg(&target, -orbit.legs[j].1, &m, orbit.energy, opts, true)?;
        let mut binv = b.stm.unwrap().try_inverse().ok_or_else(|| Error::Degenerate("singular leg transition matrix".into()))?;
        if j + 1 == n {
            binv = rz.transpose() * binv;
        }
        let s_node = scale(&orbit.nodes[j].to_array());
        let s_mid = scale(&a.end);
        let s_next = scale(&orbit.nodes[(j + 1) % n].to_array());
        put(2 * j, &a.stm.unwrap(), &s_node, &s_mid);
        put(2 * j + 1, &binv, &s_mid, &s_next);
    }
    Ok(z)
}
