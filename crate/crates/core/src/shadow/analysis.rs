use log::warn;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{cyclic_monodromy, monodromy, ShadowOrbit, ShootingOptions};
use crate::chain::{segments, CollisionChain};
use crate::error::Result;
use crate::kepler::{propagate_kepler, KeplerState};
use crate::plane::PlanePoint;

/// The eight multipliers sorted into the unit quadruple and two reciprocal pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiplierSet {
    pub all: Vec<[f64; 2]>,
    pub unit: Vec<[f64; 2]>,
    pub lambda1: [f64; 2],
    pub lambda1_inv: [f64; 2],
    pub lambda2: [f64; 2],
    pub lambda2_inv: [f64; 2],
    /// `‖M‖·‖M⁻¹‖` in the spectral norm.
    pub condition: f64,
    pub max_unit_deviation: f64,
    /// `max |λλ' − 1|` over the two nontrivial pairs.
    pub reciprocity_error: f64,
}

/// Multipliers of the orbit. Eigenvalues `ν` of the block-cyclic factor
/// matrix satisfy `ν^{2n} = λ`; one root per multiplier is kept, the one
/// closest to the positive real axis.
pub fn compute_multipliers(orbit: &ShadowOrbit, opts: &ShootingOptions) -> Result<Vec<Complex64>> {
    let z = cyclic_monodromy(orbit, opts)?;
    let k = (z.nrows() / 8) as i32;
    let mut roots: Vec<Complex64> = z.complex_eigenvalues().iter().copied().collect();
    roots.sort_by(|a, b| a.arg().abs().total_cmp(&b.arg().abs()));
    let mut eig: Vec<Complex64> = roots[..8].iter().map(|nu| nu.powi(k)).collect();
    eig.sort_by(|a, b| a.norm().total_cmp(&b.norm()).then(a.im.total_cmp(&b.im)));
    let set = classify_multipliers(&eig, monodromy_condition(orbit, opts)?);
    if set.max_unit_deviation > 1e-5 * set.condition {
        warn!("unit multipliers off by {:.2e} (condition {:.2e})", set.max_unit_deviation, set.condition);
    }
    Ok(eig)
}

/// `‖M‖·‖M⁻¹‖`; the map is symplectic, so `‖M⁻¹‖ = ‖M‖` and the smallest
/// singular value of the computed product (lost to rounding) is not needed.
fn condition_number(m: &super::Mat8) -> f64 {
    m.singular_values().max().powi(2)
}

/// Condition number of the monodromy of `orbit`.
pub fn monodromy_condition(orbit: &ShadowOrbit, opts: &ShootingOptions) -> Result<f64> {
    Ok(condition_number(&monodromy(orbit, opts)?))
}

/// Pick the four multipliers closest to 1; of the rest, `λ₁` is the largest
/// in modulus and `λ₂` the member of the remaining pair outside (or, on the
/// unit circle, above) the real axis.
pub fn classify_multipliers(eig: &[Complex64], condition: f64) -> MultiplierSet {
    let one = Complex64::new(1.0, 0.0);
    let mut idx: Vec<usize> = (0..eig.len()).collect();
    idx.sort_by(|&a, &b| (eig[a] - one).norm().total_cmp(&(eig[b] - one).norm()));
    let unit: Vec<Complex64> = idx[..4.min(idx.len())].iter().map(|&i| eig[i]).collect();
    let mut rest: Vec<Complex64> = idx[4.min(idx.len())..].iter().map(|&i| eig[i]).collect();
    rest.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
    let pair = |l: Complex64, rest: &mut Vec<Complex64>| -> Complex64 {
        let inv = one / l;
        let k = (0..rest.len()).min_by(|&a, &b| (rest[a] - inv).norm().total_cmp(&(rest[b] - inv).norm())).unwrap();
        rest.remove(k)
    };
    let (mut l1, mut l1i, mut l2, mut l2i) = (Complex64::new(f64::NAN, 0.0), one, one, one);
    if rest.len() == 4 {
        l1 = rest.remove(0);
        l1i = pair(l1, &mut rest);
        let (a, b) = (rest[0], rest[1]);
        let a_first = if (a.norm() - b.norm()).abs() > 1e-9 { a.norm() > b.norm() } else { a.im >= b.im };
        (l2, l2i) = if a_first { (a, b) } else { (b, a) };
    }
    let c = |z: Complex64| [z.re, z.im];
    MultiplierSet {
        all: eig.iter().map(|&z| c(z)).collect(),
        unit: unit.iter().map(|&z| c(z)).collect(),
        lambda1: c(l1),
        lambda1_inv: c(l1i),
        lambda2: c(l2),
        lambda2_inv: c(l2i),
        condition,
        max_unit_deviation: unit.iter().map(|z| (z - one).norm()).fold(0.0, f64::max),
        reciprocity_error: (l1 * l1i - one).norm().max((l2 * l2i - one).norm()),
    }
}

/// The unperturbed chain as a function of time, collision 0 at `t = 0`,
/// continued periodically modulo the rotation `e^{iΦ}`.
#[derive(Debug, Clone)]
pub struct ChainPath {
    starts: Vec<(f64, [KeplerState; 2])>,
    period: f64,
    phi: f64,
}

impl ChainPath {
    pub fn new(chain: &CollisionChain) -> Result<Self> {
        let segs = segments(chain)?;
        let mut t = 0.0;
        let mut starts = Vec::with_capacity(segs.len());
        for seg in &segs {
            let b = |i: usize| KeplerState::new(seg.x_minus, seg.arcs[i].y_minus);
            starts.push((t, [b(0), b(1)]));
            t += seg.tof;
        }
        Ok(Self { starts, period: t, phi: chain.phi })
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    /// Positions `(q₁, q₂)` at time `t`.
    pub fn positions(&self, t: f64) -> Result<(PlanePoint, PlanePoint)> {
        let laps = (t / self.period).floor();
        let tt = t - laps * self.period;
        let j = self.starts.partition_point(|(s, _)| *s <= tt).saturating_sub(1);
        let (t0, b) = &self.starts[j];
        let rot = laps * self.phi;
        let q1 = propagate_kepler(b[0], tt - t0)?.position.rotate(rot);
        let q2 = propagate_kepler(b[1], tt - t0)?.position.rotate(rot);
        Ok((q1, q2))
    }
}

/// Largest configuration distance between the orbit samples at `t` and the
/// chain (rotated by `theta`) at `t + shift`.
fn sup_distance(orbit: &ShadowOrbit, path: &ChainPath, shift: f64, theta: f64, stride: usize) -> Result<f64> {
    let mut sup: f64 = 0.0;
    for s in orbit.samples.iter().step_by(stride.max(1)) {
        let (c1, c2) = path.positions(s.t + shift)?;
        let d = ((s.state.q1 - c1.rotate(theta)).norm_sqr() + (s.state.q2 - c2.rotate(theta)).norm_sqr()).sqrt();
        sup = sup.max(d);
    }
    Ok(sup)
}

fn golden_min<F: FnMut(f64) -> Result<f64>>(mut f: F, mut a: f64, mut b: f64, iters: usize) -> Result<(f64, f64)> {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    for _ in 0..iters {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc < fd { (c, fc) } else { (d, fd) })
}

/// Per-`μ` row of the sweep table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShadowRow {
    pub mu: f64,
    #[serde(rename = "T_mu")]
    pub t_mu: f64,
    #[serde(rename = "Phi_mu")]
    pub phi_mu: f64,
    pub sup_dist: f64,
    pub min_delta: f64,
    pub lambda1: f64,
    pub lambda2_re: f64,
    pub lambda2_im: f64,
    pub residual: f64,
}

/// Checks of one orbit against its chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShadowReport {
    pub row: ShadowRow,
    pub chain_period: f64,
    pub period_defect: f64,
    pub time_shift: f64,
    pub rotation: f64,
    /// Closest approach at each collision divided by `μ`.
    pub min_delta_over_mu: Vec<f64>,
    pub max_energy_drift: f64,
    pub max_angular_momentum_drift: f64,
    pub multipliers: MultiplierSet,
}

/// Sup distance after the best time shift and rotation, closest approaches,
/// and the classified multipliers.
pub fn verify_shadowing(orbit: &ShadowOrbit, chain: &CollisionChain, opts: &ShootingOptions) -> Result<ShadowReport> {
    let path = ChainPath::new(chain)?;
    let coarse = (orbit.samples.len() / 2000).max(1);
    let window = 20.0 * orbit.mu.max((orbit.period - path.period()).abs());
    let (mut shift, mut theta) = (0.0, 0.0);
    for _ in 0..2 {
        shift = golden_min(|s| sup_distance(orbit, &path, s, theta, coarse), shift - window, shift + window, 50)?.0;
        theta = golden_min(|a| sup_distance(orbit, &path, shift, a, coarse), theta - window, theta + window, 50)?.0;
    }
    let sup = sup_distance(orbit, &path, shift, theta, 1)?;
    let eig: Vec<Complex64> = orbit.multipliers.iter().map(|z| Complex64::new(z[0], z[1])).collect();
    let eig = if eig.len() == 8 { eig } else { compute_multipliers(orbit, opts)? };
    let multipliers = classify_multipliers(&eig, monodromy_condition(orbit, opts)?);
    Ok(ShadowReport {
        row: ShadowRow {
            mu: orbit.mu,
            t_mu: orbit.period,
            phi_mu: orbit.phase,
            sup_dist: sup,
            min_delta: orbit.min_delta_distance,
            lambda1: multipliers.lambda1[0],
            lambda2_re: multipliers.lambda2[0],
            lambda2_im: multipliers.lambda2[1],
            residual: orbit.closure_residual,
        },
        chain_period: path.period(),
        period_defect: orbit.period - path.period(),
        time_shift: shift,
        rotation: theta,
        min_delta_over_mu: orbit.collision_distances.iter().map(|d| d / orbit.mu).collect(),
        max_energy_drift: orbit.max_energy_drift,
        max_angular_momentum_drift: orbit.max_angular_momentum_drift,
        multipliers,
    })
}

/// Least-squares line `y = a x + b`; returns `(a, b, rms residual)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let a = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let b = my - a * mx;
    let rms = (x.iter().zip(y).map(|(u, v)| (v - a * u - b).powi(2)).sum::<f64>() / n).sqrt();
    (a, b, rms)
}

/// Sweep-level fits over several `μ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub rows: Vec<ShadowRow>,
    pub chain_period: f64,
    pub slope_tolerance: f64,
    pub slope_sup_dist: f64,
    pub slope_period_defect: f64,
    /// Slope of `ln(sup_dist / |ln μ|)`: 1 when the deviation is `O(μ|ln μ|)`.
    pub slope_sup_dist_over_log: f64,
    /// Range `[a, b]` of closest approach / `μ` over all collisions and `μ`.
    pub min_delta_a: f64,
    pub min_delta_b: f64,
    pub lambda1_fit: [f64; 2],
    pub lambda1_fit_rms: f64,
    pub lambda1_const_rms: f64,
    pub lambda1_increasing: bool,
    /// Slope of `ln λ₁` against `|ln μ|`.
    pub log_lambda1_slope: f64,
    /// `|λ₂(μ_{k+1}) − λ₂(μ_k)|` in order of decreasing `μ`.
    pub lambda2_differences: Vec<f64>,
    pub max_unit_deviation: f64,
    /// Smallest `1e−5·cond` over the sweep.
    pub unit_tolerance: f64,
    pub max_reciprocity_error: f64,
    pub max_residual: f64,
    pub max_energy_drift: f64,
    pub max_angular_momentum_drift: f64,
}

impl SweepSummary {
    pub fn new(reports: &[ShadowReport]) -> Self {
        let mut reports: Vec<&ShadowReport> = reports.iter().collect();
        reports.sort_by(|a, b| b.row.mu.total_cmp(&a.row.mu));
        let lmu: Vec<f64> = reports.iter().map(|r| r.row.mu.ln()).collect();
        let slope = |v: Vec<f64>| if v.len() >= 2 { linear_fit(&lmu, &v).0 } else { f64::NAN };
        let slope_sup_dist = slope(reports.iter().map(|r| r.row.sup_dist.ln()).collect());
        let slope_period_defect = slope(reports.iter().map(|r| r.period_defect.abs().ln()).collect());
        let slope_sup_dist_over_log = slope(reports.iter().map(|r| (r.row.sup_dist / r.row.mu.ln().abs()).ln()).collect());
        let ratios: Vec<f64> = reports.iter().flat_map(|r| r.min_delta_over_mu.iter().copied()).collect();
        let l1: Vec<f64> = reports.iter().map(|r| r.row.lambda1).collect();
        let abs_ln: Vec<f64> = lmu.iter().map(|v| v.abs()).collect();
        let (c1, c2, fit_rms) = linear_fit(&abs_ln, &l1);
        let mean = l1.iter().sum::<f64>() / l1.len().max(1) as f64;
        let const_rms = (l1.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / l1.len().max(1) as f64).sqrt();
        let log_lambda1_slope = if l1.len() >= 2 { linear_fit(&abs_ln, &l1.iter().map(|v| v.ln()).collect::<Vec<_>>()).0 } else { f64::NAN };
        let l2: Vec<Complex64> = reports.iter().map(|r| Complex64::new(r.row.lambda2_re, r.row.lambda2_im)).collect();
        Self {
            rows: reports.iter().map(|r| r.row.clone()).collect(),
            chain_period: reports.first().map_or(f64::NAN, |r| r.chain_period),
            slope_tolerance: 0.15,
            slope_sup_dist,
            slope_period_defect,
            slope_sup_dist_over_log,
            min_delta_a: ratios.iter().copied().fold(f64::INFINITY, f64::min),
            min_delta_b: ratios.iter().copied().fold(0.0, f64::max),
            lambda1_fit: [c1, c2],
            lambda1_fit_rms: fit_rms,
            lambda1_const_rms: const_rms,
            lambda1_increasing: l1.windows(2).all(|w| w[1] > w[0]),
            log_lambda1_slope,
            lambda2_differences: l2.windows(2).map(|w| (w[1] - w[0]).norm()).collect(),
            max_unit_deviation: reports.iter().map(|r| r.multipliers.max_unit_deviation).fold(0.0, f64::max),
            unit_tolerance: reports.iter().map(|r| 1e-5 * r.multipliers.condition).fold(f64::INFINITY, f64::min),
            max_reciprocity_error: reports.iter().map(|r| r.multipliers.reciprocity_error).fold(0.0, f64::max),
            max_residual: reports.iter().map(|r| r.row.residual).fold(0.0, f64::max),
            max_energy_drift: reports.iter().map(|r| r.max_energy_drift).fold(0.0, f64::max),
            max_angular_momentum_drift: reports.iter().map(|r| r.max_angular_momentum_drift).fold(0.0, f64::max),
        }
    }

    pub fn slopes_within_tolerance(&self) -> bool {
        (self.slope_sup_dist - 1.0).abs() <= self.slope_tolerance && (self.slope_period_defect - 1.0).abs() <= self.slope_tolerance
    }

    pub fn min_delta_ratio_bounded(&self) -> bool {
        self.min_delta_a > 0.0 && self.min_delta_b / self.min_delta_a <= 10.0
    }

    pub fn units_within_tolerance(&self) -> bool {
        self.max_unit_deviation <= self.unit_tolerance
    }

    pub fn lambda1_log_fit_better(&self) -> bool {
        self.lambda1_fit_rms < self.lambda1_const_rms
    }

    pub fn lambda2_cauchy(&self) -> bool {
        self.lambda2_differences.windows(2).all(|w| w[1] < w[0])
    }

    /// Rows as CSV with the JSON field names.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("mu,T_mu,Phi_mu,sup_dist,min_delta,lambda1,lambda2_re,lambda2_im,residual\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{:e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}\n",
                r.mu, r.t_mu, r.phi_mu, r.sup_dist, r.min_delta, r.lambda1, r.lambda2_re, r.lambda2_im, r.residual
            ));
        }
        s
    }
}

/// Orbit samples as CSV: `t, q1x, q1y, q2x, q2y, p1x, p1y, p2x, p2y, H, G, dist_delta`.
pub fn orbit_csv(orbit: &ShadowOrbit) -> String {
    let mut s = String::from("t,q1x,q1y,q2x,q2y,p1x,p1y,p2x,p2y,H,G,dist_delta\n");
    for p in &orbit.samples {
        let a = p.state.to_array();
        s.push_str(&format!("{:.17e}", p.t));
        for v in a.iter().chain([p.energy, p.angular_momentum, p.dist_delta].iter()) {
            s.push_str(&format!(",{v:.17e}"));
        }
        s.push('\n');
    }
    s
}
