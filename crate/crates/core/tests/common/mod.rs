//! Independent numerical oracles shared by the integration tests.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use second_species::plane::PlanePoint;

const GK_X: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const GK_WK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const GK_WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = GK_WK[7] * fc;
    let mut g = GK_WG[3] * fc;
    for i in 0..7 {
        let d = h * GK_X[i];
        let s = f(c - d) + f(c + d);
        k += GK_WK[i] * s;
        if i % 2 == 1 {
            g += GK_WG[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Adaptive Gauss–Kronrod quadrature to absolute tolerance `tol`.
pub fn quad<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        let (v, e) = gk15(f, a, b);
        if e <= tol || depth > 40 {
            return v;
        }
        let m = 0.5 * (a + b);
        rec(f, a, m, 0.5 * tol, depth + 1) + rec(f, m, b, 0.5 * tol, depth + 1)
    }
    rec(&f, a, b, tol, 0)
}

/// Maupertuis action and time along the Kepler ellipse with foci `0` and
/// `focus`, semimajor axis `a = −1/(2E)`, from `x₋` to `x₊`, making `n` extra
/// counterclockwise laps (clockwise and `|n|` laps short of a full turn for `n < 0`),
/// by quadrature over the eccentric anomaly.
pub fn ellipse_action_and_time(n: i32, energy: f64, x_minus: PlanePoint, x_plus: PlanePoint, focus: PlanePoint) -> (f64, f64) {
    let a = -0.5 / energy;
    let e = focus.norm() / (2.0 * a);
    let b = a * (1.0 - e * e).sqrt();
    let u = if focus.norm() > 0.0 { -focus / focus.norm() } else { PlanePoint::new(1.0, 0.0) };
    let v = u.perp();
    let center = focus * 0.5;
    let anomaly = |x: PlanePoint| {
        let d = x - center;
        (d.dot(v) / b).atan2(d.dot(u) / a)
    };
    let e0 = anomaly(x_minus);
    let mut e1 = anomaly(x_plus);
    while e1 <= e0 {
        e1 += std::f64::consts::TAU;
    }
    let (lo, hi) = if n >= 0 {
        (e0, e1 + std::f64::consts::TAU * n as f64)
    } else {
        (e1 - std::f64::consts::TAU * (-n) as f64, e0)
    };
    let point = |t: f64| center + u * (a * t.cos()) + v * (b * t.sin());
    let speed_ds = |t: f64| {
        let dx = u * (-a * t.sin()) + v * (b * t.cos());
        let r = point(t).norm();
        let vel = (2.0 * (energy + 1.0 / r)).sqrt();
        (vel, dx.norm())
    };
    let action = quad(|t| { let (s, ds) = speed_ds(t); s * ds }, lo, hi, 1e-13);
    let time = quad(|t| { let (s, ds) = speed_ds(t); ds / s }, lo, hi, 1e-13);
    (action, time)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Whether `(x₋, x₊)` lies in the unit-semimajor admissible set, with a margin.
pub fn in_domain(x_minus: PlanePoint, x_plus: PlanePoint, margin: f64) -> bool {
    let r1 = x_minus.norm();
    let r2 = x_plus.norm();
    let d = (x_plus - x_minus).norm();
    (r2 - r1).abs() + margin < d && d < 4.0 - r1 - r2 - margin
}

/// Random endpoint pair in the admissible set for `E = −1/2`.
pub fn random_pair<R: Rng>(rng: &mut R, margin: f64) -> (PlanePoint, PlanePoint) {
    loop {
        let p = PlanePoint::from_polar(rng.random_range(0.05..1.9), rng.random_range(0.0..std::f64::consts::TAU));
        let q = PlanePoint::from_polar(rng.random_range(0.05..1.9), rng.random_range(0.0..std::f64::consts::TAU));
        if in_domain(p, q, margin) {
            return (p, q);
        }
    }
}

/// Central difference of a scalar function.
pub fn central<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// Richardson-extrapolated central-difference Jacobian of an `R⁸ → R⁸` map.
pub fn fd_jacobian<F: Fn(&[f64; 8]) -> [f64; 8]>(f: F, z: &[f64; 8], h: f64) -> [[f64; 8]; 8] {
    let diff = |j: usize, h: f64| {
        let (mut a, mut b) = (*z, *z);
        a[j] += h;
        b[j] -= h;
        let (fa, fb) = (f(&a), f(&b));
        std::array::from_fn::<f64, 8, _>(|i| (fa[i] - fb[i]) / (2.0 * h))
    };
    let mut jac = [[0.0; 8]; 8];
    for j in 0..8 {
        let (d1, d2) = (diff(j, h), diff(j, 0.5 * h));
        for i in 0..8 {
            jac[i][j] = (4.0 * d2[i] - d1[i]) / 3.0;
        }
    }
    jac
}

/// `max |JᵀΩJ − Ω|` for coordinates ordered `(q₁..q₄, p₁..p₄)`.
pub fn symplectic_defect(j: &[[f64; 8]; 8]) -> f64 {
    let omega = |a: usize, b: usize| match (a < 4, b < 4) {
        (true, false) if b == a + 4 => 1.0,
        (false, true) if a == b + 4 => -1.0,
        _ => 0.0,
    };
    let mut worst: f64 = 0.0;
    for a in 0..8 {
        for b in 0..8 {
            let mut s = 0.0;
            for k in 0..4 {
                s += j[k][a] * j[k + 4][b] - j[k + 4][a] * j[k][b];
            }
            worst = worst.max((s - omega(a, b)).abs());
        }
    }
    worst
}
