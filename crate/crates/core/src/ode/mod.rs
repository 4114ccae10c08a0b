//! Adaptive explicit integration with the Dormand–Prince 8(5,3) pair.
//!
//! The stepper owns its right-hand side and keeps the dense-output polynomial
//! of the last accepted step, which is what event location runs on.

mod tableau;

use crate::error::{Error, Result};
use tableau::*;

/// Step-size control parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    /// Upper bound on `|h|`; `f64::INFINITY` for none.
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { rtol: 1e-12, atol: 1e-14, h_max: f64::INFINITY, max_steps: 1_000_000 }
    }
}

impl Tolerances {
    pub fn new(rtol: f64, atol: f64) -> Self {
        Self { rtol, atol, ..Self::default() }
    }

    pub fn with_h_max(mut self, h_max: f64) -> Self {
        self.h_max = h_max;
        self
    }
}

/// Sign convention for event crossings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Crossing {
    Rising,
    Falling,
    Either,
}

impl Crossing {
    fn accepts(self, g0: f64, g1: f64) -> bool {
        match self {
            Crossing::Rising => g0 < 0.0 && g1 >= 0.0,
            Crossing::Falling => g0 > 0.0 && g1 <= 0.0,
            Crossing::Either => (g0 < 0.0 && g1 >= 0.0) || (g0 > 0.0 && g1 <= 0.0),
        }
    }
}

/// Located root of an event function.
#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub t: f64,
    pub y: Vec<f64>,
}

/// Dense output of the last accepted step.
#[derive(Debug, Clone)]
struct Dense {
    t_old: f64,
    h: f64,
    cont: [Vec<f64>; 8],
}

impl Dense {
    fn eval(&self, t: f64, out: &mut [f64]) {
        let s = (t - self.t_old) / self.h;
        let s1 = 1.0 - s;
        let c = &self.cont;
        for i in 0..out.len() {
            let conpar = c[4][i] + (c[5][i] + (c[6][i] + c[7][i] * s) * s1) * s;
            out[i] = c[0][i] + (c[1][i] + (c[2][i] + (c[3][i] + conpar * s1) * s) * s1) * s;
        }
    }
}

/// Adaptive DOP853 stepper over `y' = f(t, y)`.
pub struct Dop853<F> {
    f: F,
    tol: Tolerances,
    t: f64,
    y: Vec<f64>,
    h: f64,
    k: [Vec<f64>; 13],
    ytmp: Vec<f64>,
    facold: f64,
    last_rejected: bool,
    steps: usize,
    evals: usize,
    dense: Option<Dense>,
}

impl<F> Dop853<F>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    /// `direction` fixes the sign of time steps (non-zero).
    pub fn new(mut f: F, t0: f64, y0: &[f64], direction: f64, tol: Tolerances) -> Result<Self> {
        if !(tol.rtol > 0.0 && tol.atol >= 0.0) {
            return Err(Error::InvalidInput("tolerances must be positive".into()));
        }
        if direction == 0.0 || !direction.is_finite() {
            return Err(Error::InvalidInput("integration direction must be non-zero".into()));
        }
        if y0.iter().any(|v| !v.is_finite()) {
            return Err(Error::Integration("non-finite initial state".into()));
        }
        let n = y0.len();
        let mut k: [Vec<f64>; 13] = std::array::from_fn(|_| vec![0.0; n]);
        f(t0, y0, &mut k[0]);
        let mut s = Self {
            f,
            tol,
            t: t0,
            y: y0.to_vec(),
            h: 0.0,
            k,
            ytmp: vec![0.0; n],
            facold: 1e-4,
            last_rejected: false,
            steps: 0,
            evals: 1,
            dense: None,
        };
        s.h = direction.signum() * s.initial_step();
        Ok(s)
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn evals(&self) -> usize {
        self.evals
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    fn scale(&self, _i: usize, a: f64, b: f64) -> f64 {
        self.tol.atol + self.tol.rtol * a.abs().max(b.abs())
    }

    // Hairer's starting-step heuristic.
    fn initial_step(&mut self) -> f64 {
        let n = self.y.len().max(1) as f64;
        let (mut dnf, mut dny) = (0.0, 0.0);
        for i in 0..self.y.len() {
            let sk = self.scale(i, self.y[i], self.y[i]);
            dnf += (self.k[0][i] / sk).powi(2);
            dny += (self.y[i] / sk).powi(2);
        }
        let mut h = if dnf <= 1e-10 || dny <= 1e-10 { 1e-6 } else { (dny / dnf).sqrt() * 0.01 };
        h = h.min(self.tol.h_max);
        for i in 0..self.y.len() {
            self.ytmp[i] = self.y[i] + h * self.k[0][i];
        }
        let (t, mut f1) = (self.t, vec![0.0; self.y.len()]);
        (self.f)(t + h, &self.ytmp, &mut f1);
        self.evals += 1;
        let mut der2 = 0.0;
        for i in 0..self.y.len() {
            let sk = self.scale(i, self.y[i], self.y[i]);
            der2 += ((f1[i] - self.k[0][i]) / sk).powi(2);
        }
        let der2 = der2.sqrt() / h;
        let der12 = der2.max((dnf / n).sqrt());
        let h1 = if der12 <= 1e-15 { (h * 1e-3).max(1e-6) } else { (0.01 / der12).powf(1.0 / 8.0) };
        (100.0 * h).min(h1).min(self.tol.h_max)
    }

    fn stage(&mut self, dst: usize, c: f64, coeffs: &[(usize, f64)], h: f64) {
        for i in 0..self.y.len() {
            let mut acc = 0.0;
            for &(j, a) in coeffs {
                acc += a * self.k[j][i];
            }
            self.ytmp[i] = self.y[i] + h * acc;
        }
        let t = self.t + c * h;
        (self.f)(t, &self.ytmp, &mut self.k[dst]);
    }

    /// Take one accepted step, never passing `t_bound`.
    pub fn step(&mut self, t_bound: f64) -> Result<()> {
        let n = self.y.len();
        let dir = self.h.signum();
        let mut attempts = 0usize;
        loop {
            if self.steps >= self.tol.max_steps {
                return Err(Error::Integration(format!("step limit {} reached at t = {}", self.tol.max_steps, self.t)));
            }
            attempts += 1;
            if attempts > 200 {
                return Err(Error::Integration(format!("repeated step rejection at t = {}", self.t)));
            }
            let remaining = t_bound - self.t;
            let mut h = self.h;
            let mut hits_bound = false;
            if dir * (self.t + h - t_bound) >= 0.0 || (remaining - h).abs() < 1e-14 * self.t.abs().max(1.0) {
                h = remaining;
                hits_bound = true;
            }
            if h.abs() <= 8.0 * f64::EPSILON * self.t.abs().max(1e-300) {
                return Err(Error::Integration(format!("step size underflow at t = {}", self.t)));
            }

            // k[0]=k1, k[1..=9]=k2..k10, k[10]=k11 (stage 11), k[11]=k12 (at t+h), k[12] = f(t+h, y_new)
            self.stage(1, C2, &[(0, A21)], h);
            self.stage(2, C3, &[(0, A31), (1, A32)], h);
            self.stage(3, C4, &[(0, A41), (2, A43)], h);
            self.stage(4, C5, &[(0, A51), (2, A53), (3, A54)], h);
            self.stage(5, C6, &[(0, A61), (3, A64), (4, A65)], h);
            self.stage(6, C7, &[(0, A71), (3, A74), (4, A75), (5, A76)], h);
            self.stage(7, C8, &[(0, A81), (3, A84), (4, A85), (5, A86), (6, A87)], h);
            self.stage(8, C9, &[(0, A91), (3, A94), (4, A95), (5, A96), (6, A97), (7, A98)], h);
            self.stage(9, C10, &[(0, A101), (3, A104), (4, A105), (5, A106), (6, A107), (7, A108), (8, A109)], h);
            self.stage(
                10,
                C11,
                &[(0, A111), (3, A114), (4, A115), (5, A116), (6, A117), (7, A118), (8, A119), (9, A1110)],
                h,
            );
            self.stage(
                11,
                1.0,
                &[(0, A121), (3, A124), (4, A125), (5, A126), (6, A127), (7, A128), (8, A129), (9, A1210), (10, A1211)],
                h,
            );
            self.evals += 11;

            let mut y_new = vec![0.0; n];
            let (mut err, mut err2) = (0.0, 0.0);
            let k = &self.k;
            for i in 0..n {
                let incr = B1 * k[0][i]
                    + B6 * k[5][i]
                    + B7 * k[6][i]
                    + B8 * k[7][i]
                    + B9 * k[8][i]
                    + B10 * k[9][i]
                    + B11 * k[10][i]
                    + B12 * k[11][i];
                y_new[i] = self.y[i] + h * incr;
                let sk = self.scale(i, self.y[i], y_new[i]);
                let e2 = incr - BHH1 * k[0][i] - BHH2 * k[8][i] - BHH3 * k[11][i];
                err2 += (e2 / sk).powi(2);
                let e = ER1 * k[0][i]
                    + ER6 * k[5][i]
                    + ER7 * k[6][i]
                    + ER8 * k[7][i]
                    + ER9 * k[8][i]
                    + ER10 * k[9][i]
                    + ER11 * k[10][i]
                    + ER12 * k[11][i];
                err += (e / sk).powi(2);
            }
            let mut deno = err + 0.01 * err2;
            if deno <= 0.0 {
                deno = 1.0;
            }
            let err = if n == 0 { 0.0 } else { h.abs() * err * (1.0 / (deno * n as f64)).sqrt() };

            if !err.is_finite() || y_new.iter().any(|v| !v.is_finite()) {
                self.h = h * 0.1;
                self.last_rejected = true;
                continue;
            }

            const SAFE: f64 = 0.9;
            const FAC1: f64 = 0.333;
            const FAC2: f64 = 6.0;
            let fac11 = err.powf(0.125);
            let fac = (1.0 / FAC2).max((1.0 / FAC1).min(fac11 / SAFE));
            let mut h_new = h / fac;

            if err <= 1.0 {
                self.facold = err.max(1e-4);
                let t_new = if hits_bound { t_bound } else { self.t + h };
                let mut f_new = std::mem::take(&mut self.k[12]);
                (self.f)(t_new, &y_new, &mut f_new);
                self.k[12] = f_new;
                self.evals += 1;
                self.build_dense(h, &y_new);
                self.y = y_new;
                self.t = t_new;
                let (a, b) = self.k.split_at_mut(12);
                a[0].copy_from_slice(&b[0]);
                if self.last_rejected {
                    h_new = dir * h_new.abs().min(h.abs());
                }
                self.last_rejected = false;
                self.steps += 1;
                // Keep the proposed step when we were only clipped by the bound.
                if !(hits_bound && h_new.abs() < self.h.abs()) {
                    self.h = dir * h_new.abs().min(self.tol.h_max);
                }
                return Ok(());
            }
            h_new = h / (1.0 / FAC1).min(fac11 / SAFE);
            self.h = h_new;
            self.last_rejected = true;
        }
    }

    // Dense coefficients for the step just completed (3 extra evaluations).
    fn build_dense(&mut self, h: f64, y_new: &[f64]) {
        let n = self.y.len();
        let mut cont: [Vec<f64>; 8] = std::array::from_fn(|_| vec![0.0; n]);
        {
            let k = &self.k;
            for i in 0..n {
                let ydiff = y_new[i] - self.y[i];
                let bspl = h * k[0][i] - ydiff;
                cont[0][i] = self.y[i];
                cont[1][i] = ydiff;
                cont[2][i] = bspl;
                cont[3][i] = ydiff - h * k[12][i] - bspl;
                cont[4][i] = D41 * k[0][i]
                    + D46 * k[5][i]
                    + D47 * k[6][i]
                    + D48 * k[7][i]
                    + D49 * k[8][i]
                    + D410 * k[9][i]
                    + D411 * k[10][i]
                    + D412 * k[11][i];
                cont[5][i] = D51 * k[0][i]
                    + D56 * k[5][i]
                    + D57 * k[6][i]
                    + D58 * k[7][i]
                    + D59 * k[8][i]
                    + D510 * k[9][i]
                    + D511 * k[10][i]
                    + D512 * k[11][i];
                cont[6][i] = D61 * k[0][i]
                    + D66 * k[5][i]
                    + D67 * k[6][i]
                    + D68 * k[7][i]
                    + D69 * k[8][i]
                    + D610 * k[9][i]
                    + D611 * k[10][i]
                    + D612 * k[11][i];
                cont[7][i] = D71 * k[0][i]
                    + D76 * k[5][i]
                    + D77 * k[6][i]
                    + D78 * k[7][i]
                    + D79 * k[8][i]
                    + D710 * k[9][i]
                    + D711 * k[10][i]
                    + D712 * k[11][i];
            }
        }
        // Extra stages: k14 -> slot 1, k15 -> slot 2, k16 -> slot 3 (no longer needed after the step).
        self.stage(1, C14, &[(0, A141), (6, A147), (7, A148), (8, A149), (9, A1410), (10, A1411), (11, A1412), (12, A1413)], h);
        self.stage(2, C15, &[(0, A151), (5, A156), (6, A157), (7, A158), (10, A1511), (11, A1512), (12, A1513), (1, A1514)], h);
        self.stage(
            3,
            C16,
            &[(0, A161), (5, A166), (6, A167), (7, A168), (8, A169), (12, A1613), (1, A1614), (2, A1615)],
            h,
        );
        self.evals += 3;
        let k = &self.k;
        for i in 0..n {
            cont[4][i] = h * (cont[4][i] + D413 * k[12][i] + D414 * k[1][i] + D415 * k[2][i] + D416 * k[3][i]);
            cont[5][i] = h * (cont[5][i] + D513 * k[12][i] + D514 * k[1][i] + D515 * k[2][i] + D516 * k[3][i]);
            cont[6][i] = h * (cont[6][i] + D613 * k[12][i] + D614 * k[1][i] + D615 * k[2][i] + D616 * k[3][i]);
            cont[7][i] = h * (cont[7][i] + D713 * k[12][i] + D714 * k[1][i] + D715 * k[2][i] + D716 * k[3][i]);
        }
        self.dense = Some(Dense { t_old: self.t, h, cont });
    }

    /// Interval `(t_old, t_new)` of the last accepted step.
    pub fn last_interval(&self) -> Option<(f64, f64)> {
        self.dense.as_ref().map(|d| (d.t_old, d.t_old + d.h))
    }

    /// Evaluate the dense output of the last accepted step.
    pub fn dense_eval(&self, t: f64, out: &mut [f64]) -> Result<()> {
        match &self.dense {
            Some(d) => {
                d.eval(t, out);
                Ok(())
            }
            None => Err(Error::Integration("no accepted step yet".into())),
        }
    }

    /// Integrate up to exactly `t_end`.
    pub fn integrate_to(&mut self, t_end: f64) -> Result<()> {
        while (t_end - self.t) * self.h.signum() > 0.0 {
            self.step(t_end)?;
        }
        Ok(())
    }

    /// Integrate towards `t_end`, stopping at the first root of `g` with the
    /// requested crossing. On an event the stepper state is moved onto it.
    pub fn integrate_until<G>(&mut self, t_end: f64, mut g: G, crossing: Crossing, t_tol: f64) -> Result<Option<Event>>
    where
        G: FnMut(f64, &[f64]) -> f64,
    {
        let mut g_old = g(self.t, &self.y);
        let mut buf = vec![0.0; self.y.len()];
        while (t_end - self.t) * self.h.signum() > 0.0 {
            self.step(t_end)?;
            let g_new = g(self.t, &self.y);
            if crossing.accepts(g_old, g_new) {
                let (ta, tb) = self.last_interval().expect("step taken");
                let d = self.dense.as_ref().expect("step taken");
                let mut eval = |t: f64| {
                    d.eval(t, &mut buf);
                    g(t, &buf)
                };
                let t_root = illinois(&mut eval, ta, g_old, tb, g_new, t_tol);
                let mut y = vec![0.0; self.y.len()];
                d.eval(t_root, &mut y);
                self.reset(t_root, &y);
                return Ok(Some(Event { t: t_root, y }));
            }
            g_old = g_new;
        }
        Ok(None)
    }

    /// Restart from a new state, keeping the current step size.
    pub fn reset(&mut self, t: f64, y: &[f64]) {
        self.t = t;
        self.y.copy_from_slice(y);
        (self.f)(t, &self.y, &mut self.k[0]);
        self.evals += 1;
        self.dense = None;
    }
}

// Illinois-modified regula falsi; falls back to bisection when it stalls.
pub(crate) fn illinois<G: FnMut(f64) -> f64>(g: &mut G, mut a: f64, mut ga: f64, mut b: f64, mut gb: f64, tol: f64) -> f64 {
    if gb == 0.0 {
        return b;
    }
    let mut side = 0i8;
    for it in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        let mut c = (a * gb - b * ga) / (gb - ga);
        if !c.is_finite() || it % 8 == 7 {
            c = 0.5 * (a + b);
        }
        let gc = g(c);
        if gc == 0.0 {
            return c;
        }
        if gc.signum() == gb.signum() {
            b = c;
            gb = gc;
            if side == -1 {
                ga *= 0.5;
            }
            side = -1;
        } else {
            a = c;
            ga = gc;
            if side == 1 {
                gb *= 0.5;
            }
            side = 1;
        }
    }
    // Return the endpoint on the post-crossing side.
    b
}

/// One-shot integration from `t0` to `t1`.
pub fn integrate<F>(f: F, t0: f64, y0: &[f64], t1: f64, tol: Tolerances) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    if t1 == t0 {
        return Ok(y0.to_vec());
    }
    let mut s = Dop853::new(f, t0, y0, t1 - t0, tol)?;
    s.integrate_to(t1)?;
    Ok(s.y.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn oscillator(_t: f64, y: &[f64], dy: &mut [f64]) {
        dy[0] = y[1];
        dy[1] = -y[0];
    }

    #[test]
    fn harmonic_oscillator_period() {
        let y = integrate(oscillator, 0.0, &[1.0, 0.0], 2.0 * std::f64::consts::PI, Tolerances::new(1e-13, 1e-15)).unwrap();
        assert!((y[0] - 1.0).abs() < 1e-11 && y[1].abs() < 1e-11, "{y:?}");
    }

    #[test]
    fn backward_integration() {
        let y = integrate(oscillator, 1.0, &[1.0f64.cos(), -1.0f64.sin()], -2.0, Tolerances::new(1e-12, 1e-14)).unwrap();
        assert!((y[0] - 2.0f64.cos()).abs() < 1e-10 && (y[1] - 2.0f64.sin()).abs() < 1e-10);
    }

    #[test]
    fn dense_output_is_accurate_inside_a_step() {
        let mut s = Dop853::new(oscillator, 0.0, &[1.0, 0.0], 1.0, Tolerances::new(1e-12, 1e-14).with_h_max(0.8)).unwrap();
        s.step(10.0).unwrap();
        let (a, b) = s.last_interval().unwrap();
        let mut out = [0.0; 2];
        for j in 1..10 {
            let t = a + (b - a) * j as f64 / 10.0;
            s.dense_eval(t, &mut out).unwrap();
            assert!((out[0] - t.cos()).abs() < 1e-10, "t={t} {}", out[0] - t.cos());
        }
    }

    #[test]
    fn locates_zero_crossing() {
        let mut s = Dop853::new(oscillator, 0.0, &[1.0, 0.0], 1.0, Tolerances::default()).unwrap();
        let ev = s.integrate_until(10.0, |_, y| y[0], Crossing::Falling, 1e-13).unwrap().unwrap();
        assert!((ev.t - std::f64::consts::FRAC_PI_2).abs() < 1e-11);
        assert_eq!(s.t(), ev.t);
    }
}
