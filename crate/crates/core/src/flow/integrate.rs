use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{
    cartesian_field, from_jacobi, levi_civita_map, lift_to_regularized, regularized_field, regularized_hamiltonian, to_jacobi,
    ChartState, PhaseState, RegularizedState,
};
use crate::collision::MassParams;
use crate::error::{Error, Result};
use crate::ode::{illinois, Dop853, Tolerances};

/// Coordinates the flow is currently integrated in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Chart {
    Cartesian,
    Regularized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChartPolicy {
    Cartesian,
    Regularized,
    /// Regularize when `|u| ≤ ρ_switch`, return when `|u| > hysteresis·ρ_switch`.
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowOptions {
    pub rtol: f64,
    pub atol: f64,
    pub policy: ChartPolicy,
    /// Fixed switching radius; `None` means `1e-2·|x|` at the time of the check.
    pub rho_switch: Option<f64>,
    pub hysteresis: f64,
    /// Radii `ρ` of the sections `|u| = ρ` whose crossings are reported.
    pub sections: Vec<f64>,
    /// Largest admissible `|H_μ − E|` over the samples.
    pub energy_tol: f64,
    pub event_tol: f64,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-12,
            atol: 1e-14,
            policy: ChartPolicy::Auto,
            rho_switch: None,
            hysteresis: 2.0,
            sections: Vec::new(),
            energy_tol: 1e-8,
            event_tol: 1e-12,
        }
    }
}

impl FlowOptions {
    fn tolerances(&self) -> Tolerances {
        Tolerances::new(self.rtol, self.atol)
    }

    fn rho(&self, x_norm: f64) -> f64 {
        self.rho_switch.unwrap_or(1e-2 * x_norm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EventKind {
    SectionCrossing { rho: f64 },
    ClosestApproach,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowEvent {
    pub kind: EventKind,
    pub t: f64,
    pub separation: f64,
    pub state: PhaseState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartSwitch {
    pub t: f64,
    pub from: Chart,
    pub to: Chart,
    pub separation: f64,
}

/// One recorded point of a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub state: PhaseState,
    pub chart: Chart,
    pub energy: f64,
    pub angular_momentum: f64,
    /// Distance `|q₁ − q₂|` to the collision set.
    pub dist_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub masses: MassParams,
    pub energy: f64,
    pub options: FlowOptions,
    pub samples: Vec<Sample>,
    pub events: Vec<FlowEvent>,
    pub switches: Vec<ChartSwitch>,
    pub max_energy_residual: f64,
    pub max_angular_momentum_drift: f64,
    /// `max |𝓗 − μα|` while in the regularized chart.
    pub max_level_residual: f64,
}

impl Trajectory {
    pub fn final_state(&self) -> &PhaseState {
        &self.samples.last().expect("trajectories hold at least the initial sample").state
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,q1x,q1y,q2x,q2y,p1x,p1y,p2x,p2y,H,G,dist_delta\n");
        for p in &self.samples {
            let a = p.state.to_array();
            let _ = write!(s, "{:.17e}", p.t);
            for v in a.iter().chain([p.energy, p.angular_momentum, p.dist_delta].iter()) {
                let _ = write!(s, ",{v:.17e}");
            }
            s.push('\n');
        }
        s
    }

    /// Masses, tolerances and chart-switch log.
    pub fn metadata_json(&self) -> serde_json::Value {
        serde_json::json!({
            "masses": self.masses,
            "energy": self.energy,
            "options": self.options,
            "switches": self.switches,
            "events": self.events.iter().map(|e| serde_json::json!({"kind": e.kind, "t": e.t, "separation": e.separation})).collect::<Vec<_>>(),
            "max_energy_residual": self.max_energy_residual,
            "max_angular_momentum_drift": self.max_angular_momentum_drift,
            "max_level_residual": self.max_level_residual,
        })
    }
}

struct Recorder {
    masses: MassParams,
    energy: f64,
    g0: f64,
    samples: Vec<Sample>,
    max_energy: f64,
    max_g: f64,
}

impl Recorder {
    fn push(&mut self, state: PhaseState, chart: Chart) -> Result<()> {
        let h = state.hamiltonian_h(&self.masses)?;
        let g = state.angular_momentum(&self.masses);
        self.max_energy = self.max_energy.max((h - self.energy).abs());
        self.max_g = self.max_g.max((g - self.g0).abs());
        self.samples.push(Sample { t: state.time, state, chart, energy: h, angular_momentum: g, dist_delta: state.separation() });
        Ok(())
    }
}

/// Phase state of a regularized array `[x, y, ξ, η, t]`.
fn phase_of_regularized(z: &[f64], m: &MassParams) -> Result<PhaseState> {
    let r = RegularizedState::from_array(z, 0.0, z[8]);
    Ok(from_jacobi(&levi_civita_map(&r, m)?, m))
}

fn x_norm(s: &PhaseState, m: &MassParams) -> f64 {
    (s.q1 * m.alpha1 + s.q2 * m.alpha2).norm()
}

/// Integrate `H_μ` from `initial` up to physical time `t_end`, switching to the
/// Levi-Civita chart near collisions of the small bodies as `options` ask.
pub fn integrate(initial: &PhaseState, t_end: f64, masses: &MassParams, options: &FlowOptions) -> Result<Trajectory> {
    if !(t_end >= initial.time) {
        return Err(Error::InvalidInput("integration runs forward in time".into()));
    }
    let m = *masses;
    let energy = initial.hamiltonian_h(&m)?;
    let mut rec = Recorder { masses: m, energy, g0: initial.angular_momentum(&m), samples: Vec::new(), max_energy: 0.0, max_g: 0.0 };
    rec.push(*initial, Chart::Cartesian)?;
    let mut events = Vec::new();
    let mut switches = Vec::new();
    let mut max_level: f64 = 0.0;
    let mut state = *initial;
    let mut chart = match options.policy {
        ChartPolicy::Cartesian => Chart::Cartesian,
        ChartPolicy::Regularized => Chart::Regularized,
        ChartPolicy::Auto => {
            if state.separation() <= options.rho(x_norm(&state, &m)) {
                Chart::Regularized
            } else {
                Chart::Cartesian
            }
        }
    };
    if chart == Chart::Regularized {
        rec.samples[0].chart = Chart::Regularized;
    }
    let sep_of = |q: &[f64]| (q[2] - q[0]).hypot(q[3] - q[1]);
    while state.time < t_end {
        match chart {
            Chart::Cartesian => {
                let z0 = state.to_array();
                let mut stepper = Dop853::new(|_, z: &[f64], out: &mut [f64]| cartesian_field(z, &m, out), state.time, &z0, 1.0, options.tolerances())?;
                let mut buf = [0.0; 8];
                let auto = options.policy == ChartPolicy::Auto;
                // Event functions on [q₁, q₂, p₁, p₂]: switch, CA, sections.
                let rel_dot = |z: &[f64]| {
                    let (ux, uy) = (z[2] - z[0], z[3] - z[1]);
                    let (wx, wy) = (z[6] / m.alpha2 - z[4] / m.alpha1, z[7] / m.alpha2 - z[5] / m.alpha1);
                    ux * wx + uy * wy
                };
                let switch_g = |z: &[f64]| {
                    let x = ((z[0] * m.alpha1 + z[2] * m.alpha2).powi(2) + (z[1] * m.alpha1 + z[3] * m.alpha2).powi(2)).sqrt();
                    sep_of(z) - options.rho(x)
                };
                let mut prev = z0;
                let mut switched = false;
                while stepper.t() < t_end {
                    stepper.step(t_end)?;
                    let (ta, tb) = stepper.last_interval().expect("step taken");
                    let cur: [f64; 8] = std::array::from_fn(|i| stepper.y()[i]);
                    let mut t_stop = tb;
                    if auto && switch_g(&prev) > 0.0 && switch_g(&cur) <= 0.0 {
                        let mut g = |t: f64| {
                            stepper.dense_eval(t, &mut buf).expect("dense");
                            switch_g(&buf)
                        };
                        t_stop = illinois(&mut g, ta, switch_g(&prev), tb, switch_g(&cur), options.event_tol);
                        switched = true;
                    }
                    let mut local = Vec::new();
                    if rel_dot(&prev) < 0.0 && rel_dot(&cur) >= 0.0 {
                        let mut g = |t: f64| {
                            stepper.dense_eval(t, &mut buf).expect("dense");
                            rel_dot(&buf)
                        };
                        local.push((illinois(&mut g, ta, rel_dot(&prev), tb, rel_dot(&cur), options.event_tol), EventKind::ClosestApproach));
                    }
                    for &rho in &options.sections {
                        let (g0, g1) = (sep_of(&prev) - rho, sep_of(&cur) - rho);
                        if (g0 < 0.0) != (g1 < 0.0) {
                            let mut g = |t: f64| {
                                stepper.dense_eval(t, &mut buf).expect("dense");
                                sep_of(&buf) - rho
                            };
                            local.push((illinois(&mut g, ta, g0, tb, g1, options.event_tol), EventKind::SectionCrossing { rho }));
                        }
                    }
                    local.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
                    for (t, kind) in local {
                        if t <= t_stop {
                            stepper.dense_eval(t, &mut buf)?;
                            let s = PhaseState::from_array(&buf, t);
                            events.push(FlowEvent { kind, t, separation: s.separation(), state: s });
                        }
                    }
                    if switched {
                        stepper.dense_eval(t_stop, &mut buf)?;
                        state = PhaseState::from_array(&buf, t_stop);
                        rec.push(state, Chart::Cartesian)?;
                        switches.push(ChartSwitch { t: t_stop, from: Chart::Cartesian, to: Chart::Regularized, separation: state.separation() });
                        chart = Chart::Regularized;
                        break;
                    }
                    state = PhaseState::from_array(&cur, tb);
                    rec.push(state, Chart::Cartesian)?;
                    prev = cur;
                }
                if !switched {
                    break;
                }
            }
            Chart::Regularized => {
                let reg = lift_to_regularized(&to_jacobi(&state, &m), 1.0)?;
                let mut z0 = [0.0; 9];
                z0[..8].copy_from_slice(&reg.to_array());
                z0[8] = state.time;
                let level = m.mu * m.alpha;
                let mut stepper = Dop853::new(|_, z: &[f64], out: &mut [f64]| regularized_field(z, &m, energy, out), 0.0, &z0, 1.0, options.tolerances())?;
                let mut buf = [0.0; 9];
                let auto = options.policy == ChartPolicy::Auto;
                let sep = |z: &[f64]| z[4] * z[4] + z[5] * z[5];
                let back_g = |z: &[f64]| {
                    let q = phase_of_regularized(z, &m).map(|s| x_norm(&s, &m)).unwrap_or(0.0);
                    sep(z) - options.hysteresis * options.rho(q)
                };
                let ca_g = |z: &[f64]| z[4] * z[6] + z[5] * z[7];
                let mut prev = z0;
                let mut done = false;
                let mut switched = false;
                loop {
                    stepper.step(f64::INFINITY)?;
                    let (ta, tb) = stepper.last_interval().expect("step taken");
                    let cur: [f64; 9] = std::array::from_fn(|i| stepper.y()[i]);
                    let r = RegularizedState::from_array(&cur, tb, cur[8]);
                    max_level = max_level.max((regularized_hamiltonian(&r, &m, energy)? - level).abs());
                    let mut t_stop = tb;
                    if cur[8] >= t_end {
                        let mut g = |t: f64| {
                            stepper.dense_eval(t, &mut buf).expect("dense");
                            buf[8] - t_end
                        };
                        t_stop = illinois(&mut g, ta, prev[8] - t_end, tb, cur[8] - t_end, options.event_tol);
                        done = true;
                    }
                    if auto && back_g(&prev) <= 0.0 && back_g(&cur) > 0.0 {
                        let mut g = |t: f64| {
                            stepper.dense_eval(t, &mut buf).expect("dense");
                            back_g(&buf)
                        };
                        let ts = illinois(&mut g, ta, back_g(&prev), tb, back_g(&cur), options.event_tol);
                        if ts < t_stop {
                            t_stop = ts;
                            done = false;
                            switched = true;
                        }
                    }
                    let mut local = Vec::new();
                    if ca_g(&prev) < 0.0 && ca_g(&cur) >= 0.0 {
                        let mut g = |t: f64| {
                            stepper.dense_eval(t, &mut buf).expect("dense");
                            ca_g(&buf)
                        };
                        local.push((illinois(&mut g, ta, ca_g(&prev), tb, ca_g(&cur), options.event_tol), EventKind::ClosestApproach));
                    }
                    for &rho in &options.sections {
                        let (g0, g1) = (sep(&prev) - rho, sep(&cur) - rho);
                        if (g0 < 0.0) != (g1 < 0.0) {
                            let mut g = |t: f64| {
                                stepper.dense_eval(t, &mut buf).expect("dense");
                                sep(&buf) - rho
                            };
                            local.push((illinois(&mut g, ta, g0, tb, g1, options.event_tol), EventKind::SectionCrossing { rho }));
                        }
                    }
                    local.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
                    for (t, kind) in local {
                        if t <= t_stop {
                            stepper.dense_eval(t, &mut buf)?;
                            let s = phase_of_regularized(&buf, &m)?;
                            events.push(FlowEvent { kind, t: s.time, separation: s.separation(), state: s });
                        }
                    }
                    if done || switched {
                        stepper.dense_eval(t_stop, &mut buf)?;
                        if done {
                            buf[8] = t_end;
                        }
                        state = phase_of_regularized(&buf, &m)?;
                        rec.push(state, Chart::Regularized)?;
                        if switched {
                            switches.push(ChartSwitch { t: state.time, from: Chart::Regularized, to: Chart::Cartesian, separation: state.separation() });
                            chart = Chart::Cartesian;
                        }
                        break;
                    }
                    state = phase_of_regularized(&cur, &m)?;
                    rec.push(state, Chart::Regularized)?;
                    prev = cur;
                }
                if done {
                    break;
                }
            }
        }
    }
    if rec.max_energy > options.energy_tol {
        return Err(Error::Integration(format!(
            "energy residual {:e} exceeds the tolerance {:e}",
            rec.max_energy, options.energy_tol
        )));
    }
    Ok(Trajectory {
        masses: m,
        energy,
        options: options.clone(),
        max_energy_residual: rec.max_energy,
        max_angular_momentum_drift: rec.max_g,
        samples: rec.samples,
        events,
        switches,
        max_level_residual: max_level,
    })
}

/// Flow of `𝓗_μ^E` for fictitious time `tau` (either sign); the physical time
/// is carried along by `dt/dτ = |ξ|²`.
pub fn flow_regularized(r: &RegularizedState, tau: f64, masses: &MassParams, energy: f64, tol: Tolerances) -> Result<RegularizedState> {
    let mut z0 = [0.0; 9];
    z0[..8].copy_from_slice(&r.to_array());
    z0[8] = r.physical_time;
    if tau == 0.0 {
        return Ok(*r);
    }
    let z = crate::ode::integrate(|_, z, out| regularized_field(z, masses, energy, out), r.fictitious_time, &z0, r.fictitious_time + tau, tol)?;
    Ok(RegularizedState::from_array(&z, r.fictitious_time + tau, z[8]))
}

/// Flow of `𝓗_μ^E` until the physical time reaches `t` (forward only).
pub fn flow_regularized_to_time(r: &RegularizedState, t: f64, masses: &MassParams, energy: f64, tol: Tolerances) -> Result<RegularizedState> {
    let mut z0 = [0.0; 9];
    z0[..8].copy_from_slice(&r.to_array());
    z0[8] = r.physical_time;
    if t <= r.physical_time {
        return Err(Error::InvalidInput("target time must lie ahead".into()));
    }
    let mut stepper = Dop853::new(|_, z: &[f64], out: &mut [f64]| regularized_field(z, masses, energy, out), r.fictitious_time, &z0, 1.0, tol)?;
    let ev = stepper.integrate_until(f64::INFINITY, |_, z| z[8] - t, crate::ode::Crossing::Rising, 1e-14)?;
    let ev = ev.ok_or_else(|| Error::Integration("physical time never reached".into()))?;
    let mut y = ev.y;
    y[8] = t;
    Ok(RegularizedState::from_array(&y, ev.t, t))
}

/// Plain heliocentric flow of `H_μ` over physical time `t`.
pub fn flow_cartesian(s: &PhaseState, t: f64, masses: &MassParams, tol: Tolerances) -> Result<PhaseState> {
    let z = crate::ode::integrate(|_, z, out| cartesian_field(z, masses, out), s.time, &s.to_array(), s.time + t, tol)?;
    Ok(PhaseState::from_array(&z, s.time + t))
}
