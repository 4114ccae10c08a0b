//! Run configuration: every parameter with an explicit default, validated
//! before anything runs.

use serde::{Deserialize, Serialize};

use second_species::chain::{ChainFile, SolverOptions};
use second_species::shadow::{ShadowVariant, ShootingOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seed for sampled inputs (random Lambert pairs).
    pub seed: u64,
    pub lambert: LambertConfig,
    pub chain: ChainConfig,
    pub shadow: ShadowConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { seed: 0, lambert: LambertConfig::default(), chain: ChainConfig::default(), shadow: ShadowConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LambertConfig {
    pub energy: f64,
    pub revolutions: Vec<i32>,
    /// Explicit endpoint pairs; every one must be admissible.
    pub pairs: Vec<[[f64; 2]; 2]>,
    /// Grid points; all ordered pairs are tried and inadmissible ones skipped.
    pub grid: Vec<[f64; 2]>,
    /// Number of random pairs drawn uniformly from the disk of radius `random_radius`.
    pub random_pairs: usize,
    pub random_radius: f64,
}

impl Default for LambertConfig {
    fn default() -> Self {
        Self {
            energy: -0.5,
            revolutions: vec![0, 1, -1],
            pairs: vec![[[1.0, 0.0], [0.0, 1.0]]],
            grid: Vec::new(),
            random_pairs: 0,
            random_radius: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainConfig {
    pub energy: f64,
    pub angular_momentum: f64,
    /// Revolutions of the restricted ellipse over one period.
    pub revolutions: u32,
    pub collisions: usize,
    /// Rotation numbers of the first body, repeated cyclically over the segments.
    pub k1: Vec<i32>,
    pub alpha1: f64,
    /// Chain to refine instead of seeding from the restricted limit.
    pub input: Option<ChainFile>,
    pub solver: SolverOptions,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            energy: -0.5,
            angular_momentum: 0.95,
            revolutions: 5,
            collisions: 4,
            k1: vec![-1],
            alpha1: 1e-2,
            input: None,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShadowConfig {
    pub mu_sweep: Vec<f64>,
    /// Section radius `ρ` (in `|u|`) around each collision.
    pub rho: f64,
    pub variant: ShadowVariant,
    /// Write one trajectory CSV per `μ`.
    pub trajectories: bool,
    pub options: ShootingOptions,
}

impl Default for ShadowConfig {
    fn default() -> Self {
        Self {
            mu_sweep: vec![1e-3, 1e-4, 1e-5],
            rho: 0.02,
            variant: ShadowVariant::FixedEG,
            trajectories: true,
            options: ShootingOptions::default(),
        }
    }
}

fn finite(name: &str, v: f64) -> Result<(), String> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(format!("{name} must be finite"))
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), String> {
        let l = &self.lambert;
        finite("lambert.energy", l.energy)?;
        if l.energy >= 0.0 {
            return Err("lambert.energy must be negative".into());
        }
        if l.revolutions.is_empty() {
            return Err("lambert.revolutions must not be empty".into());
        }
        for p in l.pairs.iter().flatten().chain(l.grid.iter()) {
            finite("lambert point", p[0])?;
            finite("lambert point", p[1])?;
        }
        if !(l.random_radius > 0.0 && l.random_radius.is_finite()) {
            return Err("lambert.random_radius must be positive".into());
        }

        let c = &self.chain;
        finite("chain.energy", c.energy)?;
        finite("chain.angular_momentum", c.angular_momentum)?;
        if c.energy >= 0.0 {
            return Err("chain.energy must be negative".into());
        }
        if c.collisions == 0 || c.revolutions == 0 {
            return Err("chain.collisions and chain.revolutions must be positive".into());
        }
        if c.k1.is_empty() {
            return Err("chain.k1 must not be empty".into());
        }
        if !(c.alpha1 > 0.0 && c.alpha1 < 0.5) {
            return Err("chain.alpha1 must lie in (0, 1/2)".into());
        }
        let s = &c.solver;
        if s.max_iterations == 0 || !(s.tol_grad > 0.0) || !(s.hessian_step > 0.0) || !(s.tol_null > 0.0) || !(s.max_null_angle > 0.0) {
            return Err("chain.solver: iterations and tolerances must be positive".into());
        }

        let sh = &self.shadow;
        if sh.mu_sweep.is_empty() {
            return Err("shadow.mu_sweep must not be empty".into());
        }
        if sh.mu_sweep.iter().any(|&m| !(m > 0.0 && m < 1.0)) {
            return Err("shadow.mu_sweep values must lie in (0, 1)".into());
        }
        if !(sh.rho > 0.0 && sh.rho.is_finite()) {
            return Err("shadow.rho must be positive".into());
        }
        let o = &sh.options;
        if o.max_iterations == 0 || !(o.tol > 0.0) || !(o.rtol > 0.0) || !(o.atol >= 0.0) || !(o.epsilon > 0.0) {
            return Err("shadow.options: iterations and tolerances must be positive".into());
        }
        Ok(())
    }
}

/// Parse a comma-separated `μ` list such as `1e-3,1e-4`.
pub fn parse_mu_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("bad μ value {t:?}: {e}")))
        .collect()
}
