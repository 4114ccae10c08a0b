//! Periodic collision chains as critical points of discrete action functionals.

mod functional;
mod seed;
mod solver;

pub use functional::*;
pub use seed::*;
pub use solver::*;

use serde::{Deserialize, Serialize};

use crate::collision::{MassParams, RotationPair};
use crate::error::{Error, Result};
use crate::plane::PlanePoint;

/// Collision chain: segment `j` joins `x_j` to `x_{j+1}` in time `s_j`, with
/// `x_n = e^{iΦ}x_0`.
#[derive(Debug, Clone, PartialEq)]
pub struct CollisionChain {
    pub k: Vec<RotationPair>,
    pub s: Vec<f64>,
    pub x: Vec<PlanePoint>,
    pub phi: f64,
    pub energy: f64,
    /// Prescribed total angular momentum (used by the fixed-`E,G` functional).
    pub angular_momentum: Option<f64>,
    pub masses: MassParams,
}

impl CollisionChain {
    pub fn len(&self) -> usize {
        self.k.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k.is_empty()
    }

    pub fn period(&self) -> f64 {
        self.s.iter().sum()
    }

    /// End point of segment `j`.
    pub fn x_next(&self, j: usize) -> PlanePoint {
        if j + 1 < self.len() {
            self.x[j + 1]
        } else {
            self.x[0].rotate(self.phi)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.k.len();
        if n == 0 {
            return Err(Error::InvalidInput("chain has no segments".into()));
        }
        if self.s.len() != n || self.x.len() != n {
            return Err(Error::InvalidInput(format!(
                "chain arrays disagree: {} rotation pairs, {} durations, {} points",
                n,
                self.s.len(),
                self.x.len()
            )));
        }
        if self.s.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidInput("segment durations must be positive".into()));
        }
        if self.x.iter().any(|p| !p.is_finite() || p.norm() == 0.0) {
            return Err(Error::InvalidInput("collision points must be finite and away from the origin".into()));
        }
        if !(self.energy < 0.0) || !self.phi.is_finite() {
            return Err(Error::InvalidInput("chain energy must be negative".into()));
        }
        Ok(())
    }

    /// Rotate every collision point by `theta`.
    pub fn rotated(&self, theta: f64) -> Self {
        Self { x: self.x.iter().map(|p| p.rotate(theta)).collect(), ..self.clone() }
    }

    /// Smallest distance between the collision data of two chains over rotations.
    pub fn distance_mod_rotation(&self, other: &Self) -> f64 {
        // Optimal angle: arg Σ conj(other_j)·self_j.
        let mut acc = num_complex::Complex64::new(0.0, 0.0);
        for (a, b) in self.x.iter().zip(&other.x) {
            acc += a.to_complex() * b.to_complex().conj();
        }
        let aligned = other.rotated(acc.arg());
        let dx = self.x.iter().zip(&aligned.x).map(|(a, b)| (*a - *b).norm_sqr()).sum::<f64>();
        let ds = self.s.iter().zip(&aligned.s).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        (dx + ds + (self.phi - other.phi).powi(2)).sqrt()
    }

    pub fn to_file(&self) -> ChainFile {
        ChainFile {
            k: self.k.iter().map(|&(a, b)| [a, b]).collect(),
            s: self.s.clone(),
            x: self.x.clone(),
            phi: self.phi,
            energy: self.energy,
            angular_momentum: self.angular_momentum,
            alpha1: self.masses.alpha1,
            mu: self.masses.mu,
        }
    }

    pub fn from_file(f: &ChainFile) -> Result<Self> {
        let chain = Self {
            k: f.k.iter().map(|k| (k[0], k[1])).collect(),
            s: f.s.clone(),
            x: f.x.clone(),
            phi: f.phi,
            energy: f.energy,
            angular_momentum: f.angular_momentum,
            masses: MassParams::new(f.alpha1, f.mu)?,
        };
        chain.validate()?;
        Ok(chain)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("chain serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: ChainFile = serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("chain JSON: {e}")))?;
        Self::from_file(&f)
    }
}

/// On-disk form of a chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainFile {
    pub k: Vec<[i32; 2]>,
    pub s: Vec<f64>,
    pub x: Vec<PlanePoint>,
    pub phi: f64,
    #[serde(rename = "E")]
    pub energy: f64,
    #[serde(rename = "G")]
    pub angular_momentum: Option<f64>,
    pub alpha1: f64,
    pub mu: f64,
}
