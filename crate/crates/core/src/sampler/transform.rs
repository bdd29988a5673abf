//! The scale/translation group acting on latent utilities.
//!
//! `φ_z(y) = y/√z1 − z2·1`, with inverse `√z1 (y + z2·1)`. Scaling by `√z1`
//! matches scaling the noise covariance by `z1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A group element `z = (z1, z2)` with `z1 > 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformParams {
    pub z1: f64,
    pub z2: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// `y ↦ y/√z1 − z2·1`.
    Forward,
    /// `y ↦ √z1 (y + z2·1)`.
    Inverse,
}

impl TransformParams {
    pub const IDENTITY: TransformParams = TransformParams { z1: 1.0, z2: 0.0 };

    pub fn new(z1: f64, z2: f64) -> Result<Self> {
        if !(z1 > 0.0 && z1.is_finite()) || !z2.is_finite() {
            return Err(Error::invalid(format!("invalid transform ({z1}, {z2})")));
        }
        Ok(TransformParams { z1, z2 })
    }

    pub fn forward(&self, y: f64) -> f64 {
        y / self.z1.sqrt() - self.z2
    }

    pub fn inverse(&self, y: f64) -> f64 {
        self.z1.sqrt() * (y + self.z2)
    }

    pub fn apply(&self, y: f64, direction: Direction) -> f64 {
        match direction {
            Direction::Forward => self.forward(y),
            Direction::Inverse => self.inverse(y),
        }
    }

    /// The element acting as `φ_self ∘ φ_z`.
    pub fn compose(&self, z: &TransformParams) -> TransformParams {
        TransformParams {
            z1: self.z1 * z.z1,
            z2: self.z2 + z.z2 / self.z1.sqrt(),
        }
    }

    pub fn invert(&self) -> TransformParams {
        TransformParams {
            z1: 1.0 / self.z1,
            z2: -self.z1.sqrt() * self.z2,
        }
    }
}

/// Latent utilities, one vector per observation.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedData {
    pub w: Vec<Vec<f64>>,
}

impl AugmentedData {
    /// The feasible starting point: 1 for the chosen action, 0 elsewhere.
    pub fn feasible(dims: &[usize], chosen: &[usize]) -> Self {
        let w = dims
            .iter()
            .zip(chosen)
            .map(|(&m, &c)| (0..m).map(|j| if j == c { 1.0 } else { 0.0 }).collect())
            .collect();
        AugmentedData { w }
    }

    pub fn dims(&self) -> Vec<usize> {
        self.w.iter().map(Vec::len).collect()
    }

    pub fn total_len(&self) -> usize {
        self.w.iter().map(Vec::len).sum()
    }

    /// `w_t(chosen_t) ≥ w_t(j)` for every `t` and `j`.
    pub fn satisfies_constraints(&self, chosen: &[usize]) -> bool {
        self.w.len() == chosen.len()
            && self.w.iter().zip(chosen).all(|(wt, &c)| c < wt.len() && wt.iter().all(|&x| x <= wt[c]))
    }

    pub fn stacked(&self) -> Vec<f64> {
        self.w.iter().flatten().copied().collect()
    }
}

pub fn apply_transform(w: &AugmentedData, z: &TransformParams, direction: Direction) -> AugmentedData {
    AugmentedData {
        w: w
            .w
            .iter()
            .map(|wt| wt.iter().map(|&y| z.apply(y, direction)).collect())
            .collect(),
    }
}

/// `log |det ∂φ_z(y)/∂y| = −(Σ M_t)/2 · log z1`.
pub fn log_jacobian(z: &TransformParams, dims: &[usize]) -> f64 {
    let total: usize = dims.iter().sum();
    -(total as f64) / 2.0 * z.z1.ln()
}
