//! Step 2: the joint draw of the value function and the working
//! parameters given transformed utilities.
//!
//! With `u = √z1 (v + z2·1)` (tabular) or `u = √z1 v` (basis) the target is
//! a normal-inverse-gamma law: `z1 ~ IG(a + D/2, b + Q/2)` and
//! `u | z1 ~ N(A⁻¹Xᵀw̃, z1 A⁻¹)`, where `A = XᵀX + I/κ`, `D = Σ M_t` and
//! `Q = w̃ᵀw̃ − w̃ᵀX A⁻¹ Xᵀw̃`. `X` is the stacked design, right-multiplied by
//! an orthonormal sum-zero basis when translation moves are off.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::config::{Moves, SamplerConfig, SamplerMode};
use super::transform::{AugmentedData, TransformParams};
use crate::choice::Dataset;
use crate::error::{Error, Result};
use crate::mdp::ValueFunction;
use crate::probability::{sample_inverse_gamma, InverseGammaParams};

/// Orthonormal `n × (n−1)` basis of the sum-zero subspace (Helmert
/// contrasts).
pub fn helmert_basis(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n.saturating_sub(1), |i, k| {
        let k1 = (k + 1) as f64;
        let norm = (k1 * (k1 + 1.0)).sqrt();
        if i <= k {
            1.0 / norm
        } else if i == k + 1 {
            -k1 / norm
        } else {
            0.0
        }
    })
}

/// Draws from Step 2.
#[derive(Clone, Debug, PartialEq)]
pub struct Step2Output {
    pub v: ValueFunction,
    pub z: TransformParams,
    /// Utilities mapped back to the untransformed scale.
    pub w: AugmentedData,
}

/// Per-dataset factorization reused across iterations.
#[derive(Clone, Debug)]
pub struct Step2Design {
    x: DMatrix<f64>,
    /// Upper-triangular `Lᵀ` with `A = L Lᵀ`.
    chol_upper: DMatrix<f64>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    inv_kappa: f64,
    helmert: Option<DMatrix<f64>>,
    mode: SamplerMode,
    moves: Moves,
    ig: InverseGammaParams,
    dim: usize,
}

impl Step2Design {
    pub fn new(dataset: &Dataset, config: &SamplerConfig) -> Result<Self> {
        let stacked = dataset.stacked_design();
        let helmert = (config.mode == SamplerMode::Tabular && !config.moves.has_translate())
            .then(|| helmert_basis(dataset.dim));
        let x = match &helmert {
            Some(b) => &stacked * b,
            None => stacked,
        };
        let p = x.ncols();
        let xtx = x.transpose() * &x;
        let inv_kappa = config.kappa.precision();
        if !config.kappa.is_finite() {
            let sv = xtx.clone().singular_values();
            let top = sv.iter().cloned().fold(0.0, f64::max);
            let rank = sv.iter().filter(|&&s| s > 1e-10 * top.max(f64::MIN_POSITIVE)).count();
            if rank < p || top == 0.0 {
                return Err(Error::RankDeficient { rank: if top == 0.0 { 0 } else { rank }, columns: p });
            }
        }
        let a = xtx + DMatrix::identity(p, p) * inv_kappa;
        let chol = a.clone().cholesky().ok_or(Error::RankDeficient { rank: 0, columns: p })?;
        Ok(Step2Design {
            chol_upper: chol.l().transpose(),
            x,
            chol,
            inv_kappa,
            helmert,
            mode: config.mode,
            moves: config.moves,
            ig: config.ig,
            dim: dataset.dim,
        })
    }

    /// Number of stacked utility rows `D`.
    pub fn rows(&self) -> usize {
        self.x.nrows()
    }

    /// Posterior mean of `u` and the quadratic form `Q`.
    pub fn mean_and_residual(&self, w_tilde: &DVector<f64>) -> (DVector<f64>, f64) {
        let b = self.x.transpose() * w_tilde;
        let m = self.chol.solve(&b);
        let resid = w_tilde - &self.x * &m;
        let q = resid.norm_squared() + self.inv_kappa * m.norm_squared();
        (m, q)
    }

    /// Scale parameters of the conditional law of `z1`.
    pub fn z1_posterior(&self, q: f64) -> InverseGammaParams {
        InverseGammaParams {
            a: self.ig.a + self.rows() as f64 / 2.0,
            b: self.ig.b + q / 2.0,
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, w_prime: &AugmentedData, rng: &mut R) -> Result<Step2Output> {
        let w_tilde = DVector::from_vec(w_prime.stacked());
        if w_tilde.len() != self.rows() {
            return Err(Error::DimensionMismatch { expected: self.rows(), found: w_tilde.len() });
        }
        let (m, q) = self.mean_and_residual(&w_tilde);
        let z1 = if self.moves.has_scale() {
            let post = self.z1_posterior(q);
            if !post.is_proper() {
                return Err(Error::ImproperPrior(
                    "the scale posterior is improper; add data or a proper scale prior".into(),
                ));
            }
            sample_inverse_gamma(&post, rng)?
        } else {
            1.0
        };
        let xi = DVector::from_fn(m.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
        let noise = self
            .chol_upper
            .solve_upper_triangular(&xi)
            .ok_or(Error::RankDeficient { rank: 0, columns: m.len() })?;
        let u = m + noise * z1.sqrt();
        let s = z1.sqrt();
        let (v, z2) = match (self.mode, &self.helmert) {
            (SamplerMode::Tabular, Some(b)) => {
                let v = (b * u) / s;
                (ValueFunction::tabular_sum_zero(v.iter().copied().collect()), 0.0)
            }
            (SamplerMode::Tabular, None) => {
                let mean = u.mean();
                let v: Vec<f64> = u.iter().map(|x| (x - mean) / s).collect();
                (ValueFunction::tabular_sum_zero(v), mean / s)
            }
            (SamplerMode::Basis, _) => (ValueFunction::basis(u.iter().map(|x| x / s).collect()), 0.0),
        };
        debug_assert_eq!(v.len(), self.dim);
        let z = TransformParams { z1, z2 };
        let w = super::transform::apply_transform(w_prime, &z, super::transform::Direction::Forward);
        Ok(Step2Output { v, z, w })
    }
}

/// One Step-2 draw, factorizing the design afresh.
pub fn step2<R: Rng + ?Sized>(
    w_prime: &AugmentedData,
    dataset: &Dataset,
    config: &SamplerConfig,
    rng: &mut R,
) -> Result<Step2Output> {
    config.validate_for(dataset)?;
    Step2Design::new(dataset, config)?.draw(w_prime, rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn helmert_is_orthonormal_and_sum_zero() {
        for n in 2..8 {
            let b = helmert_basis(n);
            let gram = b.transpose() * &b;
            assert!((gram - DMatrix::identity(n - 1, n - 1)).abs().max() < 1e-12);
            let sums = DMatrix::from_element(1, n, 1.0) * &b;
            assert!(sums.abs().max() < 1e-12);
        }
    }
}
