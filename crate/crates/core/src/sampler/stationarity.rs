//! Empirical check that the group-move kernel leaves its target invariant.
//!
//! For `f_Y = N(c·1, σ² I_d)` the transformation step can be drawn exactly:
//! `z` has density `∝ f_Y(φ_z(y)) |J_z(y)|` against left Haar measure.
//! Writing `φ_z(y) = s y − t·1` with `s = z1^{-1/2}` and `t = z2`, this
//! gives `s² ~ Gamma(d/2, |y|²/2σ²)` for scale moves (`c = 0`),
//! `t ~ N(ȳ − c, σ²/d)` for translation, and
//! `s² ~ Gamma((d−1)/2, |y − ȳ1|²/2σ²)`, `t | s ~ N(sȳ − c, σ²/d)` for both.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use super::config::Moves;
use super::transform::TransformParams;
use crate::diagnostics::{ks_one_sample, KsResult};
use crate::error::{Error, Result};
use crate::probability::std_normal_cdf;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoordinateCheck {
    pub mean: f64,
    pub var: f64,
    /// Standard errors of the sample mean and variance under the target.
    pub mean_se: f64,
    pub var_se: f64,
    pub ks: KsResult,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationarityReport {
    pub moves: Moves,
    pub dim: usize,
    pub center: f64,
    pub sd: f64,
    pub draws: usize,
    pub coordinates: Vec<CoordinateCheck>,
}

impl StationarityReport {
    /// Moments within `k` standard errors and every KS p-value above `alpha`.
    pub fn passes(&self, k: f64, alpha: f64) -> bool {
        self.coordinates.iter().all(|c| {
            (c.mean - self.center).abs() <= k * c.mean_se
                && (c.var - self.sd * self.sd).abs() <= k * c.var_se
                && c.ks.p_value > alpha
        })
    }
}

/// Draw the working parameters from the exact transformation kernel.
pub fn sample_transformation<R: Rng + ?Sized>(
    y: &[f64],
    moves: Moves,
    center: f64,
    sd: f64,
    rng: &mut R,
) -> Result<TransformParams> {
    let d = y.len() as f64;
    let var = sd * sd;
    let mean = y.iter().sum::<f64>() / d;
    let gamma_s2 = |shape: f64, ss: f64, rng: &mut R| -> Result<f64> {
        let g = Gamma::new(shape, 2.0 * var / ss).map_err(|e| Error::invalid(e.to_string()))?;
        Ok(g.sample(rng))
    };
    let (s, t) = match moves {
        Moves::None => (1.0, 0.0),
        Moves::Scale => {
            let ss: f64 = y.iter().map(|x| x * x).sum();
            (gamma_s2(d / 2.0, ss, rng)?.sqrt(), 0.0)
        }
        Moves::Translate => (1.0, mean - center + (var / d).sqrt() * rng.sample::<f64, _>(StandardNormal)),
        Moves::ScaleTranslate => {
            let ss: f64 = y.iter().map(|x| (x - mean).powi(2)).sum();
            let s = gamma_s2((d - 1.0) / 2.0, ss, rng)?.sqrt();
            (s, s * mean - center + (var / d).sqrt() * rng.sample::<f64, _>(StandardNormal))
        }
    };
    TransformParams::new(1.0 / (s * s), t)
}

/// Draw `y ~ f_Y`, apply one exact transformation step, and compare the
/// output marginals with `f_Y`.
pub fn stationary_check_q<R: Rng + ?Sized>(
    dim: usize,
    moves: Moves,
    draws: usize,
    rng: &mut R,
) -> Result<StationarityReport> {
    if dim == 0 || draws < 2 {
        return Err(Error::invalid("need a positive dimension and at least two draws"));
    }
    if moves.has_translate() && moves.has_scale() && dim < 2 {
        return Err(Error::invalid("joint scale and translation moves need dim >= 2"));
    }
    let sd = 2.0;
    let center = if moves.has_translate() { 1.5 } else { 0.0 };
    let mut out = vec![Vec::with_capacity(draws); dim];
    let mut y = vec![0.0; dim];
    for _ in 0..draws {
        for yi in y.iter_mut() {
            *yi = center + sd * rng.sample::<f64, _>(StandardNormal);
        }
        let z = sample_transformation(&y, moves, center, sd, rng)?;
        for (col, &yi) in out.iter_mut().zip(&y) {
            col.push(z.forward(yi));
        }
    }
    let n = draws as f64;
    let coordinates = out
        .iter()
        .map(|col| {
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let ks = ks_one_sample(col, |x| std_normal_cdf((x - center) / sd));
            CoordinateCheck {
                mean,
                var,
                mean_se: sd / n.sqrt(),
                var_se: sd * sd * (2.0 / (n - 1.0)).sqrt(),
                ks,
            }
        })
        .collect();
    Ok(StationarityReport { moves, dim, center, sd, draws, coordinates })
}
