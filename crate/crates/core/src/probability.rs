//! Random-variate primitives and densities used by the sampler.
//!
//! Everything here is a pure function of its arguments plus an explicitly
//! passed generator.

use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};
use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use statrs::function::erf;

use crate::error::{Error, Result};
use crate::mdp::ValueFunction;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Standardized truncation points beyond this use exponential rejection
/// instead of inverse-CDF sampling.
const TAIL_SWITCH: f64 = 4.0;

/// Below this argument `log Φ` and the inverse Mills ratio are computed from
/// the continued fraction rather than from `erfc`.
const CF_SWITCH: f64 = -5.0;

pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erf::erfc(-x * FRAC_1_SQRT_2)
}

pub fn std_normal_logpdf(x: f64) -> f64 {
    -0.5 * x * x - HALF_LN_2PI
}

pub fn normal_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * d * d / var - 0.5 * var.ln() - HALF_LN_2PI
}

/// Mills ratio `Φ(-y) / φ(y)` for `y >= 5`, by backward evaluation of the
/// Laplace continued fraction.
fn mills_ratio_tail(y: f64) -> f64 {
    debug_assert!(y >= -CF_SWITCH - 1e-12);
    let mut acc = y;
    for k in (1..=120).rev() {
        acc = y + k as f64 / acc;
    }
    1.0 / acc
}

/// `log Φ(x)`, accurate in both tails.
pub fn std_normal_log_cdf(x: f64) -> f64 {
    if x < CF_SWITCH {
        std_normal_logpdf(x) + mills_ratio_tail(-x).ln()
    } else if x > 0.0 {
        (-0.5 * erf::erfc(x * FRAC_1_SQRT_2)).ln_1p()
    } else {
        std_normal_cdf(x).ln()
    }
}

/// Inverse Mills ratio `φ(x) / Φ(x)`.
pub fn inverse_mills_ratio(x: f64) -> f64 {
    if x < CF_SWITCH {
        1.0 / mills_ratio_tail(-x)
    } else {
        (std_normal_logpdf(x) - std_normal_log_cdf(x)).exp()
    }
}

/// Standard normal quantile.
pub fn std_normal_quantile(p: f64) -> f64 {
    -SQRT_2 * erf::erfc_inv(2.0 * p)
}

/// Draw from `N(mean, sd²)` restricted to `[lower, upper]`. Either bound may
/// be infinite.
pub fn sample_truncated_normal<R: Rng + ?Sized>(
    mean: f64,
    sd: f64,
    lower: f64,
    upper: f64,
    rng: &mut R,
) -> Result<f64> {
    if !(sd > 0.0) || !sd.is_finite() {
        return Err(Error::invalid(format!("standard deviation must be positive, got {sd}")));
    }
    if lower.is_nan() || upper.is_nan() || lower >= upper {
        return Err(Error::invalid(format!("empty truncation interval [{lower}, {upper}]")));
    }
    let a = (lower - mean) / sd;
    let b = (upper - mean) / sd;
    let z = std_truncated(a, b, rng);
    Ok((mean + sd * z).clamp(lower, upper))
}

fn std_truncated<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    if a > TAIL_SWITCH {
        tail_exponential(a, b, rng)
    } else if b < -TAIL_SWITCH {
        -tail_exponential(-b, -a, rng)
    } else if a > 0.0 {
        // Work in the lower tail, where CDF values carry full precision.
        -inverse_cdf_interval(-b, -a, rng)
    } else {
        inverse_cdf_interval(a, b, rng)
    }
}

fn inverse_cdf_interval<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    let pa = std_normal_cdf(a);
    let pb = std_normal_cdf(b);
    loop {
        let u: f64 = rng.random();
        let p = pa + u * (pb - pa);
        if p <= 0.0 || p >= 1.0 {
            continue;
        }
        let x = std_normal_quantile(p);
        if x.is_finite() {
            return x.clamp(a, b);
        }
    }
}

/// Exponential-proposal rejection for `[a, b]` with `a >= 4`.
fn tail_exponential<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    let rate = 0.5 * (a + (a * a + 4.0).sqrt());
    let width = b - a;
    // Mass of the exponential proposal inside the interval.
    let span = if width.is_finite() {
        -(-rate * width).exp_m1()
    } else {
        1.0
    };
    loop {
        let u: f64 = rng.random();
        let x = a - (-u * span).ln_1p() / rate;
        if x > b {
            continue;
        }
        let v: f64 = rng.random();
        let d = x - rate;
        if v.ln() <= -0.5 * d * d {
            return x;
        }
    }
}

/// Prior variance `κ`, which may be the improper (flat) limit.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct Kappa(f64);

impl Kappa {
    pub const INFINITE: Kappa = Kappa(f64::INFINITY);

    pub fn finite(value: f64) -> Result<Self> {
        if value > 0.0 && value.is_finite() {
            Ok(Kappa(value))
        } else {
            Err(Error::invalid(format!("kappa must be positive and finite, got {value}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }

    /// `1/κ`, which is zero in the flat limit.
    pub fn precision(self) -> f64 {
        if self.0.is_finite() {
            1.0 / self.0
        } else {
            0.0
        }
    }
}

impl fmt::Display for Kappa {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_finite() {
            write!(f, "{}", self.0)
        } else {
            f.write_str("inf")
        }
    }
}

impl Serialize for Kappa {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            s.serialize_f64(self.0)
        } else {
            s.serialize_str("inf")
        }
    }
}

impl<'de> Deserialize<'de> for Kappa {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Kappa::finite(v).map_err(serde::de::Error::custom),
            Repr::Text(t) if matches!(t.as_str(), "inf" | "infinity" | "Infinity") => {
                Ok(Kappa::INFINITE)
            }
            Repr::Text(t) => t
                .parse::<f64>()
                .map_err(serde::de::Error::custom)
                .and_then(|v| Kappa::finite(v).map_err(serde::de::Error::custom)),
        }
    }
}

/// `N(0, κ I_N)` conditioned on the components summing to zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SumZeroGaussianPrior {
    pub dim: usize,
    pub kappa: Kappa,
}

impl SumZeroGaussianPrior {
    pub fn new(dim: usize, kappa: Kappa) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("sum-zero prior needs at least one state"));
        }
        Ok(SumZeroGaussianPrior { dim, kappa })
    }

    /// Covariance of the first `N - 1` free coordinates,
    /// `κ I - κ N⁻¹ 1 1ᵀ`.
    pub fn free_covariance(&self) -> nalgebra::DMatrix<f64> {
        let m = self.dim.saturating_sub(1);
        let k = self.kappa.value();
        nalgebra::DMatrix::from_fn(m, m, |i, j| {
            let d = if i == j { k } else { 0.0 };
            d - k / self.dim as f64
        })
    }
}

/// Draw `V = U - mean(U) 1` with `U ~ N(0, κ I_N)`.
pub fn sample_sum_zero_gaussian<R: Rng + ?Sized>(
    prior: &SumZeroGaussianPrior,
    rng: &mut R,
) -> Result<ValueFunction> {
    if !prior.kappa.is_finite() {
        return Err(Error::ImproperPrior("cannot draw from a flat sum-zero prior".into()));
    }
    let sd = prior.kappa.value().sqrt();
    let mut u: Vec<f64> = (0..prior.dim)
        .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let mean = u.iter().sum::<f64>() / prior.dim as f64;
    u.iter_mut().for_each(|x| *x -= mean);
    Ok(ValueFunction::tabular_sum_zero(u))
}

/// Inverse gamma `IG(a, b)` with density `∝ x^{-a-1} exp(-b/x)`. `a = b = 0`
/// is the improper scale-invariant limit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InverseGammaParams {
    pub a: f64,
    pub b: f64,
}

impl InverseGammaParams {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a >= 0.0 && b >= 0.0 && a.is_finite() && b.is_finite()) {
            return Err(Error::invalid(format!("inverse gamma needs a, b >= 0, got ({a}, {b})")));
        }
        Ok(InverseGammaParams { a, b })
    }

    pub fn improper() -> Self {
        InverseGammaParams { a: 0.0, b: 0.0 }
    }

    pub fn is_improper(&self) -> bool {
        self.a == 0.0 && self.b == 0.0
    }

    pub fn is_proper(&self) -> bool {
        self.a > 0.0 && self.b > 0.0
    }
}

pub fn sample_inverse_gamma<R: Rng + ?Sized>(params: &InverseGammaParams, rng: &mut R) -> Result<f64> {
    if !params.is_proper() {
        return Err(Error::ImproperPrior(format!(
            "IG({}, {}) has no normalized density to sample",
            params.a, params.b
        )));
    }
    let gamma = Gamma::new(params.a, 1.0).map_err(|e| Error::invalid(e.to_string()))?;
    let g: f64 = gamma.sample(rng);
    Ok(params.b / g)
}

/// Log density; unnormalized (`-(a+1) ln x - b/x`) when the parameters are
/// improper.
pub fn log_density_inverse_gamma(x: f64, params: &InverseGammaParams) -> f64 {
    if !(x > 0.0) {
        return f64::NEG_INFINITY;
    }
    let kernel = -(params.a + 1.0) * x.ln() - params.b / x;
    if params.is_proper() {
        kernel + params.a * params.b.ln() - statrs::function::gamma::ln_gamma(params.a)
    } else {
        kernel
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use std::f64::consts::{LN_2, PI};

    #[test]
    fn cdf_reference_values() {
        assert_eq!(std_normal_cdf(0.0), 0.5);
        assert!((std_normal_cdf(40.0) - 1.0).abs() < 1e-15);
        assert!((std_normal_cdf(1.0) - 0.841_344_746_068_542_9).abs() < 1e-9);
        assert!((0.5 * (LN_2 + PI.ln()) - HALF_LN_2PI).abs() < 1e-15);
    }

    #[test]
    fn log_cdf_matches_direct_evaluation_where_both_are_accurate() {
        for &x in &[-4.9, -3.0, -1.0, 0.0, 0.5, 2.0, 6.0] {
            let direct = std_normal_cdf(x).ln();
            assert!((std_normal_log_cdf(x) - direct).abs() < 1e-12 * direct.abs().max(1.0));
        }
        // Continuity across the continued-fraction switch.
        let lo = std_normal_log_cdf(CF_SWITCH - 1e-9);
        let hi = std_normal_log_cdf(CF_SWITCH + 1e-9);
        assert!((lo - hi).abs() < 1e-7);
        // Deep tail against the asymptotic expansion.
        let x: f64 = -50.0;
        let asym = std_normal_logpdf(x) - (-x).ln() + (1.0 - 1.0 / (x * x) + 3.0 / x.powi(4)).ln();
        assert!((std_normal_log_cdf(x) - asym).abs() < 1e-8);
    }

    #[test]
    fn inverse_mills_is_continuous_and_positive() {
        let a = inverse_mills_ratio(CF_SWITCH - 1e-9);
        let b = inverse_mills_ratio(CF_SWITCH + 1e-9);
        assert!((a - b).abs() < 1e-6);
        assert!(inverse_mills_ratio(-100.0) > 99.0);
        assert!(inverse_mills_ratio(10.0) > 0.0);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for &p in &[1e-12, 1e-5, 0.1, 0.5, 0.9, 0.999] {
            let x = std_normal_quantile(p);
            assert!((std_normal_cdf(x) - p).abs() < 1e-9 * p.max(1e-3));
        }
    }

    #[test]
    fn truncated_rejects_empty_interval() {
        let mut rng = RngStream::new(0, 0).rng();
        assert!(sample_truncated_normal(0.0, 1.0, 1.0, 1.0, &mut rng).is_err());
        assert!(sample_truncated_normal(0.0, 1.0, 2.0, 1.0, &mut rng).is_err());
        assert!(sample_truncated_normal(0.0, 0.0, 0.0, 1.0, &mut rng).is_err());
    }

    #[test]
    fn truncated_untruncated_mean() {
        let mut rng = RngStream::new(1, 0).rng();
        let n = 100_000;
        let m: f64 = (0..n)
            .map(|_| sample_truncated_normal(0.0, 1.0, f64::NEG_INFINITY, f64::INFINITY, &mut rng).unwrap())
            .sum::<f64>()
            / n as f64;
        assert!(m.abs() < 0.02, "{m}");
    }

    #[test]
    fn truncated_half_normal_mean() {
        let mut rng = RngStream::new(2, 0).rng();
        let n = 100_000;
        let m: f64 = (0..n)
            .map(|_| sample_truncated_normal(0.0, 1.0, f64::NEG_INFINITY, 0.0, &mut rng).unwrap())
            .sum::<f64>()
            / n as f64;
        assert!((m + (2.0 / PI).sqrt()).abs() < 0.02, "{m}");
    }

    #[test]
    fn truncated_far_tail_matches_quadrature() {
        // N(5, 1) restricted to (-inf, 0]: the truncation point is 5 sd out.
        let mut rng = RngStream::new(3, 0).rng();
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let x = sample_truncated_normal(5.0, 1.0, f64::NEG_INFINITY, 0.0, &mut rng).unwrap();
            assert!(x <= 0.0);
            sum += x;
        }
        // Trapezoid quadrature of x·φ(x-5) and φ(x-5) on [-15, 0].
        let (mut num, mut den) = (0.0, 0.0);
        let steps = 200_000;
        let h = 15.0 / steps as f64;
        for i in 0..=steps {
            let x = -15.0 + i as f64 * h;
            let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
            let d = (-(x - 5.0) * (x - 5.0) / 2.0).exp();
            num += w * x * d;
            den += w * d;
        }
        let oracle = num / den;
        assert!((sum / n as f64 - oracle).abs() < 0.05, "{} vs {oracle}", sum / n as f64);
    }

    #[test]
    fn truncated_two_sided_tail_interval_stays_inside() {
        let mut rng = RngStream::new(4, 0).rng();
        for _ in 0..10_000 {
            let x = sample_truncated_normal(0.0, 2.0, 9.0, 9.5, &mut rng).unwrap();
            assert!((9.0..=9.5).contains(&x));
            let y = sample_truncated_normal(0.0, 1.0, -0.3, 0.2, &mut rng).unwrap();
            assert!((-0.3..=0.2).contains(&y));
        }
    }

    #[test]
    fn sum_zero_pair_variance() {
        let prior = SumZeroGaussianPrior::new(2, Kappa::finite(1.0).unwrap()).unwrap();
        let mut rng = RngStream::new(5, 0).rng();
        let n = 100_000;
        let mut s2 = 0.0;
        for _ in 0..n {
            let v = sample_sum_zero_gaussian(&prior, &mut rng).unwrap();
            assert!((v.values()[0] + v.values()[1]).abs() < 1e-12);
            s2 += v.values()[0] * v.values()[0];
        }
        assert!((s2 / n as f64 - 0.5).abs() < 0.02);
    }

    #[test]
    fn sum_zero_mean_and_covariance() {
        let kappa = 2500.0;
        let prior = SumZeroGaussianPrior::new(3, Kappa::finite(kappa).unwrap()).unwrap();
        let mut rng = RngStream::new(6, 0).rng();
        let n = 100_000;
        let mut mean = [0.0; 3];
        let mut cov = [[0.0; 3]; 3];
        for _ in 0..n {
            let v = sample_sum_zero_gaussian(&prior, &mut rng).unwrap();
            let x = v.values();
            assert!(x.iter().sum::<f64>().abs() < 1e-9);
            for i in 0..3 {
                mean[i] += x[i];
                for j in 0..3 {
                    cov[i][j] += x[i] * x[j];
                }
            }
        }
        for i in 0..3 {
            // Standardized: sd of each component is sqrt(2κ/3) ≈ 40.8.
            assert!((mean[i] / n as f64).abs() / (2.0 * kappa / 3.0).sqrt() < 0.02);
            for j in 0..3 {
                let expect = kappa * (if i == j { 1.0 } else { 0.0 } - 1.0 / 3.0);
                let got = cov[i][j] / n as f64;
                assert!((got - expect).abs() <= 0.03 * expect.abs(), "{i}{j}: {got} vs {expect}");
            }
        }
    }

    #[test]
    fn sum_zero_rejects_flat_prior() {
        let prior = SumZeroGaussianPrior::new(3, Kappa::INFINITE).unwrap();
        let mut rng = RngStream::new(0, 0).rng();
        assert!(matches!(
            sample_sum_zero_gaussian(&prior, &mut rng),
            Err(Error::ImproperPrior(_))
        ));
    }

    #[test]
    fn free_covariance_is_positive_definite() {
        let prior = SumZeroGaussianPrior::new(5, Kappa::finite(3.0).unwrap()).unwrap();
        let c = prior.free_covariance();
        assert!(c.clone().cholesky().is_some());
        assert_eq!(c, c.transpose());
    }

    #[test]
    fn inverse_gamma_means() {
        let mut rng = RngStream::new(7, 0).rng();
        let n = 100_000;
        for &(a, b) in &[(3.0, 1e5), (5.0, 0.5)] {
            let p = InverseGammaParams::new(a, b).unwrap();
            let m: f64 = (0..n).map(|_| sample_inverse_gamma(&p, &mut rng).unwrap()).sum::<f64>() / n as f64;
            let expect = b / (a - 1.0);
            assert!((m - expect).abs() < 0.02 * expect, "{m} vs {expect}");
        }
    }

    #[test]
    fn inverse_gamma_mode_dominates() {
        let p = InverseGammaParams::new(3.0, 2.0).unwrap();
        let mode = p.b / (p.a + 1.0);
        assert!(log_density_inverse_gamma(mode, &p) > log_density_inverse_gamma(2.0 * mode, &p));
        assert_eq!(log_density_inverse_gamma(0.0, &p), f64::NEG_INFINITY);
    }

    #[test]
    fn improper_inverse_gamma_refuses_to_sample() {
        let mut rng = RngStream::new(0, 0).rng();
        assert!(sample_inverse_gamma(&InverseGammaParams::improper(), &mut rng).is_err());
        assert!(InverseGammaParams::new(-1.0, 1.0).is_err());
    }

    #[test]
    fn kappa_serde() {
        let k: Kappa = serde_json::from_str("\"inf\"").unwrap();
        assert!(!k.is_finite());
        assert_eq!(serde_json::to_string(&k).unwrap(), "\"inf\"");
        let k: Kappa = serde_json::from_str("2500").unwrap();
        assert_eq!(k.value(), 2500.0);
        assert!(serde_json::from_str::<Kappa>("-1").is_err());
    }
}
