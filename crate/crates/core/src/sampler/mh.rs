//! Step-1 kernels for one observation's latent utilities.
//!
//! Under `w ~ N(μ, I)` restricted to `w(c) ≥ w(j)`, the chosen coordinate
//! has marginal `p_u(x) ∝ φ(x − μ_c) ∏_{j≠c} Φ(x − μ_j)` and, given it, the
//! others are independent normals truncated above at `x`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probability::{inverse_mills_ratio, normal_logpdf, sample_truncated_normal, std_normal_log_cdf};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewtonSettings {
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        NewtonSettings {
            max_iterations: 20,
            tolerance: 1e-9,
        }
    }
}

/// Gaussian independence proposal for the chosen coordinate, optionally
/// mixed with a component of variance at least one.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProposalParams {
    pub mean: f64,
    pub var: f64,
    /// False when Newton refinement failed and the merged-factor
    /// approximation is used as is.
    pub refined: bool,
    /// Weight of the `N(mean, max(var, 1))` component.
    pub defensive: f64,
}

impl ProposalParams {
    pub fn with_defensive(self, weight: f64) -> Self {
        ProposalParams { defensive: weight, ..self }
    }

    fn tail_var(&self) -> f64 {
        self.var.max(1.0)
    }

    pub fn log_density(&self, x: f64) -> f64 {
        let core = normal_logpdf(x, self.mean, self.var);
        if self.defensive <= 0.0 {
            return core;
        }
        let tail = normal_logpdf(x, self.mean, self.tail_var());
        let (a, b) = ((1.0 - self.defensive).ln() + core, self.defensive.ln() + tail);
        let hi = a.max(b);
        hi + ((a - hi).exp() + (b - hi).exp()).ln()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let var = if self.defensive > 0.0 && rng.random::<f64>() < self.defensive {
            self.tail_var()
        } else {
            self.var
        };
        self.mean + var.sqrt() * rng.sample::<f64, _>(StandardNormal)
    }
}

/// `log p_u(x)` up to a constant.
pub fn log_target(x: f64, mu: &[f64], chosen: usize) -> f64 {
    let mut f = -0.5 * (x - mu[chosen]).powi(2);
    for (j, &m) in mu.iter().enumerate() {
        if j != chosen {
            f += std_normal_log_cdf(x - m);
        }
    }
    f
}

/// First and second derivatives of `log p_u`.
fn derivatives(x: f64, mu: &[f64], chosen: usize) -> (f64, f64) {
    let mut g = -(x - mu[chosen]);
    let mut h = -1.0;
    for (j, &m) in mu.iter().enumerate() {
        if j != chosen {
            let t = x - m;
            let lam = inverse_mills_ratio(t);
            g += lam;
            h -= lam * (t + lam);
        }
    }
    (g, h)
}

fn merged_factors(mu: &[f64], chosen: usize) -> (f64, f64) {
    let mut others: Vec<f64> = mu
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != chosen)
        .map(|(_, &m)| m)
        .collect();
    others.sort_by(|a, b| b.total_cmp(a));
    let mut mean = mu[chosen];
    let mut precision = 1.0;
    for m in others {
        if m > mean {
            mean = (precision * mean + m) / (precision + 1.0);
            precision += 1.0;
        } else {
            break;
        }
    }
    (mean, 1.0 / precision)
}

/// Crude factor-merged Gaussian, refined by Newton-Raphson to the mode of
/// `p_u` and its inverse negative curvature.
pub fn mh_proposal_params(mu: &[f64], chosen: usize, settings: &NewtonSettings) -> Result<ProposalParams> {
    if mu.is_empty() {
        return Err(Error::EmptyActionSet);
    }
    if chosen >= mu.len() {
        return Err(Error::invalid(format!("chosen index {chosen} out of range")));
    }
    let (m0, v0) = merged_factors(mu, chosen);
    let fallback = ProposalParams { mean: m0, var: v0, refined: false, defensive: 0.0 };
    let mut x = m0;
    let mut fx = log_target(x, mu, chosen);
    for _ in 0..=settings.max_iterations {
        let (g, h) = derivatives(x, mu, chosen);
        if !g.is_finite() || !(h < 0.0) || !h.is_finite() {
            return Ok(fallback);
        }
        if g.abs() <= settings.tolerance {
            return Ok(ProposalParams { mean: x, var: -1.0 / h, refined: true, defensive: 0.0 });
        }
        let mut step = -g / h;
        let mut accepted = false;
        for _ in 0..50 {
            let cand = x + step;
            let fc = log_target(cand, mu, chosen);
            if fc.is_finite() && fc >= fx - 1e-12 * fx.abs().max(1.0) {
                x = cand;
                fx = fc;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            return Ok(fallback);
        }
    }
    Ok(fallback)
}

/// Draw the non-chosen coordinates from their conditional given `w(chosen)`.
pub fn refresh_competitors<R: Rng + ?Sized>(w: &mut [f64], mu: &[f64], chosen: usize, rng: &mut R) -> Result<()> {
    let top = w[chosen];
    for j in 0..w.len() {
        if j != chosen {
            w[j] = sample_truncated_normal(mu[j], 1.0, f64::NEG_INFINITY, top, rng)?;
        }
    }
    Ok(())
}

/// One independence Metropolis-Hastings update of `w(chosen)` followed by a
/// conditional refresh of the other coordinates. Returns whether the
/// proposal was accepted.
pub fn mh_step_w<R: Rng + ?Sized>(
    w: &mut [f64],
    mu: &[f64],
    chosen: usize,
    proposal: &ProposalParams,
    rng: &mut R,
) -> Result<bool> {
    if w.len() != mu.len() {
        return Err(Error::DimensionMismatch { expected: mu.len(), found: w.len() });
    }
    let cand = proposal.sample(rng);
    let cur = w[chosen];
    let log_ratio = log_target(cand, mu, chosen) - log_target(cur, mu, chosen) + proposal.log_density(cur)
        - proposal.log_density(cand);
    let u: f64 = rng.random();
    let accepted = log_ratio >= 0.0 || u.ln() < log_ratio;
    if accepted {
        w[chosen] = cand;
    }
    refresh_competitors(w, mu, chosen, rng)?;
    Ok(accepted)
}

/// Exact draw of the whole vector by rejection: `w(chosen)` from
/// `N(μ_c, 1)` accepted with probability `∏ Φ(x − μ_j)`.
pub fn exact_step_w<R: Rng + ?Sized>(
    w: &mut [f64],
    mu: &[f64],
    chosen: usize,
    max_attempts: usize,
    rng: &mut R,
) -> Result<()> {
    if w.len() != mu.len() {
        return Err(Error::DimensionMismatch { expected: mu.len(), found: w.len() });
    }
    for _ in 0..max_attempts {
        let x = mu[chosen] + rng.sample::<f64, _>(StandardNormal);
        let log_accept: f64 = mu
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != chosen)
            .map(|(_, &m)| std_normal_log_cdf(x - m))
            .sum();
        let u: f64 = rng.random();
        if u.ln() < log_accept {
            w[chosen] = x;
            return refresh_competitors(w, mu, chosen, rng);
        }
    }
    Err(Error::RejectionExhausted(max_attempts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn golden_section_mode(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
        let r = (5f64.sqrt() - 1.0) / 2.0;
        let mut c = b - r * (b - a);
        let mut d = a + r * (b - a);
        while (b - a).abs() > 1e-12 {
            if f(c) > f(d) {
                b = d;
            } else {
                a = c;
            }
            c = b - r * (b - a);
            d = a + r * (b - a);
        }
        0.5 * (a + b)
    }

    #[test]
    fn single_action_proposal_is_exact() {
        let p = mh_proposal_params(&[2.5], 0, &NewtonSettings::default()).unwrap();
        assert_eq!((p.mean, p.var, p.refined), (2.5, 1.0, true));
        let mut rng = RngStream::new(40, 0).rng();
        let mut w = [0.0];
        for _ in 0..1000 {
            assert!(mh_step_w(&mut w, &[2.5], 0, &p, &mut rng).unwrap());
        }
    }

    #[test]
    fn distant_competitor_leaves_a_standard_normal() {
        let mu = [0.0, -10.0];
        let p = mh_proposal_params(&mu, 0, &NewtonSettings::default()).unwrap();
        let mode = golden_section_mode(|x| log_target(x, &mu, 0), -5.0, 5.0);
        assert!(mode.abs() < 1e-6);
        assert!(p.mean.abs() < 1e-6 && (p.var - 1.0).abs() < 1e-6);
    }

    #[test]
    fn equal_means_mode_matches_golden_section() {
        let mu = [0.0, 0.0];
        let p = mh_proposal_params(&mu, 0, &NewtonSettings::default()).unwrap();
        let mode = golden_section_mode(|x| log_target(x, &mu, 0), -5.0, 5.0);
        assert!(p.refined);
        assert!((p.mean - mode).abs() < 1e-6, "{} vs {mode}", p.mean);
        // Curvature against a central difference.
        let h = 1e-4;
        let f2 = (log_target(mode + h, &mu, 0) - 2.0 * log_target(mode, &mu, 0) + log_target(mode - h, &mu, 0)) / (h * h);
        assert!((p.var + 1.0 / f2).abs() < 1e-5);
    }

    #[test]
    fn many_competitors_and_extreme_gaps() {
        let s = NewtonSettings::default();
        for mu in [
            vec![0.0, 5.0, 5.0, 4.0, -3.0],
            vec![-30.0, 0.0, 1.0],
            vec![40.0, 0.0, -40.0],
            vec![0.0; 30],
        ] {
            for c in 0..mu.len() {
                let p = mh_proposal_params(&mu, c, &s).unwrap();
                assert!(p.refined, "{mu:?} {c}");
                let mode = golden_section_mode(|x| log_target(x, &mu, c), -80.0, 80.0);
                assert!((p.mean - mode).abs() < 1e-5, "{mu:?} {c}: {} vs {mode}", p.mean);
                assert!(p.var > 0.0 && p.var <= 1.0);
            }
        }
    }

    #[test]
    fn zero_iterations_falls_back_to_merged_factors() {
        let s = NewtonSettings { max_iterations: 0, tolerance: 1e-9 };
        let p = mh_proposal_params(&[0.0, 2.0, 1.0], 0, &s).unwrap();
        assert!(!p.refined);
        // Merge 2.0 → mean 1.0, precision 2; 1.0 is not above the mean.
        assert_eq!((p.mean, p.var), (1.0, 0.5));
    }

    #[test]
    fn outputs_respect_truncation() {
        let mut rng = RngStream::new(41, 0).rng();
        let mu = [0.3, 2.0, -1.0, 1.5];
        let p = mh_proposal_params(&mu, 2, &NewtonSettings::default()).unwrap();
        let mut w = [0.0, 0.0, 1.0, 0.0];
        for _ in 0..2000 {
            mh_step_w(&mut w, &mu, 2, &p, &mut rng).unwrap();
            assert!(w.iter().all(|&x| x <= w[2]));
            exact_step_w(&mut w, &mu, 2, 100_000, &mut rng).unwrap();
            assert!(w.iter().all(|&x| x <= w[2]));
        }
    }

    #[test]
    fn rejection_cap_is_reported() {
        let mut rng = RngStream::new(42, 0).rng();
        let mut w = [1.0, 0.0];
        let err = exact_step_w(&mut w, &[-40.0, 40.0], 0, 10, &mut rng).unwrap_err();
        assert!(matches!(err, Error::RejectionExhausted(10)));
    }

    #[test]
    fn mixture_density_integrates_to_one() {
        let p = mh_proposal_params(&[0.0, 0.5, 0.4, 0.2], 0, &NewtonSettings::default())
            .unwrap()
            .with_defensive(0.25);
        assert!(p.var < 1.0);
        let h = 1e-3;
        let total: f64 = (0..40_000).map(|k| (p.log_density(-20.0 + k as f64 * h)).exp() * h).sum();
        assert!((total - 1.0).abs() < 1e-6, "{total}");
    }

    #[test]
    fn defensive_component_escapes_the_upper_tail() {
        // Competitors tied with the chosen action give a proposal narrower
        // than the unit-variance right tail of the target.
        let mu = [0.0, 0.0, 0.0, 0.0];
        let base = mh_proposal_params(&mu, 0, &NewtonSettings::default()).unwrap();
        assert!(base.var < 0.5);
        let mut rng = RngStream::new(43, 0).rng();
        let steps_to_escape = |p: &ProposalParams, rng: &mut crate::rng::Rng| {
            let mut w = [12.0, 0.0, 0.0, 0.0];
            (1..=500).find(|_| mh_step_w(&mut w, &mu, 0, p, rng).unwrap())
        };
        assert_eq!(steps_to_escape(&base, &mut rng), None);
        let escaped = steps_to_escape(&base.with_defensive(0.1), &mut rng);
        assert!(escaped.is_some_and(|n| n < 100), "{escaped:?}");
    }
}
