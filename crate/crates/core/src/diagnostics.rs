//! Chain-quality measurements: autocorrelation, asymptotic variance,
//! effective sample size, chain comparison, goodness-of-fit tests, and CSV
//! exports for plotting.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::PosteriorSamples;
use crate::util::fmt17;

/// Lag at which the default variance window stops.
pub const DEFAULT_WINDOW_CUTOFF: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcfReport {
    pub component: usize,
    pub lags: Vec<usize>,
    pub acf: Vec<f64>,
    /// Bartlett standard errors.
    pub std_error: Vec<f64>,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Biased autocovariances `ĉ_0 … ĉ_max_lag`.
pub fn autocovariances(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let n = series.len();
    if n < 2 || n <= 2 * max_lag {
        return Err(Error::invalid(format!(
            "series of length {n} is too short for lag {max_lag}"
        )));
    }
    let m = mean(series);
    let centered: Vec<f64> = series.iter().map(|x| x - m).collect();
    let c: Vec<f64> = (0..=max_lag)
        .map(|k| centered[..n - k].iter().zip(&centered[k..]).map(|(a, b)| a * b).sum::<f64>() / n as f64)
        .collect();
    if !(c[0] > 0.0) {
        return Err(Error::invalid("series has zero variance"));
    }
    Ok(c)
}

pub fn autocorrelation(series: &[f64], max_lag: usize) -> Result<AcfReport> {
    autocorrelation_of(series, 0, max_lag)
}

/// As [`autocorrelation`], labelled with a component index.
pub fn autocorrelation_of(series: &[f64], component: usize, max_lag: usize) -> Result<AcfReport> {
    let c = autocovariances(series, max_lag)?;
    let acf: Vec<f64> = c.iter().map(|ck| ck / c[0]).collect();
    let n = series.len() as f64;
    let mut std_error = Vec::with_capacity(acf.len());
    let mut acc = 1.0;
    for (k, r) in acf.iter().enumerate() {
        std_error.push(if k == 0 { 0.0 } else { (acc / n).sqrt() });
        if k > 0 {
            acc += 2.0 * r * r;
        }
    }
    Ok(AcfReport { component, lags: (0..=max_lag).collect(), acf, std_error })
}

/// First lag whose autocorrelation drops below the cutoff, capped below
/// half the series length.
pub fn default_window(series: &[f64]) -> Result<usize> {
    let n = series.len();
    let c0 = autocovariances(series, 0)?[0];
    let m = mean(series);
    let centered: Vec<f64> = series.iter().map(|x| x - m).collect();
    let cap = (n - 1) / 2;
    for k in 1..=cap {
        let ck = centered[..n - k].iter().zip(&centered[k..]).map(|(a, b)| a * b).sum::<f64>() / n as f64;
        if ck / c0 < DEFAULT_WINDOW_CUTOFF {
            return Ok(k);
        }
    }
    Ok(cap)
}

/// `ĉ_0 + 2 Σ_{i=1}^{window} ĉ_i`. The truncated estimate is returned as is
/// even when negative.
pub fn asymptotic_variance(series: &[f64], window: usize) -> Result<f64> {
    if 2 * window >= series.len() {
        return Err(Error::invalid(format!(
            "window {window} must be below half the series length {}",
            series.len()
        )));
    }
    let c = autocovariances(series, window)?;
    Ok(c[0] + 2.0 * c[1..].iter().sum::<f64>())
}

/// `n ĉ_0 / σ̂²` with the default window, clamped to `(0, n]`.
pub fn effective_sample_size(series: &[f64]) -> Result<f64> {
    let n = series.len() as f64;
    let window = default_window(series)?;
    let c0 = autocovariances(series, 0)?[0];
    let sigma2 = asymptotic_variance(series, window)?;
    Ok(if sigma2 > 0.0 { (n * c0 / sigma2).clamp(f64::MIN_POSITIVE, n) } else { n })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentSummary {
    pub mean: f64,
    pub sd: f64,
    pub ess: f64,
    /// Monte Carlo standard error of the mean, `sd / √ESS`.
    pub mc_std_error: f64,
    /// The truncated variance estimate came out non-positive.
    pub negative_variance: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceSummary {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
    pub pooled: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub draws: usize,
    pub components: Vec<ComponentSummary>,
    pub acceptance: Option<AcceptanceSummary>,
}

pub fn summarize_series(series: &[f64]) -> Result<ComponentSummary> {
    let n = series.len() as f64;
    let m = mean(series);
    let sd = (series.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let window = default_window(series)?;
    let negative_variance = asymptotic_variance(series, window)? <= 0.0;
    let ess = effective_sample_size(series)?;
    Ok(ComponentSummary { mean: m, sd, ess, mc_std_error: sd / ess.sqrt(), negative_variance })
}

pub fn summarize(samples: &PosteriorSamples) -> Result<ChainSummary> {
    if samples.is_empty() {
        return Err(Error::EmptyPosterior);
    }
    let components = (0..samples.dim)
        .map(|i| {
            let s = samples.component(i);
            summarize_series(&s).or_else(|_| {
                // Constant components (e.g. a single draw) get no ESS.
                Ok::<_, Error>(ComponentSummary {
                    mean: mean(&s),
                    sd: 0.0,
                    ess: s.len() as f64,
                    mc_std_error: 0.0,
                    negative_variance: false,
                })
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let rates: Vec<f64> = samples.acceptance.iter().filter_map(|a| a.rate()).collect();
    let acceptance = (!rates.is_empty()).then(|| AcceptanceSummary {
        min: rates.iter().cloned().fold(f64::INFINITY, f64::min),
        mean: mean(&rates),
        max: rates.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        pooled: samples.acceptance_rate().unwrap_or(f64::NAN),
    });
    Ok(ChainSummary { draws: samples.len(), components, acceptance })
}

/// Pairwise ordering of autocorrelation curves.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub labels: Vec<String>,
    pub lags: Vec<usize>,
    /// `acf[chain][lag index]`.
    pub acf: Vec<Vec<f64>>,
    pub std_error: Vec<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ordering {
    Lower,
    Tie,
    Higher,
}

impl ComparisonReport {
    /// How chain `i` compares with chain `j` at lag index `k`, with ties
    /// inside two combined standard errors.
    pub fn ordering(&self, i: usize, j: usize, k: usize) -> Ordering {
        let d = self.acf[i][k] - self.acf[j][k];
        let band = 2.0 * (self.std_error[i][k].powi(2) + self.std_error[j][k].powi(2)).sqrt();
        if d.abs() <= band {
            Ordering::Tie
        } else if d < 0.0 {
            Ordering::Lower
        } else {
            Ordering::Higher
        }
    }

    /// Chain `i` is never significantly above chain `j` at the listed lags.
    pub fn dominates(&self, i: usize, j: usize, lags: impl IntoIterator<Item = usize>) -> bool {
        lags.into_iter().all(|lag| {
            self.lags
                .iter()
                .position(|&l| l == lag)
                .is_some_and(|k| self.ordering(i, j, k) != Ordering::Higher)
        })
    }

    /// `lag,<label>,<label>_se,…`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("lag");
        for l in &self.labels {
            let _ = write!(out, ",{l},{l}_se");
        }
        out.push('\n');
        for (k, lag) in self.lags.iter().enumerate() {
            let _ = write!(out, "{lag}");
            for c in 0..self.labels.len() {
                let _ = write!(out, ",{},{}", fmt17(self.acf[c][k]), fmt17(self.std_error[c][k]));
            }
            out.push('\n');
        }
        out
    }
}

pub fn compare_chains(reports: &[AcfReport], labels: &[String]) -> Result<ComparisonReport> {
    if reports.is_empty() || reports.len() != labels.len() {
        return Err(Error::invalid("need one label per report"));
    }
    let lags = reports[0].lags.clone();
    if reports.iter().any(|r| r.lags != lags || r.component != reports[0].component) {
        return Err(Error::invalid("reports must share the component and lags"));
    }
    Ok(ComparisonReport {
        labels: labels.to_vec(),
        lags,
        acf: reports.iter().map(|r| r.acf.clone()).collect(),
        std_error: reports.iter().map(|r| r.std_error.clone()).collect(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Asymptotic Kolmogorov tail probability `P(K > λ)`.
pub fn kolmogorov_p_value(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn ks_p(d: f64, n_eff: f64) -> f64 {
    let s = n_eff.sqrt();
    kolmogorov_p_value((s + 0.12 + 0.11 / s) * d)
}

/// One-sample Kolmogorov-Smirnov test against a continuous CDF.
pub fn ks_one_sample(sample: &[f64], cdf: impl Fn(f64) -> f64) -> KsResult {
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let d = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max);
    KsResult { statistic: d, p_value: ks_p(d, n) }
}

/// Two-sample Kolmogorov-Smirnov test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (n, m) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < xs.len() && j < ys.len() {
        let x = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= x {
            i += 1;
        }
        while j < ys.len() && ys[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    KsResult { statistic: d, p_value: ks_p(d, n * m / (n + m)) }
}

/// `lag,acf,se` lines.
pub fn acf_csv(report: &AcfReport) -> String {
    let mut out = String::from("lag,acf,se\n");
    for ((lag, r), se) in report.lags.iter().zip(&report.acf).zip(&report.std_error) {
        let _ = writeln!(out, "{lag},{},{}", fmt17(*r), fmt17(*se));
    }
    out
}

/// `iter,v1,…,vN` lines.
pub fn trace_csv(samples: &PosteriorSamples) -> String {
    let mut out = String::from("iter");
    for i in 1..=samples.dim {
        let _ = write!(out, ",v{i}");
    }
    out.push('\n');
    for (it, d) in samples.iterations.iter().zip(&samples.draws) {
        let _ = write!(out, "{it}");
        for x in d.values() {
            let _ = write!(out, ",{}", fmt17(*x));
        }
        out.push('\n');
    }
    out
}

/// `lo,hi,count` lines over equal-width bins.
pub fn histogram_csv(series: &[f64], bins: usize) -> Result<String> {
    if series.is_empty() || bins == 0 {
        return Err(Error::invalid("histogram needs data and at least one bin"));
    }
    let lo = series.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = series.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut counts = vec![0usize; bins];
    for &x in series {
        let k = (((x - lo) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    let mut out = String::from("lo,hi,count\n");
    for (k, c) in counts.iter().enumerate() {
        let a = lo + k as f64 * width;
        let _ = writeln!(out, "{},{},{c}", fmt17(a), fmt17(a + width));
    }
    Ok(out)
}
