//! The noisy action model and its likelihood.
//!
//! A controller picks `argmax_a {ε(a) + (R v)(a)}` with `ε ~ N(0, I)`, where
//! row `a` of `R` is the expected next-state value map (tabular mode) or
//! the expected basis features (basis mode) after action `a`. The
//! probability of a given choice is an orthant integral with no closed
//! form; it is estimated here only for validation and never inside the
//! sampler.

use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{full_transition_matrix, TransitionModel, ValueFunction, ValueMode};
use crate::probability::{std_normal_cdf, std_normal_logpdf};
use crate::util::{argmax, fmt17};

/// What the observer knows about the state at one epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StateRef {
    /// A state of a finite MDP.
    Index(usize),
    /// A Tetris board (rows top to bottom, `#` occupied) and the falling piece.
    Board { piece: u8, board: Vec<String> },
}

/// Label of a legal action as recorded in a dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ActionLabel {
    Index(usize),
    /// Clockwise rotation in degrees and leftmost column of the placed piece.
    Placement { rot: u16, col: u8 },
}

/// One observed decision.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub t: usize,
    pub state: StateRef,
    pub legal_actions: Vec<ActionLabel>,
    /// Position of the chosen action within `legal_actions`.
    pub action: usize,
    /// `M_t × dim` design matrix, rows in `legal_actions` order.
    pub r: DMatrix<f64>,
}

impl Observation {
    pub fn new(
        t: usize,
        state: StateRef,
        legal_actions: Vec<ActionLabel>,
        action: usize,
        r: DMatrix<f64>,
    ) -> Result<Self> {
        if legal_actions.is_empty() {
            return Err(Error::EmptyActionSet);
        }
        if r.nrows() != legal_actions.len() {
            return Err(Error::DimensionMismatch { expected: legal_actions.len(), found: r.nrows() });
        }
        if action >= legal_actions.len() {
            return Err(Error::invalid(format!(
                "chosen action {action} is outside the legal set of size {}",
                legal_actions.len()
            )));
        }
        Ok(Observation { t, state, legal_actions, action, r })
    }

    pub fn num_actions(&self) -> usize {
        self.legal_actions.len()
    }

    /// `R_t v`.
    pub fn utilities(&self, v: &[f64]) -> DVector<f64> {
        &self.r * DVector::from_column_slice(v)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    #[default]
    Synthetic,
    Human,
}

/// An ordered record of observations sharing one value-function layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub mode: ValueMode,
    pub dim: usize,
    pub source: DataSource,
    /// Free-form metadata, typically the generating configuration.
    pub meta: serde_json::Value,
    pub observations: Vec<Observation>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    mode: HeaderMode,
    dim: usize,
    #[serde(default)]
    source: DataSource,
    #[serde(default)]
    meta: serde_json::Value,
}

#[derive(Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
enum HeaderMode {
    Tabular,
    Basis,
}

#[derive(Serialize, Deserialize)]
struct Line {
    t: usize,
    state: StateRef,
    legal_actions: Vec<ActionLabel>,
    action: usize,
    #[serde(rename = "R")]
    r: Vec<Vec<f64>>,
}

impl Dataset {
    /// Tabular datasets are always tagged with the sum-zero layout the
    /// sampler targets.
    pub fn new(mode: ValueMode, dim: usize, observations: Vec<Observation>) -> Result<Self> {
        let mode = if mode.is_tabular() { ValueMode::Tabular { sum_zero: true } } else { mode };
        for o in &observations {
            if o.r.ncols() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: o.r.ncols() });
            }
        }
        Ok(Dataset {
            mode,
            dim,
            source: DataSource::Synthetic,
            meta: serde_json::Value::Null,
            observations,
        })
    }

    pub fn with_source(mut self, source: DataSource) -> Self {
        self.source = source;
        self
    }

    pub fn with_meta(mut self, meta: serde_json::Value) -> Self {
        self.meta = meta;
        self
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Legal-set sizes `M_t`.
    pub fn action_counts(&self) -> Vec<usize> {
        self.observations.iter().map(|o| o.num_actions()).collect()
    }

    /// The first `n` observations (or all, if fewer).
    pub fn head(&self, n: usize) -> Dataset {
        let mut d = self.clone();
        d.observations.truncate(n);
        d
    }

    /// Observations from index `n` on.
    pub fn tail_from(&self, n: usize) -> Dataset {
        let mut d = self.clone();
        d.observations = self.observations.iter().skip(n).cloned().collect();
        d
    }

    /// Row-stack all design matrices into `R̃` (`Σ M_t × dim`).
    pub fn stacked_design(&self) -> DMatrix<f64> {
        let rows: usize = self.observations.iter().map(|o| o.r.nrows()).sum();
        let mut out = DMatrix::zeros(rows, self.dim);
        let mut at = 0;
        for o in &self.observations {
            out.rows_mut(at, o.r.nrows()).copy_from(&o.r);
            at += o.r.nrows();
        }
        out
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let header = Header {
            mode: if self.mode.is_tabular() { HeaderMode::Tabular } else { HeaderMode::Basis },
            dim: self.dim,
            source: self.source,
            meta: self.meta.clone(),
        };
        writeln!(out, "{}", serde_json::to_string(&header)?)?;
        for o in &self.observations {
            let state = serde_json::to_string(&o.state)?;
            let legal = serde_json::to_string(&o.legal_actions)?;
            let rows: Vec<String> = o
                .r
                .row_iter()
                .map(|r| {
                    let cells: Vec<String> = r.iter().map(|&x| fmt_cell(x)).collect();
                    format!("[{}]", cells.join(","))
                })
                .collect();
            writeln!(
                out,
                "{{\"t\":{},\"state\":{},\"legal_actions\":{},\"action\":{},\"R\":[{}]}}",
                o.t,
                state,
                legal,
                o.action,
                rows.join(",")
            )?;
        }
        Ok(())
    }

    pub fn to_jsonl_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("utf-8 output")
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines().enumerate();
        let (_, first) = lines
            .next()
            .ok_or_else(|| Error::Parse { line: 1, message: "missing header line".into() })?;
        let first = first.map_err(|e| Error::Parse { line: 1, message: e.to_string() })?;
        let header: Header =
            serde_json::from_str(&first).map_err(|e| Error::Parse { line: 1, message: e.to_string() })?;
        let mode = match header.mode {
            HeaderMode::Tabular => ValueMode::Tabular { sum_zero: true },
            HeaderMode::Basis => ValueMode::Basis,
        };
        let mut observations = Vec::new();
        for (i, line) in lines {
            let line = line.map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?;
            if line.trim().is_empty() {
                continue;
            }
            let l: Line =
                serde_json::from_str(&line).map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?;
            let nrows = l.r.len();
            let bad_row = l.r.iter().any(|row| row.len() != header.dim);
            if bad_row {
                return Err(Error::Parse { line: i + 1, message: format!("R rows must have {} columns", header.dim) });
            }
            let r = DMatrix::from_fn(nrows, header.dim, |a, b| l.r[a][b]);
            let o = Observation::new(l.t, l.state, l.legal_actions, l.action, r)
                .map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?;
            observations.push(o);
        }
        Ok(Dataset::new(mode, header.dim, observations)?
            .with_source(header.source)
            .with_meta(header.meta))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_jsonl(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_jsonl(std::io::BufReader::new(file))
    }
}

/// Integers print without an exponent; everything else with 17 digits.
fn fmt_cell(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        fmt17(x)
    }
}

fn check_dims(v: &[f64], r: &DMatrix<f64>) -> Result<()> {
    if v.len() != r.ncols() {
        return Err(Error::DimensionMismatch { expected: r.ncols(), found: v.len() });
    }
    if r.nrows() == 0 {
        return Err(Error::EmptyActionSet);
    }
    Ok(())
}

/// Draw an action from the noisy model with unit noise. Returns the chosen
/// row index and the noise vector used.
pub fn sample_action<R: Rng + ?Sized>(v: &[f64], r: &DMatrix<f64>, rng: &mut R) -> Result<(usize, Vec<f64>)> {
    check_dims(v, r)?;
    let eps: Vec<f64> = (0..r.nrows()).map(|_| rng.sample(StandardNormal)).collect();
    let a = noisy_argmax(v, r, &eps, 1.0)?;
    Ok((a, eps))
}

/// `argmax_a {scale·ε(a) + (R v)(a)}` for a given noise vector.
pub fn noisy_argmax(v: &[f64], r: &DMatrix<f64>, eps: &[f64], scale: f64) -> Result<usize> {
    check_dims(v, r)?;
    if eps.len() != r.nrows() {
        return Err(Error::DimensionMismatch { expected: r.nrows(), found: eps.len() });
    }
    let u = r * DVector::from_column_slice(v);
    let noisy: Vec<f64> = u.iter().zip(eps).map(|(m, e)| m + scale * e).collect();
    Ok(argmax(&noisy).expect("non-empty"))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChoiceMethod {
    MonteCarlo(usize),
    Quadrature,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChoiceEstimate {
    pub p: f64,
    pub std_error: f64,
}

/// Probability that row `action` wins the noisy argmax.
///
/// Monte Carlo gives an unbiased frequency estimate. Quadrature uses the
/// one-dimensional reduction available under identity noise covariance,
/// `∫ φ(z) ∏_{j≠a} Φ(z + μ_a − μ_j) dz`.
pub fn choice_probability<R: Rng + ?Sized>(
    v: &[f64],
    r: &DMatrix<f64>,
    action: usize,
    method: ChoiceMethod,
    rng: &mut R,
) -> Result<ChoiceEstimate> {
    check_dims(v, r)?;
    if action >= r.nrows() {
        return Err(Error::invalid(format!("action {action} out of range")));
    }
    let mu: Vec<f64> = (r * DVector::from_column_slice(v)).iter().copied().collect();
    match method {
        ChoiceMethod::MonteCarlo(0) => Err(Error::invalid("Monte Carlo needs at least one draw")),
        ChoiceMethod::MonteCarlo(n) => {
            let mut hits = 0usize;
            let mut noisy = vec![0.0; mu.len()];
            for _ in 0..n {
                for (slot, m) in noisy.iter_mut().zip(&mu) {
                    *slot = m + rng.sample::<f64, _>(StandardNormal);
                }
                if argmax(&noisy) == Some(action) {
                    hits += 1;
                }
            }
            let p = hits as f64 / n as f64;
            Ok(ChoiceEstimate {
                p,
                std_error: (p * (1.0 - p) / n as f64).sqrt(),
            })
        }
        ChoiceMethod::Quadrature => Ok(ChoiceEstimate {
            p: orthant_quadrature(&mu, action),
            std_error: 0.0,
        }),
    }
}

fn orthant_quadrature(mu: &[f64], action: usize) -> f64 {
    let f = |z: f64| {
        let mut acc = std_normal_logpdf(z).exp();
        for (j, &m) in mu.iter().enumerate() {
            if j != action {
                acc *= std_normal_cdf(z + mu[action] - m);
            }
        }
        acc
    };
    // Composite Simpson on [-10, 10]; the Gaussian weight is ~1e-22 beyond.
    let intervals = 4000;
    let h = 20.0 / intervals as f64;
    let mut s = f(-10.0) + f(10.0);
    for i in 1..intervals {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(-10.0 + i as f64 * h);
    }
    (s * h / 3.0).clamp(0.0, 1.0)
}

/// Apply the likelihood-preserving reparameterization: `√z1 (v + z2 1)` in
/// tabular mode, `√z1 v` in basis mode (where translation is not an
/// invariance and is rejected).
pub fn transform_params(v: &ValueFunction, z1: f64, z2: f64) -> Result<ValueFunction> {
    if !(z1 > 0.0) || !z1.is_finite() {
        return Err(Error::invalid(format!("scale must be positive, got {z1}")));
    }
    let s = z1.sqrt();
    match v.mode() {
        ValueMode::Tabular { .. } => Ok(ValueFunction::tabular(
            v.values().iter().map(|x| s * (x + z2)).collect(),
        )),
        ValueMode::Basis if z2 != 0.0 => Err(Error::invalid(
            "translation is not a symmetry of the basis-mode likelihood",
        )),
        ValueMode::Basis => Ok(ValueFunction::basis(v.values().iter().map(|x| s * x).collect())),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogLikelihood {
    pub value: f64,
    pub std_error: f64,
    /// Some per-observation estimate was exactly zero.
    pub zero_estimate: bool,
}

/// Sum of log choice-probability estimates with a delta-method standard
/// error.
pub fn log_likelihood_from(estimates: &[ChoiceEstimate]) -> LogLikelihood {
    let mut value = 0.0;
    let mut var = 0.0;
    let mut zero = false;
    for e in estimates {
        if e.p <= 0.0 {
            zero = true;
            continue;
        }
        value += e.p.ln();
        var += (e.std_error / e.p).powi(2);
    }
    if zero {
        value = f64::NEG_INFINITY;
    }
    LogLikelihood {
        value,
        std_error: var.sqrt(),
        zero_estimate: zero,
    }
}

/// Per-observation choice-probability estimates for a dataset.
pub fn choice_estimates<R: Rng + ?Sized>(
    v: &ValueFunction,
    dataset: &Dataset,
    n: usize,
    rng: &mut R,
) -> Result<Vec<ChoiceEstimate>> {
    if v.mode().is_tabular() != dataset.mode.is_tabular() {
        return Err(Error::invalid("value function and dataset modes differ"));
    }
    dataset
        .observations
        .iter()
        .map(|o| choice_probability(v.values(), &o.r, o.action, ChoiceMethod::MonteCarlo(n), rng))
        .collect()
}

/// Monte Carlo log-likelihood `Σ_t log p̂(a_t | v, x_t)`.
pub fn log_likelihood_mc<R: Rng + ?Sized>(
    v: &ValueFunction,
    dataset: &Dataset,
    n: usize,
    rng: &mut R,
) -> Result<LogLikelihood> {
    Ok(log_likelihood_from(&choice_estimates(v, dataset, n, rng)?))
}

/// Simulate `steps` decisions of the noisy controller on a finite MDP
/// with every action legal, starting from `start`.
pub fn simulate_dataset<R: Rng + ?Sized>(
    model: &TransitionModel,
    v: &ValueFunction,
    steps: usize,
    start: usize,
    rng: &mut R,
) -> Result<Dataset> {
    if v.len() != model.num_states() {
        return Err(Error::DimensionMismatch { expected: model.num_states(), found: v.len() });
    }
    if start >= model.num_states() {
        return Err(Error::invalid(format!("start state {start} out of range")));
    }
    let labels: Vec<ActionLabel> = (0..model.num_actions()).map(ActionLabel::Index).collect();
    let mut x = start;
    let mut observations = Vec::with_capacity(steps);
    for t in 0..steps {
        let rm = full_transition_matrix(model, x);
        let (a, _) = sample_action(v.values(), &rm.rows, rng)?;
        observations.push(Observation::new(t, StateRef::Index(x), labels.clone(), a, rm.rows)?);
        x = model.sample_next(x, a, rng);
    }
    Dataset::new(ValueMode::Tabular { sum_zero: true }, model.num_states(), observations)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use proptest::prelude::{any, prop, prop_assert, prop_assert_eq, prop_assume, proptest, ProptestConfig};

    fn mat(rows: &[&[f64]]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
    }

    #[test]
    fn zero_value_gives_uniform_choices() {
        let mut rng = RngStream::new(20, 0).rng();
        let r = mat(&[&[0.2, 0.8], &[0.5, 0.5], &[1.0, 0.0], &[0.0, 1.0]]);
        let n = 100_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            counts[sample_action(&[0.0, 0.0], &r, &mut rng).unwrap().0] += 1;
        }
        let e = n as f64 / 4.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
        // χ²(3) critical value at 0.001.
        assert!(chi2 < 16.266, "chi2 = {chi2}");
    }

    #[test]
    fn dominant_utility_is_almost_always_chosen() {
        let mut rng = RngStream::new(21, 0).rng();
        let r = mat(&[&[10.0], &[0.0]]);
        let wins = (0..10_000)
            .filter(|_| sample_action(&[1.0], &r, &mut rng).unwrap().0 == 0)
            .count();
        assert!(wins as f64 / 10_000.0 >= 0.999);
    }

    #[test]
    fn returned_noise_reproduces_the_choice() {
        let mut rng = RngStream::new(22, 0).rng();
        let r = mat(&[&[0.3, 0.7, 0.0], &[0.0, 0.1, 0.9], &[0.5, 0.25, 0.25]]);
        let v = [1.0, -0.5, 0.2];
        for _ in 0..1000 {
            let (a, eps) = sample_action(&v, &r, &mut rng).unwrap();
            let u: Vec<f64> = (0..3)
                .map(|i| eps[i] + (0..3).map(|j| r[(i, j)] * v[j]).sum::<f64>())
                .collect();
            let mut best = 0;
            for i in 1..3 {
                if u[i] > u[best] {
                    best = i;
                }
            }
            assert_eq!(a, best);
        }
        assert!(sample_action(&[1.0], &r, &mut rng).is_err());
    }

    #[test]
    fn symmetric_three_way_choice() {
        let mut rng = RngStream::new(23, 0).rng();
        let r = DMatrix::identity(3, 3);
        let e = choice_probability(&[0.0; 3], &r, 1, ChoiceMethod::MonteCarlo(100_000), &mut rng).unwrap();
        assert!((e.p - 1.0 / 3.0).abs() < 3.0 * e.std_error);
        let q = choice_probability(&[0.0; 3], &r, 1, ChoiceMethod::Quadrature, &mut rng).unwrap();
        assert!((q.p - 1.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn two_way_choice_matches_difference_of_normals() {
        let mut rng = RngStream::new(24, 0).rng();
        let r = DMatrix::identity(2, 2);
        let oracle = std_normal_cdf(1.0 / 2f64.sqrt());
        assert!((oracle - 0.7602).abs() < 1e-4);
        let e = choice_probability(&[1.0, 0.0], &r, 0, ChoiceMethod::MonteCarlo(100_000), &mut rng).unwrap();
        assert!((e.p - oracle).abs() < 3.0 * e.std_error);
        let q = choice_probability(&[1.0, 0.0], &r, 0, ChoiceMethod::Quadrature, &mut rng).unwrap();
        assert!((q.p - oracle).abs() < 1e-9);
    }

    /// Two-dimensional Simpson integration of the bivariate normal law of
    /// `(ε_j − ε_a)_{j≠a}` (variance 2, covariance 1) over the orthant
    /// `{d_j ≤ μ_a − μ_j}`.
    fn orthant_2d_oracle(mu: [f64; 3], a: usize) -> f64 {
        let others: Vec<usize> = (0..3).filter(|&j| j != a).collect();
        let up = [mu[a] - mu[others[0]], mu[a] - mu[others[1]]];
        let det: f64 = 3.0; // det [[2,1],[1,2]]
        let dens = |x: f64, y: f64| {
            let q = (2.0 * x * x - 2.0 * x * y + 2.0 * y * y) / det;
            (-0.5 * q).exp() / (2.0 * std::f64::consts::PI * det.sqrt())
        };
        let lo = -14.0;
        let n = 1400;
        let hx = (up[0] - lo) / n as f64;
        let hy = (up[1] - lo) / n as f64;
        let w = |i: usize| if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
        let mut s = 0.0;
        for i in 0..=n {
            let x = lo + i as f64 * hx;
            for j in 0..=n {
                let y = lo + j as f64 * hy;
                s += w(i) * w(j) * dens(x, y);
            }
        }
        s * hx * hy / 9.0
    }

    #[test]
    fn three_way_choice_matches_2d_quadrature() {
        let mut rng = RngStream::new(25, 0).rng();
        let r = DMatrix::identity(3, 3);
        let v = [1.0, 0.0, -1.0];
        let mut total = 0.0;
        for a in 0..3 {
            let oracle = orthant_2d_oracle([1.0, 0.0, -1.0], a);
            total += oracle;
            let q = choice_probability(&v, &r, a, ChoiceMethod::Quadrature, &mut rng).unwrap();
            assert!((q.p - oracle).abs() < 1e-6, "{a}: {} vs {oracle}", q.p);
            let e = choice_probability(&v, &r, a, ChoiceMethod::MonteCarlo(200_000), &mut rng).unwrap();
            assert!((e.p - oracle).abs() < 3.0 * e.std_error, "{a}: {} vs {oracle}", e.p);
        }
        assert!((total - 1.0).abs() < 1e-6);
    }

    #[test]
    fn probabilities_sum_to_one_within_mc_error() {
        let mut rng = RngStream::new(26, 0).rng();
        let r = mat(&[&[0.1, 0.9], &[0.6, 0.4], &[0.3, 0.7], &[1.0, 0.0]]);
        let v = [2.0, -1.0];
        let n = 50_000;
        let ests: Vec<ChoiceEstimate> = (0..4)
            .map(|a| choice_probability(&v, &r, a, ChoiceMethod::MonteCarlo(n), &mut rng).unwrap())
            .collect();
        let sum: f64 = ests.iter().map(|e| e.p).sum();
        let se: f64 = ests.iter().map(|e| e.std_error.powi(2)).sum::<f64>().sqrt();
        assert!((sum - 1.0).abs() <= 3.0 * se);
        assert!(choice_probability(&v, &r, 0, ChoiceMethod::MonteCarlo(0), &mut rng).is_err());
    }

    #[test]
    fn transform_examples() {
        let v = ValueFunction::tabular(vec![1.0, -1.0]);
        assert_eq!(transform_params(&v, 1.0, 0.0).unwrap().values(), v.values());
        assert_eq!(transform_params(&v, 4.0, 3.0).unwrap().values(), &[8.0, 4.0]);
        let b = ValueFunction::basis(vec![1.0, 2.0]);
        assert_eq!(transform_params(&b, 9.0, 0.0).unwrap().values(), &[3.0, 6.0]);
        assert!(transform_params(&b, 1.0, 0.5).is_err());
        assert!(transform_params(&v, 0.0, 0.0).is_err());
    }

    #[test]
    fn basis_mode_is_not_translation_invariant() {
        // Rows that do not sum to one: shifting v changes which row wins.
        let r = mat(&[&[1.0, 0.0], &[0.0, 2.0]]);
        let eps = [0.0, 0.0];
        assert_eq!(noisy_argmax(&[0.0, 0.0], &r, &eps, 1.0).unwrap(), 0);
        assert_eq!(noisy_argmax(&[1.0, 1.0], &r, &eps, 1.0).unwrap(), 1);
        // Scaling alone, with the noise scaled too, never changes the choice.
        for s in [0.5, 3.0, 10.0] {
            let e = [0.3, -0.2];
            assert_eq!(
                noisy_argmax(&[1.0, 0.2], &r, &e, 1.0).unwrap(),
                noisy_argmax(&[s * 1.0, s * 0.2], &r, &e, s).unwrap()
            );
        }
    }

    #[test]
    fn log_likelihood_examples() {
        let mut rng = RngStream::new(27, 0).rng();
        let r = DMatrix::identity(3, 3);
        let obs = Observation::new(0, StateRef::Index(0), (0..3).map(ActionLabel::Index).collect(), 1, r).unwrap();
        let d = Dataset::new(ValueMode::Tabular { sum_zero: false }, 3, vec![obs]).unwrap();
        let v = ValueFunction::tabular(vec![0.0; 3]);
        let ll = log_likelihood_mc(&v, &d, 100_000, &mut rng).unwrap();
        assert!((ll.value - (1.0f64 / 3.0).ln()).abs() < 3.0 * ll.std_error);

        let ests = choice_estimates(&v, &d, 1000, &mut rng).unwrap();
        let doubled: Vec<ChoiceEstimate> = ests.iter().chain(ests.iter()).copied().collect();
        assert_eq!(log_likelihood_from(&doubled).value, 2.0 * log_likelihood_from(&ests).value);

        let zero = log_likelihood_from(&[ChoiceEstimate { p: 0.0, std_error: 0.0 }]);
        assert!(zero.zero_estimate);
        assert_eq!(zero.value, f64::NEG_INFINITY);
    }

    #[test]
    fn log_likelihood_is_invariant_under_reparameterization() {
        let mut rng = RngStream::new(28, 0).rng();
        let model = crate::mdp::TransitionModel::random(4, 3, &mut rng);
        let v = ValueFunction::tabular(vec![1.0, -0.5, 0.3, -0.8]);
        let mut obs = Vec::new();
        for t in 0..6 {
            let rm = crate::mdp::full_transition_matrix(&model, t % 4);
            let (a, _) = sample_action(v.values(), &rm.rows, &mut rng).unwrap();
            obs.push(Observation::new(t, StateRef::Index(t % 4), (0..3).map(ActionLabel::Index).collect(), a, rm.rows).unwrap());
        }
        let d = Dataset::new(ValueMode::Tabular { sum_zero: false }, 4, obs).unwrap();
        for _ in 0..3 {
            let z1: f64 = 0.2 + 5.0 * rng.random::<f64>();
            let z2: f64 = 4.0 * rng.random::<f64>() - 2.0;
            let vt = transform_params(&v, z1, z2).unwrap();
            // Under the transformed parameters the noise scale is √z1.
            let mut est_t = Vec::new();
            for o in &d.observations {
                let mu: Vec<f64> = o.utilities(vt.values()).iter().copied().collect();
                let n = 40_000;
                let mut hits = 0;
                for _ in 0..n {
                    let u: Vec<f64> = mu.iter().map(|m| m + z1.sqrt() * rng.sample::<f64, _>(StandardNormal)).collect();
                    if argmax(&u) == Some(o.action) {
                        hits += 1;
                    }
                }
                let p = hits as f64 / n as f64;
                est_t.push(ChoiceEstimate { p, std_error: (p * (1.0 - p) / n as f64).sqrt() });
            }
            let a = log_likelihood_mc(&v, &d, 40_000, &mut rng).unwrap();
            let b = log_likelihood_from(&est_t);
            let se = (a.std_error.powi(2) + b.std_error.powi(2)).sqrt();
            assert!((a.value - b.value).abs() < 3.0 * se, "{} vs {} (se {se})", a.value, b.value);
        }
    }

    #[test]
    fn jsonl_round_trip() {
        let r = mat(&[&[0.25, 0.75], &[1.0 / 3.0, 2.0 / 3.0]]);
        let o1 = Observation::new(0, StateRef::Index(1), vec![ActionLabel::Index(0), ActionLabel::Index(2)], 1, r.clone()).unwrap();
        let o2 = Observation::new(
            1,
            StateRef::Board { piece: 3, board: vec!["..#".into()] },
            vec![ActionLabel::Placement { rot: 0, col: 0 }, ActionLabel::Placement { rot: 90, col: 4 }],
            0,
            r,
        )
        .unwrap();
        let d = Dataset::new(ValueMode::Basis, 2, vec![o1, o2])
            .unwrap()
            .with_meta(serde_json::json!({"seed": 3}));
        let text = d.to_jsonl_string();
        assert!(text.lines().next().unwrap().contains("\"mode\":\"basis\""));
        let back = Dataset::read_jsonl(text.as_bytes()).unwrap();
        assert_eq!(back, d);
        assert_eq!(back.to_jsonl_string(), text);
    }

    #[test]
    fn observation_validation() {
        let r = DMatrix::identity(2, 2);
        assert!(Observation::new(0, StateRef::Index(0), vec![ActionLabel::Index(0)], 0, r.clone()).is_err());
        assert!(Observation::new(0, StateRef::Index(0), vec![ActionLabel::Index(0), ActionLabel::Index(1)], 2, r).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        /// With shared noise scaled by √z1, the transformed value function
        /// chooses exactly the same action.
        #[test]
        fn argmax_invariance_under_common_noise(
            seed in any::<u64>(),
            v in prop::collection::vec(-5.0..5.0f64, 4),
            z1 in 0.01..100.0f64,
            z2 in -20.0..20.0f64,
        ) {
            let mut rng = RngStream::new(seed, 0).rng();
            let model = crate::mdp::TransitionModel::random(4, 3, &mut rng);
            let rm = crate::mdp::full_transition_matrix(&model, 0);
            let vf = ValueFunction::tabular(v.clone());
            let (a, eps) = sample_action(&v, &rm.rows, &mut rng).unwrap();
            let vt = transform_params(&vf, z1, z2).unwrap();
            let mu: Vec<f64> = (&rm.rows * DVector::from_column_slice(&v)).iter().copied().collect();
            let mut gaps: Vec<f64> = mu.iter().zip(&eps).map(|(m, e)| m + e).collect();
            gaps.sort_by(|p, q| q.partial_cmp(p).unwrap());
            // Skip exact ties, where floating rounding could decide.
            prop_assume!(gaps[0] - gaps[1] > 1e-9);
            prop_assert_eq!(noisy_argmax(vt.values(), &rm.rows, &eps, z1.sqrt()).unwrap(), a);
        }

        /// The utility-maximizing action is modal under i.i.d. noise.
        #[test]
        fn best_action_is_at_least_uniform(mu in prop::collection::vec(-3.0..3.0f64, 2..5)) {
            let m = mu.len();
            let r = DMatrix::identity(m, m);
            let best = argmax(&mu).unwrap();
            let mut rng = RngStream::new(0, 0).rng();
            let q = choice_probability(&mu, &r, best, ChoiceMethod::Quadrature, &mut rng).unwrap();
            prop_assert!(q.p >= 1.0 / m as f64 - 1e-9);
        }
    }
}
