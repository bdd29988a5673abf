//! Finite Markov decision processes: transition kernels, the Bellman
//! operator, value iteration, greedy policies and Monte Carlo policy
//! evaluation.
//!
//! These are the ground-truth tools used to build synthetic inference
//! problems. The inference stack never sees rewards or discount factors; it
//! works with value functions directly.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::util::argmax;

/// Row sums of transition kernels must be within this of one.
pub const STOCHASTIC_TOLERANCE: f64 = 1e-12;

/// Tolerance for the sum-zero constraint on tabular value functions.
pub const SUM_ZERO_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueMode {
    /// One value per state; `sum_zero` marks vectors constrained to sum to 0.
    Tabular { sum_zero: bool },
    /// Coefficients on a set of basis functions.
    Basis,
}

impl ValueMode {
    pub fn is_tabular(self) -> bool {
        matches!(self, ValueMode::Tabular { .. })
    }
}

/// A value function: the inference target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueFunction {
    values: Vec<f64>,
    mode: ValueMode,
}

impl ValueFunction {
    pub fn new(values: Vec<f64>, mode: ValueMode) -> Result<Self> {
        if let Some(i) = values.iter().position(|x| !x.is_finite()) {
            return Err(Error::invalid(format!("value component {i} is not finite")));
        }
        if let ValueMode::Tabular { sum_zero: true } = mode {
            let s: f64 = values.iter().sum();
            let scale = values.iter().fold(1.0_f64, |m, x| m.max(x.abs()));
            if s.abs() > SUM_ZERO_TOLERANCE * scale {
                return Err(Error::invalid(format!("values sum to {s}, expected 0")));
            }
        }
        Ok(ValueFunction { values, mode })
    }

    pub fn tabular(values: Vec<f64>) -> Self {
        ValueFunction {
            values,
            mode: ValueMode::Tabular { sum_zero: false },
        }
    }

    /// Caller guarantees the entries sum to zero.
    pub(crate) fn tabular_sum_zero(values: Vec<f64>) -> Self {
        debug_assert!(values.iter().sum::<f64>().abs() <= 1e-6 * values.iter().fold(1.0, |m: f64, x| m.max(x.abs())));
        ValueFunction {
            values,
            mode: ValueMode::Tabular { sum_zero: true },
        }
    }

    pub fn basis(values: Vec<f64>) -> Self {
        ValueFunction {
            values,
            mode: ValueMode::Basis,
        }
    }

    pub fn zeros(len: usize, mode: ValueMode) -> Self {
        ValueFunction {
            values: vec![0.0; len],
            mode,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn mode(&self) -> ValueMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.values)
    }
}

/// State-only reward `r(x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardFunction {
    r: Vec<f64>,
}

impl RewardFunction {
    pub fn new(r: Vec<f64>) -> Result<Self> {
        if r.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("reward entries must be finite"));
        }
        Ok(RewardFunction { r })
    }

    pub fn values(&self) -> &[f64] {
        &self.r
    }

    fn sup_norm(&self) -> f64 {
        self.r.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// Per-action `N × N` row-stochastic kernels, `kernel(a)[(x, x')] = p(x'|x,a)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionModel {
    kernels: Vec<DMatrix<f64>>,
}

impl TransitionModel {
    /// Build from row-major nested vectors `kernels[a][x][x']`. Inputs whose
    /// rows do not sum to one are rejected, never renormalized.
    pub fn new(kernels: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        if kernels.is_empty() {
            return Err(Error::invalid("a transition model needs at least one action"));
        }
        let n = kernels[0].len();
        if n == 0 {
            return Err(Error::invalid("a transition model needs at least one state"));
        }
        let mut mats = Vec::with_capacity(kernels.len());
        for (a, k) in kernels.iter().enumerate() {
            if k.len() != n {
                return Err(Error::DimensionMismatch { expected: n, found: k.len() });
            }
            for row in k {
                if row.len() != n {
                    return Err(Error::DimensionMismatch { expected: n, found: row.len() });
                }
            }
            let m = DMatrix::from_fn(n, n, |i, j| k[i][j]);
            check_stochastic(&m, a)?;
            mats.push(m);
        }
        Ok(TransitionModel { kernels: mats })
    }

    pub fn from_matrices(kernels: Vec<DMatrix<f64>>) -> Result<Self> {
        let nested = kernels
            .iter()
            .map(|m| (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect())
            .collect();
        Self::new(nested)
    }

    pub fn num_states(&self) -> usize {
        self.kernels[0].nrows()
    }

    pub fn num_actions(&self) -> usize {
        self.kernels.len()
    }

    pub fn kernel(&self, action: usize) -> &DMatrix<f64> {
        &self.kernels[action]
    }

    /// `p(next | state, action)`.
    pub fn prob(&self, state: usize, action: usize, next: usize) -> f64 {
        self.kernels[action][(state, next)]
    }

    /// A model whose rows are independent Dirichlet(1, …, 1) draws.
    pub fn random<R: Rng + ?Sized>(num_states: usize, num_actions: usize, rng: &mut R) -> Self {
        let kernels = (0..num_actions)
            .map(|_| {
                DMatrix::from_fn(num_states, num_states, |_, _| 0.0)
                    .row_iter()
                    .map(|_| {
                        let g: Vec<f64> = (0..num_states)
                            .map(|_| -(1.0 - rng.random::<f64>()).ln())
                            .collect();
                        let s: f64 = g.iter().sum();
                        let mut row: Vec<f64> = g.iter().map(|x| x / s).collect();
                        // Put the rounding residue on the largest entry.
                        let resid = 1.0 - row.iter().sum::<f64>();
                        let k = argmax(&row).unwrap_or(0);
                        row[k] += resid;
                        row
                    })
                    .collect()
            })
            .collect();
        TransitionModel::new(kernels).expect("Dirichlet rows are stochastic")
    }

    /// Sample `x' ~ p(·|x, a)`.
    pub fn sample_next<R: Rng + ?Sized>(&self, state: usize, action: usize, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let row = self.kernels[action].row(state);
        let mut acc = 0.0;
        for (j, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return j;
            }
        }
        // Rounding: fall back to the last state with positive mass.
        row.iter().rposition(|&p| p > 0.0).unwrap_or(0)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&TransitionModelDoc::from(self)).expect("plain numbers serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: TransitionModelDoc = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        doc.try_into()
    }
}

fn check_stochastic(m: &DMatrix<f64>, action: usize) -> Result<()> {
    for (row, r) in m.row_iter().enumerate() {
        if r.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::NotStochastic {
                action,
                row,
                sum: r.sum(),
            });
        }
        let sum = r.sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOLERANCE {
            return Err(Error::NotStochastic { action, row, sum });
        }
    }
    Ok(())
}

/// Serialized form: `{"version":1,"N":…,"M":…,"kernels":[[[…]]]}`.
#[derive(Serialize, Deserialize)]
struct TransitionModelDoc {
    version: u32,
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "M")]
    m: usize,
    kernels: Vec<Vec<Vec<f64>>>,
}

impl From<&TransitionModel> for TransitionModelDoc {
    fn from(model: &TransitionModel) -> Self {
        TransitionModelDoc {
            version: 1,
            n: model.num_states(),
            m: model.num_actions(),
            kernels: model
                .kernels
                .iter()
                .map(|k| k.row_iter().map(|r| r.iter().copied().collect()).collect())
                .collect(),
        }
    }
}

impl TryFrom<TransitionModelDoc> for TransitionModel {
    type Error = Error;

    fn try_from(doc: TransitionModelDoc) -> Result<Self> {
        if doc.version != 1 {
            return Err(Error::invalid(format!("unsupported model version {}", doc.version)));
        }
        if doc.kernels.len() != doc.m {
            return Err(Error::DimensionMismatch { expected: doc.m, found: doc.kernels.len() });
        }
        let model = TransitionModel::new(doc.kernels)?;
        if model.num_states() != doc.n {
            return Err(Error::DimensionMismatch { expected: doc.n, found: model.num_states() });
        }
        Ok(model)
    }
}

/// The `M_x × N` matrix of next-state distributions for the legal actions
/// of one state, row `i` being `p(·|x, action_labels[i])`.
#[derive(Clone, Debug, PartialEq)]
pub struct RMatrix {
    pub state: usize,
    pub rows: DMatrix<f64>,
    pub action_labels: Vec<usize>,
}

impl RMatrix {
    /// Expected value of `v` after each legal action, `(R_x v)(i)`.
    pub fn utilities(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.rows.ncols() {
            return Err(Error::DimensionMismatch { expected: self.rows.ncols(), found: v.len() });
        }
        Ok((self.rows.clone() * DVector::from_column_slice(v)).iter().copied().collect())
    }
}

/// Restrict the transition rows of `state` to `legal_actions`, in ascending
/// action order.
pub fn transition_matrix(model: &TransitionModel, state: usize, legal_actions: &[usize]) -> Result<RMatrix> {
    if legal_actions.is_empty() {
        return Err(Error::EmptyActionSet);
    }
    if state >= model.num_states() {
        return Err(Error::invalid(format!("state {state} out of range")));
    }
    let mut labels = legal_actions.to_vec();
    labels.sort_unstable();
    labels.dedup();
    if let Some(&a) = labels.iter().find(|&&a| a >= model.num_actions()) {
        return Err(Error::invalid(format!("action {a} out of range")));
    }
    let n = model.num_states();
    let rows = DMatrix::from_fn(labels.len(), n, |i, j| model.prob(state, labels[i], j));
    Ok(RMatrix {
        state,
        rows,
        action_labels: labels,
    })
}

/// The full-action-set matrix `R_x`.
pub fn full_transition_matrix(model: &TransitionModel, state: usize) -> RMatrix {
    let all: Vec<usize> = (0..model.num_actions()).collect();
    transition_matrix(model, state, &all).expect("non-empty action set")
}

/// One application of the Bellman optimality operator.
pub fn bellman(model: &TransitionModel, reward: &RewardFunction, beta: f64, v: &[f64]) -> Vec<f64> {
    let vv = DVector::from_column_slice(v);
    let continuation: Vec<DVector<f64>> = model.kernels.iter().map(|k| k * &vv).collect();
    (0..model.num_states())
        .map(|x| {
            let best = continuation
                .iter()
                .map(|c| c[x])
                .fold(f64::NEG_INFINITY, f64::max);
            reward.r[x] + beta * best
        })
        .collect()
}

fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn check_discount(beta: f64) -> Result<()> {
    if beta > 0.0 && beta < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("discount factor must lie in (0, 1), got {beta}")))
    }
}

/// Iterate the Bellman operator from `V₀ = 0` until `‖T(V) − V‖∞ ≤ tol`.
pub fn value_iteration(
    model: &TransitionModel,
    reward: &RewardFunction,
    beta: f64,
    tol: f64,
    max_iters: usize,
) -> Result<ValueFunction> {
    check_discount(beta)?;
    if !(tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    if reward.values().len() != model.num_states() {
        return Err(Error::DimensionMismatch {
            expected: model.num_states(),
            found: reward.values().len(),
        });
    }
    let mut v = vec![0.0; model.num_states()];
    let mut residual = f64::INFINITY;
    for _ in 0..=max_iters {
        let next = bellman(model, reward, beta, &v);
        residual = sup_distance(&next, &v);
        if residual <= tol {
            return Ok(ValueFunction::tabular(v));
        }
        v = next;
    }
    Err(Error::NotConverged {
        iterations: max_iters,
        residual,
        last: v,
    })
}

/// Greedy action `argmax_a (R_x v)(a)` over all actions; ties go to the
/// lowest action index.
pub fn optimal_policy(v: &ValueFunction, model: &TransitionModel, state: usize) -> Result<usize> {
    let all: Vec<usize> = (0..model.num_actions()).collect();
    optimal_policy_among(v, model, state, &all)
}

/// Greedy action restricted to `legal_actions`.
pub fn optimal_policy_among(
    v: &ValueFunction,
    model: &TransitionModel,
    state: usize,
    legal_actions: &[usize],
) -> Result<usize> {
    if !v.mode().is_tabular() {
        return Err(Error::invalid("greedy policies need a tabular value function"));
    }
    let r = transition_matrix(model, state, legal_actions)?;
    let u = r.utilities(v.values())?;
    Ok(r.action_labels[argmax(&u).expect("non-empty")])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyEvaluation {
    pub estimate: f64,
    pub std_error: f64,
    /// Upper bound on the discarded tail `β^H ‖r‖∞ / (1 − β)`.
    pub truncation_bound: f64,
}

/// Monte Carlo estimate of the discounted return
/// `E[Σ_{t≥1} β^{t-1} r(X_t) | X_1 = start]` under a stationary
/// deterministic `policy` (state → action), truncated at `horizon` steps.
pub fn evaluate_policy(
    model: &TransitionModel,
    reward: &RewardFunction,
    beta: f64,
    policy: &[usize],
    start_state: usize,
    num_rollouts: usize,
    horizon: usize,
    stream: RngStream,
) -> Result<PolicyEvaluation> {
    check_discount(beta)?;
    if policy.len() != model.num_states() {
        return Err(Error::DimensionMismatch { expected: model.num_states(), found: policy.len() });
    }
    if policy.iter().any(|&a| a >= model.num_actions()) || start_state >= model.num_states() {
        return Err(Error::invalid("policy action or start state out of range"));
    }
    if num_rollouts == 0 {
        return Err(Error::invalid("need at least one rollout"));
    }
    let mut rng = stream.rng();
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..num_rollouts {
        let mut x = start_state;
        let mut discount = 1.0;
        let mut total = 0.0;
        for _ in 0..horizon {
            total += discount * reward.r[x];
            discount *= beta;
            x = model.sample_next(x, policy[x], &mut rng);
        }
        sum += total;
        sum_sq += total * total;
    }
    let n = num_rollouts as f64;
    let mean = sum / n;
    let var = if num_rollouts > 1 {
        ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(PolicyEvaluation {
        estimate: mean,
        std_error: (var / n).sqrt(),
        truncation_bound: beta.powi(horizon as i32) * reward.sup_norm() / (1.0 - beta),
    })
}
