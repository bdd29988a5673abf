#![allow(dead_code)]

use nalgebra::DMatrix;
use noisy_mdp::choice::{simulate_dataset, ActionLabel, Dataset, Observation, StateRef};
use noisy_mdp::mdp::{TransitionModel, ValueFunction, ValueMode};
use noisy_mdp::probability::{sample_sum_zero_gaussian, Kappa, SumZeroGaussianPrior};
use noisy_mdp::rng::RngStream;

/// Random Dirichlet(1) MDP with a value function drawn from the sum-zero
/// prior, and a trajectory of noisy decisions.
pub fn random_tabular(n: usize, m: usize, t: usize, kappa: f64, seed: u64) -> (TransitionModel, ValueFunction, Dataset) {
    let mut rng = RngStream::new(seed, 0).rng();
    let model = TransitionModel::random(n, m, &mut rng);
    let prior = SumZeroGaussianPrior::new(n, Kappa::finite(kappa).unwrap()).unwrap();
    let v = sample_sum_zero_gaussian(&prior, &mut rng).unwrap();
    let data = simulate_dataset(&model, &v, t, 0, &mut rng).unwrap();
    (model, v, data)
}

/// Basis-mode dataset from explicit design matrices and choices.
pub fn basis_dataset(rows: &[(Vec<Vec<f64>>, usize)]) -> Dataset {
    let dim = rows.first().map_or(1, |r| r.0[0].len());
    let obs = rows
        .iter()
        .enumerate()
        .map(|(t, (r, a))| {
            let m = DMatrix::from_fn(r.len(), dim, |i, j| r[i][j]);
            Observation::new(t, StateRef::Index(0), (0..r.len()).map(ActionLabel::Index).collect(), *a, m).unwrap()
        })
        .collect();
    Dataset::new(ValueMode::Basis, dim, obs).unwrap()
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn var(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Monotone piecewise-linear CDF from a density tabulated on a grid.
pub struct GridCdf {
    xs: Vec<f64>,
    cum: Vec<f64>,
}

impl GridCdf {
    pub fn from_density(xs: Vec<f64>, dens: &[f64]) -> Self {
        let mut cum = vec![0.0; xs.len()];
        for i in 1..xs.len() {
            cum[i] = cum[i - 1] + 0.5 * (dens[i] + dens[i - 1]) * (xs[i] - xs[i - 1]);
        }
        let total = *cum.last().unwrap();
        cum.iter_mut().for_each(|c| *c /= total);
        GridCdf { xs, cum }
    }

    pub fn eval(&self, x: f64) -> f64 {
        if x <= self.xs[0] {
            return 0.0;
        }
        if x >= *self.xs.last().unwrap() {
            return 1.0;
        }
        let i = self.xs.partition_point(|&g| g <= x);
        let (x0, x1) = (self.xs[i - 1], self.xs[i]);
        let f = (x - x0) / (x1 - x0);
        self.cum[i - 1] + f * (self.cum[i] - self.cum[i - 1])
    }
}
