//! Chain state, Step 1, and the full iteration.

use std::time::Instant;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::config::{InitPreset, SamplerConfig, SamplerMode, Step1Method};
use super::conjugate::Step2Design;
use super::mh::{exact_step_w, mh_proposal_params, mh_step_w};
use super::posterior::{DivergenceCheck, PosteriorSamples};
use super::transform::{apply_transform, AugmentedData, Direction, TransformParams};
use crate::choice::Dataset;
use crate::error::Result;
use crate::mdp::ValueFunction;
use crate::probability::sample_inverse_gamma;
use crate::rng::RngStream;

#[derive(Clone, Debug, PartialEq)]
pub struct ChainState {
    pub v: ValueFunction,
    pub w: AugmentedData,
    /// Working parameters drawn by the last Step 2.
    pub z: TransformParams,
    pub iteration: usize,
}

impl ChainState {
    /// Start from the configured value function and the feasible utilities
    /// `w(a_t) = 1`, `w(j) = 0`.
    pub fn initial(dataset: &Dataset, config: &SamplerConfig) -> Result<Self> {
        config.validate_for(dataset)?;
        let dim = dataset.dim;
        let raw = match &config.init {
            InitPreset::Zero => vec![0.0; dim],
            InitPreset::Constant(c) => vec![*c; dim],
            InitPreset::Values(v) => v.clone(),
        };
        let v = match config.mode {
            SamplerMode::Tabular => {
                let mean = raw.iter().sum::<f64>() / dim as f64;
                ValueFunction::tabular_sum_zero(raw.iter().map(|x| x - mean).collect())
            }
            SamplerMode::Basis => ValueFunction::basis(raw),
        };
        let chosen: Vec<usize> = dataset.observations.iter().map(|o| o.action).collect();
        Ok(ChainState {
            v,
            w: AugmentedData::feasible(&dataset.action_counts(), &chosen),
            z: TransformParams::IDENTITY,
            iteration: 0,
        })
    }
}

/// Per-observation Metropolis-Hastings tallies.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcceptanceCount {
    pub accepted: u64,
    pub proposed: u64,
}

impl AcceptanceCount {
    pub fn rate(&self) -> Option<f64> {
        (self.proposed > 0).then(|| self.accepted as f64 / self.proposed as f64)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Step1Output {
    /// Freshly drawn utilities on the model scale.
    pub w: AugmentedData,
    /// The same utilities after the inverse group map.
    pub w_prime: AugmentedData,
    pub z: TransformParams,
    pub accepted: Vec<bool>,
    pub newton_fallbacks: usize,
}

/// A sampler bound to one dataset, holding the Step-2 factorization and the
/// running acceptance tallies.
pub struct Sampler<'a> {
    dataset: &'a Dataset,
    config: SamplerConfig,
    design: Step2Design,
    acceptance: Vec<AcceptanceCount>,
    newton_fallbacks: u64,
}

impl<'a> Sampler<'a> {
    pub fn new(dataset: &'a Dataset, config: &SamplerConfig) -> Result<Self> {
        config.validate_for(dataset)?;
        Ok(Sampler {
            dataset,
            config: config.clone(),
            design: Step2Design::new(dataset, config)?,
            acceptance: vec![AcceptanceCount::default(); dataset.len()],
            newton_fallbacks: 0,
        })
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.config
    }

    pub fn acceptance(&self) -> &[AcceptanceCount] {
        &self.acceptance
    }

    pub fn newton_fallbacks(&self) -> u64 {
        self.newton_fallbacks
    }

    pub fn reset_tallies(&mut self) {
        self.acceptance.iter_mut().for_each(|a| *a = AcceptanceCount::default());
        self.newton_fallbacks = 0;
    }

    /// Working parameters from their prior; improper components stay at the
    /// identity.
    fn draw_working<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<TransformParams> {
        let c = &self.config;
        let z1 = if c.moves.has_scale() && c.ig.is_proper() {
            sample_inverse_gamma(&c.ig, rng)?
        } else {
            1.0
        };
        let z2 = if c.moves.has_translate() && c.kappa.is_finite() {
            (c.kappa.value() / self.dataset.dim as f64).sqrt() * rng.sample::<f64, _>(StandardNormal)
        } else {
            0.0
        };
        Ok(TransformParams { z1, z2 })
    }

    pub fn step1<R: Rng + ?Sized>(&mut self, state: &ChainState, rng: &mut R) -> Result<Step1Output> {
        let z = self.draw_working(rng)?;
        let v = DVector::from_column_slice(state.v.values());
        let mut w = state.w.clone();
        let mut accepted = Vec::with_capacity(self.dataset.len());
        let mut fallbacks = 0;
        for (t, o) in self.dataset.observations.iter().enumerate() {
            let mu: Vec<f64> = (&o.r * &v).iter().copied().collect();
            let wt = &mut w.w[t];
            match self.config.step1 {
                Step1Method::MetropolisHastings => {
                    let p = mh_proposal_params(&mu, o.action, &self.config.newton)?
                        .with_defensive(self.config.defensive_weight);
                    if !p.refined {
                        fallbacks += 1;
                    }
                    accepted.push(mh_step_w(wt, &mu, o.action, &p, rng)?);
                }
                Step1Method::Exact => {
                    exact_step_w(wt, &mu, o.action, self.config.rejection_cap, rng)?;
                    accepted.push(true);
                }
            }
        }
        for (count, &a) in self.acceptance.iter_mut().zip(&accepted) {
            count.proposed += 1;
            count.accepted += a as u64;
        }
        self.newton_fallbacks += fallbacks as u64;
        let w_prime = apply_transform(&w, &z, Direction::Inverse);
        Ok(Step1Output { w, w_prime, z, accepted, newton_fallbacks: fallbacks })
    }

    pub fn iterate<R: Rng + ?Sized>(&mut self, state: &mut ChainState, rng: &mut R) -> Result<()> {
        let s1 = self.step1(state, rng)?;
        let s2 = self.design.draw(&s1.w_prime, rng)?;
        state.v = s2.v;
        state.w = s2.w;
        state.z = s2.z;
        state.iteration += 1;
        Ok(())
    }

    /// Run the configured number of iterations from `state`, keeping thinned
    /// post-burn-in draws. Tallies cover the kept phase only.
    pub fn run<R: Rng + ?Sized>(&mut self, state: &mut ChainState, rng: &mut R) -> Result<PosteriorSamples> {
        let started = Instant::now();
        let c = self.config.clone();
        let mut draws = Vec::with_capacity((c.iterations - c.burn_in).div_ceil(c.thinning));
        let mut iterations = Vec::with_capacity(draws.capacity());
        for it in 0..c.iterations {
            if it == c.burn_in {
                self.reset_tallies();
            }
            self.iterate(state, rng)?;
            if it >= c.burn_in && (it - c.burn_in) % c.thinning == 0 {
                draws.push(state.v.clone());
                iterations.push(it);
            }
        }
        let divergence = DivergenceCheck::from_draws(&draws);
        Ok(PosteriorSamples {
            config: c,
            mode: state.v.mode(),
            dim: self.dataset.dim,
            iterations,
            draws,
            acceptance: self.acceptance.clone(),
            newton_fallbacks: self.newton_fallbacks,
            divergence,
            wall_time_secs: started.elapsed().as_secs_f64(),
        })
    }
}

/// Step 1 on its own: working parameters from the prior, fresh utilities,
/// then `w′ = √z1 (w + z2·1)`.
pub fn step1<R: Rng + ?Sized>(
    state: &ChainState,
    dataset: &Dataset,
    config: &SamplerConfig,
    rng: &mut R,
) -> Result<Step1Output> {
    Sampler::new(dataset, config)?.step1(state, rng)
}

/// One full iteration (Step 1 then Step 2). With `moves = none` this is
/// plain data augmentation.
pub fn pxda_iteration<R: Rng + ?Sized>(
    state: &ChainState,
    dataset: &Dataset,
    config: &SamplerConfig,
    rng: &mut R,
) -> Result<ChainState> {
    let mut next = state.clone();
    Sampler::new(dataset, config)?.iterate(&mut next, rng)?;
    Ok(next)
}

/// Run a chain from the configured start with the configured seed.
pub fn run_chain(dataset: &Dataset, config: &SamplerConfig) -> Result<PosteriorSamples> {
    run_chain_on_stream(dataset, config, RngStream::new(config.seed, 0))
}

pub fn run_chain_on_stream(dataset: &Dataset, config: &SamplerConfig, stream: RngStream) -> Result<PosteriorSamples> {
    let mut sampler = Sampler::new(dataset, config)?;
    let mut state = ChainState::initial(dataset, config)?;
    let mut rng = stream.rng();
    sampler.run(&mut state, &mut rng)
}
