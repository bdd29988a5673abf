//! Bayesian inverse reinforcement learning for noisy Markov decision
//! processes.
//!
//! An observed controller picks actions by maximizing expected next-state
//! value plus Gaussian noise. Given its decisions and the transition
//! model, the crate samples the posterior over value functions with data
//! augmentation and parameter-expanded data augmentation Gibbs samplers.

pub mod choice;
pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod mdp;
pub mod probability;
pub mod rng;
pub mod sampler;
pub mod session;
pub mod tetris;
pub mod util;

pub use error::{Error, Result};
