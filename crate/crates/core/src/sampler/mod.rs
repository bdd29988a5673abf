//! Data-augmentation and parameter-expanded data-augmentation Gibbs
//! samplers for the noisy action model.
//!
//! Each iteration draws working parameters from their prior, refreshes the
//! latent utilities, maps them through the inverse group action, and then
//! draws the value function jointly with new working parameters.

pub mod chain;
pub mod config;
pub mod conjugate;
pub mod mh;
pub mod posterior;
pub mod stationarity;
pub mod transform;

pub use chain::{pxda_iteration, run_chain, run_chain_on_stream, step1, AcceptanceCount, ChainState, Sampler, Step1Output};
pub use config::{InitPreset, Moves, SamplerConfig, SamplerMode, Step1Method};
pub use conjugate::{helmert_basis, step2, Step2Design, Step2Output};
pub use mh::{exact_step_w, log_target, mh_proposal_params, mh_step_w, NewtonSettings, ProposalParams};
pub use posterior::{DivergenceCheck, PosteriorSamples, Summary};
pub use stationarity::{stationary_check_q, StationarityReport};
pub use transform::{apply_transform, log_jacobian, AugmentedData, Direction, TransformParams};
