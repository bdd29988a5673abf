//! Sampler configuration.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::mh::NewtonSettings;
use crate::choice::Dataset;
use crate::error::{Error, Result};
use crate::probability::{InverseGammaParams, Kappa};

/// Which group moves the sampler interleaves.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Moves {
    /// Plain data augmentation.
    #[serde(rename = "none")]
    None,
    #[serde(rename = "scale")]
    Scale,
    #[serde(rename = "translate")]
    Translate,
    #[default]
    #[serde(rename = "scale+translate")]
    ScaleTranslate,
}

impl Moves {
    pub fn has_scale(self) -> bool {
        matches!(self, Moves::Scale | Moves::ScaleTranslate)
    }

    pub fn has_translate(self) -> bool {
        matches!(self, Moves::Translate | Moves::ScaleTranslate)
    }
}

impl fmt::Display for Moves {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Moves::None => "none",
            Moves::Scale => "scale",
            Moves::Translate => "translate",
            Moves::ScaleTranslate => "scale+translate",
        })
    }
}

impl FromStr for Moves {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" | "da" => Ok(Moves::None),
            "scale" => Ok(Moves::Scale),
            "translate" => Ok(Moves::Translate),
            "scale+translate" | "translate+scale" | "px-da" | "pxda" => Ok(Moves::ScaleTranslate),
            other => Err(Error::Config(format!("unknown moves `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerMode {
    /// Tabular values under the sum-zero prior.
    #[default]
    Tabular,
    /// Basis coefficients under an isotropic prior.
    Basis,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step1Method {
    /// Rejection sampling; exact but slow for many actions.
    Exact,
    /// Independence Metropolis-Hastings.
    #[default]
    #[serde(alias = "mh")]
    MetropolisHastings,
}

/// Initial value function.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitPreset {
    #[default]
    Zero,
    /// Every component equal to the given value (basis mode only).
    Constant(f64),
    /// Explicit values; projected to sum zero in tabular mode.
    Values(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub mode: SamplerMode,
    pub moves: Moves,
    pub kappa: Kappa,
    pub ig: InverseGammaParams,
    pub iterations: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub step1: Step1Method,
    pub newton: NewtonSettings,
    /// Weight of the wide component in the Step-1 proposal mixture.
    pub defensive_weight: f64,
    /// Proposal cap for the exact Step-1 path.
    pub rejection_cap: usize,
    pub seed: u64,
    pub init: InitPreset,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            mode: SamplerMode::Tabular,
            moves: Moves::ScaleTranslate,
            kappa: Kappa::finite(2500.0).expect("positive"),
            ig: InverseGammaParams { a: 1.0, b: 1.0 },
            iterations: 10_000,
            burn_in: 5_000,
            thinning: 1,
            step1: Step1Method::MetropolisHastings,
            newton: NewtonSettings::default(),
            defensive_weight: 0.1,
            rejection_cap: 1_000_000,
            seed: 0,
            init: InitPreset::Zero,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.moves.has_translate() && self.mode == SamplerMode::Basis {
            return Err(Error::Config("translation moves need tabular mode".into()));
        }
        if !(self.ig.is_proper() || self.ig.is_improper()) {
            return Err(Error::Config(format!(
                "inverse gamma parameters must both be positive or both zero, got ({}, {})",
                self.ig.a, self.ig.b
            )));
        }
        if self.ig.is_improper() && !self.moves.has_scale() {
            return Err(Error::Config("an improper scale prior needs scale moves".into()));
        }
        if self.iterations == 0 || self.burn_in >= self.iterations {
            return Err(Error::Config(format!(
                "burn-in ({}) must be below the iteration count ({})",
                self.burn_in, self.iterations
            )));
        }
        if self.thinning == 0 {
            return Err(Error::Config("thinning must be at least 1".into()));
        }
        if self.newton.tolerance <= 0.0 || self.newton.tolerance.is_nan() {
            return Err(Error::Config("Newton tolerance must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.defensive_weight) {
            return Err(Error::Config(format!("defensive weight must lie in [0, 1), got {}", self.defensive_weight)));
        }
        if self.step1 == Step1Method::Exact && self.rejection_cap == 0 {
            return Err(Error::Config("rejection cap must be positive".into()));
        }
        if matches!(self.init, InitPreset::Constant(_)) && self.mode == SamplerMode::Tabular {
            return Err(Error::Config("a constant start is the zero function under the sum-zero prior".into()));
        }
        Ok(())
    }

    pub fn validate_for(&self, dataset: &Dataset) -> Result<()> {
        self.validate()?;
        let tabular = dataset.mode.is_tabular();
        if tabular != (self.mode == SamplerMode::Tabular) {
            return Err(Error::Config("sampler mode does not match the dataset".into()));
        }
        if tabular && dataset.dim < 2 {
            return Err(Error::Config("tabular mode needs at least two states".into()));
        }
        if let InitPreset::Values(v) = &self.init {
            if v.len() != dataset.dim {
                return Err(Error::DimensionMismatch { expected: dataset.dim, found: v.len() });
            }
        }
        Ok(())
    }
}
