//! The guide chapters in `book/src`, compiled as doctests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/mdp.md")]
pub mod mdp {}

#[doc = include_str!("../../../book/src/choice-model.md")]
pub mod choice_model {}

#[doc = include_str!("../../../book/src/working-parameters.md")]
pub mod working_parameters {}

#[doc = include_str!("../../../book/src/sampler.md")]
pub mod sampler {}

#[doc = include_str!("../../../book/src/diagnostics.md")]
pub mod diagnostics {}

#[doc = include_str!("../../../book/src/tetris.md")]
pub mod tetris {}

#[doc = include_str!("../../../book/src/serving.md")]
pub mod serving {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}

#[doc = include_str!("../../../book/src/acceptance.md")]
pub mod acceptance {}
