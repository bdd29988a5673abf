//! Synthetic play, MAP prediction, and the empirical action error.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::board::{Board, TetrisAction, DEFAULT_HEIGHT, DEFAULT_WIDTH};
use super::game::{feature_r_matrix, GameState, Replay, TetrisGame};
use crate::choice::{sample_action, ActionLabel, DataSource, Dataset, Observation, StateRef};
use crate::error::{Error, Result};
use crate::mdp::{ValueFunction, ValueMode};
use crate::rng::RngStream;
use crate::sampler::PosteriorSamples;
use crate::util::argmax;

/// Stream index for the action noise of a seeded synthetic game.
pub const NOISE_STREAM: u64 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoardSettings {
    pub height: usize,
    pub width: usize,
}

impl Default for BoardSettings {
    fn default() -> Self {
        BoardSettings { height: DEFAULT_HEIGHT, width: DEFAULT_WIDTH }
    }
}

pub fn labels(actions: &[TetrisAction]) -> Vec<ActionLabel> {
    actions
        .iter()
        .map(|a| ActionLabel::Placement { rot: a.degrees(), col: a.col })
        .collect()
}

pub fn state_ref(state: &GameState) -> StateRef {
    StateRef::Board { piece: state.piece, board: state.board.to_text() }
}

/// Recover the game state stored in an observation.
pub fn state_from_ref(state: &StateRef) -> Result<GameState> {
    match state {
        StateRef::Board { piece, board } => Ok(GameState::new(Board::from_text(board)?, *piece)),
        StateRef::Index(_) => Err(Error::invalid("observation does not hold a Tetris board")),
    }
}

/// An observation for the current state and a chosen legal action.
pub fn observe(t: usize, state: &GameState, chosen: TetrisAction) -> Result<Observation> {
    let (actions, r) = feature_r_matrix(state)?;
    let idx = actions
        .iter()
        .position(|&a| a == chosen)
        .ok_or_else(|| Error::IllegalAction(format!("{chosen:?}")))?;
    Observation::new(t, state_ref(state), labels(&actions), idx, r)
}

#[derive(Clone, Debug)]
pub struct GeneratedData {
    pub dataset: Dataset,
    /// Observation counts at which a game ended.
    pub game_overs: Vec<usize>,
    pub replay: Replay,
}

/// Play `steps` decisions with the noisy controller for `v`, restarting
/// after game over when asked (otherwise stopping early).
pub fn generate_data(
    v: &ValueFunction,
    steps: usize,
    seed: u64,
    board: BoardSettings,
    restart_on_termination: bool,
) -> Result<GeneratedData> {
    if v.len() != 3 || v.mode() != ValueMode::Basis {
        return Err(Error::invalid("Tetris data needs a 3-component basis value function"));
    }
    let mut game = TetrisGame::new(board.height, board.width, seed)?;
    let mut noise = RngStream::new(seed, NOISE_STREAM).rng();
    let mut observations = Vec::with_capacity(steps);
    let mut game_overs = Vec::new();
    while observations.len() < steps {
        if game.state().is_over() {
            game_overs.push(observations.len());
            if !restart_on_termination {
                break;
            }
            game.restart();
            continue;
        }
        let (actions, r) = feature_r_matrix(game.state())?;
        let (a, _) = sample_action(v.values(), &r, &mut noise)?;
        let t = observations.len();
        observations.push(Observation::new(t, state_ref(game.state()), labels(&actions), a, r)?);
        game.apply(actions[a])?;
    }
    let meta = serde_json::json!({
        "height": board.height,
        "width": board.width,
        "seed": seed,
        "v": v.values(),
        "restart_on_termination": restart_on_termination,
    });
    let dataset = Dataset::new(ValueMode::Basis, 3, observations)?
        .with_source(DataSource::Synthetic)
        .with_meta(meta);
    Ok(GeneratedData { dataset, game_overs, replay: game.replay().clone() })
}

/// Modal noisy argmax over posterior draws, each perturbed by fresh noise
/// scaled by `noise_scale`. Ties go to the lowest index.
pub fn map_predicted_action<R: Rng + ?Sized>(
    draws: &[&ValueFunction],
    r: &DMatrix<f64>,
    noise_scale: f64,
    rng: &mut R,
) -> Result<usize> {
    if draws.is_empty() {
        return Err(Error::EmptyPosterior);
    }
    if r.nrows() == 0 {
        return Err(Error::EmptyActionSet);
    }
    let mut counts = vec![0usize; r.nrows()];
    let mut u = vec![0.0; r.nrows()];
    for d in draws {
        if d.len() != r.ncols() {
            return Err(Error::DimensionMismatch { expected: r.ncols(), found: d.len() });
        }
        let mu = r * DVector::from_column_slice(d.values());
        for (slot, m) in u.iter_mut().zip(mu.iter()) {
            *slot = m + if noise_scale > 0.0 { noise_scale * rng.sample::<f64, _>(StandardNormal) } else { 0.0 };
        }
        counts[argmax(&u).expect("non-empty")] += 1;
    }
    let best = *counts.iter().max().unwrap();
    Ok(counts.iter().position(|&c| c == best).unwrap())
}

/// MAP placement for a live state from every stored draw.
pub fn map_predicted_tetris_action<R: Rng + ?Sized>(
    posterior: &PosteriorSamples,
    state: &GameState,
    rng: &mut R,
) -> Result<TetrisAction> {
    if posterior.mode != ValueMode::Basis {
        return Err(Error::invalid("MAP prediction for Tetris needs a basis-mode posterior"));
    }
    let (actions, r) = feature_r_matrix(state)?;
    let draws: Vec<&ValueFunction> = posterior.draws.iter().collect();
    Ok(actions[map_predicted_action(&draws, &r, 1.0, rng)?])
}

/// MAP prediction for each observation of a dataset.
pub fn predict_dataset<R: Rng + ?Sized>(draws: &[&ValueFunction], dataset: &Dataset, rng: &mut R) -> Result<Vec<usize>> {
    if dataset.is_empty() {
        return Err(Error::invalid("no observations to predict"));
    }
    dataset
        .observations
        .iter()
        .map(|o| map_predicted_action(draws, &o.r, 1.0, rng))
        .collect()
}

/// Fraction of mismatches.
pub fn action_error(predictions: &[usize], actual: &[usize]) -> Result<f64> {
    if predictions.len() != actual.len() {
        return Err(Error::DimensionMismatch { expected: actual.len(), found: predictions.len() });
    }
    if actual.is_empty() {
        return Err(Error::invalid("action error of an empty set"));
    }
    let wrong = predictions.iter().zip(actual).filter(|(p, a)| p != a).count();
    Ok(wrong as f64 / actual.len() as f64)
}

/// Error of guessing uniformly among the legal actions, `1 − mean(1/M_t)`.
pub fn uniform_guess_error(dataset: &Dataset) -> f64 {
    let n = dataset.len() as f64;
    1.0 - dataset.observations.iter().map(|o| 1.0 / o.num_actions() as f64).sum::<f64>() / n
}

/// Play from an empty board until game over or `max_steps`, choosing each
/// move with `policy(state, legal actions, R)`. Returns the number of
/// pieces placed.
pub fn play<F>(seed: u64, board: BoardSettings, max_steps: usize, mut policy: F) -> Result<usize>
where
    F: FnMut(&GameState, &[TetrisAction], &DMatrix<f64>) -> Result<usize>,
{
    let mut game = TetrisGame::new(board.height, board.width, seed)?;
    for t in 0..max_steps {
        if game.state().is_over() {
            return Ok(t);
        }
        let (actions, r) = feature_r_matrix(game.state())?;
        let a = policy(game.state(), &actions, &r)?;
        game.apply(actions[a])?;
    }
    Ok(max_steps)
}

/// Survival of the noisy controller for `v` with unit noise.
pub fn noisy_survival(v: &ValueFunction, seed: u64, board: BoardSettings, max_steps: usize) -> Result<usize> {
    let mut noise = RngStream::new(seed, NOISE_STREAM).rng();
    play(seed, board, max_steps, |_, _, r| Ok(sample_action(v.values(), r, &mut noise)?.0))
}
