//! Tetris as a noisy MDP with three board features as the value basis.

pub mod board;
pub mod data;
pub mod game;
pub mod pieces;

pub use board::{Board, FeatureVector, Placement, TetrisAction, DEFAULT_HEIGHT, DEFAULT_WIDTH};
pub use data::{
    action_error, generate_data, map_predicted_action, map_predicted_tetris_action, noisy_survival, observe, play,
    predict_dataset, state_from_ref, uniform_guess_error, BoardSettings, GeneratedData,
};
pub use game::{feature_r_matrix, step, untouched_action, GameState, Replay, ReplayMove, StepOutcome, TetrisGame};
pub use pieces::{footprint, footprint_table_text, Footprint};
