//! Game state, the transition `ψ`, the feature design matrix, and
//! replayable games.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::board::{Board, TetrisAction};
use super::pieces::footprint;
use crate::error::{Error, Result};
use crate::rng::{self, RngStream};

/// Stream index reserved for the piece sequence of a seeded game.
pub const PIECE_STREAM: u64 = 0;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GameState {
    pub board: Board,
    pub piece: u8,
    pub terminated: bool,
}

impl GameState {
    pub fn new(board: Board, piece: u8) -> Self {
        let terminated = board.is_terminated();
        GameState { board, piece, terminated }
    }

    pub fn legal_actions(&self) -> Vec<TetrisAction> {
        if self.terminated {
            return Vec::new();
        }
        self.board.legal_actions(self.piece)
    }

    /// Terminated, or the current piece has nowhere to go.
    pub fn is_over(&self) -> bool {
        self.terminated || self.legal_actions().is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StepOutcome {
    pub board: Board,
    pub rows_cleared: usize,
}

/// Apply `ψ`. A terminated board is returned unchanged whatever the action.
pub fn step(state: &GameState, action: TetrisAction) -> Result<StepOutcome> {
    if state.terminated {
        return Ok(StepOutcome { board: state.board.clone(), rows_cleared: 0 });
    }
    let p = state.board.place(state.piece, action)?;
    Ok(StepOutcome { board: p.board, rows_cleared: p.rows_cleared })
}

/// The placement used when no decision is made: base orientation at the
/// spawn column.
pub fn untouched_action(board: &Board, piece: u8) -> TetrisAction {
    let w = footprint(piece, 0).width as usize;
    TetrisAction { rotation: 0, col: ((board.width() - w) / 2) as u8 }
}

/// Legal actions and the `M × 3` matrix of post-placement features.
pub fn feature_r_matrix(state: &GameState) -> Result<(Vec<TetrisAction>, DMatrix<f64>)> {
    if state.terminated {
        return Err(Error::Terminated);
    }
    let actions = state.legal_actions();
    if actions.is_empty() {
        return Err(Error::EmptyActionSet);
    }
    let mut r = DMatrix::zeros(actions.len(), 3);
    for (i, &a) in actions.iter().enumerate() {
        let f = state.board.place(state.piece, a)?.board.features();
        for j in 0..3 {
            r[(i, j)] = f.0[j];
        }
    }
    Ok((actions, r))
}

/// One entry of a replay log.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplayMove {
    Place { rot: u16, col: u8 },
    /// The untouched fall after a missed decision.
    Fall,
    /// A fresh empty board after game over.
    Restart,
}

/// Everything needed to rebuild a game bit for bit.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Replay {
    pub seed: u64,
    pub height: usize,
    pub width: usize,
    pub pieces: Vec<u8>,
    pub moves: Vec<ReplayMove>,
}

impl Replay {
    /// Re-run the moves and return the final board.
    pub fn replay(&self) -> Result<Board> {
        let mut pieces = self.pieces.iter().copied();
        let mut next = || pieces.next().ok_or_else(|| Error::invalid("replay ran out of pieces"));
        let mut board = Board::empty(self.height, self.width)?;
        let mut piece = next()?;
        for m in &self.moves {
            match *m {
                ReplayMove::Place { rot, col } => {
                    board = board.place(piece, TetrisAction::from_degrees(rot, col)?)?.board;
                    piece = next()?;
                }
                ReplayMove::Fall => {
                    let a = untouched_action(&board, piece);
                    board = board.place(piece, a)?.board;
                    piece = next()?;
                }
                ReplayMove::Restart => board = Board::empty(self.height, self.width)?,
            }
        }
        Ok(board)
    }
}

/// A live game drawing pieces uniformly from its own seeded stream.
pub struct TetrisGame {
    state: GameState,
    piece_rng: rng::Rng,
    replay: Replay,
    rows_cleared: usize,
}

impl TetrisGame {
    pub fn new(height: usize, width: usize, seed: u64) -> Result<Self> {
        let board = Board::empty(height, width)?;
        let mut piece_rng = RngStream::new(seed, PIECE_STREAM).rng();
        let piece = piece_rng.random_range(1..=7u8);
        Ok(TetrisGame {
            state: GameState::new(board, piece),
            piece_rng,
            replay: Replay { seed, height, width, pieces: vec![piece], moves: Vec::new() },
            rows_cleared: 0,
        })
    }

    pub fn state(&self) -> &GameState {
        &self.state
    }

    pub fn replay(&self) -> &Replay {
        &self.replay
    }

    pub fn rows_cleared(&self) -> usize {
        self.rows_cleared
    }

    fn advance(&mut self, outcome: StepOutcome, mv: ReplayMove) {
        let piece = self.piece_rng.random_range(1..=7u8);
        self.replay.pieces.push(piece);
        self.replay.moves.push(mv);
        self.rows_cleared += outcome.rows_cleared;
        self.state = GameState::new(outcome.board, piece);
    }

    /// Place the current piece and draw the next one.
    pub fn apply(&mut self, action: TetrisAction) -> Result<StepOutcome> {
        if self.state.terminated {
            return Err(Error::Terminated);
        }
        let out = step(&self.state, action)?;
        self.advance(out.clone(), ReplayMove::Place { rot: action.degrees(), col: action.col });
        Ok(out)
    }

    /// Drop the current piece untouched. Ends the game if even that
    /// placement is blocked.
    pub fn apply_untouched(&mut self) -> Result<StepOutcome> {
        if self.state.terminated {
            return Err(Error::Terminated);
        }
        let a = untouched_action(&self.state.board, self.state.piece);
        if !self.state.board.is_legal(self.state.piece, a) {
            self.state.terminated = true;
            return Err(Error::Terminated);
        }
        let out = step(&self.state, a)?;
        self.advance(out.clone(), ReplayMove::Fall);
        Ok(out)
    }

    /// Start over on an empty board, keeping the current piece.
    pub fn restart(&mut self) {
        let board = Board::empty(self.replay.height, self.replay.width).expect("validated size");
        self.state = GameState::new(board, self.state.piece);
        self.replay.moves.push(ReplayMove::Restart);
    }
}
