//! Board occupancy, the drop-and-clear dynamics, and the three features.

use serde::{Deserialize, Serialize};

use super::pieces::footprint;
use crate::error::{Error, Result};

pub const DEFAULT_HEIGHT: usize = 30;
pub const DEFAULT_WIDTH: usize = 10;

/// Rows as column bitmasks; row 0 is the floor.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Board {
    rows: Vec<u32>,
    width: usize,
}

/// A placement: clockwise rotation in quarter-turns and the leftmost
/// column of the rotated footprint.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TetrisAction {
    pub rotation: u8,
    pub col: u8,
}

impl TetrisAction {
    pub fn degrees(&self) -> u16 {
        90 * self.rotation as u16
    }

    pub fn from_degrees(rot: u16, col: u8) -> Result<Self> {
        if rot % 90 != 0 || rot >= 360 {
            return Err(Error::IllegalAction(format!("rotation {rot} is not a multiple of 90 below 360")));
        }
        Ok(TetrisAction { rotation: (rot / 90) as u8, col })
    }
}

/// `(φ₁, φ₂, φ₃)`: maximum height, covered holes, and the sum of squared
/// adjacent height differences.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; 3]);

/// Result of dropping a piece.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Placement {
    pub board: Board,
    pub rows_cleared: usize,
}

impl Board {
    pub fn empty(height: usize, width: usize) -> Result<Self> {
        if !(4..=32).contains(&width) || height < 4 {
            return Err(Error::invalid(format!("unsupported board size {height}x{width}")));
        }
        Ok(Board { rows: vec![0; height], width })
    }

    pub fn default_size() -> Self {
        Board::empty(DEFAULT_HEIGHT, DEFAULT_WIDTH).expect("valid default")
    }

    pub fn height(&self) -> usize {
        self.rows.len()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    fn full_mask(&self) -> u32 {
        if self.width == 32 { u32::MAX } else { (1u32 << self.width) - 1 }
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.rows[row] >> col & 1 == 1
    }

    pub fn set(&mut self, row: usize, col: usize, occupied: bool) {
        if occupied {
            self.rows[row] |= 1 << col;
        } else {
            self.rows[row] &= !(1 << col);
        }
    }

    /// Row bitmasks from the floor up.
    pub fn rows(&self) -> &[u32] {
        &self.rows
    }

    pub fn occupied_cells(&self) -> usize {
        self.rows.iter().map(|r| r.count_ones() as usize).sum()
    }

    /// The top row holds a block.
    pub fn is_terminated(&self) -> bool {
        *self.rows.last().unwrap() != 0
    }

    pub fn has_full_row(&self) -> bool {
        let full = self.full_mask();
        self.rows.iter().any(|&r| r == full)
    }

    /// 1-based row of the topmost occupied cell of each column, 0 if empty.
    pub fn column_heights(&self) -> Vec<usize> {
        (0..self.width)
            .map(|c| {
                self.rows
                    .iter()
                    .rposition(|r| r >> c & 1 == 1)
                    .map_or(0, |i| i + 1)
            })
            .collect()
    }

    pub fn features(&self) -> FeatureVector {
        let h = self.column_heights();
        let max = *h.iter().max().unwrap_or(&0) as f64;
        let holes: usize = (0..self.width)
            .map(|c| {
                let filled = self.rows[..h[c]].iter().filter(|r| *r >> c & 1 == 1).count();
                h[c] - filled
            })
            .sum();
        let bump: f64 = h.windows(2).map(|w| (w[0] as f64 - w[1] as f64).powi(2)).sum();
        FeatureVector([max, holes as f64, bump])
    }

    fn fits(&self, piece: u8, action: TetrisAction, base_row: i32) -> bool {
        let f = footprint(piece, action.rotation);
        if base_row < 0 || base_row + f.height > self.height() as i32 {
            return false;
        }
        (0..f.height).all(|r| self.rows[(base_row + r) as usize] & (f.row_mask(r) << action.col) == 0)
    }

    /// Row at which the footprint's bottom sits when spawned with its top in
    /// the top row.
    fn spawn_row(&self, piece: u8, rotation: u8) -> i32 {
        self.height() as i32 - footprint(piece, rotation).height
    }

    /// Within the columns and free at the spawn position.
    pub fn is_legal(&self, piece: u8, action: TetrisAction) -> bool {
        if action.rotation > 3 {
            return false;
        }
        let f = footprint(piece, action.rotation);
        action.col as i32 + f.width <= self.width as i32 && self.fits(piece, action, self.spawn_row(piece, action.rotation))
    }

    /// Legal placements, rotation-major then by column. Symmetric rotations
    /// are kept as distinct actions.
    pub fn legal_actions(&self, piece: u8) -> Vec<TetrisAction> {
        if self.is_terminated() {
            return Vec::new();
        }
        let mut out = Vec::new();
        for rotation in 0..4u8 {
            let w = footprint(piece, rotation).width;
            for col in 0..=(self.width as i32 - w) {
                let a = TetrisAction { rotation, col: col as u8 };
                if self.is_legal(piece, a) {
                    out.push(a);
                }
            }
        }
        out
    }

    /// Rotate and translate at the spawn row, fall, then clear full rows.
    pub fn place(&self, piece: u8, action: TetrisAction) -> Result<Placement> {
        if !self.is_legal(piece, action) {
            return Err(Error::IllegalAction(format!(
                "rotation {} at column {} for piece {piece}",
                action.degrees(),
                action.col
            )));
        }
        let mut row = self.spawn_row(piece, action.rotation);
        while self.fits(piece, action, row - 1) {
            row -= 1;
        }
        let f = footprint(piece, action.rotation);
        let mut next = self.clone();
        for r in 0..f.height {
            next.rows[(row + r) as usize] |= f.row_mask(r) << action.col;
        }
        let full = next.full_mask();
        let before = next.rows.len();
        next.rows.retain(|&r| r != full);
        let rows_cleared = before - next.rows.len();
        next.rows.resize(before, 0);
        Ok(Placement { board: next, rows_cleared })
    }

    /// Rows top to bottom, `#` occupied and `.` empty.
    pub fn to_text(&self) -> Vec<String> {
        self.rows
            .iter()
            .rev()
            .map(|r| (0..self.width).map(|c| if r >> c & 1 == 1 { '#' } else { '.' }).collect())
            .collect()
    }

    pub fn from_text<S: AsRef<str>>(lines: &[S]) -> Result<Self> {
        let width = lines.first().map_or(0, |l| l.as_ref().chars().count());
        let mut board = Board::empty(lines.len(), width)?;
        for (i, line) in lines.iter().enumerate() {
            let line = line.as_ref();
            if line.chars().count() != width {
                return Err(Error::Parse { line: i + 1, message: "ragged board row".into() });
            }
            let row = lines.len() - 1 - i;
            for (c, ch) in line.chars().enumerate() {
                match ch {
                    '#' => board.set(row, c, true),
                    '.' => {}
                    other => {
                        return Err(Error::Parse { line: i + 1, message: format!("unexpected cell `{other}`") })
                    }
                }
            }
        }
        Ok(board)
    }

    /// Rows top to bottom as 0/1 cells.
    pub fn to_matrix(&self) -> Vec<Vec<u8>> {
        self.rows
            .iter()
            .rev()
            .map(|r| (0..self.width).map(|c| (r >> c & 1) as u8).collect())
            .collect()
    }
}
