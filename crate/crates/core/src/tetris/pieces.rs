//! The seven tetrominoes and their rotation footprints.

use std::sync::OnceLock;

/// Piece identifiers: 1=I, 2=O, 3=T, 4=S, 5=Z, 6=J, 7=L.
pub const PIECE_IDS: [u8; 7] = [1, 2, 3, 4, 5, 6, 7];

pub const PIECE_NAMES: [char; 7] = ['I', 'O', 'T', 'S', 'Z', 'J', 'L'];

/// Cells as `(row, col)` with row 0 at the bottom of the footprint.
pub type Cell = (i32, i32);

const BASE: [[Cell; 4]; 7] = [
    [(0, 0), (0, 1), (0, 2), (0, 3)],
    [(0, 0), (0, 1), (1, 0), (1, 1)],
    [(0, 0), (0, 1), (0, 2), (1, 1)],
    [(0, 0), (0, 1), (1, 1), (1, 2)],
    [(1, 0), (1, 1), (0, 1), (0, 2)],
    [(1, 0), (0, 0), (0, 1), (0, 2)],
    [(0, 0), (0, 1), (0, 2), (1, 2)],
];

/// One rotation of one piece, normalized so the lowest row and leftmost
/// column are 0.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Footprint {
    pub cells: [Cell; 4],
    pub width: i32,
    pub height: i32,
}

impl Footprint {
    fn from_cells(mut cells: [Cell; 4]) -> Self {
        let min_r = cells.iter().map(|c| c.0).min().unwrap();
        let min_c = cells.iter().map(|c| c.1).min().unwrap();
        for c in cells.iter_mut() {
            *c = (c.0 - min_r, c.1 - min_c);
        }
        cells.sort();
        Footprint {
            width: cells.iter().map(|c| c.1).max().unwrap() + 1,
            height: cells.iter().map(|c| c.0).max().unwrap() + 1,
            cells,
        }
    }

    /// Bitmask of the footprint's row `r` (bit `c` for column `c`).
    pub fn row_mask(&self, r: i32) -> u32 {
        self.cells.iter().filter(|c| c.0 == r).fold(0, |m, c| m | (1 << c.1))
    }
}

/// Clockwise quarter-turn: `(row, col) ↦ (−col, row)`.
fn rotate_cw(cells: [Cell; 4]) -> [Cell; 4] {
    cells.map(|(r, c)| (-c, r))
}

fn table() -> &'static [[Footprint; 4]; 7] {
    static TABLE: OnceLock<[[Footprint; 4]; 7]> = OnceLock::new();
    TABLE.get_or_init(|| {
        BASE.map(|base| {
            let mut cells = base;
            let mut out: [Option<Footprint>; 4] = [None, None, None, None];
            for slot in out.iter_mut() {
                *slot = Some(Footprint::from_cells(cells));
                cells = rotate_cw(cells);
            }
            out.map(Option::unwrap)
        })
    })
}

/// Footprint of `piece` (1..=7) after `rotation` (0..=3) clockwise
/// quarter-turns.
pub fn footprint(piece: u8, rotation: u8) -> &'static Footprint {
    assert!((1..=7).contains(&piece), "piece id {piece} out of range");
    &table()[(piece - 1) as usize][(rotation % 4) as usize]
}

/// Text rendering of all footprints, used as golden data.
pub fn footprint_table_text() -> String {
    let mut out = String::new();
    for &p in &PIECE_IDS {
        for rot in 0..4u8 {
            let f = footprint(p, rot);
            out.push_str(&format!("{} {}\n", PIECE_NAMES[(p - 1) as usize], 90 * rot as u16));
            for r in (0..f.height).rev() {
                let line: String = (0..f.width)
                    .map(|c| if f.cells.contains(&(r, c)) { '#' } else { '.' })
                    .collect();
                out.push_str(&line);
                out.push('\n');
            }
        }
    }
    out
}
