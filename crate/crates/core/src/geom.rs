//! Grid cells and the five-action move set.

use std::fmt;

use serde::{Deserialize, Serialize};

/// A grid cell addressed by `(row, col)`; row 0 is the top row.
///
/// Serialized as a two-element array `[row, col]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub const fn new(row: usize, col: usize) -> Self {
        Cell { row, col }
    }

    pub fn manhattan(self, other: Cell) -> usize {
        self.row.abs_diff(other.row) + self.col.abs_diff(other.col)
    }

    /// The cell reached by `action`, or `None` when it would leave the
    /// non-negative quadrant. Upper bounds are checked by the map.
    pub fn step(self, action: Action) -> Option<Cell> {
        let (dr, dc) = action.delta();
        let row = self.row.checked_add_signed(dr)?;
        let col = self.col.checked_add_signed(dc)?;
        Some(Cell { row, col })
    }
}

impl From<[usize; 2]> for Cell {
    fn from([row, col]: [usize; 2]) -> Self {
        Cell { row, col }
    }
}

impl From<Cell> for [usize; 2] {
    fn from(c: Cell) -> Self {
        [c.row, c.col]
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

/// One of the five primitive actions. `Idle` is index 0.
///
/// In a path flow, `Idle` doubles as the "stop" direction of the final
/// vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    #[default]
    Idle = 0,
    Up = 1,
    Down = 2,
    Left = 3,
    Right = 4,
}

impl Action {
    pub const COUNT: usize = 5;
    pub const ALL: [Action; 5] = [Action::Idle, Action::Up, Action::Down, Action::Left, Action::Right];
    /// Deterministic neighbour order used for every tie-break in the crate.
    pub const MOVES: [Action; 4] = [Action::Up, Action::Down, Action::Left, Action::Right];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Action> {
        Action::ALL.get(index).copied()
    }

    pub fn delta(self) -> (isize, isize) {
        match self {
            Action::Idle => (0, 0),
            Action::Up => (-1, 0),
            Action::Down => (1, 0),
            Action::Left => (0, -1),
            Action::Right => (0, 1),
        }
    }

    /// The move that takes `from` to the 4-adjacent cell `to` (or `Idle` when
    /// they coincide). `None` if the cells are not adjacent.
    pub fn between(from: Cell, to: Cell) -> Option<Action> {
        if from == to {
            return Some(Action::Idle);
        }
        Action::MOVES.into_iter().find(|a| from.step(*a) == Some(to))
    }

    pub fn is_move(self) -> bool {
        self != Action::Idle
    }
}
