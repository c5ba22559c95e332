//! Grid maps, start/goal scenarios and the generators for each map family.

mod format;
mod generators;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use format::{read_map, read_map_file, write_map, write_map_file};
pub use generators::{
    gen_corridor, gen_corridor_mixture, gen_maze, gen_random, gen_room, CorridorKind, MapFamily, PLACEMENT_RETRIES,
};

use crate::error::{Error, Result};
use crate::geom::{Action, Cell};

/// Static occupancy grid. Vertices are free cells; edges join 4-adjacent
/// free cells. Moves off the edge are invalid; no wall ring is implied.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GridMap {
    width: usize,
    height: usize,
    /// Row-major, `true` = obstacle.
    obstacles: Vec<bool>,
}

impl GridMap {
    pub fn new(width: usize, height: usize, obstacles: Vec<bool>) -> Result<Self> {
        if width < 2 || height < 2 {
            return Err(Error::Param(format!("map must be at least 2x2, got {width}x{height}")));
        }
        if obstacles.len() != width * height {
            return Err(Error::Param(format!(
                "expected {} cells, got {}",
                width * height,
                obstacles.len()
            )));
        }
        Ok(GridMap {
            width,
            height,
            obstacles,
        })
    }

    pub fn empty(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![false; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.obstacles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obstacles.is_empty()
    }

    pub fn in_bounds(&self, c: Cell) -> bool {
        c.row < self.height && c.col < self.width
    }

    pub fn index(&self, c: Cell) -> usize {
        c.row * self.width + c.col
    }

    pub fn cell(&self, index: usize) -> Cell {
        Cell::new(index / self.width, index % self.width)
    }

    pub fn is_free(&self, c: Cell) -> bool {
        self.in_bounds(c) && !self.obstacles[self.index(c)]
    }

    pub fn is_obstacle(&self, c: Cell) -> bool {
        !self.is_free(c)
    }

    pub fn set_obstacle(&mut self, c: Cell, obstacle: bool) {
        let i = self.index(c);
        self.obstacles[i] = obstacle;
    }

    /// Target of `action` from `c` if it lands on a free cell.
    pub fn target(&self, c: Cell, action: Action) -> Option<Cell> {
        c.step(action).filter(|t| self.is_free(*t))
    }

    /// Free 4-neighbours in Up, Down, Left, Right order.
    pub fn neighbors(&self, c: Cell) -> impl Iterator<Item = (Action, Cell)> + '_ {
        Action::MOVES
            .into_iter()
            .filter_map(move |a| self.target(c, a).map(|t| (a, t)))
    }

    pub fn free_cells(&self) -> Vec<Cell> {
        (0..self.len())
            .filter(|&i| !self.obstacles[i])
            .map(|i| self.cell(i))
            .collect()
    }

    pub fn obstacle_count(&self) -> usize {
        self.obstacles.iter().filter(|&&o| o).count()
    }

    pub fn density(&self) -> f64 {
        self.obstacle_count() as f64 / self.len() as f64
    }

    /// Connected-component label per cell (`usize::MAX` for obstacles).
    pub fn components(&self) -> Vec<usize> {
        let mut label = vec![usize::MAX; self.len()];
        let mut next = 0;
        let mut queue = std::collections::VecDeque::new();
        for start in 0..self.len() {
            if self.obstacles[start] || label[start] != usize::MAX {
                continue;
            }
            label[start] = next;
            queue.push_back(start);
            while let Some(i) = queue.pop_front() {
                for (_, n) in self.neighbors(self.cell(i)) {
                    let j = self.index(n);
                    if label[j] == usize::MAX {
                        label[j] = next;
                        queue.push_back(j);
                    }
                }
            }
            next += 1;
        }
        label
    }
}

/// A MAPF instance: map plus one start and one goal per agent.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub map: GridMap,
    pub starts: Vec<Cell>,
    pub goals: Vec<Cell>,
    pub seed: u64,
}

impl Scenario {
    pub fn n_agents(&self) -> usize {
        self.starts.len()
    }

    /// Check distinctness, free placement and start→goal reachability.
    pub fn validate(&self) -> Result<()> {
        let n = self.starts.len();
        if n == 0 || self.goals.len() != n {
            return Err(Error::Contract(format!(
                "need n >= 1 starts and as many goals, got {} / {}",
                n,
                self.goals.len()
            )));
        }
        for (what, cells) in [("start", &self.starts), ("goal", &self.goals)] {
            let mut seen = std::collections::HashSet::new();
            for c in cells {
                if !self.map.is_free(*c) {
                    return Err(Error::Contract(format!("{what} {c} is not a free cell")));
                }
                if !seen.insert(*c) {
                    return Err(Error::Contract(format!("duplicate {what} {c}")));
                }
            }
        }
        let comp = self.map.components();
        for (i, (s, g)) in self.starts.iter().zip(&self.goals).enumerate() {
            if comp[self.map.index(*s)] != comp[self.map.index(*g)] {
                return Err(Error::Contract(format!(
                    "agent {i}: goal {g} unreachable from start {s}"
                )));
            }
        }
        Ok(())
    }

    pub fn to_file(&self, map_ref: &str) -> ScenarioFile {
        ScenarioFile {
            map: map_ref.to_string(),
            starts: self.starts.clone(),
            goals: self.goals.clone(),
            seed: self.seed,
        }
    }

    /// Load a scenario JSON; its `map` field is either inline map text or a
    /// path relative to the JSON file.
    pub fn load(path: &Path) -> Result<Scenario> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: ScenarioFile = serde_json::from_str(&text)?;
        file.resolve(path.parent().unwrap_or(Path::new(".")))
    }
}

/// On-disk scenario: `{ "map": "<path or inline text>", "starts": [[r,c],...],
/// "goals": [[r,c],...], "seed": u64 }`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub map: String,
    pub starts: Vec<Cell>,
    pub goals: Vec<Cell>,
    pub seed: u64,
}

impl ScenarioFile {
    pub fn resolve(&self, base_dir: &Path) -> Result<Scenario> {
        let map = if self.map.contains('\n') {
            read_map(&self.map)?
        } else {
            read_map_file(&base_dir.join(&self.map))?
        };
        let sc = Scenario {
            map,
            starts: self.starts.clone(),
            goals: self.goals.clone(),
            seed: self.seed,
        };
        sc.validate()?;
        Ok(sc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_tiny_maps() {
        assert!(GridMap::empty(1, 5).is_err());
        assert!(GridMap::empty(2, 2).is_ok());
    }

    #[test]
    fn neighbors_respect_border_and_obstacles() {
        let mut m = GridMap::empty(3, 3).unwrap();
        m.set_obstacle(Cell::new(0, 1), true);
        let n: Vec<_> = m.neighbors(Cell::new(0, 0)).collect();
        assert_eq!(n, vec![(Action::Down, Cell::new(1, 0))]);
        assert_eq!(m.target(Cell::new(2, 2), Action::Right), None);
    }

    #[test]
    fn validate_catches_duplicates_and_disconnection() {
        let mut m = GridMap::empty(3, 3).unwrap();
        for r in 0..3 {
            m.set_obstacle(Cell::new(r, 1), true);
        }
        let ok = Scenario {
            map: m.clone(),
            starts: vec![Cell::new(0, 0)],
            goals: vec![Cell::new(2, 0)],
            seed: 0,
        };
        ok.validate().unwrap();
        let cut = Scenario {
            goals: vec![Cell::new(0, 2)],
            ..ok.clone()
        };
        assert!(cut.validate().is_err());
        let dup = Scenario {
            starts: vec![Cell::new(0, 0), Cell::new(0, 0)],
            goals: vec![Cell::new(1, 0), Cell::new(2, 0)],
            ..ok
        };
        assert!(dup.validate().is_err());
    }

    #[test]
    fn scenario_file_inline_map_roundtrip() {
        let sc = gen_random(6, 5, 0.1, 3, 9).unwrap();
        let file = sc.to_file(&write_map(&sc.map));
        let json = serde_json::to_string(&file).unwrap();
        let back: ScenarioFile = serde_json::from_str(&json).unwrap();
        assert_eq!(back.resolve(Path::new(".")).unwrap(), sc);
    }
}
