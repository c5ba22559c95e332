//! BFS distance fields and deterministic shortest-path flows.
//!
//! Shortest paths are read off an exact BFS distance field by greedy
//! descent with the fixed neighbour order Up, Down, Left, Right. With unit
//! edge costs this returns an optimal path, and a single field per goal
//! serves every query for that goal over a whole episode.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use crate::error::{Error, Result};
use crate::geom::{Action, Cell};
use crate::mapgen::GridMap;

pub const UNREACHABLE: u32 = u32::MAX;

/// Exact shortest-path distance from every cell to one goal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceField {
    goal: Cell,
    width: usize,
    dist: Vec<u32>,
}

impl DistanceField {
    pub fn goal(&self) -> Cell {
        self.goal
    }

    /// Distance in steps, `None` when unreachable (or an obstacle, or off
    /// the map).
    pub fn get(&self, c: Cell) -> Option<u32> {
        if c.col >= self.width {
            return None;
        }
        match self.dist.get(c.row * self.width + c.col) {
            Some(&d) if d != UNREACHABLE => Some(d),
            _ => None,
        }
    }

    pub fn raw(&self) -> &[u32] {
        &self.dist
    }

    /// First move (in Up, Down, Left, Right order) that lowers the distance
    /// by one; `Idle` on the goal or when `from` is unreachable.
    pub fn descent(&self, map: &GridMap, from: Cell) -> Action {
        let Some(d) = self.get(from) else {
            return Action::Idle;
        };
        if d == 0 {
            return Action::Idle;
        }
        map.neighbors(from)
            .find(|(_, n)| self.get(*n) == Some(d - 1))
            .map(|(a, _)| a)
            .unwrap_or(Action::Idle)
    }

    /// Shortest path flow from `start` to the goal.
    pub fn path_from(&self, map: &GridMap, start: Cell) -> Result<PathFlow> {
        let len = self.get(start).ok_or(Error::NoPath {
            from: start,
            to: self.goal,
        })? as usize;
        let mut vertices = Vec::with_capacity(len + 1);
        let mut directions = Vec::with_capacity(len + 1);
        let mut cur = start;
        vertices.push(cur);
        for _ in 0..len {
            let a = self.descent(map, cur);
            debug_assert!(a.is_move());
            directions.push(a);
            cur = map.target(cur, a).expect("descent returns a free neighbour");
            vertices.push(cur);
        }
        directions.push(Action::Idle);
        Ok(PathFlow { vertices, directions })
    }
}

/// A shortest path `v_0 .. v_T` with the direction taken at each vertex;
/// the final vertex carries `Idle` (stop).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathFlow {
    pub vertices: Vec<Cell>,
    pub directions: Vec<Action>,
}

impl PathFlow {
    pub fn singleton(at: Cell) -> Self {
        PathFlow {
            vertices: vec![at],
            directions: vec![Action::Idle],
        }
    }

    /// Number of moves.
    pub fn len(&self) -> usize {
        self.vertices.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Rebuild the vertex list from the start vertex and the directions.
    pub fn replay(&self) -> Vec<Cell> {
        let mut out = vec![self.vertices[0]];
        for a in &self.directions[..self.directions.len() - 1] {
            let last = *out.last().unwrap();
            out.push(last.step(*a).unwrap_or(last));
        }
        out
    }
}

/// Multi-source BFS over free cells; obstacles and unreachable cells get
/// [`UNREACHABLE`].
pub fn bfs_from(map: &GridMap, sources: &[Cell]) -> Vec<u32> {
    let mut dist = vec![UNREACHABLE; map.len()];
    let mut queue = VecDeque::new();
    for s in sources {
        if map.is_free(*s) && dist[map.index(*s)] == UNREACHABLE {
            dist[map.index(*s)] = 0;
            queue.push_back(*s);
        }
    }
    while let Some(c) = queue.pop_front() {
        let d = dist[map.index(c)];
        for (_, n) in map.neighbors(c) {
            let i = map.index(n);
            if dist[i] == UNREACHABLE {
                dist[i] = d + 1;
                queue.push_back(n);
            }
        }
    }
    dist
}

pub fn distance_field(map: &GridMap, goal: Cell) -> Result<DistanceField> {
    if !map.is_free(goal) {
        return Err(Error::Param(format!("goal {goal} is not a free cell")));
    }
    Ok(DistanceField {
        goal,
        width: map.width(),
        dist: bfs_from(map, &[goal]),
    })
}

/// Shortest path flow from `start` to `goal`.
pub fn astar_path(map: &GridMap, start: Cell, goal: Cell) -> Result<PathFlow> {
    distance_field(map, goal)?.path_from(map, start)
}

/// Shortest distance from `from` to `to` when `blocked` is treated as an
/// obstacle. `None` if disconnected.
pub fn distance_avoiding(map: &GridMap, from: Cell, to: Cell, blocked: Cell) -> Option<u32> {
    if from == blocked || to == blocked || !map.is_free(from) || !map.is_free(to) {
        return None;
    }
    if from == to {
        return Some(0);
    }
    let mut dist = vec![UNREACHABLE; map.len()];
    let mut queue = VecDeque::new();
    dist[map.index(from)] = 0;
    queue.push_back(from);
    while let Some(c) = queue.pop_front() {
        let d = dist[map.index(c)];
        for (_, n) in map.neighbors(c) {
            let i = map.index(n);
            if n == blocked || dist[i] != UNREACHABLE {
                continue;
            }
            if n == to {
                return Some(d + 1);
            }
            dist[i] = d + 1;
            queue.push_back(n);
        }
    }
    None
}

/// Whether every path from `from` to the goal of `field` that avoids
/// `blocked` is longer than `limit` steps (or none exists).
///
/// Same answer as comparing [`distance_avoiding`] against `limit`, but runs
/// A* guided by the unobstructed field and stops once `limit` is exceeded.
pub fn detour_exceeds(map: &GridMap, field: &DistanceField, from: Cell, blocked: Cell, limit: u32) -> bool {
    let to = field.goal();
    if from == blocked || to == blocked || !map.is_free(from) {
        return true;
    }
    let Some(h0) = field.get(from) else {
        return true;
    };
    let mut g = vec![UNREACHABLE; map.len()];
    let mut heap = BinaryHeap::new();
    g[map.index(from)] = 0;
    // Ties on f go to the deeper node, so an exact heuristic runs straight
    // down one shortest path.
    heap.push((Reverse(h0), 0u32, map.index(from)));
    while let Some((Reverse(f), gc, k)) = heap.pop() {
        if f > limit {
            return true;
        }
        if gc > g[k] {
            continue;
        }
        let c = map.cell(k);
        if c == to {
            return false;
        }
        for (_, n) in map.neighbors(c) {
            let i = map.index(n);
            if n == blocked || gc + 1 >= g[i] {
                continue;
            }
            let Some(h) = field.get(n) else { continue };
            g[i] = gc + 1;
            heap.push((Reverse(gc + 1 + h), gc + 1, i));
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapgen::{gen_random, read_map};

    #[test]
    fn empty_map_center_goal() {
        let m = GridMap::empty(3, 3).unwrap();
        let f = distance_field(&m, Cell::new(1, 1)).unwrap();
        for c in [(0, 0), (0, 2), (2, 0), (2, 2)] {
            assert_eq!(f.get(Cell::from([c.0, c.1])), Some(2));
        }
        assert_eq!(f.get(Cell::new(1, 1)), Some(0));
    }

    #[test]
    fn walled_off_goal() {
        let m = read_map("type octile\nheight 3\nwidth 3\nmap\n...\n.@@\n.@.\n").unwrap();
        let f = distance_field(&m, Cell::new(2, 2)).unwrap();
        assert_eq!(f.get(Cell::new(2, 2)), Some(0));
        for c in m.free_cells().into_iter().filter(|c| *c != Cell::new(2, 2)) {
            assert_eq!(f.get(c), None);
        }
        assert!(matches!(
            astar_path(&m, Cell::new(0, 0), Cell::new(2, 2)),
            Err(Error::NoPath { .. })
        ));
        assert!(distance_field(&m, Cell::new(1, 1)).is_err());
    }

    #[test]
    fn start_equals_goal() {
        let m = GridMap::empty(4, 4).unwrap();
        let p = astar_path(&m, Cell::new(2, 2), Cell::new(2, 2)).unwrap();
        assert_eq!(p.vertices, vec![Cell::new(2, 2)]);
        assert_eq!(p.directions, vec![Action::Idle]);
    }

    #[test]
    fn forced_corridor_path() {
        let m = read_map("type octile\nheight 3\nwidth 5\nmap\n@@@@@\n.....\n@@@@@\n").unwrap();
        let p = astar_path(&m, Cell::new(1, 0), Cell::new(1, 4)).unwrap();
        assert_eq!(p.vertices, (0..5).map(|c| Cell::new(1, c)).collect::<Vec<_>>());
        assert_eq!(&p.directions[..4], &[Action::Right; 4]);
        assert_eq!(p.directions[4], Action::Idle);
    }

    #[test]
    fn tie_order_prefers_up_then_down_then_left() {
        // From (2,2) to (0,0) on an empty map: Up and Left both descend;
        // Up wins.
        let m = GridMap::empty(3, 3).unwrap();
        let p = astar_path(&m, Cell::new(2, 2), Cell::new(0, 0)).unwrap();
        assert_eq!(p.directions[..4], [Action::Up, Action::Up, Action::Left, Action::Left]);
    }

    #[test]
    fn avoiding_a_cell() {
        let m = read_map("type octile\nheight 3\nwidth 5\nmap\n.....\n.@@@.\n.....\n").unwrap();
        assert_eq!(
            distance_avoiding(&m, Cell::new(0, 0), Cell::new(0, 4), Cell::new(2, 2)),
            Some(4)
        );
        assert_eq!(
            distance_avoiding(&m, Cell::new(0, 0), Cell::new(0, 4), Cell::new(0, 2)),
            Some(8)
        );
        assert_eq!(
            distance_avoiding(&m, Cell::new(0, 0), Cell::new(0, 4), Cell::new(0, 4)),
            None
        );
    }

    #[test]
    fn bounded_detour_agrees_with_bfs() {
        for seed in 0..30 {
            let sc = gen_random(14, 11, 0.3, 3, seed).unwrap();
            let f = distance_field(&sc.map, sc.goals[0]).unwrap();
            let from = sc.starts[0];
            for blocked in sc.map.free_cells() {
                let d = distance_avoiding(&sc.map, from, sc.goals[0], blocked);
                for limit in [0, 3, 8, 15, 40] {
                    let expected = d.is_none_or(|d| d > limit);
                    assert_eq!(
                        detour_exceeds(&sc.map, &f, from, blocked, limit),
                        expected,
                        "seed {seed} {blocked} {limit}"
                    );
                }
            }
        }
    }

    #[test]
    fn descent_is_deterministic_and_path_len_matches_field() {
        for seed in 0..20 {
            let sc = gen_random(12, 9, 0.25, 4, seed).unwrap();
            for (s, g) in sc.starts.iter().zip(&sc.goals) {
                let f = distance_field(&sc.map, *g).unwrap();
                let p1 = f.path_from(&sc.map, *s).unwrap();
                let p2 = astar_path(&sc.map, *s, *g).unwrap();
                assert_eq!(p1, p2);
                assert_eq!(p1.len() as u32, f.get(*s).unwrap());
                assert_eq!(p1.replay(), p1.vertices);
                assert_eq!(*p1.vertices.last().unwrap(), *g);
            }
        }
    }
}
