use std::ops::RangeInclusive;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{GridMap, Scenario};
use crate::error::{Error, Result};
use crate::geom::Cell;
use crate::rng::{rng_from_seed, SimRng};

/// Regeneration budget for infeasible placements and out-of-band maps.
pub const PLACEMENT_RETRIES: usize = 100;

const ROOM_MIN_SIDE: usize = 3;
const ROOM_MAX_SIDE: usize = 6;
const ROOM_DENSITY_BAND: (f64, f64) = (0.25, 0.35);
/// Maps at least this large on both sides must land in the density band.
const ROOM_BAND_MIN_SIDE: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapFamily {
    Random,
    Room,
    Maze,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorridorKind {
    /// Width-1 corridor with two one-cell side recesses.
    Recess,
    /// Width-1 corridor with an open 3x3 plaza at each end.
    IShape,
}

impl CorridorKind {
    pub fn min_len(self) -> usize {
        match self {
            CorridorKind::Recess => 4,
            CorridorKind::IShape => 3,
        }
    }
}

fn pick(rng: &mut SimRng, pool: &[Cell]) -> usize {
    rng.gen_range(0..pool.len())
}

/// Draw `n` start/goal pairs from the free cells of `map`. Each pair is
/// redrawn up to [`PLACEMENT_RETRIES`] times until start and goal share a
/// connected component.
fn place_agents(map: &GridMap, n: usize, rng: &mut SimRng) -> Result<(Vec<Cell>, Vec<Cell>)> {
    if n == 0 {
        return Err(Error::Param("need at least one agent".into()));
    }
    let mut open_starts = map.free_cells();
    if open_starts.len() < n {
        return Err(Error::Generation(format!(
            "{} free cells cannot hold {n} agents",
            open_starts.len()
        )));
    }
    let mut open_goals = open_starts.clone();
    let comp = map.components();
    let mut starts = Vec::with_capacity(n);
    let mut goals = Vec::with_capacity(n);
    for agent in 0..n {
        let mut placed = false;
        for _ in 0..PLACEMENT_RETRIES {
            let si = pick(rng, &open_starts);
            let gi = pick(rng, &open_goals);
            let (s, g) = (open_starts[si], open_goals[gi]);
            if comp[map.index(s)] == comp[map.index(g)] {
                open_starts.swap_remove(si);
                open_goals.swap_remove(gi);
                starts.push(s);
                goals.push(g);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::Generation(format!(
                "agent {agent}: no connected start/goal pair after {PLACEMENT_RETRIES} draws"
            )));
        }
    }
    Ok((starts, goals))
}

/// Random map: each cell is an obstacle independently with probability
/// `density`.
pub fn gen_random(width: usize, height: usize, density: f64, n_agents: usize, seed: u64) -> Result<Scenario> {
    if !(0.0..=0.5).contains(&density) {
        return Err(Error::Param(format!("density {density} outside [0, 0.5]")));
    }
    let mut rng = rng_from_seed(seed);
    let obstacles = (0..width * height).map(|_| rng.gen::<f64>() < density).collect();
    let map = GridMap::new(width, height, obstacles)?;
    let (starts, goals) = place_agents(&map, n_agents, &mut rng)?;
    Ok(Scenario {
        map,
        starts,
        goals,
        seed,
    })
}

/// Binary-space partition of the free rectangle `rows x cols` (origin
/// `r0, c0`). Each split draws a one-cell wall, recurses into both halves,
/// then opens one doorway whose two sides are free.
fn partition(map: &mut GridMap, rng: &mut SimRng, r0: usize, c0: usize, h: usize, w: usize) {
    let can_split_rows = h > 2 * ROOM_MIN_SIDE;
    let can_split_cols = w > 2 * ROOM_MIN_SIDE;
    if h.max(w) <= ROOM_MAX_SIDE || !(can_split_rows || can_split_cols) {
        return;
    }
    let horizontal = match (can_split_rows, can_split_cols) {
        (true, false) => true,
        (false, true) => false,
        _ if h != w => h > w,
        _ => rng.gen_bool(0.5),
    };
    if horizontal {
        let wall = r0 + rng.gen_range(ROOM_MIN_SIDE..=h - ROOM_MIN_SIDE - 1);
        for c in c0..c0 + w {
            map.set_obstacle(Cell::new(wall, c), true);
        }
        partition(map, rng, r0, c0, wall - r0, w);
        partition(map, rng, wall + 1, c0, r0 + h - wall - 1, w);
        let doors: Vec<usize> = (c0..c0 + w)
            .filter(|&c| map.is_free(Cell::new(wall - 1, c)) && map.is_free(Cell::new(wall + 1, c)))
            .collect();
        let c = doors[rng.gen_range(0..doors.len())];
        map.set_obstacle(Cell::new(wall, c), false);
    } else {
        let wall = c0 + rng.gen_range(ROOM_MIN_SIDE..=w - ROOM_MIN_SIDE - 1);
        for r in r0..r0 + h {
            map.set_obstacle(Cell::new(r, wall), true);
        }
        partition(map, rng, r0, c0, h, wall - c0);
        partition(map, rng, r0, wall + 1, h, c0 + w - wall - 1);
        let doors: Vec<usize> = (r0..r0 + h)
            .filter(|&r| map.is_free(Cell::new(r, wall - 1)) && map.is_free(Cell::new(r, wall + 1)))
            .collect();
        let r = doors[rng.gen_range(0..doors.len())];
        map.set_obstacle(Cell::new(r, wall), false);
    }
}

/// Room-like map: rooms of side 3..=6 separated by one-cell walls, exactly
/// one doorway per partition wall. Large maps are redrawn until their
/// obstacle density lies in [0.25, 0.35].
pub fn gen_room(width: usize, height: usize, n_agents: usize, seed: u64) -> Result<Scenario> {
    if width < 8 || height < 8 {
        return Err(Error::Param(format!(
            "room maps need at least 8x8, got {width}x{height}"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let banded = width >= ROOM_BAND_MIN_SIDE && height >= ROOM_BAND_MIN_SIDE;
    for _ in 0..PLACEMENT_RETRIES {
        let mut map = GridMap::empty(width, height)?;
        partition(&mut map, &mut rng, 0, 0, height, width);
        let d = map.density();
        if banded && !(ROOM_DENSITY_BAND.0..=ROOM_DENSITY_BAND.1).contains(&d) {
            continue;
        }
        let (starts, goals) = place_agents(&map, n_agents, &mut rng)?;
        return Ok(Scenario {
            map,
            starts,
            goals,
            seed,
        });
    }
    Err(Error::Generation(format!(
        "no room map within density band after {PLACEMENT_RETRIES} attempts"
    )))
}

/// Maze: randomized depth-first carving over the lattice of even
/// coordinates. Every free cell lies on a single spanning tree of
/// width-1 corridors.
pub fn gen_maze(width: usize, height: usize, n_agents: usize, seed: u64) -> Result<Scenario> {
    let mut rng = rng_from_seed(seed);
    let (lat_h, lat_w) = (height.div_ceil(2), width.div_ceil(2));
    let mut map = GridMap::new(width, height, vec![true; width * height])?;
    let mut visited = vec![false; lat_h * lat_w];
    let mut stack = vec![(0usize, 0usize)];
    visited[0] = true;
    map.set_obstacle(Cell::new(0, 0), false);
    while let Some(&(r, c)) = stack.last() {
        let mut options: Vec<(usize, usize)> = Vec::with_capacity(4);
        if r > 0 && !visited[(r - 1) * lat_w + c] {
            options.push((r - 1, c));
        }
        if r + 1 < lat_h && !visited[(r + 1) * lat_w + c] {
            options.push((r + 1, c));
        }
        if c > 0 && !visited[r * lat_w + c - 1] {
            options.push((r, c - 1));
        }
        if c + 1 < lat_w && !visited[r * lat_w + c + 1] {
            options.push((r, c + 1));
        }
        match options.choose(&mut rng) {
            None => {
                stack.pop();
            }
            Some(&(nr, nc)) => {
                visited[nr * lat_w + nc] = true;
                map.set_obstacle(Cell::new(r + nr, c + nc), false);
                map.set_obstacle(Cell::new(2 * nr, 2 * nc), false);
                stack.push((nr, nc));
            }
        }
    }
    let (starts, goals) = place_agents(&map, n_agents, &mut rng)?;
    Ok(Scenario {
        map,
        starts,
        goals,
        seed,
    })
}

/// Two-agent corridor dilemma. Agents start at opposite ends and each
/// agent's goal is the other's start.
///
/// * `Recess`: a 3-row map whose middle row is the corridor. One recess
///   opens above column `k` and its mirror below column `len - 1 - k`,
///   with `k` drawn from `1..=(len - 2) / 2`, so each agent has a recess in
///   its own half. Agents start at the corridor's end cells.
/// * `IShape`: 3x3 plazas joined by the corridor on their middle row.
///   Agents start on the top-middle cell of each plaza.
pub fn gen_corridor(kind: CorridorKind, corridor_len: usize, seed: u64) -> Result<Scenario> {
    if corridor_len < kind.min_len() {
        return Err(Error::Param(format!(
            "{kind:?} corridor needs length >= {}, got {corridor_len}",
            kind.min_len()
        )));
    }
    let mut rng = rng_from_seed(seed);
    let (map, a, b) = match kind {
        CorridorKind::Recess => {
            let w = corridor_len;
            let mut map = GridMap::new(w, 3, vec![true; 3 * w])?;
            for c in 0..w {
                map.set_obstacle(Cell::new(1, c), false);
            }
            let k = rng.gen_range(1..=(w - 2) / 2);
            map.set_obstacle(Cell::new(0, k), false);
            map.set_obstacle(Cell::new(2, w - 1 - k), false);
            (map, Cell::new(1, 0), Cell::new(1, w - 1))
        }
        CorridorKind::IShape => {
            let w = corridor_len + 6;
            let mut map = GridMap::new(w, 3, vec![true; 3 * w])?;
            for r in 0..3 {
                for c in (0..3).chain(w - 3..w) {
                    map.set_obstacle(Cell::new(r, c), false);
                }
            }
            for c in 3..w - 3 {
                map.set_obstacle(Cell::new(1, c), false);
            }
            (map, Cell::new(0, 1), Cell::new(0, w - 2))
        }
    };
    Ok(Scenario {
        map,
        starts: vec![a, b],
        goals: vec![b, a],
        seed,
    })
}

/// Corridor instance whose kind is `Recess` with probability `p_recess`
/// (otherwise `IShape`) and whose length is uniform over `lengths`, raised
/// to the kind's minimum.
pub fn gen_corridor_mixture(
    p_recess: f64,
    lengths: RangeInclusive<usize>,
    seed: u64,
) -> Result<(CorridorKind, Scenario)> {
    if !(0.0..=1.0).contains(&p_recess) {
        return Err(Error::Param(format!("p_recess {p_recess} outside [0, 1]")));
    }
    if lengths.is_empty() {
        return Err(Error::Param("empty corridor length range".into()));
    }
    let mut rng = rng_from_seed(seed);
    let kind = if rng.gen::<f64>() < p_recess {
        CorridorKind::Recess
    } else {
        CorridorKind::IShape
    };
    let len = rng.gen_range(lengths).max(kind.min_len());
    let sc = gen_corridor(kind, len, crate::rng::derive_seed(seed, &[1]))?;
    Ok((kind, sc))
}
