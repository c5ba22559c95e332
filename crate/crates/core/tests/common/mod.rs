//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use rand::Rng;
use svo_mapf::execution::{AdgGraph, ExecutionLog, Transition};
use svo_mapf::gridworld::{Env, EnvConfig};
use svo_mapf::learner::network::log_softmax;
use svo_mapf::learner::{PolicyLayout, Sample};
use svo_mapf::mapgen::read_map;
use svo_mapf::resolver::{greedy_intents, resolve};
use svo_mapf::rng::rng_from_seed;
use svo_mapf::{Action, Cell, GridMap, Scenario};

const MOVES: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];

fn free_neighbors(map: &GridMap, c: Cell) -> Vec<Cell> {
    MOVES
        .iter()
        .filter_map(|&(dr, dc)| {
            let r = c.row.checked_add_signed(dr)?;
            let cc = c.col.checked_add_signed(dc)?;
            let n = Cell::new(r, cc);
            (r < map.height() && cc < map.width() && map.is_free(n)).then_some(n)
        })
        .collect()
}

/// Dijkstra with unit weights from `goal`; `None` for unreachable cells.
pub fn dijkstra(map: &GridMap, goal: Cell) -> Vec<Option<u64>> {
    let mut dist = vec![None; map.width() * map.height()];
    let idx = |c: Cell| c.row * map.width() + c.col;
    let mut heap = BinaryHeap::new();
    dist[idx(goal)] = Some(0);
    heap.push(Reverse((0u64, goal.row, goal.col)));
    while let Some(Reverse((d, r, c))) = heap.pop() {
        let cell = Cell::new(r, c);
        if dist[idx(cell)].is_some_and(|best| best < d) {
            continue;
        }
        for n in free_neighbors(map, cell) {
            if dist[idx(n)].is_none_or(|old| d + 1 < old) {
                dist[idx(n)] = Some(d + 1);
                heap.push(Reverse((d + 1, n.row, n.col)));
            }
        }
    }
    dist
}

/// Shortest path from `start` to `goal` as `(cell, direction)` pairs, moving
/// to the first neighbour in Up, Down, Left, Right order that is one step
/// closer. The last entry has direction `None` (stop).
pub fn oracle_path(map: &GridMap, start: Cell, goal: Cell) -> Vec<(Cell, Option<usize>)> {
    let dist = dijkstra(map, goal);
    let idx = |c: Cell| c.row * map.width() + c.col;
    let mut out = Vec::new();
    let mut cur = start;
    let Some(mut d) = dist[idx(cur)] else {
        return vec![(start, None)];
    };
    while d > 0 {
        let (k, next) = MOVES
            .iter()
            .enumerate()
            .find_map(|(k, &(dr, dc))| {
                let n = Cell::new(cur.row.checked_add_signed(dr)?, cur.col.checked_add_signed(dc)?);
                (n.row < map.height() && n.col < map.width() && dist[idx(n)] == Some(d - 1)).then_some((k, n))
            })
            .expect("a closer neighbour exists");
        out.push((cur, Some(k)));
        cur = next;
        d -= 1;
    }
    out.push((cur, None));
    out
}

/// Overlap by explicit double loop over every pair of path positions.
pub fn brute_force_overlap(map: &GridMap, positions: &[Cell], goals: &[Cell], decay: f64) -> Vec<Vec<f64>> {
    let paths: Vec<_> = positions
        .iter()
        .zip(goals)
        .map(|(s, g)| oracle_path(map, *s, *g))
        .collect();
    let n = paths.len();
    let mut m = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            for (ti, (ci, di)) in paths[i].iter().enumerate() {
                for (tj, (cj, dj)) in paths[j].iter().enumerate() {
                    if ci == cj && di != dj {
                        m[i][j] += decay.powi(ti as i32) + decay.powi(tj as i32);
                    }
                }
            }
        }
    }
    m
}

/// Joint plan from a greedy, resolver-sanitized episode: positions per
/// agent per timestep.
pub fn greedy_plan(scenario: &Scenario, max_steps: usize) -> Vec<Vec<Cell>> {
    let cfg = EnvConfig {
        max_episode_length: max_steps,
        ..EnvConfig::default()
    };
    let mut env = Env::new(scenario, cfg).unwrap();
    let mut plan: Vec<Vec<Cell>> = env.positions().into_iter().map(|p| vec![p]).collect();
    while !env.is_done() {
        let out = resolve(env.map(), &env.positions(), &greedy_intents(&env), &env.svo_angles()).unwrap();
        env.step(&out.actions, &out.penalized).unwrap();
        for (path, p) in plan.iter_mut().zip(env.positions()) {
            path.push(p);
        }
    }
    plan
}

/// Per cell, `(robot, from, until)` occupancy intervals rebuilt from the log
/// alone: a robot holds its start cell from 0, holds a cell it moves into
/// from the moment that move is enqueued, and releases a cell when the move
/// out of it is done.
pub fn occupancy_from_log(graph: &AdgGraph, log: &ExecutionLog) -> BTreeMap<Cell, Vec<(usize, f64, f64)>> {
    let mut enq = vec![f64::NAN; graph.tasks().len()];
    let mut done = vec![f64::NAN; graph.tasks().len()];
    for e in &log.entries {
        match e.transition {
            Transition::Enqueued => enq[e.task_id] = e.t,
            Transition::Done => done[e.task_id] = e.t,
        }
    }
    let mut out: BTreeMap<Cell, Vec<(usize, f64, f64)>> = BTreeMap::new();
    for robot in 0..graph.n_robots() {
        let tasks = graph.robot_tasks(robot);
        let first = graph.task(tasks[0]);
        let mut cell = first.start_pos;
        let mut since = 0.0;
        for &id in tasks {
            let t = graph.task(id);
            if t.start_pos == t.end_pos {
                continue;
            }
            out.entry(cell).or_default().push((robot, since, done[id]));
            cell = t.end_pos;
            since = enq[id];
        }
        out.entry(cell).or_default().push((robot, since, f64::INFINITY));
    }
    out
}

/// Pairs of different robots whose intervals on a cell overlap with
/// positive length.
pub fn co_occupancy_violations(occ: &BTreeMap<Cell, Vec<(usize, f64, f64)>>) -> Vec<(Cell, usize, usize)> {
    let mut bad = Vec::new();
    for (cell, iv) in occ {
        for (a, &(ra, fa, ua)) in iv.iter().enumerate() {
            for &(rb, fb, ub) in &iv[a + 1..] {
                if ra != rb && fa.max(fb) < ua.min(ub) {
                    bad.push((*cell, ra, rb));
                }
            }
        }
    }
    bad
}

/// The five-agent follower chain on a 3x7 map:
///
/// ```text
/// cols:  0 1 2 3 4 5
/// agent: 4 0 2 3 1 @
/// ```
///
/// Everyone intends to move right, SVOs fall from agent 0 (45°) to
/// agent 4 (0°).
pub fn follower_chain() -> (GridMap, Vec<Cell>, Vec<Action>, Vec<f64>) {
    let m = read_map("type octile\nheight 3\nwidth 7\nmap\n.......\n.....@.\n.......\n").unwrap();
    let pos = [1, 4, 2, 3, 0].iter().map(|&c| Cell::new(1, c)).collect();
    (m, pos, vec![Action::Right; 5], vec![45.0, 33.75, 22.5, 11.25, 0.0])
}

/// Agents the penalty rule should charge: every agent whose move is
/// invalid, plus the strictly more prosocial member of every pair whose
/// intents conflict (same target, a swap, or one targeting the other's
/// cell).
pub fn expected_penalties(map: &GridMap, pos: &[Cell], intents: &[Action], svos: &[f64]) -> Vec<bool> {
    let n = pos.len();
    let target =
        |i: usize| -> Option<Cell> { pos[i].step(intents[i]).filter(|c| map.in_bounds(*c) && map.is_free(*c)) };
    let mut out = vec![false; n];
    for i in 0..n {
        if intents[i] != Action::Idle && target(i).is_none() {
            out[i] = true;
        }
    }
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let ti = target(i).unwrap_or(pos[i]);
            let tj = target(j).unwrap_or(pos[j]);
            let conflict = ti == tj || ti == pos[j] || tj == pos[i];
            if conflict && svos[i] > svos[j] {
                out[i] = true;
            }
        }
    }
    out
}

/// Random minibatch for gradient checks with old log-probabilities within
/// 0.1 of the current policy's, so no ratio sits on a clip boundary.
pub fn random_batch(layout: &PolicyLayout, params: &[f64], n: usize, seed: u64) -> Vec<Sample> {
    let mut rng = rng_from_seed(seed);
    let k = layout.cfg.svo_bins;
    (0..n)
        .map(|_| {
            let obs: Vec<f64> = (0..layout.cfg.obs_len)
                .map(|_| {
                    if rng.gen::<f64>() < 0.3 {
                        0.0
                    } else {
                        rng.gen_range(-1.0..1.0)
                    }
                })
                .collect();
            let svo_bin = rng.gen_range(0..k);
            let f = layout.forward(params, &obs, svo_bin);
            let action = rng.gen_range(0..Action::COUNT);
            let lpa = log_softmax(f.action_logits());
            let lpz = log_softmax(f.svo_logits(k));
            let mut valid = [true; Action::COUNT];
            for v in valid.iter_mut().skip(1) {
                *v = rng.gen::<f64>() < 0.6;
            }
            let mut z: Vec<f64> = (0..k).map(|_| rng.gen_range(0.01..1.0)).collect();
            let s: f64 = z.iter().sum();
            z.iter_mut().for_each(|v| *v /= s);
            Sample {
                obs,
                svo_bin,
                action,
                logp_svo_old: lpz[svo_bin] + rng.gen_range(-0.1..0.1),
                logp_action_old: lpa[action] + rng.gen_range(-0.1..0.1),
                value_action_old: 0.0,
                value_svo_old: 0.0,
                reward_action: 0.0,
                reward_svo: 0.0,
                valid,
                blocking: rng.gen(),
                z_exp: z,
                alpha: rng.gen(),
                adv_action: rng.gen_range(-2.0..2.0),
                adv_svo: rng.gen_range(-2.0..2.0),
                ret_action: rng.gen_range(-3.0..0.0),
                ret_svo: rng.gen_range(-3.0..0.0),
            }
        })
        .collect()
}

/// Largest per-coordinate relative error between the analytic gradient and
/// a five-point central difference (step `h`), with denominators floored at
/// `floor`.
pub fn max_gradient_error(
    layout: &PolicyLayout,
    params: &[f64],
    batch: &[&Sample],
    cfg: &svo_mapf::learner::LossConfig,
    h: f64,
    floor: f64,
) -> f64 {
    use svo_mapf::learner::smp3o_loss;
    let mut grad = vec![0.0; params.len()];
    smp3o_loss(layout, params, batch, cfg, Some(&mut grad)).unwrap();
    let mut p = params.to_vec();
    let mut worst: f64 = 0.0;
    for k in 0..params.len() {
        let mut f = |dx: f64| {
            p[k] = params[k] + dx;
            let v = smp3o_loss(layout, &p, batch, cfg, None).unwrap().total;
            p[k] = params[k];
            v
        };
        let num = (-f(2.0 * h) + 8.0 * f(h) - 8.0 * f(-h) + f(-2.0 * h)) / (12.0 * h);
        let rel = (grad[k] - num).abs() / grad[k].abs().max(num.abs()).max(floor);
        worst = worst.max(rel);
    }
    worst
}
